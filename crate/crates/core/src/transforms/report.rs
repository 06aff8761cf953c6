use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::TransformError;
use crate::states::PhasePoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualEntry {
    pub relation: String,
    pub z: PhasePoint,
    /// Second point for two-point functionals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z2: Option<PhasePoint>,
    #[serde(with = "crate::json::complex")]
    pub value: Complex64,
}

/// Residuals of one kernel against one system; `pass` iff `max_norm <= tol`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub kernel: String,
    pub system: String,
    pub samples: String,
    pub path: String,
    pub entries: Vec<ResidualEntry>,
    pub max_norm: f64,
    pub rms_norm: f64,
    pub tol: f64,
    pub pass: bool,
}

impl ResidualReport {
    pub fn new(kernel: &str, system: &str, samples: &str, path: &str, entries: Vec<ResidualEntry>, tol: f64) -> Self {
        let norms: Vec<f64> = entries.iter().map(|e| e.value.norm()).collect();
        // NaN propagates to a failing verdict
        let max_norm = norms.iter().fold(0.0_f64, |a, &b| if b.is_nan() || a.is_nan() { f64::NAN } else { a.max(b) });
        let rms_norm =
            if norms.is_empty() { 0.0 } else { (norms.iter().map(|v| v * v).sum::<f64>() / norms.len() as f64).sqrt() };
        Self {
            kernel: kernel.to_string(),
            system: system.to_string(),
            samples: samples.to_string(),
            path: path.to_string(),
            entries,
            max_norm,
            rms_norm,
            tol,
            pass: max_norm <= tol,
        }
    }

    /// Max norm restricted to one relation label.
    pub fn max_for(&self, relation: &str) -> f64 {
        self.entries.iter().filter(|e| e.relation == relation).map(|e| e.value.norm()).fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// CSV with columns `relation,q,p,q',p',re,im,abs`, preceded by `#` header lines.
    pub fn write_csv<W: Write>(&self, mut out: W, header: &[String]) -> Result<(), TransformError> {
        for line in header {
            writeln!(out, "# {line}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["relation", "q", "p", "q'", "p'", "re", "im", "abs"])?;
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(";");
        for e in &self.entries {
            let (q2, p2) = e.z2.as_ref().map(|z| (join(&z.q), join(&z.p))).unwrap_or_default();
            w.write_record([
                e.relation.clone(),
                join(&e.z.q),
                join(&e.z.p),
                q2,
                p2,
                format!("{:?}", e.value.re),
                format!("{:?}", e.value.im),
                format!("{:?}", e.value.norm()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
