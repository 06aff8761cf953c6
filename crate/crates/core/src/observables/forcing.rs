use std::sync::Arc;

use crate::gaussian::LegendreRule;

/// External force `z(t)` with its accumulated integrals
/// `Z_s(t) = ∫_0^t z(τ) sin τ dτ` and `Z_c(t) = ∫_0^t z(τ) cos τ dτ`.
#[derive(Clone)]
pub struct ForcingProfile {
    pub name: String,
    pub z: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for ForcingProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ForcingProfile({})", self.name)
    }
}

impl ForcingProfile {
    pub fn new(name: &str, z: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { name: name.to_string(), z: Arc::new(z) }
    }

    pub fn zero() -> Self {
        Self::new("zero", |_| 0.0)
    }

    pub fn constant(c: f64) -> Self {
        Self::new(&format!("constant({c})"), move |_| c)
    }

    fn accumulate(&self, t: f64, weight: fn(f64) -> f64) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        // one 32-point panel per unit of time keeps the rule exact to rounding
        // for smooth forcing
        let rule = LegendreRule::new(32);
        let panels = t.abs().ceil().max(1.0) as usize;
        let step = t / panels as f64;
        (0..panels)
            .map(|k| {
                let a = k as f64 * step;
                rule.integrate(a, a + step, |tau| (self.z)(tau) * weight(tau))
            })
            .sum()
    }

    pub fn z_s(&self, t: f64) -> f64 {
        self.accumulate(t, f64::sin)
    }

    pub fn z_c(&self, t: f64) -> f64 {
        self.accumulate(t, f64::cos)
    }
}
