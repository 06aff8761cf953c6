use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TransformError;
use crate::observables::{parse_expr, ClassicalExpr, ForcingProfile, FunctionRegistry};
use crate::states::PhasePoint;

/// Numeric classical map `T(q, p) = (Q, P)`.
pub type ClassicalMap = Arc<dyn Fn(&PhasePoint) -> PhasePoint + Send + Sync>;

/// `lhs(q, p) = rhs(Q, P)`; both sides share the coordinate slots.
#[derive(Clone, Debug)]
pub struct Relation {
    pub lhs: ClassicalExpr,
    pub rhs: ClassicalExpr,
    pub lhs_src: String,
    pub rhs_src: String,
}

impl Relation {
    pub fn parse(lhs: &str, rhs: &str, registry: &FunctionRegistry) -> Result<Self, TransformError> {
        Ok(Self {
            lhs: parse_expr(lhs, registry)?,
            rhs: parse_expr(rhs, registry)?,
            lhs_src: lhs.to_string(),
            rhs_src: rhs.to_string(),
        })
    }

    pub fn new(lhs: ClassicalExpr, rhs: ClassicalExpr) -> Self {
        Self { lhs_src: lhs.to_string(), rhs_src: rhs.to_string(), lhs, rhs }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {}", self.lhs_src, self.rhs_src)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ForcingSpec {
    Zero,
    Constant { value: f64 },
}

impl ForcingSpec {
    pub fn profile(&self) -> ForcingProfile {
        match self {
            ForcingSpec::Zero => ForcingProfile::zero(),
            ForcingSpec::Constant { value } => ForcingProfile::constant(*value),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecParams {
    pub t: f64,
    pub forcing: ForcingSpec,
}

/// A canonical transformation given implicitly by `2n` relations.
#[derive(Clone)]
pub struct TransformationSpec {
    pub name: String,
    pub n: usize,
    pub relations: Vec<Relation>,
    pub params: Option<SpecParams>,
    /// False when no global classical map exists.
    pub bijective: bool,
    classical_map: Option<ClassicalMap>,
    map_src: Option<Vec<String>>,
}

impl fmt::Debug for TransformationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TransformationSpec")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("relations", &self.relations.iter().map(|r| r.to_string()).collect::<Vec<_>>())
            .field("has_map", &self.classical_map.is_some())
            .field("bijective", &self.bijective)
            .finish()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RelationJson {
    lhs: String,
    rhs: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SpecJson {
    name: String,
    n: usize,
    relations: Vec<RelationJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    classical_map: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    params: Option<SpecParams>,
    #[serde(default = "yes")]
    bijective: bool,
}

fn yes() -> bool {
    true
}

/// Points used by the definitional-identity and bracket checks.
pub const CHECK_POINTS: usize = 100;
pub const IDENTITY_TOL: f64 = 1e-8;
pub const BRACKET_TOL: f64 = 1e-5;

impl TransformationSpec {
    pub fn new(name: &str, n: usize, relations: Vec<Relation>) -> Result<Self, TransformError> {
        if n == 0 || relations.len() != 2 * n {
            return Err(TransformError::InvalidSpec(format!(
                "{name}: expected {} relations for n = {n}, got {}",
                2 * n,
                relations.len()
            )));
        }
        if let Some(r) = relations.iter().find(|r| r.lhs.dof() > n || r.rhs.dof() > n) {
            return Err(TransformError::InvalidSpec(format!("relation '{r}' uses more than {n} degrees of freedom")));
        }
        Ok(Self {
            name: name.to_string(),
            n,
            relations,
            params: None,
            bijective: true,
            classical_map: None,
            map_src: None,
        })
    }

    pub fn non_bijective(mut self) -> Self {
        self.bijective = false;
        self
    }

    pub fn with_params(mut self, params: SpecParams) -> Self {
        self.params = Some(params);
        self
    }

    /// Attaches `T` and checks `lhs(z) = rhs(T(z))` at seeded random points.
    pub fn with_classical_map(mut self, map: ClassicalMap, src: Option<Vec<String>>) -> Result<Self, TransformError> {
        if !self.bijective {
            return Err(TransformError::InvalidSpec(format!(
                "{}: non-bijective spec takes no classical map",
                self.name
            )));
        }
        self.classical_map = Some(map);
        self.map_src = src;
        self.check_definitional(CHECK_POINTS, 0)?;
        Ok(self)
    }

    pub fn classical_map(&self) -> Option<&ClassicalMap> {
        self.classical_map.as_ref()
    }

    pub fn apply_map(&self, z: &PhasePoint) -> Option<PhasePoint> {
        self.classical_map.as_ref().map(|t| t(z))
    }

    fn check_points(&self, count: usize, seed: u64) -> Vec<PhasePoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let q = (0..self.n).map(|_| rng.random_range(-2.0..2.0)).collect();
                let p = (0..self.n).map(|_| rng.random_range(-2.0..2.0)).collect();
                PhasePoint { q, p }
            })
            .collect()
    }

    /// Max relative defect of `lhs(z) - rhs(T(z))`; errors above tolerance.
    pub fn check_definitional(&self, count: usize, seed: u64) -> Result<f64, TransformError> {
        let t = self
            .classical_map
            .as_ref()
            .ok_or_else(|| TransformError::InvalidSpec(format!("{}: no classical map", self.name)))?;
        let mut worst: f64 = 0.0;
        for z in self.check_points(count, seed) {
            let img = t(&z);
            for (i, r) in self.relations.iter().enumerate() {
                let a = r.lhs.eval(&z.q, &z.p);
                let b = r.rhs.eval(&img.q, &img.p);
                let d = (a - b).norm() / a.norm().max(1.0);
                worst = worst.max(d);
                if !(d <= IDENTITY_TOL) {
                    return Err(TransformError::DefinitionalIdentity { relation: i, residual: d });
                }
            }
        }
        Ok(worst)
    }

    /// Max relative difference of `{f_i, f_{i+n}}` at `z` and `{F_i, F_{i+n}}` at `T(z)`,
    /// by central differences.
    pub fn bracket_check(&self, count: usize, seed: u64) -> Result<f64, TransformError> {
        let t = self
            .classical_map
            .as_ref()
            .ok_or_else(|| TransformError::InvalidSpec(format!("{}: no classical map", self.name)))?;
        let n = self.n;
        let mut worst: f64 = 0.0;
        for z in self.check_points(count, seed) {
            let img = t(&z);
            for i in 0..n {
                let (r1, r2) = (&self.relations[i], &self.relations[i + n]);
                let small = poisson(&r1.lhs, &r2.lhs, &z);
                let big = poisson(&r1.rhs, &r2.rhs, &img);
                let d = (small - big).norm() / small.norm().max(1.0);
                worst = worst.max(d);
                if !(d <= BRACKET_TOL) {
                    return Err(TransformError::Bracket { pair: i, residual: d });
                }
            }
        }
        Ok(worst)
    }

    pub fn to_json(&self) -> String {
        let j = SpecJson {
            name: self.name.clone(),
            n: self.n,
            relations: self
                .relations
                .iter()
                .map(|r| RelationJson { lhs: r.lhs_src.clone(), rhs: r.rhs_src.clone() })
                .collect(),
            classical_map: self.map_src.clone(),
            params: self.params.clone(),
            bijective: self.bijective,
        };
        serde_json::to_string_pretty(&j).expect("spec serializes")
    }

    /// Parses the JSON form; `classical_map` is `2n` expressions `[Q_1..Q_n, P_1..P_n]` in `(q, p)`.
    pub fn from_json(src: &str, registry: &FunctionRegistry) -> Result<Self, TransformError> {
        let j: SpecJson = serde_json::from_str(src)?;
        let relations =
            j.relations.iter().map(|r| Relation::parse(&r.lhs, &r.rhs, registry)).collect::<Result<Vec<_>, _>>()?;
        let mut spec = Self::new(&j.name, j.n, relations)?;
        spec.params = j.params;
        spec.bijective = j.bijective;
        if let Some(src) = j.classical_map {
            if src.len() != 2 * j.n {
                return Err(TransformError::InvalidSpec(format!("classical_map needs {} expressions", 2 * j.n)));
            }
            let exprs = src.iter().map(|s| parse_expr(s, registry)).collect::<Result<Vec<_>, _>>()?;
            let n = j.n;
            let map: ClassicalMap = Arc::new(move |z: &PhasePoint| {
                let v: Vec<f64> = exprs.iter().map(|e| e.eval(&z.q, &z.p).re).collect();
                PhasePoint { q: v[..n].to_vec(), p: v[n..].to_vec() }
            });
            spec = spec.with_classical_map(map, Some(src))?;
        }
        Ok(spec)
    }
}

const FD_STEP: f64 = 1e-5;

fn partial(f: &ClassicalExpr, z: &PhasePoint, k: usize, momentum: bool) -> Complex64 {
    let mut plus = z.clone();
    let mut minus = z.clone();
    if momentum {
        plus.p[k] += FD_STEP;
        minus.p[k] -= FD_STEP;
    } else {
        plus.q[k] += FD_STEP;
        minus.q[k] -= FD_STEP;
    }
    (f.eval(&plus.q, &plus.p) - f.eval(&minus.q, &minus.p)) / (2.0 * FD_STEP)
}

fn poisson(f: &ClassicalExpr, g: &ClassicalExpr, z: &PhasePoint) -> Complex64 {
    (0..z.n())
        .map(|k| partial(f, z, k, false) * partial(g, z, k, true) - partial(f, z, k, true) * partial(g, z, k, false))
        .sum()
}
