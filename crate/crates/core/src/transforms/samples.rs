use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::states::PhasePoint;

/// Phase-space points at which residuals are evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub description: String,
    pub points: Vec<PhasePoint>,
}

pub const DEFAULT_SEED: u64 = 20_240_917;

impl SampleSet {
    /// `nq x np` grid over `[-qr, qr] x [-pr, pr]`, endpoints included.
    pub fn grid(nq: usize, np: usize, qr: f64, pr: f64) -> Self {
        let axis = |k: usize, r: f64| -> Vec<f64> {
            if k == 1 {
                vec![0.0]
            } else {
                (0..k).map(|i| -r + 2.0 * r * i as f64 / (k - 1) as f64).collect()
            }
        };
        let mut points = Vec::with_capacity(nq * np);
        for q in axis(nq, qr) {
            for p in axis(np, pr) {
                points.push(PhasePoint::one(q, p));
            }
        }
        Self { description: format!("grid {nq}x{np} over [-{qr},{qr}]x[-{pr},{pr}]"), points }
    }

    pub fn random(count: usize, seed: u64, qr: f64, pr: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points =
            (0..count).map(|_| PhasePoint::one(rng.random_range(-qr..qr), rng.random_range(-pr..pr))).collect();
        Self { description: format!("{count} random (seed {seed}) over [-{qr},{qr}]x[-{pr},{pr}]"), points }
    }

    /// 5x4 grid over `[-2,2] x [-1.5,1.5]` plus 8 seeded random points.
    pub fn default_set(seed: u64) -> Self {
        let g = Self::grid(5, 4, 2.0, 1.5);
        let r = Self::random(8, seed, 2.0, 1.5);
        Self { description: format!("{} + {}", g.description, r.description), points: [g.points, r.points].concat() }
    }

    pub fn take(mut self, k: usize) -> Self {
        self.points.truncate(k);
        self.description = format!("first {k} of {}", self.description);
        self
    }

    /// Drops points within `min` of the line `q + p = 0` (one degree of freedom).
    pub fn excluding_line(mut self, min: f64) -> Self {
        self.points.retain(|z| (z.q[0] + z.p[0]).abs() >= min);
        self.description = format!("{}, |q+p| >= {min}", self.description);
        self
    }

    /// Adds `-z` for every `z` not already mirrored.
    pub fn mirrored(mut self) -> Self {
        let extra: Vec<PhasePoint> =
            self.points.iter().map(|z| z.neg()).filter(|m| !self.points.iter().any(|z| z.dist2(m) < 1e-24)).collect();
        let mut seen: Vec<PhasePoint> = Vec::new();
        for m in extra {
            if !seen.iter().any(|z| z.dist2(&m) < 1e-24) {
                seen.push(m);
            }
        }
        self.points.extend(seen);
        self.description = format!("{}, mirrored", self.description);
        self
    }
}

/// Seeded random `(z, z')` pairs, both over `[-2,2] x [-1.5,1.5]`.
pub fn sample_pairs(count: usize, seed: u64) -> Vec<(PhasePoint, PhasePoint)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pt = || PhasePoint::one(rng.random_range(-2.0..2.0), rng.random_range(-1.5..1.5));
    (0..count).map(|_| (pt(), pt())).collect()
}
