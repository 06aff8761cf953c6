use std::f64::consts::PI;

use num_complex::Complex64;

use super::{same_h, HhVector, KernelState, PhasePoint, PlanckParam, StateError};
use crate::gaussian::{AffineMap, ExponentBuilder, GaussianSum, Poly};

const I: Complex64 = Complex64::new(0.0, 1.0);

fn re(v: f64) -> Complex64 {
    Complex64::new(v, 0.0)
}

/// `v_(h,q,p)`: `(h/2)^n exp(pi i (x.q + y.p) - (pi h / 2)(|x + p/h|^2 + |y - q/h|^2))`.
pub fn coherent_vector(h: f64, z: &PhasePoint) -> Result<HhVector, StateError> {
    let hp = PlanckParam::new(h)?;
    let z = PhasePoint::new(z.q.clone(), z.p.clone())?;
    let n = z.n();
    let mut b = ExponentBuilder::new(2 * n);
    for k in 0..n {
        b = b
            .linear(k, I * PI * z.q[k])
            .linear(n + k, I * PI * z.p[k])
            .square(&[(k, 1.0)], z.p[k] / h, -PI * h / 2.0)
            .square(&[(n + k, 1.0)], -z.q[k] / h, -PI * h / 2.0);
    }
    let profile = GaussianSum::from_block(b.build(), Poly::constant(2 * n, re((h / 2.0).powi(n as i32))));
    Ok(HhVector { h: hp, n, profile, s_freq: -h })
}

/// `l_(h,q,p)`: `exp(-2 pi i (q.x + p.y) - (pi h / 2)(|x|^2 + |y|^2))`; `h = 0` allowed.
pub fn coherent_kernel(h: f64, z: &PhasePoint) -> Result<KernelState, StateError> {
    let hp = PlanckParam::classical_or(h)?;
    let z = PhasePoint::new(z.q.clone(), z.p.clone())?;
    let n = z.n();
    let mut b = ExponentBuilder::new(2 * n);
    for k in 0..n {
        b = b
            .linear(k, -I * 2.0 * PI * z.q[k])
            .linear(n + k, -I * 2.0 * PI * z.p[k])
            .product(k, k, -PI * h / 2.0)
            .product(n + k, n + k, -PI * h / 2.0);
    }
    Ok(KernelState { h: hp, n, profile: GaussianSum::from_exponent(b.build()), s_freq: h })
}

/// `(4/h)^n ∫ v1 conj(v2) dx dy`.
pub fn inner_hh(v1: &HhVector, v2: &HhVector) -> Result<Complex64, StateError> {
    same_h(v1.h, v2.h)?;
    if v1.n != v2.n {
        return Err(StateError::DofMismatch(v1.n, v2.n));
    }
    let h = v1.h.value();
    let prod = v1.profile.multiply(&v2.profile.conj())?;
    Ok(prod.integrate_all()? * (4.0 / h).powi(v1.n as i32))
}

/// `exp(-(pi / 2h)(|p - p'|^2 + |q - q'|^2 + 2i (q.p' - q'.p)))`.
pub fn overlap_closed(h: f64, a: &PhasePoint, b: &PhasePoint) -> Complex64 {
    let mut e = Complex64::new(0.0, 0.0);
    for k in 0..a.n() {
        let (q, p, q2, p2) = (a.q[k], a.p[k], b.q[k], b.p[k]);
        e += re((p - p2).powi(2) + (q - q2).powi(2)) + I * 2.0 * (q * p2 - q2 * p);
    }
    (-e * (PI / (2.0 * h))).exp()
}

/// `∫ l1 conj(l2) dx dy`, without a normalizing prefactor.
pub fn inner_kernel(l1: &KernelState, l2: &KernelState) -> Result<Complex64, StateError> {
    if l1.n != l2.n {
        return Err(StateError::DofMismatch(l1.n, l2.n));
    }
    let prod = l1.profile.multiply(&l2.profile.conj())?;
    Ok(prod.integrate_all()?)
}

/// Kernel realising the same state as `v`:
/// `l(g) = (4/h)^n ∫ v(g' g^{-1}) conj(v(g')) dx' dy'`.
///
/// For `v = exp(-2 pi i h s) phi`, the integrand reduces to
/// `exp(2 pi i h s) exp(-pi i h (X.y' - x'.Y)) phi(x' - X, y' - Y) conj(phi(x', y'))`.
pub fn kernel_from_vector(v: &HhVector) -> Result<KernelState, StateError> {
    let n = v.n;
    let h = v.h.value();
    let d = 4 * n;
    // [X, Y, x', y']
    let mut m = vec![0.0; 2 * n * d];
    for i in 0..n {
        m[i * d + 2 * n + i] = 1.0;
        m[i * d + i] = -1.0;
        m[(n + i) * d + 3 * n + i] = 1.0;
        m[(n + i) * d + n + i] = -1.0;
    }
    let shifted = v.profile.substitute_affine(&AffineMap::new(2 * n, d, m, vec![0.0; 2 * n]))?;
    let positions: Vec<usize> = (2 * n..d).collect();
    let conj = v.profile.conj().embed(d, &positions);
    let mut b = ExponentBuilder::new(d);
    for i in 0..n {
        b = b.product(i, 3 * n + i, -I * PI * h).product(2 * n + i, n + i, I * PI * h);
    }
    let phase = GaussianSum::from_exponent(b.build());
    let integrand = shifted.multiply(&conj)?.multiply(&phase)?.scale(re((4.0 / h).powi(n as i32)));
    let profile = integrand.integrate_partial(&positions)?;
    Ok(KernelState { h: v.h, n, profile, s_freq: -v.s_freq })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LadderSign {
    /// Creation, the image of `q - ip`.
    Plus,
    /// Annihilation, the image of `q + ip`.
    Minus,
}

/// `(1/2πi)[cx ∂_{x_j} + cy ∂_{y_j} + mult] v`.
fn apply_operator(v: &HhVector, j: usize, cx: Complex64, cy: Complex64, mult: &Poly) -> HhVector {
    let n = v.n;
    let mut out = v.profile.mul_poly(mult);
    if cx != Complex64::new(0.0, 0.0) {
        out = out.add(&v.profile.differentiate(j).scale(cx)).expect("same dim");
    }
    if cy != Complex64::new(0.0, 0.0) {
        out = out.add(&v.profile.differentiate(n + j).scale(cy)).expect("same dim");
    }
    HhVector { profile: out.scale(Complex64::new(0.0, -1.0 / (2.0 * PI))), ..v.clone() }
}

/// Convolution by the creation or annihilation distribution in degree of freedom `j`:
/// `a^- = (1/2πi)[∂_x + i ∂_y + πh(x + iy)]`, `a^+ = (1/2πi)[∂_x - i ∂_y - πh(x - iy)]`.
pub fn ladder_apply(sign: LadderSign, j: usize, v: &HhVector) -> HhVector {
    let n = v.n;
    let h = v.h.value();
    let d = 2 * n;
    match sign {
        LadderSign::Minus => {
            let mult = Poly::affine(d, &[(j, re(PI * h)), (n + j, I * PI * h)], re(0.0));
            apply_operator(v, j, re(1.0), I, &mult)
        }
        LadderSign::Plus => {
            let mult = Poly::affine(d, &[(j, re(-PI * h)), (n + j, I * PI * h)], re(0.0));
            apply_operator(v, j, re(1.0), -I, &mult)
        }
    }
}

/// Action of the image of `q_j`: `(1/2πi)[∂_{x_j} + πih y_j]`.
pub fn position_apply(j: usize, v: &HhVector) -> HhVector {
    let n = v.n;
    let h = v.h.value();
    let mult = Poly::affine(2 * n, &[(n + j, I * PI * h)], re(0.0));
    apply_operator(v, j, re(1.0), re(0.0), &mult)
}

/// Action of the image of `p_j`: `(1/2πi)[∂_{y_j} - πih x_j]`.
pub fn momentum_apply(j: usize, v: &HhVector) -> HhVector {
    let n = v.n;
    let h = v.h.value();
    let mult = Poly::affine(2 * n, &[(j, -I * PI * h)], re(0.0));
    apply_operator(v, j, re(0.0), re(1.0), &mult)
}

/// Norm of `(∂_x - i ∂_y + πh(x - iy)) phi` summed over degrees of freedom, under
/// the vector inner product. Zero for every coherent profile.
pub fn hh_membership_residual(v: &HhVector) -> Result<f64, StateError> {
    let n = v.n;
    let h = v.h.value();
    let mut total = 0.0;
    for j in 0..n {
        let mult = Poly::affine(2 * n, &[(j, re(PI * h)), (n + j, -I * PI * h)], re(0.0));
        let w = apply_operator(v, j, re(1.0), -I, &mult);
        total += inner_hh(&w, &w)?.re;
    }
    Ok(total.max(0.0).sqrt())
}
