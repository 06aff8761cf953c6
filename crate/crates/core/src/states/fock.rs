use std::f64::consts::PI;

use num_complex::Complex64;

use super::{same_h, FockFunction, HeisenbergElement, HhVector, PhasePoint, PlanckParam, StateError};
use crate::gaussian::{AffineMap, ExponentBuilder, GaussianSum, Poly};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// The single Planck parameter at which the isometry kernel, as written with no
/// explicit `h`, is annihilated by the membership operator.
pub const ISOMETRY_H: f64 = 4.0;

fn re(v: f64) -> Complex64 {
    Complex64::new(v, 0.0)
}

/// `f(q,p) = ∫ phi(x,y) exp(2 pi i (q.x + p.y)) dx dy` for `v = exp(-2 pi i h s) phi`.
pub fn fock_from_vector(v: &HhVector) -> Result<FockFunction, StateError> {
    let n = v.n;
    let d = 4 * n;
    let positions: Vec<usize> = (2 * n..d).collect();
    let phi = v.profile.embed(d, &positions);
    let mut b = ExponentBuilder::new(d);
    for i in 0..n {
        b = b.product(i, 2 * n + i, I * 2.0 * PI).product(n + i, 3 * n + i, I * 2.0 * PI);
    }
    let f = phi.multiply(&GaussianSum::from_exponent(b.build()))?.integrate_partial(&positions)?;
    Ok(FockFunction { h: v.h, n, func: f })
}

/// `(4/h)^n ∫ f1 conj(f2) dq dp`.
pub fn fock_inner(f1: &FockFunction, f2: &FockFunction) -> Result<Complex64, StateError> {
    same_h(f1.h, f2.h)?;
    let h = f1.h.value();
    let prod = f1.func.multiply(&f2.func.conj())?;
    Ok(prod.integrate_all()? * (4.0 / h).powi(f1.n as i32))
}

/// `K_R(., ., q', p')` as a function of `(q, p)`:
/// `exp(-(2 pi / h)(|q|^2 + |p|^2 + |q'|^2 + |p'|^2 - 2 q.q' - 2 p.p' - 2i q'.p + 2i q.p'))`.
pub fn reproducing_kernel(h: f64, zp: &PhasePoint) -> Result<FockFunction, StateError> {
    let hp = PlanckParam::new(h)?;
    let n = zp.n();
    let c = -2.0 * PI / h;
    let mut b = ExponentBuilder::new(2 * n);
    for k in 0..n {
        let (q2, p2) = (zp.q[k], zp.p[k]);
        b = b
            .product(k, k, c)
            .product(n + k, n + k, c)
            .constant(c * (q2 * q2 + p2 * p2))
            .linear(k, re(-2.0 * q2 * c) + I * 2.0 * p2 * c)
            .linear(n + k, re(-2.0 * p2 * c) - I * 2.0 * q2 * c);
    }
    Ok(FockFunction { h: hp, n, func: GaussianSum::from_exponent(b.build()) })
}

/// `<f, K_R(., ., q', p')>` in the Fock inner product.
pub fn reproducing_apply(f: &FockFunction, zp: &PhasePoint) -> Result<Complex64, StateError> {
    let k = reproducing_kernel(f.h.value(), zp)?;
    fock_inner(f, &k)
}

/// `f(q,p) = ∫ psi(x) K_I(q,p,x) dx`, `K_I = exp(2 pi i q.x - pi i p.q) exp(-pi |x - p|^2)`,
/// returned at `h = ISOMETRY_H`.
pub fn isometry_w(psi: &GaussianSum) -> Result<FockFunction, StateError> {
    let n = psi.dim();
    let d = 3 * n;
    let positions: Vec<usize> = (2 * n..d).collect();
    let mut b = ExponentBuilder::new(d);
    for i in 0..n {
        b = b.product(i, 2 * n + i, I * 2.0 * PI).product(n + i, i, -I * PI).square(
            &[(2 * n + i, 1.0), (n + i, -1.0)],
            0.0,
            -PI,
        );
    }
    let integrand = psi.embed(d, &positions).multiply(&GaussianSum::from_exponent(b.build()))?;
    let f = integrand.integrate_partial(&positions)?;
    Ok(FockFunction { h: PlanckParam::new(ISOMETRY_H)?, n, func: f })
}

/// `sqrt(sum_j ∫ |D_h^j f|^2 dq dp)` with `D_h^j = (h/2)(∂_{p_j} + i ∂_{q_j}) + 2 pi (p_j + i q_j)`.
pub fn fock_membership_residual(f: &FockFunction, h: f64) -> Result<f64, StateError> {
    PlanckParam::new(h)?;
    let n = f.n;
    let mut total = 0.0;
    for j in 0..n {
        let mult = Poly::affine(2 * n, &[(n + j, re(2.0 * PI)), (j, I * 2.0 * PI)], re(0.0));
        let g = f
            .func
            .differentiate(n + j)
            .add(&f.func.differentiate(j).scale(I))?
            .scale(re(h / 2.0))
            .add(&f.func.mul_poly(&mult))?;
        total += g.multiply(&g.conj())?.integrate_all()?.re;
    }
    Ok(total.max(0.0).sqrt())
}

/// `rho_h(s,x,y) f (q,p) = exp(-2 pi i (h s + q.x + p.y)) f(q - h y / 2, p + h x / 2)`.
pub fn rho_h_apply(g: &HeisenbergElement, f: &FockFunction) -> Result<FockFunction, StateError> {
    let n = f.n;
    if g.x.len() != n || g.y.len() != n {
        return Err(StateError::DofMismatch(g.x.len(), n));
    }
    let h = f.h.value();
    let mut shift = Vec::with_capacity(2 * n);
    shift.extend(g.y.iter().map(|y| -h * y / 2.0));
    shift.extend(g.x.iter().map(|x| h * x / 2.0));
    let moved = f.func.substitute_affine(&AffineMap::translation(shift))?;
    let mut b = ExponentBuilder::new(2 * n).constant(-I * 2.0 * PI * h * g.s);
    for k in 0..n {
        b = b.linear(k, -I * 2.0 * PI * g.x[k]).linear(n + k, -I * 2.0 * PI * g.y[k]);
    }
    let func = moved.multiply(&GaussianSum::from_exponent(b.build()))?;
    Ok(FockFunction { h: f.h, n, func })
}
