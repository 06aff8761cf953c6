//! Coherent-state overlaps, ladder eigenrelation and the frame constant.
use num_complex::Complex64;
use pmech::states::{coherent_vector, frame_constant, inner_hh, ladder_apply, overlap_closed, LadderSign, PhasePoint};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let h = 0.5;
    let (a, b) = (PhasePoint::one(0.3, -0.7), PhasePoint::one(-1.1, 0.4));
    let (va, vb) = (coherent_vector(h, &a)?, coherent_vector(h, &b)?);
    println!("<v_a, v_a>        = {}", inner_hh(&va, &va)?);
    println!("<v_a, v_b> closed = {}", overlap_closed(h, &a, &b));
    println!("<v_a, v_b> exact  = {}", inner_hh(&va, &vb)?);

    // The annihilation image of q + ip has eigenvalue q + ip on v_z.
    let lowered = ladder_apply(LadderSign::Minus, 0, &va);
    let eig = Complex64::new(a.q[0], a.p[0]);
    let mut worst: f64 = 0.0;
    for x in [-1.0, 0.0, 0.5] {
        for y in [-0.5, 0.2, 1.0] {
            worst = worst.max((lowered.evaluate(&[x], &[y]) - eig * va.evaluate(&[x], &[y])).norm());
        }
    }
    println!("eigenrelation residual = {worst:.3e}");
    println!("c_h = {} at h = {h}", frame_constant(h, 1)?);
    Ok(())
}
