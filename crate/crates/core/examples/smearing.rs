//! Smearing of classical observables and the classical limit.
use pmech::observables::{classical_sweep, expectation_vector, expr, smear_kernel};
use pmech::states::PhasePoint;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let z = PhasePoint::one(2.0, 1.0);
    for src in ["q^2", "q*p + p^3", "exp(2*q)", "(q + p)^2", "sin(q)"] {
        let f = expr(src)?;
        let s = smear_kernel(&f, 1.0, &z)?;
        let cross = if f.is_in_class() { format!("{}", expectation_vector(&f, 1.0, &z)?) } else { "-".into() };
        println!("{src:<12} smear = {s:<40} matrix element = {cross}");
    }
    let sweep = classical_sweep(&expr("q^2")?, &z, &[1.0, 0.5, 0.1, 0.01])?;
    for r in &sweep.rows {
        println!("h = {:<5} <q^2> = {:.12}  difference = {:.3e}", r.h, r.expectation.re, r.difference);
    }
    println!("slope = {:.10} (expected 1/4pi = {:.10})", sweep.slope, 0.25 / std::f64::consts::PI);
    Ok(())
}
