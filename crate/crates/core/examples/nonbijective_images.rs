//! Parity and the half-plane split for the repulsive oscillator.
use pmech::nonbijective::{
    classical_branch, injectivity_check, parity_residual, repulsive_map, CoherentCombination, TieBreak, IMAGE_TOL,
};
use pmech::observables::expr;
use pmech::solver::{solve_grid, SolveConfig};
use pmech::states::PhasePoint;
use pmech::transforms::builtin_repulsive_oscillator;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let h = 1.0;
    let spec = builtin_repulsive_oscillator()?;
    let cfg = SolveConfig::default();
    let res = solve_grid(&spec, h, &cfg)?;
    println!("grid solve residual {:.3e}", res.report.max_norm);
    println!("parity residual     {:.3e}", parity_residual(&res.kernel, &cfg.sample_set(false))?);

    // v_z and v_{-z} have the same image; the split map tells them apart.
    let a = CoherentCombination::single(h, 0.8, 0.3);
    let b = CoherentCombination::single(h, -0.8, -0.3);
    let v = injectivity_check(&res.kernel, &a, &b, IMAGE_TOL, TieBreak::Plus)?;
    println!("unsplit equal = {}, split equal = {}", v.unsplit_equal, v.split_equal);

    let f = expr("q")?;
    for (q, p) in [(1.0, 0.5), (-1.0, -0.5)] {
        let b = classical_branch(&f, &repulsive_map, &PhasePoint::one(q, p), 0.1)?;
        println!("f = q at ({q}, {p}): plus {:?}, minus {:?}", b.plus, b.minus);
    }
    Ok(())
}
