//! Minimum-norm grid solve of the kernel equation with an L-curve scan.
use pmech::solver::{l_curve, solve_grid, SolveConfig};
use pmech::transforms::builtin_identity;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let h = 1.0;
    let spec = builtin_identity(h)?.spec;
    let cfg = SolveConfig::default();
    let res = solve_grid(&spec, h, &cfg)?;
    println!(
        "residual {:.3e}, certified = {}, condition {:?}",
        res.report.max_norm, res.report.pass, res.diagnostics.condition
    );
    println!("{:>10} {:>14} {:>14}", "lambda", "|m|", "|r|");
    for row in l_curve(&spec, h, &cfg, &[1e-8, 1e-6, 1e-4, 1e-2, 1.0])? {
        println!("{:>10.1e} {:>14.6e} {:>14.6e}", row.lambda, row.solution_norm, row.residual_norm);
    }
    Ok(())
}
