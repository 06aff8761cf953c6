//! Levenberg-Marquardt fit of the Gaussian ansatz from a perturbed start.
use pmech::observables::ForcingProfile;
use pmech::solver::{fit_gaussian_ansatz, perturb_kernel, Ansatz, Init, SolveConfig};
use pmech::transforms::{builtin_forced_oscillator, builtin_identity};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let h = 1.0;
    let id = builtin_identity(h)?;
    let start = perturb_kernel(&id.candidates[0], 0.1, 7)?;
    let cfg =
        SolveConfig { ansatz: Ansatz::GaussianAnsatz, init: Init::Custom { kernel: start }, ..SolveConfig::default() };
    let res = fit_gaussian_ansatz(&id.spec, h, &cfg)?;
    println!("identity from 10% perturbation: {} iterations, residual {:.3e}", res.iterations, res.report.max_norm);
    for (k, r) in res.history.iter().enumerate() {
        println!("  {k:>3} {r:.6e}");
    }

    let fo = builtin_forced_oscillator(1.0, &ForcingProfile::constant(1.0), h)?;
    let cfg = SolveConfig { ansatz: Ansatz::GaussianAnsatz, init: Init::Identity, ..SolveConfig::default() };
    let res = fit_gaussian_ansatz(&fo.spec, h, &cfg)?;
    println!("forced oscillator from identity: {} iterations, residual {:.3e}", res.iterations, res.report.max_norm);
    Ok(())
}
