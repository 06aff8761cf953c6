//! Residual tables for the built-in transformations and their candidate kernels.
use pmech::observables::ForcingProfile;
use pmech::transforms::{
    builtin_flip, builtin_forced_oscillator, builtin_identity, kernel_residual, sample_pairs, unitarity_residual,
    vector_residual, ResidualOptions, SampleSet, DEFAULT_SEED,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let h = 1.0;
    let samples = SampleSet::default_set(DEFAULT_SEED);
    let opts = ResidualOptions::default();
    let id = builtin_identity(h)?;
    for m in &id.candidates {
        let r = kernel_residual(&id.spec, m, &samples, &opts)?;
        println!("identity  {:<20} kernel residual {:.3e} pass = {}", m.label, r.max_norm, r.pass);
    }
    let flip = builtin_flip(h)?;
    for m in &flip.candidates {
        let r = vector_residual(&flip.spec, m, &sample_pairs(20, DEFAULT_SEED), &opts)?;
        println!("flip      {:<20} vector residual {:.3e} pass = {}", m.label, r.max_norm, r.pass);
    }
    let fo = builtin_forced_oscillator(1.0, &ForcingProfile::constant(1.0), h)?;
    let m = &fo.candidates[0];
    let r = kernel_residual(&fo.spec, m, &samples, &opts)?;
    let u = unitarity_residual(m, &samples.clone().take(20), 1e-6)?;
    println!("forced    {:<20} kernel residual {:.3e}, unitarity {:.3e}", m.label, r.max_norm, u.max_norm);
    Ok(())
}
