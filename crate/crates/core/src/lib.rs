//! Coherent states on the Heisenberg group, smearing of classical observables,
//! and integral equations for canonical transformations.

pub mod cli;
pub mod gaussian;
pub mod json;
pub mod nonbijective;
pub mod observables;
pub mod solver;
pub mod states;
pub mod transforms;
