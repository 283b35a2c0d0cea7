//! Numerical laboratory for a coupled thin-film / osmolarity system on a
//! finite interval: implicit Keller-box time stepping with adaptive meshing
//! and step control, steady-state continuation, and post-run analysis of
//! thinning rates, regimes, and analytic bounds.

pub mod analysis;
pub mod band;
pub mod equilibrium;
pub mod error;
pub mod integrate;
pub mod keller;
pub mod mesh;
pub mod model;
pub mod sweep;

pub use error::{Result, SolverError};
pub use model::{compute_fluid_mass, compute_salt_mass, ModelParams, SbarProfile, SolutionState};
