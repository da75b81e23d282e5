//! Numerical laboratory for the quasistatic viscoelastic gradient flow
//! `p_t = −σ(p) + ∫₀¹ σ(p) dy` in one space dimension.

pub mod asymptotics;
pub mod bounds;
pub mod counterexample;
pub mod displacement;
pub mod error;
pub mod mixed;
pub mod numerics;
pub mod stress;

pub use error::{Error, Result};
pub use stress::{Domain, Law, ModelSpec, StressModel};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
