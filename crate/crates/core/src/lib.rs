pub mod error;
pub mod groundstate;
pub mod ansatz;
pub mod asymptotics;
pub mod dancer;
pub mod domain;
pub mod linalg;
pub mod num;
pub mod ode;
pub mod quadrature;
pub mod reduction;
pub mod run;
pub mod spectrum;
pub mod weighted;

pub use error::{Error, Result};

/// Double-precision ground-state profile used by the strip solvers.
pub type GroundStateProfile = groundstate::Profile<f64>;
/// Double-precision tail fit.
pub type TailFit = groundstate::TailFit<f64>;
