//! Impulse-control optimal dividends with Parisian ruin for spectrally
//! negative Lévy processes.
//!
//! The supported family is Brownian motion with drift plus a compound
//! Poisson part with hyperexponential (mixture of exponentials) jumps. For
//! this family every scale function is a finite sum of exponentials, so the
//! optimal `(a, b)` impulse strategy and its value function are computed
//! exactly, then certified numerically ([`verify`]) and statistically
//! ([`montecarlo`]).

pub mod cli;
pub mod error;
pub mod levy;
pub mod montecarlo;
pub mod policy;
pub mod quad;
pub mod roots;
pub mod scale;
pub mod verify;

pub use error::{Error, Result};
pub use levy::{ControlParams, ConvexityReport, LevyModel};
pub use montecarlo::{McEstimate, Scheme, SimConfig};
pub use policy::{OptimalSolution, Policy, ValueFunction};
pub use scale::{ExpSum, ParisianZ, ScaleW};
