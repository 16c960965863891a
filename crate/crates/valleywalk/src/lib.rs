//! Quenched machinery for recurrent one-dimensional random walks in random
//! environment (RWRE), built around the potential/valley picture of the Sinai
//! regime.
//!
//! The crate is organised in layers:
//!
//! * [`env_model`]: site laws (finitely supported, uniformly elliptic) and
//!   deterministic environment windows sampled from them.
//! * [`potential`]: the random potential `V`, the reversible measure, valley
//!   statistics and membership in the good event `Gamma(L, delta)`.
//! * [`exact_kernel`]: exact n-step mass propagation, return-probability
//!   brackets, hitting probabilities (closed form and linear solve), exit-time
//!   tails and expected confinement times.
//! * [`bounds`]: the inequality toolkit (exit bounds, confinement bound, the
//!   localisation certificate and the reflected-chain lower bound).
//! * [`diagnostics`]: summability diagnostics for return series, the annealed
//!   exponent density, and simple-random-walk reference values.
//! * [`montecarlo`]: multi-particle Monte Carlo examples with exact
//!   cross-checks and deterministic parallel execution.

#![deny(unsafe_code)]
#![warn(missing_docs)]

pub mod bounds;
pub mod diagnostics;
pub mod env_model;
pub mod error;
pub mod exact_kernel;
pub mod montecarlo;
pub mod potential;
pub mod rng;

pub use diagnostics::DivergenceReport;
pub use env_model::{Environment, SiteLaw};
pub use error::Error;
pub use exact_kernel::{MassProfile, ReturnSeries};
pub use montecarlo::{SimResult, SimSpec};
pub use potential::{Potential, ValleyStats};

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
