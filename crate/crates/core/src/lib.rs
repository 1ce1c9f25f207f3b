//! Kelly bet sizing for coins with memory.
//!
//! The head probability of each flip is an affine function of the previous
//! `m` outcomes. The crate computes the unconditional head probabilities that
//! this induces, the horizon-dependent optimal betting fractions, analytic and
//! Monte Carlo expected log growth, and least-squares estimates of the memory
//! coefficients from observed data.

pub mod error;
pub mod estimate;
pub mod io;
pub mod model;
pub mod policy;
pub mod simulate;

pub use error::{Error, Result};
pub use model::{GameSpec, History, MemoryParams, StateSpace};
pub use policy::{BettorPolicy, PayoffModel};
