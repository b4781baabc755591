//! Fairness assessment of predictive models based on movement patterns.
//!
//! The pipeline segments trajectories into stops, maps every object to the
//! cells it visits on several shifted grids, mines the cell subsets shared by
//! objects and runs a permutation-tested Bernoulli scan over them.

pub mod candidates;
pub mod error;
pub mod geo;
pub mod io;
pub mod mapping;
pub mod metrics;
pub mod scan;
pub mod synthesis;
pub mod trajectory;
pub mod zoning;

pub use error::{Error, Result};
