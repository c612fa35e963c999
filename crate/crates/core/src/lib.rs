pub mod cli;
pub mod distributions;
pub mod dual_solver;
pub mod error;
pub mod flow_oracle;
pub mod mechanisms;
pub mod model;
pub mod rng;
pub mod simulation;

pub use error::{Error, Result};
