//! Hetero-functional graph models of grid-to-hydrogen systems, engineering
//! system net simulation, steady-state life-cycle solves and rule-based
//! electrolyzer dispatch over hourly grid data.

pub mod econ;
pub mod error;
pub mod esn;
pub mod hfgt;
pub mod ingest;
pub mod linalg;
pub mod model;
pub mod pipeline;
pub mod scenario;
pub mod synthetic;

pub use error::{Error, Result};
