use thiserror::Error;

use crate::econ::EconError;
use crate::esn::SimError;
use crate::hfgt::HfgtError;
use crate::ingest::IngestError;
use crate::linalg::LinalgError;
use crate::model::{ModelError, ValidationReport};
use crate::scenario::ScenarioError;

/// Any failure of a pipeline step.
#[derive(Debug, Error)]
pub enum Error {
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("model has {n} violation(s):\n{0}", n = .0.len())]
    Invalid(ValidationReport),
    #[error("matrix: {0}")]
    Hfgt(#[from] HfgtError),
    #[error("simulation: {0}")]
    Sim(#[from] SimError),
    #[error("input data: {0}")]
    Ingest(#[from] IngestError),
    #[error("scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("report: {0}")]
    Econ(#[from] EconError),
    #[error("{0}")]
    Usage(String),
}

impl Error {
    /// Singular or ill-conditioned solves and non-finite results, as opposed
    /// to bad input.
    pub fn is_numerical(&self) -> bool {
        fn sim(e: &SimError) -> bool {
            matches!(e, SimError::Solve(LinalgError::ZeroPivot { .. } | LinalgError::IllConditioned { .. }))
        }
        match self {
            Error::Sim(e) => sim(e),
            Error::Scenario(ScenarioError::Sim(e)) => sim(e),
            Error::Scenario(ScenarioError::NonFinite(_)) => true,
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
