use thiserror::Error;

use crate::params::InvalidParams;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    InvalidParams(#[from] InvalidParams),

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("density rejected: {0}")]
    Density(String),

    #[error("fragmentation kernel vanishes on source column {column}")]
    ZeroColumn { column: usize },

    #[error("time step {dt} exceeds the stability bound {limit}")]
    Cfl { dt: f64, limit: f64 },

    #[error("monomer quantity became negative ({value}) at t = {t}; time step too large")]
    NegativeMonomer { t: f64, value: f64 },

    #[error("no convergence after {steps} steps (last increment {increment})")]
    NonConvergence { steps: usize, increment: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("fit failed: {0}")]
    FitFailure(String),

    #[error("reduced system blew up at t = {t}")]
    BlowUp { t: f64 },

    #[error("{0}")]
    Precondition(String),
}

impl Error {
    /// Whether the failure comes from user input rather than from the numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidParams(_) | Error::Grid(_) | Error::Density(_) | Error::Precondition(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
