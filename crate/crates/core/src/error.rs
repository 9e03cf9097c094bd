use thiserror::Error;

use crate::kinkfit::KinkState;

/// Everything that can go wrong inside the front laboratory.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Dirac defect is not pointwise evaluable")]
    NotPointwiseEvaluable,

    #[error("expected a {expected} defect, got {found}")]
    WrongDefectKind {
        expected: &'static str,
        found: &'static str,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("stiff failure: step size {h:e} underflowed at t = {t}")]
    StiffFailure { t: f64, h: f64 },

    #[error("divergence: non-finite state at t = {t}")]
    Divergence { t: f64 },

    #[error("front not contained in the grid: {0}")]
    FrontNotContained(String),

    #[error("front not visible: {0}")]
    FrontNotVisible(String),

    #[error("fit did not converge after {iterations} iterations (best E = {error:e})")]
    FitNotConverged {
        iterations: usize,
        best: KinkState,
        error: f64,
    },

    #[error("snapshot {index}: {source}")]
    Snapshot {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("front not rightward: a = {0} must lie in (0, 1/2)")]
    FrontNotRightward(f64),

    #[error("undecided: increase t_max (t = {t}, x0 = {x0})")]
    Undecided { t: f64, x0: f64 },

    #[error("no sign change: both bracket ends give pinned = {pinned}")]
    NoSignChange { pinned: bool },

    #[error("degenerate: {0}")]
    Degenerate(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
