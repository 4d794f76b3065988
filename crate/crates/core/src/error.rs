use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid cost curve: {0}")]
    InvalidCurve(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    /// Some bus cannot reach the required inertia level even with every agent at capacity.
    #[error("infeasible performance target: bus {bus} reaches at most {max_inertia:.6} but level {required:.6} is required")]
    Infeasible {
        bus: usize,
        required: f64,
        max_inertia: f64,
    },

    /// Excluding this agent leaves the hard performance constraint infeasible,
    /// so its VCG payment is unbounded.
    #[error("agent {agent} is pivotal: without it the performance target cannot be met")]
    PivotalAgent { agent: String },

    #[error("system matrix has non-Hurwitz modes besides the structural zero mode at eigenvalue indices {indices:?}")]
    NotHurwitz { indices: Vec<usize> },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("bisection did not converge after {steps} steps (interval [{lo}, {hi}])")]
    NoConvergence { steps: usize, lo: f64, hi: f64 },

    #[error(
        "incentive audit failed: {violation:.3e} utility gain from deviating; instance: {instance}"
    )]
    AuditFailure { violation: f64, instance: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for failures of the numerics rather than of the supplied data.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotHurwitz { .. }
                | Error::Numerical(_)
                | Error::NoConvergence { .. }
                | Error::AuditFailure { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
