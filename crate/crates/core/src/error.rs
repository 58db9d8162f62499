use thiserror::Error;

/// Errors raised anywhere in the simulation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid truncation: {0} levels (need at least 2)")]
    InvalidTruncation(usize),

    #[error("layout error: {0}")]
    Layout(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("singular detuning: {0} must be nonzero")]
    SingularDetuning(&'static str),

    #[error("step size underflow at t = {time:.6e} s (dt = {dt:.3e} s)")]
    StepUnderflow { time: f64, dt: f64 },

    #[error("steady state did not converge: residual {residual:.3e} after t = {time:.3e} s")]
    SteadyStateNotConverged { residual: f64, time: f64 },

    #[error("singular linear system in steady-state solve")]
    SingularSystem,

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("merit undefined: {0}")]
    UndefinedMerit(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// True for errors that originate in user configuration rather than numerics.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Stage { source, .. } => source.is_config(),
            e => matches!(
                e,
                Error::Config(_) | Error::InvalidParameter(_) | Error::InvalidTruncation(_)
            ),
        }
    }

    /// Wraps `self` with the name of the pipeline stage that failed.
    pub fn at(self, stage: &'static str) -> Self {
        Error::Stage { stage, source: Box::new(self) }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
