use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    /// A per-phase or oscillator reference collapsed below the usable magnitude.
    #[error("degenerate reference: magnitude {magnitude:.3e} V")]
    DegenerateReference { magnitude: f64 },

    #[error("feedback estimator needs {expected} faulty phase(s), got {actual}")]
    WrongFaultCount { expected: usize, actual: usize },

    #[error("grid events overlap on phase {phase}")]
    OverlappingEvents { phase: char },

    #[error("simulation diverged: {0}")]
    Diverged(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing scenario run: {0}")]
    MissingScenario(String),

    #[error("at t = {t:.6} s: {source}")]
    AtTime {
        t: f64,
        #[source]
        source: Box<SimError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SimError {
    pub fn at(self, t: f64) -> Self {
        match self {
            e @ SimError::AtTime { .. } => e,
            e => SimError::AtTime {
                t,
                source: Box::new(e),
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
