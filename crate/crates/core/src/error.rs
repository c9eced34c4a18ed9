use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("graph has zero total weight")]
    ZeroGraph,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{k} does not divide {n}")]
    NotDivisible { k: usize, n: usize },

    #[error("{what}: budget exceeded ({required} > cap {cap})")]
    BudgetExceeded {
        what: &'static str,
        required: f64,
        cap: f64,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("weights sum to {total}, not 1 within tolerance")]
    NotNormalized { total: f64 },

    #[error("graph is not simple: {0}")]
    NotSimple(String),

    #[error("grapheur is not in the symmetric class: {0}")]
    NotSymmetricGrapheur(String),

    #[error("grapheur has continuous components; enable grid mode")]
    UnsupportedContinuousComponent,

    #[error("epsilon must lie in (0, 1), got {0}")]
    InvalidEpsilon(f64),

    #[error("parameter `{name}` is not invariant: {detail}")]
    NotInvariant { name: String, detail: String },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("input contains no edges")]
    EmptyInput,

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn budget(what: &'static str, required: f64, cap: f64) -> Result<()> {
    if required > cap {
        Err(Error::BudgetExceeded {
            what,
            required,
            cap,
        })
    } else {
        Ok(())
    }
}
