use std::path::PathBuf;

/// Errors produced anywhere in the simulation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{name} = {value} is outside its valid domain ({expected})")]
    Domain {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("{0} diverges at this argument")]
    Singularity(&'static str),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("phase function normalization off by {deviation:e} (limit {limit:e})")]
    Normalization { deviation: f64, limit: f64 },

    #[error("photon exceeded {cap} interaction events")]
    EventCap { cap: u64 },

    #[error("spatial profile never drops below half maximum inside the map")]
    UndefinedWidth,

    #[error("histogram carries no mass")]
    EmptyHistogram,

    #[error("too few occupied bins for a fit: {found} < {needed}")]
    InsufficientData { found: usize, needed: usize },

    #[error("fit did not converge after {restarts} restarts (best R^2 = {best_r_squared:.4})")]
    NoConvergence { restarts: usize, best_r_squared: f64 },

    #[error(
        "channel memory exceeds {max} slots at bit duration {bit_duration:e} s; use a longer bit duration"
    )]
    MemoryCap { max: usize, bit_duration: f64 },

    #[error("trellis normalizer underflowed at slot {slot}")]
    TrellisUnderflow { slot: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("stage `{0}` has no output to report")]
    MissingStage(&'static str),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Checks `lo <= value <= hi`.
pub(crate) fn check_range(
    name: &'static str,
    value: f64,
    lo: f64,
    hi: f64,
    expected: &'static str,
) -> Result<()> {
    if value.is_finite() && value >= lo && value <= hi {
        Ok(())
    } else {
        Err(Error::Domain {
            name,
            value,
            expected,
        })
    }
}
