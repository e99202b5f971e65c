use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("config parse error at line {line}: {reason}")]
    ConfigParse { line: usize, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sample rate {got} Hz below required minimum {required} Hz")]
    SampleRateTooLow { got: f64, required: f64 },

    #[error("too few samples: got {got}, need at least {required}")]
    TooFewSamples { got: usize, required: usize },

    #[error("integration window {window_s} s longer than trajectory {duration_s} s")]
    WindowTooLong { window_s: f64, duration_s: f64 },

    #[error("negative expected arm count {value} in window {window}")]
    NegativeArmCount { window: usize, value: f64 },

    #[error(
        "linearity guard violated: max |2kz| = {max_phase} rad exceeds threshold {threshold} rad"
    )]
    LinearityViolated { max_phase: f64, threshold: f64 },

    #[error("detection at zero-sensitivity phase (D = 0)")]
    ZeroSensitivity,

    #[error("count record has no linear calibration constants")]
    MissingLinearConstants,

    #[error("mismatched window rates: {0} Hz vs {1} Hz")]
    MismatchedRates(f64, f64),

    #[error("angle bin {bin} (theta = {theta} rad) is empty")]
    EmptyAngleBin { bin: usize, theta: f64 },

    #[error("marginal set is under-sampled: angle bin {bin} holds {count} samples, minimum {minimum}")]
    UnderSampled {
        bin: usize,
        count: usize,
        minimum: usize,
    },

    #[error("position grid must be uniform, odd length and symmetric about zero: {0}")]
    BadGrid(String),

    #[error("no peak in window [{f_min} Hz, {f_max} Hz]")]
    NoPeak { f_min: f64, f_max: f64 },

    #[error("fit did not converge after {iterations} iterations (cost {cost})")]
    FitDiverged { iterations: usize, cost: f64 },

    #[error("unknown state kind `{0}`")]
    UnknownState(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// True for errors caused by user input (config, arguments, files) rather
    /// than numerical failure inside a stage.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Config { .. }
                | Error::ConfigParse { .. }
                | Error::InvalidArgument(_)
                | Error::UnknownState(_)
                | Error::Io { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
