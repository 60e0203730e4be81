//! Crate-wide error type and exit-code mapping.

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration (bad probability vector, out-of-range field, unparseable file).
    #[error("config: {0}")]
    Config(String),

    /// API misuse, e.g. stepping a terminated state or filtering with an uncalibrated model.
    #[error("usage: {0}")]
    Usage(String),

    /// Dataset/episode/artifact cross-consistency failure.
    #[error("integrity: {0}")]
    Integrity(String),

    /// Imbalance ratio requested on a dataset with no positives.
    #[error("imbalance ratio undefined: dataset has no positive samples")]
    UndefinedImbalance,

    /// Exact criticality enumeration would exceed the configured budget.
    #[error(
        "criticality enumeration needs {needed} sequences but the budget is {budget}; \
         use monte_carlo_criticality instead"
    )]
    EnumerationBudget { needed: f64, budget: u64 },

    /// Stage-3 replay construction over an empty critical-episode index.
    #[error("no critical episodes: dense replay cannot be built")]
    NoCriticalEpisodes,

    /// Stage-1 filtering left only one class for the supervised stage.
    #[error(
        "stage-2 training set contains a single class ({0}): stage-1 over-filtered; \
         lower target_recall pressure or regenerate with more positives"
    )]
    SingleClassSurvivors(String),

    /// Training produced a non-finite loss.
    #[error("training diverged in {stage} at step {step}: loss = {loss}")]
    TrainingDiverged {
        stage: String,
        step: usize,
        loss: f64,
    },

    /// A pipeline stage was invoked before its inputs exist.
    #[error("missing prerequisite: {0}")]
    MissingPrerequisite(String),

    /// Stored checksum does not match recomputed bytes.
    #[error("checksum mismatch for {path}: expected {expected}, got {actual}")]
    ChecksumMismatch {
        path: String,
        expected: String,
        actual: String,
    },

    /// On-disk format version not supported by this build.
    #[error("format version mismatch for {path}: expected {expected}, got {actual}")]
    VersionMismatch {
        path: String,
        expected: u32,
        actual: u32,
    },

    #[error("unknown baseline: {0} (expected one of: bbn, cbs, decoupling)")]
    UnknownBaseline(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Serde(String),
}

impl Error {
    /// Process exit code for the CLI: 2 config, 3 missing prerequisite, 4 divergence, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::MissingPrerequisite(_) => 3,
            Error::TrainingDiverged { .. } => 4,
            _ => 1,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
