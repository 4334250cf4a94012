use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum FairError {
    #[error("invalid fairness parameters: {0}")]
    InvalidParams(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("gamma must be >= 2, got {0}")]
    InvalidGamma(u32),

    #[error("dimension mismatch: expected dim={expected}, got dim={got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index {index} out of range for {len} points")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("operation requires a nonempty set")]
    EmptySet,

    #[error("need at least 2 distinct point locations")]
    TooFewLocations,

    #[error("set with {red} red / {blue} blue points is not ({r},{b})-balanced")]
    Unbalanced { red: u64, blue: u64, r: u64, b: u64 },

    #[error("dataset balance {balance:.4} is below the target {target:.4}; {suggestion}")]
    BalancePrecheck { balance: f64, target: f64, suggestion: String },

    #[error("audit failed: {0}")]
    AuditFailed(String),

    #[error("oracle budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("sensitive column `{column}` has {distinct} distinct values; pass an explicit blue value")]
    SensitiveColumn { column: String, distinct: usize },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl FairError {
    /// Process exit code: 2 validation, 3 I/O, 4 internal invariant breach.
    pub fn exit_code(&self) -> i32 {
        match self {
            FairError::Io(_) | FairError::Csv(_) | FairError::Json(_) => 3,
            FairError::Invariant(_) => 4,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, FairError>;
