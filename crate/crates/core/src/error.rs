use std::path::PathBuf;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: line {line}: {msg}")]
    Format { path: PathBuf, line: usize, msg: String },

    #[error("row {row}: {msg}")]
    Validation { row: usize, msg: String },

    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },

    #[error("undefined input: {0}")]
    UndefinedInput(String),

    #[error("normalization failed at row {row}: {msg}")]
    Normalization { row: usize, msg: String },

    #[error("members are not aligned: {0}")]
    Misaligned(String),

    #[error("recipe `{recipe}` resolved to no members (filter: {filter})")]
    RecipeResolution { recipe: String, filter: String },

    #[error("classifier `{classifier}` has no scores on dataset `{dataset}`")]
    Coverage { classifier: String, dataset: String },

    #[error("invalid selection config: {0}")]
    InvalidConfig(String),

    #[error("combinatorial budget exceeded: C({n},{k}) = {count} > {budget}")]
    BudgetExceeded { n: usize, k: usize, count: u128, budget: u128 },

    #[error("all weights fell below the zeroing threshold {0}")]
    EmptySelection(f64),

    #[error("gradient is singular: weight {0} is zero under the direct parameterization")]
    Singular(usize),

    #[error("optimization diverged at epoch {epoch} (loss {loss}); try a smaller learning rate")]
    Divergence { epoch: usize, loss: f64 },

    #[error("usage: {0}")]
    Usage(String),

    #[error("config {path}: line {line}: {msg}")]
    Config { path: PathBuf, line: usize, msg: String },

    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("image: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code for this error: 1 usage, 3 numerical divergence, 2 everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config { .. } => 1,
            Error::Divergence { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
