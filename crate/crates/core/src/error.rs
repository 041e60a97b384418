use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("invalid mask: {0}")]
    InvalidMask(String),

    #[error("unsupported distribution: {0}")]
    UnsupportedDistribution(String),

    #[error("missing latent entry for mask {mask} at {index}")]
    MissingLatent { mask: String, index: String },

    #[error("permutation mismatch: {0}")]
    Permutation(String),

    #[error("exact projection requires finite latent support ({0})")]
    ContinuousSupport(String),

    #[error("sample has no latent table attached")]
    NoLatent,

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("function grid is not centered: max |P f| = {0:e}")]
    UncenteredGrid(f64),

    #[error("non-finite scores at cells {0:?}")]
    NonFiniteScore(Vec<usize>),

    #[error("rank deficient matrix: {0}")]
    RankDeficient(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("finite-difference step underflow")]
    StepUnderflow,

    #[error("Richardson extrapolation did not converge (spread {0:e})")]
    NonConvergentExtrapolation(f64),

    #[error("field `{0}` not found in sample")]
    MissingField(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
