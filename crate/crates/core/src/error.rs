use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("column {index} ({name}) has zero variance")]
    ConstantColumn { index: usize, name: String },

    #[error("covariate matrix is rank deficient (smallest/largest singular value = {ratio:e})")]
    RankDeficient { ratio: f64 },

    #[error("rank {rank} outside [1, {dim}]")]
    BadRank { rank: usize, dim: usize },

    #[error("response vector has zero norm")]
    ZeroResponse,

    #[error(
        "observation {index} has leverage 1 at lambda = {lambda:e}; leave-one-out loss undefined"
    )]
    LeverageOne { index: usize, lambda: f64 },

    #[error("operation requires a flat spectrum (all singular values equal to 1), max deviation {deviation:e}")]
    FlatSpectrumRequired { deviation: f64 },

    #[error("quadratic has no positive root")]
    NoPositiveRoot,

    #[error("lambda grid too coarse: two stationary points inside the cell starting at lambda = {lambda:e}")]
    GridTooCoarse { lambda: f64 },

    #[error("degenerate random draw after {attempts} attempts")]
    DegenerateDraw { attempts: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("data error at row {row}, column {column}: {message}")]
    Data {
        row: usize,
        column: String,
        message: String,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
