use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate latitude {latitude_deg:.4} deg: no visible satellite position on a {grid}x{grid} phase grid")]
    DegenerateLatitude { latitude_deg: f64, grid: usize },

    #[error("block certificate construction failed: {0}")]
    Certificate(String),

    #[error("precondition unmet: {0}")]
    PreconditionUnmet(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
