use thiserror::Error;

pub type Result<T> = std::result::Result<T, DeepcError>;

#[derive(Debug, Error)]
pub enum DeepcError {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("degenerate channel {channel}: min = max = {value}")]
    DegenerateChannel { channel: usize, value: f64 },

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("artifact mismatch between {left} and {right}: {detail}")]
    Mismatch {
        left: String,
        right: String,
        detail: String,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl DeepcError {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        DeepcError::Dimension(msg.into())
    }
}
