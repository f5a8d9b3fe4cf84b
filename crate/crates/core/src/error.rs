use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("corrupt state vector: {0}")]
    CorruptState(String),

    #[error("model evaluation failed{}: {message}", index.map(|i| format!(" at sample {i}")).unwrap_or_default())]
    Model { index: Option<usize>, message: String },

    #[error(
        "plateau at level {level}: fewer than {required} samples lie strictly above threshold {threshold}"
    )]
    Plateau {
        level: usize,
        threshold: f64,
        required: usize,
    },

    #[error("level cap {max_levels} reached with inadmissibility {last_a:e} above tolerance {tol:e}")]
    LevelsExhausted {
        max_levels: usize,
        last_a: f64,
        tol: f64,
        partial: Box<crate::bus::BusTrace>,
    },

    #[error("rejection acceptance rate {rate:e} below floor {floor:e}; use a smaller problem or a larger prediction error")]
    AcceptanceTooLow { rate: f64, floor: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

impl Error {
    pub(crate) fn model(message: impl Into<String>) -> Self {
        Error::Model {
            index: None,
            message: message.into(),
        }
    }

    pub(crate) fn at_sample(self, index: usize) -> Self {
        match self {
            Error::Model { message, .. } => Error::Model {
                index: Some(index),
                message,
            },
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
