use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGrad(String),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("duplicate parameter `{0}`")]
    DuplicateParameter(String),

    #[error("invalid clip bounds: lo {lo} > hi {hi}")]
    InvalidBounds { lo: f64, hi: f64 },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("unknown scene `{0}` (expected one of eth, hotel, univ, zara1, zara2)")]
    UnknownScene(String),

    #[error("{0}")]
    InvalidArgument(String),

    #[error("non-finite value at frame {frame}, pedestrian {ped}: {what}")]
    NonFiniteInput {
        frame: usize,
        ped: usize,
        what: &'static str,
    },

    #[error("covariance is singular at frame {frame}, pedestrian {ped}")]
    SingularCovariance { frame: usize, ped: usize },

    #[error("non-finite {what} loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss {
        what: &'static str,
        epoch: usize,
        batch: usize,
    },

    #[error("horizon mismatch: checkpoint expects {ckpt_obs}/{ckpt_pred} frames, data has {data_obs}/{data_pred}")]
    HorizonMismatch {
        ckpt_obs: usize,
        ckpt_pred: usize,
        data_obs: usize,
        data_pred: usize,
    },

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error("missing config key `{0}`")]
    MissingKey(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    /// True for errors caused by bad user input (usage, config, paths) as
    /// opposed to failures during computation.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::UnknownScene(_)
                | Error::InvalidArgument(_)
                | Error::HorizonMismatch { .. }
                | Error::Config(_)
                | Error::MissingKey(_)
                | Error::Io { .. }
                | Error::Checkpoint(_)
                | Error::Parse { .. }
        )
    }
}
