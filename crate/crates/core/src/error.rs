use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("rotation angle {angle} rad is too close to pi for a canonical logarithm")]
    AngleNearPi { angle: f64 },

    #[error("stamp {t} lies outside segment [{t_a}, {t_b}]")]
    OutOfSegment { t: f64, t_a: f64, t_b: f64 },

    #[error("scan contains no points")]
    EmptyScan,

    #[error("segments do not abut: first stops at {stop}, second starts at {start}")]
    NonAdjacent { stop: f64, start: f64 },

    #[error("point cloud is degenerate (collinear or coincident)")]
    DegenerateCloud,

    #[error("reference eigenvalue {index} is not positive ({value})")]
    ZeroEigenvalue { index: usize, value: f64 },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("marginalized block is singular")]
    SingularBlock,

    #[error(
        "divergence at t={stamp}: consecutive nodes differ by {translation} m / {rotation_deg} deg"
    )]
    DivergenceDetected {
        stamp: f64,
        translation: f64,
        rotation_deg: f64,
    },

    #[error("insufficient overlap between estimate and ground truth: {0}")]
    InsufficientOverlap(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("unknown {kind} '{name}'; valid names: {valid}")]
    UnknownName {
        kind: &'static str,
        name: String,
        valid: String,
    },

    #[error("{0}")]
    Input(String),

    #[error("{}: {source}", path.display())]
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
}
