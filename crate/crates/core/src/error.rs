use std::path::PathBuf;

/// Errors produced by the estimation, simulation and I/O layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("rotation angle {angle} is too close to pi for the logarithm (antipodal rotation)")]
    AntipodalRotation { angle: f64 },

    #[error("antipodal landmark coordinates: point lies on the -e3 ray of the chart")]
    AntipodalLandmark,

    #[error("landmark {index} coincides with the vehicle (zero range)")]
    ZeroRange { index: usize },

    #[error("non-positive range {range} for landmark {id}")]
    NonPositiveRange { id: u32, range: f64 },

    #[error("unknown landmark id {0}")]
    UnknownLandmark(u32),

    #[error("landmark id {0} is already part of the state")]
    DuplicateLandmark(u32),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("innovation covariance is singular")]
    SingularInnovation,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("degenerate point set: {0}")]
    DegeneratePoints(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("filter diverged at t = {t}: {reason}")]
    Divergence { t: f64, reason: String },

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
