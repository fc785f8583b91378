use thiserror::Error;

use crate::qfock::SectorCharge;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty position list")]
    EmptyGeometry,

    #[error("degenerate schedule: horizontal and vertical difference {0} coincide")]
    DegenerateSchedule(i64),

    #[error("geometry {0} not supported here")]
    UnsupportedGeometry(String),

    #[error("sector {charge} has {size} states, above the cap of {cap}")]
    SectorCap {
        charge: SectorCharge,
        size: usize,
        cap: usize,
    },

    #[error("state has support outside sector {0}")]
    OutsideSector(SectorCharge),

    #[error("non-finite amplitude while building sector {0}")]
    NonFinite(SectorCharge),

    #[error("pole: {0}")]
    Pole(String),

    #[error("singular kernel: coincident spectral parameters {0} and {1}")]
    SingularKernel(usize, usize),

    #[error("zero-norm state")]
    ZeroNorm,

    #[error("rank deficiency: {deficiency} beyond the expected gauge freedom")]
    RankDeficient { deficiency: usize },

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wrap an error with the pipeline stage that produced it.
    pub fn at(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping stage annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
