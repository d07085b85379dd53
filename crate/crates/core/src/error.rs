use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// One or more slices lack IN or OUT voxels.
    #[error("degenerate geometry: slices {slices:?} have no in-part or no out-of-part voxels")]
    DegenerateSlices { slices: Vec<usize> },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("solver diverged at iteration {iteration}: objective is not finite")]
    Divergence { iteration: usize },

    /// Every sinogram value was clamped to the minimum projection value, so
    /// the dose is identically zero and cannot be normalized.
    #[error(
        "OSMO collapse at iteration {iteration}: the whole sinogram was clamped to the \
         minimum projection value (zero-value matrix), optimisation cannot continue"
    )]
    OsmoCollapse { iteration: usize },

    #[error("no admissible threshold pair in sweep grid")]
    NoAdmissiblePair,

    #[error("corrupt sidecar {path}: {msg}")]
    CorruptSidecar { path: PathBuf, msg: String },

    #[error("dtype mismatch in {path}: expected {expected}, found {found}")]
    DType {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("unsupported artifact version {found} in {path} (expected {expected})")]
    Version {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("artifact kind mismatch in {path}: expected {expected}, found {found}")]
    Kind {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {msg}")]
    Decode { path: PathBuf, msg: String },

    /// Aggregated configuration problems, reported together.
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_)
            | Error::Config(_)
            | Error::DegenerateGeometry(_)
            | Error::DegenerateSlices { .. }
            | Error::Shape(_) => 2,
            Error::Divergence { .. } | Error::OsmoCollapse { .. } | Error::NoAdmissiblePair => 3,
            Error::CorruptSidecar { .. }
            | Error::DType { .. }
            | Error::Version { .. }
            | Error::Kind { .. }
            | Error::Io { .. }
            | Error::Decode { .. } => 4,
        }
    }
}
