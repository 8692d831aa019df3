use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid STFT configuration: {0}")]
    InvalidConfig(String),

    #[error("signal of {len} samples is shorter than one frame ({frame_len})")]
    SignalTooShort { len: usize, frame_len: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    SampleRateMismatch(u32, u32),

    #[error("invalid waveform: {0}")]
    InvalidWaveform(String),

    #[error("room cannot realize T60 = {t60} s (Sabine absorption {absorption:.4} outside (0, 1])")]
    UnrealizableRoom { t60: f64, absorption: f64 },

    #[error("invalid room: {0}")]
    InvalidRoom(String),

    #[error("point ({x:.3}, {y:.3}, {z:.3}) lies outside the room")]
    OutsideRoom { x: f64, y: f64, z: f64 },

    #[error("geometry does not fit: {0}")]
    Geometry(String),

    #[error("segment '{0}' is empty or missing")]
    EmptySegment(&'static str),

    #[error("zero-energy signal: {0}")]
    ZeroEnergy(&'static str),

    #[error("mask file format error: {0}")]
    MaskFormat(String),

    #[error("mask file truncated: expected {expected} payload bytes, found {found}")]
    MaskTruncated { expected: u64, found: u64 },

    #[error("mask dimensions overflow: {frames} x {bins} x {channels}")]
    MaskDimensionOverflow { frames: u32, bins: u32, channels: u32 },

    #[error("mask kind mismatch: {0}")]
    MaskKind(String),

    #[error("covariance estimate needs at least one frame")]
    NoFrames,

    #[error("speech covariance is zero at bin {0}; no steering direction")]
    NoSteeringDirection(usize),

    #[error("adaptive filter diverged at sample {0}")]
    Diverged(usize),

    #[error("missing scene component: {0}")]
    MissingComponent(&'static str),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
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
