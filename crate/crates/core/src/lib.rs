//! Scene simulation, mask-based enhancement, MVDR beamforming, NLMS
//! baselines and scoring for multi-channel acoustic echo cancellation
//! experiments.

pub mod adaptive;
pub mod beamform;
pub mod error;
pub mod masking;
pub mod metrics;
pub mod mixer;
pub mod room;
pub mod signal;

pub use error::{Error, Result};
pub use signal::{istft, stft, Spectrogram, StftConfig, Waveform};
