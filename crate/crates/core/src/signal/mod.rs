//! Time-domain buffers, short-time Fourier analysis/synthesis and WAV I/O.

mod stft;
mod wav;

pub use stft::{istft, magnitude_phase, stft, Spectrogram, StftConfig, Window};
pub use wav::{read_wav, write_wav, WavFormat};

use crate::error::{Error, Result};

/// Multichannel sample buffer. All channels share one length.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    channels: Vec<Vec<f64>>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidWaveform("sample rate must be positive".into()));
        }
        if channels.is_empty() {
            return Err(Error::InvalidWaveform("at least one channel required".into()));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::InvalidWaveform("channels differ in length".into()));
        }
        Ok(Self {
            channels,
            sample_rate,
        })
    }

    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        Self::new(vec![samples], sample_rate)
    }

    pub fn zeros(num_channels: usize, len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![vec![0.0; len]; num_channels.max(1)], sample_rate)
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, idx: usize) -> &[f64] {
        &self.channels[idx]
    }

    pub fn channel_mut(&mut self, idx: usize) -> &mut [f64] {
        &mut self.channels[idx]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    /// Single-channel waveform holding a copy of channel `idx`.
    pub fn select(&self, idx: usize) -> Waveform {
        Waveform {
            channels: vec![self.channels[idx].clone()],
            sample_rate: self.sample_rate,
        }
    }

    pub fn scaled(&self, gain: f64) -> Waveform {
        Waveform {
            channels: self
                .channels
                .iter()
                .map(|c| c.iter().map(|&x| gain * x).collect())
                .collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Elementwise sum; shapes and rates must agree.
    pub fn add(&self, other: &Waveform) -> Result<Waveform> {
        self.check_same_shape(other)?;
        Ok(Waveform {
            channels: self
                .channels
                .iter()
                .zip(&other.channels)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
                .collect(),
            sample_rate: self.sample_rate,
        })
    }

    pub fn check_same_shape(&self, other: &Waveform) -> Result<()> {
        if self.sample_rate != other.sample_rate {
            return Err(Error::SampleRateMismatch(self.sample_rate, other.sample_rate));
        }
        if self.num_channels() != other.num_channels() || self.len() != other.len() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.num_channels(),
                self.len(),
                other.num_channels(),
                other.len()
            )));
        }
        Ok(())
    }

    /// Stacks single- or multi-channel waveforms of equal length into one.
    pub fn stack(parts: &[&Waveform]) -> Result<Waveform> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidWaveform("nothing to stack".into()))?;
        let mut channels = Vec::new();
        for p in parts {
            if p.sample_rate != first.sample_rate {
                return Err(Error::SampleRateMismatch(first.sample_rate, p.sample_rate));
            }
            channels.extend(p.channels.iter().cloned());
        }
        Waveform::new(channels, first.sample_rate)
    }

    pub fn peak(&self) -> f64 {
        self.channels
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn energy(&self, channel: usize) -> f64 {
        self.channels[channel].iter().map(|x| x * x).sum()
    }
}

/// Sum of squares over `range` of `x`.
pub fn segment_energy(x: &[f64], range: std::ops::Range<usize>) -> f64 {
    x[range].iter().map(|v| v * v).sum()
}
