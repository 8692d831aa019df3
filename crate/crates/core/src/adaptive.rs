//! NLMS echo cancellers used as classical baselines.
//!
//! These are plain (multichannel) NLMS filters, not the joint-optimized
//! variants found in the literature; stereo decorrelation uses the
//! half-wave rectifier preprocessor. There is no double-talk detector: the
//! filters adapt on every sample.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::signal::Waveform;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NlmsConfig {
    pub taps: usize,
    /// Normalized step size in (0, 2).
    pub step_size: f64,
    pub regularization: f64,
    /// Record the taps every this many samples.
    pub trace_interval: Option<usize>,
}

impl Default for NlmsConfig {
    fn default() -> Self {
        Self {
            taps: 512,
            step_size: 0.5,
            regularization: 0.1,
            trace_interval: None,
        }
    }
}

pub const MAX_TAPS: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decorrelation {
    Off,
    /// `x' = x + alpha (x + |x|) / 2`.
    HalfWave(f64),
}

/// Filter taps, one vector per far-end channel.
#[derive(Debug, Clone, PartialEq)]
pub struct NlmsState {
    pub taps: Vec<Vec<f64>>,
    pub step_size: f64,
    pub regularization: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TapTrace {
    pub interval: usize,
    /// `(sample index, taps per channel)` after the update at that sample.
    pub snapshots: Vec<(usize, Vec<Vec<f64>>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NlmsOutput {
    pub error: Waveform,
    pub state: NlmsState,
    pub trace: TapTrace,
}

pub fn half_wave_decorrelate(x: &[f64], alpha: f64) -> Vec<f64> {
    x.iter().map(|&v| v + alpha * (v + v.abs()) / 2.0).collect()
}

fn check_config(cfg: &NlmsConfig) -> Result<()> {
    if cfg.taps == 0 || cfg.taps > MAX_TAPS {
        return Err(Error::InvalidConfig(format!(
            "filter length {} outside 1..={MAX_TAPS}",
            cfg.taps
        )));
    }
    if !(cfg.step_size > 0.0 && cfg.step_size < 2.0) {
        return Err(Error::InvalidConfig(format!(
            "step size {} outside (0, 2)",
            cfg.step_size
        )));
    }
    if !(cfg.regularization > 0.0) {
        return Err(Error::InvalidConfig("regularization must be positive".into()));
    }
    Ok(())
}

/// Multichannel NLMS: one filter per channel of `references`, all updated
/// with the shared error and the joint input energy.
pub fn multichannel_nlms_cancel(
    mic: &Waveform,
    references: &Waveform,
    cfg: &NlmsConfig,
) -> Result<NlmsOutput> {
    check_config(cfg)?;
    if mic.num_channels() != 1 {
        return Err(Error::DimensionMismatch(format!(
            "expected a single microphone channel, got {}",
            mic.num_channels()
        )));
    }
    if mic.len() != references.len() {
        return Err(Error::DimensionMismatch(format!(
            "microphone has {} samples, far end {}",
            mic.len(),
            references.len()
        )));
    }
    if mic.sample_rate() != references.sample_rate() {
        return Err(Error::SampleRateMismatch(
            mic.sample_rate(),
            references.sample_rate(),
        ));
    }
    let k = cfg.taps;
    let y = mic.channel(0);
    let xs = references.channels();
    let mut h = vec![vec![0.0; k]; xs.len()];
    let mut e_out = vec![0.0; y.len()];
    let mut energy = 0.0;
    let mut trace = TapTrace {
        interval: cfg.trace_interval.unwrap_or(0),
        snapshots: Vec::new(),
    };
    for n in 0..y.len() {
        // Running input energy over the filter span, refreshed exactly now
        // and then to stop round-off drift.
        if n % 4096 == 0 {
            energy = xs
                .iter()
                .map(|x| x[n.saturating_sub(k - 1)..=n].iter().map(|v| v * v).sum::<f64>())
                .sum();
        } else {
            for x in xs {
                energy += x[n] * x[n];
                if n >= k {
                    energy -= x[n - k] * x[n - k];
                }
            }
            energy = energy.max(0.0);
        }
        let span = k.min(n + 1);
        let mut estimate = 0.0;
        for (hp, x) in h.iter().zip(xs) {
            let window = &x[n + 1 - span..=n];
            estimate += hp[..span]
                .iter()
                .zip(window.iter().rev())
                .map(|(a, b)| a * b)
                .sum::<f64>();
        }
        let e = y[n] - estimate;
        if !e.is_finite() {
            return Err(Error::Diverged(n));
        }
        e_out[n] = e;
        let g = cfg.step_size * e / (energy + cfg.regularization);
        if g != 0.0 {
            for (hp, x) in h.iter_mut().zip(xs) {
                let window = &x[n + 1 - span..=n];
                for (a, b) in hp[..span].iter_mut().zip(window.iter().rev()) {
                    *a += g * b;
                }
            }
        }
        if let Some(iv) = cfg.trace_interval {
            if iv > 0 && (n + 1) % iv == 0 {
                trace.snapshots.push((n, h.clone()));
            }
        }
    }
    if h.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Diverged(y.len().saturating_sub(1)));
    }
    Ok(NlmsOutput {
        error: Waveform::mono(e_out, mic.sample_rate())?,
        state: NlmsState {
            taps: h,
            step_size: cfg.step_size,
            regularization: cfg.regularization,
        },
        trace,
    })
}

/// Single-loudspeaker NLMS echo canceller.
pub fn nlms_cancel(mic: &Waveform, farend: &Waveform, cfg: &NlmsConfig) -> Result<NlmsOutput> {
    if farend.num_channels() != 1 {
        return Err(Error::DimensionMismatch(format!(
            "single-channel NLMS needs one far-end channel, got {}",
            farend.num_channels()
        )));
    }
    multichannel_nlms_cancel(mic, farend, cfg)
}

/// Two-loudspeaker NLMS. With [`Decorrelation::HalfWave`] the far-end pair
/// is preprocessed before adaptation; the microphone signal must then have
/// been produced from the same preprocessed feeds.
pub fn stereo_nlms_cancel(
    mic: &Waveform,
    farend: &Waveform,
    cfg: &NlmsConfig,
    decorrelation: Decorrelation,
) -> Result<NlmsOutput> {
    if farend.num_channels() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "stereo NLMS needs two far-end channels, got {}",
            farend.num_channels()
        )));
    }
    match decorrelation {
        Decorrelation::HalfWave(alpha) if alpha != 0.0 => {
            let pre = Waveform::new(
                farend
                    .channels()
                    .iter()
                    .map(|c| half_wave_decorrelate(c, alpha))
                    .collect(),
                farend.sample_rate(),
            )?;
            multichannel_nlms_cancel(mic, &pre, cfg)
        }
        _ => multichannel_nlms_cancel(mic, farend, cfg),
    }
}

/// `||h_hat - h|| / ||h||` over all channels, zero-padding the shorter side.
pub fn misalignment(estimate: &[Vec<f64>], truth: &[Vec<f64>]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (e, t) in estimate.iter().zip(truth) {
        let n = e.len().max(t.len());
        for i in 0..n {
            let ev = e.get(i).copied().unwrap_or(0.0);
            let tv = t.get(i).copied().unwrap_or(0.0);
            num += (ev - tv).powi(2);
            den += tv * tv;
        }
    }
    (num / den).sqrt()
}

pub const TAP_TRACE_MAGIC: [u8; 4] = *b"TAPS";

impl TapTrace {
    /// Little-endian dump: magic `TAPS`, version u16 (1), channels u16,
    /// taps u32, snapshot count u32, interval u32; then per snapshot a u64
    /// sample index followed by `channels * taps` f32 values, channel-major.
    pub fn encode(&self) -> Vec<u8> {
        let channels = self.snapshots.first().map_or(0, |s| s.1.len());
        let taps = self
            .snapshots
            .first()
            .and_then(|s| s.1.first())
            .map_or(0, Vec::len);
        let mut out = Vec::new();
        out.extend_from_slice(&TAP_TRACE_MAGIC);
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&(channels as u16).to_le_bytes());
        out.extend_from_slice(&(taps as u32).to_le_bytes());
        out.extend_from_slice(&(self.snapshots.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.interval as u32).to_le_bytes());
        for (n, h) in &self.snapshots {
            out.extend_from_slice(&(*n as u64).to_le_bytes());
            for v in h.iter().flatten() {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.encode()).map_err(|e| Error::io(path, e))
    }
}
