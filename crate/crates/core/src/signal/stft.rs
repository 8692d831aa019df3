//! Framed FFT analysis and weighted overlap-add synthesis.
//!
//! Frame `t` covers samples `[t*hop, t*hop + frame_len)`. A trailing partial
//! frame is zero-padded, so the frame count is
//! `1 + ceil((len - frame_len) / hop)`. Synthesis multiplies each inverse
//! frame by the synthesis window and overlap-adds; with a COLA-valid window
//! pair every sample covered by `frame_len / hop` frames reconstructs exactly.
//! The first and last `frame_len - hop` samples are only partially covered.
//!
//! Parseval: for every frame, `sum_k c_k |X_k|^2 = fft_size * sum_n (w_n x_n)^2`
//! with `c_k = 1` at DC/Nyquist and `2` elsewhere.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array3;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::Waveform;
use crate::error::{Error, Result};

const COLA_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    /// Periodic square-root Hann for analysis and synthesis.
    SqrtHann,
    /// Rectangular analysis; synthesis scaled by `hop / frame_len`.
    Rectangular,
}

impl Window {
    pub fn analysis(self, frame_len: usize) -> Vec<f64> {
        match self {
            Window::SqrtHann => (0..frame_len)
                .map(|n| (0.5 - 0.5 * (2.0 * PI * n as f64 / frame_len as f64).cos()).sqrt())
                .collect(),
            Window::Rectangular => vec![1.0; frame_len],
        }
    }

    pub fn synthesis(self, frame_len: usize, hop: usize) -> Vec<f64> {
        match self {
            Window::SqrtHann => self.analysis(frame_len),
            Window::Rectangular => vec![hop as f64 / frame_len as f64; frame_len],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftConfig {
    pub frame_len: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub window: Window,
}

impl Default for StftConfig {
    /// 20 ms frames, 10 ms hop, 320-point FFT at 16 kHz.
    fn default() -> Self {
        Self {
            frame_len: 320,
            hop: 160,
            fft_size: 320,
            window: Window::SqrtHann,
        }
    }
}

impl StftConfig {
    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 || self.hop > self.frame_len || self.frame_len > self.fft_size {
            return Err(Error::InvalidConfig(format!(
                "need 0 < hop ({}) <= frame_len ({}) <= fft_size ({})",
                self.hop, self.frame_len, self.fft_size
            )));
        }
        let dev = self.cola_deviation();
        if dev > COLA_TOLERANCE {
            return Err(Error::InvalidConfig(format!(
                "window pair violates COLA at hop {} (deviation {dev:e})",
                self.hop
            )));
        }
        Ok(())
    }

    /// Max deviation from 1 of the overlapped analysis*synthesis window sum
    /// over one hop period in steady state.
    pub fn cola_deviation(&self) -> f64 {
        let a = self.window.analysis(self.frame_len);
        let s = self.window.synthesis(self.frame_len, self.hop);
        let prod: Vec<f64> = a.iter().zip(&s).map(|(x, y)| x * y).collect();
        (0..self.hop)
            .map(|n| {
                let sum: f64 = (n..self.frame_len).step_by(self.hop).map(|i| prod[i]).sum();
                (sum - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn num_frames(&self, len: usize) -> usize {
        1 + (len - self.frame_len).div_ceil(self.hop)
    }
}

/// Complex one-sided spectrogram indexed `(frame, bin, channel)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub data: Array3<Complex64>,
    pub config: StftConfig,
    pub sample_rate: u32,
    /// Length of the analysed signal; `istft` truncates to it when present.
    pub original_len: Option<usize>,
}

impl Spectrogram {
    pub fn num_frames(&self) -> usize {
        self.data.dim().0
    }

    pub fn num_bins(&self) -> usize {
        self.data.dim().1
    }

    pub fn num_channels(&self) -> usize {
        self.data.dim().2
    }

    pub fn real(&self) -> Array3<f64> {
        self.data.mapv(|c| c.re)
    }

    pub fn imag(&self) -> Array3<f64> {
        self.data.mapv(|c| c.im)
    }

    pub fn magnitude(&self) -> Array3<f64> {
        self.data.mapv(|c| c.norm())
    }

    /// New spectrogram with the same layout metadata and different data.
    pub fn with_data(&self, data: Array3<Complex64>) -> Spectrogram {
        Spectrogram {
            data,
            config: self.config,
            sample_rate: self.sample_rate,
            original_len: self.original_len,
        }
    }

    pub fn select_channel(&self, ch: usize) -> Spectrogram {
        let (t, f, _) = self.data.dim();
        let data = Array3::from_shape_fn((t, f, 1), |(i, k, _)| self.data[[i, k, ch]]);
        self.with_data(data)
    }

    pub fn same_layout(&self, other: &Spectrogram) -> bool {
        self.data.dim() == other.data.dim()
            && self.config == other.config
            && self.sample_rate == other.sample_rate
    }
}

fn planned(fft_size: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    let mut planner = FftPlanner::new();
    (
        planner.plan_fft_forward(fft_size),
        planner.plan_fft_inverse(fft_size),
    )
}

pub fn stft(w: &Waveform, cfg: &StftConfig) -> Result<Spectrogram> {
    cfg.validate()?;
    let len = w.len();
    if len < cfg.frame_len {
        return Err(Error::SignalTooShort {
            len,
            frame_len: cfg.frame_len,
        });
    }
    let frames = cfg.num_frames(len);
    let bins = cfg.num_bins();
    let window = cfg.window.analysis(cfg.frame_len);
    let (fwd, _) = planned(cfg.fft_size);
    let mut data = Array3::zeros((frames, bins, w.num_channels()));
    let mut buf = vec![Complex64::new(0.0, 0.0); cfg.fft_size];
    for (ch, x) in w.channels().iter().enumerate() {
        for t in 0..frames {
            let start = t * cfg.hop;
            buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
            for (n, wv) in window.iter().enumerate() {
                if let Some(&v) = x.get(start + n) {
                    buf[n].re = v * wv;
                }
            }
            fwd.process(&mut buf);
            for k in 0..bins {
                data[[t, k, ch]] = buf[k];
            }
        }
    }
    Ok(Spectrogram {
        data,
        config: *cfg,
        sample_rate: w.sample_rate(),
        original_len: Some(len),
    })
}

pub fn istft(s: &Spectrogram) -> Result<Waveform> {
    let cfg = &s.config;
    cfg.validate()?;
    let (frames, bins, channels) = s.data.dim();
    if bins != cfg.num_bins() {
        return Err(Error::DimensionMismatch(format!(
            "spectrogram has {bins} bins, config implies {}",
            cfg.num_bins()
        )));
    }
    if frames == 0 || channels == 0 {
        return Err(Error::DimensionMismatch("empty spectrogram".into()));
    }
    let full_len = (frames - 1) * cfg.hop + cfg.frame_len;
    let out_len = s.original_len.unwrap_or(full_len);
    if out_len > full_len || cfg.num_frames(out_len.max(cfg.frame_len)) != frames {
        return Err(Error::DimensionMismatch(format!(
            "{frames} frames cannot produce {out_len} samples"
        )));
    }
    let window = cfg.window.synthesis(cfg.frame_len, cfg.hop);
    let (_, inv) = planned(cfg.fft_size);
    let n = cfg.fft_size;
    let scale = 1.0 / n as f64;
    let mut out = vec![vec![0.0; full_len]; channels];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for (ch, y) in out.iter_mut().enumerate() {
        for t in 0..frames {
            for k in 0..bins {
                buf[k] = s.data[[t, k, ch]];
            }
            // Hermitian mirror of the one-sided spectrum.
            for k in bins..n {
                buf[k] = s.data[[t, n - k, ch]].conj();
            }
            inv.process(&mut buf);
            let start = t * cfg.hop;
            for (i, wv) in window.iter().enumerate() {
                y[start + i] += buf[i].re * scale * wv;
            }
        }
        y.truncate(out_len);
    }
    Waveform::new(out, s.sample_rate)
}

/// Splits a spectrogram into magnitude and phase; zero cells get phase 0.
pub fn magnitude_phase(s: &Spectrogram) -> (Array3<f64>, Array3<f64>) {
    let mag = s.data.mapv(|c| c.norm());
    let phase = s
        .data
        .mapv(|c| if c.norm() == 0.0 { 0.0 } else { c.im.atan2(c.re) });
    (mag, phase)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    /// Direct DFT of one windowed, zero-padded frame.
    fn dft_frame(x: &[f64], start: usize, cfg: &StftConfig) -> Vec<Complex64> {
        let w = cfg.window.analysis(cfg.frame_len);
        (0..cfg.num_bins())
            .map(|k| {
                let mut acc = Complex64::new(0.0, 0.0);
                for n in 0..cfg.frame_len {
                    let v = x.get(start + n).copied().unwrap_or(0.0) * w[n];
                    let ang = -2.0 * PI * (k * n) as f64 / cfg.fft_size as f64;
                    acc += Complex64::from_polar(v, ang);
                }
                acc
            })
            .collect()
    }

    #[test]
    fn default_config_gives_161_bins() {
        let w = Waveform::mono(noise(16000, 1), 16000).unwrap();
        let s = stft(&w, &StftConfig::default()).unwrap();
        assert_eq!(s.num_bins(), 161);
        assert_eq!(s.num_frames(), 1 + (16000 - 320) / 160);
    }

    #[test]
    fn sqrt_hann_is_cola_at_half_overlap() {
        assert!(StftConfig::default().cola_deviation() <= 1e-10);
        let bad = StftConfig {
            hop: 120,
            ..StftConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn rejects_bad_configs_and_short_signals() {
        let w = Waveform::mono(vec![0.0; 100], 16000).unwrap();
        assert!(matches!(
            stft(&w, &StftConfig::default()),
            Err(Error::SignalTooShort { .. })
        ));
        let cfg = StftConfig {
            frame_len: 400,
            ..StftConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_signal_gives_zero_spectrum_and_back() {
        let w = Waveform::zeros(1, 16000, 16000).unwrap();
        let s = stft(&w, &StftConfig::default()).unwrap();
        assert!(s.data.iter().all(|c| c.norm() == 0.0));
        let back = istft(&s).unwrap();
        assert!(back.channel(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bin_centred_sinusoid_matches_direct_dft() {
        let cfg = StftConfig {
            window: Window::Rectangular,
            hop: 160,
            frame_len: 320,
            fft_size: 320,
        };
        let k0 = 17;
        let x: Vec<f64> = (0..3200)
            .map(|n| (2.0 * PI * k0 as f64 * n as f64 / 320.0).cos())
            .collect();
        let s = stft(&Waveform::mono(x.clone(), 16000).unwrap(), &cfg).unwrap();
        let mut max_dev = 0.0_f64;
        for t in 0..s.num_frames() {
            let oracle = dft_frame(&x, t * cfg.hop, &cfg);
            for (k, o) in oracle.iter().enumerate() {
                max_dev = max_dev.max((s.data[[t, k, 0]] - o).norm());
            }
            let peak = (0..cfg.num_bins())
                .max_by(|&a, &b| {
                    s.data[[t, a, 0]]
                        .norm()
                        .total_cmp(&s.data[[t, b, 0]].norm())
                })
                .unwrap();
            if t + 1 < s.num_frames() {
                assert_eq!(peak, k0);
            }
        }
        assert!(max_dev <= 1e-9, "max deviation {max_dev:e}");
    }

    #[test]
    fn magnitude_phase_conventions() {
        let mut data = Array3::zeros((1, 2, 1));
        data[[0, 0, 0]] = Complex64::new(3.0, 4.0);
        data[[0, 1, 0]] = Complex64::new(-0.0, -0.0);
        let s = Spectrogram {
            data,
            config: StftConfig::default(),
            sample_rate: 16000,
            original_len: None,
        };
        let (m, p) = magnitude_phase(&s);
        assert_eq!(m[[0, 0, 0]], 5.0);
        assert_eq!(m[[0, 1, 0]], 0.0);
        assert_eq!(p[[0, 1, 0]], 0.0);
    }

    #[test]
    fn istft_rejects_inconsistent_bins() {
        let s = Spectrogram {
            data: Array3::zeros((4, 100, 1)),
            config: StftConfig::default(),
            sample_rate: 16000,
            original_len: None,
        };
        assert!(matches!(istft(&s), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn parseval_per_frame() {
        let cfg = StftConfig::default();
        let x = noise(4000, 9);
        let s = stft(&Waveform::mono(x.clone(), 16000).unwrap(), &cfg).unwrap();
        let w = cfg.window.analysis(cfg.frame_len);
        for t in 0..s.num_frames() {
            let time: f64 = (0..cfg.frame_len)
                .map(|n| (x.get(t * cfg.hop + n).copied().unwrap_or(0.0) * w[n]).powi(2))
                .sum();
            let freq: f64 = (0..cfg.num_bins())
                .map(|k| {
                    let c = if k == 0 || k == cfg.fft_size / 2 { 1.0 } else { 2.0 };
                    c * s.data[[t, k, 0]].norm_sqr()
                })
                .sum();
            let rel = (freq - cfg.fft_size as f64 * time).abs() / (cfg.fft_size as f64 * time);
            assert!(rel <= 1e-6);
        }
    }
}
