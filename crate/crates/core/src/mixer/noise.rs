use std::f64::consts::PI;

use rand::Rng;
use rustfft::{num_complex::Complex64, FftPlanner};

use super::sources::speech_shaped_noise;
use crate::error::Result;
use crate::room::{image_rir, ArrayGeometry, Point3, RirOptions, RoomSpec};
use crate::signal::Waveform;

/// Approximate diffuse field: independent noise point sources spread evenly
/// on a horizontal circle around the array, each reaching every microphone
/// through its own image-method RIR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffuseNoiseConfig {
    pub sources: usize,
    /// Circle radius cap in meters; the radius also stays within 90% of the
    /// distance from the array centre to the nearest side wall.
    pub max_radius: f64,
    pub rir: RirOptions,
}

impl Default for DiffuseNoiseConfig {
    fn default() -> Self {
        Self {
            sources: 36,
            max_radius: 3.0,
            rir: RirOptions::default(),
        }
    }
}

/// One channel per microphone of `geometry`. With a single microphone the
/// output is plain noise with no spatial structure.
pub fn diffuse_noise<R: Rng + ?Sized>(
    geometry: &ArrayGeometry,
    room: &RoomSpec,
    len: usize,
    cfg: &DiffuseNoiseConfig,
    rng: &mut R,
) -> Result<Waveform> {
    let fs = cfg.rir.sample_rate;
    if geometry.mic_positions.len() == 1 {
        return speech_shaped_noise(len, fs, rng);
    }
    let centre = geometry.mic_centroid();
    let wall = [
        centre.x,
        room.dims[0] - centre.x,
        centre.y,
        room.dims[1] - centre.y,
    ]
    .into_iter()
    .fold(f64::INFINITY, f64::min);
    let radius = (0.9 * wall).min(cfg.max_radius);
    let phase0 = rng.random_range(0.0..2.0 * PI);

    let n_fft = (len + cfg.rir.len - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n_fft);
    let inv = planner.plan_fft_inverse(n_fft);
    let to_spec = |x: &[f64]| {
        let mut buf: Vec<Complex64> = (0..n_fft)
            .map(|i| Complex64::new(x.get(i).copied().unwrap_or(0.0), 0.0))
            .collect();
        fwd.process(&mut buf);
        buf
    };

    let mics = &geometry.mic_positions;
    let mut acc = vec![vec![Complex64::new(0.0, 0.0); n_fft]; mics.len()];
    for k in 0..cfg.sources {
        let angle = phase0 + 2.0 * PI * k as f64 / cfg.sources as f64;
        let src = Point3::new(
            centre.x + radius * angle.cos(),
            centre.y + radius * angle.sin(),
            centre.z,
        );
        let sig = speech_shaped_noise(len, fs, rng)?;
        let sig_spec = to_spec(sig.channel(0));
        for (m, mic) in mics.iter().enumerate() {
            let rir = image_rir(room, src, *mic, &cfg.rir)?;
            let h = to_spec(&rir.taps);
            for ((a, x), hv) in acc[m].iter_mut().zip(&sig_spec).zip(&h) {
                *a += x * hv;
            }
        }
    }
    let scale = 1.0 / n_fft as f64;
    let channels = acc
        .into_iter()
        .map(|mut spec| {
            inv.process(&mut spec);
            spec.iter().take(len).map(|c| c.re * scale).collect()
        })
        .collect();
    Waveform::new(channels, fs)
}
