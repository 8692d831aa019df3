//! Self-contained stand-ins for speech and babble: syllables of voiced
//! (pitch-pulse) or unvoiced (noise) excitation through formant resonators,
//! plus a far-end room that turns a mono talker into a correlated stereo pair.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::room::{image_rir, Point3, RirOptions, RoomSpec};
use crate::signal::Waveform;

const SPEECH_PEAK: f64 = 0.9;

/// Two-pole resonator, `y[n] = g x[n] + a1 y[n-1] + a2 y[n-2]`.
#[derive(Debug, Clone, Copy, Default)]
struct Resonator {
    a1: f64,
    a2: f64,
    gain: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn retune(&mut self, centre_hz: f64, bandwidth_hz: f64, fs: f64) {
        let r = (-PI * bandwidth_hz / fs).exp();
        self.a1 = 2.0 * r * (2.0 * PI * centre_hz / fs).cos();
        self.a2 = -r * r;
        self.gain = 1.0 - r;
    }

    fn step(&mut self, x: f64) -> f64 {
        let y = self.gain * x + self.a1 * self.y1 + self.a2 * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

struct Syllable {
    start: usize,
    end: usize,
    amp: f64,
    f1: f64,
    f2: f64,
    /// Pitch at syllable start and end; 0 for unvoiced syllables.
    f0: (f64, f64),
}

const VOICED_PROBABILITY: f64 = 0.8;
/// Syllable peak levels are log-uniform over this many dB below full scale.
const SYLLABLE_LEVEL_RANGE_DB: f64 = 24.0;
/// One-pole low-pass on the pulse train, giving the voiced source a
/// high-frequency roll-off.
const GLOTTAL_POLE: f64 = 0.7;

fn syllables<R: Rng + ?Sized>(len: usize, fs: f64, rng: &mut R) -> Vec<Syllable> {
    let mut out = Vec::new();
    let base_f0 = rng.random_range(90.0..220.0);
    let mut t = (rng.random_range(0.10..0.30) * fs) as usize;
    let stop = len.saturating_sub((rng.random_range(0.10..0.30) * fs) as usize);
    while t < stop {
        let dur = (rng.random_range(0.08..0.30) * fs) as usize;
        out.push(Syllable {
            start: t,
            end: (t + dur).min(stop),
            amp: 10f64.powf(-rng.random_range(0.0..SYLLABLE_LEVEL_RANGE_DB) / 20.0),
            f1: rng.random_range(300.0..900.0),
            f2: rng.random_range(900.0..2500.0),
            f0: if rng.random_bool(VOICED_PROBABILITY) {
                (
                    base_f0 * rng.random_range(0.85..1.2),
                    base_f0 * rng.random_range(0.85..1.15),
                )
            } else {
                (0.0, 0.0)
            },
        });
        let gap = if rng.random_bool(0.1) {
            rng.random_range(0.25..0.45)
        } else {
            rng.random_range(0.03..0.20)
        };
        t += dur + (gap * fs) as usize;
    }
    out
}

/// Speech-like signal. Each syllable is excited either by a gliding pitch
/// pulse train, low-passed, with a little aspiration noise (voiced) or by
/// Gaussian noise (unvoiced), then passed through two syllable-dependent
/// formant resonators plus a tilted broadband floor. A syllabic envelope
/// with 20 ms raised-cosine ramps gates the result; syllable levels spread
/// over 24 dB. Starts and ends with 0.1-0.3 s of silence. Peak-normalized
/// to 0.9.
pub fn speech_like<R: Rng + ?Sized>(len: usize, sample_rate: u32, rng: &mut R) -> Result<Waveform> {
    let fs = sample_rate as f64;
    let syl = syllables(len, fs, rng);
    let ramp = (0.02 * fs) as usize;
    let mut env = vec![0.0; len];
    let mut f1 = vec![500.0; len];
    let mut f2 = vec![1500.0; len];
    let mut f0 = vec![0.0; len];
    for s in &syl {
        let n = s.end - s.start;
        for i in 0..n {
            f0[s.start + i] = s.f0.0 + (s.f0.1 - s.f0.0) * i as f64 / n as f64;
            let edge = i.min(n - 1 - i);
            let g = if edge < ramp {
                0.5 - 0.5 * (PI * edge as f64 / ramp as f64).cos()
            } else {
                1.0
            };
            env[s.start + i] = s.amp * g;
            f1[s.start + i] = s.f1;
            f2[s.start + i] = s.f2;
        }
    }
    let mut r1 = Resonator::default();
    let mut r2 = Resonator::default();
    let mut tilt = 0.0;
    let mut x = vec![0.0; len];
    let mut last = (f64::NAN, f64::NAN);
    let mut phase = 1.0;
    let mut glottal = 0.0;
    for n in 0..len {
        if (f1[n], f2[n]) != last {
            r1.retune(f1[n], 120.0, fs);
            r2.retune(f2[n], 180.0, fs);
            last = (f1[n], f2[n]);
        }
        let noise: f64 = StandardNormal.sample(rng);
        let e = if f0[n] > 0.0 {
            // Pulse train of unit power before the glottal low-pass.
            phase += f0[n] / fs;
            let pulse = if phase >= 1.0 {
                phase -= 1.0;
                (fs / f0[n]).sqrt()
            } else {
                0.0
            };
            glottal = GLOTTAL_POLE * glottal + (1.0 - GLOTTAL_POLE) * pulse;
            glottal + 0.1 * noise
        } else {
            phase = 1.0;
            noise
        };
        tilt = 0.7 * tilt + 0.3 * e;
        let v = 4.0 * r1.step(e) + 3.0 * r2.step(e) + 0.25 * tilt;
        x[n] = env[n] * v;
    }
    normalize_peak(&mut x, SPEECH_PEAK);
    Waveform::mono(x, sample_rate)
}

/// Stationary noise with a low-frequency tilt, RMS 0.1.
pub fn speech_shaped_noise<R: Rng + ?Sized>(
    len: usize,
    sample_rate: u32,
    rng: &mut R,
) -> Result<Waveform> {
    let mut state = 0.0;
    let mut x: Vec<f64> = (0..len)
        .map(|_| {
            let e: f64 = StandardNormal.sample(rng);
            state = 0.9 * state + e;
            0.3 * state + 0.5 * e
        })
        .collect();
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / len.max(1) as f64).sqrt();
    if rms > 0.0 {
        x.iter_mut().for_each(|v| *v *= 0.1 / rms);
    }
    Waveform::mono(x, sample_rate)
}

fn normalize_peak(x: &mut [f64], peak: f64) {
    let m = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if m > 0.0 {
        x.iter_mut().for_each(|v| *v *= peak / m);
    }
}

/// Picks up a mono far-end talker with two microphones 0.5 m apart in a
/// 6 x 5 x 3 m far-end room (T60 0.3 s), yielding a correlated stereo pair
/// peak-normalized to 0.9.
pub fn stereo_farend<R: Rng + ?Sized>(mono: &Waveform, rng: &mut R) -> Result<Waveform> {
    let room = RoomSpec::new([6.0, 5.0, 3.0], 0.3)?;
    let c = room.center();
    let mics = [
        Point3::new(c.x, c.y - 0.25, 1.5),
        Point3::new(c.x, c.y + 0.25, 1.5),
    ];
    let angle = rng.random_range(0.0..2.0 * PI);
    let talker = Point3::new(c.x + 1.5 * angle.cos(), c.y + 1.5 * angle.sin(), 1.6);
    let opts = RirOptions {
        sample_rate: mono.sample_rate(),
        ..RirOptions::default()
    };
    let mut channels = Vec::with_capacity(2);
    for mic in mics {
        let rir = image_rir(&room, talker, mic, &opts)?;
        channels.push(crate::room::convolve_samples(mono.channel(0), &rir.taps));
    }
    let peak = channels
        .iter()
        .flatten()
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        channels
            .iter_mut()
            .for_each(|c| c.iter_mut().for_each(|v| *v *= SPEECH_PEAK / peak));
    }
    Waveform::new(channels, mono.sample_rate())
}
