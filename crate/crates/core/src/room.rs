//! Shoebox-room impulse responses via the image-source method, FFT-based
//! convolution, and the microphone/loudspeaker layouts used by the echo
//! scenes.
//!
//! Walls share one frequency-independent reflection coefficient derived from
//! T60 with Sabine's formula. Image sources whose arrival falls past the last
//! tap are skipped, so the effective reflection order adapts to the RIR length.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{read_wav, write_wav, WavFormat, Waveform};

pub const DEFAULT_RIR_LEN: usize = 512;
pub const DEFAULT_SPEED_OF_SOUND: f64 = 343.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2))
            .sqrt()
    }

    fn offset(&self, dx: f64, dy: f64, dz: f64) -> Point3 {
        Point3::new(self.x + dx, self.y + dy, self.z + dz)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    /// Width, length, height in meters.
    pub dims: [f64; 3],
    pub t60: f64,
    pub speed_of_sound: f64,
}

impl RoomSpec {
    pub fn new(dims: [f64; 3], t60: f64) -> Result<Self> {
        Self::with_speed_of_sound(dims, t60, DEFAULT_SPEED_OF_SOUND)
    }

    pub fn with_speed_of_sound(dims: [f64; 3], t60: f64, speed_of_sound: f64) -> Result<Self> {
        let room = Self {
            dims,
            t60,
            speed_of_sound,
        };
        room.validate()?;
        Ok(room)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(Error::InvalidRoom(format!("dimensions {:?}", self.dims)));
        }
        if !(self.t60 > 0.0 && self.t60.is_finite()) {
            return Err(Error::InvalidRoom(format!("t60 {}", self.t60)));
        }
        if !(self.speed_of_sound > 0.0) {
            return Err(Error::InvalidRoom(format!(
                "speed of sound {}",
                self.speed_of_sound
            )));
        }
        let absorption = self.sabine_absorption();
        if !(absorption > 0.0 && absorption <= 1.0) {
            return Err(Error::UnrealizableRoom {
                t60: self.t60,
                absorption,
            });
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        self.dims.iter().product()
    }

    pub fn surface(&self) -> f64 {
        let [a, b, c] = self.dims;
        2.0 * (a * b + a * c + b * c)
    }

    /// Average absorption `24 ln(10) V / (c S T60)`.
    pub fn sabine_absorption(&self) -> f64 {
        24.0 * std::f64::consts::LN_10 * self.volume()
            / (self.speed_of_sound * self.surface() * self.t60)
    }

    pub fn reflection_coefficient(&self) -> f64 {
        (1.0 - self.sabine_absorption()).sqrt()
    }

    pub fn center(&self) -> Point3 {
        Point3::new(self.dims[0] / 2.0, self.dims[1] / 2.0, self.dims[2] / 2.0)
    }

    pub fn contains(&self, p: &Point3) -> bool {
        let inside = |v: f64, d: f64| v > 0.0 && v < d;
        inside(p.x, self.dims[0]) && inside(p.y, self.dims[1]) && inside(p.z, self.dims[2])
    }

    fn require_inside(&self, p: &Point3) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(Error::OutsideRoom {
                x: p.x,
                y: p.y,
                z: p.z,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayInterpolation {
    /// Each image lands on its nearest tap.
    Nearest,
    /// Hann-windowed sinc spread over `SINC_HALF_WIDTH` taps either side.
    Sinc,
}

const SINC_HALF_WIDTH: i64 = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RirOptions {
    pub len: usize,
    pub sample_rate: u32,
    /// Upper bound on total reflection count per image; `None` keeps every
    /// image that arrives inside the RIR window.
    pub max_order: Option<usize>,
    pub interpolation: DelayInterpolation,
    /// Replaces the Sabine-derived wall reflection coefficient (0 = free field).
    pub reflection_override: Option<f64>,
}

impl Default for RirOptions {
    fn default() -> Self {
        Self {
            len: DEFAULT_RIR_LEN,
            sample_rate: 16000,
            max_order: None,
            interpolation: DelayInterpolation::Nearest,
            reflection_override: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rir {
    pub taps: Vec<f64>,
    pub sample_rate: u32,
    pub src: Point3,
    pub mic: Point3,
}

impl Rir {
    /// Direct-path delay in (fractional) samples.
    pub fn direct_delay(&self, speed_of_sound: f64) -> f64 {
        self.src.distance(&self.mic) / speed_of_sound * self.sample_rate as f64
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t * t).sum()
    }

    /// Float32 WAV of the taps plus a JSON sidecar (`<path>.json`) with geometry.
    pub fn save(&self, wav_path: impl AsRef<Path>) -> Result<()> {
        let wav_path = wav_path.as_ref();
        let w = Waveform::mono(self.taps.clone(), self.sample_rate)?;
        write_wav(wav_path, &w, WavFormat::Float32)?;
        let meta = RirSidecar {
            sample_rate: self.sample_rate,
            len: self.taps.len(),
            src: self.src,
            mic: self.mic,
        };
        let side = sidecar_path(wav_path);
        let text = serde_json::to_string_pretty(&meta).map_err(|source| Error::Json {
            path: side.clone(),
            source,
        })?;
        std::fs::write(&side, text).map_err(|e| Error::io(&side, e))
    }

    pub fn load(wav_path: impl AsRef<Path>) -> Result<Rir> {
        let wav_path = wav_path.as_ref();
        let w = read_wav(wav_path)?;
        let side = sidecar_path(wav_path);
        let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let meta: RirSidecar = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: side.clone(),
            source,
        })?;
        if meta.len != w.len() || meta.sample_rate != w.sample_rate() {
            return Err(Error::DimensionMismatch(format!(
                "sidecar says {} taps @ {} Hz, wav has {} @ {}",
                meta.len,
                meta.sample_rate,
                w.len(),
                w.sample_rate()
            )));
        }
        Ok(Rir {
            taps: w.into_channels().swap_remove(0),
            sample_rate: meta.sample_rate,
            src: meta.src,
            mic: meta.mic,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct RirSidecar {
    sample_rate: u32,
    len: usize,
    src: Point3,
    mic: Point3,
}

fn sidecar_path(wav: &Path) -> std::path::PathBuf {
    let mut s = wav.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

/// Image-source RIR from `src` to `mic`.
pub fn image_rir(room: &RoomSpec, src: Point3, mic: Point3, opts: &RirOptions) -> Result<Rir> {
    room.validate()?;
    room.require_inside(&src)?;
    room.require_inside(&mic)?;
    if src.distance(&mic) == 0.0 {
        return Err(Error::Geometry("source and microphone coincide".into()));
    }
    let fs = opts.sample_rate as f64;
    let c = room.speed_of_sound;
    let direct = src.distance(&mic) / c * fs;
    if (opts.len as f64) <= direct {
        return Err(Error::Geometry(format!(
            "RIR length {} does not reach direct-path delay {direct:.1}",
            opts.len
        )));
    }
    let beta = opts
        .reflection_override
        .unwrap_or_else(|| room.reflection_coefficient());
    let [a, b, h] = room.dims;
    let max_dist = opts.len as f64 / fs * c + 2.0 * SINC_HALF_WIDTH as f64 / fs * c;
    let range = |d: f64| (max_dist / (2.0 * d)).ceil() as i64 + 1;
    let (nx, ny, nz) = (range(a), range(b), range(h));

    let mut taps = vec![0.0; opts.len];
    let srcv = [src.x, src.y, src.z];
    let micv = [mic.x, mic.y, mic.z];
    for l in -nx..=nx {
        for m in -ny..=ny {
            for n in -nz..=nz {
                for u in 0..2_i64 {
                    for v in 0..2_i64 {
                        for w in 0..2_i64 {
                            let idx = [l, m, n];
                            let par = [u, v, w];
                            let mut dist2 = 0.0;
                            let mut order = 0_i64;
                            for axis in 0..3 {
                                let q = par[axis];
                                let k = idx[axis];
                                let image = (1 - 2 * q) as f64 * srcv[axis]
                                    + 2.0 * k as f64 * room.dims[axis];
                                dist2 += (image - micv[axis]).powi(2);
                                order += (k - q).abs() + k.abs();
                            }
                            if let Some(mo) = opts.max_order {
                                if order as usize > mo {
                                    continue;
                                }
                            }
                            let gain = if order == 0 {
                                1.0
                            } else if beta == 0.0 {
                                continue;
                            } else {
                                beta.powi(order as i32)
                            };
                            let dist = dist2.sqrt();
                            let delay = dist / c * fs;
                            let amp = gain / (4.0 * PI * dist);
                            place_impulse(&mut taps, delay, amp, opts.interpolation);
                        }
                    }
                }
            }
        }
    }
    Ok(Rir {
        taps,
        sample_rate: opts.sample_rate,
        src,
        mic,
    })
}

fn place_impulse(taps: &mut [f64], delay: f64, amp: f64, interp: DelayInterpolation) {
    let len = taps.len() as i64;
    match interp {
        DelayInterpolation::Nearest => {
            let k = delay.round() as i64;
            if (0..len).contains(&k) {
                taps[k as usize] += amp;
            }
        }
        DelayInterpolation::Sinc => {
            let centre = delay.round() as i64;
            for k in centre - SINC_HALF_WIDTH..=centre + SINC_HALF_WIDTH {
                if !(0..len).contains(&k) {
                    continue;
                }
                let t = k as f64 - delay;
                let sinc = if t.abs() < 1e-12 {
                    1.0
                } else {
                    (PI * t).sin() / (PI * t)
                };
                let win = 0.5 * (1.0 + (PI * t / (SINC_HALF_WIDTH as f64 + 1.0)).cos());
                taps[k as usize] += amp * sinc * win;
            }
        }
    }
}

/// Linear convolution of `x` with `h`, truncated to `x.len()` samples.
/// Output before the first nonzero input sample is exactly zero.
pub fn convolve_samples(x: &[f64], h: &[f64]) -> Vec<f64> {
    let Some(lead) = x.iter().position(|v| *v != 0.0) else {
        return vec![0.0; x.len()];
    };
    if h.is_empty() {
        return vec![0.0; x.len()];
    }
    if lead > 0 {
        let mut out = vec![0.0; lead];
        out.extend(convolve_samples(&x[lead..], h));
        return out;
    }
    let full = x.len() + h.len() - 1;
    let n = full.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut xa: Vec<Complex64> = (0..n)
        .map(|i| Complex64::new(x.get(i).copied().unwrap_or(0.0), 0.0))
        .collect();
    let mut ha: Vec<Complex64> = (0..n)
        .map(|i| Complex64::new(h.get(i).copied().unwrap_or(0.0), 0.0))
        .collect();
    fwd.process(&mut xa);
    fwd.process(&mut ha);
    for (a, b) in xa.iter_mut().zip(&ha) {
        *a *= b;
    }
    inv.process(&mut xa);
    let scale = 1.0 / n as f64;
    xa.iter().take(x.len()).map(|c| c.re * scale).collect()
}

/// Convolves every channel of `w` with `rir`; output keeps the input length.
pub fn convolve(w: &Waveform, rir: &Rir) -> Result<Waveform> {
    if w.sample_rate() != rir.sample_rate {
        return Err(Error::SampleRateMismatch(w.sample_rate(), rir.sample_rate));
    }
    Waveform::new(
        w.channels()
            .iter()
            .map(|c| convolve_samples(c, &rir.taps))
            .collect(),
        w.sample_rate(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub mic_positions: Vec<Point3>,
    pub loudspeaker_positions: Vec<Point3>,
    pub nearend_position: Point3,
}

impl ArrayGeometry {
    pub fn mic_centroid(&self) -> Point3 {
        let n = self.mic_positions.len() as f64;
        let (x, y, z) = self
            .mic_positions
            .iter()
            .fold((0.0, 0.0, 0.0), |acc, p| (acc.0 + p.x, acc.1 + p.y, acc.2 + p.z));
        Point3::new(x / n, y / n, z / n)
    }

    pub fn check_inside(&self, room: &RoomSpec) -> Result<()> {
        self.mic_positions
            .iter()
            .chain(&self.loudspeaker_positions)
            .chain(std::iter::once(&self.nearend_position))
            .try_for_each(|p| room.require_inside(p))
    }
}

/// Height of the two-microphone/two-loudspeaker rig; the nominal `c` coordinate.
pub const MCAEC_RIG_HEIGHT: f64 = 1.5;
pub const MCAEC_MIC_HALF_SPACING: f64 = 0.05;
pub const MCAEC_SPEAKER_HALF_SPACING: f64 = 0.6;
pub const MCAEC_SPEAKER_RISE: f64 = 0.5;
pub const NEAREND_DISTANCE: f64 = 1.0;
pub const MMAEC_MICS: usize = 4;
pub const MMAEC_SPACING: f64 = 0.04;
pub const MMAEC_SPEAKER_DISTANCE: f64 = 0.6;

const PLACEMENT_ATTEMPTS: usize = 1000;

fn on_circle(centre: Point3, radius: f64, angle: f64) -> Point3 {
    centre.offset(radius * angle.cos(), radius * angle.sin(), 0.0)
}

fn random_on_circle<R: Rng + ?Sized>(
    room: &RoomSpec,
    centre: Point3,
    radius: f64,
    rng: &mut R,
) -> Result<Point3> {
    for _ in 0..PLACEMENT_ATTEMPTS {
        let p = on_circle(centre, radius, rng.random_range(0.0..2.0 * PI));
        if room.contains(&p) {
            return Ok(p);
        }
    }
    Err(Error::Geometry(format!(
        "no point at {radius} m from ({:.2}, {:.2}, {:.2}) fits in the room",
        centre.x, centre.y, centre.z
    )))
}

/// Two microphones 10 cm apart and two loudspeakers 1.2 m apart, centred in
/// the horizontal plane of the room, with the near-end talker on a random
/// bearing 1 m from the microphone pair.
pub fn mcaec_geometry<R: Rng + ?Sized>(room: &RoomSpec, rng: &mut R) -> Result<ArrayGeometry> {
    room.validate()?;
    let c = room.center();
    let base = Point3::new(c.x, c.y, MCAEC_RIG_HEIGHT);
    let mics = vec![
        base.offset(0.0, MCAEC_MIC_HALF_SPACING, 0.0),
        base.offset(0.0, -MCAEC_MIC_HALF_SPACING, 0.0),
    ];
    let speakers = vec![
        base.offset(0.0, MCAEC_SPEAKER_HALF_SPACING, MCAEC_SPEAKER_RISE),
        base.offset(0.0, -MCAEC_SPEAKER_HALF_SPACING, MCAEC_SPEAKER_RISE),
    ];
    let probe = ArrayGeometry {
        mic_positions: mics,
        loudspeaker_positions: speakers,
        nearend_position: base,
    };
    probe
        .check_inside(room)
        .map_err(|e| Error::Geometry(format!("room too small for the stereo rig: {e}")))?;
    let nearend = random_on_circle(room, base, NEAREND_DISTANCE, rng)?;
    Ok(ArrayGeometry {
        nearend_position: nearend,
        ..probe
    })
}

/// Four-microphone uniform linear array (4 cm pitch, along x) centred in the
/// room; loudspeaker 0.6 m and near-end talker 1 m from the array centre on
/// independent random bearings.
pub fn mmaec_geometry<R: Rng + ?Sized>(room: &RoomSpec, rng: &mut R) -> Result<ArrayGeometry> {
    ula_geometry(room, MMAEC_MICS, rng)
}

/// Single microphone at the room centre with the MMAEC source distances.
pub fn single_geometry<R: Rng + ?Sized>(room: &RoomSpec, rng: &mut R) -> Result<ArrayGeometry> {
    ula_geometry(room, 1, rng)
}

fn ula_geometry<R: Rng + ?Sized>(
    room: &RoomSpec,
    mics: usize,
    rng: &mut R,
) -> Result<ArrayGeometry> {
    room.validate()?;
    let c = room.center();
    let half = (mics as f64 - 1.0) / 2.0;
    let mic_positions: Vec<Point3> = (0..mics)
        .map(|i| c.offset((i as f64 - half) * MMAEC_SPACING, 0.0, 0.0))
        .collect();
    for p in &mic_positions {
        room.require_inside(p)
            .map_err(|e| Error::Geometry(format!("array does not fit: {e}")))?;
    }
    let speaker = random_on_circle(room, c, MMAEC_SPEAKER_DISTANCE, rng)?;
    let nearend = random_on_circle(room, c, NEAREND_DISTANCE, rng)?;
    Ok(ArrayGeometry {
        mic_positions,
        loudspeaker_positions: vec![speaker],
        nearend_position: nearend,
    })
}
