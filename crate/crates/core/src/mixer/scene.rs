use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    eta2_serde, noise::diffuse_noise, power_ratio_db, scale_echo_to_ser, scale_noise_to_snr,
    sef_apply, DiffuseNoiseConfig, Segment, SefConfig, Timeline, DEFAULT_SINGLE_TALK_FRACTION,
};
use crate::adaptive::half_wave_decorrelate;
use crate::error::{Error, Result};
use crate::room::{
    convolve, image_rir, mcaec_geometry, mmaec_geometry, single_geometry, ArrayGeometry, Rir,
    RirOptions, RoomSpec,
};
use crate::signal::{read_wav, write_wav, WavFormat, Waveform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setup {
    /// One loudspeaker, one microphone.
    Single,
    /// Two loudspeakers, two microphones.
    Mcaec,
    /// One loudspeaker, four-microphone linear array.
    Mmaec,
}

impl Setup {
    pub fn num_mics(self) -> usize {
        match self {
            Setup::Single => 1,
            Setup::Mcaec => 2,
            Setup::Mmaec => crate::room::MMAEC_MICS,
        }
    }

    pub fn num_loudspeakers(self) -> usize {
        match self {
            Setup::Mcaec => 2,
            Setup::Single | Setup::Mmaec => 1,
        }
    }

    pub fn geometry<R: Rng + ?Sized>(self, room: &RoomSpec, rng: &mut R) -> Result<ArrayGeometry> {
        match self {
            Setup::Single => single_geometry(room, rng),
            Setup::Mcaec => mcaec_geometry(room, rng),
            Setup::Mmaec => mmaec_geometry(room, rng),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Setup::Single => "single",
            Setup::Mcaec => "mcaec",
            Setup::Mmaec => "mmaec",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneParams {
    pub ser_db: f64,
    /// `None` leaves the scene noise-free.
    pub snr_db: Option<f64>,
    pub sef: SefConfig,
    pub single_talk_fraction: f64,
    /// Half-wave rectifier strength applied to every loudspeaker feed; 0 disables it.
    pub decorrelation_alpha: f64,
    pub rir: RirOptions,
    pub noise: DiffuseNoiseConfig,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            ser_db: 3.5,
            snr_db: Some(10.0),
            sef: SefConfig::LINEAR,
            single_talk_fraction: DEFAULT_SINGLE_TALK_FRACTION,
            decorrelation_alpha: 0.0,
            rir: RirOptions::default(),
            noise: DiffuseNoiseConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum NoiseSource {
    None,
    Diffuse,
    /// Pre-recorded multichannel noise, one channel per microphone.
    Recorded(Waveform),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneRirs {
    /// `echo[l][m]`: loudspeaker `l` to microphone `m`.
    pub echo: Vec<Vec<Rir>>,
    pub nearend: Vec<Rir>,
}

/// Fully synthesized experiment instance with every additive component kept.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub setup: Setup,
    pub room: RoomSpec,
    pub geometry: ArrayGeometry,
    pub mic_signals: Waveform,
    /// Far-end program material, one channel per loudspeaker.
    pub farend_signals: Waveform,
    /// What each loudspeaker is driven with (after decorrelation, before the SEF).
    pub loudspeaker_feeds: Waveform,
    /// Scaled echo per loudspeaker, one channel per microphone.
    pub echoes: Vec<Waveform>,
    pub nearend: Waveform,
    pub noise: Waveform,
    pub timeline: Timeline,
    pub ser_db: f64,
    pub snr_db: Option<f64>,
    pub sef: SefConfig,
    pub decorrelation_alpha: f64,
    pub echo_gain: f64,
    pub noise_gain: f64,
    pub rirs: SceneRirs,
    pub seed: Option<u64>,
}

#[allow(clippy::too_many_arguments)]
pub fn make_scene<R: Rng + ?Sized>(
    setup: Setup,
    room: &RoomSpec,
    geometry: &ArrayGeometry,
    farend: &Waveform,
    nearend: &Waveform,
    noise: NoiseSource,
    params: &SceneParams,
    rng: &mut R,
) -> Result<Scene> {
    let m_count = setup.num_mics();
    let l_count = setup.num_loudspeakers();
    if geometry.mic_positions.len() != m_count || geometry.loudspeaker_positions.len() != l_count
    {
        return Err(Error::Geometry(format!(
            "{} expects {m_count} mics / {l_count} loudspeakers, geometry has {} / {}",
            setup.name(),
            geometry.mic_positions.len(),
            geometry.loudspeaker_positions.len()
        )));
    }
    geometry.check_inside(room)?;
    if farend.num_channels() != l_count {
        return Err(Error::DimensionMismatch(format!(
            "{} far-end channels for {l_count} loudspeakers",
            farend.num_channels()
        )));
    }
    let fs = farend.sample_rate();
    if nearend.sample_rate() != fs {
        return Err(Error::SampleRateMismatch(fs, nearend.sample_rate()));
    }
    if params.rir.sample_rate != fs {
        return Err(Error::SampleRateMismatch(fs, params.rir.sample_rate));
    }
    let len = farend.len();
    let timeline = Timeline::split(len, params.single_talk_fraction);
    let dt = timeline.double_talk()?;
    timeline.farend_single_talk()?;
    if nearend.len() < dt.len() {
        return Err(Error::DimensionMismatch(format!(
            "near-end has {} samples, double talk needs {}",
            nearend.len(),
            dt.len()
        )));
    }
    let mut placed = vec![0.0; len];
    placed[dt.clone()].copy_from_slice(&nearend.channel(0)[..dt.len()]);
    let placed = Waveform::mono(placed, fs)?;

    let feeds = if params.decorrelation_alpha != 0.0 {
        Waveform::new(
            farend
                .channels()
                .iter()
                .map(|c| half_wave_decorrelate(c, params.decorrelation_alpha))
                .collect(),
            fs,
        )?
    } else {
        farend.clone()
    };
    let driven = sef_apply(&feeds, params.sef);

    let mut echo_rirs = Vec::with_capacity(l_count);
    let mut raw_echoes = Vec::with_capacity(l_count);
    for (l, spk) in geometry.loudspeaker_positions.iter().enumerate() {
        let src = driven.select(l);
        let mut rirs = Vec::with_capacity(m_count);
        let mut chans = Vec::with_capacity(m_count);
        for mic in &geometry.mic_positions {
            let rir = image_rir(room, *spk, *mic, &params.rir)?;
            chans.push(convolve(&src, &rir)?.into_channels().swap_remove(0));
            rirs.push(rir);
        }
        echo_rirs.push(rirs);
        raw_echoes.push(Waveform::new(chans, fs)?);
    }

    let mut near_rirs = Vec::with_capacity(m_count);
    let mut near_chans = Vec::with_capacity(m_count);
    for mic in &geometry.mic_positions {
        let rir = image_rir(room, geometry.nearend_position, *mic, &params.rir)?;
        near_chans.push(convolve(&placed, &rir)?.into_channels().swap_remove(0));
        near_rirs.push(rir);
    }
    let near = Waveform::new(near_chans, fs)?;

    let echo_sum = sum_all(&raw_echoes)?;
    let echo_gain = scale_echo_to_ser(&near, &echo_sum, &timeline, params.ser_db)?;
    let echoes: Vec<Waveform> = raw_echoes.iter().map(|e| e.scaled(echo_gain)).collect();

    let (noise, noise_gain) = match (params.snr_db, noise) {
        (None, _) | (_, NoiseSource::None) => (Waveform::zeros(m_count, len, fs)?, 0.0),
        (Some(snr), source) => {
            let raw = match source {
                NoiseSource::Diffuse => {
                    let cfg = DiffuseNoiseConfig {
                        rir: params.rir,
                        ..params.noise
                    };
                    diffuse_noise(geometry, room, len, &cfg, rng)?
                }
                NoiseSource::Recorded(w) => {
                    if w.num_channels() != m_count || w.len() < len {
                        return Err(Error::DimensionMismatch(format!(
                            "noise has {} channels x {} samples, scene needs {m_count} x {len}",
                            w.num_channels(),
                            w.len()
                        )));
                    }
                    Waveform::new(
                        w.channels().iter().map(|c| c[..len].to_vec()).collect(),
                        fs,
                    )?
                }
                NoiseSource::None => unreachable!(),
            };
            let g = scale_noise_to_snr(&near, &raw, &timeline, snr)?;
            (raw.scaled(g), g)
        }
    };
    let snr_db = if noise_gain > 0.0 { params.snr_db } else { None };

    let mic_signals = compose(&echoes, &near, &noise)?;
    Ok(Scene {
        setup,
        room: *room,
        geometry: geometry.clone(),
        mic_signals,
        farend_signals: farend.clone(),
        loudspeaker_feeds: feeds,
        echoes,
        nearend: near,
        noise,
        timeline,
        ser_db: params.ser_db,
        snr_db,
        sef: params.sef,
        decorrelation_alpha: params.decorrelation_alpha,
        echo_gain,
        noise_gain,
        rirs: SceneRirs {
            echo: echo_rirs,
            nearend: near_rirs,
        },
        seed: None,
    })
}

fn sum_all(parts: &[Waveform]) -> Result<Waveform> {
    let mut acc = parts
        .first()
        .ok_or(Error::MissingComponent("echo"))?
        .clone();
    for p in &parts[1..] {
        acc = acc.add(p)?;
    }
    Ok(acc)
}

/// `(sum of echoes) + near-end + noise`, always in this order.
fn compose(echoes: &[Waveform], near: &Waveform, noise: &Waveform) -> Result<Waveform> {
    sum_all(echoes)?.add(near)?.add(noise)
}

impl Scene {
    pub fn num_mics(&self) -> usize {
        self.mic_signals.num_channels()
    }

    pub fn len(&self) -> usize {
        self.mic_signals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate(&self) -> u32 {
        self.mic_signals.sample_rate()
    }

    /// Sum of all loudspeaker echoes per microphone.
    pub fn echo_total(&self) -> Result<Waveform> {
        sum_all(&self.echoes)
    }

    /// Echo plus noise per microphone.
    pub fn interference(&self) -> Result<Waveform> {
        self.echo_total()?.add(&self.noise)
    }

    /// Largest absolute deviation of the microphone signals from the sum of
    /// their components. Exactly zero for freshly built scenes.
    pub fn decomposition_residual(&self) -> Result<f64> {
        let recomposed = compose(&self.echoes, &self.nearend, &self.noise)?;
        self.mic_signals.check_same_shape(&recomposed)?;
        Ok(self
            .mic_signals
            .channels()
            .iter()
            .zip(recomposed.channels())
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max))
    }

    /// Signal-to-echo ratio over double talk at microphone `mic`.
    pub fn realized_ser_db(&self, mic: usize) -> Result<f64> {
        let dt = self.timeline.double_talk()?;
        let echo = self.echo_total()?;
        power_ratio_db(self.nearend.channel(mic), echo.channel(mic), dt)
            .ok_or(Error::ZeroEnergy("speech or echo on double talk"))
    }

    /// Signal-to-noise ratio over double talk at `mic`; `None` without noise.
    pub fn realized_snr_db(&self, mic: usize) -> Result<Option<f64>> {
        let dt = self.timeline.double_talk()?;
        Ok(power_ratio_db(self.nearend.channel(mic), self.noise.channel(mic), dt))
    }

    pub fn manifest(&self) -> SceneManifest {
        SceneManifest {
            setup: self.setup,
            sample_rate: self.sample_rate(),
            ser_db: self.ser_db,
            snr_db: self.snr_db,
            eta2: self.sef.eta2,
            segments: self.timeline.segments.clone(),
            seed: self.seed,
            room: self.room,
            geometry: self.geometry.clone(),
            decorrelation_alpha: self.decorrelation_alpha,
            echo_gain: self.echo_gain,
            noise_gain: self.noise_gain,
            num_mics: self.num_mics(),
            num_loudspeakers: self.echoes.len(),
        }
    }

    /// Writes float32 WAVs for every component, the RIRs, and `manifest.json`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let rir_dir = dir.join("rirs");
        std::fs::create_dir_all(&rir_dir).map_err(|e| Error::io(&rir_dir, e))?;
        let wav = |name: &str, w: &Waveform| write_wav(dir.join(name), w, WavFormat::Float32);
        wav("mic.wav", &self.mic_signals)?;
        wav("farend.wav", &self.farend_signals)?;
        wav("feeds.wav", &self.loudspeaker_feeds)?;
        wav("nearend.wav", &self.nearend)?;
        wav("noise.wav", &self.noise)?;
        for (l, e) in self.echoes.iter().enumerate() {
            wav(&format!("echo_l{l}.wav"), e)?;
        }
        for (l, row) in self.rirs.echo.iter().enumerate() {
            for (m, rir) in row.iter().enumerate() {
                rir.save(rir_dir.join(format!("echo_l{l}_m{m}.wav")))?;
            }
        }
        for (m, rir) in self.rirs.nearend.iter().enumerate() {
            rir.save(rir_dir.join(format!("nearend_m{m}.wav")))?;
        }
        let path = dir.join("manifest.json");
        let text =
            serde_json::to_string_pretty(&self.manifest()).map_err(|source| Error::Json {
                path: path.clone(),
                source,
            })?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    /// Loads a directory written by [`Scene::save`]. Components are stored as
    /// float32, so the decomposition holds to within float32 rounding.
    pub fn load(dir: impl AsRef<Path>) -> Result<Scene> {
        let dir = dir.as_ref();
        let manifest = SceneManifest::load(dir.join("manifest.json"))?;
        let wav = |name: &str| read_wav(dir.join(name));
        let echoes = (0..manifest.num_loudspeakers)
            .map(|l| wav(&format!("echo_l{l}.wav")))
            .collect::<Result<Vec<_>>>()?;
        let rir_dir = dir.join("rirs");
        let echo_rirs = (0..manifest.num_loudspeakers)
            .map(|l| {
                (0..manifest.num_mics)
                    .map(|m| Rir::load(rir_dir.join(format!("echo_l{l}_m{m}.wav"))))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let near_rirs = (0..manifest.num_mics)
            .map(|m| Rir::load(rir_dir.join(format!("nearend_m{m}.wav"))))
            .collect::<Result<Vec<_>>>()?;
        let scene = Scene {
            setup: manifest.setup,
            room: manifest.room,
            geometry: manifest.geometry.clone(),
            mic_signals: wav("mic.wav")?,
            farend_signals: wav("farend.wav")?,
            loudspeaker_feeds: wav("feeds.wav")?,
            echoes,
            nearend: wav("nearend.wav")?,
            noise: wav("noise.wav")?,
            timeline: Timeline {
                segments: manifest.segments.clone(),
            },
            ser_db: manifest.ser_db,
            snr_db: manifest.snr_db,
            sef: SefConfig {
                eta2: manifest.eta2,
            },
            decorrelation_alpha: manifest.decorrelation_alpha,
            echo_gain: manifest.echo_gain,
            noise_gain: manifest.noise_gain,
            rirs: SceneRirs {
                echo: echo_rirs,
                nearend: near_rirs,
            },
            seed: manifest.seed,
        };
        if scene.mic_signals.num_channels() != manifest.num_mics {
            return Err(Error::DimensionMismatch(format!(
                "mic.wav has {} channels, manifest says {}",
                scene.mic_signals.num_channels(),
                manifest.num_mics
            )));
        }
        let residual = scene.decomposition_residual()?;
        if residual > 1e-5 {
            return Err(Error::DimensionMismatch(format!(
                "stored components do not add up to mic.wav (max deviation {residual:e})"
            )));
        }
        Ok(scene)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub setup: Setup,
    pub sample_rate: u32,
    pub ser_db: f64,
    pub snr_db: Option<f64>,
    #[serde(with = "eta2_serde")]
    pub eta2: f64,
    pub segments: Vec<Segment>,
    pub seed: Option<u64>,
    pub room: RoomSpec,
    pub geometry: ArrayGeometry,
    pub decorrelation_alpha: f64,
    pub echo_gain: f64,
    pub noise_gain: f64,
    pub num_mics: usize,
    pub num_loudspeakers: usize,
}

impl SceneManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}
