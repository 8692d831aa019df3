//! Seeded scene generation for experiment cells.

use std::path::{Path, PathBuf};

use anyhow::{ensure, Context};
use echobench_core::mixer::sources::{speech_like, stereo_farend};
use echobench_core::mixer::{make_scene, NoiseSource, Scene, SceneParams, SefConfig, Setup};
use echobench_core::room::{DelayInterpolation, RirOptions};
use echobench_core::signal::{read_wav, Waveform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ExperimentConfig, NamedRoom};

/// Everything that identifies one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneKey {
    pub setup: Setup,
    pub room: NamedRoom,
    pub ser_db: f64,
    pub snr_db: Option<f64>,
    pub eta2: f64,
    pub seed: u64,
}

fn fmt_num(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v}")
    }
}

impl SceneKey {
    /// File-name-safe identifier, also used to locate external mask files.
    pub fn id(&self) -> String {
        format!(
            "{}_{}_ser{}_snr{}_e{}_s{}",
            self.setup.name(),
            self.room.name,
            fmt_num(self.ser_db),
            self.snr_db.map_or("none".to_string(), fmt_num),
            fmt_num(self.eta2),
            self.seed
        )
    }

    /// Seed for random stream `stream`. Depends on setup, room and seed but
    /// not on SER, SNR or eta2, so those sweeps share geometry and sources.
    pub fn stream_seed(&self, stream: u64) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for b in bytes {
                h ^= *b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        eat(self.setup.name().as_bytes());
        for d in self.room.dims {
            eat(&d.to_le_bytes());
        }
        eat(&self.room.t60.to_le_bytes());
        eat(&self.seed.to_le_bytes());
        eat(&stream.to_le_bytes());
        h
    }
}

/// Every scene key of `cfg`, in a fixed order.
pub fn scene_keys(cfg: &ExperimentConfig) -> Vec<SceneKey> {
    let mut keys = Vec::new();
    for room in &cfg.rooms {
        for &ser_db in &cfg.ser_db {
            for &snr_db in &cfg.snr_db {
                for &eta2 in &cfg.eta2 {
                    for &seed in &cfg.seeds {
                        keys.push(SceneKey {
                            setup: cfg.setup,
                            room: room.clone(),
                            ser_db,
                            snr_db,
                            eta2,
                            seed,
                        });
                    }
                }
            }
        }
    }
    keys
}

fn pick(files: &[PathBuf], seed: u64) -> Option<&PathBuf> {
    (!files.is_empty()).then(|| &files[(seed % files.len() as u64) as usize])
}

fn read_audio(path: &Path, fs: u32) -> anyhow::Result<Waveform> {
    let w = read_wav(path).with_context(|| format!("reading {}", path.display()))?;
    ensure!(
        w.sample_rate() == fs,
        "{} is sampled at {} Hz, experiment runs at {fs} Hz",
        path.display(),
        w.sample_rate()
    );
    Ok(w)
}

/// First channel of a talker recording, cut to `len` samples.
fn read_talker(path: &Path, len: usize, fs: u32) -> anyhow::Result<Waveform> {
    let w = read_audio(path, fs)?;
    ensure!(
        w.len() >= len,
        "{} has {} samples, the scene needs {len}",
        path.display(),
        w.len()
    );
    Ok(Waveform::mono(w.channel(0)[..len].to_vec(), fs)?)
}

const GEOMETRY_STREAM: u64 = 1;
const SOURCE_STREAM: u64 = 2;
const NOISE_STREAM: u64 = 3;

/// Builds the scene for `key` and checks its additive decomposition.
/// Talkers and noise come from `cfg.audio` when given, otherwise they are
/// synthesized (speech-like talkers, diffuse noise).
pub fn build_scene(key: &SceneKey, cfg: &ExperimentConfig) -> anyhow::Result<Scene> {
    let room = key.room.spec()?;
    let fs = cfg.sample_rate;
    let len = cfg.num_samples();
    let params = SceneParams {
        ser_db: key.ser_db,
        snr_db: key.snr_db,
        sef: SefConfig::new(key.eta2)?,
        single_talk_fraction: cfg.single_talk_fraction,
        decorrelation_alpha: cfg.decorrelation_alpha,
        rir: RirOptions {
            sample_rate: fs,
            interpolation: if cfg.fractional_delays {
                DelayInterpolation::Sinc
            } else {
                DelayInterpolation::Nearest
            },
            ..RirOptions::default()
        },
        ..SceneParams::default()
    };

    let mut geo_rng = ChaCha8Rng::seed_from_u64(key.stream_seed(GEOMETRY_STREAM));
    let geometry = key.setup.geometry(&room, &mut geo_rng)?;

    let mut src_rng = ChaCha8Rng::seed_from_u64(key.stream_seed(SOURCE_STREAM));
    let boundary = (len as f64 * cfg.single_talk_fraction).floor() as usize;
    let audio = &cfg.audio;
    let talker = match pick(&audio.farend, key.seed) {
        Some(p) => read_talker(p, len, fs)?,
        None => speech_like(len, fs, &mut src_rng)?,
    };
    let nearend = match pick(&audio.nearend, key.seed) {
        Some(p) => read_talker(p, len - boundary, fs)?,
        None => speech_like(len - boundary, fs, &mut src_rng)?,
    };
    let farend = match key.setup.num_loudspeakers() {
        1 => talker,
        _ => stereo_farend(&talker, &mut src_rng)?,
    };

    let noise = match (key.snr_db, pick(&audio.noise, key.seed)) {
        (None, _) => NoiseSource::None,
        (Some(_), None) => NoiseSource::Diffuse,
        (Some(_), Some(p)) => NoiseSource::Recorded(read_audio(p, fs)?),
    };
    let mut noise_rng = ChaCha8Rng::seed_from_u64(key.stream_seed(NOISE_STREAM));
    let mut scene = make_scene(
        key.setup,
        &room,
        &geometry,
        &farend,
        &nearend,
        noise,
        &params,
        &mut noise_rng,
    )
    .with_context(|| format!("building scene {}", key.id()))?;
    scene.seed = Some(key.seed);
    let residual = scene.decomposition_residual()?;
    ensure!(
        residual == 0.0,
        "scene {} fails its decomposition check ({residual})",
        key.id()
    );
    Ok(scene)
}
