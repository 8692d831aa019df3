use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context};
use echobench_core::beamform::BeamformMode;
use echobench_core::mixer::{eta2_serde, Setup};
use echobench_core::room::RoomSpec;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Scenes per (room, eta2) cell when no seeds are given.
pub const DEFAULT_POSITIONS_PER_ROOM: usize = 20;
pub const DEFAULT_DURATION_S: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedRoom {
    pub name: String,
    pub dims: [f64; 3],
    pub t60: f64,
}

impl NamedRoom {
    pub fn new(name: &str, dims: [f64; 3], t60: f64) -> Self {
        Self {
            name: name.to_string(),
            dims,
            t60,
        }
    }

    pub fn spec(&self) -> anyhow::Result<RoomSpec> {
        RoomSpec::new(self.dims, self.t60).with_context(|| format!("room {}", self.name))
    }
}

/// The three evaluation rooms, all at T60 0.35 s.
pub fn test_rooms() -> Vec<NamedRoom> {
    vec![
        NamedRoom::new("room1", [3.0, 4.0, 3.0], 0.35),
        NamedRoom::new("room2", [5.0, 6.0, 3.0], 0.35),
        NamedRoom::new("room3", [11.0, 14.0, 3.0], 0.35),
    ]
}

/// Training-style grid: widths 4-10 m, lengths 5-13 m, height 3 m, for
/// every T60 in `t60s`.
pub fn training_rooms(t60s: &[f64]) -> Vec<NamedRoom> {
    let mut out = Vec::new();
    for &t60 in t60s {
        for a in [4.0, 6.0, 8.0, 10.0] {
            for b in [5.0, 7.0, 9.0, 11.0, 13.0] {
                out.push(NamedRoom::new(&format!("{a}x{b}x3_t{t60}"), [a, b, 3.0], t60));
            }
        }
    }
    out
}

pub const TRAINING_T60S: [f64; 5] = [0.2, 0.3, 0.4, 0.5, 0.6];

/// Where a pipeline's masks come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MaskOrigin {
    OracleSmm,
    OracleComplex,
    File,
}

impl MaskOrigin {
    fn name(self) -> &'static str {
        match self {
            MaskOrigin::OracleSmm => "oracle_smm",
            MaskOrigin::OracleComplex => "oracle_complex",
            MaskOrigin::File => "file_mask",
        }
    }
}

/// A named processing chain. Text form: `unprocessed`, `nlms`,
/// `oracle_smm`, `oracle_complex`, `file_mask`, or a mask origin followed by
/// `+on_mic` / `+post_filter` for mask-driven MVDR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pipeline {
    Unprocessed,
    /// NLMS on the reference microphone; stereo NLMS when there are two
    /// loudspeakers.
    Nlms,
    Mask(MaskOrigin),
    Beamform(MaskOrigin, BeamformMode),
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pipeline::Unprocessed => f.write_str("unprocessed"),
            Pipeline::Nlms => f.write_str("nlms"),
            Pipeline::Mask(o) => f.write_str(o.name()),
            Pipeline::Beamform(o, BeamformMode::OnMic) => write!(f, "{}+on_mic", o.name()),
            Pipeline::Beamform(o, BeamformMode::PostFilter) => {
                write!(f, "{}+post_filter", o.name())
            }
        }
    }
}

impl FromStr for Pipeline {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        let origin = |name: &str| -> anyhow::Result<MaskOrigin> {
            Ok(match name {
                "oracle_smm" => MaskOrigin::OracleSmm,
                "oracle_complex" => MaskOrigin::OracleComplex,
                "file_mask" => MaskOrigin::File,
                other => bail!("unknown mask source {other:?}"),
            })
        };
        Ok(match s.split_once('+') {
            None => match s {
                "unprocessed" => Pipeline::Unprocessed,
                "nlms" | "stereo_nlms" => Pipeline::Nlms,
                other => Pipeline::Mask(origin(other)?),
            },
            Some((o, "on_mic")) => Pipeline::Beamform(origin(o)?, BeamformMode::OnMic),
            Some((o, "post_filter")) => Pipeline::Beamform(origin(o)?, BeamformMode::PostFilter),
            Some((_, mode)) => bail!("unknown beamformer mode {mode:?}"),
        })
    }
}

impl Serialize for Pipeline {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Pipeline {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteeringChoice {
    UnitNorm,
    Reference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NlmsSettings {
    pub taps: usize,
    pub step_size: f64,
    pub regularization: f64,
}

impl Default for NlmsSettings {
    fn default() -> Self {
        let d = echobench_core::adaptive::NlmsConfig::default();
        Self {
            taps: d.taps,
            step_size: d.step_size,
            regularization: d.regularization,
        }
    }
}

fn serialize_eta2s<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
    #[derive(Serialize)]
    struct Wrap(#[serde(with = "eta2_serde")] f64);
    s.collect_seq(v.iter().map(|&x| Wrap(x)))
}

fn deserialize_eta2s<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
    #[derive(Deserialize)]
    struct Wrap(#[serde(with = "eta2_serde")] f64);
    Ok(Vec::<Wrap>::deserialize(d)?.into_iter().map(|w| w.0).collect())
}

/// User-supplied audio replacing the synthetic talkers and diffuse noise.
/// Scene `seed` uses file `seed % len` of each list. Files are read at the
/// experiment sample rate; only their first channel is used for talkers.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AudioSources {
    pub farend: Vec<PathBuf>,
    pub nearend: Vec<PathBuf>,
    /// Multichannel recordings, one channel per microphone.
    pub noise: Vec<PathBuf>,
}

/// One experiment: every combination of room, SER, SNR and eta2 forms a
/// cell, and every seed in a cell is one scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub setup: Setup,
    pub rooms: Vec<NamedRoom>,
    pub ser_db: Vec<f64>,
    /// `null` entries build noise-free scenes.
    pub snr_db: Vec<Option<f64>>,
    #[serde(serialize_with = "serialize_eta2s", deserialize_with = "deserialize_eta2s")]
    pub eta2: Vec<f64>,
    pub seeds: Vec<u64>,
    pub pipelines: Vec<Pipeline>,
    pub duration_s: f64,
    pub sample_rate: u32,
    pub single_talk_fraction: f64,
    pub decorrelation_alpha: f64,
    /// Windowed-sinc fractional delays in the RIRs instead of nearest-sample.
    pub fractional_delays: bool,
    pub audio: AudioSources,
    pub nlms: NlmsSettings,
    pub steering: SteeringChoice,
    pub mask_dir: Option<PathBuf>,
    /// Where enhanced WAVs are kept when `keep_wavs` is set.
    pub output_dir: Option<PathBuf>,
    pub keep_wavs: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            setup: Setup::Mmaec,
            rooms: test_rooms(),
            ser_db: vec![3.5],
            snr_db: vec![Some(10.0)],
            eta2: vec![f64::INFINITY],
            seeds: (0..DEFAULT_POSITIONS_PER_ROOM as u64).collect(),
            pipelines: vec![Pipeline::Unprocessed, Pipeline::Mask(MaskOrigin::OracleSmm)],
            duration_s: DEFAULT_DURATION_S,
            sample_rate: 16000,
            single_talk_fraction: echobench_core::mixer::DEFAULT_SINGLE_TALK_FRACTION,
            decorrelation_alpha: 0.0,
            fractional_delays: false,
            audio: AudioSources::default(),
            nlms: NlmsSettings::default(),
            steering: SteeringChoice::Reference,
            mask_dir: None,
            output_dir: None,
            keep_wavs: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.rooms.is_empty()
            || self.ser_db.is_empty()
            || self.snr_db.is_empty()
            || self.eta2.is_empty()
            || self.seeds.is_empty()
            || self.pipelines.is_empty()
        {
            bail!("rooms, ser_db, snr_db, eta2, seeds and pipelines must all be nonempty");
        }
        let unique: HashSet<_> = self.seeds.iter().collect();
        if unique.len() != self.seeds.len() {
            bail!("seeds must be unique");
        }
        for r in &self.rooms {
            r.spec()?;
        }
        for &e in &self.eta2 {
            echobench_core::mixer::SefConfig::new(e)?;
        }
        if !(self.duration_s > 0.0) {
            bail!("duration must be positive");
        }
        let uses_files = self.pipelines.iter().any(|p| {
            matches!(
                p,
                Pipeline::Mask(MaskOrigin::File) | Pipeline::Beamform(MaskOrigin::File, _)
            )
        });
        if uses_files && self.mask_dir.is_none() {
            bail!("file_mask pipelines need mask_dir");
        }
        if self.keep_wavs && self.output_dir.is_none() {
            bail!("keep_wavs needs output_dir");
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> anyhow::Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text)
            .with_context(|| format!("parsing {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn num_samples(&self) -> usize {
        (self.duration_s * self.sample_rate as f64).round() as usize
    }
}
