//! Feature export for external mask estimators.
//!
//! For each exported (scene, microphone j) pair three tensor files are
//! written in the mask-file format, all with the same frames and bins:
//!
//! * `<scene_id>_mic<j>.feat.msk`: real magnitudes, channels `[Y_j, X_1, .., X_L]`
//! * `<scene_id>_mic<j>.spec.msk`: the same channels as complex spectra
//! * `<scene_id>_mic<j>.target.msk`: oracle magnitude mask of microphone j
//!
//! `manifest.json` lists every entry. Microphone indices are 1-based. A
//! mask estimator answers with `<scene_id>_mic<j>.msk` files, which the
//! `file_mask` pipelines pick up from the mask directory.

use std::path::{Path, PathBuf};

use anyhow::Context;
use echobench_core::masking::{oracle_smm, save_masks, MaskSet, MaskSource};
use echobench_core::signal::{stft, StftConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::scenes::{build_scene, scene_keys};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MicSelection {
    /// One microphone per scene, drawn uniformly with a seed-determined RNG.
    Random,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub scene_id: String,
    pub setup: String,
    /// 1-based microphone index.
    pub mic: usize,
    pub input_channels: Vec<String>,
    pub features: PathBuf,
    pub spectra: PathBuf,
    pub target: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureManifest {
    pub sample_rate: u32,
    pub frame_len: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub entries: Vec<FeatureEntry>,
}

impl FeatureManifest {
    pub fn load(path: impl AsRef<Path>) -> anyhow::Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

const MIC_PICK_STREAM: u64 = 4;

/// Writes features, spectra and targets for every scene of `cfg` into
/// `out_dir`, returning the manifest (also saved as `manifest.json`).
pub fn export_features(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    selection: MicSelection,
) -> anyhow::Result<FeatureManifest> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let stft_cfg = StftConfig::default();
    let keys = scene_keys(cfg);
    let per_scene: Vec<Vec<FeatureEntry>> = keys
        .par_iter()
        .map(|key| -> anyhow::Result<Vec<FeatureEntry>> {
            let scene = build_scene(key, cfg)?;
            let id = key.id();
            let m = scene.num_mics();
            let mics: Vec<usize> = match selection {
                MicSelection::All => (0..m).collect(),
                MicSelection::Random => {
                    let mut rng = ChaCha8Rng::seed_from_u64(key.stream_seed(MIC_PICK_STREAM));
                    vec![rng.random_range(0..m)]
                }
            };
            let x = stft(&scene.loudspeaker_feeds, &stft_cfg)?;
            let y = stft(&scene.mic_signals, &stft_cfg)?;
            let s = stft(&scene.nearend, &stft_cfg)?;
            mics.iter()
                .map(|&j| {
                    let yj = y.select_channel(j);
                    let inputs: Vec<_> = std::iter::once(yj.clone())
                        .chain((0..x.num_channels()).map(|l| x.select_channel(l)))
                        .collect();
                    let stacked = ndarray::concatenate(
                        ndarray::Axis(2),
                        &inputs.iter().map(|sp| sp.data.view()).collect::<Vec<_>>(),
                    )?;
                    let mags = stacked.mapv(|c| c.norm());
                    let stem = format!("{id}_mic{}", j + 1);
                    let entry = FeatureEntry {
                        scene_id: id.clone(),
                        setup: key.setup.name().to_string(),
                        mic: j + 1,
                        input_channels: std::iter::once(format!("y{}", j + 1))
                            .chain((1..=x.num_channels()).map(|l| format!("x{l}")))
                            .collect(),
                        features: PathBuf::from(format!("{stem}.feat.msk")),
                        spectra: PathBuf::from(format!("{stem}.spec.msk")),
                        target: PathBuf::from(format!("{stem}.target.msk")),
                    };
                    save_masks(
                        &MaskSet::from_real(&mags, MaskSource::Oracle),
                        out_dir.join(&entry.features),
                    )?;
                    save_masks(
                        &MaskSet::from_complex(&stacked, MaskSource::Oracle),
                        out_dir.join(&entry.spectra),
                    )?;
                    save_masks(
                        &oracle_smm(&s.select_channel(j), &yj)?,
                        out_dir.join(&entry.target),
                    )?;
                    Ok(entry)
                })
                .collect()
        })
        .collect::<anyhow::Result<_>>()?;
    let manifest = FeatureManifest {
        sample_rate: cfg.sample_rate,
        frame_len: stft_cfg.frame_len,
        hop: stft_cfg.hop,
        fft_size: stft_cfg.fft_size,
        entries: per_scene.into_iter().flatten().collect(),
    };
    let path = out_dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(manifest)
}
