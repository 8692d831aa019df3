//! Processing chains applied to a built scene.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use echobench_core::adaptive::{multichannel_nlms_cancel, NlmsConfig};
use echobench_core::beamform::{
    apply_beamformer, mvdr_from_estimate, BeamformMode, MvdrConfig, SteeringScale,
};
use echobench_core::masking::{apply_mask, load_masks, oracle_complex, oracle_smm, MaskSet};
use echobench_core::mixer::Scene;
use echobench_core::signal::{istft, stft, Spectrogram, StftConfig, Waveform};

use crate::config::{ExperimentConfig, MaskOrigin, Pipeline, SteeringChoice};

/// Microphone every single-channel output and every score refers to.
pub const REFERENCE_MIC: usize = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    /// `"ref"` for reference-microphone outputs, `"bf"` for beamformer outputs.
    pub channel: &'static str,
    /// `None` for the unprocessed pipeline.
    pub enhanced: Option<Waveform>,
    /// Frequency bins where the beamformer fell back to the reference mic.
    pub fallback_bins: usize,
}

/// External mask file for microphone `mic` (0-based) of a scene:
/// `<dir>/<scene_id>_mic<mic+1>.msk`.
pub fn mask_file_path(dir: &Path, scene_id: &str, mic: usize) -> PathBuf {
    dir.join(format!("{scene_id}_mic{}.msk", mic + 1))
}

fn masks_for(
    origin: MaskOrigin,
    scene: &Scene,
    scene_id: &str,
    y: &Spectrogram,
    mics: &[usize],
    cfg: &ExperimentConfig,
) -> anyhow::Result<MaskSet> {
    match origin {
        MaskOrigin::OracleSmm | MaskOrigin::OracleComplex => {
            let s = stft(&select(&scene.nearend, mics)?, &y.config)?;
            Ok(match origin {
                MaskOrigin::OracleSmm => oracle_smm(&s, y)?,
                _ => oracle_complex(&s),
            })
        }
        MaskOrigin::File => {
            let dir = cfg.mask_dir.as_deref().context("file_mask needs mask_dir")?;
            let parts = mics
                .iter()
                .map(|&m| {
                    let p = mask_file_path(dir, scene_id, m);
                    let set = load_masks(&p).with_context(|| format!("loading {}", p.display()))?;
                    if set.channels != 1 {
                        bail!("{} holds {} channels, expected 1", p.display(), set.channels);
                    }
                    Ok(set)
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            Ok(MaskSet::stack(&parts)?)
        }
    }
}

fn select(w: &Waveform, mics: &[usize]) -> anyhow::Result<Waveform> {
    Ok(Waveform::new(
        mics.iter().map(|&m| w.channel(m).to_vec()).collect(),
        w.sample_rate(),
    )?)
}

pub fn nlms_config(cfg: &ExperimentConfig) -> NlmsConfig {
    NlmsConfig {
        taps: cfg.nlms.taps,
        step_size: cfg.nlms.step_size,
        regularization: cfg.nlms.regularization,
        trace_interval: None,
    }
}

pub fn run_pipeline(
    pipeline: Pipeline,
    scene: &Scene,
    scene_id: &str,
    cfg: &ExperimentConfig,
) -> anyhow::Result<PipelineOutput> {
    let stft_cfg = StftConfig::default();
    let out = |channel, enhanced, fallback_bins| PipelineOutput {
        channel,
        enhanced: Some(enhanced),
        fallback_bins,
    };
    match pipeline {
        Pipeline::Unprocessed => Ok(PipelineOutput {
            channel: "ref",
            enhanced: None,
            fallback_bins: 0,
        }),
        Pipeline::Nlms => {
            let mic = scene.mic_signals.select(REFERENCE_MIC);
            let res = multichannel_nlms_cancel(&mic, &scene.loudspeaker_feeds, &nlms_config(cfg))?;
            Ok(out("ref", res.error, 0))
        }
        Pipeline::Mask(origin) => {
            let y = stft(&scene.mic_signals.select(REFERENCE_MIC), &stft_cfg)?;
            let masks = masks_for(origin, scene, scene_id, &y, &[REFERENCE_MIC], cfg)?;
            Ok(out("ref", istft(&apply_mask(&y, &masks)?)?, 0))
        }
        Pipeline::Beamform(origin, mode) => {
            let m = scene.num_mics();
            if m < 2 {
                bail!("beamforming needs at least two microphones, scene has {m}");
            }
            let y = stft(&scene.mic_signals, &stft_cfg)?;
            let all: Vec<usize> = (0..m).collect();
            let masks = masks_for(origin, scene, scene_id, &y, &all, cfg)?;
            let s_hat = apply_mask(&y, &masks)?;
            let scale = match cfg.steering {
                SteeringChoice::UnitNorm => SteeringScale::UnitNorm,
                SteeringChoice::Reference => SteeringScale::Reference,
            };
            let w = mvdr_from_estimate(&s_hat, &y, REFERENCE_MIC, scale, &MvdrConfig::default())?;
            let input = match mode {
                BeamformMode::OnMic => &y,
                BeamformMode::PostFilter => &s_hat,
            };
            let bf = apply_beamformer(&w, input, mode)?;
            Ok(out("bf", istft(&bf)?, w.fallback_bins.len()))
        }
    }
}
