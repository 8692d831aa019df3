//! Runs every pipeline on every scene of a config and aggregates the scores.

use std::path::Path;

use anyhow::Context;
use echobench_core::metrics::{score, si_sdr_over, ScoreReport};
use echobench_core::mixer::{eta2_serde, Scene};
use echobench_core::signal::{write_wav, WavFormat};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Pipeline};
use crate::pipelines::{run_pipeline, PipelineOutput, REFERENCE_MIC};
use crate::scenes::{build_scene, scene_keys, SceneKey};

/// Scores of one pipeline on one scene, or the reason it failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneScore {
    pub scene_id: String,
    pub room: String,
    pub ser_db: f64,
    pub snr_db: Option<f64>,
    #[serde(with = "eta2_serde")]
    pub eta2: f64,
    pub seed: u64,
    pub pipeline: Pipeline,
    pub channel: String,
    pub report: Option<ScoreReport>,
    /// SI-SDR of the unprocessed reference microphone on the same scene.
    pub baseline_si_sdr_db: Option<f64>,
    pub fallback_bins: usize,
    pub error: Option<String>,
}

impl SceneScore {
    pub fn si_sdr_gain_db(&self) -> Option<f64> {
        Some(self.report.as_ref()?.si_sdr_db? - self.baseline_si_sdr_db?)
    }

    pub fn metric(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::Erle => self.report.as_ref()?.erle_db,
            Metric::SiSdr => self.report.as_ref()?.si_sdr_db,
            Metric::SiSdrGain => self.si_sdr_gain_db(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Erle,
    SiSdr,
    SiSdrGain,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Erle, Metric::SiSdr, Metric::SiSdrGain];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Erle => "erle_db",
            Metric::SiSdr => "si_sdr_db",
            Metric::SiSdrGain => "si_sdr_gain_db",
        }
    }
}

/// Mean of one metric over the scenes of one (room, SER, SNR, eta2,
/// pipeline) cell. `mean` is absent when no scene produced the metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub room: String,
    pub ser_db: f64,
    pub snr_db: Option<f64>,
    #[serde(with = "eta2_serde")]
    pub eta2: f64,
    pub pipeline: Pipeline,
    pub channel: String,
    pub metric: Metric,
    pub mean: Option<f64>,
    pub n: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub scores: Vec<SceneScore>,
    pub rows: Vec<ResultRow>,
}

fn scores_for_scene(
    key: &SceneKey,
    scene: &anyhow::Result<Scene>,
    cfg: &ExperimentConfig,
) -> Vec<SceneScore> {
    let id = key.id();
    let blank = |pipeline: Pipeline, error: Option<String>| SceneScore {
        scene_id: id.clone(),
        room: key.room.name.clone(),
        ser_db: key.ser_db,
        snr_db: key.snr_db,
        eta2: key.eta2,
        seed: key.seed,
        pipeline,
        channel: String::new(),
        report: None,
        baseline_si_sdr_db: None,
        fallback_bins: 0,
        error,
    };
    let scene = match scene {
        Ok(s) => s,
        Err(e) => {
            let msg = format!("{e:#}");
            return cfg
                .pipelines
                .iter()
                .map(|&p| blank(p, Some(msg.clone())))
                .collect();
        }
    };
    let mic = scene.mic_signals.channel(REFERENCE_MIC);
    let reference = scene.nearend.channel(REFERENCE_MIC);
    let baseline = scene
        .timeline
        .double_talk()
        .ok()
        .and_then(|dt| si_sdr_over(reference, mic, dt).ok());
    let realized_ser = scene.realized_ser_db(REFERENCE_MIC).ok();
    let realized_snr = scene.realized_snr_db(REFERENCE_MIC).ok().flatten();
    cfg.pipelines
        .iter()
        .map(|&p| {
            let result = run_pipeline(p, scene, &id, cfg).and_then(|out| {
                keep_output(cfg, &id, p, &out)?;
                let mut report = score(
                    mic,
                    out.enhanced.as_ref().map(|w| w.channel(0)),
                    reference,
                    &scene.timeline,
                )?;
                report.realized_ser_db = realized_ser;
                report.realized_snr_db = realized_snr;
                Ok((out, report))
            });
            match result {
                Ok((out, report)) => SceneScore {
                    channel: out.channel.to_string(),
                    report: Some(report),
                    baseline_si_sdr_db: baseline,
                    fallback_bins: out.fallback_bins,
                    ..blank(p, None)
                },
                Err(e) => blank(p, Some(format!("{e:#}"))),
            }
        })
        .collect()
}

fn keep_output(
    cfg: &ExperimentConfig,
    id: &str,
    p: Pipeline,
    out: &PipelineOutput,
) -> anyhow::Result<()> {
    if !cfg.keep_wavs {
        return Ok(());
    }
    let (Some(dir), Some(w)) = (&cfg.output_dir, &out.enhanced) else {
        return Ok(());
    };
    let dir = dir.join("enhanced");
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    write_wav(dir.join(format!("{id}_{p}.wav")), w, WavFormat::Float32)?;
    Ok(())
}

/// Builds every scene, runs every pipeline and aggregates. Scenes run in
/// parallel; results come back in config order regardless of scheduling.
/// A failing scene or pipeline is recorded in its score, not propagated.
pub fn run_experiment(cfg: &ExperimentConfig) -> anyhow::Result<ExperimentResult> {
    cfg.validate()?;
    let keys = scene_keys(cfg);
    let per_scene: Vec<Vec<SceneScore>> = keys
        .par_iter()
        .map(|key| {
            let scene = build_scene(key, cfg).and_then(|s| {
                if cfg.keep_wavs {
                    if let Some(dir) = &cfg.output_dir {
                        s.save(dir.join("scenes").join(key.id()))?;
                    }
                }
                Ok(s)
            });
            scores_for_scene(key, &scene, cfg)
        })
        .collect();
    let scores: Vec<SceneScore> = per_scene.into_iter().flatten().collect();
    let rows = aggregate(&scores);
    Ok(ExperimentResult { scores, rows })
}

/// One row per (cell, pipeline, metric), in first-appearance order.
pub fn aggregate(scores: &[SceneScore]) -> Vec<ResultRow> {
    type CellKey = (String, u64, Option<u64>, u64, Pipeline);
    let key_of = |s: &SceneScore| -> CellKey {
        (
            s.room.clone(),
            s.ser_db.to_bits(),
            s.snr_db.map(f64::to_bits),
            s.eta2.to_bits(),
            s.pipeline,
        )
    };
    let mut order: Vec<CellKey> = Vec::new();
    for s in scores {
        let k = key_of(s);
        if !order.contains(&k) {
            order.push(k);
        }
    }
    let mut rows = Vec::new();
    for k in order {
        let members: Vec<&SceneScore> = scores.iter().filter(|s| key_of(s) == k).collect();
        let first = members[0];
        let channel = members
            .iter()
            .find(|s| s.error.is_none())
            .map_or(String::new(), |s| s.channel.clone());
        let failures = members.iter().filter(|s| s.error.is_some()).count();
        for m in Metric::ALL {
            let vals: Vec<f64> = members.iter().filter_map(|s| s.metric(m)).collect();
            let mean = (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
            rows.push(ResultRow {
                room: first.room.clone(),
                ser_db: first.ser_db,
                snr_db: first.snr_db,
                eta2: first.eta2,
                pipeline: first.pipeline,
                channel: channel.clone(),
                metric: m,
                mean,
                n: vals.len(),
                failures,
            });
        }
    }
    rows
}

pub fn save_scores(scores: &[SceneScore], path: &Path) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(scores)?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn load_scores(path: &Path) -> anyhow::Result<Vec<SceneScore>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
