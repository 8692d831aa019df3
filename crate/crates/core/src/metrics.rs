//! ERLE over far-end single talk, SI-SDR over double talk, and scene checks.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixer::scene::Scene;
use crate::mixer::{SegmentLabel, Timeline};
use crate::signal::segment_energy;

/// Scores are clamped to `[-METRIC_CAP_DB, METRIC_CAP_DB]`.
pub const METRIC_CAP_DB: f64 = 80.0;

fn cap(db: f64) -> f64 {
    db.clamp(-METRIC_CAP_DB, METRIC_CAP_DB)
}

fn checked_range(range: Option<Range<usize>>, a: usize, b: usize) -> Result<Option<Range<usize>>> {
    match range {
        Some(r) if r.end > a.min(b) => Err(Error::DimensionMismatch(format!(
            "segment {r:?} exceeds signal length {}",
            a.min(b)
        ))),
        Some(r) if a != b => Err(Error::DimensionMismatch(format!(
            "signals of {a} and {b} samples over segment {r:?}"
        ))),
        other => Ok(other),
    }
}

/// `10 log10(sum y^2 / sum s_hat^2)` over the far-end single-talk segment.
/// `None` when the timeline has no such segment.
pub fn erle(mic: &[f64], enhanced: &[f64], timeline: &Timeline) -> Result<Option<f64>> {
    let Some(r) = checked_range(
        timeline.range(SegmentLabel::FarendSingleTalk),
        mic.len(),
        enhanced.len(),
    )?
    else {
        return Ok(None);
    };
    Ok(Some(erle_over(mic, enhanced, r)))
}

pub fn erle_over(mic: &[f64], enhanced: &[f64], range: Range<usize>) -> f64 {
    let ey = segment_energy(mic, range.clone());
    let es = segment_energy(enhanced, range);
    match (ey > 0.0, es > 0.0) {
        (_, false) => METRIC_CAP_DB,
        (false, true) => -METRIC_CAP_DB,
        (true, true) => cap(10.0 * (ey / es).log10()),
    }
}

/// Scale-invariant SDR over the double-talk segment. `None` when the
/// timeline has no double talk.
pub fn si_sdr(reference: &[f64], estimate: &[f64], timeline: &Timeline) -> Result<Option<f64>> {
    let Some(r) = checked_range(
        timeline.range(SegmentLabel::DoubleTalk),
        reference.len(),
        estimate.len(),
    )?
    else {
        return Ok(None);
    };
    si_sdr_over(reference, estimate, r).map(Some)
}

pub fn si_sdr_over(reference: &[f64], estimate: &[f64], range: Range<usize>) -> Result<f64> {
    let s = &reference[range.clone()];
    let e = &estimate[range];
    let ss: f64 = s.iter().map(|v| v * v).sum();
    if ss == 0.0 {
        return Err(Error::ZeroEnergy("reference on double-talk segment"));
    }
    let alpha = s.iter().zip(e).map(|(a, b)| a * b).sum::<f64>() / ss;
    let target = alpha * alpha * ss;
    let residual: f64 = s
        .iter()
        .zip(e)
        .map(|(a, b)| (b - alpha * a).powi(2))
        .sum();
    Ok(match (target > 0.0, residual > 0.0) {
        (_, false) if target > 0.0 => METRIC_CAP_DB,
        (false, _) => -METRIC_CAP_DB,
        _ => cap(10.0 * (target / residual).log10()),
    })
}

/// Per-utterance scores. Fields are absent when the relevant segment or
/// component does not exist.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreReport {
    pub erle_db: Option<f64>,
    pub si_sdr_db: Option<f64>,
    pub realized_ser_db: Option<f64>,
    pub realized_snr_db: Option<f64>,
    pub farend_segment: Option<(usize, usize)>,
    pub double_talk_segment: Option<(usize, usize)>,
}

fn bounds(timeline: &Timeline, label: SegmentLabel) -> Option<(usize, usize)> {
    timeline.range(label).map(|r| (r.start, r.end))
}

/// Scores one channel. `enhanced` is `None` for the unprocessed pipeline,
/// which has no ERLE; its SI-SDR is that of `mic`.
pub fn score(
    mic: &[f64],
    enhanced: Option<&[f64]>,
    reference: &[f64],
    timeline: &Timeline,
) -> Result<ScoreReport> {
    let erle_db = match enhanced {
        Some(e) => erle(mic, e, timeline)?,
        None => None,
    };
    let si_sdr_db = si_sdr(reference, enhanced.unwrap_or(mic), timeline)?;
    Ok(ScoreReport {
        erle_db,
        si_sdr_db,
        farend_segment: bounds(timeline, SegmentLabel::FarendSingleTalk),
        double_talk_segment: bounds(timeline, SegmentLabel::DoubleTalk),
        ..ScoreReport::default()
    })
}

/// Recomputes SER and SNR over double talk at the reference microphone.
pub fn verify_scene(scene: &Scene) -> Result<ScoreReport> {
    if scene.echoes.is_empty() {
        return Err(Error::MissingComponent("echo"));
    }
    if scene.nearend.num_channels() != scene.num_mics() {
        return Err(Error::MissingComponent("near-end speech"));
    }
    if scene.noise.num_channels() != scene.num_mics() {
        return Err(Error::MissingComponent("noise"));
    }
    Ok(ScoreReport {
        realized_ser_db: Some(scene.realized_ser_db(0)?),
        realized_snr_db: scene.realized_snr_db(0)?,
        farend_segment: bounds(&scene.timeline, SegmentLabel::FarendSingleTalk),
        double_talk_segment: bounds(&scene.timeline, SegmentLabel::DoubleTalk),
        ..ScoreReport::default()
    })
}
