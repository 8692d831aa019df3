//! Human-readable and CSV renderings of experiment results.
//!
//! Long CSV columns: `room,ser_db,snr_db,eta2,pipeline,channel,metric,mean,n,failures`.
//! `snr_db` is empty for noise-free cells, `eta2` is `inf` for a linear
//! loudspeaker, `mean` is empty when no scene produced the metric.
//!
//! Per-scene CSV columns: `scene_id,room,ser_db,snr_db,eta2,seed,pipeline,channel,erle_db,si_sdr_db,si_sdr_gain_db,fallback_bins,error`.

use std::fmt::Write;

use crate::experiment::{Metric, ResultRow, SceneScore};

pub const SI_SDR_LABEL: &str = "SI-SDR (PESQ out of scope)";

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:.4}"))
}

fn eta(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v}")
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn rows_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from("room,ser_db,snr_db,eta2,pipeline,channel,metric,mean,n,failures\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            csv_field(&r.room),
            r.ser_db,
            r.snr_db.map_or(String::new(), |v| v.to_string()),
            eta(r.eta2),
            r.pipeline,
            r.channel,
            r.metric.name(),
            opt(r.mean),
            r.n,
            r.failures
        );
    }
    out
}

pub fn scores_csv(scores: &[SceneScore]) -> String {
    let mut out = String::from(
        "scene_id,room,ser_db,snr_db,eta2,seed,pipeline,channel,erle_db,si_sdr_db,si_sdr_gain_db,fallback_bins,error\n",
    );
    for s in scores {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            csv_field(&s.scene_id),
            csv_field(&s.room),
            s.ser_db,
            s.snr_db.map_or(String::new(), |v| v.to_string()),
            eta(s.eta2),
            s.seed,
            s.pipeline,
            s.channel,
            opt(s.metric(Metric::Erle)),
            opt(s.metric(Metric::SiSdr)),
            opt(s.metric(Metric::SiSdrGain)),
            s.fallback_bins,
            csv_field(s.error.as_deref().unwrap_or(""))
        );
    }
    out
}

/// Aligned text table, one line per (cell, pipeline) with the metrics as
/// columns.
pub fn rows_text(rows: &[ResultRow]) -> String {
    let header = [
        "room".to_string(),
        "SER".into(),
        "SNR".into(),
        "eta2".into(),
        "pipeline".into(),
        "ch".into(),
        "ERLE (dB)".into(),
        format!("{SI_SDR_LABEL} (dB)"),
        "SI-SDR gain (dB)".into(),
        "n".into(),
        "failed".into(),
    ];
    let mut lines: Vec<Vec<String>> = vec![header.to_vec()];
    for chunk in rows.chunks(Metric::ALL.len()) {
        let r = &chunk[0];
        let get = |m: Metric| {
            chunk
                .iter()
                .find(|x| x.metric == m)
                .and_then(|x| x.mean)
                .map_or("-".to_string(), |v| format!("{v:.2}"))
        };
        let n = chunk.iter().map(|x| x.n).max().unwrap_or(0);
        lines.push(vec![
            r.room.clone(),
            format!("{}", r.ser_db),
            r.snr_db.map_or("-".into(), |v| v.to_string()),
            eta(r.eta2),
            r.pipeline.to_string(),
            r.channel.clone(),
            get(Metric::Erle),
            get(Metric::SiSdr),
            get(Metric::SiSdrGain),
            n.to_string(),
            r.failures.to_string(),
        ]);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| lines.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, l) in lines.iter().enumerate() {
        let cells: Vec<String> = l
            .iter()
            .zip(&widths)
            .map(|(s, &w)| format!("{s:<w$}"))
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
            out.push('\n');
        }
    }
    out
}
