//! Loudspeaker nonlinearity, double-talk gain staging, diffuse noise and
//! scene assembly.

mod noise;
pub mod scene;
pub mod sources;

pub use noise::{diffuse_noise, DiffuseNoiseConfig};
pub use scene::{make_scene, NoiseSource, Scene, SceneManifest, SceneParams, Setup};

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{segment_energy, Waveform};

/// Scaled error function strength. `eta2 = inf` is the linear loudspeaker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SefConfig {
    #[serde(with = "eta2_serde")]
    pub eta2: f64,
}

impl SefConfig {
    pub const LINEAR: SefConfig = SefConfig {
        eta2: f64::INFINITY,
    };

    pub fn new(eta2: f64) -> Result<Self> {
        if eta2 > 0.0 && !eta2.is_nan() {
            Ok(Self { eta2 })
        } else {
            Err(Error::InvalidConfig(format!("eta2 must be positive, got {eta2}")))
        }
    }

    pub fn is_linear(&self) -> bool {
        self.eta2.is_infinite()
    }

    /// Output bound `eta * sqrt(pi / 2)`; infinite for the linear case.
    pub fn saturation(&self) -> f64 {
        self.eta2.sqrt() * (std::f64::consts::PI / 2.0).sqrt()
    }

    /// `integral_0^x exp(-z^2 / (2 eta^2)) dz` in closed form.
    pub fn apply_sample(&self, x: f64) -> f64 {
        if self.is_linear() {
            return x;
        }
        let eta = self.eta2.sqrt();
        eta * (std::f64::consts::PI / 2.0).sqrt()
            * libm::erf(x / (eta * std::f64::consts::SQRT_2))
    }
}

pub fn sef_apply(x: &Waveform, cfg: SefConfig) -> Waveform {
    if cfg.is_linear() {
        return x.clone();
    }
    let channels = x
        .channels()
        .iter()
        .map(|c| c.iter().map(|&v| cfg.apply_sample(v)).collect())
        .collect();
    Waveform::new(channels, x.sample_rate()).expect("shape preserved")
}

/// Serializes eta2 as a JSON number, or the string `"inf"` for the linear case.
pub mod eta2_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if matches!(t.as_str(), "inf" | "infinity" | "Infinity") => {
                Ok(f64::INFINITY)
            }
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentLabel {
    FarendSingleTalk,
    DoubleTalk,
    NearendSingleTalk,
}

impl SegmentLabel {
    pub fn name(self) -> &'static str {
        match self {
            SegmentLabel::FarendSingleTalk => "farend_single_talk",
            SegmentLabel::DoubleTalk => "double_talk",
            SegmentLabel::NearendSingleTalk => "nearend_single_talk",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub label: SegmentLabel,
    pub start: usize,
    pub end: usize,
}

/// Labeled, non-overlapping sample ranges of a scene.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timeline {
    pub segments: Vec<Segment>,
}

/// Fraction of the utterance given to the leading far-end single-talk region.
pub const DEFAULT_SINGLE_TALK_FRACTION: f64 = 0.4;

impl Timeline {
    /// Leading far-end single talk followed by double talk to the end.
    pub fn split(len: usize, single_talk_fraction: f64) -> Timeline {
        let boundary = ((len as f64) * single_talk_fraction).floor() as usize;
        Timeline {
            segments: vec![
                Segment {
                    label: SegmentLabel::FarendSingleTalk,
                    start: 0,
                    end: boundary,
                },
                Segment {
                    label: SegmentLabel::DoubleTalk,
                    start: boundary,
                    end: len,
                },
            ],
        }
    }

    /// Sample range of the first nonempty segment with `label`.
    pub fn range(&self, label: SegmentLabel) -> Option<Range<usize>> {
        self.segments
            .iter()
            .find(|s| s.label == label && s.end > s.start)
            .map(|s| s.start..s.end)
    }

    pub fn double_talk(&self) -> Result<Range<usize>> {
        self.range(SegmentLabel::DoubleTalk)
            .ok_or(Error::EmptySegment("double_talk"))
    }

    pub fn farend_single_talk(&self) -> Result<Range<usize>> {
        self.range(SegmentLabel::FarendSingleTalk)
            .ok_or(Error::EmptySegment("farend_single_talk"))
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if self.segments.iter().any(|s| s.end > len || s.start > s.end) {
            return Err(Error::DimensionMismatch(format!(
                "timeline exceeds signal length {len}"
            )));
        }
        Ok(())
    }
}

/// `10 log10(sum num^2 / sum den^2)` over `range`; `None` if either side is silent.
pub fn power_ratio_db(num: &[f64], den: &[f64], range: Range<usize>) -> Option<f64> {
    let en = segment_energy(num, range.clone());
    let ed = segment_energy(den, range);
    if en > 0.0 && ed > 0.0 {
        Some(10.0 * (en / ed).log10())
    } else {
        None
    }
}

fn staging_gain(
    s: &Waveform,
    other: &Waveform,
    timeline: &Timeline,
    target_db: f64,
    what: &'static str,
) -> Result<f64> {
    s.check_same_shape(other)?;
    timeline.check_len(s.len())?;
    let dt = timeline.double_talk()?;
    let es = segment_energy(s.channel(0), dt.clone());
    let eo = segment_energy(other.channel(0), dt);
    if es == 0.0 {
        return Err(Error::ZeroEnergy("near-end speech on double-talk segment"));
    }
    if eo == 0.0 {
        return Err(Error::ZeroEnergy(what));
    }
    Ok((es / (eo * 10f64.powf(target_db / 10.0))).sqrt())
}

/// Gain for `d` so that the signal-to-echo ratio over double talk, measured
/// on channel 0 (the reference microphone), equals `target_ser_db`.
pub fn scale_echo_to_ser(
    s: &Waveform,
    d: &Waveform,
    timeline: &Timeline,
    target_ser_db: f64,
) -> Result<f64> {
    staging_gain(s, d, timeline, target_ser_db, "echo on double-talk segment")
}

/// Noise counterpart of [`scale_echo_to_ser`].
pub fn scale_noise_to_snr(
    s: &Waveform,
    v: &Waveform,
    timeline: &Timeline,
    target_snr_db: f64,
) -> Result<f64> {
    staging_gain(s, v, timeline, target_snr_db, "noise on double-talk segment")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadrature_sef(x: f64, eta2: f64) -> f64 {
        // Composite Simpson, 20k panels.
        let n = 20_000;
        let h = x / n as f64;
        let f = |z: f64| (-z * z / (2.0 * eta2)).exp();
        let mut acc = f(0.0) + f(x);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(i as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn sef_matches_quadrature_at_half() {
        let cfg = SefConfig::new(0.1).unwrap();
        let q = quadrature_sef(0.5, 0.1);
        assert!((cfg.apply_sample(0.5) - q).abs() <= 1e-8);
    }

    #[test]
    fn sef_linear_and_zero() {
        assert_eq!(SefConfig::LINEAR.apply_sample(0.731), 0.731);
        assert_eq!(SefConfig::new(0.5).unwrap().apply_sample(0.0), 0.0);
        assert!(SefConfig::new(0.0).is_err());
        assert!(SefConfig::new(-1.0).is_err());
    }

    #[test]
    fn sef_bounded_by_saturation() {
        let cfg = SefConfig::new(0.1).unwrap();
        for x in [-100.0, -3.0, 3.0, 100.0] {
            let y: f64 = cfg.apply_sample(x);
            assert!(y.abs() <= cfg.saturation() + 1e-15);
        }
    }

    #[test]
    fn eta2_serde_handles_infinity() {
        let s = serde_json::to_string(&SefConfig::LINEAR).unwrap();
        assert_eq!(s, r#"{"eta2":"inf"}"#);
        let back: SefConfig = serde_json::from_str(&s).unwrap();
        assert!(back.is_linear());
        let v: SefConfig = serde_json::from_str(r#"{"eta2":0.5}"#).unwrap();
        assert_eq!(v.eta2, 0.5);
    }

    fn tone(len: usize, amp: f64) -> Waveform {
        Waveform::mono((0..len).map(|n| amp * (n as f64 * 0.1).sin()).collect(), 16000).unwrap()
    }

    #[test]
    fn equal_energy_gains() {
        let s = tone(1000, 1.0);
        let d = tone(1000, 1.0);
        let tl = Timeline::split(1000, 0.4);
        assert!((scale_echo_to_ser(&s, &d, &tl, 0.0).unwrap() - 1.0).abs() < 1e-12);
        let g = scale_echo_to_ser(&s, &d, &tl, -6.0).unwrap();
        assert!((g - 10f64.powf(6.0 / 20.0)).abs() < 1e-12);
        assert!((scale_noise_to_snr(&s, &d, &tl, 0.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn staging_uses_only_double_talk() {
        // Energy outside the double-talk region must not influence the gain.
        let len = 1000;
        let tl = Timeline::split(len, 0.4);
        let s = tone(len, 1.0);
        let mut d = tone(len, 1.0).into_channels().swap_remove(0);
        d[..400].iter_mut().for_each(|v| *v *= 100.0);
        let d = Waveform::mono(d, 16000).unwrap();
        assert!((scale_echo_to_ser(&s, &d, &tl, 0.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn staging_rejects_silence() {
        let tl = Timeline::split(100, 0.4);
        let z = Waveform::zeros(1, 100, 16000).unwrap();
        let s = tone(100, 1.0);
        assert!(matches!(
            scale_echo_to_ser(&z, &s, &tl, 0.0),
            Err(Error::ZeroEnergy(_))
        ));
        assert!(matches!(
            scale_noise_to_snr(&s, &z, &tl, 0.0),
            Err(Error::ZeroEnergy(_))
        ));
    }
}
