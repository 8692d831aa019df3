use echobench_core::adaptive::{
    misalignment, multichannel_nlms_cancel, nlms_cancel, stereo_nlms_cancel, Decorrelation,
    NlmsConfig, TAP_TRACE_MAGIC,
};
use echobench_core::metrics::erle_over;
use echobench_core::mixer::sources::speech_like;
use echobench_core::mixer::{sef_apply, SefConfig, Setup};
use echobench_core::room::{convolve, convolve_samples, image_rir, RirOptions, RoomSpec};
use echobench_core::signal::Waveform;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const FS: u32 = 16000;

/// Steady-state ERLE (final 25% of 10 s) of NLMS against a far-end-only,
/// noise-free echo through the SEF loudspeaker.
fn steady_state_erle(eta2: f64, seed: u64) -> f64 {
    let room = RoomSpec::new([5.0, 6.0, 3.0], 0.35).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = 10 * FS as usize;
    let g = Setup::Single.geometry(&room, &mut rng).unwrap();
    let h = image_rir(&room, g.loudspeaker_positions[0], g.mic_positions[0], &RirOptions::default())
        .unwrap();
    let x = speech_like(len, FS, &mut rng).unwrap();
    let y = convolve(&sef_apply(&x, SefConfig::new(eta2).unwrap()), &h).unwrap();
    let out = nlms_cancel(&y, &x, &NlmsConfig::default()).unwrap();
    erle_over(y.channel(0), out.error.channel(0), len * 3 / 4..len)
}

#[test]
fn linear_echo_is_cancelled_and_sef_hurts() {
    let (mut lin, mut sev) = (0.0, 0.0);
    for seed in 0..5 {
        let linear = steady_state_erle(f64::INFINITY, seed);
        assert!(linear >= 20.0, "seed {seed}: linear ERLE {linear}");
        lin += linear / 5.0;
        sev += steady_state_erle(0.1, seed) / 5.0;
    }
    assert!(lin - sev >= 5.0, "mean ERLE {lin} linear vs {sev} at eta2 = 0.1");
}

fn decaying_path(rng: &mut ChaCha8Rng, taps: usize) -> Vec<f64> {
    (0..taps)
        .map(|k| rng.sample::<f64, _>(StandardNormal) * (-(k as f64) / 40.0).exp())
        .collect()
}

/// Stereo NLMS on `x1` / `x2` against known paths; returns the misalignment
/// of the final taps.
fn stereo_misalignment(seed: u64, correlated: bool) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = 3 * FS as usize;
    let x1: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
    let x2: Vec<f64> = if correlated {
        x1.clone()
    } else {
        (0..len).map(|_| rng.sample(StandardNormal)).collect()
    };
    let h = [decaying_path(&mut rng, 128), decaying_path(&mut rng, 128)];
    let (e1, e2) = (convolve_samples(&x1, &h[0]), convolve_samples(&x2, &h[1]));
    let mic = Waveform::mono(e1.iter().zip(&e2).map(|(a, b)| a + b).collect(), FS).unwrap();
    let far = Waveform::new(vec![x1, x2], FS).unwrap();
    let cfg = NlmsConfig {
        taps: 128,
        ..NlmsConfig::default()
    };
    let out = stereo_nlms_cancel(&mic, &far, &cfg, Decorrelation::Off).unwrap();
    // the residual echo converges in both cases
    let tail = &out.error.channel(0)[len - 8000..];
    let mic_tail = &mic.channel(0)[len - 8000..];
    let ratio = tail.iter().map(|v| v * v).sum::<f64>() / mic_tail.iter().map(|v| v * v).sum::<f64>();
    assert!(ratio < 1e-4, "seed {seed}: residual ratio {ratio}");
    if !correlated {
        let st = erle_over(mic.channel(0), out.error.channel(0), len / 2..len);
        assert!(st >= 20.0, "seed {seed}: independent-channel ERLE {st}");
    }
    misalignment(&out.state.taps, &h)
}

#[test]
fn alpha_zero_matches_no_decorrelation() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let far = Waveform::new(
        (0..2).map(|_| (0..3000).map(|_| rng.random_range(-1.0..1.0)).collect()).collect(),
        FS,
    )
    .unwrap();
    let mic = Waveform::mono((0..3000).map(|_| rng.random_range(-1.0..1.0)).collect(), FS).unwrap();
    let cfg = NlmsConfig { taps: 16, ..NlmsConfig::default() };
    let a = stereo_nlms_cancel(&mic, &far, &cfg, Decorrelation::Off).unwrap();
    let b = stereo_nlms_cancel(&mic, &far, &cfg, Decorrelation::HalfWave(0.0)).unwrap();
    assert_eq!(a.error, b.error);
    assert_eq!(a.state.taps, b.state.taps);
}

#[test]
fn error_decorrelates_from_input_after_convergence() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x: Vec<f64> = (0..40000).map(|_| rng.sample(StandardNormal)).collect();
    let h = decaying_path(&mut rng, 64);
    // independent observation noise keeps the error from vanishing
    let y: Vec<f64> = convolve_samples(&x, &h)
        .iter()
        .map(|v| v + 0.01 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let cfg = NlmsConfig { taps: 64, step_size: 0.1, ..NlmsConfig::default() };
    let out = nlms_cancel(&Waveform::mono(y.clone(), FS).unwrap(), &Waveform::mono(x.clone(), FS).unwrap(), &cfg)
        .unwrap();
    let e = out.error.channel(0);
    let tail = 30000..40000;
    let (pe, px) = (
        tail.clone().map(|n| e[n] * e[n]).sum::<f64>(),
        tail.clone().map(|n| x[n] * x[n]).sum::<f64>(),
    );
    for k in 0..64 {
        let cross: f64 = tail.clone().map(|n| e[n] * x[n - k]).sum();
        assert!(cross.abs() <= 0.05 * (pe * px).sqrt().max(1e-12), "lag {k}");
    }
}

#[test]
fn correlated_channels_leave_paths_unidentified() {
    for seed in 0..10 {
        let m = stereo_misalignment(seed, true);
        assert!(m >= 0.1, "seed {seed}: correlated misalignment {m}");
        let m = stereo_misalignment(seed, false);
        assert!(m <= 0.03, "seed {seed}: independent misalignment {m}");
    }
}

#[test]
fn tap_trace_dump_layout() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x: Vec<f64> = (0..1000).map(|_| rng.random_range(-1.0..1.0)).collect();
    let far = Waveform::new(vec![x.clone(), x.iter().map(|v| -v).collect()], FS).unwrap();
    let mic = Waveform::mono(x, FS).unwrap();
    let cfg = NlmsConfig {
        taps: 8,
        trace_interval: Some(250),
        ..NlmsConfig::default()
    };
    let out = multichannel_nlms_cancel(&mic, &far, &cfg).unwrap();
    let bytes = out.trace.encode();
    assert_eq!(bytes[..4], TAP_TRACE_MAGIC);
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
    assert_eq!(u16::from_le_bytes([bytes[6], bytes[7]]), 2);
    assert_eq!(u32_at(8), 8);
    let count = u32_at(12) as usize;
    assert_eq!(u32_at(16), 250);
    assert!(count >= 3);
    assert_eq!(bytes.len(), 20 + count * (8 + 2 * 8 * 4));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn taps_stay_finite_over_a_million_samples(seed in any::<u64>(), mu in 0.01f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..1_000_000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = x.iter().enumerate().map(|(n, v)| 0.5 * v + rng.random_range(-0.1..0.1) * (n % 7) as f64).collect();
        let cfg = NlmsConfig { taps: 16, step_size: mu, ..NlmsConfig::default() };
        let out = nlms_cancel(&Waveform::mono(y, FS).unwrap(), &Waveform::mono(x, FS).unwrap(), &cfg).unwrap();
        prop_assert!(out.state.taps.iter().flatten().all(|t| t.is_finite()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn stays_finite_and_bounded(seed in any::<u64>(), mu in 0.05f64..1.9, gain in 1e-4f64..1e3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..4000).map(|_| gain * rng.random_range(-1.0..1.0)).collect();
        let h = decaying_path(&mut ChaCha8Rng::seed_from_u64(seed ^ 3), 32);
        let y = convolve_samples(&x, &h);
        let cfg = NlmsConfig { taps: 32, step_size: mu, ..NlmsConfig::default() };
        let out = nlms_cancel(&Waveform::mono(y.clone(), FS).unwrap(), &Waveform::mono(x, FS).unwrap(), &cfg).unwrap();
        let e = out.error.channel(0);
        prop_assert!(e.iter().all(|v| v.is_finite()));
        let ey: f64 = y.iter().map(|v| v * v).sum();
        let ee: f64 = e.iter().map(|v| v * v).sum();
        prop_assert!(ee <= ey * (1.0 + 1e-9));
    }
}
