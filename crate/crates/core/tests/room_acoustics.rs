use echobench_core::room::{
    convolve_samples, image_rir, mcaec_geometry, mmaec_geometry, DelayInterpolation, Point3,
    RirOptions, RoomSpec,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn naive_convolution(x: &[f64], h: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|n| {
            (0..h.len().min(n + 1))
                .map(|k| h[k] * x[n - k])
                .sum()
        })
        .collect()
}

/// T60 from a least-squares line through the Schroeder curve between -5 and -25 dB.
fn schroeder_t60(taps: &[f64], fs: f64) -> f64 {
    let mut edc: Vec<f64> = taps.iter().rev().scan(0.0, |acc, t| {
        *acc += t * t;
        Some(*acc)
    }).collect();
    edc.reverse();
    let total = edc[0];
    let pts: Vec<(f64, f64)> = edc
        .iter()
        .enumerate()
        .map(|(i, e)| (i as f64 / fs, 10.0 * (e / total).log10()))
        .filter(|&(_, db)| (-25.0..=-5.0).contains(&db))
        .collect();
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mx, my) = (sx / n, sy / n);
    let (num, den) = pts
        .iter()
        .fold((0.0, 0.0), |a, p| (a.0 + (p.0 - mx) * (p.1 - my), a.1 + (p.0 - mx).powi(2)));
    -60.0 / (num / den)
}

fn long_rir_t60(room: &RoomSpec) -> f64 {
    // long enough for the energy curve to fall past -25 dB
    let opts = RirOptions {
        len: 12000,
        ..RirOptions::default()
    };
    let src = Point3::new(1.3, 2.1, 1.4);
    let mic = Point3::new(3.6, 4.2, 1.6);
    schroeder_t60(&image_rir(room, src, mic, &opts).unwrap().taps, 16000.0)
}

// With uniform frequency-independent walls the late tail is dominated by
// images travelling near the room axes, which reflect less often than the
// diffuse average, so the fitted decay runs about 30% longer than Sabine.
#[test]
fn schroeder_decay_tracks_t60() {
    let room = RoomSpec::new([5.0, 6.0, 3.0], 0.35).unwrap();
    let t60 = long_rir_t60(&room);
    assert!((t60 - 0.35).abs() <= 0.35 * 0.35, "measured T60 {t60}");

    let shorter = long_rir_t60(&RoomSpec::new([5.0, 6.0, 3.0], 0.25).unwrap());
    let longer = long_rir_t60(&RoomSpec::new([5.0, 6.0, 3.0], 0.5).unwrap());
    assert!(shorter < t60 && t60 < longer, "{shorter} {t60} {longer}");
}

#[test]
fn free_field_is_a_single_scaled_impulse() {
    let room = RoomSpec::new([5.0, 6.0, 3.0], 0.35).unwrap();
    let opts = RirOptions {
        reflection_override: Some(0.0),
        ..RirOptions::default()
    };
    let src = Point3::new(2.0, 3.0, 1.5);
    let near = image_rir(&room, src, Point3::new(3.0, 3.0, 1.5), &opts).unwrap();
    let far = image_rir(&room, src, Point3::new(4.0, 3.0, 1.5), &opts).unwrap();
    for rir in [&near, &far] {
        assert_eq!(rir.taps.iter().filter(|t| **t != 0.0).count(), 1);
    }
    let peak = |t: &[f64]| t.iter().position(|v| *v != 0.0).unwrap();
    // 1 m -> 46.6 samples
    assert!([46, 47].contains(&peak(&near.taps)));
    let ratio = near.taps[peak(&near.taps)] / far.taps[peak(&far.taps)];
    assert!((ratio - 2.0).abs() < 1e-12);
}

#[test]
fn first_tap_near_direct_delay() {
    let room = RoomSpec::new([11.0, 14.0, 3.0], 0.35).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for interpolation in [DelayInterpolation::Nearest, DelayInterpolation::Sinc] {
        let opts = RirOptions {
            interpolation,
            ..RirOptions::default()
        };
        for _ in 0..20 {
            let p = |rng: &mut ChaCha8Rng| {
                Point3::new(
                    rng.random_range(4.0..7.0),
                    rng.random_range(5.0..9.0),
                    rng.random_range(1.0..2.0),
                )
            };
            let (src, mic) = (p(&mut rng), p(&mut rng));
            let rir = image_rir(&room, src, mic, &opts).unwrap();
            assert_eq!(rir.taps.len(), 512);
            let delay = rir.direct_delay(343.0);
            let peak = rir
                .taps
                .iter()
                .enumerate()
                .fold((0, 0.0), |b, (i, t)| if t.abs() > b.1 { (i, t.abs()) } else { b })
                .0;
            if delay < 500.0 {
                assert!((peak as f64 - delay).abs() <= 1.0, "peak {peak}, delay {delay}");
            }
            assert_eq!(rir, image_rir(&room, src, mic, &opts).unwrap());
        }
    }
}

#[test]
fn matches_naive_convolution() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x: Vec<f64> = (0..16000).map(|_| rng.random_range(-1.0..1.0)).collect();
    let h: Vec<f64> = (0..512).map(|_| rng.random_range(-1.0..1.0)).collect();
    let fast = convolve_samples(&x, &h);
    let slow = naive_convolution(&x, &h);
    let worst = fast.iter().zip(&slow).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-10, "{worst:e}");
}

#[test]
fn array_layouts() {
    for a in [4.0, 6.0, 8.0, 10.0] {
        for b in [5.0, 7.0, 9.0, 11.0, 13.0] {
            let room = RoomSpec::new([a, b, 3.0], 0.35).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64((a * b) as u64);
            let g = mcaec_geometry(&room, &mut rng).unwrap();
            g.check_inside(&room).unwrap();
            assert!((g.mic_positions[0].distance(&g.mic_positions[1]) - 0.1).abs() < 1e-12);
            let centre = g.mic_centroid();
            assert!((g.nearend_position.distance(&centre) - 1.0).abs() < 1e-9);

            let g = mmaec_geometry(&room, &mut rng).unwrap();
            g.check_inside(&room).unwrap();
            let c = g.mic_centroid();
            let rc = room.center();
            assert!(c.distance(&rc) < 1e-9);
            for pair in g.mic_positions.windows(2) {
                assert!((pair[0].distance(&pair[1]) - 0.04).abs() < 1e-12);
            }
            assert!((g.loudspeaker_positions[0].distance(&c) - 0.6).abs() < 1e-9);
            assert!((g.nearend_position.distance(&c) - 1.0).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn convolution_shift_and_linearity(k in 0usize..40, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..300).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..300).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut delta = vec![0.0; k + 1];
        delta[k] = 1.0;
        let shifted = convolve_samples(&x, &delta);
        for n in 0..300 {
            let want = if n >= k { x[n - k] } else { 0.0 };
            prop_assert!((shifted[n] - want).abs() < 1e-12);
        }
        let h: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
        let lhs = convolve_samples(&sum, &h);
        let (cx, cy) = (convolve_samples(&x, &h), convolve_samples(&y, &h));
        for n in 0..300 {
            prop_assert!((lhs[n] - cx[n] - cy[n]).abs() < 1e-10);
        }
    }
}

#[test]
fn unrealizable_rooms_rejected() {
    assert!(RoomSpec::new([5.0, 6.0, 0.0], 0.35).is_err());
    assert!(RoomSpec::new([5.0, 6.0, 3.0], 0.0).is_err());
    // Sabine absorption above 1
    assert!(RoomSpec::new([5.0, 6.0, 3.0], 0.01).is_err());
}
