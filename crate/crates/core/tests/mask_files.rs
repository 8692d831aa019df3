use echobench_core::masking::{
    apply_mask, load_masks, oracle_complex, oracle_smm, read_tensor_file, save_masks, MaskKind,
    MaskSet, MaskSource,
};
use echobench_core::signal::{istft, stft, StftConfig, Waveform};
use echobench_core::Error;
use ndarray::Array3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 2 frames, 2 bins, 1 channel magnitude mask written byte by byte.
fn fixture(values: [f32; 4]) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(b"MSK1");
    b.extend_from_slice(&[1, 0]); // version
    b.extend_from_slice(&[0, 0]); // magnitude
    b.extend_from_slice(&[2, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0]);
    for v in values {
        b.extend_from_slice(&v.to_le_bytes());
    }
    b
}

#[test]
fn hand_written_file_loads_and_clips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.msk");
    std::fs::write(&path, fixture([0.25, 1.5, -0.5, f32::NAN])).unwrap();

    let raw = read_tensor_file(&path).unwrap();
    assert_eq!(raw.kind, MaskKind::MagnitudeMask);
    assert_eq!(raw.dims(), (2, 2, 1));
    assert_eq!(raw.mask(0, 1, 0), 1.5);

    let m = load_masks(&path).unwrap();
    assert_eq!(m.source, MaskSource::File);
    assert_eq!(
        [m.mask(0, 0, 0), m.mask(0, 1, 0), m.mask(1, 0, 0), m.mask(1, 1, 0)],
        [0.25, 1.0, 0.0, 0.0]
    );
}

#[test]
fn encoder_produces_the_fixture_bytes() {
    let m = MaskSet::from_values(
        MaskKind::MagnitudeMask,
        (2, 2, 1),
        vec![0.0, 0.5, 0.75, 1.0],
        MaskSource::Oracle,
    )
    .unwrap();
    assert_eq!(m.encode(), fixture([0.0, 0.5, 0.75, 1.0]));
}

#[test]
fn malformed_files_rejected() {
    let good = fixture([0.0; 4]);
    let mut bad_magic = good.clone();
    bad_magic[3] = b'2';
    assert!(matches!(MaskSet::decode(&bad_magic), Err(Error::MaskFormat(_))));
    let mut bad_version = good.clone();
    bad_version[4] = 9;
    assert!(MaskSet::decode(&bad_version).is_err());
    let mut bad_kind = good.clone();
    bad_kind[6] = 7;
    assert!(MaskSet::decode(&bad_kind).is_err());
    assert!(matches!(
        MaskSet::decode(&good[..good.len() - 1]),
        Err(Error::MaskTruncated { .. })
    ));
    let mut trailing = good.clone();
    trailing.push(0);
    assert!(MaskSet::decode(&trailing).is_err());
    assert!(MaskSet::decode(&good[..10]).is_err());
    let mut huge = good;
    huge[8..12].copy_from_slice(&u32::MAX.to_le_bytes());
    huge[12..16].copy_from_slice(&u32::MAX.to_le_bytes());
    assert!(matches!(MaskSet::decode(&huge), Err(Error::MaskDimensionOverflow { .. })));
}

fn noise(len: usize, seed: u64, channels: usize) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Waveform::new(
        (0..channels)
            .map(|_| (0..len).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect(),
        16000,
    )
    .unwrap()
}

#[test]
fn complex_oracle_reconstructs_target() {
    let cfg = StftConfig::default();
    let s = noise(8000, 1, 2);
    let v = noise(8000, 2, 2);
    let y = s.add(&v).unwrap();
    let (ss, ys) = (stft(&s, &cfg).unwrap(), stft(&y, &cfg).unwrap());
    let out = istft(&apply_mask(&ys, &oracle_complex(&ss)).unwrap()).unwrap();
    for c in 0..2 {
        let (a, b) = (&s.channel(c)[320..7680], &out.channel(c)[320..7680]);
        let err: f64 = a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum();
        let den: f64 = a.iter().map(|p| p * p).sum();
        // f32 storage bounds the error
        assert!((err / den).sqrt() < 1e-6);
    }
}

#[test]
fn smm_edge_cases() {
    let cfg = StftConfig::default();
    let y = stft(&noise(2000, 3, 1), &cfg).unwrap();
    let silent = y.with_data(Array3::zeros(y.data.dim()));
    assert!(oracle_smm(&silent, &y).unwrap().values().iter().all(|v| *v == 0.0));
    assert!(oracle_smm(&y, &y).unwrap().values().iter().all(|v| *v == 1.0));
    assert!(oracle_smm(&y, &silent).unwrap().values().iter().all(|v| *v == 0.0));
    let ones = oracle_smm(&y, &y).unwrap();
    assert_eq!(apply_mask(&y, &ones).unwrap(), y);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn file_round_trip_is_bit_exact(
        frames in 1usize..6, bins in 1usize..6, channels in 1usize..4,
        complex in any::<bool>(), seed in any::<u64>()
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kind = if complex { MaskKind::ComplexSpectrum } else { MaskKind::MagnitudeMask };
        let n = frames * bins * channels * if complex { 2 } else { 1 };
        let vals: Vec<f32> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let m = MaskSet::from_values(kind, (frames, bins, channels), vals, MaskSource::Oracle).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.msk");
        save_masks(&m, &path).unwrap();
        let back = load_masks(&path).unwrap();
        prop_assert_eq!(back.values(), m.values());
        prop_assert_eq!(back.dims(), m.dims());
        prop_assert_eq!(std::fs::read(&path).unwrap(), m.encode());
    }

    #[test]
    fn smm_is_scale_invariant(seed in any::<u64>(), g in 0.01f64..100.0) {
        let cfg = StftConfig::default();
        let s = noise(1000, seed, 1);
        let y = s.add(&noise(1000, seed ^ 1, 1)).unwrap();
        let (ss, ys) = (stft(&s, &cfg).unwrap(), stft(&y, &cfg).unwrap());
        let a = oracle_smm(&ss, &ys).unwrap();
        let b = oracle_smm(&stft(&s.scaled(g), &cfg).unwrap(), &stft(&y.scaled(g), &cfg).unwrap()).unwrap();
        for (p, q) in a.values().iter().zip(b.values()) {
            prop_assert!((p - q).abs() < 1e-6);
            prop_assert!((0.0..=1.0).contains(p));
        }
    }

    #[test]
    fn raising_a_cell_never_lowers_its_output(seed in any::<u64>(), t in 0usize..5, f in 0usize..161, bump in 0.0f32..1.0) {
        let cfg = StftConfig::default();
        let y = stft(&noise(1000, seed, 1), &cfg).unwrap();
        let s = stft(&noise(1000, seed ^ 7, 1), &cfg).unwrap();
        let m = oracle_smm(&s, &y).unwrap();
        let mut raised = m.clone();
        raised.set_mask(t, f, 0, (m.mask(t, f, 0) + bump).min(1.0));
        let (a, b) = (apply_mask(&y, &m).unwrap(), apply_mask(&y, &raised).unwrap());
        prop_assert!(b.data[[t, f, 0]].norm() >= a.data[[t, f, 0]].norm());
    }
}
