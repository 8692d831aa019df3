use echobench_core::mixer::sources::{speech_like, stereo_farend};
use echobench_core::mixer::{
    diffuse_noise, make_scene, power_ratio_db, DiffuseNoiseConfig, NoiseSource, Scene, SceneParams, SefConfig,
    Setup,
};
use echobench_core::room::RoomSpec;
use echobench_core::signal::{stft, StftConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FS: u32 = 16000;

fn scene(setup: Setup, ser_db: f64, snr_db: Option<f64>, eta2: f64, seed: u64) -> Scene {
    let room = RoomSpec::new([5.0, 6.0, 3.0], 0.35).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = 2 * FS as usize;
    let boundary = (len as f64 * 0.4) as usize;
    let geometry = setup.geometry(&room, &mut rng).unwrap();
    let talker = speech_like(len, FS, &mut rng).unwrap();
    let farend = if setup.num_loudspeakers() == 2 {
        stereo_farend(&talker, &mut rng).unwrap()
    } else {
        talker
    };
    let near = speech_like(len - boundary, FS, &mut rng).unwrap();
    let params = SceneParams {
        ser_db,
        snr_db,
        sef: SefConfig::new(eta2).unwrap(),
        ..SceneParams::default()
    };
    let noise = if snr_db.is_some() {
        NoiseSource::Diffuse
    } else {
        NoiseSource::None
    };
    make_scene(setup, &room, &geometry, &farend, &near, noise, &params, &mut rng).unwrap()
}

#[test]
fn gain_staging_grid() {
    for ser in [-6.0, -3.0, 0.0, 3.0, 6.0] {
        for snr in [8.0, 10.0, 12.0, 14.0] {
            let sc = scene(Setup::Mmaec, ser, Some(snr), f64::INFINITY, (ser * 10.0 + snr) as u64);
            let got_ser = sc.realized_ser_db(0).unwrap();
            let got_snr = sc.realized_snr_db(0).unwrap().unwrap();
            assert!((got_ser - ser).abs() <= 0.01, "SER {got_ser} vs {ser}");
            assert!((got_snr - snr).abs() <= 1e-6, "SNR {got_snr} vs {snr}");
            assert_eq!(sc.decomposition_residual().unwrap(), 0.0);
        }
    }
}

#[test]
fn decomposition_is_sample_exact() {
    for setup in [Setup::Single, Setup::Mcaec, Setup::Mmaec] {
        let sc = scene(setup, 3.5, Some(10.0), 0.5, 9);
        assert_eq!(sc.num_mics(), setup.num_mics());
        assert_eq!(sc.echoes.len(), setup.num_loudspeakers());
        for m in 0..sc.num_mics() {
            for n in 0..sc.len() {
                let parts: f64 = sc.echoes.iter().map(|e| e.channel(m)[n]).sum::<f64>()
                    + sc.nearend.channel(m)[n]
                    + sc.noise.channel(m)[n];
                assert_eq!(sc.mic_signals.channel(m)[n], parts);
            }
        }
    }
}

#[test]
fn stereo_scene_has_two_echo_paths() {
    let sc = scene(Setup::Mcaec, 0.0, None, f64::INFINITY, 4);
    assert_eq!(sc.echoes.len(), 2);
    for e in &sc.echoes {
        assert!(e.energy(0) > 0.0 && e.energy(1) > 0.0);
    }
    assert_eq!(sc.snr_db, None);
    assert!(sc.noise.channels().iter().flatten().all(|v| *v == 0.0));
}

#[test]
fn echo_rescale_lowers_ser_by_6db() {
    let sc = scene(Setup::Single, 3.5, None, f64::INFINITY, 2);
    let dt = sc.timeline.double_talk().unwrap();
    let echo = sc.echo_total().unwrap().scaled(2.0);
    let ser = power_ratio_db(sc.nearend.channel(0), echo.channel(0), dt).unwrap();
    assert!((ser - (3.5 - 20.0 * 2f64.log10())).abs() <= 0.01);
}

#[test]
fn linear_noise_free_scene_is_pure_echo_before_double_talk() {
    let sc = scene(Setup::Mmaec, 0.0, None, f64::INFINITY, 6);
    let st = sc.timeline.farend_single_talk().unwrap();
    let echo = sc.echo_total().unwrap();
    for m in 0..sc.num_mics() {
        assert_eq!(&sc.mic_signals.channel(m)[st.clone()], &echo.channel(m)[st.clone()]);
    }
}

/// Magnitude-squared coherence between two channels at one STFT bin.
fn msc(x: &echobench_core::Spectrogram, bin: usize) -> f64 {
    let (mut sxy, mut sxx, mut syy) = (num_complex::Complex64::new(0.0, 0.0), 0.0, 0.0);
    for t in 0..x.num_frames() {
        let (a, b) = (x.data[[t, bin, 0]], x.data[[t, bin, 1]]);
        sxy += a * b.conj();
        sxx += a.norm_sqr();
        syy += b.norm_sqr();
    }
    sxy.norm_sqr() / (sxx * syy)
}

#[test]
fn diffuse_noise_coherence_falls_with_frequency() {
    let room = RoomSpec::new([5.0, 6.0, 3.0], 0.35).unwrap();
    let cfg = StftConfig::default();
    let (mut low, mut high) = (0.0, 0.0);
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let geometry = Setup::Mmaec.geometry(&room, &mut rng).unwrap();
        let v = diffuse_noise(&geometry, &room, 2 * FS as usize, &DiffuseNoiseConfig::default(), &mut rng)
            .unwrap();
        let spec = stft(&v, &cfg).unwrap();
        // 200 Hz and 6 kHz at 50 Hz per bin
        low += msc(&spec, 4);
        high += msc(&spec, 120);
    }
    assert!(low > high, "coherence {low} at 200 Hz vs {high} at 6 kHz");
}

#[test]
fn diffuse_noise_seeds_differ_but_energies_agree() {
    let room = RoomSpec::new([5.0, 6.0, 3.0], 0.35).unwrap();
    let geometry = Setup::Mmaec
        .geometry(&room, &mut ChaCha8Rng::seed_from_u64(0))
        .unwrap();
    let draw = |seed| {
        diffuse_noise(&geometry, &room, 4 * FS as usize, &DiffuseNoiseConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed))
            .unwrap()
    };
    let (a, b) = (draw(1), draw(2));
    assert_ne!(a, b);
    for m in 0..4 {
        let db = 10.0 * (a.energy(m) / b.energy(m)).log10();
        assert!(db.abs() < 1.0, "mic {m}: {db} dB");
    }
}

#[test]
fn single_mic_noise_is_plain() {
    let room = RoomSpec::new([5.0, 6.0, 3.0], 0.35).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let geometry = Setup::Single.geometry(&room, &mut rng).unwrap();
    let v = diffuse_noise(&geometry, &room, 8000, &DiffuseNoiseConfig::default(), &mut rng).unwrap();
    assert_eq!(v.num_channels(), 1);
    assert!(v.energy(0) > 0.0);
}
