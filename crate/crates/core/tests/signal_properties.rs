use std::f64::consts::{PI, TAU};

use aircatch::fingerprint::{
    estimate_cfo_packet, extract_batch, extract_fingerprint, partition_transitions, phasor_sum, FingerprintOptions,
};
use aircatch::gfsk::{apply_impairments, generate_packet, modulate, DeviceProfile, GfskConfig, TransitionBiases};
use aircatch::{Error, Exec};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bits_strategy(min: usize, max: usize) -> impl Strategy<Value = Vec<bool>> {
    prop::collection::vec(any::<bool>(), min..max)
}

fn balanced(n_half: usize, seed: u64) -> Vec<bool> {
    let mut bits: Vec<bool> = (0..2 * n_half).map(|i| i < n_half).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..bits.len()).rev() {
        bits.swap(i, rng.random_range(0..=i));
    }
    bits
}

fn biases() -> impl Strategy<Value = TransitionBiases> {
    let b = -3000.0..3000.0f64;
    (b.clone(), b.clone(), b.clone(), b).prop_map(|(a, c, d, e)| TransitionBiases {
        zero_zero: a,
        one_one: c,
        one_zero: d,
        zero_one: e,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn impairments_preserve_energy(bits in bits_strategy(2, 80), cfo in -200e3..200e3f64, b in biases(), phase in 0.0..TAU) {
        let cfg = GfskConfig::default();
        let clean = modulate(&bits, &cfg).unwrap();
        let profile = DeviceProfile { initial_phase: phase, transition_bias_hz: b, ..DeviceProfile::new("d", cfo) };
        let out = apply_impairments(&clean, &bits, &profile, &cfg, 0.0, 0).unwrap();
        for (x, y) in clean.iter().zip(&out) {
            prop_assert!((x.norm() - y.norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn phase_is_continuous(bits in bits_strategy(2, 80), cfo in -100e3..100e3f64, b in biases()) {
        let cfg = GfskConfig::default();
        let profile = DeviceProfile { transition_bias_hz: b, ..DeviceProfile::new("d", cfo) };
        let p = generate_packet(&profile, &bits, 0.0, &cfg, 0.0, 0).unwrap();
        let bound = TAU * (cfg.freq_deviation + cfo.abs() + b.max_abs()) / cfg.sample_rate + 1e-9;
        for w in p.samples.windows(2) {
            prop_assert!((w[1] * w[0].conj()).arg().abs() <= bound);
        }
    }

    #[test]
    fn generation_is_deterministic(bits in bits_strategy(2, 64), seed in any::<u64>(), noise in 0.0..0.5f64) {
        let cfg = GfskConfig::default();
        let profile = DeviceProfile::new("d", 7_000.0);
        prop_assert_eq!(
            generate_packet(&profile, &bits, 1.0, &cfg, noise, seed).unwrap(),
            generate_packet(&profile, &bits, 1.0, &cfg, noise, seed).unwrap()
        );
    }

    #[test]
    fn balanced_payload_recovers_cfo(n_half in 32usize..96, seed in any::<u64>(), cfo in -150e3..150e3f64) {
        let cfg = GfskConfig::default();
        let bits = balanced(n_half, seed);
        let p = generate_packet(&DeviceProfile::new("d", cfo), &bits, 0.0, &cfg, 0.0, 0).unwrap();
        let fp = extract_fingerprint(&p, &FingerprintOptions::remodulated(cfg)).unwrap();
        prop_assert!((fp.cfo_packet() - cfo).abs() < 1.0, "{} vs {}", fp.cfo_packet(), cfo);
    }

    #[test]
    fn class_sums_recombine(bits in bits_strategy(2, 120), cfo in -200e3..200e3f64, b in biases(), noise in 0.0..1.0f64, seed in any::<u64>()) {
        let cfg = GfskConfig::default();
        let profile = DeviceProfile { transition_bias_hz: b, ..DeviceProfile::new("d", cfo) };
        let p = generate_packet(&profile, &bits, 0.0, &cfg, noise, seed).unwrap();
        let acc = partition_transitions(&p.samples, &bits, cfg.samples_per_symbol).unwrap();
        let total = phasor_sum(&p.samples);
        prop_assert_eq!(acc.total_count(), p.samples.len() - 1);
        prop_assert!((acc.recombined() - total).norm() <= 1e-6 * total.norm().max(1e-300));
        if let Err(Error::InternalInconsistency(m)) = extract_fingerprint(&p, &FingerprintOptions::remodulated(cfg)) { prop_assert!(false, "{}", m) }
    }

    #[test]
    fn invalid_components_are_nan(n in 2usize..40, one in any::<bool>()) {
        let cfg = GfskConfig::default();
        let bits = vec![one; n];
        let p = generate_packet(&DeviceProfile::new("d", 1_000.0), &bits, 0.0, &cfg, 0.0, 0).unwrap();
        let fp = extract_fingerprint(&p, &FingerprintOptions::remodulated(cfg)).unwrap();
        for i in 0..5 {
            prop_assert_eq!(fp.valid.is_valid(i), !fp.components[i].is_nan());
        }
        prop_assert_eq!(fp.valid.0.count_ones(), 2);
    }
}

#[test]
fn tone_estimate_matches_closed_form() {
    // arg of a constant phasor step, computed without the library
    let fs = 8.0e6;
    for hz in [-80e3, -40e3, -10e3, 0.0, 10e3, 40e3, 3.99e6] {
        let x: Vec<Complex64> = (0..400).map(|k| Complex64::from_polar(1.0, TAU * hz * k as f64 / fs)).collect();
        let wrapped = (TAU * hz / fs + PI).rem_euclid(TAU) - PI;
        let expected = wrapped * fs / TAU;
        let est = estimate_cfo_packet(&x, fs).unwrap();
        assert!((est - expected).abs() <= 1e-6 * expected.abs().max(1.0), "{hz}: {est}");
    }
}

#[test]
fn payload_independence() {
    let cfg = GfskConfig::default();
    let profile = DeviceProfile::new("d", 23_000.0);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let est: Vec<f64> = (0..50)
        .map(|_| {
            let bits: Vec<bool> = (0..128).map(|_| rng.random()).collect();
            let p = generate_packet(&profile, &bits, 0.0, &cfg, 0.0, 0).unwrap();
            extract_fingerprint(&p, &FingerprintOptions::remodulated(cfg)).unwrap().cfo_packet()
        })
        .collect();
    let spread = est.iter().cloned().fold(f64::MIN, f64::max) - est.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread < 100.0, "{spread}");
}

#[test]
fn noise_degrades_monotonically() {
    let cfg = GfskConfig::default();
    let profile = DeviceProfile::new("d", -12_000.0);
    let bits = balanced(64, 3);
    let std_at = |noise: f64| {
        let est: Vec<f64> = (0..200)
            .map(|seed| {
                let p = generate_packet(&profile, &bits, 0.0, &cfg, noise, seed).unwrap();
                extract_fingerprint(&p, &FingerprintOptions::remodulated(cfg)).unwrap().cfo_packet()
            })
            .collect();
        let m = est.iter().sum::<f64>() / est.len() as f64;
        (est.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (est.len() - 1) as f64).sqrt()
    };
    let stds: Vec<f64> = [0.0, 0.01, 0.05, 0.1, 0.3].into_iter().map(std_at).collect();
    assert!(stds.windows(2).all(|w| w[0] <= w[1]), "{stds:?}");
}

#[test]
fn batch_extraction_is_order_preserving_under_both_executors() {
    let cfg = GfskConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let packets: Vec<_> = (0..64)
        .map(|i| {
            let bits: Vec<bool> = (0..96).map(|_| rng.random()).collect();
            generate_packet(&DeviceProfile::new("d", i as f64 * 1000.0), &bits, i as f64, &cfg, 0.05, i).unwrap()
        })
        .collect();
    let opts = FingerprintOptions::remodulated(cfg);
    let seq: Vec<_> = extract_batch(&packets, &opts, Exec::Sequential).into_iter().map(Result::unwrap).collect();
    let par: Vec<_> = extract_batch(&packets, &opts, Exec::Parallel).into_iter().map(Result::unwrap).collect();
    assert_eq!(seq, par);
    for (i, fp) in seq.iter().enumerate() {
        assert!((fp.cfo_packet() - i as f64 * 1000.0).abs() < 600.0, "{i}: {}", fp.cfo_packet());
    }
}
