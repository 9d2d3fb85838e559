use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use bcp_nbi::domain::Example;
use bcp_nbi::harness::metrics::{expected_calibration_error, reliability_bins, reliability_slope};
use bcp_nbi::scenario::{OfdmScenarioConfig, OfdmSimulator, SyntheticDetectorConfig, WifiSymbols};

// Abramowitz & Stegun 7.1.26, |error| < 1.5e-7.
fn erf(x: f64) -> f64 {
    let t = 1.0 / (1.0 + 0.327_591_1 * x.abs());
    let poly = t
        * (0.254_829_592
            + t * (-0.284_496_736 + t * (1.421_413_741 + t * (-1.453_152_027 + t * 1.061_405_429))));
    let y = 1.0 - poly * (-x * x).exp();
    if x >= 0.0 {
        y
    } else {
        -y
    }
}

fn norm_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / 2f64.sqrt()))
}

/// P(d + N0 > max_j Nj) over `others` independent standard normals.
fn argmax_accuracy(d: f64, others: usize) -> f64 {
    let (lo, hi, steps) = (-10.0, 10.0, 20_000);
    let h = (hi - lo) / steps as f64;
    (0..=steps)
        .map(|i| {
            let x = lo + i as f64 * h;
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            w * (-x * x / 2.0).exp() / (2.0 * PI).sqrt() * norm_cdf(x + d).powi(others as i32)
        })
        .sum::<f64>()
        * h
}

fn top1(ex: &Example) -> (f64, bool) {
    let p = ex.dist.probs();
    let best = (0..p.len()).fold(0, |b, i| if p[i] > p[b] { i } else { b });
    (p[best], best == ex.true_label)
}

fn synthetic_draws(cfg: &SyntheticDetectorConfig, n: usize, seed: u64) -> Vec<Example> {
    let space = cfg.label_space().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let y = cfg.draw_label(&mut rng);
            cfg.sample_for_label(&space, y, &mut rng).unwrap()
        })
        .collect()
}

#[test]
fn synthetic_accuracy_matches_gaussian_argmax() {
    let cfg = SyntheticDetectorConfig {
        margin: 1.5,
        confusion_scale: 0.8,
        ..Default::default()
    };
    let n = 1_000_000;
    let draws = synthetic_draws(&cfg, n, 11);
    let acc = draws.iter().filter(|e| top1(e).1).count() as f64 / n as f64;
    let expected = argmax_accuracy(cfg.margin / cfg.confusion_scale, cfg.num_subcarriers + 1);
    let se = (expected * (1.0 - expected) / n as f64).sqrt();
    assert!(
        (acc - expected).abs() < 4.0 * se,
        "accuracy {acc}, analytic {expected}, se {se}"
    );
}

#[test]
fn synthetic_is_calibrated_at_unit_temperature() {
    let draws = synthetic_draws(&SyntheticDetectorConfig::default(), 200_000, 12);
    let conf: f64 = draws.iter().map(|e| top1(e).0).sum::<f64>() / draws.len() as f64;
    let acc = draws.iter().filter(|e| top1(e).1).count() as f64 / draws.len() as f64;
    assert!((conf - acc).abs() < 0.005, "confidence {conf}, accuracy {acc}");
    // True-label probability is unbiased for the hit indicator of every label.
    let mean_true: f64 = draws.iter().map(|e| e.true_prob()).sum::<f64>() / draws.len() as f64;
    let mean_sq: f64 = draws
        .iter()
        .map(|e| e.dist.probs().iter().map(|p| p * p).sum::<f64>())
        .sum::<f64>()
        / draws.len() as f64;
    assert!((mean_true - mean_sq).abs() < 0.005, "E[p_y] {mean_true}, E[sum p^2] {mean_sq}");
    assert!(expected_calibration_error(&draws, 15) < 0.01);
}

#[test]
fn low_temperature_is_overconfident() {
    let cfg = SyntheticDetectorConfig {
        temperature: 0.25,
        ..Default::default()
    };
    let draws = synthetic_draws(&cfg, 100_000, 13);
    let conf: f64 = draws.iter().map(|e| top1(e).0).sum::<f64>() / draws.len() as f64;
    let acc = draws.iter().filter(|e| top1(e).1).count() as f64 / draws.len() as f64;
    assert!(conf > acc + 0.05, "confidence {conf}, accuracy {acc}");
}

/// Per-bin power averaged over symbols, by direct DFT.
fn bin_powers(iq: &[Complex64], n: usize) -> Vec<f64> {
    let mut acc = vec![0.0; n];
    let symbols = iq.len() / n;
    for chunk in iq.chunks(n) {
        for (k, a) in acc.iter_mut().enumerate() {
            let v: Complex64 = chunk
                .iter()
                .enumerate()
                .map(|(t, x)| x * Complex64::from_polar(1.0, -2.0 * PI * (k * t) as f64 / n as f64))
                .sum();
            *a += v.norm_sqr() / n as f64;
        }
    }
    acc.iter().map(|a| a / symbols as f64).collect()
}

fn mean_powers(sim: &OfdmSimulator, label: usize, samples: usize, seed: u64) -> Vec<f64> {
    let n = sim.config().num_bins;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = vec![0.0; n];
    for _ in 0..samples {
        let s = sim.sample_for_label(label, &mut rng).unwrap();
        let iq = s.iq.unwrap();
        assert_eq!(iq.len(), sim.config().window_len());
        for (a, p) in acc.iter_mut().zip(bin_powers(&iq, n)) {
            *a += p;
        }
    }
    acc.iter().map(|a| a / samples as f64).collect()
}

#[test]
fn interfered_bin_carries_eleven_times_the_power() {
    let cfg = OfdmScenarioConfig {
        snr_db: 40.0,
        sir_db: -10.0,
        ..Default::default()
    };
    let sim = OfdmSimulator::new(cfg.clone()).unwrap();
    let s = 1;
    let powers = mean_powers(&sim, 2 + s, 300, 21);
    let hot = powers[cfg.monitored_bins[s]];
    let others: Vec<f64> = (0..cfg.num_bins)
        .filter(|&k| k != cfg.monitored_bins[s])
        .map(|k| powers[k])
        .collect();
    let wifi = others.iter().sum::<f64>() / others.len() as f64;
    assert!((wifi - 1.0).abs() < 0.02, "wifi bin power {wifi}");
    let ratio = hot / wifi;
    assert!((ratio - 11.0).abs() < 0.3, "ratio {ratio}");
}

#[test]
fn noise_only_power_matches_noise_floor() {
    let cfg = OfdmScenarioConfig {
        snr_db: 3.0,
        ..Default::default()
    };
    let sim = OfdmSimulator::new(cfg.clone()).unwrap();
    let powers = mean_powers(&sim, 0, 200, 22);
    let mean = powers.iter().sum::<f64>() / powers.len() as f64;
    let expected = 10f64.powf(-cfg.snr_db / 10.0);
    assert!((mean / expected - 1.0).abs() < 0.02, "mean {mean}, expected {expected}");
}

fn ofdm_draws(cfg: OfdmScenarioConfig, n: usize, seed: u64) -> Vec<Example> {
    let sim = OfdmSimulator::new(cfg).unwrap();
    let labels = sim.label_space().size();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| sim.example_for_label(i % labels, &mut rng).unwrap())
        .collect()
}

#[test]
fn matched_energy_detector_is_calibrated() {
    let draws = ofdm_draws(OfdmScenarioConfig::default(), 12_000, 23);
    let bins = reliability_bins(&draws, 10);
    let slope = reliability_slope(&bins);
    assert!((slope - 1.0).abs() < 0.05, "slope {slope}");
    let ece = expected_calibration_error(&draws, 10);
    assert!(ece < 0.03, "ece {ece}");
}

#[test]
fn mismatched_noise_belief_miscalibrates() {
    let cfg = OfdmScenarioConfig {
        assumed_noise_power: Some(0.02),
        ..Default::default()
    };
    let draws = ofdm_draws(cfg, 6_000, 24);
    assert!(expected_calibration_error(&draws, 10) > 0.05);
}

#[test]
fn constant_modulus_payload_breaks_the_gaussian_model() {
    let cfg = OfdmScenarioConfig {
        wifi_symbols: WifiSymbols::Qpsk,
        ..Default::default()
    };
    let draws = ofdm_draws(cfg, 6_000, 25);
    let conf: f64 = draws.iter().map(|e| top1(e).0).sum::<f64>() / draws.len() as f64;
    let acc = draws.iter().filter(|e| top1(e).1).count() as f64 / draws.len() as f64;
    assert!(acc > conf + 0.1, "confidence {conf}, accuracy {acc}");
}
