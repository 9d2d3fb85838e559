//! Simplified OFDM observation model with a single-bin narrowband tone.
//!
//! Each observation spans `num_symbols` OFDM symbols of `num_bins`
//! subcarriers. Per-bin WiFi power is one, so the noise power is
//! `10^(-snr_db/10)` and the tone power is `10^(-sir_db/10)`. The I/Q
//! window is the unitary inverse FFT of every symbol, concatenated, giving
//! `M = num_bins * num_symbols` complex samples.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::domain::{Example, LabelSpace, PredictiveDistribution};
use crate::error::{BcpError, Result};

/// Frequency-domain WiFi payload on each occupied bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WifiSymbols {
    /// Unit-power QPSK.
    Qpsk,
    /// Unit-power circular complex Gaussian; the energy detector's model is exact.
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OfdmScenarioConfig {
    pub num_bins: usize,
    pub num_symbols: usize,
    pub snr_db: f64,
    pub sir_db: f64,
    /// One FFT bin per monitored subcarrier, in label order.
    pub monitored_bins: Vec<usize>,
    /// Noise power the detector believes in; `None` uses the true value.
    pub assumed_noise_power: Option<f64>,
    pub wifi_symbols: WifiSymbols,
}

impl Default for OfdmScenarioConfig {
    fn default() -> Self {
        Self {
            num_bins: 64,
            num_symbols: 8,
            snr_db: 10.0,
            sir_db: 5.0,
            monitored_bins: vec![10, 22, 42, 54],
            assumed_noise_power: None,
            wifi_symbols: WifiSymbols::Gaussian,
        }
    }
}

impl OfdmScenarioConfig {
    pub fn label_space(&self) -> Result<LabelSpace> {
        LabelSpace::new(self.monitored_bins.len())
    }

    pub fn window_len(&self) -> usize {
        self.num_bins * self.num_symbols
    }

    pub fn noise_power(&self) -> f64 {
        10f64.powf(-self.snr_db / 10.0)
    }

    /// Tone power relative to unit per-bin WiFi power.
    pub fn tone_power(&self) -> f64 {
        10f64.powf(-self.sir_db / 10.0)
    }

    pub fn detector_noise_power(&self) -> f64 {
        self.assumed_noise_power.unwrap_or_else(|| self.noise_power())
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_bins < 2 {
            return Err(BcpError::config("ofdm.num_bins", "need at least 2 bins"));
        }
        if self.num_symbols == 0 {
            return Err(BcpError::config("ofdm.num_symbols", "must be at least 1"));
        }
        if self.monitored_bins.is_empty() {
            return Err(BcpError::config(
                "ofdm.monitored_bins",
                "must monitor at least one bin",
            ));
        }
        if self.monitored_bins.len() >= self.num_bins {
            return Err(BcpError::config(
                "ofdm.monitored_bins",
                "at least one bin must remain unmonitored",
            ));
        }
        for (i, &b) in self.monitored_bins.iter().enumerate() {
            if b >= self.num_bins {
                return Err(BcpError::config(
                    format!("ofdm.monitored_bins[{i}]"),
                    format!("bin {b} outside [0, {})", self.num_bins),
                ));
            }
            if self.monitored_bins[..i].contains(&b) {
                return Err(BcpError::config(
                    format!("ofdm.monitored_bins[{i}]"),
                    format!("bin {b} listed twice"),
                ));
            }
        }
        if !self.snr_db.is_finite() || !self.sir_db.is_finite() {
            return Err(BcpError::config("ofdm.snr_db/sir_db", "must be finite"));
        }
        if let Some(p) = self.assumed_noise_power {
            if !(p > 0.0 && p.is_finite()) {
                return Err(BcpError::config(
                    "ofdm.assumed_noise_power",
                    "must be positive",
                ));
            }
        }
        Ok(())
    }
}

/// Average energy per bin over the symbols of one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct BinEnergies {
    pub energies: Vec<f64>,
    pub num_symbols: usize,
}

#[derive(Debug, Clone)]
pub struct ScenarioSample {
    pub example: Example,
    pub iq: Option<Vec<Complex64>>,
}

/// Holds FFT plans so repeated sampling does not re-plan.
#[derive(Clone)]
pub struct OfdmSimulator {
    config: OfdmScenarioConfig,
    space: LabelSpace,
    ifft: Arc<dyn Fft<f64>>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for OfdmSimulator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OfdmSimulator")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R, power: f64) -> Complex64 {
    let scale = (power / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * scale, im * scale)
}

impl OfdmSimulator {
    pub fn new(config: OfdmScenarioConfig) -> Result<Self> {
        config.validate()?;
        let space = config.label_space()?;
        let mut planner = FftPlanner::new();
        let ifft = planner.plan_fft_inverse(config.num_bins);
        let fft = planner.plan_fft_forward(config.num_bins);
        Ok(Self {
            config,
            space,
            ifft,
            fft,
        })
    }

    pub fn config(&self) -> &OfdmScenarioConfig {
        &self.config
    }

    pub fn label_space(&self) -> LabelSpace {
        self.space
    }

    /// Frequency-domain grid `[symbol][bin]` for hypothesis `label`.
    pub fn synthesize_grid<R: Rng + ?Sized>(&self, label: usize, rng: &mut R) -> Vec<Vec<Complex64>> {
        let cfg = &self.config;
        let noise = cfg.noise_power();
        let wifi_on = label != 0;
        let tone_bin = (label >= 2).then(|| cfg.monitored_bins[label - 2]);
        let tone_amp = cfg.tone_power().sqrt();
        let phase0 = rng.random::<f64>() * 2.0 * PI;
        let drift = rng.random::<f64>() * 2.0 * PI;
        (0..cfg.num_symbols)
            .map(|t| {
                (0..cfg.num_bins)
                    .map(|k| {
                        let mut x = complex_normal(rng, noise);
                        if wifi_on {
                            x += match cfg.wifi_symbols {
                                WifiSymbols::Qpsk => {
                                    let a = std::f64::consts::FRAC_1_SQRT_2;
                                    let re = if rng.random::<bool>() { a } else { -a };
                                    let im = if rng.random::<bool>() { a } else { -a };
                                    Complex64::new(re, im)
                                }
                                WifiSymbols::Gaussian => complex_normal(rng, 1.0),
                            };
                        }
                        if tone_bin == Some(k) {
                            x += Complex64::from_polar(tone_amp, phase0 + drift * t as f64);
                        }
                        x
                    })
                    .collect()
            })
            .collect()
    }

    /// Unitary inverse FFT of each symbol, concatenated.
    pub fn to_iq(&self, grid: &[Vec<Complex64>]) -> Vec<Complex64> {
        let n = self.config.num_bins;
        let scale = 1.0 / (n as f64).sqrt();
        let mut iq = Vec::with_capacity(grid.len() * n);
        for symbol in grid {
            let mut buf = symbol.clone();
            self.ifft.process(&mut buf);
            iq.extend(buf.into_iter().map(|v| v * scale));
        }
        iq
    }

    pub fn energies_from_iq(&self, iq: &[Complex64]) -> Result<BinEnergies> {
        let n = self.config.num_bins;
        if iq.is_empty() || !iq.len().is_multiple_of(n) {
            return Err(BcpError::LengthMismatch {
                expected: self.config.window_len(),
                actual: iq.len(),
            });
        }
        let scale = 1.0 / (n as f64).sqrt();
        let mut acc = vec![0.0; n];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for chunk in iq.chunks(n) {
            buf.copy_from_slice(chunk);
            self.fft.process(&mut buf);
            for (a, v) in acc.iter_mut().zip(&buf) {
                *a += (v * scale).norm_sqr();
            }
        }
        let symbols = iq.len() / n;
        for a in &mut acc {
            *a /= symbols as f64;
        }
        Ok(BinEnergies {
            energies: acc,
            num_symbols: symbols,
        })
    }

    pub fn energies_from_grid(grid: &[Vec<Complex64>]) -> BinEnergies {
        let n = grid.first().map_or(0, Vec::len);
        let mut acc = vec![0.0; n];
        for symbol in grid {
            for (a, v) in acc.iter_mut().zip(symbol) {
                *a += v.norm_sqr();
            }
        }
        for a in &mut acc {
            *a /= grid.len() as f64;
        }
        BinEnergies {
            energies: acc,
            num_symbols: grid.len(),
        }
    }

    /// Posterior over the label space from per-bin energies.
    ///
    /// Every bin is modeled as circular complex Gaussian with a variance set
    /// by the hypothesis: noise only, WiFi plus noise, or WiFi plus noise plus
    /// the tone on one monitored bin. Unmonitored bins enter through their
    /// pooled energy. Labels are equiprobable a priori.
    pub fn bayes_energy_detector(&self, energies: &BinEnergies) -> Result<PredictiveDistribution> {
        let cfg = &self.config;
        if energies.energies.len() != cfg.num_bins {
            return Err(BcpError::LengthMismatch {
                expected: cfg.num_bins,
                actual: energies.energies.len(),
            });
        }
        let t = energies.num_symbols as f64;
        let noise = cfg.detector_noise_power();
        let busy = 1.0 + noise;
        let hot = busy + cfg.tone_power();
        // Gaussian log-likelihood of T samples with mean energy `e`, constants dropped.
        let ll = |v: f64, e: f64| -t * (v.ln() + e / v);

        let monitored: Vec<f64> = cfg.monitored_bins.iter().map(|&b| energies.energies[b]).collect();
        let rest_count = (cfg.num_bins - monitored.len()) as f64;
        let rest_sum: f64 = energies.energies.iter().sum::<f64>() - monitored.iter().sum::<f64>();
        let pooled = |v: f64| -t * (rest_count * v.ln() + rest_sum / v);

        let quiet: f64 = monitored.iter().map(|&e| ll(noise, e)).sum::<f64>() + pooled(noise);
        let wifi_mon: Vec<f64> = monitored.iter().map(|&e| ll(busy, e)).collect();
        let wifi: f64 = wifi_mon.iter().sum::<f64>() + pooled(busy);

        let mut logits = Vec::with_capacity(self.space.size());
        logits.push(quiet);
        logits.push(wifi);
        for (s, &e) in monitored.iter().enumerate() {
            logits.push(wifi - wifi_mon[s] + ll(hot, e));
        }
        PredictiveDistribution::from_logits(&self.space, &logits)
    }

    /// Observation under hypothesis `label`; the detector runs on the I/Q window.
    pub fn sample_for_label<R: Rng + ?Sized>(&self, label: usize, rng: &mut R) -> Result<ScenarioSample> {
        if label >= self.space.size() {
            return Err(BcpError::Domain {
                what: "label index",
                value: label as f64,
            });
        }
        let grid = self.synthesize_grid(label, rng);
        let iq = self.to_iq(&grid);
        let energies = self.energies_from_iq(&iq)?;
        let dist = self.bayes_energy_detector(&energies)?;
        Ok(ScenarioSample {
            example: Example::new(dist, label)?,
            iq: Some(iq),
        })
    }

    /// Label drawn uniformly over the label space.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ScenarioSample> {
        let label = rng.random_range(0..self.space.size());
        self.sample_for_label(label, rng)
    }

    /// Like [`Self::sample_for_label`] but skips the time-domain round trip.
    pub fn example_for_label<R: Rng + ?Sized>(&self, label: usize, rng: &mut R) -> Result<Example> {
        let grid = self.synthesize_grid(label, rng);
        let dist = self.bayes_energy_detector(&Self::energies_from_grid(&grid))?;
        Example::new(dist, label)
    }
}
