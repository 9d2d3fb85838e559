//! Reproducible data sources standing in for a trained detector.

mod ofdm;
pub mod seed;
mod synthetic;

use std::io::{BufRead, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use ofdm::{BinEnergies, OfdmScenarioConfig, OfdmSimulator, ScenarioSample, WifiSymbols};
pub use synthetic::SyntheticDetectorConfig;

use crate::domain::{normalize, Example, LabelSpace};
use crate::error::{BcpError, Result};
use seed::{rng_for, STREAM_DATASET};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSource {
    Synthetic(SyntheticDetectorConfig),
    Ofdm(OfdmScenarioConfig),
}

impl DataSource {
    pub fn label_space(&self) -> Result<LabelSpace> {
        match self {
            DataSource::Synthetic(c) => c.label_space(),
            DataSource::Ofdm(c) => c.label_space(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DataSource::Synthetic(c) => c.validate(),
            DataSource::Ofdm(c) => c.validate(),
        }
    }

    pub fn sampler(&self) -> Result<Sampler> {
        self.validate()?;
        Ok(match self {
            DataSource::Synthetic(c) => Sampler::Synthetic {
                space: c.label_space()?,
                config: c.clone(),
            },
            DataSource::Ofdm(c) => Sampler::Ofdm(OfdmSimulator::new(c.clone())?),
        })
    }
}

/// A validated, ready-to-draw data source.
#[derive(Debug, Clone)]
pub enum Sampler {
    Synthetic {
        config: SyntheticDetectorConfig,
        space: LabelSpace,
    },
    Ofdm(OfdmSimulator),
}

impl Sampler {
    pub fn label_space(&self) -> LabelSpace {
        match self {
            Sampler::Synthetic { space, .. } => *space,
            Sampler::Ofdm(sim) => sim.label_space(),
        }
    }

    /// Example with a prescribed true label.
    pub fn example_for_label<R: Rng + ?Sized>(&self, label: usize, rng: &mut R) -> Result<Example> {
        match self {
            Sampler::Synthetic { config, space } => config.sample_for_label(space, label, rng),
            Sampler::Ofdm(sim) => sim.example_for_label(label, rng),
        }
    }

    /// I.i.d. draw: label from the source's class prior, then the detector output.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Example> {
        let label = match self {
            Sampler::Synthetic { config, .. } => config.draw_label(rng),
            Sampler::Ofdm(sim) => rng.random_range(0..sim.label_space().size()),
        };
        self.example_for_label(label, rng)
    }
}

/// One synthetic sample, deterministic in `seed`.
pub fn sample_synthetic(config: &SyntheticDetectorConfig, seed: u64) -> Result<ScenarioSample> {
    config.validate()?;
    let space = config.label_space()?;
    let mut rng = rng_for(seed, 0, 0);
    let label = config.draw_label(&mut rng);
    Ok(ScenarioSample {
        example: config.sample_for_label(&space, label, &mut rng)?,
        iq: None,
    })
}

/// One OFDM observation with its I/Q window, deterministic in `seed`.
pub fn sample_ofdm(config: &OfdmScenarioConfig, seed: u64) -> Result<ScenarioSample> {
    let sim = OfdmSimulator::new(config.clone())?;
    sim.sample(&mut rng_for(seed, 0, 0))
}

/// Balanced dataset: example `i` has label `i mod (S+2)` and its own seed
/// `derive_seed(master_seed, STREAM_DATASET, i)`.
pub fn generate_dataset(source: &DataSource, n_per_label: usize, master_seed: u64) -> Result<Vec<Example>> {
    if n_per_label == 0 {
        return Err(BcpError::config("n_per_label", "must be at least 1"));
    }
    let sampler = source.sampler()?;
    let n_labels = sampler.label_space().size();
    (0..n_per_label * n_labels)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(master_seed, STREAM_DATASET, i as u64);
            sampler
                .example_for_label(i % n_labels, &mut rng)
                .map(|e| e.with_id(i as u64))
        })
        .collect()
}

/// Header row of the dataset CSV: `label_index,p_0,...,p_{S+1}`.
pub fn csv_header(space: &LabelSpace) -> String {
    let mut h = String::from("label_index");
    for i in 0..space.size() {
        h.push_str(&format!(",p_{i}"));
    }
    h
}

/// Probabilities use the shortest round-tripping decimal form.
pub fn write_dataset_csv<W: Write>(mut out: W, space: &LabelSpace, examples: &[Example]) -> Result<()> {
    writeln!(out, "{}", csv_header(space))?;
    for ex in examples {
        write!(out, "{}", ex.true_label)?;
        for p in ex.dist.probs() {
            write!(out, ",{p}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Parse a dataset CSV. Rows are renormalized on load.
pub fn read_dataset_csv<R: BufRead>(input: R) -> Result<(LabelSpace, Vec<Example>)> {
    let mut lines = input.lines();
    let header = lines.next().ok_or(BcpError::EmptyInput)??;
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.first() != Some(&"label_index") {
        return Err(BcpError::config("csv header", "first column must be label_index"));
    }
    let space = LabelSpace::from_num_labels(cols.len() - 1)?;
    if header.trim() != csv_header(&space) {
        return Err(BcpError::config("csv header", format!("expected `{}`", csv_header(&space))));
    }
    let mut examples = Vec::new();
    for (row, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| BcpError::config(format!("csv row {}", row + 1), reason);
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != space.size() + 1 {
            return Err(bad(format!("expected {} fields, got {}", space.size() + 1, fields.len())));
        }
        let label: usize = fields[0].parse().map_err(|e| bad(format!("label_index: {e}")))?;
        let probs = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| bad(format!("probability: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let dist = normalize(&space, &probs)?;
        examples.push(Example::new(dist, label)?.with_id(row as u64));
    }
    Ok((space, examples))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_is_balanced_and_deterministic() {
        let src = DataSource::Synthetic(SyntheticDetectorConfig::default());
        let a = generate_dataset(&src, 5, 11).unwrap();
        assert_eq!(a.len(), 30);
        for y in 0..6 {
            assert_eq!(a.iter().filter(|e| e.true_label == y).count(), 5);
        }
        let b = generate_dataset(&src, 5, 11).unwrap();
        assert_eq!(a, b);
        let c = generate_dataset(&src, 5, 12).unwrap();
        assert_ne!(a, c);
        assert!(generate_dataset(&src, 0, 11).is_err());
    }

    #[test]
    fn one_per_label() {
        let src = DataSource::Ofdm(OfdmScenarioConfig::default());
        let d = generate_dataset(&src, 1, 3).unwrap();
        assert_eq!(d.iter().map(|e| e.true_label).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn csv_round_trip() {
        let src = DataSource::Synthetic(SyntheticDetectorConfig::default());
        let space = src.label_space().unwrap();
        let data = generate_dataset(&src, 3, 1).unwrap();
        let mut buf = Vec::new();
        write_dataset_csv(&mut buf, &space, &data).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("label_index,p_0,p_1,p_2,p_3,p_4,p_5\n"));
        let (space2, back) = read_dataset_csv(buf.as_slice()).unwrap();
        assert_eq!(space, space2);
        for (a, b) in data.iter().zip(&back) {
            assert_eq!(a.true_label, b.true_label);
            for (p, q) in a.dist.probs().iter().zip(b.dist.probs()) {
                assert!((p - q).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn csv_rejects_malformed_rows() {
        let text = "label_index,p_0,p_1,p_2\n0,0.5,0.5\n";
        assert!(read_dataset_csv(text.as_bytes()).is_err());
        let text = "label,p_0,p_1,p_2\n";
        assert!(read_dataset_csv(text.as_bytes()).is_err());
        let text = "label_index,p_0,p_1,p_2\n7,0.2,0.3,0.5\n";
        assert!(read_dataset_csv(text.as_bytes()).is_err());
    }

    #[test]
    fn single_samples_are_deterministic() {
        let cfg = SyntheticDetectorConfig::default();
        let a = sample_synthetic(&cfg, 4).unwrap();
        let b = sample_synthetic(&cfg, 4).unwrap();
        assert_eq!(a.example, b.example);
        let o = sample_ofdm(&OfdmScenarioConfig::default(), 4).unwrap();
        assert_eq!(o.iq.as_ref().unwrap().len(), 512);
        let o2 = sample_ofdm(&OfdmScenarioConfig::default(), 4).unwrap();
        assert_eq!(o.iq, o2.iq);
        let bad = OfdmScenarioConfig {
            monitored_bins: vec![1, 1],
            ..Default::default()
        };
        assert!(sample_ofdm(&bad, 0).is_err());
    }
}
