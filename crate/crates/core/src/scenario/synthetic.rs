//! Softmax generator with controllable miscalibration.
//!
//! Logits are `z_j = margin * [j == y] + sigma * n_j` with i.i.d. standard
//! normal `n_j`. Under this model the exact posterior is
//! `softmax(margin / sigma^2 * z + ln prior)`, so emitting that vector with
//! temperature one yields a perfectly calibrated detector. Dividing the
//! posterior logits by a temperature below one makes it overconfident.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::{Example, LabelSpace, PredictiveDistribution};
use crate::error::{BcpError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticDetectorConfig {
    pub num_subcarriers: usize,
    /// Elevation of the true label's logit.
    pub margin: f64,
    /// Standard deviation of the logit noise.
    pub confusion_scale: f64,
    pub temperature: f64,
    /// `None` means uniform.
    pub class_prior: Option<Vec<f64>>,
}

impl Default for SyntheticDetectorConfig {
    fn default() -> Self {
        Self {
            num_subcarriers: 4,
            margin: 2.0,
            confusion_scale: 1.0,
            temperature: 1.0,
            class_prior: None,
        }
    }
}

impl SyntheticDetectorConfig {
    pub fn label_space(&self) -> Result<LabelSpace> {
        LabelSpace::new(self.num_subcarriers)
    }

    pub fn validate(&self) -> Result<()> {
        let space = self.label_space()?;
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(BcpError::config("synthetic.temperature", "must be positive"));
        }
        if !(self.confusion_scale >= 0.0 && self.confusion_scale.is_finite()) {
            return Err(BcpError::config(
                "synthetic.confusion_scale",
                "must be nonnegative",
            ));
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(BcpError::config("synthetic.margin", "must be positive"));
        }
        if let Some(prior) = &self.class_prior {
            if prior.len() != space.size() {
                return Err(BcpError::config(
                    "synthetic.class_prior",
                    format!("expected {} entries, got {}", space.size(), prior.len()),
                ));
            }
            if prior.iter().any(|&p| p.is_nan() || p <= 0.0) {
                return Err(BcpError::config(
                    "synthetic.class_prior",
                    "entries must be positive",
                ));
            }
            if (prior.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(BcpError::config("synthetic.class_prior", "must sum to 1"));
            }
        }
        Ok(())
    }

    fn prior(&self, index: usize) -> f64 {
        match &self.class_prior {
            Some(p) => p[index],
            None => 1.0 / (self.num_subcarriers + 2) as f64,
        }
    }

    /// Draw a label from the class prior.
    pub fn draw_label<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let n = self.num_subcarriers + 2;
        match &self.class_prior {
            None => rng.random_range(0..n),
            Some(prior) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (i, p) in prior.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return i;
                    }
                }
                n - 1
            }
        }
    }

    /// Draw the detector output for an input whose true label is `label`.
    pub fn sample_for_label<R: Rng + ?Sized>(
        &self,
        space: &LabelSpace,
        label: usize,
        rng: &mut R,
    ) -> Result<Example> {
        let n = space.size();
        let sigma = self.confusion_scale;
        let dist = if sigma == 0.0 {
            let mut raw = vec![0.0; n];
            raw[label] = 1.0;
            crate::domain::normalize(space, &raw)?
        } else {
            let gain = self.margin / (sigma * sigma);
            let logits: Vec<f64> = (0..n)
                .map(|j| {
                    let noise: f64 = StandardNormal.sample(rng);
                    let z = if j == label { self.margin } else { 0.0 } + sigma * noise;
                    (gain * z + self.prior(j).ln()) / self.temperature
                })
                .collect();
            PredictiveDistribution::from_logits(space, &logits)?
        };
        Example::new(dist, label)
    }
}
