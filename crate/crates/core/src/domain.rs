//! Label space, mitigation costs, predictive distributions and calibration data.
//!
//! Labels are ordered `[no_transmission, wifi_only, subcarrier_1, ..., subcarrier_S]`,
//! so a space monitoring `S` subcarriers has `S + 2` labels.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::conformal::{nc_score, ScoreParams};
use crate::error::{BcpError, Result};

/// Probability floor applied before normalization and scoring.
pub const PROB_FLOOR: f64 = 1e-12;

/// Hypotheses over `S` monitored subcarriers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelSpace {
    num_subcarriers: usize,
}

impl LabelSpace {
    pub fn new(num_subcarriers: usize) -> Result<Self> {
        if num_subcarriers == 0 {
            return Err(BcpError::config(
                "num_subcarriers",
                "must monitor at least one subcarrier",
            ));
        }
        Ok(Self { num_subcarriers })
    }

    /// Label space with `num_labels = S + 2` entries.
    pub fn from_num_labels(num_labels: usize) -> Result<Self> {
        if num_labels < 3 {
            return Err(BcpError::config(
                "num_labels",
                "need at least 3 labels (two interference-free plus one subcarrier)",
            ));
        }
        Self::new(num_labels - 2)
    }

    pub fn num_subcarriers(&self) -> usize {
        self.num_subcarriers
    }

    pub fn size(&self) -> usize {
        self.num_subcarriers + 2
    }

    pub fn label(&self, index: usize) -> Option<Label> {
        let kind = match index {
            0 => LabelKind::NoTransmission,
            1 => LabelKind::WifiOnly,
            i if i < self.size() => LabelKind::Interference(i - 1),
            _ => return None,
        };
        Some(Label { index, kind })
    }

    pub fn labels(&self) -> impl Iterator<Item = Label> + '_ {
        (0..self.size()).filter_map(move |i| self.label(i))
    }

    /// Label index for interference on subcarrier `s` (1-based).
    pub fn interference(&self, subcarrier: usize) -> Option<Label> {
        if subcarrier == 0 || subcarrier > self.num_subcarriers {
            return None;
        }
        self.label(subcarrier + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LabelKind {
    NoTransmission,
    WifiOnly,
    /// Interference on the given 1-based monitored subcarrier.
    Interference(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Label {
    index: usize,
    kind: LabelKind,
}

impl Label {
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn kind(&self) -> LabelKind {
        self.kind
    }

    pub fn is_interference(&self) -> bool {
        matches!(self.kind, LabelKind::Interference(_))
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            LabelKind::NoTransmission => write!(f, "no_transmission"),
            LabelKind::WifiOnly => write!(f, "wifi_only"),
            LabelKind::Interference(s) => write!(f, "subcarrier_{s}"),
        }
    }
}

/// Per-label mitigation costs. Interference-free labels cost nothing;
/// every interference label has a cost in `(0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostModel {
    costs: Vec<f64>,
}

impl CostModel {
    pub fn new(space: &LabelSpace, costs: Vec<f64>) -> Result<Self> {
        if costs.len() != space.size() {
            return Err(BcpError::LengthMismatch {
                expected: space.size(),
                actual: costs.len(),
            });
        }
        for (i, &c) in costs.iter().enumerate() {
            if !(0.0..=1.0).contains(&c) {
                return Err(BcpError::config(format!("costs[{i}]"), "must lie in [0, 1]"));
            }
            if i < 2 && c != 0.0 {
                return Err(BcpError::config(
                    format!("costs[{i}]"),
                    "interference-free labels must have zero cost",
                ));
            }
            if i >= 2 && c <= 0.0 {
                return Err(BcpError::config(
                    format!("costs[{i}]"),
                    "interference labels must have positive cost",
                ));
            }
        }
        Ok(Self { costs })
    }

    /// Same cost `c` for every interference label.
    pub fn uniform(space: &LabelSpace, interference_cost: f64) -> Result<Self> {
        let mut costs = vec![interference_cost; space.size()];
        costs[0] = 0.0;
        costs[1] = 0.0;
        Self::new(space, costs)
    }

    pub fn cost(&self, index: usize) -> f64 {
        self.costs[index]
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn total(&self) -> f64 {
        self.costs.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }
}

/// A normalized softmax vector over the label space. Every entry is at
/// least [`PROB_FLOOR`] and the entries sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDistribution {
    probs: Vec<f64>,
}

impl PredictiveDistribution {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, index: usize) -> f64 {
        self.probs[index]
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Softmax of `logits`, then floored and renormalized.
    pub fn from_logits(space: &LabelSpace, logits: &[f64]) -> Result<Self> {
        if logits.len() != space.size() {
            return Err(BcpError::LengthMismatch {
                expected: space.size(),
                actual: logits.len(),
            });
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(BcpError::Domain {
                what: "logits",
                value: max,
            });
        }
        let raw: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
        normalize(space, &raw)
    }
}

/// Clamp every entry to at least [`PROB_FLOOR`] and divide by the sum.
pub fn normalize(space: &LabelSpace, raw: &[f64]) -> Result<PredictiveDistribution> {
    if raw.len() != space.size() {
        return Err(BcpError::LengthMismatch {
            expected: space.size(),
            actual: raw.len(),
        });
    }
    if let Some(&bad) = raw.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(BcpError::Domain {
            what: "raw probability weights",
            value: bad,
        });
    }
    if raw.iter().all(|&v| v == 0.0) {
        return Err(BcpError::AllZero);
    }
    let max = raw.iter().copied().fold(0.0, f64::max);
    // Scale first so the floor is applied relative to a unit-sized vector.
    let clamped: Vec<f64> = raw.iter().map(|&v| (v / max).max(PROB_FLOOR)).collect();
    let sum: f64 = clamped.iter().sum();
    let probs = clamped
        .into_iter()
        .map(|v| (v / sum).max(PROB_FLOOR))
        .collect();
    Ok(PredictiveDistribution { probs })
}

/// Most likely label; ties go to the smallest index.
pub fn point_estimate(space: &LabelSpace, dist: &PredictiveDistribution) -> Label {
    let mut best = 0;
    for (i, &p) in dist.probs.iter().enumerate().skip(1) {
        if p > dist.probs[best] {
            best = i;
        }
    }
    space.label(best).expect("distribution matches label space")
}

/// A labeled example: the detector output and the true hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub dist: PredictiveDistribution,
    pub true_label: usize,
    pub raw_input_id: Option<u64>,
}

impl Example {
    pub fn new(dist: PredictiveDistribution, true_label: usize) -> Result<Self> {
        if true_label >= dist.len() {
            return Err(BcpError::Domain {
                what: "true label index",
                value: true_label as f64,
            });
        }
        Ok(Self {
            dist,
            true_label,
            raw_input_id: None,
        })
    }

    pub fn with_id(mut self, id: u64) -> Self {
        self.raw_input_id = Some(id);
        self
    }

    pub fn true_prob(&self) -> f64 {
        self.dist.prob(self.true_label)
    }
}

/// Held-out examples with cached nonconformity scores `s(x_i, y_i)`.
///
/// Immutable once built; [`CalibrationSet::with_example`] returns a new set.
#[derive(Debug, Clone)]
pub struct CalibrationSet {
    examples: Vec<Example>,
    scores: Vec<f64>,
    score_sum: f64,
    params: ScoreParams,
}

impl CalibrationSet {
    pub fn new(examples: Vec<Example>, params: ScoreParams) -> Result<Self> {
        if examples.is_empty() {
            return Err(BcpError::EmptyInput);
        }
        let scores = examples
            .iter()
            .map(|e| nc_score(e.true_prob(), params))
            .collect::<Result<Vec<_>>>()?;
        let score_sum = scores.iter().sum();
        Ok(Self {
            examples,
            scores,
            score_sum,
            params,
        })
    }

    pub fn with_example(&self, example: Example) -> Result<Self> {
        let score = nc_score(example.true_prob(), self.params)?;
        let mut next = self.clone();
        next.examples.push(example);
        next.scores.push(score);
        next.score_sum += score;
        Ok(next)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn score_sum(&self) -> f64 {
        self.score_sum
    }

    pub fn params(&self) -> ScoreParams {
        self.params
    }
}
