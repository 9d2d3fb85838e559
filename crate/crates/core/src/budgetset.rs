//! Generalized top-K prediction sets under a mitigation budget.
//!
//! Labels are ranked by descending probability and the longest prefix whose
//! cumulative mitigation cost fits the budget is retained. The threshold of
//! the equivalent `{y : p(y|x) > lambda}` rule is the probability of the
//! first excluded label.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::domain::{CostModel, LabelSpace, PredictiveDistribution};
use crate::error::{BcpError, Result};

/// Operational mitigation budget `K >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Budget(f64);

impl Budget {
    pub fn new(k: f64) -> Result<Self> {
        if k.is_nan() || k < 0.0 {
            return Err(BcpError::Domain {
                what: "budget",
                value: k,
            });
        }
        Ok(Self(k))
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Budget {
    type Error = BcpError;

    fn try_from(k: f64) -> Result<Self> {
        Budget::new(k)
    }
}

impl From<Budget> for f64 {
    fn from(b: Budget) -> f64 {
        b.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSetResult {
    ordering: Vec<usize>,
    c_max: usize,
    lambda_star: Option<f64>,
}

impl PredictionSetResult {
    /// All label indices, most probable first.
    pub fn ordering(&self) -> &[usize] {
        &self.ordering
    }

    pub fn c_max(&self) -> usize {
        self.c_max
    }

    /// `None` when every label is retained.
    pub fn lambda_star(&self) -> Option<f64> {
        self.lambda_star
    }

    pub fn included(&self) -> &[usize] {
        &self.ordering[..self.c_max]
    }

    pub fn excluded(&self) -> &[usize] {
        &self.ordering[self.c_max..]
    }

    /// The label at rank `c_max + 1`, if any.
    pub fn first_excluded(&self) -> Option<usize> {
        self.ordering.get(self.c_max).copied()
    }

    pub fn is_full(&self) -> bool {
        self.c_max == self.ordering.len()
    }

    pub fn contains(&self, label: usize) -> bool {
        self.included().contains(&label)
    }
}

/// Stable descending sort by probability; ties keep ascending label index.
pub fn order_labels(dist: &PredictiveDistribution) -> Vec<usize> {
    let probs = dist.probs();
    let mut idx: Vec<usize> = (0..probs.len()).collect();
    idx.sort_by(|&a, &b| {
        probs[b]
            .partial_cmp(&probs[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx
}

/// Largest `m` such that the first `m` labels of `ordering` cost at most `K`.
pub fn compute_cmax(ordering: &[usize], costs: &CostModel, budget: Budget) -> usize {
    let mut spent = 0.0;
    for (m, &label) in ordering.iter().enumerate() {
        spent += costs.cost(label);
        if spent > budget.value() {
            return m;
        }
    }
    ordering.len()
}

/// Probability of the first excluded label, or `None` for a full set.
pub fn lambda_star(ordering: &[usize], c_max: usize, dist: &PredictiveDistribution) -> Option<f64> {
    ordering.get(c_max).map(|&label| dist.prob(label))
}

pub fn build_set(
    dist: &PredictiveDistribution,
    costs: &CostModel,
    budget: Budget,
) -> PredictionSetResult {
    debug_assert_eq!(dist.len(), costs.len());
    let ordering = order_labels(dist);
    let c_max = compute_cmax(&ordering, costs, budget);
    let lambda = lambda_star(&ordering, c_max, dist);
    PredictionSetResult {
        ordering,
        c_max,
        lambda_star: lambda,
    }
}

/// Checks the distribution and cost model agree with `space` before building.
pub fn build_set_checked(
    space: &LabelSpace,
    dist: &PredictiveDistribution,
    costs: &CostModel,
    budget: Budget,
) -> Result<PredictionSetResult> {
    for len in [dist.len(), costs.len()] {
        if len != space.size() {
            return Err(BcpError::LengthMismatch {
                expected: space.size(),
                actual: len,
            });
        }
    }
    Ok(build_set(dist, costs, budget))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::normalize;

    fn space() -> LabelSpace {
        LabelSpace::new(4).unwrap()
    }

    fn dist(p: &[f64]) -> PredictiveDistribution {
        normalize(&space(), p).unwrap()
    }

    // Brute force over every prefix length.
    fn cmax_oracle(pos_costs: &[f64], k: f64) -> usize {
        (0..=pos_costs.len())
            .filter(|&m| pos_costs[..m].iter().sum::<f64>() <= k)
            .max()
            .unwrap()
    }

    #[test]
    fn ordering_examples() {
        assert_eq!(
            order_labels(&dist(&[0.4, 0.3, 0.2, 0.05, 0.03, 0.02])),
            vec![0, 1, 2, 3, 4, 5]
        );
        assert_eq!(
            order_labels(&dist(&[0.02, 0.03, 0.05, 0.2, 0.3, 0.4])),
            vec![5, 4, 3, 2, 1, 0]
        );
        assert_eq!(
            order_labels(&dist(&[0.25, 0.25, 0.25, 0.25, 0.0, 0.0])),
            vec![0, 1, 2, 3, 4, 5]
        );
    }

    #[test]
    fn cmax_positional_costs() {
        // Zero-cost labels land at ranks 1 and 5: per-position costs [0,1,1,1,0,1].
        let d = dist(&[0.4, 0.03, 0.3, 0.2, 0.05, 0.02]);
        let ordering = order_labels(&d);
        assert_eq!(ordering, vec![0, 2, 3, 4, 1, 5]);
        let costs = CostModel::uniform(&space(), 1.0).unwrap();
        let pos: Vec<f64> = ordering.iter().map(|&l| costs.cost(l)).collect();
        assert_eq!(pos, vec![0.0, 1.0, 1.0, 1.0, 0.0, 1.0]);
        let k = Budget::new(2.0).unwrap();
        assert_eq!(cmax_oracle(&pos, 2.0), 3);
        assert_eq!(compute_cmax(&ordering, &costs, k), 3);
    }

    #[test]
    fn cmax_edge_cases() {
        let costs = CostModel::uniform(&space(), 1.0).unwrap();
        let d = dist(&[0.1, 0.1, 0.5, 0.1, 0.1, 0.1]);
        let ordering = order_labels(&d);
        let k = Budget::new(costs.total()).unwrap();
        assert_eq!(compute_cmax(&ordering, &costs, k), 6);
        assert_eq!(compute_cmax(&ordering, &costs, Budget::new(0.0).unwrap()), 0);
    }

    #[test]
    fn lambda_star_examples() {
        let d = dist(&[0.4, 0.3, 0.2, 0.05, 0.03, 0.02]);
        let ordering = order_labels(&d);
        assert!((lambda_star(&ordering, 3, &d).unwrap() - 0.05).abs() < 1e-12);
        assert_eq!(lambda_star(&ordering, 6, &d), None);
        assert!((lambda_star(&ordering, 0, &d).unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn build_set_examples() {
        // Costs placed so the per-position costs of the ordering are [0,1,1,1,0,1].
        let c = CostModel::new(&space(), vec![0.0, 0.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        let d = dist(&[0.4, 0.03, 0.3, 0.2, 0.05, 0.02]);
        let r = build_set(&d, &c, Budget::new(2.0).unwrap());
        assert_eq!(r.c_max(), 3);
        assert_eq!(r.included(), &[0, 2, 3]);
        assert!((r.lambda_star().unwrap() - 0.05).abs() < 1e-12);
        assert_eq!(r.first_excluded(), Some(4));

        let full = build_set(&d, &c, Budget::new(10.0).unwrap());
        assert!(full.is_full());
        assert_eq!(full.lambda_star(), None);

        let d = dist(&[0.35, 0.3, 0.1, 0.1, 0.1, 0.05]);
        let r = build_set(&d, &c, Budget::new(0.0).unwrap());
        assert_eq!(r.included(), &[0, 1]);
    }

    #[test]
    fn budget_rejects_negative() {
        assert!(Budget::new(-0.5).is_err());
        assert!(Budget::new(f64::NAN).is_err());
        assert!(serde_json::from_str::<Budget>("-1.0").is_err());
        assert_eq!(serde_json::from_str::<Budget>("2.5").unwrap().value(), 2.5);
    }

    #[test]
    fn checked_build_rejects_mismatch() {
        let other = LabelSpace::new(3).unwrap();
        let c = CostModel::uniform(&space(), 1.0).unwrap();
        let d = dist(&[1.0; 6]);
        assert!(build_set_checked(&other, &d, &c, Budget::new(1.0).unwrap()).is_err());
        assert!(build_set_checked(&space(), &d, &c, Budget::new(1.0).unwrap()).is_ok());
    }
}
