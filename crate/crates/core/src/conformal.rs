//! Nonconformity scores, e-values and the two per-input miscoverage
//! estimators: the backward-conformal (BCP) closed form and the naive
//! excluded-mass estimate (NME).
//!
//! For a calibration set with scores `s_1..s_N` and a test score `s_0`,
//!
//! ```text
//! E = s_0 / ((s_1 + ... + s_N + s_0) / (N + 1))
//! ```
//!
//! The BCP estimate is `1 / E` evaluated at the first label excluded by the
//! budgeted set, clamped to at most one.

use serde::{Deserialize, Serialize};

use crate::budgetset::PredictionSetResult;
use crate::domain::{CalibrationSet, PredictiveDistribution, PROB_FLOOR};
use crate::error::{BcpError, Result};

/// Exponent of the score `s = p^(-beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreParams {
    beta: f64,
}

impl ScoreParams {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(BcpError::Domain {
                what: "beta",
                value: beta,
            });
        }
        Ok(Self { beta })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

impl Default for ScoreParams {
    fn default() -> Self {
        Self { beta: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Bcp,
    Nme,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::Bcp, Method::Nme];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Bcp => "BCP",
            Method::Nme => "NME",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiscoverageEstimate {
    pub value: f64,
    pub method: Method,
    /// Unclamped e-value at the first excluded label (BCP only). For a full
    /// set this is the supremum `N_cal + 1`.
    pub e_value: Option<f64>,
}

/// `p^(-beta)`. The probability must already be floored.
pub fn nc_score(p: f64, params: ScoreParams) -> Result<f64> {
    if !(PROB_FLOOR..=1.0 + 1e-9).contains(&p) {
        return Err(BcpError::Domain {
            what: "nonconformity score probability",
            value: p,
        });
    }
    let s = p.powf(-params.beta);
    if !s.is_finite() {
        return Err(BcpError::Domain {
            what: "nonconformity score",
            value: s,
        });
    }
    Ok(s)
}

/// Ratio of `test_score` to the mean of the pooled calibration and test scores.
pub fn e_value_from_sum(test_score: f64, score_sum: f64, n_cal: usize) -> f64 {
    test_score * (n_cal as f64 + 1.0) / (score_sum + test_score)
}

pub fn e_value(test_score: f64, cal: &CalibrationSet) -> f64 {
    e_value_from_sum(test_score, cal.score_sum(), cal.len())
}

/// BCP estimate straight from raw scores. `None` marks a full prediction set.
pub fn bcp_alpha_from_scores(excluded_score: Option<f64>, score_sum: f64, n_cal: usize) -> MiscoverageEstimate {
    let sup = n_cal as f64 + 1.0;
    let e = match excluded_score {
        Some(s) => e_value_from_sum(s, score_sum, n_cal),
        None => sup,
    };
    MiscoverageEstimate {
        value: (1.0 / e).min(1.0),
        method: Method::Bcp,
        e_value: Some(e),
    }
}

/// Closed-form BCP miscoverage estimate for a budgeted prediction set.
///
/// Uses the calibration set's own score exponent for the test score.
pub fn bcp_alpha(
    test_dist: &PredictiveDistribution,
    set: &PredictionSetResult,
    cal: &CalibrationSet,
) -> Result<MiscoverageEstimate> {
    let score = set
        .first_excluded()
        .map(|label| nc_score(test_dist.prob(label), cal.params()))
        .transpose()?;
    Ok(bcp_alpha_from_scores(score, cal.score_sum(), cal.len()))
}

/// Probability mass outside the prediction set.
pub fn nme_alpha(test_dist: &PredictiveDistribution, set: &PredictionSetResult) -> MiscoverageEstimate {
    // Summing the excluded mass directly avoids cancellation in 1 - sum(included).
    let mass = set
        .excluded()
        .iter()
        .fold(0.0, |acc, &l| acc + test_dist.prob(l));
    MiscoverageEstimate {
        value: mass.clamp(0.0, 1.0),
        method: Method::Nme,
        e_value: None,
    }
}

pub fn miscovered(set: &PredictionSetResult, true_label: usize) -> bool {
    !set.contains(true_label)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::budgetset::{build_set, Budget};
    use crate::domain::{normalize, CostModel, Example, LabelSpace};

    fn space() -> LabelSpace {
        LabelSpace::new(4).unwrap()
    }

    fn beta(b: f64) -> ScoreParams {
        ScoreParams::new(b).unwrap()
    }

    #[test]
    fn nc_score_examples() {
        assert_eq!(nc_score(1.0, beta(3.7)).unwrap(), 1.0);
        assert!((nc_score(0.5, beta(1.0)).unwrap() - 2.0).abs() < 1e-15);
        assert!((nc_score(0.25, beta(2.0)).unwrap() - 16.0).abs() < 1e-12);
        assert!(nc_score(0.0, beta(1.0)).is_err());
        assert!(nc_score(1e-13, beta(1.0)).is_err());
        assert!(ScoreParams::new(0.0).is_err());
    }

    #[test]
    fn e_value_examples() {
        // Naive re-summation: mean of {1,2,3,4} is 2.5.
        let pooled = [1.0, 2.0, 3.0, 4.0];
        let mean = pooled.iter().sum::<f64>() / pooled.len() as f64;
        let oracle = 4.0 / mean;
        assert!((oracle - 1.6).abs() < 1e-15);
        assert!((e_value_from_sum(4.0, 6.0, 3) - oracle).abs() < 1e-15);

        assert!((e_value_from_sum(2.0, 8.0, 4) - 1.0).abs() < 1e-15);

        let big = e_value_from_sum(1e12, 6.0, 3);
        assert!(big < 4.0 && big > 3.999_999);
    }

    #[test]
    fn bcp_alpha_examples() {
        let a = bcp_alpha_from_scores(Some(4.0), 6.0, 3);
        assert!((a.value - 0.625).abs() < 1e-15);
        assert!((a.value - 1.0 / a.e_value.unwrap()).abs() < 1e-15);

        assert!((bcp_alpha_from_scores(Some(2.0), 6.0, 3).value - 1.0).abs() < 1e-15);

        let full = bcp_alpha_from_scores(None, 123.0, 9);
        assert!((full.value - 0.1).abs() < 1e-15);
        assert_eq!(full.e_value, Some(10.0));
    }

    #[test]
    fn bcp_alpha_clamps_small_e_values() {
        // Excluded label far more probable than calibration labels.
        let a = bcp_alpha_from_scores(Some(1.0), 300.0, 3);
        assert!(a.e_value.unwrap() < 1.0);
        assert_eq!(a.value, 1.0);
    }

    #[test]
    fn bcp_alpha_through_sets() {
        let sp = space();
        let costs = CostModel::new(&sp, vec![0.0, 0.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        let test = normalize(&sp, &[0.4, 0.03, 0.3, 0.2, 0.05, 0.02]).unwrap();
        let set = build_set(&test, &costs, Budget::new(2.0).unwrap());
        // Calibration true-label probabilities 1, 0.5, 0.25 -> scores 1, 2, 4.
        let mk = |p: f64| {
            let mut raw = vec![(1.0 - p) / 5.0; 6];
            raw[0] = p;
            Example::new(normalize(&sp, &raw).unwrap(), 0).unwrap()
        };
        let cal = CalibrationSet::new(vec![mk(1.0), mk(0.5), mk(0.25)], beta(1.0)).unwrap();
        let a = bcp_alpha(&test, &set, &cal).unwrap();
        // Excluded-label score 1/0.05 = 20; E = 20 * 4 / (7 + 20).
        let expected = (7.0 + 20.0) / (4.0 * 20.0);
        assert!((a.value - expected).abs() < 1e-9, "{}", a.value);
    }

    #[test]
    fn nme_examples() {
        let sp = space();
        let costs = CostModel::new(&sp, vec![0.0, 0.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        let d = normalize(&sp, &[0.4, 0.03, 0.3, 0.2, 0.05, 0.02]).unwrap();
        let set = build_set(&d, &costs, Budget::new(2.0).unwrap());
        // Included {0.4, 0.3, 0.2}: 1 - 0.9.
        assert!((nme_alpha(&d, &set).value - 0.1).abs() < 1e-12);

        let full = build_set(&d, &costs, Budget::new(4.0).unwrap());
        let zero = nme_alpha(&d, &full).value;
        assert_eq!(zero, 0.0);
        assert!(zero.is_sign_positive());

        let d = normalize(&sp, &[0.05, 0.03, 0.3, 0.2, 0.4, 0.02]).unwrap();
        let empty = build_set(&d, &costs, Budget::new(0.0).unwrap());
        assert_eq!(empty.c_max(), 0);
        assert!((nme_alpha(&d, &empty).value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn miscovered_examples() {
        let sp = space();
        let costs = CostModel::uniform(&sp, 1.0).unwrap();
        let d = normalize(&sp, &[0.05, 0.03, 0.3, 0.2, 0.4, 0.02]).unwrap();
        let set = build_set(&d, &costs, Budget::new(1.0).unwrap());
        // Ordering [4, 2, 3, 0, 1, 5]; K = 1 keeps only label 4.
        assert_eq!(set.c_max(), 1);
        assert!(!miscovered(&set, 4));
        assert!(miscovered(&set, 2));
        let empty = build_set(&d, &costs, Budget::new(0.0).unwrap());
        assert!((0..6).all(|y| miscovered(&empty, y)));
    }
}
