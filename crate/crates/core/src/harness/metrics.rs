//! Per-test-set metrics and calibration diagnostics.

use serde::Serialize;

use crate::domain::Example;
use crate::error::{BcpError, Result};

fn check(alphas: &[f64], misses: &[bool]) -> Result<()> {
    if alphas.is_empty() {
        return Err(BcpError::EmptyInput);
    }
    if alphas.len() != misses.len() {
        return Err(BcpError::LengthMismatch {
            expected: alphas.len(),
            actual: misses.len(),
        });
    }
    Ok(())
}

fn ind(m: bool) -> f64 {
    if m {
        1.0
    } else {
        0.0
    }
}

/// Estimated miscoverage rate: mean of the estimates.
pub fn metric_emr(alphas: &[f64]) -> Result<f64> {
    if alphas.is_empty() {
        return Err(BcpError::EmptyInput);
    }
    Ok(alphas.iter().sum::<f64>() / alphas.len() as f64)
}

/// True miscoverage rate.
pub fn metric_tmr(misses: &[bool]) -> Result<f64> {
    if misses.is_empty() {
        return Err(BcpError::EmptyInput);
    }
    Ok(misses.iter().filter(|&&m| m).count() as f64 / misses.len() as f64)
}

/// Signed miscoverage difference; positive means conservative.
pub fn metric_smd(alphas: &[f64], misses: &[bool]) -> Result<f64> {
    check(alphas, misses)?;
    let s: f64 = alphas.iter().zip(misses).map(|(a, &m)| a - ind(m)).sum();
    Ok(s / alphas.len() as f64)
}

pub fn metric_brier(alphas: &[f64], misses: &[bool]) -> Result<f64> {
    check(alphas, misses)?;
    let s: f64 = alphas
        .iter()
        .zip(misses)
        .map(|(a, &m)| (a - ind(m)).powi(2))
        .sum();
    Ok(s / alphas.len() as f64)
}

/// Streaming mean/variance (Welford), mergeable in a fixed order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct RunningStat {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl RunningStat {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &RunningStat) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let d = other.mean - self.mean;
        self.mean += d * other.count as f64 / n;
        self.m2 += other.m2 + d * d * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    /// Unbiased sample variance; zero for fewer than two points.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

/// Contribution of one (test point, estimate) pair to `m / alpha`.
/// A covered point contributes zero whatever the estimate.
pub fn reliability_term(missed: bool, alpha: f64) -> f64 {
    if !missed {
        0.0
    } else if alpha > 0.0 {
        1.0 / alpha
    } else {
        f64::INFINITY
    }
}

/// Mean and standard error of `m_j / alpha_j`.
pub fn reliability_statistic(alphas: &[f64], misses: &[bool]) -> Result<(f64, f64)> {
    check(alphas, misses)?;
    let mut st = RunningStat::default();
    for (&a, &m) in alphas.iter().zip(misses) {
        st.push(reliability_term(m, a));
    }
    Ok((st.mean, st.stderr()))
}

/// Linear-interpolation quantile of sorted data (`q` in `[0, 1]`).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationBin {
    pub count: usize,
    pub mean_confidence: f64,
    pub accuracy: f64,
}

/// Top-1 reliability diagram with equal-mass bins.
pub fn reliability_bins(examples: &[Example], n_bins: usize) -> Vec<CalibrationBin> {
    let mut pts: Vec<(f64, bool)> = examples
        .iter()
        .map(|e| {
            let probs = e.dist.probs();
            let mut best = 0;
            for (i, &p) in probs.iter().enumerate() {
                if p > probs[best] {
                    best = i;
                }
            }
            (probs[best], best == e.true_label)
        })
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pts.len();
    (0..n_bins)
        .filter_map(|b| {
            let chunk = &pts[b * n / n_bins..(b + 1) * n / n_bins];
            (!chunk.is_empty()).then(|| CalibrationBin {
                count: chunk.len(),
                mean_confidence: chunk.iter().map(|p| p.0).sum::<f64>() / chunk.len() as f64,
                accuracy: chunk.iter().filter(|p| p.1).count() as f64 / chunk.len() as f64,
            })
        })
        .collect()
}

/// Expected calibration error over equal-mass bins of top-1 confidence.
pub fn expected_calibration_error(examples: &[Example], n_bins: usize) -> f64 {
    let total = examples.len() as f64;
    reliability_bins(examples, n_bins)
        .iter()
        .map(|b| b.count as f64 / total * (b.accuracy - b.mean_confidence).abs())
        .sum()
}

/// Count-weighted least-squares slope of accuracy against confidence.
pub fn reliability_slope(bins: &[CalibrationBin]) -> f64 {
    let w: f64 = bins.iter().map(|b| b.count as f64).sum();
    let mx = bins.iter().map(|b| b.count as f64 * b.mean_confidence).sum::<f64>() / w;
    let my = bins.iter().map(|b| b.count as f64 * b.accuracy).sum::<f64>() / w;
    let sxy: f64 = bins
        .iter()
        .map(|b| b.count as f64 * (b.mean_confidence - mx) * (b.accuracy - my))
        .sum();
    let sxx: f64 = bins
        .iter()
        .map(|b| b.count as f64 * (b.mean_confidence - mx).powi(2))
        .sum();
    sxy / sxx
}
