//! Frequentist estimation engine: branch-frequency estimates, standard
//! error, confidence intervals and the per-annotation deviation judgement.
//!
//! Interval bounds are deliberately not clamped to [0, 1]; estimates are
//! always in [0, 1] so clamping would change no decision, but reported
//! intervals like [-0.39, 0.79] are part of the log surface. Boundary
//! comparisons are inclusive: an estimate exactly on a bound is inside.

use crate::pst::ProbAnnotation;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("confidence level {0} outside [0, 1)")]
    LevelOutOfRange(f64),
}

/// Confidence level with its cached two-sided normal critical value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceLevel {
    level: f64,
    zed: f64,
}

impl ConfidenceLevel {
    pub fn new(level: f64) -> Result<Self, StatsError> {
        let zed = z_of(level)?;
        Ok(ConfidenceLevel { level, zed })
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn zed(&self) -> f64 {
        self.zed
    }
}

/// Two-sided standard-normal critical value: the quantile at (1+level)/2.
pub fn z_of(level: f64) -> Result<f64, StatsError> {
    if !(0.0..1.0).contains(&level) {
        return Err(StatsError::LevelOutOfRange(level));
    }
    Ok(normal_quantile((1.0 + level) / 2.0))
}

/// Inverse standard normal CDF on (0, 1), Acklam's rational approximation
/// (absolute error well below 1e-4 across the domain).
fn normal_quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);

    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Estimated probability: the observed branch frequency.
///
/// Callers increment before checking, so `c_total >= 1` always holds.
pub fn estimate(c_total: u64, c_branch: u64) -> f64 {
    assert!(c_total >= 1, "estimate requires at least one observation");
    assert!(c_branch <= c_total);
    c_branch as f64 / c_total as f64
}

/// Maximum acceptable error: Z(level) * sqrt(p * (1-p) / c_total).
pub fn max_error(level: &ConfidenceLevel, p: f64, c_total: u64) -> f64 {
    assert!(p > 0.0 && p <= 1.0);
    assert!(c_total >= 1);
    level.zed() * (p * (1.0 - p) / c_total as f64).sqrt()
}

/// Confidence-interval report around a specified probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalReport {
    pub estimated: f64,
    pub specified: f64,
    pub error: f64,
    pub low: f64,
    pub high: f64,
    pub inside: bool,
}

/// Estimates the branch probability and tests it against the confidence
/// interval around the specified probability.
pub fn check_interval(
    level: &ConfidenceLevel,
    c_total: u64,
    c_branch: u64,
    p: f64,
) -> IntervalReport {
    let estimated = estimate(c_total, c_branch);
    let error = max_error(level, p, c_total);
    let low = p - error;
    let high = p + error;
    IntervalReport {
        estimated,
        specified: p,
        error,
        low,
        high,
        inside: low <= estimated && estimated <= high,
    }
}

/// Outcome of judging one branch against its annotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchStatus {
    Ok,
    DeviatedLow,
    DeviatedHigh,
    Suppressed,
}

/// Applies the annotation's warning policy to an interval report.
pub fn judge(annotation: &ProbAnnotation, report: &IntervalReport) -> BranchStatus {
    let below = report.estimated < report.low;
    let above = report.estimated > report.high;
    match annotation {
        ProbAnnotation::Unchecked => BranchStatus::Suppressed,
        ProbAnnotation::Exact(_) => {
            if below {
                BranchStatus::DeviatedLow
            } else if above {
                BranchStatus::DeviatedHigh
            } else {
                BranchStatus::Ok
            }
        }
        ProbAnnotation::LowerOnly(_) => {
            if below {
                BranchStatus::DeviatedLow
            } else {
                BranchStatus::Ok
            }
        }
        ProbAnnotation::UpperOnly(_) => {
            if above {
                BranchStatus::DeviatedHigh
            } else {
                BranchStatus::Ok
            }
        }
    }
}

/// Rounds to four decimal places; the precision used in logs and reports.
pub fn round4(x: f64) -> f64 {
    let r = (x * 10_000.0).round() / 10_000.0;
    if r == 0.0 {
        0.0 // normalise -0.0
    } else {
        r
    }
}
