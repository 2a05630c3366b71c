//! Test statistics built from contrasts of ordered radii.
//!
//! Extreme contrasts (range, quasi-range and the squared range) are centred
//! and scaled with the Gumbel normalizing constants `a_n`, `b_n`; central
//! contrasts (interquartile range, general central quantiles) are centred at
//! the matching standard normal quantile and scaled by `2√n`.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{HdnormError, Result};
use crate::normal;
use crate::radii::RadialSummary;

/// `a_n = √(2 ln n)` and `b_n = a_n − (ln ln n + ln 4π) / (2 a_n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormConstants {
    pub a_n: f64,
    pub b_n: f64,
}

pub fn norm_constants(n: usize) -> Result<NormConstants> {
    if n < 3 {
        return Err(HdnormError::TooFewSamples {
            required: 3,
            got: n,
        });
    }
    let ln_n = (n as f64).ln();
    let a_n = (2.0 * ln_n).sqrt();
    let b_n = a_n - (ln_n.ln() + (4.0 * PI).ln()) / (2.0 * a_n);
    Ok(NormConstants { a_n, b_n })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StatisticKind {
    Range,
    Iqr,
    QuasiRange { q: usize },
    CentralQuantile { percentiles: Vec<f64> },
    SquaredRange,
    SquaredIqr,
}

impl fmt::Display for StatisticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Range => write!(f, "range"),
            Self::Iqr => write!(f, "iqr"),
            Self::QuasiRange { q } => write!(f, "quasi-range(q={q})"),
            Self::CentralQuantile { percentiles } => {
                write!(f, "central-quantile({percentiles:?})")
            }
            Self::SquaredRange => write!(f, "squared-range"),
            Self::SquaredIqr => write!(f, "squared-iqr"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestStatistic {
    pub kind: StatisticKind,
    pub value: f64,
    pub n: usize,
    /// Present for the extreme contrasts.
    pub constants: Option<NormConstants>,
    /// Scale `σ★` of the limiting normal law, present for the interquartile contrasts.
    pub null_scale: Option<f64>,
}

/// 1-based index `⌊p·n⌋`, snapping products that sit within rounding error of
/// an integer so that e.g. `0.6 · 5` does not floor to 2.
fn floor_index(p: f64, n: usize) -> usize {
    let x = p * n as f64;
    let nearest = x.round();
    if (x - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as usize
    } else {
        x.floor() as usize
    }
}

fn extreme_contrast(summary: &RadialSummary, q: usize, c: &NormConstants) -> f64 {
    let inv_sqrt_delta = 1.0 / summary.dispersion.delta_hat.sqrt();
    2.0 * c.a_n * inv_sqrt_delta * summary.quasi_range(q) - 2.0 * c.a_n * c.b_n
}

fn central_contrast(summary: &RadialSummary, percentiles: &[f64]) -> f64 {
    let n = summary.n();
    let inv_sqrt_delta = 1.0 / summary.dispersion.delta_hat.sqrt();
    let root_n = (n as f64).sqrt();
    let mut total = 0.0;
    for &p in percentiles {
        let upper = summary.order_statistic(floor_index(p, n));
        let lower = summary.order_statistic(floor_index(1.0 - p, n));
        total += 2.0 * root_n * (inv_sqrt_delta * (upper - lower) - normal::quantile(p));
    }
    total
}

fn require_iqr_size(n: usize) -> Result<()> {
    if n < 4 {
        return Err(HdnormError::TooFewSamples {
            required: 4,
            got: n,
        });
    }
    Ok(())
}

fn validate_quasi_order(n: usize, q: usize) -> Result<()> {
    if q == 0 || q > n / 2 {
        return Err(HdnormError::InvalidQuantileOrder(format!(
            "q = {q} must lie in 1..={} for n = {n}",
            n / 2
        )));
    }
    Ok(())
}

fn validate_percentiles(n: usize, percentiles: &[f64]) -> Result<()> {
    if percentiles.is_empty() {
        return Err(HdnormError::InvalidQuantileOrder(
            "percentile list is empty".into(),
        ));
    }
    for (i, &p) in percentiles.iter().enumerate() {
        if !(p > 0.5 && p < 1.0) {
            return Err(HdnormError::InvalidQuantileOrder(format!(
                "percentile {p} is outside (1/2, 1)"
            )));
        }
        if i > 0 && p <= percentiles[i - 1] {
            return Err(HdnormError::InvalidQuantileOrder(
                "percentiles must be strictly increasing".into(),
            ));
        }
        if floor_index(1.0 - p, n) < 1 {
            return Err(HdnormError::InvalidQuantileOrder(format!(
                "percentile {p} needs floor((1 - p) n) >= 1, n = {n}"
            )));
        }
    }
    Ok(())
}

/// `T = 2a_n Δ̂^{-1/2} (R₍ₙ₎ − R₍₁₎) − 2a_n b_n`.
pub fn range_statistic(summary: &RadialSummary) -> Result<TestStatistic> {
    let stat = quasi_range_statistic(summary, 1)?;
    Ok(TestStatistic {
        kind: StatisticKind::Range,
        ..stat
    })
}

/// `T_q = 2a_n Δ̂^{-1/2} (R₍ₙ₋q₊₁₎ − R₍q₎) − 2a_n b_n`.
pub fn quasi_range_statistic(summary: &RadialSummary, q: usize) -> Result<TestStatistic> {
    let n = summary.n();
    let constants = norm_constants(n)?;
    validate_quasi_order(n, q)?;
    Ok(TestStatistic {
        kind: StatisticKind::QuasiRange { q },
        value: extreme_contrast(summary, q, &constants),
        n,
        constants: Some(constants),
        null_scale: None,
    })
}

/// `T★ = 2√n [Δ̂^{-1/2} (R₍⌊3n/4⌋₎ − R₍⌊n/4⌋₎) − Φ⁻¹(3/4)]`.
pub fn iqr_statistic(summary: &RadialSummary) -> Result<TestStatistic> {
    let stat = central_quantile_statistic(summary, &[0.75])?;
    Ok(TestStatistic {
        kind: StatisticKind::Iqr,
        ..stat
    })
}

/// Unweighted sum over `p` of `2√n [Δ̂^{-1/2} (R₍⌊pn⌋₎ − R₍⌊(1−p)n⌋₎) − Φ⁻¹(p)]`.
pub fn central_quantile_statistic(
    summary: &RadialSummary,
    percentiles: &[f64],
) -> Result<TestStatistic> {
    let n = summary.n();
    require_iqr_size(n)?;
    validate_percentiles(n, percentiles)?;
    let null_scale = (percentiles == [0.75]).then(normal::iqr_null_scale);
    Ok(TestStatistic {
        kind: StatisticKind::CentralQuantile {
            percentiles: percentiles.to_vec(),
        },
        value: central_contrast(summary, percentiles),
        n,
        constants: None,
        null_scale,
    })
}

/// Range and interquartile statistics on the squared radii, standardized by
/// `(2 tr(Σ²)^)^{1/2}`:
///
/// `T₂ = a_n [(2 tr(Σ²)^)^{-1/2} (R²₍ₙ₎ − R²₍₁₎) − 2b_n]`,
/// `T★,₂ = √n [(2 tr(Σ²)^)^{-1/2} (R²₍⌊3n/4⌋₎ − R²₍⌊n/4⌋₎) − 2Φ⁻¹(3/4)]`.
pub fn squared_radii_statistics(
    summary: &RadialSummary,
) -> Result<(TestStatistic, TestStatistic)> {
    let n = summary.n();
    let constants = norm_constants(n)?;
    require_iqr_size(n)?;
    let d = &summary.dispersion;
    if d.tr_sigma_sq_hat.is_nan() || d.tr_sigma_sq_hat <= 0.0 {
        return Err(HdnormError::NonPositiveDispersion {
            tr_sigma_sq_hat: d.tr_sigma_sq_hat,
            tr_sigma_d: d.tr_sigma_d,
        });
    }
    let inv_scale = 1.0 / (2.0 * d.tr_sigma_sq_hat).sqrt();
    let sq = |k: usize| summary.order_statistic(k).powi(2);

    let range_value = constants.a_n * (inv_scale * (sq(n) - sq(1)) - 2.0 * constants.b_n);
    let iqr_value = (n as f64).sqrt()
        * (inv_scale * (sq(floor_index(0.75, n)) - sq(floor_index(0.25, n)))
            - 2.0 * normal::quantile(0.75));
    Ok((
        TestStatistic {
            kind: StatisticKind::SquaredRange,
            value: range_value,
            n,
            constants: Some(constants),
            null_scale: None,
        },
        TestStatistic {
            kind: StatisticKind::SquaredIqr,
            value: iqr_value,
            n,
            constants: None,
            null_scale: Some(normal::iqr_null_scale()),
        },
    ))
}
