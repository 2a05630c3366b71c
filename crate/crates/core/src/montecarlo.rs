//! Monte-Carlo null laws of the extreme contrasts and the rejection rules.
//!
//! Under the null, the normalized quasi-range of the radii behaves like
//! `U_{n,q} = a_n (S₍ₙ₋q₊₁₎ − S₍q₎) − 2a_n b_n` with `S ~ N(0, I_n)`. The
//! critical values are empirical quantiles of `M` simulated draws of `U_{n,q}`.
//! Draw `j` comes from stream `j` of the settings seed, so the sample does not
//! depend on how the work is split across threads.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::RngCore;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HdnormError, Result};
use crate::moments::{DataMatrix, DispersionEstimate};
use crate::normal;
use crate::radii::RadialSummary;
use crate::streams;
use crate::teststats::{
    iqr_statistic, norm_constants, quasi_range_statistic, range_statistic,
    squared_radii_statistics, StatisticKind, TestStatistic,
};

pub const REPORT_SCHEMA_VERSION: &str = "hdnorm.test_report.v1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSettings {
    /// Number of Monte-Carlo draws `M`.
    pub replications: usize,
    pub seed: u64,
    pub alpha: f64,
}

impl Default for McSettings {
    fn default() -> Self {
        Self {
            replications: 10_000,
            seed: 0,
            alpha: 0.05,
        }
    }
}

impl McSettings {
    pub fn validate(&self) -> Result<()> {
        if self.replications < 100 {
            return Err(HdnormError::InvalidSettings(format!(
                "at least 100 Monte-Carlo replications are required, got {}",
                self.replications
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(HdnormError::InvalidSettings(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    fn with_alpha(self, alpha: f64) -> Self {
        Self { alpha, ..self }
    }
}

/// One draw of `U_{n,q}` from `n` fresh standard normals.
///
/// # Panics
/// If `n < 3` or `q` is outside `1..=n/2`.
pub fn sample_null_quasi_range<R: RngCore + ?Sized>(n: usize, q: usize, rng: &mut R) -> f64 {
    assert!(n >= 3 && q >= 1 && q <= n / 2, "need n >= 3 and 1 <= q <= n/2");
    let c = norm_constants(n).expect("n >= 3");
    let contrast = if q == 1 {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for _ in 0..n {
            let z = streams::standard_normal(rng);
            lo = lo.min(z);
            hi = hi.max(z);
        }
        hi - lo
    } else {
        let mut s = vec![0.0; n];
        streams::fill_standard_normal(rng, &mut s);
        let (_, low, _) = s.select_nth_unstable_by(q - 1, f64::total_cmp);
        let low = *low;
        let (_, high, _) = s.select_nth_unstable_by(n - q, f64::total_cmp);
        *high - low
    };
    c.a_n * contrast - 2.0 * c.a_n * c.b_n
}

/// One draw of `U_{n,q}` in `O(q)` time, exact in law.
///
/// Uniform order statistics are ratios of exponential spacings:
/// `U₍q₎ = G₁/(G₁+G₂+G₃)` and `1 − U₍ₙ₋q₊₁₎ = G₃/(G₁+G₂+G₃)` with
/// `G₁, G₃ ~ Gamma(q)` and `G₂ ~ Gamma(n + 1 − 2q)`. Both tails are then
/// inverted without cancellation, so very large `n` is cheap and accurate.
pub fn sample_null_quasi_range_spacings<R: RngCore + ?Sized>(
    n: usize,
    q: usize,
    rng: &mut R,
) -> f64 {
    assert!(n >= 3 && q >= 1 && q <= n / 2, "need n >= 3 and 1 <= q <= n/2");
    let c = norm_constants(n).expect("n >= 3");
    let exp_sum = |rng: &mut R, k: usize| -> f64 {
        (0..k).map(|_| -streams::open_uniform(rng).ln()).sum()
    };
    let lower = exp_sum(rng, q);
    let upper = exp_sum(rng, q);
    let middle_shape = (n + 1 - 2 * q) as f64;
    let middle = Gamma::new(middle_shape, 1.0)
        .expect("positive shape")
        .sample(&mut RngAdapter(rng));
    let total = lower + middle + upper;
    let s_low = normal::quantile(lower / total);
    let s_high = normal::upper_quantile(upper / total);
    c.a_n * (s_high - s_low) - 2.0 * c.a_n * c.b_n
}

struct RngAdapter<'a, R: RngCore + ?Sized>(&'a mut R);

impl<R: RngCore + ?Sized> RngCore for RngAdapter<'_, R> {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

/// Smallest 1-based index `i` with `i / m ≥ p`, i.e. the order statistic at
/// which the empirical distribution function first reaches `p`.
pub fn quantile_index(p: f64, m: usize) -> usize {
    let x = p * m as f64;
    let nearest = x.round();
    let k = if (x - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest
    } else {
        x.ceil()
    };
    (k as usize).clamp(1, m)
}

/// Sorted Monte-Carlo sample of `U_{n,q}`.
#[derive(Debug, Clone, PartialEq)]
pub struct NullDistribution {
    pub n: usize,
    pub q: usize,
    pub seed: u64,
    sorted: Vec<f64>,
}

impl NullDistribution {
    pub fn simulate(n: usize, q: usize, replications: usize, seed: u64) -> Result<Self> {
        if n < 3 {
            return Err(HdnormError::TooFewSamples {
                required: 3,
                got: n,
            });
        }
        if q == 0 || q > n / 2 {
            return Err(HdnormError::InvalidQuantileOrder(format!(
                "q = {q} must lie in 1..={} for n = {n}",
                n / 2
            )));
        }
        if replications == 0 {
            return Err(HdnormError::InvalidSettings(
                "at least one replication is required".into(),
            ));
        }
        let mut sorted: Vec<f64> = (0..replications as u64)
            .into_par_iter()
            .map(|j| sample_null_quasi_range(n, q, &mut streams::stream(seed, j)))
            .collect();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { n, q, seed, sorted })
    }

    pub fn replications(&self) -> usize {
        self.sorted.len()
    }

    pub fn sorted_draws(&self) -> &[f64] {
        &self.sorted
    }

    /// `F̂⁻¹(p) = inf{x : F̂(x) ≥ p}`.
    pub fn quantile(&self, p: f64) -> f64 {
        self.sorted[quantile_index(p, self.sorted.len()) - 1]
    }

    /// `(F̂⁻¹(α/2), F̂⁻¹(1 − α/2))`.
    pub fn band(&self, alpha: f64) -> (f64, f64) {
        (self.quantile(alpha / 2.0), self.quantile(1.0 - alpha / 2.0))
    }
}

type NullKey = (usize, usize, usize, u64);

/// Memoizes null samples by `(n, q, M, seed)`. A cached sample is exactly the
/// one that would be simulated afresh.
#[derive(Debug, Default)]
pub struct NullCache {
    entries: Mutex<HashMap<NullKey, Arc<NullDistribution>>>,
}

impl NullCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(
        &self,
        n: usize,
        q: usize,
        replications: usize,
        seed: u64,
    ) -> Result<Arc<NullDistribution>> {
        let key = (n, q, replications, seed);
        if let Some(hit) = self.lock().get(&key) {
            return Ok(Arc::clone(hit));
        }
        let built = Arc::new(NullDistribution::simulate(n, q, replications, seed)?);
        Ok(Arc::clone(self.lock().entry(key).or_insert(built)))
    }

    pub fn len(&self) -> usize {
        self.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, HashMap<NullKey, Arc<NullDistribution>>> {
        self.entries.lock().unwrap_or_else(|e| e.into_inner())
    }
}

/// `(F̂⁻¹(α/2), F̂⁻¹(1 − α/2))` of a fresh Monte-Carlo sample of `U_{n,q}`.
pub fn mc_quantiles(n: usize, q: usize, settings: &McSettings) -> Result<(f64, f64)> {
    settings.validate()?;
    let null = NullDistribution::simulate(n, q, settings.replications, settings.seed)?;
    Ok(null.band(settings.alpha))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub statistic: TestStatistic,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub reject: bool,
}

impl Decision {
    fn new(statistic: TestStatistic, lower: f64, upper: f64, level: f64) -> Self {
        let v = statistic.value;
        let reject = !(lower <= v && v <= upper);
        Self {
            statistic,
            lower,
            upper,
            level,
            reject,
        }
    }
}

fn extreme_order(kind: &StatisticKind) -> Option<usize> {
    match kind {
        StatisticKind::Range | StatisticKind::SquaredRange => Some(1),
        StatisticKind::QuasiRange { q } => Some(*q),
        _ => None,
    }
}

/// Range-type rule: reject iff `T` falls strictly outside
/// `[F̂⁻¹(α/2), F̂⁻¹(1 − α/2)]`, so a statistic on a band edge is accepted. Uses a fresh
/// null sample with the statistic's own `n` and `q`.
pub fn decide_range(statistic: &TestStatistic, settings: &McSettings) -> Result<Decision> {
    settings.validate()?;
    let q = extreme_order(&statistic.kind).ok_or_else(|| incompatible(statistic, "range"))?;
    let null = NullDistribution::simulate(statistic.n, q, settings.replications, settings.seed)?;
    decide_range_with(statistic, &null, settings.alpha)
}

/// Range-type rule against a prepared null sample.
pub fn decide_range_with(
    statistic: &TestStatistic,
    null: &NullDistribution,
    alpha: f64,
) -> Result<Decision> {
    let q = extreme_order(&statistic.kind).ok_or_else(|| incompatible(statistic, "range"))?;
    if null.n != statistic.n || null.q != q {
        return Err(HdnormError::InvalidSettings(format!(
            "null sample was drawn for (n = {}, q = {}) but the statistic needs (n = {}, q = {q})",
            null.n, null.q, statistic.n
        )));
    }
    let (lower, upper) = null.band(alpha);
    Ok(Decision::new(statistic.clone(), lower, upper, alpha))
}

/// Interquartile rule: reject iff `T★` falls strictly outside
/// `[σ★ Φ⁻¹(α/2), σ★ Φ⁻¹(1 − α/2)]`.
pub fn decide_iqr(statistic: &TestStatistic, alpha: f64) -> Result<Decision> {
    let compatible = match &statistic.kind {
        StatisticKind::Iqr | StatisticKind::SquaredIqr => true,
        StatisticKind::CentralQuantile { percentiles } => percentiles.as_slice() == [0.75],
        _ => false,
    };
    if !compatible {
        return Err(incompatible(statistic, "interquartile"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(HdnormError::InvalidSettings(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let upper = normal::iqr_null_scale() * normal::upper_quantile(alpha / 2.0);
    Ok(Decision::new(statistic.clone(), -upper, upper, alpha))
}

fn incompatible(statistic: &TestStatistic, rule: &'static str) -> HdnormError {
    HdnormError::IncompatibleStatistic {
        kind: statistic.kind.to_string(),
        rule,
    }
}

/// Which procedure a report is produced for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Selection {
    /// Range and interquartile sub-tests, each at `α/2`.
    Composite,
    Range,
    Iqr,
    QuasiRange { q: usize },
    /// Squared-radii range and interquartile sub-tests, each at `α/2`.
    Squared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeDecision {
    pub level: f64,
    pub component_level: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub schema: String,
    pub selection: Selection,
    pub n: usize,
    pub d: usize,
    pub settings: McSettings,
    pub delta_hat: f64,
    pub dispersion: DispersionEstimate,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub range: Option<Decision>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iqr: Option<Decision>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quasi_range: Option<Decision>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub squared_range: Option<Decision>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub squared_iqr: Option<Decision>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub composite: Option<CompositeDecision>,
    pub reject: bool,
}

/// The composite test: range and interquartile sub-tests at `α/2` each,
/// rejecting when either does.
pub fn composite_test(x: &DataMatrix, settings: &McSettings) -> Result<TestReport> {
    run_test(x, Selection::Composite, settings, None)
}

/// Runs the selected procedure. Null samples come from `cache` when given,
/// which never changes the outcome.
pub fn run_test(
    x: &DataMatrix,
    selection: Selection,
    settings: &McSettings,
    cache: Option<&NullCache>,
) -> Result<TestReport> {
    settings.validate()?;
    let summary = RadialSummary::new(x)?;
    run_test_on_summary(&summary, x.d(), selection, settings, cache)
}

pub fn run_test_on_summary(
    summary: &RadialSummary,
    d: usize,
    selection: Selection,
    settings: &McSettings,
    cache: Option<&NullCache>,
) -> Result<TestReport> {
    settings.validate()?;
    let n = summary.n();
    let null_for = |q: usize| -> Result<Arc<NullDistribution>> {
        match cache {
            Some(c) => c.get(n, q, settings.replications, settings.seed),
            None => NullDistribution::simulate(n, q, settings.replications, settings.seed)
                .map(Arc::new),
        }
    };
    let alpha = settings.alpha;
    let mut report = TestReport {
        schema: REPORT_SCHEMA_VERSION.to_string(),
        selection,
        n,
        d,
        settings: *settings,
        delta_hat: summary.dispersion.delta_hat,
        dispersion: summary.dispersion,
        range: None,
        iqr: None,
        quasi_range: None,
        squared_range: None,
        squared_iqr: None,
        composite: None,
        reject: false,
    };
    match selection {
        Selection::Composite => {
            let half = alpha / 2.0;
            let range = decide_range_with(&range_statistic(summary)?, &*null_for(1)?, half)?;
            let iqr = decide_iqr(&iqr_statistic(summary)?, half)?;
            report.composite = Some(composite_of(alpha, &range, &iqr));
            report.reject = range.reject || iqr.reject;
            report.range = Some(range);
            report.iqr = Some(iqr);
        }
        Selection::Range => {
            let range = decide_range_with(&range_statistic(summary)?, &*null_for(1)?, alpha)?;
            report.reject = range.reject;
            report.range = Some(range);
        }
        Selection::Iqr => {
            let iqr = decide_iqr(&iqr_statistic(summary)?, alpha)?;
            report.reject = iqr.reject;
            report.iqr = Some(iqr);
        }
        Selection::QuasiRange { q } => {
            let stat = quasi_range_statistic(summary, q)?;
            let quasi = decide_range_with(&stat, &*null_for(q)?, alpha)?;
            report.reject = quasi.reject;
            report.quasi_range = Some(quasi);
        }
        Selection::Squared => {
            let half = alpha / 2.0;
            let (t2, tstar2) = squared_radii_statistics(summary)?;
            let range = decide_range_with(&t2, &*null_for(1)?, half)?;
            let iqr = decide_iqr(&tstar2, half)?;
            report.composite = Some(composite_of(alpha, &range, &iqr));
            report.reject = range.reject || iqr.reject;
            report.squared_range = Some(range);
            report.squared_iqr = Some(iqr);
        }
    }
    Ok(report)
}

fn composite_of(alpha: f64, range: &Decision, iqr: &Decision) -> CompositeDecision {
    CompositeDecision {
        level: alpha,
        component_level: alpha / 2.0,
        reject: range.reject || iqr.reject,
    }
}

/// Composite test sharing the null samples in `cache` across calls.
pub fn composite_test_cached(
    x: &DataMatrix,
    settings: &McSettings,
    cache: &NullCache,
) -> Result<TestReport> {
    run_test(x, Selection::Composite, settings, Some(cache))
}

/// Squared-radii composite test at `settings.alpha`.
pub fn squared_composite_test(x: &DataMatrix, settings: &McSettings) -> Result<TestReport> {
    run_test(x, Selection::Squared, settings, None)
}

/// Same settings with the level replaced; convenient for sub-test calls.
pub fn at_level(settings: &McSettings, alpha: f64) -> McSettings {
    settings.with_alpha(alpha)
}
