//! Simulation experiments: empirical size and power over a grid of scenarios.
//!
//! Every random draw of an experiment is a pure function of the master seed.
//! Cell `c` owns the seed `derive_seed(master, c)` and its replication `r`
//! draws data from stream 0 of `derive_seed(cell_seed, r)`; the Monte-Carlo
//! null samples are keyed by the experiment's settings seed. Cells and
//! replications may therefore run in any order on any number of threads.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HdnormError, Result};
use crate::generators::{CovSpec, DimParam, Family, Scenario, ScenarioSampler};
use crate::montecarlo::{run_test_on_summary, McSettings, NullCache, Selection};
use crate::radii::RadialSummary;
use crate::streams;

/// Two-sided 95% standard normal quantile.
const Z_95: f64 = 1.959_963_984_540_054;

fn default_procedures() -> Vec<Selection> {
    vec![Selection::Composite]
}

/// Cartesian product of covariance structures, sample sizes and dimensions
/// for a single family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    #[serde(flatten)]
    pub family: Family,
    pub covs: Vec<CovSpec>,
    pub n: Vec<usize>,
    pub d: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub name: String,
    pub master_seed: u64,
    /// Data replications per cell.
    pub replications: usize,
    pub mc: McSettings,
    #[serde(default = "default_procedures")]
    pub procedures: Vec<Selection>,
    #[serde(default)]
    pub cells: Vec<Scenario>,
    #[serde(default)]
    pub grids: Vec<Grid>,
}

impl Experiment {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| HdnormError::InvalidExperiment(e.to_string()))
    }

    /// Explicit cells first, then each grid expanded in `cov`, `n`, `d` order.
    pub fn scenarios(&self) -> Vec<Scenario> {
        let mut out = self.cells.clone();
        for g in &self.grids {
            for cov in &g.covs {
                for &n in &g.n {
                    for &d in &g.d {
                        out.push(Scenario {
                            family: g.family.clone(),
                            cov: cov.clone(),
                            n,
                            d,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.mc
            .validate()
            .map_err(|e| HdnormError::InvalidExperiment(e.to_string()))?;
        if self.replications == 0 {
            return Err(HdnormError::InvalidExperiment(
                "replications must be positive".into(),
            ));
        }
        if self.procedures.is_empty() {
            return Err(HdnormError::InvalidExperiment(
                "at least one procedure is required".into(),
            ));
        }
        Ok(())
    }
}

/// Rejection tally of one procedure in one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcedureOutcome {
    pub procedure: String,
    pub rejections: usize,
    /// Replications whose test completed; the rate is relative to this.
    pub valid: usize,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub index: usize,
    pub scenario: Scenario,
    pub family: String,
    pub cov: String,
    pub replications: usize,
    pub failures: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub outcomes: Vec<ProcedureOutcome>,
    pub wall_time_secs: f64,
}

/// Normal-approximation 95% interval for a binomial proportion. At 0 or `m`
/// successes the variance uses half a success (or failure) so the interval
/// keeps a positive width; the bounds are clipped to `[0, 1]`.
pub fn binomial_ci(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = trials as f64;
    let p = successes as f64 / m;
    let guarded = (successes as f64).clamp(0.5, m - 0.5) / m;
    let half_width = Z_95 * (guarded * (1.0 - guarded) / m).sqrt();
    ((p - half_width).max(0.0), (p + half_width).min(1.0))
}

pub fn procedure_label(p: &Selection) -> String {
    match p {
        Selection::Composite => "composite".into(),
        Selection::Range => "range".into(),
        Selection::Iqr => "iqr".into(),
        Selection::QuasiRange { q } => format!("quasi_range(q={q})"),
        Selection::Squared => "squared".into(),
    }
}

fn dim_param_label(p: &DimParam) -> String {
    match p {
        DimParam::Fixed(v) => format!("{v}"),
        DimParam::Scaled { coef, d_power } => format!("{coef}*d^{d_power}"),
    }
}

/// Family name with its parameters, e.g. `chisq_marginals(dof=3,standardize=true)`.
pub fn family_label(f: &Family) -> String {
    let params = match f {
        Family::NullGaussian | Family::BaiSarandasaExample => String::new(),
        Family::LocMixture { shift, weight } => {
            format!("shift={},weight={weight}", dim_param_label(shift))
        }
        Family::CovMixture { spread, weight } => {
            format!("spread={},weight={weight}", dim_param_label(spread))
        }
        Family::MultivariateT { dof } => format!("dof={}", dim_param_label(dof)),
        Family::ChiSqMarginals { dof, standardize } => {
            format!("dof={dof},standardize={standardize}")
        }
        Family::EllipticalUniformScale { sigma0, width } => {
            format!("sigma0={sigma0},width={width}")
        }
        Family::Leptokurtic { excess_kurtosis } => format!("excess_kurtosis={excess_kurtosis}"),
        Family::MixedMarginals { t_fraction, dof } => format!("t_fraction={t_fraction},dof={dof}"),
    };
    if params.is_empty() {
        f.label().to_string()
    } else {
        format!("{}({params})", f.label())
    }
}

/// Runs every cell. Invalid settings are an error; failures inside a cell are
/// recorded in its result and do not stop the sweep.
pub fn run_experiment(e: &Experiment) -> Result<Vec<CellResult>> {
    e.validate()?;
    let scenarios = e.scenarios();
    let cache = NullCache::new();
    Ok(scenarios
        .par_iter()
        .enumerate()
        .map(|(index, s)| run_scenario(e, index, s, &cache))
        .collect())
}

/// Runs cell `index` on its own; identical to that cell's entry in
/// [`run_experiment`] apart from the wall time.
pub fn run_cell(e: &Experiment, index: usize) -> Result<CellResult> {
    e.validate()?;
    let scenarios = e.scenarios();
    let s = scenarios.get(index).ok_or_else(|| {
        HdnormError::InvalidExperiment(format!(
            "cell {index} does not exist ({} cells)",
            scenarios.len()
        ))
    })?;
    Ok(run_scenario(e, index, s, &NullCache::new()))
}

fn run_scenario(e: &Experiment, index: usize, s: &Scenario, cache: &NullCache) -> CellResult {
    let start = Instant::now();
    let cell_seed = streams::derive_seed(e.master_seed, index as u64);
    let mut result = CellResult {
        index,
        scenario: s.clone(),
        family: family_label(&s.family),
        cov: s.cov.label(),
        replications: e.replications,
        failures: 0,
        error: None,
        outcomes: Vec::new(),
        wall_time_secs: 0.0,
    };
    let mut rejections = vec![0usize; e.procedures.len()];
    let mut valid = vec![0usize; e.procedures.len()];
    match ScenarioSampler::new(s) {
        Err(err) => {
            result.error = Some(err.to_string());
            result.failures = e.replications;
        }
        Ok(sampler) => {
            let per_rep: Vec<Result<Vec<bool>>> = (0..e.replications as u64)
                .into_par_iter()
                .map(|r| {
                    let seed = streams::derive_seed(cell_seed, r);
                    replicate(&sampler, e, cache, seed)
                })
                .collect();
            for outcome in per_rep {
                match outcome {
                    Ok(decisions) => {
                        for (k, reject) in decisions.into_iter().enumerate() {
                            valid[k] += 1;
                            rejections[k] += reject as usize;
                        }
                    }
                    Err(err) => {
                        result.failures += 1;
                        result.error.get_or_insert_with(|| err.to_string());
                    }
                }
            }
        }
    }
    result.outcomes = e
        .procedures
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let (ci_low, ci_high) = binomial_ci(rejections[k], valid[k]);
            ProcedureOutcome {
                procedure: procedure_label(p),
                rejections: rejections[k],
                valid: valid[k],
                rate: if valid[k] == 0 {
                    f64::NAN
                } else {
                    rejections[k] as f64 / valid[k] as f64
                },
                ci_low,
                ci_high,
            }
        })
        .collect();
    result.wall_time_secs = start.elapsed().as_secs_f64();
    result
}

fn replicate(
    sampler: &ScenarioSampler,
    e: &Experiment,
    cache: &NullCache,
    seed: u64,
) -> Result<Vec<bool>> {
    let x = sampler.sample(&mut streams::stream(seed, 0))?;
    let summary = RadialSummary::new(&x)?;
    e.procedures
        .iter()
        .map(|p| run_test_on_summary(&summary, x.d(), *p, &e.mc, Some(cache)).map(|r| r.reject))
        .collect()
}

/// One row of the CSV summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub family: String,
    pub cov: String,
    pub n: usize,
    pub d: usize,
    pub procedure: String,
    pub replications: usize,
    pub valid: usize,
    pub rejections: usize,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub failures: usize,
    pub error: String,
}

const CSV_HEADER: [&str; 13] = [
    "family",
    "cov",
    "n",
    "d",
    "procedure",
    "replications",
    "valid",
    "rejections",
    "rate",
    "ci_low",
    "ci_high",
    "failures",
    "error",
];

/// The same rows as a CSV table and as JSON lines.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub csv: String,
    pub jsonl: String,
}

/// 17 significant digits, enough to round-trip any `f64`.
fn fmt_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

fn sort_key(c: &CellResult) -> (String, String, usize, usize, usize) {
    (c.family.clone(), c.cov.clone(), c.scenario.n, c.scenario.d, c.index)
}

/// One row per cell and procedure, sorted by family, covariance, `n`, `d`,
/// then procedure. Wall times are left out so both outputs depend only on
/// the experiment.
pub fn summarize(results: &[CellResult]) -> Result<Summary> {
    if results.is_empty() {
        return Err(HdnormError::InvalidExperiment(
            "nothing to summarize: no cell results".into(),
        ));
    }
    let mut ordered: Vec<&CellResult> = results.iter().collect();
    ordered.sort_by_key(|c| sort_key(c));

    let mut writer = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| HdnormError::Io(e.to_string());
    writer.write_record(CSV_HEADER).map_err(csv_err)?;
    let mut jsonl = String::new();
    for cell in &ordered {
        let mut outcomes: Vec<&ProcedureOutcome> = cell.outcomes.iter().collect();
        outcomes.sort_by(|a, b| a.procedure.cmp(&b.procedure));
        for o in outcomes {
            let row = SummaryRow {
                family: cell.family.clone(),
                cov: cell.cov.clone(),
                n: cell.scenario.n,
                d: cell.scenario.d,
                procedure: o.procedure.clone(),
                replications: cell.replications,
                valid: o.valid,
                rejections: o.rejections,
                rate: o.rate,
                ci_low: o.ci_low,
                ci_high: o.ci_high,
                failures: cell.failures,
                error: cell.error.clone().unwrap_or_default(),
            };
            writer
                .write_record([
                    row.family.clone(),
                    row.cov.clone(),
                    row.n.to_string(),
                    row.d.to_string(),
                    row.procedure.clone(),
                    row.replications.to_string(),
                    row.valid.to_string(),
                    row.rejections.to_string(),
                    fmt_float(row.rate),
                    fmt_float(row.ci_low),
                    fmt_float(row.ci_high),
                    row.failures.to_string(),
                    row.error.clone(),
                ])
                .map_err(csv_err)?;
            let line = serde_json::to_string(&row).map_err(|e| HdnormError::Io(e.to_string()))?;
            let _ = writeln!(jsonl, "{line}");
        }
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| HdnormError::Io(e.to_string()))?;
    let csv = String::from_utf8(bytes).map_err(|e| HdnormError::Io(e.to_string()))?;
    Ok(Summary { csv, jsonl })
}

pub fn parse_summary_csv(text: &str) -> Result<Vec<SummaryRow>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .map(|r| r.map_err(|e: csv::Error| HdnormError::Parse(e.to_string())))
        .collect()
}
