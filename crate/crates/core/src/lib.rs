//! A test of multivariate normality for high-dimensional data built on the
//! radii `‖Xᵢ − X̄‖₂` of the centered observations.
//!
//! Under a Gaussian null the radii concentrate around `tr(Σ)^{1/2}` with a
//! spread governed by the dispersion index `2 tr(Σ²) / tr(Σ)`. The test
//! compares the normalized range and interquartile range of the radii with
//! their limiting null laws; the range law is approximated by Monte Carlo and
//! the two sub-tests are combined with a Bonferroni correction.
//!
//! ```
//! use hdnorm::{composite_test, DataMatrix, McSettings};
//!
//! let mut rng = hdnorm::streams::stream(1, 0);
//! let data: Vec<f64> = (0..40 * 60)
//!     .map(|_| hdnorm::streams::standard_normal(&mut rng))
//!     .collect();
//! let x = DataMatrix::from_row_slice(40, 60, &data).unwrap();
//! let settings = McSettings { replications: 2000, ..McSettings::default() };
//! let report = composite_test(&x, &settings).unwrap();
//! assert!(report.delta_hat > 0.0);
//! ```

pub mod cli;
pub mod error;
pub mod generators;
pub mod harness;
pub mod moments;
pub mod montecarlo;
pub mod normal;
pub mod radii;
pub mod streams;
pub mod sum;
pub mod teststats;

pub use error::{HdnormError, Result};
pub use generators::{
    build_covariance, effective_ranks, sample_scenario, CovSpec, EffectiveRanks, Family, Scenario,
};
pub use harness::{run_experiment, summarize, CellResult, Experiment};
pub use moments::{
    delta_hat, sigma_hat_d, tr_sigma_sq_hat, tr_sigma_sq_oracle, DataMatrix, DispersionEstimate,
};
pub use montecarlo::{
    composite_test, decide_iqr, decide_range, mc_quantiles, Decision, McSettings, NullCache,
    TestReport,
};
pub use radii::{radii, standardized_radii, RadialSummary};
pub use teststats::{
    central_quantile_statistic, iqr_statistic, norm_constants, quasi_range_statistic,
    range_statistic, squared_radii_statistics, NormConstants, StatisticKind, TestStatistic,
};
