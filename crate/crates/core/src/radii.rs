//! Radii of the centered observations and their order statistics.

use serde::{Deserialize, Serialize};

use crate::error::{HdnormError, Result};
use crate::moments::{centered_moments, centered_radii_sq, DataMatrix, DispersionEstimate};

/// `Rᵢ = ‖Xᵢ − X̄‖₂`, in input row order.
pub fn radii(x: &DataMatrix) -> Vec<f64> {
    centered_radii_sq(&x.centered())
        .into_iter()
        .map(f64::sqrt)
        .collect()
}

/// `Vᵢ = 2 Δ̂^{-1/2} (Rᵢ − tr(Σ̂_D)^{1/2})`.
pub fn standardized_radii(x: &DataMatrix) -> Result<Vec<f64>> {
    Ok(RadialSummary::new(x)?.standardized)
}

/// Radii, sorted radii, standardized radii and the dispersion estimate of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialSummary {
    pub radii: Vec<f64>,
    pub sorted_radii: Vec<f64>,
    pub standardized: Vec<f64>,
    pub dispersion: DispersionEstimate,
}

impl RadialSummary {
    pub fn new(x: &DataMatrix) -> Result<Self> {
        let moments = centered_moments(x);
        let dispersion = DispersionEstimate::from_moments(x.n(), &moments)?;
        let radii = moments.radii_sq.iter().map(|r2| r2.sqrt()).collect();
        Self::from_radii(radii, dispersion)
    }

    /// Assembles a summary from precomputed radii and a dispersion estimate.
    pub fn from_radii(radii: Vec<f64>, dispersion: DispersionEstimate) -> Result<Self> {
        if let Some(i) = radii.iter().position(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(HdnormError::InvalidRadii(format!(
                "radius {i} is negative or not finite"
            )));
        }
        if !(dispersion.delta_hat > 0.0 && dispersion.tr_sigma_d > 0.0) {
            return Err(HdnormError::NonPositiveDispersion {
                tr_sigma_sq_hat: dispersion.tr_sigma_sq_hat,
                tr_sigma_d: dispersion.tr_sigma_d,
            });
        }
        let mut sorted_radii = radii.clone();
        // `sort_by` is stable, so equal radii keep their input order.
        sorted_radii.sort_by(f64::total_cmp);
        let scale = 2.0 / dispersion.delta_hat.sqrt();
        let center = dispersion.tr_sigma_d.sqrt();
        let standardized = radii.iter().map(|r| scale * (r - center)).collect();
        Ok(Self {
            radii,
            sorted_radii,
            standardized,
            dispersion,
        })
    }

    pub fn n(&self) -> usize {
        self.radii.len()
    }

    /// The `k`-th smallest radius, 1-based.
    pub fn order_statistic(&self, k: usize) -> f64 {
        self.sorted_radii[k - 1]
    }

    /// `R₍ₙ₋q₊₁₎ − R₍q₎`.
    pub fn quasi_range(&self, q: usize) -> f64 {
        let n = self.n();
        self.order_statistic(n - q + 1) - self.order_statistic(q)
    }
}
