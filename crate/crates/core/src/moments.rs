//! Sample moments and the dispersion-index estimator.
//!
//! The dispersion index `2 tr(Σ²) / tr(Σ)` is estimated from two ingredients:
//! the trace of `Σ̂_D` (the sample covariance when `n > d`, otherwise the
//! centered `n × n` Gramian, which has the same non-zero spectrum) and an
//! unbiased estimate of `tr(Σ²)` that needs only `tr(Σ̂_D)`, `tr(Σ̂_D²)` and the
//! fourth powers of the radii. Both are computed in `O(nd·min(n, d))`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{HdnormError, Result};
use crate::sum::{compensated_sum, NeumaierSum};

/// Largest sample size accepted by [`tr_sigma_sq_oracle`] unless a cap is given.
pub const ORACLE_DEFAULT_CAP: usize = 64;

/// Minimum sample size for the `tr(Σ²)` estimator (denominator `(n-2)(n-3)`).
pub const MIN_ESTIMATOR_SAMPLES: usize = 4;

/// An `n × d` sample matrix; rows are observations. All entries are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(HdnormError::EmptyData {
                rows: values.nrows(),
                cols: values.ncols(),
            });
        }
        for j in 0..values.ncols() {
            for i in 0..values.nrows() {
                if !values[(i, j)].is_finite() {
                    return Err(HdnormError::NonFinite { row: i, col: j });
                }
            }
        }
        Ok(Self { values })
    }

    /// Builds from row-major data of `n` rows and `d` columns.
    pub fn from_row_slice(n: usize, d: usize, data: &[f64]) -> Result<Self> {
        if data.len() != n * d {
            return Err(HdnormError::Parse(format!(
                "expected {} values for a {n}x{d} matrix, got {}",
                n * d,
                data.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(n, d, data))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(HdnormError::RaggedRows {
                    row: i,
                    expected: d,
                    found: row.len(),
                });
            }
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_row_slice(n, d, &flat)
    }

    /// Number of observations.
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    /// Number of features.
    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }

    /// Column means.
    pub fn mean(&self) -> Vec<f64> {
        let n = self.n() as f64;
        self.values
            .column_iter()
            .map(|c| compensated_sum(c.iter().copied()) / n)
            .collect()
    }

    /// Rows minus the sample mean.
    pub fn centered(&self) -> DMatrix<f64> {
        let mean = self.mean();
        let mut xc = self.values.clone();
        for (j, mut col) in xc.column_iter_mut().enumerate() {
            let m = mean[j];
            for v in col.iter_mut() {
                *v -= m;
            }
        }
        xc
    }
}

/// `Σ̂_D` together with the path that produced it.
#[derive(Debug, Clone)]
pub struct SigmaHatD {
    /// `d × d` covariance (`n > d`) or `n × n` centered Gramian (`n ≤ d`).
    pub matrix: DMatrix<f64>,
    pub used_gramian: bool,
    /// Set when every row is identical; `matrix` is then zero.
    pub degenerate: bool,
}

/// Ingredients shared by the estimators: squared radii and the two traces.
#[derive(Debug, Clone)]
pub(crate) struct CenteredMoments {
    pub radii_sq: Vec<f64>,
    pub tr_sigma_d: f64,
    pub tr_sigma_d_sq: f64,
    pub used_gramian: bool,
}

/// Squared Euclidean norms of the centered rows, accumulated with compensation.
pub(crate) fn centered_radii_sq(xc: &DMatrix<f64>) -> Vec<f64> {
    let mut acc = vec![NeumaierSum::new(); xc.nrows()];
    for col in xc.column_iter() {
        for (a, v) in acc.iter_mut().zip(col.iter()) {
            a.add(v * v);
        }
    }
    acc.iter().map(NeumaierSum::total).collect()
}

fn sigma_hat_d_from_centered(xc: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let (n, d) = xc.shape();
    let scale = 1.0 / (n as f64 - 1.0);
    if n <= d {
        let mut g = xc * xc.transpose();
        g *= scale;
        symmetrize(&mut g);
        (g, true)
    } else {
        let mut s = xc.transpose() * xc;
        s *= scale;
        symmetrize(&mut s);
        (s, false)
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let k = m.nrows();
    for j in 0..k {
        for i in (j + 1)..k {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn frobenius_sq(m: &DMatrix<f64>) -> f64 {
    compensated_sum(m.iter().map(|v| v * v))
}

pub(crate) fn centered_moments(x: &DataMatrix) -> CenteredMoments {
    let xc = x.centered();
    let radii_sq = centered_radii_sq(&xc);
    let (sigma, used_gramian) = sigma_hat_d_from_centered(&xc);
    let n = x.n() as f64;
    CenteredMoments {
        tr_sigma_d: compensated_sum(radii_sq.iter().copied()) / (n - 1.0),
        tr_sigma_d_sq: frobenius_sq(&sigma),
        radii_sq,
        used_gramian,
    }
}

/// `Σ̂_D`: the `d × d` sample covariance when `n > d`, else the `n × n`
/// centered Gramian scaled by `1/(n-1)`. Ties `n = d` take the Gramian.
pub fn sigma_hat_d(x: &DataMatrix) -> Result<SigmaHatD> {
    if x.n() < 2 {
        return Err(HdnormError::TooFewSamples {
            required: 2,
            got: x.n(),
        });
    }
    let xc = x.centered();
    let degenerate = xc.iter().all(|v| *v == 0.0);
    let (matrix, used_gramian) = sigma_hat_d_from_centered(&xc);
    Ok(SigmaHatD {
        matrix,
        used_gramian,
        degenerate,
    })
}

fn tr_sigma_sq_from_parts(n: usize, tr: f64, tr_sq: f64, radii_fourth_sum: f64) -> f64 {
    let n = n as f64;
    let lead = (n - 1.0) / (n * (n - 2.0) * (n - 3.0));
    lead * ((n - 1.0) * (n - 2.0) * tr_sq + tr * tr - n / (n - 1.0) * radii_fourth_sum)
}

fn require_estimator_size(n: usize) -> Result<()> {
    if n < MIN_ESTIMATOR_SAMPLES {
        return Err(HdnormError::TooFewSamples {
            required: MIN_ESTIMATOR_SAMPLES,
            got: n,
        });
    }
    Ok(())
}

/// Unbiased estimate of `tr(Σ²)` from `tr(Σ̂_D)`, `tr(Σ̂_D²)` and `Σ R_i⁴`.
/// Can be negative for pathological finite samples.
pub fn tr_sigma_sq_hat(x: &DataMatrix) -> Result<f64> {
    require_estimator_size(x.n())?;
    let m = centered_moments(x);
    let fourth = compensated_sum(m.radii_sq.iter().map(|r2| r2 * r2));
    Ok(tr_sigma_sq_from_parts(
        x.n(),
        m.tr_sigma_d,
        m.tr_sigma_d_sq,
        fourth,
    ))
}

/// Brute-force evaluation of the same estimator as three U-statistic sums over
/// ordered tuples of distinct indices:
///
/// `Σ_{i≠j} (XᵢᵀXⱼ)² / P(n,2) − 2 Σ_{i,j,k} XᵢᵀXⱼ XⱼᵀXₖ / P(n,3)
///  + Σ_{i,j,k,l} XᵢᵀXⱼ XₖᵀXₗ / P(n,4)`.
///
/// `O(n⁴)`; sizes above [`ORACLE_DEFAULT_CAP`] are refused.
pub fn tr_sigma_sq_oracle(x: &DataMatrix) -> Result<f64> {
    tr_sigma_sq_oracle_with_cap(x, ORACLE_DEFAULT_CAP)
}

pub fn tr_sigma_sq_oracle_with_cap(x: &DataMatrix, cap: usize) -> Result<f64> {
    let n = x.n();
    require_estimator_size(n)?;
    if n > cap {
        return Err(HdnormError::OracleSizeExceeded { n, cap });
    }
    // The sums are translation invariant, so they are taken over centered rows.
    let xc = x.centered();
    let p = &xc * xc.transpose();

    let mut pairs = NeumaierSum::new();
    let mut triples = NeumaierSum::new();
    let mut quads = NeumaierSum::new();
    for i in 0..n {
        for j in 0..n {
            if j == i {
                continue;
            }
            let pij = p[(i, j)];
            pairs.add(pij * pij);
            for k in 0..n {
                if k == i || k == j {
                    continue;
                }
                triples.add(pij * p[(j, k)]);
                for l in 0..n {
                    if l == i || l == j || l == k {
                        continue;
                    }
                    quads.add(pij * p[(k, l)]);
                }
            }
        }
    }
    let nf = n as f64;
    let p2 = nf * (nf - 1.0);
    let p3 = p2 * (nf - 2.0);
    let p4 = p3 * (nf - 3.0);
    Ok(pairs.total() / p2 - 2.0 * triples.total() / p3 + quads.total() / p4)
}

/// The dispersion-index estimate and its ingredients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionEstimate {
    pub delta_hat: f64,
    pub tr_sigma_d: f64,
    pub tr_sigma_sq_hat: f64,
    pub radii_fourth_sum: f64,
    pub used_gramian: bool,
}

impl DispersionEstimate {
    pub(crate) fn from_moments(n: usize, m: &CenteredMoments) -> Result<Self> {
        require_estimator_size(n)?;
        let radii_fourth_sum = compensated_sum(m.radii_sq.iter().map(|r2| r2 * r2));
        let tr_sigma_sq_hat =
            tr_sigma_sq_from_parts(n, m.tr_sigma_d, m.tr_sigma_d_sq, radii_fourth_sum);
        if !(tr_sigma_sq_hat > 0.0 && m.tr_sigma_d > 0.0) {
            return Err(HdnormError::NonPositiveDispersion {
                tr_sigma_sq_hat,
                tr_sigma_d: m.tr_sigma_d,
            });
        }
        Ok(Self {
            delta_hat: 2.0 * tr_sigma_sq_hat / m.tr_sigma_d,
            tr_sigma_d: m.tr_sigma_d,
            tr_sigma_sq_hat,
            radii_fourth_sum,
            used_gramian: m.used_gramian,
        })
    }
}

/// `Δ̂ = 2 · tr(Σ²)^ / tr(Σ̂_D)`.
pub fn delta_hat(x: &DataMatrix) -> Result<DispersionEstimate> {
    require_estimator_size(x.n())?;
    DispersionEstimate::from_moments(x.n(), &centered_moments(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::streams;

    fn random_matrix(n: usize, d: usize, seed: u64) -> DataMatrix {
        let mut rng = streams::stream(seed, 0);
        let data: Vec<f64> = (0..n * d)
            .map(|_| 2.0 * streams::standard_normal(&mut rng) + 0.5)
            .collect();
        DataMatrix::from_row_slice(n, d, &data).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn rejects_non_finite_and_empty_input() {
        let err = DataMatrix::from_rows(&[vec![1.0, 2.0], vec![f64::NAN, 0.0]]).unwrap_err();
        assert_eq!(err, HdnormError::NonFinite { row: 1, col: 0 });
        assert!(matches!(
            DataMatrix::from_rows(&[]),
            Err(HdnormError::EmptyData { .. })
        ));
        assert!(matches!(
            DataMatrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]),
            Err(HdnormError::RaggedRows { row: 1, .. })
        ));
    }

    #[test]
    fn gramian_of_two_points() {
        // Centered rows (-1, 0) and (1, 0); (n-1)^-1 = 1.
        let x = DataMatrix::from_rows(&[vec![0.0, 0.0], vec![2.0, 0.0]]).unwrap();
        let s = sigma_hat_d(&x).unwrap();
        assert!(s.used_gramian);
        assert!(!s.degenerate);
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        assert_eq!(s.matrix, expected);
    }

    #[test]
    fn identical_rows_give_zero_matrix_with_flag() {
        let x = DataMatrix::from_rows(&vec![vec![3.0, -1.0]; 5]).unwrap();
        let s = sigma_hat_d(&x).unwrap();
        assert!(s.degenerate);
        assert!(!s.used_gramian);
        assert!(s.matrix.iter().all(|v| *v == 0.0));
        assert_eq!(tr_sigma_sq_hat(&x).unwrap(), 0.0);
        assert!(matches!(
            delta_hat(&x),
            Err(HdnormError::NonPositiveDispersion { .. })
        ));
    }

    #[test]
    fn covariance_and_gramian_paths_share_traces() {
        let x = random_matrix(6, 3, 1);
        let cov = sigma_hat_d(&x).unwrap();
        assert!(!cov.used_gramian);
        let xc = x.centered();
        let mut g = &xc * xc.transpose();
        g /= 5.0;
        assert!(rel(cov.matrix.trace(), g.trace()) < 1e-10);
        assert!(rel(frobenius_sq(&cov.matrix), frobenius_sq(&g)) < 1e-10);
    }

    #[test]
    fn tie_n_equals_d_uses_gramian() {
        let x = random_matrix(5, 5, 2);
        assert!(sigma_hat_d(&x).unwrap().used_gramian);
        assert!(delta_hat(&x).unwrap().used_gramian);
    }

    #[test]
    fn too_few_samples() {
        let x = random_matrix(3, 4, 3);
        assert_eq!(
            tr_sigma_sq_hat(&x).unwrap_err(),
            HdnormError::TooFewSamples {
                required: 4,
                got: 3
            }
        );
        assert!(matches!(
            tr_sigma_sq_oracle(&x),
            Err(HdnormError::TooFewSamples { .. })
        ));
        assert!(matches!(delta_hat(&x), Err(HdnormError::TooFewSamples { .. })));
    }

    #[test]
    fn oracle_hand_expansion_on_signed_axes() {
        // Rows e1, -e1, e2, -e2. Non-zero off-diagonal inner products are
        // P12 = P21 = P34 = P43 = -1. Pair sum 4/12; the triple sum vanishes
        // (j has a single non-zero neighbour so i = k); the quadruple sum has
        // 8 unit terms over 24, giving 1/3 + 1/3.
        let x = DataMatrix::from_rows(&[
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, -1.0],
        ])
        .unwrap();
        let oracle = tr_sigma_sq_oracle(&x).unwrap();
        assert!((oracle - 2.0 / 3.0).abs() < 1e-15);
        assert!((tr_sigma_sq_hat(&x).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn oracle_identical_rows_is_zero() {
        let x = DataMatrix::from_rows(&vec![vec![1.5, 2.0, -3.0]; 6]).unwrap();
        assert_eq!(tr_sigma_sq_oracle(&x).unwrap(), 0.0);
    }

    #[test]
    fn oracle_refuses_large_n() {
        let x = random_matrix(65, 2, 4);
        assert_eq!(
            tr_sigma_sq_oracle(&x).unwrap_err(),
            HdnormError::OracleSizeExceeded { n: 65, cap: 64 }
        );
        let small = random_matrix(8, 2, 4);
        assert!(matches!(
            tr_sigma_sq_oracle_with_cap(&small, 6),
            Err(HdnormError::OracleSizeExceeded { n: 8, cap: 6 })
        ));
    }

    #[test]
    fn fast_estimator_matches_oracle() {
        for (seed, (n, d)) in [(6, 4), (10, 5), (7, 12), (12, 3)].into_iter().enumerate() {
            let x = random_matrix(n, d, 10 + seed as u64);
            let fast = tr_sigma_sq_hat(&x).unwrap();
            let oracle = tr_sigma_sq_oracle(&x).unwrap();
            assert!(rel(fast, oracle) < 1e-8, "{n}x{d}: {fast} vs {oracle}");
        }
    }

    #[test]
    fn delta_scales_with_square_of_scale() {
        let x = random_matrix(12, 30, 5);
        let base = delta_hat(&x).unwrap().delta_hat;
        let scaled = DataMatrix::new(x.values() * 3.0).unwrap();
        assert!(rel(delta_hat(&scaled).unwrap().delta_hat, 9.0 * base) < 1e-12);
    }

    #[test]
    fn delta_near_two_for_isotropic_gaussian() {
        let mut rng = streams::stream(99, 0);
        let (n, d) = (100, 1000);
        let data: Vec<f64> = (0..n * d)
            .map(|_| streams::standard_normal(&mut rng))
            .collect();
        let x = DataMatrix::from_row_slice(n, d, &data).unwrap();
        let est = delta_hat(&x).unwrap();
        assert!(est.used_gramian);
        assert!((1.6..=2.4).contains(&est.delta_hat), "{}", est.delta_hat);
    }

    #[test]
    fn estimator_is_unbiased_for_isotropic_gaussian() {
        let (n, d, seeds) = (200, 50, 500);
        let mean = (0..seeds)
            .map(|seed| {
                let mut rng = streams::stream(7_000 + seed, 0);
                let data: Vec<f64> = (0..n * d)
                    .map(|_| streams::standard_normal(&mut rng))
                    .collect();
                tr_sigma_sq_hat(&DataMatrix::from_row_slice(n, d, &data).unwrap()).unwrap()
            })
            .sum::<f64>()
            / seeds as f64;
        assert!(rel(mean, 50.0) < 0.05, "{mean}");
    }

    fn similarity(x: &DataMatrix, scale: f64, shift: &[f64], seed: u64) -> DataMatrix {
        let d = x.d();
        let v = crate::generators::random_orthogonal(d, &mut streams::stream(seed, 3));
        let mut y = x.values() * v.transpose() * scale;
        for mut row in y.row_iter_mut() {
            for (value, w) in row.iter_mut().zip(shift) {
                *value += w;
            }
        }
        DataMatrix::new(y).unwrap()
    }

    #[test]
    fn delta_is_rotation_invariant() {
        for (n, d) in [(15, 40), (40, 15)] {
            let x = random_matrix(n, d, 21);
            let y = similarity(&x, 1.0, &vec![0.0; d], 22);
            let (a, b) = (delta_hat(&x).unwrap(), delta_hat(&y).unwrap());
            assert!(rel(b.delta_hat, a.delta_hat) < 1e-10);
        }
    }

    #[test]
    fn delta_is_translation_invariant() {
        let x = random_matrix(25, 10, 23);
        let shift: Vec<f64> = (0..10).map(|j| 1e3 * (j as f64 - 4.5)).collect();
        let y = similarity(&x, 1.0, &shift, 24);
        let z = similarity(&x, 1.0, &[0.0; 10], 24);
        assert!(rel(delta_hat(&y).unwrap().delta_hat, delta_hat(&z).unwrap().delta_hat) < 1e-9);
    }

    proptest::proptest! {
        #[test]
        fn fast_estimator_equals_oracle(n in 4usize..=20, d in 1usize..12, seed in 0u64..10_000) {
            let x = random_matrix(n, d, seed);
            let fast = tr_sigma_sq_hat(&x).unwrap();
            let oracle = tr_sigma_sq_oracle(&x).unwrap();
            proptest::prop_assert!((fast - oracle).abs() <= 1e-8 * (1.0 + oracle.abs()));
        }

        #[test]
        fn delta_is_similarity_equivariant(
            seed in 0u64..10_000,
            scale in 0.05f64..20.0,
            shift in proptest::collection::vec(-100.0f64..100.0, 8),
        ) {
            let x = random_matrix(14, 8, seed);
            let base = delta_hat(&x).unwrap().delta_hat;
            let moved = delta_hat(&similarity(&x, scale, &shift, seed)).unwrap().delta_hat;
            proptest::prop_assert!(rel(moved, scale * scale * base) < 1e-9);
        }
    }
}
