//! Covariance builders, data generators for the null and alternative models,
//! and effective-rank diagnostics.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::RngCore;
use rand_distr::{ChiSquared, Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{HdnormError, Result};
use crate::moments::DataMatrix;
use crate::streams::{self, open_uniform, standard_normal};

const PSD_TOLERANCE: f64 = -1e-8;

/// Recipe for a `d × d` covariance matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovSpec {
    Identity,
    /// `Σᵢⱼ = ρ^|i−j|`.
    Ar1 { rho: f64 },
    /// `(Σ* + δI)/(1 + δ)` where `Σ*` has unit diagonal and off-diagonal entries
    /// `Unif[0,1]·Bernoulli(density)`, and `δ = max(−λ_min(Σ*), 0) + jitter`.
    SparseRandom {
        #[serde(default = "default_density")]
        density: f64,
        #[serde(default = "default_jitter")]
        jitter: f64,
        seed: u64,
    },
    /// `WWᵀ/d` with `W` a `d × d` standard normal matrix.
    Wishart { seed: u64 },
    /// `diag(rate^1, …, rate^d)`.
    GeomDecay { rate: f64 },
}

fn default_density() -> f64 {
    0.02
}

fn default_jitter() -> f64 {
    0.05
}

impl CovSpec {
    pub fn label(&self) -> String {
        match self {
            Self::Identity => "identity".into(),
            Self::Ar1 { rho } => format!("ar1(rho={rho})"),
            Self::SparseRandom { density, jitter, seed } => {
                format!("sparse_random(density={density},jitter={jitter},seed={seed})")
            }
            Self::Wishart { seed } => format!("wishart(seed={seed})"),
            Self::GeomDecay { rate } => format!("geom_decay(rate={rate})"),
        }
    }

    fn diagonal(&self, d: usize) -> Option<Vec<f64>> {
        match self {
            Self::Identity => Some(vec![1.0; d]),
            Self::GeomDecay { rate } => Some((1..=d).map(|j| rate.powi(j as i32)).collect()),
            _ => None,
        }
    }

    fn validate(&self, d: usize) -> Result<()> {
        let bad = |msg: String| Err(HdnormError::InvalidScenarioParams(msg));
        if d == 0 {
            return bad("dimension must be positive".into());
        }
        match *self {
            Self::Ar1 { rho } if rho.is_nan() || rho.abs() >= 1.0 => bad(format!("AR(1) needs |rho| < 1, got {rho}")),
            Self::SparseRandom { density, jitter, .. }
                if !((0.0..=1.0).contains(&density) && jitter > 0.0) =>
            {
                bad(format!(
                    "sparse covariance needs density in [0, 1] and positive jitter, got {density}, {jitter}"
                ))
            }
            Self::GeomDecay { rate } if !(rate > 0.0 && rate.is_finite()) => {
                bad(format!("decay rate must be positive, got {rate}"))
            }
            _ => Ok(()),
        }
    }
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Builds the covariance matrix described by `spec` in dimension `d`.
pub fn build_covariance(spec: &CovSpec, d: usize) -> Result<DMatrix<f64>> {
    spec.validate(d)?;
    if let Some(diag) = spec.diagonal(d) {
        return Ok(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag)));
    }
    let sigma = match *spec {
        CovSpec::Ar1 { rho } => DMatrix::from_fn(d, d, |i, j| rho.powi(i.abs_diff(j) as i32)),
        CovSpec::SparseRandom { density, jitter, seed } => {
            let star = sparse_pattern(d, density, seed);
            let delta = sparse_shift(&star, jitter);
            (star + DMatrix::identity(d, d) * delta) / (1.0 + delta)
        }
        CovSpec::Wishart { seed } => {
            let mut rng = streams::stream(seed, 0);
            let w = DMatrix::from_fn(d, d, |_, _| 0.0).map(|_: f64| standard_normal(&mut rng));
            let mut s = &w * w.transpose() / d as f64;
            symmetrize(&mut s);
            s
        }
        CovSpec::Identity | CovSpec::GeomDecay { .. } => unreachable!("handled as diagonal"),
    };
    let lambda_min = min_eigenvalue(&sigma);
    if lambda_min < PSD_TOLERANCE {
        return Err(HdnormError::NotPsd {
            min_eigenvalue: lambda_min,
        });
    }
    Ok(sigma)
}

/// Unit diagonal with off-diagonal entries `Unif[0,1]` kept with probability `density`.
fn sparse_pattern(d: usize, density: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = streams::stream(seed, 0);
    let mut star = DMatrix::identity(d, d);
    for i in 0..d {
        for j in (i + 1)..d {
            let u = open_uniform(&mut rng);
            let keep = open_uniform(&mut rng) < density;
            let v = if keep { u } else { 0.0 };
            star[(i, j)] = v;
            star[(j, i)] = v;
        }
    }
    star
}

fn sparse_shift(star: &DMatrix<f64>, jitter: f64) -> f64 {
    (-min_eigenvalue(star)).max(0.0) + jitter
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

/// Haar-distributed orthogonal matrix from the QR factorization of a
/// Gaussian matrix, with column signs fixed by `R`'s diagonal.
pub fn random_orthogonal<R: RngCore + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| 0.0).map(|_: f64| standard_normal(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// A quantity that is either fixed or scales as `coef · d^d_power`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DimParam {
    Fixed(f64),
    Scaled { coef: f64, d_power: f64 },
}

impl DimParam {
    pub fn value(&self, d: usize) -> f64 {
        match *self {
            Self::Fixed(v) => v,
            Self::Scaled { coef, d_power } => coef * (d as f64).powf(d_power),
        }
    }
}

fn half() -> f64 {
    0.5
}

fn t_block_dof() -> f64 {
    25.0
}

/// Distribution family of the observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// `N(0, Σ)`.
    NullGaussian,
    /// `(1 − w) N(0, Σ) + w N(shift · 1, Σ)`.
    LocMixture {
        shift: DimParam,
        #[serde(default = "half")]
        weight: f64,
    },
    /// `w N(0, (1 + spread) Σ) + (1 − w) N(0, (1 − spread) Σ)`.
    CovMixture {
        spread: DimParam,
        #[serde(default = "half")]
        weight: f64,
    },
    /// `L Z / √(χ²_ν / ν)`.
    MultivariateT { dof: DimParam },
    /// Coordinates `Y_j ~ χ²_ν` mapped through `Σ^{1/2}`, optionally after
    /// standardizing to `(Y − ν)/√(2ν)`.
    #[serde(rename = "chisq_marginals")]
    ChiSqMarginals { dof: f64, standardize: bool },
    /// `ε L Z` with `ε ~ Unif(sigma0, sigma0 + width)`.
    EllipticalUniformScale { sigma0: f64, width: f64 },
    /// Independent coordinates with unit variance and fourth moment
    /// `3 + excess_kurtosis`, mapped through `U Λ^{1/2}`.
    Leptokurtic { excess_kurtosis: f64 },
    /// `Σ^{1/2} Z` with `Z_ℓ = U T_ℓ`, a shared Rademacher `U` per
    /// observation and independent centred exponentials `T_ℓ`.
    BaiSarandasaExample,
    /// Leading `(1 − t_fraction) d` coordinates Gaussian, the remaining block
    /// multivariate t with `dof` degrees of freedom.
    MixedMarginals {
        t_fraction: f64,
        #[serde(default = "t_block_dof")]
        dof: f64,
    },
}

impl Family {
    pub fn label(&self) -> &'static str {
        match self {
            Self::NullGaussian => "null_gaussian",
            Self::LocMixture { .. } => "loc_mixture",
            Self::CovMixture { .. } => "cov_mixture",
            Self::MultivariateT { .. } => "multivariate_t",
            Self::ChiSqMarginals { .. } => "chisq_marginals",
            Self::EllipticalUniformScale { .. } => "elliptical_uniform_scale",
            Self::Leptokurtic { .. } => "leptokurtic",
            Self::BaiSarandasaExample => "bai_sarandasa_example",
            Self::MixedMarginals { .. } => "mixed_marginals",
        }
    }

    fn root_kind(&self) -> RootKind {
        match self {
            Self::ChiSqMarginals { .. } | Self::BaiSarandasaExample | Self::MixedMarginals { .. } => {
                RootKind::Symmetric
            }
            Self::Leptokurtic { .. } => RootKind::Spectral,
            _ => RootKind::Cholesky,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(flatten)]
    pub family: Family,
    pub cov: CovSpec,
    pub n: usize,
    pub d: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RootKind {
    /// Any `L` with `LLᵀ = Σ`; used where the law only depends on `Σ`.
    Cholesky,
    /// `V Λ^{1/2} Vᵀ`.
    Symmetric,
    /// `V Λ^{1/2}`.
    Spectral,
}

/// A matrix `L` with `LLᵀ = Σ`, specialised for the structures that occur.
#[derive(Debug, Clone)]
enum CovFactor {
    Identity,
    Diagonal(Vec<f64>),
    Dense(DMatrix<f64>),
}

impl CovFactor {
    fn new(spec: &CovSpec, sigma: &DMatrix<f64>, kind: RootKind) -> Self {
        match spec {
            CovSpec::Identity => return Self::Identity,
            CovSpec::GeomDecay { .. } => {
                return Self::Diagonal(sigma.diagonal().iter().map(|v| v.sqrt()).collect())
            }
            _ => {}
        }
        if kind == RootKind::Cholesky {
            if let Some(ch) = sigma.clone().cholesky() {
                return Self::Dense(ch.l());
            }
        }
        let eig = SymmetricEigen::new(sigma.clone());
        let mut vl = eig.eigenvectors.clone();
        for (j, lambda) in eig.eigenvalues.iter().enumerate() {
            let s = lambda.max(0.0).sqrt();
            vl.column_mut(j).scale_mut(s);
        }
        if kind == RootKind::Symmetric {
            Self::Dense(vl * eig.eigenvectors.transpose())
        } else {
            Self::Dense(vl)
        }
    }

    /// Maps each row `z` of `z_rows` to `L z`.
    fn apply(&self, z_rows: DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Self::Identity => z_rows,
            Self::Diagonal(s) => {
                let mut x = z_rows;
                for (j, mut col) in x.column_iter_mut().enumerate() {
                    col.scale_mut(s[j]);
                }
                x
            }
            Self::Dense(l) => z_rows * l.transpose(),
        }
    }

    fn matrix(&self, d: usize) -> DMatrix<f64> {
        match self {
            Self::Identity => DMatrix::identity(d, d),
            Self::Diagonal(s) => DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(s)),
            Self::Dense(l) => l.clone(),
        }
    }
}

/// Two-point scale law for leptokurtic coordinates: `Z = s G` with `G`
/// standard normal and `s² = 1 + c ε`, where `ε` takes the values
/// `√((1−p)/p)` with probability `p` and `−√(p/(1−p))` otherwise.
/// `E[ε] = 0` and `E[ε²] = 1` give `E[Z²] = 1`; `c² = δ/3` gives
/// `E[Z⁴] = 3 E[s⁴] = 3 + δ`. With `p = 1/(2(1 + c²))` the smaller scale
/// `1 − c/√(1 + 2c²)` stays positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPointScale {
    pub p_high: f64,
    pub scale_high: f64,
    pub scale_low: f64,
}

impl TwoPointScale {
    pub fn calibrate(excess_kurtosis: f64) -> Result<Self> {
        if !(excess_kurtosis >= 0.0 && excess_kurtosis.is_finite()) {
            return Err(HdnormError::InvalidScenarioParams(format!(
                "excess kurtosis must be finite and non-negative, got {excess_kurtosis}"
            )));
        }
        let c2 = excess_kurtosis / 3.0;
        let c = c2.sqrt();
        let p = 1.0 / (2.0 * (1.0 + c2));
        let var_high = 1.0 + c * ((1.0 - p) / p).sqrt();
        let var_low = 1.0 - c * (p / (1.0 - p)).sqrt();
        Ok(Self {
            p_high: p,
            scale_high: var_high.sqrt(),
            scale_low: var_low.sqrt(),
        })
    }

    /// `(E[s²], E[s⁴])`.
    pub fn scale_moments(&self) -> (f64, f64) {
        let (p, h2, l2) = (self.p_high, self.scale_high.powi(2), self.scale_low.powi(2));
        (p * h2 + (1.0 - p) * l2, p * h2 * h2 + (1.0 - p) * l2 * l2)
    }
}

/// Scenario with its covariance and square root built once.
#[derive(Debug, Clone)]
pub struct ScenarioSampler {
    scenario: Scenario,
    sigma: DMatrix<f64>,
    factor: CovFactor,
    lepto: Option<TwoPointScale>,
    t_block: usize,
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(HdnormError::InvalidScenarioParams(msg()))
    }
}

impl ScenarioSampler {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        let (n, d) = (scenario.n, scenario.d);
        check(n >= 1 && d >= 1, || format!("n and d must be positive, got n = {n}, d = {d}"))?;
        let mut lepto = None;
        let mut t_block = 0;
        match &scenario.family {
            Family::NullGaussian | Family::BaiSarandasaExample => {}
            Family::LocMixture { shift, weight } => {
                check(shift.value(d).is_finite(), || "shift must be finite".into())?;
                check(*weight > 0.0 && *weight < 1.0, || {
                    format!("mixture weight must lie in (0, 1), got {weight}")
                })?;
            }
            Family::CovMixture { spread, weight } => {
                let a = spread.value(d);
                check((0.0..1.0).contains(&a), || {
                    format!("variance spread must lie in [0, 1), got {a}")
                })?;
                check(*weight > 0.0 && *weight < 1.0, || {
                    format!("mixture weight must lie in (0, 1), got {weight}")
                })?;
            }
            Family::MultivariateT { dof } => {
                let nu = dof.value(d);
                check(nu > 0.0 && nu.is_finite(), || format!("dof must be positive, got {nu}"))?;
            }
            Family::ChiSqMarginals { dof, .. } => {
                check(*dof > 0.0 && dof.is_finite(), || format!("dof must be positive, got {dof}"))?;
            }
            Family::EllipticalUniformScale { sigma0, width } => {
                check(*sigma0 > 0.0 && *width >= 0.0, || {
                    format!("need sigma0 > 0 and width >= 0, got {sigma0}, {width}")
                })?;
            }
            Family::Leptokurtic { excess_kurtosis } => {
                lepto = Some(TwoPointScale::calibrate(*excess_kurtosis)?);
            }
            Family::MixedMarginals { t_fraction, dof } => {
                check((0.0..=1.0).contains(t_fraction), || {
                    format!("t fraction must lie in [0, 1], got {t_fraction}")
                })?;
                check(*dof > 0.0, || format!("dof must be positive, got {dof}"))?;
                t_block = (t_fraction * d as f64).round() as usize;
            }
        }
        let sigma = build_covariance(&scenario.cov, d)?;
        let factor = CovFactor::new(&scenario.cov, &sigma, scenario.family.root_kind());
        Ok(Self {
            scenario: scenario.clone(),
            sigma,
            factor,
            lepto,
            t_block,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// Draws one `n × d` sample.
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> Result<DataMatrix> {
        let (n, d) = (self.scenario.n, self.scenario.d);
        let mut z = DMatrix::<f64>::zeros(n, d);
        let mut row_shift = vec![0.0; n];
        let mut rng = RngRef(rng);
        let rng = &mut rng;
        for i in 0..n {
            let mut row = vec![0.0; d];
            let mut scale = 1.0;
            match &self.scenario.family {
                Family::NullGaussian => streams::fill_standard_normal(rng, &mut row),
                Family::LocMixture { shift, weight } => {
                    streams::fill_standard_normal(rng, &mut row);
                    if open_uniform(rng) < *weight {
                        row_shift[i] = shift.value(d);
                    }
                }
                Family::CovMixture { spread, weight } => {
                    streams::fill_standard_normal(rng, &mut row);
                    let a = spread.value(d);
                    let v = if open_uniform(rng) < *weight { 1.0 + a } else { 1.0 - a };
                    scale = v.sqrt();
                }
                Family::MultivariateT { dof } => {
                    streams::fill_standard_normal(rng, &mut row);
                    scale = t_scale(dof.value(d), rng);
                }
                Family::ChiSqMarginals { dof, standardize } => {
                    let chi = ChiSquared::new(*dof).expect("validated dof");
                    for v in row.iter_mut() {
                        let y: f64 = chi.sample(rng);
                        *v = if *standardize { (y - dof) / (2.0 * dof).sqrt() } else { y };
                    }
                }
                Family::EllipticalUniformScale { sigma0, width } => {
                    streams::fill_standard_normal(rng, &mut row);
                    scale = sigma0 + width * open_uniform(rng);
                }
                Family::Leptokurtic { .. } => {
                    let law = self.lepto.expect("calibrated");
                    for v in row.iter_mut() {
                        let s = if open_uniform(rng) < law.p_high {
                            law.scale_high
                        } else {
                            law.scale_low
                        };
                        *v = s * standard_normal(rng);
                    }
                }
                Family::BaiSarandasaExample => {
                    let u = if rng.next_u64() >> 63 == 1 { 1.0 } else { -1.0 };
                    for v in row.iter_mut() {
                        let e: f64 = Exp1.sample(rng);
                        *v = u * (e - 1.0);
                    }
                }
                Family::MixedMarginals { dof, .. } => {
                    streams::fill_standard_normal(rng, &mut row);
                    if self.t_block > 0 {
                        let s = t_scale(*dof, rng);
                        for v in row[d - self.t_block..].iter_mut() {
                            *v *= s;
                        }
                    }
                }
            }
            for (j, v) in row.into_iter().enumerate() {
                z[(i, j)] = scale * v;
            }
        }
        let mut x = self.factor.apply(z);
        for (i, s) in row_shift.iter().enumerate() {
            if *s != 0.0 {
                x.row_mut(i).add_scalar_mut(*s);
            }
        }
        DataMatrix::new(x)
    }

    /// Mean vector and covariance matrix of one observation.
    pub fn population_moments(&self) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let d = self.scenario.d;
        let sigma = &self.sigma;
        let zero = vec![0.0; d];
        Ok(match &self.scenario.family {
            Family::NullGaussian | Family::Leptokurtic { .. } | Family::BaiSarandasaExample => {
                (zero, sigma.clone())
            }
            Family::LocMixture { shift, weight } => {
                let a = shift.value(d);
                let w = *weight;
                let cov = sigma.add_scalar(w * (1.0 - w) * a * a);
                (vec![w * a; d], cov)
            }
            Family::CovMixture { spread, weight } => {
                let a = spread.value(d);
                let w = *weight;
                (zero, sigma * (w * (1.0 + a) + (1.0 - w) * (1.0 - a)))
            }
            Family::MultivariateT { dof } => {
                let nu = dof.value(d);
                check(nu > 2.0, || format!("covariance of t needs dof > 2, got {nu}"))?;
                (zero, sigma * (nu / (nu - 2.0)))
            }
            Family::ChiSqMarginals { dof, standardize } => {
                if *standardize {
                    (zero, sigma.clone())
                } else {
                    let l = self.factor.matrix(d);
                    let mean = (l.column_sum() * *dof).iter().copied().collect();
                    (mean, sigma * (2.0 * dof))
                }
            }
            Family::EllipticalUniformScale { sigma0, width } => {
                let m2 = sigma0 * sigma0 + sigma0 * width + width * width / 3.0;
                (zero, sigma * m2)
            }
            Family::MixedMarginals { dof, .. } => {
                check(*dof > 2.0 || self.t_block == 0, || {
                    format!("covariance of t needs dof > 2, got {dof}")
                })?;
                let l = self.factor.matrix(d);
                let block = if self.t_block > 0 { dof / (dof - 2.0) } else { 1.0 };
                let weights = nalgebra::DVector::from_fn(d, |j, _| {
                    if j >= d - self.t_block {
                        block
                    } else {
                        1.0
                    }
                });
                let scaled = &l * DMatrix::from_diagonal(&weights);
                (zero, scaled * l.transpose())
            }
        })
    }
}

/// `1/√(χ²_ν/ν)`.
fn t_scale<R: RngCore + ?Sized>(nu: f64, rng: &mut R) -> f64 {
    let chi: f64 = ChiSquared::new(nu).expect("validated dof").sample(&mut RngRef(rng));
    1.0 / (chi / nu).sqrt()
}

struct RngRef<'a, R: RngCore + ?Sized>(&'a mut R);

impl<R: RngCore + ?Sized> RngCore for RngRef<'_, R> {
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

/// Draws one sample from `scenario`.
pub fn sample_scenario<R: RngCore + ?Sized>(scenario: &Scenario, rng: &mut R) -> Result<DataMatrix> {
    ScenarioSampler::new(scenario)?.sample(rng)
}

/// The effective ranks of a covariance matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveRanks {
    /// `tr(Σ)/‖Σ‖op`.
    pub rho1_sigma: f64,
    /// `tr(Σ²)/‖Σ‖op²`.
    pub rho1_sigma_sq: f64,
    /// `tr²(Σ)/tr(Σ²)`.
    pub rho2_sigma: f64,
    /// `tr²(Σ²)/tr(Σ⁴)`.
    pub rho2_sigma_sq: f64,
    /// `tr³(Σ²)/tr²(Σ³)`.
    pub rho3: f64,
    pub rank: usize,
}

pub fn effective_ranks(sigma: &DMatrix<f64>) -> Result<EffectiveRanks> {
    if sigma.nrows() != sigma.ncols() || sigma.is_empty() {
        return Err(HdnormError::InvalidScenarioParams(
            "effective ranks need a non-empty square matrix".into(),
        ));
    }
    let mut sym = sigma.clone();
    symmetrize(&mut sym);
    let eig: Vec<f64> = SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .map(|l| l.max(0.0))
        .collect();
    let top = eig.iter().copied().fold(0.0, f64::max);
    if top <= 0.0 {
        return Err(HdnormError::ZeroMatrix);
    }
    // Eigenvalues normalized by λ_max.
    let power_sum = |k: i32| -> f64 { eig.iter().map(|l| (l / top).powi(k)).sum() };
    let (t1, t2, t3, t4) = (power_sum(1), power_sum(2), power_sum(3), power_sum(4));
    let rank = eig.iter().filter(|l| **l > 1e-10 * top).count();
    Ok(EffectiveRanks {
        rho1_sigma: t1,
        rho1_sigma_sq: t2,
        rho2_sigma: t1 * t1 / t2,
        rho2_sigma_sq: t2 * t2 / t4,
        rho3: t2.powi(3) / (t3 * t3),
        rank,
    })
}
