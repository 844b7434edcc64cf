//! Variance estimators, oracle variances, Wald intervals and regions, and
//! inference under rerandomization.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::designs::RngSeed;
use crate::dist;
use crate::error::{Error, Result};
use crate::estimators::{self, AdjustmentMode};
use crate::linalg;
use crate::science::{ContrastMatrix, CovariateMatrix, ObservedData, ScienceTable, Structure};

fn sample_variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
}

fn arm_sample_variances(obs: &ObservedData) -> Result<Vec<f64>> {
    (0..obs.assignment.q())
        .map(|q| {
            let v = obs.arm_outcomes(q);
            if v.len() < 2 {
                Err(Error::ArmTooSmall {
                    arm: q + 1,
                    count: v.len(),
                    required: 2,
                })
            } else {
                Ok(sample_variance(&v))
            }
        })
        .collect()
}

fn contrast_of_diag(f: &ContrastMatrix, diag: &[f64]) -> DMatrix<f64> {
    let fm = f.matrix();
    fm.transpose() * DMatrix::from_diagonal(&DVector::from_column_slice(diag)) * fm
}

/// Neyman-type estimator `F' diag(Shat(q,q) / N_q) F`.
pub fn neyman_var(obs: &ObservedData, f: &ContrastMatrix) -> Result<DMatrix<f64>> {
    if f.q() != obs.assignment.q() {
        return Err(Error::DimensionMismatch(format!(
            "contrast has {} rows for {} arms",
            f.q(),
            obs.assignment.q()
        )));
    }
    let s = arm_sample_variances(obs)?;
    let counts = obs.assignment.counts();
    let d: Vec<f64> = s.iter().zip(counts).map(|(v, &c)| v / c as f64).collect();
    Ok(contrast_of_diag(f, &d))
}

fn check_counts(table: &ScienceTable, counts: &[usize], f: &ContrastMatrix) -> Result<()> {
    if counts.len() != table.q() || f.q() != table.q() {
        return Err(Error::DimensionMismatch(format!(
            "{} arm counts and a {}-row contrast for a table with {} arms",
            counts.len(),
            f.q(),
            table.q()
        )));
    }
    if counts.iter().sum::<usize>() != table.n() || counts.contains(&0) {
        return Err(Error::InvalidInput(format!(
            "arm counts {counts:?} must be positive and sum to {}",
            table.n()
        )));
    }
    Ok(())
}

/// `F' diag(S(q,q) / N_q) F`, the expectation of [`neyman_var`] under complete
/// randomization.
pub fn neyman_target(table: &ScienceTable, counts: &[usize], f: &ContrastMatrix) -> Result<DMatrix<f64>> {
    check_counts(table, counts, f)?;
    let cov = linalg::row_covariance(table.outcomes());
    let d: Vec<f64> = (0..table.q()).map(|q| cov[(q, q)] / counts[q] as f64).collect();
    Ok(contrast_of_diag(f, &d))
}

/// Sampling covariance of `F' Yhat(.)` under complete randomization:
/// `F' diag(S(q,q) / N_q) F - F' S F / N`.
pub fn true_var_oracle(table: &ScienceTable, counts: &[usize], f: &ContrastMatrix) -> Result<DMatrix<f64>> {
    let target = neyman_target(table, counts, f)?;
    let cov = linalg::row_covariance(table.outcomes());
    let fm = f.matrix();
    Ok(target - fm.transpose() * cov * fm / table.n() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SandwichKind {
    Ehw,
    Hc2,
}

/// Heteroskedasticity-robust covariance of least-squares coefficients.
pub fn sandwich(
    design: &DMatrix<f64>,
    residuals: &DVector<f64>,
    leverages: &DVector<f64>,
    kind: SandwichKind,
) -> Result<DMatrix<f64>> {
    let p = design.ncols();
    let bread = linalg::spd_inverse(&(design.transpose() * design), &|j| format!("column {}", j + 1))?;
    let mut meat = DMatrix::zeros(p, p);
    for (i, row) in design.row_iter().enumerate() {
        let w = match kind {
            SandwichKind::Ehw => residuals[i].powi(2),
            SandwichKind::Hc2 => {
                let one_minus = 1.0 - leverages[i];
                if one_minus <= 1e-12 {
                    return Err(Error::Degenerate(format!(
                        "unit {} has leverage 1; the HC2 correction is undefined",
                        i + 1
                    )));
                }
                residuals[i].powi(2) / one_minus
            }
        };
        meat += row.transpose() * row * w;
    }
    Ok(&bread * meat * &bread)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OlsVariances {
    pub ols: f64,
    pub ehw: f64,
    pub hc2: f64,
}

/// Variances of the treatment coefficient from regressing outcomes on an
/// intercept and the treatment indicator.
pub fn ols_hc_variances(obs: &ObservedData) -> Result<OlsVariances> {
    if obs.assignment.q() != 2 {
        return Err(Error::InvalidInput("two arms required".into()));
    }
    arm_sample_variances(obs)?;
    let n = obs.n();
    if n < 3 {
        return Err(Error::InvalidInput("at least three units required".into()));
    }
    let design = DMatrix::from_fn(n, 2, |i, j| {
        if j == 0 || obs.assignment.is_treated(i) {
            1.0
        } else {
            0.0
        }
    });
    let y = DVector::from_column_slice(&obs.y);
    let ls = linalg::least_squares(&design, &y, "treatment regression")?;
    let sigma2 = ls.residuals.norm_squared() / (n as f64 - 2.0);
    let bread = linalg::spd_inverse(&(design.transpose() * &design), &|j| format!("column {}", j + 1))?;
    Ok(OlsVariances {
        ols: sigma2 * bread[(1, 1)],
        ehw: sandwich(&design, &ls.residuals, &ls.leverages, SandwichKind::Ehw)?[(1, 1)],
        hc2: sandwich(&design, &ls.residuals, &ls.leverages, SandwichKind::Hc2)?[(1, 1)],
    })
}

/// Robust covariance of `F' gammahat` for a regression-adjusted estimator.
pub fn regression_var(
    obs: &ObservedData,
    x: &CovariateMatrix,
    mode: AdjustmentMode,
    f: &ContrastMatrix,
    kind: SandwichKind,
) -> Result<DMatrix<f64>> {
    let est = estimators::regression_adjusted(obs, x, mode, f)?;
    let design = estimators::regression_design(&obs.assignment, x.centered().matrix(), mode);
    let cov = sandwich(&design, &est.fit.residuals, &est.fit.leverages, kind)?;
    let q = obs.assignment.q();
    let block = cov.view((0, 0), (q, q));
    Ok(f.matrix().transpose() * block * f.matrix())
}

/// Conservative variance estimator of the fixed-coefficient adjusted
/// estimator, the sum of arm-wise sample variances of adjusted outcomes.
pub fn adjusted_var(
    obs: &ObservedData,
    x: &CovariateMatrix,
    beta1: &DVector<f64>,
    beta0: &DVector<f64>,
) -> Result<f64> {
    estimators::adjusted_with_coefficients(obs, x, beta1, beta0)?;
    arm_sample_variances(obs)?;
    let adj = estimators::adjusted_outcomes(obs, x, beta1, beta0);
    let mut total = 0.0;
    for arm in 0..2 {
        let v: Vec<f64> = (0..obs.n())
            .filter(|&i| obs.assignment.arm(i) == arm)
            .map(|i| adj[i])
            .collect();
        total += sample_variance(&v) / v.len() as f64;
    }
    Ok(total)
}

/// Stratified estimator `sum_k pi_k^2 {Shat_k^2(1)/N_k1 + Shat_k^2(0)/N_k0}`.
pub fn sre_var(obs: &ObservedData) -> Result<f64> {
    let est = estimators::sre_estimate(obs)?;
    let mut v = 0.0;
    for s in &est.strata {
        match (s.var1, s.var0) {
            (Some(v1), Some(v0)) => {
                v += s.weight.powi(2) * (v1 / s.treated as f64 + v0 / (s.size - s.treated) as f64)
            }
            _ => {
                return Err(Error::Degenerate(format!(
                    "stratum {} has an arm with fewer than two units; use the matched-pair variance",
                    s.label
                )))
            }
        }
    }
    Ok(v)
}

/// Matched-pair estimator `{n(n-1)}^{-1} sum_k (tauhat_k - tauhat)^2`.
pub fn mpe_var(obs: &ObservedData) -> Result<f64> {
    let est = estimators::mpe_estimate(obs)?;
    let n = est.pair_effects.len();
    if n < 2 {
        return Err(Error::Degenerate("at least two pairs required".into()));
    }
    let ss: f64 = est.pair_effects.iter().map(|d| (d - est.tau).powi(2)).sum();
    Ok(ss / (n * (n - 1)) as f64)
}

/// Variance for stratified or paired data, chosen by the attached structure.
pub fn sre_mpe_var(obs: &ObservedData) -> Result<f64> {
    match obs.assignment.structure() {
        Structure::Pairs(_) => mpe_var(obs),
        _ => sre_var(obs),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaldMode {
    Interval,
    Region,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceScale {
    /// Covariance of the estimator itself.
    Absolute,
    /// Covariance of `sqrt(N)` times the estimator.
    PerUnit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    /// Inverse of the estimated covariance.
    pub precision: Vec<Vec<f64>>,
    /// Chi-square upper quantile bounding the quadratic form.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub method: String,
    pub estimate: Vec<f64>,
    pub variance: Vec<Vec<f64>>,
    pub variance_scale: VarianceScale,
    pub alpha: f64,
    pub critical_value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<Region>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_squared: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl EstimateReport {
    /// Whether `tau` lies in the reported interval or region.
    pub fn covers(&self, tau: &[f64]) -> bool {
        if let Some([lo, hi]) = self.interval {
            return lo <= tau[0] && tau[0] <= hi;
        }
        match &self.region {
            Some(r) => {
                let d: Vec<f64> = tau.iter().zip(&self.estimate).map(|(t, e)| e - t).collect();
                let mut qf = 0.0;
                for (i, row) in r.precision.iter().enumerate() {
                    for (j, p) in row.iter().enumerate() {
                        qf += d[i] * p * d[j];
                    }
                }
                qf <= r.threshold
            }
            None => false,
        }
    }

    pub fn width(&self) -> Option<f64> {
        self.interval.map(|[lo, hi]| hi - lo)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha {alpha} outside (0, 1)")));
    }
    Ok(())
}

/// Wald interval `tauhat +- z sqrt(Vhat)` or chi-square region.
pub fn wald(
    tau: &DVector<f64>,
    v: &DMatrix<f64>,
    alpha: f64,
    mode: WaldMode,
    method: &str,
) -> Result<EstimateReport> {
    check_alpha(alpha)?;
    let h = tau.len();
    if v.shape() != (h, h) {
        return Err(Error::DimensionMismatch(format!(
            "{h} estimates with a {}x{} covariance",
            v.nrows(),
            v.ncols()
        )));
    }
    let mut report = EstimateReport {
        method: method.to_string(),
        estimate: tau.iter().copied().collect(),
        variance: to_rows(v),
        variance_scale: VarianceScale::Absolute,
        alpha,
        critical_value: 0.0,
        interval: None,
        region: None,
        r_squared: None,
        warnings: Vec::new(),
    };
    match mode {
        WaldMode::Interval => {
            if h != 1 {
                return Err(Error::InvalidInput(format!(
                    "interval mode needs one contrast, found {h}; use region mode"
                )));
            }
            let z = dist::z_two_sided(alpha)?;
            let half = z * v[(0, 0)].max(0.0).sqrt();
            report.critical_value = z;
            report.interval = Some([tau[0] - half, tau[0] + half]);
        }
        WaldMode::Region => {
            let precision = linalg::spd_inverse(v, &|j| format!("contrast {}", j + 1))?;
            let q = dist::chi2_upper_quantile(alpha, h as f64)?;
            report.critical_value = q;
            report.region = Some(Region {
                precision: to_rows(&precision),
                threshold: q,
            });
        }
    }
    Ok(report)
}

/// Parameters of the constrained Gaussian `D_1 | D'D <= a`, `D ~ N(0, I_K)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstrainedGaussianSpec {
    pub k: usize,
    /// Threshold; `f64::INFINITY` means no constraint.
    pub a: f64,
}

/// Smallest acceptance probability the rejection sampler accepts.
pub const MIN_ACCEPTANCE: f64 = 1e-6;

impl ConstrainedGaussianSpec {
    pub fn new(k: usize, a: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInput("dimension must be at least 1".into()));
        }
        if !(a > 0.0) {
            return Err(Error::InvalidInput(format!("threshold {a} must be positive")));
        }
        Ok(Self { k, a })
    }

    /// `P(chi2_K <= a)`.
    pub fn acceptance(&self) -> f64 {
        dist::chi2_cdf(self.a, self.k as f64)
    }

    /// `Var(L_{K,a}) = P(chi2_{K+2} <= a) / P(chi2_K <= a)`.
    pub fn variance(&self) -> f64 {
        if self.a.is_infinite() {
            1.0
        } else {
            dist::chi2_cdf(self.a, self.k as f64 + 2.0) / self.acceptance()
        }
    }

    fn check_feasible(&self) -> Result<()> {
        let p = self.acceptance();
        if p < MIN_ACCEPTANCE {
            return Err(Error::Infeasible(format!(
                "acceptance probability {p:.3e} below {MIN_ACCEPTANCE:e} for K = {}, a = {}",
                self.k, self.a
            )));
        }
        Ok(())
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        loop {
            let d1: f64 = rng.sample(StandardNormal);
            if self.a.is_infinite() {
                return d1;
            }
            let mut ss = d1 * d1;
            for _ in 1..self.k {
                let d: f64 = rng.sample(StandardNormal);
                ss += d * d;
            }
            if ss <= self.a {
                return d1;
            }
        }
    }
}

/// `n` independent draws of the constrained Gaussian by rejection.
pub fn sample_constrained_gaussian(spec: &ConstrainedGaussianSpec, n: usize, seed: RngSeed) -> Result<Vec<f64>> {
    spec.check_feasible()?;
    if n == 0 {
        return Err(Error::InvalidInput("at least one draw required".into()));
    }
    let mut rng = seed.rng();
    Ok((0..n).map(|_| spec.draw(&mut rng)).collect())
}

/// Monte Carlo reference for `sqrt(1 - R^2) eps_0 + sqrt(R^2) L_{K,a}`.
///
/// The Gaussian and constrained-Gaussian draws are made once, so quantiles
/// for different `R^2` share the same random numbers.
#[derive(Debug, Clone)]
pub struct RemReference {
    pub spec: ConstrainedGaussianSpec,
    eps: Vec<f64>,
    constrained: Vec<f64>,
}

/// Default number of Monte Carlo draws for the reference law.
pub const DEFAULT_MC_REPS: usize = 100_000;

impl RemReference {
    pub fn new(spec: ConstrainedGaussianSpec, reps: usize, seed: RngSeed) -> Result<Self> {
        spec.check_feasible()?;
        if reps == 0 {
            return Err(Error::InvalidInput("at least one reference draw required".into()));
        }
        let mut rng = seed.rng();
        let eps = (0..reps).map(|_| rng.sample(StandardNormal)).collect();
        let constrained = (0..reps).map(|_| spec.draw(&mut rng)).collect();
        Ok(Self { spec, eps, constrained })
    }

    pub fn reps(&self) -> usize {
        self.eps.len()
    }

    /// Draws of the limit law for the given `R^2`.
    pub fn draws(&self, r2: f64) -> Vec<f64> {
        let r2 = r2.clamp(0.0, 1.0);
        let (a, b) = ((1.0 - r2).sqrt(), r2.sqrt());
        self.eps
            .iter()
            .zip(&self.constrained)
            .map(|(e, l)| a * e + b * l)
            .collect()
    }

    /// Lower empirical `1 - alpha` quantile of the absolute value.
    pub fn abs_quantile(&self, r2: f64, alpha: f64) -> Result<f64> {
        check_alpha(alpha)?;
        let mut d: Vec<f64> = self.draws(r2).into_iter().map(f64::abs).collect();
        let idx = ((1.0 - alpha) * d.len() as f64).ceil() as usize;
        let idx = idx.clamp(1, d.len()) - 1;
        Ok(*d.select_nth_unstable_by(idx, f64::total_cmp).1)
    }
}

/// Plug-in `(Vhat, R^2hat)` for the difference in means under rerandomization,
/// with `Vhat` on the per-unit scale.
pub fn rem_plugins(obs: &ObservedData, x: &CovariateMatrix) -> Result<(f64, f64)> {
    if obs.assignment.q() != 2 {
        return Err(Error::InvalidInput("two arms required".into()));
    }
    let s = arm_sample_variances(obs)?;
    let c = obs.assignment.counts();
    let (n0, n1, n) = (c[0] as f64, c[1] as f64, obs.n() as f64);
    let v = n * (s[1] / n1 + s[0] / n0);
    let (b1, b0) = estimators::armwise_slopes(obs, x)?;
    let delta = b1 * (n0 / n) + b0 * (n1 / n);
    let explained = n * (1.0 / n1 + 1.0 / n0) * (delta.transpose() * x.covariance() * &delta)[(0, 0)];
    let r2 = if v > 0.0 { (explained / v).clamp(0.0, 1.0) } else { 0.0 };
    Ok((v, r2))
}

/// Interval for the difference in means under rerandomization using a
/// precomputed reference law.
pub fn rem_interval(
    obs: &ObservedData,
    x: &CovariateMatrix,
    reference: &RemReference,
    alpha: f64,
) -> Result<EstimateReport> {
    if x.k() != reference.spec.k {
        return Err(Error::DimensionMismatch(format!(
            "{} covariates for a reference built with K = {}",
            x.k(),
            reference.spec.k
        )));
    }
    let tau = estimators::difference_in_means(obs)?;
    let (v, r2) = rem_plugins(obs, x)?;
    let q = reference.abs_quantile(r2, alpha)?;
    let half = q * (v / obs.n() as f64).sqrt();
    Ok(EstimateReport {
        method: "rerandomization".into(),
        estimate: vec![tau],
        variance: vec![vec![v]],
        variance_scale: VarianceScale::PerUnit,
        alpha,
        critical_value: q,
        interval: Some([tau - half, tau + half]),
        region: None,
        r_squared: Some(r2),
        warnings: Vec::new(),
    })
}

/// Interval for the difference in means under rerandomization with threshold
/// `a`, from `mc_reps` draws of the limit law.
pub fn rem_inference(
    obs: &ObservedData,
    x: &CovariateMatrix,
    a: f64,
    alpha: f64,
    mc_reps: usize,
    seed: RngSeed,
) -> Result<EstimateReport> {
    let reference = RemReference::new(ConstrainedGaussianSpec::new(x.k(), a)?, mc_reps, seed)?;
    rem_interval(obs, x, &reference, alpha)
}
