//! Simulation harness: exact enumeration audits, repeated-sampling studies,
//! rerandomization distribution checks, and Berry-Esseen rate experiments.
//!
//! Replicate `r` of a study draws its assignment from stream `r` of the study
//! seed, so results do not depend on the number of worker threads.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::designs::{self, DesignSpec, RngSeed};
use crate::dist;
use crate::error::{Error, Result};
use crate::estimators::{self, AdjustmentMode};
use crate::linalg;
use crate::par;
use crate::perm::{self, PermKernel};
use crate::science::{observe, ContrastMatrix, CovariateMatrix, ScienceTable};
use crate::variance::{self, ConstrainedGaussianSpec, RemReference, SandwichKind, WaldMode};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    /// Linear in the covariates, shared noise, covariate-driven effect
    /// heterogeneity.
    LinearHomoskedastic,
    /// Linear in the covariates, independent arm-specific noise whose scale
    /// grows with the arm index and the first covariate.
    LinearHeteroskedastic,
    /// Linear in the covariates with independent Student-t(3) noise per arm.
    HeavyTail,
    /// Constant unit-level effects.
    AdditiveEffect,
}

fn default_q() -> usize {
    2
}

fn default_one() -> f64 {
    1.0
}

/// Data-generating process for a synthetic science table.
///
/// `Y_i(q) = signal * sum_k X_ik / sqrt(K) + effect * q + heterogeneity * q * X_i1 + noise * e_i(q)`
/// with `X_ik` standard normal. The noise term `e_i(q)` depends on the
/// generator; the additive generator drops the heterogeneity term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpSpec {
    pub n: usize,
    #[serde(default = "default_q")]
    pub q: usize,
    #[serde(default)]
    pub k: usize,
    pub generator: Generator,
    #[serde(default = "default_one")]
    pub effect: f64,
    #[serde(default)]
    pub heterogeneity: f64,
    #[serde(default)]
    pub signal: f64,
    #[serde(default = "default_one")]
    pub noise: f64,
    pub seed: u64,
}

impl DgpSpec {
    pub fn generate(&self) -> Result<(ScienceTable, Option<CovariateMatrix>)> {
        if self.n < 2 || self.q < 2 {
            return Err(Error::InvalidInput(format!(
                "need N >= 2 and Q >= 2, got N = {}, Q = {}",
                self.n, self.q
            )));
        }
        for (name, v) in [
            ("effect", self.effect),
            ("heterogeneity", self.heterogeneity),
            ("signal", self.signal),
            ("noise", self.noise),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("{name} must be finite")));
            }
        }
        let mut rng = RngSeed::new(self.seed).rng();
        let x = DMatrix::from_fn(self.n, self.k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let t3 = StudentT::new(3.0).expect("positive degrees of freedom");
        let scale = if self.k > 0 { (self.k as f64).sqrt() } else { 1.0 };
        let mut y = DMatrix::zeros(self.n, self.q);
        for i in 0..self.n {
            let base = if self.k > 0 {
                self.signal * x.row(i).sum() / scale
            } else {
                0.0
            };
            let x1 = if self.k > 0 { x[(i, 0)] } else { 0.0 };
            let shared: f64 = rng.sample(StandardNormal);
            for q in 0..self.q {
                let qf = q as f64;
                let (het, e) = match self.generator {
                    Generator::AdditiveEffect => (0.0, shared),
                    Generator::LinearHomoskedastic => (self.heterogeneity * qf * x1, shared),
                    Generator::LinearHeteroskedastic => {
                        let z: f64 = rng.sample(StandardNormal);
                        (
                            self.heterogeneity * qf * x1,
                            z * (1.0 + 0.5 * qf) * (1.0 + x1 * x1).sqrt() / 2f64.sqrt(),
                        )
                    }
                    Generator::HeavyTail => {
                        let t: f64 = rng.sample(t3);
                        (self.heterogeneity * qf * x1, t / 3f64.sqrt())
                    }
                };
                y[(i, q)] = base + self.effect * qf + het + self.noise * e;
            }
        }
        let table = ScienceTable::new(y)?;
        let cov = if self.k > 0 {
            Some(CovariateMatrix::new(x)?)
        } else {
            None
        };
        Ok((table, cov))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactAudit {
    pub support: usize,
    pub tau: Vec<f64>,
    pub mean_estimate: Vec<f64>,
    pub variance: Vec<Vec<f64>>,
    pub oracle_variance: Vec<Vec<f64>>,
    pub mean_variance_estimate: Vec<Vec<f64>>,
    pub neyman_target: Vec<Vec<f64>>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Moments of the contrast estimator and of the Neyman variance estimator over
/// every complete randomization with the given arm counts.
pub fn exact_audit(table: &ScienceTable, counts: &[usize], f: &ContrastMatrix) -> Result<ExactAudit> {
    let oracle = variance::true_var_oracle(table, counts, f)?;
    let target = variance::neyman_target(table, counts, f)?;
    let all = designs::enumerate_cre(counts)?;
    let h = f.h();
    let mut m1 = DVector::zeros(h);
    let mut m2 = DMatrix::zeros(h, h);
    let mut mv = DMatrix::zeros(h, h);
    for a in &all {
        let obs = observe(table, a)?;
        let t = estimators::contrast_estimate(&obs, f)?;
        m1 += &t;
        m2 += &t * t.transpose();
        mv += variance::neyman_var(&obs, f)?;
    }
    let r = all.len() as f64;
    let mean = m1 / r;
    let var = m2 / r - &mean * mean.transpose();
    let tau = f.matrix().transpose() * table.outcomes().row_mean().transpose();
    Ok(ExactAudit {
        support: all.len(),
        tau: tau.iter().copied().collect(),
        mean_estimate: mean.iter().copied().collect(),
        variance: rows(&var),
        oracle_variance: rows(&oracle),
        mean_variance_estimate: rows(&(mv / r)),
        neyman_target: rows(&target),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorTag {
    /// Difference in means with the Neyman variance.
    Neyman,
    /// Additive regression adjustment with the HC2 variance.
    Fisher,
    /// Interacted regression adjustment with the HC2 variance.
    Lin,
    /// Difference in means with the rerandomization limit-law interval.
    Rem,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub schema_version: u32,
    pub estimator: EstimatorTag,
    pub design: String,
    pub replications: usize,
    pub alpha: f64,
    pub truth: f64,
    pub bias: f64,
    pub bias_se: f64,
    pub mc_variance: f64,
    pub mc_variance_se: f64,
    pub mean_variance_estimate: f64,
    pub coverage: f64,
    pub coverage_se: f64,
    pub mean_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateDraw {
    pub replicate: usize,
    pub estimator: EstimatorTag,
    pub estimate: f64,
    pub variance_estimate: f64,
    pub width: f64,
    pub covered: bool,
    pub draws_used: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimStudy {
    pub results: Vec<SimResult>,
    pub draws: Vec<ReplicateDraw>,
}

impl SimStudy {
    /// Estimates of one estimator in replicate order.
    pub fn estimates(&self, tag: EstimatorTag) -> Vec<f64> {
        self.draws.iter().filter(|d| d.estimator == tag).map(|d| d.estimate).collect()
    }

    pub fn widths(&self, tag: EstimatorTag) -> Vec<f64> {
        self.draws.iter().filter(|d| d.estimator == tag).map(|d| d.width).collect()
    }

    pub fn result(&self, tag: EstimatorTag) -> Option<&SimResult> {
        self.results.iter().find(|r| r.estimator == tag)
    }
}

/// Sample variance and an estimate of its Monte Carlo standard error.
pub fn variance_with_se(v: &[f64]) -> (f64, f64) {
    let r = v.len() as f64;
    let m = v.iter().sum::<f64>() / r;
    let s2 = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (r - 1.0);
    let m4 = v.iter().map(|x| (x - m).powi(4)).sum::<f64>() / r;
    (s2, ((m4 - s2 * s2).max(0.0) / r).sqrt())
}

/// `Var(a) - Var(b)` for paired draws, with the standard error of the
/// difference.
pub fn paired_variance_difference(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::DimensionMismatch("paired samples must match in length".into()));
    }
    let r = a.len() as f64;
    let ma = a.iter().sum::<f64>() / r;
    let mb = b.iter().sum::<f64>() / r;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - ma).powi(2) - (y - mb).powi(2)).collect();
    let md = d.iter().sum::<f64>() / r;
    let sd = (d.iter().map(|v| (v - md).powi(2)).sum::<f64>() / (r - 1.0)).sqrt();
    Ok((md * r / (r - 1.0), sd / r.sqrt() * r / (r - 1.0)))
}

/// Minimum replications for [`repeated_sampling`].
pub const MIN_REPLICATIONS: usize = 100;

fn design_tag(d: &DesignSpec) -> &'static str {
    match d {
        DesignSpec::Cre { .. } => "cre",
        DesignSpec::Rem { .. } => "rem",
        DesignSpec::Sre { .. } => "sre",
        DesignSpec::Mpe { .. } => "mpe",
        DesignSpec::Cluster { .. } => "cluster",
    }
}

/// Repeated-sampling study of two-arm estimators on a fixed science table.
pub fn repeated_sampling(
    table: &ScienceTable,
    x: Option<&CovariateMatrix>,
    design: &DesignSpec,
    estimators: &[EstimatorTag],
    reps: usize,
    alpha: f64,
    seed: RngSeed,
) -> Result<SimStudy> {
    if reps < MIN_REPLICATIONS {
        return Err(Error::InvalidInput(format!(
            "at least {MIN_REPLICATIONS} replications required, got {reps}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha {alpha} outside (0, 1)")));
    }
    if table.q() != 2 {
        return Err(Error::InvalidInput("repeated sampling studies use two arms".into()));
    }
    if !matches!(design, DesignSpec::Cre { .. } | DesignSpec::Rem { .. }) {
        return Err(Error::InvalidInput(format!(
            "design '{}' is not supported by repeated sampling",
            design_tag(design)
        )));
    }
    if design.units() != table.n() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} units, table has {}",
            design.units(),
            table.n()
        )));
    }
    let needs_x = estimators.iter().any(|e| *e != EstimatorTag::Neyman);
    if needs_x && x.is_none() {
        return Err(Error::InvalidInput(
            "covariate-based estimators need covariates".into(),
        ));
    }
    let reference = if estimators.contains(&EstimatorTag::Rem) {
        let x = x.expect("checked above");
        let a = match design {
            DesignSpec::Rem { .. } => design.rem_threshold(x.k())?,
            _ => f64::INFINITY,
        };
        Some(RemReference::new(
            ConstrainedGaussianSpec::new(x.k(), a)?,
            variance::DEFAULT_MC_REPS,
            seed.with_stream(u64::MAX),
        )?)
    } else {
        None
    };
    let f = ContrastMatrix::two_arm();
    let truth = table.arm(1).iter().sum::<f64>() / table.n() as f64
        - table.arm(0).iter().sum::<f64>() / table.n() as f64;

    let one = |r: usize| -> Result<Vec<ReplicateDraw>> {
        let drawn = design.draw(x, seed.with_stream(r as u64))?;
        let obs = observe(table, &drawn.assignment)?;
        estimators
            .iter()
            .map(|&tag| {
                let report = match tag {
                    EstimatorTag::Neyman => {
                        let t = estimators::contrast_estimate(&obs, &f)?;
                        variance::wald(&t, &variance::neyman_var(&obs, &f)?, alpha, WaldMode::Interval, "neyman")?
                    }
                    EstimatorTag::Fisher | EstimatorTag::Lin => {
                        let mode = if tag == EstimatorTag::Fisher {
                            AdjustmentMode::Additive
                        } else {
                            AdjustmentMode::Interacted
                        };
                        let x = x.expect("checked above");
                        let t = estimators::regression_adjusted(&obs, x, mode, &f)?.tau;
                        let v = variance::regression_var(&obs, x, mode, &f, SandwichKind::Hc2)?;
                        variance::wald(&t, &v, alpha, WaldMode::Interval, mode.tag())?
                    }
                    EstimatorTag::Rem => {
                        let mut rep = variance::rem_interval(
                            &obs,
                            x.expect("checked above"),
                            reference.as_ref().expect("built above"),
                            alpha,
                        )?;
                        rep.variance[0][0] /= table.n() as f64;
                        rep
                    }
                };
                Ok(ReplicateDraw {
                    replicate: r,
                    estimator: tag,
                    estimate: report.estimate[0],
                    variance_estimate: report.variance[0][0],
                    width: report.width().unwrap_or(f64::NAN),
                    covered: report.covers(&[truth]),
                    draws_used: drawn.draws_used,
                })
            })
            .collect()
    };
    let per_rep: Vec<Result<Vec<ReplicateDraw>>> = par::map(reps, one);
    let mut draws = Vec::with_capacity(reps * estimators.len());
    for r in per_rep {
        draws.extend(r?);
    }

    let results = estimators
        .iter()
        .map(|&tag| {
            let mine: Vec<&ReplicateDraw> = draws.iter().filter(|d| d.estimator == tag).collect();
            let est: Vec<f64> = mine.iter().map(|d| d.estimate).collect();
            let r = est.len() as f64;
            let (mc_variance, mc_variance_se) = variance_with_se(&est);
            let coverage = mine.iter().filter(|d| d.covered).count() as f64 / r;
            SimResult {
                schema_version: SCHEMA_VERSION,
                estimator: tag,
                design: design_tag(design).to_string(),
                replications: reps,
                alpha,
                truth,
                bias: est.iter().sum::<f64>() / r - truth,
                bias_se: (mc_variance / r).sqrt(),
                mc_variance,
                mc_variance_se,
                mean_variance_estimate: mine.iter().map(|d| d.variance_estimate).sum::<f64>() / r,
                coverage,
                coverage_se: (coverage * (1.0 - coverage) / r).sqrt(),
                mean_width: mine.iter().map(|d| d.width).sum::<f64>() / r,
            }
        })
        .collect();
    Ok(SimStudy { results, draws })
}

/// Squared multiple correlation between the difference in means of the
/// outcomes and of the covariates under complete randomization.
pub fn true_r2(table: &ScienceTable, x: &CovariateMatrix, counts: &[usize]) -> Result<f64> {
    if table.q() != 2 || counts.len() != 2 || x.n() != table.n() {
        return Err(Error::DimensionMismatch("two arms and matching covariates required".into()));
    }
    let (n0, n1, n) = (counts[0] as f64, counts[1] as f64, table.n() as f64);
    let k = x.k();
    let joint = DMatrix::from_fn(table.n(), k + 2, |i, j| match j {
        0 => table.get(i, 0),
        1 => table.get(i, 1),
        _ => x.matrix()[(i, j - 2)],
    });
    let s = linalg::row_covariance(&joint);
    let var_tau = variance::true_var_oracle(table, counts, &ContrastMatrix::two_arm())?[(0, 0)];
    if !(var_tau > 0.0) {
        return Err(Error::Degenerate("difference in means has zero variance".into()));
    }
    let cov = DVector::from_fn(k, |j, _| s[(1, j + 2)] / n1 + s[(0, j + 2)] / n0);
    let sx = s.view((2, 2), (k, k)).into_owned();
    let var_x = &sx * (n / (n1 * n0));
    let inv = linalg::spd_inverse(&var_x, &|j| format!("x{}", j + 1))?;
    Ok(((cov.transpose() * inv * &cov)[(0, 0)] / var_tau).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RemCheck {
    pub schema_version: u32,
    pub threshold: f64,
    pub r_squared: f64,
    pub accepted: usize,
    pub reference_draws: usize,
    /// Two-sample distance to the convolution law.
    pub ks: f64,
    /// Two-sample distance to a standard normal reference.
    pub ks_normal_reference: f64,
    /// `sqrt((n + m) / (n m))`, the scale of two-sample distance noise.
    pub mc_error: f64,
    pub mean_draws_used: f64,
}

/// Compares standardized rerandomized estimates with the limit law.
///
/// Each accepted assignment gives `(tauhat - tau) / sqrt(Var_CRE(tauhat))`,
/// with the oracle variance and `R^2` computed from the science table.
pub fn rem_distribution_check(
    table: &ScienceTable,
    x: &CovariateMatrix,
    counts: [usize; 2],
    a: f64,
    reps: usize,
    mc_ref: usize,
    seed: RngSeed,
) -> Result<RemCheck> {
    let spec = ConstrainedGaussianSpec::new(x.k(), a)?;
    let reference = RemReference::new(spec, mc_ref, seed.with_stream(u64::MAX))?;
    let r2 = true_r2(table, x, &counts)?;
    let sd = variance::true_var_oracle(table, &counts, &ContrastMatrix::two_arm())?[(0, 0)].sqrt();
    let tau = table.arm(1).iter().sum::<f64>() / table.n() as f64
        - table.arm(0).iter().sum::<f64>() / table.n() as f64;
    let criterion = designs::BalanceCriterion::new(x)?;
    let runs: Vec<Result<(f64, u64)>> = par::map(reps, |r| {
        let d = designs::draw_rem_with(
            &criterion,
            counts[1],
            counts[0],
            a,
            designs::DEFAULT_MAX_DRAWS,
            seed.with_stream(r as u64),
        )?;
        let obs = observe(table, &d.assignment)?;
        Ok(((estimators::difference_in_means(&obs)? - tau) / sd, d.draws_used))
    });
    let mut stats = Vec::with_capacity(reps);
    let mut used = 0u64;
    for run in runs {
        let (s, u) = run?;
        stats.push(s);
        used += u;
    }
    let law = reference.draws(r2);
    let normal = reference.draws(0.0);
    let (n, m) = (stats.len() as f64, law.len() as f64);
    Ok(RemCheck {
        schema_version: SCHEMA_VERSION,
        threshold: a,
        r_squared: r2,
        accepted: stats.len(),
        reference_draws: law.len(),
        ks: dist::ks_two_sample(&stats, &law),
        ks_normal_reference: dist::ks_two_sample(&stats, &normal),
        mc_error: ((n + m) / (n * m)).sqrt(),
        mean_draws_used: used as f64 / n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    /// Sample mean of the scores `i mod 3` under sampling of half the units.
    BoundedTwoSample,
    /// Sample mean of the indicator of unit 1 under sampling of half the units.
    Spiked,
}

impl KernelFamily {
    pub fn kernel(&self, n: usize) -> Result<PermKernel> {
        if n < 4 {
            return Err(Error::InvalidInput(format!("family needs N >= 4, got {n}")));
        }
        let a: Vec<f64> = match self {
            KernelFamily::BoundedTwoSample => (0..n).map(|i| (i % 3) as f64).collect(),
            KernelFamily::Spiked => (0..n).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect(),
        };
        perm::build_srs_kernel(&a, n / 2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatePoint {
    pub n: usize,
    pub distance: f64,
    /// Mean Kolmogorov distance of `R` exactly normal draws, `0.8687 / sqrt(R)`.
    pub mc_floor: f64,
    pub bound: f64,
    pub lindeberg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateResult {
    pub schema_version: u32,
    pub family: KernelFamily,
    pub draws: usize,
    pub points: Vec<RatePoint>,
    /// Least-squares slope of log distance on log N.
    pub slope: f64,
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 || x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidInput("slope needs at least two positive pairs".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Kolmogorov distance of the standardized statistic over a grid of `N`.
pub fn rate_experiment(family: KernelFamily, ns: &[usize], draws: usize, seed: RngSeed) -> Result<RateResult> {
    if ns.len() < 3 {
        return Err(Error::InvalidInput("rate experiments need at least three grid points".into()));
    }
    let mut points = Vec::with_capacity(ns.len());
    for (g, &n) in ns.iter().enumerate() {
        let k = family.kernel(n)?;
        let report = perm::clt_condition_report(&k, &[0.1])?;
        let distance = perm::empirical_kolmogorov(&k, draws, RngSeed::new(seed.seed).with_stream((g as u64) << 32))?;
        points.push(RatePoint {
            n,
            distance,
            mc_floor: 0.8687 / (draws as f64).sqrt(),
            bound: perm::bolthausen_bound(&k, true)?,
            lindeberg: report.lindeberg[0],
        });
    }
    let slope = log_log_slope(
        &points.iter().map(|p| p.n as f64).collect::<Vec<_>>(),
        &points.iter().map(|p| p.distance).collect::<Vec<_>>(),
    )?;
    Ok(RateResult {
        schema_version: SCHEMA_VERSION,
        family,
        draws,
        points,
        slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dgp(generator: Generator, n: usize, k: usize) -> DgpSpec {
        DgpSpec {
            n,
            q: 2,
            k,
            generator,
            effect: 1.0,
            heterogeneity: 0.5,
            signal: 1.0,
            noise: 1.0,
            seed: 17,
        }
    }

    #[test]
    fn generation_is_reproducible() {
        for g in [
            Generator::LinearHomoskedastic,
            Generator::LinearHeteroskedastic,
            Generator::HeavyTail,
            Generator::AdditiveEffect,
        ] {
            let a = dgp(g, 30, 2).generate().unwrap();
            let b = dgp(g, 30, 2).generate().unwrap();
            assert_eq!(a, b);
        }
        let (t, x) = dgp(Generator::AdditiveEffect, 10, 0).generate().unwrap();
        assert!(x.is_none());
        for i in 0..10 {
            assert!((t.get(i, 1) - t.get(i, 0) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dgp_json_rejects_unknown_fields() {
        let ok: DgpSpec = serde_json::from_str(r#"{"n":10,"generator":"heavy_tail","seed":1}"#).unwrap();
        assert_eq!(ok.q, 2);
        assert!(serde_json::from_str::<DgpSpec>(r#"{"n":10,"generator":"heavy_tail","seed":1,"x":0}"#).is_err());
    }

    #[test]
    fn exact_audit_additive_and_heterogeneous() {
        let (t, _) = dgp(Generator::AdditiveEffect, 8, 0).generate().unwrap();
        let f = ContrastMatrix::two_arm();
        let a = exact_audit(&t, &[4, 4], &f).unwrap();
        assert!((a.mean_estimate[0] - a.tau[0]).abs() < 1e-12);
        assert!((a.mean_variance_estimate[0][0] - a.variance[0][0]).abs() < 1e-12);

        let (t, _) = dgp(Generator::LinearHeteroskedastic, 8, 1).generate().unwrap();
        let a = exact_audit(&t, &[4, 4], &f).unwrap();
        let eff: Vec<f64> = (0..8).map(|i| t.get(i, 1) - t.get(i, 0)).collect();
        let m = eff.iter().sum::<f64>() / 8.0;
        let s2 = eff.iter().map(|e| (e - m).powi(2)).sum::<f64>() / 7.0;
        assert!((a.mean_variance_estimate[0][0] - a.variance[0][0] - s2 / 8.0).abs() < 1e-12);
        assert!((a.variance[0][0] - a.oracle_variance[0][0]).abs() < 1e-12);
    }

    #[test]
    fn paired_difference_matches_direct() {
        let a = [1.0, 2.0, 4.0, 8.0];
        let b = [0.0, 1.0, 1.0, 2.0];
        let (d, _) = paired_variance_difference(&a, &b).unwrap();
        assert!((d - (variance_with_se(&a).0 - variance_with_se(&b).0)).abs() < 1e-12);
    }

    #[test]
    fn repeated_sampling_is_deterministic_and_validates() {
        let (t, x) = dgp(Generator::LinearHomoskedastic, 60, 2).generate().unwrap();
        let design = DesignSpec::Cre { counts: vec![30, 30] };
        let tags = [EstimatorTag::Neyman, EstimatorTag::Lin];
        let a = repeated_sampling(&t, x.as_ref(), &design, &tags, 120, 0.05, RngSeed::new(3)).unwrap();
        let b = repeated_sampling(&t, x.as_ref(), &design, &tags, 120, 0.05, RngSeed::new(3)).unwrap();
        assert_eq!(a, b);
        assert!(a.results.iter().all(|r| (0.0..=1.0).contains(&r.coverage)));
        assert!(repeated_sampling(&t, None, &design, &tags, 120, 0.05, RngSeed::new(3)).is_err());
        assert!(repeated_sampling(&t, x.as_ref(), &design, &tags, 50, 0.05, RngSeed::new(3)).is_err());
        let tiny = DesignSpec::Cre { counts: vec![59, 1] };
        assert!(matches!(
            repeated_sampling(&t, x.as_ref(), &tiny, &[EstimatorTag::Neyman], 120, 0.05, RngSeed::new(3)),
            Err(Error::ArmTooSmall { .. })
        ));
    }

    #[test]
    fn true_r2_matches_monte_carlo_correlation() {
        let spec = DgpSpec {
            signal: 2.0,
            ..dgp(Generator::LinearHeteroskedastic, 80, 2)
        };
        let (t, x) = spec.generate().unwrap();
        let x = x.unwrap();
        let r2 = true_r2(&t, &x, &[40, 40]).unwrap();
        // Monte Carlo: regress tauhat on tauhat_x across CRE draws.
        let crit = designs::BalanceCriterion::new(&x).unwrap();
        let reps = 20_000;
        let mut ys = Vec::with_capacity(reps);
        let mut xs = Vec::with_capacity(reps);
        for r in 0..reps {
            let a = designs::draw_cre(&[40, 40], RngSeed::new(8).with_stream(r as u64)).unwrap();
            ys.push(estimators::difference_in_means(&observe(&t, &a).unwrap()).unwrap());
            xs.push(crit.tau_x(&a));
        }
        let design = DMatrix::from_fn(reps, 3, |i, j| if j == 0 { 1.0 } else { xs[i][j - 1] });
        let y = DVector::from_vec(ys.clone());
        let ls = linalg::least_squares(&design, &y, "mc").unwrap();
        let (vy, _) = variance_with_se(&ys);
        let mc_r2 = 1.0 - ls.residuals.norm_squared() / (reps as f64 - 1.0) / vy;
        assert!((mc_r2 - r2).abs() < 0.02, "{mc_r2} vs {r2}");
    }

    #[test]
    fn log_log_slope_exact() {
        let x = [1.0, 10.0, 100.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-0.5)).collect();
        assert!((log_log_slope(&x, &y).unwrap() + 0.5).abs() < 1e-12);
        assert!(rate_experiment(KernelFamily::Spiked, &[10, 20], 200, RngSeed::new(0)).is_err());
    }
}
