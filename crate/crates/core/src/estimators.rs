//! Point estimators: contrasts of arm means, regression adjustment (unadjusted,
//! additive and fully interacted), fixed-coefficient adjustment, the debiased
//! interacted estimator, and stratified / matched-pair / cluster estimators.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::science::{Assignment, ContrastMatrix, CovariateMatrix, ObservedData, Structure};

/// Sample mean of the observed outcomes in every arm.
pub fn arm_means(obs: &ObservedData) -> Result<DVector<f64>> {
    let a = &obs.assignment;
    let mut sums = DVector::zeros(a.q());
    for (&y, &arm) in obs.y.iter().zip(a.arms()) {
        sums[arm] += y;
    }
    for (q, &c) in a.counts().iter().enumerate() {
        if c == 0 {
            return Err(Error::ArmTooSmall {
                arm: q + 1,
                count: 0,
                required: 1,
            });
        }
        sums[q] /= c as f64;
    }
    Ok(sums)
}

fn check_contrast(obs: &ObservedData, f: &ContrastMatrix) -> Result<()> {
    if f.q() != obs.assignment.q() {
        return Err(Error::DimensionMismatch(format!(
            "contrast has {} rows for {} arms",
            f.q(),
            obs.assignment.q()
        )));
    }
    Ok(())
}

/// `F' Yhat(.)`, the generalized difference in means.
pub fn contrast_estimate(obs: &ObservedData, f: &ContrastMatrix) -> Result<DVector<f64>> {
    check_contrast(obs, f)?;
    Ok(f.matrix().transpose() * arm_means(obs)?)
}

/// Two-arm difference in means, treated minus control.
pub fn difference_in_means(obs: &ObservedData) -> Result<f64> {
    Ok(contrast_estimate(obs, &ContrastMatrix::two_arm())?[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjustmentMode {
    /// Arm indicators only.
    Unadjusted,
    /// Arm indicators plus centered covariates with a common slope.
    Additive,
    /// Arm indicators fully interacted with centered covariates.
    Interacted,
}

impl AdjustmentMode {
    pub fn tag(&self) -> &'static str {
        match self {
            AdjustmentMode::Unadjusted => "N",
            AdjustmentMode::Additive => "F",
            AdjustmentMode::Interacted => "L",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RegressionFit {
    pub mode: AdjustmentMode,
    /// Intercept of every arm (the adjusted arm means).
    pub gammas: DVector<f64>,
    /// Slopes: empty for unadjusted, one shared vector for additive, one per
    /// arm for interacted.
    pub slopes: Vec<DVector<f64>>,
    pub residuals: DVector<f64>,
    pub leverages: DVector<f64>,
    /// Covariate means used for centering.
    pub covariate_means: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct AdjustedEstimate {
    pub tau: DVector<f64>,
    pub fit: RegressionFit,
}

fn check_covariates(obs: &ObservedData, x: &CovariateMatrix) -> Result<()> {
    if x.n() != obs.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} covariate rows for {} units",
            x.n(),
            obs.n()
        )));
    }
    Ok(())
}

/// Rows of `m` belonging to arm `q`, in unit order.
fn arm_rows(a: &Assignment, q: usize) -> Vec<usize> {
    (0..a.n()).filter(|&i| a.arm(i) == q).collect()
}

/// Design matrix of the regression for `mode`: arm indicators, then the
/// covariate block(s) built from the centered covariates `xc`.
pub fn regression_design(a: &Assignment, xc: &DMatrix<f64>, mode: AdjustmentMode) -> DMatrix<f64> {
    let (n, q, k) = (a.n(), a.q(), xc.ncols());
    let extra = match mode {
        AdjustmentMode::Unadjusted => 0,
        AdjustmentMode::Additive => k,
        AdjustmentMode::Interacted => q * k,
    };
    let mut d = DMatrix::zeros(n, q + extra);
    for i in 0..n {
        let arm = a.arm(i);
        d[(i, arm)] = 1.0;
        match mode {
            AdjustmentMode::Unadjusted => {}
            AdjustmentMode::Additive => {
                for j in 0..k {
                    d[(i, q + j)] = xc[(i, j)];
                }
            }
            AdjustmentMode::Interacted => {
                for j in 0..k {
                    d[(i, q + arm * k + j)] = xc[(i, j)];
                }
            }
        }
    }
    d
}

/// Regression-adjusted estimator `F' gammahat` for one of the three modes.
///
/// Covariates are centered internally; the interacted mode is solved as one
/// least-squares fit per arm, which is the same problem as the fully
/// interacted regression.
pub fn regression_adjusted(
    obs: &ObservedData,
    x: &CovariateMatrix,
    mode: AdjustmentMode,
    f: &ContrastMatrix,
) -> Result<AdjustedEstimate> {
    check_contrast(obs, f)?;
    check_covariates(obs, x)?;
    let a = &obs.assignment;
    let (n, q, k) = (obs.n(), a.q(), x.k());
    let xc = x.centered();
    let xm = xc.matrix();
    let y = DVector::from_column_slice(&obs.y);

    let fit = match mode {
        AdjustmentMode::Unadjusted => {
            let gammas = arm_means(obs)?;
            let residuals = DVector::from_fn(n, |i, _| obs.y[i] - gammas[a.arm(i)]);
            let leverages = DVector::from_fn(n, |i, _| 1.0 / a.counts()[a.arm(i)] as f64);
            RegressionFit {
                mode,
                gammas,
                slopes: Vec::new(),
                residuals,
                leverages,
                covariate_means: x.means().clone(),
            }
        }
        AdjustmentMode::Additive => {
            arm_means(obs)?;
            let design = regression_design(a, xm, mode);
            let ls = linalg::least_squares(&design, &y, "additive regression")?;
            RegressionFit {
                mode,
                gammas: ls.coef.rows(0, q).into_owned(),
                slopes: vec![ls.coef.rows(q, k).into_owned()],
                residuals: ls.residuals,
                leverages: ls.leverages,
                covariate_means: x.means().clone(),
            }
        }
        AdjustmentMode::Interacted => {
            let mut gammas = DVector::zeros(q);
            let mut slopes = Vec::with_capacity(q);
            let mut residuals = DVector::zeros(n);
            let mut leverages = DVector::zeros(n);
            for arm in 0..q {
                let rows = arm_rows(a, arm);
                if rows.len() < k + 2 {
                    return Err(Error::RankDeficient(format!(
                        "arm {} has {} units; the interacted fit needs at least K + 2 = {}",
                        arm + 1,
                        rows.len(),
                        k + 2
                    )));
                }
                let design = DMatrix::from_fn(rows.len(), k + 1, |r, c| {
                    if c == 0 {
                        1.0
                    } else {
                        xm[(rows[r], c - 1)]
                    }
                });
                let ya = DVector::from_iterator(rows.len(), rows.iter().map(|&i| obs.y[i]));
                let ls = linalg::least_squares(&design, &ya, &format!("arm {} regression", arm + 1))?;
                gammas[arm] = ls.coef[0];
                slopes.push(ls.coef.rows(1, k).into_owned());
                for (r, &i) in rows.iter().enumerate() {
                    residuals[i] = ls.residuals[r];
                    leverages[i] = ls.leverages[r];
                }
            }
            RegressionFit {
                mode,
                gammas,
                slopes,
                residuals,
                leverages,
                covariate_means: x.means().clone(),
            }
        }
    };
    Ok(AdjustedEstimate {
        tau: f.matrix().transpose() * &fit.gammas,
        fit,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedAdjustment {
    pub tau: f64,
    pub gamma1: f64,
    pub gamma0: f64,
}

fn check_two_arm(obs: &ObservedData) -> Result<()> {
    if obs.assignment.q() != 2 {
        return Err(Error::InvalidInput(format!(
            "two arms required, found {}",
            obs.assignment.q()
        )));
    }
    Ok(())
}

/// Linearly adjusted estimator with fixed coefficients for treated (`beta1`)
/// and control (`beta0`) outcomes.
pub fn adjusted_with_coefficients(
    obs: &ObservedData,
    x: &CovariateMatrix,
    beta1: &DVector<f64>,
    beta0: &DVector<f64>,
) -> Result<FixedAdjustment> {
    check_two_arm(obs)?;
    check_covariates(obs, x)?;
    if beta1.len() != x.k() || beta0.len() != x.k() {
        return Err(Error::DimensionMismatch(format!(
            "coefficients of length {} and {} for {} covariates",
            beta1.len(),
            beta0.len(),
            x.k()
        )));
    }
    let adjusted = adjusted_outcomes(obs, x, beta1, beta0);
    let (mut s0, mut s1) = (0.0, 0.0);
    for (i, v) in adjusted.iter().enumerate() {
        if obs.assignment.is_treated(i) {
            s1 += v;
        } else {
            s0 += v;
        }
    }
    let c = obs.assignment.counts();
    if c[0] == 0 || c[1] == 0 {
        return Err(Error::ArmTooSmall {
            arm: if c[0] == 0 { 1 } else { 2 },
            count: 0,
            required: 1,
        });
    }
    let gamma1 = s1 / c[1] as f64;
    let gamma0 = s0 / c[0] as f64;
    Ok(FixedAdjustment {
        tau: gamma1 - gamma0,
        gamma1,
        gamma0,
    })
}

/// `y_i - (x_i - xbar)' beta_{z_i}` for every unit.
pub(crate) fn adjusted_outcomes(
    obs: &ObservedData,
    x: &CovariateMatrix,
    beta1: &DVector<f64>,
    beta0: &DVector<f64>,
) -> Vec<f64> {
    let xc = x.centered();
    (0..obs.n())
        .map(|i| {
            let beta = if obs.assignment.is_treated(i) { beta1 } else { beta0 };
            obs.y[i] - xc.matrix().row(i).dot(&beta.transpose())
        })
        .collect()
}

/// Arm-wise least-squares slopes `(beta1, beta0)` of outcomes on centered
/// covariates.
pub fn armwise_slopes(obs: &ObservedData, x: &CovariateMatrix) -> Result<(DVector<f64>, DVector<f64>)> {
    check_two_arm(obs)?;
    let fit = regression_adjusted(obs, x, AdjustmentMode::Interacted, &ContrastMatrix::two_arm())?;
    Ok((fit.fit.slopes[1].clone(), fit.fit.slopes[0].clone()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DebiasedEstimate {
    pub tau: f64,
    pub tau_interacted: f64,
    pub delta1: f64,
    pub delta0: f64,
    /// Largest covariate leverage.
    pub kappa: f64,
}

/// Debiased interacted estimator for growing covariate dimension.
///
/// Leverages `H_ii` come from the hat matrix of the centered covariate matrix;
/// residuals come from the interacted fit. No companion variance estimator is
/// provided.
pub fn debiased_lin(obs: &ObservedData, x: &CovariateMatrix) -> Result<DebiasedEstimate> {
    check_two_arm(obs)?;
    let est = regression_adjusted(obs, x, AdjustmentMode::Interacted, &ContrastMatrix::two_arm())?;
    let xc = x.centered();
    let hat = linalg::least_squares(xc.matrix(), &DVector::zeros(obs.n()), "covariate hat matrix")?;
    let h = hat.leverages;
    let counts = obs.assignment.counts();
    let (n0, n1) = (counts[0] as f64, counts[1] as f64);
    let (mut d0, mut d1) = (0.0, 0.0);
    for i in 0..obs.n() {
        let term = est.fit.residuals[i] * h[i];
        if obs.assignment.is_treated(i) {
            d1 += term;
        } else {
            d0 += term;
        }
    }
    let (delta0, delta1) = (d0 / n0, d1 / n1);
    let tau_interacted = est.tau[0];
    Ok(DebiasedEstimate {
        tau: tau_interacted - (n1 / n0 * delta0 - n0 / n1 * delta1),
        tau_interacted,
        delta1,
        delta0,
        kappa: h.max(),
    })
}

/// Units grouped by label, in increasing label order.
pub(crate) fn groups(labels: &[usize]) -> BTreeMap<usize, Vec<usize>> {
    let mut g: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        g.entry(l).or_default().push(i);
    }
    g
}

fn strata_labels(obs: &ObservedData) -> Result<&[usize]> {
    match obs.assignment.structure() {
        Structure::Strata(l) | Structure::Pairs(l) => Ok(l),
        s => Err(Error::MalformedStructure(format!(
            "stratified analysis needs stratum or pair labels, found {}",
            s.kind()
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumEstimate {
    pub label: usize,
    pub size: usize,
    pub treated: usize,
    pub weight: f64,
    pub tau: f64,
    /// Sample variances of the treated and control outcomes (when defined).
    pub var1: Option<f64>,
    pub var0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratifiedEstimate {
    pub tau: f64,
    pub strata: Vec<StratumEstimate>,
}

fn sample_var(v: &[f64]) -> Option<f64> {
    if v.len() < 2 {
        return None;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    Some(v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64)
}

/// Weighted average of within-stratum differences in means, weights
/// `N_[k] / N`.
pub fn sre_estimate(obs: &ObservedData) -> Result<StratifiedEstimate> {
    check_two_arm(obs)?;
    let labels = strata_labels(obs)?;
    let n = obs.n() as f64;
    let mut strata = Vec::new();
    for (label, units) in groups(labels) {
        let (mut t, mut c) = (Vec::new(), Vec::new());
        for &i in &units {
            if obs.assignment.is_treated(i) {
                t.push(obs.y[i]);
            } else {
                c.push(obs.y[i]);
            }
        }
        if t.is_empty() || c.is_empty() {
            return Err(Error::MalformedStructure(format!(
                "stratum {label} has {} treated and {} control units",
                t.len(),
                c.len()
            )));
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        strata.push(StratumEstimate {
            label,
            size: units.len(),
            treated: t.len(),
            weight: units.len() as f64 / n,
            tau: mean(&t) - mean(&c),
            var1: sample_var(&t),
            var0: sample_var(&c),
        });
    }
    let tau = strata.iter().map(|s| s.weight * s.tau).sum();
    Ok(StratifiedEstimate { tau, strata })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairEstimate {
    pub tau: f64,
    /// Treated minus control outcome in each pair, by increasing pair label.
    pub pair_effects: Vec<f64>,
}

/// Average of within-pair treated-minus-control differences.
pub fn mpe_estimate(obs: &ObservedData) -> Result<PairEstimate> {
    check_two_arm(obs)?;
    let labels = strata_labels(obs)?;
    let mut pair_effects = Vec::new();
    for (label, units) in groups(labels) {
        let treated: Vec<_> = units.iter().filter(|&&i| obs.assignment.is_treated(i)).collect();
        if units.len() != 2 || treated.len() != 1 {
            return Err(Error::MalformedStructure(format!(
                "pair {label} has {} units with {} treated; need 2 with exactly 1 treated",
                units.len(),
                treated.len()
            )));
        }
        let (t, c) = if obs.assignment.is_treated(units[0]) {
            (units[0], units[1])
        } else {
            (units[1], units[0])
        };
        pair_effects.push(obs.y[t] - obs.y[c]);
    }
    let tau = pair_effects.iter().sum::<f64>() / pair_effects.len() as f64;
    Ok(PairEstimate { tau, pair_effects })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClusterMethod {
    /// Difference of unit-level means between arms.
    UnitAverage,
    /// Scaled difference of mean cluster totals; exactly unbiased.
    #[default]
    ClusterTotal,
}

/// Estimator of the unit-level average effect under cluster randomization.
pub fn cluster_estimate(obs: &ObservedData, method: ClusterMethod) -> Result<f64> {
    check_two_arm(obs)?;
    let labels = match obs.assignment.structure() {
        Structure::Clusters(l) => l,
        s => {
            return Err(Error::MalformedStructure(format!(
                "cluster analysis needs cluster labels, found {}",
                s.kind()
            )))
        }
    };
    let (mut tot1, mut tot0) = (Vec::new(), Vec::new());
    for (label, units) in groups(labels) {
        let arm = obs.assignment.arm(units[0]);
        if units.iter().any(|&i| obs.assignment.arm(i) != arm) {
            return Err(Error::MalformedStructure(format!(
                "cluster {label} mixes treated and control units"
            )));
        }
        let total: f64 = units.iter().map(|&i| obs.y[i]).sum();
        if arm == 1 {
            tot1.push((total, units.len()));
        } else {
            tot0.push((total, units.len()));
        }
    }
    if tot1.is_empty() || tot0.is_empty() {
        return Err(Error::MalformedStructure(
            "both arms need at least one cluster".into(),
        ));
    }
    Ok(match method {
        ClusterMethod::UnitAverage => {
            let avg = |v: &[(f64, usize)]| {
                v.iter().map(|c| c.0).sum::<f64>() / v.iter().map(|c| c.1).sum::<usize>() as f64
            };
            avg(&tot1) - avg(&tot0)
        }
        ClusterMethod::ClusterTotal => {
            let m = (tot1.len() + tot0.len()) as f64;
            let mean = |v: &[(f64, usize)]| v.iter().map(|c| c.0).sum::<f64>() / v.len() as f64;
            m / obs.n() as f64 * (mean(&tot1) - mean(&tot0))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs;
    use crate::science::{observe, ScienceTable};

    fn obs2(y: &[f64], z: &[usize]) -> ObservedData {
        ObservedData::new(y.to_vec(), Assignment::new(z.to_vec(), 2).unwrap(), None).unwrap()
    }

    #[test]
    fn constant_outcomes_give_zero() {
        let a = Assignment::new(vec![0, 1, 2, 0, 1, 2], 3).unwrap();
        let obs = ObservedData::new(vec![4.0; 6], a, None).unwrap();
        let f = ContrastMatrix::versus_first(3).unwrap();
        assert!(contrast_estimate(&obs, &f).unwrap().amax() < 1e-15);
    }

    #[test]
    fn hand_difference_in_means() {
        assert_eq!(difference_in_means(&obs2(&[0.0, 3.0], &[0, 1])).unwrap(), 3.0);
    }

    #[test]
    fn empty_arm_is_error() {
        let obs = obs2(&[1.0, 2.0], &[1, 1]);
        assert!(matches!(difference_in_means(&obs), Err(Error::ArmTooSmall { arm: 1, .. })));
    }

    #[test]
    fn difference_in_means_is_ols_slope() {
        let y = [1.0, 4.0, 2.5, 7.0, 3.0, 0.5];
        let z = [0, 1, 0, 1, 1, 0];
        let design = DMatrix::from_fn(6, 2, |i, j| if j == 0 { 1.0 } else { z[i] as f64 });
        let ls = linalg::least_squares(&design, &DVector::from_column_slice(&y), "ols").unwrap();
        assert!((ls.coef[1] - difference_in_means(&obs2(&y, &z)).unwrap()).abs() < 1e-12);
    }

    fn toy() -> (ObservedData, CovariateMatrix) {
        let x = CovariateMatrix::from_rows(
            &[0.3, -1.2, 2.0, 0.7, -0.4, 1.5, -2.1, 0.9, 0.1, -0.8]
                .iter()
                .map(|&v| vec![v, v * v])
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let y = vec![1.0, -0.5, 4.2, 2.0, 0.3, 3.1, -1.7, 2.4, 0.9, -0.2];
        let z = vec![1, 0, 1, 0, 1, 0, 1, 0, 1, 0];
        let obs = ObservedData::new(y, Assignment::new(z, 2).unwrap(), None).unwrap();
        (obs, x)
    }

    #[test]
    fn unadjusted_mode_matches_contrast() {
        let (obs, x) = toy();
        let f = ContrastMatrix::two_arm();
        let est = regression_adjusted(&obs, &x, AdjustmentMode::Unadjusted, &f).unwrap();
        assert_eq!(est.tau, contrast_estimate(&obs, &f).unwrap());
    }

    #[test]
    fn interacted_residuals_orthogonal() {
        let (obs, x) = toy();
        let est =
            regression_adjusted(&obs, &x, AdjustmentMode::Interacted, &ContrastMatrix::two_arm())
                .unwrap();
        let xc = x.centered();
        for arm in 0..2 {
            let rows = arm_rows(&obs.assignment, arm);
            let rsum: f64 = rows.iter().map(|&i| est.fit.residuals[i]).sum();
            assert!(rsum.abs() < 1e-10);
            for j in 0..2 {
                let ip: f64 = rows.iter().map(|&i| est.fit.residuals[i] * xc.matrix()[(i, j)]).sum();
                assert!(ip.abs() < 1e-10);
            }
        }
        assert!(est.fit.leverages.iter().all(|&h| (0.0..=1.0 + 1e-12).contains(&h)));
    }

    #[test]
    fn interacted_recovers_exactly_linear_arms() {
        let xs: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).sin() * 3.0).collect();
        let y0: Vec<f64> = xs.iter().map(|x| 1.0 + 2.0 * x).collect();
        let y1: Vec<f64> = xs.iter().map(|x| 4.0 - 0.5 * x).collect();
        let table = ScienceTable::two_arm(&y0, &y1).unwrap();
        let tau = y1.iter().sum::<f64>() / 12.0 - y0.iter().sum::<f64>() / 12.0;
        let x = CovariateMatrix::from_rows(&xs.iter().map(|&v| vec![v]).collect::<Vec<_>>()).unwrap();
        for s in 0..5 {
            let a = designs::draw_cre(&[6, 6], designs::RngSeed::new(s)).unwrap();
            let obs = observe(&table, &a).unwrap();
            let est = regression_adjusted(&obs, &x, AdjustmentMode::Interacted, &ContrastMatrix::two_arm())
                .unwrap();
            assert!((est.tau[0] - tau).abs() < 1e-10);
        }
    }

    #[test]
    fn interacted_requires_enough_units() {
        let (obs, x) = toy();
        let small = ObservedData::new(
            obs.y[..6].to_vec(),
            Assignment::new(vec![1, 0, 1, 0, 0, 0], 2).unwrap(),
            None,
        )
        .unwrap();
        let xs = CovariateMatrix::new(x.matrix().rows(0, 6).into_owned()).unwrap();
        let err = regression_adjusted(&small, &xs, AdjustmentMode::Interacted, &ContrastMatrix::two_arm());
        assert!(matches!(err, Err(Error::RankDeficient(_))));
    }

    #[test]
    fn additive_rejects_collinear_covariates() {
        let (obs, x) = toy();
        let dup = CovariateMatrix::new(DMatrix::from_fn(10, 2, |i, _| x.matrix()[(i, 0)])).unwrap();
        let err = regression_adjusted(&obs, &dup, AdjustmentMode::Additive, &ContrastMatrix::two_arm());
        assert!(matches!(err, Err(Error::RankDeficient(_))));
    }

    #[test]
    fn fixed_coefficient_identities() {
        let (obs, x) = toy();
        let zero = DVector::zeros(2);
        let d = adjusted_with_coefficients(&obs, &x, &zero, &zero).unwrap();
        assert!((d.tau - difference_in_means(&obs).unwrap()).abs() < 1e-14);

        // tau(beta, beta) = tau - beta' tau_x
        let beta = DVector::from_vec(vec![0.7, -0.3]);
        let tx = designs::BalanceCriterion::new(&x).unwrap().tau_x(&obs.assignment);
        let lhs = adjusted_with_coefficients(&obs, &x, &beta, &beta).unwrap().tau;
        let rhs = difference_in_means(&obs).unwrap() - beta.dot(&tx);
        assert!((lhs - rhs).abs() < 1e-12);

        // general pair: tau - delta' tau_x, delta = N0/N beta1 + N1/N beta0
        let b1 = DVector::from_vec(vec![1.5, 0.2]);
        let b0 = DVector::from_vec(vec![-0.4, 0.9]);
        let delta = &b1 * 0.5 + &b0 * 0.5;
        let lhs = adjusted_with_coefficients(&obs, &x, &b1, &b0).unwrap().tau;
        assert!((lhs - (difference_in_means(&obs).unwrap() - delta.dot(&tx))).abs() < 1e-12);
    }

    #[test]
    fn fixed_coefficient_hand_case() {
        // N = 4, K = 1: x = (1, 2, 3, 6), xbar = 3; y = (2, 5, 4, 9); z = (1, 1, 0, 0)
        // beta1 = 1, beta0 = 0.5
        // treated adjusted: 2 - (1-3)*1 = 4, 5 - (2-3)*1 = 6 -> gamma1 = 5
        // control adjusted: 4 - 0 = 4, 9 - (3)*0.5 = 7.5 -> gamma0 = 5.75
        let x = CovariateMatrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0], vec![6.0]]).unwrap();
        let obs = obs2(&[2.0, 5.0, 4.0, 9.0], &[1, 1, 0, 0]);
        let r = adjusted_with_coefficients(&obs, &x, &DVector::from_vec(vec![1.0]), &DVector::from_vec(vec![0.5]))
            .unwrap();
        assert_eq!(r.gamma1, 5.0);
        assert_eq!(r.gamma0, 5.75);
        assert_eq!(r.tau, -0.75);
    }

    #[test]
    fn debiased_equal_leverage_case() {
        // Covariate +-1 pattern: every row of the centered covariate matrix has
        // the same norm, so H_ii is constant and the correction vanishes.
        let xs = [1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        let x = CovariateMatrix::from_rows(&xs.iter().map(|&v| vec![v]).collect::<Vec<_>>()).unwrap();
        let obs = obs2(&[3.0, 1.0, 2.0, 0.5, 4.0, 2.0, 1.0, -1.0], &[1, 1, 1, 1, 0, 0, 0, 0]);
        let d = debiased_lin(&obs, &x).unwrap();
        assert!((d.tau - d.tau_interacted).abs() < 1e-12);
        assert!((d.kappa - 1.0 / 8.0).abs() < 1e-12);
    }

    #[test]
    fn debiased_hand_formula() {
        let (obs, x) = toy();
        let d = debiased_lin(&obs, &x).unwrap();
        // Independent evaluation: H = Xc (Xc'Xc)^{-1} Xc' by explicit inverse.
        let xc = x.centered().matrix().clone();
        let h = &xc * (xc.transpose() * &xc).try_inverse().unwrap() * xc.transpose();
        let lin = regression_adjusted(&obs, &x, AdjustmentMode::Interacted, &ContrastMatrix::two_arm()).unwrap();
        let (mut d1, mut d0) = (0.0, 0.0);
        for i in 0..10 {
            if obs.assignment.is_treated(i) {
                d1 += lin.fit.residuals[i] * h[(i, i)] / 5.0;
            } else {
                d0 += lin.fit.residuals[i] * h[(i, i)] / 5.0;
            }
        }
        let want = lin.tau[0] - (d0 - d1);
        assert!((d.tau - want).abs() < 1e-12);
        let kappa = (0..10).map(|i| h[(i, i)]).fold(f64::MIN, f64::max);
        assert!((d.kappa - kappa).abs() < 1e-12);
    }

    fn with(obs: ObservedData, s: Structure) -> ObservedData {
        let a = obs.assignment.clone().with_structure(s).unwrap();
        ObservedData::new(obs.y, a, None).unwrap()
    }

    #[test]
    fn sre_weighted_average() {
        // stratum 0: units 0..4, tau = (5+3)/2 - (1+1)/2 = 3
        // stratum 1: units 4..6, tau = 10 - 4 = 6
        let obs = with(
            obs2(&[5.0, 3.0, 1.0, 1.0, 10.0, 4.0], &[1, 1, 0, 0, 1, 0]),
            Structure::Strata(vec![0, 0, 0, 0, 1, 1]),
        );
        let s = sre_estimate(&obs).unwrap();
        assert!((s.tau - (4.0 / 6.0 * 3.0 + 2.0 / 6.0 * 6.0)).abs() < 1e-14);
        assert!((s.strata.iter().map(|k| k.weight).sum::<f64>() - 1.0).abs() < 1e-15);

        let one = with(obs2(&[5.0, 3.0, 1.0, 1.0], &[1, 1, 0, 0]), Structure::Strata(vec![7; 4]));
        assert_eq!(sre_estimate(&one).unwrap().tau, difference_in_means(&one).unwrap());

        let bad = with(obs2(&[1.0, 2.0, 3.0, 4.0], &[1, 1, 0, 0]), Structure::Strata(vec![0, 0, 1, 1]));
        assert!(matches!(sre_estimate(&bad), Err(Error::MalformedStructure(_))));
    }

    #[test]
    fn mpe_mean_of_pair_differences() {
        let y = [3.0, 1.0, 0.0, 2.0, 5.0, 5.5];
        let z = [1, 0, 0, 1, 1, 0];
        let pairs = vec![0, 0, 1, 1, 2, 2];
        let obs = with(obs2(&y, &z), Structure::Pairs(pairs.clone()));
        let m = mpe_estimate(&obs).unwrap();
        assert_eq!(m.pair_effects, vec![2.0, 2.0, -0.5]);
        assert!((m.tau - 3.5 / 3.0).abs() < 1e-15);
        let as_sre = with(obs2(&y, &z), Structure::Strata(pairs));
        assert!((sre_estimate(&as_sre).unwrap().tau - m.tau).abs() < 1e-15);

        let same = with(obs2(&[2.0, 2.0, 7.0, 7.0], &[1, 0, 0, 1]), Structure::Pairs(vec![0, 0, 1, 1]));
        assert_eq!(mpe_estimate(&same).unwrap().tau, 0.0);

        let bad = with(obs2(&[1.0, 2.0, 3.0, 4.0], &[1, 1, 0, 0]), Structure::Pairs(vec![0, 0, 1, 1]));
        assert!(matches!(mpe_estimate(&bad), Err(Error::MalformedStructure(_))));
    }

    #[test]
    fn cluster_methods() {
        let sizes = [2, 2, 2, 2];
        let a = designs::draw_cluster(&sizes, 2, designs::RngSeed::new(3)).unwrap();
        let y = vec![1.0, 3.0, 2.0, 2.0, 7.0, 1.0, 0.0, 4.0];
        let obs = ObservedData::new(y, a, None).unwrap();
        let u = cluster_estimate(&obs, ClusterMethod::UnitAverage).unwrap();
        let t = cluster_estimate(&obs, ClusterMethod::ClusterTotal).unwrap();
        assert!((u - t).abs() < 1e-14);

        let two = designs::draw_cluster(&[3, 1], 1, designs::RngSeed::new(1)).unwrap();
        let obs = ObservedData::new(vec![1.0, 2.0, 3.0, 10.0], two, None).unwrap();
        let u = cluster_estimate(&obs, ClusterMethod::UnitAverage).unwrap();
        let direct = if obs.assignment.is_treated(3) { 10.0 - 2.0 } else { 2.0 - 10.0 };
        assert!((u - direct).abs() < 1e-14);
    }
}
