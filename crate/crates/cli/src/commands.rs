use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

use randinf::designs::{DesignSpec, RngSeed};
use randinf::estimators::{self, AdjustmentMode};
use randinf::frt;
use randinf::perm::{self, MultiKernel, PermKernel};
use randinf::science::{ContrastMatrix, CovariateMatrix, ObservedData, Structure};
use randinf::simlab::{self, SimResult};
use randinf::variance::{self, EstimateReport, SandwichKind, WaldMode};

use crate::config::{AnalysisSpec, Method, RunConfig, SimulateSpec, VarianceChoice};
use crate::data::{read_dataset, Dataset};
use crate::output::{num, opt, CommandOutput, Table};
use crate::{invalid, CliResult};

fn load_data(cfg: &RunConfig) -> CliResult<Option<Dataset>> {
    cfg.data.as_deref().map(read_dataset).transpose()
}

fn require_data(cfg: &RunConfig) -> CliResult<Dataset> {
    load_data(cfg)?.ok_or_else(|| invalid("a data file is required (--data or \"data\" in the config)"))
}

fn structure_column(s: &Structure) -> Option<(&'static str, &[usize])> {
    match s {
        Structure::None => None,
        Structure::Strata(l) => Some(("stratum", l)),
        Structure::Pairs(l) => Some(("pair", l)),
        Structure::Clusters(l) => Some(("cluster", l)),
    }
}

/// Draws one assignment. With a data file, its columns are carried through so
/// that the output can be analyzed directly once outcomes are present.
pub fn design(cfg: &RunConfig) -> CliResult<CommandOutput> {
    let spec = cfg.design.as_ref().ok_or_else(|| invalid("config has no 'design' section"))?;
    let data = load_data(cfg)?;
    let x = match &data {
        Some(d) => d.covariates()?,
        None => None,
    };
    if let Some(d) = &data {
        if d.n() != spec.units() {
            return Err(invalid(format!("design has {} units, data file has {} rows", spec.units(), d.n())));
        }
    }
    if matches!(spec, DesignSpec::Rem { .. }) && x.is_none() {
        return Err(invalid("rerandomization needs covariate columns x1..xK in the data file"));
    }
    let drawn = spec.draw(x.as_ref(), RngSeed::new(cfg.seed()))?;
    let a = &drawn.assignment;
    let structure = structure_column(a.structure());

    let replaced = |h: &str| matches!(h, "arm" | "stratum" | "pair" | "cluster");
    let (mut headers, keep): (Vec<String>, Vec<usize>) = match &data {
        Some(d) => {
            let keep: Vec<usize> = (0..d.headers.len()).filter(|&c| !replaced(&d.headers[c])).collect();
            (keep.iter().map(|&c| d.headers[c].clone()).collect(), keep)
        }
        None => (vec!["unit".to_string()], Vec::new()),
    };
    headers.push("arm".into());
    if let Some((name, _)) = structure {
        headers.push(name.into());
    }
    let mut table = Table {
        headers,
        rows: Vec::with_capacity(a.n()),
    };
    for i in 0..a.n() {
        let mut row: Vec<String> = match &data {
            Some(d) => keep.iter().map(|&c| d.records[i][c].clone()).collect(),
            None => vec![(i + 1).to_string()],
        };
        row.push((a.arm(i) + 1).to_string());
        if let Some((_, labels)) = structure {
            row.push((labels[i] + 1).to_string());
        }
        table.rows.push(row);
    }

    let mut notes = Vec::new();
    if matches!(spec, DesignSpec::Rem { .. }) {
        notes.push(format!("draws_used: {}", drawn.draws_used));
    }
    let result = json!({
        "design": spec,
        "units": a.n(),
        "draws_used": drawn.draws_used,
        "distance": drawn.distance,
        "arms": a.arms().iter().map(|v| v + 1).collect::<Vec<_>>(),
        "structure": structure.map(|(name, l)| json!({
            "kind": name,
            "labels": l.iter().map(|v| v + 1).collect::<Vec<_>>(),
        })),
    });
    Ok(CommandOutput { result, table, notes })
}

fn contrast(spec: Option<&Vec<Vec<f64>>>, q: usize) -> CliResult<ContrastMatrix> {
    match spec {
        Some(rows) => {
            if rows.len() != q {
                return Err(invalid(format!("contrast has {} rows for {q} arms", rows.len())));
            }
            let h = rows.first().map_or(0, |r| r.len());
            if h == 0 || rows.iter().any(|r| r.len() != h) {
                return Err(invalid("contrast rows must be non-empty and of equal length"));
            }
            Ok(ContrastMatrix::new(DMatrix::from_fn(q, h, |i, j| rows[i][j]))?)
        }
        None if q == 2 => Ok(ContrastMatrix::two_arm()),
        None => Ok(ContrastMatrix::versus_first(q)?),
    }
}

fn need_covariates<'a>(obs: &'a ObservedData, method: &str) -> CliResult<&'a CovariateMatrix> {
    obs.x
        .as_ref()
        .ok_or_else(|| invalid(format!("method '{method}' needs covariate columns x1..xK")))
}

fn scalar(v: f64) -> (DVector<f64>, DMatrix<f64>) {
    (DVector::from_element(1, v), DMatrix::from_element(1, 1, v))
}

fn formulas(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

/// Outcome of one analysis, before serialization.
struct Analysis {
    estimate: Vec<f64>,
    report: Option<EstimateReport>,
    formulas: BTreeMap<String, String>,
    details: Value,
}

fn analysis(obs: &ObservedData, spec: &AnalysisSpec, alpha: f64, seed: u64) -> CliResult<Analysis> {
    let q = obs.assignment.q();
    let two_arm = |name: &str| -> CliResult<()> {
        if q == 2 {
            Ok(())
        } else {
            Err(invalid(format!("method '{name}' needs exactly two arms, found {q}")))
        }
    };
    let wald = |t: &DVector<f64>, v: &DMatrix<f64>, name: &str| -> CliResult<EstimateReport> {
        let mode = spec.mode.unwrap_or(if t.len() == 1 { WaldMode::Interval } else { WaldMode::Region });
        Ok(variance::wald(t, v, alpha, mode, name)?)
    };
    let sandwich = |name: &str| -> CliResult<SandwichKind> {
        match spec.variance.unwrap_or(VarianceChoice::Hc2) {
            VarianceChoice::Ehw => Ok(SandwichKind::Ehw),
            VarianceChoice::Hc2 => Ok(SandwichKind::Hc2),
            VarianceChoice::Ols => Err(invalid(format!("method '{name}' supports variance 'ehw' or 'hc2'"))),
        }
    };
    let full = |report: EstimateReport, f: &[(&str, &str)], details: Value| Analysis {
        estimate: report.estimate.clone(),
        report: Some(report),
        formulas: formulas(f),
        details,
    };

    Ok(match spec.method {
        Method::Neyman => {
            let f = contrast(spec.contrast.as_ref(), q)?;
            let t = estimators::contrast_estimate(obs, &f)?;
            let v = variance::neyman_var(obs, &f)?;
            full(
                wald(&t, &v, "neyman")?,
                &[
                    ("estimate", "F' (Ybar_obs(1), ..., Ybar_obs(Q))'"),
                    ("variance", "F' diag(S_obs^2(q) / N_q) F"),
                    ("interval", "estimate +- z_{1-alpha/2} sqrt(variance)"),
                ],
                Value::Null,
            )
        }
        Method::Ols => {
            two_arm("ols")?;
            let t = estimators::difference_in_means(obs)?;
            let vs = variance::ols_hc_variances(obs)?;
            let (v, f) = match spec.variance.unwrap_or(VarianceChoice::Hc2) {
                VarianceChoice::Ols => (vs.ols, "sigmahat^2 (D'D)^{-1}, D = (1, Z)"),
                VarianceChoice::Ehw => (vs.ehw, "(D'D)^{-1} D' diag(e_i^2) D (D'D)^{-1}"),
                VarianceChoice::Hc2 => (vs.hc2, "(D'D)^{-1} D' diag(e_i^2 / (1 - h_ii)) D (D'D)^{-1}"),
            };
            let (tv, vm) = (DVector::from_element(1, t), scalar(v).1);
            full(
                wald(&tv, &vm, "ols")?,
                &[("estimate", "coefficient of Z in the OLS fit of Y on (1, Z)"), ("variance", f)],
                json!({"ols": vs.ols, "ehw": vs.ehw, "hc2": vs.hc2}),
            )
        }
        Method::Fisher | Method::Lin => {
            let (mode, name) = if spec.method == Method::Fisher {
                (AdjustmentMode::Additive, "fisher")
            } else {
                (AdjustmentMode::Interacted, "lin")
            };
            let x = need_covariates(obs, name)?;
            let f = contrast(spec.contrast.as_ref(), q)?;
            let kind = sandwich(name)?;
            let est = estimators::regression_adjusted(obs, x, mode, &f)?;
            let v = variance::regression_var(obs, x, mode, &f, kind)?;
            let est_text = if mode == AdjustmentMode::Additive {
                "F' gamma from the OLS fit of Y on (arm indicators, X - Xbar)"
            } else {
                "F' gamma from the OLS fit of Y on (arm indicators, arm indicators x (X - Xbar))"
            };
            let var_text = match kind {
                SandwichKind::Ehw => "F' [(D'D)^{-1} D' diag(e_i^2) D (D'D)^{-1}]_arms F",
                SandwichKind::Hc2 => "F' [(D'D)^{-1} D' diag(e_i^2 / (1 - h_ii)) D (D'D)^{-1}]_arms F",
            };
            let slopes: Vec<Vec<f64>> = est.fit.slopes.iter().map(|s| s.iter().copied().collect()).collect();
            full(
                wald(&est.tau, &v, name)?,
                &[("estimate", est_text), ("variance", var_text)],
                json!({"slopes": slopes}),
            )
        }
        Method::LinDebiased => {
            two_arm("lin_debiased")?;
            let x = need_covariates(obs, "lin_debiased")?;
            let d = estimators::debiased_lin(obs, x)?;
            Analysis {
                estimate: vec![d.tau],
                report: None,
                formulas: formulas(&[(
                    "estimate",
                    "tauhat_L - (N1/N0 delta0 - N0/N1 delta1), delta_z = N_z^{-1} sum_{Z_i = z} H_ii e_i",
                )]),
                details: json!({
                    "tau_interacted": d.tau_interacted,
                    "delta1": d.delta1,
                    "delta0": d.delta0,
                    "max_leverage": d.kappa,
                    "note": "no variance estimator is provided for this estimator",
                }),
            }
        }
        Method::Rem => {
            two_arm("rem")?;
            let x = need_covariates(obs, "rem")?;
            let design = DesignSpec::Rem {
                treated: obs.assignment.counts()[1],
                control: obs.assignment.counts()[0],
                threshold: spec.threshold,
                acceptance: spec.acceptance,
                max_draws: None,
            };
            let a = design.rem_threshold(x.k())?;
            let draws = spec.reference_draws.unwrap_or(variance::DEFAULT_MC_REPS);
            let report = variance::rem_inference(obs, x, a, alpha, draws, RngSeed::new(seed))?;
            full(
                report,
                &[
                    ("estimate", "Ybar_obs(1) - Ybar_obs(0)"),
                    ("variance", "N (S_obs^2(1)/N1 + S_obs^2(0)/N0), per unit"),
                    ("r_squared", "N (1/N1 + 1/N0) delta' S_X delta / variance, clamped to [0, 1]"),
                    (
                        "interval",
                        "estimate +- q_{1-alpha}(|sqrt(1 - R^2) eps + sqrt(R^2) L_{K,a}|) sqrt(variance / N)",
                    ),
                ],
                json!({"threshold": a, "reference_draws": draws}),
            )
        }
        Method::Sre | Method::Mpe => {
            let (tau, v, details, f) = if spec.method == Method::Sre {
                let est = estimators::sre_estimate(obs)?;
                let v = variance::sre_var(obs)?;
                (
                    est.tau,
                    v,
                    json!({"strata": est.strata}),
                    [
                        ("estimate", "sum_k pi_k tauhat_k, pi_k = N_k / N"),
                        ("variance", "sum_k pi_k^2 (S_k^2(1)/N_k1 + S_k^2(0)/N_k0)"),
                    ],
                )
            } else {
                let est = estimators::mpe_estimate(obs)?;
                let v = variance::mpe_var(obs)?;
                (
                    est.tau,
                    v,
                    json!({"pair_effects": est.pair_effects}),
                    [
                        ("estimate", "n^{-1} sum_k tauhat_k over pairs"),
                        ("variance", "{n(n-1)}^{-1} sum_k (tauhat_k - tauhat)^2"),
                    ],
                )
            };
            let name = if spec.method == Method::Sre { "sre" } else { "mpe" };
            let (tv, vm) = (DVector::from_element(1, tau), scalar(v).1);
            full(wald(&tv, &vm, name)?, &f, details)
        }
        Method::Cluster => {
            let tau = estimators::cluster_estimate(obs, spec.cluster_method)?;
            Analysis {
                estimate: vec![tau],
                report: None,
                formulas: formulas(&[(
                    "estimate",
                    match spec.cluster_method {
                        estimators::ClusterMethod::ClusterTotal => {
                            "M/N (mean treated cluster total - mean control cluster total)"
                        }
                        estimators::ClusterMethod::UnitAverage => "Ybar_obs(1) - Ybar_obs(0) over units",
                    },
                )]),
                details: json!({"cluster_method": spec.cluster_method}),
            }
        }
    })
}

pub fn analyze(cfg: &RunConfig) -> CliResult<CommandOutput> {
    let spec = cfg.analysis.as_ref().ok_or_else(|| invalid("config has no 'analysis' section"))?;
    let alpha = cfg.alpha()?;
    let data = require_data(cfg)?;
    let obs = data.observed(cfg.arm_coding)?;
    let out = analysis(&obs, spec, alpha, cfg.seed())?;

    let mut table = Table::new(&["method", "contrast", "estimate", "std_error", "lower", "upper", "alpha"]);
    for (h, est) in out.estimate.iter().enumerate() {
        let se = out.report.as_ref().map(|r| {
            let v = r.variance[h][h];
            match r.variance_scale {
                variance::VarianceScale::Absolute => v.sqrt(),
                variance::VarianceScale::PerUnit => (v / obs.n() as f64).sqrt(),
            }
        });
        let interval = out.report.as_ref().and_then(|r| r.interval);
        table.push(vec![
            serde_json::to_value(spec.method).unwrap().as_str().unwrap().to_string(),
            (h + 1).to_string(),
            num(*est),
            opt(se),
            opt(interval.map(|i| i[0])),
            opt(interval.map(|i| i[1])),
            num(alpha),
        ]);
    }
    let notes = out
        .report
        .iter()
        .flat_map(|r| r.warnings.iter().map(|w| format!("warning: {w}")))
        .collect();
    let result = json!({
        "method": spec.method,
        "units": obs.n(),
        "counts": obs.assignment.counts(),
        "alpha": alpha,
        "estimate": out.estimate,
        "report": out.report,
        "formulas": out.formulas,
        "details": out.details,
    });
    Ok(CommandOutput { result, table, notes })
}

pub fn frt(cfg: &RunConfig) -> CliResult<CommandOutput> {
    let spec = cfg.frt.clone().unwrap_or_default();
    let data = require_data(cfg)?;
    let obs = data.observed(cfg.arm_coding)?;
    let r = frt::frt(&obs, &spec, RngSeed::new(cfg.seed()))?;
    let mut table = Table::new(&["p_value", "observed_stat", "statistic", "mode", "sidedness", "reference_size"]);
    let tag = |v: Value| v.as_str().unwrap_or_default().to_string();
    table.push(vec![
        num(r.p_value),
        num(r.observed_stat),
        tag(json!(r.statistic)),
        tag(json!(spec.mode)),
        tag(json!(spec.sidedness)),
        r.reference_draws.len().to_string(),
    ]);
    let notes = r.warnings.iter().map(|w| format!("warning: {w}")).collect();
    let result = json!({
        "p_value": r.p_value,
        "observed_stat": r.observed_stat,
        "statistic": r.statistic,
        "mode": spec.mode,
        "sidedness": spec.sidedness,
        "reference_size": r.reference_draws.len(),
        "warnings": r.warnings,
    });
    Ok(CommandOutput { result, table, notes })
}

const SIM_COLUMNS: [&str; 14] = [
    "schema_version",
    "estimator",
    "design",
    "replications",
    "alpha",
    "truth",
    "bias",
    "bias_se",
    "mc_variance",
    "mc_variance_se",
    "mean_variance_estimate",
    "coverage",
    "coverage_se",
    "mean_width",
];

fn sim_row(r: &SimResult) -> Vec<String> {
    vec![
        r.schema_version.to_string(),
        json!(r.estimator).as_str().unwrap_or_default().to_string(),
        r.design.clone(),
        r.replications.to_string(),
        num(r.alpha),
        num(r.truth),
        num(r.bias),
        num(r.bias_se),
        num(r.mc_variance),
        num(r.mc_variance_se),
        num(r.mean_variance_estimate),
        num(r.coverage),
        num(r.coverage_se),
        num(r.mean_width),
    ]
}

pub fn simulate(cfg: &RunConfig) -> CliResult<CommandOutput> {
    let spec = cfg.simulate.as_ref().ok_or_else(|| invalid("config has no 'simulate' section"))?;
    let seed = RngSeed::new(cfg.seed());
    match spec {
        SimulateSpec::Repeated {
            dgp,
            design,
            estimators,
            reps,
        } => {
            let alpha = cfg.alpha()?;
            if estimators.is_empty() {
                return Err(invalid("at least one estimator is required"));
            }
            let (table, x) = dgp.generate()?;
            let study = simlab::repeated_sampling(&table, x.as_ref(), design, estimators, *reps, alpha, seed)?;
            let mut pairwise = Vec::new();
            for (i, a) in estimators.iter().enumerate() {
                for b in &estimators[i + 1..] {
                    let (diff, se) =
                        simlab::paired_variance_difference(&study.estimates(*a), &study.estimates(*b))?;
                    let (wa, wb) = (study.widths(*a), study.widths(*b));
                    let shorter = wa.iter().zip(&wb).filter(|(x, y)| x < y).count() as f64 / wa.len() as f64;
                    pairwise.push(json!({
                        "first": a,
                        "second": b,
                        "variance_difference": diff,
                        "variance_difference_se": se,
                        "share_first_shorter": shorter,
                    }));
                }
            }
            let mut t = Table::new(&SIM_COLUMNS);
            study.results.iter().for_each(|r| t.push(sim_row(r)));
            let mean_draws = study.draws.iter().map(|d| d.draws_used as f64).sum::<f64>() / study.draws.len() as f64;
            Ok(CommandOutput {
                result: json!({
                    "study": "repeated",
                    "dgp": dgp,
                    "design": design,
                    "results": study.results,
                    "pairwise": pairwise,
                    "mean_draws_used": mean_draws,
                }),
                table: t,
                notes: Vec::new(),
            })
        }
        SimulateSpec::Exact { dgp, counts, contrast: c } => {
            let (table, _) = dgp.generate()?;
            let f = contrast(c.as_ref(), table.q())?;
            let audit = simlab::exact_audit(&table, counts, &f)?;
            let mut t = Table::new(&["quantity", "row", "column", "value"]);
            for (h, v) in audit.tau.iter().enumerate() {
                t.push(vec!["tau".into(), (h + 1).to_string(), String::new(), num(*v)]);
            }
            for (h, v) in audit.mean_estimate.iter().enumerate() {
                t.push(vec!["mean_estimate".into(), (h + 1).to_string(), String::new(), num(*v)]);
            }
            for (name, m) in [
                ("variance", &audit.variance),
                ("oracle_variance", &audit.oracle_variance),
                ("mean_variance_estimate", &audit.mean_variance_estimate),
                ("neyman_target", &audit.neyman_target),
            ] {
                for (i, row) in m.iter().enumerate() {
                    for (j, v) in row.iter().enumerate() {
                        t.push(vec![name.into(), (i + 1).to_string(), (j + 1).to_string(), num(*v)]);
                    }
                }
            }
            Ok(CommandOutput {
                result: json!({"study": "exact", "dgp": dgp, "counts": counts, "audit": audit}),
                table: t,
                notes: Vec::new(),
            })
        }
        SimulateSpec::RemCheck {
            dgp,
            treated,
            control,
            threshold,
            acceptance,
            reps,
            reference_draws,
        } => {
            let (table, x) = dgp.generate()?;
            let x = x.ok_or_else(|| invalid("the data-generating process needs k >= 1 covariates"))?;
            let design = DesignSpec::Rem {
                treated: *treated,
                control: *control,
                threshold: *threshold,
                acceptance: *acceptance,
                max_draws: None,
            };
            let a = design.rem_threshold(x.k())?;
            let r = simlab::rem_distribution_check(&table, &x, [*control, *treated], a, *reps, *reference_draws, seed)?;
            let mut t = Table::new(&[
                "schema_version",
                "threshold",
                "r_squared",
                "accepted",
                "reference_draws",
                "ks",
                "ks_normal_reference",
                "mc_error",
                "mean_draws_used",
            ]);
            t.push(vec![
                r.schema_version.to_string(),
                num(r.threshold),
                num(r.r_squared),
                r.accepted.to_string(),
                r.reference_draws.to_string(),
                num(r.ks),
                num(r.ks_normal_reference),
                num(r.mc_error),
                num(r.mean_draws_used),
            ]);
            Ok(CommandOutput {
                result: json!({"study": "rem_check", "dgp": dgp, "check": r}),
                table: t,
                notes: Vec::new(),
            })
        }
        SimulateSpec::Rate { family, ns, draws } => {
            let r = simlab::rate_experiment(*family, ns, *draws, seed)?;
            let mut t = Table::new(&["schema_version", "family", "n", "distance", "mc_floor", "bound", "lindeberg", "slope"]);
            for p in &r.points {
                t.push(vec![
                    r.schema_version.to_string(),
                    json!(family).as_str().unwrap_or_default().to_string(),
                    p.n.to_string(),
                    num(p.distance),
                    num(p.mc_floor),
                    num(p.bound),
                    num(p.lindeberg),
                    num(r.slope),
                ]);
            }
            Ok(CommandOutput {
                result: json!({"study": "rate", "rate": r}),
                table: t,
                notes: Vec::new(),
            })
        }
    }
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn diagnose(cfg: &RunConfig) -> CliResult<CommandOutput> {
    let spec = cfg.diagnose.clone().unwrap_or_default();
    let mut paths = spec.kernels.clone();
    if paths.is_empty() {
        paths.extend(cfg.data.clone());
    }
    if paths.is_empty() {
        return Err(invalid("no kernel files given (\"diagnose.kernels\" or --data)"));
    }
    let refs: Vec<&Path> = paths.iter().map(|p| p.as_path()).collect();
    let multi = if refs.len() == 1 {
        MultiKernel::from(PermKernel::from_csv_path(refs[0])?)
    } else {
        MultiKernel::from_csv_paths(&refs)?
    };
    let reports = perm::clt_condition_report_multi(&multi, &spec.epsilons)?;
    let (mean, cov) = perm::multi_moments(&multi);
    let normalized = perm::is_normalized(&multi, perm::NORMALIZATION_TOL);
    let mut bounds = serde_json::Map::new();
    let mut empirical = Value::Null;
    if multi.h() == 1 {
        let k = PermKernel::new(multi.coordinate(0).clone())?;
        bounds.insert("bolthausen".into(), json!(perm::bolthausen_bound(&k, spec.auto_normalize)?));
        if let Some(d) = spec.draws {
            let dist = perm::empirical_kolmogorov(&k, d, RngSeed::new(cfg.seed()))?;
            empirical = json!({"draws": d, "distance": dist});
        }
    } else {
        bounds.insert("multivariate".into(), json!(perm::multivariate_bound(&multi, spec.auto_normalize)?));
        if spec.draws.is_some() {
            return Err(invalid("the empirical Kolmogorov distance is available for one coordinate only"));
        }
    }
    bounds.insert(
        "raic_conjectured".into(),
        json!(perm::raic_conjectured_bound(&multi, spec.auto_normalize)?),
    );

    let mut t = Table::new(&["coordinate", "epsilon", "lindeberg", "hoeffding_r3", "hoeffding_r4", "max_ratio"]);
    for (h, r) in reports.iter().enumerate() {
        for (e, l) in r.epsilons.iter().zip(&r.lindeberg) {
            t.push(vec![
                (h + 1).to_string(),
                num(*e),
                num(*l),
                num(r.hoeffding_r3),
                num(r.hoeffding_r4),
                num(r.max_ratio),
            ]);
        }
    }
    Ok(CommandOutput {
        result: json!({
            "n": multi.n(),
            "coordinates": multi.h(),
            "moments": {"mean": mean.iter().copied().collect::<Vec<_>>(), "covariance": matrix_rows(&cov)},
            "reports": reports,
            "normalized": normalized,
            "bounds_without_constants": bounds,
            "raic_bound_status": "conjectured",
            "omitted_constants": {
                "bolthausen": "universal constant",
                "multivariate": "constant depending only on the dimension",
                "raic_conjectured": "universal constant",
            },
            "empirical_kolmogorov": empirical,
        }),
        table: t,
        notes: Vec::new(),
    })
}
