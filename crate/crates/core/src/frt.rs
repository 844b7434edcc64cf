//! Fisher randomization tests of sharp null hypotheses under complete
//! randomization.

use serde::{Deserialize, Serialize};

use crate::designs::{self, RngSeed};
use crate::error::{Error, Result};
use crate::par;
use crate::science::{Assignment, ObservedData};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FrtStatistic {
    #[default]
    DiffInMeans,
    /// Difference in means divided by the square root of the Neyman variance.
    Studentized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FrtMode {
    Exact,
    #[default]
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Sidedness {
    #[default]
    TwoSided,
    Greater,
    Less,
}

pub const DEFAULT_RESAMPLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrtSpec {
    #[serde(default)]
    pub statistic: FrtStatistic,
    #[serde(default)]
    pub mode: FrtMode,
    #[serde(default = "default_resamples")]
    pub resamples: usize,
    #[serde(default)]
    pub sidedness: Sidedness,
    /// Unit-level effects `Y_i(1) - Y_i(0)` under the null; all zero if absent.
    #[serde(default)]
    pub effect: Option<Vec<f64>>,
}

fn default_resamples() -> usize {
    DEFAULT_RESAMPLES
}

impl Default for FrtSpec {
    fn default() -> Self {
        Self {
            statistic: FrtStatistic::DiffInMeans,
            mode: FrtMode::MonteCarlo,
            resamples: DEFAULT_RESAMPLES,
            sidedness: Sidedness::TwoSided,
            effect: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrtResult {
    pub p_value: f64,
    pub observed_stat: f64,
    pub statistic: FrtStatistic,
    /// Statistic under every enumerated or sampled assignment.
    pub reference_draws: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Difference in means of `y` under `treated`, plus its Neyman variance when
/// both arms have at least two units.
fn diff_and_var(y: &[f64], treated: &[bool]) -> (f64, f64) {
    let (mut s1, mut s0, mut q1, mut q0, mut n1, mut n0) = (0.0, 0.0, 0.0, 0.0, 0usize, 0usize);
    for (&v, &t) in y.iter().zip(treated) {
        if t {
            s1 += v;
            q1 += v * v;
            n1 += 1;
        } else {
            s0 += v;
            q0 += v * v;
            n0 += 1;
        }
    }
    let (m1, m0) = (s1 / n1 as f64, s0 / n0 as f64);
    let var = |q: f64, m: f64, n: usize| ((q - n as f64 * m * m) / (n as f64 - 1.0)).max(0.0);
    let v = var(q1, m1, n1) / n1 as f64 + var(q0, m0, n0) / n0 as f64;
    (m1 - m0, v)
}

fn statistic(y: &[f64], treated: &[bool], which: FrtStatistic) -> f64 {
    let (d, v) = diff_and_var(y, treated);
    match which {
        FrtStatistic::DiffInMeans => d,
        FrtStatistic::Studentized => {
            if v > 0.0 {
                d / v.sqrt()
            } else if d == 0.0 {
                0.0
            } else {
                d.signum() * f64::INFINITY
            }
        }
    }
}

fn extreme(t: f64, obs: f64, side: Sidedness) -> bool {
    let tol = 1e-12 * obs.abs().max(1.0);
    match side {
        Sidedness::TwoSided => t.abs() >= obs.abs() - tol,
        Sidedness::Greater => t >= obs - tol,
        Sidedness::Less => t <= obs + tol,
    }
}

/// Randomization p-value for the sharp null `Y_i(1) = Y_i(0) + effect_i`.
///
/// The statistic is computed on the null-adjusted outcomes
/// `y_i - z_i effect_i`, which the null makes invariant to the assignment.
pub fn frt(obs: &ObservedData, spec: &FrtSpec, seed: RngSeed) -> Result<FrtResult> {
    let a = &obs.assignment;
    if a.q() != 2 {
        return Err(Error::InvalidInput("randomization tests need two arms".into()));
    }
    let counts = a.counts().to_vec();
    if counts.contains(&0) {
        return Err(Error::ArmTooSmall {
            arm: if counts[0] == 0 { 1 } else { 2 },
            count: 0,
            required: 1,
        });
    }
    let n = obs.n();
    let adjusted: Vec<f64> = match &spec.effect {
        None => obs.y.clone(),
        Some(e) => {
            if e.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "effect vector has length {} for {n} units",
                    e.len()
                )));
            }
            (0..n)
                .map(|i| obs.y[i] - if a.is_treated(i) { e[i] } else { 0.0 })
                .collect()
        }
    };

    let treated: Vec<bool> = (0..n).map(|i| a.is_treated(i)).collect();
    let mut which = spec.statistic;
    let mut warnings = Vec::new();
    if which == FrtStatistic::Studentized && diff_and_var(&adjusted, &treated).1 <= 0.0 {
        which = FrtStatistic::DiffInMeans;
        warnings.push(
            "observed Neyman variance is zero; studentized statistic replaced by the difference in means"
                .to_string(),
        );
    }
    let observed_stat = statistic(&adjusted, &treated, which);
    let as_bool = |asg: &Assignment| -> Vec<bool> { (0..n).map(|i| asg.is_treated(i)).collect() };

    let (reference_draws, p_value) = match spec.mode {
        FrtMode::Exact => {
            let all = designs::enumerate_cre(&counts)?;
            let draws: Vec<f64> = all
                .iter()
                .map(|asg| statistic(&adjusted, &as_bool(asg), which))
                .collect();
            let hits = draws.iter().filter(|&&t| extreme(t, observed_stat, spec.sidedness)).count();
            let p = hits as f64 / draws.len() as f64;
            (draws, p)
        }
        FrtMode::MonteCarlo => {
            if spec.resamples == 0 {
                return Err(Error::InvalidInput("Monte Carlo mode needs at least one resample".into()));
            }
            let draws: Vec<f64> = par::map(spec.resamples, |r| {
                let asg = designs::draw_cre(&counts, seed.with_stream(r as u64)).expect("validated counts");
                statistic(&adjusted, &as_bool(&asg), which)
            });
            let hits = draws.iter().filter(|&&t| extreme(t, observed_stat, spec.sidedness)).count();
            let p = (1 + hits) as f64 / (1 + draws.len()) as f64;
            (draws, p)
        }
    };
    Ok(FrtResult {
        p_value,
        observed_stat,
        statistic: which,
        reference_draws,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs2(y: &[f64], z: &[usize]) -> ObservedData {
        ObservedData::new(y.to_vec(), Assignment::new(z.to_vec(), 2).unwrap(), None).unwrap()
    }

    fn exact() -> FrtSpec {
        FrtSpec {
            mode: FrtMode::Exact,
            ..FrtSpec::default()
        }
    }

    #[test]
    fn constant_outcomes_give_p_one() {
        let obs = obs2(&[2.0; 6], &[1, 0, 1, 0, 1, 0]);
        let r = frt(&obs, &exact(), RngSeed::new(0)).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert!(r.reference_draws.iter().all(|&t| t == 0.0));
        let mc = frt(&obs, &FrtSpec::default(), RngSeed::new(0)).unwrap();
        assert_eq!(mc.p_value, 1.0);
    }

    #[test]
    fn four_unit_exact_case() {
        // y = (0, 1, 2, 10), units 3 and 4 treated.
        // The six splits give differences: {1,2}: -5.5, {1,3}: -4.5, {1,4}: 3.5,
        // {2,3}: -3.5, {2,4}: 4.5, {3,4}: 5.5; observed 5.5.
        let obs = obs2(&[0.0, 1.0, 2.0, 10.0], &[0, 0, 1, 1]);
        let r = frt(&obs, &exact(), RngSeed::new(0)).unwrap();
        assert_eq!(r.observed_stat, 5.5);
        let mut draws = r.reference_draws.clone();
        draws.sort_by(f64::total_cmp);
        assert_eq!(draws, vec![-5.5, -4.5, -3.5, 3.5, 4.5, 5.5]);
        assert!((r.p_value - 2.0 / 6.0).abs() < 1e-15);
        let greater = FrtSpec {
            sidedness: Sidedness::Greater,
            ..exact()
        };
        assert!((frt(&obs, &greater, RngSeed::new(0)).unwrap().p_value - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn monte_carlo_add_one_and_determinism() {
        let obs = obs2(&[0.0, 1.0, 2.0, 10.0, 3.0, 4.0], &[0, 0, 1, 1, 0, 1]);
        let spec = FrtSpec {
            resamples: 50,
            ..FrtSpec::default()
        };
        let a = frt(&obs, &spec, RngSeed::new(4)).unwrap();
        let b = frt(&obs, &spec, RngSeed::new(4)).unwrap();
        assert_eq!(a, b);
        assert!(a.p_value >= 1.0 / 51.0);
        assert_eq!(a.reference_draws.len(), 50);
    }

    #[test]
    fn effect_vector_shifts_null() {
        // y(0) = (0, 1, 2, 3), effect 5 everywhere; units 3 and 4 treated.
        let obs = obs2(&[0.0, 1.0, 7.0, 8.0], &[0, 0, 1, 1]);
        let spec = FrtSpec {
            effect: Some(vec![5.0; 4]),
            ..exact()
        };
        let shifted = frt(&obs, &spec, RngSeed::new(0)).unwrap();
        let base = frt(&obs2(&[0.0, 1.0, 2.0, 3.0], &[0, 0, 1, 1]), &exact(), RngSeed::new(0)).unwrap();
        assert_eq!(shifted.p_value, base.p_value);
        assert!(frt(&obs, &FrtSpec { effect: Some(vec![1.0; 3]), ..exact() }, RngSeed::new(0)).is_err());
    }

    #[test]
    fn studentized_falls_back_when_variance_is_zero() {
        let obs = obs2(&[1.0, 1.0, 3.0, 3.0], &[0, 0, 1, 1]);
        let spec = FrtSpec {
            statistic: FrtStatistic::Studentized,
            ..exact()
        };
        let r = frt(&obs, &spec, RngSeed::new(0)).unwrap();
        assert_eq!(r.statistic, FrtStatistic::DiffInMeans);
        assert_eq!(r.warnings.len(), 1);
        assert_eq!(r.observed_stat, 2.0);
    }

    #[test]
    fn exact_support_cap() {
        let z: Vec<usize> = (0..40).map(|i| i % 2).collect();
        let obs = obs2(&vec![0.0; 40], &z);
        assert!(matches!(
            frt(&obs, &exact(), RngSeed::new(0)),
            Err(Error::SupportTooLarge { .. })
        ));
    }

    #[test]
    fn spec_json_rejects_unknown_fields() {
        let ok: FrtSpec = serde_json::from_str(r#"{"mode":"exact","statistic":"studentized"}"#).unwrap();
        assert_eq!(ok.resamples, DEFAULT_RESAMPLES);
        assert!(serde_json::from_str::<FrtSpec>(r#"{"mode":"exact","bogus":1}"#).is_err());
    }
}
