//! Assignment mechanisms: complete randomization, rerandomization with the
//! Mahalanobis criterion, stratified, matched-pairs and cluster designs.
//!
//! Every sampler is a pure function of its description and an [`RngSeed`].
//! Random assignments are uniform permutations (Fisher-Yates) of a fixed
//! multiset of arm labels, so ties and count drift cannot occur.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dist;
use crate::error::{Error, Result};
use crate::linalg;
use crate::science::{Assignment, CovariateMatrix, Structure};

/// Largest support that the enumerators will materialize.
pub const ENUMERATION_CAP: f64 = 1e6;

/// Default draw budget for rerandomization.
pub const DEFAULT_MAX_DRAWS: u64 = 1_000_000;

/// Seed plus stream id. Equal pairs give identical draw sequences; distinct
/// streams under one seed are independent ChaCha streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSeed {
    pub seed: u64,
    #[serde(default)]
    pub stream: u64,
}

impl RngSeed {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream: 0 }
    }

    pub fn with_stream(self, stream: u64) -> Self {
        Self { stream, ..self }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

impl From<u64> for RngSeed {
    fn from(seed: u64) -> Self {
        Self::new(seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StratumSpec {
    pub size: usize,
    pub treated: usize,
}

/// Serializable description of an assignment mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "design", rename_all = "snake_case", deny_unknown_fields)]
pub enum DesignSpec {
    Cre {
        counts: Vec<usize>,
    },
    Rem {
        treated: usize,
        control: usize,
        /// Mahalanobis threshold `a`; omitted means no rejection.
        #[serde(default)]
        threshold: Option<f64>,
        /// Alternative to `threshold`: asymptotic acceptance probability.
        #[serde(default)]
        acceptance: Option<f64>,
        #[serde(default)]
        max_draws: Option<u64>,
    },
    Sre {
        strata: Vec<StratumSpec>,
    },
    Mpe {
        pairs: usize,
    },
    Cluster {
        sizes: Vec<usize>,
        treated_clusters: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrawOutcome {
    pub assignment: Assignment,
    pub draws_used: u64,
    /// Mahalanobis distance of the accepted draw (rerandomization only).
    pub distance: Option<f64>,
}

impl DesignSpec {
    pub fn units(&self) -> usize {
        match self {
            DesignSpec::Cre { counts } => counts.iter().sum(),
            DesignSpec::Rem { treated, control, .. } => treated + control,
            DesignSpec::Sre { strata } => strata.iter().map(|s| s.size).sum(),
            DesignSpec::Mpe { pairs } => 2 * pairs,
            DesignSpec::Cluster { sizes, .. } => sizes.iter().sum(),
        }
    }

    /// Resolved rerandomization threshold (`+inf` when unconstrained).
    pub fn rem_threshold(&self, k: usize) -> Result<f64> {
        match self {
            DesignSpec::Rem {
                threshold,
                acceptance,
                ..
            } => match (threshold, acceptance) {
                (Some(_), Some(_)) => Err(Error::InvalidInput(
                    "give either threshold or acceptance, not both".into(),
                )),
                (Some(a), None) => {
                    if *a > 0.0 {
                        Ok(*a)
                    } else {
                        Err(Error::InvalidInput(format!("threshold {a} must be positive")))
                    }
                }
                (None, Some(p)) => threshold_from_acceptance(k, *p),
                (None, None) => Ok(f64::INFINITY),
            },
            _ => Err(Error::InvalidInput("not a rerandomization design".into())),
        }
    }

    pub fn draw(&self, x: Option<&CovariateMatrix>, seed: RngSeed) -> Result<DrawOutcome> {
        let plain = |assignment| DrawOutcome {
            assignment,
            draws_used: 1,
            distance: None,
        };
        match self {
            DesignSpec::Cre { counts } => draw_cre(counts, seed).map(plain),
            DesignSpec::Rem {
                treated,
                control,
                max_draws,
                ..
            } => {
                let x = x.ok_or_else(|| {
                    Error::InvalidInput("rerandomization needs a covariate matrix".into())
                })?;
                let a = self.rem_threshold(x.k())?;
                let r = draw_rem(
                    x,
                    *treated,
                    *control,
                    a,
                    max_draws.unwrap_or(DEFAULT_MAX_DRAWS),
                    seed,
                )?;
                Ok(DrawOutcome {
                    assignment: r.assignment,
                    draws_used: r.draws_used,
                    distance: Some(r.distance),
                })
            }
            DesignSpec::Sre { strata } => draw_sre(strata, seed).map(plain),
            DesignSpec::Mpe { pairs } => draw_mpe(*pairs, seed).map(plain),
            DesignSpec::Cluster {
                sizes,
                treated_clusters,
            } => draw_cluster(sizes, *treated_clusters, seed).map(plain),
        }
    }
}

fn check_counts(counts: &[usize]) -> Result<usize> {
    if counts.len() < 2 {
        return Err(Error::InvalidInput("need at least two arms".into()));
    }
    if let Some(q) = counts.iter().position(|&c| c == 0) {
        return Err(Error::InvalidInput(format!("arm {} has zero units", q + 1)));
    }
    counts
        .iter()
        .try_fold(0usize, |acc, &c| acc.checked_add(c))
        .filter(|&n| n <= u32::MAX as usize)
        .ok_or_else(|| Error::InvalidInput("total unit count overflows".into()))
}

fn label_multiset(counts: &[usize]) -> Vec<usize> {
    counts
        .iter()
        .enumerate()
        .flat_map(|(q, &c)| std::iter::repeat_n(q, c))
        .collect()
}

/// Uniform draw from all assignments with the given arm counts.
pub fn draw_cre(counts: &[usize], seed: RngSeed) -> Result<Assignment> {
    check_counts(counts)?;
    let mut labels = label_multiset(counts);
    labels.shuffle(&mut seed.rng());
    Assignment::new(labels, counts.len())
}

/// Number of assignments with the given arm counts, as a float.
pub fn multinomial_size(counts: &[usize]) -> f64 {
    let mut remaining = 0usize;
    let mut size = 1.0f64;
    for &c in counts {
        for j in 1..=c {
            remaining += 1;
            size *= remaining as f64 / j as f64;
        }
    }
    size.round()
}

/// Every assignment with the given counts, in lexicographic order.
pub fn enumerate_cre(counts: &[usize]) -> Result<Vec<Assignment>> {
    let n = check_counts(counts)?;
    let size = multinomial_size(counts);
    if size > ENUMERATION_CAP {
        return Err(Error::SupportTooLarge {
            size,
            cap: ENUMERATION_CAP,
        });
    }
    let q = counts.len();
    let mut out = Vec::with_capacity(size as usize);
    let mut remaining = counts.to_vec();
    let mut current = Vec::with_capacity(n);
    fn recurse(
        n: usize,
        q: usize,
        remaining: &mut [usize],
        current: &mut Vec<usize>,
        out: &mut Vec<Assignment>,
    ) {
        if current.len() == n {
            out.push(Assignment::new(current.clone(), q).expect("valid labels"));
            return;
        }
        for arm in 0..q {
            if remaining[arm] > 0 {
                remaining[arm] -= 1;
                current.push(arm);
                recurse(n, q, remaining, current, out);
                current.pop();
                remaining[arm] += 1;
            }
        }
    }
    recurse(n, q, &mut remaining, &mut current, &mut out);
    Ok(out)
}

/// Mahalanobis balance criterion for a fixed covariate matrix.
///
/// Precomputes the centered covariates and `(S_X^2)^{-1}` so the distance of
/// each candidate assignment costs `O(N K)`.
#[derive(Debug, Clone)]
pub struct BalanceCriterion {
    centered: DMatrix<f64>,
    inv_cov: DMatrix<f64>,
}

impl BalanceCriterion {
    pub fn new(x: &CovariateMatrix) -> Result<Self> {
        let centered = x.centered().matrix().clone();
        let inv_cov = linalg::spd_inverse(&x.covariance(), &|j| format!("x{}", j + 1))?;
        Ok(Self { centered, inv_cov })
    }

    pub fn n(&self) -> usize {
        self.centered.nrows()
    }

    pub fn k(&self) -> usize {
        self.centered.ncols()
    }

    /// Covariate difference in means, treated minus control.
    pub fn tau_x(&self, a: &Assignment) -> DVector<f64> {
        let k = self.k();
        let (mut s1, mut s0) = (DVector::zeros(k), DVector::zeros(k));
        for (i, row) in self.centered.row_iter().enumerate() {
            if a.is_treated(i) {
                s1 += row.transpose();
            } else {
                s0 += row.transpose();
            }
        }
        let (n0, n1) = (a.counts()[0] as f64, a.counts()[1] as f64);
        s1 / n1 - s0 / n0
    }

    /// `M = (N1 N0 / N) tau_x' (S_X^2)^{-1} tau_x`.
    pub fn distance(&self, a: &Assignment) -> f64 {
        let tx = self.tau_x(a);
        let (n0, n1) = (a.counts()[0] as f64, a.counts()[1] as f64);
        let m = n1 * n0 / (n0 + n1) * (tx.transpose() * &self.inv_cov * &tx)[(0, 0)];
        m.max(0.0)
    }
}

fn check_two_arm(x: &CovariateMatrix, a: &Assignment) -> Result<()> {
    if a.q() != 2 {
        return Err(Error::InvalidInput(
            "the Mahalanobis criterion is defined for two arms".into(),
        ));
    }
    if x.n() != a.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} covariate rows for {} units",
            x.n(),
            a.n()
        )));
    }
    if a.counts().contains(&0) {
        return Err(Error::InvalidInput("both arms must be nonempty".into()));
    }
    Ok(())
}

/// Mahalanobis distance between the arm-wise covariate means.
pub fn mahalanobis(x: &CovariateMatrix, a: &Assignment) -> Result<f64> {
    check_two_arm(x, a)?;
    Ok(BalanceCriterion::new(x)?.distance(a))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemDraw {
    pub assignment: Assignment,
    pub draws_used: u64,
    pub distance: f64,
}

/// Rerandomization: redraw complete randomizations until `M <= a`.
pub fn draw_rem(
    x: &CovariateMatrix,
    n1: usize,
    n0: usize,
    a: f64,
    max_draws: u64,
    seed: RngSeed,
) -> Result<RemDraw> {
    let criterion = BalanceCriterion::new(x)?;
    draw_rem_with(&criterion, n1, n0, a, max_draws, seed)
}

/// As [`draw_rem`] with a precomputed criterion.
pub fn draw_rem_with(
    criterion: &BalanceCriterion,
    n1: usize,
    n0: usize,
    a: f64,
    max_draws: u64,
    seed: RngSeed,
) -> Result<RemDraw> {
    if !(a > 0.0) {
        return Err(Error::InvalidInput(format!("threshold {a} must be positive")));
    }
    if max_draws == 0 {
        return Err(Error::InvalidInput("max_draws must be at least 1".into()));
    }
    let counts = [n0, n1];
    check_counts(&counts)?;
    if criterion.n() != n0 + n1 {
        return Err(Error::DimensionMismatch(format!(
            "{} covariate rows for {} units",
            criterion.n(),
            n0 + n1
        )));
    }
    let mut rng = seed.rng();
    let mut labels = label_multiset(&counts);
    let mut best = f64::INFINITY;
    for draw in 1..=max_draws {
        labels.shuffle(&mut rng);
        let assignment = Assignment::new(labels.clone(), 2)?;
        let m = criterion.distance(&assignment);
        if m <= a {
            return Ok(RemDraw {
                assignment,
                draws_used: draw,
                distance: m,
            });
        }
        best = best.min(m);
    }
    Err(Error::RerandomizationExhausted {
        draws: max_draws,
        best_distance: best,
    })
}

/// Threshold `a` with asymptotic acceptance probability `P(chi2_K <= a) = p`.
pub fn threshold_from_acceptance(k: usize, p: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidInput("need at least one covariate".into()));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidInput(format!("acceptance probability {p} outside (0, 1)")));
    }
    dist::chi2_quantile(p, k as f64)
}

fn check_strata(strata: &[StratumSpec]) -> Result<()> {
    if strata.is_empty() {
        return Err(Error::InvalidInput("no strata".into()));
    }
    for (k, s) in strata.iter().enumerate() {
        if s.treated == 0 || s.treated >= s.size {
            return Err(Error::InvalidInput(format!(
                "stratum {} has {} treated of {} units; need 1 <= treated < size",
                k + 1,
                s.treated,
                s.size
            )));
        }
    }
    Ok(())
}

fn stratum_labels(strata: &[StratumSpec]) -> Vec<usize> {
    strata
        .iter()
        .enumerate()
        .flat_map(|(k, s)| std::iter::repeat_n(k, s.size))
        .collect()
}

/// Independent complete randomization within each stratum. Units are laid out
/// stratum by stratum in the order given.
pub fn draw_sre(strata: &[StratumSpec], seed: RngSeed) -> Result<Assignment> {
    check_strata(strata)?;
    let mut rng = seed.rng();
    let mut arms = Vec::with_capacity(strata.iter().map(|s| s.size).sum());
    for s in strata {
        let mut block = label_multiset(&[s.size - s.treated, s.treated]);
        block.shuffle(&mut rng);
        arms.extend(block);
    }
    Assignment::new(arms, 2)?.with_structure(Structure::Strata(stratum_labels(strata)))
}

/// Matched pairs: `n` strata of two units with one treated in each.
pub fn draw_mpe(n: usize, seed: RngSeed) -> Result<Assignment> {
    if n == 0 {
        return Err(Error::InvalidInput("need at least one pair".into()));
    }
    let strata = vec![StratumSpec { size: 2, treated: 1 }; n];
    let a = draw_sre(&strata, seed)?;
    let labels = a.structure().labels().expect("strata").to_vec();
    a.with_structure(Structure::Pairs(labels))
}

fn check_clusters(sizes: &[usize], m1: usize) -> Result<()> {
    let m = sizes.len();
    if m1 == 0 || m1 >= m {
        return Err(Error::InvalidInput(format!(
            "{m1} treated clusters of {m}; need 1 <= treated < clusters"
        )));
    }
    if let Some(c) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::InvalidInput(format!("cluster {} is empty", c + 1)));
    }
    Ok(())
}

fn expand_clusters(sizes: &[usize], cluster_arms: &[usize]) -> Result<Assignment> {
    let mut arms = Vec::new();
    let mut labels = Vec::new();
    for (c, (&size, &arm)) in sizes.iter().zip(cluster_arms).enumerate() {
        arms.extend(std::iter::repeat_n(arm, size));
        labels.extend(std::iter::repeat_n(c, size));
    }
    Assignment::new(arms, 2)?.with_structure(Structure::Clusters(labels))
}

/// Cluster randomization: `m1` of the clusters are treated and every unit
/// inherits its cluster's arm. Units are laid out cluster by cluster.
pub fn draw_cluster(sizes: &[usize], m1: usize, seed: RngSeed) -> Result<Assignment> {
    check_clusters(sizes, m1)?;
    let cluster_arms = draw_cre(&[sizes.len() - m1, m1], seed)?;
    expand_clusters(sizes, cluster_arms.arms())
}

/// Every stratified assignment (product of the per-stratum supports).
pub fn enumerate_sre(strata: &[StratumSpec]) -> Result<Vec<Assignment>> {
    check_strata(strata)?;
    let size: f64 = strata
        .iter()
        .map(|s| multinomial_size(&[s.size - s.treated, s.treated]))
        .product();
    if size > ENUMERATION_CAP {
        return Err(Error::SupportTooLarge {
            size,
            cap: ENUMERATION_CAP,
        });
    }
    let blocks: Vec<Vec<Assignment>> = strata
        .iter()
        .map(|s| enumerate_cre(&[s.size - s.treated, s.treated]))
        .collect::<Result<_>>()?;
    let mut combos: Vec<Vec<usize>> = vec![Vec::new()];
    for block in &blocks {
        combos = combos
            .into_iter()
            .flat_map(|prefix| {
                block.iter().map(move |b| {
                    let mut v = prefix.clone();
                    v.extend_from_slice(b.arms());
                    v
                })
            })
            .collect();
    }
    let labels = stratum_labels(strata);
    combos
        .into_iter()
        .map(|arms| Assignment::new(arms, 2)?.with_structure(Structure::Strata(labels.clone())))
        .collect()
}

/// Every matched-pairs assignment (`2^n` of them).
pub fn enumerate_mpe(n: usize) -> Result<Vec<Assignment>> {
    enumerate_sre(&vec![StratumSpec { size: 2, treated: 1 }; n])?
        .into_iter()
        .map(|a| {
            let labels = a.structure().labels().expect("strata").to_vec();
            a.with_structure(Structure::Pairs(labels))
        })
        .collect()
}

/// Every cluster-level assignment expanded to units.
pub fn enumerate_clusters(sizes: &[usize], m1: usize) -> Result<Vec<Assignment>> {
    check_clusters(sizes, m1)?;
    enumerate_cre(&[sizes.len() - m1, m1])?
        .iter()
        .map(|c| expand_clusters(sizes, c.arms()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn chi_square_uniform(freq: &HashMap<Vec<usize>, usize>, cells: usize, draws: usize) -> f64 {
        let e = draws as f64 / cells as f64;
        assert_eq!(freq.len(), cells);
        freq.values().map(|&o| (o as f64 - e).powi(2) / e).sum()
    }

    #[test]
    fn cre_rejects_zero_count() {
        assert!(draw_cre(&[4, 0], RngSeed::new(1)).is_err());
        assert!(enumerate_cre(&[4, 0]).is_err());
    }

    #[test]
    fn cre_counts_exact_and_deterministic() {
        let counts = [3, 5, 2];
        let a = draw_cre(&counts, RngSeed::new(11)).unwrap();
        assert_eq!(a.counts(), &counts);
        let b = draw_cre(&counts, RngSeed::new(11)).unwrap();
        assert_eq!(a, b);
        let c = draw_cre(&counts, RngSeed::new(11).with_stream(1)).unwrap();
        assert_ne!(a.arms(), c.arms());
    }

    #[test]
    fn cre_uniform_over_six_assignments() {
        let draws = 60_000;
        let mut freq = HashMap::new();
        let mut rng_seed = RngSeed::new(2024);
        for r in 0..draws {
            rng_seed.stream = r as u64;
            *freq.entry(draw_cre(&[2, 2], rng_seed).unwrap().arms().to_vec()).or_insert(0) += 1;
        }
        let stat = chi_square_uniform(&freq, 6, draws);
        let crit = dist::chi2_upper_quantile(0.01, 5.0).unwrap();
        assert!(stat < crit, "chi-square {stat} >= {crit}");
    }

    #[test]
    fn enumeration_sizes_and_order() {
        assert_eq!(enumerate_cre(&[1, 1]).unwrap().len(), 2);
        let e = enumerate_cre(&[2, 2]).unwrap();
        assert_eq!(e.len(), 6);
        assert_eq!(e[0].arms(), &[0, 0, 1, 1]);
        assert_eq!(e[5].arms(), &[1, 1, 0, 0]);
        assert_eq!(enumerate_cre(&[2, 1, 1]).unwrap().len(), 12);
        assert!(matches!(
            enumerate_cre(&[10, 10, 10]),
            Err(Error::SupportTooLarge { .. })
        ));
    }

    #[test]
    fn mahalanobis_hand_case() {
        let x = CovariateMatrix::from_rows(&[vec![1.0], vec![-1.0], vec![1.0], vec![-1.0]]).unwrap();
        let a = Assignment::new(vec![1, 0, 1, 0], 2).unwrap();
        assert!((mahalanobis(&x, &a).unwrap() - 3.0).abs() < 1e-12);
        let balanced = Assignment::new(vec![1, 1, 0, 0], 2).unwrap();
        assert!(mahalanobis(&x, &balanced).unwrap().abs() < 1e-12);
    }

    #[test]
    fn mahalanobis_constant_covariate_errors() {
        let x = CovariateMatrix::from_rows(&[vec![2.0], vec![2.0], vec![2.0], vec![2.0]]).unwrap();
        let a = Assignment::new(vec![1, 0, 1, 0], 2).unwrap();
        assert!(matches!(mahalanobis(&x, &a), Err(Error::Singular(_))));
    }

    #[test]
    fn rem_unconstrained_accepts_first_draw() {
        let x = CovariateMatrix::from_rows(&(0..10).map(|i| vec![i as f64]).collect::<Vec<_>>())
            .unwrap();
        let r = draw_rem(&x, 5, 5, f64::INFINITY, 10, RngSeed::new(3)).unwrap();
        assert_eq!(r.draws_used, 1);
        assert_eq!(r.assignment, draw_cre(&[5, 5], RngSeed::new(3)).unwrap());
    }

    #[test]
    fn rem_exhaustion_reports_best() {
        let x = CovariateMatrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![10.0]]).unwrap();
        let min_m = enumerate_cre(&[2, 2])
            .unwrap()
            .iter()
            .map(|a| mahalanobis(&x, a).unwrap())
            .fold(f64::INFINITY, f64::min);
        let err = draw_rem(&x, 2, 2, min_m / 2.0, 200, RngSeed::new(5)).unwrap_err();
        match err {
            Error::RerandomizationExhausted { draws, best_distance } => {
                assert_eq!(draws, 200);
                assert!((best_distance - min_m).abs() < 1e-12);
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn acceptance_threshold_values() {
        assert!((threshold_from_acceptance(1, 0.95).unwrap() - 3.841_458_820_694_124).abs() < 1e-9);
        assert!((threshold_from_acceptance(2, 0.95).unwrap() - 5.991_464_547_107_979).abs() < 1e-9);
        assert!(threshold_from_acceptance(1, 0.999_999).unwrap() > threshold_from_acceptance(1, 0.99).unwrap());
        assert!(threshold_from_acceptance(1, 1.0).is_err());
        assert!(threshold_from_acceptance(1, 0.0).is_err());
    }

    #[test]
    fn sre_structure_and_support() {
        let strata = [StratumSpec { size: 4, treated: 2 }, StratumSpec { size: 4, treated: 2 }];
        let a = draw_sre(&strata, RngSeed::new(9)).unwrap();
        assert_eq!(a.counts(), &[4, 4]);
        assert_eq!(a.arms()[..4].iter().sum::<usize>(), 2);
        assert_eq!(enumerate_sre(&strata).unwrap().len(), 36);
        assert!(draw_sre(&[StratumSpec { size: 3, treated: 3 }], RngSeed::new(1)).is_err());
    }

    #[test]
    fn sre_uniform_over_36() {
        let strata = [StratumSpec { size: 4, treated: 2 }, StratumSpec { size: 4, treated: 2 }];
        let draws = 72_000;
        let mut freq = HashMap::new();
        for r in 0..draws {
            let a = draw_sre(&strata, RngSeed::new(77).with_stream(r as u64)).unwrap();
            *freq.entry(a.arms().to_vec()).or_insert(0) += 1;
        }
        let stat = chi_square_uniform(&freq, 36, draws);
        assert!(stat < dist::chi2_upper_quantile(0.001, 35.0).unwrap());
    }

    #[test]
    fn mpe_one_treated_per_pair() {
        let a = draw_mpe(5, RngSeed::new(4)).unwrap();
        assert!(matches!(a.structure(), Structure::Pairs(_)));
        for k in 0..5 {
            assert_eq!(a.arms()[2 * k] + a.arms()[2 * k + 1], 1);
        }
        assert_eq!(enumerate_mpe(1).unwrap().len(), 2);
        assert_eq!(enumerate_mpe(3).unwrap().len(), 8);
    }

    #[test]
    fn cluster_constant_within_cluster() {
        let sizes = [3, 1, 4, 2];
        let a = draw_cluster(&sizes, 2, RngSeed::new(8)).unwrap();
        let labels = a.structure().labels().unwrap();
        for i in 0..a.n() {
            for j in 0..a.n() {
                if labels[i] == labels[j] {
                    assert_eq!(a.arm(i), a.arm(j));
                }
            }
        }
        assert_eq!(enumerate_clusters(&sizes, 2).unwrap().len(), 6);
        assert!(draw_cluster(&sizes, 4, RngSeed::new(1)).is_err());
    }

    #[test]
    fn singleton_clusters_match_unit_cre() {
        let a = draw_cluster(&[1; 6], 3, RngSeed::new(21)).unwrap();
        let b = draw_cre(&[3, 3], RngSeed::new(21)).unwrap();
        assert_eq!(a.arms(), b.arms());
    }

    #[test]
    fn design_spec_json_roundtrip() {
        let spec: DesignSpec =
            serde_json::from_str(r#"{"design":"rem","treated":5,"control":5,"acceptance":0.5}"#)
                .unwrap();
        assert!((spec.rem_threshold(1).unwrap() - 0.454_936_423_119_572_7).abs() < 1e-9);
        let bad = serde_json::from_str::<DesignSpec>(r#"{"design":"cre","counts":[2,2],"foo":1}"#);
        assert!(bad.is_err());
    }
}
