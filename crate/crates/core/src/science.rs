//! Potential outcomes, contrasts, assignments and finite-population moments.
//!
//! Arms are indexed `0..Q` in memory. Files and user-facing output use the
//! 1-based labels `1..=Q`; for two arms, index 0 is control and index 1 is
//! treatment.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// The fixed `N x Q` matrix of potential outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct ScienceTable {
    y: DMatrix<f64>,
}

impl ScienceTable {
    pub fn new(y: DMatrix<f64>) -> Result<Self> {
        if y.nrows() < 2 || y.ncols() < 2 {
            return Err(Error::InvalidInput(format!(
                "science table needs N >= 2 and Q >= 2, got {}x{}",
                y.nrows(),
                y.ncols()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("science table has non-finite entries".into()));
        }
        Ok(Self { y })
    }

    /// One slice per arm, each of length `N`.
    pub fn from_arms(arms: &[Vec<f64>]) -> Result<Self> {
        let n = arms.first().map_or(0, Vec::len);
        if arms.iter().any(|c| c.len() != n) {
            return Err(Error::DimensionMismatch("arms have different lengths".into()));
        }
        Self::new(DMatrix::from_fn(n, arms.len(), |i, q| arms[q][i]))
    }

    /// Treatment-control table: column 0 holds `Y(0)`, column 1 holds `Y(1)`.
    pub fn two_arm(y0: &[f64], y1: &[f64]) -> Result<Self> {
        Self::from_arms(&[y0.to_vec(), y1.to_vec()])
    }

    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    pub fn q(&self) -> usize {
        self.y.ncols()
    }

    pub fn outcomes(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn get(&self, unit: usize, arm: usize) -> f64 {
        self.y[(unit, arm)]
    }

    pub fn arm(&self, arm: usize) -> Vec<f64> {
        self.y.column(arm).iter().copied().collect()
    }
}

/// A `Q x H` contrast matrix with zero column sums and full column rank.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastMatrix {
    f: DMatrix<f64>,
}

impl ContrastMatrix {
    pub fn new(f: DMatrix<f64>) -> Result<Self> {
        let (q, h) = f.shape();
        if q < 2 || h < 1 {
            return Err(Error::InvalidInput(format!("contrast matrix shape {q}x{h}")));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("contrast matrix has non-finite entries".into()));
        }
        for (j, col) in f.column_iter().enumerate() {
            let scale = col.amax().max(f64::MIN_POSITIVE);
            if col.sum().abs() > 1e-10 * scale * q as f64 {
                return Err(Error::InvalidInput(format!(
                    "contrast column {} does not sum to zero (sum {})",
                    j + 1,
                    col.sum()
                )));
            }
        }
        if h > q || linalg::numerical_rank(&f) < h {
            return Err(Error::InvalidInput(format!(
                "contrast matrix is not of full column rank {h}"
            )));
        }
        Ok(Self { f })
    }

    /// `(-1, 1)'`: treatment minus control.
    pub fn two_arm() -> Self {
        Self {
            f: DMatrix::from_column_slice(2, 1, &[-1.0, 1.0]),
        }
    }

    /// Columns `e_q - e_1` for `q = 2..=Q`: every arm against the first.
    pub fn versus_first(q: usize) -> Result<Self> {
        if q < 2 {
            return Err(Error::InvalidInput("need at least two arms".into()));
        }
        let f = DMatrix::from_fn(q, q - 1, |r, c| {
            if r == 0 {
                -1.0
            } else if r == c + 1 {
                1.0
            } else {
                0.0
            }
        });
        Self::new(f)
    }

    pub fn q(&self) -> usize {
        self.f.nrows()
    }

    pub fn h(&self) -> usize {
        self.f.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.f
    }
}

/// Pre-treatment covariates, one row per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateMatrix {
    x: DMatrix<f64>,
    centered: bool,
    means: DVector<f64>,
}

impl CovariateMatrix {
    pub fn new(x: DMatrix<f64>) -> Result<Self> {
        if x.ncols() < 1 || x.nrows() < 2 {
            return Err(Error::InvalidInput(format!(
                "covariate matrix shape {}x{}",
                x.nrows(),
                x.ncols()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("covariates have non-finite entries".into()));
        }
        let means = x.row_mean().transpose();
        Ok(Self {
            x,
            centered: false,
            means,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::DimensionMismatch("covariate rows differ in length".into()));
        }
        Self::new(DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]))
    }

    /// Column-centered copy. The original column means stay available via
    /// [`CovariateMatrix::means`].
    pub fn centered(&self) -> Self {
        if self.centered {
            return self.clone();
        }
        let mut x = self.x.clone();
        for (j, mut col) in x.column_iter_mut().enumerate() {
            col.add_scalar_mut(-self.means[j]);
        }
        Self {
            x,
            centered: true,
            means: self.means.clone(),
        }
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn k(&self) -> usize {
        self.x.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// Column means of the covariates as supplied (before centering).
    pub fn means(&self) -> &DVector<f64> {
        &self.means
    }

    /// Finite-population covariance `S_X^2`.
    pub fn covariance(&self) -> DMatrix<f64> {
        linalg::row_covariance(&self.x)
    }
}

/// Optional grouping of units attached to an assignment.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Structure {
    #[default]
    None,
    Strata(Vec<usize>),
    Pairs(Vec<usize>),
    Clusters(Vec<usize>),
}

impl Structure {
    pub fn labels(&self) -> Option<&[usize]> {
        match self {
            Structure::None => None,
            Structure::Strata(l) | Structure::Pairs(l) | Structure::Clusters(l) => Some(l),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Structure::None => "none",
            Structure::Strata(_) => "stratum",
            Structure::Pairs(_) => "pair",
            Structure::Clusters(_) => "cluster",
        }
    }
}

/// Arm of every unit plus arm counts and optional grouping.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    arms: Vec<usize>,
    counts: Vec<usize>,
    structure: Structure,
}

impl Assignment {
    /// `arms[i]` is the 0-based arm of unit `i`; `q` is the number of arms.
    pub fn new(arms: Vec<usize>, q: usize) -> Result<Self> {
        if q < 2 {
            return Err(Error::InvalidInput("an assignment needs at least two arms".into()));
        }
        let mut counts = vec![0; q];
        for (i, &a) in arms.iter().enumerate() {
            if a >= q {
                return Err(Error::InvalidInput(format!(
                    "unit {} has arm {} outside 1..={q}",
                    i + 1,
                    a + 1
                )));
            }
            counts[a] += 1;
        }
        Ok(Self {
            arms,
            counts,
            structure: Structure::None,
        })
    }

    /// Treatment indicators in `{0, 1}`.
    pub fn from_treatment(z: &[bool]) -> Self {
        Self::new(z.iter().map(|&t| t as usize).collect(), 2).expect("two arms")
    }

    pub fn with_structure(mut self, structure: Structure) -> Result<Self> {
        if let Some(labels) = structure.labels() {
            if labels.len() != self.arms.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{} {} labels for {} units",
                    labels.len(),
                    structure.kind(),
                    self.arms.len()
                )));
            }
        }
        self.structure = structure;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.arms.len()
    }

    pub fn q(&self) -> usize {
        self.counts.len()
    }

    pub fn arms(&self) -> &[usize] {
        &self.arms
    }

    pub fn arm(&self, unit: usize) -> usize {
        self.arms[unit]
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn structure(&self) -> &Structure {
        &self.structure
    }

    pub fn is_treated(&self, unit: usize) -> bool {
        self.arms[unit] == 1
    }
}

/// Observed outcomes together with the realized assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedData {
    pub y: Vec<f64>,
    pub assignment: Assignment,
    pub x: Option<CovariateMatrix>,
}

impl ObservedData {
    pub fn new(y: Vec<f64>, assignment: Assignment, x: Option<CovariateMatrix>) -> Result<Self> {
        if y.len() != assignment.n() {
            return Err(Error::DimensionMismatch(format!(
                "{} outcomes for {} assigned units",
                y.len(),
                assignment.n()
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("outcome of unit {} is not finite", i + 1)));
        }
        if let Some(x) = &x {
            if x.n() != y.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{} covariate rows for {} units",
                    x.n(),
                    y.len()
                )));
            }
        }
        Ok(Self { y, assignment, x })
    }

    pub fn with_covariates(mut self, x: CovariateMatrix) -> Result<Self> {
        if x.n() != self.y.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} covariate rows for {} units",
                x.n(),
                self.y.len()
            )));
        }
        self.x = Some(x);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Outcomes of the units in arm `q`.
    pub fn arm_outcomes(&self, q: usize) -> Vec<f64> {
        self.y
            .iter()
            .zip(self.assignment.arms())
            .filter(|(_, &a)| a == q)
            .map(|(&v, _)| v)
            .collect()
    }
}

/// Reveal `y_i = Y_i(z_i)` for every unit.
pub fn observe(table: &ScienceTable, a: &Assignment) -> Result<ObservedData> {
    if table.n() != a.n() || table.q() != a.q() {
        return Err(Error::DimensionMismatch(format!(
            "table is {}x{} but assignment has {} units over {} arms",
            table.n(),
            table.q(),
            a.n(),
            a.q()
        )));
    }
    let y = (0..a.n()).map(|i| table.get(i, a.arm(i))).collect();
    Ok(ObservedData {
        y,
        assignment: a.clone(),
        x: None,
    })
}

/// Finite-population summaries of a science table.
#[derive(Debug, Clone, PartialEq)]
pub struct FpMoments {
    /// `Ybar(q)` per arm.
    pub means: DVector<f64>,
    /// `S(q, q')`, divisor `N - 1`.
    pub cov: DMatrix<f64>,
    /// `tau = F' Ybar`.
    pub tau: DVector<f64>,
    /// `F' S F`, the covariance of the individual effects.
    pub effect_cov: DMatrix<f64>,
}

pub fn fp_moments(table: &ScienceTable, f: &ContrastMatrix) -> Result<FpMoments> {
    if f.q() != table.q() {
        return Err(Error::DimensionMismatch(format!(
            "contrast has {} rows for {} arms",
            f.q(),
            table.q()
        )));
    }
    let y = table.outcomes();
    let means = y.row_mean().transpose();
    let cov = linalg::row_covariance(y);
    let fm = f.matrix();
    let tau = fm.transpose() * &means;
    let effect_cov = fm.transpose() * &cov * fm;
    Ok(FpMoments {
        means,
        cov,
        tau,
        effect_cov,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorialEffects {
    Main,
    MainAndTwoWay,
}

/// Factorial effect contrasts for a `2^K` design.
///
/// Arm `q` (0-based) sets factor `k` to high when bit `k` of `q` is one.
/// Entries are `+-(Q/2)^{-1}` and the columns are mutually orthogonal.
pub fn factorial_contrasts(k: usize, which: FactorialEffects) -> Result<ContrastMatrix> {
    if !(1..=20).contains(&k) {
        return Err(Error::InvalidInput(format!("factor count {k} outside 1..=20")));
    }
    let q = 1usize << k;
    let mut effects: Vec<Vec<usize>> = (0..k).map(|j| vec![j]).collect();
    if which == FactorialEffects::MainAndTwoWay {
        for a in 0..k {
            for b in a + 1..k {
                effects.push(vec![a, b]);
            }
        }
    }
    let h = effects.len();
    if q.saturating_mul(h) > 50_000_000 {
        return Err(Error::InvalidInput(format!(
            "{q}x{h} contrast matrix exceeds the memory guard"
        )));
    }
    let scale = 2.0 / q as f64;
    let f = DMatrix::from_fn(q, h, |row, col| {
        let sign: i32 = effects[col]
            .iter()
            .map(|&bit| if (row >> bit) & 1 == 1 { 1 } else { -1 })
            .product();
        sign as f64 * scale
    });
    Ok(ContrastMatrix { f })
}
