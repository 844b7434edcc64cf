//! Linear permutational statistics `Gamma = sum_i M(i, pi(i))`: centering,
//! exact moments, normalization, central-limit diagnostics, Berry-Esseen
//! magnitudes, and Monte Carlo Kolmogorov distances.
//!
//! Bound magnitudes omit their unspecified constants: `C` for the univariate
//! bound, `C_H` for the multivariate bound, and `C` and `sigma_F` for the
//! factorial bound.

use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::Serialize;

use crate::designs::RngSeed;
use crate::dist;
use crate::error::{Error, Result};
use crate::linalg;
use crate::par;
use crate::science::{CovariateMatrix, ScienceTable};

/// Largest `N` whose `N!` permutations are enumerated.
pub const PERM_ENUMERATION_MAX: usize = 7;

/// Tolerance for the normalization checks, relative to the kernel scale.
pub const NORMALIZATION_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct PermKernel {
    m: DMatrix<f64>,
}

fn validate_square(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "kernel must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() < 2 {
        return Err(Error::InvalidInput("kernel needs N >= 2".into()));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("kernel has non-finite entries".into()));
    }
    Ok(())
}

fn read_dense_csv<R: Read>(reader: R) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("row {}: '{s}' is not a number", r + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Parse("kernel rows have different lengths".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

impl PermKernel {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        validate_square(&m)?;
        Ok(Self { m })
    }

    /// `M(i, j) = a(i) b(j)`.
    pub fn rank_one(a: &[f64], b: &[f64]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch(format!(
                "score vectors of length {} and {}",
                a.len(),
                b.len()
            )));
        }
        Self::new(DMatrix::from_fn(a.len(), a.len(), |i, j| a[i] * b[j]))
    }

    /// Dense square matrix from headerless CSV.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        Self::new(read_dense_csv(reader)?)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Self::from_csv(f)
    }

    pub fn n(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    /// `sum_i M(i, perm[i])`.
    pub fn statistic(&self, perm: &[usize]) -> f64 {
        perm.iter().enumerate().map(|(i, &j)| self.m[(i, j)]).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiKernel {
    ms: Vec<DMatrix<f64>>,
}

impl MultiKernel {
    pub fn new(ms: Vec<DMatrix<f64>>) -> Result<Self> {
        let first = ms
            .first()
            .ok_or_else(|| Error::InvalidInput("at least one kernel coordinate required".into()))?;
        let n = first.nrows();
        for m in &ms {
            validate_square(m)?;
            if m.nrows() != n {
                return Err(Error::DimensionMismatch("kernel coordinates differ in size".into()));
            }
        }
        Ok(Self { ms })
    }

    /// One coordinate per CSV source.
    pub fn from_csv_paths(paths: &[&Path]) -> Result<Self> {
        let ms = paths
            .iter()
            .map(|p| PermKernel::from_csv_path(p).map(|k| k.m))
            .collect::<Result<Vec<_>>>()?;
        Self::new(ms)
    }

    pub fn n(&self) -> usize {
        self.ms[0].nrows()
    }

    pub fn h(&self) -> usize {
        self.ms.len()
    }

    pub fn coordinate(&self, h: usize) -> &DMatrix<f64> {
        &self.ms[h]
    }

    pub fn coordinates(&self) -> &[DMatrix<f64>] {
        &self.ms
    }

    pub fn statistic(&self, perm: &[usize]) -> DVector<f64> {
        DVector::from_iterator(
            self.h(),
            self.ms
                .iter()
                .map(|m| perm.iter().enumerate().map(|(i, &j)| m[(i, j)]).sum::<f64>()),
        )
    }
}

impl From<PermKernel> for MultiKernel {
    fn from(k: PermKernel) -> Self {
        Self { ms: vec![k.m] }
    }
}

/// Remove row, column and grand means.
pub fn center_kernel(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows() as f64;
    let rows: Vec<f64> = m.row_iter().map(|r| r.sum()).collect();
    let cols: Vec<f64> = m.column_iter().map(|c| c.sum()).collect();
    let total: f64 = rows.iter().sum();
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
        m[(i, j)] - rows[i] / n - cols[j] / n + total / (n * n)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PermMoments {
    pub mean: f64,
    pub variance: f64,
}

pub fn perm_stat_moments(k: &PermKernel) -> PermMoments {
    let n = k.n() as f64;
    let c = center_kernel(&k.m);
    PermMoments {
        mean: k.m.sum() / n,
        variance: c.norm_squared() / (n - 1.0),
    }
}

/// Mean vector and covariance matrix of a multivariate statistic.
pub fn multi_moments(k: &MultiKernel) -> (DVector<f64>, DMatrix<f64>) {
    let n = k.n() as f64;
    let centered: Vec<_> = k.ms.iter().map(center_kernel).collect();
    let mean = DVector::from_iterator(k.h(), k.ms.iter().map(|m| m.sum() / n));
    let cov = DMatrix::from_fn(k.h(), k.h(), |a, b| centered[a].dot(&centered[b]) / (n - 1.0));
    (mean, cov)
}

/// Visit every permutation of `0..n` (Heap's algorithm).
pub fn for_each_permutation(n: usize, mut f: impl FnMut(&[usize])) -> Result<()> {
    if n > PERM_ENUMERATION_MAX {
        return Err(Error::SupportTooLarge {
            size: (1..=n).map(|v| v as f64).product(),
            cap: (1..=PERM_ENUMERATION_MAX).map(|v| v as f64).product(),
        });
    }
    let mut p: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    f(&p);
    let mut i = 1;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                p.swap(0, i);
            } else {
                p.swap(c[i], i);
            }
            f(&p);
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(())
}

/// Moments of `Gamma` by enumerating all `N!` permutations.
pub fn enumerate_moments(k: &PermKernel) -> Result<PermMoments> {
    let (mut s1, mut s2, mut count) = (0.0, 0.0, 0usize);
    for_each_permutation(k.n(), |p| {
        let g = k.statistic(p);
        s1 += g;
        s2 += g * g;
        count += 1;
    })?;
    let mean = s1 / count as f64;
    Ok(PermMoments {
        mean,
        variance: s2 / count as f64 - mean * mean,
    })
}

/// Rank-one kernel whose statistic is the mean of `a` over a simple random
/// sample of `n1` units.
pub fn build_srs_kernel(a: &[f64], n1: usize) -> Result<PermKernel> {
    let n = a.len();
    if n1 == 0 || n1 >= n {
        return Err(Error::InvalidInput(format!(
            "sample size {n1} must lie in 1..{n}"
        )));
    }
    let b: Vec<f64> = (0..n).map(|j| if j < n1 { 1.0 / n1 as f64 } else { 0.0 }).collect();
    PermKernel::rank_one(a, &b)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CltReport {
    pub epsilons: Vec<f64>,
    /// Share of the centered sum of squares from entries exceeding
    /// `eps sqrt(Var)`, one value per epsilon.
    pub lindeberg: Vec<f64>,
    pub hoeffding_r3: f64,
    pub hoeffding_r4: f64,
    /// `max M~^2 / (N^{-1} sum M~^2)`.
    pub max_ratio: f64,
}

fn clt_report_centered(c: &DMatrix<f64>, eps: &[f64]) -> Result<CltReport> {
    let n = c.nrows() as f64;
    let ss = c.norm_squared();
    let var = ss / (n - 1.0);
    if !(var > 1e-300) || ss <= 1e-24 * c.amax().powi(2) * n * n {
        return Err(Error::Degenerate("permutation statistic has zero variance".into()));
    }
    let lindeberg = eps
        .iter()
        .map(|&e| {
            let cut = e * var.sqrt();
            c.iter().filter(|v| v.abs() > cut).map(|v| v * v).sum::<f64>() / ss
        })
        .collect();
    let hoeffding = |r: i32| n.powf(r as f64 / 2.0 - 1.0) * c.iter().map(|v| v.powi(r)).sum::<f64>().abs() / ss.powf(r as f64 / 2.0);
    Ok(CltReport {
        epsilons: eps.to_vec(),
        lindeberg,
        hoeffding_r3: hoeffding(3),
        hoeffding_r4: hoeffding(4),
        max_ratio: c.iter().map(|v| v * v).fold(0.0, f64::max) / (ss / n),
    })
}

pub fn clt_condition_report(k: &PermKernel, eps: &[f64]) -> Result<CltReport> {
    clt_report_centered(&center_kernel(&k.m), eps)
}

/// One report per coordinate.
pub fn clt_condition_report_multi(k: &MultiKernel, eps: &[f64]) -> Result<Vec<CltReport>> {
    k.ms.iter().map(|m| clt_report_centered(&center_kernel(m), eps)).collect()
}

/// Center and rescale so that the sum of squares is `N - 1`; the statistic
/// then has mean 0 and variance 1.
pub fn normalize_kernel(k: &PermKernel) -> Result<PermKernel> {
    let c = center_kernel(&k.m);
    let v = c.norm_squared() / (k.n() as f64 - 1.0);
    if !(v > 0.0) || v.sqrt() <= 1e-12 * k.m.amax() {
        return Err(Error::Singular("permutation statistic has zero variance".into()));
    }
    Ok(PermKernel { m: c / v.sqrt() })
}

/// Center every coordinate and mix with `Var(Gamma)^{-1/2}` so the statistic
/// has mean zero and identity covariance.
pub fn normalize_multi(k: &MultiKernel) -> Result<MultiKernel> {
    let (_, cov) = multi_moments(k);
    let eig = cov.clone().symmetric_eigen();
    let (lmin, lmax) = (eig.eigenvalues.min(), eig.eigenvalues.max());
    if !(lmax > 0.0) || lmin <= lmax / linalg::COND_MAX {
        return Err(Error::Singular(format!(
            "covariance of the statistic has condition number above {:e}",
            linalg::COND_MAX
        )));
    }
    let w = linalg::psd_inverse_sqrt(&cov)?;
    let centered: Vec<_> = k.ms.iter().map(center_kernel).collect();
    let n = k.n();
    let ms = (0..k.h())
        .map(|h| {
            let mut out = DMatrix::zeros(n, n);
            for (g, c) in centered.iter().enumerate() {
                out += c * w[(h, g)];
            }
            out
        })
        .collect();
    Ok(MultiKernel { ms })
}

/// Whether the coordinates satisfy the normalizing conditions: zero row,
/// column and grand sums, sum of squares `N - 1`, and mutual orthogonality.
pub fn is_normalized(k: &MultiKernel, tol: f64) -> bool {
    let n = k.n() as f64;
    let scale = (n - 1.0).max(1.0);
    for (h, m) in k.ms.iter().enumerate() {
        let sums_ok = m.row_iter().all(|r| r.sum().abs() <= tol * scale)
            && m.column_iter().all(|c| c.sum().abs() <= tol * scale);
        if !sums_ok || (m.norm_squared() - (n - 1.0)).abs() > tol * scale {
            return false;
        }
        for g in 0..h {
            if m.dot(&k.ms[g]).abs() > tol * scale {
                return false;
            }
        }
    }
    true
}

fn prepared(k: &MultiKernel, auto_normalize: bool) -> Result<MultiKernel> {
    if is_normalized(k, NORMALIZATION_TOL) {
        Ok(k.clone())
    } else if auto_normalize {
        normalize_multi(k)
    } else {
        Err(Error::InvalidInput(
            "kernel is not normalized; normalize it first or enable auto-normalization".into(),
        ))
    }
}

/// `N^{-1} sum_{i,j} |M(i, j)|^3` for a normalized kernel (constant `C`
/// omitted).
pub fn bolthausen_bound(k: &PermKernel, auto_normalize: bool) -> Result<f64> {
    multivariate_bound(&MultiKernel::from(k.clone()), auto_normalize)
}

/// `N^{-1} sum_{i,j} (sum_h M_h(i, j)^2)^{3/2}` for normalized coordinates
/// (dimension constant `C_H` omitted).
pub fn multivariate_bound(k: &MultiKernel, auto_normalize: bool) -> Result<f64> {
    let k = prepared(k, auto_normalize)?;
    let n = k.n();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let s: f64 = k.ms.iter().map(|m| m[(i, j)].powi(2)).sum();
            total += s.powf(1.5);
        }
    }
    Ok(total / n as f64)
}

/// Conjectured dimension-explicit variant: `H^{1/4}` times
/// [`multivariate_bound`]. Not a proven bound.
pub fn raic_conjectured_bound(k: &MultiKernel, auto_normalize: bool) -> Result<f64> {
    Ok((k.h() as f64).powf(0.25) * multivariate_bound(k, auto_normalize)?)
}

/// `max_{q,i} |Y_i(q) - Ybar(q)| / min_q S(q,q)^{1/2} * sqrt(K^2 / N)` for a
/// `2^K` factorial science table (constants `C` and `sigma_F` omitted).
pub fn factorial_beb_magnitude(table: &ScienceTable) -> Result<f64> {
    let q = table.q();
    if !q.is_power_of_two() || q < 2 {
        return Err(Error::InvalidInput(format!("{q} arms is not a power of two")));
    }
    let k = q.trailing_zeros() as f64;
    let y = table.outcomes();
    let means = y.row_mean();
    let cov = linalg::row_covariance(y);
    let mut max_dev = 0.0f64;
    let mut min_var = f64::INFINITY;
    for arm in 0..q {
        min_var = min_var.min(cov[(arm, arm)]);
        for i in 0..table.n() {
            max_dev = max_dev.max((y[(i, arm)] - means[arm]).abs());
        }
    }
    if !(min_var > 0.0) {
        return Err(Error::Degenerate("an arm has zero outcome variance".into()));
    }
    Ok(max_dev / min_var.sqrt() * (k * k / table.n() as f64).sqrt())
}

/// Berry-Esseen magnitude for rerandomization, built from
/// `u_i = (r0 Y_i(1) + r1 Y_i(0), X_i)`.
pub fn gamma_n(table: &ScienceTable, x: &CovariateMatrix, r1: f64) -> Result<f64> {
    if table.q() != 2 {
        return Err(Error::InvalidInput("two arms required".into()));
    }
    if x.n() != table.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} covariate rows for {} units",
            x.n(),
            table.n()
        )));
    }
    if !(r1 > 0.0 && r1 < 1.0) {
        return Err(Error::InvalidInput(format!("treated share {r1} outside (0, 1)")));
    }
    let r0 = 1.0 - r1;
    let (n, k) = (table.n(), x.k());
    let u = DMatrix::from_fn(n, k + 1, |i, j| {
        if j == 0 {
            r0 * table.get(i, 1) + r1 * table.get(i, 0)
        } else {
            x.matrix()[(i, j - 1)]
        }
    });
    let w = linalg::psd_inverse_sqrt(&linalg::row_covariance(&u))?;
    let mean = u.row_mean();
    let mut total = 0.0;
    for i in 0..n {
        let d = (u.row(i) - &mean).transpose();
        total += (&w * d).norm().powi(3);
    }
    let nf = n as f64;
    Ok(((k + 1) as f64).powf(0.25) / (nf * r1 * r0).sqrt() * total / nf)
}

/// Minimum number of draws accepted by [`empirical_kolmogorov`].
pub const MIN_KS_DRAWS: usize = 100;

/// Standardized statistic under `draws` random permutations; draw `r` uses
/// stream `r` of `seed`.
pub fn sample_standardized(k: &PermKernel, draws: usize, seed: RngSeed) -> Result<Vec<f64>> {
    let mom = perm_stat_moments(k);
    if !(mom.variance > 0.0) {
        return Err(Error::Degenerate("permutation statistic has zero variance".into()));
    }
    let sd = mom.variance.sqrt();
    let n = k.n();
    Ok(par::map(draws, |r| {
        let mut p: Vec<usize> = (0..n).collect();
        p.shuffle(&mut seed.with_stream(r as u64).rng());
        (k.statistic(&p) - mom.mean) / sd
    }))
}

/// Kolmogorov distance between the standardized statistic, estimated from
/// `draws` random permutations, and the standard normal.
pub fn empirical_kolmogorov(k: &PermKernel, draws: usize, seed: RngSeed) -> Result<f64> {
    if draws < MIN_KS_DRAWS {
        return Err(Error::InvalidInput(format!(
            "at least {MIN_KS_DRAWS} draws required, got {draws}"
        )));
    }
    let mut s = sample_standardized(k, draws, seed)?;
    Ok(dist::ks_normal(&mut s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_matrix(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = RngSeed::new(seed).rng();
        DMatrix::from_fn(n, n, |_, _| rng.random_range(-2.0..2.0))
    }

    #[test]
    fn centering_properties() {
        let m = random_matrix(6, 1);
        let c = center_kernel(&m);
        assert!(c.row_iter().all(|r| r.sum().abs() < 1e-12));
        assert!(c.column_iter().all(|r| r.sum().abs() < 1e-12));
        assert!((center_kernel(&c) - &c).amax() < 1e-14);
        assert!(c.norm() <= m.norm());
        assert!(center_kernel(&DMatrix::from_element(4, 4, 3.0)).amax() < 1e-15);
    }

    #[test]
    fn rank_one_centering_factorizes() {
        let a = [1.0, 4.0, -2.0, 0.5];
        let b = [3.0, 0.0, 1.0, -1.0];
        let c = center_kernel(PermKernel::rank_one(&a, &b).unwrap().matrix());
        let (am, bm) = (a.iter().sum::<f64>() / 4.0, b.iter().sum::<f64>() / 4.0);
        for i in 0..4 {
            for j in 0..4 {
                assert!((c[(i, j)] - (a[i] - am) * (b[j] - bm)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn moments_match_enumeration() {
        for s in 0..5 {
            let k = PermKernel::new(random_matrix(4 + s as usize % 3, s)).unwrap();
            let a = perm_stat_moments(&k);
            let b = enumerate_moments(&k).unwrap();
            assert!((a.mean - b.mean).abs() < 1e-10);
            assert!((a.variance - b.variance).abs() < 1e-10);
        }
        assert!(enumerate_moments(&PermKernel::new(random_matrix(8, 0)).unwrap()).is_err());
    }

    #[test]
    fn heap_visits_every_permutation_once() {
        let mut seen = std::collections::HashSet::new();
        for_each_permutation(5, |p| {
            assert!(seen.insert(p.to_vec()));
        })
        .unwrap();
        assert_eq!(seen.len(), 120);
    }

    #[test]
    fn srs_kernel_moments() {
        let k = build_srs_kernel(&[0.0, 1.0, 2.0, 3.0], 2).unwrap();
        let m = perm_stat_moments(&k);
        assert!((m.mean - 1.5).abs() < 1e-15);
        assert!((m.variance - 5.0 / 12.0).abs() < 1e-14);
        assert_eq!(perm_stat_moments(&build_srs_kernel(&[2.0; 5], 3).unwrap()).variance, 0.0);
        // N1 = N - 1 versus N1 = 1: (1/(N-1) - 1/N) versus (1 - 1/N), ratio 1/(N-1)^2
        let a = [1.0, 5.0, 2.0, 7.0, 3.0];
        let hi = perm_stat_moments(&build_srs_kernel(&a, 4).unwrap()).variance;
        let lo = perm_stat_moments(&build_srs_kernel(&a, 1).unwrap()).variance;
        assert!((hi / lo - 1.0 / 16.0).abs() < 1e-13);
        assert!(build_srs_kernel(&a, 5).is_err());
    }

    #[test]
    fn rank_one_variance_formula() {
        let a = [1.0, 4.0, -2.0, 0.5, 3.0];
        let b = [3.0, 0.0, 1.0, -1.0, 2.0];
        let ss = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>()
        };
        let m = perm_stat_moments(&PermKernel::rank_one(&a, &b).unwrap());
        assert!((m.variance - ss(&a) * ss(&b) / 4.0).abs() < 1e-12);
    }

    #[test]
    fn clt_report_cases() {
        let n = 50;
        let mut m = DMatrix::zeros(n, n);
        m[(0, 0)] = 1.0;
        let spike = clt_condition_report(&PermKernel::new(m).unwrap(), &[0.1]).unwrap();
        assert!(spike.lindeberg[0] > 0.5);

        let a: Vec<f64> = (0..n).map(|i| (i % 3) as f64).collect();
        let b: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        let rep = clt_condition_report(&PermKernel::rank_one(&a, &b).unwrap(), &[0.1, 1.0, 10.0]).unwrap();
        assert!(rep.lindeberg.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(rep.lindeberg[2], 0.0);

        // rank-one factorization of the Hoeffding ratio
        let part = |v: &[f64], r: i32| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let sr = v.iter().map(|x| (x - m).powi(r)).sum::<f64>();
            let s2 = v.iter().map(|x| (x - m).powi(2)).sum::<f64>();
            sr.abs() / s2.powf(r as f64 / 2.0)
        };
        let want = (n as f64) * part(&a, 4) * part(&b, 4);
        assert!((rep.hoeffding_r4 - want).abs() < 1e-10 * want);

        assert!(matches!(
            clt_condition_report(&PermKernel::new(DMatrix::from_element(3, 3, 1.0)).unwrap(), &[0.1]),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn max_ratio_scales_inverse_n_for_bounded_kernels() {
        let ratio = |n: usize| {
            let a: Vec<f64> = (0..n).map(|i| (i % 3) as f64).collect();
            let k = build_srs_kernel(&a, n / 2).unwrap();
            clt_condition_report(&k, &[0.1]).unwrap().max_ratio
        };
        let (r1, r2) = (ratio(60), ratio(240));
        assert!((r1 / r2 - 4.0).abs() < 0.3);
    }

    #[test]
    fn normalization_univariate() {
        let k = PermKernel::new(random_matrix(7, 3)).unwrap();
        let nk = normalize_kernel(&k).unwrap();
        assert!(is_normalized(&MultiKernel::from(nk.clone()), 1e-10));
        let m = perm_stat_moments(&nk);
        assert!(m.mean.abs() < 1e-12 && (m.variance - 1.0).abs() < 1e-12);
        let again = normalize_kernel(&nk).unwrap();
        assert!((again.matrix() - nk.matrix()).amax() < 1e-12);
    }

    #[test]
    fn normalization_multivariate() {
        let k = MultiKernel::new(vec![random_matrix(6, 4), random_matrix(6, 5)]).unwrap();
        let nk = normalize_multi(&k).unwrap();
        assert!(is_normalized(&nk, 1e-10));
        let (mean, cov) = multi_moments(&nk);
        assert!(mean.amax() < 1e-12);
        assert!((cov - DMatrix::identity(2, 2)).amax() < 1e-10);
        let m = random_matrix(6, 6);
        assert!(matches!(normalize_multi(&MultiKernel::new(vec![m.clone(), m]).unwrap()), Err(Error::Singular(_))));
    }

    #[test]
    fn bounds() {
        // +-c pattern: a = b = (+1, -1, ...) gives entries of equal magnitude
        let n = 8;
        let s: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let k = normalize_kernel(&PermKernel::rank_one(&s, &s).unwrap()).unwrap();
        let c = k.matrix()[(0, 0)].abs();
        let nf = n as f64;
        assert!((c * c * nf * nf - (nf - 1.0)).abs() < 1e-12);
        let b = bolthausen_bound(&k, false).unwrap();
        assert!((b - nf * c.powi(3)).abs() < 1e-12);

        let raw = PermKernel::new(random_matrix(5, 9)).unwrap();
        assert!(bolthausen_bound(&raw, false).is_err());
        let auto = bolthausen_bound(&raw, true).unwrap();
        assert!((auto - bolthausen_bound(&normalize_kernel(&raw).unwrap(), false).unwrap()).abs() < 1e-12);
        let one = multivariate_bound(&MultiKernel::from(raw.clone()), true).unwrap();
        assert!((one - auto).abs() < 1e-15);

        let mk = normalize_multi(&MultiKernel::new(vec![random_matrix(5, 10), random_matrix(5, 11)]).unwrap()).unwrap();
        let mut direct = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                let s = mk.coordinate(0)[(i, j)].powi(2) + mk.coordinate(1)[(i, j)].powi(2);
                direct += s * s.sqrt();
            }
        }
        assert!((multivariate_bound(&mk, false).unwrap() - direct / 5.0).abs() < 1e-12);
        let raic = raic_conjectured_bound(&mk, false).unwrap();
        assert!((raic - 2f64.powf(0.25) * direct / 5.0).abs() < 1e-12);
    }

    #[test]
    fn bolthausen_decays_for_bounded_family_and_not_for_spike() {
        let bounded = |n: usize| {
            let a: Vec<f64> = (0..n).map(|i| (i % 3) as f64).collect();
            bolthausen_bound(&build_srs_kernel(&a, n / 2).unwrap(), true).unwrap()
        };
        let spiked = |n: usize| {
            let mut a = vec![0.0; n];
            a[0] = 1.0;
            bolthausen_bound(&build_srs_kernel(&a, n / 2).unwrap(), true).unwrap()
        };
        let slope = (bounded(800).ln() - bounded(50).ln()) / (800f64.ln() - 50f64.ln());
        assert!((-0.6..=-0.4).contains(&slope), "slope {slope}");
        assert!(spiked(800) > 0.5 * spiked(50));
    }

    #[test]
    fn factorial_magnitude() {
        // K = 2, N = 4. Arm columns: (0,1,2,3), (0,0,0,4), (1,1,3,3), (2,0,2,0)
        let y = DMatrix::from_row_slice(4, 4, &[
            0.0, 0.0, 1.0, 2.0,
            1.0, 0.0, 1.0, 0.0,
            2.0, 0.0, 3.0, 2.0,
            3.0, 4.0, 3.0, 0.0,
        ]);
        let table = ScienceTable::new(y).unwrap();
        // max |dev| = 3 (arm 2, unit 4); variances 5/3, 4, 4/3, 4/3 -> min 4/3
        let want = 3.0 / (4.0f64 / 3.0).sqrt() * (4.0f64 / 4.0).sqrt();
        assert!((factorial_beb_magnitude(&table).unwrap() - want).abs() < 1e-13);
        let three = ScienceTable::from_arms(&[vec![1.0, 2.0], vec![0.0, 1.0], vec![3.0, 1.0]]).unwrap();
        assert!(factorial_beb_magnitude(&three).is_err());
    }

    #[test]
    fn gamma_n_hand_case_and_invariance() {
        let y0 = [0.0, 1.0, 3.0, 2.0];
        let y1 = [1.0, 1.0, 4.0, 6.0];
        let xs = [1.0, 0.0, 2.0, 5.0];
        let table = ScienceTable::two_arm(&y0, &y1).unwrap();
        let x = CovariateMatrix::from_rows(&xs.iter().map(|&v| vec![v]).collect::<Vec<_>>()).unwrap();
        let g = gamma_n(&table, &x, 0.5).unwrap();

        // Direct: u = (0.5 (y1 + y0), x); Mahalanobis norm via explicit 2x2 algebra.
        let u: Vec<[f64; 2]> = (0..4).map(|i| [0.5 * (y1[i] + y0[i]), xs[i]]).collect();
        let mean = [u.iter().map(|r| r[0]).sum::<f64>() / 4.0, u.iter().map(|r| r[1]).sum::<f64>() / 4.0];
        let (mut s11, mut s12, mut s22) = (0.0, 0.0, 0.0);
        for r in &u {
            s11 += (r[0] - mean[0]).powi(2) / 3.0;
            s12 += (r[0] - mean[0]) * (r[1] - mean[1]) / 3.0;
            s22 += (r[1] - mean[1]).powi(2) / 3.0;
        }
        let det = s11 * s22 - s12 * s12;
        let mut total = 0.0;
        for r in &u {
            let d = [r[0] - mean[0], r[1] - mean[1]];
            // ||S^{-1/2} d||^2 = d' S^{-1} d
            let q = (s22 * d[0] * d[0] - 2.0 * s12 * d[0] * d[1] + s11 * d[1] * d[1]) / det;
            total += q.powf(1.5);
        }
        let want = 2f64.powf(0.25) / (4.0f64 * 0.25).sqrt() * total / 4.0;
        assert!((g - want).abs() < 1e-12 * want);

        let recoded = CovariateMatrix::from_rows(&xs.iter().map(|&v| vec![3.0 - 2.0 * v]).collect::<Vec<_>>()).unwrap();
        assert!((gamma_n(&table, &recoded, 0.5).unwrap() / g - 1.0).abs() < 1e-8);
    }

    #[test]
    fn kolmogorov_cases() {
        let k = build_srs_kernel(&(0..40).map(|i| (i % 3) as f64).collect::<Vec<_>>(), 20).unwrap();
        assert!(empirical_kolmogorov(&k, 99, RngSeed::new(0)).is_err());
        let a = empirical_kolmogorov(&k, 2000, RngSeed::new(1)).unwrap();
        let b = empirical_kolmogorov(&k, 2000, RngSeed::new(1)).unwrap();
        assert_eq!(a, b);

        let two_point = |n: usize| {
            let a: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
            empirical_kolmogorov(&build_srs_kernel(&a, n / 2).unwrap(), 4000, RngSeed::new(2)).unwrap()
        };
        assert!(two_point(1000) < two_point(10));
    }

    #[test]
    fn csv_loading() {
        let k = PermKernel::from_csv("1,2\n3,4\n".as_bytes()).unwrap();
        assert_eq!(k.matrix()[(1, 0)], 3.0);
        assert!(matches!(PermKernel::from_csv("1,2\n3\n".as_bytes()), Err(Error::Parse(_)) | Err(Error::InvalidInput(_))));
        assert!(matches!(PermKernel::from_csv("1,x\n3,4\n".as_bytes()), Err(Error::Parse(_))));
        assert!(PermKernel::from_csv("1,2,3\n4,5,6\n".as_bytes()).is_err());
    }
}
