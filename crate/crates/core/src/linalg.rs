//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Condition-number guard for inverting covariance-type matrices.
pub const COND_MAX: f64 = 1e12;

/// Relative singular-value threshold used for rank decisions.
pub const RANK_TOL: f64 = 1e-10;

/// Eigenvalue floor, relative to the trace, for matrix square roots.
pub const SQRT_FLOOR: f64 = 1e-12;

fn describe_direction(v: &DVector<f64>, names: &dyn Fn(usize) -> String) -> String {
    let max = v.amax();
    let mut parts = Vec::new();
    for (j, c) in v.iter().enumerate() {
        if c.abs() > 1e-3 * max {
            parts.push(format!("{:+.3}*{}", c, names(j)));
        }
    }
    parts.join(" ")
}

/// Inverse of a symmetric positive definite matrix via its eigendecomposition.
///
/// Fails when the condition number exceeds [`COND_MAX`]; the message names the
/// near-null direction using `names` for the coordinates.
pub fn spd_inverse(a: &DMatrix<f64>, names: &dyn Fn(usize) -> String) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(a.clone());
    let (imin, lmin) = eig.eigenvalues.argmin();
    let lmax = eig.eigenvalues.max();
    if !(lmax > 0.0) || lmin <= lmax / COND_MAX {
        let dir = describe_direction(&eig.eigenvectors.column(imin).into_owned(), names);
        return Err(Error::Singular(format!(
            "condition number exceeds {COND_MAX:e}; near-collinear combination {dir} (eigenvalue {lmin:.3e})"
        )));
    }
    let inv_vals = eig.eigenvalues.map(|l| 1.0 / l);
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&inv_vals) * eig.eigenvectors.transpose())
}

/// Inverse of the positive semidefinite square root.
pub fn psd_inverse_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(a.clone());
    let floor = SQRT_FLOOR * a.trace().abs();
    if eig.eigenvalues.iter().any(|&l| l <= floor) {
        return Err(Error::Singular(format!(
            "matrix has an eigenvalue below {floor:.3e}; inverse square root undefined"
        )));
    }
    let vals = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose())
}

/// Sample covariance of the rows of `x` (divisor `n - 1`).
pub fn row_covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mean = x.row_mean();
    let mut c = x.clone();
    for mut row in c.row_iter_mut() {
        row -= &mean;
    }
    c.transpose() * &c / (n as f64 - 1.0)
}

/// Numerical rank by singular values relative to the largest one.
pub fn numerical_rank(a: &DMatrix<f64>) -> usize {
    let sv = a.singular_values();
    let smax = sv.max();
    if smax <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * smax).count()
}

#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub coef: DVector<f64>,
    pub residuals: DVector<f64>,
    pub leverages: DVector<f64>,
}

/// Ordinary least squares through the SVD. Rank deficiency is an error.
pub fn least_squares(design: &DMatrix<f64>, y: &DVector<f64>, label: &str) -> Result<LeastSquares> {
    let (n, p) = design.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{label}: {n} design rows vs {} responses",
            y.len()
        )));
    }
    if n < p {
        return Err(Error::RankDeficient(format!(
            "{label}: {n} observations for {p} coefficients"
        )));
    }
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > RANK_TOL * smax)
        .count();
    if rank < p {
        return Err(Error::RankDeficient(format!(
            "{label}: design has rank {rank} < {p} columns"
        )));
    }
    let coef = svd
        .solve(y, 0.0)
        .map_err(|e| Error::RankDeficient(format!("{label}: {e}")))?;
    let residuals = y - design * &coef;
    let u = svd.u.as_ref().expect("u requested");
    let leverages = DVector::from_iterator(n, u.row_iter().map(|r| r.norm_squared()));
    Ok(LeastSquares {
        coef,
        residuals,
        leverages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spd_inverse_roundtrip() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let inv = spd_inverse(&a, &|j| format!("x{}", j + 1)).unwrap();
        assert!((&a * inv - DMatrix::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn spd_inverse_names_collinearity() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let err = spd_inverse(&a, &|j| format!("x{}", j + 1)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("x1") && msg.contains("x2"), "{msg}");
    }

    #[test]
    fn inverse_sqrt_squares_to_inverse() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let s = psd_inverse_sqrt(&a).unwrap();
        assert!((&s * &a * &s - DMatrix::identity(2, 2)).norm() < 1e-13);
    }

    #[test]
    fn least_squares_orthogonality_and_leverage() {
        let design = DMatrix::from_row_slice(5, 2, &[1., 0., 1., 1., 1., 2., 1., 3., 1., 5.]);
        let y = DVector::from_vec(vec![1.0, 2.5, 2.9, 4.2, 6.1]);
        let fit = least_squares(&design, &y, "test").unwrap();
        let ortho = design.transpose() * &fit.residuals;
        assert!(ortho.amax() < 1e-12);
        assert!((fit.leverages.sum() - 2.0).abs() < 1e-12);
        assert!(fit.leverages.iter().all(|&h| (0.0..=1.0).contains(&h)));
    }

    #[test]
    fn least_squares_rejects_collinear() {
        let design = DMatrix::from_row_slice(3, 2, &[1., 2., 2., 4., 3., 6.]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(matches!(
            least_squares(&design, &y, "t"),
            Err(Error::RankDeficient(_))
        ));
    }
}
