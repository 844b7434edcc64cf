//! Normal and chi-square distribution functions and quantiles.
//!
//! CDFs come from the regularized incomplete gamma and complementary error
//! functions; quantiles are refined by safeguarded Newton iterations so they
//! are accurate to roughly machine precision in the relative sense.

use libm::erfc;
use statrs::function::erf::erfc_inv;
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::error::{Error, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidInput(format!("probability {p} outside (0, 1)")));
    }
    let mut x = -SQRT_2 * erfc_inv(2.0 * p);
    for _ in 0..3 {
        let (f, target) = if p < 0.5 {
            (normal_cdf(x), p)
        } else {
            (-0.5 * erfc(x / SQRT_2), -(1.0 - p))
        };
        let d = normal_pdf(x);
        if d <= 0.0 {
            break;
        }
        let step = (f - target) / d;
        x -= step;
        if step.abs() <= 1e-16 * x.abs().max(1.0) {
            break;
        }
    }
    Ok(x)
}

/// Upper `alpha/2` quantile `z_{alpha/2}` of the standard normal.
pub fn z_two_sided(alpha: f64) -> Result<f64> {
    normal_quantile(1.0 - alpha / 2.0)
}

fn check_dof(k: f64) -> Result<()> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::InvalidInput(format!("degrees of freedom {k} must be positive")));
    }
    Ok(())
}

pub fn chi2_cdf(x: f64, k: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x.is_infinite() {
        1.0
    } else {
        gamma_lr(k / 2.0, x / 2.0)
    }
}

pub fn chi2_sf(x: f64, k: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x.is_infinite() {
        0.0
    } else {
        gamma_ur(k / 2.0, x / 2.0)
    }
}

pub fn chi2_pdf(x: f64, k: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let h = k / 2.0;
    ((h - 1.0) * x.ln() - x / 2.0 - h * std::f64::consts::LN_2 - ln_gamma(h)).exp()
}

/// Chi-square quantile: the `a` with `P(chi2_k <= a) = p`.
pub fn chi2_quantile(p: f64, k: f64) -> Result<f64> {
    check_dof(k)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidInput(format!("probability {p} outside (0, 1)")));
    }
    // Residual in whichever tail is better conditioned.
    let upper = p > 0.5;
    let resid = |x: f64| {
        if upper {
            (1.0 - p) - chi2_sf(x, k)
        } else {
            chi2_cdf(x, k) - p
        }
    };

    // Wilson-Hilferty starting point.
    let z = normal_quantile(p)?;
    let c = 2.0 / (9.0 * k);
    let mut x = k * (1.0 - c + z * c.sqrt()).powi(3);
    if !(x > 0.0) {
        x = k * 0.5 * p.powf(2.0 / k);
    }

    let mut lo = 0.0_f64;
    let mut hi = x.max(1.0);
    while resid(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::Infeasible("chi-square quantile bracket overflow".into()));
        }
    }
    if x <= lo || x >= hi {
        x = 0.5 * (lo + hi);
    }

    for _ in 0..200 {
        let r = resid(x);
        if r == 0.0 {
            return Ok(x);
        }
        if r < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = chi2_pdf(x, k);
        let mut next = if d > 0.0 { x - r / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.abs() || (hi - lo) <= 1e-15 * hi {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// Upper-`alpha` chi-square quantile `q_{H, alpha}`.
pub fn chi2_upper_quantile(alpha: f64, k: f64) -> Result<f64> {
    chi2_quantile(1.0 - alpha, k)
}


/// Kolmogorov distance between the empirical law of `samples` and the standard
/// normal, evaluated at the sample points. Sorts `samples` in place.
pub fn ks_normal(samples: &mut [f64]) -> f64 {
    samples.sort_by(f64::total_cmp);
    let r = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let p = normal_cdf(x);
            ((i + 1) as f64 / r - p).max(p - i as f64 / r)
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov-Smirnov distance `sup |F_a - F_b|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let t = a[i].min(b[j]);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_quantiles() {
        assert!((z_two_sided(0.05).unwrap() - 1.959_963_984_540_054).abs() < 1e-12);
        assert!((normal_quantile(0.5).unwrap()).abs() < 1e-15);
        for &p in &[1e-10, 0.001, 0.3, 0.77, 0.999_999] {
            let x = normal_quantile(p).unwrap();
            assert!((normal_cdf(x) - p).abs() < 1e-12 * p.max(1e-3));
        }
    }

    #[test]
    fn chi2_known_values() {
        let a1 = chi2_quantile(0.95, 1.0).unwrap();
        let a2 = chi2_quantile(0.95, 2.0).unwrap();
        assert!((a1 - 3.841_458_820_694_124).abs() < 1e-10 * a1);
        assert!((a2 - 5.991_464_547_107_979).abs() < 1e-10 * a2);
        // K = 2: closed form -2 ln(1 - p)
        let q = chi2_quantile(0.05, 2.0).unwrap();
        assert!((q - (-2.0 * (0.95f64).ln())).abs() < 1e-12 * q);
    }

    #[test]
    fn chi2_quantile_inverts_cdf() {
        for &k in &[1.0, 2.0, 3.0, 7.0, 40.0] {
            for &p in &[1e-6, 0.01, 0.5, 0.9, 0.999_999] {
                let a = chi2_quantile(p, k).unwrap();
                let back = if p > 0.5 { 1.0 - chi2_sf(a, k) } else { chi2_cdf(a, k) };
                assert!((back - p).abs() < 1e-12, "k={k} p={p}");
            }
        }
    }

    #[test]
    fn chi2_quantile_monotone_and_rejects_bad_p() {
        let mut last = 0.0;
        for i in 1..100 {
            let a = chi2_quantile(i as f64 / 100.0, 1.0).unwrap();
            assert!(a > last);
            last = a;
        }
        assert!(chi2_quantile(0.0, 1.0).is_err());
        assert!(chi2_quantile(1.0, 1.0).is_err());
        assert!(chi2_quantile(0.5, 0.0).is_err());
    }

    #[test]
    fn ks_normal_hand_cases() {
        // single point at 0: max(1 - 0.5, 0.5 - 0) = 0.5
        assert!((ks_normal(&mut [0.0]) - 0.5).abs() < 1e-15);
        // ties: two points at 0 behave like one jump of size 1
        assert!((ks_normal(&mut [0.0, 0.0]) - 0.5).abs() < 1e-15);
        // two-point law at +-1 with equal mass
        let d = ks_normal(&mut [1.0, -1.0]);
        assert!((d - (0.5 - normal_cdf(-1.0))).abs() < 1e-15);
    }

    #[test]
    fn ks_two_sample_cases() {
        assert_eq!(ks_two_sample(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 0.0);
        assert_eq!(ks_two_sample(&[0.0, 1.0], &[5.0, 6.0]), 1.0);
        assert!((ks_two_sample(&[1.0, 2.0, 3.0, 4.0], &[2.5, 3.5]) - 0.5).abs() < 1e-15);
    }
}
