//! Browser bindings for three small interactive experiments. Each export
//! returns a JSON string; the pure functions behind them are usable natively.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use randinf::designs::{threshold_from_acceptance, DesignSpec, RngSeed};
use randinf::perm;
use randinf::simlab::{self, DgpSpec, EstimatorTag, Generator, KernelFamily};
use randinf::variance::{ConstrainedGaussianSpec, RemReference};
use randinf::Result;

const BINS: usize = 48;
const SPAN: f64 = 4.0;

fn normal_pdf(x: f64, sd: f64) -> f64 {
    (-0.5 * (x / sd).powi(2)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

/// Density histogram on `[-SPAN, SPAN]` with a normal curve of standard
/// deviation `sd` evaluated at the bin centers.
fn histogram(draws: &[f64], sd: f64) -> Value {
    let width = 2.0 * SPAN / BINS as f64;
    let mut counts = vec![0usize; BINS];
    for &d in draws {
        let b = ((d + SPAN) / width).floor();
        if (0.0..BINS as f64).contains(&b) {
            counts[b as usize] += 1;
        }
    }
    let centers: Vec<f64> = (0..BINS).map(|b| -SPAN + (b as f64 + 0.5) * width).collect();
    let total = draws.len() as f64 * width;
    json!({
        "centers": centers,
        "density": counts.iter().map(|&c| c as f64 / total).collect::<Vec<_>>(),
        "normal": centers.iter().map(|&x| normal_pdf(x, sd)).collect::<Vec<_>>(),
    })
}

fn central_abs_quantile(draws: &[f64], level: f64) -> f64 {
    let mut a: Vec<f64> = draws.iter().map(|d| d.abs()).collect();
    let idx = ((level * a.len() as f64).ceil() as usize).clamp(1, a.len()) - 1;
    *a.select_nth_unstable_by(idx, f64::total_cmp).1
}

/// Limit law of the rerandomized difference in means, standardized to unit
/// variance under complete randomization.
pub fn rem_law_value(k: usize, acceptance: f64, r2: f64, draws: usize, seed: u64) -> Result<Value> {
    let a = threshold_from_acceptance(k, acceptance)?;
    let spec = ConstrainedGaussianSpec::new(k, a)?;
    let reference = RemReference::new(spec, draws, RngSeed::new(seed))?;
    let sample = reference.draws(r2);
    let r2 = r2.clamp(0.0, 1.0);
    let variance = 1.0 - r2 + r2 * spec.variance();
    Ok(json!({
        "threshold": a,
        "variance": variance,
        "variance_reduction": 1.0 - variance,
        "half_width_95": central_abs_quantile(&sample, 0.95),
        "normal_half_width_95": 1.959963984540054,
        "histogram": histogram(&sample, 1.0),
    }))
}

/// Normal approximation of a standardized permutation statistic.
pub fn perm_distance_value(spiked: bool, n: usize, draws: usize, seed: u64) -> Result<Value> {
    let family = if spiked {
        KernelFamily::Spiked
    } else {
        KernelFamily::BoundedTwoSample
    };
    let kernel = family.kernel(n)?;
    let report = perm::clt_condition_report(&kernel, &[0.1])?;
    let seed = RngSeed::new(seed);
    let sample = perm::sample_standardized(&kernel, draws, seed)?;
    Ok(json!({
        "n": n,
        "distance": perm::empirical_kolmogorov(&kernel, draws, seed)?,
        "monte_carlo_floor": 0.8687 / (draws as f64).sqrt(),
        "bound_without_constant": perm::bolthausen_bound(&kernel, true)?,
        "lindeberg": report.lindeberg[0],
        "histogram": histogram(&sample, 1.0),
    }))
}

/// Repeated-sampling coverage of the Neyman interval.
pub fn neyman_coverage_value(n: usize, heterogeneity: f64, reps: usize, alpha: f64, seed: u64) -> Result<Value> {
    let dgp = DgpSpec {
        n,
        q: 2,
        k: 1,
        generator: Generator::LinearHeteroskedastic,
        effect: 1.0,
        heterogeneity,
        signal: 1.0,
        noise: 1.0,
        seed,
    };
    let (table, x) = dgp.generate()?;
    let design = DesignSpec::Cre {
        counts: vec![n / 2, n - n / 2],
    };
    let study = simlab::repeated_sampling(
        &table,
        x.as_ref(),
        &design,
        &[EstimatorTag::Neyman],
        reps,
        alpha,
        RngSeed::new(seed).with_stream(1),
    )?;
    let r = &study.results[0];
    let true_sd = r.mc_variance.sqrt();
    let standardized: Vec<f64> = study.estimates(EstimatorTag::Neyman).iter().map(|t| (t - r.truth) / true_sd).collect();
    Ok(json!({
        "truth": r.truth,
        "coverage": r.coverage,
        "coverage_se": r.coverage_se,
        "mean_width": r.mean_width,
        "mc_variance": r.mc_variance,
        "mean_variance_estimate": r.mean_variance_estimate,
        "histogram": histogram(&standardized, 1.0),
    }))
}

fn export(v: Result<Value>) -> std::result::Result<String, JsError> {
    v.map(|v| v.to_string()).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn rem_law(k: usize, acceptance: f64, r2: f64, draws: usize, seed: u32) -> std::result::Result<String, JsError> {
    export(rem_law_value(k, acceptance, r2, draws, seed.into()))
}

#[wasm_bindgen]
pub fn perm_distance(spiked: bool, n: usize, draws: usize, seed: u32) -> std::result::Result<String, JsError> {
    export(perm_distance_value(spiked, n, draws, seed.into()))
}

#[wasm_bindgen]
pub fn neyman_coverage(
    n: usize,
    heterogeneity: f64,
    reps: usize,
    alpha: f64,
    seed: u32,
) -> std::result::Result<String, JsError> {
    export(neyman_coverage_value(n, heterogeneity, reps, alpha, seed.into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mass(h: &Value) -> f64 {
        let d = h["density"].as_array().unwrap();
        d.iter().map(|v| v.as_f64().unwrap()).sum::<f64>() * 2.0 * SPAN / BINS as f64
    }

    #[test]
    fn rem_law_shrinks_with_r2() {
        let none = rem_law_value(2, 0.05, 0.0, 20_000, 1).unwrap();
        let strong = rem_law_value(2, 0.05, 0.8, 20_000, 1).unwrap();
        assert!((none["variance"].as_f64().unwrap() - 1.0).abs() < 1e-12);
        assert!(strong["variance"].as_f64().unwrap() < 0.3);
        assert!(strong["half_width_95"].as_f64().unwrap() < none["half_width_95"].as_f64().unwrap());
        assert!((mass(&none["histogram"]) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn spiked_kernel_stays_far_from_normal() {
        let bounded = perm_distance_value(false, 200, 5_000, 2).unwrap();
        let spiked = perm_distance_value(true, 200, 5_000, 2).unwrap();
        assert!(bounded["distance"].as_f64().unwrap() < spiked["distance"].as_f64().unwrap());
        assert!(spiked["lindeberg"].as_f64().unwrap() > 0.5);
    }

    #[test]
    fn coverage_near_nominal() {
        let v = neyman_coverage_value(200, 0.0, 400, 0.05, 3).unwrap();
        let c = v["coverage"].as_f64().unwrap();
        assert!((0.9..=0.99).contains(&c), "{c}");
        assert!(neyman_coverage_value(200, 0.0, 10, 0.05, 3).is_err());
    }
}
