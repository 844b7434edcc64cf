use randinf::designs::{draw_cre, RngSeed};
use randinf::estimators::{self, AdjustmentMode};
use randinf::frt::{frt, FrtMode, FrtSpec};
use randinf::science::{ContrastMatrix, CovariateMatrix, ObservedData};
use randinf::variance::{self, SandwichKind, WaldMode};

fn main() -> randinf::Result<()> {
    let a = draw_cre(&[4, 4], RngSeed::new(7))?;
    let y = vec![1.2, 0.4, 2.8, 1.9, 0.7, 3.3, 2.1, 1.0];
    let x = CovariateMatrix::from_rows(&[
        vec![0.1],
        vec![-0.6],
        vec![1.4],
        vec![0.9],
        vec![-0.2],
        vec![1.8],
        vec![0.5],
        vec![-0.4],
    ])?;
    let obs = ObservedData::new(y, a, Some(x.clone()))?;
    let f = ContrastMatrix::two_arm();

    let tau = estimators::contrast_estimate(&obs, &f)?;
    let v = variance::neyman_var(&obs, &f)?;
    let report = variance::wald(&tau, &v, 0.05, WaldMode::Interval, "neyman")?;
    println!("difference in means {:.3}, interval {:?}", report.estimate[0], report.interval);

    let lin = estimators::regression_adjusted(&obs, &x, AdjustmentMode::Interacted, &f)?;
    let v = variance::regression_var(&obs, &x, AdjustmentMode::Interacted, &f, SandwichKind::Hc2)?;
    println!("interacted adjustment {:.3} (se {:.3})", lin.tau[0], v[(0, 0)].sqrt());

    let spec = FrtSpec {
        mode: FrtMode::Exact,
        ..FrtSpec::default()
    };
    println!("exact randomization p-value {:.3}", frt(&obs, &spec, RngSeed::new(1))?.p_value);
    Ok(())
}
