//! Ready-made simulation studies matching the acceptance suite.

use clap::ValueEnum;

use randinf::designs::DesignSpec;
use randinf::simlab::{DgpSpec, EstimatorTag, Generator, KernelFamily};

use crate::config::{RunConfig, SimulateSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Neyman interval coverage with constant effects, N = 400.
    Coverage,
    /// Neyman interval coverage with heterogeneous effects, N = 400.
    CoverageHeterogeneous,
    /// Unadjusted, additive and interacted estimators, N = 1000, R^2 near 0.6.
    Efficiency,
    /// Rerandomized estimates against the limit law, acceptance 0.05.
    RemLaw,
    /// Rerandomization with both interval types, R^2 near 0.8.
    RemGain,
    /// The same population under complete randomization.
    RemGainBaseline,
    /// Kolmogorov distance for the bounded two-sample family.
    RateBounded,
    /// Kolmogorov distance for the spiked family.
    RateSpiked,
}

fn dgp(n: usize, k: usize, generator: Generator, heterogeneity: f64, signal: f64, seed: u64) -> DgpSpec {
    DgpSpec {
        n,
        q: 2,
        k,
        generator,
        effect: 1.0,
        heterogeneity,
        signal,
        noise: 1.0,
        seed,
    }
}

fn rem_population() -> DgpSpec {
    dgp(1000, 2, Generator::LinearHomoskedastic, 0.0, 2.0, 81)
}

impl Preset {
    pub fn config(&self) -> RunConfig {
        let (seed, simulate) = match self {
            Preset::Coverage => (
                62,
                SimulateSpec::Repeated {
                    dgp: dgp(400, 0, Generator::AdditiveEffect, 0.0, 1.0, 61),
                    design: DesignSpec::Cre { counts: vec![200, 200] },
                    estimators: vec![EstimatorTag::Neyman],
                    reps: 4000,
                },
            ),
            Preset::CoverageHeterogeneous => (
                62,
                SimulateSpec::Repeated {
                    dgp: dgp(400, 1, Generator::LinearHeteroskedastic, 1.5, 1.0, 61),
                    design: DesignSpec::Cre { counts: vec![200, 200] },
                    estimators: vec![EstimatorTag::Neyman],
                    reps: 4000,
                },
            ),
            Preset::Efficiency => (
                72,
                SimulateSpec::Repeated {
                    dgp: dgp(1000, 2, Generator::LinearHomoskedastic, 0.5, 1.5f64.sqrt(), 71),
                    design: DesignSpec::Cre { counts: vec![500, 500] },
                    estimators: vec![EstimatorTag::Neyman, EstimatorTag::Fisher, EstimatorTag::Lin],
                    reps: 4000,
                },
            ),
            Preset::RemLaw => (
                82,
                SimulateSpec::RemCheck {
                    dgp: rem_population(),
                    treated: 500,
                    control: 500,
                    threshold: None,
                    acceptance: Some(0.05),
                    reps: 2000,
                    reference_draws: 100_000,
                },
            ),
            Preset::RemGain => (
                91,
                SimulateSpec::Repeated {
                    dgp: rem_population(),
                    design: DesignSpec::Rem {
                        treated: 500,
                        control: 500,
                        threshold: None,
                        acceptance: Some(0.05),
                        max_draws: None,
                    },
                    estimators: vec![EstimatorTag::Neyman, EstimatorTag::Rem],
                    reps: 2000,
                },
            ),
            Preset::RemGainBaseline => (
                92,
                SimulateSpec::Repeated {
                    dgp: rem_population(),
                    design: DesignSpec::Cre { counts: vec![500, 500] },
                    estimators: vec![EstimatorTag::Neyman],
                    reps: 2000,
                },
            ),
            Preset::RateBounded => (
                121,
                SimulateSpec::Rate {
                    family: KernelFamily::BoundedTwoSample,
                    ns: vec![50, 200, 800],
                    draws: 50_000,
                },
            ),
            Preset::RateSpiked => (
                122,
                SimulateSpec::Rate {
                    family: KernelFamily::Spiked,
                    ns: vec![50, 200, 800, 2000],
                    draws: 50_000,
                },
            ),
        };
        RunConfig {
            seed: Some(seed),
            alpha: Some(0.05),
            simulate: Some(simulate),
            ..RunConfig::default()
        }
    }
}
