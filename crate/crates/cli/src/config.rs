use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use randinf::designs::DesignSpec;
use randinf::estimators::ClusterMethod;
use randinf::frt::FrtSpec;
use randinf::simlab::{DgpSpec, EstimatorTag, KernelFamily};
use randinf::variance::WaldMode;

use crate::{invalid, CliError, CliResult};

pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmCoding {
    /// Arms are labeled `1..Q`.
    #[default]
    OneBased,
    /// Two arms labeled `0` (control) and `1` (treated).
    ZeroOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Neyman,
    /// Regression of the outcome on an intercept and the treatment indicator.
    Ols,
    Fisher,
    Lin,
    LinDebiased,
    Rem,
    Sre,
    Mpe,
    Cluster,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceChoice {
    Ols,
    Ehw,
    Hc2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    pub method: Method,
    /// Contrast matrix as `Q` rows of `H` weights.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contrast: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<WaldMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance: Option<VarianceChoice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acceptance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_draws: Option<usize>,
    #[serde(default)]
    pub cluster_method: ClusterMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "study", rename_all = "snake_case", deny_unknown_fields)]
pub enum SimulateSpec {
    Repeated {
        dgp: DgpSpec,
        design: DesignSpec,
        estimators: Vec<EstimatorTag>,
        reps: usize,
    },
    Exact {
        dgp: DgpSpec,
        counts: Vec<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        contrast: Option<Vec<Vec<f64>>>,
    },
    RemCheck {
        dgp: DgpSpec,
        treated: usize,
        control: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        threshold: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        acceptance: Option<f64>,
        reps: usize,
        reference_draws: usize,
    },
    Rate {
        family: KernelFamily,
        ns: Vec<usize>,
        draws: usize,
    },
}

fn default_epsilons() -> Vec<f64> {
    vec![0.05, 0.1, 0.2]
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseSpec {
    /// One CSV file per coordinate of the statistic.
    #[serde(default)]
    pub kernels: Vec<PathBuf>,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    /// Monte Carlo draws for the empirical Kolmogorov distance (one coordinate only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draws: Option<usize>,
    #[serde(default = "default_true")]
    pub auto_normalize: bool,
}

impl Default for DiagnoseSpec {
    fn default() -> Self {
        Self {
            kernels: Vec::new(),
            epsilons: default_epsilons(),
            draws: None,
            auto_normalize: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub arm_coding: ArmCoding,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis: Option<AnalysisSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frt: Option<FrtSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnose: Option<DiagnoseSpec>,
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub out: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub reps: Option<usize>,
    pub zero_one_arms: bool,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Runtime(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| invalid(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.data.as_mut().map(rebase);
        cfg.out.as_mut().map(rebase);
        if let Some(d) = cfg.diagnose.as_mut() {
            d.kernels.iter_mut().for_each(rebase);
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: Overrides) {
        if o.seed.is_some() {
            self.seed = o.seed;
        }
        if o.alpha.is_some() {
            self.alpha = o.alpha;
        }
        if o.out.is_some() {
            self.out = o.out;
        }
        if o.data.is_some() {
            self.data = o.data;
        }
        if o.zero_one_arms {
            self.arm_coding = ArmCoding::ZeroOne;
        }
        if let Some(r) = o.reps {
            if let Some(f) = self.frt.as_mut() {
                f.resamples = r;
            }
            match self.simulate.as_mut() {
                Some(SimulateSpec::Repeated { reps, .. }) | Some(SimulateSpec::RemCheck { reps, .. }) => *reps = r,
                Some(SimulateSpec::Rate { draws, .. }) => *draws = r,
                _ => {}
            }
            if let Some(d) = self.diagnose.as_mut() {
                d.draws = Some(r);
            }
            if let Some(a) = self.analysis.as_mut() {
                if a.method == Method::Rem {
                    a.reference_draws = Some(r);
                }
            }
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn alpha(&self) -> CliResult<f64> {
        let a = self.alpha.unwrap_or(DEFAULT_ALPHA);
        if a > 0.0 && a < 1.0 {
            Ok(a)
        } else {
            Err(invalid(format!("alpha {a} outside (0, 1)")))
        }
    }

    /// SHA-256 of the resolved configuration, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("configuration serializes");
        hex(&Sha256::digest(&bytes))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_hash(path: &Path) -> CliResult<String> {
    let bytes =
        std::fs::read(path).map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"seed": 1, "sede": 2}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"analysis": {"method": "neyman", "extra": 1}}"#).is_err());
        let ok: RunConfig = serde_json::from_str(
            r#"{"simulate": {"study": "rate", "family": "spiked", "ns": [10, 20, 40], "draws": 100}}"#,
        )
        .unwrap();
        assert!(matches!(ok.simulate, Some(SimulateSpec::Rate { .. })));
    }

    #[test]
    fn overrides_and_hash() {
        let mut cfg: RunConfig = serde_json::from_str(r#"{"seed": 1, "frt": {"mode": "monte_carlo"}}"#).unwrap();
        let before = cfg.hash();
        assert_eq!(before, cfg.clone().hash());
        cfg.apply(Overrides {
            seed: Some(9),
            reps: Some(77),
            ..Overrides::default()
        });
        assert_eq!(cfg.seed(), 9);
        assert_eq!(cfg.frt.as_ref().unwrap().resamples, 77);
        assert_ne!(cfg.hash(), before);
        assert_eq!(cfg.hash().len(), 64);
    }

    #[test]
    fn alpha_validation() {
        let cfg = RunConfig {
            alpha: Some(1.5),
            ..RunConfig::default()
        };
        assert!(matches!(cfg.alpha(), Err(CliError::Validation(_))));
        assert_eq!(RunConfig::default().alpha().unwrap(), DEFAULT_ALPHA);
    }
}
