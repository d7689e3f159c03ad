//! Versioned TOML configuration of an experiment cell.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diffusion::{ScoreNetConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::group::GroupSpec;
use crate::metrics::{CriticConfig, W1Method};
use crate::targets::GaussianMixture;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TargetSpec {
    /// Equal-weight components at `(+-5, +-5)`.
    FourCorners { variance: f64 },
    Mixture(GaussianMixture),
}

impl Default for TargetSpec {
    fn default() -> Self {
        TargetSpec::FourCorners { variance: 1.0 }
    }
}

impl TargetSpec {
    pub fn build(&self) -> Result<GaussianMixture> {
        let m = match self {
            TargetSpec::FourCorners { variance } => GaussianMixture::four_corners(*variance),
            TargetSpec::Mixture(m) => m.clone(),
        };
        m.validate()?;
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Setup {
    pub equivariant: bool,
    pub augmented: bool,
}

impl Setup {
    /// The four setups in table order.
    pub const ALL: [Setup; 4] = [
        Setup { equivariant: true, augmented: true },
        Setup { equivariant: true, augmented: false },
        Setup { equivariant: false, augmented: true },
        Setup { equivariant: false, augmented: false },
    ];

    pub fn name(self) -> &'static str {
        match (self.equivariant, self.augmented) {
            (true, true) => "equivariant-augmented",
            (true, false) => "equivariant",
            (false, true) => "plain-augmented",
            (false, false) => "plain",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub n_gen_samples: usize,
    pub n_ref_samples: usize,
    pub w1_method: W1Method,
    /// Base space-time points for the per-run DFE diagnostic.
    pub n_dfe_points: usize,
    #[serde(default)]
    pub critic: CriticConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_gen_samples: 1024,
            n_ref_samples: 1024,
            w1_method: W1Method::ExactFlow,
            n_dfe_points: 256,
            critic: CriticConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub n_training: usize,
    pub n_runs: usize,
    pub base_seed: u64,
    pub target: TargetSpec,
    pub group: GroupSpec,
    pub setup: Setup,
    pub model: ScoreNetConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            n_training: 100,
            n_runs: 10,
            base_seed: 2024,
            target: TargetSpec::default(),
            group: GroupSpec::default(),
            setup: Setup {
                equivariant: true,
                augmented: false,
            },
            model: ScoreNetConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.n_training == 0 || self.n_runs == 0 {
            return Err(Error::Config("n_training and n_runs must be at least 1".into()));
        }
        if self.eval.n_gen_samples == 0 || self.eval.n_ref_samples == 0 {
            return Err(Error::Config("evaluation sample counts must be positive".into()));
        }
        let target = self.target.build()?;
        let group = self.group.build()?;
        if group.dim() != target.dim() {
            return Err(Error::Config(format!(
                "group acts on dimension {} but the target has dimension {}",
                group.dim(),
                target.dim()
            )));
        }
        self.train.validate()?;
        if self.eval.w1_method == W1Method::NeuralDual {
            self.eval.critic.validate()?;
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    /// Hex SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        let text = self.to_toml().expect("config serializes");
        Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Configuration of a standalone sample-complexity sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub schema_version: u32,
    pub target: TargetSpec,
    pub group: GroupSpec,
    pub ns: Vec<usize>,
    pub reps: usize,
    pub ref_size: usize,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            target: TargetSpec::default(),
            group: GroupSpec::default(),
            ns: vec![32, 64, 128, 256, 512, 1024],
            reps: 20,
            ref_size: 4096,
            seed: 2024,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let target = self.target.build()?;
        if self.group.build()?.dim() != target.dim() {
            return Err(Error::Config("group and target dimensions differ".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}
