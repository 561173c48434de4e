use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aggregation::AggregatorKind;
use crate::data::SyntheticShiftConfig;
use crate::error::{FudaError, Result};
use crate::mspl::MsplConfig;
use crate::nn::{ArchitectureSpec, TrainConfig};

/// Where the domains come from. The target is the last synthetic domain,
/// or the file at index `target` for file input; every other domain is a
/// source client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(SyntheticShiftConfig),
    Files { paths: Vec<PathBuf>, target: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub arch: ArchitectureSpec,
    pub client_train: TrainConfig,
    pub aggregator: AggregatorKind,
    pub mspl: Option<MsplConfig>,
    pub eval_seeds: Vec<u64>,
}

impl ExperimentConfig {
    /// Standard synthetic benchmark with the default training recipes,
    /// SEA aggregation, SSCE adaptation and seeds 0..10.
    pub fn standard() -> Self {
        let data = SyntheticShiftConfig::standard();
        ExperimentConfig {
            arch: ArchitectureSpec::desk_default(data.feature_dim, data.num_classes),
            data: DataSource::Synthetic(data),
            client_train: TrainConfig::client_default(),
            aggregator: AggregatorKind::Sea,
            mspl: Some(MsplConfig::default()),
            eval_seeds: (0..10).collect(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| FudaError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            FudaError::Config(m) => FudaError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Parses and validates a JSON config.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| FudaError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks everything that can be checked without touching data files.
    /// Failures are reported as config errors.
    pub fn validate(&self) -> Result<()> {
        let as_config = |e: FudaError| FudaError::Config(e.to_string());
        self.arch.validate().map_err(as_config)?;
        self.client_train.validate().map_err(as_config)?;
        if let Some(m) = &self.mspl {
            m.validate().map_err(as_config)?;
        }
        match &self.data {
            DataSource::Synthetic(s) => {
                s.validate().map_err(as_config)?;
                if s.feature_dim != self.arch.input_dim || s.num_classes != self.arch.num_classes {
                    return Err(FudaError::Config(format!(
                        "arch expects {} features / {} classes but synthetic data has {} / {}",
                        self.arch.input_dim, self.arch.num_classes, s.feature_dim, s.num_classes
                    )));
                }
            }
            DataSource::Files { paths, target } => {
                if paths.len() < 2 {
                    return Err(FudaError::Config("need at least two domain files".into()));
                }
                if *target >= paths.len() {
                    return Err(FudaError::Config(format!(
                        "target index {target} out of range for {} files",
                        paths.len()
                    )));
                }
            }
        }
        if self.eval_seeds.is_empty() {
            return Err(FudaError::Config("eval_seeds is empty".into()));
        }
        Ok(())
    }

    /// MSPL settings used by ablation rows and sweeps, falling back to the
    /// default recipe when adaptation is disabled in this config.
    pub fn mspl_or_default(&self) -> MsplConfig {
        self.mspl.clone().unwrap_or_default()
    }
}
