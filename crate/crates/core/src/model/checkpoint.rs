use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{GrlConfig, Network};
use super::params::ModelParams;
use crate::data::NormStats;
use crate::error::{Error, Result};
use crate::train::TrainConfig;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Everything needed to score new expression data: trained parameters,
/// the input gene order, standardization statistics and the training
/// configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub d: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub gene_list: Vec<String>,
    pub domain_names: Vec<String>,
    pub normalization: NormStats,
    pub grl: GrlConfig,
    pub train_config: TrainConfig,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn new(
        params: ModelParams,
        domain_names: Vec<String>,
        normalization: NormStats,
        train_config: TrainConfig,
    ) -> Result<Self> {
        let ck = Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            d: params.arch.d,
            m: params.arch.domains,
            gene_list: params.gene_list.clone(),
            domain_names,
            normalization,
            grl: GrlConfig::new(train_config.grl_coefficient)?,
            train_config,
            params,
        };
        ck.validate()?;
        Ok(ck)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {} (expected {CHECKPOINT_FORMAT_VERSION})",
                self.format_version
            )));
        }
        self.params.validate()?;
        let arch = &self.params.arch;
        if self.d != arch.d || self.m != arch.domains {
            return Err(Error::Checkpoint(format!(
                "header says d={} M={}, parameters have d={} M={}",
                self.d, self.m, arch.d, arch.domains
            )));
        }
        if self.domain_names.len() != self.m {
            return Err(Error::Checkpoint(format!(
                "{} domain names for M={}",
                self.domain_names.len(),
                self.m
            )));
        }
        if self.gene_list != self.params.gene_list || self.gene_list != self.normalization.genes {
            return Err(Error::Checkpoint(
                "gene lists of parameters and normalization statistics disagree".into(),
            ));
        }
        let g = self.gene_list.len();
        if self.normalization.mean.len() != g || self.normalization.std.len() != g {
            return Err(Error::Checkpoint(
                "normalization statistics have the wrong length".into(),
            ));
        }
        if self.grl.coefficient != self.train_config.grl_coefficient {
            return Err(Error::Checkpoint(
                "GRL coefficient disagrees with training config".into(),
            ));
        }
        Ok(())
    }

    /// The constant network pieces this checkpoint was trained with.
    pub fn network(&self) -> Result<Network> {
        Network::new(self.d, self.grl, self.train_config.dropout_p)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Self = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        ck.validate()?;
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}
