use std::path::Path;

use serde::{Deserialize, Serialize};

use super::generator::{Dimensions, Family};
use crate::contact::ContactConfig;
use crate::disassembly::{DatasetConfig, PlannerConfig};
use crate::error::{Error, Result};
use crate::model::TrainConfig;
use crate::motion::RrtConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub train_blueprints: usize,
    pub test_blueprints: usize,
    pub min_parts: usize,
    pub max_parts: usize,
    pub families: Vec<Family>,
    pub dimensions: Dimensions,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            train_blueprints: 300,
            test_blueprints: 60,
            min_parts: 2,
            max_parts: 5,
            families: Family::ALL.to_vec(),
            dimensions: Dimensions::default(),
        }
    }
}

/// Every tunable of the pipeline. Sub-seeds are derived from `seed` by
/// [`PipelineConfig::resolved`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub corpus: CorpusConfig,
    pub planner: PlannerConfig,
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub rrt: RrtConfig,
    pub contact: ContactConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::format("config", e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Copy with the root seed pushed into every seeded component.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.dataset.seed = self.seed;
        c.train.seed = self.seed;
        c.rrt.seed = self.seed;
        c
    }

    pub fn validate(&self) -> Result<()> {
        let k = &self.corpus;
        if k.min_parts < super::generator::MIN_PARTS || k.max_parts > super::generator::MAX_PARTS || k.min_parts > k.max_parts {
            return Err(Error::InvalidInput(format!(
                "part counts must satisfy {} <= min_parts <= max_parts <= {}",
                super::generator::MIN_PARTS,
                super::generator::MAX_PARTS
            )));
        }
        if k.families.is_empty() {
            return Err(Error::InvalidInput("corpus needs at least one family".into()));
        }
        self.train.validate()
    }
}
