use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::CorpusConfig;
use super::generator::BlueprintSpec;
use crate::disassembly::dataset::stable_hash;
use crate::disassembly::{AssemblySequence, SequenceSample};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub id: String,
    pub split: Split,
    pub spec: BlueprintSpec,
}

/// Training blueprints draw family and part count uniformly; the test split
/// cycles through part counts, then families, so every count is equally
/// represented.
pub fn corpus_entries(config: &CorpusConfig, seed: u64) -> Vec<CorpusEntry> {
    let counts: Vec<usize> = (config.min_parts..=config.max_parts).collect();
    let fams = &config.families;
    let mut out = Vec::with_capacity(config.train_blueprints + config.test_blueprints);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ stable_hash("train"));
    for _ in 0..config.train_blueprints {
        let family = fams[rng.random_range(0..fams.len())];
        let n = counts[rng.random_range(0..counts.len())];
        let mut spec = BlueprintSpec::new(family, n, rng.random());
        spec.dims = config.dimensions.clone();
        out.push(CorpusEntry {
            id: spec.id(),
            split: Split::Train,
            spec,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ stable_hash("test"));
    for i in 0..config.test_blueprints {
        let n = counts[i % counts.len()];
        let family = fams[(i / counts.len()) % fams.len()];
        let mut spec = BlueprintSpec::new(family, n, rng.random());
        spec.dims = config.dimensions.clone();
        out.push(CorpusEntry {
            id: spec.id(),
            split: Split::Test,
            spec,
        });
    }
    out
}

/// One line of `sequences.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequencesRecord {
    pub blueprint_id: String,
    pub split: Split,
    pub num_parts: usize,
    pub truncated: bool,
    pub sequences: Vec<AssemblySequence>,
}

/// One line of `dataset.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub split: Split,
    #[serde(flatten)]
    pub sample: SequenceSample,
}
