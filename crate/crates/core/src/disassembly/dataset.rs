//! Supervised samples for next-part prediction.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::state::AssemblySequence;
use crate::blueprint::Blueprint;
use crate::error::{Error, Result};
use crate::geometry::{sample_point_cloud, PointCloud, Pose, TriMesh};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    /// Points sampled from the whole target assembly.
    pub n_target: usize,
    /// Points sampled from each remaining part.
    pub n_part: usize,
    pub splits_per_sequence: usize,
    /// Upper bound on distinct samples kept per blueprint.
    pub max_samples_per_blueprint: usize,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_target: 256,
            n_part: 128,
            splits_per_sequence: 2,
            max_samples_per_blueprint: 8,
            seed: 0,
        }
    }
}

/// One training record. Clouds are flat `N x 6` rows of position then normal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceSample {
    pub blueprint_id: String,
    pub num_parts: usize,
    pub assembled_ids: Vec<usize>,
    pub remaining_ids: Vec<usize>,
    pub target_cloud: Vec<f32>,
    pub remaining_clouds: Vec<Vec<f32>>,
    pub feasibility: Vec<u8>,
    /// Maps each remaining cloud from its canonical frame to the assembly.
    pub target_poses: Vec<Pose>,
}

impl SequenceSample {
    pub fn target(&self) -> PointCloud {
        to_cloud(&self.target_cloud)
    }

    pub fn part(&self, i: usize) -> PointCloud {
        to_cloud(&self.remaining_clouds[i])
    }

    pub fn num_remaining(&self) -> usize {
        self.remaining_ids.len()
    }
}

fn to_cloud(flat: &[f32]) -> PointCloud {
    let data: Vec<f64> = flat.iter().map(|&x| x as f64).collect();
    PointCloud::from_flat(&data).expect("stored clouds have six columns")
}

fn to_flat(cloud: &PointCloud) -> Vec<f32> {
    cloud.to_flat().into_iter().map(|x| x as f32).collect()
}

/// Stable 64-bit FNV-1a hash, used to derive per-blueprint seeds.
pub fn stable_hash(text: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// All parts merged into one mesh at their target poses.
pub fn assembled_mesh(blueprint: &Blueprint) -> Result<TriMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (m, p) in blueprint.meshes.iter().zip(&blueprint.target_poses) {
        let base = vertices.len() as u32;
        vertices.extend(m.vertices().iter().map(|v| p.transform_point(v)));
        faces.extend(m.faces().iter().map(|f| f.map(|i| i + base)));
    }
    TriMesh::new(vertices, faces)
}

/// Feasibility of each part in `remaining` as the next one to assemble
/// after the parts in `assembled` (as a set).
pub fn feasibility_labels(sequences: &[AssemblySequence], assembled: &[usize], remaining: &[usize]) -> Vec<u8> {
    let set: HashSet<usize> = assembled.iter().copied().collect();
    let k = assembled.len();
    let next: HashSet<usize> = sequences
        .iter()
        .filter(|s| s.order.len() > k && s.order[..k].iter().all(|p| set.contains(p)))
        .map(|s| s.order[k])
        .collect();
    remaining.iter().map(|p| next.contains(p) as u8).collect()
}

/// Splits sequences into assembled / remaining segments and renders each
/// split as a [`SequenceSample`]. Splits with the same assembled set are
/// emitted once.
pub fn emit_dataset(
    blueprint: &Blueprint,
    sequences: &[AssemblySequence],
    config: &DatasetConfig,
) -> Result<Vec<SequenceSample>> {
    if sequences.is_empty() {
        return Err(Error::InvalidInput(format!("blueprint '{}' has no sequences", blueprint.id)));
    }
    let n = blueprint.num_parts();
    let seed = config.seed ^ stable_hash(&blueprint.id);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut splits: Vec<Vec<usize>> = Vec::new();
    'outer: for seq in sequences {
        for _ in 0..config.splits_per_sequence {
            if splits.len() >= config.max_samples_per_blueprint {
                break 'outer;
            }
            let k = rng.random_range(0..n);
            let mut assembled = seq.order[..k].to_vec();
            assembled.sort_unstable();
            if seen.insert(assembled.clone()) {
                splits.push(assembled);
            }
        }
    }

    let whole = assembled_mesh(blueprint)?;
    let props = blueprint.inertial_props()?;
    let mut samples = Vec::with_capacity(splits.len());
    for (s, assembled) in splits.into_iter().enumerate() {
        let sample_seed = seed.wrapping_add(1_000_003 * (s as u64 + 1));
        let remaining: Vec<usize> = (0..n).filter(|i| !assembled.contains(i)).collect();
        let feasibility = feasibility_labels(sequences, &assembled, &remaining);
        debug_assert!(feasibility.contains(&1));
        let target = sample_point_cloud(&whole, &Pose::identity(), config.n_target, sample_seed)?;
        let mut remaining_clouds = Vec::new();
        let mut target_poses = Vec::new();
        for (r, &i) in remaining.iter().enumerate() {
            let origin = props[i].center_of_mass;
            let canonical = Pose::from_translation(-origin);
            let cloud = sample_point_cloud(&blueprint.meshes[i], &canonical, config.n_part, sample_seed + 1 + r as u64)?;
            remaining_clouds.push(to_flat(&cloud));
            let t = blueprint.target_poses[i];
            target_poses.push(Pose::new(t.rotation * origin + t.translation, t.rotation));
        }
        samples.push(SequenceSample {
            blueprint_id: blueprint.id.clone(),
            num_parts: n,
            assembled_ids: assembled,
            remaining_ids: remaining,
            target_cloud: to_flat(&target),
            remaining_clouds,
            feasibility,
            target_poses,
        });
    }
    Ok(samples)
}
