use std::collections::{BTreeMap, HashSet};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::network::{forward_prepared, Prepared};
use super::params::ModelParams;
use crate::blueprint::Blueprint;
use crate::disassembly::dataset::{assembled_mesh, stable_hash};
use crate::disassembly::{AssemblySequence, DatasetConfig, SequenceSample};
use crate::error::{Error, Result};
use crate::geometry::{sample_point_cloud, PointCloud, Pose};

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Fraction of samples whose highest-scoring remaining part is feasible.
pub fn one_step_accuracy(
    samples: &[SequenceSample],
    mut scores: impl FnMut(&SequenceSample) -> Result<Vec<f64>>,
) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0;
    for s in samples {
        let p = scores(s)?;
        if s.feasibility[argmax(&p)] == 1 {
            hits += 1;
        }
    }
    Ok(hits as f64 / samples.len() as f64)
}

/// Expected one-step accuracy of a uniformly random choice.
pub fn random_one_step_baseline(samples: &[SequenceSample]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples
        .iter()
        .map(|s| s.feasibility.iter().filter(|&&y| y == 1).count() as f64 / s.feasibility.len() as f64)
        .sum::<f64>()
        / samples.len() as f64
}

/// Probability that a uniformly random rollout is feasible: `|S| / M!`.
pub fn random_rollout_baseline(num_parts: usize, num_sequences: usize) -> f64 {
    let fact: f64 = (1..=num_parts).map(|k| k as f64).product();
    num_sequences as f64 / fact
}

/// Target cloud of the whole assembly and one centred cloud per part,
/// rendered as the dataset renders them.
pub fn blueprint_clouds(blueprint: &Blueprint, config: &DatasetConfig) -> Result<(PointCloud, Vec<PointCloud>)> {
    let seed = config.seed ^ stable_hash(&blueprint.id) ^ 0x5eed;
    let whole = assembled_mesh(blueprint)?;
    let target = sample_point_cloud(&whole, &Pose::identity(), config.n_target, seed)?;
    let props = blueprint.inertial_props()?;
    let parts = blueprint
        .meshes
        .iter()
        .zip(&props)
        .enumerate()
        .map(|(i, (m, p))| {
            sample_point_cloud(m, &Pose::from_translation(-p.center_of_mass), config.n_part, seed + 1 + i as u64)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((target, parts))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceInference {
    pub sequence: AssemblySequence,
    /// Probabilities over the parts remaining at each step, in id order.
    pub step_probabilities: Vec<Vec<f64>>,
}

/// Picks the most probable remaining part, removes it and repeats. The
/// target cloud stays the same at every step.
pub fn infer_sequence(target: &PointCloud, parts: &[PointCloud], params: &ModelParams) -> Result<SequenceInference> {
    if parts.is_empty() {
        return Err(Error::InvalidInput("inference needs at least one part".into()));
    }
    let full = Prepared::new(target, parts, None)?;
    let mut remaining: Vec<usize> = (0..parts.len()).collect();
    let mut order = Vec::with_capacity(parts.len());
    let mut step_probabilities = Vec::with_capacity(parts.len());
    while !remaining.is_empty() {
        let input = Prepared {
            parts: remaining.iter().map(|&i| full.parts[i].clone()).collect(),
            ..full.clone()
        };
        let pred = forward_prepared(&input, params)?;
        let pick = argmax(&pred.probabilities);
        order.push(remaining.remove(pick));
        step_probabilities.push(pred.probabilities);
    }
    Ok(SequenceInference {
        sequence: AssemblySequence::from_order(order),
        step_probabilities,
    })
}

/// A test blueprint with its enumerated feasible orders.
pub struct EvalBlueprint<'a> {
    pub blueprint: &'a Blueprint,
    pub sequences: &'a [AssemblySequence],
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PartCountMetrics {
    pub samples: usize,
    pub one_step_acc: f64,
    pub one_step_baseline: f64,
    pub blueprints: usize,
    pub seq_acc: f64,
    pub seq_baseline: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub one_step_acc: f64,
    pub seq_acc: f64,
    pub mean_inference_ms: f64,
    pub one_step_baseline: f64,
    pub seq_baseline: f64,
    pub samples: usize,
    pub blueprints: usize,
    pub by_part_count: BTreeMap<usize, PartCountMetrics>,
}

/// Whether `order` is one of `sequences`.
pub fn sequence_is_feasible(order: &[usize], sequences: &[AssemblySequence]) -> bool {
    sequences.iter().any(|s| s.order == order)
}

/// One-step accuracy over `samples` and sequence accuracy over
/// `blueprints`, with random baselines, overall and by part count.
pub fn evaluate(
    params: &ModelParams,
    samples: &[SequenceSample],
    blueprints: &[EvalBlueprint],
    dataset: &DatasetConfig,
) -> Result<EvalReport> {
    let mut report = EvalReport {
        samples: samples.len(),
        blueprints: blueprints.len(),
        ..Default::default()
    };
    let mut hits = 0usize;
    for s in samples {
        let parts: Vec<_> = (0..s.num_remaining()).map(|i| s.part(i)).collect();
        let pred = forward_prepared(&Prepared::new(&s.target(), &parts, None)?, params)?;
        let hit = s.feasibility[argmax(&pred.probabilities)] == 1;
        hits += hit as usize;
        let m = report.by_part_count.entry(s.num_parts).or_default();
        m.samples += 1;
        m.one_step_acc += hit as u8 as f64;
        m.one_step_baseline += random_one_step_baseline(std::slice::from_ref(s));
    }
    report.one_step_acc = if samples.is_empty() { 0.0 } else { hits as f64 / samples.len() as f64 };
    report.one_step_baseline = random_one_step_baseline(samples);

    let mut seq_hits = 0usize;
    let mut total_ms = 0.0;
    let mut baseline = 0.0;
    for b in blueprints {
        let n = b.blueprint.num_parts();
        let (target, parts) = blueprint_clouds(b.blueprint, dataset)?;
        let start = Instant::now();
        let inferred = infer_sequence(&target, &parts, params)?;
        total_ms += start.elapsed().as_secs_f64() * 1e3;
        let distinct: HashSet<&Vec<usize>> = b.sequences.iter().map(|s| &s.order).collect();
        let hit = sequence_is_feasible(&inferred.sequence.order, b.sequences);
        let base = random_rollout_baseline(n, distinct.len());
        seq_hits += hit as usize;
        baseline += base;
        let m = report.by_part_count.entry(n).or_default();
        m.blueprints += 1;
        m.seq_acc += hit as u8 as f64;
        m.seq_baseline += base;
    }
    if !blueprints.is_empty() {
        report.seq_acc = seq_hits as f64 / blueprints.len() as f64;
        report.seq_baseline = baseline / blueprints.len() as f64;
        report.mean_inference_ms = total_ms / blueprints.len() as f64;
    }
    for m in report.by_part_count.values_mut() {
        if m.samples > 0 {
            m.one_step_acc /= m.samples as f64;
            m.one_step_baseline /= m.samples as f64;
        }
        if m.blueprints > 0 {
            m.seq_acc /= m.blueprints as f64;
            m.seq_baseline /= m.blueprints as f64;
        }
    }
    Ok(report)
}
