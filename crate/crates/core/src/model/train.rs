use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::infer::one_step_accuracy;
use super::network::{forward_graph, forward_prepared, Augmentation, Bound, Prepared};
use super::params::{ModelConfig, ModelParams};
use super::tape::{Mat, Tape, Var};
use crate::disassembly::dataset::stable_hash;
use crate::disassembly::SequenceSample;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub epochs: usize,
    pub batch_size: usize,
    /// Peak learning rate of the one-cycle schedule.
    pub max_lr: f64,
    /// Fraction of steps spent warming up.
    pub pct_start: f64,
    /// Initial rate is `max_lr / div_factor`.
    pub div_factor: f64,
    /// Final rate is `max_lr / (div_factor * final_div_factor)`.
    pub final_div_factor: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Global gradient norm clip; zero disables.
    pub max_grad_norm: f64,
    pub lambda_pose: f64,
    pub augment_rotation: bool,
    pub jitter: f64,
    /// Fraction of blueprints held out for validation.
    pub val_fraction: f64,
    pub seed: u64,
    /// Worker threads for per-sample gradients; 0 uses all cores.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            epochs: 12,
            batch_size: 16,
            max_lr: 2e-3,
            pct_start: 0.3,
            div_factor: 25.0,
            final_div_factor: 1e3,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            max_grad_norm: 1.0,
            lambda_pose: 0.1,
            augment_rotation: true,
            jitter: 0.01,
            val_fraction: 0.1,
            seed: 0,
            threads: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.batch_size == 0 || self.max_lr <= 0.0 || !(0.0..1.0).contains(&self.pct_start) {
            return Err(Error::InvalidInput(
                "training needs batch_size > 0, max_lr > 0 and pct_start in [0, 1)".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::InvalidInput("val_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Cosine one-cycle learning rate at `step` of `total`.
pub fn one_cycle_lr(config: &TrainConfig, step: usize, total: usize) -> f64 {
    let start = config.max_lr / config.div_factor;
    let end = start / config.final_div_factor;
    let warm = ((config.pct_start * total as f64).round() as usize).max(1);
    let cos = |from: f64, to: f64, frac: f64| to + (from - to) * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos());
    if step < warm {
        cos(start, config.max_lr, step as f64 / warm as f64)
    } else {
        let rest = total.saturating_sub(warm).max(1);
        cos(config.max_lr, end, ((step - warm) as f64 / rest as f64).min(1.0))
    }
}

/// Loss of one sample: probability MSE (skipped for two-part assemblies)
/// plus weighted pose error.
pub(crate) fn sample_loss(tape: &mut Tape, p: &Bound, sample: &SequenceSample, input: &Prepared, lambda_pose: f64) -> Result<Var> {
    let out = forward_graph(tape, p, input)?;
    let n = sample.num_remaining();
    let mut terms = Vec::new();
    if sample.num_parts > 2 {
        let y = Mat::from_vec(n, 1, sample.feasibility.iter().map(|&v| v as f64).collect());
        let y = tape.constant(y);
        let d = tape.sub(out.probs, y);
        let sq = tape.mul(d, d);
        terms.push(tape.mean(sq));
    }
    if lambda_pose != 0.0 {
        let mut t = Mat::zeros(n, 6);
        for (i, pose) in sample.target_poses.iter().enumerate() {
            t.row_mut(i).copy_from_slice(&input.pose_target(pose));
        }
        let t = tape.constant(t);
        let d = tape.sub(out.poses, t);
        let dt = tape.slice_cols(d, 0, 3);
        let dr = tape.slice_cols(d, 3, 3);
        let nt = tape.row_norm(dt);
        let nr = tape.row_norm(dr);
        let s = tape.add(nt, nr);
        let m = tape.mean(s);
        terms.push(tape.scale(m, lambda_pose));
    }
    let mut loss = match terms.first() {
        Some(&t) => t,
        None => tape.constant(Mat::zeros(1, 1)),
    };
    for &t in &terms[1..] {
        loss = tape.add(loss, t);
    }
    Ok(loss)
}

/// Loss and parameter gradients of one sample.
pub fn loss_and_grad(
    params: &ModelParams,
    sample: &SequenceSample,
    input: &Prepared,
    lambda_pose: f64,
) -> Result<(f64, Vec<Mat>)> {
    let mut tape = Tape::new();
    let p = Bound::new(&mut tape, params, true);
    let loss = sample_loss(&mut tape, &p, sample, input, lambda_pose)?;
    let value = tape.value(loss).data[0];
    let mut grads = tape.backward(loss);
    let out = p
        .vars
        .iter()
        .zip(&params.tensors)
        .map(|(v, t)| grads[v.0].take().unwrap_or_else(|| Mat::zeros(t.rows, t.cols)))
        .collect();
    Ok((value, out))
}

/// Loss of one sample without augmentation.
pub fn sample_loss_value(params: &ModelParams, sample: &SequenceSample, lambda_pose: f64) -> Result<f64> {
    let input = prepare(sample, None)?;
    let mut tape = Tape::new();
    let p = Bound::new(&mut tape, params, false);
    let loss = sample_loss(&mut tape, &p, sample, &input, lambda_pose)?;
    Ok(tape.value(loss).data[0])
}

pub fn prepare(sample: &SequenceSample, augment: Option<Augmentation>) -> Result<Prepared> {
    let parts: Vec<_> = (0..sample.num_remaining()).map(|i| sample.part(i)).collect();
    Prepared::new(&sample.target(), &parts, augment)
}

/// Decoupled-weight-decay Adam.
pub struct AdamW {
    m: Vec<Mat>,
    v: Vec<Mat>,
    step: usize,
}

impl AdamW {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Mat> = params.tensors.iter().map(|t| Mat::zeros(t.rows, t.cols)).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &[Mat], lr: f64, config: &TrainConfig) {
        self.step += 1;
        let (b1, b2) = (config.beta1, config.beta2);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        for i in 0..params.tensors.len() {
            let decay = if params.decays(i) { config.weight_decay } else { 0.0 };
            let (m, v, w, g) = (&mut self.m[i], &mut self.v[i], &mut params.tensors[i], &grads[i]);
            for j in 0..w.data.len() {
                let gj = g.data[j];
                m.data[j] = b1 * m.data[j] + (1.0 - b1) * gj;
                v.data[j] = b2 * v.data[j] + (1.0 - b2) * gj * gj;
                let mh = m.data[j] / c1;
                let vh = v.data[j] / c2;
                w.data[j] -= lr * (mh / (vh.sqrt() + config.adam_eps) + decay * w.data[j]);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_1acc: f64,
    pub lr: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub params: ModelParams,
    pub log: Vec<EpochLog>,
    pub train_blueprints: BTreeSet<String>,
    pub val_blueprints: BTreeSet<String>,
}

pub fn write_log_csv(log: &[EpochLog], path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::from("epoch,train_loss,val_1acc,lr\n");
    for r in log {
        text.push_str(&format!("{},{},{},{}\n", r.epoch, r.train_loss, r.val_1acc, r.lr));
    }
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Splits blueprint ids into (train, validation), deterministically.
pub fn split_blueprints(samples: &[SequenceSample], val_fraction: f64, seed: u64) -> (BTreeSet<String>, BTreeSet<String>) {
    let ids: BTreeSet<String> = samples.iter().map(|s| s.blueprint_id.clone()).collect();
    let mut ids: Vec<String> = ids.into_iter().collect();
    ids.sort_by_key(|id| (stable_hash(id) ^ seed, id.clone()));
    let n_val = if ids.len() > 1 {
        ((ids.len() as f64 * val_fraction).round() as usize).min(ids.len() - 1)
    } else {
        0
    };
    let val = ids[..n_val].iter().cloned().collect();
    let train = ids[n_val..].iter().cloned().collect();
    (train, val)
}

fn batch_grads(
    params: &ModelParams,
    samples: &[&SequenceSample],
    seeds: &[u64],
    config: &TrainConfig,
) -> Result<Vec<(f64, Vec<Mat>)>> {
    let run = |(s, &seed): (&&SequenceSample, &u64)| -> Result<(f64, Vec<Mat>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = prepare(
            s,
            Some(Augmentation {
                rng: &mut rng,
                rotate: config.augment_rotation,
                jitter: config.jitter,
            }),
        )?;
        loss_and_grad(params, s, &input, config.lambda_pose)
    };
    if config.threads == 1 {
        samples.iter().zip(seeds).map(run).collect()
    } else {
        samples.par_iter().zip(seeds.par_iter()).map(run).collect()
    }
}

/// Trains from `init` (or a fresh seeded model) on `samples`, holding out a
/// fraction of blueprints for validation.
pub fn train(samples: &[SequenceSample], config: &TrainConfig, init: Option<ModelParams>) -> Result<TrainOutput> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    let (train_ids, val_ids) = split_blueprints(samples, config.val_fraction, config.seed);
    let train_set: Vec<&SequenceSample> = samples.iter().filter(|s| train_ids.contains(&s.blueprint_id)).collect();
    let val_set: Vec<SequenceSample> = samples.iter().filter(|s| val_ids.contains(&s.blueprint_id)).cloned().collect();
    let run = || train_on(&train_set, &val_set, config, init);
    let mut out = if config.threads == 0 || config.threads == 1 {
        run()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        pool.install(run)?
    };
    out.train_blueprints = train_ids;
    out.val_blueprints = val_ids;
    Ok(out)
}

fn train_on(
    train_set: &[&SequenceSample],
    val_set: &[SequenceSample],
    config: &TrainConfig,
    init: Option<ModelParams>,
) -> Result<TrainOutput> {
    let mut params = match init {
        Some(p) => p,
        None => ModelParams::new(&config.model, config.seed)?,
    };
    let mut opt = AdamW::new(&params);
    let batches_per_epoch = train_set.len().div_ceil(config.batch_size);
    let total = (batches_per_epoch * config.epochs).max(1);
    let mut log = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut step = 0;
    let mut lr = one_cycle_lr(config, 0, total);
    for epoch in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ (epoch as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&SequenceSample> = chunk.iter().map(|&i| train_set[i]).collect();
            let seeds: Vec<u64> = chunk
                .iter()
                .map(|&i| config.seed ^ stable_hash(&format!("{epoch}/{i}")))
                .collect();
            let results = batch_grads(&params, &batch, &seeds, config)?;
            let mut grads: Vec<Mat> = params.tensors.iter().map(|t| Mat::zeros(t.rows, t.cols)).collect();
            let mut batch_loss = 0.0;
            for (l, g) in &results {
                batch_loss += l;
                for (acc, gi) in grads.iter_mut().zip(g) {
                    for (a, b) in acc.data.iter_mut().zip(&gi.data) {
                        *a += b;
                    }
                }
            }
            let inv = 1.0 / results.len() as f64;
            let mut norm2 = 0.0;
            for g in &mut grads {
                for v in &mut g.data {
                    *v *= inv;
                    norm2 += *v * *v;
                }
            }
            lr = one_cycle_lr(config, step, total);
            if !batch_loss.is_finite() || !norm2.is_finite() {
                return Err(Error::Divergence {
                    batch: step,
                    lr,
                    reason: format!("non-finite {}", if batch_loss.is_finite() { "gradient" } else { "loss" }),
                });
            }
            if config.max_grad_norm > 0.0 && norm2.sqrt() > config.max_grad_norm {
                let s = config.max_grad_norm / norm2.sqrt();
                grads.iter_mut().for_each(|g| g.data.iter_mut().for_each(|v| *v *= s));
            }
            opt.step(&mut params, &grads, lr, config);
            if !params.is_finite() {
                return Err(Error::Divergence {
                    batch: step,
                    lr,
                    reason: "non-finite parameters after update".into(),
                });
            }
            loss_sum += batch_loss;
            step += 1;
        }
        let val_1acc = if val_set.is_empty() {
            f64::NAN
        } else {
            one_step_accuracy(val_set, |s| {
                let input = prepare(s, None)?;
                Ok(forward_prepared(&input, &params)?.probabilities)
            })?
        };
        log.push(EpochLog {
            epoch: epoch + 1,
            train_loss: loss_sum / train_set.len().max(1) as f64,
            val_1acc,
            lr,
        });
    }
    Ok(TrainOutput {
        params,
        log,
        train_blueprints: BTreeSet::new(),
        val_blueprints: BTreeSet::new(),
    })
}

/// One-step accuracy of `params` on `samples`.
pub fn accuracy(params: &ModelParams, samples: &[SequenceSample]) -> Result<f64> {
    one_step_accuracy(samples, |s| {
        let input = prepare(s, None)?;
        Ok(forward_prepared(&input, params)?.probabilities)
    })
}
