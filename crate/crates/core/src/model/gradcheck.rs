use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::ModelParams;
use super::tape::Mat;
use super::train::{loss_and_grad, prepare, sample_loss_value};
use crate::disassembly::SequenceSample;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub checked: usize,
    /// (tensor, entry, analytic, numeric) at the largest error.
    pub worst: Option<(String, usize, f64, f64)>,
}

/// `|a - n| / max(1e-8, |a| + |n|)`, zero when both vanish.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    if analytic == 0.0 && numeric == 0.0 {
        return 0.0;
    }
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares `analytic` gradients with central differences of `loss` at
/// `count` random entries of `values`.
pub fn check_gradients(
    values: &mut [Mat],
    names: &[String],
    analytic: &[Mat],
    mut loss: impl FnMut(&[Mat]) -> Result<f64>,
    epsilon: f64,
    count: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(Error::InvalidInput(format!("epsilon {epsilon} outside [1e-7, 1e-3]")));
    }
    let sizes: Vec<usize> = values.iter().map(|m| m.data.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        checked: 0,
        worst: None,
    };
    for _ in 0..count.min(total) {
        let mut flat = rng.random_range(0..total);
        let mut t = 0;
        while flat >= sizes[t] {
            flat -= sizes[t];
            t += 1;
        }
        let orig = values[t].data[flat];
        values[t].data[flat] = orig + epsilon;
        let plus = loss(values)?;
        values[t].data[flat] = orig - epsilon;
        let minus = loss(values)?;
        values[t].data[flat] = orig;
        let numeric = (plus - minus) / (2.0 * epsilon);
        let a = analytic[t].data[flat];
        let err = relative_error(a, numeric);
        report.checked += 1;
        if err > report.max_relative_error || report.worst.is_none() {
            report.max_relative_error = report.max_relative_error.max(err);
            report.worst = Some((names[t].clone(), flat, a, numeric));
        }
    }
    Ok(report)
}

/// Finite-difference check of the full training loss of one sample.
pub fn gradient_check(
    params: &ModelParams,
    sample: &SequenceSample,
    lambda_pose: f64,
    epsilon: f64,
    count: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let input = prepare(sample, None)?;
    let (_, analytic) = loss_and_grad(params, sample, &input, lambda_pose)?;
    let mut work = params.clone();
    let mut values = std::mem::take(&mut work.tensors);
    check_gradients(
        &mut values,
        &params.names,
        &analytic,
        |v| {
            work.tensors = v.to_vec();
            sample_loss_value(&work, sample, lambda_pose)
        },
        epsilon,
        count,
        seed,
    )
}
