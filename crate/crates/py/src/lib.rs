//! Python bindings. Structured results are returned as JSON text.

use std::path::PathBuf;

use asmplan::disassembly::{enumerate_sequences, PlannerConfig};
use asmplan::harness::{generate_synthetic_assembly, infer_blueprint, plan_assembly, BlueprintSpec, Family, PipelineConfig, PlanMode};
use asmplan::model::{load_checkpoint, random_rollout_baseline};
use asmplan::{Blueprint, Error};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::InvalidInput(_) | Error::InvalidBlueprint(_) | Error::Format { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn config(toml: Option<&str>) -> PyResult<PipelineConfig> {
    let c = match toml {
        Some(t) => PipelineConfig::from_toml(t).map_err(py_err)?,
        None => PipelineConfig::default(),
    };
    Ok(c.resolved())
}

/// Writes a generated blueprint into `out_dir` and returns its id.
#[pyfunction]
fn generate(family: &str, num_parts: usize, seed: u64, out_dir: PathBuf) -> PyResult<String> {
    let family: Family = family.parse().map_err(py_err)?;
    let bp = generate_synthetic_assembly(&BlueprintSpec::new(family, num_parts, seed)).map_err(py_err)?;
    bp.save(&out_dir).map_err(py_err)?;
    Ok(bp.id)
}

/// Every feasible assembly order of the blueprint in `blueprint_dir`.
#[pyfunction]
fn enumerate(blueprint_dir: PathBuf) -> PyResult<Vec<Vec<usize>>> {
    let bp = Blueprint::load(&blueprint_dir).map_err(py_err)?;
    let r = enumerate_sequences(&bp, &PlannerConfig::default()).map_err(py_err)?;
    Ok(r.sequences.into_iter().map(|s| s.order).collect())
}

/// Greedy model sequence for a blueprint.
#[pyfunction]
#[pyo3(signature = (blueprint_dir, checkpoint, config_toml=None))]
fn infer(blueprint_dir: PathBuf, checkpoint: PathBuf, config_toml: Option<&str>) -> PyResult<Vec<usize>> {
    let bp = Blueprint::load(&blueprint_dir).map_err(py_err)?;
    let (params, _) = load_checkpoint(&checkpoint).map_err(py_err)?;
    let r = infer_blueprint(&bp, &params, &config(config_toml)?).map_err(py_err)?;
    Ok(r.sequence.order)
}

/// Full plan as JSON.
#[pyfunction]
#[pyo3(signature = (blueprint_dir, mode="oracle", checkpoint=None, config_toml=None))]
fn plan(blueprint_dir: PathBuf, mode: &str, checkpoint: Option<PathBuf>, config_toml: Option<&str>) -> PyResult<String> {
    let mode: PlanMode = mode.parse().map_err(py_err)?;
    let params = match checkpoint {
        Some(p) => Some(load_checkpoint(&p).map_err(py_err)?.0),
        None => None,
    };
    let bp = Blueprint::load(&blueprint_dir).map_err(py_err)?;
    let plan = plan_assembly(&bp, mode, params.as_ref(), &config(config_toml)?).map_err(py_err)?;
    serde_json::to_string(&plan).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Chance that a uniformly random order is one of `num_sequences`.
#[pyfunction]
fn rollout_baseline(num_parts: usize, num_sequences: usize) -> f64 {
    random_rollout_baseline(num_parts, num_sequences)
}

#[pymodule]
fn asmplan_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate, m)?)?;
    m.add_function(wrap_pyfunction!(infer, m)?)?;
    m.add_function(wrap_pyfunction!(plan, m)?)?;
    m.add_function(wrap_pyfunction!(rollout_baseline, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
