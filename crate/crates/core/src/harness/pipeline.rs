//! On-disk workspace: every stage reads the previous stage's files and
//! writes its own, so stages can be run separately or chained.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::config::PipelineConfig;
use super::corpus::{corpus_entries, CorpusEntry, DatasetRecord, SequencesRecord, Split};
use super::generator::generate_synthetic_assembly;
use super::plan::{plan_assembly, AssemblyPlan, PlanMode};
use super::report::{metrics_table, report_svg, seq_acc_trend, TrendCheck};
use crate::blueprint::Blueprint;
use crate::disassembly::{emit_dataset, enumerate_sequences, SequenceSample};
use crate::error::{Error, Result};
use crate::model::{
    blueprint_clouds, evaluate, infer_sequence, load_checkpoint, save_checkpoint, train, write_log_csv, EvalBlueprint,
    EvalReport, ModelParams, SequenceInference, TrainOutput,
};

pub const CORPUS_FILE: &str = "corpus.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const SEQUENCES_FILE: &str = "sequences.jsonl";
pub const DATASET_FILE: &str = "dataset.jsonl";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const REPORT_SVG_FILE: &str = "report.svg";
pub const REPORT_MD_FILE: &str = "report.md";
pub const PLAN_FILE: &str = "plan.json";
pub const TIMING_FILE: &str = "timing.json";

/// Seq-Acc may rise once between neighbouring part counts by this many
/// percentage points without breaking the trend.
pub const TREND_TOLERANCE_POINTS: f64 = 2.0;

pub struct Workspace {
    pub root: PathBuf,
    /// Worker threads for blueprint-level stages; 0 uses all cores.
    pub jobs: usize,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path.display().to_string(), e))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path.display().to_string(), e))
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| Error::format(path.display().to_string(), e))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::format(format!("{} line {}", path.display(), i + 1), e))?,
        );
    }
    Ok(out)
}

/// Summary written by `eval`: the evaluation plus the trend check.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Metrics {
    pub report: EvalReport,
    pub trend: TrendCheck,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>, jobs: usize) -> Self {
        Self { root: root.into(), jobs }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn blueprint_dir(&self, entry: &CorpusEntry) -> PathBuf {
        let split = match entry.split {
            Split::Train => "train",
            Split::Test => "test",
        };
        self.root.join("blueprints").join(split).join(&entry.id)
    }

    fn par_map<T, R, F>(&self, items: &[T], f: F) -> Result<Vec<R>>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> Result<R> + Sync + Send,
    {
        if self.jobs == 1 {
            return items.iter().map(f).collect();
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        pool.install(|| items.par_iter().map(f).collect())
    }

    pub fn corpus(&self) -> Result<Vec<CorpusEntry>> {
        read_json(&self.path(CORPUS_FILE))
    }

    pub fn load_blueprint(&self, entry: &CorpusEntry) -> Result<Blueprint> {
        Blueprint::load(&self.blueprint_dir(entry))
    }

    /// Writes the config, the corpus listing and one directory per blueprint.
    pub fn generate(&self, config: &PipelineConfig) -> Result<Vec<CorpusEntry>> {
        config.validate()?;
        std::fs::create_dir_all(&self.root).map_err(|e| Error::io(&self.root, e))?;
        let path = self.path(CONFIG_FILE);
        std::fs::write(&path, config.to_toml()).map_err(|e| Error::io(&path, e))?;
        let entries = corpus_entries(&config.corpus, config.seed);
        self.par_map(&entries, |e| generate_synthetic_assembly(&e.spec)?.save(&self.blueprint_dir(e)))?;
        write_json(&self.path(CORPUS_FILE), &entries)?;
        Ok(entries)
    }

    pub fn enumerate(&self, config: &PipelineConfig) -> Result<Vec<SequencesRecord>> {
        let entries = self.corpus()?;
        let records = self.par_map(&entries, |e| {
            let bp = self.load_blueprint(e)?;
            let found = enumerate_sequences(&bp, &config.planner)?;
            Ok(SequencesRecord {
                blueprint_id: e.id.clone(),
                split: e.split,
                num_parts: bp.num_parts(),
                truncated: found.stats.truncated,
                sequences: found.sequences,
            })
        })?;
        write_jsonl(&self.path(SEQUENCES_FILE), &records)?;
        Ok(records)
    }

    pub fn sequences(&self) -> Result<Vec<SequencesRecord>> {
        read_jsonl(&self.path(SEQUENCES_FILE))
    }

    /// Samples for every blueprint with at least one sequence.
    pub fn dataset(&self, config: &PipelineConfig) -> Result<Vec<DatasetRecord>> {
        let config = config.resolved();
        let entries: HashMap<String, CorpusEntry> = self.corpus()?.into_iter().map(|e| (e.id.clone(), e)).collect();
        let records: Vec<SequencesRecord> = self.sequences()?.into_iter().filter(|r| !r.sequences.is_empty()).collect();
        let per = self.par_map(&records, |r| {
            let e = entries
                .get(&r.blueprint_id)
                .ok_or_else(|| Error::InvalidInput(format!("'{}' is not in the corpus", r.blueprint_id)))?;
            let bp = self.load_blueprint(e)?;
            Ok(emit_dataset(&bp, &r.sequences, &config.dataset)?
                .into_iter()
                .map(|sample| DatasetRecord { split: r.split, sample })
                .collect::<Vec<_>>())
        })?;
        let out: Vec<DatasetRecord> = per.into_iter().flatten().collect();
        write_jsonl(&self.path(DATASET_FILE), &out)?;
        Ok(out)
    }

    pub fn samples(&self, split: Split) -> Result<Vec<SequenceSample>> {
        Ok(read_jsonl::<DatasetRecord>(&self.path(DATASET_FILE))?
            .into_iter()
            .filter(|r| r.split == split)
            .map(|r| r.sample)
            .collect())
    }

    pub fn train(&self, config: &PipelineConfig) -> Result<TrainOutput> {
        let config = config.resolved();
        let samples = self.samples(Split::Train)?;
        let out = train(&samples, &config.train, None)?;
        save_checkpoint(&out.params, config.train.seed, &self.path(CHECKPOINT_FILE))?;
        write_log_csv(&out.log, &self.path(TRAIN_LOG_FILE))?;
        Ok(out)
    }

    pub fn checkpoint(&self, path: Option<&Path>) -> Result<ModelParams> {
        let default = self.path(CHECKPOINT_FILE);
        Ok(load_checkpoint(path.unwrap_or(&default))?.0)
    }

    /// One-step and sequence accuracy on the test split.
    pub fn evaluate(&self, config: &PipelineConfig, params: &ModelParams) -> Result<Metrics> {
        let config = config.resolved();
        let samples = self.samples(Split::Test)?;
        let entries: HashMap<String, CorpusEntry> = self.corpus()?.into_iter().map(|e| (e.id.clone(), e)).collect();
        let records: Vec<SequencesRecord> = self
            .sequences()?
            .into_iter()
            .filter(|r| r.split == Split::Test && !r.sequences.is_empty())
            .collect();
        let blueprints = self.par_map(&records, |r| {
            let e = entries
                .get(&r.blueprint_id)
                .ok_or_else(|| Error::InvalidInput(format!("'{}' is not in the corpus", r.blueprint_id)))?;
            self.load_blueprint(e)
        })?;
        let eval: Vec<EvalBlueprint> = blueprints
            .iter()
            .zip(&records)
            .map(|(blueprint, r)| EvalBlueprint {
                blueprint,
                sequences: &r.sequences,
            })
            .collect();
        let report = evaluate(params, &samples, &eval, &config.dataset)?;
        let trend = seq_acc_trend(&report.by_part_count, TREND_TOLERANCE_POINTS);
        let metrics = Metrics { report, trend };
        write_json(&self.path(METRICS_FILE), &metrics)?;
        Ok(metrics)
    }

    pub fn metrics(&self) -> Result<Metrics> {
        read_json(&self.path(METRICS_FILE))
    }

    /// Renders `metrics.json` as `report.md` and `report.svg`.
    pub fn report(&self) -> Result<Metrics> {
        let m = self.metrics()?;
        let mut md = String::from("# Sequence inference by part count\n\n");
        md.push_str(&metrics_table(&m.report));
        md.push_str(&format!(
            "\nSeq-Acc non-increasing in part count (one rise of at most {TREND_TOLERANCE_POINTS} points allowed): {}\n",
            if m.trend.holds { "yes" } else { "no" }
        ));
        for (a, b, d) in &m.trend.inversions {
            md.push_str(&format!("- rise of {d:.1} points from {a} to {b} parts\n"));
        }
        let path = self.path(REPORT_MD_FILE);
        std::fs::write(&path, md).map_err(|e| Error::io(&path, e))?;
        let path = self.path(REPORT_SVG_FILE);
        std::fs::write(&path, report_svg(&m.report)).map_err(|e| Error::io(&path, e))?;
        Ok(m)
    }

    /// Plans every test blueprint. `plan.json` holds the plans without
    /// wall-clock data; `timing.json` holds the per-level timings.
    pub fn plan(&self, config: &PipelineConfig, mode: PlanMode, params: Option<&ModelParams>) -> Result<Vec<AssemblyPlan>> {
        let config = config.resolved();
        let entries: Vec<CorpusEntry> = self.corpus()?.into_iter().filter(|e| e.split == Split::Test).collect();
        let plans = self.par_map(&entries, |e| plan_assembly(&self.load_blueprint(e)?, mode, params, &config))?;
        write_plans(&self.root, &plans)?;
        Ok(plans)
    }
}

/// Writes `plan.json` (timing stripped) and `timing.json` into `dir`.
pub fn write_plans(dir: &Path, plans: &[AssemblyPlan]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let stripped: Vec<AssemblyPlan> = plans.iter().map(AssemblyPlan::without_timing).collect();
    write_json(&dir.join(PLAN_FILE), &stripped)?;
    let timing: Vec<_> = plans
        .iter()
        .map(|p| serde_json::json!({"blueprint_id": p.blueprint_id, "timing": p.timing}))
        .collect();
    write_json(&dir.join(TIMING_FILE), &timing)
}

pub fn read_plans(dir: &Path) -> Result<Vec<AssemblyPlan>> {
    read_json(&dir.join(PLAN_FILE))
}

/// Greedy sequence for a single blueprint directory.
pub fn infer_blueprint(blueprint: &Blueprint, params: &ModelParams, config: &PipelineConfig) -> Result<SequenceInference> {
    let (target, parts) = blueprint_clouds(blueprint, &config.resolved().dataset)?;
    infer_sequence(&target, &parts, params)
}
