//! Fixture generation and end-to-end plan synthesis.

pub mod config;
pub mod corpus;
pub mod generator;
pub mod pipeline;
pub mod plan;
pub mod report;

pub use config::{CorpusConfig, PipelineConfig};
pub use corpus::{corpus_entries, CorpusEntry, DatasetRecord, SequencesRecord, Split};
pub use generator::{generate_synthetic_assembly, BlueprintSpec, Dimensions, Family};
pub use pipeline::{infer_blueprint, read_jsonl, read_plans, write_jsonl, write_plans, Metrics, Workspace};
pub use plan::{plan_assembly, AssemblyPlan, PlanFailure, PlanLevel, PlanMode, PlanTiming};
pub use report::{metrics_table, report_svg, seq_acc_trend, TrendCheck};
