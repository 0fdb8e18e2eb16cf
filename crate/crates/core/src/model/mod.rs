//! Learned next-part prediction over point clouds.

pub mod checkpoint;
pub mod gradcheck;
pub mod infer;
pub mod network;
pub mod params;
pub mod tape;
pub mod train;

pub use checkpoint::{checkpoint_bytes, load_checkpoint, parse_checkpoint, save_checkpoint, CheckpointHeader};
pub use gradcheck::{check_gradients, gradient_check, relative_error, GradCheckReport};
pub use infer::{
    argmax, blueprint_clouds, evaluate, infer_sequence, one_step_accuracy, random_one_step_baseline,
    random_rollout_baseline, EvalBlueprint, EvalReport, PartCountMetrics, SequenceInference,
};
pub use network::{
    attention, encode_part, encode_target, forward, past_block, AttentionOutput, AttentionSlot, Prediction, Prepared,
};
pub use params::{ModelConfig, ModelParams};
pub use tape::{Mat, Tape, Var};
pub use train::{accuracy, split_blueprints, train, write_log_csv, EpochLog, TrainConfig, TrainOutput};
