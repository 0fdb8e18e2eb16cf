use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use crate::blueprint::Blueprint;
use crate::contact::{plan_contacts, ContactAssignment};
use crate::disassembly::{enumerate_sequences, AssemblySequence, DisassemblyPlanner};
use crate::error::{Error, Result};
use crate::model::{blueprint_clouds, infer_sequence, ModelParams};
use crate::motion::{plan_all_motions, resting_poses, Trajectory};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanMode {
    Oracle,
    Model,
}

impl std::str::FromStr for PlanMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(PlanMode::Oracle),
            "model" => Ok(PlanMode::Model),
            _ => Err(Error::InvalidInput(format!("unknown plan mode '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanLevel {
    Sequence,
    Motion,
    Contact,
}

impl std::fmt::Display for PlanLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PlanLevel::Sequence => "sequence",
            PlanLevel::Motion => "motion",
            PlanLevel::Contact => "contact",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanFailure {
    pub level: PlanLevel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub part: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for PlanFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}] {}", self.level, self.message)
    }
}

/// Wall-clock time per level (ms).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanTiming {
    pub sequence_ms: f64,
    pub motion_ms: f64,
    pub contact_ms: f64,
    pub total_ms: f64,
}

/// Sequence, per-step trajectories and per-step contacts. On success the
/// three are aligned index-for-index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssemblyPlan {
    pub blueprint_id: String,
    pub mode: PlanMode,
    pub sequence: AssemblySequence,
    pub trajectories: Vec<Trajectory>,
    pub contacts: Vec<ContactAssignment>,
    pub feasible: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<PlanFailure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<PlanTiming>,
}

impl AssemblyPlan {
    /// Copy without wall-clock data, for reproducible output files.
    pub fn without_timing(&self) -> Self {
        Self {
            timing: None,
            ..self.clone()
        }
    }
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Sequence (enumerated or inferred), then motions, then contacts. A level
/// that fails is recorded in the plan and stops the later levels; model
/// sequences that cannot be replayed are reported, not repaired.
pub fn plan_assembly(
    blueprint: &Blueprint,
    mode: PlanMode,
    params: Option<&ModelParams>,
    config: &PipelineConfig,
) -> Result<AssemblyPlan> {
    let started = Instant::now();
    let mut timing = PlanTiming::default();
    let mut plan = AssemblyPlan {
        blueprint_id: blueprint.id.clone(),
        mode,
        sequence: AssemblySequence::from_order(Vec::new()),
        trajectories: Vec::new(),
        contacts: Vec::new(),
        feasible: false,
        failure: None,
        timing: None,
    };
    let finish = |mut plan: AssemblyPlan, mut timing: PlanTiming| {
        timing.total_ms = ms(started);
        plan.timing = Some(timing);
        Ok(plan)
    };

    let t = Instant::now();
    let sequence = match mode {
        PlanMode::Oracle => {
            let found = enumerate_sequences(blueprint, &config.planner)?;
            found.sequences.into_iter().next().ok_or_else(|| PlanFailure {
                level: PlanLevel::Sequence,
                step: None,
                part: None,
                message: "no feasible assembly sequence found".into(),
            })
        }
        PlanMode::Model => {
            let params = params.ok_or_else(|| Error::InvalidInput("model mode needs a checkpoint".into()))?;
            let (target, parts) = blueprint_clouds(blueprint, &config.dataset)?;
            let order = infer_sequence(&target, &parts, params)?.sequence.order;
            let planner = DisassemblyPlanner::new(blueprint, config.planner.clone())?;
            planner.check_root()?;
            planner.disassemble_in_order(&order).map_err(|k| {
                plan.sequence = AssemblySequence::from_order(order.clone());
                PlanFailure {
                    level: PlanLevel::Sequence,
                    step: Some(k),
                    part: Some(order[k]),
                    message: format!("inferred sequence cannot be replayed: part {} at step {k}", order[k]),
                }
            })
        }
    };
    timing.sequence_ms = ms(t);
    plan.sequence = match sequence {
        Ok(s) => s,
        Err(f) => {
            plan.failure = Some(f);
            return finish(plan, timing);
        }
    };

    let t = Instant::now();
    let motions = plan_all_motions(blueprint, &plan.sequence, &resting_poses(blueprint), &config.rrt)?;
    timing.motion_ms = ms(t);
    plan.trajectories = match motions {
        Ok(tr) => tr,
        Err(f) => {
            plan.failure = Some(PlanFailure {
                level: PlanLevel::Motion,
                step: Some(f.step),
                part: Some(f.part),
                message: f.to_string(),
            });
            return finish(plan, timing);
        }
    };

    let t = Instant::now();
    let contacts = plan_contacts(blueprint, &plan.sequence, &plan.trajectories, &config.contact)?;
    timing.contact_ms = ms(t);
    match contacts {
        Ok(c) => {
            plan.contacts = c;
            plan.feasible = true;
        }
        Err(f) => {
            plan.failure = Some(PlanFailure {
                level: PlanLevel::Contact,
                step: Some(f.step),
                part: Some(f.part),
                message: f.to_string(),
            })
        }
    }
    finish(plan, timing)
}
