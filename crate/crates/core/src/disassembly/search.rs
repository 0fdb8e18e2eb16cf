//! Breadth-first disassembly search.

use std::collections::HashMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::action::{place_props, removal_directions, removal_motion, DisassemblyAction, NUM_DIRECTIONS};
use super::state::{full_mask, AssemblySequence, AssemblyState, VisitedSet};
use crate::blueprint::Blueprint;
use crate::contact::antipodal_candidates;
use crate::error::{Error, Result};
use crate::geometry::{
    check_collision, default_step, point_near_mesh, sample_point_cloud, sweep_motion_free_fraction, InertialProps,
    PointCloud, Pose, TriMesh, PLANNING_CLEARANCE,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    /// Clearance for removal sweeps (m).
    pub clearance: f64,
    /// Sweep interpolation step; `None` uses the mesh-dependent default.
    pub sweep_step: Option<f64>,
    pub check_executable: bool,
    /// Surface samples per part for the executability test.
    pub exec_cloud_points: usize,
    pub mu: f64,
    pub antipodal_tol_deg: f64,
    /// Maximum angle between a push normal and the removal direction.
    pub push_cone_deg: f64,
    pub max_states: usize,
    pub max_sequences: usize,
    pub time_budget_s: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            clearance: PLANNING_CLEARANCE,
            sweep_step: None,
            check_executable: true,
            exec_cloud_points: 256,
            mu: 0.2,
            antipodal_tol_deg: 10.0,
            push_cone_deg: 45.0,
            max_states: 50_000,
            max_sequences: 10_000,
            time_budget_s: 60.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    pub states: usize,
    pub expanded: usize,
    pub removal_attempts: usize,
    pub edges: usize,
    pub truncated: bool,
    pub elapsed_ms: f64,
}

#[derive(Clone, Debug)]
pub struct SearchResult {
    pub sequences: Vec<AssemblySequence>,
    pub stats: SearchStats,
}

/// Per-blueprint data shared by all removal attempts.
pub struct DisassemblyPlanner<'a> {
    blueprint: &'a Blueprint,
    config: PlannerConfig,
    /// Inertial properties at the target poses.
    props: Vec<InertialProps>,
    /// Surface samples at the target poses, generated on demand.
    clouds: Vec<std::sync::OnceLock<PointCloud>>,
    escape: f64,
}

/// `D = 2 x` the diameter of the assembled bounding sphere.
pub fn escape_distance(blueprint: &Blueprint) -> f64 {
    4.0 * blueprint.bounding_sphere().1
}

impl<'a> DisassemblyPlanner<'a> {
    pub fn new(blueprint: &'a Blueprint, config: PlannerConfig) -> Result<Self> {
        let props = blueprint
            .inertial_props()?
            .iter()
            .zip(&blueprint.target_poses)
            .map(|(p, pose)| place_props(p, pose))
            .collect();
        Ok(Self {
            blueprint,
            config,
            props,
            clouds: (0..blueprint.num_parts()).map(|_| std::sync::OnceLock::new()).collect(),
            escape: escape_distance(blueprint),
        })
    }

    pub fn blueprint(&self) -> &Blueprint {
        self.blueprint
    }

    pub fn config(&self) -> &PlannerConfig {
        &self.config
    }

    pub fn escape(&self) -> f64 {
        self.escape
    }

    /// Inertial properties of `part` placed at its target pose.
    pub fn props(&self, part: usize) -> &InertialProps {
        &self.props[part]
    }

    pub fn root(&self) -> AssemblyState {
        AssemblyState::assembled(self.blueprint.target_poses.clone())
    }

    /// Fails when any two parts, or a part and a fixture, touch or overlap.
    pub fn check_root(&self) -> Result<()> {
        let bp = self.blueprint;
        let n = bp.num_parts();
        for i in 0..n {
            for j in i + 1..n {
                if check_collision(&bp.meshes[i], &bp.target_poses[i], &bp.meshes[j], &bp.target_poses[j], 0.0) {
                    return Err(Error::InvalidBlueprint(format!("parts {i} and {j} interpenetrate")));
                }
            }
            for (k, (m, p)) in bp.environment.iter().enumerate() {
                if check_collision(&bp.meshes[i], &bp.target_poses[i], m, p, 0.0) {
                    return Err(Error::InvalidBlueprint(format!("part {i} interpenetrates fixture {k}")));
                }
            }
        }
        Ok(())
    }

    /// Parts present in `state` other than `moving`, plus fixtures.
    pub fn obstacles(&self, state: &AssemblyState, moving: usize) -> Vec<(&TriMesh, Pose)> {
        let bp = self.blueprint;
        state
            .present()
            .filter(|&j| j != moving)
            .map(|j| (&bp.meshes[j], state.poses[j]))
            .chain(bp.environment.iter().map(|(m, p)| (m, *p)))
            .collect()
    }

    pub fn action(&self, part: usize, direction_index: usize) -> DisassemblyAction {
        DisassemblyAction {
            part_id: part,
            direction_index,
            magnitude: self.escape,
        }
    }

    /// Sweeps the part out of the assembly; returns the child state when the
    /// whole sweep is free.
    pub fn attempt_removal(&self, state: &AssemblyState, action: &DisassemblyAction) -> Option<AssemblyState> {
        let part = action.part_id;
        debug_assert!(!state.is_removed(part));
        let mesh = &self.blueprint.meshes[part];
        let start = state.poses[part];
        let motion = removal_motion(action, &start, &self.props[part]);
        let step = self.config.sweep_step.unwrap_or_else(|| default_step(mesh, &motion));
        let obstacles = self.obstacles(state, part);
        if sweep_motion_free_fraction(mesh, &motion, &obstacles, self.config.clearance, step) < 1.0 {
            return None;
        }
        let mut poses = state.poses.clone();
        poses[part] = motion.end();
        Some(AssemblyState {
            poses,
            removed: state.removed | (1 << part),
            parent: None,
            action: Some(*action),
        })
    }

    fn cloud(&self, part: usize) -> &PointCloud {
        self.clouds[part].get_or_init(|| {
            let bp = self.blueprint;
            sample_point_cloud(
                &bp.meshes[part],
                &bp.target_poses[part],
                self.config.exec_cloud_points,
                part as u64,
            )
            .expect("meshes are non-empty")
        })
    }

    /// True when the part can be held by an antipodal grasp or pushed along
    /// the removal direction without touching the other present parts.
    pub fn is_executable(&self, before: &AssemblyState, action: &DisassemblyAction) -> bool {
        let part = action.part_id;
        let bp = self.blueprint;
        let cloud = self.cloud(part);
        let clearance = self.config.clearance;
        let others: Vec<usize> = before.present().filter(|&j| j != part).collect();
        let is_clear = |k: usize| {
            others
                .iter()
                .all(|&j| !point_near_mesh(&bp.meshes[j], &before.poses[j], &cloud.points[k], clearance))
        };
        let grasps = antipodal_candidates(cloud, self.config.mu, self.config.antipodal_tol_deg);
        if grasps.iter().any(|&(a, b)| is_clear(a) && is_clear(b)) {
            return true;
        }
        let heading = removal_directions(&self.props[part])[action.direction_index].heading();
        let cos_max = self.config.push_cone_deg.to_radians().cos();
        (0..cloud.len()).any(|k| (-cloud.normals[k]).dot(&heading) >= cos_max && is_clear(k))
    }

    /// First executable removal of `part` from `state`, trying directions in
    /// order.
    fn first_removal(&self, state: &AssemblyState, part: usize) -> (Option<AssemblyState>, usize) {
        for j in 0..NUM_DIRECTIONS {
            let action = self.action(part, j);
            if let Some(child) = self.attempt_removal(state, &action) {
                if !self.config.check_executable || self.is_executable(state, &action) {
                    return (Some(child), j + 1);
                }
            }
        }
        (None, NUM_DIRECTIONS)
    }

    /// Removal actions taking the assembly apart in the reverse of `order`,
    /// or the position in `order` of the first part that cannot come out.
    pub fn disassemble_in_order(&self, order: &[usize]) -> std::result::Result<AssemblySequence, usize> {
        let mut state = self.root();
        let mut actions = Vec::with_capacity(order.len());
        for (k, &part) in order.iter().enumerate().rev() {
            match self.first_removal(&state, part).0 {
                Some(child) => {
                    actions.push(child.action.expect("removals carry their action"));
                    state = child;
                }
                None => return Err(k),
            }
        }
        actions.reverse();
        Ok(AssemblySequence {
            order: order.to_vec(),
            removal_actions: actions,
        })
    }

    /// Enumerates every removal order reachable within the limits and
    /// returns them reversed into assembly sequences.
    pub fn enumerate(&self) -> Result<SearchResult> {
        let started = Instant::now();
        self.check_root()?;
        let n = self.blueprint.num_parts();
        let full = full_mask(n);
        let mut stats = SearchStats::default();

        let mut arena = vec![self.root()];
        let mut index: HashMap<u64, usize> = HashMap::new();
        let mut visited = VisitedSet::default();
        visited.is_novel(&arena[0]);
        index.insert(0, 0);
        // Removal edges out of each state: (part, action, child index).
        let mut edges: Vec<Vec<(usize, DisassemblyAction, usize)>> = vec![Vec::new()];
        let mut layer = vec![0usize];

        while !layer.is_empty() {
            if started.elapsed().as_secs_f64() > self.config.time_budget_s || arena.len() >= self.config.max_states {
                stats.truncated = true;
                break;
            }
            let expansions: Vec<(Vec<AssemblyState>, usize)> = layer
                .par_iter()
                .map(|&s| {
                    let state = &arena[s];
                    let mut tries = 0;
                    let children = state
                        .present()
                        .filter_map(|part| {
                            let (child, t) = self.first_removal(state, part);
                            tries += t;
                            child
                        })
                        .collect();
                    (children, tries)
                })
                .collect();
            let mut next = Vec::new();
            for (&s, (children, tries)) in layer.iter().zip(expansions) {
                stats.expanded += 1;
                stats.removal_attempts += tries;
                for mut child in children {
                    let action = child.action.expect("children carry their action");
                    child.parent = Some(s);
                    let target = if visited.is_novel(&child) {
                        if arena.len() >= self.config.max_states {
                            stats.truncated = true;
                            continue;
                        }
                        let id = arena.len();
                        index.insert(child.removed, id);
                        arena.push(child);
                        edges.push(Vec::new());
                        next.push(id);
                        id
                    } else {
                        index[&child.removed]
                    };
                    edges[s].push((action.part_id, action, target));
                    stats.edges += 1;
                }
            }
            next.sort_by_key(|&i| arena[i].removed);
            layer = next;
        }
        stats.states = arena.len();

        let mut sequences = Vec::new();
        let mut path: Vec<DisassemblyAction> = Vec::new();
        collect_paths(
            0,
            &arena,
            &edges,
            full,
            &mut path,
            &mut sequences,
            self.config.max_sequences,
            &mut stats.truncated,
        );
        stats.elapsed_ms = started.elapsed().as_secs_f64() * 1e3;
        if sequences.is_empty() {
            return Err(Error::Planning(format!(
                "no disassembly sequence found for '{}' ({} states, {} edges, truncated: {})",
                self.blueprint.id, stats.states, stats.edges, stats.truncated
            )));
        }
        Ok(SearchResult { sequences, stats })
    }
}

#[allow(clippy::too_many_arguments)]
fn collect_paths(
    node: usize,
    arena: &[AssemblyState],
    edges: &[Vec<(usize, DisassemblyAction, usize)>],
    full: u64,
    path: &mut Vec<DisassemblyAction>,
    out: &mut Vec<AssemblySequence>,
    limit: usize,
    truncated: &mut bool,
) {
    if out.len() >= limit {
        *truncated = true;
        return;
    }
    if arena[node].removed == full {
        let removal_actions: Vec<DisassemblyAction> = path.iter().rev().copied().collect();
        out.push(AssemblySequence {
            order: removal_actions.iter().map(|a| a.part_id).collect(),
            removal_actions,
        });
        return;
    }
    for &(_, action, child) in &edges[node] {
        path.push(action);
        collect_paths(child, arena, edges, full, path, out, limit, truncated);
        path.pop();
    }
}

/// Enumerates all feasible assembly sequences of `blueprint`.
pub fn enumerate_sequences(blueprint: &Blueprint, config: &PlannerConfig) -> Result<SearchResult> {
    DisassemblyPlanner::new(blueprint, config.clone())?.enumerate()
}
