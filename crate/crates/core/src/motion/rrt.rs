//! Bidirectional RRT-connect over part poses.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::trajectory::{edge_samples, pose_distance, Trajectory};
use crate::geometry::{check_collision, Pose, TriMesh, PLANNING_CLEARANCE};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RrtConfig {
    pub max_iters: usize,
    /// Longest tree edge, in the weighted pose metric (m).
    pub step_size: f64,
    /// Probability of steering towards the other tree's root.
    pub goal_bias_connect: f64,
    pub seed: u64,
    pub shortcut_rounds: usize,
    /// Clearance required along the continuous path (m).
    pub clearance: f64,
    /// Largest point displacement between checked poses (m).
    pub resolution: f64,
    /// Least extra room around the start and goal when sampling
    /// translations (m); the start-goal distance and twice the part radius
    /// are used when larger.
    pub sampling_margin: f64,
}

impl Default for RrtConfig {
    fn default() -> Self {
        Self {
            max_iters: 20_000,
            step_size: 0.05,
            goal_bias_connect: 0.1,
            seed: 0,
            shortcut_rounds: 100,
            clearance: PLANNING_CLEARANCE,
            resolution: 0.002,
            sampling_margin: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MotionFailure {
    StartInCollision,
    GoalInCollision,
    Exhausted { iterations: usize },
}

impl std::fmt::Display for MotionFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MotionFailure::StartInCollision => write!(f, "start pose is in collision"),
            MotionFailure::GoalInCollision => write!(f, "goal pose is in collision"),
            MotionFailure::Exhausted { iterations } => write!(f, "no path after {iterations} iterations"),
        }
    }
}

struct Checker<'a> {
    mesh: &'a TriMesh,
    obstacles: &'a [(&'a TriMesh, Pose)],
    clearance: f64,
    /// Samples are checked with extra margin so the path between them keeps
    /// `clearance`: no point moves more than `resolution / 2` to the nearest
    /// checked pose.
    edge_clearance: f64,
    radius: f64,
    resolution: f64,
}

impl Checker<'_> {
    fn free(&self, pose: &Pose, clearance: f64) -> bool {
        !self
            .obstacles
            .iter()
            .any(|(m, p)| check_collision(self.mesh, pose, m, p, clearance))
    }

    /// Last free pose when walking from `a` towards `b`, and whether `b`
    /// itself was reached.
    fn walk(&self, a: &Pose, b: &Pose) -> (Option<Pose>, bool) {
        let mut last = None;
        for p in edge_samples(a, b, self.radius, self.resolution) {
            if !self.free(&p, self.edge_clearance) {
                return (last, false);
            }
            last = Some(p);
        }
        (last, true)
    }

    fn edge_free(&self, a: &Pose, b: &Pose) -> bool {
        self.walk(a, b).1
    }
}

struct Tree {
    poses: Vec<Pose>,
    parent: Vec<usize>,
}

impl Tree {
    fn new(root: Pose) -> Self {
        Self {
            poses: vec![root],
            parent: vec![0],
        }
    }

    fn add(&mut self, pose: Pose, parent: usize) -> usize {
        self.poses.push(pose);
        self.parent.push(parent);
        self.poses.len() - 1
    }

    fn nearest(&self, q: &Pose, radius: f64) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, p) in self.poses.iter().enumerate() {
            let d = pose_distance(p, q, radius);
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    /// Poses from node `i` back to the root.
    fn branch(&self, mut i: usize) -> Vec<Pose> {
        let mut out = vec![self.poses[i]];
        while i != 0 {
            i = self.parent[i];
            out.push(self.poses[i]);
        }
        out
    }
}

#[derive(PartialEq)]
enum Extend {
    Reached(usize),
    Advanced(usize),
    Blocked(usize),
    Trapped,
}

fn extend(tree: &mut Tree, target: &Pose, checker: &Checker, step: f64) -> Extend {
    let near = tree.nearest(target, checker.radius);
    let from = tree.poses[near];
    let d = pose_distance(&from, target, checker.radius);
    let (goal, exact) = if d <= step {
        (*target, true)
    } else {
        (from.interpolate(target, step / d), false)
    };
    match checker.walk(&from, &goal) {
        (Some(p), true) => {
            let id = tree.add(if exact { *target } else { p }, near);
            if exact {
                Extend::Reached(id)
            } else {
                Extend::Advanced(id)
            }
        }
        (Some(p), false) => Extend::Blocked(tree.add(p, near)),
        (None, _) => Extend::Trapped,
    }
}

fn connect(tree: &mut Tree, target: &Pose, checker: &Checker, step: f64) -> Option<usize> {
    loop {
        match extend(tree, target, checker, step) {
            Extend::Reached(id) => return Some(id),
            Extend::Advanced(_) => continue,
            Extend::Blocked(_) | Extend::Trapped => return None,
        }
    }
}

fn random_rotation(rng: &mut ChaCha8Rng) -> UnitQuaternion<f64> {
    let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    let tau = std::f64::consts::TAU;
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    UnitQuaternion::new_normalize(Quaternion::new(
        b * (tau * u3).cos(),
        a * (tau * u2).sin(),
        a * (tau * u2).cos(),
        b * (tau * u3).sin(),
    ))
}

/// Plans a path for `mesh` from `start` to `goal` among static obstacles.
pub fn plan_part_motion(
    part_id: usize,
    mesh: &TriMesh,
    start: &Pose,
    goal: &Pose,
    obstacles: &[(&TriMesh, Pose)],
    config: &RrtConfig,
) -> Result<Trajectory, MotionFailure> {
    plan_part_motion_seeded(part_id, mesh, start, goal, obstacles, config, &[])
}

/// As [`plan_part_motion`], with a hint path ending at `goal` whose free
/// prefix (walked backwards from the goal) pre-populates the goal tree.
pub fn plan_part_motion_seeded(
    part_id: usize,
    mesh: &TriMesh,
    start: &Pose,
    goal: &Pose,
    obstacles: &[(&TriMesh, Pose)],
    config: &RrtConfig,
    seed_path: &[Pose],
) -> Result<Trajectory, MotionFailure> {
    let radius = mesh.radius_about_origin();
    let checker = Checker {
        mesh,
        obstacles,
        clearance: config.clearance,
        edge_clearance: config.clearance + 0.5 * config.resolution,
        radius,
        resolution: config.resolution,
    };
    if !checker.free(start, checker.clearance) {
        return Err(MotionFailure::StartInCollision);
    }
    if !checker.free(goal, checker.clearance) {
        return Err(MotionFailure::GoalInCollision);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ (part_id as u64).wrapping_mul(0x9e3779b97f4a7c15));
    let finish = |path: Vec<Pose>, rng: &mut ChaCha8Rng| Trajectory {
        part_id,
        waypoints: shortcut(path, &checker, config.shortcut_rounds, rng),
        step_resolution: config.resolution,
    };

    if checker.edge_free(start, goal) {
        return Ok(finish(vec![*start, *goal], &mut rng));
    }

    // Detours can be as wide as the trip itself.
    let span = (goal.translation - start.translation).norm();
    let margin = config.sampling_margin.max(2.0 * radius).max(span);
    let mut lo = start.translation.inf(&goal.translation);
    let mut hi = start.translation.sup(&goal.translation);
    for p in seed_path {
        lo = lo.inf(&p.translation);
        hi = hi.sup(&p.translation);
    }
    lo -= Vector3::repeat(margin);
    hi += Vector3::repeat(margin);

    let mut trees = [Tree::new(*start), Tree::new(*goal)];
    // Grow the goal tree along the hint as far as it stays free.
    let mut tip = 0;
    for p in seed_path.iter().rev().skip_while(|p| pose_distance(p, goal, radius) < 1e-12) {
        if !checker.edge_free(&trees[1].poses[tip], p) {
            break;
        }
        tip = trees[1].add(*p, tip);
    }
    if tip != 0 {
        let target = trees[1].poses[tip];
        if let Some(a) = connect(&mut trees[0], &target, &checker, config.step_size) {
            return Ok(finish(join(&trees[0], a, &trees[1], tip), &mut rng));
        }
    }

    let mut forward = true;
    for _ in 0..config.max_iters {
        let other = if forward { 1 } else { 0 };
        let q = if rng.random::<f64>() < config.goal_bias_connect {
            trees[other].poses[0]
        } else {
            let t = Vector3::from_fn(|k, _| rng.random_range(lo[k]..=hi[k]));
            Pose::new(t, random_rotation(&mut rng))
        };
        let [t0, t1] = &mut trees;
        let (a_tree, b_tree) = if forward { (t0, t1) } else { (t1, t0) };
        let new = match extend(a_tree, &q, &checker, config.step_size) {
            Extend::Reached(id) | Extend::Advanced(id) | Extend::Blocked(id) => id,
            Extend::Trapped => {
                forward = !forward;
                continue;
            }
        };
        let target = a_tree.poses[new];
        if let Some(b) = connect(b_tree, &target, &checker, config.step_size) {
            let path = if forward {
                join(a_tree, new, b_tree, b)
            } else {
                join(b_tree, b, a_tree, new)
            };
            return Ok(finish(path, &mut rng));
        }
        forward = !forward;
    }
    Err(MotionFailure::Exhausted {
        iterations: config.max_iters,
    })
}

/// Start-tree branch to node `a`, then goal-tree branch from node `b`.
fn join(start_tree: &Tree, a: usize, goal_tree: &Tree, b: usize) -> Vec<Pose> {
    let mut path = start_tree.branch(a);
    path.reverse();
    let rest = goal_tree.branch(b);
    // Both branches end at the shared connection pose.
    path.extend(rest.into_iter().skip(1));
    path
}

/// Random pairwise shortcutting; never lengthens the path.
fn shortcut(mut path: Vec<Pose>, checker: &Checker, rounds: usize, rng: &mut ChaCha8Rng) -> Vec<Pose> {
    for _ in 0..rounds {
        if path.len() < 3 {
            break;
        }
        let i = rng.random_range(0..path.len() - 2);
        let j = rng.random_range(i + 2..path.len());
        if checker.edge_free(&path[i], &path[j]) {
            path.drain(i + 1..j);
        }
    }
    path
}
