//! Single-point pushing contacts under a Coulomb friction cone.

use nalgebra::{Matrix3, Vector3, Vector6};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::wrench::{grasp_map, WrenchTarget};
use crate::geometry::{farthest_point_indices, PointCloud};

/// Regularization weight of the constrained solve.
pub const PUSH_REGULARIZATION: f64 = 1e-6;
const MAX_ITERS: usize = 500;
const GRAD_TOL: f64 = 1e-9;

/// Outcome of one fixed-point force solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PushSolve {
    /// Contact-frame force `(t1, t2, n)`.
    pub force: Vector3<f64>,
    pub residual: f64,
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PushContact {
    #[serde(rename = "c")]
    pub point: Vector3<f64>,
    /// Inward surface normal at the contact.
    pub normal: Vector3<f64>,
    #[serde(rename = "F")]
    pub force: Vector3<f64>,
    pub residual: f64,
}

/// Best attempt when no sampled point can realize the wrench.
#[derive(Clone, Debug, PartialEq)]
pub struct PushFailure {
    pub best_residual: f64,
    pub best_point: Vector3<f64>,
}

/// Acceptance threshold on `|G F - W|`.
pub fn residual_tolerance(w: &WrenchTarget) -> f64 {
    1e-6 * w.norm() + 1e-9
}

/// Projection onto `{x : |(x1, x2)| <= mu x3}`.
pub fn project_cone(x: &Vector3<f64>, mu: f64) -> Vector3<f64> {
    let s = x.xy().norm();
    let z = x.z;
    if s <= mu * z {
        return *x;
    }
    if mu * s + z <= 0.0 {
        return Vector3::zeros();
    }
    let t = (mu * s + z) / (1.0 + mu * mu);
    let dir = if s > 0.0 { x.xy() / s } else { x.xy() };
    Vector3::new(dir.x * mu * t, dir.y * mu * t, t)
}

pub fn in_cone(f: &Vector3<f64>, mu: f64) -> bool {
    f.z >= 0.0 && f.xy().norm() <= mu * f.z
}

/// Contact force at `c` (inward `normal`) that best realizes `w`.
///
/// The exact least-squares force is used when it already lies in the cone;
/// otherwise the regularized problem is solved by accelerated projected
/// gradient. The solution is accepted iff its residual passes
/// [`residual_tolerance`].
pub fn solve_push_force(
    c: &Vector3<f64>,
    normal: &Vector3<f64>,
    com: &Vector3<f64>,
    w: &WrenchTarget,
    mu: f64,
) -> PushSolve {
    assert!(mu > 0.0, "friction coefficient must be positive");
    let g = grasp_map(c, normal, com);
    let target: Vector6<f64> = w.to_vector();
    let gtg: Matrix3<f64> = g.transpose() * g;
    let gtw = g.transpose() * target;
    let tol = residual_tolerance(w);
    let finish = |force: Vector3<f64>| {
        let residual = (g * force - target).norm();
        PushSolve {
            force,
            residual,
            accepted: residual <= tol,
        }
    };

    // G has orthonormal force rows, so G^T G >= I and is always invertible.
    let exact = gtg.cholesky().expect("grasp map has full column rank").solve(&gtw);
    if in_cone(&exact, mu) {
        return finish(exact);
    }

    let h = gtg + Matrix3::identity() * PUSH_REGULARIZATION;
    let lipschitz = 2.0 * h.symmetric_eigenvalues().max();
    let step = 1.0 / lipschitz;
    let grad = |f: &Vector3<f64>| 2.0 * (h * f - gtw);
    let mut x = project_cone(&exact, mu);
    let mut y = x;
    let mut t = 1.0f64;
    for _ in 0..MAX_ITERS {
        let next = project_cone(&(y - step * grad(&y)), mu);
        let moved = (next - y).norm() / step;
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = next + (next - x) * ((t - 1.0) / t_next);
        x = next;
        t = t_next;
        if moved < GRAD_TOL {
            break;
        }
    }
    finish(x)
}

/// Samples up to `n_samples` surface points by farthest-point sampling and
/// returns the accepted push with the smallest force (ties: lowest index).
///
/// Cloud normals are outward; the pushing normal is their negation.
pub fn optimize_push_contact(
    cloud: &PointCloud,
    com: &Vector3<f64>,
    w: &WrenchTarget,
    mu: f64,
    n_samples: usize,
) -> Result<PushContact, PushFailure> {
    assert!(n_samples >= 1, "need at least one sample");
    let picks = farthest_point_indices(&cloud.points, n_samples);
    let solves: Vec<PushSolve> = picks
        .par_iter()
        .map(|&i| solve_push_force(&cloud.points[i], &-cloud.normals[i], com, w, mu))
        .collect();
    let mut best: Option<usize> = None;
    for (k, s) in solves.iter().enumerate() {
        if s.accepted && best.is_none_or(|b| s.force.norm() < solves[b].force.norm()) {
            best = Some(k);
        }
    }
    match best {
        Some(k) => {
            let i = picks[k];
            Ok(PushContact {
                point: cloud.points[i],
                normal: -cloud.normals[i],
                force: solves[k].force,
                residual: solves[k].residual,
            })
        }
        None => {
            let k = (0..solves.len())
                .min_by(|&a, &b| solves[a].residual.total_cmp(&solves[b].residual))
                .unwrap_or(0);
            Err(PushFailure {
                best_residual: solves.get(k).map_or(f64::INFINITY, |s| s.residual),
                best_point: picks.get(k).map_or(Vector3::zeros(), |&i| cloud.points[i]),
            })
        }
    }
}
