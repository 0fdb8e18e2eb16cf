//! Two-finger antipodal grasps and their Ferrari-Canny quality.

use nalgebra::{Vector3, Vector6};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{farthest_point_indices, PointCloud};

/// Number of candidate points kept before pair enumeration.
pub const MAX_GRASP_CANDIDATES: usize = 64;
/// Cone discretization used by the quality metric.
pub const CONE_EDGES: usize = 8;
/// Torsional friction of a soft contact, relative to `mu`.
pub const TORSION_RATIO: f64 = 0.1;

/// Two contacts with inward normals, `a` and `b`, plus their quality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspPair {
    #[serde(rename = "a")]
    pub point_a: Vector3<f64>,
    #[serde(rename = "b")]
    pub point_b: Vector3<f64>,
    pub normal_a: Vector3<f64>,
    pub normal_b: Vector3<f64>,
    pub quality: f64,
}

impl GraspPair {
    pub fn new(point_a: Vector3<f64>, normal_a: Vector3<f64>, point_b: Vector3<f64>, normal_b: Vector3<f64>) -> Self {
        Self {
            point_a,
            point_b,
            normal_a,
            normal_b,
            quality: 0.0,
        }
    }
}

/// Index pairs of candidate points that satisfy the antipodal test.
///
/// The cloud's outward normals are flipped; each inward normal must lie
/// within `atan(mu) + tol` of the line towards the other contact.
pub fn antipodal_candidates(cloud: &PointCloud, mu: f64, antipodal_tol_deg: f64) -> Vec<(usize, usize)> {
    let candidates = farthest_point_indices(&cloud.points, MAX_GRASP_CANDIDATES);
    let half = mu.atan() + antipodal_tol_deg.to_radians();
    let cos_half = half.min(std::f64::consts::PI).cos();
    let mut pairs = Vec::new();
    for (x, &i) in candidates.iter().enumerate() {
        for &j in &candidates[x + 1..] {
            let d = cloud.points[j] - cloud.points[i];
            let len = d.norm();
            if len < 1e-9 {
                continue;
            }
            let d = d / len;
            if (-cloud.normals[i]).dot(&d) >= cos_half && (-cloud.normals[j]).dot(&-d) >= cos_half {
                pairs.push((i.min(j), i.max(j)));
            }
        }
    }
    pairs.sort_unstable();
    pairs
}

/// All antipodal pairs on `cloud`, scored and sorted by descending quality.
pub fn enumerate_grasp_pairs(
    cloud: &PointCloud,
    mu: f64,
    antipodal_tol_deg: f64,
    com: &Vector3<f64>,
    part_scale: f64,
) -> Vec<GraspPair> {
    let pairs: Vec<GraspPair> = antipodal_candidates(cloud, mu, antipodal_tol_deg)
        .into_iter()
        .map(|(i, j)| GraspPair::new(cloud.points[i], -cloud.normals[i], cloud.points[j], -cloud.normals[j]))
        .collect();
    score_and_sort(pairs, mu, com, part_scale)
}

/// Scores pairs in parallel and sorts them by descending quality; the sort
/// is stable so ties keep their input order.
pub fn score_and_sort(mut pairs: Vec<GraspPair>, mu: f64, com: &Vector3<f64>, part_scale: f64) -> Vec<GraspPair> {
    pairs
        .par_iter_mut()
        .for_each(|p| p.quality = ferrari_canny(p, mu, CONE_EDGES, com, part_scale));
    pairs.sort_by(|a, b| b.quality.total_cmp(&a.quality));
    pairs
}

/// Tangent direction for the cone discretization at a contact.
///
/// Derived from the grasp geometry so that the metric is invariant under
/// rigid motions of the whole configuration.
fn covariant_tangent(n: &Vector3<f64>, hints: &[Vector3<f64>]) -> Vector3<f64> {
    for h in hints {
        let t = h - n * n.dot(h);
        if t.norm() > 1e-6 * h.norm().max(1e-12) {
            return t.normalize();
        }
    }
    let mut e = Vector3::zeros();
    e[n.abs().imin()] = 1.0;
    (e - n * n.dot(&e)).normalize()
}

/// Primitive contact wrenches of a soft finger: friction-cone edges with unit
/// normal force, and the two torsional extremes about the normal.
fn contact_wrenches(
    p: &Vector3<f64>,
    n: &Vector3<f64>,
    t1: &Vector3<f64>,
    mu: f64,
    cone_edges: usize,
    com: &Vector3<f64>,
    part_scale: f64,
    out: &mut Vec<Vector6<f64>>,
) {
    let t2 = n.cross(t1);
    let lever = (p - com) / part_scale;
    let mut push = |f: Vector3<f64>, extra: Vector3<f64>| {
        let tau = lever.cross(&f) + extra;
        out.push(Vector6::new(f.x, f.y, f.z, tau.x, tau.y, tau.z));
    };
    for k in 0..cone_edges {
        let theta = std::f64::consts::TAU * k as f64 / cone_edges as f64;
        push(n + mu * (theta.cos() * t1 + theta.sin() * t2), Vector3::zeros());
    }
    let gamma = TORSION_RATIO * mu;
    push(*n, n * gamma);
    push(*n, -n * gamma);
}

/// Ferrari-Canny quality: distance from the origin to the boundary of the
/// convex hull of all primitive contact wrenches, or 0 when the origin is
/// not strictly inside.
pub fn ferrari_canny(pair: &GraspPair, mu: f64, cone_edges: usize, com: &Vector3<f64>, part_scale: f64) -> f64 {
    assert!(cone_edges >= 3, "need at least three cone edges");
    let (pa, pb) = (pair.point_a, pair.point_b);
    let ta = covariant_tangent(&pair.normal_a, &[pb - pa, com - pa]);
    // The second contact borrows the first tangent when its own hints fail
    // so both frames stay consistent.
    let tb = covariant_tangent(&pair.normal_b, &[pa - pb, com - pb, ta]);
    let mut wrenches = Vec::with_capacity(2 * (cone_edges + 2));
    contact_wrenches(&pa, &pair.normal_a, &ta, mu, cone_edges, com, part_scale, &mut wrenches);
    contact_wrenches(&pb, &pair.normal_b, &tb, mu, cone_edges, com, part_scale, &mut wrenches);
    hull_origin_depth(&wrenches)
}

pub const MAX_HULL_POINTS: usize = 64;

/// Distance from the origin to the hull boundary of `points` in R^6, by
/// exhaustive facet enumeration. Returns 0 for rank-deficient hulls or an
/// origin on or outside the boundary.
///
/// Candidate hyperplanes are built depth-first from a base point; each level
/// keeps an orthonormal basis of the directions not yet spanned, so a
/// degenerate prefix prunes its whole subtree.
pub fn hull_origin_depth(points: &[Vector6<f64>]) -> f64 {
    let n = points.len();
    if n < 7 {
        return 0.0;
    }
    assert!(n <= MAX_HULL_POINTS, "at most {MAX_HULL_POINTS} wrenches");
    let scale = points.iter().map(|p| p.norm()).fold(0.0, f64::max).max(1e-300);
    let mut search = FacetSearch {
        points,
        tol: 1e-10 * scale,
        degenerate: 1e-12 * scale,
        base: 0,
        best: f64::INFINITY,
        found: false,
    };
    for base in 0..n - 5 {
        if search.found && search.best <= search.tol {
            break;
        }
        search.base = base;
        let complement: [Vector6<f64>; 6] = std::array::from_fn(|k| Vector6::ith(k, 1.0));
        search.descend(&complement, base + 1);
    }
    if !search.found || search.best <= search.tol {
        0.0
    } else {
        search.best
    }
}

struct FacetSearch<'a> {
    points: &'a [Vector6<f64>],
    tol: f64,
    degenerate: f64,
    base: usize,
    best: f64,
    found: bool,
}

impl FacetSearch<'_> {
    /// `complement` is an orthonormal basis of the directions orthogonal to
    /// the edges chosen so far.
    fn descend(&mut self, complement: &[Vector6<f64>], start: usize) {
        let n = self.points.len();
        let m = complement.len();
        let base = self.points[self.base];
        if m == 2 {
            self.last_level(complement, start);
            return;
        }
        // Each remaining level needs one more point.
        let mut beta = [0.0; 6];
        let mut next = [Vector6::zeros(); 6];
        for j in start..=n - (m - 1) {
            if self.found && self.best <= self.tol {
                return;
            }
            let d = self.points[j] - base;
            for (b, c) in beta.iter_mut().zip(complement) {
                *b = c.dot(&d);
            }
            let norm = beta[..m].iter().map(|b| b * b).sum::<f64>().sqrt();
            if norm <= self.degenerate {
                continue;
            }
            reflect_out(complement, &beta[..m], norm, &mut next[..m - 1]);
            self.descend(&next[..m - 1], j + 1);
        }
    }

    fn last_level(&mut self, complement: &[Vector6<f64>], start: usize) {
        let base = self.points[self.base];
        let (c1, c2) = (complement[0], complement[1]);
        let mut proj = [(0.0, 0.0); MAX_HULL_POINTS];
        let proj = &mut proj[..self.points.len()];
        for (q, p) in proj.iter_mut().zip(self.points) {
            let d = p - base;
            *q = (c1.dot(&d), c2.dot(&d));
        }
        let offset = (c1.dot(&base), c2.dot(&base));
        for &(a, b) in &proj[start..] {
            let norm = (a * a + b * b).sqrt();
            if norm <= self.degenerate {
                continue;
            }
            // Unit normal is (-b c1 + a c2) / norm.
            let (u, v) = (-b / norm, a / norm);
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &(x, y) in proj.iter() {
                let s = u * x + v * y;
                lo = lo.min(s);
                hi = hi.max(s);
                if lo < -self.tol && hi > self.tol {
                    break;
                }
            }
            let d = u * offset.0 + v * offset.1;
            if hi <= self.tol && lo < -self.tol {
                self.found = true;
                self.best = self.best.min(d);
            } else if lo >= -self.tol && hi > self.tol {
                self.found = true;
                self.best = self.best.min(-d);
            }
            if self.found && self.best <= self.tol {
                // The origin is on or outside a facet: quality is zero.
                return;
            }
        }
    }
}

/// Orthonormal basis of the part of span(`basis`) orthogonal to
/// `sum beta_i basis_i`, via a Householder reflection of the coefficients.
fn reflect_out(basis: &[Vector6<f64>], beta: &[f64], norm: f64, out: &mut [Vector6<f64>]) {
    let m = basis.len();
    let sign = if beta[0] >= 0.0 { 1.0 } else { -1.0 };
    // v = beta/|beta| + sign e_0; H = I - 2 v v^T / (v^T v) maps the unit
    // coefficient vector to -sign e_0, so columns 1.. of H span its
    // orthogonal complement.
    let mut v = [0.0; 6];
    for (vi, b) in v.iter_mut().zip(beta) {
        *vi = b / norm;
    }
    v[0] += sign;
    let vv: f64 = v[..m].iter().map(|x| x * x).sum();
    for col in 1..m {
        let mut acc = Vector6::zeros();
        for (i, b) in basis.iter().enumerate() {
            let h = if i == col { 1.0 } else { 0.0 } - 2.0 * v[i] * v[col] / vv;
            acc += h * b;
        }
        out[col - 1] = acc;
    }
}

#[cfg(test)]
mod brute {
    use nalgebra::Vector6;

    /// Distance from the origin to the hull boundary of `points` in R^6, by
    /// exhaustive facet enumeration. Returns 0 for rank-deficient hulls or an
    /// origin on or outside the boundary.
    pub(super) fn brute_hull_origin_depth(points: &[Vector6<f64>]) -> f64 {
        let n = points.len();
        if n < 7 {
            return 0.0;
        }
        let scale = points.iter().map(|p| p.norm()).fold(0.0, f64::max).max(1e-300);
        let tol = 1e-10 * scale;
        let mut best = f64::INFINITY;
        let mut found = false;
        let mut idx = [0usize, 1, 2, 3, 4, 5];
        loop {
            if let Some(normal) = facet_normal(points, &idx, scale) {
                let d = normal.dot(&points[idx[0]]);
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for p in points {
                    let s = normal.dot(p) - d;
                    lo = lo.min(s);
                    hi = hi.max(s);
                    if lo < -tol && hi > tol {
                        break;
                    }
                }
                if hi <= tol && lo < -tol {
                    found = true;
                    best = best.min(d);
                } else if lo >= -tol && hi > tol {
                    found = true;
                    best = best.min(-d);
                }
            }
            if !next_combination(&mut idx, n) {
                break;
            }
        }
        if !found || best <= tol {
            0.0
        } else {
            best
        }
    }
    
    fn next_combination(idx: &mut [usize; 6], n: usize) -> bool {
        let k = idx.len();
        let mut i = k;
        while i > 0 {
            i -= 1;
            if idx[i] < n - k + i {
                idx[i] += 1;
                for j in i + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                return true;
            }
        }
        false
    }
    
    /// Unit normal of the hyperplane through six points, if they are affinely
    /// independent.
    fn facet_normal(points: &[Vector6<f64>], idx: &[usize; 6], scale: f64) -> Option<Vector6<f64>> {
        let base = points[idx[0]];
        let mut m = [[0.0f64; 6]; 5];
        for r in 0..5 {
            let d = points[idx[r + 1]] - base;
            m[r].copy_from_slice(d.as_slice());
        }
        // Row-reduce to find the one-dimensional null space.
        let mut pivots = [usize::MAX; 5];
        let mut col = 0;
        let mut row = 0;
        let eps = 1e-12 * scale;
        while row < 5 && col < 6 {
            let (pr, pv) = (row..5)
                .map(|r| (r, m[r][col].abs()))
                .fold((row, -1.0), |b, x| if x.1 > b.1 { x } else { b });
            if pv <= eps {
                col += 1;
                continue;
            }
            m.swap(row, pr);
            let inv = 1.0 / m[row][col];
            for c in col..6 {
                m[row][c] *= inv;
            }
            for r in 0..5 {
                if r != row && m[r][col] != 0.0 {
                    let f = m[r][col];
                    for c in col..6 {
                        m[r][c] -= f * m[row][c];
                    }
                }
            }
            pivots[row] = col;
            row += 1;
            col += 1;
        }
        if row < 5 {
            return None;
        }
        let free = (0..6).find(|c| !pivots.contains(c))?;
        let mut v = Vector6::zeros();
        v[free] = 1.0;
        for r in 0..5 {
            v[pivots[r]] = -m[r][free];
        }
        Some(v.normalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_depth() {
        // Regular cross-polytope has depth 1/sqrt(6) from its facets.
        let mut pts = Vec::new();
        for k in 0..6 {
            let mut e = Vector6::zeros();
            e[k] = 1.0;
            pts.push(e);
            pts.push(-e);
        }
        let d = hull_origin_depth(&pts);
        assert!((d - 1.0 / 6f64.sqrt()).abs() < 1e-12, "{d}");
        let shifted: Vec<_> = pts.iter().map(|p| p + Vector6::repeat(2.0)).collect();
        assert_eq!(hull_origin_depth(&shifted), 0.0);
    }

    #[test]
    fn depth_matches_subset_enumeration() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for trial in 0..40 {
            let n = 8 + trial % 8;
            let mut pts: Vec<Vector6<f64>> = (0..n)
                .map(|_| Vector6::from_fn(|_, _| rng.random_range(-1.0..1.0)))
                .collect();
            if trial % 3 == 0 {
                // Several points on one 2-flat, like a discretized cone.
                let (o, a, b) = (pts[0], pts[1], pts[2]);
                for k in 0..4 {
                    let t = k as f64 * 0.7;
                    pts.push(o + t.cos() * (a - o) + t.sin() * (b - o));
                }
            }
            let fast = hull_origin_depth(&pts);
            let slow = super::brute::brute_hull_origin_depth(&pts);
            assert!((fast - slow).abs() < 1e-9, "trial {trial}: {fast} vs {slow}");
        }
    }

    #[test]
    fn grasp_quality_matches_subset_enumeration() {
        let pair = GraspPair::new(
            Vector3::new(0.3, 0.05, 0.0),
            Vector3::new(-1.0, 0.02, 0.0).normalize(),
            Vector3::new(-0.3, 0.04, 0.02),
            Vector3::x(),
        );
        let com = Vector3::new(0.0, 0.02, 0.01);
        let (pa, pb) = (pair.point_a, pair.point_b);
        let ta = covariant_tangent(&pair.normal_a, &[pb - pa, com - pa]);
        let tb = covariant_tangent(&pair.normal_b, &[pa - pb, com - pb, ta]);
        let mut w = Vec::new();
        contact_wrenches(&pa, &pair.normal_a, &ta, 0.2, 8, &com, 0.4, &mut w);
        contact_wrenches(&pb, &pair.normal_b, &tb, 0.2, 8, &com, 0.4, &mut w);
        let slow = super::brute::brute_hull_origin_depth(&w);
        assert!(slow > 0.0);
        assert!((ferrari_canny(&pair, 0.2, 8, &com, 0.4) - slow).abs() < 1e-12);
    }

    #[test]
    fn sphere_antipodal_grasp_is_force_closure() {
        let pair = GraspPair::new(Vector3::x(), -Vector3::x(), -Vector3::x(), Vector3::x());
        let q = ferrari_canny(&pair, 0.2, 8, &Vector3::zeros(), 1.0);
        assert!(q > 0.0);
    }

    #[test]
    fn coincident_contacts_have_zero_quality() {
        let pair = GraspPair::new(Vector3::x(), -Vector3::x(), Vector3::x(), -Vector3::x());
        assert_eq!(ferrari_canny(&pair, 0.2, 8, &Vector3::zeros(), 1.0), 0.0);
    }
}
