//! Static proximity queries between placed meshes.
//!
//! Two meshes collide when some pair of triangles is within the clearance or
//! when one closed mesh lies entirely inside the other.

use std::f64::consts::PI;

use nalgebra::Vector3;

use super::{Pose, TriMesh};

type V3 = Vector3<f64>;

/// Closest point on triangle `abc` to `p`.
pub fn closest_point_on_triangle(p: &V3, a: &V3, b: &V3, c: &V3) -> V3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

/// Squared distance between segments `p1q1` and `p2q2`.
pub fn segment_segment_distance_sq(p1: &V3, q1: &V3, p2: &V3, q2: &V3) -> f64 {
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.dot(&d1);
    let e = d2.dot(&d2);
    let f = d2.dot(&r);
    let (s, t);
    if a <= 1e-300 && e <= 1e-300 {
        return r.dot(&r);
    }
    if a <= 1e-300 {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(&r);
        if e <= 1e-300 {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut s0 = if denom > 1e-300 {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t0 = 0.0;
                s0 = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t0 = 1.0;
                s0 = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s0;
            t = t0;
        }
    }
    let c1 = p1 + d1 * s;
    let c2 = p2 + d2 * t;
    (c1 - c2).norm_squared()
}

/// True when segment `pq` crosses triangle `abc`.
pub fn segment_intersects_triangle(p: &V3, q: &V3, a: &V3, b: &V3, c: &V3) -> bool {
    let dir = q - p;
    let e1 = b - a;
    let e2 = c - a;
    let h = dir.cross(&e2);
    let det = e1.dot(&h);
    let scale = e1.norm() * e2.norm() * dir.norm();
    if det.abs() <= 1e-14 * scale {
        return false;
    }
    let inv = 1.0 / det;
    let s = p - a;
    let u = inv * s.dot(&h);
    if !(0.0..=1.0).contains(&u) {
        return false;
    }
    let qv = s.cross(&e1);
    let v = inv * dir.dot(&qv);
    if v < 0.0 || u + v > 1.0 {
        return false;
    }
    let t = inv * e2.dot(&qv);
    (0.0..=1.0).contains(&t)
}

/// Exact distance between two triangles (zero when they intersect).
pub fn triangle_distance(t1: &[V3; 3], t2: &[V3; 3]) -> f64 {
    for k in 0..3 {
        let (p, q) = (&t1[k], &t1[(k + 1) % 3]);
        if segment_intersects_triangle(p, q, &t2[0], &t2[1], &t2[2]) {
            return 0.0;
        }
        let (p, q) = (&t2[k], &t2[(k + 1) % 3]);
        if segment_intersects_triangle(p, q, &t1[0], &t1[1], &t1[2]) {
            return 0.0;
        }
    }
    let mut best = f64::INFINITY;
    for p in t1 {
        best = best.min((closest_point_on_triangle(p, &t2[0], &t2[1], &t2[2]) - p).norm_squared());
    }
    for p in t2 {
        best = best.min((closest_point_on_triangle(p, &t1[0], &t1[1], &t1[2]) - p).norm_squared());
    }
    for i in 0..3 {
        for j in 0..3 {
            best = best.min(segment_segment_distance_sq(
                &t1[i],
                &t1[(i + 1) % 3],
                &t2[j],
                &t2[(j + 1) % 3],
            ));
        }
    }
    best.sqrt()
}

/// Generalized winding number of a closed, outward-oriented mesh at `p`.
pub fn winding_number(mesh: &TriMesh, p: &V3) -> f64 {
    let mut total = 0.0;
    for i in 0..mesh.faces().len() {
        let [a, b, c] = mesh.triangle(i);
        let (a, b, c) = (a - p, b - p, c - p);
        let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
        let num = a.dot(&b.cross(&c));
        let den = la * lb * lc + a.dot(&b) * lc + a.dot(&c) * lb + b.dot(&c) * la;
        total += 2.0 * num.atan2(den);
    }
    total / (4.0 * PI)
}

/// Separating-axis test for two boxes with a gap larger than `clearance`.
/// `rot` holds the axes of box b in the frame of box a and `t` the offset of
/// its centre.
fn boxes_separated(ea: &V3, eb: &V3, rot: &nalgebra::Matrix3<f64>, t: &V3, clearance: f64) -> bool {
    let abs = rot.abs();
    let slack = 1e-12 * (ea.norm() + eb.norm()) + clearance;
    for i in 0..3 {
        if t[i].abs() > ea[i] + eb.dot(&abs.row(i).transpose()) + slack {
            return true;
        }
    }
    for j in 0..3 {
        if t.dot(&rot.column(j)).abs() > ea.dot(&abs.column(j)) + eb[j] + slack {
            return true;
        }
    }
    for i in 0..3 {
        let e = V3::ith(i, 1.0);
        for j in 0..3 {
            let l = e.cross(&rot.column(j));
            let ra = ea.x * l.x.abs() + ea.y * l.y.abs() + ea.z * l.z.abs();
            let rb: f64 = (0..3).map(|m| eb[m] * l.dot(&rot.column(m)).abs()).sum();
            if t.dot(&l).abs() > ra + rb + slack {
                return true;
            }
        }
    }
    false
}

/// Tests whether `b` (placed at `rel`, expressed in `a`'s frame) has a
/// triangle within `clearance` of a triangle of `a`.
fn surfaces_within(a: &TriMesh, b: &TriMesh, rel: &Pose, clearance: f64) -> bool {
    let bvh_a = a.bvh();
    let bvh_b = b.bvh();
    let rot = rel.rotation.to_rotation_matrix().into_inner();
    let verts_b: Vec<V3> = b.vertices().iter().map(|v| rel.transform_point(v)).collect();
    let tri_b = |f: u32| -> [V3; 3] { b.faces()[f as usize].map(|k| verts_b[k as usize]) };

    let mut stack = vec![(0u32, 0u32)];
    while let Some((ia, ib)) = stack.pop() {
        let na = &bvh_a.nodes[ia as usize];
        let nb = &bvh_b.nodes[ib as usize];
        let cb = rel.transform_point(&nb.center);
        if (na.center - cb).norm() - na.radius - nb.radius > clearance {
            continue;
        }
        let t = rel.transform_point(&nb.box_center) - na.box_center;
        if boxes_separated(&na.half, &nb.half, &rot, &t, clearance) {
            continue;
        }
        match (na.children, nb.children) {
            (None, None) => {
                for &fa in bvh_a.leaf_faces(na) {
                    let ta = a.triangle(fa as usize);
                    for &fb in bvh_b.leaf_faces(nb) {
                        if triangle_distance(&ta, &tri_b(fb)) <= clearance {
                            return true;
                        }
                    }
                }
            }
            (Some((l, r)), None) => {
                stack.push((l, ib));
                stack.push((r, ib));
            }
            (None, Some((l, r))) => {
                stack.push((ia, l));
                stack.push((ia, r));
            }
            (Some((al, ar)), Some((bl, br))) => {
                if na.half.norm_squared() >= nb.half.norm_squared() {
                    stack.push((al, ib));
                    stack.push((ar, ib));
                } else {
                    stack.push((ia, bl));
                    stack.push((ia, br));
                }
            }
        }
    }
    false
}

/// Collision test between two placed meshes.
///
/// Returns true when any triangle pair is within `clearance` or one mesh is
/// contained in the other. Symmetric in its arguments.
pub fn check_collision(a: &TriMesh, pose_a: &Pose, b: &TriMesh, pose_b: &Pose, clearance: f64) -> bool {
    let (ca, ra) = a.bounding_sphere();
    let (cb, rb) = b.bounding_sphere();
    let wa = pose_a.transform_point(&ca);
    let wb = pose_b.transform_point(&cb);
    if (wa - wb).norm() - ra - rb > clearance {
        return false;
    }
    // Always traverse with the lexicographically "smaller" mesh first so
    // the result does not depend on argument order, even at round-off.
    let (m1, p1, m2, p2) = if order_key(a, pose_a) <= order_key(b, pose_b) {
        (a, pose_a, b, pose_b)
    } else {
        (b, pose_b, a, pose_a)
    };
    let rel = p1.inverse().compose(p2);
    if surfaces_within(m1, m2, &rel, clearance) {
        return true;
    }
    // No surface contact: either disjoint or one nested in the other.
    let v2 = rel.transform_point(&m2.vertices()[0]);
    if winding_number(m1, &v2).abs() > 0.5 {
        return true;
    }
    let v1 = rel.inverse().transform_point(&m1.vertices()[0]);
    winding_number(m2, &v1).abs() > 0.5
}

fn order_key(mesh: &TriMesh, pose: &Pose) -> (usize, usize, [u64; 7]) {
    let q = pose.rotation.quaternion();
    let t = pose.translation;
    (
        mesh.vertices().len(),
        mesh.faces().len(),
        [t.x, t.y, t.z, q.w, q.i, q.j, q.k].map(f64::to_bits),
    )
}

/// Exact distance from a world point to the surface of a placed mesh.
pub fn point_mesh_distance(mesh: &TriMesh, pose: &Pose, p: &V3) -> f64 {
    let local = pose.inverse().transform_point(p);
    let bvh = mesh.bvh();
    let mut best = f64::INFINITY;
    let mut stack = vec![0u32];
    while let Some(i) = stack.pop() {
        let n = &bvh.nodes[i as usize];
        if (n.center - local).norm() - n.radius >= best {
            continue;
        }
        match n.children {
            None => {
                for &f in bvh.leaf_faces(n) {
                    let [a, b, c] = mesh.triangle(f as usize);
                    best = best.min((closest_point_on_triangle(&local, &a, &b, &c) - local).norm());
                }
            }
            Some((l, r)) => {
                stack.push(l);
                stack.push(r);
            }
        }
    }
    best
}

/// True when the point is within `radius` of the mesh surface or inside it.
pub fn point_near_mesh(mesh: &TriMesh, pose: &Pose, p: &V3, radius: f64) -> bool {
    let (c, r) = mesh.bounding_sphere();
    if (pose.transform_point(&c) - p).norm() - r > radius {
        return false;
    }
    if point_mesh_distance(mesh, pose, p) <= radius {
        return true;
    }
    let local = pose.inverse().transform_point(p);
    winding_number(mesh, &local).abs() > 0.5
}
