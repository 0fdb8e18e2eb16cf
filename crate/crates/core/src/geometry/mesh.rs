use std::collections::HashMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::bvh::Bvh;
use crate::error::{Error, Result};

const MIN_TRIANGLE_AREA: f64 = 1e-12;

/// Closed triangle mesh in the part's local frame.
///
/// Faces are counter-clockwise when viewed from outside. A bounding-sphere
/// hierarchy over the faces is built on construction and shared by all
/// proximity queries.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "RawMesh", into = "RawMesh")]
pub struct TriMesh {
    vertices: Vec<Vector3<f64>>,
    faces: Vec<[u32; 3]>,
    bvh: Bvh,
}

#[derive(Serialize, Deserialize)]
struct RawMesh {
    vertices: Vec<[f64; 3]>,
    faces: Vec<[u32; 3]>,
}

impl TryFrom<RawMesh> for TriMesh {
    type Error = Error;

    fn try_from(raw: RawMesh) -> Result<Self> {
        TriMesh::new(
            raw.vertices.into_iter().map(Vector3::from).collect(),
            raw.faces,
        )
    }
}

impl From<TriMesh> for RawMesh {
    fn from(mesh: TriMesh) -> Self {
        RawMesh {
            vertices: mesh.vertices.iter().map(|v| [v.x, v.y, v.z]).collect(),
            faces: mesh.faces,
        }
    }
}

impl TriMesh {
    pub fn new(vertices: Vec<Vector3<f64>>, faces: Vec<[u32; 3]>) -> Result<Self> {
        if faces.is_empty() {
            return Err(Error::InvalidInput("mesh has no faces".into()));
        }
        let n = vertices.len() as u32;
        for (fi, f) in faces.iter().enumerate() {
            if f.iter().any(|&i| i >= n) {
                return Err(Error::Geometry(format!("face {fi} indexes past {n} vertices")));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::Geometry(format!("face {fi} repeats a vertex")));
            }
            let [a, b, c] = f.map(|i| vertices[i as usize]);
            if 0.5 * (b - a).cross(&(c - a)).norm() <= MIN_TRIANGLE_AREA {
                return Err(Error::Geometry(format!("face {fi} is degenerate")));
            }
        }
        let bvh = Bvh::build(&vertices, &faces);
        Ok(Self {
            vertices,
            faces,
            bvh,
        })
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub(crate) fn bvh(&self) -> &Bvh {
        &self.bvh
    }

    pub fn triangle(&self, i: usize) -> [Vector3<f64>; 3] {
        self.faces[i].map(|k| self.vertices[k as usize])
    }

    pub fn triangle_area(&self, i: usize) -> f64 {
        let [a, b, c] = self.triangle(i);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    /// Outward unit normal of face `i`.
    pub fn face_normal(&self, i: usize) -> Vector3<f64> {
        let [a, b, c] = self.triangle(i);
        (b - a).cross(&(c - a)).normalize()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|i| self.triangle_area(i)).sum()
    }

    pub fn shortest_edge(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.faces.len() {
            let [a, b, c] = self.triangle(i);
            best = best.min((b - a).norm()).min((c - b).norm()).min((a - c).norm());
        }
        best
    }

    pub fn aabb(&self) -> (Vector3<f64>, Vector3<f64>) {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    /// Center and radius of the root bounding sphere (local frame).
    pub fn bounding_sphere(&self) -> (Vector3<f64>, f64) {
        self.bvh.root_sphere()
    }

    /// Radius of the smallest origin-centred ball containing all vertices.
    pub fn radius_about_origin(&self) -> f64 {
        self.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// True when every directed edge is matched by exactly one opposite edge.
    pub fn is_closed(&self) -> bool {
        let mut edges: HashMap<(u32, u32), i32> = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *edges.entry((a, b)).or_default() += 1;
            }
        }
        edges
            .iter()
            .all(|(&(a, b), &count)| count == 1 && edges.get(&(b, a)) == Some(&1))
    }

    pub fn translated(&self, offset: &Vector3<f64>) -> TriMesh {
        let vertices = self.vertices.iter().map(|v| v + offset).collect();
        TriMesh::new(vertices, self.faces.clone()).expect("translation preserves validity")
    }

    pub fn scaled(&self, factor: f64) -> Result<TriMesh> {
        let vertices = self.vertices.iter().map(|v| v * factor).collect();
        TriMesh::new(vertices, self.faces.clone())
    }

    pub fn transformed(&self, pose: &super::Pose) -> TriMesh {
        let vertices = self.vertices.iter().map(|v| pose.transform_point(v)).collect();
        TriMesh::new(vertices, self.faces.clone()).expect("rigid motion preserves validity")
    }

    /// Axis-aligned box centred at the origin with the given full extents.
    pub fn cuboid(size: Vector3<f64>) -> Result<TriMesh> {
        let h = size * 0.5;
        rectilinear_union(&[(-h, h)])
    }

    /// Unit-edge cube centred at the origin.
    pub fn unit_cube() -> TriMesh {
        Self::cuboid(Vector3::repeat(1.0)).expect("unit cube is valid")
    }

    /// Geodesic sphere obtained by subdividing an icosahedron.
    pub fn icosphere(radius: f64, subdivisions: u32) -> Result<TriMesh> {
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let mut verts: Vec<Vector3<f64>> = [
            [-1.0, t, 0.0],
            [1.0, t, 0.0],
            [-1.0, -t, 0.0],
            [1.0, -t, 0.0],
            [0.0, -1.0, t],
            [0.0, 1.0, t],
            [0.0, -1.0, -t],
            [0.0, 1.0, -t],
            [t, 0.0, -1.0],
            [t, 0.0, 1.0],
            [-t, 0.0, -1.0],
            [-t, 0.0, 1.0],
        ]
        .iter()
        .map(|p| Vector3::from(*p).normalize())
        .collect();
        let mut faces: Vec<[u32; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        for _ in 0..subdivisions {
            let mut midpoint: HashMap<(u32, u32), u32> = HashMap::new();
            let mut next = Vec::with_capacity(faces.len() * 4);
            let mut mid = |a: u32, b: u32, verts: &mut Vec<Vector3<f64>>| -> u32 {
                let key = (a.min(b), a.max(b));
                *midpoint.entry(key).or_insert_with(|| {
                    let m = (verts[a as usize] + verts[b as usize]).normalize();
                    verts.push(m);
                    (verts.len() - 1) as u32
                })
            };
            for [a, b, c] in faces {
                let ab = mid(a, b, &mut verts);
                let bc = mid(b, c, &mut verts);
                let ca = mid(c, a, &mut verts);
                next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            faces = next;
        }
        for v in &mut verts {
            *v *= radius;
        }
        TriMesh::new(verts, faces)
    }
}

/// Closed boundary mesh of a union of axis-aligned boxes.
///
/// Boxes are given as `(min, max)` corners. The union is voxelized on the
/// grid spanned by all box bounds and only faces between filled and empty
/// cells are emitted, so touching boxes merge without interior faces.
pub fn rectilinear_union(boxes: &[(Vector3<f64>, Vector3<f64>)]) -> Result<TriMesh> {
    if boxes.is_empty() {
        return Err(Error::InvalidInput("no boxes".into()));
    }
    for (lo, hi) in boxes {
        if (0..3).any(|k| hi[k] - lo[k] <= 1e-9) {
            return Err(Error::InvalidInput(format!("empty box {lo:?}..{hi:?}")));
        }
    }
    let axes: Vec<Vec<f64>> = (0..3)
        .map(|k| {
            let mut c: Vec<f64> = boxes.iter().flat_map(|(lo, hi)| [lo[k], hi[k]]).collect();
            c.sort_by(|a, b| a.partial_cmp(b).unwrap());
            c.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
            c
        })
        .collect();
    let dims = [axes[0].len() - 1, axes[1].len() - 1, axes[2].len() - 1];
    let filled = |i: isize, j: isize, k: isize| -> bool {
        if i < 0 || j < 0 || k < 0 {
            return false;
        }
        let (i, j, k) = (i as usize, j as usize, k as usize);
        if i >= dims[0] || j >= dims[1] || k >= dims[2] {
            return false;
        }
        let c = Vector3::new(
            0.5 * (axes[0][i] + axes[0][i + 1]),
            0.5 * (axes[1][j] + axes[1][j + 1]),
            0.5 * (axes[2][k] + axes[2][k + 1]),
        );
        boxes
            .iter()
            .any(|(lo, hi)| (0..3).all(|a| c[a] > lo[a] && c[a] < hi[a]))
    };

    let mut vertex_ids: HashMap<[usize; 3], u32> = HashMap::new();
    let mut vertices = Vec::new();
    let mut vid = |g: [usize; 3], vertices: &mut Vec<Vector3<f64>>| -> u32 {
        *vertex_ids.entry(g).or_insert_with(|| {
            vertices.push(Vector3::new(axes[0][g[0]], axes[1][g[1]], axes[2][g[2]]));
            (vertices.len() - 1) as u32
        })
    };
    let mut faces = Vec::new();
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            for k in 0..dims[2] {
                let (ii, jj, kk) = (i as isize, j as isize, k as isize);
                if !filled(ii, jj, kk) {
                    continue;
                }
                for axis in 0..3 {
                    for dir in [-1isize, 1] {
                        let mut n = [ii, jj, kk];
                        n[axis] += dir;
                        if filled(n[0], n[1], n[2]) {
                            continue;
                        }
                        // Quad on the cell face perpendicular to `axis`.
                        let plane = if dir > 0 { [i, j, k][axis] + 1 } else { [i, j, k][axis] };
                        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
                        let base = [i, j, k];
                        let corner = |du: usize, dv: usize| {
                            let mut g = base;
                            g[axis] = plane;
                            g[u] += du;
                            g[v] += dv;
                            g
                        };
                        let quad = [corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)];
                        let ids = quad.map(|g| vid(g, &mut vertices));
                        // (u, v, axis) is right-handed, so CCW in (u, v) faces +axis.
                        if dir > 0 {
                            faces.push([ids[0], ids[1], ids[2]]);
                            faces.push([ids[0], ids[2], ids[3]]);
                        } else {
                            faces.push([ids[0], ids[2], ids[1]]);
                            faces.push([ids[0], ids[3], ids[2]]);
                        }
                    }
                }
            }
        }
    }
    TriMesh::new(vertices, faces)
}
