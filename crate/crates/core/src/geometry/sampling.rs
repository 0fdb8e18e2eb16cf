use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Pose, TriMesh};
use crate::error::{Error, Result};

/// Surface samples with unit outward normals.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    pub normals: Vec<Vector3<f64>>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn transformed(&self, pose: &Pose) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| pose.transform_point(p)).collect(),
            normals: self.normals.iter().map(|n| pose.transform_vector(n)).collect(),
        }
    }

    pub fn centroid(&self) -> Vector3<f64> {
        self.points.iter().sum::<Vector3<f64>>() / self.points.len().max(1) as f64
    }

    /// Row-major `N x 6` layout: `x y z nx ny nz` per point.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len() * 6);
        for (p, n) in self.points.iter().zip(&self.normals) {
            out.extend_from_slice(&[p.x, p.y, p.z, n.x, n.y, n.z]);
        }
        out
    }

    pub fn from_flat(data: &[f64]) -> Result<PointCloud> {
        if data.len() % 6 != 0 {
            return Err(Error::format("point cloud", format!("length {} is not a multiple of 6", data.len())));
        }
        let mut cloud = PointCloud::default();
        for row in data.chunks_exact(6) {
            cloud.points.push(Vector3::new(row[0], row[1], row[2]));
            cloud.normals.push(Vector3::new(row[3], row[4], row[5]));
        }
        Ok(cloud)
    }

    /// Subset with the given indices, in order.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            normals: indices.iter().map(|&i| self.normals[i]).collect(),
        }
    }
}

/// Draws `n` area-uniform surface samples, placed by `pose`.
pub fn sample_point_cloud(mesh: &TriMesh, pose: &Pose, n: usize, seed: u64) -> Result<PointCloud> {
    if mesh.faces().is_empty() {
        return Err(Error::InvalidInput("cannot sample an empty mesh".into()));
    }
    if n == 0 {
        return Err(Error::InvalidInput("sample count must be positive".into()));
    }
    let mut cumulative = Vec::with_capacity(mesh.faces().len());
    let mut total = 0.0;
    for i in 0..mesh.faces().len() {
        total += mesh.triangle_area(i);
        cumulative.push(total);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cloud = PointCloud {
        points: Vec::with_capacity(n),
        normals: Vec::with_capacity(n),
    };
    for _ in 0..n {
        let target = rng.random::<f64>() * total;
        let face = cumulative.partition_point(|&c| c <= target).min(cumulative.len() - 1);
        let [a, b, c] = mesh.triangle(face);
        let (mut u, mut v): (f64, f64) = (rng.random(), rng.random());
        if u + v > 1.0 {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        let p = a + (b - a) * u + (c - a) * v;
        cloud.points.push(pose.transform_point(&p));
        cloud.normals.push(pose.transform_vector(&mesh.face_normal(face)).normalize());
    }
    Ok(cloud)
}

/// Farthest-point sampling starting from index 0.
pub fn farthest_point_indices(points: &[Vector3<f64>], k: usize) -> Vec<usize> {
    if points.is_empty() || k == 0 {
        return Vec::new();
    }
    let k = k.min(points.len());
    let mut chosen = vec![0];
    let mut dist: Vec<f64> = points.iter().map(|p| (p - points[0]).norm_squared()).collect();
    while chosen.len() < k {
        let (next, _) = dist
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &d)| if d > best.1 { (i, d) } else { best });
        chosen.push(next);
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min((p - points[next]).norm_squared());
        }
    }
    chosen
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_samples_lie_on_faces() {
        let c = TriMesh::unit_cube();
        let pc = sample_point_cloud(&c, &Pose::identity(), 8, 0).unwrap();
        assert_eq!(pc.len(), 8);
        for (p, n) in pc.points.iter().zip(&pc.normals) {
            assert!(p.iter().all(|x| x.abs() <= 0.5 + 1e-12));
            assert!((n.norm() - 1.0).abs() < 1e-9);
            assert_eq!(n.iter().filter(|x| x.abs() > 1e-9).count(), 1);
        }
    }

    #[test]
    fn fps_spreads_points() {
        let pts = vec![Vector3::zeros(), Vector3::x() * 0.1, Vector3::x() * 5.0, Vector3::y() * 3.0];
        assert_eq!(farthest_point_indices(&pts, 3), vec![0, 2, 3]);
    }

    #[test]
    fn flat_round_trip() {
        let c = TriMesh::unit_cube();
        let pc = sample_point_cloud(&c, &Pose::identity(), 5, 3).unwrap();
        assert_eq!(PointCloud::from_flat(&pc.to_flat()).unwrap(), pc);
    }
}
