use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use super::TriMesh;
use crate::error::{Error, Result};

/// Mass properties of a homogeneous solid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InertialProps {
    pub mass: f64,
    pub center_of_mass: Vector3<f64>,
    /// Orthonormal principal axes, sorted by descending moment.
    pub principal_axes: [Vector3<f64>; 3],
    pub principal_moments: [f64; 3],
}

impl InertialProps {
    /// Inertia tensor about the center of mass in the mesh frame.
    pub fn tensor(&self) -> Matrix3<f64> {
        let mut t = Matrix3::zeros();
        for (a, m) in self.principal_axes.iter().zip(self.principal_moments) {
            t += a * a.transpose() * m;
        }
        t
    }

    /// True when two principal moments agree within `rel_tol` of the largest.
    pub fn is_degenerate(&self, rel_tol: f64) -> bool {
        let [a, b, c] = self.principal_moments;
        let tol = rel_tol * a.abs().max(1e-300);
        (a - b).abs() <= tol || (b - c).abs() <= tol
    }
}

/// Mass, center of mass and principal inertia by signed-tetrahedron
/// integration over the faces of a closed, outward-oriented mesh.
pub fn compute_inertial_props(mesh: &TriMesh, density: f64) -> Result<InertialProps> {
    if !(density > 0.0) {
        return Err(Error::InvalidInput(format!("density must be positive, got {density}")));
    }
    // Reference point near the mesh improves conditioning far from the origin.
    let origin = mesh.vertices()[0];
    let mut volume = 0.0;
    let mut first = Vector3::zeros();
    let mut second = Matrix3::zeros();
    let canonical = Matrix3::new(2.0, 1.0, 1.0, 1.0, 2.0, 1.0, 1.0, 1.0, 2.0) / 120.0;
    for i in 0..mesh.faces().len() {
        let [a, b, c] = mesh.triangle(i).map(|v| v - origin);
        let jac = Matrix3::from_columns(&[a, b, c]);
        let det = jac.determinant();
        volume += det / 6.0;
        first += det * (a + b + c) / 24.0;
        second += det * jac * canonical * jac.transpose();
    }
    if !(volume > 1e-18) {
        return Err(Error::Geometry(format!("mesh is open or inverted (signed volume {volume:e})")));
    }
    let com_local = first / volume;
    let mass = density * volume;
    let cov = density * (second - volume * com_local * com_local.transpose());
    let tensor = Matrix3::identity() * cov.trace() - cov;

    let eig = SymmetricEigen::new(tensor);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());
    let mut axes = order.map(|k| eig.eigenvectors.column(k).into_owned().normalize());
    for axis in &mut axes {
        fix_sign(axis);
    }
    let moments = order.map(|k| eig.eigenvalues[k].max(0.0));
    Ok(InertialProps {
        mass,
        center_of_mass: com_local + origin,
        principal_axes: axes,
        principal_moments: moments,
    })
}

fn fix_sign(axis: &mut Vector3<f64>) {
    let s = axis.x + axis.y + axis.z;
    let flip = if s.abs() > 1e-12 {
        s < 0.0
    } else {
        axis.iter().find(|c| c.abs() > 1e-12).is_some_and(|c| *c < 0.0)
    };
    if flip {
        *axis = -*axis;
    }
}
