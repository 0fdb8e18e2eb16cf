//! Target assemblies: part meshes, assembled poses and static fixtures.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{compute_inertial_props, read_obj, write_obj, InertialProps, Pose, TriMesh};

/// Density used for all parts (kg/m^3, roughly aluminium).
pub const DEFAULT_DENSITY: f64 = 2700.0;

#[derive(Clone, Debug)]
pub struct Blueprint {
    pub id: String,
    pub meshes: Vec<TriMesh>,
    pub target_poses: Vec<Pose>,
    /// Static obstacles that are never moved, e.g. the work table.
    pub environment: Vec<(TriMesh, Pose)>,
    pub family: Option<String>,
    pub seed: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct PartEntry {
    mesh: String,
    pose: Pose,
}

#[derive(Serialize, Deserialize)]
struct BlueprintFile {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    family: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    parts: Vec<PartEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    environment: Vec<PartEntry>,
}

impl Blueprint {
    pub fn new(id: impl Into<String>, meshes: Vec<TriMesh>, target_poses: Vec<Pose>) -> Result<Self> {
        if meshes.len() != target_poses.len() {
            return Err(Error::InvalidBlueprint(format!(
                "{} meshes but {} poses",
                meshes.len(),
                target_poses.len()
            )));
        }
        if meshes.is_empty() {
            return Err(Error::InvalidBlueprint("blueprint has no parts".into()));
        }
        if meshes.len() > 63 {
            return Err(Error::InvalidBlueprint("at most 63 parts are supported".into()));
        }
        Ok(Self {
            id: id.into(),
            meshes,
            target_poses,
            environment: Vec::new(),
            family: None,
            seed: None,
        })
    }

    pub fn with_environment(mut self, environment: Vec<(TriMesh, Pose)>) -> Self {
        self.environment = environment;
        self
    }

    pub fn num_parts(&self) -> usize {
        self.meshes.len()
    }

    /// Inertial properties of each part in its own mesh frame.
    pub fn inertial_props(&self) -> Result<Vec<InertialProps>> {
        self.meshes
            .iter()
            .map(|m| compute_inertial_props(m, DEFAULT_DENSITY))
            .collect()
    }

    /// Center and radius of a sphere enclosing all parts at their target poses.
    pub fn bounding_sphere(&self) -> (Vector3<f64>, f64) {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for (m, p) in self.meshes.iter().zip(&self.target_poses) {
            for v in m.vertices() {
                let w = p.transform_point(v);
                lo = lo.inf(&w);
                hi = hi.sup(&w);
            }
        }
        let center = 0.5 * (lo + hi);
        let radius = self
            .meshes
            .iter()
            .zip(&self.target_poses)
            .flat_map(|(m, p)| m.vertices().iter().map(move |v| (p.transform_point(v) - center).norm()))
            .fold(0.0, f64::max);
        (center, radius)
    }

    /// Writes `blueprint.json` and one OBJ file per mesh into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut parts = Vec::new();
        for (i, (m, p)) in self.meshes.iter().zip(&self.target_poses).enumerate() {
            let name = format!("part_{i}.obj");
            write_obj(&dir.join(&name), m)?;
            parts.push(PartEntry { mesh: name, pose: *p });
        }
        let mut environment = Vec::new();
        for (i, (m, p)) in self.environment.iter().enumerate() {
            let name = format!("fixture_{i}.obj");
            write_obj(&dir.join(&name), m)?;
            environment.push(PartEntry { mesh: name, pose: *p });
        }
        let file = BlueprintFile {
            id: self.id.clone(),
            family: self.family.clone(),
            seed: self.seed,
            parts,
            environment,
        };
        let path = dir.join("blueprint.json");
        let text = serde_json::to_string_pretty(&file).map_err(|e| Error::format("blueprint", e))?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    /// Reads a blueprint directory written by [`Blueprint::save`].
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("blueprint.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let file: BlueprintFile = serde_json::from_str(&text).map_err(|e| Error::format("blueprint.json", e))?;
        let mut meshes = Vec::new();
        let mut poses = Vec::new();
        for entry in &file.parts {
            meshes.push(read_obj(&dir.join(&entry.mesh))?);
            poses.push(entry.pose);
        }
        let environment = file
            .environment
            .iter()
            .map(|e| Ok((read_obj(&dir.join(&e.mesh))?, e.pose)))
            .collect::<Result<Vec<_>>>()?;
        let mut bp = Blueprint::new(file.id, meshes, poses)?.with_environment(environment);
        bp.family = file.family;
        bp.seed = file.seed;
        Ok(bp)
    }
}
