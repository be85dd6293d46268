use std::collections::HashMap;
use std::path::{Path, PathBuf};

use nalgebra::{Isometry3, Translation3};
use serde::{Deserialize, Serialize};

use super::{read_json, read_pfm, read_png, PipelineError};
use crate::fields::{isometry_from_row_major, isometry_to_row_major};
use crate::geometry::TriangleMesh;
use crate::renderer::{Camera, CameraJson, RenderConfig};
use crate::spectral::PositionalEmbedding;
use crate::trainer::{CaptureDataset, CaptureFrame};

/// Capture description. Relative paths resolve against the manifest's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    /// Capture mesh in template-local coordinates (OBJ).
    pub mesh: PathBuf,
    /// Precomputed embedding; computed from the training configuration
    /// when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<PathBuf>,
    /// Factor applied to every length (mesh, translations, depths) to bring
    /// the scene inside the unit sphere.
    #[serde(default = "unit_scale")]
    pub scale: f64,
    pub frames: Vec<FrameEntry>,
}

fn unit_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub id: String,
    /// Camera JSON file.
    pub camera: PathBuf,
    pub color: PathBuf,
    /// Ray distances as a one-channel PFM; zero marks missing depth.
    pub depth: PathBuf,
    /// Template pose, 16 row-major floats.
    pub pose: Vec<f64>,
}

/// A loaded capture.
#[derive(Debug, Clone)]
pub struct LoadedScene {
    pub dataset: CaptureDataset,
    pub embedding: Option<PositionalEmbedding>,
}

pub fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

pub fn load_camera(path: &Path) -> Result<Camera, PipelineError> {
    let json: CameraJson = read_json(path)?;
    Camera::from_json(&json).map_err(|e| PipelineError::Validation(format!("{}: {e}", path.display())))
}

fn scaled_isometry(t: &Isometry3<f64>, scale: f64) -> Isometry3<f64> {
    Isometry3::from_parts(Translation3::from(t.translation.vector * scale), t.rotation)
}

impl SceneManifest {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let manifest: Self = read_json(path)?;
        if !(manifest.scale.is_finite() && manifest.scale > 0.0) {
            return Err(PipelineError::Validation(format!("{}: scale must be positive", path.display())));
        }
        if manifest.frames.is_empty() {
            return Err(PipelineError::Validation(format!("{}: manifest lists no frames", path.display())));
        }
        Ok(manifest)
    }

    /// Reads every referenced file. Frames sharing a bitwise-equal pose
    /// share one posed mesh.
    pub fn load_scene(&self, manifest_path: &Path) -> Result<LoadedScene, PipelineError> {
        let base = base_dir(manifest_path);
        let mesh_path = resolve(&base, &self.mesh);
        let mesh = TriangleMesh::load_obj(&mesh_path).map_err(|e| PipelineError::Validation(format!("{}: {e}", mesh_path.display())))?;
        let template = if self.scale == 1.0 {
            mesh
        } else {
            let nodes = mesh.nodes().iter().map(|p| p * self.scale).collect();
            mesh.with_nodes(nodes).map_err(|e| PipelineError::Validation(format!("{}: {e}", mesh_path.display())))?
        };
        let embedding = match &self.embedding {
            Some(p) => {
                let p = resolve(&base, p);
                let emb = PositionalEmbedding::load(&p).map_err(|e| PipelineError::Validation(format!("{}: {e}", p.display())))?;
                if emb.n != template.nodes().len() {
                    return Err(PipelineError::Validation(format!(
                        "{}: embedding has {} nodes, mesh has {}",
                        p.display(),
                        emb.n,
                        template.nodes().len()
                    )));
                }
                Some(emb)
            }
            None => None,
        };

        let mut poses: Vec<Isometry3<f64>> = Vec::new();
        let mut pose_of: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut frames = Vec::with_capacity(self.frames.len());
        for entry in &self.frames {
            let bad = |m: String| PipelineError::Validation(format!("frame {}: {m}", entry.id));
            let matrix: [f64; 16] = entry
                .pose
                .as_slice()
                .try_into()
                .map_err(|_| bad(format!("pose needs 16 values, got {}", entry.pose.len())))?;
            let pose = scaled_isometry(&isometry_from_row_major(&matrix).map_err(|e| bad(format!("pose: {e}")))?, self.scale);
            let key: Vec<u64> = matrix.iter().map(|v| v.to_bits()).collect();
            let pose_index = *pose_of.entry(key).or_insert_with(|| {
                poses.push(pose);
                poses.len() - 1
            });

            let camera_path = resolve(&base, &entry.camera);
            let mut camera = load_camera(&camera_path).map_err(|e| bad(e.to_string()))?;
            camera.camera_from_world = scaled_isometry(&camera.camera_from_world, self.scale);
            let color = read_png(&resolve(&base, &entry.color)).map_err(|e| bad(e.to_string()))?;
            if color.channels != 3 {
                return Err(bad("color image must be RGB".into()));
            }
            let mut depth = read_pfm(&resolve(&base, &entry.depth)).map_err(|e| bad(e.to_string()))?;
            depth.data.iter_mut().for_each(|d| *d *= self.scale);
            frames.push(CaptureFrame::new(entry.id.clone(), camera, color, depth, pose_index)?);
        }
        let dataset = CaptureDataset::new(template, poses, frames)?;
        Ok(LoadedScene { dataset, embedding })
    }
}

pub fn pose_entry(pose: &Isometry3<f64>) -> Vec<f64> {
    isometry_to_row_major(pose).to_vec()
}

/// Re-posing job: a trained checkpoint, meshes of the same topology and the
/// cameras to render them from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReposeJob {
    /// Given on the command line when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    pub meshes: Vec<ReposedMesh>,
    /// Camera JSON files; each camera's id is its file stem.
    pub cameras: Vec<PathBuf>,
    #[serde(default)]
    pub render: RenderConfig,
    /// Output directory; given on the command line when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReposedMesh {
    pub id: String,
    pub path: PathBuf,
    /// Rigid transform applied to the mesh nodes; the nodes are taken as
    /// scene coordinates when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<Vec<f64>>,
}

impl ReposeJob {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let job: Self = read_json(path)?;
        if job.meshes.is_empty() || job.cameras.is_empty() {
            return Err(PipelineError::Validation(format!("{}: job needs at least one mesh and one camera", path.display())));
        }
        if job.render.samples < 2 {
            return Err(PipelineError::Validation(format!("{}: render needs at least 2 samples per ray", path.display())));
        }
        let mut ids: Vec<&str> = job.meshes.iter().map(|m| m.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(PipelineError::Validation(format!("{}: mesh ids must be unique", path.display())));
        }
        Ok(job)
    }
}

impl ReposedMesh {
    /// Mesh nodes in scene coordinates.
    pub fn load(&self, base: &Path) -> Result<TriangleMesh, PipelineError> {
        let path = resolve(base, &self.path);
        let bad = |m: String| PipelineError::Validation(format!("mesh {} ({}): {m}", self.id, path.display()));
        let mesh = TriangleMesh::load_obj(&path).map_err(|e| bad(e.to_string()))?;
        match &self.pose {
            None => Ok(mesh),
            Some(values) => {
                let m: [f64; 16] =
                    values.as_slice().try_into().map_err(|_| bad(format!("pose needs 16 values, got {}", values.len())))?;
                Ok(mesh.transformed(&isometry_from_row_major(&m).map_err(bad)?))
            }
        }
    }
}

pub(super) fn job_base(path: &Path) -> PathBuf {
    base_dir(path)
}
