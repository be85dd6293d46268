use std::sync::Arc;

use nalgebra::Isometry3;

use super::TrainError;
use crate::fields::{FieldError, SceneModel};
use crate::geometry::{ClosestPointIndex, TriangleMesh};
use crate::renderer::{pixel_ray, Camera, Image, Ray};

/// One RGB-D observation.
#[derive(Debug, Clone)]
pub struct CaptureFrame {
    pub id: String,
    pub camera: Camera,
    pub color: Image,
    /// Ray distance per pixel; zero marks an invalid pixel.
    pub depth: Image,
    /// Index into [`CaptureDataset::poses`].
    pub pose: usize,
    /// Pixels whose rays meet the scene sphere, as `y * width + x`.
    hitting: Vec<usize>,
}

impl CaptureFrame {
    pub fn new(id: impl Into<String>, camera: Camera, color: Image, depth: Image, pose: usize) -> Result<Self, TrainError> {
        let id = id.into();
        let bad = |m: String| Err(TrainError::Dataset(format!("frame {id}: {m}")));
        if color.width != camera.width || color.height != camera.height || color.channels != 3 {
            return bad(format!(
                "color image is {}x{}x{}, camera is {}x{}",
                color.width, color.height, color.channels, camera.width, camera.height
            ));
        }
        if depth.width != camera.width || depth.height != camera.height || depth.channels != 1 {
            return bad(format!("depth image is {}x{}, camera is {}x{}", depth.width, depth.height, camera.width, camera.height));
        }
        if let Some(d) = depth.data.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
            return bad(format!("depth value {d} is not a finite non-negative distance"));
        }
        let hitting = (0..camera.width * camera.height)
            .filter(|&i| Self::ray_of(&camera, i).hits())
            .collect();
        Ok(Self { id, camera, color, depth, pose, hitting })
    }

    fn ray_of(camera: &Camera, pixel: usize) -> Ray {
        let (x, y) = (pixel % camera.width, pixel / camera.width);
        pixel_ray(camera, x as f64 + 0.5, y as f64 + 0.5)
    }

    pub fn ray(&self, pixel: usize) -> Ray {
        Self::ray_of(&self.camera, pixel)
    }

    pub fn hitting_pixels(&self) -> &[usize] {
        &self.hitting
    }
}

/// Frames of one object held in a set of rigid template poses.
#[derive(Debug, Clone)]
pub struct CaptureDataset {
    pub template: TriangleMesh,
    pub poses: Vec<Isometry3<f64>>,
    pub frames: Vec<CaptureFrame>,
    posed: Vec<Arc<ClosestPointIndex>>,
}

impl CaptureDataset {
    pub fn new(template: TriangleMesh, poses: Vec<Isometry3<f64>>, frames: Vec<CaptureFrame>) -> Result<Self, TrainError> {
        if frames.is_empty() {
            return Err(TrainError::Dataset("dataset has no frames".into()));
        }
        if let Some(f) = frames.iter().find(|f| f.pose >= poses.len()) {
            return Err(TrainError::Dataset(format!("frame {}: pose {} out of range", f.id, f.pose)));
        }
        if let Some(f) = frames.iter().find(|f| f.hitting.is_empty()) {
            return Err(TrainError::Dataset(format!("frame {}: no pixel sees the scene sphere", f.id)));
        }
        let posed = poses.iter().map(|p| Arc::new(ClosestPointIndex::new(template.transformed(p)))).collect();
        Ok(Self { template, poses, frames, posed })
    }

    /// Closest-point index of the template in pose `pose`.
    pub fn posed(&self, pose: usize) -> &Arc<ClosestPointIndex> {
        &self.posed[pose]
    }

    /// `model` attached to the mesh as posed in `frame`.
    pub fn model_for_frame(&self, model: &SceneModel, frame: usize) -> Result<SceneModel, FieldError> {
        model.reposed(self.posed[self.frames[frame].pose].clone())
    }

    pub fn frame_index(&self, id: &str) -> Option<usize> {
        self.frames.iter().position(|f| f.id == id)
    }
}
