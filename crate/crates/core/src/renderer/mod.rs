//! Cameras, ray sampling, render weights and image synthesis.

mod analytic;
mod camera;
mod weights;

pub use analytic::AnalyticScene;
pub use camera::{pixel_ray, sample_ray, sphere_span, Camera, CameraJson, Ray};
pub use weights::{alphas, render_weights, render_weights_backward};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::{Owner, SceneModel};
use crate::geometry::Vec3;

/// Samples whose weight is below this do not contribute to normals.
const NORMAL_WEIGHT_FLOOR: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
}

/// Row-major image with interleaved channels, top row first.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self { width, height, channels, data: vec![0.0; width * height * channels] }
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f64] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Values rounded to the nearest 8-bit level, as stored in a PNG.
    pub fn quantized(&self) -> Image {
        Image { data: self.data.iter().map(|v| quantize(*v) as f64 / 255.0).collect(), ..self.clone() }
    }

    /// Per-pixel mean over channels.
    pub fn to_gray(&self) -> Image {
        let data = self.data.chunks(self.channels).map(|p| p.iter().sum::<f64>() / self.channels as f64).collect();
        Image { width: self.width, height: self.height, channels: 1, data }
    }
}

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Per-pixel segmentation label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MaskLabel {
    OutsideBound,
    Background,
    Object,
}

impl MaskLabel {
    /// Gray level in mask images.
    pub fn level(self) -> u8 {
        match self {
            MaskLabel::OutsideBound => 0,
            MaskLabel::Background => 128,
            MaskLabel::Object => 255,
        }
    }

    pub fn from_level(level: u8) -> Option<Self> {
        match level {
            0 => Some(MaskLabel::OutsideBound),
            128 => Some(MaskLabel::Background),
            255 => Some(MaskLabel::Object),
            _ => None,
        }
    }
}

impl From<Owner> for MaskLabel {
    fn from(o: Owner) -> Self {
        match o {
            Owner::Background => MaskLabel::Background,
            Owner::Object => MaskLabel::Object,
        }
    }
}

/// Values a field provides to the renderer.
#[derive(Debug, Clone, Default)]
pub struct Shading {
    pub sdf: Vec<f64>,
    pub owner: Vec<Owner>,
    /// `rows x 3`
    pub rgb: Vec<f64>,
}

/// Anything that can be volume-rendered.
pub trait RadianceField: Sync {
    /// Inverse standard deviation of the logistic density.
    fn sharpness(&self) -> f64;
    fn sdf(&self, points: &[Vec3]) -> Vec<f64>;
    /// Sdf, owner and color of `points` seen along unit `views`.
    fn shade(&self, points: &[Vec3], views: &[Vec3]) -> Shading;
}

impl RadianceField for SceneModel {
    fn sharpness(&self) -> f64 {
        SceneModel::sharpness(self)
    }

    fn sdf(&self, points: &[Vec3]) -> Vec<f64> {
        self.sdf_batch(points)
    }

    fn shade(&self, points: &[Vec3], views: &[Vec3]) -> Shading {
        let queries = self.query(points);
        let batch = self.evaluate(points, &queries, true);
        let rgb = self.decode(&batch.features, views, &batch.sdf);
        Shading { sdf: batch.sdf, owner: batch.owner, rgb }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    pub samples: usize,
    pub stratified: bool,
    pub seed: u64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self { samples: 128, stratified: true, seed: 0 }
    }
}

/// Result of rendering one ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelSample {
    pub color: [f64; 3],
    pub depth: f64,
    pub normal: Vec3,
    pub mask: MaskLabel,
    pub weight: f64,
    /// False when the field produced non-finite values.
    pub valid: bool,
}

impl PixelSample {
    fn outside() -> Self {
        Self { color: [0.0; 3], depth: 0.0, normal: Vec3::zeros(), mask: MaskLabel::OutsideBound, weight: 0.0, valid: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedFrame {
    pub color: Image,
    pub depth: Image,
    pub normal: Image,
    pub mask: Vec<MaskLabel>,
    pub weight: Image,
    /// Pixels flagged for non-finite field values.
    pub invalid: usize,
}

impl RenderedFrame {
    pub fn width(&self) -> usize {
        self.color.width
    }

    pub fn height(&self) -> usize {
        self.color.height
    }

    pub fn mask_image(&self) -> Image {
        Image {
            width: self.width(),
            height: self.height(),
            channels: 1,
            data: self.mask.iter().map(|m| m.level() as f64 / 255.0).collect(),
        }
    }
}

/// Seed of the sample stream of one pixel.
pub fn pixel_seed(seed: u64, pixel: u64) -> u64 {
    splitmix(seed ^ splitmix(pixel.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

pub(crate) fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Renders rays together, sharing field evaluations. `seeds` give each
/// ray's sample stream.
pub fn render_rays(field: &dyn RadianceField, rays: &[Ray], seeds: &[u64], config: &RenderConfig) -> Vec<PixelSample> {
    assert_eq!(rays.len(), seeds.len());
    let n = config.samples;
    let mut out = vec![PixelSample::outside(); rays.len()];
    let hitting: Vec<usize> = (0..rays.len()).filter(|&i| rays[i].hits()).collect();
    if hitting.is_empty() {
        return out;
    }
    let mut points = Vec::with_capacity(hitting.len() * n);
    let mut views = Vec::with_capacity(hitting.len() * n);
    let mut distances = Vec::with_capacity(hitting.len() * n);
    for &i in &hitting {
        let mut rng = ChaCha8Rng::seed_from_u64(seeds[i]);
        let ts = sample_ray(&rays[i], n, config.stratified, &mut rng);
        for &t in &ts {
            points.push(rays[i].at(t));
            views.push(rays[i].direction);
        }
        distances.extend(ts);
    }
    let shading = field.shade(&points, &views);
    let s = field.sharpness();

    let mut all_weights = Vec::with_capacity(points.len());
    for r in 0..hitting.len() {
        all_weights.extend(render_weights(&shading.sdf[r * n..(r + 1) * n], s));
    }
    let heavy: Vec<usize> = (0..points.len()).filter(|&i| all_weights[i] > NORMAL_WEIGHT_FLOOR).collect();
    let heavy_points: Vec<Vec3> = heavy.iter().map(|&i| points[i]).collect();
    let gradients = SceneModel::gradients_from_probes(&field.sdf(&SceneModel::gradient_probes(&heavy_points)));
    let mut gradient_of = vec![None; points.len()];
    for (&i, g) in heavy.iter().zip(gradients) {
        gradient_of[i] = Some(g);
    }

    for (r, &i) in hitting.iter().enumerate() {
        let range = r * n..(r + 1) * n;
        let w = &all_weights[range.clone()];
        let mut color = [0.0; 3];
        let mut depth = 0.0;
        let mut normal = Vec3::zeros();
        let mut best = (f64::NEG_INFINITY, Owner::Background);
        for (j, idx) in range.clone().enumerate() {
            for c in 0..3 {
                color[c] += w[j] * shading.rgb[idx * 3 + c];
            }
            if j + 1 < n {
                // weight j belongs to the interval between samples j and j + 1
                depth += w[j] * 0.5 * (distances[idx] + distances[idx + 1]);
            }
            if let Some(g) = gradient_of[idx] {
                normal += g * w[j];
            }
            if w[j] > best.0 {
                best = (w[j], shading.owner[idx]);
            }
        }
        let acc: f64 = w.iter().sum();
        if acc > 1e-6 {
            depth /= acc;
        }
        let normal = if normal.norm() > 0.0 { normal.normalize() } else { normal };
        let valid = color.iter().all(|c| c.is_finite()) && depth.is_finite() && acc.is_finite();
        let mask = if acc > 0.5 { best.1.into() } else { MaskLabel::Background };
        out[i] = if valid {
            PixelSample { color, depth, normal, mask, weight: acc, valid }
        } else {
            PixelSample { color: [0.0; 3], depth: 0.0, normal: Vec3::zeros(), mask, weight: 0.0, valid }
        };
    }
    out
}

pub fn render_pixel(field: &dyn RadianceField, ray: &Ray, config: &RenderConfig, seed: u64) -> PixelSample {
    render_rays(field, std::slice::from_ref(ray), &[seed], config)[0]
}

/// Renders every pixel of `camera`, one row per parallel task.
pub fn render_frame(field: &dyn RadianceField, camera: &Camera, config: &RenderConfig) -> RenderedFrame {
    let (w, h) = (camera.width, camera.height);
    let rows: Vec<Vec<PixelSample>> = (0..h)
        .into_par_iter()
        .map(|y| {
            let rays: Vec<Ray> = (0..w).map(|x| pixel_ray(camera, x as f64 + 0.5, y as f64 + 0.5)).collect();
            let seeds: Vec<u64> = (0..w).map(|x| pixel_seed(config.seed, (y * w + x) as u64)).collect();
            render_rays(field, &rays, &seeds, config)
        })
        .collect();
    let mut frame = RenderedFrame {
        color: Image::new(w, h, 3),
        depth: Image::new(w, h, 1),
        normal: Image::new(w, h, 3),
        mask: Vec::with_capacity(w * h),
        weight: Image::new(w, h, 1),
        invalid: 0,
    };
    for (y, row) in rows.into_iter().enumerate() {
        for (x, px) in row.into_iter().enumerate() {
            frame.color.pixel_mut(x, y).copy_from_slice(&px.color);
            frame.depth.pixel_mut(x, y)[0] = px.depth;
            frame.normal.pixel_mut(x, y).copy_from_slice(px.normal.as_slice());
            frame.weight.pixel_mut(x, y)[0] = px.weight;
            frame.mask.push(px.mask);
            frame.invalid += usize::from(!px.valid);
        }
    }
    frame
}

#[cfg(test)]
mod tests;
