//! Procedural capture scene: a shaded room sphere around a striped tube,
//! rendered by exact ray casting.

use std::f64::consts::PI;

use nalgebra::{Isometry3, Translation3, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};

use crate::fields::Owner;
use crate::geometry::{shapes, ClosestPointIndex, TriangleMesh, Vec3};
use crate::renderer::{pixel_ray, sphere_span, Camera, Image, MaskLabel};
use crate::trainer::{CaptureDataset, CaptureFrame, TrainError};

/// Ground truth of one camera view.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthFrame {
    pub color: Image,
    /// Ray distance, zero where the ray misses the scene sphere.
    pub depth: Image,
    pub normal: Image,
    pub mask: Vec<MaskLabel>,
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub room_radius: f64,
    /// Tube in template-local coordinates.
    pub template: TriangleMesh,
    /// Direction of the highlight in the room's view-dependent shading.
    pub light: Vec3,
}

impl Default for SyntheticScene {
    fn default() -> Self {
        Self { room_radius: 0.9, template: tube(), light: Vec3::new(1.0, -1.0, 1.0).normalize() }
    }
}

/// Elongated ellipsoid along `x`, 162 nodes.
pub fn tube() -> TriangleMesh {
    shapes::ellipsoid(2, Vec3::new(0.55, 0.18, 0.18))
}

/// Bends a mesh along `x` around an axis parallel to `z`, keeping
/// lengths along the centre line. `curvature` is `1 / radius`.
pub fn bend(mesh: &TriangleMesh, curvature: f64) -> TriangleMesh {
    if curvature == 0.0 {
        return mesh.clone();
    }
    let r = 1.0 / curvature;
    let nodes: Vec<Vec3> = mesh
        .nodes()
        .iter()
        .map(|p| {
            let theta = p.x * curvature;
            let radius = r - p.y;
            Vec3::new(radius * theta.sin(), r - radius * theta.cos(), p.z)
        })
        .collect();
    let centroid = nodes.iter().sum::<Vec3>() / nodes.len() as f64;
    mesh.with_nodes(nodes.iter().map(|p| p - centroid).collect()).expect("bending keeps faces non-degenerate")
}

impl SyntheticScene {
    /// Room color at wall point `q`, seen along unit `view`.
    pub fn room_color(&self, q: &Vec3, view: &Vec3) -> [f64; 3] {
        let u = q / q.norm();
        let highlight = 0.08 * view.dot(&self.light);
        [
            (0.55 + 0.2 * (3.0 * u.x + 1.0).sin() + highlight).clamp(0.0, 1.0),
            (0.5 + 0.2 * (2.5 * u.y + 2.0).sin() + highlight).clamp(0.0, 1.0),
            (0.45 + 0.2 * (3.0 * u.z).sin() + highlight).clamp(0.0, 1.0),
        ]
    }

    /// Stripes across the tube's long axis, in template-local coordinates.
    pub fn object_albedo(local: &Vec3) -> [f64; 3] {
        let t = 0.5 + 0.5 * (2.0 * PI * local.x / 0.45).sin();
        let a = [0.9, 0.3, 0.2];
        let b = [0.15, 0.35, 0.85];
        [a[0] * t + b[0] * (1.0 - t), a[1] * t + b[1] * (1.0 - t), a[2] * t + b[2] * (1.0 - t)]
    }

    /// Ray casts `posed` (same topology as the template) and the room.
    /// Object colors come from the template position of the same
    /// surface point, so the pattern moves with the mesh.
    pub fn render_truth(&self, posed: &ClosestPointIndex, camera: &Camera) -> TruthFrame {
        let (w, h) = (camera.width, camera.height);
        let mut frame = TruthFrame {
            color: Image::new(w, h, 3),
            depth: Image::new(w, h, 1),
            normal: Image::new(w, h, 3),
            mask: vec![MaskLabel::OutsideBound; w * h],
        };
        let template_nodes = self.template.nodes();
        for y in 0..h {
            for x in 0..w {
                let ray = pixel_ray(camera, x as f64 + 0.5, y as f64 + 0.5);
                if !ray.hits() {
                    continue;
                }
                // rays through the gap between the room and the scene
                // sphere see nothing: black, no depth
                frame.mask[y * w + x] = MaskLabel::Background;
                let Some((t_in, t_out)) = sphere_span(&ray.origin, &ray.direction, self.room_radius) else {
                    continue;
                };
                let object = posed.raycast(&ray.origin, &ray.direction).filter(|hit| hit.distance > t_in && hit.distance < t_out);
                let (t, owner, color, normal) = match object {
                    Some(hit) => {
                        let sp = hit.point;
                        let face = posed.mesh().faces()[sp.face];
                        let local: Vec3 = (0..3).map(|i| template_nodes[face[i]] * sp.barycentric[i]).sum();
                        (hit.distance, Owner::Object, Self::object_albedo(&local), posed.face_normal(sp.face))
                    }
                    None => {
                        let q = ray.at(t_out);
                        (t_out, Owner::Background, self.room_color(&q, &ray.direction), -q / q.norm())
                    }
                };
                frame.color.pixel_mut(x, y).copy_from_slice(&color);
                frame.depth.pixel_mut(x, y)[0] = t;
                frame.normal.pixel_mut(x, y).copy_from_slice(normal.as_slice());
                frame.mask[y * w + x] = owner.into();
            }
        }
        frame
    }
}

/// Rigid template poses: the first is the identity, the rest are small
/// random rotations and shifts that keep the tube inside the room.
pub fn random_poses(seed: u64, count: usize) -> Vec<Isometry3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0001);
    (0..count)
        .map(|i| {
            if i == 0 {
                return Isometry3::identity();
            }
            let axis = Vec3::from(UnitSphere.sample(&mut rng));
            let angle = rng.random_range(0.3..0.8);
            let shift = Vec3::from(UnitSphere.sample(&mut rng)) * rng.random_range(0.0..0.1);
            Isometry3::from_parts(
                Translation3::from(shift),
                UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle),
            )
        })
        .collect()
}

/// Cameras on a ring around the origin at alternating heights.
pub fn ring_cameras(seed: u64, count: usize, size: usize, distance: f64, fov: f64) -> Vec<Camera> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0002);
    (0..count)
        .map(|i| {
            let azimuth: f64 = 2.0 * PI * (i as f64 + rng.random_range(-0.2..0.2)) / count as f64;
            let elevation: f64 = if i % 2 == 0 { 0.35 } else { -0.3 } + rng.random_range(-0.1..0.1);
            let eye = Vec3::new(
                distance * elevation.cos() * azimuth.cos(),
                distance * elevation.sin(),
                distance * elevation.cos() * azimuth.sin(),
            );
            Camera::look_at(eye, Vec3::zeros(), Vec3::y(), size, size, fov).expect("ring camera")
        })
        .collect()
}

/// In-memory capture of the procedural scene, stored the way files
/// would hold it: colors on 8-bit levels, depths in `f32`.
pub fn synthetic_dataset(
    scene: &SyntheticScene,
    poses: &[Isometry3<f64>],
    cameras: &[Camera],
) -> Result<CaptureDataset, TrainError> {
    let mut frames = Vec::with_capacity(poses.len() * cameras.len());
    for (p, pose) in poses.iter().enumerate() {
        let posed = ClosestPointIndex::new(scene.template.transformed(pose));
        for (c, camera) in cameras.iter().enumerate() {
            let truth = scene.render_truth(&posed, camera);
            let mut depth = truth.depth;
            depth.data.iter_mut().for_each(|d| *d = *d as f32 as f64);
            frames.push(CaptureFrame::new(frame_id(p, c), camera.clone(), truth.color.quantized(), depth, p)?);
        }
    }
    CaptureDataset::new(scene.template.clone(), poses.to_vec(), frames)
}

pub fn frame_id(pose: usize, camera: usize) -> String {
    format!("p{pose}_c{camera}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bending_keeps_topology_and_lengths() {
        let t = tube();
        let b = bend(&t, 1.5);
        assert!(b.same_topology(&t));
        assert!((b.volume() - t.volume()).abs() / t.volume() < 0.05);
        assert_eq!(bend(&t, 0.0), t);
    }

    #[test]
    fn truth_is_consistent() {
        let scene = SyntheticScene::default();
        let posed = ClosestPointIndex::new(scene.template.transformed(&random_poses(3, 2)[1]));
        let cam = &ring_cameras(3, 4, 24, 2.6, 0.72)[1];
        let frame = scene.render_truth(&posed, cam);
        let mut objects = 0;
        for y in 0..24 {
            for x in 0..24 {
                let d = frame.depth.pixel(x, y)[0];
                let label = frame.mask[y * 24 + x];
                if label == MaskLabel::OutsideBound || d == 0.0 {
                    assert_ne!(label, MaskLabel::Object);
                    assert_eq!(frame.color.pixel(x, y), &[0.0; 3]);
                    continue;
                }
                let p = pixel_ray(cam, x as f64 + 0.5, y as f64 + 0.5).at(d);
                match label {
                    MaskLabel::Object => {
                        objects += 1;
                        assert!(posed.signed_distance(&p).signed_distance.abs() < 1e-9);
                    }
                    _ => assert!((p.norm() - 0.9).abs() < 1e-9),
                }
            }
        }
        assert!(objects > 20);
        assert_eq!(scene.render_truth(&posed, cam), frame);
    }

    #[test]
    fn stripes_follow_the_surface() {
        let scene = SyntheticScene::default();
        let moved = Isometry3::translation(0.1, 0.0, 0.0);
        let posed = ClosestPointIndex::new(scene.template.transformed(&moved));
        let cam = Camera::look_at(Vec3::new(0.0, 0.0, -2.6), Vec3::zeros(), Vec3::y(), 32, 32, 0.72).unwrap();
        let frame = scene.render_truth(&posed, &cam);
        let mut seen = 0;
        for i in (0..32 * 32).filter(|&i| frame.mask[i] == MaskLabel::Object) {
            let (x, y) = (i % 32, i / 32);
            let p = pixel_ray(&cam, x as f64 + 0.5, y as f64 + 0.5).at(frame.depth.pixel(x, y)[0]);
            let expected = SyntheticScene::object_albedo(&(p - Vec3::new(0.1, 0.0, 0.0)));
            for c in 0..3 {
                assert!((frame.color.pixel(x, y)[c] - expected[c]).abs() < 1e-9);
            }
            seen += 1;
        }
        assert!(seen > 40, "{seen}");
    }
}
