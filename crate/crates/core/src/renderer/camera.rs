use nalgebra::{Isometry3, Matrix3, Rotation3, Translation3, UnitQuaternion};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::RenderError;
use crate::fields::{isometry_from_row_major, isometry_to_row_major, SCENE_RADIUS};
use crate::geometry::Vec3;

/// Pinhole camera. Camera coordinates look down `+z` with `x` right and
/// `y` down; pixel `(i, j)` covers `[i, i+1) x [j, j+1)` in image
/// coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub camera_from_world: Isometry3<f64>,
}

/// On-disk camera description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraJson {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Row-major 4x4 rigid transform.
    pub camera_from_world: Vec<f64>,
}

impl Camera {
    pub fn new(
        width: usize,
        height: usize,
        [fx, fy, cx, cy]: [f64; 4],
        camera_from_world: Isometry3<f64>,
    ) -> Result<Self, RenderError> {
        let camera = Self { width, height, fx, fy, cx, cy, camera_from_world };
        camera.validate()?;
        Ok(camera)
    }

    fn validate(&self) -> Result<(), RenderError> {
        let bad = |msg: String| Err(RenderError::InvalidCamera(msg));
        if self.width == 0 || self.height == 0 {
            return bad("resolution must be positive".into());
        }
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return bad(format!("focal lengths must be positive, got {} and {}", self.fx, self.fy));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64 && self.cy >= 0.0 && self.cy < self.height as f64) {
            return bad(format!("principal point ({}, {}) outside the image", self.cx, self.cy));
        }
        let r = self.camera_from_world.rotation.to_rotation_matrix().into_inner();
        let err = (r.transpose() * r - Matrix3::identity()).abs().max();
        if err > 1e-9 || (r.determinant() - 1.0).abs() > 1e-9 {
            return bad(format!("rotation is not orthonormal (error {err:.2e})"));
        }
        Ok(())
    }

    /// Camera at `eye` looking at `target`, with square pixels and a
    /// horizontal field of view `fov` in radians.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, width: usize, height: usize, fov: f64) -> Result<Self, RenderError> {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up);
        if right.norm() < 1e-9 {
            return Err(RenderError::InvalidCamera("up vector is parallel to the view direction".into()));
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        // rows of the world-to-camera rotation are the camera axes
        let rot = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let rotation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(rot));
        let translation = -(rotation * eye);
        let f = 0.5 * width as f64 / (0.5 * fov).tan();
        Self::new(
            width,
            height,
            [f, f, 0.5 * width as f64, 0.5 * height as f64],
            Isometry3::from_parts(Translation3::from(translation), rotation),
        )
    }

    pub fn center(&self) -> Vec3 {
        self.camera_from_world.inverse_transform_point(&Vec3::zeros().into()).coords
    }

    /// Image coordinates of a world point, or `None` behind the camera.
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64)> {
        let c = self.camera_from_world.transform_point(&(*p).into());
        (c.z > 1e-12).then(|| (self.fx * c.x / c.z + self.cx, self.fy * c.y / c.z + self.cy))
    }

    /// World-space unit direction through image coordinates `(u, v)`.
    pub fn direction(&self, u: f64, v: f64) -> Vec3 {
        let d = Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0);
        self.camera_from_world.inverse_transform_vector(&d).normalize()
    }

    pub fn to_json(&self) -> CameraJson {
        CameraJson {
            width: self.width,
            height: self.height,
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            camera_from_world: isometry_to_row_major(&self.camera_from_world).to_vec(),
        }
    }

    pub fn from_json(json: &CameraJson) -> Result<Self, RenderError> {
        let m: [f64; 16] = json.camera_from_world.as_slice().try_into().map_err(|_| {
            RenderError::InvalidCamera(format!(
                "camera_from_world needs 16 values, got {}",
                json.camera_from_world.len()
            ))
        })?;
        let pose = isometry_from_row_major(&m).map_err(RenderError::InvalidCamera)?;
        Self::new(json.width, json.height, [json.fx, json.fy, json.cx, json.cy], pose)
    }
}

/// A ray clipped to the scene sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit direction.
    pub direction: Vec3,
    /// `(near, far)` distances where the ray is inside the scene sphere;
    /// `None` when it misses.
    pub span: Option<(f64, f64)>,
}

impl Ray {
    pub fn new(origin: Vec3, direction: Vec3) -> Self {
        let direction = direction.normalize();
        Self { origin, direction, span: sphere_span(&origin, &direction, SCENE_RADIUS) }
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }

    pub fn hits(&self) -> bool {
        self.span.is_some()
    }
}

/// Distances where `origin + t * dir` (unit `dir`, `t >= 0`) lies inside the
/// sphere of `radius` about the origin.
pub fn sphere_span(origin: &Vec3, dir: &Vec3, radius: f64) -> Option<(f64, f64)> {
    let b = origin.dot(dir);
    let c = origin.norm_squared() - radius * radius;
    let disc = b * b - c;
    if disc <= 0.0 {
        return None;
    }
    let root = disc.sqrt();
    let (t0, t1) = (-b - root, -b + root);
    (t1 > 0.0).then(|| (t0.max(0.0), t1))
}

/// Ray through image coordinates `(u, v)`; the centre of pixel `(i, j)` is
/// `(i + 0.5, j + 0.5)`.
pub fn pixel_ray(camera: &Camera, u: f64, v: f64) -> Ray {
    Ray::new(camera.center(), camera.direction(u, v))
}

/// `n >= 2` distances along a hitting ray. Without stratification the grid
/// includes both ends; with it each of `n` equal sub-intervals gets one
/// uniform draw.
pub fn sample_ray(ray: &Ray, n: usize, stratified: bool, rng: &mut impl Rng) -> Vec<f64> {
    assert!(n >= 2, "need at least two samples");
    let (near, far) = ray.span.expect("ray must hit the scene sphere");
    if stratified {
        let step = (far - near) / n as f64;
        (0..n).map(|i| near + (i as f64 + rng.random::<f64>()) * step).collect()
    } else {
        let step = (far - near) / (n - 1) as f64;
        (0..n).map(|i| if i + 1 == n { far } else { near + i as f64 * step }).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn front_camera(size: usize, fov: f64) -> Camera {
        Camera::look_at(Vec3::new(0.0, 0.0, -3.0), Vec3::zeros(), Vec3::new(0.0, -1.0, 0.0), size, size, fov).unwrap()
    }

    #[test]
    fn principal_point_looks_along_axis() {
        let cam = front_camera(64, 0.8);
        let ray = pixel_ray(&cam, cam.cx, cam.cy);
        assert!((ray.direction - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
        let (near, far) = ray.span.unwrap();
        assert!((near - 2.0).abs() < 1e-12 && (far - 4.0).abs() < 1e-12);
        assert!((cam.center() - Vec3::new(0.0, 0.0, -3.0)).norm() < 1e-12);
    }

    #[test]
    fn wide_corner_ray_misses() {
        let cam = front_camera(64, std::f64::consts::FRAC_PI_2);
        let ray = pixel_ray(&cam, 0.5, 0.5);
        // the corner direction makes an angle of about 54 degrees with the
        // axis while the sphere subtends asin(1/3), about 19.5 degrees
        assert!(!ray.hits());
        let angle = ray.direction.dot(&Vec3::new(0.0, 0.0, 1.0)).acos();
        assert!(angle > (1.0f64 / 3.0).asin());
    }

    #[test]
    fn projection_inverts_directions() {
        let cam = Camera::look_at(Vec3::new(1.0, 2.0, -2.5), Vec3::new(0.1, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), 48, 32, 0.9)
            .unwrap();
        let ray = pixel_ray(&cam, 10.5, 20.5);
        let (u, v) = cam.project(&ray.at(3.0)).unwrap();
        assert!((u - 10.5).abs() < 1e-9 && (v - 20.5).abs() < 1e-9);
    }

    #[test]
    fn json_round_trip_and_validation() {
        let cam = front_camera(32, 0.7);
        let back = Camera::from_json(&cam.to_json()).unwrap();
        assert!((back.camera_from_world.to_homogeneous() - cam.camera_from_world.to_homogeneous()).abs().max() < 1e-15);
        let mut json = cam.to_json();
        json.fx = -1.0;
        assert!(Camera::from_json(&json).is_err());
        let mut json = cam.to_json();
        json.cx = 40.0;
        assert!(Camera::from_json(&json).is_err());
        let mut json = cam.to_json();
        json.camera_from_world.pop();
        assert!(Camera::from_json(&json).is_err());
    }

    #[test]
    fn uniform_and_stratified_samples() {
        let ray = Ray { origin: Vec3::zeros(), direction: Vec3::x(), span: Some((2.0, 4.0)) };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_ray(&ray, 5, false, &mut rng), vec![2.0, 2.5, 3.0, 3.5, 4.0]);
        let s = sample_ray(&ray, 8, true, &mut ChaCha8Rng::seed_from_u64(3));
        for (i, t) in s.iter().enumerate() {
            assert!(*t >= 2.0 + i as f64 * 0.25 && *t <= 2.0 + (i + 1) as f64 * 0.25);
        }
        assert_eq!(s, sample_ray(&ray, 8, true, &mut ChaCha8Rng::seed_from_u64(3)));
    }
}
