use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, UnitBall, UnitSphere};

use super::TrainError;
use crate::fields::{SceneModel, SCENE_RADIUS};
use crate::geometry::{ClosestPointIndex, Vec3};
use crate::renderer::{pixel_ray, Camera, Image, RadianceField};

/// Standard deviation of the normal offset of near-surface mesh samples.
pub const NEAR_SURFACE_SIGMA: f64 = 0.05;

/// Mean absolute difference over all channels.
pub fn color_loss(predicted: &[f64], observed: &[f64]) -> Result<f64, TrainError> {
    if predicted.len() != observed.len() {
        return Err(TrainError::Shape(format!("{} predicted vs {} observed values", predicted.len(), observed.len())));
    }
    if predicted.is_empty() {
        return Ok(0.0);
    }
    Ok(predicted.iter().zip(observed).map(|(a, b)| (a - b).abs()).sum::<f64>() / predicted.len() as f64)
}

/// With probability `p`, a uniform random unit vector instead of `v`.
pub fn augment_view(v: &Vec3, p: f64, rng: &mut impl Rng) -> Vec3 {
    if p > 0.0 && rng.random::<f64>() < p {
        Vec3::from(UnitSphere.sample(rng))
    } else {
        *v
    }
}

/// World points of the valid (positive) pixels of a ray-distance image.
pub fn backproject(camera: &Camera, depth: &Image) -> Vec<Vec3> {
    let mut out = Vec::new();
    for y in 0..depth.height {
        for x in 0..depth.width {
            let d = depth.pixel(x, y)[0];
            if d > 0.0 {
                out.push(pixel_ray(camera, x as f64 + 0.5, y as f64 + 0.5).at(d));
            }
        }
    }
    out
}

/// Mean `|S(p)|` over backprojected depth points. Empty sets give 0.
pub fn depth_loss(field: &dyn RadianceField, views: &[(&Camera, &Image)]) -> f64 {
    let points: Vec<Vec3> = views.iter().flat_map(|(c, d)| backproject(c, d)).collect();
    if points.is_empty() {
        log::warn!("no valid depth pixels; depth term is zero");
        return 0.0;
    }
    field.sdf(&points).iter().map(|s| s.abs()).sum::<f64>() / points.len() as f64
}

/// Mean absolute field value on surface points seen by the depth images.
pub fn geometric_error(field: &dyn RadianceField, views: &[(&Camera, &Image)]) -> f64 {
    depth_loss(field, views)
}

pub fn uniform_ball(rng: &mut impl Rng, n: usize) -> Vec<Vec3> {
    (0..n).map(|_| Vec3::from(UnitBall.sample(rng)) * SCENE_RADIUS).collect()
}

/// Area-weighted surface points offset along the face normal by
/// `N(0, sigma)`.
pub fn near_surface(index: &ClosestPointIndex, rng: &mut impl Rng, n: usize, sigma: f64) -> Vec<Vec3> {
    let mesh = index.mesh();
    let areas: Vec<f64> = (0..mesh.faces().len()).map(|f| mesh.face_area(f)).collect();
    let pick = WeightedIndex::new(&areas).expect("faces have positive area");
    let offset = Normal::new(0.0, sigma).expect("valid sigma");
    (0..n)
        .map(|_| {
            let f = pick.sample(rng);
            let [a, b, c] = mesh.face_nodes(f);
            let (r1, r2) = (rng.random::<f64>().sqrt(), rng.random::<f64>());
            let p = a * (1.0 - r1) + b * (r1 * (1.0 - r2)) + c * (r1 * r2);
            p + index.face_normal(f) * offset.sample(rng)
        })
        .collect()
}

/// Half near the surface, half uniform in the scene ball.
pub fn mesh_samples(index: &ClosestPointIndex, rng: &mut impl Rng, n: usize) -> Vec<Vec3> {
    let mut points = near_surface(index, rng, n / 2, NEAR_SURFACE_SIGMA);
    points.extend(uniform_ball(rng, n - n / 2));
    points
}

/// Mean `(|grad S| - 1)^2` over uniform points in the scene ball, with
/// central-difference gradients.
pub fn eikonal_loss(field: &dyn RadianceField, count: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = uniform_ball(&mut rng, count.max(1));
    let values = field.sdf(&SceneModel::gradient_probes(&points));
    let grads = SceneModel::gradients_from_probes(&values);
    grads.iter().map(|g| (g.norm() - 1.0).powi(2)).sum::<f64>() / grads.len() as f64
}

/// Mean `|S_o - sdf_M|` against the model's own mesh.
pub fn mesh_loss(model: &SceneModel, count: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = mesh_samples(model.mesh_index(), &mut rng, count.max(1));
    let queries = model.query(&points);
    let (residual, _) = model.residual_taped(&queries);
    residual.iter().map(|r| r.abs()).sum::<f64>() / residual.len() as f64
}
