use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::losses::{augment_view, mesh_samples, uniform_ball};
use super::{CaptureDataset, TrainConfig};
use crate::fields::{SceneGrads, SceneModel};
use crate::renderer::{render_weights, render_weights_backward, sample_ray};

/// Unweighted loss terms and their weighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossTerms {
    pub color: f64,
    pub depth: f64,
    pub eikonal: f64,
    pub mesh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepLoss {
    pub iteration: u64,
    pub raw: LossTerms,
    pub weighted: LossTerms,
    pub total: f64,
    pub mesh_weight: f64,
}

impl StepLoss {
    pub fn is_finite(&self) -> bool {
        let t = [self.raw.color, self.raw.depth, self.raw.eikonal, self.raw.mesh, self.total];
        t.iter().all(|v| v.is_finite())
    }
}

/// What an iteration drew, kept for diagnostics.
#[derive(Debug, Clone, Default, Serialize)]
pub struct BatchRecord {
    /// `(frame id, pixel index)` per training ray.
    pub rays: Vec<(String, usize)>,
    pub regularizer_pose: usize,
}

/// Random stream of one iteration: a function of the run seed and the
/// iteration only, so resumed runs draw the same batches.
pub fn iteration_rng(seed: u64, iteration: u64) -> ChaCha8Rng {
    let mut z = seed ^ crate::renderer::splitmix(iteration ^ 0xa076_1d64_78bd_642f);
    z = crate::renderer::splitmix(z);
    ChaCha8Rng::seed_from_u64(z)
}

/// Evaluates the full objective of `iteration` and, when `grads` is given,
/// accumulates its gradient with respect to every trainable parameter.
pub fn objective(
    model: &SceneModel,
    data: &CaptureDataset,
    config: &TrainConfig,
    iteration: u64,
    mut grads: Option<&mut SceneGrads>,
) -> (StepLoss, BatchRecord) {
    let mut rng = iteration_rng(config.seed, iteration);
    let w = &config.weights;
    let mesh_weight = w.mesh_at(iteration);
    let mut record = BatchRecord::default();

    let color = color_and_depth(model, data, config, &mut rng, grads.as_deref_mut(), &mut record);
    let (color_loss, depth_loss) = color;

    let pose = rng.random_range(0..data.poses.len());
    record.regularizer_pose = pose;
    let index = data.posed(pose);

    let eikonal = if config.eikonal_samples > 0 {
        let points = uniform_ball(&mut rng, config.eikonal_samples);
        let probes = SceneModel::gradient_probes(&points);
        let queries: Vec<_> = probes.iter().map(|p| index.signed_distance(p)).collect();
        let want = grads.is_some() && w.eikonal > 0.0;
        let (sdf, tape) = if want {
            let (b, t) = model.evaluate_taped(&probes, &queries, false);
            (b.sdf, Some(t))
        } else {
            (model.evaluate(&probes, &queries, false).sdf, None)
        };
        let gradients = SceneModel::gradients_from_probes(&sdf);
        let n = gradients.len() as f64;
        let loss = gradients.iter().map(|g| (g.norm() - 1.0).powi(2)).sum::<f64>() / n;
        if let (Some(tape), Some(g)) = (tape, grads.as_deref_mut()) {
            let h2 = 2.0 * crate::fields::GRADIENT_STEP;
            let mut d_sdf = vec![0.0; sdf.len()];
            for (i, grad) in gradients.iter().enumerate() {
                let norm = grad.norm();
                if norm == 0.0 {
                    continue;
                }
                let scale = w.eikonal * 2.0 * (norm - 1.0) / norm / n / h2;
                for axis in 0..3 {
                    d_sdf[6 * i + 2 * axis] += scale * grad[axis];
                    d_sdf[6 * i + 2 * axis + 1] -= scale * grad[axis];
                }
            }
            model.backward(tape, &d_sdf, None, g);
        }
        loss
    } else {
        0.0
    };

    let mesh = if config.mesh_samples > 0 {
        let points = mesh_samples(index, &mut rng, config.mesh_samples);
        let queries: Vec<_> = points.iter().map(|p| index.signed_distance(p)).collect();
        let (residual, tape) = model.residual_taped(&queries);
        let n = residual.len() as f64;
        let loss = residual.iter().map(|r| r.abs()).sum::<f64>() / n;
        if let Some(g) = grads.as_deref_mut() {
            if mesh_weight > 0.0 {
                let d: Vec<f64> = residual.iter().map(|r| mesh_weight * sign(*r) / n).collect();
                model.residual_backward(tape, &d, g);
            }
        }
        loss
    } else {
        0.0
    };

    let raw = LossTerms { color: color_loss, depth: depth_loss, eikonal, mesh };
    let weighted = LossTerms {
        color: w.color * color_loss,
        depth: w.depth * depth_loss,
        eikonal: w.eikonal * eikonal,
        mesh: mesh_weight * mesh,
    };
    let total = weighted.color + weighted.depth + weighted.eikonal + weighted.mesh;
    (StepLoss { iteration, raw, weighted, total, mesh_weight }, record)
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Renders the ray batch, compares it with the observed colors and
/// depths, and back-propagates both terms.
fn color_and_depth(
    model: &SceneModel,
    data: &CaptureDataset,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
    grads: Option<&mut SceneGrads>,
    record: &mut BatchRecord,
) -> (f64, f64) {
    let w = &config.weights;
    let n = config.samples;
    let rays_n = config.rays;
    let mut points = Vec::with_capacity(rays_n * n);
    let mut views = Vec::with_capacity(rays_n * n);
    let mut queries = Vec::with_capacity(rays_n * n);
    let mut observed = Vec::with_capacity(rays_n * 3);
    let mut depth_points = Vec::new();
    let mut depth_queries = Vec::new();
    for _ in 0..rays_n {
        let f = rng.random_range(0..data.frames.len());
        let frame = &data.frames[f];
        let hitting = frame.hitting_pixels();
        let pixel = hitting[rng.random_range(0..hitting.len())];
        record.rays.push((frame.id.clone(), pixel));
        let ray = frame.ray(pixel);
        let index = data.posed(frame.pose);
        let ts = sample_ray(&ray, n, true, rng);
        let view = augment_view(&ray.direction, config.view_augmentation, rng);
        for t in ts {
            let p = ray.at(t);
            queries.push(index.signed_distance(&p));
            points.push(p);
            views.push(view);
        }
        let (x, y) = (pixel % frame.camera.width, pixel / frame.camera.width);
        observed.extend_from_slice(frame.color.pixel(x, y));
        let d = frame.depth.pixel(x, y)[0];
        if d > 0.0 {
            let p = ray.at(d);
            depth_queries.push(index.signed_distance(&p));
            depth_points.push(p);
        }
    }

    let taped = grads.is_some();
    let s = model.sharpness();
    let (batch, field_tape) = if taped {
        let (b, t) = model.evaluate_taped(&points, &queries, true);
        (b, Some(t))
    } else {
        (model.evaluate(&points, &queries, true), None)
    };
    let (rgb, decoder_tape) = if taped {
        let (c, t) = model.decode_taped(&batch.features, &views, &batch.sdf);
        (c, Some(t))
    } else {
        (model.decode(&batch.features, &views, &batch.sdf), None)
    };

    let mut weights = Vec::with_capacity(points.len());
    let mut predicted = vec![0.0; rays_n * 3];
    for r in 0..rays_n {
        let wr = render_weights(&batch.sdf[r * n..(r + 1) * n], s);
        for (j, wj) in wr.iter().enumerate() {
            for c in 0..3 {
                predicted[r * 3 + c] += wj * rgb[(r * n + j) * 3 + c];
            }
        }
        weights.extend(wr);
    }
    let count = predicted.len() as f64;
    let color = predicted.iter().zip(&observed).map(|(a, b)| (a - b).abs()).sum::<f64>() / count;

    let depth_sdf;
    let depth_tape;
    if depth_points.is_empty() {
        depth_sdf = Vec::new();
        depth_tape = None;
    } else if taped {
        let (b, t) = model.evaluate_taped(&depth_points, &depth_queries, false);
        depth_sdf = b.sdf;
        depth_tape = Some(t);
    } else {
        depth_sdf = model.evaluate(&depth_points, &depth_queries, false).sdf;
        depth_tape = None;
    }
    let depth = if depth_sdf.is_empty() {
        0.0
    } else {
        depth_sdf.iter().map(|v| v.abs()).sum::<f64>() / depth_sdf.len() as f64
    };

    let Some(grads) = grads else {
        return (color, depth);
    };
    let d_color: Vec<f64> = predicted.iter().zip(&observed).map(|(a, b)| w.color * sign(a - b) / count).collect();
    let mut d_rgb = vec![0.0; rgb.len()];
    let mut d_sdf = vec![0.0; points.len()];
    let mut d_s = 0.0;
    for r in 0..rays_n {
        let dc = &d_color[r * 3..r * 3 + 3];
        let mut d_w = vec![0.0; n];
        for j in 0..n {
            let row = r * n + j;
            for c in 0..3 {
                d_rgb[row * 3 + c] = weights[row] * dc[c];
                d_w[j] += dc[c] * rgb[row * 3 + c];
            }
        }
        let (ds, dsharp) = render_weights_backward(&batch.sdf[r * n..(r + 1) * n], s, &d_w);
        d_sdf[r * n..(r + 1) * n].copy_from_slice(&ds);
        d_s += dsharp;
    }
    let (d_feat, d_sdf_decoder) = model.decode_backward(decoder_tape.expect("taped"), &d_rgb, grads);
    for (a, b) in d_sdf.iter_mut().zip(d_sdf_decoder) {
        *a += b;
    }
    model.backward(field_tape.expect("taped"), &d_sdf, Some(&d_feat), grads);
    // s = exp(10 * log_sharpness)
    grads.log_sharpness += d_s * 10.0 * s;

    if let Some(tape) = depth_tape {
        let m = depth_sdf.len() as f64;
        let d: Vec<f64> = depth_sdf.iter().map(|v| w.depth * sign(*v) / m).collect();
        model.backward(tape, &d, None, grads);
    }
    (color, depth)
}
