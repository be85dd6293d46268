use std::sync::Arc;

use super::*;
use crate::fields::{sharpness_from_std, SceneConfig};
use crate::geometry::{shapes, ClosestPointIndex};
use crate::spectral::{embed_mesh, EmbeddingKind};

fn camera(size: usize) -> Camera {
    Camera::look_at(Vec3::new(0.0, 0.0, -3.0), Vec3::zeros(), Vec3::new(0.0, 1.0, 0.0), size, size, 0.75).unwrap()
}

fn room() -> AnalyticScene {
    AnalyticScene::room(0.9, sharpness_from_std(0.01))
}

fn room_with_ball() -> AnalyticScene {
    room().with_object(Arc::new(ClosestPointIndex::new(shapes::icosphere(3, 0.3))))
}

#[test]
fn center_ray_finds_the_far_wall() {
    let cam = camera(33);
    let ray = pixel_ray(&cam, cam.cx, cam.cy);
    for n in [32, 64, 128] {
        let px = render_pixel(&room(), &ray, &RenderConfig { samples: n, ..Default::default() }, 3);
        let (near, far) = ray.span.unwrap();
        assert!((px.depth - 3.9).abs() < 2.0 / n as f64 * (far - near), "n {n}: {}", px.depth);
        assert_eq!(px.mask, MaskLabel::Background);
        assert!(px.weight > 0.95 && px.weight <= 1.0 + 1e-6);
        assert!((px.color[0] - 0.6).abs() < 0.03);
        // the far wall faces the camera
        assert!((px.normal - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-3);
    }
}

#[test]
fn object_occludes_the_wall() {
    let cam = camera(33);
    let ray = pixel_ray(&cam, cam.cx, cam.cy);
    let config = RenderConfig::default();
    let with = render_pixel(&room_with_ball(), &ray, &config, 1);
    let without = render_pixel(&room(), &ray, &config, 1);
    assert_eq!(with.mask, MaskLabel::Object);
    assert!(with.depth < without.depth);
    assert!((with.depth - 2.7).abs() < 0.02);
}

#[test]
fn empty_space_is_transparent() {
    let far_room = AnalyticScene::room(2.0, 100.0);
    let cam = camera(9);
    let px = render_pixel(&far_room, &pixel_ray(&cam, 4.5, 4.5), &RenderConfig::default(), 0);
    assert!(px.weight < 1e-6);
    assert_eq!(px.mask, MaskLabel::Background);
}

#[test]
fn misses_are_outside_and_black() {
    let cam = Camera::look_at(Vec3::new(0.0, 0.0, -3.0), Vec3::zeros(), Vec3::y(), 16, 16, 1.6).unwrap();
    let frame = render_frame(&room(), &cam, &RenderConfig { samples: 16, ..Default::default() });
    for y in 0..16 {
        for x in 0..16 {
            let hits = pixel_ray(&cam, x as f64 + 0.5, y as f64 + 0.5).hits();
            let label = frame.mask[y * 16 + x];
            assert_eq!(label == MaskLabel::OutsideBound, !hits);
            if !hits {
                assert_eq!(frame.color.pixel(x, y), &[0.0, 0.0, 0.0]);
                assert_eq!(frame.depth.pixel(x, y)[0], 0.0);
            } else {
                assert_eq!(label, MaskLabel::Background);
            }
        }
    }
    assert!(frame.mask.contains(&MaskLabel::OutsideBound));
}

#[test]
fn frames_are_deterministic() {
    let cam = camera(12);
    let config = RenderConfig { samples: 24, stratified: true, seed: 42 };
    let a = render_frame(&room_with_ball(), &cam, &config);
    let b = render_frame(&room_with_ball(), &cam, &config);
    assert_eq!(a, b);
    let c = render_frame(&room_with_ball(), &cam, &RenderConfig { seed: 43, ..config });
    assert_ne!(a.depth, c.depth);
    assert!(a.weight.data.iter().all(|&w| (0.0..=1.0 + 1e-6).contains(&w)));
}

#[test]
fn depth_converges_with_sample_count() {
    let cam = camera(16);
    let scene = AnalyticScene::room(0.7, sharpness_from_std(0.05));
    let coarse = render_frame(&scene, &cam, &RenderConfig { samples: 32, ..Default::default() });
    let fine = render_frame(&scene, &cam, &RenderConfig { samples: 64, ..Default::default() });
    for (a, b) in coarse.depth.data.iter().zip(&fine.depth.data) {
        assert!((a - b).abs() < 1e-2, "{a} vs {b}");
    }
}

#[test]
fn scene_model_renders_finite_frames() {
    let index = Arc::new(ClosestPointIndex::new(shapes::icosphere(2, 0.3)));
    let embedding = embed_mesh(index.mesh(), EmbeddingKind::Laplacian, 8, 0).unwrap();
    let model = crate::fields::SceneModel::new(SceneConfig::tiny(), embedding, index, 0).unwrap();
    let frame = render_frame(&model, &camera(8), &RenderConfig { samples: 16, ..Default::default() });
    assert_eq!(frame.invalid, 0);
    assert!(frame.color.data.iter().all(|c| (0.0..=1.0 + 1e-9).contains(c)));
    for (i, m) in frame.mask.iter().enumerate() {
        if *m != MaskLabel::OutsideBound && frame.weight.data[i] > 1e-3 {
            let n = frame.normal.pixel(i % 8, i / 8);
            assert!(((n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt() - 1.0).abs() < 1e-9);
        }
    }
}
