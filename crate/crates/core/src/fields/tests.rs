use super::*;
use crate::geometry::shapes;
use crate::spectral::{embed_mesh, EmbeddingKind};
use nalgebra::{Isometry3, Vector3};
use proptest::prelude::*;
use rand::Rng;

fn object_index() -> Arc<ClosestPointIndex> {
    Arc::new(ClosestPointIndex::new(shapes::icosphere(2, 0.3)))
}

fn model_with(kind: EmbeddingKind, config: SceneConfig, k: usize) -> SceneModel {
    let index = object_index();
    let embedding = embed_mesh(index.mesh(), kind, k, 5).unwrap();
    SceneModel::new(config, embedding, index, 11).unwrap()
}

fn model() -> SceneModel {
    model_with(EmbeddingKind::Laplacian, SceneConfig::desk(), 8)
}

fn random_point(rng: &mut impl Rng, radius: f64) -> Vec3 {
    loop {
        let p = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if p.norm() <= 1.0 {
            return p * radius;
        }
    }
}

#[test]
fn centroid_code_is_the_node_average() {
    let m = model();
    let mesh = m.mesh_index().mesh();
    let [a, b, c] = mesh.faces()[17];
    let centroid = (mesh.nodes()[a] + mesh.nodes()[b] + mesh.nodes()[c]) / 3.0;
    let p = centroid + m.mesh_index().face_normal(17) * 0.05;
    let coord = mesh_coordinate(m.mesh_index(), &m.embedding, &p);
    assert_eq!(coord.decomposition.closest.face, 17);
    for j in 0..8 {
        let mean = (m.embedding.code(a)[j] + m.embedding.code(b)[j] + m.embedding.code(c)[j]) / 3.0;
        assert!((coord.embedded[j] - mean).abs() < 1e-12);
    }
    assert!((coord.signed_distance - 0.05).abs() < 1e-12);
}

#[test]
fn vertex_code_is_exact() {
    let m = model();
    let node = 5;
    let p = m.mesh_index().mesh().nodes()[node] * 1.4;
    let coord = mesh_coordinate(m.mesh_index(), &m.embedding, &p);
    assert_eq!(coord.embedded.as_slice(), m.embedding.code(node));
}

#[test]
fn surface_points_have_zero_distance() {
    let m = model();
    let mesh = m.mesh_index().mesh();
    for f in 0..mesh.faces().len() {
        let [a, b, c] = mesh.face_nodes(f);
        let p = a * 0.2 + b * 0.3 + c * 0.5;
        assert!(mesh_coordinate(m.mesh_index(), &m.embedding, &p).signed_distance.abs() < 1e-7);
    }
}

#[test]
fn codes_agree_across_shared_edges() {
    let m = model();
    let mesh = m.mesh_index().mesh();
    let mut faces_of_edge = std::collections::HashMap::<[usize; 2], Vec<usize>>::new();
    for (f, face) in mesh.faces().iter().enumerate() {
        for i in 0..3 {
            let (a, b) = (face[i], face[(i + 1) % 3]);
            faces_of_edge.entry([a.min(b), a.max(b)]).or_default().push(f);
        }
    }
    for ([a, b], faces) in faces_of_edge {
        for t in [0.0, 0.3, 0.77, 1.0] {
            let p = mesh.nodes()[a] * (1.0 - t) + mesh.nodes()[b] * t;
            let c0 = face_code(mesh, &m.embedding, faces[0], &p).unwrap();
            let c1 = face_code(mesh, &m.embedding, faces[1], &p).unwrap();
            assert!(c0.iter().zip(&c1).all(|(x, y)| (x - y).abs() < 1e-6));
        }
    }
}

#[test]
fn composition_rule() {
    assert_eq!(compose(0.5, 0.2), (0.2, Owner::Object));
    assert_eq!(compose(-0.1, 0.3), (-0.1, Owner::Background));
    assert_eq!(compose(0.25, 0.25), (0.25, Owner::Object));
}

#[test]
fn zero_residual_gives_mesh_distance() {
    let m = model();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..2000 {
        let p = random_point(&mut rng, 1.0);
        let (sdf, _) = m.sample_object(&p);
        assert_eq!(sdf, m.mesh_index().signed_distance(&p).signed_distance);
    }
}

#[test]
fn equal_mesh_coordinates_give_equal_features() {
    let m = model();
    // two points above the same vertex at the same distance
    let node = m.mesh_index().mesh().nodes()[9];
    let p = node * 1.5;
    let (s0, f0) = m.sample_object(&p);
    let q = m.mesh_index().signed_distance(&p);
    // rotate the offset slightly inside the vertex's normal cone
    let offset = (p - q.closest.position).norm();
    let tangent = node.cross(&Vec3::z()).normalize();
    let dir = (q.direction + tangent * 1e-3).normalize();
    let p2 = q.closest.position + dir * offset;
    let q2 = m.mesh_index().signed_distance(&p2);
    assert_eq!(q2.closest.barycentric, q.closest.barycentric);
    let (s1, f1) = m.sample_object(&p2);
    assert!((s0 - s1).abs() < 1e-12);
    assert_eq!(f0, f1);
}

#[test]
fn far_object_loses_to_nearby_background() {
    let m = model();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0;
    while checked < 200 {
        let p = random_point(&mut rng, 1.0);
        let q = m.mesh_index().signed_distance(&p);
        let batch = m.evaluate(&[p], &[q], false);
        if q.signed_distance.abs() > 0.5 && batch.background_sdf[0].abs() < 0.3 {
            assert_eq!(batch.owner[0], Owner::Background);
            checked += 1;
        }
    }
}

#[test]
fn composition_is_a_minimum() {
    let m = model();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let points: Vec<Vec3> = (0..10_000).map(|_| random_point(&mut rng, 1.0)).collect();
    let batch = m.evaluate(&points, &m.query(&points), false);
    for i in 0..points.len() {
        assert!(batch.sdf[i] <= batch.background_sdf[i] && batch.sdf[i] <= batch.object_sdf[i]);
        let expect = if batch.object_sdf[i] <= batch.background_sdf[i] { Owner::Object } else { Owner::Background };
        assert_eq!(batch.owner[i], expect);
    }
}

#[test]
fn sample_scene_checks_bound_and_owner() {
    let m = model();
    assert!(matches!(m.sample_scene(&Vec3::new(0.9, 0.5, 0.0)), Err(FieldError::OutsideBound(..))));
    let s = m.sample_scene(&Vec3::new(0.0, 0.0, 0.1)).unwrap();
    assert_eq!(s.owner, Owner::Object);
    assert_eq!(s.feature.len(), 8);
    let (sdf, feature) = m.sample_object(&Vec3::new(0.0, 0.0, 0.1));
    assert_eq!(s.sdf, sdf);
    assert_eq!(s.feature, feature);
}

#[test]
fn gradient_matches_mesh_normal_near_faces() {
    let m = model();
    let mesh = m.mesh_index().mesh();
    for f in (0..mesh.faces().len()).step_by(7) {
        let [a, b, c] = mesh.face_nodes(f);
        let n = m.mesh_index().face_normal(f);
        let p = (a + b + c) / 3.0 + n * 0.08;
        let batch = m.evaluate(&[p], &m.query(&[p]), false);
        assert_eq!(batch.owner[0], Owner::Object);
        assert!((m.sample_gradient(&p) - n).norm() < 1e-3);
    }
}

#[test]
fn initial_background_gradient_is_near_unit() {
    let m = model();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let points: Vec<Vec3> = (0..100).map(|_| random_point(&mut rng, 0.95)).collect();
    let probes = SceneModel::gradient_probes(&points);
    let values = m.evaluate(&probes, &m.query(&probes), false).background_sdf;
    for g in SceneModel::gradients_from_probes(&values) {
        assert!(g.norm() > 0.5 && g.norm() < 2.0, "{}", g.norm());
    }
}

#[test]
fn composed_gradient_follows_the_winner() {
    let m = model();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let p = random_point(&mut rng, 0.95);
        let batch = m.evaluate(&[p], &m.query(&[p]), false);
        if (batch.background_sdf[0] - batch.object_sdf[0]).abs() <= 4.0 * GRADIENT_STEP {
            continue;
        }
        let probes = SceneModel::gradient_probes(&[p]);
        let b = m.evaluate(&probes, &m.query(&probes), false);
        let branch = match batch.owner[0] {
            Owner::Background => b.background_sdf,
            Owner::Object => b.object_sdf,
        };
        let expect = SceneModel::gradients_from_probes(&branch)[0];
        assert!((m.sample_gradient(&p) - expect).norm() < 1e-12);
    }
}

#[test]
fn decoder_output_is_strictly_inside_unit_cube() {
    let m = model();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let rows = 100_000;
    for _ in 0..10 {
        let features: Vec<f64> = (0..rows * 8).map(|_| rng.random_range(-3.0..3.0)).collect();
        let views: Vec<Vec3> = (0..rows).map(|_| random_point(&mut rng, 1.0).normalize()).collect();
        let sdf: Vec<f64> = (0..rows).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rgb = m.decode(&features, &views, &sdf);
        assert!(rgb.iter().all(|&c| c > 0.0 && c < 1.0));
    }
    let f = vec![0.3; 8];
    let v = Vec3::new(0.0, 0.6, 0.8);
    assert_eq!(m.decode_color(&f, &v, 0.1).unwrap(), m.decode_color(&f, &v, 0.1).unwrap());
    assert!(m.decode_color(&f, &(v * 1.0005), 0.1).is_ok());
    assert!(matches!(m.decode_color(&f, &(v * 1.1), 0.1), Err(FieldError::NonUnitView(_))));
    assert!(matches!(m.decode_color(&f[..3], &v, 0.1), Err(FieldError::FeatureDimension { .. })));
}

#[test]
fn rigid_motion_preserves_mesh_coordinates() {
    let m = model();
    let motion = Isometry3::new(Vector3::new(0.2, -0.1, 0.05), Vector3::new(0.3, 1.1, -0.4));
    let moved = ClosestPointIndex::new(m.mesh_index().mesh().transformed(&motion));
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..500 {
        let p = random_point(&mut rng, 0.8);
        let a = mesh_coordinate(m.mesh_index(), &m.embedding, &p);
        let b = mesh_coordinate(&moved, &m.embedding, &motion.transform_point(&p.into()).coords);
        assert!((a.signed_distance - b.signed_distance).abs() < 1e-6);
        assert!(a.embedded.iter().zip(&b.embedded).all(|(x, y)| (x - y).abs() < 1e-6));
    }
}

#[test]
fn reposing_checks_topology() {
    let m = model();
    assert!(m.reposed(Arc::new(ClosestPointIndex::new(shapes::icosphere(1, 0.3)))).is_err());
    let moved = m.mesh_index().mesh().transformed(&Isometry3::translation(0.1, 0.0, 0.0));
    assert!(m.reposed(Arc::new(ClosestPointIndex::new(moved))).is_ok());
}

/// Random linear functional of the composed sdf and features, through the
/// taped evaluation, against central differences.
#[test]
fn field_backward_matches_finite_differences() {
    for kind in [EmbeddingKind::Learnable, EmbeddingKind::Laplacian] {
        let mut m = model_with(kind, SceneConfig::tiny(), 4);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        // a nonzero residual so its parameters matter
        let n = m.residual.param_count();
        for p in &mut m.residual.params_mut()[n - 17..] {
            *p = rng.random_range(-0.2..0.2);
        }
        let mut points: Vec<Vec3> = (0..12).map(|_| random_point(&mut rng, 0.9)).collect();
        points.extend((0..12).map(|_| random_point(&mut rng, 0.35)));
        let queries = m.query(&points);
        let a: Vec<f64> = points.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..points.len() * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let objective = |m: &SceneModel| {
            let batch = m.evaluate(&points, &queries, true);
            batch.sdf.iter().zip(&a).map(|(x, y)| x * y).sum::<f64>()
                + batch.features.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>()
        };
        let (batch, tape) = m.evaluate_taped(&points, &queries, true);
        assert!(batch.owner.contains(&Owner::Object) && batch.owner.contains(&Owner::Background));
        let mut grads = SceneGrads::zeros(&m);
        m.backward(tape, &a, Some(&b), &mut grads);
        let flat = grads.flat();
        assert_eq!(flat.len(), m.param_count());
        let h = 1e-5;
        let mut checked = 0;
        let mut tries = 0;
        while checked < 30 && tries < 5000 {
            tries += 1;
            let i = rng.random_range(0..m.param_count());
            if flat[i] == 0.0 && rng.random_bool(0.9) {
                continue;
            }
            let orig = m.param(i);
            m.set_param(i, orig + h);
            let up = objective(&m);
            m.set_param(i, orig - h);
            let down = objective(&m);
            m.set_param(i, orig);
            let fd = (up - down) / (2.0 * h);
            let err = (fd - flat[i]).abs() / fd.abs().max(flat[i].abs()).max(1e-6);
            assert!(err < 1e-4, "{kind}: parameter {i}: fd {fd} vs {}", flat[i]);
            checked += 1;
        }
        assert_eq!(checked, 30);
    }
}

#[test]
fn decoder_backward_matches_finite_differences() {
    let mut m = model_with(EmbeddingKind::Laplacian, SceneConfig::tiny(), 4);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let rows = 5;
    let features: Vec<f64> = (0..rows * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let views: Vec<Vec3> = (0..rows).map(|_| random_point(&mut rng, 1.0).normalize()).collect();
    let sdf: Vec<f64> = (0..rows).map(|_| rng.random_range(-0.5..0.5)).collect();
    let g: Vec<f64> = (0..rows * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let f = |m: &SceneModel, features: &[f64], sdf: &[f64]| {
        m.decode(features, &views, sdf).iter().zip(&g).map(|(x, y)| x * y).sum::<f64>()
    };
    let (_, tape) = m.decode_taped(&features, &views, &sdf);
    let mut grads = SceneGrads::zeros(&m);
    let (d_feat, d_sdf) = m.decode_backward(tape, &g, &mut grads);
    let h = 1e-6;
    for i in 0..features.len() {
        let (mut up, mut down) = (features.clone(), features.clone());
        up[i] += h;
        down[i] -= h;
        let fd = (f(&m, &up, &sdf) - f(&m, &down, &sdf)) / (2.0 * h);
        assert!((fd - d_feat[i]).abs() < 1e-7);
    }
    for i in 0..rows {
        let (mut up, mut down) = (sdf.clone(), sdf.clone());
        up[i] += h;
        down[i] -= h;
        let fd = (f(&m, &features, &up) - f(&m, &features, &down)) / (2.0 * h);
        assert!((fd - d_sdf[i]).abs() < 1e-7);
    }
    let offset = m.background.param_count() + m.residual.param_count() + m.object_feature.param_count();
    for j in (0..m.decoder.param_count()).step_by(37) {
        let orig = m.decoder.params()[j];
        m.decoder.params_mut()[j] = orig + h;
        let up = f(&m, &features, &sdf);
        m.decoder.params_mut()[j] = orig - h;
        let down = f(&m, &features, &sdf);
        m.decoder.params_mut()[j] = orig;
        let fd = (up - down) / (2.0 * h);
        assert!((fd - grads.flat()[offset + j]).abs() < 1e-6);
    }
}

#[test]
fn network_shapes_match_their_specs() {
    let m = model_with(EmbeddingKind::Laplacian, SceneConfig::desk(), 32);
    assert_eq!(m.background.spec().input, 39);
    assert_eq!(m.background.spec().output, 33);
    assert_eq!(m.residual.spec().input, 13 + 32);
    assert_eq!(m.object_feature.spec().output, 32);
    assert_eq!(m.decoder.spec().input, 32 + 27 + 1);
    assert!((m.sharpness() - sharpness_from_std(0.3)).abs() < 1e-9);
    let paper = SceneConfig::paper();
    assert_eq!(paper.residual, NetShape::new(768, 8, Some(4)));
    assert_eq!(paper.decoder_spec(256).input, 256 + 27 + 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn codes_are_bounded_by_column_scale(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
        let m = model();
        let coord = mesh_coordinate(m.mesh_index(), &m.embedding, &Vec3::new(x, y, z));
        prop_assert!(coord.embedded.iter().all(|v| v.abs() <= 1.0 + 1e-12));
    }
}
