//! The composable scene model.
//!
//! A background network maps encoded positions to a signed distance and a
//! feature vector. The object is described relative to a posed triangle
//! mesh: its signed distance is the mesh distance plus a learned residual,
//! and its feature comes from a network over (encoded mesh distance,
//! blended surface code). The two are composed by `min`, the feature
//! following the winning branch, and a decoder turns feature, view
//! direction and distance into color.

mod checkpoint;

pub use checkpoint::{isometry_from_row_major, isometry_to_row_major, Checkpoint, CheckpointError};

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{barycentric, ClosestPointIndex, MeshDecomposition, MeshError, TriangleMesh, Vec3};
use crate::nn::{Activation, Mlp, MlpSpec, NnError, SineCosineEncoding, Tape};
use crate::spectral::PositionalEmbedding;

/// Radius of the sphere that bounds the modeled scene.
pub const SCENE_RADIUS: f64 = 1.0;

/// Step of the central differences used for spatial gradients.
pub const GRADIENT_STEP: f64 = 1e-4;

/// Softplus sharpness used by the SDF and feature networks.
const SOFTPLUS_BETA: f64 = 100.0;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("embedding has {embedding} nodes but the mesh has {mesh}")]
    EmbeddingMismatch { embedding: usize, mesh: usize },
    #[error("mesh topology differs from the model's mesh")]
    TopologyMismatch,
    #[error("point ({0}, {1}, {2}) lies outside the scene bound")]
    OutsideBound(f64, f64, f64),
    #[error("view direction has norm {0}, expected 1")]
    NonUnitView(f64),
    #[error("feature has dimension {got}, expected {expected}")]
    FeatureDimension { expected: usize, got: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Which branch of the composition produced a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Owner {
    Background,
    Object,
}

/// Width, depth and skip layer of one network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetShape {
    pub hidden: usize,
    pub depth: usize,
    pub skip: Option<usize>,
}

impl NetShape {
    pub const fn new(hidden: usize, depth: usize, skip: Option<usize>) -> Self {
        Self { hidden, depth, skip }
    }
}

/// Architecture of a [`SceneModel`]. The feature dimension is the
/// embedding dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneConfig {
    pub background: NetShape,
    pub residual: NetShape,
    pub object_feature: NetShape,
    pub decoder: NetShape,
    pub spatial_octaves: usize,
    pub distance_octaves: usize,
    pub view_octaves: usize,
    /// Radius of the inward sphere the background starts from.
    pub background_radius: f64,
    /// Standard deviation of the logistic density at initialization.
    pub initial_sharpness_std: f64,
}

impl SceneConfig {
    /// Sizes used for the published experiments.
    pub fn paper() -> Self {
        Self {
            background: NetShape::new(256, 8, Some(4)),
            residual: NetShape::new(768, 8, Some(4)),
            object_feature: NetShape::new(256, 8, Some(4)),
            decoder: NetShape::new(256, 4, None),
            ..Self::desk()
        }
    }

    /// Small networks that train in minutes on one core.
    pub fn desk() -> Self {
        Self {
            background: NetShape::new(64, 4, Some(2)),
            residual: NetShape::new(32, 3, None),
            object_feature: NetShape::new(64, 3, None),
            decoder: NetShape::new(64, 2, None),
            spatial_octaves: 6,
            distance_octaves: 6,
            view_octaves: 4,
            background_radius: 0.8,
            initial_sharpness_std: 0.3,
        }
    }

    /// Tiny networks for gradient checks.
    pub fn tiny() -> Self {
        Self {
            background: NetShape::new(16, 3, Some(2)),
            residual: NetShape::new(16, 2, None),
            object_feature: NetShape::new(16, 2, None),
            decoder: NetShape::new(16, 2, None),
            ..Self::desk()
        }
    }

    fn spatial(&self) -> SineCosineEncoding {
        SineCosineEncoding::new(self.spatial_octaves, true)
    }

    fn distance(&self) -> SineCosineEncoding {
        SineCosineEncoding::new(self.distance_octaves, true)
    }

    fn view(&self) -> SineCosineEncoding {
        SineCosineEncoding::new(self.view_octaves, true)
    }

    pub fn background_spec(&self, k: usize) -> MlpSpec {
        sdf_spec(self.spatial().output_dim(3), self.background, 1 + k)
    }

    pub fn residual_spec(&self, k: usize) -> MlpSpec {
        sdf_spec(self.object_input_dim(k), self.residual, 1)
    }

    pub fn object_feature_spec(&self, k: usize) -> MlpSpec {
        sdf_spec(self.object_input_dim(k), self.object_feature, k)
    }

    pub fn decoder_spec(&self, k: usize) -> MlpSpec {
        MlpSpec {
            input: k + self.view().output_dim(3) + 1,
            hidden: self.decoder.hidden,
            depth: self.decoder.depth,
            output: 3,
            skip: self.decoder.skip,
            hidden_activation: Activation::Relu,
            output_activation: Activation::Sigmoid,
        }
    }

    fn object_input_dim(&self, k: usize) -> usize {
        self.distance().output_dim(1) + k
    }
}

fn sdf_spec(input: usize, shape: NetShape, output: usize) -> MlpSpec {
    MlpSpec {
        input,
        hidden: shape.hidden,
        depth: shape.depth,
        output,
        skip: shape.skip,
        hidden_activation: Activation::Softplus(SOFTPLUS_BETA),
        output_activation: Activation::Identity,
    }
}

/// Converts the standard deviation of a logistic density to its inverse scale.
pub fn sharpness_from_std(std: f64) -> f64 {
    std::f64::consts::PI / (std * 3f64.sqrt())
}

/// Mesh-attached coordinate of a point.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshCoordinate {
    /// Barycentric blend of the closest face's node codes.
    pub embedded: Vec<f64>,
    pub signed_distance: f64,
    pub decomposition: MeshDecomposition,
}

/// Blends the node codes of `face` with barycentric weights into `out`.
pub fn blend_code(embedding: &PositionalEmbedding, face: [usize; 3], bary: [f64; 3], out: &mut [f64]) {
    out.fill(0.0);
    for (node, b) in face.into_iter().zip(bary) {
        for (o, e) in out.iter_mut().zip(embedding.code(node)) {
            *o += b * e;
        }
    }
}

pub fn mesh_coordinate(index: &ClosestPointIndex, embedding: &PositionalEmbedding, p: &Vec3) -> MeshCoordinate {
    let decomposition = index.signed_distance(p);
    let mut embedded = vec![0.0; embedding.k];
    let face = index.mesh().faces()[decomposition.closest.face];
    blend_code(embedding, face, decomposition.closest.barycentric, &mut embedded);
    MeshCoordinate { embedded, signed_distance: decomposition.signed_distance, decomposition }
}

/// Surface code of `p` computed from one given face, whether or not it is
/// the closest. Used to compare the blends of two faces sharing an edge.
pub fn face_code(
    mesh: &TriangleMesh,
    embedding: &PositionalEmbedding,
    face: usize,
    p: &Vec3,
) -> Result<Vec<f64>, MeshError> {
    let bary = barycentric(mesh.face_nodes(face), *p)?;
    let mut code = vec![0.0; embedding.k];
    blend_code(embedding, mesh.faces()[face], bary, &mut code);
    Ok(code)
}

/// `min` of the two branch distances and the branch attaining it; ties go
/// to the object.
pub fn compose(background: f64, object: f64) -> (f64, Owner) {
    if object <= background {
        (object, Owner::Object)
    } else {
        (background, Owner::Background)
    }
}

/// Composed field value at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub sdf: f64,
    pub feature: Vec<f64>,
    pub owner: Owner,
    pub gradient: Vec3,
}

/// Batched field values.
#[derive(Debug, Clone, Default)]
pub struct FieldBatch {
    pub sdf: Vec<f64>,
    pub owner: Vec<Owner>,
    pub background_sdf: Vec<f64>,
    pub object_sdf: Vec<f64>,
    /// `rows x k` composed features; empty when not requested.
    pub features: Vec<f64>,
}

/// Recorded evaluation for [`SceneModel::backward`].
#[derive(Debug)]
pub struct FieldTape {
    background: Tape,
    residual: Tape,
    object_feature: Option<Tape>,
    owner: Vec<Owner>,
    surface: Vec<([usize; 3], [f64; 3])>,
}

/// Recorded residual-only evaluation.
#[derive(Debug)]
pub struct ResidualTape {
    tape: Tape,
    surface: Vec<([usize; 3], [f64; 3])>,
}

/// Recorded decoder evaluation.
#[derive(Debug)]
pub struct DecoderTape {
    tape: Tape,
}

/// Gradients for every trainable quantity of a [`SceneModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct SceneGrads {
    pub background: Vec<f64>,
    pub residual: Vec<f64>,
    pub object_feature: Vec<f64>,
    pub decoder: Vec<f64>,
    pub log_sharpness: f64,
    /// Empty unless the embedding is trainable.
    pub embedding: Vec<f64>,
}

impl SceneGrads {
    pub fn zeros(model: &SceneModel) -> Self {
        Self {
            background: vec![0.0; model.background.param_count()],
            residual: vec![0.0; model.residual.param_count()],
            object_feature: vec![0.0; model.object_feature.param_count()],
            decoder: vec![0.0; model.decoder.param_count()],
            log_sharpness: 0.0,
            embedding: if model.embedding.is_trainable() { vec![0.0; model.embedding.data().len()] } else { Vec::new() },
        }
    }

    /// Groups in the order of [`SceneModel::param_groups_mut`].
    pub fn groups(&self) -> Vec<&[f64]> {
        let mut g: Vec<&[f64]> = vec![
            &self.background,
            &self.residual,
            &self.object_feature,
            &self.decoder,
            std::slice::from_ref(&self.log_sharpness),
        ];
        if !self.embedding.is_empty() {
            g.push(&self.embedding);
        }
        g
    }

    pub fn flat(&self) -> Vec<f64> {
        self.groups().concat()
    }
}

/// The full scene model, posed against one mesh.
#[derive(Debug, Clone)]
pub struct SceneModel {
    config: SceneConfig,
    pub background: Mlp,
    pub residual: Mlp,
    pub object_feature: Mlp,
    pub decoder: Mlp,
    pub embedding: PositionalEmbedding,
    /// Sharpness is `exp(10 * log_sharpness)`.
    log_sharpness: f64,
    index: Arc<ClosestPointIndex>,
}

impl SceneModel {
    /// Fresh model: the background starts as an inward sphere, the residual
    /// as the zero map.
    pub fn new(
        config: SceneConfig,
        embedding: PositionalEmbedding,
        index: Arc<ClosestPointIndex>,
        seed: u64,
    ) -> Result<Self, FieldError> {
        let k = embedding.k;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut background = Mlp::new(config.background_spec(k))?;
        background.init_geometric(&mut rng, config.background_radius, true, 3);
        let mut residual = Mlp::new(config.residual_spec(k))?;
        residual.init_xavier(&mut rng);
        residual.zero_output_layer();
        let mut object_feature = Mlp::new(config.object_feature_spec(k))?;
        object_feature.init_xavier(&mut rng);
        let mut decoder = Mlp::new(config.decoder_spec(k))?;
        decoder.init_xavier(&mut rng);
        let log_sharpness = sharpness_from_std(config.initial_sharpness_std).ln() / 10.0;
        Self::from_parts(config, [background, residual, object_feature, decoder], embedding, log_sharpness, index)
    }

    pub fn from_parts(
        config: SceneConfig,
        [background, residual, object_feature, decoder]: [Mlp; 4],
        embedding: PositionalEmbedding,
        log_sharpness: f64,
        index: Arc<ClosestPointIndex>,
    ) -> Result<Self, FieldError> {
        let n = index.mesh().nodes().len();
        if embedding.n != n {
            return Err(FieldError::EmbeddingMismatch { embedding: embedding.n, mesh: n });
        }
        let k = embedding.k;
        let expected = [
            config.background_spec(k),
            config.residual_spec(k),
            config.object_feature_spec(k),
            config.decoder_spec(k),
        ];
        for (net, spec) in [&background, &residual, &object_feature, &decoder].into_iter().zip(expected) {
            if *net.spec() != spec {
                return Err(NnError::InvalidSpec(format!("network {:?} does not match {:?}", net.spec(), spec)).into());
            }
        }
        Ok(Self { config, background, residual, object_feature, decoder, embedding, log_sharpness, index })
    }

    pub fn config(&self) -> &SceneConfig {
        &self.config
    }

    pub fn feature_dim(&self) -> usize {
        self.embedding.k
    }

    pub fn mesh_index(&self) -> &Arc<ClosestPointIndex> {
        &self.index
    }

    /// Inverse standard deviation `s` of the logistic density.
    pub fn sharpness(&self) -> f64 {
        (10.0 * self.log_sharpness).exp()
    }

    pub fn log_sharpness(&self) -> f64 {
        self.log_sharpness
    }

    pub fn set_sharpness(&mut self, s: f64) {
        self.log_sharpness = s.ln() / 10.0;
    }

    /// Same networks and embedding against a re-posed mesh of identical topology.
    pub fn reposed(&self, index: Arc<ClosestPointIndex>) -> Result<Self, FieldError> {
        if !index.mesh().same_topology(self.index.mesh()) {
            return Err(FieldError::TopologyMismatch);
        }
        Ok(Self { index, ..self.clone() })
    }

    /// Trainable parameters as groups: background, residual, object
    /// feature, decoder, log-sharpness, then the embedding when learnable.
    pub fn param_groups_mut(&mut self) -> Vec<&mut [f64]> {
        let trainable = self.embedding.is_trainable();
        let mut g: Vec<&mut [f64]> = vec![
            self.background.params_mut(),
            self.residual.params_mut(),
            self.object_feature.params_mut(),
            self.decoder.params_mut(),
            std::slice::from_mut(&mut self.log_sharpness),
        ];
        if trainable {
            g.push(self.embedding.data_mut());
        }
        g
    }

    pub fn param_count(&self) -> usize {
        self.background.param_count()
            + self.residual.param_count()
            + self.object_feature.param_count()
            + self.decoder.param_count()
            + 1
            + if self.embedding.is_trainable() { self.embedding.data().len() } else { 0 }
    }

    /// Reads the `i`-th trainable parameter in flattened group order.
    pub fn param(&mut self, mut i: usize) -> f64 {
        for g in self.param_groups_mut() {
            if i < g.len() {
                return g[i];
            }
            i -= g.len();
        }
        panic!("parameter index out of range")
    }

    pub fn set_param(&mut self, mut i: usize, value: f64) {
        for g in self.param_groups_mut() {
            if i < g.len() {
                g[i] = value;
                return;
            }
            i -= g.len();
        }
        panic!("parameter index out of range")
    }

    /// Mesh decompositions of `points` against the model's posed mesh.
    pub fn query(&self, points: &[Vec3]) -> Vec<MeshDecomposition> {
        points.iter().map(|p| self.index.signed_distance(p)).collect()
    }

    /// Composed field at `points`; `queries` are the points' decompositions
    /// against whichever posed mesh applies to them.
    pub fn evaluate(&self, points: &[Vec3], queries: &[MeshDecomposition], features: bool) -> FieldBatch {
        self.run(points, queries, features, false).0
    }

    pub fn evaluate_taped(
        &self,
        points: &[Vec3],
        queries: &[MeshDecomposition],
        features: bool,
    ) -> (FieldBatch, FieldTape) {
        let (batch, tape) = self.run(points, queries, features, true);
        (batch, tape.expect("taped run"))
    }

    fn run(
        &self,
        points: &[Vec3],
        queries: &[MeshDecomposition],
        features: bool,
        taped: bool,
    ) -> (FieldBatch, Option<FieldTape>) {
        assert_eq!(points.len(), queries.len(), "one decomposition per point");
        let rows = points.len();
        let k = self.feature_dim();
        let spatial = self.config.spatial();
        let distance = self.config.distance();

        let mut bg_in = Vec::with_capacity(rows * spatial.output_dim(3));
        for p in points {
            spatial.encode_into(&[p.x, p.y, p.z], &mut bg_in);
        }
        let obj_dim = self.config.object_input_dim(k);
        let mut obj_in = Vec::with_capacity(rows * obj_dim);
        let mut surface = Vec::with_capacity(rows);
        let faces = self.index.mesh().faces();
        let mut code = vec![0.0; k];
        for q in queries {
            distance.encode_into(&[q.signed_distance], &mut obj_in);
            let face = faces[q.closest.face];
            blend_code(&self.embedding, face, q.closest.barycentric, &mut code);
            obj_in.extend_from_slice(&code);
            surface.push((face, q.closest.barycentric));
        }

        let (bg_out, bg_tape) = forward(&self.background, bg_in, rows, taped);
        let (res_out, res_tape) = if features {
            forward(&self.residual, obj_in.clone(), rows, taped)
        } else {
            forward(&self.residual, std::mem::take(&mut obj_in), rows, taped)
        };
        let (feat_out, feat_tape) =
            if features { forward(&self.object_feature, obj_in, rows, taped) } else { (Vec::new(), None) };

        let mut batch = FieldBatch {
            sdf: Vec::with_capacity(rows),
            owner: Vec::with_capacity(rows),
            background_sdf: Vec::with_capacity(rows),
            object_sdf: Vec::with_capacity(rows),
            features: if features { Vec::with_capacity(rows * k) } else { Vec::new() },
        };
        for r in 0..rows {
            let sw = bg_out[r * (1 + k)];
            let so = queries[r].signed_distance + res_out[r];
            let (sdf, owner) = compose(sw, so);
            batch.background_sdf.push(sw);
            batch.object_sdf.push(so);
            batch.sdf.push(sdf);
            batch.owner.push(owner);
            if features {
                let row = match owner {
                    Owner::Background => &bg_out[r * (1 + k) + 1..(r + 1) * (1 + k)],
                    Owner::Object => &feat_out[r * k..(r + 1) * k],
                };
                batch.features.extend_from_slice(row);
            }
        }
        let tape = bg_tape.map(|background| FieldTape {
            background,
            residual: res_tape.expect("taped"),
            object_feature: feat_tape,
            owner: batch.owner.clone(),
            surface,
        });
        (batch, tape)
    }

    /// Back-propagates gradients w.r.t. the composed sdf (and features,
    /// when the taped evaluation produced them) into `grads`.
    pub fn backward(&self, tape: FieldTape, d_sdf: &[f64], d_features: Option<&[f64]>, grads: &mut SceneGrads) {
        let rows = tape.owner.len();
        let k = self.feature_dim();
        assert_eq!(d_sdf.len(), rows);
        if let Some(df) = d_features {
            assert_eq!(df.len(), rows * k);
            assert!(tape.object_feature.is_some(), "features were not evaluated");
        }
        let mut d_bg = vec![0.0; rows * (1 + k)];
        let mut d_res = vec![0.0; rows];
        let mut d_feat = vec![0.0; rows * k];
        let (mut any_bg, mut any_obj) = (false, false);
        for r in 0..rows {
            match tape.owner[r] {
                Owner::Background => {
                    d_bg[r * (1 + k)] = d_sdf[r];
                    if let Some(df) = d_features {
                        d_bg[r * (1 + k) + 1..(r + 1) * (1 + k)].copy_from_slice(&df[r * k..(r + 1) * k]);
                    }
                    any_bg = true;
                }
                Owner::Object => {
                    d_res[r] = d_sdf[r];
                    if let Some(df) = d_features {
                        d_feat[r * k..(r + 1) * k].copy_from_slice(&df[r * k..(r + 1) * k]);
                    }
                    any_obj = true;
                }
            }
        }
        if any_bg {
            self.background.backward(tape.background, &d_bg, &mut grads.background);
        }
        if !any_obj {
            return;
        }
        let mut d_in = self.residual.backward(tape.residual, &d_res, &mut grads.residual);
        if let (Some(t), Some(_)) = (tape.object_feature, d_features) {
            let d_feat_in = self.object_feature.backward(t, &d_feat, &mut grads.object_feature);
            d_in.iter_mut().zip(d_feat_in).for_each(|(a, b)| *a += b);
        }
        let object_rows = tape.owner.iter().map(|o| *o == Owner::Object);
        self.scatter_code_gradient(&tape.surface, object_rows, &d_in, grads);
    }

    /// Spreads gradients w.r.t. the blended code inputs onto the nodes of
    /// a learnable embedding.
    fn scatter_code_gradient(
        &self,
        surface: &[([usize; 3], [f64; 3])],
        active: impl Iterator<Item = bool>,
        d_in: &[f64],
        grads: &mut SceneGrads,
    ) {
        if !self.embedding.is_trainable() {
            return;
        }
        let k = self.feature_dim();
        let offset = self.config.distance().output_dim(1);
        let width = offset + k;
        for (r, ((face, bary), on)) in surface.iter().zip(active).enumerate() {
            if !on {
                continue;
            }
            for (node, b) in face.iter().zip(bary) {
                let g = &mut grads.embedding[node * k..(node + 1) * k];
                for j in 0..k {
                    g[j] += b * d_in[r * width + offset + j];
                }
            }
        }
    }

    /// Object residual `S_o - sdf_M` alone at precomputed decompositions,
    /// recorded for [`Self::residual_backward`].
    pub fn residual_taped(&self, queries: &[MeshDecomposition]) -> (Vec<f64>, ResidualTape) {
        let k = self.feature_dim();
        let distance = self.config.distance();
        let faces = self.index.mesh().faces();
        let mut input = Vec::with_capacity(queries.len() * self.config.object_input_dim(k));
        let mut surface = Vec::with_capacity(queries.len());
        let mut code = vec![0.0; k];
        for q in queries {
            distance.encode_into(&[q.signed_distance], &mut input);
            let face = faces[q.closest.face];
            blend_code(&self.embedding, face, q.closest.barycentric, &mut code);
            input.extend_from_slice(&code);
            surface.push((face, q.closest.barycentric));
        }
        let (out, tape) = self.residual.forward_taped(input, queries.len());
        (out, ResidualTape { tape, surface })
    }

    pub fn residual_backward(&self, tape: ResidualTape, d_residual: &[f64], grads: &mut SceneGrads) {
        let d_in = self.residual.backward(tape.tape, d_residual, &mut grads.residual);
        self.scatter_code_gradient(&tape.surface, std::iter::repeat(true), &d_in, grads);
    }

    fn decoder_input(&self, features: &[f64], views: &[Vec3], sdf: &[f64]) -> Vec<f64> {
        let k = self.feature_dim();
        let rows = sdf.len();
        assert_eq!(features.len(), rows * k);
        assert_eq!(views.len(), rows);
        let view = self.config.view();
        let mut input = Vec::with_capacity(rows * self.decoder.spec().input);
        for r in 0..rows {
            input.extend_from_slice(&features[r * k..(r + 1) * k]);
            let v = views[r];
            view.encode_into(&[v.x, v.y, v.z], &mut input);
            input.push(sdf[r]);
        }
        input
    }

    /// Batched decoder: `rows x 3` colors.
    pub fn decode(&self, features: &[f64], views: &[Vec3], sdf: &[f64]) -> Vec<f64> {
        let input = self.decoder_input(features, views, sdf);
        self.decoder.forward_batch(&input, sdf.len())
    }

    pub fn decode_taped(&self, features: &[f64], views: &[Vec3], sdf: &[f64]) -> (Vec<f64>, DecoderTape) {
        let input = self.decoder_input(features, views, sdf);
        let (out, tape) = self.decoder.forward_taped(input, sdf.len());
        (out, DecoderTape { tape })
    }

    /// Returns gradients w.r.t. the features (`rows x k`) and the sdf input.
    pub fn decode_backward(&self, tape: DecoderTape, d_rgb: &[f64], grads: &mut SceneGrads) -> (Vec<f64>, Vec<f64>) {
        let rows = tape.tape.rows();
        let k = self.feature_dim();
        let width = self.decoder.spec().input;
        let d_in = self.decoder.backward(tape.tape, d_rgb, &mut grads.decoder);
        let mut d_feat = Vec::with_capacity(rows * k);
        let mut d_sdf = Vec::with_capacity(rows);
        for row in d_in.chunks(width) {
            d_feat.extend_from_slice(&row[..k]);
            d_sdf.push(row[width - 1]);
        }
        (d_feat, d_sdf)
    }

    /// Composed sdf at `points` against the model's mesh.
    pub fn sdf_batch(&self, points: &[Vec3]) -> Vec<f64> {
        let queries = self.query(points);
        self.evaluate(points, &queries, false).sdf
    }

    /// The six central-difference probes of each point, `6 * n` in total:
    /// `+x, -x, +y, -y, +z, -z`.
    pub fn gradient_probes(points: &[Vec3]) -> Vec<Vec3> {
        let h = GRADIENT_STEP;
        let mut out = Vec::with_capacity(points.len() * 6);
        for p in points {
            for axis in 0..3 {
                let mut e = Vec3::zeros();
                e[axis] = h;
                out.push(p + e);
                out.push(p - e);
            }
        }
        out
    }

    /// Assembles gradients from sdf values at [`Self::gradient_probes`].
    pub fn gradients_from_probes(values: &[f64]) -> Vec<Vec3> {
        let h2 = 2.0 * GRADIENT_STEP;
        values.chunks(6).map(|v| Vec3::new((v[0] - v[1]) / h2, (v[2] - v[3]) / h2, (v[4] - v[5]) / h2)).collect()
    }

    pub fn gradient_batch(&self, points: &[Vec3]) -> Vec<Vec3> {
        Self::gradients_from_probes(&self.sdf_batch(&Self::gradient_probes(points)))
    }

    /// Object branch alone: `sdf_M(p) + residual` and the object feature.
    pub fn sample_object(&self, p: &Vec3) -> (f64, Vec<f64>) {
        let q = self.index.signed_distance(p);
        let k = self.feature_dim();
        let mut input = self.config.distance().encode(&[q.signed_distance]);
        let mut code = vec![0.0; k];
        blend_code(&self.embedding, self.index.mesh().faces()[q.closest.face], q.closest.barycentric, &mut code);
        input.extend_from_slice(&code);
        let residual = self.residual.forward_batch(&input, 1)[0];
        let feature = self.object_feature.forward_batch(&input, 1);
        (q.signed_distance + residual, feature)
    }

    /// Composed field, feature and gradient at one point of the scene ball.
    pub fn sample_scene(&self, p: &Vec3) -> Result<FieldSample, FieldError> {
        if !(p.norm() <= SCENE_RADIUS + 1e-12) {
            return Err(FieldError::OutsideBound(p.x, p.y, p.z));
        }
        let queries = self.query(std::slice::from_ref(p));
        let batch = self.evaluate(std::slice::from_ref(p), &queries, true);
        Ok(FieldSample {
            sdf: batch.sdf[0],
            feature: batch.features,
            owner: batch.owner[0],
            gradient: self.sample_gradient(p),
        })
    }

    pub fn sample_gradient(&self, p: &Vec3) -> Vec3 {
        self.gradient_batch(std::slice::from_ref(p))[0]
    }

    /// Color for one feature, unit view direction and signed distance.
    /// Views within 1e-3 of unit length are renormalized.
    pub fn decode_color(&self, feature: &[f64], view: &Vec3, sdf: f64) -> Result<[f64; 3], FieldError> {
        let k = self.feature_dim();
        if feature.len() != k {
            return Err(FieldError::FeatureDimension { expected: k, got: feature.len() });
        }
        let norm = view.norm();
        if !((norm - 1.0).abs() <= 1e-3) {
            return Err(FieldError::NonUnitView(norm));
        }
        if (norm - 1.0).abs() > 1e-12 {
            log::warn!("view direction with norm {norm} renormalized");
        }
        let rgb = self.decode(feature, &[view / norm], &[sdf]);
        Ok([rgb[0], rgb[1], rgb[2]])
    }
}

fn forward(net: &Mlp, input: Vec<f64>, rows: usize, taped: bool) -> (Vec<f64>, Option<Tape>) {
    if taped {
        let (out, tape) = net.forward_taped(input, rows);
        (out, Some(tape))
    } else {
        (net.forward_batch(&input, rows), None)
    }
}

#[cfg(test)]
mod tests;
