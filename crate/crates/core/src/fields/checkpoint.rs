//! Binary checkpoints: architecture, network parameters, embedding,
//! template mesh and pose (translation, then quaternion `i j k w`),
//! optimizer state and free-form metadata.
//!
//! All integers are little-endian `u64` unless noted, floats are
//! little-endian `f64`.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{Isometry3, Matrix3, Quaternion, Rotation3, Translation3, UnitQuaternion};
use thiserror::Error;

use super::{FieldError, NetShape, SceneConfig, SceneModel};
use crate::geometry::{ClosestPointIndex, MeshError, TriangleMesh, Vec3};
use crate::nn::{Activation, AdamConfig, AdamState, Mlp, MlpSpec};
use crate::spectral::PositionalEmbedding;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"GARFCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

const NETWORK_NAMES: [&str; 4] = ["background", "residual", "object_feature", "decoder"];

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint is corrupt: {0}")]
    Format(String),
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Everything needed to render from, or resume training of, a model.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: SceneModel,
    /// Capture mesh in template-local coordinates.
    pub template: TriangleMesh,
    /// Transform placing the template in the scene for default rendering.
    pub pose: Isometry3<f64>,
    pub adam: Option<AdamState>,
    pub iteration: u64,
    /// Training configuration as `key=value` lines.
    pub metadata: String,
}

impl Checkpoint {
    /// Builds the model's posed index from `template` and `pose`.
    pub fn pose_model(template: &TriangleMesh, pose: &Isometry3<f64>) -> Arc<ClosestPointIndex> {
        Arc::new(ClosestPointIndex::new(template.transformed(pose)))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION);
        let c = self.model.config();
        for shape in [c.background, c.residual, c.object_feature, c.decoder] {
            w.u64(shape.hidden as u64);
            w.u64(shape.depth as u64);
            w.u64(shape.skip.map_or(0, |s| s as u64));
        }
        w.u64(c.spatial_octaves as u64);
        w.u64(c.distance_octaves as u64);
        w.u64(c.view_octaves as u64);
        w.f64(c.background_radius);
        w.f64(c.initial_sharpness_std);

        let m = &self.model;
        w.u64(NETWORK_NAMES.len() as u64);
        for (name, net) in NETWORK_NAMES.iter().zip([&m.background, &m.residual, &m.object_feature, &m.decoder]) {
            w.blob(name.as_bytes());
            write_spec(&mut w, net.spec());
            w.floats(net.params());
        }
        w.f64(m.log_sharpness());
        w.blob(&m.embedding.to_bytes());

        w.u64(self.template.nodes().len() as u64);
        for p in self.template.nodes() {
            w.f64(p.x);
            w.f64(p.y);
            w.f64(p.z);
        }
        w.u64(self.template.faces().len() as u64);
        for f in self.template.faces() {
            for &i in f {
                w.u64(i as u64);
            }
        }
        let t = self.pose.translation.vector;
        let q = self.pose.rotation.quaternion().coords;
        for v in [t.x, t.y, t.z, q.x, q.y, q.z, q.w] {
            w.f64(v);
        }
        match &self.adam {
            Some(a) => {
                w.u8(1);
                w.f64(a.config.learning_rate);
                w.f64(a.config.beta1);
                w.f64(a.config.beta2);
                w.f64(a.config.epsilon);
                w.u64(a.step);
                w.floats(&a.first_moment);
                w.floats(&a.second_moment);
            }
            None => w.u8(0),
        }
        w.u64(self.iteration);
        w.blob(self.metadata.as_bytes());
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader(bytes);
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(CheckpointError::Format("bad magic".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(version));
        }
        let mut shapes = [NetShape::new(0, 0, None); 4];
        for s in &mut shapes {
            let hidden = r.usize()?;
            let depth = r.usize()?;
            let skip = r.usize()?;
            *s = NetShape::new(hidden, depth, (skip > 0).then_some(skip));
        }
        let config = SceneConfig {
            background: shapes[0],
            residual: shapes[1],
            object_feature: shapes[2],
            decoder: shapes[3],
            spatial_octaves: r.usize()?,
            distance_octaves: r.usize()?,
            view_octaves: r.usize()?,
            background_radius: r.f64()?,
            initial_sharpness_std: r.f64()?,
        };
        let count = r.usize()?;
        if count != NETWORK_NAMES.len() {
            return Err(CheckpointError::Format(format!("expected 4 networks, found {count}")));
        }
        let mut nets = Vec::with_capacity(4);
        for name in NETWORK_NAMES {
            let found = r.blob()?;
            if found != name.as_bytes() {
                return Err(CheckpointError::Format(format!("expected network {name}")));
            }
            let spec = read_spec(&mut r)?;
            let mut net = Mlp::new(spec).map_err(FieldError::from)?;
            net.set_params(r.floats()?).map_err(FieldError::from)?;
            nets.push(net);
        }
        let log_sharpness = r.f64()?;
        let embedding = PositionalEmbedding::from_bytes(r.blob()?)
            .map_err(|e| CheckpointError::Format(format!("embedding: {e}")))?;

        let n = r.usize()?;
        let mut nodes = Vec::with_capacity(n.min(1 << 24));
        for _ in 0..n {
            nodes.push(Vec3::new(r.f64()?, r.f64()?, r.f64()?));
        }
        let f = r.usize()?;
        let mut faces = Vec::with_capacity(f.min(1 << 24));
        for _ in 0..f {
            faces.push([r.usize()?, r.usize()?, r.usize()?]);
        }
        let template = TriangleMesh::new(nodes, faces)?;
        let mut v = [0.0; 7];
        for x in &mut v {
            *x = r.f64()?;
        }
        let q = Quaternion::new(v[6], v[3], v[4], v[5]);
        if !v.iter().all(|x| x.is_finite()) || (q.norm() - 1.0).abs() > 1e-9 {
            return Err(CheckpointError::Format("pose is not a rigid transform".into()));
        }
        let pose = Isometry3::from_parts(Translation3::new(v[0], v[1], v[2]), UnitQuaternion::new_unchecked(q));
        let adam = match r.u8()? {
            0 => None,
            1 => {
                let config =
                    AdamConfig { learning_rate: r.f64()?, beta1: r.f64()?, beta2: r.f64()?, epsilon: r.f64()? };
                let step = r.u64()?;
                let first_moment = r.floats()?;
                let second_moment = r.floats()?;
                Some(AdamState { config, step, first_moment, second_moment })
            }
            other => return Err(CheckpointError::Format(format!("bad optimizer flag {other}"))),
        };
        let iteration = r.u64()?;
        let metadata = String::from_utf8(r.blob()?.to_vec())
            .map_err(|_| CheckpointError::Format("metadata is not UTF-8".into()))?;
        if !r.0.is_empty() {
            return Err(CheckpointError::Format(format!("{} trailing bytes", r.0.len())));
        }

        let index = Self::pose_model(&template, &pose);
        let nets: [Mlp; 4] = nets.try_into().expect("four networks");
        let model = SceneModel::from_parts(config, nets, embedding, log_sharpness, index)?;
        if let Some(a) = &adam {
            if a.len() != model.param_count() {
                return Err(CheckpointError::Format("optimizer state does not match parameters".into()));
            }
        }
        Ok(Self { model, template, pose, adam, iteration, metadata })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        crate::pipeline::write_atomic(path.as_ref(), &self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Rigid transform from 16 row-major floats; the rotation block must be
/// orthonormal within 1e-6 with determinant +1 and the last row `0 0 0 1`.
pub fn isometry_from_row_major(m: &[f64; 16]) -> Result<Isometry3<f64>, String> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err("transform has non-finite entries".into());
    }
    if m[12].abs() > 1e-9 || m[13].abs() > 1e-9 || m[14].abs() > 1e-9 || (m[15] - 1.0).abs() > 1e-9 {
        return Err("transform's last row must be 0 0 0 1".into());
    }
    let rot = Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
    let err = (rot.transpose() * rot - Matrix3::identity()).abs().max();
    if err > 1e-6 || rot.determinant() < 0.0 {
        return Err(format!("rotation block is not a proper rotation (orthonormality error {err:.2e})"));
    }
    let rotation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(rot));
    Ok(Isometry3::from_parts(Translation3::new(m[3], m[7], m[11]), rotation))
}

pub fn isometry_to_row_major(t: &Isometry3<f64>) -> [f64; 16] {
    let h = t.to_homogeneous();
    let mut out = [0.0; 16];
    for r in 0..4 {
        for c in 0..4 {
            out[r * 4 + c] = h[(r, c)];
        }
    }
    out
}

fn activation_code(a: Activation) -> (u64, f64) {
    match a {
        Activation::Identity => (0, 0.0),
        Activation::Relu => (1, 0.0),
        Activation::Softplus(b) => (2, b),
        Activation::Sigmoid => (3, 0.0),
    }
}

fn activation_from(code: u64, param: f64) -> Result<Activation, CheckpointError> {
    Ok(match code {
        0 => Activation::Identity,
        1 => Activation::Relu,
        2 => Activation::Softplus(param),
        3 => Activation::Sigmoid,
        _ => return Err(CheckpointError::Format(format!("unknown activation {code}"))),
    })
}

fn write_spec(w: &mut Writer, s: &MlpSpec) {
    for v in [s.input, s.hidden, s.depth, s.output, s.skip.unwrap_or(0)] {
        w.u64(v as u64);
    }
    for a in [s.hidden_activation, s.output_activation] {
        let (code, param) = activation_code(a);
        w.u64(code);
        w.f64(param);
    }
}

fn read_spec(r: &mut Reader) -> Result<MlpSpec, CheckpointError> {
    let input = r.usize()?;
    let hidden = r.usize()?;
    let depth = r.usize()?;
    let output = r.usize()?;
    let skip = r.usize()?;
    let hidden_activation = activation_from(r.u64()?, r.f64()?)?;
    let output_activation = activation_from(r.u64()?, r.f64()?)?;
    Ok(MlpSpec { input, hidden, depth, output, skip: (skip > 0).then_some(skip), hidden_activation, output_activation })
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn bytes(&mut self, b: &[u8]) {
        self.0.extend_from_slice(b);
    }
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.bytes(&v.to_le_bytes());
    }
    fn blob(&mut self, b: &[u8]) {
        self.u64(b.len() as u64);
        self.bytes(b);
    }
    fn floats(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        for x in v {
            self.f64(*x);
        }
    }
}

struct Reader<'a>(&'a [u8]);

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.0.len() < n {
            return Err(CheckpointError::Format("truncated".into()));
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
    }
    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn usize(&mut self) -> Result<usize, CheckpointError> {
        usize::try_from(self.u64()?).map_err(|_| CheckpointError::Format("size overflow".into()))
    }
    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn blob(&mut self) -> Result<&'a [u8], CheckpointError> {
        let n = self.usize()?;
        self.take(n)
    }
    fn floats(&mut self) -> Result<Vec<f64>, CheckpointError> {
        let n = self.usize()?;
        let raw = self.take(n.checked_mul(8).ok_or_else(|| CheckpointError::Format("size overflow".into()))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}
