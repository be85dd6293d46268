//! The operations behind each command-line subcommand.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::synthetic::{bend, frame_id, random_poses, ring_cameras, SyntheticScene};
use super::{
    job_base, load_camera, pose_entry, read_json, write_json, write_mask, write_pfm, write_png, FrameEntry, PipelineError,
    ReposeJob, ReposedMesh, SceneManifest,
};
use crate::fields::{Checkpoint, SceneModel};
use crate::geometry::{ClosestPointIndex, TriangleMesh};
use crate::renderer::{render_frame, Camera, CameraJson, MaskLabel, RenderConfig, RenderedFrame};
use crate::spectral::{embed_mesh, EmbeddingKind, PositionalEmbedding};
use crate::trainer::{
    eval_frame_subset, evaluate, train_to_dir, CaptureDataset, EvalReport, TraceRow, TrainConfig, Trainer,
    CHECKPOINT_FILE,
};

pub const EVAL_FILE: &str = "eval.json";
pub const CONFIG_FILE: &str = "config.txt";
pub const INDEX_FILE: &str = "index.json";

fn invalid(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Validation(format!("{}: {e}", path.display()))
}

fn load_mesh(path: &Path) -> Result<TriangleMesh, PipelineError> {
    TriangleMesh::load_obj(path).map_err(|e| invalid(path, e))
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, PipelineError> {
    if !path.exists() {
        return Err(PipelineError::Validation(format!("checkpoint {} does not exist", path.display())));
    }
    Checkpoint::load(path).map_err(|e| invalid(path, e))
}

// ---------------------------------------------------------------- embed

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbedSummary {
    pub kind: EmbeddingKind,
    pub n: usize,
    pub k: usize,
    /// Laplacian kind only.
    pub eigenvalues: Vec<f64>,
}

impl EmbedSummary {
    pub fn text(&self) -> String {
        let mut s = format!("{} embedding: {} nodes, k = {}", self.kind, self.n, self.k);
        if let (Some(first), Some(last)) = (self.eigenvalues.first(), self.eigenvalues.last()) {
            s.push_str(&format!("\neigenvalues {first:.6e} .. {last:.6e}"));
            let shown: Vec<String> = self.eigenvalues.iter().take(8).map(|v| format!("{v:.6}")).collect();
            s.push_str(&format!("\nfirst: {}", shown.join(" ")));
        }
        s
    }
}

pub fn cli_embed(mesh: &Path, k: usize, kind: EmbeddingKind, seed: u64, out: &Path) -> Result<EmbedSummary, PipelineError> {
    let mesh = load_mesh(mesh)?;
    let embedding = embed_mesh(&mesh, kind, k, seed)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| invalid(parent, e))?;
    }
    embedding.save(out)?;
    Ok(EmbedSummary { kind, n: embedding.n, k: embedding.k, eigenvalues: embedding.eigenvalues().to_vec() })
}

// ---------------------------------------------------------------- train

pub fn load_train_config(path: &Path) -> Result<TrainConfig, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| invalid(path, e))?;
    TrainConfig::parse(&text).map_err(|e| invalid(path, e))
}

/// Fresh model for `data`, attached to the mesh as posed in the first
/// frame. `embedding` overrides the one the configuration describes.
pub fn initial_model(
    data: &CaptureDataset,
    config: &TrainConfig,
    embedding: Option<PositionalEmbedding>,
) -> Result<SceneModel, PipelineError> {
    let embedding = match embedding {
        Some(e) => e,
        None => embed_mesh(&data.template, config.embedding, config.embedding_dim, config.embedding_seed)?,
    };
    let index = data.posed(data.frames[0].pose).clone();
    SceneModel::new(config.profile.scene_config(), embedding, index, config.seed)
        .map_err(|e| PipelineError::Validation(e.to_string()))
}

/// Render settings of the evaluation that follows training.
pub fn eval_render_config(config: &TrainConfig) -> RenderConfig {
    RenderConfig { samples: config.eval_samples, stratified: true, seed: config.seed }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub iterations: u64,
    pub last: Option<TraceRow>,
    pub eval: EvalReport,
}

/// Trains on the manifest's capture, writing the checkpoint, trace and
/// evaluation report into `out`. With `resume`, the model, optimizer state
/// and iteration come from that checkpoint.
pub fn cli_train(
    manifest_path: &Path,
    config: &TrainConfig,
    out: &Path,
    resume: Option<&Path>,
    progress: impl FnMut(&TraceRow),
) -> Result<TrainSummary, PipelineError> {
    let manifest = SceneManifest::load(manifest_path)?;
    let scene = manifest.load_scene(manifest_path)?;
    let data = &scene.dataset;
    config.validate()?;
    let mut trainer = match resume {
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            let adam = ckpt.adam.ok_or_else(|| invalid(path, "checkpoint has no optimizer state"))?;
            let model = ckpt.model.reposed(data.posed(data.frames[0].pose).clone()).map_err(|e| invalid(path, e))?;
            Trainer::resume(model, adam, ckpt.iteration, data, config.clone())?
        }
        None => {
            if let Some(e) = &scene.embedding {
                if e.kind != config.embedding || e.k != config.embedding_dim {
                    log::warn!("using the manifest's {} embedding (k = {}) over the configured one", e.kind, e.k);
                }
            }
            Trainer::new(initial_model(data, config, scene.embedding.clone())?, data, config.clone())?
        }
    };
    fs::create_dir_all(out).map_err(|e| invalid(out, e))?;
    super::write_atomic(&out.join(CONFIG_FILE), config.to_text().as_bytes()).map_err(|e| invalid(out, e))?;
    let trace = train_to_dir(&mut trainer, out, progress)?;
    let frames = eval_frame_subset(data.frames.len(), config.eval_frames);
    let eval = evaluate(&trainer.model, data, &frames, &eval_render_config(config), out.join(CHECKPOINT_FILE).display().to_string())?;
    write_json(&out.join(EVAL_FILE), &eval)?;
    Ok(TrainSummary { iterations: trainer.iteration, last: trace.last().copied(), eval })
}

// ---------------------------------------------------------------- render

/// Sidecar describing one rendered view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderMeta {
    pub camera: CameraJson,
    pub render: RenderConfig,
    pub checkpoint_iteration: u64,
    /// Re-posed mesh id; absent for the checkpoint's own pose.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<String>,
    pub invalid_pixels: usize,
    /// Gray levels of the mask image.
    pub mask_levels: MaskLevels,
    /// Depth planes hold distances along each pixel's unit ray; zero where
    /// the ray misses the scene bound.
    pub depth: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskLevels {
    pub outside_bound: u8,
    pub background: u8,
    pub object: u8,
}

impl Default for MaskLevels {
    fn default() -> Self {
        Self {
            outside_bound: MaskLabel::OutsideBound.level(),
            background: MaskLabel::Background.level(),
            object: MaskLabel::Object.level(),
        }
    }
}

/// File names of the planes of one view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewFiles {
    pub color: PathBuf,
    pub depth: PathBuf,
    pub normal: PathBuf,
    pub mask: PathBuf,
    pub meta: PathBuf,
}

impl ViewFiles {
    /// `<dir>/<prefix>color.png` and so on.
    pub fn at(dir: &Path, prefix: &str) -> Self {
        Self {
            color: dir.join(format!("{prefix}color.png")),
            depth: dir.join(format!("{prefix}depth.pfm")),
            normal: dir.join(format!("{prefix}normal.pfm")),
            mask: dir.join(format!("{prefix}mask.png")),
            meta: dir.join(format!("{prefix}meta.json")),
        }
    }

    fn write(&self, frame: &RenderedFrame, meta: &RenderMeta) -> Result<(), PipelineError> {
        write_png(&self.color, &frame.color)?;
        write_pfm(&self.depth, &frame.depth)?;
        write_pfm(&self.normal, &frame.normal)?;
        write_mask(&self.mask, frame.width(), frame.height(), &frame.mask)?;
        write_json(&self.meta, meta)?;
        Ok(())
    }
}

fn render_meta(camera: &Camera, render: &RenderConfig, iteration: u64, mesh: Option<String>, frame: &RenderedFrame) -> RenderMeta {
    RenderMeta {
        camera: camera.to_json(),
        render: *render,
        checkpoint_iteration: iteration,
        mesh,
        invalid_pixels: frame.invalid,
        mask_levels: MaskLevels::default(),
        depth: "ray distance".into(),
    }
}

/// Renders the checkpoint's model in its stored pose.
pub fn cli_render(checkpoint: &Path, camera: &Path, out: &Path, render: &RenderConfig) -> Result<RenderedFrame, PipelineError> {
    let ckpt = load_checkpoint(checkpoint)?;
    let camera = load_camera(camera)?;
    let frame = render_frame(&ckpt.model, &camera, render);
    ViewFiles::at(out, "").write(&frame, &render_meta(&camera, render, ckpt.iteration, None, &frame))?;
    Ok(frame)
}

// ---------------------------------------------------------------- generate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub checkpoint: PathBuf,
    pub render: RenderConfig,
    pub poses: Vec<String>,
    pub cameras: Vec<String>,
    pub frames: Vec<IndexEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub pose: String,
    pub camera: String,
    /// Paths relative to the dataset root.
    pub files: ViewFiles,
    pub object_pixels: usize,
}

fn camera_id(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    name.strip_suffix(".json").unwrap_or(&name).to_string()
}

/// Renders every (mesh, camera) pair of the job from the frozen networks
/// and embedding into `<out>/<pose_id>/<camera_id>.*` plus `index.json`.
/// Every mesh is checked against the checkpoint's topology before any
/// rendering starts; the checkpoint file is only read.
pub fn cli_generate(
    job_path: &Path,
    checkpoint: Option<&Path>,
    out: Option<&Path>,
) -> Result<DatasetIndex, PipelineError> {
    let job = ReposeJob::load(job_path)?;
    let base = job_base(job_path);
    let checkpoint_path = match (checkpoint, &job.checkpoint) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(p)) => super::resolve(&base, p),
        (None, None) => return Err(invalid(job_path, "missing checkpoint")),
    };
    let out = match (out, &job.output) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(p)) => super::resolve(&base, p),
        (None, None) => return Err(invalid(job_path, "missing output directory")),
    };
    let ckpt = load_checkpoint(&checkpoint_path)?;

    let meshes: Vec<(&ReposedMesh, TriangleMesh)> =
        job.meshes.iter().map(|m| Ok((m, m.load(&base)?))).collect::<Result<_, PipelineError>>()?;
    for (entry, mesh) in &meshes {
        if !mesh.same_topology(&ckpt.template) {
            return Err(PipelineError::Validation(format!(
                "mesh {}: topology mismatch ({} nodes / {} faces, checkpoint has {} / {})",
                entry.id,
                mesh.nodes().len(),
                mesh.faces().len(),
                ckpt.template.nodes().len(),
                ckpt.template.faces().len()
            )));
        }
    }
    let cameras: Vec<(String, Camera)> = job
        .cameras
        .iter()
        .map(|p| Ok((camera_id(p), load_camera(&super::resolve(&base, p))?)))
        .collect::<Result<_, PipelineError>>()?;

    // one index per pose, shared by its cameras
    let models: Vec<SceneModel> = meshes
        .into_iter()
        .map(|(entry, mesh)| {
            ckpt.model
                .reposed(Arc::new(ClosestPointIndex::new(mesh)))
                .map_err(|e| PipelineError::Validation(format!("mesh {}: {e}", entry.id)))
        })
        .collect::<Result<_, _>>()?;

    let jobs: Vec<(usize, usize)> = (0..models.len()).flat_map(|m| (0..cameras.len()).map(move |c| (m, c))).collect();
    let entries: Vec<IndexEntry> = jobs
        .par_iter()
        .map(|&(m, c)| {
            let pose_id = &job.meshes[m].id;
            let (cam_id, camera) = &cameras[c];
            let frame = render_frame(&models[m], camera, &job.render);
            let relative = ViewFiles::at(Path::new(pose_id), &format!("{cam_id}."));
            let absolute = ViewFiles::at(&out.join(pose_id), &format!("{cam_id}."));
            absolute.write(&frame, &render_meta(camera, &job.render, ckpt.iteration, Some(pose_id.clone()), &frame))?;
            log::info!("rendered {pose_id}/{cam_id}");
            Ok(IndexEntry {
                pose: pose_id.clone(),
                camera: cam_id.clone(),
                files: relative,
                object_pixels: frame.mask.iter().filter(|m| **m == MaskLabel::Object).count(),
            })
        })
        .collect::<Result<_, PipelineError>>()?;
    let index = DatasetIndex {
        checkpoint: checkpoint_path,
        render: job.render,
        poses: job.meshes.iter().map(|m| m.id.clone()).collect(),
        cameras: cameras.into_iter().map(|(id, _)| id).collect(),
        frames: entries,
    };
    write_json(&out.join(INDEX_FILE), &index)?;
    Ok(index)
}

// ---------------------------------------------------------------- eval

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    /// Evenly spaced frames to evaluate; zero means all.
    pub frames: usize,
    pub render: RenderConfig,
}

/// Evaluates each checkpoint on the same frames of the manifest's
/// capture. One checkpoint writes its report to `out`; several write an
/// array in argument order.
pub fn cli_eval(
    checkpoints: &[PathBuf],
    manifest_path: &Path,
    out: &Path,
    options: &EvalOptions,
) -> Result<Vec<EvalReport>, PipelineError> {
    if checkpoints.is_empty() {
        return Err(PipelineError::Validation("no checkpoint to evaluate".into()));
    }
    let manifest = SceneManifest::load(manifest_path)?;
    let data = manifest.load_scene(manifest_path)?.dataset;
    let frames = eval_frame_subset(data.frames.len(), options.frames);
    let mut reports = Vec::with_capacity(checkpoints.len());
    for path in checkpoints {
        let ckpt = load_checkpoint(path)?;
        if !ckpt.template.same_topology(&data.template) {
            return Err(invalid(path, "checkpoint mesh topology differs from the manifest's mesh"));
        }
        reports.push(evaluate(&ckpt.model, &data, &frames, &options.render, path.display().to_string())?);
    }
    if let [single] = reports.as_slice() {
        write_json(out, single)?;
    } else {
        write_json(out, &reports)?;
    }
    Ok(reports)
}

// ---------------------------------------------------------------- ablation

/// One cell of the embedding-kind by augmentation-probability matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub embedding: EmbeddingKind,
    pub view_augmentation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub cell: AblationCell,
    pub seed: u64,
    pub report: EvalReport,
}

/// Trains one model per (cell, seed) with `base`'s budget and evaluates all
/// of them on the same frames.
pub fn run_ablation(
    data: &CaptureDataset,
    base: &TrainConfig,
    cells: &[AblationCell],
    seeds: &[u64],
    options: &EvalOptions,
) -> Result<Vec<AblationResult>, PipelineError> {
    let frames = eval_frame_subset(data.frames.len(), options.frames);
    let mut results = Vec::with_capacity(cells.len() * seeds.len());
    for &seed in seeds {
        for &cell in cells {
            let config = TrainConfig {
                seed,
                embedding_seed: seed,
                embedding: cell.embedding,
                view_augmentation: cell.view_augmentation,
                ..base.clone()
            };
            let mut trainer = Trainer::new(initial_model(data, &config, None)?, data, config)?;
            while !trainer.is_done() {
                trainer.step()?;
            }
            let label = format!("{} p={} seed={seed}", cell.embedding, cell.view_augmentation);
            let report = evaluate(&trainer.model, data, &frames, &options.render, label)?;
            log::info!("{}: PSNR {:.2}", report.label, report.psnr.mean);
            results.push(AblationResult { cell, seed, report });
        }
    }
    Ok(results)
}

// ---------------------------------------------------------------- synth

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthOptions {
    pub cameras: usize,
    pub poses: usize,
    pub size: usize,
    pub camera_distance: f64,
    pub fov: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self { cameras: 8, poses: 4, size: 64, camera_distance: 2.4, fov: 0.5 }
    }
}

/// Re-posed test meshes: two bends and a shift of `+0.1` along `x`.
pub fn synthetic_reposes(template: &TriangleMesh) -> Vec<(String, TriangleMesh)> {
    let shifted = template.transformed(&nalgebra::Isometry3::translation(0.1, 0.0, 0.0));
    vec![("bend1".into(), bend(template, 1.2)), ("bend2".into(), bend(template, 2.0)), ("shift_x".into(), shifted)]
}

pub const REPOSE_JOB_FILE: &str = "repose_job.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthSummary {
    pub frames: usize,
    pub manifest: PathBuf,
    pub repose_job: PathBuf,
}

/// Writes the procedural capture (`manifest.json`, `template.obj`,
/// `cameras/`, `frames/`) and the re-posing test set (`reposed/` with
/// ground-truth planes, `repose_job.json`) into `out`.
pub fn make_synthetic(seed: u64, out: &Path, options: &SynthOptions) -> Result<SynthSummary, PipelineError> {
    let scene = SyntheticScene::default();
    let poses = random_poses(seed, options.poses);
    let cameras = ring_cameras(seed, options.cameras, options.size, options.camera_distance, options.fov);
    let io = |p: &Path, e: std::io::Error| invalid(p, e);

    fs::create_dir_all(out).map_err(|e| io(out, e))?;
    super::write_atomic(&out.join("template.obj"), scene.template.to_obj_string().as_bytes()).map_err(|e| io(out, e))?;
    let mut camera_paths = Vec::with_capacity(cameras.len());
    for (c, camera) in cameras.iter().enumerate() {
        let rel = PathBuf::from(format!("cameras/c{c}.json"));
        write_json(&out.join(&rel), &camera.to_json())?;
        camera_paths.push(rel);
    }

    let mut frames = Vec::with_capacity(poses.len() * cameras.len());
    for (p, pose) in poses.iter().enumerate() {
        let posed = ClosestPointIndex::new(scene.template.transformed(pose));
        let rendered: Vec<_> = cameras.par_iter().map(|camera| scene.render_truth(&posed, camera)).collect();
        for (c, truth) in rendered.into_iter().enumerate() {
            let id = frame_id(p, c);
            let files = ViewFiles::at(&out.join("frames"), &format!("{id}."));
            write_png(&files.color, &truth.color)?;
            write_pfm(&files.depth, &truth.depth)?;
            write_pfm(&files.normal, &truth.normal)?;
            write_mask(&files.mask, options.size, options.size, &truth.mask)?;
            frames.push(FrameEntry {
                camera: camera_paths[c].clone(),
                color: PathBuf::from(format!("frames/{id}.color.png")),
                depth: PathBuf::from(format!("frames/{id}.depth.pfm")),
                pose: pose_entry(pose),
                id,
            });
        }
    }
    let manifest = SceneManifest { mesh: "template.obj".into(), embedding: None, scale: 1.0, frames };
    let manifest_path = out.join(MANIFEST_FILE);
    write_json(&manifest_path, &manifest)?;

    let mut meshes = Vec::new();
    for (id, mesh) in synthetic_reposes(&scene.template) {
        let rel = PathBuf::from(format!("reposed/{id}.obj"));
        super::write_atomic(&out.join(&rel), mesh.to_obj_string().as_bytes()).map_err(|e| io(out, e))?;
        let index = ClosestPointIndex::new(mesh);
        let truths: Vec<_> = cameras.par_iter().map(|camera| scene.render_truth(&index, camera)).collect();
        for (c, truth) in truths.into_iter().enumerate() {
            let files = ViewFiles::at(&out.join("reposed").join(&id), &format!("c{c}."));
            write_png(&files.color, &truth.color)?;
            write_pfm(&files.depth, &truth.depth)?;
            write_mask(&files.mask, options.size, options.size, &truth.mask)?;
        }
        meshes.push(ReposedMesh { id, path: rel, pose: None });
    }
    let job = ReposeJob { checkpoint: None, meshes, cameras: camera_paths, render: RenderConfig::default(), output: None };
    let job_path = out.join(REPOSE_JOB_FILE);
    write_json(&job_path, &job)?;
    Ok(SynthSummary { frames: manifest.frames.len(), manifest: manifest_path, repose_job: job_path })
}

/// Reads a dataset index written by [`cli_generate`].
pub fn read_index(root: &Path) -> Result<DatasetIndex, PipelineError> {
    Ok(read_json(&root.join(INDEX_FILE))?)
}
