use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::losses::depth_loss;
use super::metrics::{psnr, ssim, EvalReport, FrameMetrics};
use super::objective::{objective, BatchRecord, StepLoss};
use super::{CaptureDataset, TrainConfig, TrainError};
use crate::fields::{Checkpoint, SceneGrads, SceneModel};
use crate::nn::{AdamConfig, AdamState, NnError};
use crate::pipeline::{write_atomic, write_json};
use crate::renderer::{render_frame, RenderConfig};

/// One line of the loss trace. Loss columns hold weighted terms, so
/// `total` is their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: u64,
    pub total: f64,
    pub color: f64,
    pub depth: f64,
    pub eikonal: f64,
    pub mesh: f64,
    pub delta_active: bool,
}

impl TraceRow {
    pub const HEADER: &'static str = "iteration,total,color,depth,eikonal,mesh,delta_active";

    fn from_loss(loss: &StepLoss) -> Self {
        Self {
            iteration: loss.iteration,
            total: loss.total,
            color: loss.weighted.color,
            depth: loss.weighted.depth,
            eikonal: loss.weighted.eikonal,
            mesh: loss.weighted.mesh,
            delta_active: loss.mesh_weight > 0.0,
        }
    }

    /// Floats are written in shortest round-trip form.
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.iteration,
            self.total,
            self.color,
            self.depth,
            self.eikonal,
            self.mesh,
            u8::from(self.delta_active)
        )
    }

    pub fn parse(line: &str) -> Result<Self, String> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 7 {
            return Err(format!("expected 7 columns, found {}", f.len()));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| format!("bad number {s:?}"));
        Ok(Self {
            iteration: f[0].parse().map_err(|_| format!("bad iteration {:?}", f[0]))?,
            total: num(f[1])?,
            color: num(f[2])?,
            depth: num(f[3])?,
            eikonal: num(f[4])?,
            mesh: num(f[5])?,
            delta_active: match f[6] {
                "1" => true,
                "0" => false,
                other => return Err(format!("bad flag {other:?}")),
            },
        })
    }
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>, TrainError> {
    let text = fs::read_to_string(path).map_err(|e| TrainError::Io(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines();
    if lines.next() != Some(TraceRow::HEADER) {
        return Err(TrainError::Io(format!("{}: missing trace header", path.display())));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| TraceRow::parse(l).map_err(|e| TrainError::Io(format!("{}: {e}", path.display()))))
        .collect()
}

/// Owns the model and optimizer state of one run.
pub struct Trainer<'a> {
    pub model: SceneModel,
    pub adam: AdamState,
    /// Next iteration to run.
    pub iteration: u64,
    pub config: TrainConfig,
    data: &'a CaptureDataset,
}

impl<'a> Trainer<'a> {
    pub fn new(model: SceneModel, data: &'a CaptureDataset, config: TrainConfig) -> Result<Self, TrainError> {
        let adam = AdamState::new(model.param_count(), AdamConfig { learning_rate: config.learning_rate, ..Default::default() });
        Self::resume(model, adam, 0, data, config)
    }

    pub fn resume(
        model: SceneModel,
        adam: AdamState,
        iteration: u64,
        data: &'a CaptureDataset,
        config: TrainConfig,
    ) -> Result<Self, TrainError> {
        config.validate()?;
        if adam.len() != model.param_count() {
            return Err(TrainError::Config(format!(
                "optimizer state has {} entries for {} parameters",
                adam.len(),
                model.param_count()
            )));
        }
        if !data.template.same_topology(model.mesh_index().mesh()) {
            return Err(TrainError::Dataset("dataset mesh topology differs from the model's".into()));
        }
        Ok(Self { model, adam, iteration, config, data })
    }

    pub fn data(&self) -> &CaptureDataset {
        self.data
    }

    pub fn is_done(&self) -> bool {
        self.iteration >= self.config.iterations
    }

    /// Loss of the next iteration without updating anything.
    pub fn peek(&self) -> StepLoss {
        objective(&self.model, self.data, &self.config, self.iteration, None).0
    }

    /// Runs one iteration: objective, gradient, Adam update.
    pub fn step(&mut self) -> Result<TraceRow, TrainError> {
        let mut grads = SceneGrads::zeros(&self.model);
        let (loss, record) = objective(&self.model, self.data, &self.config, self.iteration, Some(&mut grads));
        if !loss.is_finite() {
            return Err(TrainError::non_finite(loss, record, "loss"));
        }
        let flat = grads.groups();
        match self.adam.step(&mut self.model.param_groups_mut(), &flat) {
            Ok(()) => {}
            Err(NnError::NonFiniteGradient { index }) => {
                return Err(TrainError::non_finite(loss, record, &format!("gradient of parameter {index}")));
            }
            Err(e) => return Err(TrainError::Config(e.to_string())),
        }
        self.iteration += 1;
        Ok(TraceRow::from_loss(&loss))
    }

    /// Checkpoint of the current state, posed like the first frame.
    pub fn checkpoint(&self) -> Checkpoint {
        let pose = self.data.poses[self.data.frames[0].pose];
        Checkpoint {
            model: self.model.clone(),
            template: self.data.template.clone(),
            pose,
            adam: Some(self.adam.clone()),
            iteration: self.iteration,
            metadata: self.config.to_text(),
        }
    }
}

#[derive(Serialize)]
struct NonFiniteDump<'a> {
    iteration: u64,
    what: &'a str,
    loss: &'a StepLoss,
    batch: &'a BatchRecord,
}

#[derive(Serialize)]
struct TraceMeta<'a> {
    config: &'a TrainConfig,
    view_augmentation: f64,
    started_at_iteration: u64,
    parameters: usize,
}

pub const TRACE_FILE: &str = "trace.csv";
pub const TRACE_META_FILE: &str = "trace_meta.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";

/// Runs `trainer` to its configured iteration count, appending to
/// `out/trace.csv`, writing periodic checkpoints under
/// `out/checkpoints/` and the final one to `out/checkpoint.bin`. On a
/// non-finite loss the offending batch is dumped to
/// `out/nonfinite_<iteration>.json`.
pub fn train_to_dir(
    trainer: &mut Trainer,
    out: &Path,
    mut progress: impl FnMut(&TraceRow),
) -> Result<Vec<TraceRow>, TrainError> {
    let io = |p: &Path, e: std::io::Error| TrainError::Io(format!("{}: {e}", p.display()));
    fs::create_dir_all(out).map_err(|e| io(out, e))?;
    let trace_path = out.join(TRACE_FILE);
    let mut kept = if trainer.iteration > 0 && trace_path.exists() {
        read_trace(&trace_path)?.into_iter().filter(|r| r.iteration < trainer.iteration).collect()
    } else {
        Vec::new()
    };
    let mut text = format!("{}\n", TraceRow::HEADER);
    for r in &kept {
        text.push_str(&r.to_csv());
        text.push('\n');
    }
    write_atomic(&trace_path, text.as_bytes()).map_err(|e| io(&trace_path, e))?;
    let meta = TraceMeta {
        config: &trainer.config,
        view_augmentation: trainer.config.view_augmentation,
        started_at_iteration: trainer.iteration,
        parameters: trainer.model.param_count(),
    };
    write_json(&out.join(TRACE_META_FILE), &meta).map_err(|e| TrainError::Io(e.to_string()))?;

    let mut trace = fs::OpenOptions::new().append(true).open(&trace_path).map_err(|e| io(&trace_path, e))?;
    let every = trainer.config.checkpoint_every;
    while !trainer.is_done() {
        let row = match trainer.step() {
            Ok(row) => row,
            Err(TrainError::NonFinite { iteration, detail, dump, .. }) => {
                let path = out.join(format!("nonfinite_{iteration}.json"));
                fs::write(&path, &dump).map_err(|e| io(&path, e))?;
                return Err(TrainError::NonFinite { iteration, detail, dump, dump_path: Some(path) });
            }
            Err(e) => return Err(e),
        };
        writeln!(trace, "{}", row.to_csv()).map_err(|e| io(&trace_path, e))?;
        progress(&row);
        kept.push(row);
        if every > 0 && trainer.iteration % every == 0 && !trainer.is_done() {
            let path = out.join("checkpoints").join(format!("iter_{:06}.bin", trainer.iteration));
            trainer.checkpoint().save(&path)?;
        }
    }
    trace.flush().map_err(|e| io(&trace_path, e))?;
    trainer.checkpoint().save(out.join(CHECKPOINT_FILE))?;
    Ok(kept)
}

/// Evenly spaced subset of `count` frames (all when `count` is 0 or too
/// large), identical for every model evaluated on the same dataset.
pub fn eval_frame_subset(total: usize, count: usize) -> Vec<usize> {
    if count == 0 || count >= total {
        return (0..total).collect();
    }
    (0..count).map(|i| i * total / count).collect()
}

/// Renders each listed frame in its pose and compares it with the capture:
/// PSNR and SSIM on 8-bit quantized colors, geometric error on the
/// capture's depth.
pub fn evaluate(
    model: &SceneModel,
    data: &CaptureDataset,
    frames: &[usize],
    render: &RenderConfig,
    label: impl Into<String>,
) -> Result<EvalReport, TrainError> {
    let mut out = Vec::with_capacity(frames.len());
    for &f in frames {
        let frame = &data.frames[f];
        let posed = data.model_for_frame(model, f)?;
        let rendered = render_frame(&posed, &frame.camera, render);
        let predicted = rendered.color.quantized();
        out.push(FrameMetrics {
            id: frame.id.clone(),
            psnr: psnr(&predicted, &frame.color)?,
            ssim: ssim(&predicted, &frame.color)?,
            geometric_error: depth_loss(&posed, &[(&frame.camera, &frame.depth)]),
        });
        log::info!("evaluated frame {} ({:.2} dB)", frame.id, out.last().expect("pushed").psnr);
    }
    Ok(EvalReport::from_frames(out, label))
}

pub(super) fn dump_json(loss: &StepLoss, record: &BatchRecord, what: &str) -> String {
    serde_json::to_string_pretty(&NonFiniteDump { iteration: loss.iteration, what, loss, batch: record })
        .unwrap_or_else(|e| format!("{{\"error\": \"{e}\"}}"))
}


