use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use garfield::pipeline::{
    cli_embed, cli_eval, cli_generate, cli_render, cli_train, load_train_config, make_synthetic, EvalOptions,
    PipelineError, SynthOptions,
};
use garfield::renderer::RenderConfig;
use garfield::spectral::EmbeddingKind;
use garfield::trainer::{Profile, TrainConfig};

#[derive(Parser)]
#[command(name = "garfield", version, about = "Mesh-attached neural scene models of deformable objects")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RenderArgs {
    /// Samples per ray.
    #[arg(long, default_value_t = 128)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Evenly spaced samples instead of jittered strata.
    #[arg(long)]
    uniform: bool,
}

impl RenderArgs {
    fn config(&self) -> Result<RenderConfig, PipelineError> {
        if self.samples < 2 {
            return Err(PipelineError::Validation("need at least 2 samples per ray".into()));
        }
        Ok(RenderConfig { samples: self.samples, stratified: !self.uniform, seed: self.seed })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Computes a positional embedding of a mesh's nodes.
    Embed {
        mesh: PathBuf,
        #[arg(short, long)]
        k: usize,
        #[arg(long, default_value = "laplacian")]
        kind: EmbeddingKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Trains a scene model on a capture manifest.
    Train {
        manifest: PathBuf,
        /// `key = value` configuration file; profile defaults otherwise.
        #[arg(short, long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "desk")]
        profile: Profile,
        #[arg(short, long)]
        out: PathBuf,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Renders a checkpoint from one camera.
    Render {
        checkpoint: PathBuf,
        camera: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        render: RenderArgs,
    },
    /// Renders re-posed meshes into a labelled dataset.
    Generate {
        job: PathBuf,
        /// Overrides the job's checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Overrides the job's output directory.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Evaluates checkpoints on a capture manifest.
    Eval {
        #[arg(required = true)]
        checkpoints: Vec<PathBuf>,
        #[arg(short, long)]
        manifest: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Evenly spaced frames to evaluate; 0 means all.
        #[arg(long, default_value_t = 0)]
        frames: usize,
        #[command(flatten)]
        render: RenderArgs,
    },
    /// Writes the procedural capture scene and its re-posing test set.
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        cameras: usize,
        #[arg(long, default_value_t = 4)]
        poses: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
    },
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Embed { mesh, k, kind, seed, out } => {
            let summary = cli_embed(&mesh, k, kind, seed, &out)?;
            println!("{}", summary.text());
        }
        Command::Train { manifest, config, profile, out, resume } => {
            let config = match config {
                Some(path) => load_train_config(&path)?,
                None => TrainConfig::for_profile(profile),
            };
            let total = config.iterations;
            let summary = cli_train(&manifest, &config, &out, resume.as_deref(), |row| {
                if row.iteration % 100 == 0 || row.iteration + 1 == total {
                    log::info!("iteration {} loss {:.5} (color {:.5})", row.iteration, row.total, row.color);
                }
            })?;
            println!(
                "trained {} iterations; PSNR {:.2} ± {:.2} dB, SSIM {:.3} ± {:.3}, geometric error {:.4} ± {:.4}",
                summary.iterations,
                summary.eval.psnr.mean,
                summary.eval.psnr.std,
                summary.eval.ssim.mean,
                summary.eval.ssim.std,
                summary.eval.geometric_error.mean,
                summary.eval.geometric_error.std
            );
        }
        Command::Render { checkpoint, camera, out, render } => {
            let frame = cli_render(&checkpoint, &camera, &out, &render.config()?)?;
            println!("wrote {}x{} view to {}", frame.width(), frame.height(), out.display());
        }
        Command::Generate { job, checkpoint, out } => {
            let index = cli_generate(&job, checkpoint.as_deref(), out.as_deref())?;
            println!("rendered {} views of {} poses", index.frames.len(), index.poses.len());
        }
        Command::Eval { checkpoints, manifest, out, frames, render } => {
            let options = EvalOptions { frames, render: render.config()? };
            for report in cli_eval(&checkpoints, &manifest, &out, &options)? {
                println!(
                    "{}: PSNR {:.2} ± {:.2}, SSIM {:.3} ± {:.3}, geometric error {:.4} ± {:.4}",
                    report.label,
                    report.psnr.mean,
                    report.psnr.std,
                    report.ssim.mean,
                    report.ssim.std,
                    report.geometric_error.mean,
                    report.geometric_error.std
                );
            }
        }
        Command::Synth { seed, out, cameras, poses, size } => {
            let options = SynthOptions { cameras, poses, size, ..SynthOptions::default() };
            let summary = make_synthetic(seed, &out, &options)?;
            println!("wrote {} frames; manifest {}", summary.frames, summary.manifest.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
