use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use super::TrainError;
use crate::fields::SceneConfig;
use crate::spectral::EmbeddingKind;

/// Network sizes and budgets preset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Desk,
    Paper,
    Tiny,
}

impl Profile {
    pub fn scene_config(self) -> SceneConfig {
        match self {
            Profile::Desk => SceneConfig::desk(),
            Profile::Paper => SceneConfig::paper(),
            Profile::Tiny => SceneConfig::tiny(),
        }
    }
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            "tiny" => Ok(Profile::Tiny),
            other => Err(format!("unknown profile {other:?}")),
        }
    }
}

impl std::fmt::Display for Profile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Profile::Desk => "desk",
            Profile::Paper => "paper",
            Profile::Tiny => "tiny",
        })
    }
}

/// Weights of the four loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossWeights {
    pub color: f64,
    pub depth: f64,
    pub eikonal: f64,
    pub mesh: f64,
    /// The mesh prior is switched off from this iteration on.
    pub mesh_prior_cutoff: u64,
}

impl LossWeights {
    /// Mesh weight in effect at `iteration`.
    pub fn mesh_at(&self, iteration: u64) -> f64 {
        if iteration >= self.mesh_prior_cutoff {
            0.0
        } else {
            self.mesh
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        for (name, w) in [("alpha", self.color), ("beta", self.depth), ("gamma", self.eikonal), ("delta", self.mesh)] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(TrainError::Config(format!("{name} must be a finite non-negative weight, got {w}")));
            }
        }
        Ok(())
    }
}

/// Mesh-prior cutoff at the same fraction of the budget as 10k of 90k.
pub fn scaled_cutoff(iterations: u64) -> u64 {
    (iterations * 10_000).div_ceil(90_000)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainConfig {
    pub profile: Profile,
    pub iterations: u64,
    pub rays: usize,
    pub samples: usize,
    pub eikonal_samples: usize,
    pub mesh_samples: usize,
    /// Probability of replacing a training ray's view direction.
    pub view_augmentation: f64,
    pub seed: u64,
    pub embedding: EmbeddingKind,
    pub embedding_dim: usize,
    pub embedding_seed: u64,
    pub learning_rate: f64,
    pub weights: LossWeights,
    /// Zero disables periodic checkpoints.
    pub checkpoint_every: u64,
    /// Samples per ray when rendering for evaluation.
    pub eval_samples: usize,
    /// Frames used by the evaluation; zero means all.
    pub eval_frames: usize,
}

impl TrainConfig {
    pub fn desk() -> Self {
        let iterations = 2500;
        Self {
            profile: Profile::Desk,
            iterations,
            rays: 128,
            samples: 32,
            eikonal_samples: 128,
            mesh_samples: 128,
            view_augmentation: 0.3,
            seed: 0,
            embedding: EmbeddingKind::Laplacian,
            embedding_dim: 32,
            embedding_seed: 0,
            learning_rate: 5e-4,
            weights: LossWeights { color: 1.0, depth: 0.1, eikonal: 0.1, mesh: 1.0, mesh_prior_cutoff: scaled_cutoff(iterations) },
            checkpoint_every: 500,
            eval_samples: 64,
            eval_frames: 8,
        }
    }

    pub fn paper() -> Self {
        Self {
            profile: Profile::Paper,
            iterations: 90_000,
            rays: 512,
            samples: 64,
            eikonal_samples: 512,
            mesh_samples: 512,
            embedding_dim: 256,
            learning_rate: 5e-4,
            weights: LossWeights { mesh_prior_cutoff: 10_000, ..Self::desk().weights },
            checkpoint_every: 5000,
            ..Self::desk()
        }
    }

    pub fn for_profile(profile: Profile) -> Self {
        match profile {
            Profile::Desk => Self::desk(),
            Profile::Paper => Self::paper(),
            Profile::Tiny => Self {
                profile,
                iterations: 50,
                rays: 16,
                samples: 16,
                eikonal_samples: 16,
                mesh_samples: 16,
                embedding_dim: 8,
                weights: LossWeights { mesh_prior_cutoff: scaled_cutoff(50), ..Self::desk().weights },
                checkpoint_every: 0,
                eval_samples: 32,
                ..Self::desk()
            },
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |m: String| Err(TrainError::Config(m));
        if self.iterations < 1 {
            return fail("iterations must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.view_augmentation) {
            return fail(format!("view_augmentation must lie in [0, 1], got {}", self.view_augmentation));
        }
        if self.rays == 0 || self.samples < 2 || self.eval_samples < 2 {
            return fail("need at least one ray and two samples per ray".into());
        }
        if self.embedding_dim == 0 {
            return fail("embedding_dim must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        self.weights.validate()
    }

    /// Parses `key = value` lines on top of the profile's defaults. A
    /// `profile` line, wherever it appears, selects those defaults. `#`
    /// starts a comment. Setting `iterations` without `mesh_prior_cutoff`
    /// rescales the cutoff.
    pub fn parse(text: &str) -> Result<Self, TrainError> {
        let mut pairs = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| TrainError::Config(format!("line {}: expected key = value", n + 1)))?;
            pairs.push((n + 1, key.trim().to_string(), value.trim().to_string()));
        }
        let profile = match pairs.iter().rev().find(|(_, k, _)| k == "profile") {
            Some((n, _, v)) => v.parse().map_err(|e| TrainError::Config(format!("line {n}: {e}")))?,
            None => Profile::Desk,
        };
        let mut config = Self::for_profile(profile);
        let mut cutoff_set = false;
        for (n, key, value) in &pairs {
            config.set(key, value).map_err(|e| TrainError::Config(format!("line {n}: {e}")))?;
            cutoff_set |= key == "mesh_prior_cutoff";
        }
        if !cutoff_set && pairs.iter().any(|(_, k, _)| k == "iterations") {
            config.weights.mesh_prior_cutoff = scaled_cutoff(config.iterations);
        }
        config.validate()?;
        Ok(config)
    }

    /// Sets one field by its key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("invalid value {v:?} for {key}"))
        }
        match key {
            "profile" => self.profile = value.parse()?,
            "iterations" => self.iterations = num(key, value)?,
            "rays" => self.rays = num(key, value)?,
            "samples" => self.samples = num(key, value)?,
            "eikonal_samples" => self.eikonal_samples = num(key, value)?,
            "mesh_samples" => self.mesh_samples = num(key, value)?,
            "view_augmentation" => self.view_augmentation = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "embedding" => self.embedding = value.parse().map_err(|e| format!("{e}"))?,
            "embedding_dim" => self.embedding_dim = num(key, value)?,
            "embedding_seed" => self.embedding_seed = num(key, value)?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "alpha" => self.weights.color = num(key, value)?,
            "beta" => self.weights.depth = num(key, value)?,
            "gamma" => self.weights.eikonal = num(key, value)?,
            "delta" => self.weights.mesh = num(key, value)?,
            "mesh_prior_cutoff" => self.weights.mesh_prior_cutoff = num(key, value)?,
            "checkpoint_every" => self.checkpoint_every = num(key, value)?,
            "eval_samples" => self.eval_samples = num(key, value)?,
            "eval_frames" => self.eval_frames = num(key, value)?,
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    /// The `key = value` form read by [`Self::parse`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let w = &self.weights;
        let entries: [(&str, String); 20] = [
            ("profile", self.profile.to_string()),
            ("iterations", self.iterations.to_string()),
            ("rays", self.rays.to_string()),
            ("samples", self.samples.to_string()),
            ("eikonal_samples", self.eikonal_samples.to_string()),
            ("mesh_samples", self.mesh_samples.to_string()),
            ("view_augmentation", self.view_augmentation.to_string()),
            ("seed", self.seed.to_string()),
            ("embedding", self.embedding.to_string()),
            ("embedding_dim", self.embedding_dim.to_string()),
            ("embedding_seed", self.embedding_seed.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("alpha", w.color.to_string()),
            ("beta", w.depth.to_string()),
            ("gamma", w.eikonal.to_string()),
            ("delta", w.mesh.to_string()),
            ("mesh_prior_cutoff", w.mesh_prior_cutoff.to_string()),
            ("checkpoint_every", self.checkpoint_every.to_string()),
            ("eval_samples", self.eval_samples.to_string()),
            ("eval_frames", self.eval_frames.to_string()),
        ];
        for (k, v) in entries {
            writeln!(s, "{k} = {v}").expect("writing to a string");
        }
        s
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}
