//! Pipeline configuration: a TOML file with command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use flowsnake::flowengine::EvolutionConfig;
use flowsnake::neuralflow::TrainConfig;
use flowsnake::patchdata::GenConfig;
use flowsnake::synth::SynthConfig;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed. When set it replaces the generation, training and
    /// evaluation seeds.
    pub seed: Option<u64>,
    /// Directory of `<name>.png` / `<name>_mask.png` pairs; synthetic
    /// shapes are used when absent.
    pub data_dir: Option<PathBuf>,
    pub dataset_dir: PathBuf,
    pub model_path: PathBuf,
    pub output_dir: PathBuf,
    /// Weight files offered by the HTTP service.
    pub models_dir: PathBuf,
    pub port: u16,
    /// Number of synthetic images when no data directory is given.
    pub synth_count: usize,
    pub inits_per_image: usize,
    pub gen: GenConfig,
    pub train: TrainConfig,
    pub evolution: EvolutionConfig,
    pub synth: SynthConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: None,
            data_dir: None,
            dataset_dir: "dataset".into(),
            model_path: "model.bin".into(),
            output_dir: "out".into(),
            models_dir: "models".into(),
            port: 8080,
            synth_count: 16,
            inits_per_image: 10,
            gen: GenConfig::default(),
            train: TrainConfig::default(),
            evolution: EvolutionConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Config file (if any), then overrides, then the master seed.
    pub fn resolve(file: Option<&Path>, overrides: &Overrides) -> anyhow::Result<Self> {
        let mut cfg = match file {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        overrides.apply(&mut cfg);
        if let Some(seed) = cfg.seed {
            cfg.gen.seed = seed;
            cfg.train.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.gen.validate()?;
        self.train.validate()?;
        self.evolution.validate()?;
        self.synth.validate()?;
        if self.synth_count == 0 {
            bail!("synth-count must be at least 1");
        }
        if self.inits_per_image == 0 {
            bail!("inits-per-image must be at least 1");
        }
        Ok(())
    }

    pub fn eval_seed(&self) -> u64 {
        self.seed.unwrap_or(self.gen.seed)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Flags mirroring the configuration fields.
#[derive(Args, Clone, Debug, Default)]
pub struct Overrides {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub dataset_dir: Option<PathBuf>,
    #[arg(long)]
    pub model_path: Option<PathBuf>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub models_dir: Option<PathBuf>,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub synth_count: Option<usize>,
    #[arg(long)]
    pub inits_per_image: Option<usize>,

    /// Patch scales, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub scales: Option<Vec<f64>>,
    #[arg(long, allow_hyphen_values = true)]
    pub level_lo: Option<i32>,
    #[arg(long, allow_hyphen_values = true)]
    pub level_hi: Option<i32>,
    #[arg(long)]
    pub spacing_divisor: Option<f64>,
    #[arg(long)]
    pub augment: Option<bool>,
    #[arg(long)]
    pub patch_size: Option<usize>,
    #[arg(long)]
    pub max_rotation: Option<f64>,
    #[arg(long)]
    pub max_bias: Option<f64>,

    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub validation_fraction: Option<f64>,
    /// Gradient clipping norm; 0 disables clipping.
    #[arg(long)]
    pub clip_norm: Option<f64>,
    /// Epochs at which the learning rate drops by `lr-gamma`, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub lr_milestones: Option<Vec<usize>>,
    #[arg(long)]
    pub lr_gamma: Option<f64>,

    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub step_size: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub resample_every: Option<usize>,
    #[arg(long)]
    pub regularize: Option<bool>,

    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long)]
    pub min_radius: Option<f64>,
    #[arg(long)]
    pub max_radius: Option<f64>,
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub min_contrast: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub texture: Option<f64>,
    #[arg(long)]
    pub ramp: Option<f64>,
}

fn set<T: Clone>(dst: &mut T, src: &Option<T>) {
    if let Some(v) = src {
        *dst = v.clone();
    }
}

impl Overrides {
    pub fn apply(&self, c: &mut PipelineConfig) {
        if self.seed.is_some() {
            c.seed = self.seed;
        }
        if self.data_dir.is_some() {
            c.data_dir = self.data_dir.clone();
        }
        set(&mut c.dataset_dir, &self.dataset_dir);
        set(&mut c.model_path, &self.model_path);
        set(&mut c.output_dir, &self.output_dir);
        set(&mut c.models_dir, &self.models_dir);
        set(&mut c.port, &self.port);
        set(&mut c.synth_count, &self.synth_count);
        set(&mut c.inits_per_image, &self.inits_per_image);

        let g = &mut c.gen;
        set(&mut g.scales, &self.scales);
        set(&mut g.level_lo, &self.level_lo);
        set(&mut g.level_hi, &self.level_hi);
        set(&mut g.spacing_divisor, &self.spacing_divisor);
        set(&mut g.augment, &self.augment);
        set(&mut g.patch_size, &self.patch_size);
        set(&mut g.max_rotation, &self.max_rotation);
        set(&mut g.max_bias, &self.max_bias);

        let t = &mut c.train;
        set(&mut t.batch_size, &self.batch_size);
        set(&mut t.learning_rate, &self.learning_rate);
        set(&mut t.epochs, &self.epochs);
        set(&mut t.momentum, &self.momentum);
        set(&mut t.validation_fraction, &self.validation_fraction);
        set(&mut t.lr_milestones, &self.lr_milestones);
        set(&mut t.lr_gamma, &self.lr_gamma);
        if let Some(v) = self.clip_norm {
            t.clip_norm = (v > 0.0).then_some(v);
        }

        let e = &mut c.evolution;
        set(&mut e.iterations, &self.iterations);
        set(&mut e.step_size, &self.step_size);
        set(&mut e.points, &self.points);
        set(&mut e.beta, &self.beta);
        set(&mut e.epsilon, &self.epsilon);
        set(&mut e.resample_every, &self.resample_every);
        set(&mut e.regularize, &self.regularize);

        let s = &mut c.synth;
        set(&mut s.width, &self.width);
        set(&mut s.height, &self.height);
        set(&mut s.channels, &self.channels);
        set(&mut s.min_radius, &self.min_radius);
        set(&mut s.max_radius, &self.max_radius);
        set(&mut s.margin, &self.margin);
        set(&mut s.min_contrast, &self.min_contrast);
        set(&mut s.noise, &self.noise);
        set(&mut s.texture, &self.texture);
        set(&mut s.ramp, &self.ramp);
    }
}
