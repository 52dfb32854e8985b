//! Experiment configuration: a flat key/value TOML file plus command-line
//! overrides. Unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use gcopt_core::nn::{InitScheme, LayerSpec};
use gcopt_core::train::LrSchedule;
use gcopt_core::{DType, DecayMode, GcPolicy, MomentumForm, OptimizerConfig, OptimizerKind};
use serde::{Deserialize, Serialize};

use crate::data::{DatasetSource, SampleShape, SyntheticSpec};
use crate::error::{BenchError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Comma-separated layer list, e.g. `dense:128,relu,dense:10`.
    pub model: String,
    /// `kaiming_normal` or `xavier_uniform`.
    pub init: String,
    pub optimizer: String,
    pub lr: f64,
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Defaults to the optimizer's own mode when absent.
    pub decay_mode: Option<String>,
    pub momentum_form: String,
    pub gc: bool,
    pub gc_fc: bool,
    pub gc_conv: bool,
    pub gc_min_fan_in: usize,
    pub epochs: u32,
    pub batch_size: usize,
    pub lr_factor: f64,
    pub lr_milestones: Vec<u32>,
    pub seed: u64,
    /// `f32` or `f64`.
    pub dtype: String,
    /// `synthetic`, `csv:<path>` or `idx:<images>,<labels>`.
    pub dataset: String,
    pub classes: usize,
    pub samples_per_class: usize,
    pub input_dim: usize,
    /// `[channels, height, width]`; switches synthetic data to image mode and
    /// reshapes flat CSV features.
    pub image_dims: Option<Vec<usize>>,
    pub spread: f64,
    pub data_seed: u64,
    /// Steps between `batch` rows in the metrics file.
    pub log_every: u64,
    /// Output directory.
    pub out: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: "dense:128,relu,dense:128,relu,dense:10".into(),
            init: "kaiming_normal".into(),
            optimizer: "sgdm".into(),
            lr: 0.1,
            momentum: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            decay_mode: None,
            momentum_form: "paper".into(),
            gc: true,
            gc_fc: true,
            gc_conv: true,
            gc_min_fan_in: 2,
            epochs: 10,
            batch_size: 64,
            lr_factor: 0.1,
            lr_milestones: vec![60, 120, 180],
            seed: 0,
            dtype: "f32".into(),
            dataset: "synthetic".into(),
            classes: 10,
            samples_per_class: 500,
            input_dim: 64,
            image_dims: None,
            spread: 1.0,
            data_seed: 0,
            log_every: 10,
            out: "run".into(),
        }
    }
}

/// Command-line overrides; `None` keeps the file's value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub optimizer: Option<String>,
    pub gc: Option<bool>,
    pub lr: Option<f64>,
    pub weight_decay: Option<f64>,
    pub decay_mode: Option<String>,
    pub momentum_form: Option<String>,
    pub epochs: Option<u32>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
    pub dataset: Option<String>,
    pub spread: Option<f64>,
    pub data_seed: Option<u64>,
    pub out: Option<String>,
}

fn config_err(msg: impl Into<String>) -> BenchError {
    BenchError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| config_err(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = &o.optimizer {
            self.optimizer = v.clone();
        }
        if let Some(v) = o.gc {
            self.gc = v;
        }
        if let Some(v) = o.lr {
            self.lr = v;
        }
        if let Some(v) = o.weight_decay {
            self.weight_decay = v;
        }
        if let Some(v) = &o.decay_mode {
            self.decay_mode = Some(v.clone());
        }
        if let Some(v) = &o.momentum_form {
            self.momentum_form = v.clone();
        }
        if let Some(v) = o.epochs {
            self.epochs = v;
        }
        if let Some(v) = o.batch_size {
            self.batch_size = v;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = &o.dataset {
            self.dataset = v.clone();
        }
        if let Some(v) = o.spread {
            self.spread = v;
        }
        if let Some(v) = o.data_seed {
            self.data_seed = v;
        }
        if let Some(v) = &o.out {
            self.out = v.clone();
        }
    }

    pub fn optimizer_config(&self) -> Result<OptimizerConfig> {
        let kind = OptimizerKind::parse(&self.optimizer)
            .ok_or_else(|| config_err(format!("unknown optimizer `{}`", self.optimizer)))?;
        let form = MomentumForm::parse(&self.momentum_form)
            .ok_or_else(|| config_err(format!("unknown momentum form `{}`", self.momentum_form)))?;
        let mut cfg = OptimizerConfig::new(kind, self.lr)
            .with_momentum(self.momentum)
            .with_betas(self.beta1, self.beta2)
            .with_eps(self.eps)
            .with_weight_decay(self.weight_decay)
            .with_momentum_form(form);
        if let Some(mode) = &self.decay_mode {
            cfg.decay_mode =
                DecayMode::parse(mode).ok_or_else(|| config_err(format!("unknown decay mode `{mode}`")))?;
        }
        if self.gc {
            let policy =
                GcPolicy::new(self.gc_fc, self.gc_conv, self.gc_min_fan_in).map_err(|e| config_err(e.to_string()))?;
            cfg = cfg.with_gc(policy);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn layers(&self) -> Result<Vec<LayerSpec>> {
        LayerSpec::parse_list(&self.model).map_err(|e| config_err(format!("model: {e}")))
    }

    pub fn init_scheme(&self) -> Result<InitScheme> {
        match self.init.as_str() {
            "kaiming_normal" => Ok(InitScheme::KaimingNormal),
            "xavier_uniform" => Ok(InitScheme::XavierUniform),
            other => Err(config_err(format!("unknown init `{other}`"))),
        }
    }

    pub fn schedule(&self) -> Result<LrSchedule> {
        if !(self.lr_factor.is_finite() && self.lr_factor > 0.0) {
            return Err(config_err("lr_factor must be positive"));
        }
        Ok(LrSchedule {
            factor: self.lr_factor,
            milestones: self.lr_milestones.clone(),
        })
    }

    pub fn dtype(&self) -> Result<DType> {
        match self.dtype.as_str() {
            "f32" => Ok(DType::F32),
            "f64" => Ok(DType::F64),
            other => Err(config_err(format!("unknown dtype `{other}`"))),
        }
    }

    pub fn image_shape(&self) -> Result<Option<[usize; 3]>> {
        match self.image_dims.as_deref() {
            None => Ok(None),
            Some(&[c, h, w]) if c > 0 && h > 0 && w > 0 => Ok(Some([c, h, w])),
            Some(d) => Err(config_err(format!(
                "image_dims must be three positive extents, got {d:?}"
            ))),
        }
    }

    pub fn synthetic_spec(&self) -> Result<SyntheticSpec> {
        let shape = match self.image_shape()? {
            Some([c, h, w]) => SampleShape::Image { c, h, w },
            None => SampleShape::Vector(self.input_dim),
        };
        let spec = SyntheticSpec {
            classes: self.classes,
            samples_per_class: self.samples_per_class,
            shape,
            spread: self.spread,
            seed: self.data_seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn dataset_source(&self) -> Result<DatasetSource> {
        let d = self.dataset.as_str();
        if d == "synthetic" {
            return Ok(DatasetSource::Synthetic(self.synthetic_spec()?));
        }
        if let Some(path) = d.strip_prefix("csv:") {
            return Ok(DatasetSource::Csv(PathBuf::from(path)));
        }
        if let Some(rest) = d.strip_prefix("idx:") {
            if let Some((images, labels)) = rest.split_once(',') {
                return Ok(DatasetSource::Idx {
                    images: PathBuf::from(images),
                    labels: PathBuf::from(labels),
                });
            }
        }
        Err(config_err(format!(
            "dataset must be `synthetic`, `csv:<path>` or `idx:<images>,<labels>`, got `{d}`"
        )))
    }

    /// Checks every field that can be checked without touching the filesystem.
    pub fn validate(&self) -> Result<()> {
        self.optimizer_config()?;
        self.layers()?;
        self.init_scheme()?;
        self.schedule()?;
        self.dtype()?;
        self.dataset_source()?;
        if self.batch_size == 0 {
            return Err(config_err("batch_size must be >= 1"));
        }
        if self.log_every == 0 {
            return Err(config_err("log_every must be >= 1"));
        }
        Ok(())
    }
}
