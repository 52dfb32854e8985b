//! The `run` command: train one configuration, write its metrics CSV and a
//! checkpoint.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use gcopt_core::train::{Dataset, EvalResult, Trainer};
use gcopt_core::{DType, Scalar};

use crate::checkpoint::{Checkpoint, EpochTotals};
use crate::config::ExperimentConfig;
use crate::data;
use crate::error::{BenchError, Result};
use crate::metrics::{MetricsWriter, Record, Split};

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.gck";
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    /// Continue from this checkpoint instead of a fresh initialization.
    pub resume: Option<PathBuf>,
    /// Stop (and checkpoint) after this many optimizer steps in this invocation.
    pub stop_after: Option<u64>,
    /// Add per-parameter gradient columns.
    pub trace_layers: bool,
    /// Fill `wall_ms` with elapsed time. Off by default so reruns are byte-identical.
    pub timing: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    /// Steps completed in total, including any before a resume.
    pub steps: u64,
    pub aborted: bool,
    pub final_test: Option<EvalResult>,
}

impl RunSummary {
    pub fn metrics_path(&self) -> PathBuf {
        self.out_dir.join(METRICS_FILE)
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.out_dir.join(CHECKPOINT_FILE)
    }
}

pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunSummary> {
    cfg.validate()?;
    match cfg.dtype()? {
        DType::F32 => run_typed::<f32>(cfg, opts),
        DType::F64 => run_typed::<f64>(cfg, opts),
    }
}

/// Loads the configured dataset as `(train, test)`.
pub fn load_data<T: Scalar>(cfg: &ExperimentConfig) -> Result<(Dataset<T>, Dataset<T>)> {
    data::load_split(&cfg.dataset_source()?, Some(cfg.classes), cfg.image_shape()?)
}

/// Builds the trainer a configuration describes.
pub fn build_trainer<T: Scalar>(cfg: &ExperimentConfig, sample_dims: &[usize]) -> Result<Trainer<T>> {
    Ok(Trainer::new(
        &cfg.layers()?,
        sample_dims,
        cfg.init_scheme()?,
        cfg.optimizer_config()?,
        cfg.schedule()?,
        cfg.batch_size,
        cfg.seed,
    )?)
}

fn check_output_width<T: Scalar>(trainer: &mut Trainer<T>, data: &Dataset<T>) -> Result<()> {
    let (x, _) = data.batch(&[0]);
    let training = trainer.model.is_training();
    trainer.model.set_training(false);
    let width = trainer.model.forward(&x)?.dims()[1..].iter().product::<usize>();
    trainer.model.set_training(training);
    if width != data.classes {
        return Err(BenchError::Config(format!(
            "model emits {width} logits but the dataset has {} classes",
            data.classes
        )));
    }
    Ok(())
}

fn run_typed<T: Scalar>(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunSummary> {
    let (train, test) = load_data::<T>(cfg)?;
    let mut trainer = build_trainer::<T>(cfg, train.sample_dims())?;
    check_output_width(&mut trainer, &train)?;

    let out = Path::new(&cfg.out);
    fs::create_dir_all(out).map_err(|e| BenchError::io(out, e))?;
    let cfg_path = out.join(CONFIG_FILE);
    fs::write(&cfg_path, cfg.to_toml()).map_err(|e| BenchError::io(&cfg_path, e))?;

    let mut totals = EpochTotals::default();
    if let Some(path) = &opts.resume {
        totals = Checkpoint::load(path)?.apply(&mut trainer)?;
    }
    let layer_names: Vec<String> = if opts.trace_layers {
        trainer.model.params().iter().map(|p| p.name.clone()).collect()
    } else {
        Vec::new()
    };
    let mut writer = MetricsWriter::create(&out.join(METRICS_FILE), &layer_names)?;
    let start = Instant::now();
    let wall = || {
        if opts.timing {
            start.elapsed().as_millis() as u64
        } else {
            0
        }
    };
    let mut summary = RunSummary {
        out_dir: out.to_path_buf(),
        steps: trainer.position().step,
        aborted: false,
        final_test: None,
    };

    if opts.resume.is_none() {
        let e = trainer.evaluate(&test)?;
        let mut r = Record::eval(0, 0, Split::Test, e.loss, e.acc);
        r.wall_ms = wall();
        writer.write(&r)?;
        summary.final_test = Some(e);
    }

    let per_epoch = trainer.batches_per_epoch(train.len());
    let mut taken = 0u64;
    while trainer.position().epoch < cfg.epochs {
        if opts.stop_after.is_some_and(|n| taken >= n) {
            break;
        }
        let before = trainer.position();
        let epoch = before.epoch + 1;
        let log = (before.step + 1) % cfg.log_every == 0;
        let Some(o) = trainer.next_step(&train, log)? else {
            return Err(BenchError::Config("epoch ended without a batch".into()));
        };
        if !o.loss.is_finite() {
            let mut r = Record::eval(epoch, before.step + 1, Split::Aborted, o.loss, 0.0);
            r.wall_ms = wall();
            writer.write(&r)?;
            writer.flush()?;
            summary.aborted = true;
            summary.steps = before.step;
            return Ok(summary);
        }
        taken += 1;
        let step = trainer.position().step;
        totals.loss_sum += o.loss * o.count as f64;
        totals.correct += o.correct as u64;
        totals.seen += o.count as u64;
        if log {
            let layers = if opts.trace_layers {
                o.per_param.iter().map(|(_, s)| (s.raw_l2, s.raw_max)).collect()
            } else {
                Vec::new()
            };
            writer.write(&Record {
                epoch,
                step,
                split: Split::Batch,
                loss: o.loss,
                acc: o.correct as f64 / o.count as f64,
                grad_l2: Some(o.grad_l2),
                grad_max: Some(o.grad_max),
                wall_ms: wall(),
                layers,
            })?;
        }
        if trainer.position().batch as usize >= per_epoch {
            let seen = totals.seen as f64;
            let mut r = Record::eval(
                epoch,
                step,
                Split::Train,
                totals.loss_sum / seen,
                totals.correct as f64 / seen,
            );
            r.wall_ms = wall();
            writer.write(&r)?;
            let e = trainer.evaluate(&test)?;
            let mut r = Record::eval(epoch, step, Split::Test, e.loss, e.acc);
            r.wall_ms = wall();
            writer.write(&r)?;
            summary.final_test = Some(e);
            trainer.end_epoch();
            totals = EpochTotals::default();
            writer.flush()?;
        }
    }
    writer.flush()?;
    summary.steps = trainer.position().step;
    Checkpoint::from_trainer(&trainer, totals).save(&summary.checkpoint_path())?;
    Ok(summary)
}
