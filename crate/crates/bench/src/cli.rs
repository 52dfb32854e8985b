//! Command-line entry point.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::compare::{self, Thresholds};
use crate::config::{ExperimentConfig, Overrides};
use crate::data::{self, DatasetSource};
use crate::error::{BenchError, Result};
use crate::metrics::MetricsTable;
use crate::report;
use crate::runner::{self, RunOptions};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "GC_OPT_THREADS";

#[derive(Parser, Debug)]
#[command(name = "gcopt", version, about = "Gradient-centralized optimizer benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one configuration; writes metrics.csv, checkpoint.gck and config.toml.
    Run(RunArgs),
    /// Compare metrics files given as pairs: A B [A2 B2 ...].
    Compare(CompareArgs),
    /// Run the property-check suite; exits 1 if any check fails.
    Verify(VerifyArgs),
    /// Write the configured synthetic dataset to disk.
    GenData(GenArgs),
}

fn on_off(s: &str) -> std::result::Result<bool, String> {
    match s {
        "on" => Ok(true),
        "off" => Ok(false),
        _ => Err(format!("expected `on` or `off`, got `{s}`")),
    }
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// Key/value config file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long, value_parser = on_off, value_name = "on|off")]
    gc: Option<bool>,
    #[arg(long)]
    lr: Option<f64>,
    /// Weight decay factor.
    #[arg(long)]
    wd: Option<f64>,
    #[arg(long, value_name = "coupled_l2|decoupled")]
    decay_mode: Option<String>,
    #[arg(long, value_name = "paper|classic")]
    momentum_form: Option<String>,
    #[arg(long)]
    epochs: Option<u32>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// `synthetic`, `csv:<path>` or `idx:<images>,<labels>`.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    spread: Option<f64>,
    #[arg(long)]
    data_seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        cfg.apply(&Overrides {
            optimizer: self.optimizer.clone(),
            gc: self.gc,
            lr: self.lr,
            weight_decay: self.wd,
            decay_mode: self.decay_mode.clone(),
            momentum_form: self.momentum_form.clone(),
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            dataset: self.dataset.clone(),
            spread: self.spread,
            data_seed: self.data_seed,
            out: self.out.clone(),
        });
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Continue from a checkpoint written by an earlier run of the same config.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Stop and checkpoint after this many steps.
    #[arg(long)]
    stop_after: Option<u64>,
    /// Add per-parameter gradient norm columns to the metrics.
    #[arg(long)]
    trace_layers: bool,
    /// Record elapsed wall time (makes reruns differ in that column).
    #[arg(long)]
    timing: bool,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[arg(required = true, num_args = 2..)]
    files: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    loss_threshold: f64,
    #[arg(long)]
    acc_threshold: Option<f64>,
    /// Write the JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Stamp reports with the current time (the output then differs per run).
    #[arg(long)]
    timestamp: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum)]
enum DataFormat {
    Csv,
    Idx,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, value_enum, default_value_t = DataFormat::Csv)]
    format: DataFormat,
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| BenchError::Config(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
    // A second call in one process finds the pool already built; keep it.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| BenchError::io(p, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            match writeln!(stdout, "{text}") {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(BenchError::io(Path::new("<stdout>"), e)),
                _ => Ok(()),
            }
        }
    }
}

fn cmd_run(args: &RunArgs) -> Result<i32> {
    let cfg = args.config.resolve()?;
    let opts = RunOptions {
        resume: args.resume.clone(),
        stop_after: args.stop_after,
        trace_layers: args.trace_layers,
        timing: args.timing,
    };
    let s = runner::run(&cfg, &opts)?;
    if s.aborted {
        eprintln!("run aborted: non-finite loss after step {}", s.steps);
        return Ok(1);
    }
    match s.final_test {
        Some(e) => println!(
            "{} steps, test loss {:.4}, test acc {:.4}, output in {}",
            s.steps,
            e.loss,
            e.acc,
            s.out_dir.display()
        ),
        None => println!("{} steps, output in {}", s.steps, s.out_dir.display()),
    }
    Ok(0)
}

fn cmd_compare(args: &CompareArgs) -> Result<i32> {
    if !args.files.len().is_multiple_of(2) {
        return Err(BenchError::Config("compare takes metrics files in pairs".into()));
    }
    let th = Thresholds {
        train_loss: args.loss_threshold,
        test_acc: args.acc_threshold,
    };
    let mut pairs = Vec::new();
    for pair in args.files.chunks(2) {
        pairs.push((MetricsTable::read(&pair[0])?, MetricsTable::read(&pair[1])?));
    }
    let value = if pairs.len() == 1 {
        compare::compare_tables(&pairs[0].0, &pairs[0].1, &th)?
    } else {
        compare::compare_pairs(&pairs, &th)?
    };
    let text = serde_json::to_string_pretty(&value).expect("json");
    write_output(args.out.as_deref(), &text)?;
    Ok(0)
}

fn cmd_verify(args: &VerifyArgs) -> Result<i32> {
    let stamp = args.timestamp.then(|| chrono::Utc::now().to_rfc3339());
    let reports = report::run_suite(args.seed, stamp)?;
    for r in &reports {
        let status = if r.passed() { "PASS" } else { "FAIL" };
        eprintln!("{status} {} ({} checks)", r.name, r.checks.len());
        for c in r.failures() {
            eprintln!("    {}: measured {:e}, bound {:e}", c.description, c.measured, c.bound);
        }
    }
    let text = serde_json::to_string_pretty(&report::suite_json(&reports)).expect("json");
    write_output(args.out.as_deref(), &text)?;
    Ok(if reports.iter().all(|r| r.passed()) { 0 } else { 1 })
}

fn cmd_gen_data(args: &GenArgs) -> Result<i32> {
    let cfg = args.config.resolve()?;
    let DatasetSource::Synthetic(spec) = cfg.dataset_source()? else {
        return Err(BenchError::Config("gen-data needs dataset = \"synthetic\"".into()));
    };
    let d = data::generate_synthetic(&spec)?;
    let out = Path::new(&cfg.out);
    fs::create_dir_all(out).map_err(|e| BenchError::io(out, e))?;
    match args.format {
        DataFormat::Csv => {
            let path = out.join("data.csv");
            data::write_csv(&path, &d)?;
            println!("{}", path.display());
        }
        DataFormat::Idx => {
            let (images, labels) = (out.join("images.idx"), out.join("labels.idx"));
            data::write_idx_pair(&images, &labels, &d)?;
            println!("{}\n{}", images.display(), labels.display());
        }
    }
    Ok(0)
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit status.
pub fn main<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Verify(a) => cmd_verify(a),
        Command::GenData(a) => cmd_gen_data(a),
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
