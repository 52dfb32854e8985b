//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Criteria run one after another so the overhead measurement sees an
//! otherwise idle process. Each line also reports elapsed time against its
//! budget; going over budget fails the criterion.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use gcopt::compare::epochs_to;
use gcopt::config::ExperimentConfig;
use gcopt::data::{self, SampleShape, SyntheticSpec};
use gcopt::metrics::{MetricsTable, Split};
use gcopt::report;
use gcopt::runner::{self, RunOptions};
use gcopt_core::gc::Unfolding;
use gcopt_core::nn::{fd_gradient_check, softmax_ce, InitScheme, LayerSpec, Model};
use gcopt_core::train::{Dataset, LrSchedule, Trainer};
use gcopt_core::verify::{self, InvarianceSetup, RunSpec, TheoremReport};
use gcopt_core::{
    DecayMode, GcPolicy, MomentumForm, OptimizerConfig, OptimizerKind, OptimizerState, RngStream, Scalar, Tensor,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn failures(r: &TheoremReport) -> String {
    let f: Vec<String> = r
        .failures()
        .map(|c| format!("{} = {:e} > {:e}", c.description, c.measured, c.bound))
        .collect();
    if f.is_empty() {
        String::new()
    } else {
        format!(" FAILED: {}", f.join("; "))
    }
}

fn worst(r: &TheoremReport, key: &str) -> f64 {
    r.checks
        .iter()
        .filter(|c| c.description.contains(key))
        .map(|c| c.measured)
        .fold(0.0, f64::max)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn cast_dataset(d: &Dataset<f32>) -> Dataset<f64> {
    Dataset::new(d.features.cast(), d.labels.clone(), d.classes).unwrap()
}

// Projection algebra

fn projection_algebra() -> Outcome {
    let r = verify::check_projection_algebra(&[1, 2, 3, 17, 4096], 100, 1).unwrap();
    outcome(
        r.passed(),
        format!(
            "M in {{1,2,3,17,4096}}: max |P-Pᵀ| {:e}, max |P²-P| {:e}, max |1ᵀPg|/‖g‖ {:e}{}",
            worst(&r, "P - Pᵀ"),
            worst(&r, "P² - P"),
            worst(&r, "1ᵀPg"),
            failures(&r)
        ),
    )
}

// Norm identity

fn norm_identity() -> Outcome {
    // Vectors (N = 1) and matrices; 10 010 gradients.
    let shapes = [
        (1, 1),
        (2, 1),
        (3, 1),
        (64, 1),
        (2, 3),
        (9, 4),
        (17, 2),
        (64, 8),
        (147, 3),
        (576, 2),
    ];
    let r = verify::check_norm_reduction(&shapes, 1001, 2).unwrap();
    outcome(
        r.passed(),
        format!(
            "identity relative error {:e} (≤ 1e-10), {} violations of ‖Pg‖ ≤ ‖g‖{}",
            r.checks[0].measured,
            r.checks[1].measured,
            failures(&r)
        ),
    )
}

// Hessian contraction

fn hessian_contraction() -> Outcome {
    let r = verify::check_hessian_contraction(64, 100, 3).unwrap();
    outcome(
        r.passed(),
        format!(
            "100 × 64×64: max σ(PH)/σ(H) {:.9} (≤ 1+1e-8), Frobenius relative error {:e} (≤ 1e-9){}",
            r.checks[0].measured,
            r.checks[1].measured,
            failures(&r)
        ),
    )
}

// Output invariance

fn output_invariance() -> Outcome {
    let reports: Vec<TheoremReport> = (0..10)
        .map(|seed| {
            verify::check_output_invariance(&InvarianceSetup::default(), &[1, 50, 200], &[0.0, 0.5, -2.0], seed)
                .unwrap()
        })
        .collect();
    let shift = reports.iter().map(|r| worst(r, "γ1ᵀw⁰|")).fold(0.0, f64::max);
    let drift = reports.iter().map(|r| worst(r, "1ᵀwᵗ")).fold(0.0, f64::max);
    let bad: String = reports.iter().map(failures).collect();
    outcome(
        reports.iter().all(TheoremReport::passed),
        format!("10 seeds × 200 steps: max shift error {shift:e}, max |1ᵀwᵗ − 1ᵀw⁰| {drift:e} (≤ 1e-8){bad}"),
    )
}

// Optimizer trajectories

fn trajectory(cfg: &OptimizerConfig, w0: [f64; 2], grads: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut w = w0;
    let mut st = OptimizerState::new("w", 2);
    grads
        .iter()
        .map(|g| {
            // One output unit with fan-in 2, so GC is active.
            cfg.step(&mut w, g, &mut st, Some(Unfolding::fc(2, 1))).unwrap();
            w
        })
        .collect()
}

fn max_err(got: &[[f64; 2]], want: &[[f64; 2]]) -> f64 {
    got.iter()
        .zip(want)
        .flat_map(|(g, w)| [(g[0] - w[0]).abs(), (g[1] - w[1]).abs()])
        .fold(0.0, f64::max)
}

fn optimizer_fidelity() -> Outcome {
    let sgdm = OptimizerConfig::new(OptimizerKind::Sgdm, 0.1)
        .with_momentum(0.9)
        .with_gc(GcPolicy::default());
    let adam = OptimizerConfig::new(OptimizerKind::Adam, 0.001)
        .with_betas(0.9, 0.999)
        .with_eps(1e-8)
        .with_gc(GcPolicy::default());
    let s = trajectory(&sgdm, [1.0, 1.0], &[[1.0, 3.0], [-2.0, 0.5], [4.0, 4.5]]);
    let a = trajectory(&adam, [1.0, 2.0], &[[2.0, 4.0], [0.5, -1.0], [3.0, 3.5]]);
    // Worked by hand for one step; exact rational (SGDM) and 50-digit
    // (Adam) scalar arithmetic for three.
    let s_ref = [[1.01, 0.99], [1.0315, 0.9685], [1.05335, 0.94665]];
    let a_ref = [
        [1.000_999_999_990_000_1, 1.999_000_000_009_999_9],
        [1.001_089_324_996_394_6, 1.998_910_675_003_605_4],
        [1.001_282_410_982_702_8, 1.998_717_589_017_297_2],
    ];
    let one = max_err(&s[..1], &s_ref[..1]).max(max_err(&a[..1], &[[1.001, 1.999]]));
    let three = max_err(&s, &s_ref).max(max_err(&a, &a_ref));
    outcome(
        one <= 1e-9 && three <= 1e-9,
        format!(
            "SGDM w¹ = {:?}, Adam w¹ = {:?}; 1-step error {one:e}, 3-step error {three:e} (≤ 1e-9)",
            s[0], a[0]
        ),
    )
}

// Gradient check

fn gradient_check() -> Outcome {
    let mut rng = RngStream::new(6);
    let specs = LayerSpec::parse_list("conv:4:3:1:1,bn,relu,flatten,dense:5").unwrap();
    let model = Model::<f64>::build(&specs, &[3, 6, 6], InitScheme::KaimingNormal, &mut rng).unwrap();
    let x = Tensor::from_vec(&[4, 3, 6, 6], (0..4 * 3 * 36).map(|_| rng.normal()).collect()).unwrap();
    let targets = [0usize, 3, 1, 4];
    let loss = |y: &Tensor<f64>| softmax_ce(y, &targets);
    let r = fd_gradient_check(&model, &x, &loss, 1e-5, 1e-4).unwrap();
    let skipped: usize = r.tensors.iter().map(|t| t.skipped).sum();
    outcome(
        r.passed(),
        format!(
            "conv3×3+BN+ReLU+dense, batch 4: max relative error {:e} (≤ 1e-4) over {} entries, {skipped} kink-filtered",
            r.max_rel_err(),
            r.checked()
        ),
    )
}

// GC-off bit identity

/// Moment buffers of the reference optimizer.
#[derive(Clone)]
struct PlainState<T> {
    t: u64,
    m: Vec<T>,
    v: Vec<T>,
}

impl<T: Scalar> PlainState<T> {
    fn new(n: usize) -> Self {
        PlainState {
            t: 0,
            m: vec![T::ZERO; n],
            v: vec![T::ZERO; n],
        }
    }
}

/// Every update rule written out with no centralization code at all.
fn plain_step<T: Scalar>(cfg: &OptimizerConfig, w: &mut [T], g: &[T], s: &mut PlainState<T>) {
    let mut g = g.to_vec();
    if cfg.decay_mode == DecayMode::CoupledL2 && cfg.weight_decay != 0.0 {
        let wd = T::from_f64(cfg.weight_decay);
        for (gv, &wv) in g.iter_mut().zip(w.iter()) {
            *gv += wd * wv;
        }
    }
    s.t += 1;
    let lr = T::from_f64(cfg.lr);
    match cfg.kind {
        OptimizerKind::Sgdm | OptimizerKind::Sgdw => {
            let beta = T::from_f64(cfg.momentum);
            let one_minus = T::from_f64(1.0 - cfg.momentum);
            for i in 0..w.len() {
                s.m[i] = match cfg.momentum_form {
                    MomentumForm::Paper => beta * s.m[i] + one_minus * g[i],
                    MomentumForm::Classic => beta * s.m[i] + g[i],
                };
                w[i] -= lr * s.m[i];
            }
        }
        OptimizerKind::Adam | OptimizerKind::Adamw => {
            let (b1, b2) = (T::from_f64(cfg.beta1), T::from_f64(cfg.beta2));
            let (c1, c2) = (T::from_f64(1.0 - cfg.beta1), T::from_f64(1.0 - cfg.beta2));
            let bc1 = T::from_f64(1.0 - libm::pow(cfg.beta1, s.t as f64));
            let bc2 = T::from_f64(1.0 - libm::pow(cfg.beta2, s.t as f64));
            let eps = T::from_f64(cfg.eps);
            for i in 0..w.len() {
                s.m[i] = b1 * s.m[i] + c1 * g[i];
                s.v[i] = b2 * s.v[i] + c2 * g[i] * g[i];
                let m_hat = s.m[i] / bc1;
                let v_hat = s.v[i] / bc2;
                w[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        OptimizerKind::Adagrad => {
            let eps = T::from_f64(cfg.eps);
            for i in 0..w.len() {
                s.v[i] += g[i] * g[i];
                w[i] -= lr * g[i] / (s.v[i].sqrt() + eps);
            }
        }
    }
    if cfg.decay_mode == DecayMode::Decoupled && cfg.weight_decay != 0.0 {
        let shrink = T::from_f64(cfg.lr * cfg.weight_decay);
        for wv in w.iter_mut() {
            *wv = *wv - shrink * *wv;
        }
    }
}

fn same_bits<T: Scalar>(a: &[T], b: &[T]) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| x.to_f64().to_bits() == y.to_f64().to_bits())
}

fn embedding_case<T: Scalar>(cfg: &OptimizerConfig, steps: usize, seed: u64) -> bool {
    let mut rng = RngStream::new(seed);
    let u = Unfolding::conv(4, 3, 3, 3);
    let n = u.len();
    let w0: Vec<T> = (0..n).map(|_| T::from_f64(rng.normal())).collect();
    let (mut a, mut b) = (w0.clone(), w0);
    let mut st = OptimizerState::new("w", n);
    let mut plain = PlainState::new(n);
    for _ in 0..steps {
        // Offset gradients: their columns have nonzero means, so an active
        // GC branch would be visible immediately.
        let g: Vec<T> = (0..n).map(|_| T::from_f64(rng.normal() + 0.3)).collect();
        cfg.step(&mut a, &g, &mut st, Some(u)).unwrap();
        plain_step(cfg, &mut b, &g, &mut plain);
        if !same_bits(&a, &b) {
            return false;
        }
    }
    same_bits(&st.m, &plain.m) && same_bits(&st.v, &plain.v)
}

/// A GC-off [`Trainer`] against a hand-written loop that reproduces its
/// initialization and shuffle and updates with [`plain_step`].
fn embedding_end_to_end(cfg: &OptimizerConfig) -> bool {
    let spec = SyntheticSpec {
        classes: 3,
        samples_per_class: 20,
        shape: SampleShape::Image { c: 2, h: 6, w: 6 },
        spread: 1.0,
        seed: 4,
    };
    let d = data::generate_synthetic(&spec).unwrap();
    let layers = LayerSpec::parse_list("conv:4:3:1:1,bn,relu,flatten,dense:8,relu,dense:3").unwrap();
    let (seed, batch) = (11, 16);
    let mut trainer = Trainer::<f32>::new(
        &layers,
        &[2, 6, 6],
        InitScheme::KaimingNormal,
        cfg.clone(),
        LrSchedule::default(),
        batch,
        seed,
    )
    .unwrap();

    let mut rng = RngStream::new(seed);
    let mut model = Model::<f32>::build(&layers, &[2, 6, 6], InitScheme::KaimingNormal, &mut rng).unwrap();
    let mut states: Vec<PlainState<f32>> = model.params().iter().map(|p| PlainState::new(p.value.len())).collect();
    for _ in 0..3 {
        let mut order: Vec<usize> = (0..d.len()).collect();
        rng.shuffle(&mut order);
        for chunk in order.chunks(batch) {
            let ours = trainer.next_step(&d, false).unwrap().unwrap();
            let (x, y) = d.batch(chunk);
            model.set_training(true);
            let (loss, _) = model.loss_and_grad(&x, &y).unwrap();
            if ours.loss.to_bits() != (loss as f64).to_bits() {
                return false;
            }
            for (p, s) in model.params_mut().into_iter().zip(&mut states) {
                let g = p.grad.data().to_vec();
                plain_step(cfg, p.value.data_mut(), &g, s);
            }
        }
        if trainer.next_step(&d, false).unwrap().is_some() {
            return false;
        }
        trainer.end_epoch();
    }
    let params_match = trainer
        .model
        .params()
        .iter()
        .zip(model.params())
        .all(|(p, q)| same_bits(p.value.data(), q.value.data()));
    let buffers_match = trainer
        .model
        .buffers()
        .iter()
        .zip(model.buffers())
        .all(|((_, a), (_, b))| same_bits(a, b));
    params_match && buffers_match
}

fn one_line_embedding() -> Outcome {
    let mut bad = Vec::new();
    let mut cases = 0;
    for kind in [
        OptimizerKind::Sgdm,
        OptimizerKind::Sgdw,
        OptimizerKind::Adagrad,
        OptimizerKind::Adam,
        OptimizerKind::Adamw,
    ] {
        for wd in [0.0, 5e-4] {
            for form in [MomentumForm::Paper, MomentumForm::Classic] {
                let cfg = OptimizerConfig::new(kind, 0.01)
                    .with_weight_decay(wd)
                    .with_momentum_form(form);
                for (dtype, ok) in [
                    ("f32", embedding_case::<f32>(&cfg, 300, 7)),
                    ("f64", embedding_case::<f64>(&cfg, 300, 7)),
                ] {
                    cases += 1;
                    if !ok {
                        bad.push(format!("{} wd={wd} {} {dtype}", kind.name(), form.name()));
                    }
                }
            }
        }
    }
    let runs = [
        OptimizerConfig::new(OptimizerKind::Sgdm, 0.05).with_weight_decay(5e-4),
        OptimizerConfig::new(OptimizerKind::Adamw, 0.01).with_weight_decay(1e-2),
    ];
    for cfg in &runs {
        if !embedding_end_to_end(cfg) {
            bad.push(format!("end-to-end {}", cfg.kind.name()));
        }
    }
    let detail = if bad.is_empty() {
        String::new()
    } else {
        format!(" FAILED: {}", bad.join(", "))
    };
    outcome(
        bad.is_empty(),
        format!(
            "{cases} optimizer/decay/momentum/dtype cases × 300 steps and {} CNN training runs bit-identical with GC off{detail}",
            runs.len()
        ),
    )
}

// Training contrast

fn contrast_config(seed: u64, gc: bool, out: &Path) -> ExperimentConfig {
    ExperimentConfig {
        model: "dense:128,relu,dense:128,relu,dense:10".into(),
        optimizer: "sgdm".into(),
        momentum_form: "paper".into(),
        lr: 0.1,
        momentum: 0.9,
        weight_decay: 5e-4,
        gc,
        epochs: 60,
        batch_size: 64,
        classes: 10,
        samples_per_class: 500,
        input_dim: 64,
        spread: 3.0,
        seed,
        data_seed: seed,
        log_every: 1000,
        out: out.to_string_lossy().into_owned(),
        ..Default::default()
    }
}

fn median_epochs(v: &[Option<u32>]) -> Option<f64> {
    let m = median(v.iter().map(|e| e.map_or(f64::INFINITY, f64::from)).collect());
    m.is_finite().then_some(m)
}

fn training_contrast() -> Outcome {
    let dir = scratch("contrast");
    let results: Vec<(Option<u32>, f64, Option<u32>, f64)> = (0..10u64)
        .into_par_iter()
        .map(|seed| {
            let arm = |gc: bool| {
                let out = dir.join(format!("seed{seed}-{}", if gc { "gc" } else { "base" }));
                let summary = runner::run(&contrast_config(seed, gc, &out), &RunOptions::default()).unwrap();
                let table = MetricsTable::read(&summary.metrics_path()).unwrap();
                let epochs = epochs_to(&table, Split::Train, |r| r.loss <= 0.5);
                let acc = table.split(Split::Test).last().unwrap().acc;
                (epochs, acc)
            };
            let (e0, a0) = arm(false);
            let (e1, a1) = arm(true);
            (e0, a0, e1, a1)
        })
        .collect();
    let base_epochs: Vec<Option<u32>> = results.iter().map(|r| r.0).collect();
    let gc_epochs: Vec<Option<u32>> = results.iter().map(|r| r.2).collect();
    let base_acc = median(results.iter().map(|r| r.1).collect());
    let gc_acc = median(results.iter().map(|r| r.3).collect());
    let (mb, mg) = (median_epochs(&base_epochs), median_epochs(&gc_epochs));
    let faster = match (mg, mb) {
        (_, None) => true,
        (Some(g), Some(b)) => g <= b,
        (None, Some(_)) => false,
    };
    let not_worse = gc_acc >= base_acc - 0.005;
    let in_band = (0.70..=0.90).contains(&base_acc);
    let show = |m: Option<f64>| m.map_or("never".to_string(), |v| format!("{v}"));
    outcome(
        faster && not_worse,
        format!(
            "10 seeds: median epochs to train loss 0.5 GC {} vs base {} ({}); median final test acc GC {:.4} vs base {:.4} (delta {:+.4}, {}); baseline {} the 70–90% band",
            show(mg),
            show(mb),
            if faster { "ok" } else { "FAILED" },
            gc_acc,
            base_acc,
            gc_acc - base_acc,
            if not_worse { "ok" } else { "FAILED" },
            if in_band { "inside" } else { "outside" },
        ),
    )
}

// GC overhead

fn overhead() -> Outcome {
    let cfg = contrast_config(0, false, Path::new("unused"));
    let (train, _) = runner::load_data::<f32>(&cfg).unwrap();
    let dims = train.sample_dims().to_vec();
    let mut base = runner::build_trainer::<f32>(&cfg, &dims).unwrap();
    let mut with_gc = runner::build_trainer::<f32>(
        &ExperimentConfig {
            gc: true,
            ..cfg.clone()
        },
        &dims,
    )
    .unwrap();
    let block = |t: &mut Trainer<f32>, steps: usize| {
        let start = Instant::now();
        let mut done = 0;
        while done < steps {
            if t.next_step(&train, false).unwrap().is_some() {
                done += 1;
            } else {
                t.end_epoch();
            }
        }
        start.elapsed().as_secs_f64() / steps as f64
    };
    block(&mut base, 100);
    block(&mut with_gc, 100);
    let (mut tb, mut tg) = (Vec::new(), Vec::new());
    for round in 0..200 {
        // Alternate which arm goes first to cancel drift within a round.
        if round % 2 == 0 {
            tb.push(block(&mut base, 10));
            tg.push(block(&mut with_gc, 10));
        } else {
            tg.push(block(&mut with_gc, 10));
            tb.push(block(&mut base, 10));
        }
    }
    let (mb, mg) = (median(tb), median(tg));
    let ratio = mg / mb;
    outcome(
        ratio <= 1.05,
        format!(
            "training-contrast MLP, 2000 interleaved steps per arm: median step {:.1} µs with GC vs {:.1} µs without, ratio {ratio:.4} (≤ 1.05)",
            mg * 1e6,
            mb * 1e6
        ),
    )
}

// Determinism and resume

fn persistence() -> Outcome {
    let dir = scratch("persistence");
    let cfg = |name: &str| ExperimentConfig {
        epochs: 4,
        log_every: 7,
        dtype: "f64".into(),
        ..contrast_config(3, true, &dir.join(name))
    };
    let opts = |resume: Option<PathBuf>, stop_after: Option<u64>| RunOptions {
        resume,
        stop_after,
        ..Default::default()
    };
    let mut problems = Vec::new();

    let a = runner::run(&cfg("a"), &RunOptions::default()).unwrap();
    let b = runner::run(&cfg("b"), &RunOptions::default()).unwrap();
    let csv_a = fs::read(a.metrics_path()).unwrap();
    if csv_a != fs::read(b.metrics_path()).unwrap() {
        problems.push("rerun CSV differs".to_string());
    }
    if fs::read(a.checkpoint_path()).unwrap() != fs::read(b.checkpoint_path()).unwrap() {
        problems.push("rerun checkpoint differs".to_string());
    }

    // 63 steps per epoch. Stop inside epoch 1 and again at an epoch boundary.
    for stop in [100u64, 63] {
        let first = runner::run(&cfg(&format!("first{stop}")), &opts(None, Some(stop))).unwrap();
        // Intermediate match: resume for 50 more steps and compare with an
        // uninterrupted run stopped at the same step.
        let straight = runner::run(&cfg(&format!("straight{stop}")), &opts(None, Some(stop + 50))).unwrap();
        let part = runner::run(
            &cfg(&format!("part{stop}")),
            &opts(Some(first.checkpoint_path()), Some(50)),
        )
        .unwrap();
        if part.steps != stop + 50
            || fs::read(part.checkpoint_path()).unwrap() != fs::read(straight.checkpoint_path()).unwrap()
        {
            problems.push(format!("state after resume at {stop} + 50 steps differs"));
        }
        let rest = runner::run(&cfg(&format!("rest{stop}")), &opts(Some(first.checkpoint_path()), None)).unwrap();
        if fs::read(rest.checkpoint_path()).unwrap() != fs::read(a.checkpoint_path()).unwrap() {
            problems.push(format!("final state after resume at {stop} differs"));
        }
        let head = fs::read_to_string(first.metrics_path()).unwrap();
        let tail = fs::read_to_string(rest.metrics_path()).unwrap();
        let joined = format!("{head}{}", tail.split_once('\n').unwrap().1);
        if joined.as_bytes() != csv_a.as_slice() {
            problems.push(format!("metrics after resume at {stop} differ"));
        }
    }
    outcome(
        problems.is_empty(),
        format!(
            "rerun CSV and checkpoint byte-identical; resume at steps 100 and 63 matches at +50 steps and at the end ({} steps){}",
            a.steps,
            if problems.is_empty() {
                String::new()
            } else {
                format!(" FAILED: {}", problems.join("; "))
            }
        ),
    )
}

// Gradient-norm trace

fn norm_trace() -> Outcome {
    let spec = SyntheticSpec {
        classes: 4,
        samples_per_class: 100,
        shape: SampleShape::Image { c: 1, h: 12, w: 12 },
        spread: 1.0,
        seed: 5,
    };
    let d = cast_dataset(&data::generate_synthetic(&spec).unwrap());
    let (train, _) = data::train_test_split(&d).unwrap();
    let layers = LayerSpec::parse_list("conv:8:3:1:1,relu,conv:8:2:2,relu,flatten,dense:32,relu,dense:4").unwrap();
    let base = RunSpec {
        layers,
        optimizer: OptimizerConfig::new(OptimizerKind::Sgdm, 0.05).with_weight_decay(5e-4),
        batch_size: 32,
        steps: 500,
        seed: 9,
    };
    let gc = RunSpec {
        optimizer: base.optimizer.clone().with_gc(GcPolicy::default()),
        ..base.clone()
    };
    let (trace, r) = verify::trace_gradient_norms(&base, &gc, &train).unwrap();
    let path = scratch("norm_trace").join("norm_trace.csv");
    report::write_norm_trace(&path, &trace).unwrap();
    let ratios: Vec<String> = trace
        .layers
        .iter()
        .zip(trace.median_norm_ratio())
        .zip(trace.median_max_ratio())
        .map(|((name, l2), mx)| format!("{name} {l2:.3}/{mx:.3}"))
        .collect();
    outcome(
        r.passed(),
        format!(
            "small CNN, 500 steps: {} layer-steps with ‖ĝ‖ > ‖g‖, max ratio {:.6}; median GC/base norm ratio (l2/max): {}; trace in {}{}",
            r.checks[0].measured,
            r.checks[1].measured,
            ratios.join(", "),
            path.display(),
            failures(&r)
        ),
    )
}

/// Name, time budget in seconds, check.
type Criterion = (&'static str, u64, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("projection algebra", 5, projection_algebra),
        ("norm identity", 10, norm_identity),
        ("hessian contraction", 10, hessian_contraction),
        ("output invariance", 30, output_invariance),
        ("optimizer fidelity", 1, optimizer_fidelity),
        ("gradient check", 60, gradient_check),
        ("one-line embedding", 30, one_line_embedding),
        ("training contrast", 15 * 60, training_contrast),
        ("gc overhead", 15 * 60, overhead),
        ("determinism and resume", 120, persistence),
        ("gradient norm trace", 5 * 60, norm_trace),
    ];
    let mut failed = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(*budget);
        let pass = o.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "[{}] {:>2}. {name}: {} [{:.2}s / {budget}s{}]",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            elapsed.as_secs_f64(),
            if in_time { "" } else { " OVER BUDGET" }
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
