use std::fs;

use gcopt::config::ExperimentConfig;
use gcopt::metrics::{MetricsTable, Split};
use gcopt::runner::{self, RunOptions};

fn config(out: &std::path::Path, gc: bool) -> ExperimentConfig {
    ExperimentConfig {
        model: "dense:12,relu,dense:4".into(),
        classes: 4,
        samples_per_class: 30,
        input_dim: 6,
        spread: 2.0,
        epochs: 3,
        batch_size: 10,
        weight_decay: 1e-3,
        gc,
        log_every: 4,
        out: out.to_string_lossy().into_owned(),
        ..Default::default()
    }
}

#[test]
fn resume_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let full = runner::run(&config(&dir.path().join("full"), true), &RunOptions::default()).unwrap();
    let full_csv = fs::read_to_string(full.metrics_path()).unwrap();

    // 96 training samples → 10 batches per epoch; stop mid-epoch 2.
    for stop in [13, 10, 1] {
        let first_dir = dir.path().join(format!("first{stop}"));
        let first = runner::run(
            &config(&first_dir, true),
            &RunOptions {
                stop_after: Some(stop),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(first.steps, stop);
        let rest = runner::run(
            &config(&dir.path().join(format!("rest{stop}")), true),
            &RunOptions {
                resume: Some(first.checkpoint_path()),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(rest.steps, full.steps);
        assert_eq!(
            fs::read(rest.checkpoint_path()).unwrap(),
            fs::read(full.checkpoint_path()).unwrap(),
            "stop after {stop}"
        );
        // The two partial CSVs, minus the second header, are the full CSV.
        let a = fs::read_to_string(first.metrics_path()).unwrap();
        let b = fs::read_to_string(rest.metrics_path()).unwrap();
        let joined = format!("{a}{}", b.split_once('\n').unwrap().1);
        assert_eq!(joined, full_csv, "stop after {stop}");
    }
}

#[test]
fn gc_arms_agree_until_the_first_step() {
    let dir = tempfile::tempdir().unwrap();
    let on = runner::run(&config(&dir.path().join("on"), true), &RunOptions::default()).unwrap();
    let off = runner::run(&config(&dir.path().join("off"), false), &RunOptions::default()).unwrap();
    let on = MetricsTable::read(&on.metrics_path()).unwrap();
    let off = MetricsTable::read(&off.metrics_path()).unwrap();
    assert_eq!(on.records[0], off.records[0]);
    assert_eq!(on.records[0].split, Split::Test);
    // Generic data gives gradient columns with nonzero means: the arms split.
    assert_ne!(on.records.last(), off.records.last());
}

#[test]
fn gc_is_inert_when_gradient_columns_are_mean_free() {
    // All-zero features make every weight gradient zero, so GC has nothing
    // to remove and both arms must coincide bit for bit.
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("zeros.csv");
    let mut text = String::from("a,b,c,label\n");
    for i in 0..40 {
        text.push_str(&format!("0,0,0,{}\n", i % 4));
    }
    fs::write(&data, text).unwrap();
    let mut csv = Vec::new();
    for gc in [true, false] {
        let mut cfg = config(&dir.path().join(format!("gc{gc}")), gc);
        cfg.dataset = format!("csv:{}", data.display());
        let s = runner::run(&cfg, &RunOptions::default()).unwrap();
        csv.push(fs::read(s.metrics_path()).unwrap());
    }
    assert_eq!(csv[0], csv[1]);
}

#[test]
fn non_finite_loss_aborts_with_a_flagged_row() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(&dir.path().join("boom"), false);
    cfg.lr = 1e30;
    cfg.momentum_form = "classic".into();
    cfg.epochs = 50;
    let s = runner::run(&cfg, &RunOptions::default()).unwrap();
    assert!(s.aborted);
    let t = MetricsTable::read(&s.metrics_path()).unwrap();
    let last = t.records.last().unwrap();
    assert_eq!(last.split, Split::Aborted);
    assert!(!last.loss.is_finite());
    assert!(t.records[..t.records.len() - 1].iter().all(|r| r.loss.is_finite()));
    assert!(!s.checkpoint_path().exists());
}

#[test]
fn timing_is_opt_in() {
    let dir = tempfile::tempdir().unwrap();
    let s = runner::run(&config(&dir.path().join("plain"), true), &RunOptions::default()).unwrap();
    let t = MetricsTable::read(&s.metrics_path()).unwrap();
    assert!(t.records.iter().all(|r| r.wall_ms == 0));
    assert_eq!(t.split(Split::Batch).count() as u64, s.steps / 4);
}
