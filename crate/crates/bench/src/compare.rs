//! The `compare` command: signed differences between two metrics files.
//!
//! Every signed value is `b − a`, so swapping the inputs negates it.

use serde_json::{json, Map, Value};

use crate::error::{BenchError, Result};
use crate::metrics::{MetricsTable, Record, Split};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    /// Epochs until the epoch-mean training loss is at most this.
    pub train_loss: f64,
    /// Epochs until test accuracy is at least this.
    pub test_acc: Option<f64>,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            train_loss: 0.5,
            test_acc: None,
        }
    }
}

fn check_schema(a: &MetricsTable, b: &MetricsTable) -> Result<()> {
    if a.header != b.header {
        return Err(BenchError::Schema("headers differ".into()));
    }
    if a.records.len() != b.records.len() {
        return Err(BenchError::Schema(format!(
            "{} rows vs {} rows",
            a.records.len(),
            b.records.len()
        )));
    }
    for (i, (x, y)) in a.records.iter().zip(&b.records).enumerate() {
        if (x.epoch, x.step, x.split) != (y.epoch, y.step, y.split) {
            return Err(BenchError::Schema(format!(
                "row {} differs in position: ({}, {}, {}) vs ({}, {}, {})",
                i + 1,
                x.epoch,
                x.step,
                x.split.as_str(),
                y.epoch,
                y.step,
                y.split.as_str()
            )));
        }
    }
    Ok(())
}

fn series(a: &MetricsTable, b: &MetricsTable, split: Split, f: fn(&Record) -> Option<f64>) -> Option<Value> {
    let pairs: Vec<(f64, f64)> = a
        .split(split)
        .zip(b.split(split))
        .filter_map(|(x, y)| Some((f(x)?, f(y)?)))
        .collect();
    let &(last_a, last_b) = pairs.last()?;
    let deltas: Vec<f64> = pairs.iter().map(|(x, y)| y - x).collect();
    let mean = deltas.iter().sum::<f64>() / deltas.len() as f64;
    let max_abs = deltas.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    Some(json!({
        "final_a": last_a,
        "final_b": last_b,
        "final_delta": last_b - last_a,
        "mean_delta": mean,
        "max_abs_delta": max_abs,
        "rows": pairs.len(),
    }))
}

/// First epoch whose row passes `pass`, if any.
pub fn epochs_to(t: &MetricsTable, split: Split, pass: impl Fn(&Record) -> bool) -> Option<u32> {
    t.split(split).find(|r| r.epoch > 0 && pass(r)).map(|r| r.epoch)
}

fn threshold_entry(a: Option<u32>, b: Option<u32>, threshold: f64) -> Value {
    let delta = match (a, b) {
        (Some(x), Some(y)) => json!(y as i64 - x as i64),
        _ => Value::Null,
    };
    json!({ "threshold": threshold, "a": a, "b": b, "delta": delta })
}

type Field = fn(&Record) -> Option<f64>;

/// Compares one pair of already-parsed metrics tables.
pub fn compare_tables(a: &MetricsTable, b: &MetricsTable, th: &Thresholds) -> Result<Value> {
    check_schema(a, b)?;
    let mut metrics = Map::new();
    let fields: [(&str, Field); 4] = [
        ("loss", |r| Some(r.loss)),
        ("acc", |r| Some(r.acc)),
        ("grad_l2_total", |r| r.grad_l2),
        ("grad_max_total", |r| r.grad_max),
    ];
    for split in [Split::Batch, Split::Train, Split::Test] {
        let mut m = Map::new();
        for (name, f) in fields {
            if let Some(v) = series(a, b, split, f) {
                m.insert(name.to_string(), v);
            }
        }
        if !m.is_empty() {
            metrics.insert(split.as_str().to_string(), Value::Object(m));
        }
    }
    let mut thresholds = Map::new();
    let loss = |t: &MetricsTable| epochs_to(t, Split::Train, |r| r.loss <= th.train_loss);
    thresholds.insert(
        "epochs_to_train_loss".into(),
        threshold_entry(loss(a), loss(b), th.train_loss),
    );
    if let Some(acc) = th.test_acc {
        let f = |t: &MetricsTable| epochs_to(t, Split::Test, |r| r.acc >= acc);
        thresholds.insert("epochs_to_test_acc".into(), threshold_entry(f(a), f(b), acc));
    }
    Ok(json!({
        "aborted_a": a.aborted(),
        "aborted_b": b.aborted(),
        "metrics": metrics,
        "thresholds": thresholds,
    }))
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

/// Compares each `(a, b)` pair and, over all pairs, reports medians of the
/// final test-accuracy delta and the epochs-to-loss delta.
pub fn compare_pairs(pairs: &[(MetricsTable, MetricsTable)], th: &Thresholds) -> Result<Value> {
    let mut out = Vec::with_capacity(pairs.len());
    for (a, b) in pairs {
        out.push(compare_tables(a, b, th)?);
    }
    let acc_deltas: Vec<f64> = out
        .iter()
        .filter_map(|v| v["metrics"]["test"]["acc"]["final_delta"].as_f64())
        .collect();
    let epoch_deltas: Vec<f64> = out
        .iter()
        .filter_map(|v| v["thresholds"]["epochs_to_train_loss"]["delta"].as_f64())
        .collect();
    let summary = json!({
        "pairs": pairs.len(),
        "median_final_test_acc_delta": median(acc_deltas.clone()),
        "b_better_final_test_acc": acc_deltas.iter().filter(|d| **d > 0.0).count(),
        "a_better_final_test_acc": acc_deltas.iter().filter(|d| **d < 0.0).count(),
        "median_epochs_to_train_loss_delta": median(epoch_deltas.clone()),
        "pairs_reaching_train_loss_in_both": epoch_deltas.len(),
    });
    Ok(json!({ "pairs": out, "summary": summary }))
}
