//! JSON form of the verification suite, and the CSV form of gradient-norm traces.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use gcopt_core::verify::{self, NormTrace, TheoremReport};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::error::{BenchError, Result};

pub fn report_json(r: &TheoremReport) -> Value {
    let checks: Vec<Value> = r
        .checks
        .iter()
        .map(|c| {
            json!({
                "description": c.description,
                "measured": c.measured,
                "bound": bound_json(c.bound),
                "pass": c.pass,
            })
        })
        .collect();
    json!({
        "name": r.name,
        "seed": r.seed,
        "timestamp": r.timestamp,
        "passed": r.passed(),
        "checks": checks,
    })
}

// JSON has no infinity; unasserted checks carry the string instead.
fn bound_json(b: f64) -> Value {
    if b.is_infinite() {
        json!("inf")
    } else {
        json!(b)
    }
}

/// One unit of the default suite. Units are independent and may run in any
/// order; results come back in suite order.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Unit {
    Projection,
    Norm,
    Hessian,
    Invariance(u64),
    AdamInvariance,
}

fn run_unit(unit: Unit, seed: u64) -> gcopt_core::Result<TheoremReport> {
    match unit {
        Unit::Projection => verify::check_projection_algebra(&[1, 2, 3, 17, 4096], 100, seed),
        Unit::Norm => {
            let shapes = [(1, 1), (2, 3), (3, 1), (9, 4), (17, 2), (64, 8), (147, 3)];
            verify::check_norm_reduction(&shapes, 10_000usize.div_ceil(shapes.len()), seed)
        }
        Unit::Hessian => verify::check_hessian_contraction(64, 100, seed),
        Unit::Invariance(k) => verify::check_output_invariance(
            &verify::InvarianceSetup::default(),
            &[1, 50, 200],
            &[0.0, 0.5, -2.0],
            seed.wrapping_add(k),
        ),
        Unit::AdamInvariance => verify::check_output_invariance(
            &verify::InvarianceSetup {
                kind: gcopt_core::OptimizerKind::Adam,
                lr: 0.01,
                ..Default::default()
            },
            &[1, 50, 200],
            &[0.5, -2.0],
            seed,
        ),
    }
}

/// Runs the suite on the current rayon pool.
pub fn run_suite(seed: u64, timestamp: Option<String>) -> Result<Vec<TheoremReport>> {
    let mut units = vec![Unit::Projection, Unit::Norm, Unit::Hessian];
    units.extend((0..10).map(Unit::Invariance));
    units.push(Unit::AdamInvariance);
    let reports: gcopt_core::Result<Vec<TheoremReport>> = units.par_iter().map(|&u| run_unit(u, seed)).collect();
    let mut reports = reports?;
    for r in &mut reports {
        r.timestamp = timestamp.clone();
    }
    Ok(reports)
}

pub fn suite_json(reports: &[TheoremReport]) -> Value {
    json!({
        "passed": reports.iter().all(TheoremReport::passed),
        "reports": reports.iter().map(report_json).collect::<Vec<_>>(),
    })
}

/// One row per (step, layer): raw and applied norms of both arms side by side.
pub fn norm_trace_csv(t: &NormTrace) -> String {
    let mut out = String::from(
        "step,layer,first_raw_l2,first_raw_max,first_applied_l2,first_applied_max,\
         second_raw_l2,second_raw_max,second_applied_l2,second_applied_max\n",
    );
    for (i, step) in t.steps.iter().enumerate() {
        for (l, name) in t.layers.iter().enumerate() {
            let (a, b) = (t.first[i][l], t.second[i][l]);
            let _ = writeln!(
                out,
                "{step},{name},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                a.raw_l2, a.raw_max, a.applied_l2, a.applied_max, b.raw_l2, b.raw_max, b.applied_l2, b.applied_max
            );
        }
    }
    out
}

pub fn write_norm_trace(path: &Path, t: &NormTrace) -> Result<()> {
    fs::write(path, norm_trace_csv(t)).map_err(|e| BenchError::io(path, e))
}
