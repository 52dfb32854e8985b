//! Executable checks of the properties gradient centralization rests on.
//!
//! Every check is a pure function of its arguments and seed: it builds its
//! own data and models and returns a [`TheoremReport`] whose checks carry the
//! measured value next to the bound it was held to.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::gc::{projection_matrix, GradView, Unfolding};
use crate::linalg;
use crate::nn::{InitScheme, LayerSpec, Model};
use crate::optim::{MomentumForm, OptimizerConfig, OptimizerKind, OptimizerState};
use crate::rng::RngStream;
use crate::tensor::Tensor;
use crate::train::{Dataset, LrSchedule, Trainer};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub description: String,
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
}

impl Check {
    /// Passes iff `measured <= bound` (NaN never passes).
    pub fn at_most(description: impl Into<String>, measured: f64, bound: f64) -> Self {
        Check {
            description: description.into(),
            measured,
            bound,
            pass: measured <= bound,
        }
    }

    /// Passes iff `measured >= bound`.
    pub fn at_least(description: impl Into<String>, measured: f64, bound: f64) -> Self {
        Check {
            description: description.into(),
            measured,
            bound,
            pass: measured >= bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoremReport {
    pub name: String,
    pub checks: Vec<Check>,
    pub seed: u64,
    /// Filled in by callers that have a clock; checks leave it empty.
    pub timestamp: Option<String>,
}

impl TheoremReport {
    fn new(name: &str, seed: u64) -> Self {
        TheoremReport {
            name: name.into(),
            checks: Vec::new(),
            seed,
            timestamp: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    fn push(&mut self, check: Check) {
        self.checks.push(check);
    }
}

fn normal_vec(rng: &mut RngStream, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.normal()).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Largest dimension for which `P²` is formed by a dense product; above it,
/// idempotence is probed with random vectors.
const DENSE_SQUARE_LIMIT: usize = 256;
const IDEMPOTENCE_PROBES: usize = 8;

/// `P = I − (1/M)11ᵀ` built explicitly: `P² = P`, `P = Pᵀ`, `trace P = M − 1`
/// and `|1ᵀPg| ≤ 1e-10‖g‖` for `trials` random `g` per `M`.
pub fn check_projection_algebra(m_values: &[usize], trials: usize, seed: u64) -> Result<TheoremReport> {
    let mut report = TheoremReport::new("projection_algebra", seed);
    let mut rng = RngStream::new(seed);
    for &m in m_values {
        if m == 0 {
            return Err(Error::InvalidArgument("M must be >= 1".into()));
        }
        let p = projection_matrix(m);
        let pd = p.data();

        let mut asym = 0.0f64;
        for i in 0..m {
            for j in 0..i {
                asym = asym.max((pd[i * m + j] - pd[j * m + i]).abs());
            }
        }
        report.push(Check::at_most(format!("M={m}: max |P - Pᵀ|"), asym, 0.0));

        let idem = if m <= DENSE_SQUARE_LIMIT {
            let p2 = p.matmul(&p)?;
            p2.data().iter().zip(pd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        } else {
            let k = IDEMPOTENCE_PROBES;
            let v = column_draws(&mut rng, m, k);
            let mut pv = vec![0.0; m * k];
            linalg::gemm_nn(m, m, k, pd, &v, &mut pv);
            let mut ppv = vec![0.0; m * k];
            linalg::gemm_nn(m, m, k, pd, &pv, &mut ppv);
            (0..k)
                .map(|j| {
                    let col = |x: &[f64]| -> Vec<f64> { (0..m).map(|i| x[i * k + j]).collect() };
                    let diff = col(&pv)
                        .iter()
                        .zip(col(&ppv))
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    diff / linalg::norm2(&col(&v))
                })
                .fold(0.0, f64::max)
        };
        report.push(Check::at_most(
            format!("M={m}: max |P² - P| (relative to probe norm above {DENSE_SQUARE_LIMIT})"),
            idem,
            1e-12,
        ));

        let trace: f64 = (0..m).map(|i| pd[i * m + i]).sum();
        report.push(Check::at_most(
            format!("M={m}: |trace P - (M-1)|"),
            (trace - (m as f64 - 1.0)).abs(),
            1e-9,
        ));

        // All draws go through one product: g_j is column j of `g`.
        let g = column_draws(&mut rng, m, trials);
        let mut pg = vec![0.0; m * trials];
        linalg::gemm_nn(m, m, trials, pd, &g, &mut pg);
        let mut worst = 0.0f64;
        for j in 0..trials {
            let (mut sum, mut sq) = (0.0, 0.0);
            for i in 0..m {
                sum += pg[i * trials + j];
                sq += g[i * trials + j] * g[i * trials + j];
            }
            worst = worst.max(libm::fabs(sum) / libm::sqrt(sq));
        }
        report.push(Check::at_most(
            format!("M={m}: max |1ᵀPg| / ‖g‖ over {trials} draws"),
            worst,
            1e-10,
        ));
    }
    Ok(report)
}

/// `count` standard normal vectors of length `m`, stored as the columns of an
/// `m×count` row-major matrix.
fn column_draws(rng: &mut RngStream, m: usize, count: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * count];
    for j in 0..count {
        for i in 0..m {
            out[i * count + j] = rng.normal();
        }
    }
    out
}

/// `‖Pg‖² + (1/M)(1ᵀg)² = ‖g‖²` and `‖Pg‖ ≤ ‖g‖` for random gradient matrices
/// of each `(M, N)` shape, `trials` draws per shape. Columns get random offsets
/// so the removed component is not negligible.
pub fn check_norm_reduction(shapes: &[(usize, usize)], trials: usize, seed: u64) -> Result<TheoremReport> {
    let mut report = TheoremReport::new("norm_reduction", seed);
    let mut rng = RngStream::new(seed);
    let mut worst_identity = 0.0f64;
    let mut violations = 0usize;
    let mut count = 0usize;
    for &(m, n) in shapes {
        let unfolding = Unfolding::fc(m, n);
        for _ in 0..trials {
            let offset = 3.0 * rng.normal();
            let g: Vec<f64> = (0..m * n).map(|_| offset + rng.normal()).collect();
            let mut pg = g.clone();
            GradView::new(&mut pg, unfolding)?.subtract_column_means();
            let g2 = linalg::dot(&g, &g);
            let pg2 = linalg::dot(&pg, &pg);
            let sums = GradView::new(&mut g.clone(), unfolding)?.column_sums();
            let removed: f64 = sums.iter().map(|s| s * s / m as f64).sum();
            worst_identity = worst_identity.max(rel(pg2 + removed, g2));
            if linalg::norm2(&pg) > linalg::norm2(&g) {
                violations += 1;
            }
            count += 1;
        }
    }
    report.push(Check::at_most(
        format!("max relative error of ‖Pg‖² + (1/M)(1ᵀg)² = ‖g‖² over {count} gradients"),
        worst_identity,
        1e-10,
    ));
    report.push(Check::at_most(
        format!("violations of ‖Pg‖ ≤ ‖g‖ over {count} gradients"),
        violations as f64,
        0.0,
    ));
    Ok(report)
}

const POWER_ITERS: usize = 100;
const POWER_TOL: f64 = 1e-10;

/// For random symmetric `H` (`m×m`): `σ_max(PH) ≤ σ_max(H)` by power iteration
/// and `‖PH‖_F² = ‖H‖_F² − ‖eᵀH‖²` exactly (with `e = 1/√m`).
///
/// Power iteration only ever under-estimates. `σ_max(H)` is therefore started
/// from the converged vector of `PH`: since `‖Hv‖ ≥ ‖PHv‖` for every `v` and
/// the estimate never decreases, the comparison cannot fail through slow
/// convergence of the `H` estimate alone.
pub fn check_hessian_contraction(m: usize, trials: usize, seed: u64) -> Result<TheoremReport> {
    if m < 2 {
        return Err(Error::InvalidArgument("m must be >= 2".into()));
    }
    let mut report = TheoremReport::new("hessian_contraction", seed);
    let mut rng = RngStream::new(seed);
    let mut worst_ratio = 0.0f64;
    let mut worst_frob = 0.0f64;
    for _ in 0..trials {
        let a = normal_vec(&mut rng, m * m);
        let mut h = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                h[i * m + j] = 0.5 * (a[i * m + j] + a[j * m + i]);
            }
        }
        // P·H: subtract each column's mean.
        let mut ph = h.clone();
        GradView::new(&mut ph, Unfolding::fc(m, m))?.subtract_column_means();

        let start = normal_vec(&mut rng, m);
        let (sigma_ph, v) = linalg::spectral_norm(&ph, m, m, &start, POWER_ITERS, POWER_TOL);
        let (sigma_h, _) = linalg::spectral_norm(&h, m, m, &v, POWER_ITERS, POWER_TOL);
        worst_ratio = worst_ratio.max(sigma_ph / sigma_h);

        let h_f2 = linalg::dot(&h, &h);
        let ph_f2 = linalg::dot(&ph, &ph);
        let col_sums = GradView::new(&mut h.clone(), Unfolding::fc(m, m))?.column_sums();
        let et_h2: f64 = col_sums.iter().map(|s| s * s).sum::<f64>() / m as f64;
        worst_frob = worst_frob.max(rel(ph_f2, h_f2 - et_h2));
    }
    report.push(Check::at_most(
        format!("max σ_max(PH)/σ_max(H) over {trials} symmetric {m}×{m}"),
        worst_ratio,
        1.0 + 1e-8,
    ));
    report.push(Check::at_most(
        format!("max relative error of ‖PH‖_F² = ‖H‖_F² − ‖eᵀH‖² over {trials}"),
        worst_frob,
        1e-9,
    ));
    Ok(report)
}

/// Setup for [`check_output_invariance`].
#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceSetup {
    pub inputs: usize,
    pub outputs: usize,
    pub batch: usize,
    pub lr: f64,
    pub momentum: f64,
    /// Recenter every initial weight column to mean zero.
    pub centered_init: bool,
    /// The guarantee is for SGD(M). Any other kind is run with GC and its
    /// measurements are reported against an infinite bound.
    pub kind: OptimizerKind,
}

impl Default for InvarianceSetup {
    fn default() -> Self {
        InvarianceSetup {
            inputs: 16,
            outputs: 4,
            batch: 32,
            lr: 0.1,
            momentum: 0.9,
            centered_init: false,
            kind: OptimizerKind::Sgdm,
        }
    }
}

/// Trains one dense layer with SGDM+GC (paper momentum, no decay) on a fixed
/// batch and checks, at each step in `checkpoints` and for every output unit
/// `i` and shift `γ`, that a constant input shift moves the response by an
/// amount fixed at initialization:
///
/// `(wᵢᵗ)ᵀ(x + γ1) − (wᵢᵗ)ᵀx = γ·1ᵀwᵢ⁰`
///
/// within `1e-8`. The response to `x` minus the response to `x + γ1` is the
/// negative of this, and is checked as such. It also checks `1ᵀwᵢᵗ = 1ᵀwᵢ⁰` at
/// every step.
pub fn check_output_invariance(
    setup: &InvarianceSetup,
    checkpoints: &[usize],
    gammas: &[f64],
    seed: u64,
) -> Result<TheoremReport> {
    let mut report = TheoremReport::new("output_invariance", seed);
    let mut rng = RngStream::new(seed);
    let (m, n) = (setup.inputs, setup.outputs);
    let mut model = Model::<f64>::build(
        &[LayerSpec::Dense { out: n }],
        &[m],
        InitScheme::KaimingNormal,
        &mut rng,
    )?;
    if setup.centered_init {
        let w = &mut model.params_mut()[0].value;
        GradView::new(w.data_mut(), Unfolding::fc(m, n))?.subtract_column_means();
    }
    let x = Tensor::from_vec(&[setup.batch, m], normal_vec(&mut rng, setup.batch * m))?;
    let targets: Vec<usize> = (0..setup.batch).map(|_| rng.below(n as u64) as usize).collect();
    let probe = normal_vec(&mut rng, m);

    let bound = if setup.kind == OptimizerKind::Sgdm {
        1e-8
    } else {
        f64::INFINITY
    };
    let cfg = OptimizerConfig::new(setup.kind, setup.lr)
        .with_momentum(setup.momentum)
        .with_momentum_form(MomentumForm::Paper)
        .with_gc(Default::default());
    let unfolding = Unfolding::fc(m, n);
    let column_sums = |model: &Model<f64>| -> Vec<f64> {
        let mut w = model.params()[0].value.data().to_vec();
        GradView::new(&mut w, unfolding).expect("shape").column_sums()
    };
    let sums0 = column_sums(&model);
    let mut states: Vec<OptimizerState<f64>> = model
        .params()
        .iter()
        .map(|p| OptimizerState::new(p.name.clone(), p.value.len()))
        .collect();

    let last = checkpoints.iter().copied().max().unwrap_or(0);
    let mut worst_drift = 0.0f64;
    for step in 1..=last {
        model.loss_and_grad(&x, &targets)?;
        for (p, st) in model.params_mut().into_iter().zip(&mut states) {
            let u = p.unfolding();
            cfg.step(p.value.data_mut(), p.grad.data(), st, u)?;
        }
        for (a, b) in column_sums(&model).iter().zip(&sums0) {
            worst_drift = worst_drift.max((a - b).abs());
        }
        if !checkpoints.contains(&step) {
            continue;
        }
        let w = model.params()[0].value.data();
        for &gamma in gammas {
            let shifted: Vec<f64> = probe.iter().map(|v| v + gamma).collect();
            let mut shift_err = 0.0f64;
            let mut literal_err = 0.0f64;
            for i in 0..n {
                let col: Vec<f64> = (0..m).map(|j| w[j * n + i]).collect();
                let base = linalg::dot(&col, &probe);
                let moved = linalg::dot(&col, &shifted);
                let predicted = gamma * sums0[i];
                shift_err = shift_err.max((moved - base - predicted).abs());
                literal_err = literal_err.max((base - moved + predicted).abs());
            }
            report.push(Check::at_most(
                format!("t={step}, γ={gamma}: max |wᵀ(x+γ1) − wᵀx − γ1ᵀw⁰|"),
                shift_err,
                bound,
            ));
            report.push(Check::at_most(
                format!("t={step}, γ={gamma}: max |(wᵀx − wᵀ(x+γ1)) + γ1ᵀw⁰|"),
                literal_err,
                bound,
            ));
        }
    }
    report.push(Check::at_most(
        format!("max |1ᵀwᵗ − 1ᵀw⁰| over {last} steps"),
        worst_drift,
        bound,
    ));
    Ok(report)
}

/// Per weight column `|mean(wᵢ)|` of every GC-eligible parameter, floored at
/// `1e-300` so a log scale never sees zero.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMeanProfile {
    pub name: String,
    pub abs_means: Vec<f64>,
}

pub const MEAN_FLOOR: f64 = 1e-300;

pub fn weight_mean_profile<T: crate::Scalar>(model: &Model<T>) -> Vec<WeightMeanProfile> {
    model
        .params()
        .iter()
        .filter_map(|p| {
            let u = p.unfolding()?;
            let mut w: Vec<f64> = p.value.data().iter().map(|v| v.to_f64()).collect();
            let sums = GradView::new(&mut w, u).ok()?.column_sums();
            Some(WeightMeanProfile {
                name: p.name.clone(),
                abs_means: sums.iter().map(|s| (s / u.m() as f64).abs().max(MEAN_FLOOR)).collect(),
            })
        })
        .collect()
}

/// One arm of a gradient-norm trace.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub layers: Vec<LayerSpec>,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
}

/// Per-parameter gradient norms at one step; `raw` is the gradient handed to
/// the optimizer, `applied` the one after GC (equal when GC is off).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormSample {
    pub raw_l2: f64,
    pub raw_max: f64,
    pub applied_l2: f64,
    pub applied_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormTrace {
    /// Names of the traced parameters (the GC-eligible weights).
    pub layers: Vec<String>,
    pub steps: Vec<u64>,
    /// `first[step][layer]`, for the first spec of the pair.
    pub first: Vec<Vec<NormSample>>,
    pub second: Vec<Vec<NormSample>>,
}

impl NormTrace {
    /// Median over steps of `raw_l2(second) / raw_l2(first)` per layer.
    pub fn median_norm_ratio(&self) -> Vec<f64> {
        self.median_ratio(|s| s.raw_l2)
    }

    /// Same as [`median_norm_ratio`](Self::median_norm_ratio) for max-abs.
    pub fn median_max_ratio(&self) -> Vec<f64> {
        self.median_ratio(|s| s.raw_max)
    }

    fn median_ratio(&self, f: impl Fn(&NormSample) -> f64) -> Vec<f64> {
        (0..self.layers.len())
            .map(|l| {
                let mut r: Vec<f64> = self
                    .second
                    .iter()
                    .zip(&self.first)
                    .map(|(b, a)| f(&b[l]) / f(&a[l]))
                    .collect();
                r.sort_by(f64::total_cmp);
                r.get(r.len() / 2).copied().unwrap_or(f64::NAN)
            })
            .collect()
    }
}

fn trace_arm(spec: &RunSpec, data: &Dataset<f64>) -> Result<(Vec<String>, Vec<Vec<NormSample>>)> {
    let mut trainer = Trainer::new(
        &spec.layers,
        data.sample_dims(),
        InitScheme::KaimingNormal,
        spec.optimizer.clone(),
        LrSchedule::default(),
        spec.batch_size,
        spec.seed,
    )?;
    let eligible: Vec<String> = trainer
        .model
        .params()
        .iter()
        .filter(|p| p.gc_eligible())
        .map(|p| p.name.clone())
        .collect();
    let mut rows = Vec::with_capacity(spec.steps);
    while rows.len() < spec.steps {
        let Some(outcome) = trainer.next_step(data, true)? else {
            trainer.end_epoch();
            continue;
        };
        if !outcome.loss.is_finite() {
            return Err(Error::Data("non-finite loss while tracing".into()));
        }
        let row = outcome
            .per_param
            .iter()
            .filter(|(name, _)| eligible.contains(name))
            .map(|(_, s)| NormSample {
                raw_l2: s.raw_l2,
                raw_max: s.raw_max,
                applied_l2: s.centered_l2,
                applied_max: s.centered_max,
            })
            .collect();
        rows.push(row);
    }
    Ok((eligible, rows))
}

/// Trains both specs on `data` and records per-layer gradient norms at every
/// step. Usually `first` has GC off and `second` on.
///
/// The specs must differ in nothing but the GC setting. The only assertion is
/// the per-application inequality `‖ĝ‖ ≤ ‖g‖` in whichever arms run GC; the
/// comparison across the two trajectories is descriptive.
pub fn trace_gradient_norms(
    first: &RunSpec,
    second: &RunSpec,
    data: &Dataset<f64>,
) -> Result<(NormTrace, TheoremReport)> {
    let strip = |s: &RunSpec| {
        let mut s = s.clone();
        s.optimizer.gc = None;
        s
    };
    if strip(first) != strip(second) {
        return Err(Error::InvalidPair("specs differ in more than the GC setting".into()));
    }
    let (layers, first_rows) = trace_arm(first, data)?;
    let (_, second_rows) = trace_arm(second, data)?;

    let mut report = TheoremReport::new("gradient_norm_trace", second.seed);
    for (label, spec, rows) in [("first", first, &first_rows), ("second", second, &second_rows)] {
        if spec.optimizer.gc.is_none() {
            continue;
        }
        let mut violations = 0usize;
        let mut worst_ratio = 0.0f64;
        for s in rows.iter().flatten() {
            if s.applied_l2 > s.raw_l2 {
                violations += 1;
            }
            if s.raw_l2 > 0.0 {
                worst_ratio = worst_ratio.max(s.applied_l2 / s.raw_l2);
            }
        }
        report.push(Check::at_most(
            format!("{label} arm: layer-steps with ‖ĝ‖ > ‖g‖ over {} steps", rows.len()),
            violations as f64,
            0.0,
        ));
        report.push(Check::at_most(format!("{label} arm: max ‖ĝ‖/‖g‖"), worst_ratio, 1.0));
    }
    let trace = NormTrace {
        layers,
        steps: (1..=first_rows.len() as u64).collect(),
        first: first_rows,
        second: second_rows,
    };
    Ok((trace, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_small_cases() {
        let r = check_projection_algebra(&[1, 2, 3, 17], 20, 1).unwrap();
        assert!(r.passed(), "{:?}", r.failures().collect::<Vec<_>>());
        let p1 = projection_matrix(1);
        assert_eq!(p1.data(), &[0.0]);
        for m in [1usize, 2, 5, 30] {
            let p = projection_matrix(m);
            let tr: f64 = (0..m).map(|i| p.data()[i * m + i]).sum();
            assert!((tr - (m as f64 - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn norm_identity_examples() {
        let g = [1.0, 2.0, 3.0];
        let mut pg = g;
        GradView::new(&mut pg, Unfolding::fc(3, 1))
            .unwrap()
            .subtract_column_means();
        assert_eq!(linalg::dot(&g, &g), 14.0);
        assert_eq!(linalg::dot(&pg, &pg), 2.0);
        // mean-free input keeps its norm
        let mut z = [1.0, -1.0, 0.0];
        GradView::new(&mut z, Unfolding::fc(3, 1))
            .unwrap()
            .subtract_column_means();
        assert_eq!(z, [1.0, -1.0, 0.0]);
        let r = check_norm_reduction(&[(1, 1), (5, 3)], 50, 2).unwrap();
        assert!(r.passed());
    }

    #[test]
    fn hessian_examples() {
        // H = I (m=3): ‖PH‖_F² = trace P = 2 = 3 - 1
        let mut ph = Tensor::<f64>::identity(3).into_data();
        GradView::new(&mut ph, Unfolding::fc(3, 3))
            .unwrap()
            .subtract_column_means();
        assert!((linalg::dot(&ph, &ph) - 2.0).abs() < 1e-15);
        // H = 11ᵀ: PH = 0
        let mut ones = vec![1.0; 9];
        GradView::new(&mut ones, Unfolding::fc(3, 3))
            .unwrap()
            .subtract_column_means();
        assert!(ones.iter().all(|&v| v == 0.0));
        let r = check_hessian_contraction(16, 10, 3).unwrap();
        assert!(r.passed(), "{:?}", r.failures().collect::<Vec<_>>());
        assert!(check_hessian_contraction(1, 1, 3).is_err());
    }

    #[test]
    fn output_invariance_holds() {
        let r = check_output_invariance(&InvarianceSetup::default(), &[1, 20], &[0.0, 0.5, -2.0], 4).unwrap();
        assert!(r.passed(), "{:?}", r.failures().collect::<Vec<_>>());
        let centered = InvarianceSetup {
            centered_init: true,
            ..Default::default()
        };
        let r = check_output_invariance(&centered, &[10], &[0.5, -2.0], 5).unwrap();
        assert!(r.passed());
    }

    #[test]
    fn reports_are_seed_deterministic() {
        let a = check_hessian_contraction(8, 5, 9).unwrap();
        let b = check_hessian_contraction(8, 5, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn weight_means() {
        let mut rng = RngStream::new(1);
        let mut m = Model::<f64>::build(
            &[LayerSpec::Dense { out: 2 }],
            &[3],
            InitScheme::KaimingNormal,
            &mut rng,
        )
        .unwrap();
        m.params_mut()[0].value = Tensor::full(&[3, 2], -0.25).unwrap();
        let prof = weight_mean_profile(&m);
        assert_eq!(prof.len(), 1);
        assert_eq!(prof[0].abs_means, [0.25, 0.25]);
        m.params_mut()[0].value = Tensor::zeros(&[3, 2]);
        assert_eq!(weight_mean_profile(&m)[0].abs_means, [MEAN_FLOOR; 2]);
    }

    #[test]
    fn trace_pairs() {
        let spec = RunSpec {
            layers: LayerSpec::parse_list("dense:2").unwrap(),
            optimizer: OptimizerConfig::new(OptimizerKind::Sgdm, 0.1),
            batch_size: 2,
            steps: 3,
            seed: 1,
        };
        let mut other = spec.clone();
        other.optimizer = other.optimizer.with_gc(Default::default());
        other.seed = 2;
        let mut rng = RngStream::new(5);
        let x = Tensor::from_vec(&[4, 3], normal_vec(&mut rng, 12)).unwrap();
        let data = Dataset::new(x, vec![0, 1, 0, 1], 2).unwrap();
        assert!(matches!(
            trace_gradient_norms(&spec, &other, &data),
            Err(Error::InvalidPair(_))
        ));
        other.seed = 1;
        let (trace, report) = trace_gradient_norms(&spec, &other, &data).unwrap();
        assert!(report.passed());
        assert_eq!(report.checks.len(), 2);
        assert_eq!(trace.steps, [1, 2, 3]);
        assert!(trace.median_norm_ratio()[0].is_finite());

        let (same, report) = trace_gradient_norms(&spec, &spec, &data).unwrap();
        assert!(report.checks.is_empty());
        assert_eq!(same.first, same.second);
    }

    #[test]
    fn adam_invariance_is_reported_only() {
        let setup = InvarianceSetup {
            kind: OptimizerKind::Adam,
            lr: 0.01,
            ..Default::default()
        };
        let r = check_output_invariance(&setup, &[20], &[0.5], 6).unwrap();
        assert!(r.passed());
        assert!(r.checks.iter().all(|c| c.bound.is_infinite()));
    }
}
