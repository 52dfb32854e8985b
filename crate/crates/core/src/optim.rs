//! First-order optimizers with an optional gradient-centralization step.
//!
//! Every optimizer runs the same pipeline per parameter:
//!
//! 1. in coupled (L2) mode, fold the decay into the gradient: `g + λw`;
//! 2. centralize the result if GC is enabled and the parameter has a fan-in
//!    unfolding, giving `ĝ = P(g + λw)`;
//! 3. apply the optimizer's update with `ĝ`;
//! 4. in decoupled mode (SGDW, AdamW), shrink the weight: `w ← w − αλw`.
//!
//! Because step 2 centralizes the decay term too, coupled decay under GC
//! only shrinks the mean-free part of each weight column.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::gc::{centralize_slice, GcPolicy, Unfolding};
use crate::linalg;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OptimizerKind {
    Sgdm,
    Sgdw,
    Adagrad,
    Adam,
    Adamw,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgdm => "sgdm",
            OptimizerKind::Sgdw => "sgdw",
            OptimizerKind::Adagrad => "adagrad",
            OptimizerKind::Adam => "adam",
            OptimizerKind::Adamw => "adamw",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "sgdm" => OptimizerKind::Sgdm,
            "sgdw" => OptimizerKind::Sgdw,
            "adagrad" => OptimizerKind::Adagrad,
            "adam" => OptimizerKind::Adam,
            "adamw" => OptimizerKind::Adamw,
            _ => return None,
        })
    }

    /// The decay mode this optimizer is defined with.
    pub fn natural_decay_mode(self) -> DecayMode {
        match self {
            OptimizerKind::Sgdw | OptimizerKind::Adamw => DecayMode::Decoupled,
            _ => DecayMode::CoupledL2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DecayMode {
    CoupledL2,
    Decoupled,
}

impl DecayMode {
    pub fn name(self) -> &'static str {
        match self {
            DecayMode::CoupledL2 => "coupled_l2",
            DecayMode::Decoupled => "decoupled",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "coupled_l2" | "coupled" => Some(DecayMode::CoupledL2),
            "decoupled" => Some(DecayMode::Decoupled),
            _ => None,
        }
    }
}

/// Momentum accumulation rule for SGDM/SGDW.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MomentumForm {
    /// `m ← βm + (1−β)ĝ`
    Paper,
    /// `m ← βm + ĝ`, the form most frameworks ship.
    Classic,
}

impl MomentumForm {
    pub fn name(self) -> &'static str {
        match self {
            MomentumForm::Paper => "paper",
            MomentumForm::Classic => "classic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "paper" => Some(MomentumForm::Paper),
            "classic" => Some(MomentumForm::Classic),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    /// SGDM/SGDW momentum factor.
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub decay_mode: DecayMode,
    /// `None` disables centralization.
    pub gc: Option<GcPolicy>,
    pub momentum_form: MomentumForm,
}

impl OptimizerConfig {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        OptimizerConfig {
            kind,
            lr,
            momentum: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            decay_mode: kind.natural_decay_mode(),
            gc: None,
            momentum_form: MomentumForm::Paper,
        }
    }

    pub fn with_gc(mut self, policy: GcPolicy) -> Self {
        self.gc = Some(policy);
        self
    }

    pub fn without_gc(mut self) -> Self {
        self.gc = None;
        self
    }

    pub fn with_weight_decay(mut self, weight_decay: f64) -> Self {
        self.weight_decay = weight_decay;
        self
    }

    pub fn with_momentum(mut self, momentum: f64) -> Self {
        self.momentum = momentum;
        self
    }

    pub fn with_betas(mut self, beta1: f64, beta2: f64) -> Self {
        self.beta1 = beta1;
        self.beta2 = beta2;
        self
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn with_momentum_form(mut self, form: MomentumForm) -> Self {
        self.momentum_form = form;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("lr", self.lr),
            ("momentum", self.momentum),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("eps", self.eps),
            ("weight_decay", self.weight_decay),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Config(alloc::format!("{name} must be finite")));
        }
        if self.lr <= 0.0 {
            return Err(Error::Config("lr must be positive".into()));
        }
        for (name, v) in [
            ("momentum", self.momentum),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(alloc::format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        if self.eps < 0.0 || self.weight_decay < 0.0 {
            return Err(Error::Config("eps and weight_decay must be non-negative".into()));
        }
        if self.decay_mode != self.kind.natural_decay_mode() {
            return Err(Error::Config(alloc::format!(
                "decay mode {} is not valid for {} (decoupled decay requires sgdw or adamw)",
                self.decay_mode.name(),
                self.kind.name()
            )));
        }
        Ok(())
    }
}

/// Moment buffers for one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    name: String,
    /// Completed steps.
    pub step: u64,
    /// First moment (SGDM momentum, Adam `m`).
    pub m: Vec<T>,
    /// Second moment (Adam `v`, Adagrad accumulator).
    pub v: Vec<T>,
    poisoned: bool,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(name: impl Into<String>, len: usize) -> Self {
        OptimizerState {
            name: name.into(),
            step: 0,
            m: vec![T::ZERO; len],
            v: vec![T::ZERO; len],
            poisoned: false,
        }
    }

    /// Rebuilds a state from stored buffers.
    pub fn from_parts(name: impl Into<String>, step: u64, m: Vec<T>, v: Vec<T>, poisoned: bool) -> Result<Self> {
        if m.len() != v.len() {
            return Err(Error::InvalidArgument("moment buffers differ in length".into()));
        }
        Ok(OptimizerState {
            name: name.into(),
            step,
            m,
            v,
            poisoned,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn is_poisoned(&self) -> bool {
        self.poisoned
    }
}

/// Norms of the gradient entering the optimizer before and after centralization.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepStats {
    pub raw_l2: f64,
    pub raw_max: f64,
    pub centered_l2: f64,
    pub centered_max: f64,
    pub centralized: bool,
}

/// Applies coupled decay and GC to `g`. Pure in `(g, w, cfg, unfolding)`.
pub fn preprocess_gradient<T: Scalar>(
    g: &[T],
    w: &[T],
    cfg: &OptimizerConfig,
    unfolding: Option<Unfolding>,
) -> Result<Vec<T>> {
    let mut out = g.to_vec();
    preprocess_into(&mut out, w, cfg, unfolding, None)?;
    Ok(out)
}

fn preprocess_into<T: Scalar>(
    g: &mut [T],
    w: &[T],
    cfg: &OptimizerConfig,
    unfolding: Option<Unfolding>,
    stats: Option<&mut StepStats>,
) -> Result<()> {
    if g.len() != w.len() {
        return Err(crate::error::shape_err("preprocess_gradient", &[g.len()], &[w.len()]));
    }
    if cfg.decay_mode == DecayMode::CoupledL2 && cfg.weight_decay != 0.0 {
        let wd = T::from_f64(cfg.weight_decay);
        for (gv, &wv) in g.iter_mut().zip(w) {
            *gv += wd * wv;
        }
    }
    let raw = stats
        .as_ref()
        .map(|_| (linalg::norm2(g).to_f64(), linalg::max_abs(g).to_f64()));
    let mut centralized = false;
    if let (Some(policy), Some(u)) = (cfg.gc.as_ref(), unfolding) {
        centralized = centralize_slice(g, u, policy)?;
    }
    if let (Some(s), Some((raw_l2, raw_max))) = (stats, raw) {
        *s = StepStats {
            raw_l2,
            raw_max,
            centered_l2: linalg::norm2(g).to_f64(),
            centered_max: linalg::max_abs(g).to_f64(),
            centralized,
        };
    }
    Ok(())
}

fn check_step_inputs<T: Scalar>(w: &[T], g: &[T], state: &mut OptimizerState<T>) -> Result<()> {
    if state.poisoned {
        return Err(Error::Poisoned {
            param: state.name.clone(),
        });
    }
    if w.len() != g.len() || w.len() != state.m.len() {
        return Err(crate::error::shape_err(
            "optimizer step",
            &[w.len(), g.len()],
            &[state.m.len()],
        ));
    }
    if !g.iter().all(|v| v.is_finite()) {
        state.poisoned = true;
        return Err(Error::Poisoned {
            param: state.name.clone(),
        });
    }
    Ok(())
}

/// SGD with momentum on an already preprocessed gradient.
pub fn sgdm_step<T: Scalar>(w: &mut [T], g_hat: &[T], state: &mut OptimizerState<T>, cfg: &OptimizerConfig) {
    let lr = T::from_f64(cfg.lr);
    let beta = T::from_f64(cfg.momentum);
    state.step += 1;
    match cfg.momentum_form {
        MomentumForm::Paper => {
            let one_minus = T::from_f64(1.0 - cfg.momentum);
            for ((wv, mv), &gv) in w.iter_mut().zip(&mut state.m).zip(g_hat) {
                *mv = beta * *mv + one_minus * gv;
                *wv -= lr * *mv;
            }
        }
        MomentumForm::Classic => {
            for ((wv, mv), &gv) in w.iter_mut().zip(&mut state.m).zip(g_hat) {
                *mv = beta * *mv + gv;
                *wv -= lr * *mv;
            }
        }
    }
}

/// Adam on an already preprocessed gradient. Bias corrections use the
/// post-increment step, so the first call corrects with `t = 1`.
pub fn adam_step<T: Scalar>(w: &mut [T], g_hat: &[T], state: &mut OptimizerState<T>, cfg: &OptimizerConfig) {
    state.step += 1;
    let t = state.step as f64;
    let lr = T::from_f64(cfg.lr);
    let b1 = T::from_f64(cfg.beta1);
    let b2 = T::from_f64(cfg.beta2);
    let one_minus_b1 = T::from_f64(1.0 - cfg.beta1);
    let one_minus_b2 = T::from_f64(1.0 - cfg.beta2);
    let bc1 = T::from_f64(1.0 - libm::pow(cfg.beta1, t));
    let bc2 = T::from_f64(1.0 - libm::pow(cfg.beta2, t));
    let eps = T::from_f64(cfg.eps);
    for (((wv, mv), vv), &gv) in w.iter_mut().zip(&mut state.m).zip(&mut state.v).zip(g_hat) {
        *mv = b1 * *mv + one_minus_b1 * gv;
        *vv = b2 * *vv + one_minus_b2 * gv * gv;
        let m_hat = *mv / bc1;
        let v_hat = *vv / bc2;
        *wv -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Adagrad on an already preprocessed gradient.
pub fn adagrad_step<T: Scalar>(w: &mut [T], g_hat: &[T], state: &mut OptimizerState<T>, cfg: &OptimizerConfig) {
    state.step += 1;
    let lr = T::from_f64(cfg.lr);
    let eps = T::from_f64(cfg.eps);
    for ((wv, vv), &gv) in w.iter_mut().zip(&mut state.v).zip(g_hat) {
        *vv += gv * gv;
        *wv -= lr * gv / (vv.sqrt() + eps);
    }
}

/// `w ← w − αλw`, never passed through GC.
pub fn decoupled_decay_step<T: Scalar>(w: &mut [T], cfg: &OptimizerConfig) {
    if cfg.weight_decay == 0.0 {
        return;
    }
    let shrink = T::from_f64(cfg.lr * cfg.weight_decay);
    for wv in w {
        *wv = *wv - shrink * *wv;
    }
}

impl OptimizerConfig {
    /// One full update of `w` from the raw gradient `g`.
    ///
    /// A non-finite gradient poisons `state`; every later call with it fails.
    pub fn step<T: Scalar>(
        &self,
        w: &mut [T],
        g: &[T],
        state: &mut OptimizerState<T>,
        unfolding: Option<Unfolding>,
    ) -> Result<()> {
        self.step_impl(w, g, state, unfolding, None)
    }

    /// Like [`step`](Self::step), also reporting gradient norms before and after GC.
    pub fn step_traced<T: Scalar>(
        &self,
        w: &mut [T],
        g: &[T],
        state: &mut OptimizerState<T>,
        unfolding: Option<Unfolding>,
    ) -> Result<StepStats> {
        let mut stats = StepStats::default();
        self.step_impl(w, g, state, unfolding, Some(&mut stats))?;
        Ok(stats)
    }

    fn step_impl<T: Scalar>(
        &self,
        w: &mut [T],
        g: &[T],
        state: &mut OptimizerState<T>,
        unfolding: Option<Unfolding>,
        stats: Option<&mut StepStats>,
    ) -> Result<()> {
        check_step_inputs(w, g, state)?;
        let mut g_hat = g.to_vec();
        preprocess_into(&mut g_hat, w, self, unfolding, stats)?;
        match self.kind {
            OptimizerKind::Sgdm | OptimizerKind::Sgdw => sgdm_step(w, &g_hat, state, self),
            OptimizerKind::Adam | OptimizerKind::Adamw => adam_step(w, &g_hat, state, self),
            OptimizerKind::Adagrad => adagrad_step(w, &g_hat, state, self),
        }
        if self.decay_mode == DecayMode::Decoupled {
            decoupled_decay_step(w, self);
        }
        Ok(())
    }
}
