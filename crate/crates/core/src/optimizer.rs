//! Optimizer drivers: the interval-gated natural-gradient loop shared by the four
//! Kronecker-factored methods, plus SGD-with-momentum and Adam baselines.

use std::fmt::Write as _;

use rand::Rng;

use crate::approx::{DampingMode, Method, MethodState};
use crate::error::{dims, Error, Result};
use crate::linalg::Matrix;
use crate::network::{sample_model_labels, DenseNet, LayerGradientBatch, LossReport};

/// Refresh intervals, in steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Schedule {
    pub t_fim: usize,
    pub t_eig: usize,
    pub t_re: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            t_fim: 50,
            t_eig: 50,
            t_re: 200,
        }
    }
}

/// Which refreshes fire on a given step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Refresh {
    pub factors: bool,
    pub eigen: bool,
    pub rescaling: bool,
}

impl Refresh {
    pub fn any(&self) -> bool {
        self.factors || self.eigen || self.rescaling
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if self.t_fim == 0 || self.t_eig == 0 || self.t_re == 0 {
            return Err(Error::InvalidConfig(
                "refresh intervals must be >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn at(&self, step: usize) -> Refresh {
        Refresh {
            factors: step.is_multiple_of(self.t_fim),
            eigen: step.is_multiple_of(self.t_eig),
            rescaling: step.is_multiple_of(self.t_re),
        }
    }
}

/// Labels used to build curvature statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FisherFlavor {
    /// Dataset labels.
    Empirical,
    /// Labels sampled from the model's predictive distribution.
    #[default]
    True,
}

impl std::str::FromStr for FisherFlavor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "empirical" => Ok(FisherFlavor::Empirical),
            "true" => Ok(FisherFlavor::True),
            other => Err(Error::InvalidConfig(format!(
                "unknown fisher flavor `{other}` (expected empirical or true)"
            ))),
        }
    }
}

impl std::fmt::Display for FisherFlavor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FisherFlavor::Empirical => "empirical",
            FisherFlavor::True => "true",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DampingKind {
    Fixed,
    #[default]
    AutoTrace,
}

impl std::str::FromStr for DampingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(DampingKind::Fixed),
            "auto_trace" | "auto-trace" => Ok(DampingKind::AutoTrace),
            other => Err(Error::InvalidConfig(format!(
                "unknown damping mode `{other}` (expected fixed or auto_trace)"
            ))),
        }
    }
}

impl std::fmt::Display for DampingKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DampingKind::Fixed => "fixed",
            DampingKind::AutoTrace => "auto_trace",
        })
    }
}

/// Step decay: `η · factor^⌊epoch / every⌋`. `every = None` never decays.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrDecay {
    pub factor: f64,
    pub every_n_epochs: Option<usize>,
}

impl Default for LrDecay {
    fn default() -> Self {
        Self {
            factor: 0.1,
            every_n_epochs: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub eta: f64,
    /// Damping in fixed mode.
    pub lambda: f64,
    /// Trace floor in auto-trace mode.
    pub vartheta: f64,
    pub damping_mode: DampingKind,
    /// EMA weight of the newest re-scaling estimate.
    pub beta1: f64,
    /// EMA weight of the newest factor estimate.
    pub beta2: f64,
    pub momentum: f64,
    pub lr_decay: LrDecay,
    pub fisher_flavor: FisherFlavor,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            eta: 1e-3,
            lambda: 1e-3,
            vartheta: 0.01,
            damping_mode: DampingKind::AutoTrace,
            beta1: 0.95,
            beta2: 0.95,
            momentum: 0.9,
            lr_decay: LrDecay::default(),
            fisher_flavor: FisherFlavor::True,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn damping(&self) -> DampingMode {
        match self.damping_mode {
            DampingKind::Fixed => DampingMode::Fixed {
                lambda: self.lambda,
            },
            DampingKind::AutoTrace => DampingMode::AutoTrace {
                vartheta: self.vartheta,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return bad(format!("eta must be > 0, got {}", self.eta));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            ));
        }
        if !(self.lr_decay.factor > 0.0 && self.lr_decay.factor <= 1.0) {
            return bad(format!(
                "lr decay factor must lie in (0, 1], got {}",
                self.lr_decay.factor
            ));
        }
        if self.lr_decay.every_n_epochs == Some(0) {
            return bad("lr decay interval must be >= 1 epoch".into());
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(beta > 0.0 && beta <= 1.0) {
                return bad(format!("{name} must lie in (0, 1], got {beta}"));
            }
        }
        for (name, beta) in [
            ("adam_beta1", self.adam_beta1),
            ("adam_beta2", self.adam_beta2),
        ] {
            if !(0.0..1.0).contains(&beta) {
                return bad(format!("{name} must lie in [0, 1), got {beta}"));
            }
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps must be > 0".into());
        }
        self.damping().validate()
    }
}

pub fn lr_schedule(epoch: usize, config: &OptimizerConfig) -> f64 {
    match config.lr_decay.every_n_epochs {
        Some(every) => config.eta * config.lr_decay.factor.powi((epoch / every) as i32),
        None => config.eta,
    }
}

fn check_conformal(weights: &[Matrix], grads: &[Matrix]) -> Result<()> {
    if weights.len() != grads.len()
        || weights
            .iter()
            .zip(grads)
            .any(|(w, g)| w.shape() != g.shape())
    {
        return Err(dims("gradients do not match the weight shapes"));
    }
    Ok(())
}

/// Heavy-ball velocity, one buffer per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdmState {
    velocity: Vec<Matrix>,
}

impl SgdmState {
    pub fn new(weights: &[Matrix]) -> Self {
        Self {
            velocity: weights
                .iter()
                .map(|w| Matrix::zeros(w.nrows(), w.ncols()))
                .collect(),
        }
    }

    pub fn velocity(&self) -> &[Matrix] {
        &self.velocity
    }
}

/// `v ← μ v + g`, `w ← w − η v`.
pub fn sgdm_step(
    weights: &mut [Matrix],
    grads: &[Matrix],
    lr: f64,
    momentum: f64,
    state: &mut SgdmState,
) -> Result<()> {
    check_conformal(weights, grads)?;
    check_conformal(&state.velocity, grads)?;
    for ((w, g), v) in weights.iter_mut().zip(grads).zip(&mut state.velocity) {
        *v *= momentum;
        *v += g;
        *w -= &*v * lr;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    first: Vec<Matrix>,
    second: Vec<Matrix>,
    steps: i32,
}

impl AdamState {
    pub fn new(weights: &[Matrix]) -> Self {
        let zeros = || {
            weights
                .iter()
                .map(|w| Matrix::zeros(w.nrows(), w.ncols()))
                .collect()
        };
        Self {
            first: zeros(),
            second: zeros(),
            steps: 0,
        }
    }
}

pub fn adam_step(
    weights: &mut [Matrix],
    grads: &[Matrix],
    lr: f64,
    config: &OptimizerConfig,
    state: &mut AdamState,
) -> Result<()> {
    check_conformal(weights, grads)?;
    let (b1, b2) = (config.adam_beta1, config.adam_beta2);
    state.steps += 1;
    let c1 = 1.0 - b1.powi(state.steps);
    let c2 = 1.0 - b2.powi(state.steps);
    for (((w, g), m), v) in weights
        .iter_mut()
        .zip(grads)
        .zip(&mut state.first)
        .zip(&mut state.second)
    {
        m.zip_apply(g, |m, g| *m = b1 * *m + (1.0 - b1) * g);
        v.zip_apply(g, |v, g| *v = b2 * *v + (1.0 - b2) * g * g);
        for ((wi, mi), vi) in w.iter_mut().zip(m.iter()).zip(v.iter()) {
            *wi -= lr * (mi / c1) / ((vi / c2).sqrt() + config.adam_eps);
        }
    }
    Ok(())
}

/// Steps at which each kind of refresh ran.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RefreshLog {
    pub factors: Vec<usize>,
    pub eigen: Vec<usize>,
    pub rescaling: Vec<usize>,
}

/// Per-layer curvature summary after a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerStats {
    pub lambda: f64,
    pub trace_theta: f64,
}

/// Interval-gated driver for one of the four eigenbasis methods.
///
/// On each step the refreshes that fire run in the order factors → eigenbasis →
/// re-scaling; the gradient is then preconditioned and fed through heavy-ball
/// momentum in the preconditioned space.
#[derive(Debug, Clone)]
pub struct NaturalGradient {
    method: Method,
    states: Vec<MethodState>,
    velocity: Vec<Matrix>,
    log: RefreshLog,
}

impl NaturalGradient {
    pub fn new(method: Method, net: &DenseNet) -> Self {
        Self {
            method,
            states: (0..net.num_layers())
                .map(|_| MethodState::new(method))
                .collect(),
            velocity: net
                .weights()
                .iter()
                .map(|w| Matrix::zeros(w.nrows(), w.ncols()))
                .collect(),
            log: RefreshLog::default(),
        }
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn states(&self) -> &[MethodState] {
        &self.states
    }

    pub fn states_mut(&mut self) -> &mut [MethodState] {
        &mut self.states
    }

    pub fn log(&self) -> &RefreshLog {
        &self.log
    }

    /// Runs whichever refreshes fire at `step`. `curvature` must be supplied
    /// when any of them does.
    pub fn refresh(
        &mut self,
        curvature: Option<&[LayerGradientBatch]>,
        config: &OptimizerConfig,
        schedule: &Schedule,
        step: usize,
    ) -> Result<()> {
        let fire = schedule.at(step);
        if !fire.any() {
            return Ok(());
        }
        let batches = curvature.ok_or(Error::Uninitialized(
            "curvature batch required on refresh steps",
        ))?;
        if batches.len() != self.states.len() {
            return Err(dims(format!(
                "{} curvature batches for {} layers",
                batches.len(),
                self.states.len()
            )));
        }
        let damping = config.damping();
        for (state, batch) in self.states.iter_mut().zip(batches) {
            if fire.factors {
                state.refresh_factors(batch, config.beta2)?;
            }
            if fire.eigen {
                state.refresh_eigenbasis(damping)?;
            }
            if fire.rescaling {
                state.refresh_rescaling(batch, config.beta1, damping)?;
            }
        }
        if fire.factors {
            self.log.factors.push(step);
        }
        if fire.eigen {
            self.log.eigen.push(step);
        }
        if fire.rescaling {
            self.log.rescaling.push(step);
        }
        Ok(())
    }

    pub fn precondition(&self, grads: &[Matrix]) -> Result<Vec<Matrix>> {
        if grads.len() != self.states.len() {
            return Err(dims("one gradient per layer expected"));
        }
        self.states
            .iter()
            .zip(grads)
            .map(|(s, g)| s.precondition(g))
            .collect()
    }

    /// One optimizer step: gated refreshes, preconditioning, momentum, update.
    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &mut self,
        net: &mut DenseNet,
        curvature: Option<&[LayerGradientBatch]>,
        grads: &[Matrix],
        lr: f64,
        config: &OptimizerConfig,
        schedule: &Schedule,
        step: usize,
    ) -> Result<()> {
        check_conformal(net.weights(), grads)?;
        self.refresh(curvature, config, schedule, step)?;
        let directions = self.precondition(grads)?;
        for ((w, d), v) in net
            .weights_mut()
            .iter_mut()
            .zip(&directions)
            .zip(&mut self.velocity)
        {
            *v *= config.momentum;
            *v += d;
            *w -= &*v * lr;
        }
        Ok(())
    }

    pub fn layer_stats(&self) -> Vec<Option<LayerStats>> {
        self.states
            .iter()
            .map(|s| {
                s.rescaling().map(|r| LayerStats {
                    lambda: r.lambda,
                    trace_theta: r.trace(),
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgdm,
    Adam,
    Natural(Method),
}

impl OptimizerKind {
    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::Sgdm => "sgdm",
            OptimizerKind::Adam => "adam",
            OptimizerKind::Natural(m) => m.name(),
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgdm" | "sgd" => Ok(OptimizerKind::Sgdm),
            "adam" => Ok(OptimizerKind::Adam),
            other => other
                .parse::<Method>()
                .map(OptimizerKind::Natural)
                .map_err(|_| Error::InvalidConfig(format!("unknown method `{s}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgdm(SgdmState),
    Adam(AdamState),
    Natural(NaturalGradient),
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, net: &DenseNet) -> Self {
        match kind {
            OptimizerKind::Sgdm => Optimizer::Sgdm(SgdmState::new(net.weights())),
            OptimizerKind::Adam => Optimizer::Adam(AdamState::new(net.weights())),
            OptimizerKind::Natural(m) => Optimizer::Natural(NaturalGradient::new(m, net)),
        }
    }

    pub fn needs_curvature(&self, schedule: &Schedule, step: usize) -> bool {
        matches!(self, Optimizer::Natural(_)) && schedule.at(step).any()
    }

    pub fn layer_stats(&self, layers: usize) -> Vec<Option<LayerStats>> {
        match self {
            Optimizer::Natural(ng) => ng.layer_stats(),
            _ => vec![None; layers],
        }
    }
}

/// Outcome of [`train_step`]: the loss of the mini-batch before the update and the
/// per-layer curvature summary after it.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub batch: LossReport,
    pub layers: Vec<Option<LayerStats>>,
}

/// Forward, backward, optional curvature pass, and update on one mini-batch.
#[allow(clippy::too_many_arguments)]
pub fn train_step<R: Rng + ?Sized>(
    net: &mut DenseNet,
    optimizer: &mut Optimizer,
    inputs: &Matrix,
    targets: &[usize],
    lr: f64,
    config: &OptimizerConfig,
    schedule: &Schedule,
    step: usize,
    rng: &mut R,
) -> Result<StepOutcome> {
    let pass = net.forward(inputs)?;
    let batch = LossReport::from_logits(&pass.logits, targets)?;
    let loss_batches = net.backward(&pass.cache, targets)?;
    let grads: Vec<Matrix> = loss_batches
        .iter()
        .map(LayerGradientBatch::mean_gradient)
        .collect();

    let curvature = if optimizer.needs_curvature(schedule, step) {
        match config.fisher_flavor {
            FisherFlavor::Empirical => Some(loss_batches),
            FisherFlavor::True => {
                let sampled = sample_model_labels(&pass.logits, rng)?;
                Some(net.backward(&pass.cache, &sampled)?)
            }
        }
    } else {
        None
    };

    match optimizer {
        Optimizer::Sgdm(state) => sgdm_step(net.weights_mut(), &grads, lr, config.momentum, state)?,
        Optimizer::Adam(state) => adam_step(net.weights_mut(), &grads, lr, config, state)?,
        Optimizer::Natural(ng) => ng.step(
            net,
            curvature.as_deref(),
            &grads,
            lr,
            config,
            schedule,
            step,
        )?,
    }
    if net
        .weights()
        .iter()
        .flat_map(|w| w.iter())
        .any(|v| !v.is_finite())
    {
        return Err(Error::NonFinite(format!("weights diverged at step {step}")));
    }
    Ok(StepOutcome {
        layers: optimizer.layer_stats(net.num_layers()),
        batch,
    })
}

/// Which data a [`TrainRecord`] was measured on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    /// The mini-batch of one step, before its update.
    Batch,
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Batch => "batch",
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecord {
    pub step: usize,
    pub epoch: usize,
    pub split: Split,
    pub loss: f64,
    pub accuracy: f64,
    pub wall_ms: f64,
    pub layer: Option<usize>,
    pub lambda: Option<f64>,
    pub trace_theta: Option<f64>,
}

/// Training metrics.
///
/// Mini-batch steps produce one `batch` record per layer; evaluations of the
/// full train and test splits produce one record each with the layer columns
/// empty.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub records: Vec<TrainRecord>,
}

pub const METRICS_HEADER: &str = "step,epoch,split,loss,accuracy,wall_ms,layer,lambda,trace_theta";

impl TrainReport {
    pub fn push_step(&mut self, step: usize, epoch: usize, wall_ms: f64, outcome: &StepOutcome) {
        for (layer, stats) in outcome.layers.iter().enumerate() {
            self.records.push(TrainRecord {
                step,
                epoch,
                split: Split::Batch,
                loss: outcome.batch.loss,
                accuracy: outcome.batch.accuracy,
                wall_ms,
                layer: Some(layer),
                lambda: stats.map(|s| s.lambda),
                trace_theta: stats.map(|s| s.trace_theta),
            });
        }
    }

    pub fn push_eval(
        &mut self,
        step: usize,
        epoch: usize,
        split: Split,
        wall_ms: f64,
        report: LossReport,
    ) {
        self.records.push(TrainRecord {
            step,
            epoch,
            split,
            loss: report.loss,
            accuracy: report.accuracy,
            wall_ms,
            layer: None,
            lambda: None,
            trace_theta: None,
        });
    }

    /// Latest evaluation on `split`.
    pub fn last_eval(&self, split: Split) -> Option<&TrainRecord> {
        self.records.iter().rev().find(|r| r.split == split)
    }

    pub fn to_csv(&self) -> String {
        fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
            v.map(|v| v.to_string()).unwrap_or_default()
        }
        let mut out = String::with_capacity(64 * (self.records.len() + 1));
        out.push_str(METRICS_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.step,
                r.epoch,
                r.split.name(),
                r.loss,
                r.accuracy,
                r.wall_ms,
                opt(r.layer),
                opt(r.lambda),
                opt(r.trace_theta)
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_step_zero_fires_everything() {
        let s = Schedule {
            t_fim: 7,
            t_eig: 13,
            t_re: 50,
        };
        assert_eq!(
            s.at(0),
            Refresh {
                factors: true,
                eigen: true,
                rescaling: true
            }
        );
        assert!(!s.at(1).any());
        assert!(Schedule {
            t_fim: 0,
            t_eig: 1,
            t_re: 1
        }
        .validate()
        .is_err());
    }

    #[test]
    fn lr_schedule_examples() {
        let mut c = OptimizerConfig::default();
        assert_eq!(lr_schedule(0, &c), c.eta);
        c.eta = 0.001;
        c.lr_decay = LrDecay {
            factor: 0.1,
            every_n_epochs: Some(20),
        };
        assert!((lr_schedule(20, &c) - 1e-4).abs() < 1e-18);
        assert_eq!(lr_schedule(19, &c), 0.001);
        c.lr_decay.every_n_epochs = None;
        assert_eq!(lr_schedule(1000, &c), 0.001);
    }

    #[test]
    fn sgdm_without_momentum_is_sgd() {
        let mut w = vec![Matrix::from_element(2, 2, 1.0)];
        let g = vec![Matrix::from_element(2, 2, 0.5)];
        let mut st = SgdmState::new(&w);
        sgdm_step(&mut w, &g, 0.1, 0.0, &mut st).unwrap();
        sgdm_step(&mut w, &g, 0.1, 0.0, &mut st).unwrap();
        assert!((w[0][(0, 0)] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn sgdm_velocity_geometric_limit() {
        let mut w = vec![Matrix::zeros(1, 1)];
        let g = vec![Matrix::from_element(1, 1, 2.0)];
        let mut st = SgdmState::new(&w);
        for _ in 0..400 {
            sgdm_step(&mut w, &g, 0.0, 0.9, &mut st).unwrap();
        }
        assert!((st.velocity()[0][(0, 0)] - 20.0).abs() < 1e-10);
    }

    #[test]
    fn adam_constant_gradient_closed_form() {
        // With constant g, m̂ = g and v̂ = g² exactly after bias correction,
        // so every step moves by lr · g / (|g| + eps).
        let cfg = OptimizerConfig::default();
        let lr = 0.01;
        let g = -0.3;
        let mut w = vec![Matrix::zeros(1, 1)];
        let grads = vec![Matrix::from_element(1, 1, g)];
        let mut st = AdamState::new(&w);
        for k in 1..=25 {
            adam_step(&mut w, &grads, lr, &cfg, &mut st).unwrap();
            let expected = -(k as f64) * lr * g / (g.abs() + cfg.adam_eps);
            assert!((w[0][(0, 0)] - expected).abs() < 1e-12, "step {k}");
        }
    }

    #[test]
    fn config_validation() {
        let mut c = OptimizerConfig::default();
        assert!(c.validate().is_ok());
        c.momentum = 1.0;
        assert!(c.validate().is_err());
        c = OptimizerConfig {
            eta: 0.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        c = OptimizerConfig {
            damping_mode: DampingKind::AutoTrace,
            vartheta: 0.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn kind_parsing() {
        assert_eq!(
            "tekfac".parse::<OptimizerKind>().unwrap(),
            OptimizerKind::Natural(Method::Tekfac)
        );
        assert_eq!(
            "sgdm".parse::<OptimizerKind>().unwrap(),
            OptimizerKind::Sgdm
        );
        assert!("lbfgs".parse::<OptimizerKind>().is_err());
    }

    #[test]
    fn csv_layout() {
        let mut r = TrainReport::default();
        r.push_eval(
            0,
            0,
            Split::Train,
            0.0,
            LossReport {
                loss: 1.5,
                accuracy: 0.25,
            },
        );
        let csv = r.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(METRICS_HEADER));
        assert_eq!(lines.next(), Some("0,0,train,1.5,0.25,0,,,"));
    }
}
