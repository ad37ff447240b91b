//! Stochastic first-order methods for choosing base-stock levels.
//!
//! All three methods share one epoch loop: draw a batch of scenario paths,
//! average their BP gradients (in seed order, so runs are reproducible),
//! take one step, clamp to the nonnegative orthant, and append an
//! [`EpochRecord`]. The two-stage procedure runs L1-regularized FISTA to pick
//! which items hold stock, then plain SGD on that support.

mod record;

pub use record::{read_epoch_log, EpochRecord, EpochSink, JsonLinesSink, OptRunRecord, StopReason};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::grad_bp;
use crate::network::{check_len, BomNetwork, Kernel};
use crate::sim::{evaluate_policy, CostParams, CostSummary, InitialInventory, PolicyVector, SimInput};
use crate::stochastic::{derive_seed, sample_path, ScenarioModels};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ssgd,
    Fista,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Single,
    Stage1,
    Stage2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSchedule {
    Constant,
    /// `t_k = t_0 / sqrt(k)`.
    #[default]
    InvSqrt,
}

impl StepSchedule {
    pub fn step(self, t0: f64, epoch: usize) -> f64 {
        match self {
            StepSchedule::Constant => t0,
            StepSchedule::InvSqrt => t0 / (epoch as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptConfig {
    /// L1 weight.
    #[serde(default)]
    pub lambda: f64,
    /// Base step `t_0`; estimated as `1 / L` from gradient differences when absent.
    #[serde(default)]
    pub step: Option<f64>,
    #[serde(default)]
    pub schedule: StepSchedule,
    /// FISTA momentum offset `r`.
    #[serde(default = "default_r")]
    pub momentum_r: f64,
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default = "default_epochs")]
    pub max_epochs: usize,
    /// Stop once the mean objective of the last `window` epochs moves by less
    /// than `tol` (relative) against the `window` epochs before them.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_window")]
    pub window: usize,
    /// Levels at or below this count as zero after stage 1. Defaults to
    /// `max(1e-3 * median of the positive levels, 1e-6)`.
    #[serde(default)]
    pub zero_threshold: Option<f64>,
    #[serde(default = "default_true")]
    pub nonnegative: bool,
}

fn default_r() -> f64 {
    3.0
}
fn default_batch() -> usize {
    10
}
fn default_epochs() -> usize {
    100
}
fn default_tol() -> f64 {
    1e-3
}
fn default_window() -> usize {
    10
}
fn default_true() -> bool {
    true
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            step: None,
            schedule: StepSchedule::default(),
            momentum_r: default_r(),
            batch: default_batch(),
            max_epochs: default_epochs(),
            tol: default_tol(),
            window: default_window(),
            zero_threshold: None,
            nonnegative: true,
        }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if let Some(t) = self.step {
            if !(t.is_finite() && t > 0.0) {
                return bad(format!("step must be > 0, got {t}"));
            }
        }
        if !(self.momentum_r >= 3.0) {
            return bad(format!("momentum_r must be >= 3, got {}", self.momentum_r));
        }
        if self.batch == 0 || self.max_epochs == 0 || self.window == 0 {
            return bad("batch, max_epochs and window must be at least 1".into());
        }
        if !(self.tol >= 0.0) {
            return bad(format!("tol must be >= 0, got {}", self.tol));
        }
        if let Some(eps) = self.zero_threshold {
            if !(eps > 0.0) {
                return bad(format!("zero_threshold must be > 0, got {eps}"));
            }
        }
        Ok(())
    }
}

/// The stochastic program: minimize expected total cost over `horizon` periods.
#[derive(Debug, Clone)]
pub struct Problem<'a> {
    pub net: &'a BomNetwork,
    pub models: &'a ScenarioModels,
    pub costs: &'a CostParams,
    pub horizon: usize,
    pub init: InitialInventory,
    pub kernel: Kernel,
}

impl<'a> Problem<'a> {
    pub fn new(net: &'a BomNetwork, models: &'a ScenarioModels, costs: &'a CostParams, horizon: usize) -> Self {
        Self {
            net,
            models,
            costs,
            horizon,
            init: InitialInventory::AtBaseStock,
            kernel: Kernel::Sparse,
        }
    }

    /// Mean cost and mean BP gradient over one path per seed, reduced in seed order.
    pub fn batch_gradient(&self, s: &[f64], seeds: &[u64]) -> Result<(f64, Vec<f64>)> {
        let n = self.net.n();
        let policy = PolicyVector(s.to_vec());
        let input = SimInput::new(&policy, self.costs, &self.init).with_kernel(self.kernel);
        let results = seeds
            .par_iter()
            .map(|&seed| {
                let path = sample_path(&self.models.demand, &self.models.lead_time, self.horizon, n, seed)?;
                grad_bp(self.net, &path, input)
            })
            .collect::<Result<Vec<_>>>()?;
        let k = results.len() as f64;
        let mut grad = vec![0.0; n];
        let mut cost = 0.0;
        for r in &results {
            cost += r.total_cost;
            for (g, x) in grad.iter_mut().zip(&r.grad) {
                *g += x;
            }
        }
        grad.iter_mut().for_each(|g| *g /= k);
        Ok((cost / k, grad))
    }

    pub fn evaluate(&self, s: &PolicyVector, seeds: &[u64]) -> Result<CostSummary> {
        let input = SimInput::new(s, self.costs, &self.init).with_kernel(self.kernel);
        evaluate_policy(self.net, self.models, self.horizon, input, seeds)
    }
}

/// Soft threshold `sign(x) max(0, |x| - tau)`, then clamped at zero when `nonnegative`.
pub fn prox_l1(x: &[f64], tau: f64, nonnegative: bool) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let shrunk = v.signum() * (v.abs() - tau).max(0.0);
            let shrunk = if shrunk == 0.0 { 0.0 } else { shrunk };
            if nonnegative {
                shrunk.max(0.0)
            } else {
                shrunk
            }
        })
        .collect()
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Starting levels that cover mean demand over the lead time, with demand
/// counted at echelon level (outside demand plus the component requirements
/// of everything downstream).
pub fn initial_policy(net: &BomNetwork, models: &ScenarioModels) -> Result<PolicyVector> {
    let n = net.n();
    check_len("demand model", n, models.demand.items.len())?;
    check_len("lead-time model", n, models.lead_time.items.len())?;
    let outside = models.demand.means();
    let lead = models.lead_time.means();
    let mut echelon = vec![0.0; n];
    for &i in net.topological_order().iter().rev() {
        let (consumers, qty) = net.downstream(i);
        echelon[i] = outside[i] + consumers.iter().zip(qty).map(|(&j, &a)| a * echelon[j]).sum::<f64>();
    }
    Ok(PolicyVector(echelon.iter().zip(&lead).map(|(d, l)| d * l).collect()))
}

/// `1 / L` from gradient differences between a base point and four random
/// perturbations of it (10% of `1 + |x_i|` per coordinate), all on one
/// common batch. `L` is the median over coordinates of the largest observed
/// ratio `|Δg_i| / |Δx_i|`, so a handful of stiff items does not freeze the
/// rest of the network.
pub fn estimate_step(problem: &Problem<'_>, x: &[f64], batch: usize, seed: u64, mask: Option<&[bool]>) -> Result<f64> {
    let seeds: Vec<u64> = (0..batch as u64).map(|r| derive_seed(seed, r)).collect();
    let (_, g0) = problem.batch_gradient(x, &seeds)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x7374_6570);
    let active = |i: usize| mask.is_none_or(|m| m[i]);
    let mut curvature = vec![0.0f64; x.len()];
    for _ in 0..4 {
        let probe: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if !active(i) {
                    return v;
                }
                let delta = 0.1 * (1.0 + v.abs());
                (v + if rng.random::<bool>() { delta } else { -delta }).max(0.0)
            })
            .collect();
        let (_, g) = problem.batch_gradient(&probe, &seeds)?;
        for i in 0..x.len() {
            let dx = (probe[i] - x[i]).abs();
            if dx > 0.0 {
                curvature[i] = curvature[i].max((g[i] - g0[i]).abs() / dx);
            }
        }
    }
    let lipschitz = median((0..x.len()).filter(|&i| active(i) && curvature[i] > 0.0).map(|i| curvature[i]));
    // On a single linear piece the probes see no curvature and 1 / L blows
    // up, so the first move is also capped near the probe radius.
    let cap = median(
        (0..x.len())
            .filter(|&i| active(i) && g0[i] != 0.0)
            .map(|i| 0.1 * (1.0 + x[i].abs()) / g0[i].abs()),
    );
    let t = match (lipschitz, cap) {
        (Some(l), Some(c)) => (1.0 / l).min(c),
        (Some(l), None) => 1.0 / l,
        (None, Some(c)) => c,
        (None, None) => 1.0,
    };
    Ok(if t.is_finite() && t > 0.0 { t } else { 1.0 })
}

fn median(values: impl Iterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[k] } else { 0.5 * (v[k - 1] + v[k]) })
}

/// How a single optimizer run starts.
#[derive(Debug, Clone)]
pub struct RunSpec<'m> {
    pub method: Method,
    pub stage: Stage,
    pub seed: u64,
    pub start: PolicyVector,
    /// Coordinates outside the mask stay at zero.
    pub mask: Option<&'m [bool]>,
    /// Epochs already completed (from a log); the run continues after the last one.
    pub resume: Vec<EpochRecord>,
}

impl<'m> RunSpec<'m> {
    pub fn new(method: Method, seed: u64, start: PolicyVector) -> Self {
        Self {
            method,
            stage: Stage::Single,
            seed,
            start,
            mask: None,
            resume: Vec::new(),
        }
    }
}

const DIVERGENCE_FACTOR: f64 = 1e3;

pub fn run(problem: &Problem<'_>, config: &OptConfig, spec: RunSpec<'_>, sink: &mut dyn EpochSink) -> Result<OptRunRecord> {
    config.validate()?;
    let n = problem.net.n();
    spec.start.validate(n)?;
    if let Some(mask) = spec.mask {
        check_len("support mask", n, mask.len())?;
    }
    let lambda = if spec.method == Method::Sgd { 0.0 } else { config.lambda };
    let keep = |i: usize| spec.mask.is_none_or(|m| m[i]);
    let project = |v: &mut [f64]| {
        for (i, x) in v.iter_mut().enumerate() {
            if !keep(i) || (config.nonnegative && *x < 0.0) {
                *x = 0.0;
            }
        }
    };

    let mut epochs = spec.resume;
    for (k, e) in epochs.iter().enumerate() {
        if e.epoch != k + 1 || e.method != spec.method || e.stage != spec.stage || e.policy.len() != n {
            return Err(Error::InvalidConfig(format!(
                "epoch log entry {} does not continue a {:?}/{:?} run on {n} items",
                k + 1,
                spec.method,
                spec.stage
            )));
        }
    }
    let (mut x, mut y, t0) = match epochs.last() {
        Some(last) => {
            let y = last.momentum.clone().unwrap_or_else(|| last.policy.clone());
            (last.policy.clone(), y, last.base_step)
        }
        None => {
            let mut x = spec.start.0.clone();
            project(&mut x);
            let t0 = match config.step {
                Some(t) => t,
                None => estimate_step(problem, &x, config.batch, derive_seed(spec.seed, u64::MAX), spec.mask)?,
            };
            (x.clone(), x, t0)
        }
    };

    let mut stop = StopReason::EpochCap;
    for epoch in epochs.len() + 1..=config.max_epochs {
        if converged(&epochs, config) {
            stop = StopReason::Converged;
            break;
        }
        let seed_block = derive_seed(spec.seed, epoch as u64);
        let seeds: Vec<u64> = (0..config.batch as u64).map(|r| derive_seed(seed_block, r)).collect();
        let step = config.schedule.step(t0, epoch);
        let point = if spec.method == Method::Fista { &y } else { &x };
        let (objective, mut grad) = problem.batch_gradient(point, &seeds)?;
        let regularized = objective + lambda * point.iter().map(|v| v.abs()).sum::<f64>();
        for (i, g) in grad.iter_mut().enumerate() {
            if !keep(i) {
                *g = 0.0;
            }
        }

        if let Some(first) = epochs.first() {
            let limit = DIVERGENCE_FACTOR * first.objective;
            if first.objective > 0.0 && objective > limit {
                return Err(Error::Diverged { epoch, objective, limit });
            }
        }
        if !objective.is_finite() {
            return Err(Error::Diverged {
                epoch,
                objective,
                limit: f64::INFINITY,
            });
        }

        let momentum = match spec.method {
            Method::Ssgd | Method::Sgd => {
                for i in 0..n {
                    x[i] -= step * (grad[i] + lambda * sign(x[i]));
                }
                project(&mut x);
                None
            }
            Method::Fista => {
                let target: Vec<f64> = y.iter().zip(&grad).map(|(yi, gi)| yi - step * gi).collect();
                let mut next = prox_l1(&target, step * lambda, config.nonnegative);
                project(&mut next);
                let k = (epoch - 1) as f64;
                let beta = k / (k + config.momentum_r);
                y = next.iter().zip(&x).map(|(xn, xo)| xn + beta * (xn - xo)).collect();
                project(&mut y);
                x = next;
                Some(y.clone())
            }
        };

        let record = EpochRecord {
            stage: spec.stage,
            method: spec.method,
            epoch,
            objective,
            regularized,
            nonzero: x.iter().filter(|&&v| v > 0.0).count(),
            step,
            base_step: t0,
            seed_block,
            policy: x.clone(),
            momentum,
        };
        sink.record(&record)?;
        epochs.push(record);
    }
    if stop == StopReason::EpochCap && converged(&epochs, config) {
        stop = StopReason::Converged;
    }

    Ok(OptRunRecord {
        method: spec.method,
        stage: spec.stage,
        seed: spec.seed,
        lambda,
        config: config.clone(),
        epochs,
        final_policy: PolicyVector(x),
        stop,
    })
}

fn converged(epochs: &[EpochRecord], config: &OptConfig) -> bool {
    let w = config.window;
    if epochs.len() < 2 * w {
        return false;
    }
    let mean = |s: &[EpochRecord]| s.iter().map(|e| e.objective).sum::<f64>() / s.len() as f64;
    let len = epochs.len();
    let prev = mean(&epochs[len - 2 * w..len - w]);
    let last = mean(&epochs[len - w..]);
    (last - prev).abs() <= config.tol * prev.abs().max(f64::MIN_POSITIVE)
}

fn start_or_default(problem: &Problem<'_>, start: Option<PolicyVector>) -> Result<PolicyVector> {
    match start {
        Some(s) => Ok(s),
        None => initial_policy(problem.net, problem.models),
    }
}

/// Projected subgradient descent on cost plus `lambda * |S|_1`.
pub fn ssgd(problem: &Problem<'_>, config: &OptConfig, seed: u64, start: Option<PolicyVector>) -> Result<OptRunRecord> {
    let start = start_or_default(problem, start)?;
    run(problem, config, RunSpec::new(Method::Ssgd, seed, start), &mut ())
}

/// Stochastic FISTA with the L1 prox.
pub fn fista(problem: &Problem<'_>, config: &OptConfig, seed: u64, start: Option<PolicyVector>) -> Result<OptRunRecord> {
    let start = start_or_default(problem, start)?;
    run(problem, config, RunSpec::new(Method::Fista, seed, start), &mut ())
}

/// Plain projected SGD (no regularizer).
pub fn sgd(problem: &Problem<'_>, config: &OptConfig, seed: u64, start: Option<PolicyVector>) -> Result<OptRunRecord> {
    let start = start_or_default(problem, start)?;
    run(problem, config, RunSpec::new(Method::Sgd, seed, start), &mut ())
}

/// `max(1e-3 * median(positive levels), 1e-6)`.
pub fn default_zero_threshold(s: &[f64]) -> f64 {
    let mut pos: Vec<f64> = s.iter().copied().filter(|&v| v > 0.0).collect();
    if pos.is_empty() {
        return 1e-6;
    }
    pos.sort_by(f64::total_cmp);
    let m = pos.len();
    let median = if m % 2 == 1 {
        pos[m / 2]
    } else {
        0.5 * (pos[m / 2 - 1] + pos[m / 2])
    };
    (1e-3 * median).max(1e-6)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStageResult {
    pub stage1: OptRunRecord,
    pub stage2: OptRunRecord,
    pub zero_threshold: f64,
    pub support: Vec<bool>,
    pub policy: PolicyVector,
}

/// Stage 1: FISTA on the regularized problem picks the stocking items.
/// Stage 2: SGD with `lambda = 0` on that support, warm-started from stage 1.
pub fn two_stage(
    problem: &Problem<'_>,
    config: &OptConfig,
    seed: u64,
    start: Option<PolicyVector>,
    sinks: (&mut dyn EpochSink, &mut dyn EpochSink),
    resume: (Vec<EpochRecord>, Vec<EpochRecord>),
) -> Result<TwoStageResult> {
    let start = start_or_default(problem, start)?;
    let mut spec1 = RunSpec::new(Method::Fista, derive_seed(seed, 1), start);
    spec1.stage = Stage::Stage1;
    spec1.resume = resume.0;
    let stage1 = run(problem, config, spec1, sinks.0)?;

    let s1 = &stage1.final_policy.0;
    let eps = config.zero_threshold.unwrap_or_else(|| default_zero_threshold(s1));
    let support: Vec<bool> = s1.iter().map(|&v| v > eps).collect();
    if !support.iter().any(|&b| b) {
        return Err(Error::EmptySupport);
    }
    let warm = PolicyVector(s1.iter().zip(&support).map(|(&v, &keep)| if keep { v } else { 0.0 }).collect());
    let mut spec2 = RunSpec::new(Method::Sgd, derive_seed(seed, 2), warm);
    spec2.stage = Stage::Stage2;
    spec2.mask = Some(&support);
    spec2.resume = resume.1;
    let stage2 = run(problem, config, spec2, sinks.1)?;
    let policy = stage2.final_policy.clone();
    Ok(TwoStageResult {
        stage1,
        stage2,
        zero_threshold: eps,
        support,
        policy,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub lambda: f64,
    pub cost: f64,
    pub std_err: f64,
    pub nonzero: usize,
}

/// FISTA at each `lambda`, each result evaluated on the same `eval_seeds`.
pub fn lambda_sweep(
    problem: &Problem<'_>,
    config: &OptConfig,
    lambdas: &[f64],
    seed: u64,
    eval_seeds: &[u64],
) -> Result<Vec<SweepPoint>> {
    lambdas
        .iter()
        .map(|&lambda| {
            let cfg = OptConfig { lambda, ..config.clone() };
            let rec = fista(problem, &cfg, seed, None)?;
            let eval = problem.evaluate(&rec.final_policy, eval_seeds)?;
            Ok(SweepPoint {
                lambda,
                cost: eval.mean,
                std_err: eval.std_err,
                nonzero: rec.final_policy.nonzero_count(),
            })
        })
        .collect()
}

/// `count` values spaced evenly in log scale from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|k| (lo.ln() + (hi.ln() - lo.ln()) * k as f64 / (count - 1) as f64).exp())
            .collect(),
    }
}
