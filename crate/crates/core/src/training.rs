//! Optimization loop: Adam (or plain gradient descent) on freshly sampled
//! batches, with a stepwise learning-rate decay and a staircase penalty on the
//! boundary loss.
//!
//! Iteration `k` draws its batch from `(seed, k)`, evaluates the loss at
//! `γ = penalty(k)`, records it, then steps with `lr(k)`. Since every random
//! stream is keyed by the iteration, a run resumed from a [`TrainState`]
//! continues bit for bit as if it had never stopped.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::diffengine::FieldExpr;
use crate::math;
use crate::metrics::{rel_error, RelForm};
use crate::network::{expr_params, forward_batch, init_params, pull_back_gradient, to_expr, NetworkSpec, Params};
use crate::problems::ProblemSpec;
use crate::residuals::{Assembler, LossBreakdown, PreparedBatch, Strategy};
use crate::sampling::{default_test_set, SampleBatch};
use crate::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Seed of the random test set used in high dimension. Fixed so that runs
/// with different training seeds are scored on the same points.
pub const TEST_SEED: u64 = 0;

/// Boundary penalty as a function of the iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Penalty {
    /// The six-step staircase from `β₀` to `500β₀`, see [`penalty_at`].
    Staircase,
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub lr0: f64,
    /// Fraction the learning rate loses every `lr_interval` iterations.
    pub lr_decay: f64,
    pub lr_interval: usize,
    pub beta0: f64,
    pub penalty: Penalty,
    pub max_iters: usize,
    pub eval_every: usize,
}

impl Default for Schedule {
    fn default() -> Schedule {
        Schedule {
            lr0: 0.01,
            lr_decay: 0.025,
            lr_interval: 100,
            beta0: 10.0,
            penalty: Penalty::Staircase,
            max_iters: 50_000,
            eval_every: 1000,
        }
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr0 > 0.0
            && self.lr0.is_finite()
            && (0.0..1.0).contains(&self.lr_decay)
            && self.lr_interval > 0
            && self.beta0 > 0.0
            && self.eval_every > 0
            && match self.penalty {
                Penalty::Staircase => true,
                Penalty::Constant(g) => g > 0.0 && g.is_finite(),
            };
        if !ok {
            return Err(Error::InvalidArgument(format!("invalid schedule {self:?}")));
        }
        Ok(())
    }

    pub fn gamma_at(&self, k: usize) -> f64 {
        match self.penalty {
            Penalty::Staircase => penalty_at(k, self.max_iters, self.beta0),
            Penalty::Constant(g) => g,
        }
    }
}

/// Staircase penalty over the run `0..m_max`, on left-closed intervals:
/// `β₀` before 10%, then `10β₀`, `50β₀` from 20%, `100β₀` from 25%,
/// `200β₀` from 50% and `500β₀` from 75%.
pub fn penalty_at(k: usize, m_max: usize, beta0: f64) -> f64 {
    // integer comparisons keep the breakpoints exact
    let (k, m) = (k as u128, m_max as u128);
    let factor = if 10 * k < m {
        1.0
    } else if 5 * k < m {
        10.0
    } else if 4 * k < m {
        50.0
    } else if 2 * k < m {
        100.0
    } else if 4 * k < 3 * m {
        200.0
    } else {
        500.0
    };
    factor * beta0
}

/// `lr0 · (1 − lr_decay)^⌊k / lr_interval⌋`.
pub fn lr_at(k: usize, schedule: &Schedule) -> f64 {
    let steps = k / schedule.lr_interval;
    schedule.lr0 * math::powi(1.0 - schedule.lr_decay, steps.min(i32::MAX as usize) as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Optimizer {
    #[default]
    Adam,
    /// Plain gradient descent.
    Sgd,
}

/// Adam moments and step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> AdamState {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

fn check_grads(grads: &[f64], n: usize) -> Result<()> {
    if grads.len() != n {
        return Err(Error::DimensionMismatch(format!("{} gradient entries for {n} parameters", grads.len())));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient entry {i} is {}", grads[i])));
    }
    Ok(())
}

/// Bias-corrected Adam update. Leaves everything untouched on a non-finite
/// gradient.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
    check_grads(grads, params.len())?;
    if state.m.len() != params.len() {
        return Err(Error::DimensionMismatch("Adam moments do not match the parameters".into()));
    }
    state.t += 1;
    let t = state.t.min(i32::MAX as u64) as i32;
    let c1 = 1.0 - math::powi(ADAM_BETA1, t);
    let c2 = 1.0 - math::powi(ADAM_BETA2, t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
        let mh = state.m[i] / c1;
        let vh = state.v[i] / c2;
        params[i] -= lr * mh / (math::sqrt(vh) + ADAM_EPS);
    }
    Ok(())
}

pub fn sgd_step(params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
    check_grads(grads, params.len())?;
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
    Ok(())
}

/// Everything about a run except the problem, schedule and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub strategy: Strategy,
    pub network: NetworkSpec,
    pub n_interior: usize,
    pub n_boundary: usize,
    pub optimizer: Optimizer,
    /// Reuse the batch of iteration 0 throughout (for debugging).
    pub frozen_batch: bool,
    pub rel_form: RelForm,
    /// Stop once the test REL drops below this value (checked at evaluations).
    pub rel_target: Option<f64>,
}

impl SolverConfig {
    pub fn new(strategy: Strategy, network: NetworkSpec) -> SolverConfig {
        SolverConfig {
            strategy,
            network,
            n_interior: 3000,
            n_boundary: 2000,
            optimizer: Optimizer::Adam,
            frozen_batch: false,
            rel_form: RelForm::Global,
            rel_target: None,
        }
    }
}

/// One line of the training history. The losses are those of the batch and
/// parameters at the start of iteration `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRecord {
    pub k: usize,
    pub interior: f64,
    pub boundary: f64,
    pub gamma: f64,
    pub total: f64,
    pub lr: f64,
    pub rel: Option<f64>,
}

impl HistoryRecord {
    fn new(k: usize, loss: LossBreakdown, lr: f64, rel: Option<f64>) -> HistoryRecord {
        HistoryRecord {
            k,
            interior: loss.interior,
            boundary: loss.boundary,
            gamma: loss.gamma,
            total: loss.total,
            lr,
            rel,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: Params,
    pub adam: AdamState,
    /// Next iteration to run.
    pub k: usize,
    pub history: Vec<HistoryRecord>,
    /// Set once the closing record at `k = max_iters` has been written.
    pub finished: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainStatus {
    Completed,
    /// The REL target was met at iteration `k`.
    EarlyStopped { k: usize },
    /// A loss or gradient went non-finite at iteration `k`; the history up to
    /// that point is kept.
    Diverged { k: usize, reason: Error },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub status: TrainStatus,
}

impl TrainOutcome {
    pub fn final_rel(&self) -> Option<f64> {
        self.state.history.iter().rev().find_map(|r| r.rel)
    }
}

/// A configured run on one problem.
#[derive(Debug, Clone)]
pub struct Trainer<'a> {
    problem: &'a ProblemSpec,
    config: SolverConfig,
    schedule: Schedule,
    seed: u64,
    assembler: Assembler,
    expr: FieldExpr,
    test_points: Vec<f64>,
    truth: Option<Vec<f64>>,
}

impl<'a> Trainer<'a> {
    /// Scores on the problem's default test set.
    pub fn new(problem: &'a ProblemSpec, config: SolverConfig, schedule: Schedule, seed: u64) -> Result<Trainer<'a>> {
        let (_, points) = default_test_set(&problem.domain, TEST_SEED);
        Trainer::with_test_set(problem, config, schedule, seed, points)
    }

    pub fn with_test_set(
        problem: &'a ProblemSpec,
        config: SolverConfig,
        schedule: Schedule,
        seed: u64,
        test_points: Vec<f64>,
    ) -> Result<Trainer<'a>> {
        problem.validate()?;
        schedule.validate()?;
        let d = problem.dim();
        let spec = &config.network;
        spec.validate()?;
        if spec.input_dim != d || spec.output_dim != config.strategy.output_dim(d) {
            return Err(Error::DimensionMismatch(format!(
                "the {} strategy in {d}D needs a network {d} → {}, got {} → {}",
                config.strategy,
                config.strategy.output_dim(d),
                spec.input_dim,
                spec.output_dim
            )));
        }
        if config.n_interior == 0 {
            return Err(Error::InvalidArgument("at least one interior point is needed".into()));
        }
        let assembler = Assembler::new(problem, config.strategy)?;
        let expr = to_expr(spec, &Params::zeros(spec)?)?;
        let truth = match &problem.exact {
            Some(_) if !test_points.is_empty() => Some(problem.exact_values(&test_points)?),
            _ => None,
        };
        Ok(Trainer {
            problem,
            config,
            schedule,
            seed,
            assembler,
            expr,
            test_points,
            truth,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn test_points(&self) -> &[f64] {
        &self.test_points
    }

    pub fn test_truth(&self) -> Option<&[f64]> {
        self.truth.as_deref()
    }

    pub fn initial_state(&self) -> Result<TrainState> {
        let params = init_params(&self.config.network, self.seed)?;
        let n = params.len();
        Ok(TrainState {
            params,
            adam: AdamState::new(n),
            k: 0,
            history: Vec::new(),
            finished: false,
        })
    }

    /// Collocation batch of iteration `k`.
    pub fn batch(&self, k: usize) -> Result<PreparedBatch> {
        let draw = if self.config.frozen_batch { 0 } else { k as u64 };
        let s = SampleBatch::draw(
            &self.problem.domain,
            self.config.n_interior,
            self.config.n_boundary,
            self.seed,
            draw,
        )?;
        PreparedBatch::new(self.problem, s.interior, s.boundary, s.normals)
    }

    fn load(&mut self, params: &Params) -> Result<()> {
        self.expr.set_params(&expr_params(&self.config.network, params)?)
    }

    /// Network outputs at `points`, row-major `[point][channel]`.
    pub fn predict(&mut self, params: &Params, points: &[f64]) -> Result<Vec<f64>> {
        self.load(params)?;
        forward_batch(&self.expr, points)
    }

    /// Test-set REL of the `u` channel, if the exact solution is known.
    pub fn rel(&mut self, params: &Params) -> Result<Option<f64>> {
        let Some(truth) = self.truth.clone() else {
            return Ok(None);
        };
        let out = self.predict(params, &self.test_points.clone())?;
        let c = self.config.network.output_dim;
        let u: Vec<f64> = out.chunks(c).map(|r| r[0]).collect();
        rel_error(&u, &truth, self.config.rel_form).map(Some)
    }

    /// Loss breakdown and parameter gradient at iteration `k`'s batch and penalty.
    pub fn loss_and_gradient(&mut self, params: &Params, k: usize) -> Result<(LossBreakdown, Vec<f64>)> {
        self.load(params)?;
        let batch = self.batch(k)?;
        let (loss, g) = self.assembler.loss_and_gradient(&self.expr, &batch, self.schedule.gamma_at(k))?;
        Ok((loss, pull_back_gradient(&self.config.network, params, &g)?))
    }

    fn eval_due(&self, k: usize) -> bool {
        k % self.schedule.eval_every == 0
    }

    /// Runs iteration `state.k`: records the loss, then updates the parameters.
    pub fn step(&mut self, state: &mut TrainState) -> Result<()> {
        let k = state.k;
        let (loss, grad) = self.loss_and_gradient(&state.params, k)?;
        let rel = if self.eval_due(k) { self.rel(&state.params)? } else { None };
        let lr = lr_at(k, &self.schedule);
        check_grads(&grad, state.params.len())?;
        state.history.push(HistoryRecord::new(k, loss, lr, rel));
        match self.config.optimizer {
            Optimizer::Adam => adam_step(&mut state.adam, state.params.flat_mut(), &grad, lr)?,
            Optimizer::Sgd => sgd_step(state.params.flat_mut(), &grad, lr)?,
        }
        state.k = k + 1;
        Ok(())
    }

    /// Writes the closing record at `k = state.k` (loss and REL of the final
    /// parameters, no update).
    pub fn finish(&mut self, state: &mut TrainState) -> Result<()> {
        let k = state.k;
        let (loss, _) = self.loss_and_gradient(&state.params, k)?;
        let rel = self.rel(&state.params)?;
        state.history.push(HistoryRecord::new(k, loss, lr_at(k, &self.schedule), rel));
        state.finished = true;
        Ok(())
    }

    /// Runs from `state` until `max_iters`, a met REL target or divergence.
    pub fn run(&mut self, state: TrainState) -> TrainOutcome {
        self.run_until(state, usize::MAX)
    }

    /// Like [`Trainer::run`] but pauses (status `Completed`, no closing
    /// record) once `stop_at` iterations have run.
    pub fn run_until(&mut self, mut state: TrainState, stop_at: usize) -> TrainOutcome {
        if state.finished {
            return TrainOutcome {
                state,
                status: TrainStatus::Completed,
            };
        }
        while state.k < self.schedule.max_iters {
            if state.k >= stop_at {
                return TrainOutcome {
                    state,
                    status: TrainStatus::Completed,
                };
            }
            let k = state.k;
            if let Err(reason) = self.step(&mut state) {
                return TrainOutcome {
                    state,
                    status: TrainStatus::Diverged { k, reason },
                };
            }
            let hit = match (self.config.rel_target, state.history.last().and_then(|r| r.rel)) {
                (Some(target), Some(rel)) => rel <= target,
                _ => false,
            };
            if hit {
                return TrainOutcome {
                    state,
                    status: TrainStatus::EarlyStopped { k },
                };
            }
        }
        let k = state.k;
        match self.finish(&mut state) {
            Ok(()) => TrainOutcome {
                state,
                status: TrainStatus::Completed,
            },
            Err(reason) => TrainOutcome {
                state,
                status: TrainStatus::Diverged { k, reason },
            },
        }
    }
}

/// Trains from scratch. Configuration errors are returned as `Err`;
/// divergence is reported in the outcome.
pub fn train(problem: &ProblemSpec, config: SolverConfig, schedule: Schedule, seed: u64) -> Result<TrainOutcome> {
    let mut t = Trainer::new(problem, config, schedule, seed)?;
    let state = t.initial_state()?;
    Ok(t.run(state))
}
