//! The acceptance criteria as runnable checks.
//!
//! `biharm check` runs the fast ones; the acceptance test target runs all
//! nine. Each check returns whether it passed and a one-line measurement.

use std::f64::consts::PI;
use std::time::Instant;

use biharm_core::diffengine::{biharmonic, fd_discrepancies};
use biharm_core::network::{
    activation_value, forward_batch, init_params, to_expr, Activation, NetworkSpec,
};
use biharm_core::problems::{registry, ProblemSpec, REGISTRY};
use biharm_core::residuals::{Assembler, PreparedBatch, Strategy};
use biharm_core::sampling::{random_test_points, SampleBatch};
use biharm_core::training::{lr_at, penalty_at, Schedule, TrainOutcome, TrainStatus, Trainer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{num_complex::Complex, FftPlanner};

use crate::config::RunConfig;
use crate::experiment::{median, run_experiment};
use crate::formats;
use crate::RunnerError;

pub const FD_LOW_TOL: f64 = 1e-5;
pub const FD_HIGH_TOL: f64 = 1e-3;
pub const GRAD_TOL: f64 = 1e-6;
pub const ULP_TOL: u64 = 4;
pub const CONSISTENCY_TOL: f64 = 1e-8;
pub const PAPER_VALUE_TOL: f64 = 1e-10;
pub const DESK_REL_TOL: f64 = 1e-2;
pub const LOSS_DROP: f64 = 10.0;
pub const SPECTRAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub passed: bool,
    pub detail: String,
}

pub struct Criterion {
    pub id: u32,
    pub name: &'static str,
    /// Trains networks for minutes; skipped by a plain `biharm check`.
    pub slow: bool,
    pub run: fn() -> Result<Outcome, RunnerError>,
}

pub const CRITERIA: [Criterion; 9] = [
    Criterion { id: 1, name: "derivative engine vs finite differences", slow: false, run: fd_suite },
    Criterion { id: 2, name: "gaussian and tanh derivative identities", slow: false, run: activation_identities },
    Criterion { id: 3, name: "problem consistency", slow: false, run: problem_consistency },
    Criterion { id: 4, name: "penalty and learning-rate schedules", slow: false, run: schedules },
    Criterion { id: 5, name: "desk-scale training, sine Dirichlet problem", slow: true, run: desk_training },
    Criterion { id: 6, name: "coupled+fourier beats mim, exponential problem", slow: true, run: ordering },
    Criterion { id: 7, name: "fourier layer spectrum", slow: false, run: spectrum },
    Criterion { id: 8, name: "8D smoke run", slow: true, run: smoke_8d },
    Criterion { id: 9, name: "determinism from manifest", slow: false, run: determinism },
];

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ")
}

fn outcome(passed: bool, detail: String) -> Result<Outcome, RunnerError> {
    Ok(Outcome { passed, detail })
}

fn random_network(rng: &mut ChaCha8Rng, d: usize) -> NetworkSpec {
    const SMOOTH: [Activation; 5] = [
        Activation::Sin,
        Activation::Tanh,
        Activation::Sigmoid,
        Activation::Gaussian,
        Activation::Gelu,
    ];
    let layers = rng.random_range(1..=3);
    let hidden: Vec<usize> = (0..layers).map(|_| rng.random_range(1..=8)).collect();
    let out = [1, 2, 2 + d][rng.random_range(0..3)];
    let mut spec = NetworkSpec::mlp(d, hidden, Activation::Sin, out);
    for a in &mut spec.activations {
        *a = SMOOTH[rng.random_range(0..SMOOTH.len())];
    }
    spec
}

/// Largest relative discrepancy between assembled and finite-difference
/// gradients of the total loss.
fn gradient_discrepancy(problem: &ProblemSpec, strategy: Strategy, seed: u64) -> Result<f64, RunnerError> {
    let d = problem.dim();
    let spec = NetworkSpec::mlp(d, vec![4, 4], Activation::Tanh, strategy.output_dim(d));
    let mut expr = to_expr(&spec, &init_params(&spec, seed)?)?;
    let s = SampleBatch::draw(&problem.domain, 12, 4 * d, seed, 0)?;
    let batch = PreparedBatch::new(problem, s.interior, s.boundary, s.normals)?;
    let asm = Assembler::new(problem, strategy)?;
    let gamma = 7.0;
    let (_, grad) = asm.loss_and_gradient(&expr, &batch, gamma)?;
    let theta = expr.params();
    let h = 1e-5;
    let (mut err, mut scale) = (0.0f64, 0.0f64);
    for k in 0..theta.len() {
        let mut t = theta.clone();
        t[k] += h;
        expr.set_params(&t)?;
        let up = asm.loss_and_gradient(&expr, &batch, gamma)?.0.total;
        t[k] = theta[k] - h;
        expr.set_params(&t)?;
        let down = asm.loss_and_gradient(&expr, &batch, gamma)?.0.total;
        let fd = (up - down) / (2.0 * h);
        err = err.max((fd - grad[k]).abs());
        scale = scale.max(fd.abs());
    }
    Ok(err / scale.max(f64::MIN_POSITIVE))
}

/// 50 random smooth networks against nested central differences, and the
/// assembled gradient of every strategy's loss against finite differences.
pub fn fd_suite() -> Result<Outcome, RunnerError> {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut low, mut high) = (0.0f64, 0.0f64);
    for i in 0..50 {
        let d = 1 + i % 3;
        let spec = random_network(&mut rng, d);
        let expr = to_expr(&spec, &init_params(&spec, i as u64)?)?;
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lo = fd_discrepancies(&expr, &x, 2, 1e-3)?;
        let hi = fd_discrepancies(&expr, &x, 4, 1e-2)?;
        low = low.max(lo[0]).max(lo[1]);
        high = high.max(hi[2]).max(hi[3]);
    }
    let mut grad: f64 = 0.0;
    for name in ["d2-dirichlet-sin", "d2-navier-sin", "d3-dirichlet-exp"] {
        let problem = registry(name)?;
        for strategy in Strategy::ALL {
            grad = grad.max(gradient_discrepancy(&problem, strategy, 5)?);
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        low <= FD_LOW_TOL && high <= FD_HIGH_TOL && grad <= GRAD_TOL && secs < 120.0,
        format!("orders 1-2 {low:.2e}, orders 3-4 {high:.2e}, loss gradients {grad:.2e}, {secs:.1}s"),
    )
}

fn ulps(a: f64, b: f64) -> u64 {
    if a == b {
        return 0;
    }
    let key = |x: f64| {
        let i = x.to_bits() as i64;
        if i < 0 {
            i64::MIN - i
        } else {
            i
        }
    };
    key(a).abs_diff(key(b))
}

/// Fourth derivatives of the Gaussian and tanh against their closed forms.
pub fn activation_identities() -> Result<Outcome, RunnerError> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0u64;
    for _ in 0..1000 {
        let x: f64 = rng.random_range(-4.0..4.0);
        let e = libm::exp(-x * x);
        let t = libm::tanh(x);
        let g4 = 12.0 * e - 48.0 * x * x * e + 16.0 * x * x * x * x * e;
        let t4 = (16.0 * t - 24.0 * t * t * t) * (1.0 - t * t);
        worst = worst.max(ulps(activation_value("gaussian", x, 4)?, g4));
        worst = worst.max(ulps(activation_value("tanh", x, 4)?, t4));
    }
    outcome(worst <= ULP_TOL, format!("worst {worst} ulp over 1000 points"))
}

/// Every registry problem satisfies its own equation; two printed values.
pub fn problem_consistency() -> Result<Outcome, RunnerError> {
    let mut worst: f64 = 0.0;
    for name in REGISTRY {
        let p = registry(name)?;
        let pts = random_test_points(&p.domain, 200, 11);
        worst = worst.max(p.consistency_residual(&pts)?);
    }
    let p3 = registry("d3-dirichlet-exp")?;
    let at_origin = biharmonic(p3.exact.as_ref().expect("exact"), &[0.0; 3])?;
    let e3 = (at_origin - 225.0 / 128.0).abs();
    let p4 = registry("d2-navier-harmonic")?;
    let f4 = p4
        .force_tilde(&random_test_points(&p4.domain, 200, 12))?
        .into_iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    outcome(
        worst <= CONSISTENCY_TOL && e3 <= PAPER_VALUE_TOL && f4 <= PAPER_VALUE_TOL,
        format!("max rel residual {worst:.2e}; Δ²u*(0) off by {e3:.1e}; harmonic force {f4:.1e}"),
    )
}

pub fn schedules() -> Result<Outcome, RunnerError> {
    let m = 10_000;
    let table = [(0, 10.0), (1000, 100.0), (2000, 500.0), (2500, 1000.0), (5000, 2000.0), (7500, 5000.0)];
    let mut ok = true;
    let mut prev = None;
    for (start, value) in table {
        ok &= penalty_at(start, m, 10.0) == value;
        ok &= penalty_at(start + 1, m, 10.0) == value;
        if let Some(p) = prev {
            ok &= penalty_at(start - 1, m, 10.0) == p;
        }
        prev = Some(value);
    }
    ok &= penalty_at(m, m, 10.0) == 5000.0;
    let lr = lr_at(250, &Schedule::default());
    let lr_ok = (lr - 0.00950625).abs() <= 1e-15 * 0.00950625;
    outcome(ok && lr_ok, format!("staircase {}; lr(250) = {lr}", if ok { "exact" } else { "wrong" }))
}

/// Desk-scale configuration shared by the training checks.
pub fn desk_config(problem: &str, strategy: Strategy, fourier: bool) -> RunConfig {
    RunConfig {
        problem: problem.into(),
        strategy,
        fourier,
        hidden: vec![30, 30, 30, 30],
        n_interior: 1000,
        n_boundary: 800,
        iters: 5000,
        eval_every: 1000,
        ..RunConfig::default()
    }
}

fn train_config(c: &RunConfig, seed: u64) -> Result<TrainOutcome, RunnerError> {
    let problem = crate::problem_file::load_problem(&c.problem)?;
    let d = problem.dim();
    let mut t = Trainer::new(&problem, c.solver(d), c.schedule(), seed)?;
    let st = t.initial_state()?;
    Ok(t.run(st))
}

pub fn desk_training() -> Result<Outcome, RunnerError> {
    let c = desk_config("d2-dirichlet-sin", Strategy::Coupled, true);
    let mut rels = Vec::new();
    let mut drops = Vec::new();
    for seed in 0..3 {
        let out = train_config(&c, seed)?;
        if out.status != TrainStatus::Completed {
            return outcome(false, format!("seed {seed}: {:?}", out.status));
        }
        let h = &out.state.history;
        rels.push(out.final_rel().unwrap_or(f64::INFINITY));
        drops.push(h[0].total / h[h.len() - 1].total);
    }
    let med = median(&rels).unwrap_or(f64::INFINITY);
    let min_drop = drops.iter().copied().fold(f64::INFINITY, f64::min);
    outcome(
        med <= DESK_REL_TOL && min_drop >= LOSS_DROP,
        format!("median REL {med:.3e} (seeds {}); loss drop ≥ {min_drop:.1e}x", fmt_list(&rels)),
    )
}

pub fn ordering() -> Result<Outcome, RunnerError> {
    let fcp = desk_config("d2-dirichlet-exp", Strategy::Coupled, true);
    let mim = desk_config("d2-dirichlet-exp", Strategy::Mim, false);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    let mut seeds = 0;
    for round in [3, 7] {
        while seeds < round {
            a.push(train_config(&fcp, seeds)?.final_rel().unwrap_or(f64::INFINITY));
            b.push(train_config(&mim, seeds)?.final_rel().unwrap_or(f64::INFINITY));
            seeds += 1;
        }
        let (ma, mb) = (median(&a).unwrap_or(f64::INFINITY), median(&b).unwrap_or(f64::INFINITY));
        if ma <= mb || round == 7 {
            return outcome(
                ma <= mb,
                format!("{seeds} seeds: coupled+fourier median REL {ma:.3e}, mim {mb:.3e}"),
            );
        }
    }
    unreachable!("the last round always returns")
}

/// One Fourier layer and a linear read-out: a DFT along a period of
/// `x ↦ u(x)` has energy only at the frequencies in `Λ` (plus the bias).
pub fn spectrum() -> Result<Outcome, RunnerError> {
    let spec = NetworkSpec::fourier(1, vec![30], Activation::Sin, 1);
    let mut params = init_params(&spec, 3)?;
    // integer frequencies need unit first-layer weights
    params.weight_mut(0).fill(1.0);
    let expr = to_expr(&spec, &params)?;
    let n = 128;
    let xs: Vec<f64> = (0..n).map(|i| 2.0 * PI * i as f64 / n as f64).collect();
    let u = forward_batch(&expr, &xs)?;
    let mut buf: Vec<Complex<f64>> = u.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let energy: Vec<f64> = buf.iter().map(|c| c.norm_sqr()).collect();
    let total: f64 = energy.iter().sum();
    let outside: f64 = energy
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != 0 && !spec.lambda.contains(&(k.min(n - k) as f64)))
        .map(|(_, e)| e)
        .sum();
    let ratio = outside / total;
    outcome(total > 0.0 && ratio <= SPECTRAL_TOL, format!("out-of-band energy fraction {ratio:.2e}"))
}

pub fn smoke_8d() -> Result<Outcome, RunnerError> {
    let c = RunConfig {
        problem: "d8-navier-trig".into(),
        strategy: Strategy::Coupled,
        fourier: true,
        hidden: vec![40, 100, 80, 80],
        n_interior: 2000,
        n_boundary: 800,
        iters: 500,
        eval_every: 100,
        ..RunConfig::default()
    };
    let t0 = Instant::now();
    let out = train_config(&c, 0)?;
    let secs = t0.elapsed().as_secs_f64();
    let h = &out.state.history;
    let (first, last) = (h[0].total, h[h.len() - 1].total);
    outcome(
        out.status == TrainStatus::Completed && last < first && secs <= 1200.0,
        format!(
            "{:?}; loss {first:.3e} → {last:.3e}; REL {:.3e}; {secs:.0}s",
            out.status,
            out.final_rel().unwrap_or(f64::NAN)
        ),
    )
}

/// Runs a short experiment, then reruns it from its manifest into a second
/// directory and compares the history files byte for byte.
pub fn determinism() -> Result<Outcome, RunnerError> {
    let root = std::env::temp_dir().join(format!("biharm-determinism-{}", std::process::id()));
    let mut c = desk_config("d2-dirichlet-sin", Strategy::Mim, true);
    c.iters = 40;
    c.eval_every = 10;
    c.n_interior = 200;
    c.n_boundary = 100;
    c.seeds = vec![1, 2];
    c.out = root.join("a");
    let first = run_experiment(&c, false)?;
    let manifest = std::fs::read_to_string(first.dir.join("manifest.txt"))?;
    let mut again = RunConfig::parse(&manifest)?;
    again.out = root.join("b");
    let second = run_experiment(&again, false)?;
    let mut same = true;
    for seed in &c.seeds {
        let name = format!("history_seed{seed}.csv");
        same &= formats::read_bytes(&first.dir.join(&name))? == formats::read_bytes(&second.dir.join(&name))?;
    }
    let _ = std::fs::remove_dir_all(&root);
    outcome(same, format!("{} seeds, histories {}", c.seeds.len(), if same { "identical" } else { "differ" }))
}
