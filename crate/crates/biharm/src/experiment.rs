//! Running configured experiments and writing their artifacts.

use std::path::{Path, PathBuf};
use std::time::Instant;

use biharm_core::problems::ProblemSpec;
use biharm_core::sampling::{default_test_set, TestSetKind};
use biharm_core::training::{
    TrainOutcome, TrainState, TrainStatus, Trainer, ADAM_BETA1, ADAM_BETA2, ADAM_EPS, TEST_SEED,
};

use crate::config::RunConfig;
use crate::formats::{self, ErrorGrid, SummaryRow};
use crate::problem_file::load_problem;
use crate::RunnerError;

/// Identifier of the random number generator, recorded in manifests.
pub const RNG_ID: &str = "chacha20(seed, purpose, draw)";

#[derive(Debug, Clone, PartialEq)]
pub struct SeedReport {
    pub seed: u64,
    pub status: TrainStatus,
    pub final_rel: Option<f64>,
    pub initial_loss: Option<f64>,
    pub final_loss: Option<f64>,
    pub iterations: usize,
    pub seconds: f64,
}

impl SeedReport {
    pub fn diverged(&self) -> bool {
        matches!(self.status, TrainStatus::Diverged { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub dir: PathBuf,
    pub seeds: Vec<SeedReport>,
    pub summary: SummaryRow,
}

impl RunReport {
    pub fn all_diverged(&self) -> bool {
        self.seeds.iter().all(SeedReport::diverged)
    }
}

/// Median of the finite values, `None` if there are none.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// The manifest: the configuration plus informational keys.
pub fn manifest_text(config: &RunConfig, problem: &ProblemSpec) -> String {
    let d = problem.dim();
    let (kind, _) = default_test_set(&problem.domain, TEST_SEED);
    let test_set = match kind {
        TestSetKind::Grid { resolution } => format!("grid {resolution}^{d}"),
        TestSetKind::Random { count } => format!("random {count} seed {TEST_SEED}"),
    };
    let mut s = config.to_text();
    s.push_str(&format!("version = {}\n", env!("CARGO_PKG_VERSION")));
    s.push_str(&format!("rng = {RNG_ID}\n"));
    s.push_str(&format!("adam_beta1 = {ADAM_BETA1}\nadam_beta2 = {ADAM_BETA2}\nadam_eps = {ADAM_EPS}\n"));
    s.push_str(&format!("test_set = {test_set}\n"));
    s.push_str(&format!("problem_dim = {d}\n"));
    s.push_str(&format!("param_count = {}\n", config.network(d).param_count()));
    s
}

fn checkpoint_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("checkpoint_seed{seed}.bin"))
}

/// Trains one seed, writing a checkpoint every `checkpoint_every` iterations.
/// With `resume`, starts from an existing checkpoint for this seed.
fn train_seed(
    trainer: &mut Trainer<'_>,
    config: &RunConfig,
    dir: &Path,
    seed: u64,
    resume: bool,
) -> Result<TrainOutcome, RunnerError> {
    let ckpt = checkpoint_path(dir, seed);
    let mut state: TrainState = if resume && ckpt.is_file() {
        let spec = trainer.config().network.clone();
        let (s, st) = formats::decode_checkpoint(&formats::read_bytes(&ckpt)?, &spec)?;
        if s != seed {
            return Err(RunnerError::Format(format!("checkpoint {} belongs to seed {s}", ckpt.display())));
        }
        st
    } else {
        trainer.initial_state()?
    };
    let every = config.checkpoint_every;
    loop {
        let stop = if every > 0 { (state.k / every + 1) * every } else { usize::MAX };
        let out = trainer.run_until(state, stop);
        if every > 0 {
            formats::write_bytes(&ckpt, &formats::encode_checkpoint(seed, &out.state))?;
        }
        let paused = out.status == TrainStatus::Completed && !out.state.finished;
        if !paused {
            return Ok(out);
        }
        state = out.state;
    }
}

/// Runs every seed of `config` and writes the artifacts into
/// `<out>/<label>/`.
pub fn run_experiment(config: &RunConfig, resume: bool) -> Result<RunReport, RunnerError> {
    config.validate()?;
    let problem = load_problem(&config.problem)?;
    let d = problem.dim();
    let dir = config.out.join(config.label());
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("manifest.txt"), manifest_text(config, &problem))?;

    let mut seeds = Vec::new();
    for &seed in &config.seeds {
        let mut trainer = Trainer::new(&problem, config.solver(d), config.schedule(), seed)
            .map_err(|e| RunnerError::Config(e.to_string()))?;
        let t0 = Instant::now();
        let out = train_seed(&mut trainer, config, &dir, seed, resume)?;
        let seconds = t0.elapsed().as_secs_f64();
        formats::write_history(&dir.join(format!("history_seed{seed}.csv")), &out.state.history)?;
        formats::write_bytes(
            &dir.join(format!("params_seed{seed}.bin")),
            &formats::encode_params(out.state.params.flat()),
        )?;
        write_grid(&mut trainer, &problem, &out.state, &dir.join(format!("errorgrid_seed{seed}.csv")))?;
        let h = &out.state.history;
        seeds.push(SeedReport {
            seed,
            final_rel: out.final_rel(),
            initial_loss: h.first().map(|r| r.total),
            final_loss: h.last().map(|r| r.total),
            iterations: out.state.k,
            seconds,
            status: out.status,
        });
    }
    let summary = summarize(config, &problem, &seeds);
    formats::write_summary(&dir.join("summary.csv"), std::slice::from_ref(&summary))?;
    Ok(RunReport { dir, seeds, summary })
}

fn write_grid(trainer: &mut Trainer<'_>, problem: &ProblemSpec, state: &TrainState, path: &Path) -> Result<(), RunnerError> {
    let d = problem.dim();
    let points = trainer.test_points().to_vec();
    let out = trainer.predict(&state.params, &points)?;
    let c = trainer.config().network.output_dim;
    let u_nn: Vec<f64> = out.chunks(c).map(|r| r[0]).collect();
    let v_nn: Option<Vec<f64>> = (c >= 2).then(|| out.chunks(c).map(|r| r[1]).collect());
    let u_exact = trainer.test_truth().map(<[f64]>::to_vec);
    let v_exact = match (&problem.exact, &v_nn) {
        (Some(_), Some(_)) => Some(problem.exact_laplacian(&points)?),
        _ => None,
    };
    formats::write_error_grid(
        path,
        &ErrorGrid {
            dim: d,
            points: &points,
            u_exact: u_exact.as_deref(),
            u_nn: &u_nn,
            v: v_nn.as_deref().map(|v| (v_exact.as_deref(), v)),
        },
    )
}

fn summarize(config: &RunConfig, problem: &ProblemSpec, seeds: &[SeedReport]) -> SummaryRow {
    let ok: Vec<&SeedReport> = seeds.iter().filter(|s| !s.diverged()).collect();
    let rels: Vec<f64> = ok.iter().filter_map(|s| s.final_rel).collect();
    let losses: Vec<f64> = ok.iter().filter_map(|s| s.final_loss).collect();
    let seconds: f64 = seeds.iter().map(|s| s.seconds).sum();
    let iters: usize = seeds.iter().map(|s| s.iterations).sum();
    SummaryRow {
        label: config.label(),
        problem: problem.name.clone(),
        strategy: config.strategy.to_string(),
        fourier: config.fourier,
        activation: config.activation.to_string(),
        hidden: config.hidden.iter().map(|h| h.to_string()).collect::<Vec<_>>().join("x"),
        seeds: seeds.len(),
        completed: ok.len(),
        median_rel: median(&rels),
        best_rel: rels.iter().copied().min_by(f64::total_cmp),
        sec_per_iter: if iters > 0 { seconds / iters as f64 } else { 0.0 },
        seconds,
        median_final_loss: median(&losses),
    }
}

/// Runs each configuration and writes `<out>/compare.csv`, one row per
/// configuration sorted by median REL.
pub fn compare(configs: &[RunConfig], out: &Path) -> Result<Vec<SummaryRow>, RunnerError> {
    let first = configs.first().ok_or_else(|| RunnerError::Config("nothing to compare".into()))?;
    if let Some(c) = configs.iter().find(|c| c.problem != first.problem) {
        return Err(RunnerError::Config(format!(
            "all compared runs must use one problem, got `{}` and `{}`",
            first.problem, c.problem
        )));
    }
    let mut labels: Vec<String> = configs.iter().map(RunConfig::label).collect();
    labels.sort();
    labels.dedup();
    if labels.len() != configs.len() {
        return Err(RunnerError::Config("compared runs must have distinct labels".into()));
    }
    let mut rows = Vec::new();
    for c in configs {
        rows.push(run_experiment(c, false)?.summary);
    }
    rows.sort_by(|a, b| match (a.median_rel, b.median_rel) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    std::fs::create_dir_all(out)?;
    formats::write_summary(&out.join("compare.csv"), &rows)?;
    Ok(rows)
}
