use std::path::PathBuf;
use std::process::ExitCode;

use biharm::config::RunConfig;
use biharm::experiment::{compare, run_experiment};
use biharm::problem_file::load_problem;
use biharm::suite::CRITERIA;
use biharm::{formats, RunnerError};
use biharm_core::problems::REGISTRY;
use biharm_core::sampling::SampleBatch;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "biharm", version, about = "Train neural solvers for biharmonic problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration over one or more seeds.
    Run {
        #[command(flatten)]
        opts: RunOpts,
        /// Continue from the checkpoints in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Train several configurations of one problem and tabulate them.
    Compare {
        /// Configuration files, one row each.
        configs: Vec<PathBuf>,
        #[command(flatten)]
        opts: RunOpts,
        /// `key=v1;v2;...`: one run per value on top of the other options.
        #[arg(long, value_name = "KEY=VALUES")]
        vary: Option<String>,
    },
    /// Run the acceptance checks.
    Check {
        /// Include the training checks, which take tens of minutes.
        #[arg(long)]
        full: bool,
        /// Only these criteria, e.g. `1,4,9`.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u32>,
    },
    /// Write one training batch to CSV.
    Sample {
        #[arg(long)]
        problem: String,
        #[arg(long, default_value_t = 3000)]
        nin: usize,
        #[arg(long, default_value_t = 2000)]
        nbd: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Draw index (the iteration number during training).
        #[arg(long, default_value_t = 0)]
        draw: u64,
        #[arg(long, default_value = "samples.csv")]
        out: PathBuf,
    },
    /// List the built-in problems.
    Problems,
}

/// Configuration flags; each overrides the same key of `--config`.
#[derive(Args)]
struct RunOpts {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    /// direct, coupled or mim.
    #[arg(long)]
    strategy: Option<String>,
    /// on or off.
    #[arg(long)]
    fourier: Option<String>,
    #[arg(long)]
    act: Option<String>,
    /// Comma-separated widths.
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    iters: Option<String>,
    #[arg(long)]
    nin: Option<String>,
    #[arg(long)]
    nbd: Option<String>,
    /// One seed or a comma-separated list.
    #[arg(long, alias = "seed")]
    seeds: Option<String>,
    /// global or pointwise.
    #[arg(long)]
    rel_form: Option<String>,
    #[arg(long)]
    eval_every: Option<String>,
    #[arg(long)]
    checkpoint_every: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    label: Option<String>,
    /// Any other configuration key, as `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    extra: Vec<String>,
}

impl RunOpts {
    fn apply(&self, c: &mut RunConfig) -> Result<(), RunnerError> {
        let flags = [
            ("problem", &self.problem),
            ("strategy", &self.strategy),
            ("fourier", &self.fourier),
            ("act", &self.act),
            ("hidden", &self.hidden),
            ("lambda", &self.lambda),
            ("iters", &self.iters),
            ("nin", &self.nin),
            ("nbd", &self.nbd),
            ("seeds", &self.seeds),
            ("rel_form", &self.rel_form),
            ("eval_every", &self.eval_every),
            ("checkpoint_every", &self.checkpoint_every),
            ("out", &self.out),
            ("label", &self.label),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                c.set(key, v)?;
            }
        }
        for kv in &self.extra {
            let (k, v) = split_kv(kv)?;
            c.set(k, v)?;
        }
        Ok(())
    }

    fn build(&self) -> Result<RunConfig, RunnerError> {
        let mut c = match &self.config {
            Some(p) => RunConfig::parse(&std::fs::read_to_string(p)?)?,
            None => RunConfig::default(),
        };
        self.apply(&mut c)?;
        Ok(c)
    }
}

fn split_kv(s: &str) -> Result<(&str, &str), RunnerError> {
    s.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .ok_or_else(|| RunnerError::Config(format!("expected key=value, got `{s}`")))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.3e}"))
}

fn run(cli: Cli) -> Result<ExitCode, RunnerError> {
    match cli.command {
        Command::Run { opts, resume } => {
            let c = opts.build()?;
            let report = run_experiment(&c, resume)?;
            for s in &report.seeds {
                println!(
                    "seed {}: {:?} after {} iterations, REL {}, loss {} -> {}, {:.1}s",
                    s.seed,
                    s.status,
                    s.iterations,
                    fmt_opt(s.final_rel),
                    fmt_opt(s.initial_loss),
                    fmt_opt(s.final_loss),
                    s.seconds
                );
            }
            println!("median REL {}; artifacts in {}", fmt_opt(report.summary.median_rel), report.dir.display());
            Ok(if report.all_diverged() { ExitCode::from(3) } else { ExitCode::SUCCESS })
        }
        Command::Compare { configs, opts, vary } => {
            let mut runs = Vec::new();
            for path in &configs {
                let mut c = RunConfig::parse(&std::fs::read_to_string(path)?)?;
                opts.apply(&mut c)?;
                runs.push(c);
            }
            if let Some(v) = &vary {
                let (key, values) = split_kv(v)?;
                let base = if runs.is_empty() { vec![opts.build()?] } else { std::mem::take(&mut runs) };
                for c in base {
                    for value in values.split(';').map(str::trim).filter(|s| !s.is_empty()) {
                        let mut c = c.clone();
                        c.set(key, value)?;
                        runs.push(c);
                    }
                }
            }
            let out = runs.first().map(|c| c.out.clone()).unwrap_or_else(|| PathBuf::from("runs"));
            let rows = compare(&runs, &out)?;
            println!("{:<48} {:>11} {:>11} {:>9}", "label", "median REL", "best REL", "s/iter");
            for r in &rows {
                println!(
                    "{:<48} {:>11} {:>11} {:>9.4}",
                    r.label,
                    fmt_opt(r.median_rel),
                    fmt_opt(r.best_rel),
                    r.sec_per_iter
                );
            }
            println!("table written to {}", out.join("compare.csv").display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Check { full, only } => {
            let mut failed = 0;
            for c in &CRITERIA {
                let selected = if only.is_empty() { full || !c.slow } else { only.contains(&c.id) };
                if !selected {
                    continue;
                }
                let o = (c.run)()?;
                failed += usize::from(!o.passed);
                println!("[{}] {} {}: {}", if o.passed { "PASS" } else { "FAIL" }, c.id, c.name, o.detail);
            }
            Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Sample { problem, nin, nbd, seed, draw, out } => {
            let p = load_problem(&problem)?;
            let batch = SampleBatch::draw(&p.domain, nin, nbd, seed, draw).map_err(|e| RunnerError::Config(e.to_string()))?;
            formats::write_samples(&out, p.dim(), &batch)?;
            println!("{} interior and {} boundary points written to {}", nin, nbd, out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Problems => {
            for name in REGISTRY {
                println!("{name}");
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("biharm: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
