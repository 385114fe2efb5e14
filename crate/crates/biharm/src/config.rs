//! Run configuration in a flat `key = value` grammar.
//!
//! One entry per line, `#` starts a comment, lists are comma separated. The
//! same keys are accepted on the command line, and a run manifest is a
//! configuration file with extra informational keys, so it can be fed back
//! to `run --config` to repeat the run.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use biharm_core::metrics::RelForm;
use biharm_core::network::{default_lambda, Activation, NetworkSpec};
use biharm_core::residuals::Strategy;
use biharm_core::training::{Optimizer, Penalty, Schedule, SolverConfig};

use crate::RunnerError;

/// Keys written into manifests for information only; ignored when parsing.
pub const INFO_KEYS: [&str; 8] = [
    "version",
    "rng",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "test_set",
    "problem_dim",
    "param_count",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Registry name or path to a problem file.
    pub problem: String,
    pub strategy: Strategy,
    pub fourier: bool,
    pub activation: Activation,
    pub hidden: Vec<usize>,
    pub lambda: Vec<f64>,
    pub lambda_trainable: bool,
    pub n_interior: usize,
    pub n_boundary: usize,
    pub iters: usize,
    pub eval_every: usize,
    pub lr0: f64,
    pub lr_decay: f64,
    pub lr_interval: usize,
    pub beta0: f64,
    /// Fixed boundary penalty in place of the staircase.
    pub gamma: Option<f64>,
    pub optimizer: Optimizer,
    pub frozen_batch: bool,
    pub rel_form: RelForm,
    pub rel_target: Option<f64>,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub label: Option<String>,
    /// Write a checkpoint every this many iterations (0: never).
    pub checkpoint_every: usize,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            problem: String::new(),
            strategy: Strategy::Coupled,
            fourier: true,
            activation: Activation::Sin,
            hidden: vec![30, 30, 30, 30],
            lambda: default_lambda(),
            lambda_trainable: false,
            n_interior: 3000,
            n_boundary: 2000,
            iters: 50_000,
            eval_every: 1000,
            lr0: 0.01,
            lr_decay: 0.025,
            lr_interval: 100,
            beta0: 10.0,
            gamma: None,
            optimizer: Optimizer::Adam,
            frozen_batch: false,
            rel_form: RelForm::Global,
            rel_target: None,
            seeds: vec![0],
            out: PathBuf::from("runs"),
            label: None,
            checkpoint_every: 0,
        }
    }
}

fn bad(key: &str, value: &str, why: impl std::fmt::Display) -> RunnerError {
    RunnerError::Config(format!("`{key} = {value}`: {why}"))
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, RunnerError>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| bad(key, value, e)))
        .collect()
}

fn one<T: FromStr>(key: &str, value: &str) -> Result<T, RunnerError>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| bad(key, value, e))
}

fn flag(key: &str, value: &str) -> Result<bool, RunnerError> {
    match value {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(bad(key, value, "expected on or off")),
    }
}

fn optional<T: FromStr>(key: &str, value: &str) -> Result<Option<T>, RunnerError>
where
    T::Err: std::fmt::Display,
{
    if value == "none" || value.is_empty() {
        Ok(None)
    } else {
        one(key, value).map(Some)
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Parses a whole file on top of the defaults.
    pub fn parse(text: &str) -> Result<RunConfig, RunnerError> {
        let mut c = RunConfig::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), RunnerError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| RunnerError::Config(format!("line {}: expected `key = value`", n + 1)))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Sets one key. Keys use underscores; dashes are accepted too.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), RunnerError> {
        let key = key.replace('-', "_");
        let key = key.as_str();
        match key {
            "problem" => self.problem = value.to_string(),
            "strategy" => self.strategy = one(key, value)?,
            "fourier" => self.fourier = flag(key, value)?,
            "act" | "activation" => self.activation = one(key, value)?,
            "hidden" => self.hidden = list(key, value)?,
            "lambda" => self.lambda = list(key, value)?,
            "lambda_trainable" => self.lambda_trainable = flag(key, value)?,
            "nin" | "n_interior" => self.n_interior = one(key, value)?,
            "nbd" | "n_boundary" => self.n_boundary = one(key, value)?,
            "iters" | "max_iters" => self.iters = one(key, value)?,
            "eval_every" => self.eval_every = one(key, value)?,
            "lr0" => self.lr0 = one(key, value)?,
            "lr_decay" => self.lr_decay = one(key, value)?,
            "lr_interval" => self.lr_interval = one(key, value)?,
            "beta0" => self.beta0 = one(key, value)?,
            "gamma" => self.gamma = optional(key, value)?,
            "optimizer" => {
                self.optimizer = match value {
                    "adam" => Optimizer::Adam,
                    "sgd" => Optimizer::Sgd,
                    _ => return Err(bad(key, value, "expected adam or sgd")),
                }
            }
            "frozen_batch" => self.frozen_batch = flag(key, value)?,
            "rel_form" => self.rel_form = one(key, value)?,
            "rel_target" => self.rel_target = optional(key, value)?,
            "seed" | "seeds" => self.seeds = list(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "label" => self.label = Some(value.to_string()).filter(|s| !s.is_empty()),
            "checkpoint_every" => self.checkpoint_every = one(key, value)?,
            k if INFO_KEYS.contains(&k) => {}
            _ => return Err(RunnerError::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Checks what can be checked without loading the problem.
    pub fn validate(&self) -> Result<(), RunnerError> {
        if self.problem.is_empty() {
            return Err(RunnerError::Config("no problem given".into()));
        }
        if self.seeds.is_empty() {
            return Err(RunnerError::Config("no seeds given".into()));
        }
        if self.fourier && self.hidden.is_empty() {
            return Err(RunnerError::Config("a Fourier network needs at least one hidden layer".into()));
        }
        self.schedule().validate().map_err(|e| RunnerError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn network(&self, d: usize) -> NetworkSpec {
        let out = self.strategy.output_dim(d);
        let mut spec = if self.fourier {
            NetworkSpec::fourier(d, self.hidden.clone(), self.activation, out)
        } else {
            NetworkSpec::mlp(d, self.hidden.clone(), self.activation, out)
        };
        spec.lambda = self.lambda.clone();
        spec.lambda_trainable = self.lambda_trainable;
        spec
    }

    pub fn schedule(&self) -> Schedule {
        Schedule {
            lr0: self.lr0,
            lr_decay: self.lr_decay,
            lr_interval: self.lr_interval,
            beta0: self.beta0,
            penalty: self.gamma.map_or(Penalty::Staircase, Penalty::Constant),
            max_iters: self.iters,
            eval_every: self.eval_every,
        }
    }

    pub fn solver(&self, d: usize) -> SolverConfig {
        let mut s = SolverConfig::new(self.strategy, self.network(d));
        s.n_interior = self.n_interior;
        s.n_boundary = self.n_boundary;
        s.optimizer = self.optimizer;
        s.frozen_batch = self.frozen_batch;
        s.rel_form = self.rel_form;
        s.rel_target = self.rel_target;
        s
    }

    /// Short name of the model, used for output directories and tables.
    pub fn label(&self) -> String {
        if let Some(l) = &self.label {
            return l.clone();
        }
        let problem = std::path::Path::new(&self.problem)
            .file_stem()
            .map_or_else(|| self.problem.clone(), |s| s.to_string_lossy().into_owned());
        format!(
            "{problem}-{}-{}-{}-{}",
            self.strategy,
            if self.fourier { "fourier" } else { "plain" },
            self.activation,
            self.hidden.iter().map(|h| h.to_string()).collect::<Vec<_>>().join("x")
        )
    }

    /// Every key with its value, in a fixed order.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), |x| x.to_string());
        let on = |b: bool| if b { "on" } else { "off" };
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("problem", self.problem.clone());
        kv("strategy", self.strategy.to_string());
        kv("fourier", on(self.fourier).into());
        kv("act", self.activation.to_string());
        kv("hidden", join(&self.hidden));
        kv("lambda", join(&self.lambda));
        kv("lambda_trainable", on(self.lambda_trainable).into());
        kv("nin", self.n_interior.to_string());
        kv("nbd", self.n_boundary.to_string());
        kv("iters", self.iters.to_string());
        kv("eval_every", self.eval_every.to_string());
        kv("lr0", self.lr0.to_string());
        kv("lr_decay", self.lr_decay.to_string());
        kv("lr_interval", self.lr_interval.to_string());
        kv("beta0", self.beta0.to_string());
        kv("gamma", opt(self.gamma));
        kv(
            "optimizer",
            match self.optimizer {
                Optimizer::Adam => "adam",
                Optimizer::Sgd => "sgd",
            }
            .into(),
        );
        kv("frozen_batch", on(self.frozen_batch).into());
        kv("rel_form", self.rel_form.to_string());
        kv("rel_target", opt(self.rel_target));
        kv("seeds", join(&self.seeds));
        kv("out", self.out.display().to_string());
        kv("label", self.label());
        kv("checkpoint_every", self.checkpoint_every.to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_round_trip() {
        let mut c = RunConfig::parse("problem = d2-dirichlet-sin\n# comment\nhidden = 20, 20\nseeds=1,2,3\n").unwrap();
        assert_eq!(c.n_interior, 3000);
        assert_eq!(c.n_boundary, 2000);
        assert_eq!(c.iters, 50_000);
        assert_eq!(c.hidden, vec![20, 20]);
        c.gamma = Some(7.5);
        let back = RunConfig::parse(&c.to_text()).unwrap();
        assert_eq!(back.label(), c.label());
        c.label = Some(c.label());
        assert_eq!(back, c);
    }

    #[test]
    fn errors() {
        assert!(RunConfig::parse("nope = 1").is_err());
        assert!(RunConfig::parse("strategy = pinn").is_err());
        assert!(RunConfig::parse("hidden").is_err());
        assert!(RunConfig::parse("fourier = maybe").is_err());
        assert!(RunConfig::default().validate().is_err());
    }
}
