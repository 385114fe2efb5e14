//! On-disk artifacts.
//!
//! CSV files (header row first, floats in shortest round-trip form):
//!
//! * `history_seed<S>.csv`: `k,interior,boundary,gamma,total,lr,rel`, with
//!   `rel` empty on iterations without an evaluation.
//! * `errorgrid_seed<S>.csv`: `x1..xd,u_exact,u_nn,abs_err`, plus
//!   `v_exact,v_nn` when the network has a `v = Δu` channel. Columns that
//!   need the exact solution are left out when there is none.
//! * `summary.csv` and `compare.csv`: see [`SUMMARY_HEADER`].
//! * sample exports: `x1..xd,is_boundary,n1..nd`.
//!
//! Binary files are little endian:
//!
//! * parameters: `b"BHPARAM1"`, `n: u64`, `n × f64`.
//! * checkpoints: `b"BHCKPT01"`, `seed: u64`, `k: u64`, `finished: u8`,
//!   `adam_t: u64`, `n: u64`, then `n × f64` each of parameters, first and
//!   second Adam moments, then `h: u64` history records of
//!   `k: u64`, five `f64` (interior, boundary, gamma, total, lr),
//!   `has_rel: u8`, `rel: f64`.

use std::io::{Read, Write};
use std::path::Path;

use biharm_core::network::{NetworkSpec, Params};
use biharm_core::sampling::SampleBatch;
use biharm_core::training::{AdamState, HistoryRecord, TrainState};

use crate::RunnerError;

pub const PARAMS_MAGIC: &[u8; 8] = b"BHPARAM1";
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"BHCKPT01";

pub const HISTORY_HEADER: [&str; 7] = ["k", "interior", "boundary", "gamma", "total", "lr", "rel"];

pub const SUMMARY_HEADER: [&str; 13] = [
    "label",
    "problem",
    "strategy",
    "fourier",
    "activation",
    "hidden",
    "seeds",
    "completed",
    "median_rel",
    "best_rel",
    "mean_sec_per_iter",
    "seconds",
    "median_final_loss",
];

fn num(x: f64) -> String {
    x.to_string()
}

pub fn write_history(path: &Path, history: &[HistoryRecord]) -> Result<(), RunnerError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(HISTORY_HEADER)?;
    for r in history {
        w.write_record([
            r.k.to_string(),
            num(r.interior),
            num(r.boundary),
            num(r.gamma),
            num(r.total),
            num(r.lr),
            r.rel.map(num).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_history(path: &Path) -> Result<Vec<HistoryRecord>, RunnerError> {
    let mut r = csv::Reader::from_path(path)?;
    let f = |s: &str| -> Result<f64, RunnerError> {
        s.parse().map_err(|e| RunnerError::Format(format!("bad number `{s}` in history: {e}")))
    };
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != HISTORY_HEADER.len() {
            return Err(RunnerError::Format(format!("history row with {} fields", rec.len())));
        }
        out.push(HistoryRecord {
            k: rec[0].parse().map_err(|e| RunnerError::Format(format!("bad iteration: {e}")))?,
            interior: f(&rec[1])?,
            boundary: f(&rec[2])?,
            gamma: f(&rec[3])?,
            total: f(&rec[4])?,
            lr: f(&rec[5])?,
            rel: if rec[6].is_empty() { None } else { Some(f(&rec[6])?) },
        });
    }
    Ok(out)
}

/// Columns of the error grid.
pub struct ErrorGrid<'a> {
    pub dim: usize,
    pub points: &'a [f64],
    pub u_exact: Option<&'a [f64]>,
    pub u_nn: &'a [f64],
    /// `(v_exact, v_nn)`; `v_exact` may be missing.
    pub v: Option<(Option<&'a [f64]>, &'a [f64])>,
}

pub fn write_error_grid(path: &Path, grid: &ErrorGrid<'_>) -> Result<(), RunnerError> {
    let d = grid.dim;
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    if grid.u_exact.is_some() {
        header.push("u_exact".into());
    }
    header.push("u_nn".into());
    if grid.u_exact.is_some() {
        header.push("abs_err".into());
    }
    if let Some((ve, _)) = grid.v {
        if ve.is_some() {
            header.push("v_exact".into());
        }
        header.push("v_nn".into());
    }
    w.write_record(&header)?;
    for (p, x) in grid.points.chunks(d).enumerate() {
        let mut row: Vec<String> = x.iter().map(|v| num(*v)).collect();
        if let Some(ue) = grid.u_exact {
            row.push(num(ue[p]));
        }
        row.push(num(grid.u_nn[p]));
        if let Some(ue) = grid.u_exact {
            row.push(num((ue[p] - grid.u_nn[p]).abs()));
        }
        if let Some((ve, vn)) = grid.v {
            if let Some(ve) = ve {
                row.push(num(ve[p]));
            }
            row.push(num(vn[p]));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// One summary row.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub label: String,
    pub problem: String,
    pub strategy: String,
    pub fourier: bool,
    pub activation: String,
    pub hidden: String,
    pub seeds: usize,
    pub completed: usize,
    pub median_rel: Option<f64>,
    pub best_rel: Option<f64>,
    pub sec_per_iter: f64,
    pub seconds: f64,
    pub median_final_loss: Option<f64>,
}

impl SummaryRow {
    fn record(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
        vec![
            self.label.clone(),
            self.problem.clone(),
            self.strategy.clone(),
            if self.fourier { "on" } else { "off" }.into(),
            self.activation.clone(),
            self.hidden.clone(),
            self.seeds.to_string(),
            self.completed.to_string(),
            opt(self.median_rel),
            opt(self.best_rel),
            num(self.sec_per_iter),
            num(self.seconds),
            opt(self.median_final_loss),
        ]
    }
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<(), RunnerError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_samples(path: &Path, dim: usize, batch: &SampleBatch) -> Result<(), RunnerError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
    header.push("is_boundary".into());
    header.extend((1..=dim).map(|i| format!("n{i}")));
    w.write_record(&header)?;
    for x in batch.interior.chunks(dim) {
        let mut row: Vec<String> = x.iter().map(|v| num(*v)).collect();
        row.push("0".into());
        row.extend(std::iter::repeat_n(String::new(), dim));
        w.write_record(&row)?;
    }
    for (x, n) in batch.boundary.chunks(dim).zip(batch.normals.chunks(dim)) {
        let mut row: Vec<String> = x.iter().map(|v| num(*v)).collect();
        row.push("1".into());
        row.extend(n.iter().map(|v| num(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    at: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], RunnerError> {
        if self.at + n > self.buf.len() {
            return Err(RunnerError::Format("file ends early".into()));
        }
        let s = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, RunnerError> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<u64, RunnerError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, RunnerError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, RunnerError> {
        (0..n).map(|_| self.f64()).collect()
    }

    fn magic(&mut self, m: &[u8; 8]) -> Result<(), RunnerError> {
        if self.take(8)? != m {
            return Err(RunnerError::Format(format!(
                "not a {} file",
                String::from_utf8_lossy(m)
            )));
        }
        Ok(())
    }

    fn done(&self) -> Result<(), RunnerError> {
        if self.at != self.buf.len() {
            return Err(RunnerError::Format("trailing bytes".into()));
        }
        Ok(())
    }
}

pub fn encode_params(params: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * params.len());
    out.extend_from_slice(PARAMS_MAGIC);
    put_u64(&mut out, params.len() as u64);
    put_f64s(&mut out, params);
    out
}

pub fn decode_params(buf: &[u8]) -> Result<Vec<f64>, RunnerError> {
    let mut c = Cursor { buf, at: 0 };
    c.magic(PARAMS_MAGIC)?;
    let n = c.u64()? as usize;
    let v = c.f64s(n)?;
    c.done()?;
    Ok(v)
}

pub fn encode_checkpoint(seed: u64, state: &TrainState) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    put_u64(&mut out, seed);
    put_u64(&mut out, state.k as u64);
    out.push(state.finished as u8);
    put_u64(&mut out, state.adam.t);
    put_u64(&mut out, state.params.len() as u64);
    put_f64s(&mut out, state.params.flat());
    put_f64s(&mut out, &state.adam.m);
    put_f64s(&mut out, &state.adam.v);
    put_u64(&mut out, state.history.len() as u64);
    for r in &state.history {
        put_u64(&mut out, r.k as u64);
        put_f64s(&mut out, &[r.interior, r.boundary, r.gamma, r.total, r.lr]);
        out.push(r.rel.is_some() as u8);
        put_f64s(&mut out, &[r.rel.unwrap_or(0.0)]);
    }
    out
}

/// Returns the seed stored with the state.
pub fn decode_checkpoint(buf: &[u8], spec: &NetworkSpec) -> Result<(u64, TrainState), RunnerError> {
    let mut c = Cursor { buf, at: 0 };
    c.magic(CHECKPOINT_MAGIC)?;
    let seed = c.u64()?;
    let k = c.u64()? as usize;
    let finished = c.u8()? != 0;
    let t = c.u64()?;
    let n = c.u64()? as usize;
    let params = Params::from_flat(spec, c.f64s(n)?).map_err(|e| RunnerError::Format(e.to_string()))?;
    let m = c.f64s(n)?;
    let v = c.f64s(n)?;
    let h = c.u64()? as usize;
    let mut history = Vec::with_capacity(h.min(1 << 20));
    for _ in 0..h {
        let k = c.u64()? as usize;
        let f = c.f64s(5)?;
        let has = c.u8()? != 0;
        let rel = c.f64()?;
        history.push(HistoryRecord {
            k,
            interior: f[0],
            boundary: f[1],
            gamma: f[2],
            total: f[3],
            lr: f[4],
            rel: has.then_some(rel),
        });
    }
    c.done()?;
    Ok((
        seed,
        TrainState {
            params,
            adam: AdamState { m, v, t },
            k,
            history,
            finished,
        },
    ))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), RunnerError> {
    // write then rename, so an interrupted run never leaves half a checkpoint
    let tmp = path.with_extension("tmp");
    let mut f = std::fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, RunnerError> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    Ok(buf)
}
