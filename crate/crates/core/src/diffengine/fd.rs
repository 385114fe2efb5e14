//! Finite-difference oracle for jets. Uses output values only.

use alloc::vec;
use alloc::vec::Vec;

use super::basis::{Basis, BasisKind, MAX_ORDER};
use super::expr::FieldExpr;
use super::{eval_jet, Jet};
use crate::{Error, Result};

/// Per-order discrepancy between [`eval_jet`] and nested central differences.
///
/// Entry `k-1` is `max |jet − fd| / max(‖fd‖∞, 1)` over every output channel and
/// every stored order-`k` entry, where the mixed partial `∂_{i1}…∂_{ik}` is
/// estimated from `2^k` values at `x ± h e_{i1} ± … ± h e_{ik}`, with one
/// Richardson step between `h = step` and `h = step/2`.
pub fn fd_discrepancies(expr: &FieldExpr, x: &[f64], order: usize, step: f64) -> Result<Vec<f64>> {
    if !(1..=MAX_ORDER).contains(&order) {
        return Err(Error::UnsupportedOrder {
            requested: order,
            max: MAX_ORDER,
        });
    }
    if !(step > 0.0) {
        return Err(Error::InvalidArgument("finite-difference step must be positive".into()));
    }
    let d = expr.input_dim();
    let jets = eval_jet(expr, x, order)?;
    let values_basis = Basis::new(BasisKind::Full(0), d)?;
    let mut out = Vec::with_capacity(order);
    for k in 1..=order {
        let tuples = sorted_tuples(d, k);
        let coarse = nested_central(expr, &values_basis, x, &tuples, k, step)?;
        let fine = nested_central(expr, &values_basis, x, &tuples, k, 0.5 * step)?;
        let mut worst: f64 = 0.0;
        for (ch, jet) in jets.iter().enumerate() {
            // the nested central error expands in even powers of the step
            let fd: Vec<f64> = fine[ch]
                .iter()
                .zip(&coarse[ch])
                .map(|(f, c)| (4.0 * f - c) / 3.0)
                .collect();
            worst = worst.max(tensor_discrepancy(jet, &tuples, &fd));
        }
        out.push(worst);
    }
    Ok(out)
}

/// Largest per-order discrepancy, see [`fd_discrepancies`].
pub fn fd_check(expr: &FieldExpr, x: &[f64], order: usize, step: f64) -> Result<f64> {
    Ok(fd_discrepancies(expr, x, order, step)?
        .into_iter()
        .fold(0.0, f64::max))
}

/// Nested central differences, indexed `[channel][tuple]`.
fn nested_central(
    expr: &FieldExpr,
    values_basis: &Basis,
    x: &[f64],
    tuples: &[Vec<usize>],
    k: usize,
    step: f64,
) -> Result<Vec<Vec<f64>>> {
    let d = x.len();
    let nsign = 1usize << k;
    let mut pts = Vec::with_capacity(tuples.len() * nsign * d);
    for t in tuples {
        for mask in 0..nsign {
            let mut p = x.to_vec();
            for (bit, &axis) in t.iter().enumerate() {
                p[axis] += if mask & (1 << bit) != 0 { step } else { -step };
            }
            pts.extend_from_slice(&p);
        }
    }
    let tape = expr.forward(values_basis, &pts)?;
    let denom = libm::pow(2.0 * step, k as f64);
    Ok((0..expr.output_width())
        .map(|ch| {
            (0..tuples.len())
                .map(|ti| {
                    let mut acc = 0.0;
                    for mask in 0..nsign {
                        let sign = if (mask.count_ones() as usize) % 2 == k % 2 { 1.0 } else { -1.0 };
                        acc += sign * tape.output_jet(ch, ti * nsign + mask)[0];
                    }
                    acc / denom
                })
                .collect()
        })
        .collect())
}

fn tensor_discrepancy(jet: &Jet, tuples: &[Vec<usize>], fd: &[f64]) -> f64 {
    let scale = fd.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    tuples
        .iter()
        .zip(fd)
        .map(|(t, f)| (jet.partial(t).unwrap_or(f64::NAN) - f).abs() / scale)
        .fold(0.0, f64::max)
}

fn sorted_tuples(d: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; k];
    fn rec(d: usize, pos: usize, lo: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if pos == cur.len() {
            out.push(cur.clone());
            return;
        }
        for v in lo..d {
            cur[pos] = v;
            rec(d, pos + 1, v, cur, out);
        }
    }
    rec(d, 0, 0, &mut cur, &mut out);
    out
}
