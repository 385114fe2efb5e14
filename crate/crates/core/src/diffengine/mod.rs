//! Exact input-derivative propagation for fields built from affine maps and
//! elementwise functions, plus reverse-mode gradients with respect to the
//! affine parameters.
//!
//! Forward propagation carries a jet per scalar (see [`Basis`]); the reverse
//! pass differentiates through that extended forward graph, so losses that
//! contain `Δu` or `Δ²u` of a network get exact parameter gradients.

mod basis;
mod expr;
mod fd;
mod func;
mod jet;
mod tape;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

pub use basis::{Basis, BasisKind, MAX_ORDER};
pub use expr::{ExprBuilder, FieldExpr, Node, NodeId};
pub use fd::{fd_check, fd_discrepancies};
pub use func::{UnaryFn, MAX_FN_DERIV};
pub use jet::Jet;
pub use tape::Tape;

use crate::{Error, Result};

/// Points per evaluation chunk in [`param_gradient`].
pub const CHUNK: usize = 128;

/// Jets of every output component of `expr` at `x`, up to `order` (0..=4).
pub fn eval_jet(expr: &FieldExpr, x: &[f64], order: usize) -> Result<Vec<Jet>> {
    if order > MAX_ORDER {
        return Err(Error::UnsupportedOrder {
            requested: order,
            max: MAX_ORDER,
        });
    }
    check_point(expr, x)?;
    let basis = Basis::new(BasisKind::Full(order as u8), expr.input_dim())?;
    let tape = expr.forward(&basis, x)?;
    Ok((0..expr.output_width())
        .map(|u| Jet::from_coeffs(expr.input_dim(), order, tape.output_jet(u, 0).to_vec()))
        .collect())
}

/// Plain output values at `x`.
pub fn eval(expr: &FieldExpr, x: &[f64]) -> Result<Vec<f64>> {
    check_point(expr, x)?;
    let basis = Basis::new(BasisKind::Full(0), expr.input_dim())?;
    Ok(expr.forward(&basis, x)?.output().to_vec())
}

/// `Δu(x)` of a scalar expression.
///
/// Propagates only `(u, ∇u, Δu)`, which costs `O(d)` per scalar instead of the
/// `O(d²)` of a full second-order jet.
pub fn laplacian(expr: &FieldExpr, x: &[f64]) -> Result<f64> {
    scalar_quantity(expr, x, BasisKind::Laplacian, |b| b.laplacian_form())
}

/// `Δ²u(x) = Σᵢ Σⱼ ∂⁴u/∂xᵢ²∂xⱼ²` of a scalar expression.
pub fn biharmonic(expr: &FieldExpr, x: &[f64]) -> Result<f64> {
    scalar_quantity(expr, x, BasisKind::Bilaplacian, |b| b.bilaplacian_form())
}

fn scalar_quantity(
    expr: &FieldExpr,
    x: &[f64],
    kind: BasisKind,
    form: impl Fn(&Basis) -> &[(usize, f64)],
) -> Result<f64> {
    if expr.output_width() != 1 {
        return Err(Error::DimensionMismatch(format!(
            "expected a scalar expression, found {} outputs",
            expr.output_width()
        )));
    }
    check_point(expr, x)?;
    let basis = Basis::new(kind, expr.input_dim())?;
    let tape = expr.forward(&basis, x)?;
    let jet = tape.output_jet(0, 0);
    Ok(form(&basis).iter().map(|&(c, w)| w * jet[c]).sum())
}

fn check_point(expr: &FieldExpr, x: &[f64]) -> Result<()> {
    if x.len() != expr.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "point of dimension {} for a {}-dimensional expression",
            x.len(),
            expr.input_dim()
        )));
    }
    Ok(())
}

/// Jets of all output channels at one point of a batch, in some [`Basis`].
#[derive(Debug, Clone, Copy)]
pub struct PointJets<'a> {
    data: &'a [f64],
    npts: usize,
    len: usize,
    point: usize,
}

impl<'a> PointJets<'a> {
    /// Wraps a `[channel][point][coefficient]` buffer.
    pub fn new(data: &'a [f64], npts: usize, len: usize, point: usize) -> Self {
        PointJets {
            data,
            npts,
            len,
            point,
        }
    }

    pub fn channel(&self, c: usize) -> &'a [f64] {
        &self.data[(c * self.npts + self.point) * self.len..][..self.len]
    }

    /// `Σ w·coef` over a linear form of channel `c`.
    pub fn apply(&self, c: usize, form: &[(usize, f64)]) -> f64 {
        let j = self.channel(c);
        form.iter().map(|&(i, w)| w * j[i]).sum()
    }
}

/// Mutable adjoint view matching [`PointJets`].
#[derive(Debug)]
pub struct PointAdjoint<'a> {
    data: &'a mut [f64],
    npts: usize,
    len: usize,
    point: usize,
}

impl<'a> PointAdjoint<'a> {
    pub fn new(data: &'a mut [f64], npts: usize, len: usize, point: usize) -> Self {
        PointAdjoint {
            data,
            npts,
            len,
            point,
        }
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[(c * self.npts + self.point) * self.len..][..self.len]
    }

    /// Adds `scale·w` to every coefficient named in a linear form of channel `c`.
    pub fn add_form(&mut self, c: usize, form: &[(usize, f64)], scale: f64) {
        let j = self.channel_mut(c);
        for &(i, w) in form {
            j[i] += scale * w;
        }
    }
}

/// A scalar loss that decomposes into per-point contributions of the output jets.
pub trait PointLoss: Sync {
    /// Contribution of point `index` (position in the full batch); writes
    /// `∂loss/∂coefficient` for this point into `adjoint`.
    fn point_loss(&self, index: usize, jets: PointJets<'_>, adjoint: PointAdjoint<'_>) -> f64;
}

/// Loss value and exact gradient with respect to the affine parameters of `expr`.
///
/// The batch is processed in chunks of [`CHUNK`] points; chunk results are
/// summed in chunk order, so the result is deterministic with or without the
/// `parallel` feature.
pub fn param_gradient<L: PointLoss>(
    expr: &FieldExpr,
    basis: &Basis,
    points: &[f64],
    loss: &L,
) -> Result<(f64, Vec<f64>)> {
    let d = expr.input_dim();
    if points.len() % d != 0 {
        return Err(Error::DimensionMismatch(format!(
            "{} coordinates is not a multiple of the dimension {d}",
            points.len()
        )));
    }
    let npts = points.len() / d;
    let nchunks = npts.div_ceil(CHUNK);
    let run = |chunk: usize| -> Result<(f64, Vec<f64>)> {
        let start = chunk * CHUNK;
        let end = (start + CHUNK).min(npts);
        let tape = expr.forward(basis, &points[start * d..end * d])?;
        let n = end - start;
        let out = tape.output();
        let mut adj = vec![0.0; out.len()];
        let mut value = 0.0;
        for p in 0..n {
            value += loss.point_loss(
                start + p,
                PointJets::new(out, n, basis.len(), p),
                PointAdjoint::new(&mut adj, n, basis.len(), p),
            );
        }
        let mut grad = vec![0.0; expr.param_count()];
        tape.backward(&adj, &mut grad)?;
        Ok((value, grad))
    };

    #[cfg(feature = "parallel")]
    let parts: Vec<Result<(f64, Vec<f64>)>> = {
        use rayon::prelude::*;
        (0..nchunks).into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Result<(f64, Vec<f64>)>> = (0..nchunks).map(run).collect();

    let mut total = 0.0;
    let mut grad = vec![0.0; expr.param_count()];
    for part in parts {
        let (v, g) = part?;
        total += v;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    if !total.is_finite() {
        return Err(Error::NonFinite(format!("loss evaluated to {total}")));
    }
    Ok((total, grad))
}
