//! Batched forward jet propagation and its reverse pass.
//!
//! Node buffers are laid out `[unit][point][coefficient]`, so an affine node
//! is one `rows × cols` by `cols × (points·coefficients)` matrix product.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::basis::Basis;
use super::expr::{FieldExpr, Node};
use super::func::MAX_FN_DERIV;
use crate::{Error, Result};

/// Forward values of every node of an expression for a batch of points.
#[derive(Debug)]
pub struct Tape<'a> {
    expr: &'a FieldExpr,
    basis: &'a Basis,
    npts: usize,
    values: Vec<Vec<f64>>,
}

/// `C (m×n) = beta·C + A (m×k) · B (k×n)` on strided row/column layouts.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    beta: f64,
    c: &mut [f64],
    rsc: isize,
    csc: isize,
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(c.len() >= m * n);
    if k == 0 {
        for x in c.iter_mut() {
            *x *= beta;
        }
        return;
    }
    // SAFETY: the slices cover every index reachable through the given
    // dimensions and strides (checked by the callers' layouts), and `c` does
    // not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            rsc,
            csc,
        );
    }
}

impl FieldExpr {
    /// Evaluates every node on `points` (row-major, `npts × d`) in the given basis.
    pub fn forward<'a>(&'a self, basis: &'a Basis, points: &[f64]) -> Result<Tape<'a>> {
        let d = self.input_dim;
        if basis.dim() != d {
            return Err(Error::DimensionMismatch(format!(
                "basis over {} inputs used with a {d}-dimensional expression",
                basis.dim()
            )));
        }
        if points.len() % d != 0 {
            return Err(Error::DimensionMismatch(format!(
                "{} coordinates is not a multiple of the dimension {d}",
                points.len()
            )));
        }
        let npts = points.len() / d;
        let k = basis.len();
        let mut values: Vec<Vec<f64>> = Vec::with_capacity(self.nodes.len());
        for (id, node) in self.nodes.iter().enumerate() {
            let width = self.widths[id];
            let mut out = vec![0.0; width * npts * k];
            match node {
                Node::Input => {
                    for i in 0..d {
                        let gi = basis.grad_index(i);
                        for p in 0..npts {
                            let base = (i * npts + p) * k;
                            out[base] = points[p * d + i];
                            if let Some(g) = gi {
                                out[base + g] = 1.0;
                            }
                        }
                    }
                }
                Node::Constant(c) => {
                    for (i, &ci) in c.iter().enumerate() {
                        for p in 0..npts {
                            out[(i * npts + p) * k] = ci;
                        }
                    }
                }
                Node::Affine {
                    input,
                    rows,
                    cols,
                    weight,
                    bias,
                } => {
                    let x = &values[input.0];
                    let n = npts * k;
                    gemm(
                        *rows,
                        *cols,
                        n,
                        weight,
                        *cols as isize,
                        1,
                        x,
                        n as isize,
                        1,
                        0.0,
                        &mut out,
                        n as isize,
                        1,
                    );
                    if let Some(b) = bias {
                        for (r, &br) in b.iter().enumerate() {
                            for p in 0..npts {
                                out[(r * npts + p) * k] += br;
                            }
                        }
                    }
                }
                Node::Map { input, func } => {
                    let x = &values[input.0];
                    let nd = basis.max_deriv() + 1;
                    let mut s = [0.0; MAX_FN_DERIV + 1];
                    for (zin, zout) in x.chunks_exact(k).zip(out.chunks_exact_mut(k)) {
                        func.derivatives(zin[0], &mut s[..nd]);
                        for (c, slot) in zout.iter_mut().enumerate() {
                            let mut acc = 0.0;
                            for t in basis.unary_terms(c) {
                                let mut prod = t.coeff * s[t.deriv as usize];
                                for f in &t.factors[..t.nf as usize] {
                                    prod *= zin[*f as usize];
                                }
                                acc += prod;
                            }
                            *slot = acc;
                        }
                    }
                }
                Node::LinComb(terms) => {
                    for (c, src) in terms {
                        for (o, &v) in out.iter_mut().zip(&values[src.0]) {
                            *o += c * v;
                        }
                    }
                }
                Node::Product(a, b) => {
                    let (va, vb) = (&values[a.0], &values[b.0]);
                    let (wa, wb) = (self.widths[a.0], self.widths[b.0]);
                    for u in 0..width {
                        let ua = if wa == 1 { 0 } else { u };
                        let ub = if wb == 1 { 0 } else { u };
                        for p in 0..npts {
                            let ja = &va[(ua * npts + p) * k..][..k];
                            let jb = &vb[(ub * npts + p) * k..][..k];
                            let jo = &mut out[(u * npts + p) * k..][..k];
                            for (c, slot) in jo.iter_mut().enumerate() {
                                let mut acc = 0.0;
                                for t in basis.product_terms(c) {
                                    acc += t.coeff * ja[t.a as usize] * jb[t.b as usize];
                                }
                                *slot = acc;
                            }
                        }
                    }
                }
                Node::Concat(parts) => {
                    let mut at = 0;
                    for part in parts {
                        let src = &values[part.0];
                        out[at..at + src.len()].copy_from_slice(src);
                        at += src.len();
                    }
                }
                Node::Select { input, indices } => {
                    let block = npts * k;
                    let src = &values[input.0];
                    for (j, &i) in indices.iter().enumerate() {
                        out[j * block..(j + 1) * block]
                            .copy_from_slice(&src[i * block..(i + 1) * block]);
                    }
                }
            }
            values.push(out);
        }
        Ok(Tape {
            expr: self,
            basis,
            npts,
            values,
        })
    }
}

impl<'a> Tape<'a> {
    pub fn npts(&self) -> usize {
        self.npts
    }

    pub fn basis(&self) -> &Basis {
        self.basis
    }

    /// Output jets laid out `[unit][point][coefficient]`.
    pub fn output(&self) -> &[f64] {
        &self.values[self.expr.output.0]
    }

    /// Jet coefficients of output `unit` at point `p`.
    pub fn output_jet(&self, unit: usize, p: usize) -> &[f64] {
        let k = self.basis.len();
        &self.output()[(unit * self.npts + p) * k..][..k]
    }

    /// Reverse pass: given the adjoint of the output buffer (same layout as
    /// [`Tape::output`]), adds the gradient with respect to the expression's
    /// flat affine parameters into `grad`.
    pub fn backward(&self, out_adjoint: &[f64], grad: &mut [f64]) -> Result<()> {
        let expr = self.expr;
        let k = self.basis.len();
        let npts = self.npts;
        if out_adjoint.len() != self.output().len() {
            return Err(Error::DimensionMismatch(format!(
                "output adjoint of length {} for output of length {}",
                out_adjoint.len(),
                self.output().len()
            )));
        }
        if grad.len() != expr.nparams {
            return Err(Error::DimensionMismatch(format!(
                "gradient buffer of length {} for {} parameters",
                grad.len(),
                expr.nparams
            )));
        }
        let n_nodes = expr.nodes.len();
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; n_nodes];
        if expr.depends[expr.output.0] {
            adj[expr.output.0] = Some(out_adjoint.to_vec());
        }
        let zeros = |id: usize| vec![0.0; expr.widths[id] * npts * k];

        for id in (0..n_nodes).rev() {
            let Some(a_out) = adj[id].take() else {
                continue;
            };
            match &expr.nodes[id] {
                Node::Input | Node::Constant(_) => {}
                Node::Affine {
                    input,
                    rows,
                    cols,
                    weight,
                    bias,
                } => {
                    let n = npts * k;
                    let x = &self.values[input.0];
                    let off = expr.param_offsets[id];
                    let (gw, rest) = grad[off..].split_at_mut(rows * cols);
                    // dW += A_out · Xᵀ
                    gemm(
                        *rows,
                        n,
                        *cols,
                        &a_out,
                        n as isize,
                        1,
                        x,
                        1,
                        n as isize,
                        1.0,
                        gw,
                        *cols as isize,
                        1,
                    );
                    if bias.is_some() {
                        for (r, gb) in rest[..*rows].iter_mut().enumerate() {
                            let mut acc = 0.0;
                            for p in 0..npts {
                                acc += a_out[(r * npts + p) * k];
                            }
                            *gb += acc;
                        }
                    }
                    if expr.depends[input.0] {
                        let a_in = adj[input.0].get_or_insert_with(|| zeros(input.0));
                        // dX += Wᵀ · A_out
                        gemm(
                            *cols,
                            *rows,
                            n,
                            weight,
                            1,
                            *cols as isize,
                            &a_out,
                            n as isize,
                            1,
                            1.0,
                            a_in,
                            n as isize,
                            1,
                        );
                    }
                }
                Node::Map { input, func } => {
                    if !expr.depends[input.0] {
                        continue;
                    }
                    let x = &self.values[input.0];
                    let nd = self.basis.max_deriv() + 2;
                    let a_in = adj[input.0].get_or_insert_with(|| zeros(input.0));
                    let mut s = [0.0; MAX_FN_DERIV + 1];
                    for ((zin, ain), aout) in x
                        .chunks_exact(k)
                        .zip(a_in.chunks_exact_mut(k))
                        .zip(a_out.chunks_exact(k))
                    {
                        func.derivatives(zin[0], &mut s[..nd]);
                        let mut a_z0 = 0.0;
                        for (c, &ao) in aout.iter().enumerate() {
                            if ao == 0.0 {
                                continue;
                            }
                            for t in self.basis.unary_terms(c) {
                                let nf = t.nf as usize;
                                let f = &t.factors[..nf];
                                let mut prod = t.coeff;
                                for &fi in f {
                                    prod *= zin[fi as usize];
                                }
                                a_z0 += ao * s[t.deriv as usize + 1] * prod;
                                let w = ao * t.coeff * s[t.deriv as usize];
                                for j in 0..nf {
                                    let mut others = w;
                                    for (l, &fl) in f.iter().enumerate() {
                                        if l != j {
                                            others *= zin[fl as usize];
                                        }
                                    }
                                    ain[f[j] as usize] += others;
                                }
                            }
                        }
                        ain[0] += a_z0;
                    }
                }
                Node::LinComb(terms) => {
                    for (c, src) in terms {
                        if !expr.depends[src.0] {
                            continue;
                        }
                        let a_in = adj[src.0].get_or_insert_with(|| zeros(src.0));
                        for (ai, &ao) in a_in.iter_mut().zip(&a_out) {
                            *ai += c * ao;
                        }
                    }
                }
                Node::Product(a, b) => {
                    let width = expr.widths[id];
                    let (wa, wb) = (expr.widths[a.0], expr.widths[b.0]);
                    let (va, vb) = (&self.values[a.0], &self.values[b.0]);
                    let mut ga = expr.depends[a.0].then(|| zeros(a.0));
                    let mut gb = expr.depends[b.0].then(|| zeros(b.0));
                    for u in 0..width {
                        let ua = if wa == 1 { 0 } else { u };
                        let ub = if wb == 1 { 0 } else { u };
                        for p in 0..npts {
                            let ja = &va[(ua * npts + p) * k..][..k];
                            let jb = &vb[(ub * npts + p) * k..][..k];
                            let ao = &a_out[(u * npts + p) * k..][..k];
                            for (c, &aoc) in ao.iter().enumerate() {
                                if aoc == 0.0 {
                                    continue;
                                }
                                for t in self.basis.product_terms(c) {
                                    let w = aoc * t.coeff;
                                    if let Some(ga) = ga.as_mut() {
                                        ga[(ua * npts + p) * k + t.a as usize] +=
                                            w * jb[t.b as usize];
                                    }
                                    if let Some(gb) = gb.as_mut() {
                                        gb[(ub * npts + p) * k + t.b as usize] +=
                                            w * ja[t.a as usize];
                                    }
                                }
                            }
                        }
                    }
                    for (node, g) in [(a, ga), (b, gb)] {
                        if let Some(g) = g {
                            let slot = adj[node.0].get_or_insert_with(|| zeros(node.0));
                            for (s, v) in slot.iter_mut().zip(g) {
                                *s += v;
                            }
                        }
                    }
                }
                Node::Concat(parts) => {
                    let mut at = 0;
                    for part in parts {
                        let len = expr.widths[part.0] * npts * k;
                        if expr.depends[part.0] {
                            let slot = adj[part.0].get_or_insert_with(|| zeros(part.0));
                            for (s, v) in slot.iter_mut().zip(&a_out[at..at + len]) {
                                *s += v;
                            }
                        }
                        at += len;
                    }
                }
                Node::Select { input, indices } => {
                    if !expr.depends[input.0] {
                        continue;
                    }
                    let block = npts * k;
                    let slot = adj[input.0].get_or_insert_with(|| zeros(input.0));
                    for (j, &i) in indices.iter().enumerate() {
                        for (s, v) in slot[i * block..(i + 1) * block]
                            .iter_mut()
                            .zip(&a_out[j * block..(j + 1) * block])
                        {
                            *s += v;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
