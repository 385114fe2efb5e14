//! Fully connected networks with an optional Fourier feature first layer.
//!
//! A network is described by a [`NetworkSpec`] and its trainable values live
//! in a flat [`Params`] vector. Evaluation goes through [`to_expr`], which
//! lowers the network to a [`FieldExpr`] so every derivative the engine can
//! compute is available for it.
//!
//! Flat layout, layer by layer: weights row-major (`rows = n_out`,
//! `cols = n_in`), then the bias. The Fourier layer has no bias. When `Λ` is
//! trainable its expanded vector is appended after the output layer.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand_distr::{Distribution, Normal};

use crate::diffengine::{self, Basis, BasisKind, ExprBuilder, FieldExpr, Jet, UnaryFn};
use crate::rng::{keyed, Purpose};
use crate::{Error, Result};

/// Hidden-layer activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Sin,
    /// Fourier feature layer `[cos(Λ⊙Wx); sin(Λ⊙Wx)]`; first layer only.
    CosSinFourier,
    Tanh,
    Sigmoid,
    Gelu,
    Relu,
    Requ,
    Gaussian,
}

impl Activation {
    pub const ALL: [Activation; 8] = [
        Activation::Sin,
        Activation::CosSinFourier,
        Activation::Tanh,
        Activation::Sigmoid,
        Activation::Gelu,
        Activation::Relu,
        Activation::Requ,
        Activation::Gaussian,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Activation::Sin => "sin",
            Activation::CosSinFourier => "cos-sin-fourier",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Gelu => "gelu",
            Activation::Relu => "relu",
            Activation::Requ => "requ",
            Activation::Gaussian => "gaussian",
        }
    }

    /// The scalar function applied elementwise, `None` for the Fourier layer.
    pub fn unary(self) -> Option<UnaryFn> {
        match self {
            Activation::Sin => Some(UnaryFn::Sin),
            Activation::CosSinFourier => None,
            Activation::Tanh => Some(UnaryFn::Tanh),
            Activation::Sigmoid => Some(UnaryFn::Sigmoid),
            Activation::Gelu => Some(UnaryFn::Gelu),
            Activation::Relu => Some(UnaryFn::Relu),
            Activation::Requ => Some(UnaryFn::Requ),
            Activation::Gaussian => Some(UnaryFn::Gaussian),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Activation> {
        Activation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::UnknownName(String::from(s)))
    }
}

/// `k`-th derivative (`k ≤ 4`) of a scalar activation at `z`.
pub fn activation_value(name: &str, z: f64, deriv_order: usize) -> Result<f64> {
    let act: Activation = name.parse()?;
    let f = act.unary().ok_or_else(|| {
        Error::InvalidArgument(format!("`{name}` is a layer map, not a scalar activation"))
    })?;
    if deriv_order > diffengine::MAX_ORDER {
        return Err(Error::UnsupportedOrder {
            requested: deriv_order,
            max: diffengine::MAX_ORDER,
        });
    }
    let mut out = [0.0; diffengine::MAX_ORDER + 1];
    f.derivatives(z, &mut out[..=deriv_order]);
    Ok(out[deriv_order])
}

/// `Λ = (1, 2, …, 15)`.
pub fn default_lambda() -> Vec<f64> {
    (1..=15).map(f64::from).collect()
}

/// Tiles `lambda` cyclically to `width` entries, truncating the last repeat.
pub fn expand_lambda(lambda: &[f64], width: usize) -> Result<Vec<f64>> {
    if lambda.is_empty() {
        return Err(Error::InvalidArgument("empty scale vector".into()));
    }
    Ok(lambda.iter().copied().cycle().take(width).collect())
}

/// Fourier features `[cos z; sin z]` with `z = Λ ⊙ (W₁ x)`.
///
/// `w1` is row-major with `lambda.len()` rows and `x.len()` columns.
pub fn fourier_features(x: &[f64], w1: &[f64], lambda: &[f64]) -> Result<Vec<f64>> {
    let rows = lambda.len();
    if rows == 0 || w1.len() != rows * x.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {rows} scales and a {}-dimensional point",
            w1.len(),
            x.len()
        )));
    }
    let z: Vec<f64> = w1
        .chunks(x.len())
        .zip(lambda)
        .map(|(row, l)| l * row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>())
        .collect();
    let mut out = Vec::with_capacity(2 * rows);
    out.extend(z.iter().map(|&v| crate::math::cos(v)));
    out.extend(z.iter().map(|&v| crate::math::sin(v)));
    Ok(out)
}

/// Architecture of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub input_dim: usize,
    /// Pre-activation widths of the hidden layers.
    pub hidden: Vec<usize>,
    /// One per hidden layer.
    pub activations: Vec<Activation>,
    pub fourier: bool,
    /// Unexpanded scale vector `Λ` of the Fourier layer.
    pub lambda: Vec<f64>,
    pub lambda_trainable: bool,
    /// Output channels in the order `u, v, p₁, …, p_d`.
    pub output_dim: usize,
}

/// Position of one affine layer in the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSlot {
    pub rows: usize,
    pub cols: usize,
    pub weight: usize,
    pub bias: Option<usize>,
}

impl NetworkSpec {
    /// Plain network with one activation in every hidden layer.
    pub fn mlp(input_dim: usize, hidden: Vec<usize>, activation: Activation, output_dim: usize) -> NetworkSpec {
        NetworkSpec {
            input_dim,
            activations: vec![activation; hidden.len()],
            hidden,
            fourier: false,
            lambda: default_lambda(),
            lambda_trainable: false,
            output_dim,
        }
    }

    /// Network whose first hidden layer is the Fourier feature map.
    pub fn fourier(input_dim: usize, hidden: Vec<usize>, activation: Activation, output_dim: usize) -> NetworkSpec {
        let mut spec = NetworkSpec::mlp(input_dim, hidden, activation, output_dim);
        if let Some(first) = spec.activations.first_mut() {
            *first = Activation::CosSinFourier;
        }
        spec.fourier = true;
        spec
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.input_dim == 0 {
            return bad("input dimension must be at least 1".into());
        }
        // no hidden layers is a plain affine map, useful as a convex test model
        if self.hidden.contains(&0) || (self.fourier && self.hidden.is_empty()) {
            return bad(format!("hidden widths {:?} must be positive, with a first layer for the Fourier map", self.hidden));
        }
        if self.activations.len() != self.hidden.len() {
            return bad(format!(
                "{} activations for {} hidden layers",
                self.activations.len(),
                self.hidden.len()
            ));
        }
        for (i, a) in self.activations.iter().enumerate() {
            let fourier_slot = i == 0 && self.fourier;
            if fourier_slot != (*a == Activation::CosSinFourier) {
                return bad(format!(
                    "layer {i} has activation `{a}`; the Fourier map is used exactly in layer 0 of a Fourier network"
                ));
            }
        }
        if self.fourier && (self.lambda.is_empty() || self.lambda.iter().any(|l| !l.is_finite())) {
            return bad("the Fourier scale vector must be non-empty and finite".into());
        }
        let d = self.input_dim;
        if ![1, 2, 2 + d].contains(&self.output_dim) {
            return bad(format!("output dimension {} is not 1, 2 or {}", self.output_dim, 2 + d));
        }
        Ok(())
    }

    /// Affine layers in flat order, the output layer last.
    pub fn layers(&self) -> Vec<LayerSlot> {
        let mut out = Vec::with_capacity(self.hidden.len() + 1);
        let mut at = 0;
        let mut n_in = self.input_dim;
        for (i, &w) in self.hidden.iter().enumerate() {
            let fourier = i == 0 && self.fourier;
            let bias = (!fourier).then_some(at + w * n_in);
            out.push(LayerSlot {
                rows: w,
                cols: n_in,
                weight: at,
                bias,
            });
            at += w * n_in + if fourier { 0 } else { w };
            n_in = if fourier { 2 * w } else { w };
        }
        out.push(LayerSlot {
            rows: self.output_dim,
            cols: n_in,
            weight: at,
            bias: Some(at + self.output_dim * n_in),
        });
        out
    }

    /// Number of affine parameters, excluding a trainable `Λ`.
    pub fn affine_param_count(&self) -> usize {
        let last = *self.layers().last().expect("output layer");
        last.weight + last.rows * last.cols + last.rows
    }

    /// Length of the flat parameter vector.
    pub fn param_count(&self) -> usize {
        self.affine_param_count() + self.lambda_slot_len()
    }

    fn lambda_slot_len(&self) -> usize {
        if self.fourier && self.lambda_trainable {
            self.hidden[0]
        } else {
            0
        }
    }
}

/// Flat parameter vector of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    layers: Vec<LayerSlot>,
    lambda_at: Option<usize>,
    values: Vec<f64>,
}

impl Params {
    /// Wraps a flat vector, checking its length against `spec`.
    pub fn from_flat(spec: &NetworkSpec, values: Vec<f64>) -> Result<Params> {
        spec.validate()?;
        if values.len() != spec.param_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} parameters for a network with {}",
                values.len(),
                spec.param_count()
            )));
        }
        Ok(Params {
            layers: spec.layers(),
            lambda_at: (spec.lambda_slot_len() > 0).then(|| spec.affine_param_count()),
            values,
        })
    }

    pub fn zeros(spec: &NetworkSpec) -> Result<Params> {
        let mut p = Params::from_flat(spec, vec![0.0; spec.param_count()])?;
        if let Some(at) = p.lambda_at {
            let lam = expand_lambda(&spec.lambda, spec.hidden[0])?;
            p.values[at..].copy_from_slice(&lam);
        }
        Ok(p)
    }

    pub fn flat(&self) -> &[f64] {
        &self.values
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of affine layers including the output layer.
    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, i: usize) -> LayerSlot {
        self.layers[i]
    }

    pub fn weight(&self, i: usize) -> &[f64] {
        let l = self.layers[i];
        &self.values[l.weight..l.weight + l.rows * l.cols]
    }

    pub fn weight_mut(&mut self, i: usize) -> &mut [f64] {
        let l = self.layers[i];
        &mut self.values[l.weight..l.weight + l.rows * l.cols]
    }

    pub fn bias(&self, i: usize) -> Option<&[f64]> {
        let l = self.layers[i];
        l.bias.map(|b| &self.values[b..b + l.rows])
    }

    pub fn bias_mut(&mut self, i: usize) -> Option<&mut [f64]> {
        let l = self.layers[i];
        l.bias.map(move |b| &mut self.values[b..b + l.rows])
    }

    /// The trainable expanded `Λ`, if any.
    pub fn lambda(&self) -> Option<&[f64]> {
        self.lambda_at.map(|at| &self.values[at..])
    }
}

/// Xavier initialization: every weight and bias is drawn from
/// `N(0, (2/(n_in+n_out))²)` of its layer. A trainable `Λ` starts at the
/// expanded spec vector.
pub fn init_params(spec: &NetworkSpec, seed: u64) -> Result<Params> {
    let mut p = Params::zeros(spec)?;
    let mut rng = keyed(seed, Purpose::Init, 0);
    for i in 0..p.layer_count() {
        let l = p.layer(i);
        let normal = Normal::new(0.0, 2.0 / (l.rows + l.cols) as f64)
            .map_err(|e| Error::InvalidArgument(format!("{e}")))?;
        for w in p.weight_mut(i) {
            *w = normal.sample(&mut rng);
        }
        if let Some(b) = p.bias_mut(i) {
            for v in b {
                *v = normal.sample(&mut rng);
            }
        }
    }
    Ok(p)
}

/// Expanded `Λ` in effect for `params`.
fn effective_lambda(spec: &NetworkSpec, params: &Params) -> Result<Vec<f64>> {
    match params.lambda() {
        Some(l) => Ok(l.to_vec()),
        None => expand_lambda(&spec.lambda, spec.hidden[0]),
    }
}

/// Parameters of the expression built by [`to_expr`]: the affine part of the
/// flat vector with the Fourier weight rows scaled by `Λ`.
pub fn expr_params(spec: &NetworkSpec, params: &Params) -> Result<Vec<f64>> {
    let mut out = params.flat()[..spec.affine_param_count()].to_vec();
    if spec.fourier {
        let lam = effective_lambda(spec, params)?;
        let l = params.layer(0);
        for (row, s) in out[l.weight..l.weight + l.rows * l.cols].chunks_mut(l.cols).zip(&lam) {
            for w in row {
                *w *= s;
            }
        }
    }
    Ok(out)
}

/// Chain rule from a gradient over [`expr_params`] to one over `params`.
pub fn pull_back_gradient(spec: &NetworkSpec, params: &Params, expr_grad: &[f64]) -> Result<Vec<f64>> {
    let n = spec.affine_param_count();
    if expr_grad.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} gradient entries for {n} affine parameters",
            expr_grad.len()
        )));
    }
    let mut out = Vec::with_capacity(params.len());
    out.extend_from_slice(expr_grad);
    if spec.fourier {
        let lam = effective_lambda(spec, params)?;
        let l = params.layer(0);
        let w1 = params.weight(0);
        let mut dlam = vec![0.0; l.rows];
        for k in 0..l.rows {
            for j in 0..l.cols {
                let at = l.weight + k * l.cols + j;
                dlam[k] += expr_grad[at] * w1[k * l.cols + j];
                out[at] = expr_grad[at] * lam[k];
            }
        }
        if params.lambda().is_some() {
            out.extend_from_slice(&dlam);
        }
    }
    Ok(out)
}

/// Lowers the network to an expression graph over `x`.
pub fn to_expr(spec: &NetworkSpec, params: &Params) -> Result<FieldExpr> {
    spec.validate()?;
    if params.len() != spec.param_count() {
        return Err(Error::DimensionMismatch(format!(
            "{} parameters for a network with {}",
            params.len(),
            spec.param_count()
        )));
    }
    let eff = expr_params(spec, params)?;
    let mut b = ExprBuilder::new(spec.input_dim);
    let mut cur = b.input();
    for (i, l) in spec.layers().into_iter().enumerate() {
        let weight = eff[l.weight..l.weight + l.rows * l.cols].to_vec();
        let bias = l.bias.map(|at| eff[at..at + l.rows].to_vec());
        let z = b.affine(cur, l.rows, l.cols, weight, bias)?;
        cur = match spec.activations.get(i) {
            None => z,
            Some(Activation::CosSinFourier) => {
                let c = b.map(z, UnaryFn::Cos)?;
                let s = b.map(z, UnaryFn::Sin)?;
                b.concat(vec![c, s])?
            }
            Some(a) => b.map(z, a.unary().expect("scalar activation"))?,
        };
    }
    b.finish(cur)
}

/// Network outputs at one point.
pub fn forward(spec: &NetworkSpec, params: &Params, x: &[f64]) -> Result<Vec<f64>> {
    diffengine::eval(&to_expr(spec, params)?, x)
}

/// Outputs at many points (`points` row-major), returned row-major
/// `[point][channel]`.
pub fn forward_batch(expr: &FieldExpr, points: &[f64]) -> Result<Vec<f64>> {
    let d = expr.input_dim();
    if points.len() % d != 0 {
        return Err(Error::DimensionMismatch(format!(
            "{} coordinates is not a multiple of the dimension {d}",
            points.len()
        )));
    }
    let basis = Basis::new(BasisKind::Full(0), d)?;
    let npts = points.len() / d;
    let nout = expr.output_width();
    let mut out = vec![0.0; npts * nout];
    for (c, chunk) in points.chunks(diffengine::CHUNK * d).enumerate() {
        let tape = expr.forward(&basis, chunk)?;
        let n = tape.npts();
        let raw = tape.output();
        for u in 0..nout {
            for p in 0..n {
                out[(c * diffengine::CHUNK + p) * nout + u] = raw[u * n + p];
            }
        }
    }
    Ok(out)
}

/// Jets of every output channel at `x`.
pub fn forward_jet(spec: &NetworkSpec, params: &Params, x: &[f64], order: usize) -> Result<Vec<Jet>> {
    diffengine::eval_jet(&to_expr(spec, params)?, x, order)
}
