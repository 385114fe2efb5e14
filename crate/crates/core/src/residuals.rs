//! Discretized losses of the three solver strategies.
//!
//! Every residual is a linear form over the output jets at a point, so the
//! losses here are [`PointLoss`] implementations that also write the exact
//! adjoint `∂loss/∂coefficient`; [`param_gradient`] turns that into a
//! parameter gradient.
//!
//! Output channels: `u` (all strategies), `v ≈ Δu` (coupled, mim) and
//! `p ≈ ∇u` (mim, channels `2..2+d`).
//!
//! | strategy | interior basis | Dirichlet boundary | Navier boundary |
//! |----------|----------------|--------------------|-----------------|
//! | direct   | bi-Laplacian   | `Full(1)`          | Laplacian       |
//! | coupled  | Laplacian      | `Full(1)`          | `Full(0)`       |
//! | mim      | Laplacian      | `Full(0)`          | `Full(0)`       |

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::diffengine::{
    param_gradient, Basis, BasisKind, FieldExpr, PointAdjoint, PointJets, PointLoss, CHUNK,
};
use crate::problems::{BcKind, Nonlinearity, ProblemSpec};
use crate::{Error, Result};

/// Highest dimension accepted by the direct strategy.
pub const DIRECT_MAX_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// One network, `Δ²u` residual.
    Direct,
    /// Two Poisson problems `Δu = v`, `Δv = f`.
    Coupled,
    /// First-order mixed system `∇u = p`, `∇·p = v`, `Δv = f`.
    Mim,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Direct, Strategy::Coupled, Strategy::Mim];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Direct => "direct",
            Strategy::Coupled => "coupled",
            Strategy::Mim => "mim",
        }
    }

    /// Network output width in dimension `d`.
    pub fn output_dim(self, d: usize) -> usize {
        match self {
            Strategy::Direct => 1,
            Strategy::Coupled => 2,
            Strategy::Mim => 2 + d,
        }
    }

    pub fn interior_basis(self) -> BasisKind {
        match self {
            Strategy::Direct => BasisKind::Bilaplacian,
            Strategy::Coupled | Strategy::Mim => BasisKind::Laplacian,
        }
    }

    pub fn boundary_basis(self, bc: BcKind) -> BasisKind {
        match (self, bc) {
            (Strategy::Direct | Strategy::Coupled, BcKind::Dirichlet) => BasisKind::Full(1),
            (Strategy::Direct, BcKind::Navier) => BasisKind::Laplacian,
            _ => BasisKind::Full(0),
        }
    }

    /// Rejects combinations the strategy does not support.
    pub fn check_dim(self, d: usize) -> Result<()> {
        if self == Strategy::Direct && d > DIRECT_MAX_DIM {
            return Err(Error::InvalidArgument(format!(
                "the direct strategy needs fourth-order jets and is limited to d ≤ {DIRECT_MAX_DIM}, got d = {d}"
            )));
        }
        Ok(())
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Strategy> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownName(String::from(s)))
    }
}

/// Output jets of a batch, laid out `[channel][point][coefficient]`.
#[derive(Debug, Clone)]
pub struct BatchJets {
    basis: Basis,
    channels: usize,
    npts: usize,
    data: Vec<f64>,
}

impl BatchJets {
    pub fn from_raw(basis: Basis, channels: usize, npts: usize, data: Vec<f64>) -> Result<BatchJets> {
        if data.len() != channels * npts * basis.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficients for {channels} channels, {npts} points and {} per jet",
                data.len(),
                basis.len()
            )));
        }
        Ok(BatchJets {
            basis,
            channels,
            npts,
            data,
        })
    }

    /// Jets of a network's outputs at `points`.
    pub fn from_expr(expr: &FieldExpr, kind: BasisKind, points: &[f64]) -> Result<BatchJets> {
        let d = expr.input_dim();
        let basis = Basis::new(kind, d)?;
        let npts = npts_of(points, d)?;
        let channels = expr.output_width();
        let len = basis.len();
        let mut data = vec![0.0; channels * npts * len];
        for (c, chunk) in points.chunks(CHUNK * d).enumerate() {
            let tape = expr.forward(&basis, chunk)?;
            for ch in 0..channels {
                for p in 0..tape.npts() {
                    let at = (ch * npts + c * CHUNK + p) * len;
                    data[at..at + len].copy_from_slice(tape.output_jet(ch, p));
                }
            }
        }
        BatchJets::from_raw(basis, channels, npts, data)
    }

    /// Jets of the exact fields `u*`, `v* = Δu*` and `p* = ∇u*` (as many of
    /// them as `channels` asks for: 1, 2 or `2 + d`), scaled by `scale`.
    ///
    /// Built by restricting the bi-Laplacian jet of `u*`, which carries every
    /// derivative these channels need.
    pub fn oracle(exact: &FieldExpr, channels: usize, kind: BasisKind, points: &[f64], scale: f64) -> Result<BatchJets> {
        let d = exact.input_dim();
        if exact.output_width() != 1 {
            return Err(Error::DimensionMismatch("oracle fields need a scalar exact solution".into()));
        }
        if ![1, 2, 2 + d].contains(&channels) {
            return Err(Error::DimensionMismatch(format!("{channels} oracle channels in dimension {d}")));
        }
        if channels > 1 && kind == BasisKind::Bilaplacian {
            return Err(Error::InvalidArgument(
                "v and p oracles are only available up to second order".into(),
            ));
        }
        if matches!(kind, BasisKind::Full(k) if k > 1) {
            return Err(Error::InvalidArgument(format!("no oracle restriction to {kind:?}")));
        }
        let src = Basis::new(BasisKind::Bilaplacian, d)?;
        let dst = Basis::new(kind, d)?;
        let npts = npts_of(points, d)?;
        let len = dst.len();
        let mut data = vec![0.0; channels * npts * len];
        let lap = |j: &[f64]| -> f64 { src.laplacian_form().iter().map(|&(i, w)| w * j[i]).sum() };
        let dst_lap = dst.laplacian_form().first().map(|e| e.0);
        for (c, chunk) in points.chunks(CHUNK * d).enumerate() {
            let tape = exact.forward(&src, chunk)?;
            for p in 0..tape.npts() {
                let j = tape.output_jet(0, p);
                let point = c * CHUNK + p;
                let slot = |ch: usize| (ch * npts + point) * len;
                if kind == BasisKind::Bilaplacian {
                    for (o, v) in data[slot(0)..slot(0) + len].iter_mut().zip(j) {
                        *o = scale * v;
                    }
                    continue;
                }
                // (value, gradient, Laplacian) of each channel
                let mut write = |ch: usize, value: f64, grad: &dyn Fn(usize) -> f64, laplacian: f64| {
                    let at = slot(ch);
                    data[at] = scale * value;
                    for i in 0..d {
                        if let Some(g) = dst.grad_index(i) {
                            data[at + g] = scale * grad(i);
                        }
                    }
                    if let Some(l) = dst_lap {
                        data[at + l] = scale * laplacian;
                    }
                };
                let q = |i: usize| j[src.grad_laplacian_index(i).expect("bi-Laplacian")];
                write(0, j[0], &|i| j[1 + i], lap(j));
                if channels >= 2 {
                    let bl: f64 = src.bilaplacian_form().iter().map(|&(i, w)| w * j[i]).sum();
                    write(1, lap(j), &q, bl);
                }
                if channels > 2 {
                    for k in 0..d {
                        let h = |i: usize| j[src.hess_index(k, i).expect("bi-Laplacian")];
                        write(2 + k, j[1 + k], &h, q(k));
                    }
                }
            }
        }
        BatchJets::from_raw(dst, channels, npts, data)
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn npts(&self) -> usize {
        self.npts
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn point(&self, p: usize) -> PointJets<'_> {
        PointJets::new(&self.data, self.npts, self.basis.len(), p)
    }
}

fn npts_of(points: &[f64], d: usize) -> Result<usize> {
    if points.len() % d != 0 {
        return Err(Error::DimensionMismatch(format!(
            "{} coordinates is not a multiple of the dimension {d}",
            points.len()
        )));
    }
    Ok(points.len() / d)
}

/// Sum of `loss` over the batch, without gradients.
pub fn evaluate<L: PointLoss>(loss: &L, jets: &BatchJets) -> Result<f64> {
    let mut scratch = vec![0.0; jets.data.len()];
    let mut total = 0.0;
    for p in 0..jets.npts {
        total += loss.point_loss(
            p,
            jets.point(p),
            PointAdjoint::new(&mut scratch, jets.npts, jets.basis.len(), p),
        );
    }
    if !total.is_finite() {
        return Err(Error::NonFinite(format!("loss evaluated to {total}")));
    }
    Ok(total)
}

fn check_basis(basis: &Basis, want: BasisKind, what: &str) -> Result<()> {
    if basis.kind() != want {
        return Err(Error::InvalidArgument(format!(
            "{what} needs jets in the {want:?} basis, got {:?}",
            basis.kind()
        )));
    }
    Ok(())
}

/// Interior residuals, each point weighted by `|Ω|/N`.
#[derive(Debug, Clone)]
pub struct InteriorLoss<'a> {
    strategy: Strategy,
    basis: &'a Basis,
    nonlinearity: Nonlinearity,
    ftilde: &'a [f64],
    weight: f64,
}

impl<'a> InteriorLoss<'a> {
    pub fn new(
        strategy: Strategy,
        basis: &'a Basis,
        nonlinearity: Nonlinearity,
        ftilde: &'a [f64],
        volume: f64,
    ) -> Result<InteriorLoss<'a>> {
        strategy.check_dim(basis.dim())?;
        check_basis(basis, strategy.interior_basis(), "the interior loss")?;
        if ftilde.is_empty() {
            return Err(Error::InvalidArgument("empty interior batch".into()));
        }
        Ok(InteriorLoss {
            strategy,
            basis,
            nonlinearity,
            ftilde,
            weight: volume / ftilde.len() as f64,
        })
    }
}

impl PointLoss for InteriorLoss<'_> {
    fn point_loss(&self, index: usize, jets: PointJets<'_>, mut adj: PointAdjoint<'_>) -> f64 {
        let w = self.weight;
        let lap = self.basis.laplacian_form();
        let (du, dlap) = self.nonlinearity.partials();
        let ft = self.ftilde[index];
        match self.strategy {
            Strategy::Direct => {
                let u = jets.channel(0)[0];
                let lu = jets.apply(0, lap);
                let r = jets.apply(0, self.basis.bilaplacian_form()) - self.nonlinearity.apply(ft, u, lu);
                let s = 2.0 * w * r;
                adj.add_form(0, self.basis.bilaplacian_form(), s);
                adj.channel_mut(0)[0] -= s * du;
                adj.add_form(0, lap, -s * dlap);
                w * r * r
            }
            Strategy::Coupled => {
                let u = jets.channel(0)[0];
                let v = jets.channel(1)[0];
                let lu = jets.apply(0, lap);
                let lv = jets.apply(1, lap);
                let r1 = lv - self.nonlinearity.apply(ft, u, lu);
                let r2 = lu - v;
                let s1 = 2.0 * w * r1;
                let s2 = 2.0 * w * r2;
                adj.add_form(1, lap, s1);
                adj.channel_mut(0)[0] -= s1 * du;
                adj.add_form(0, lap, s2 - s1 * dlap);
                adj.channel_mut(1)[0] -= s2;
                w * (r1 * r1 + r2 * r2)
            }
            Strategy::Mim => {
                let d = self.basis.dim();
                let u = jets.channel(0);
                let v = jets.channel(1)[0];
                let mut acc = 0.0;
                let mut div = 0.0;
                for i in 0..d {
                    let gi = 1 + i;
                    let r = u[gi] - jets.channel(2 + i)[0];
                    acc += r * r;
                    adj.channel_mut(0)[gi] += 2.0 * w * r;
                    adj.channel_mut(2 + i)[0] -= 2.0 * w * r;
                    div += jets.channel(2 + i)[gi];
                }
                // the nonlinearity sees ∇·p in place of Δu
                let rdiv = div - v;
                let rf = jets.apply(1, lap) - self.nonlinearity.apply(ft, u[0], div);
                let sd = 2.0 * w * rdiv;
                let sf = 2.0 * w * rf;
                for i in 0..d {
                    adj.channel_mut(2 + i)[1 + i] += sd - sf * dlap;
                }
                adj.channel_mut(1)[0] -= sd;
                adj.add_form(1, lap, sf);
                adj.channel_mut(0)[0] -= sf * du;
                w * (acc + rdiv * rdiv + rf * rf)
            }
        }
    }
}

/// Boundary residuals `u − g` and the auxiliary condition, each point
/// weighted by `1/M`.
#[derive(Debug, Clone)]
pub struct BoundaryLoss<'a> {
    strategy: Strategy,
    bc: BcKind,
    basis: &'a Basis,
    g: &'a [f64],
    aux: &'a [f64],
    normals: &'a [f64],
    weight: f64,
}

impl<'a> BoundaryLoss<'a> {
    /// `normals` are only read for Dirichlet problems and may be empty otherwise.
    pub fn new(
        strategy: Strategy,
        bc: BcKind,
        basis: &'a Basis,
        g: &'a [f64],
        aux: &'a [f64],
        normals: &'a [f64],
    ) -> Result<BoundaryLoss<'a>> {
        check_basis(basis, strategy.boundary_basis(bc), "the boundary loss")?;
        let m = g.len();
        if m == 0 || aux.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "{m} boundary values and {} auxiliary values",
                aux.len()
            )));
        }
        if bc == BcKind::Dirichlet && normals.len() != m * basis.dim() {
            return Err(Error::DimensionMismatch(format!(
                "Dirichlet boundary loss needs {} normal components, got {}",
                m * basis.dim(),
                normals.len()
            )));
        }
        Ok(BoundaryLoss {
            strategy,
            bc,
            basis,
            g,
            aux,
            normals,
            weight: 1.0 / m as f64,
        })
    }
}

impl PointLoss for BoundaryLoss<'_> {
    fn point_loss(&self, index: usize, jets: PointJets<'_>, mut adj: PointAdjoint<'_>) -> f64 {
        let w = self.weight;
        let d = self.basis.dim();
        let r1 = jets.channel(0)[0] - self.g[index];
        adj.channel_mut(0)[0] += 2.0 * w * r1;
        let target = self.aux[index];
        let r2 = match (self.bc, self.strategy) {
            (BcKind::Dirichlet, Strategy::Mim) => {
                let n = &self.normals[index * d..(index + 1) * d];
                let r: f64 = n.iter().enumerate().map(|(i, ni)| ni * jets.channel(2 + i)[0]).sum::<f64>() - target;
                for (i, ni) in n.iter().enumerate() {
                    adj.channel_mut(2 + i)[0] += 2.0 * w * r * ni;
                }
                r
            }
            (BcKind::Dirichlet, _) => {
                let n = &self.normals[index * d..(index + 1) * d];
                let u = jets.channel(0);
                let r: f64 = n.iter().enumerate().map(|(i, ni)| ni * u[1 + i]).sum::<f64>() - target;
                let a = adj.channel_mut(0);
                for (i, ni) in n.iter().enumerate() {
                    a[1 + i] += 2.0 * w * r * ni;
                }
                r
            }
            (BcKind::Navier, Strategy::Direct) => {
                let lap = self.basis.laplacian_form();
                let r = jets.apply(0, lap) - target;
                adj.add_form(0, lap, 2.0 * w * r);
                r
            }
            (BcKind::Navier, _) => {
                let r = jets.channel(1)[0] - target;
                adj.channel_mut(1)[0] += 2.0 * w * r;
                r
            }
        };
        w * (r1 * r1 + r2 * r2)
    }
}

/// Loss components of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub interior: f64,
    pub boundary: f64,
    pub gamma: f64,
    pub total: f64,
}

/// `total = interior + γ·boundary`; `gamma` must be positive.
pub fn total_loss(interior: f64, boundary: f64, gamma: f64) -> LossBreakdown {
    debug_assert!(gamma > 0.0, "penalty must be positive");
    LossBreakdown {
        interior,
        boundary,
        gamma,
        total: interior + gamma * boundary,
    }
}

/// Interior loss of the coupled strategy from precomputed jets.
pub fn interior_loss_coupled(jets: &BatchJets, nonlinearity: Nonlinearity, ftilde: &[f64], volume: f64) -> Result<f64> {
    check_npts(jets, ftilde.len())?;
    evaluate(&InteriorLoss::new(Strategy::Coupled, jets.basis(), nonlinearity, ftilde, volume)?, jets)
}

/// `(1/M) Σ |u − g|² + (1/M) Σ |∂u/∂n − h|²` for the coupled or direct
/// strategy, `p·n` in place of `∂u/∂n` for mim.
pub fn boundary_loss_dirichlet(strategy: Strategy, jets: &BatchJets, g: &[f64], h: &[f64], normals: &[f64]) -> Result<f64> {
    check_npts(jets, g.len())?;
    evaluate(&BoundaryLoss::new(strategy, BcKind::Dirichlet, jets.basis(), g, h, normals)?, jets)
}

/// `(1/M) Σ |u − g|² + (1/M) Σ |v − k|²` (`Δu` in place of `v` for direct).
pub fn boundary_loss_navier(strategy: Strategy, jets: &BatchJets, g: &[f64], k: &[f64]) -> Result<f64> {
    check_npts(jets, g.len())?;
    evaluate(&BoundaryLoss::new(strategy, BcKind::Navier, jets.basis(), g, k, &[])?, jets)
}

/// Interior and boundary parts of one strategy's loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub interior: f64,
    pub boundary: f64,
}

/// Precomputed problem data at a batch of collocation points.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedBatch {
    pub interior: Vec<f64>,
    pub ftilde: Vec<f64>,
    pub boundary: Vec<f64>,
    pub normals: Vec<f64>,
    pub g: Vec<f64>,
    pub aux: Vec<f64>,
}

impl PreparedBatch {
    pub fn new(problem: &ProblemSpec, interior: Vec<f64>, boundary: Vec<f64>, normals: Vec<f64>) -> Result<PreparedBatch> {
        let ftilde = problem.force_tilde(&interior)?;
        let (g, aux) = problem.boundary_values(&boundary, &normals)?;
        Ok(PreparedBatch {
            interior,
            ftilde,
            boundary,
            normals,
            g,
            aux,
        })
    }
}

fn check_npts(jets: &BatchJets, n: usize) -> Result<()> {
    if jets.npts() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} jets for {n} data values",
            jets.npts()
        )));
    }
    Ok(())
}

/// Direct-strategy loss from interior jets (bi-Laplacian basis) and boundary jets.
pub fn direct_loss(problem: &ProblemSpec, interior: &BatchJets, boundary: &BatchJets, batch: &PreparedBatch) -> Result<LossParts> {
    strategy_loss(Strategy::Direct, problem, interior, boundary, batch)
}

/// Mixed-strategy loss from interior jets (Laplacian basis) and boundary jets.
pub fn mim_loss(problem: &ProblemSpec, interior: &BatchJets, boundary: &BatchJets, batch: &PreparedBatch) -> Result<LossParts> {
    strategy_loss(Strategy::Mim, problem, interior, boundary, batch)
}

/// Any strategy's loss from precomputed jets.
pub fn strategy_loss(
    strategy: Strategy,
    problem: &ProblemSpec,
    interior: &BatchJets,
    boundary: &BatchJets,
    batch: &PreparedBatch,
) -> Result<LossParts> {
    check_npts(interior, batch.ftilde.len())?;
    check_npts(boundary, batch.g.len())?;
    let li = InteriorLoss::new(strategy, interior.basis(), problem.nonlinearity, &batch.ftilde, problem.domain.volume())?;
    let lb = BoundaryLoss::new(strategy, problem.bc_kind, boundary.basis(), &batch.g, &batch.aux, &batch.normals)?;
    Ok(LossParts {
        interior: evaluate(&li, interior)?,
        boundary: evaluate(&lb, boundary)?,
    })
}

/// Loss and parameter gradient of a network expression for one strategy.
#[derive(Debug, Clone)]
pub struct Assembler {
    strategy: Strategy,
    bc: BcKind,
    nonlinearity: Nonlinearity,
    volume: f64,
    interior_basis: Basis,
    boundary_basis: Basis,
}

impl Assembler {
    pub fn new(problem: &ProblemSpec, strategy: Strategy) -> Result<Assembler> {
        let d = problem.dim();
        strategy.check_dim(d)?;
        Ok(Assembler {
            strategy,
            bc: problem.bc_kind,
            nonlinearity: problem.nonlinearity,
            volume: problem.domain.volume(),
            interior_basis: Basis::new(strategy.interior_basis(), d)?,
            boundary_basis: Basis::new(strategy.boundary_basis(problem.bc_kind), d)?,
        })
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    /// Loss breakdown at penalty `gamma` and the gradient of its total with
    /// respect to the expression's affine parameters.
    pub fn loss_and_gradient(&self, expr: &FieldExpr, batch: &PreparedBatch, gamma: f64) -> Result<(LossBreakdown, Vec<f64>)> {
        let want = self.strategy.output_dim(self.interior_basis.dim());
        if expr.output_width() != want {
            return Err(Error::DimensionMismatch(format!(
                "the {} strategy needs {want} network outputs, found {}",
                self.strategy,
                expr.output_width()
            )));
        }
        let li = InteriorLoss::new(self.strategy, &self.interior_basis, self.nonlinearity, &batch.ftilde, self.volume)?;
        let lb = BoundaryLoss::new(self.strategy, self.bc, &self.boundary_basis, &batch.g, &batch.aux, &batch.normals)?;
        let (vi, mut grad) = param_gradient(expr, &self.interior_basis, &batch.interior, &li)?;
        let (vb, gb) = param_gradient(expr, &self.boundary_basis, &batch.boundary, &lb)?;
        for (a, b) in grad.iter_mut().zip(&gb) {
            *a += gamma * b;
        }
        Ok((total_loss(vi, vb, gamma), grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn total_loss_examples() {
        assert_eq!(total_loss(1.0, 2.0, 10.0).total, 21.0);
        assert_eq!(total_loss(0.0, 0.0, 500.0).total, 0.0);
    }

    #[test]
    fn strategy_names_and_bases() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert_eq!(Strategy::Mim.output_dim(8), 10);
        assert!(Strategy::Direct.check_dim(4).is_err());
        assert!(Strategy::Coupled.check_dim(8).is_ok());
        assert_eq!(Strategy::Direct.boundary_basis(BcKind::Navier), BasisKind::Laplacian);
    }

    #[test]
    fn coupled_single_point_by_hand() {
        // Δv = 3, f = 1, Δu = 2, v = 2, |Ω| = 4
        let basis = Basis::new(BasisKind::Laplacian, 1).unwrap();
        let data = vec![0.0, 0.0, 2.0, 2.0, 0.0, 3.0];
        let jets = BatchJets::from_raw(basis, 2, 1, data).unwrap();
        let v = interior_loss_coupled(&jets, Nonlinearity::None, &[1.0], 4.0).unwrap();
        assert_eq!(v, 16.0);
    }
}
