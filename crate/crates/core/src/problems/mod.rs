//! Biharmonic boundary value problems `Δ²u = f(x, u, Δu)` on boxes.
//!
//! Data that a problem does not give explicitly is derived from its exact
//! solution `u*` with the derivative engine: the force `f̃`, the boundary
//! value `g = u*`, the normal derivative `h = ∇u*·n` (Dirichlet) and the
//! boundary Laplacian `k = Δu*` (Navier).

mod parse;
mod registry;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

pub use parse::parse_field;
pub use registry::{dirichlet_exp_on, registry, REGISTRY};

use crate::diffengine::{Basis, BasisKind, FieldExpr, CHUNK};
use crate::{Error, Result};

/// Which auxiliary condition accompanies `u = g` on the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BcKind {
    /// `∂u/∂n = h`.
    Dirichlet,
    /// `Δu = k`.
    Navier,
}

impl BcKind {
    pub fn name(self) -> &'static str {
        match self {
            BcKind::Dirichlet => "dirichlet",
            BcKind::Navier => "navier",
        }
    }
}

impl fmt::Display for BcKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BcKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<BcKind> {
        match s {
            "dirichlet" => Ok(BcKind::Dirichlet),
            "navier" => Ok(BcKind::Navier),
            _ => Err(Error::UnknownName(String::from(s))),
        }
    }
}

/// How the right-hand side depends on the solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Nonlinearity {
    /// `f = f̃(x)`.
    None,
    /// `f = f̃(x) − Δu − u`.
    LowerOrder,
}

impl Nonlinearity {
    pub fn name(self) -> &'static str {
        match self {
            Nonlinearity::None => "none",
            Nonlinearity::LowerOrder => "f-lap-u",
        }
    }

    /// `f(x, u, Δu)` given `f̃(x)`.
    pub fn apply(self, ftilde: f64, u: f64, lap: f64) -> f64 {
        match self {
            Nonlinearity::None => ftilde,
            Nonlinearity::LowerOrder => ftilde - lap - u,
        }
    }

    /// `(∂f/∂u, ∂f/∂Δu)`.
    pub fn partials(self) -> (f64, f64) {
        match self {
            Nonlinearity::None => (0.0, 0.0),
            Nonlinearity::LowerOrder => (-1.0, -1.0),
        }
    }
}

impl fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Nonlinearity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Nonlinearity> {
        match s {
            "none" | "linear" => Ok(Nonlinearity::None),
            "f-lap-u" => Ok(Nonlinearity::LowerOrder),
            _ => Err(Error::UnknownName(String::from(s))),
        }
    }
}

/// A ball removed from the box.
#[derive(Debug, Clone, PartialEq)]
pub struct Hole {
    pub center: Vec<f64>,
    pub radius: f64,
}

/// Axis-aligned box, optionally with spherical holes.
///
/// Faces are numbered `2i` for `xᵢ = lowerᵢ` (normal `−eᵢ`) and `2i + 1` for
/// `xᵢ = upperᵢ` (normal `+eᵢ`).
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    lower: Vec<f64>,
    upper: Vec<f64>,
    holes: Vec<Hole>,
}

impl Domain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Domain> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::DimensionMismatch(format!(
                "bounds of lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        if lower.iter().zip(&upper).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::InvalidArgument(format!("empty or unbounded box {lower:?}..{upper:?}")));
        }
        Ok(Domain {
            lower,
            upper,
            holes: Vec::new(),
        })
    }

    /// `[lo, hi]^d`.
    pub fn cube(d: usize, lo: f64, hi: f64) -> Result<Domain> {
        Domain::new(vec![lo; d], vec![hi; d])
    }

    /// Adds a hole; it must lie strictly inside the box and not meet other holes.
    pub fn with_hole(mut self, center: Vec<f64>, radius: f64) -> Result<Domain> {
        if center.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "hole center of dimension {} in a {}-dimensional box",
                center.len(),
                self.dim()
            )));
        }
        let inside = (0..self.dim()).all(|i| {
            center[i] - radius > self.lower[i] && center[i] + radius < self.upper[i]
        });
        if !(radius > 0.0) || !inside {
            return Err(Error::InvalidArgument(format!(
                "hole at {center:?} with radius {radius} must sit strictly inside the box"
            )));
        }
        for h in &self.holes {
            if distance(&h.center, &center) <= h.radius + radius {
                return Err(Error::InvalidArgument("holes must not overlap".into()));
            }
        }
        self.holes.push(Hole { center, radius });
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn holes(&self) -> &[Hole] {
        &self.holes
    }

    /// Largest edge length.
    pub fn extent(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| b - a)
            .fold(0.0, f64::max)
    }

    pub fn box_volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(a, b)| b - a).product()
    }

    /// `|Ω|`: box volume minus hole volumes.
    pub fn volume(&self) -> f64 {
        let d = self.dim();
        self.box_volume()
            - self
                .holes
                .iter()
                .map(|h| ball_volume(d, h.radius))
                .sum::<f64>()
    }

    pub fn face_count(&self) -> usize {
        2 * self.dim()
    }

    /// `(d−1)`-dimensional measure of a face.
    pub fn face_measure(&self, face: usize) -> f64 {
        let axis = face / 2;
        (0..self.dim())
            .filter(|&i| i != axis)
            .map(|i| self.upper[i] - self.lower[i])
            .product()
    }

    pub fn face_normal(&self, face: usize) -> Vec<f64> {
        let mut n = vec![0.0; self.dim()];
        n[face / 2] = if face % 2 == 0 { -1.0 } else { 1.0 };
        n
    }

    /// Open-set membership: strictly inside the box and outside every hole.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && (0..self.dim()).all(|i| x[i] > self.lower[i] && x[i] < self.upper[i])
            && self.holes.iter().all(|h| distance(&h.center, x) > h.radius)
    }

    /// Closed-set membership with tolerance `tol`.
    pub fn contains_closed(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim()
            && (0..self.dim()).all(|i| x[i] >= self.lower[i] - tol && x[i] <= self.upper[i] + tol)
            && self.holes.iter().all(|h| distance(&h.center, x) >= h.radius - tol)
    }

    /// Boundary tolerance, `1e-12` times the box size.
    pub fn boundary_tol(&self) -> f64 {
        1e-12 * self.extent()
    }

    /// Whether `x` lies on a box face or a hole sphere.
    pub fn on_boundary(&self, x: &[f64]) -> bool {
        let tol = self.boundary_tol();
        if !self.contains_closed(x, tol) {
            return false;
        }
        let on_face = (0..self.dim())
            .any(|i| (x[i] - self.lower[i]).abs() <= tol || (x[i] - self.upper[i]).abs() <= tol);
        on_face || self.holes.iter().any(|h| (distance(&h.center, x) - h.radius).abs() <= tol)
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    crate::math::sqrt(a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum())
}

/// Volume of the `d`-ball of radius `r`.
pub fn ball_volume(d: usize, r: f64) -> f64 {
    let half = d as f64 / 2.0;
    crate::math::pow(core::f64::consts::PI, half) / libm::tgamma(half + 1.0) * crate::math::pow(r, d as f64)
}

/// Surface measure of the `d`-ball of radius `r`.
pub fn sphere_area(d: usize, r: f64) -> f64 {
    d as f64 * ball_volume(d, r) / r
}

/// The right-hand side `f̃`.
#[derive(Debug, Clone, PartialEq)]
pub enum ForceTerm {
    /// Computed from the exact solution (see [`make_force_from_exact`]).
    Derived(DerivedForce),
    Given(FieldExpr),
}

/// Boundary value `g`.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryValue {
    /// `g = u*`.
    Exact,
    Given(FieldExpr),
}

/// The auxiliary boundary function: `h` for Dirichlet, `k` for Navier.
#[derive(Debug, Clone, PartialEq)]
pub enum AuxData {
    /// `h = ∇u*·n`.
    ExactNormalDerivative,
    /// `k = Δu*`.
    ExactLaplacian,
    Given(FieldExpr),
    /// One field per box face, in face order.
    PerFace(Vec<FieldExpr>),
}

/// `f̃ = Δ²u*` for linear problems and `f̃ = Δ²u* + Δu* + u*` for
/// [`Nonlinearity::LowerOrder`], so that `u*` solves the equation exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedForce {
    exact: FieldExpr,
    nonlinearity: Nonlinearity,
}

/// Force term that the exact solution satisfies, evaluated by exact
/// differentiation of `exact`.
pub fn make_force_from_exact(exact: &FieldExpr, nonlinearity: Nonlinearity) -> Result<DerivedForce> {
    check_scalar(exact, "exact solution")?;
    Ok(DerivedForce {
        exact: exact.clone(),
        nonlinearity,
    })
}

impl DerivedForce {
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        Ok(self.eval_batch(x)?[0])
    }

    pub fn eval_batch(&self, points: &[f64]) -> Result<Vec<f64>> {
        let nl = self.nonlinearity;
        map_jets(&self.exact, BasisKind::Bilaplacian, points, |_, b, j| {
            let bl = apply(b.bilaplacian_form(), j);
            match nl {
                Nonlinearity::None => bl,
                Nonlinearity::LowerOrder => bl + apply(b.laplacian_form(), j) + j[0],
            }
        })
    }
}

fn apply(form: &[(usize, f64)], jet: &[f64]) -> f64 {
    form.iter().map(|&(i, w)| w * jet[i]).sum()
}

fn check_scalar(e: &FieldExpr, what: &str) -> Result<()> {
    if e.output_width() != 1 {
        return Err(Error::DimensionMismatch(format!(
            "{what} must be scalar, found {} outputs",
            e.output_width()
        )));
    }
    Ok(())
}

/// Evaluates `f(point index, basis, jet of output 0)` over a batch of points.
pub(crate) fn map_jets<F>(expr: &FieldExpr, kind: BasisKind, points: &[f64], mut f: F) -> Result<Vec<f64>>
where
    F: FnMut(usize, &Basis, &[f64]) -> f64,
{
    let d = expr.input_dim();
    if points.len() % d != 0 {
        return Err(Error::DimensionMismatch(format!(
            "{} coordinates is not a multiple of the dimension {d}",
            points.len()
        )));
    }
    let basis = Basis::new(kind, d)?;
    let mut out = Vec::with_capacity(points.len() / d);
    for chunk in points.chunks(CHUNK * d) {
        let tape = expr.forward(&basis, chunk)?;
        for p in 0..tape.npts() {
            let idx = out.len();
            out.push(f(idx, &basis, tape.output_jet(0, p)));
        }
    }
    Ok(out)
}

/// A biharmonic boundary value problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub name: String,
    pub domain: Domain,
    pub bc_kind: BcKind,
    pub nonlinearity: Nonlinearity,
    pub exact: Option<FieldExpr>,
    pub force: ForceTerm,
    pub g: BoundaryValue,
    pub aux: AuxData,
}

impl ProblemSpec {
    /// Problem whose data are all derived from `exact`.
    pub fn from_exact(
        name: &str,
        domain: Domain,
        bc_kind: BcKind,
        nonlinearity: Nonlinearity,
        exact: FieldExpr,
    ) -> Result<ProblemSpec> {
        let force = ForceTerm::Derived(make_force_from_exact(&exact, nonlinearity)?);
        let aux = match bc_kind {
            BcKind::Dirichlet => AuxData::ExactNormalDerivative,
            BcKind::Navier => AuxData::ExactLaplacian,
        };
        let p = ProblemSpec {
            name: String::from(name),
            domain,
            bc_kind,
            nonlinearity,
            exact: Some(exact),
            force,
            g: BoundaryValue::Exact,
            aux,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        let check = |e: &FieldExpr, what: &str| -> Result<()> {
            check_scalar(e, what)?;
            if e.input_dim() != d {
                return Err(Error::DimensionMismatch(format!(
                    "{what} is defined over {} coordinates, the domain has {d}",
                    e.input_dim()
                )));
            }
            Ok(())
        };
        if let Some(e) = &self.exact {
            check(e, "exact solution")?;
        }
        let needs_exact = matches!(self.force, ForceTerm::Derived(_))
            || self.g == BoundaryValue::Exact
            || matches!(self.aux, AuxData::ExactNormalDerivative | AuxData::ExactLaplacian);
        if needs_exact && self.exact.is_none() {
            return Err(Error::InvalidArgument(format!(
                "problem `{}` derives data from an exact solution it does not have",
                self.name
            )));
        }
        match &self.force {
            ForceTerm::Derived(f) => check(&f.exact, "force")?,
            ForceTerm::Given(e) => check(e, "force")?,
        }
        if let BoundaryValue::Given(e) = &self.g {
            check(e, "boundary value g")?;
        }
        match (&self.aux, self.bc_kind) {
            (AuxData::ExactNormalDerivative, BcKind::Navier) => {
                return Err(Error::InvalidArgument("a Navier problem takes k, not h".into()))
            }
            (AuxData::ExactLaplacian, BcKind::Dirichlet) => {
                return Err(Error::InvalidArgument("a Dirichlet problem takes h, not k".into()))
            }
            (AuxData::Given(e), _) => check(e, "auxiliary boundary function")?,
            (AuxData::PerFace(v), _) => {
                if v.len() != self.domain.face_count() {
                    return Err(Error::DimensionMismatch(format!(
                        "{} face functions for {} faces",
                        v.len(),
                        self.domain.face_count()
                    )));
                }
                for e in v {
                    check(e, "face function")?;
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn exact_expr(&self) -> Result<&FieldExpr> {
        self.exact
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("problem `{}` has no exact solution", self.name)))
    }

    /// `u*` at each point.
    pub fn exact_values(&self, points: &[f64]) -> Result<Vec<f64>> {
        map_jets(self.exact_expr()?, BasisKind::Full(0), points, |_, _, j| j[0])
    }

    /// `Δu*` at each point.
    pub fn exact_laplacian(&self, points: &[f64]) -> Result<Vec<f64>> {
        map_jets(self.exact_expr()?, BasisKind::Laplacian, points, |_, b, j| {
            apply(b.laplacian_form(), j)
        })
    }

    /// `f̃` at each point.
    pub fn force_tilde(&self, points: &[f64]) -> Result<Vec<f64>> {
        match &self.force {
            ForceTerm::Derived(f) => f.eval_batch(points),
            ForceTerm::Given(e) => map_jets(e, BasisKind::Full(0), points, |_, _, j| j[0]),
        }
    }

    /// `(g, h)` for Dirichlet or `(g, k)` for Navier problems at a boundary
    /// point with outward unit normal `normal`.
    pub fn boundary_data(&self, x: &[f64], normal: &[f64]) -> Result<(f64, f64)> {
        let (g, a) = self.boundary_values(x, normal)?;
        Ok((g[0], a[0]))
    }

    /// Batched [`ProblemSpec::boundary_data`]; `points` and `normals` are row-major.
    pub fn boundary_values(&self, points: &[f64], normals: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let d = self.dim();
        if points.len() % d != 0 || normals.len() != points.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} coordinates and {} normal components in dimension {d}",
                points.len(),
                normals.len()
            )));
        }
        for x in points.chunks(d) {
            if !self.domain.on_boundary(x) {
                return Err(Error::NotOnBoundary(format!("{x:?}")));
            }
        }
        let g = match &self.g {
            BoundaryValue::Exact => self.exact_values(points)?,
            BoundaryValue::Given(e) => map_jets(e, BasisKind::Full(0), points, |_, _, j| j[0])?,
        };
        let aux = match &self.aux {
            AuxData::ExactNormalDerivative => {
                map_jets(self.exact_expr()?, BasisKind::Full(1), points, |p, _, j| {
                    let n = &normals[p * d..(p + 1) * d];
                    n.iter().enumerate().map(|(i, ni)| ni * j[1 + i]).sum()
                })?
            }
            AuxData::ExactLaplacian => self.exact_laplacian(points)?,
            AuxData::Given(e) => map_jets(e, BasisKind::Full(0), points, |_, _, j| j[0])?,
            AuxData::PerFace(fields) => {
                let mut out = Vec::with_capacity(points.len() / d);
                for (x, n) in points.chunks(d).zip(normals.chunks(d)) {
                    let face = self.face_of(x, n)?;
                    out.push(crate::diffengine::eval(&fields[face], x)?[0]);
                }
                out
            }
        };
        Ok((g, aux))
    }

    /// Box face that `x` lies on, picked by the dominant normal component.
    fn face_of(&self, x: &[f64], n: &[f64]) -> Result<usize> {
        let (axis, _) = n
            .iter()
            .enumerate()
            .fold((0, 0.0), |best, (i, v)| if v.abs() > best.1 { (i, v.abs()) } else { best });
        let face = 2 * axis + usize::from(n[axis] > 0.0);
        let target = if face % 2 == 0 {
            self.domain.lower[axis]
        } else {
            self.domain.upper[axis]
        };
        if (x[axis] - target).abs() > self.domain.boundary_tol() {
            return Err(Error::NotOnBoundary(format!(
                "{x:?} is not on the face with normal {n:?}; face data is only defined on box faces"
            )));
        }
        Ok(face)
    }

    /// Largest `|Δ²u* − f(x, u*, Δu*)| / (1 + |f|)` over the points.
    pub fn consistency_residual(&self, points: &[f64]) -> Result<f64> {
        let ft = self.force_tilde(points)?;
        let nl = self.nonlinearity;
        let exact = self.exact_expr()?;
        let res = map_jets(exact, BasisKind::Bilaplacian, points, |p, b, j| {
            let f = nl.apply(ft[p], j[0], apply(b.laplacian_form(), j));
            (apply(b.bilaplacian_form(), j) - f).abs() / (1.0 + f.abs())
        })?;
        Ok(res.into_iter().fold(0.0, f64::max))
    }
}
