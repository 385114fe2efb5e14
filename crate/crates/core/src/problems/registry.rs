use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use super::{parse_field, AuxData, BcKind, BoundaryValue, Domain, Nonlinearity, ProblemSpec};
use crate::{Error, Result};

/// Names accepted by [`registry`].
pub const REGISTRY: [&str; 6] = [
    "d2-dirichlet-exp",
    "d2-dirichlet-sin",
    "d3-dirichlet-exp",
    "d2-navier-harmonic",
    "d2-navier-sin",
    "d8-navier-trig",
];

/// Benchmark problem by name.
pub fn registry(name: &str) -> Result<ProblemSpec> {
    match name {
        "d2-dirichlet-exp" => dirichlet_exp_on(&[-1.0, -1.0], &[1.0, 1.0]),
        "d2-dirichlet-sin" => ProblemSpec::from_exact(
            name,
            Domain::cube(2, 0.0, 1.0)?,
            BcKind::Dirichlet,
            Nonlinearity::LowerOrder,
            parse_field("sin(pi*x1)*sin(pi*x2)", 2)?,
        ),
        // f̃ depends on x only, so the problem is linear
        "d3-dirichlet-exp" => ProblemSpec::from_exact(
            name,
            Domain::cube(3, -1.0, 1.0)?,
            BcKind::Dirichlet,
            Nonlinearity::None,
            parse_field("50*exp(-0.25*(x1+x2+x3))", 3)?,
        ),
        "d2-navier-harmonic" => {
            let mut p = ProblemSpec::from_exact(
                name,
                Domain::new(vec![0.0, 0.0], vec![1.0, PI])?,
                BcKind::Navier,
                Nonlinearity::None,
                parse_field("exp(x1)*sin(x2)", 2)?,
            )?;
            p.aux = AuxData::Given(parse_field("0", 2)?);
            Ok(p)
        }
        "d2-navier-sin" => {
            let mut p = ProblemSpec::from_exact(
                name,
                Domain::cube(2, -PI, PI)?,
                BcKind::Navier,
                Nonlinearity::LowerOrder,
                parse_field("sin(x1)*sin(x2)", 2)?,
            )?;
            p.aux = AuxData::Given(parse_field("-2*sin(x1)*sin(x2)", 2)?);
            Ok(p)
        }
        "d8-navier-trig" => {
            let u = "sin(2*pi*x1) + cos(2*pi*x2) + sin(2*pi*x3) + cos(2*pi*x4) \
                     + sin(2*pi*x5) + cos(2*pi*x6) + sin(2*pi*x7) + cos(2*pi*x8)";
            let mut p = ProblemSpec::from_exact(
                name,
                Domain::cube(8, -1.0, 1.0)?,
                BcKind::Navier,
                Nonlinearity::None,
                parse_field(u, 8)?,
            )?;
            p.aux = AuxData::Given(parse_field(&format!("-4*pi^2*({u})"), 8)?);
            Ok(p)
        }
        _ => Err(Error::UnknownName(String::from(name))),
    }
}

/// The exponential-bump Dirichlet problem on an arbitrary rectangle:
/// `u = exp((x₁−a)(b−x₁)(x₂−c)(d−x₂))` with `g = 1` and the hand-derived
/// face normal derivatives.
pub fn dirichlet_exp_on(lower: &[f64], upper: &[f64]) -> Result<ProblemSpec> {
    let domain = Domain::new(lower.to_vec(), upper.to_vec())?;
    if domain.dim() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "the exponential bump problem is two-dimensional, got {} bounds",
            domain.dim()
        )));
    }
    let n = |v: f64| format!("({v:?})");
    let (a, b, c, d) = (n(lower[0]), n(upper[0]), n(lower[1]), n(upper[1]));
    let exact = parse_field(&format!("exp((x1-{a})*({b}-x1)*(x2-{c})*({d}-x2))"), 2)?;
    let faces: Vec<String> = vec![
        format!("-({a}+{b}-2*x1)*(x2-{c})*({d}-x2)"),
        format!("({a}+{b}-2*x1)*(x2-{c})*({d}-x2)"),
        format!("-(x1-{a})*({b}-x1)*({c}+{d}-2*x2)"),
        format!("(x1-{a})*({b}-x1)*({c}+{d}-2*x2)"),
    ];
    let mut p = ProblemSpec::from_exact("d2-dirichlet-exp", domain, BcKind::Dirichlet, Nonlinearity::None, exact)?;
    p.g = BoundaryValue::Given(parse_field("1", 2)?);
    p.aux = AuxData::PerFace(
        faces
            .iter()
            .map(|s| parse_field(s, 2))
            .collect::<Result<Vec<_>>>()?,
    );
    p.validate()?;
    Ok(p)
}
