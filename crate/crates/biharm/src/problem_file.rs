//! Problem files: a problem described in the configuration grammar.
//!
//! ```text
//! name = plate
//! lower = -1, -1
//! upper = 1, 1
//! bc = dirichlet            # or navier
//! nonlinearity = none       # or f-lap-u
//! exact = sin(pi*x1)*sin(pi*x2)
//! hole = 0.2, 0.1, 0.3      # centre and radius, repeatable
//! ```
//!
//! `force`, `g` and `aux` (the `h` or `k` boundary function) are optional
//! when `exact` is given and are then derived from it; without `exact` all
//! three are required and no error can be measured.

use std::path::Path;

use biharm_core::problems::{
    parse_field, registry, AuxData, BcKind, BoundaryValue, Domain, ForceTerm, Nonlinearity, ProblemSpec,
};

use crate::RunnerError;

fn cfg(e: impl std::fmt::Display) -> RunnerError {
    RunnerError::Config(e.to_string())
}

fn floats(key: &str, v: &str) -> Result<Vec<f64>, RunnerError> {
    v.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| cfg(format!("`{key}`: {e}"))))
        .collect()
}

pub fn parse_problem(text: &str) -> Result<ProblemSpec, RunnerError> {
    let mut name = String::from("custom");
    let (mut lower, mut upper) = (None, None);
    let mut bc = BcKind::Dirichlet;
    let mut nl = Nonlinearity::None;
    let (mut exact, mut force, mut g, mut aux) = (None, None, None, None);
    let mut holes = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| cfg(format!("problem file line {}: expected `key = value`", n + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        match k {
            "name" => name = v.to_string(),
            "lower" => lower = Some(floats(k, v)?),
            "upper" => upper = Some(floats(k, v)?),
            "bc" => bc = v.parse().map_err(cfg)?,
            "nonlinearity" => nl = v.parse().map_err(cfg)?,
            "exact" => exact = Some(v.to_string()),
            "force" => force = Some(v.to_string()),
            "g" => g = Some(v.to_string()),
            "aux" | "h" | "k" => aux = Some(v.to_string()),
            "hole" => holes.push(floats(k, v)?),
            _ => return Err(cfg(format!("unknown problem key `{k}`"))),
        }
    }
    let lower = lower.ok_or_else(|| cfg("problem file needs `lower`"))?;
    let upper = upper.ok_or_else(|| cfg("problem file needs `upper`"))?;
    let d = lower.len();
    let mut domain = Domain::new(lower, upper).map_err(cfg)?;
    for h in holes {
        if h.len() != d + 1 {
            return Err(cfg(format!("a hole needs {d} centre coordinates and a radius")));
        }
        domain = domain.with_hole(h[..d].to_vec(), h[d]).map_err(cfg)?;
    }
    let field = |s: &str| parse_field(s, d).map_err(cfg);
    let mut p = match &exact {
        Some(e) => ProblemSpec::from_exact(&name, domain, bc, nl, field(e)?).map_err(cfg)?,
        None => {
            let need = |v: &Option<String>, what: &str| {
                v.clone()
                    .ok_or_else(|| cfg(format!("without `exact` the problem file needs `{what}`")))
            };
            ProblemSpec {
                name: name.clone(),
                domain,
                bc_kind: bc,
                nonlinearity: nl,
                exact: None,
                force: ForceTerm::Given(field(&need(&force, "force")?)?),
                g: BoundaryValue::Given(field(&need(&g, "g")?)?),
                aux: AuxData::Given(field(&need(&aux, "aux")?)?),
            }
        }
    };
    if let Some(f) = &force {
        p.force = ForceTerm::Given(field(f)?);
    }
    if let Some(v) = &g {
        p.g = BoundaryValue::Given(field(v)?);
    }
    if let Some(v) = &aux {
        p.aux = AuxData::Given(field(v)?);
    }
    p.validate().map_err(cfg)?;
    Ok(p)
}

/// A registry name, or else a path to a problem file.
pub fn load_problem(name_or_path: &str) -> Result<ProblemSpec, RunnerError> {
    match registry(name_or_path) {
        Ok(p) => Ok(p),
        Err(_) if Path::new(name_or_path).is_file() => {
            let text = std::fs::read_to_string(name_or_path)?;
            parse_problem(&text)
        }
        Err(_) => Err(cfg(format!(
            "`{name_or_path}` is neither a registered problem nor a problem file"
        ))),
    }
}
