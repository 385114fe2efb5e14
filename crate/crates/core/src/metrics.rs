//! Relative errors against a reference solution.

use alloc::format;
use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use crate::math;
use crate::{Error, Result};

/// How the relative L² error is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RelForm {
    /// `√(Σ|ũᵢ − uᵢ|² / Σ|uᵢ|²)`.
    #[default]
    Global,
    /// `√(Σ |ũᵢ − uᵢ|² / |uᵢ|²)`; undefined where the reference vanishes.
    Pointwise,
}

impl RelForm {
    pub fn name(self) -> &'static str {
        match self {
            RelForm::Global => "global",
            RelForm::Pointwise => "pointwise",
        }
    }
}

impl fmt::Display for RelForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RelForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<RelForm> {
        match s {
            "global" => Ok(RelForm::Global),
            "pointwise" => Ok(RelForm::Pointwise),
            _ => Err(Error::UnknownName(String::from(s))),
        }
    }
}

pub fn rel_error(pred: &[f64], truth: &[f64], form: RelForm) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for {} reference values",
            pred.len(),
            truth.len()
        )));
    }
    let sq = |a: f64, b: f64| (a - b) * (a - b);
    match form {
        RelForm::Global => {
            let den: f64 = truth.iter().map(|t| t * t).sum();
            if den == 0.0 {
                return Err(Error::ZeroDenominator);
            }
            let num: f64 = pred.iter().zip(truth).map(|(p, t)| sq(*p, *t)).sum();
            Ok(math::sqrt(num / den))
        }
        RelForm::Pointwise => {
            if truth.contains(&0.0) {
                return Err(Error::ZeroDenominator);
            }
            let s: f64 = pred.iter().zip(truth).map(|(p, t)| sq(*p, *t) / (t * t)).sum();
            Ok(math::sqrt(s))
        }
    }
}
