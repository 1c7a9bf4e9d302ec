//! One-parameter sweeps of an efficiency.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::closed_form::evaluate;
use crate::model::{EfficiencyKind, Regime, ValidationError, Validated, Variable};
use crate::oracle::{oracle_efficiency, OracleError, QuadratureSpec};

/// Inclusive, evenly spaced grid written `lo:hi:count`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("bad grid `{given}`: {reason}")]
pub struct GridError {
    pub given: String,
    pub reason: &'static str,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, count: usize) -> Result<Self, GridError> {
        let err = |reason| GridError {
            given: format!("{lo}:{hi}:{count}"),
            reason,
        };
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(err("bounds must be finite"));
        }
        if count == 0 {
            return Err(err("count must be at least 1"));
        }
        if count == 1 && lo != hi {
            return Err(err("a single-point grid needs lo == hi"));
        }
        if count > 1 && !(hi > lo) {
            return Err(err("hi must exceed lo"));
        }
        Ok(Self { lo, hi, count })
    }

    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.lo];
        }
        let step = (self.hi - self.lo) / (self.count - 1) as f64;
        (0..self.count)
            .map(|i| if i + 1 == self.count { self.hi } else { self.lo + step * i as f64 })
            .collect()
    }
}

impl FromStr for Grid {
    type Err = GridError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |reason| GridError {
            given: s.to_string(),
            reason,
        };
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(err("expected lo:hi:count"));
        }
        let lo = parts[0].trim().parse::<f64>().map_err(|_| err("lo is not a number"))?;
        let hi = parts[1].trim().parse::<f64>().map_err(|_| err("hi is not a number"))?;
        let count = parts[2].trim().parse::<usize>().map_err(|_| err("count is not a non-negative integer"))?;
        Grid::new(lo, hi, count).map_err(|e| GridError { given: s.to_string(), ..e })
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.lo, self.hi, self.count)
    }
}

/// A figure-style curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanSeries {
    pub abscissa_name: String,
    pub abscissa: Vec<f64>,
    pub ordinate: Vec<f64>,
    /// Oracle values on the same grid, when requested.
    pub oracle: Option<Vec<f64>>,
    pub kind: EfficiencyKind,
    pub regime: Regime,
    /// Parameters before the sweep variable was substituted.
    pub fixed: Validated,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScanError {
    #[error("abscissa must be strictly increasing")]
    NotIncreasing,
    #[error("at {variable} = {at}: {source}")]
    Validation {
        variable: Variable,
        at: f64,
        #[source]
        source: ValidationError,
    },
    #[error("oracle at {variable} = {at}: {source}")]
    Oracle {
        variable: Variable,
        at: f64,
        #[source]
        source: OracleError,
    },
}

/// Evaluates the closed form of `kind` at every abscissa, optionally with
/// the quadrature oracle alongside.
pub fn scan(
    kind: EfficiencyKind,
    regime: Regime,
    variable: Variable,
    abscissa: &[f64],
    fixed: &Validated,
    oracle: Option<&QuadratureSpec>,
) -> Result<ScanSeries, ScanError> {
    if abscissa.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(ScanError::NotIncreasing);
    }
    let mut ordinate = Vec::with_capacity(abscissa.len());
    let mut checks = oracle.map(|_| Vec::with_capacity(abscissa.len()));
    for &at in abscissa {
        let wrap = |source| ScanError::Validation { variable, at, source };
        let point = fixed.with_variable(variable, at).map_err(wrap)?;
        ordinate.push(evaluate(kind, regime, &point).map_err(wrap)?.value);
        if let (Some(spec), Some(values)) = (oracle, checks.as_mut()) {
            let o = oracle_efficiency(kind, &point, spec)
                .map_err(|source| ScanError::Oracle { variable, at, source })?;
            values.push(o.value);
        }
    }
    Ok(ScanSeries {
        abscissa_name: variable.name().to_string(),
        abscissa: abscissa.to_vec(),
        ordinate,
        oracle: checks,
        kind,
        regime,
        fixed: *fixed,
    })
}
