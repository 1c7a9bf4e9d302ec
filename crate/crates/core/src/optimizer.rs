//! Single-variable maximisation of an efficiency over a waist.

use serde::Serialize;
use thiserror::Error;

use crate::closed_form::evaluate;
use crate::model::{EfficiencyKind, Regime, ValidationError, Validated, Variable};

/// Default search interval in micrometres.
pub const DEFAULT_BRACKET: (f64, f64) = (5.0, 2000.0);
/// Absolute tolerance on the optimal waist, micrometres.
pub const WAIST_TOLERANCE: f64 = 0.01;
const PRESCAN_POINTS: usize = 32;
const TIE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimumRecord {
    pub target: EfficiencyKind,
    pub regime: Regime,
    pub free_variable: Variable,
    pub optimum_value: f64,
    pub efficiency_at_optimum: f64,
    pub bracket: (f64, f64),
    /// The maximum sits on a bracket edge; the target is monotone there.
    pub no_interior_optimum: bool,
    pub fixed: Validated,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizeError {
    #[error("BracketInvalid: [{lo}, {hi}] must satisfy 0 < lo < hi")]
    BracketInvalid { lo: f64, hi: f64 },
    #[error("at {variable} = {at}: {source}")]
    Validation {
        variable: Variable,
        at: f64,
        #[source]
        source: ValidationError,
    },
}

struct Objective<'a> {
    target: EfficiencyKind,
    regime: Regime,
    free: Variable,
    fixed: &'a Validated,
}

impl Objective<'_> {
    fn at(&self, x: f64) -> Result<f64, OptimizeError> {
        let wrap = |source| OptimizeError::Validation {
            variable: self.free,
            at: x,
            source,
        };
        let v = self.fixed.with_variable(self.free, x).map_err(wrap)?;
        Ok(evaluate(self.target, self.regime, &v).map_err(wrap)?.value)
    }
}

/// Coarse 32-point scan followed by golden-section refinement of the best
/// cell. Ties go to the smallest waist.
pub fn optimize_waist(
    target: EfficiencyKind,
    regime: Regime,
    free: Variable,
    bracket: (f64, f64),
    fixed: &Validated,
) -> Result<OptimumRecord, OptimizeError> {
    let (lo, hi) = bracket;
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi > lo) {
        return Err(OptimizeError::BracketInvalid { lo, hi });
    }
    let f = Objective {
        target,
        regime,
        free,
        fixed,
    };

    let step = (hi - lo) / (PRESCAN_POINTS - 1) as f64;
    let xs: Vec<f64> = (0..PRESCAN_POINTS)
        .map(|i| if i + 1 == PRESCAN_POINTS { hi } else { lo + step * i as f64 })
        .collect();
    let ys = xs.iter().map(|&x| f.at(x)).collect::<Result<Vec<_>, _>>()?;
    let best = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let j = ys.iter().position(|&y| y >= best - TIE).unwrap_or(0);

    let a = xs[j.saturating_sub(1)];
    let b = xs[(j + 1).min(PRESCAN_POINTS - 1)];
    let (xg, yg) = golden_section(&f, a, b)?;
    let refined_wins = yg > ys[j] + TIE || (yg >= ys[j] - TIE && xg < xs[j]);
    let (x_opt, y_opt) = if refined_wins { (xg, yg) } else { (xs[j], ys[j]) };
    let no_interior_optimum = x_opt - lo <= WAIST_TOLERANCE || hi - x_opt <= WAIST_TOLERANCE;

    Ok(OptimumRecord {
        target,
        regime,
        free_variable: free,
        optimum_value: x_opt,
        efficiency_at_optimum: y_opt,
        bracket,
        no_interior_optimum,
        fixed: *fixed,
    })
}

fn golden_section(f: &Objective, mut a: f64, mut b: f64) -> Result<(f64, f64), OptimizeError> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f.at(c)?;
    let mut fd = f.at(d)?;
    while b - a > WAIST_TOLERANCE {
        // `>=` keeps the left part on ties, favouring smaller waists.
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f.at(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f.at(d)?;
        }
    }
    let (fa, fb) = (f.at(a)?, f.at(b)?);
    let candidates = [(a, fa), (c, fc), (d, fd), (b, fb)];
    let top = candidates.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let pick = candidates
        .iter()
        .filter(|p| p.1 >= top - TIE)
        .min_by(|p, q| p.0.total_cmp(&q.0))
        .copied()
        .unwrap_or((a, fa));
    Ok(pick)
}

/// One point of an optimum curve; failures are recorded, not fatal.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub sweep_value: f64,
    pub outcome: Result<OptimumRecord, OptimizeError>,
}

/// [`optimize_waist`] at every value of a second variable.
pub fn optimum_curve(
    target: EfficiencyKind,
    regime: Regime,
    free: Variable,
    bracket: (f64, f64),
    sweep: Variable,
    sweep_values: &[f64],
    fixed: &Validated,
) -> Vec<CurvePoint> {
    sweep_values
        .iter()
        .map(|&s| {
            let outcome = fixed
                .with_variable(sweep, s)
                .map_err(|source| OptimizeError::Validation {
                    variable: sweep,
                    at: s,
                    source,
                })
                .and_then(|v| optimize_waist(target, regime, free, bracket, &v));
            CurvePoint {
                sweep_value: s,
                outcome,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate, BeamGeometry, PhaseMatchConfig};

    fn fixed(wp: f64) -> Validated {
        let c = PhaseMatchConfig {
            k_p: 33.53,
            k_s: 16.77,
            k_i: 16.77,
            n_p: 0.03,
            n_s: 0.0,
            d: 0.0,
            theta_i: 0.004,
            theta_s: 0.004,
            length: 5000.0,
        };
        validate(&c, &BeamGeometry::new(wp, 250.0, 250.0)).unwrap()
    }

    fn brute_force(target: EfficiencyKind, v: &Validated, lo: f64, hi: f64) -> f64 {
        let n = 100_000;
        let mut best = (lo, f64::NEG_INFINITY);
        for i in 0..=n {
            let x = lo + (hi - lo) * i as f64 / n as f64;
            let y = evaluate(target, Regime::FullCrystal, &v.with_variable(Variable::CollectionWaist, x).unwrap())
                .unwrap()
                .value;
            if y > best.1 {
                best = (x, y);
            }
        }
        best.0
    }

    #[test]
    fn matches_brute_force_grid() {
        for target in [EfficiencyKind::ChiM, EfficiencyKind::ChiP3] {
            for wp in [150.0, 600.0] {
                let v = fixed(wp);
                let r = optimize_waist(target, Regime::FullCrystal, Variable::CollectionWaist, DEFAULT_BRACKET, &v).unwrap();
                let bf = brute_force(target, &v, DEFAULT_BRACKET.0, DEFAULT_BRACKET.1);
                assert!((r.optimum_value - bf).abs() < 0.02, "{target} {wp}: {} vs {bf}", r.optimum_value);
                assert!(!r.no_interior_optimum);
            }
        }
    }

    #[test]
    fn optimum_dominates_bracket_ends() {
        let v = fixed(200.0);
        let r = optimize_waist(EfficiencyKind::ChiM, Regime::FullCrystal, Variable::CollectionWaist, (40.0, 900.0), &v).unwrap();
        for end in [40.0, 900.0] {
            let e = evaluate(EfficiencyKind::ChiM, Regime::FullCrystal, &v.with_variable(Variable::CollectionWaist, end).unwrap())
                .unwrap()
                .value;
            assert!(r.efficiency_at_optimum >= e - 1e-12);
        }
        assert!(r.optimum_value >= 40.0 && r.optimum_value <= 900.0);
    }

    #[test]
    fn optimum_approaches_preparation_waist() {
        let gap = |target, wp| {
            let r = optimize_waist(target, Regime::FullCrystal, Variable::CollectionWaist, DEFAULT_BRACKET, &fixed(wp)).unwrap();
            (r.optimum_value - 250.0).abs()
        };
        for target in [EfficiencyKind::ChiM, EfficiencyKind::ChiP3] {
            assert!(gap(target, 600.0) < gap(target, 150.0));
        }
        for wp in [150.0, 200.0, 400.0, 600.0] {
            assert!(gap(EfficiencyKind::ChiM, wp) <= gap(EfficiencyKind::ChiP3, wp));
        }
    }

    #[test]
    fn monotone_target_is_flagged() {
        let r = optimize_waist(EfficiencyKind::EtaP3, Regime::FullCrystal, Variable::CollectionWaist, DEFAULT_BRACKET, &fixed(150.0)).unwrap();
        assert!(r.no_interior_optimum);
        assert_eq!(r.optimum_value, DEFAULT_BRACKET.1);
    }

    #[test]
    fn plateau_resolves_to_smallest_waist() {
        // Thin χ_M with all waists tied is constant.
        let r = optimize_waist(EfficiencyKind::ChiM, Regime::ThinCrystal, Variable::AllWaists, (10.0, 500.0), &fixed(150.0)).unwrap();
        assert_eq!(r.optimum_value, 10.0);
        assert!((r.efficiency_at_optimum - 8.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_brackets() {
        for b in [(10.0, 10.0), (20.0, 10.0), (0.0, 10.0), (f64::NAN, 10.0)] {
            let r = optimize_waist(EfficiencyKind::ChiM, Regime::FullCrystal, Variable::CollectionWaist, b, &fixed(150.0));
            assert!(matches!(r, Err(OptimizeError::BracketInvalid { .. })));
        }
    }

    #[test]
    fn deterministic() {
        let run = || optimize_waist(EfficiencyKind::ChiP3, Regime::FullCrystal, Variable::CollectionWaist, DEFAULT_BRACKET, &fixed(400.0)).unwrap();
        assert_eq!(run(), run());
    }

    #[test]
    fn curve_of_one_point_is_plain_optimisation() {
        let v = fixed(150.0);
        let curve = optimum_curve(EfficiencyKind::ChiM, Regime::FullCrystal, Variable::CollectionWaist, DEFAULT_BRACKET, Variable::PumpWaist, &[300.0], &v);
        let direct = optimize_waist(
            EfficiencyKind::ChiM,
            Regime::FullCrystal,
            Variable::CollectionWaist,
            DEFAULT_BRACKET,
            &v.with_variable(Variable::PumpWaist, 300.0).unwrap(),
        );
        assert_eq!(curve.len(), 1);
        assert_eq!(curve[0].outcome, direct);
    }

    #[test]
    fn flat_target_gives_flat_curve() {
        let curve = optimum_curve(
            EfficiencyKind::ChiM,
            Regime::ThinCrystal,
            Variable::AllWaists,
            (10.0, 500.0),
            Variable::Length,
            &[100.0, 1000.0, 5000.0],
            &fixed(150.0),
        );
        for p in &curve {
            let r = p.outcome.as_ref().unwrap();
            assert_eq!(r.optimum_value, 10.0);
        }
    }

    #[test]
    fn curve_records_failures() {
        let curve = optimum_curve(
            EfficiencyKind::ChiM,
            Regime::FullCrystal,
            Variable::CollectionWaist,
            DEFAULT_BRACKET,
            Variable::PumpWaist,
            &[-5.0, 150.0],
            &fixed(150.0),
        );
        assert!(curve[0].outcome.is_err());
        assert!(curve[1].outcome.is_ok());
    }
}
