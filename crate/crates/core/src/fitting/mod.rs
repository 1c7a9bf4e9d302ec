//! Least-squares fits of thin-crystal models to measured curves.

mod dataset;
mod lm;

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::Serialize;
use thiserror::Error;

pub use dataset::{load_dataset, AbscissaKind, DataError, DataRow, DataSet, MIN_ROWS};

use crate::closed_form::evaluate;
use crate::model::{EfficiencyKind, ParseNameError, Regime, ValidationError, Validated, Variable};

/// Fit model; each one pairs with a single abscissa kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum FitModel {
    /// ε_P thin form against iris diameter.
    #[serde(rename = "eps_P_thin")]
    EpsPThin,
    /// χ_P (arm 3) thin form against pump waist.
    #[serde(rename = "chi_P_thin")]
    ChiPThin,
    #[serde(rename = "chi_M_thin")]
    ChiMThin,
    /// Singles rate against preparation waist.
    #[serde(rename = "singles_C3")]
    SinglesC3,
}

impl FitModel {
    pub const ALL: [FitModel; 4] = [FitModel::EpsPThin, FitModel::ChiPThin, FitModel::ChiMThin, FitModel::SinglesC3];

    pub fn name(&self) -> &'static str {
        match self {
            FitModel::EpsPThin => "eps_P_thin",
            FitModel::ChiPThin => "chi_P_thin",
            FitModel::ChiMThin => "chi_M_thin",
            FitModel::SinglesC3 => "singles_C3",
        }
    }

    pub fn abscissa(&self) -> AbscissaKind {
        match self {
            FitModel::EpsPThin => AbscissaKind::IrisDiameter,
            FitModel::ChiPThin | FitModel::ChiMThin => AbscissaKind::PumpWaist,
            FitModel::SinglesC3 => AbscissaKind::PreparationWaist,
        }
    }

    /// Parameters that influence the model.
    pub fn parameters(&self) -> &'static [FitParam] {
        use FitParam::*;
        match self {
            FitModel::EpsPThin => &[KFresnel, PumpWaist, PreparationWaist, Scale],
            FitModel::ChiPThin | FitModel::ChiMThin => &[PreparationWaist, CollectionWaist, Scale],
            FitModel::SinglesC3 => &[PumpWaist, Scale],
        }
    }

    fn kind_and_regime(&self) -> (EfficiencyKind, Regime) {
        match self {
            FitModel::EpsPThin => (EfficiencyKind::EpsP, Regime::ThinCrystal),
            FitModel::ChiPThin => (EfficiencyKind::ChiP3, Regime::ThinCrystal),
            FitModel::ChiMThin => (EfficiencyKind::ChiM, Regime::ThinCrystal),
            FitModel::SinglesC3 => (EfficiencyKind::SinglesC3, Regime::FullCrystal),
        }
    }

    /// Variable set from the abscissa, and the map from abscissa to value.
    fn abscissa_variable(&self) -> (Variable, f64) {
        match self {
            // Iris diameter to Gaussian aperture width.
            FitModel::EpsPThin => (Variable::Aperture, 0.5),
            FitModel::ChiPThin | FitModel::ChiMThin => (Variable::PumpWaist, 1.0),
            FitModel::SinglesC3 => (Variable::PreparationWaist, 1.0),
        }
    }
}

impl fmt::Display for FitModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FitModel {
    type Err = ParseNameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FitModel::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| ParseNameError {
            what: "fit model",
            given: s.to_string(),
            expected: FitModel::ALL.map(|m| m.name()).join(", "),
        })
    }
}

/// A positive parameter a fit may adjust.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum FitParam {
    #[serde(rename = "k_fresnel")]
    KFresnel,
    #[serde(rename = "w_p")]
    PumpWaist,
    #[serde(rename = "w_o1")]
    PreparationWaist,
    #[serde(rename = "w_o2")]
    CollectionWaist,
    /// Overall amplitude multiplying the model.
    #[serde(rename = "scale")]
    Scale,
}

impl FitParam {
    pub const ALL: [FitParam; 5] = [
        FitParam::KFresnel,
        FitParam::PumpWaist,
        FitParam::PreparationWaist,
        FitParam::CollectionWaist,
        FitParam::Scale,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            FitParam::KFresnel => "k_fresnel",
            FitParam::PumpWaist => "w_p",
            FitParam::PreparationWaist => "w_o1",
            FitParam::CollectionWaist => "w_o2",
            FitParam::Scale => "scale",
        }
    }
}

impl fmt::Display for FitParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FitParam {
    type Err = ParseNameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FitParam::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| ParseNameError {
            what: "fit parameter",
            given: s.to_string(),
            expected: FitParam::ALL.map(|p| p.name()).join(", "),
        })
    }
}

/// Model parameters: the physical snapshot plus the amplitude scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelPoint {
    pub params: Validated,
    pub scale: f64,
}

impl ModelPoint {
    pub fn new(params: Validated) -> Self {
        Self { params, scale: 1.0 }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn get(&self, p: FitParam) -> f64 {
        let g = self.params.geom();
        match p {
            FitParam::KFresnel => g.k_fresnel.unwrap_or(f64::NAN),
            FitParam::PumpWaist => g.w_p,
            FitParam::PreparationWaist => g.w_o1,
            FitParam::CollectionWaist => g.w_o2,
            FitParam::Scale => self.scale,
        }
    }

    pub fn set(&self, p: FitParam, value: f64) -> Result<ModelPoint, ValidationError> {
        if p == FitParam::Scale {
            return Ok(Self { scale: value, ..*self });
        }
        let (c, mut g) = self.params.into_parts();
        match p {
            FitParam::KFresnel => g.k_fresnel = Some(value),
            FitParam::PumpWaist => g.w_p = value,
            FitParam::PreparationWaist => g.w_o1 = value,
            FitParam::CollectionWaist => g.w_o2 = value,
            FitParam::Scale => unreachable!(),
        }
        Ok(Self {
            params: crate::model::validate(&c, &g)?,
            scale: self.scale,
        })
    }

    /// Model value at one abscissa.
    pub fn predict(&self, model: FitModel, abscissa: f64) -> Result<f64, ValidationError> {
        let (variable, factor) = model.abscissa_variable();
        let (kind, regime) = model.kind_and_regime();
        let v = self.params.with_variable(variable, factor * abscissa)?;
        Ok(self.scale * evaluate(kind, regime, &v)?.value)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("model {model} expects abscissa {expected}, dataset has {found}")]
    AbscissaMismatch {
        model: FitModel,
        expected: AbscissaKind,
        found: AbscissaKind,
    },
    #[error("parameter {param} does not enter model {model}")]
    UnknownParameter { model: FitModel, param: FitParam },
    #[error("no free parameters")]
    NothingToFit,
    #[error("a fit needs at least {MIN_ROWS} rows and more rows than free parameters")]
    TooFewRows,
    #[error("initial guess: {0}")]
    InvalidStart(#[from] ValidationError),
    #[error("SingularJacobian: the free parameters are not independently determined by the data")]
    SingularJacobian,
    #[error("comparison needs at least 2 fits, got {0}")]
    TooFewOutcomes(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FittedParam {
    pub param: FitParam,
    pub value: f64,
    /// One standard deviation from the linearised covariance.
    pub uncertainty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitOutcome {
    pub model: FitModel,
    pub params: Vec<FittedParam>,
    /// Root-mean-square of the unweighted residuals.
    pub residual_rms: f64,
    /// `Σ((value − fit)/σ)²`; the plain residual sum of squares when the
    /// dataset has no sigma column.
    pub chi_square: f64,
    pub iterations: usize,
    /// False when the iteration cap was hit; the best iterate is returned.
    pub converged: bool,
    /// Every model parameter, with fitted values substituted.
    pub point: ModelPoint,
    /// Largest abscissa of the fitted dataset.
    pub abscissa_max: f64,
    /// Iris diameters were halved to Gaussian aperture widths.
    pub aperture_from_diameter: bool,
}

impl FitOutcome {
    pub fn predict(&self, abscissa: f64) -> Result<f64, ValidationError> {
        self.point.predict(self.model, abscissa)
    }

    pub fn value(&self, p: FitParam) -> f64 {
        self.point.get(p)
    }

    /// The fitted curve at the largest measured abscissa.
    pub fn saturation(&self) -> f64 {
        self.predict(self.abscissa_max).unwrap_or(f64::NAN)
    }
}

/// Weighted least-squares fit of `model` to `data`, adjusting `free`
/// starting from `start`. Weights are `1/σ` when sigmas are given, relative
/// to the smallest sigma.
pub fn fit(model: FitModel, data: &DataSet, free: &[FitParam], start: &ModelPoint) -> Result<FitOutcome, FitError> {
    if data.kind != model.abscissa() {
        return Err(FitError::AbscissaMismatch {
            model,
            expected: model.abscissa(),
            found: data.kind,
        });
    }
    if free.is_empty() {
        return Err(FitError::NothingToFit);
    }
    if let Some(&param) = free.iter().find(|p| !model.parameters().contains(p)) {
        return Err(FitError::UnknownParameter { model, param });
    }
    let mut free_unique: Vec<FitParam> = Vec::new();
    for &p in free {
        if !free_unique.contains(&p) {
            free_unique.push(p);
        }
    }
    let free = free_unique;
    if data.len() < MIN_ROWS || data.len() <= free.len() {
        return Err(FitError::TooFewRows);
    }
    start.predict(model, data.rows[0].abscissa)?;

    let smallest_sigma = data
        .rows
        .iter()
        .filter_map(|r| r.sigma)
        .fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = data
        .rows
        .iter()
        .map(|r| r.sigma.map_or(1.0, |s| smallest_sigma / s))
        .collect();

    let build = |theta: &DVector<f64>| -> Option<ModelPoint> {
        let mut p = *start;
        for (k, &param) in free.iter().enumerate() {
            p = p.set(param, theta[k].exp()).ok()?;
        }
        Some(p)
    };
    let residuals = |theta: &DVector<f64>| -> Option<DVector<f64>> {
        let p = build(theta)?;
        let mut r = DVector::zeros(data.len());
        for (i, row) in data.rows.iter().enumerate() {
            r[i] = weights[i] * (row.value - p.predict(model, row.abscissa).ok()?);
        }
        Some(r)
    };
    let theta0 = DVector::from_iterator(free.len(), free.iter().map(|&p| start.get(p).ln()));
    if theta0.iter().any(|t| !t.is_finite()) {
        return Err(FitError::InvalidStart(ValidationError(vec![crate::model::Violation::NonFinite(
            "initial guess",
        )])));
    }

    let out = lm::minimise(theta0, residuals).map_err(|e| match e {
        lm::LmFailure::Singular => FitError::SingularJacobian,
        lm::LmFailure::BadStart => FitError::InvalidStart(ValidationError(vec![
            crate::model::Violation::NonFinite("model at initial guess"),
        ])),
    })?;
    let point = build(&out.theta).ok_or(FitError::SingularJacobian)?;

    let n = data.len();
    let dof = (n - free.len()) as f64;
    let relative_chi_square = out.residuals.norm_squared();
    let chi_square = if smallest_sigma.is_finite() {
        relative_chi_square / (smallest_sigma * smallest_sigma)
    } else {
        relative_chi_square
    };
    let jtj = out.jacobian.transpose() * &out.jacobian;
    let covariance = jtj.try_inverse().ok_or(FitError::SingularJacobian)? * (relative_chi_square / dof);
    let params = free
        .iter()
        .enumerate()
        .map(|(k, &param)| {
            let value = point.get(param);
            // Parameters are fitted as logarithms.
            FittedParam {
                param,
                value,
                uncertainty: value * covariance[(k, k)].max(0.0).sqrt(),
            }
        })
        .collect();
    let residual_rms = (data
        .rows
        .iter()
        .map(|r| (r.value - point.predict(model, r.abscissa).unwrap_or(f64::NAN)).powi(2))
        .sum::<f64>()
        / n as f64)
        .sqrt();

    Ok(FitOutcome {
        model,
        params,
        residual_rms,
        chi_square,
        iterations: out.iterations,
        converged: out.converged,
        point,
        abscissa_max: data.max_abscissa(),
        aperture_from_diameter: model == FitModel::EpsPThin,
    })
}

/// Saturation of each fitted curve, ordered by pump waist.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PumpWaistComparison {
    /// `(w_p, saturation)` sorted by increasing `w_p`.
    pub saturations: Vec<(f64, f64)>,
    /// Saturation strictly increases with pump waist.
    pub larger_pump_is_better: bool,
    /// Adjacent pump waists whose saturations agree to 1e-12 relative.
    pub ties: Vec<(f64, f64)>,
}

/// Compares fits made at different pump waists.
pub fn compare_pump_waists(outcomes: &[(f64, FitOutcome)]) -> Result<PumpWaistComparison, FitError> {
    if outcomes.len() < 2 {
        return Err(FitError::TooFewOutcomes(outcomes.len()));
    }
    let mut saturations: Vec<(f64, f64)> = outcomes.iter().map(|(wp, o)| (*wp, o.saturation())).collect();
    saturations.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut ties = Vec::new();
    let mut increasing = true;
    for w in saturations.windows(2) {
        let (a, b) = (w[0].1, w[1].1);
        if (b - a).abs() <= 1e-12 * a.abs().max(b.abs()) {
            ties.push((w[0].0, w[1].0));
            increasing = false;
        } else if !(b > a) {
            increasing = false;
        }
    }
    Ok(PumpWaistComparison {
        saturations,
        larger_pump_is_better: increasing,
        ties,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate, BeamGeometry, PhaseMatchConfig};
    use rand::{rngs::StdRng, SeedableRng};
    use rand_distr::{Distribution, Normal};

    fn config() -> PhaseMatchConfig {
        PhaseMatchConfig {
            k_p: 33.53,
            k_s: 16.77,
            k_i: 16.77,
            n_p: 0.03,
            n_s: 0.0,
            d: 0.0,
            theta_i: 0.004,
            theta_s: 0.004,
            length: 5000.0,
        }
    }

    fn truth(wp: f64, w1: f64, w2: f64, k: f64) -> ModelPoint {
        ModelPoint::new(validate(&config(), &BeamGeometry::new(wp, w1, w2).with_aperture(1000.0, k)).unwrap())
    }

    fn synthetic(model: FitModel, p: &ModelPoint, xs: &[f64], noise: f64, seed: u64) -> DataSet {
        let mut rng = StdRng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let rows = xs
            .iter()
            .map(|&x| {
                let y = p.predict(model, x).unwrap();
                DataRow {
                    abscissa: x,
                    value: y * (1.0 + noise * normal.sample(&mut rng)),
                    sigma: None,
                }
            })
            .collect();
        DataSet {
            kind: model.abscissa(),
            rows,
        }
    }

    fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    fn perturbed(p: &ModelPoint, free: &[FitParam], factor: f64) -> ModelPoint {
        free.iter().fold(*p, |acc, &f| acc.set(f, acc.get(f) * factor).unwrap())
    }

    #[test]
    fn zero_noise_round_trip_every_model() {
        let cases: [(FitModel, &[FitParam], ModelPoint, Vec<f64>); 4] = [
            (FitModel::EpsPThin, &[FitParam::KFresnel, FitParam::Scale], truth(150.0, 250.0, 250.0, 1e-5), grid(100.0, 6000.0, 20)),
            (FitModel::ChiPThin, &[FitParam::PreparationWaist, FitParam::CollectionWaist], truth(150.0, 111.0, 50.0, 1e-5), grid(30.0, 600.0, 20)),
            (FitModel::ChiMThin, &[FitParam::PreparationWaist, FitParam::CollectionWaist], truth(150.0, 155.0, 70.0, 1e-5), grid(30.0, 600.0, 20)),
            (FitModel::SinglesC3, &[FitParam::PumpWaist, FitParam::Scale], truth(150.0, 250.0, 250.0, 1e-5).with_scale(3.0e4), grid(50.0, 600.0, 12)),
        ];
        for (model, free, p, xs) in cases {
            let data = synthetic(model, &p, &xs, 0.0, 1);
            let out = fit(model, &data, free, &perturbed(&p, free, 1.3)).unwrap();
            assert!(out.converged, "{model}");
            assert!(out.residual_rms < 1e-10, "{model}: {}", out.residual_rms);
            for fp in &out.params {
                let want = p.get(fp.param);
                assert!(((fp.value - want) / want).abs() < 1e-8, "{model} {}: {} vs {want}", fp.param, fp.value);
            }
        }
    }

    #[test]
    fn noisy_aperture_fit_within_five_percent() {
        let p = truth(150.0, 250.0, 250.0, 1e-5);
        let free = [FitParam::KFresnel, FitParam::Scale];
        let data = synthetic(FitModel::EpsPThin, &p, &grid(100.0, 6000.0, 20), 0.01, 7);
        let out = fit(FitModel::EpsPThin, &data, &free, &perturbed(&p, &free, 1.5)).unwrap();
        assert!(out.converged);
        assert!((out.value(FitParam::KFresnel) / 1e-5 - 1.0).abs() < 0.05);
        assert!((out.value(FitParam::Scale) - 1.0).abs() < 0.05);
        assert!(out.params.iter().all(|fp| fp.uncertainty > 0.0 && fp.uncertainty.is_finite()));
    }

    #[test]
    fn fitted_aperture_curve_rises_and_saturates_below_one() {
        let p = truth(150.0, 250.0, 250.0, 1e-5);
        let free = [FitParam::KFresnel, FitParam::Scale];
        let data = synthetic(FitModel::EpsPThin, &p, &grid(100.0, 6000.0, 20), 0.01, 3);
        let out = fit(FitModel::EpsPThin, &data, &free, &perturbed(&p, &free, 0.8)).unwrap();
        let curve: Vec<f64> = grid(100.0, 20000.0, 50).iter().map(|&d| out.predict(d).unwrap()).collect();
        assert!(curve.windows(2).all(|w| w[1] > w[0]));
        assert!(out.predict(1e7).unwrap() <= 1.0 + 0.05);
    }

    #[test]
    fn kernel_and_pump_waist_are_not_jointly_identifiable() {
        let p = truth(150.0, 250.0, 250.0, 1e-5);
        let data = synthetic(FitModel::EpsPThin, &p, &grid(100.0, 6000.0, 20), 0.0, 1);
        let free = [FitParam::KFresnel, FitParam::PumpWaist, FitParam::Scale];
        assert_eq!(fit(FitModel::EpsPThin, &data, &free, &p), Err(FitError::SingularJacobian));
    }

    #[test]
    fn row_order_does_not_matter() {
        let p = truth(150.0, 250.0, 250.0, 1e-5);
        let free = [FitParam::KFresnel, FitParam::Scale];
        let data = synthetic(FitModel::EpsPThin, &p, &grid(100.0, 6000.0, 20), 0.01, 11);
        let mut shuffled = data.clone();
        shuffled.rows.reverse();
        shuffled.rows.swap(2, 9);
        let start = perturbed(&p, &free, 1.2);
        let a = fit(FitModel::EpsPThin, &data, &free, &start).unwrap();
        let b = fit(FitModel::EpsPThin, &shuffled, &free, &start).unwrap();
        for (x, y) in a.params.iter().zip(&b.params) {
            assert!(((x.value - y.value) / x.value).abs() < 1e-8);
        }
    }

    #[test]
    fn equal_sigmas_match_unweighted() {
        let p = truth(150.0, 250.0, 250.0, 1e-5);
        let free = [FitParam::KFresnel, FitParam::Scale];
        let data = synthetic(FitModel::EpsPThin, &p, &grid(100.0, 6000.0, 20), 0.01, 5);
        let mut weighted = data.clone();
        for r in &mut weighted.rows {
            r.sigma = Some(0.013);
        }
        let start = perturbed(&p, &free, 1.2);
        let a = fit(FitModel::EpsPThin, &data, &free, &start).unwrap();
        let b = fit(FitModel::EpsPThin, &weighted, &free, &start).unwrap();
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn rejects_mismatched_requests() {
        let p = truth(150.0, 250.0, 250.0, 1e-5);
        let data = synthetic(FitModel::ChiPThin, &p, &grid(30.0, 600.0, 10), 0.0, 1);
        assert!(matches!(
            fit(FitModel::EpsPThin, &data, &[FitParam::KFresnel], &p),
            Err(FitError::AbscissaMismatch { .. })
        ));
        assert!(matches!(
            fit(FitModel::ChiPThin, &data, &[FitParam::KFresnel], &p),
            Err(FitError::UnknownParameter { .. })
        ));
        assert_eq!(fit(FitModel::ChiPThin, &data, &[], &p), Err(FitError::NothingToFit));
    }

    #[test]
    fn pump_waist_comparison() {
        let free = [FitParam::KFresnel, FitParam::Scale];
        let outcome = |wp: f64| {
            let p = truth(wp, 250.0, 250.0, 1e-5);
            let data = synthetic(FitModel::EpsPThin, &p, &grid(100.0, 6000.0, 20), 0.0, 1);
            (wp, fit(FitModel::EpsPThin, &data, &free, &perturbed(&p, &free, 1.1)).unwrap())
        };
        let a = outcome(150.0);
        let b = outcome(600.0);
        let report = compare_pump_waists(&[b.clone(), a.clone()]).unwrap();
        assert!(report.larger_pump_is_better);
        assert_eq!(report.saturations[0].0, 150.0);
        assert!(report.saturations[1].1 > report.saturations[0].1);

        let tie = compare_pump_waists(&[a.clone(), (200.0, a.1.clone())]).unwrap();
        assert_eq!(tie.ties, vec![(150.0, 200.0)]);
        assert!(!tie.larger_pump_is_better);

        assert_eq!(compare_pump_waists(&[a]), Err(FitError::TooFewOutcomes(1)));
    }
}
