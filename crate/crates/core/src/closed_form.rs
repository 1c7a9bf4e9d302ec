//! Analytic coupling efficiencies, full-crystal and thin-crystal.
//!
//! Notation: `a_i`, `a_s` are the idler/signal walk-off combinations,
//! `S = w_o2² w_p² + w_o1² (w_o2² + w_p²)` and
//! `B = a_s² w_o1² + a_i² w_o2² + K_p² (θ_i+θ_s)² w_p²`.
//! Every full-crystal expression is a geometric prefactor times an Erf
//! ratio; when all Erf arguments are below [`SERIES_THRESHOLD`] the ratio
//! is replaced by its second-order Maclaurin expansion so that `L → 0` is
//! regular.

use std::f64::consts::PI;

use serde::Serialize;

use crate::model::{Arm, EfficiencyKind, EfficiencyResult, Note, Regime, ValidationError, Validated};
pub use crate::special::erf;

/// Erf arguments below this use the series form of the Erf ratio.
pub const SERIES_THRESHOLD: f64 = 1e-4;

/// Intermediate scalars shared by the closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuxiliaryTerms {
    /// `a_i a_s √(w_o1²+w_p²) √(w_o2²+w_p²)`.
    pub a: f64,
    pub b: f64,
    pub s: f64,
    /// Present only when aperture parameters are set.
    pub b_prime: Option<f64>,
    pub c_prime: Option<f64>,
}

pub fn auxiliary_terms(v: &Validated) -> AuxiliaryTerms {
    let t = Terms::new(v);
    let (b_prime, c_prime) = match v.aperture() {
        Ok((w, k)) => {
            let (bp, cp) = t.mixed_terms(w, k);
            (Some(bp), Some(cp))
        }
        Err(_) => (None, None),
    };
    AuxiliaryTerms {
        a: t.ai * t.as_ * (t.w12 + t.wp2).sqrt() * (t.w22 + t.wp2).sqrt(),
        b: t.b,
        s: t.s,
        b_prime,
        c_prime,
    }
}

struct Terms {
    wp2: f64,
    w12: f64,
    w22: f64,
    ai: f64,
    as_: f64,
    kp: f64,
    length: f64,
    theta_sum: f64,
    s: f64,
    b: f64,
}

impl Terms {
    fn new(v: &Validated) -> Self {
        let c = v.config();
        let g = v.geom();
        let wp2 = g.w_p * g.w_p;
        let w12 = g.w_o1 * g.w_o1;
        let w22 = g.w_o2 * g.w_o2;
        let ai = c.idler_walkoff();
        let as_ = c.signal_walkoff();
        let theta_sum = c.theta_i + c.theta_s;
        let s = w22 * wp2 + w12 * (w22 + wp2);
        let b = as_ * as_ * w12 + ai * ai * w22 + (c.k_p * theta_sum).powi(2) * wp2;
        Self {
            wp2,
            w12,
            w22,
            ai,
            as_,
            kp: c.k_p,
            length: c.length,
            theta_sum,
            s,
            b,
        }
    }

    /// Per-unit-length Erf argument of the coincidence term.
    fn coincidence_rate(&self) -> f64 {
        (2.0 * self.b).sqrt() / (self.kp * self.s.sqrt())
    }

    fn idler_rate(&self) -> f64 {
        2f64.sqrt() * self.ai / (self.kp * (self.w12 + self.wp2).sqrt())
    }

    fn signal_rate(&self) -> f64 {
        2f64.sqrt() * self.as_ / (self.kp * (self.w22 + self.wp2).sqrt())
    }

    /// `(B', C')` for aperture width `w` and kernel parameter `k`.
    fn mixed_terms(&self, w: f64, k: f64) -> (f64, f64) {
        let (w12, wp2, k2, w2) = (self.w12, self.wp2, k * k, w * w);
        let bp = self.as_ * self.as_ * w12 * w12 * wp2 * k2
            + self.ai * self.ai * (w12 + wp2 + k2 * w2 * w12 * wp2)
            + (self.kp * self.theta_sum).powi(2) * k2 * w12 * wp2 * wp2;
        let cp = (w12 + wp2).powi(2) + k2 * w12 * wp2 * (w2 * wp2 + w12 * w2 + w12 * wp2);
        (bp, cp)
    }
}

/// `Erf(L·num) / Π Erf(L·denⱼ)^{pⱼ}` with `Σ pⱼ = 1`. The second value is
/// true when the series branch was taken.
fn erf_ratio(length: f64, num: f64, dens: &[(f64, f64)]) -> (f64, bool) {
    let largest = dens
        .iter()
        .map(|&(r, _)| r)
        .fold(num, f64::max)
        * length;
    if largest < SERIES_THRESHOLD {
        let mut lead = num;
        let mut quad = num * num;
        for &(rate, power) in dens {
            lead /= rate.powf(power);
            quad -= power * rate * rate;
        }
        (lead * (1.0 - length * length * quad / 3.0), true)
    } else {
        let mut denom = 1.0;
        for &(rate, power) in dens {
            denom *= erf(length * rate).powf(power);
        }
        (erf(length * num) / denom, false)
    }
}

fn finish(result: EfficiencyResult, series: bool) -> EfficiencyResult {
    if series {
        result.with_note(Note::SeriesBranch)
    } else {
        result
    }
}

fn matching_factor(t: &Terms) -> (f64, bool) {
    erf_ratio(
        t.length,
        t.coincidence_rate(),
        &[(t.idler_rate(), 0.5), (t.signal_rate(), 0.5)],
    )
}

fn preparation_factor(t: &Terms) -> (f64, bool) {
    erf_ratio(t.length, t.coincidence_rate(), &[(t.idler_rate(), 1.0)])
}

/// Single-mode matching efficiency χ_M.
pub fn chi_m_full(v: &Validated) -> EfficiencyResult {
    let t = Terms::new(v);
    let (f, series) = matching_factor(&t);
    let a = t.ai * t.as_ * (t.w12 + t.wp2).sqrt() * (t.w22 + t.wp2).sqrt();
    let value = f * 4.0 * t.w12 * t.w22 * t.wp2 * a.sqrt() / (t.s.powf(1.5) * t.b.sqrt());
    finish(
        EfficiencyResult::new(EfficiencyKind::ChiM, value, Regime::FullCrystal, v),
        series,
    )
}

/// Single-mode preparation efficiency χ_P for the given heralding arm.
/// Arm 4 is arm 3 evaluated with the arms exchanged.
pub fn chi_p_full(v: &Validated, arm: Arm) -> EfficiencyResult {
    let (kind, inputs) = match arm {
        Arm::Three => (EfficiencyKind::ChiP3, *v),
        Arm::Four => (EfficiencyKind::ChiP4, v.swapped_arms()),
    };
    let t = Terms::new(&inputs);
    let (f, series) = preparation_factor(&t);
    let value = f * 4.0 * t.ai * t.w12 * t.w22 * t.wp2 * (t.w12 + t.wp2).sqrt()
        / (t.s.powf(1.5) * t.b.sqrt());
    finish(EfficiencyResult::new(kind, value, Regime::FullCrystal, v), series)
}

pub fn chi_m_thin(v: &Validated) -> EfficiencyResult {
    let t = Terms::new(v);
    let value = 4.0 * t.wp2 * t.w12 * t.w22 * ((t.w12 + t.wp2) * (t.w22 + t.wp2)).sqrt() / (t.s * t.s);
    EfficiencyResult::new(EfficiencyKind::ChiM, value, Regime::ThinCrystal, v)
}

pub fn chi_p_thin(v: &Validated, arm: Arm) -> EfficiencyResult {
    let (kind, inputs) = match arm {
        Arm::Three => (EfficiencyKind::ChiP3, *v),
        Arm::Four => (EfficiencyKind::ChiP4, v.swapped_arms()),
    };
    let t = Terms::new(&inputs);
    let value = 4.0 * t.wp2 * t.w12 * t.w22 * (t.w12 + t.wp2) / (t.s * t.s);
    EfficiencyResult::new(kind, value, Regime::ThinCrystal, v)
}

/// Multi-mode (bucket) matching efficiency η_M.
pub fn eta_m_full(v: &Validated) -> EfficiencyResult {
    let t = Terms::new(v);
    let (f, series) = matching_factor(&t);
    let a = t.ai * t.as_ * (t.w12 + t.wp2).sqrt() * (t.w22 + t.wp2).sqrt();
    let value = f * (t.w12 * t.w22).sqrt() * a.sqrt() / (t.s * t.b).sqrt();
    finish(
        EfficiencyResult::new(EfficiencyKind::EtaM, value, Regime::FullCrystal, v),
        series,
    )
}

/// Multi-mode preparation efficiency η_P.
///
/// The literal printed expression carries an extra factor 4 (its
/// large-collection-waist limit is 4, not 1); the returned value is
/// normalised to supremum 1 and the literal value is kept in the notes.
pub fn eta_p_full(v: &Validated, arm: Arm) -> EfficiencyResult {
    let (kind, inputs) = match arm {
        Arm::Three => (EfficiencyKind::EtaP3, *v),
        Arm::Four => (EfficiencyKind::EtaP4, v.swapped_arms()),
    };
    let t = Terms::new(&inputs);
    let (f, series) = preparation_factor(&t);
    let value = f * t.ai * t.w22 * (t.w12 + t.wp2).sqrt() / (t.s * t.b).sqrt();
    finish(
        EfficiencyResult::new(kind, value, Regime::FullCrystal, v)
            .with_note(Note::PrefactorNormalized { printed_value: 4.0 * value }),
        series,
    )
}

/// Which thin-crystal η expression to return.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThinForm {
    /// Dimensionless `L → 0` limit of the full expression.
    #[default]
    Corrected,
    /// Literal printed expression (units of µm², audit only).
    AsPrinted,
}

pub fn eta_m_thin(v: &Validated, form: ThinForm) -> EfficiencyResult {
    let t = Terms::new(v);
    let root = ((t.w12 + t.wp2) * (t.w22 + t.wp2)).sqrt();
    match form {
        ThinForm::Corrected => {
            let value = (t.w12 * t.w22).sqrt() * root / t.s;
            EfficiencyResult::new(EfficiencyKind::EtaM, value, Regime::ThinCrystal, v)
        }
        ThinForm::AsPrinted => {
            let value = t.w12 * t.w22 * root / t.s;
            EfficiencyResult::new(EfficiencyKind::EtaM, value, Regime::ThinCrystal, v)
                .with_note(Note::AsPrintedThinForm)
        }
    }
}

pub fn eta_p_thin(v: &Validated, arm: Arm, form: ThinForm) -> EfficiencyResult {
    let (kind, inputs) = match arm {
        Arm::Three => (EfficiencyKind::EtaP3, *v),
        Arm::Four => (EfficiencyKind::EtaP4, v.swapped_arms()),
    };
    let t = Terms::new(&inputs);
    match form {
        ThinForm::Corrected => {
            let value = t.w22 * (t.w12 + t.wp2) / t.s;
            EfficiencyResult::new(kind, value, Regime::ThinCrystal, v)
        }
        ThinForm::AsPrinted => {
            let value = t.w12 * t.w22 * (t.w12 + t.wp2) / t.s;
            EfficiencyResult::new(kind, value, Regime::ThinCrystal, v).with_note(Note::AsPrintedThinForm)
        }
    }
}

/// Single-mode preparation with bucket collection through free space, ε_P.
pub fn eps_p_full(v: &Validated) -> Result<EfficiencyResult, ValidationError> {
    let (w, k) = v.aperture()?;
    let t = Terms::new(v);
    let (bp, cp) = t.mixed_terms(w, k);
    let rate = (2.0 * bp).sqrt() / (t.kp * cp.sqrt());
    let (f, series) = erf_ratio(t.length, rate, &[(t.idler_rate(), 1.0)]);
    let value = f * t.ai * k * k * w * w * t.w12 * t.wp2 * (t.w12 + t.wp2).sqrt() / (cp * bp).sqrt();
    Ok(finish(
        EfficiencyResult::new(EfficiencyKind::EpsP, value, Regime::FullCrystal, v),
        series,
    ))
}

pub fn eps_p_thin(v: &Validated) -> Result<EfficiencyResult, ValidationError> {
    let (w, k) = v.aperture()?;
    let t = Terms::new(v);
    let (_, cp) = t.mixed_terms(w, k);
    let value = k * k * w * w * t.w12 * t.wp2 * (t.w12 + t.wp2) / cp;
    Ok(EfficiencyResult::new(EfficiencyKind::EpsP, value, Regime::ThinCrystal, v))
}

/// Heralding-arm singles rate for a single-mode fibre of waist `w_o`, in
/// units where the pump carries unit power.
pub fn singles_c3(v: &Validated, w_o: f64) -> EfficiencyResult {
    let c = v.config();
    let g = v.geom();
    let ai = c.idler_walkoff();
    let r = (w_o * w_o + g.w_p * g.w_p).sqrt();
    let value = c.k_p * erf(2f64.sqrt() * c.length * ai / (c.k_p * r)) / ((2.0 * PI).sqrt() * ai * r);
    EfficiencyResult::new(EfficiencyKind::SinglesC3, value, Regime::FullCrystal, v)
        .with_note(Note::SinglesLengthCorrected)
}

/// Dispatches on `kind` and `regime`. Singles use `w_o = w_o1`.
pub fn evaluate(kind: EfficiencyKind, regime: Regime, v: &Validated) -> Result<EfficiencyResult, ValidationError> {
    use EfficiencyKind::*;
    use Regime::*;
    Ok(match (kind, regime) {
        (ChiM, FullCrystal) => chi_m_full(v),
        (ChiM, ThinCrystal) => chi_m_thin(v),
        (ChiP3, FullCrystal) => chi_p_full(v, Arm::Three),
        (ChiP4, FullCrystal) => chi_p_full(v, Arm::Four),
        (ChiP3, ThinCrystal) => chi_p_thin(v, Arm::Three),
        (ChiP4, ThinCrystal) => chi_p_thin(v, Arm::Four),
        (EtaM, FullCrystal) => eta_m_full(v),
        (EtaM, ThinCrystal) => eta_m_thin(v, ThinForm::Corrected),
        (EtaP3, FullCrystal) => eta_p_full(v, Arm::Three),
        (EtaP4, FullCrystal) => eta_p_full(v, Arm::Four),
        (EtaP3, ThinCrystal) => eta_p_thin(v, Arm::Three, ThinForm::Corrected),
        (EtaP4, ThinCrystal) => eta_p_thin(v, Arm::Four, ThinForm::Corrected),
        (EpsP, FullCrystal) => eps_p_full(v)?,
        (EpsP, ThinCrystal) => eps_p_thin(v)?,
        (SinglesC3, _) => singles_c3(v, v.geom().w_o1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate, BeamGeometry, PhaseMatchConfig};

    fn config(length: f64) -> PhaseMatchConfig {
        PhaseMatchConfig {
            k_p: 33.53,
            k_s: 16.77,
            k_i: 16.77,
            n_p: 0.03,
            n_s: 0.0,
            d: 0.0,
            theta_i: 0.004,
            theta_s: 0.004,
            length,
        }
    }

    fn v(length: f64, wp: f64, w1: f64, w2: f64) -> Validated {
        validate(&config(length), &BeamGeometry::new(wp, w1, w2).with_aperture(800.0, 1e-5)).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn equal_waists_thin_chi_is_eight_ninths() {
        let p = v(5000.0, 250.0, 250.0, 250.0);
        assert!(rel(chi_m_thin(&p).value, 8.0 / 9.0) < 1e-14);
        assert!(rel(chi_p_thin(&p, Arm::Three).value, 8.0 / 9.0) < 1e-14);
        let tiny = v(1e-6, 250.0, 250.0, 250.0);
        assert!(rel(chi_m_full(&tiny).value, 8.0 / 9.0) < 1e-6);
        assert!(rel(chi_p_full(&tiny, Arm::Three).value, 8.0 / 9.0) < 1e-6);
    }

    #[test]
    fn equal_waists_thin_eta_m_is_two_thirds() {
        let tiny = v(1e-6, 250.0, 250.0, 250.0);
        assert!(rel(eta_m_full(&tiny).value, 2.0 / 3.0) < 1e-6);
        assert!(rel(eta_m_thin(&tiny, ThinForm::Corrected).value, 2.0 / 3.0) < 1e-14);
    }

    #[test]
    fn matching_is_geometric_mean_of_preparations() {
        for (l, wp, w1, w2) in [(5000.0, 150.0, 250.0, 90.0), (300.0, 600.0, 50.0, 420.0), (1e-3, 80.0, 300.0, 200.0)] {
            let p = v(l, wp, w1, w2);
            let m = chi_m_full(&p).value;
            let g = (chi_p_full(&p, Arm::Three).value * chi_p_full(&p, Arm::Four).value).sqrt();
            assert!(rel(m, g) < 1e-12);
            let m = chi_m_thin(&p).value;
            let g = (chi_p_thin(&p, Arm::Three).value * chi_p_thin(&p, Arm::Four).value).sqrt();
            assert!(rel(m, g) < 1e-12);
        }
    }

    #[test]
    fn thin_chi_limits() {
        assert!((chi_m_thin(&v(5000.0, 1e6, 250.0, 250.0)).value - 1.0).abs() < 1e-6);
        assert!(chi_m_thin(&v(5000.0, 250.0, 1e6, 1e6)).value < 1e-6);
        assert!(chi_p_thin(&v(5000.0, 250.0, 250.0, 1e6), Arm::Three).value < 1e-6);
    }

    #[test]
    fn thin_eta_asymptotes() {
        let big_mode = eta_m_thin(&v(1.0, 1.0, 1e3, 1e3), ThinForm::Corrected).value;
        let big_pump = eta_m_thin(&v(1.0, 1e3, 1.0, 1.0), ThinForm::Corrected).value;
        assert!((big_mode - 1.0).abs() < 1e-3);
        assert!((big_pump - 0.5).abs() < 1e-3);
    }

    #[test]
    fn thin_eta_p_has_no_interior_maximum() {
        let mut last = 0.0;
        for i in 1..400 {
            let e = eta_p_thin(&v(1.0, 150.0, 250.0, 5.0 * i as f64), Arm::Three, ThinForm::Corrected).value;
            assert!(e > last);
            last = e;
        }
    }

    #[test]
    fn printed_thin_forms_carry_length_squared() {
        // Scaling every waist by 2 multiplies the printed forms by 4.
        let a = eta_m_thin(&v(1.0, 100.0, 200.0, 300.0), ThinForm::AsPrinted);
        let b = eta_m_thin(&v(1.0, 200.0, 400.0, 600.0), ThinForm::AsPrinted);
        assert!(rel(b.value, 4.0 * a.value) < 1e-12);
        assert!(a.notes.contains(&Note::AsPrintedThinForm));
        let c = eta_p_thin(&v(1.0, 100.0, 200.0, 300.0), Arm::Three, ThinForm::AsPrinted);
        let d = eta_p_thin(&v(1.0, 100.0, 200.0, 300.0), Arm::Three, ThinForm::Corrected);
        assert!(rel(c.value, 200.0 * 200.0 * d.value) < 1e-12);
    }

    #[test]
    fn eta_p_full_records_printed_prefactor() {
        let r = eta_p_full(&v(5000.0, 150.0, 250.0, 300.0), Arm::Three);
        assert_eq!(r.notes, vec![Note::PrefactorNormalized { printed_value: 4.0 * r.value }]);
    }

    #[test]
    fn series_branch_is_continuous() {
        // Find the length at which the largest Erf argument crosses the threshold.
        let p = v(1.0, 150.0, 250.0, 180.0);
        let t = Terms::new(&p);
        let rate = [t.coincidence_rate(), t.idler_rate(), t.signal_rate()]
            .into_iter()
            .fold(0.0, f64::max);
        let crossover = SERIES_THRESHOLD / rate;
        let below = v(crossover * (1.0 - 1e-9), 150.0, 250.0, 180.0);
        let above = v(crossover * (1.0 + 1e-9), 150.0, 250.0, 180.0);
        for f in [chi_m_full, eta_m_full] {
            let (lo, hi) = (f(&below), f(&above));
            assert!(lo.notes.contains(&Note::SeriesBranch));
            assert!(!hi.notes.contains(&Note::SeriesBranch));
            assert!(rel(lo.value, hi.value) < 1e-10);
        }
        let (lo, hi) = (chi_p_full(&below, Arm::Three), chi_p_full(&above, Arm::Three));
        assert!(rel(lo.value, hi.value) < 1e-10);
    }

    #[test]
    fn eps_p_limits() {
        let wide = validate(&config(1e-3), &BeamGeometry::new(150.0, 250.0, 250.0).with_aperture(1e7, 1e-5)).unwrap();
        assert!((eps_p_thin(&wide).unwrap().value - 1.0).abs() < 1e-6);
        assert!((eps_p_full(&wide).unwrap().value - 1.0).abs() < 1e-6);
        let shut = validate(&config(5000.0), &BeamGeometry::new(150.0, 250.0, 250.0).with_aperture(1e-3, 1e-5)).unwrap();
        assert!(eps_p_thin(&shut).unwrap().value < 1e-10);
        assert!(eps_p_full(&shut).unwrap().value < 1e-10);
    }

    #[test]
    fn eps_p_depends_weakly_on_length() {
        for wp in [150.0, 200.0, 400.0, 600.0] {
            for w in [200.0, 1000.0, 3000.0] {
                let long = v(5000.0, wp, 250.0, 250.0);
                let long = validate(long.config(), &BeamGeometry::new(wp, 250.0, 250.0).with_aperture(w, 1e-5)).unwrap();
                let full = eps_p_full(&long).unwrap().value;
                let thin = eps_p_thin(&long).unwrap().value;
                assert!(rel(full, thin) < 0.02, "wp={wp} w={w}: {full} vs {thin}");
            }
        }
    }

    #[test]
    fn eps_p_needs_aperture() {
        let p = validate(&config(5000.0), &BeamGeometry::new(1.0, 1.0, 1.0)).unwrap();
        assert!(eps_p_full(&p).is_err());
        assert!(evaluate(EfficiencyKind::EpsP, Regime::ThinCrystal, &p).is_err());
    }

    #[test]
    fn singles_behaviour() {
        let p = v(5000.0, 150.0, 250.0, 250.0);
        let c = *p.config();
        let mut last = f64::INFINITY;
        for wp in [100.0, 150.0, 200.0, 400.0, 600.0] {
            let s = singles_c3(&v(5000.0, wp, 250.0, 250.0), 250.0).value;
            assert!(s < last);
            last = s;
        }
        assert!(singles_c3(&v(1e-12, 150.0, 250.0, 250.0), 250.0).value < 1e-12);
        let r = (250.0f64 * 250.0 + 150.0 * 150.0).sqrt();
        let saturated = c.k_p / ((2.0 * PI).sqrt() * c.idler_walkoff() * r);
        let long = singles_c3(&v(1e9, 150.0, 250.0, 250.0), 250.0).value;
        assert!(rel(long, saturated) < 1e-12);
    }

    #[test]
    fn scale_invariance() {
        let s = 3.7;
        let c = config(4000.0);
        let g = BeamGeometry::new(150.0, 250.0, 90.0).with_aperture(700.0, 1e-5);
        let scaled_c = PhaseMatchConfig {
            k_p: c.k_p / s,
            k_s: c.k_s / s,
            k_i: c.k_i / s,
            n_p: c.n_p / s,
            n_s: c.n_s / s,
            length: c.length * s,
            ..c
        };
        let scaled_g = BeamGeometry::new(150.0 * s, 250.0 * s, 90.0 * s).with_aperture(700.0 * s, 1e-5 / (s * s));
        let a = validate(&c, &g).unwrap();
        let b = validate(&scaled_c, &scaled_g).unwrap();
        for kind in EfficiencyKind::ALL.into_iter().filter(|k| k.is_efficiency()) {
            for regime in [Regime::FullCrystal, Regime::ThinCrystal] {
                let x = evaluate(kind, regime, &a).unwrap().value;
                let y = evaluate(kind, regime, &b).unwrap().value;
                assert!(rel(x, y) < 1e-12, "{kind} {regime:?}");
            }
        }
    }
}
