//! Brute-force evaluation of the defining overlap integrals.
//!
//! Everything here is computed from the biphoton field point by point, with
//! no use of the closed forms. The delta functions of the field and of the
//! imaging kernels are applied analytically: on the support the signal
//! position is `ρ₂ = ρ₁ + (0, (θ_i+θ_s)u)`, and a squared delta is read as a
//! single delta, so every rate is an integral over `u ∈ [0, L]` and one
//! transverse plane.
//!
//! Each integral is computed at the requested rule sizes and again with
//! every rule doubled; the finer value is returned when the two agree.

use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use crate::model::{EfficiencyKind, EfficiencyResult, Note, Regime, ValidationError, Validated};
use crate::quadrature::{gaussian_envelope, GaussLegendre, KahanSum};

/// Largest kernel phase change, in radians, that one transverse panel is
/// asked to resolve in the free-space propagation integral.
const PANEL_PHASE: f64 = 8.0;

type AxisField<'a> = Box<dyn Fn(f64) -> Complex64 + 'a>;

/// Rule sizes and acceptance threshold for the oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub n_longitudinal: usize,
    /// Points per transverse axis.
    pub n_transverse: usize,
    /// Half-width of each transverse window in units of the integrand's
    /// Gaussian envelope width.
    pub transverse_cutoff: f64,
    /// Largest relative change tolerated when every rule is doubled.
    pub tolerance: f64,
    /// Keep the pure-phase factor of the field.
    pub include_phase: bool,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            n_longitudinal: 64,
            n_transverse: 48,
            transverse_cutoff: 6.0,
            tolerance: 1e-6,
            include_phase: false,
        }
    }
}

impl QuadratureSpec {
    pub fn check(&self) -> Result<(), OracleError> {
        if self.n_longitudinal < 8 || self.n_transverse < 8 {
            return Err(OracleError::InvalidSpec("rule sizes must be at least 8".into()));
        }
        if !(self.transverse_cutoff >= 4.0) {
            return Err(OracleError::InvalidSpec("transverse_cutoff must be at least 4".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(OracleError::InvalidSpec("tolerance must be positive".into()));
        }
        Ok(())
    }

    fn doubled(&self) -> Self {
        Self {
            n_longitudinal: 2 * self.n_longitudinal,
            n_transverse: 2 * self.n_transverse,
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("invalid quadrature spec: {0}")]
    InvalidSpec(String),
    #[error("QuadratureNotConverged: {integral} changed from {coarse:e} to {fine:e} (relative {relative_change:e}) when the rules were doubled")]
    NotConverged {
        integral: &'static str,
        coarse: f64,
        fine: f64,
        relative_change: f64,
    },
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

/// A point on the support of the field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldPoint {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    /// Longitudinal coordinate `τ/D`.
    pub u: f64,
}

impl FieldPoint {
    /// Idler position `(x1, y1)` at `u`; the signal position follows from
    /// the delta constraints.
    pub fn on_support(x1: f64, y1: f64, u: f64, v: &Validated) -> Self {
        let c = v.config();
        Self {
            x1,
            y1,
            x2: x1,
            y2: y1 + (c.theta_i + c.theta_s) * u,
            u,
        }
    }
}

/// Field amplitude with unit normalisation. `p` must lie on the support
/// (see [`FieldPoint::on_support`]); zero outside `0 ≤ u ≤ L`.
pub fn biphoton_amplitude(p: &FieldPoint, v: &Validated, include_phase: bool) -> Complex64 {
    let c = v.config();
    if !(p.u >= 0.0 && p.u <= c.length) {
        return Complex64::new(0.0, 0.0);
    }
    let wp2 = v.geom().w_p.powi(2);
    let detune = (c.n_p - c.n_s) / c.k_p;
    let shifted = p.y1 + c.theta_i * p.u;
    // Cross term and square of the walk-off difference, kept as separate
    // factors so the completed square is not assumed.
    let exponent = -(detune * p.u).powi(2) / wp2 + 2.0 * detune * p.u * shifted / wp2
        - (p.x1 * p.x1 + shifted * shifted) / wp2;
    let magnitude = exponent.exp();
    if include_phase {
        let phase = -(c.k_i * c.theta_i * c.theta_i + c.k_s * c.theta_s * c.theta_i) * p.u;
        Complex64::from_polar(magnitude, phase)
    } else {
        Complex64::new(magnitude, 0.0)
    }
}

/// Single-mode fibre mode referred to the crystal plane through a unitary
/// imaging kernel of magnification `m`.
fn fibre_mode(r2: f64, waist: f64, m: f64) -> f64 {
    let fibre_waist = m.abs() * waist;
    m.abs() * (2.0 / PI).sqrt() / fibre_waist * (-r2 * m * m / (fibre_waist * fibre_waist)).exp()
}

/// Gaussian bucket transmission referred to the crystal plane.
fn bucket(r2: f64, waist: f64, m: f64) -> f64 {
    let detector_waist = m.abs() * waist;
    (-2.0 * r2 * m * m / (detector_waist * detector_waist)).exp()
}

struct Rules<'a> {
    v: &'a Validated,
    spec: QuadratureSpec,
    longitudinal: GaussLegendre,
    transverse: GaussLegendre,
}

impl<'a> Rules<'a> {
    fn new(v: &'a Validated, spec: QuadratureSpec) -> Self {
        Self {
            v,
            spec,
            longitudinal: GaussLegendre::new(spec.n_longitudinal),
            transverse: GaussLegendre::new(spec.n_transverse),
        }
    }

    fn window(&self, factors: &[(f64, f64)]) -> (f64, f64) {
        let (centre, sigma) = gaussian_envelope(factors);
        let half = self.spec.transverse_cutoff * sigma;
        (centre - half, centre + half)
    }

    fn field(&self, x1: f64, y1: f64, u: f64) -> Complex64 {
        biphoton_amplitude(&FieldPoint::on_support(x1, y1, u, self.v), self.v, self.spec.include_phase)
    }

    /// The transverse rule repeated on equal panels of `[a, b]`, enough of
    /// them that an integrand whose phase changes by `swing` over the whole
    /// interval turns by at most [`PANEL_PHASE`] per panel.
    fn panelled(&self, (a, b): (f64, f64), swing: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let count = (swing / PANEL_PHASE).ceil().max(1.0) as usize;
        let width = (b - a) / count as f64;
        (0..count).flat_map(move |i| {
            let lo = a + i as f64 * width;
            self.transverse.mapped(lo, lo + width)
        })
    }

    fn over_crystal(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.longitudinal.integrate(0.0, self.v.config().length, f)
    }

    fn over_plane(&self, xs: (f64, f64), ys: (f64, f64), mut f: impl FnMut(f64, f64) -> f64) -> f64 {
        let mut acc = KahanSum::default();
        for (x, wx) in self.transverse.mapped(xs.0, xs.1) {
            for (y, wy) in self.transverse.mapped(ys.0, ys.1) {
                acc.add(wx * wy * f(x, y));
            }
        }
        acc.total()
    }

    fn centres(&self, u: f64) -> (f64, f64) {
        let c = self.v.config();
        // Pump centre in idler coordinates, and the signal offset.
        (-c.idler_walkoff() / c.k_p * u, (c.theta_i + c.theta_s) * u)
    }

    fn coincidence_single_mode(&self) -> f64 {
        let g = self.v.geom();
        self.over_crystal(|u| {
            let (pump_y, shift) = self.centres(u);
            let xs = self.window(&[(0.0, g.w_p), (0.0, g.w_o1), (0.0, g.w_o2)]);
            let ys = self.window(&[(pump_y, g.w_p), (0.0, g.w_o1), (-shift, g.w_o2)]);
            let mut re = KahanSum::default();
            let mut im = KahanSum::default();
            for (x, wx) in self.transverse.mapped(xs.0, xs.1) {
                for (y, wy) in self.transverse.mapped(ys.0, ys.1) {
                    let y2 = y + shift;
                    let weight = wx
                        * wy
                        * fibre_mode(x * x + y * y, g.w_o1, g.m_3)
                        * fibre_mode(x * x + y2 * y2, g.w_o2, g.m_4);
                    let a = self.field(x, y, u) * weight;
                    re.add(a.re);
                    im.add(a.im);
                }
            }
            Complex64::new(re.total(), im.total()).norm_sqr()
        })
    }

    fn singles_single_mode(&self, arm: crate::model::Arm) -> f64 {
        let g = self.v.geom();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        self.over_crystal(|u| {
            let (pump_y, shift) = self.centres(u);
            let (mode_y, waist, m) = match arm {
                crate::model::Arm::Three => (0.0, g.w_o1, g.m_3),
                crate::model::Arm::Four => (-shift, g.w_o2, g.m_4),
            };
            let xs = self.window(&[(0.0, g.w_p * r), (0.0, waist * r)]);
            let ys = self.window(&[(pump_y, g.w_p * r), (mode_y, waist * r)]);
            self.over_plane(xs, ys, |x, y| {
                let y_mode = y - mode_y;
                self.field(x, y, u).norm_sqr() * fibre_mode(x * x + y_mode * y_mode, waist, m).powi(2)
            })
        })
    }

    /// `C₃₄`, `C₃` or `C₄` of the bucket model depending on which
    /// transmissions are applied.
    fn multimode(&self, idler: bool, signal: bool) -> f64 {
        let g = self.v.geom();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        self.over_crystal(|u| {
            let (pump_y, shift) = self.centres(u);
            let mut xf = vec![(0.0, g.w_p * r)];
            let mut yf = vec![(pump_y, g.w_p * r)];
            if idler {
                xf.push((0.0, g.w_o1 * r));
                yf.push((0.0, g.w_o1 * r));
            }
            if signal {
                xf.push((0.0, g.w_o2 * r));
                yf.push((-shift, g.w_o2 * r));
            }
            let xs = self.window(&xf);
            let ys = self.window(&yf);
            self.over_plane(xs, ys, |x, y| {
                let mut t = self.field(x, y, u).norm_sqr();
                if idler {
                    t *= bucket(x * x + y * y, g.w_o1, g.m_3);
                }
                if signal {
                    let y2 = y + shift;
                    t *= bucket(x * x + y2 * y2, g.w_o2, g.m_4);
                }
                t
            })
        })
    }

    /// Idler into the fibre, signal through free space onto a Gaussian
    /// aperture. The amplitude and the aperture both factorise in x and y.
    fn coincidence_mixed(&self, aperture: f64, k: f64) -> f64 {
        let g = self.v.geom();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let kernel_norm = (k / PI).sqrt();
        let mode_norm = (2.0 / PI).sqrt() / g.w_o1;
        self.over_crystal(|u| {
            let (pump_y, shift) = self.centres(u);
            let mut total = mode_norm * mode_norm;
            // The field is a product of an x factor and a y factor; recover
            // each from pointwise evaluations so that G(x, y) = X(x)·Y(y).
            let centre = self.field(0.0, pump_y, u);
            let axes: [(f64, f64, AxisField<'_>); 2] = [
                (0.0, 0.0, Box::new(move |x| self.field(x, pump_y, u) / centre)),
                (pump_y, shift, Box::new(move |y| self.field(0.0, y, u))),
            ];
            for (pump_c, offset, field_axis) in axes {
                let input = |t: f64| field_axis(t) * (-(t * t) / (g.w_o1 * g.w_o1)).exp();
                let (c_in, s_in) = gaussian_envelope(&[(pump_c, g.w_p), (0.0, g.w_o1)]);
                let inner = self.window(&[(c_in, g.w_p), (0.0, g.w_o1)]);
                let spread2 = s_in * s_in + 1.0 / (k * k * s_in * s_in);
                let outer = self.window(&[(c_in + offset, spread2.sqrt() * r), (0.0, aperture * r)]);
                // Bound on the kernel phase swing across the inner window.
                let reach = (inner.0 + offset).abs().max((inner.1 + offset).abs()) + outer.0.abs().max(outer.1.abs());
                let swing = 2.0 * k * (inner.1 - inner.0) * reach;
                let samples: Vec<(f64, Complex64)> = self
                    .panelled(inner, swing)
                    .map(|(x1, w)| (x1, input(x1) * w))
                    .collect();
                let mut acc = KahanSum::default();
                for (x4, w4) in self.transverse.mapped(outer.0, outer.1) {
                    let mut re = KahanSum::default();
                    let mut im = KahanSum::default();
                    for &(x1, a) in &samples {
                        let d = x1 + offset - x4;
                        let h = Complex64::from_polar(kernel_norm, -k * d * d);
                        let t = a * h;
                        re.add(t.re);
                        im.add(t.im);
                    }
                    let amp = Complex64::new(re.total(), im.total());
                    acc.add(w4 * bucket(x4 * x4, aperture, 1.0) * amp.norm_sqr());
                }
                total *= acc.total();
            }
            total
        })
    }
}

fn converged(
    v: &Validated,
    spec: &QuadratureSpec,
    integral: &'static str,
    f: impl Fn(&Rules) -> f64,
) -> Result<f64, OracleError> {
    spec.check()?;
    let coarse = f(&Rules::new(v, *spec));
    let fine = f(&Rules::new(v, spec.doubled()));
    let scale = coarse.abs().max(fine.abs());
    let relative_change = if scale == 0.0 { 0.0 } else { (fine - coarse).abs() / scale };
    if relative_change > spec.tolerance || !fine.is_finite() {
        return Err(OracleError::NotConverged {
            integral,
            coarse,
            fine,
            relative_change,
        });
    }
    Ok(fine)
}

/// Proportional to the single-mode coincidence rate.
pub fn coincidence_single_mode(v: &Validated, spec: &QuadratureSpec) -> Result<f64, OracleError> {
    converged(v, spec, "coincidence_single_mode", |r| r.coincidence_single_mode())
}

/// Proportional to the single-mode singles rate of `arm`; the other arm is
/// integrated out.
pub fn singles_single_mode(v: &Validated, spec: &QuadratureSpec, arm: crate::model::Arm) -> Result<f64, OracleError> {
    converged(v, spec, "singles_single_mode", |r| r.singles_single_mode(arm))
}

pub fn coincidence_multimode(v: &Validated, spec: &QuadratureSpec) -> Result<f64, OracleError> {
    converged(v, spec, "coincidence_multimode", |r| r.multimode(true, true))
}

pub fn singles_multimode(v: &Validated, spec: &QuadratureSpec, arm: crate::model::Arm) -> Result<f64, OracleError> {
    let (idler, signal) = match arm {
        crate::model::Arm::Three => (true, false),
        crate::model::Arm::Four => (false, true),
    };
    converged(v, spec, "singles_multimode", |r| r.multimode(idler, signal))
}

/// Fibre-coupled idler, free-space signal onto a Gaussian aperture.
pub fn coincidence_mixed(v: &Validated, spec: &QuadratureSpec) -> Result<f64, OracleError> {
    let (w, k) = v.aperture()?;
    converged(v, spec, "coincidence_mixed", |r| r.coincidence_mixed(w, k))
}

/// Any efficiency as the defining ratio of oracle integrals. Singles are
/// returned for a unit-power pump so they are directly comparable with the
/// closed form.
pub fn oracle_efficiency(
    kind: EfficiencyKind,
    v: &Validated,
    spec: &QuadratureSpec,
) -> Result<EfficiencyResult, OracleError> {
    use crate::model::Arm::{Four, Three};
    use EfficiencyKind::*;
    let value = match kind {
        ChiM => {
            coincidence_single_mode(v, spec)?
                / (singles_single_mode(v, spec, Three)? * singles_single_mode(v, spec, Four)?).sqrt()
        }
        ChiP3 => coincidence_single_mode(v, spec)? / singles_single_mode(v, spec, Three)?,
        ChiP4 => coincidence_single_mode(v, spec)? / singles_single_mode(v, spec, Four)?,
        EtaM => {
            coincidence_multimode(v, spec)?
                / (singles_multimode(v, spec, Three)? * singles_multimode(v, spec, Four)?).sqrt()
        }
        EtaP3 => coincidence_multimode(v, spec)? / singles_multimode(v, spec, Three)?,
        EtaP4 => coincidence_multimode(v, spec)? / singles_multimode(v, spec, Four)?,
        EpsP => coincidence_mixed(v, spec)? / singles_single_mode(v, spec, Three)?,
        SinglesC3 => {
            let wp = v.geom().w_p;
            singles_single_mode(v, spec, Three)? * 2.0 / (PI * wp * wp)
        }
    };
    Ok(EfficiencyResult::new(kind, value, Regime::FullCrystal, v).with_note(Note::Quadrature {
        n_longitudinal: spec.n_longitudinal,
        n_transverse: spec.n_transverse,
    }))
}
