//! Domain types, unit conventions and parameter validation.
//!
//! Units throughout: lengths in micrometres, angles in radians, wavenumbers
//! and walk-off terms in rad/µm, `k_fresnel` in µm⁻². The longitudinal
//! coordinate is `u = τ/D ∈ [0, L]`, so `D` never appears as a divisor.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Crystal and phase-matching parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseMatchConfig {
    /// Pump wavenumber `K_p = n_p Ω_p / c`.
    #[serde(rename = "K_p")]
    pub k_p: f64,
    #[serde(rename = "K_s")]
    pub k_s: f64,
    #[serde(rename = "K_i")]
    pub k_i: f64,
    /// Angular-dispersion term of the pump, `(Ω_p/c) ∂n_p/∂φ`.
    #[serde(rename = "N_p")]
    pub n_p: f64,
    /// Angular-dispersion term of the signal, `(Ω_s/c) ∂n_s/∂φ`.
    #[serde(rename = "N_s")]
    pub n_s: f64,
    /// Signal/idler group-index difference; zero for type-I degenerate.
    #[serde(rename = "D")]
    pub d: f64,
    pub theta_i: f64,
    pub theta_s: f64,
    /// Crystal length.
    #[serde(rename = "L")]
    pub length: f64,
}

impl PhaseMatchConfig {
    /// `a_i = -N_p + N_s + K_p θ_i`.
    pub fn idler_walkoff(&self) -> f64 {
        -self.n_p + self.n_s + self.k_p * self.theta_i
    }

    /// `a_s = N_p - N_s + K_p θ_s`.
    pub fn signal_walkoff(&self) -> f64 {
        self.n_p - self.n_s + self.k_p * self.theta_s
    }

    /// Exchanges the roles of the two arms; maps `a_i ↔ a_s`.
    pub fn swapped_arms(&self) -> Self {
        Self {
            k_s: self.k_i,
            k_i: self.k_s,
            n_p: self.n_s,
            n_s: self.n_p,
            d: -self.d,
            theta_i: self.theta_s,
            theta_s: self.theta_i,
            ..*self
        }
    }
}

fn unit() -> f64 {
    1.0
}

/// Waists at the crystal plane plus the optional bucket-collection optics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamGeometry {
    pub w_p: f64,
    /// Preparation (idler, arm 3) mode waist.
    pub w_o1: f64,
    /// Collection (signal, arm 4) mode waist.
    pub w_o2: f64,
    #[serde(rename = "M_3", default = "unit")]
    pub m_3: f64,
    #[serde(rename = "M_4", default = "unit")]
    pub m_4: f64,
    /// Gaussian aperture width `w` of the bucket detector.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_ap: Option<f64>,
    /// Free-space kernel parameter `k = π/(λ_s d)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_fresnel: Option<f64>,
}

impl BeamGeometry {
    pub fn new(w_p: f64, w_o1: f64, w_o2: f64) -> Self {
        Self {
            w_p,
            w_o1,
            w_o2,
            m_3: 1.0,
            m_4: 1.0,
            w_ap: None,
            k_fresnel: None,
        }
    }

    pub fn with_aperture(mut self, w_ap: f64, k_fresnel: f64) -> Self {
        self.w_ap = Some(w_ap);
        self.k_fresnel = Some(k_fresnel);
        self
    }

    pub fn swapped_arms(&self) -> Self {
        Self {
            w_o1: self.w_o2,
            w_o2: self.w_o1,
            m_3: self.m_4,
            m_4: self.m_3,
            ..*self
        }
    }
}

/// One violated invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonFinite(&'static str),
    NonPositiveWaist { name: &'static str, value: f64 },
    NonPositiveWalkoff { name: &'static str, value: f64 },
    NonPositiveLength(f64),
    NonPositiveWavenumber { name: &'static str, value: f64 },
    NegativeAngleSum(f64),
    ZeroMagnification(&'static str),
    MissingApertureParams,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonFinite(name) => write!(f, "NonFinite: {name} is not a finite number"),
            Violation::NonPositiveWaist { name, value } => {
                write!(f, "NonPositiveWaist: {name} = {value} must be > 0")
            }
            Violation::NonPositiveWalkoff { name, value } => {
                write!(f, "NonPositiveWalkoff: {name} = {value} must be > 0")
            }
            Violation::NonPositiveLength(l) => write!(f, "NonPositiveLength: L = {l} must be > 0"),
            Violation::NonPositiveWavenumber { name, value } => {
                write!(f, "NonPositiveWavenumber: {name} = {value} must be > 0")
            }
            Violation::NegativeAngleSum(s) => {
                write!(f, "NegativeAngleSum: theta_i + theta_s = {s} must be >= 0")
            }
            Violation::ZeroMagnification(name) => write!(f, "ZeroMagnification: {name} is zero"),
            Violation::MissingApertureParams => write!(
                f,
                "MissingApertureParams: eps_P needs geometry.w_ap and geometry.k_fresnel"
            ),
        }
    }
}

/// Every invariant violated by a parameter set.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct ValidationError(pub Vec<Violation>);

impl ValidationError {
    pub fn contains(&self, pred: impl Fn(&Violation) -> bool) -> bool {
        self.0.iter().any(pred)
    }
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join("; "))
    }
}

/// Parameters that passed [`validate`]. Immutable; rebuild through
/// [`Validated::with_variable`] to change a value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Validated {
    phase_match: PhaseMatchConfig,
    geometry: BeamGeometry,
}

impl Validated {
    pub fn config(&self) -> &PhaseMatchConfig {
        &self.phase_match
    }

    pub fn geom(&self) -> &BeamGeometry {
        &self.geometry
    }

    pub fn into_parts(self) -> (PhaseMatchConfig, BeamGeometry) {
        (self.phase_match, self.geometry)
    }

    /// Aperture width and kernel parameter, required by every ε_P evaluation.
    pub fn aperture(&self) -> Result<(f64, f64), ValidationError> {
        match (self.geometry.w_ap, self.geometry.k_fresnel) {
            (Some(w), Some(k)) => Ok((w, k)),
            _ => Err(ValidationError(vec![Violation::MissingApertureParams])),
        }
    }

    pub fn with_variable(&self, var: Variable, value: f64) -> Result<Validated, ValidationError> {
        let (mut c, mut g) = (self.phase_match, self.geometry);
        var.set(&mut c, &mut g, value);
        validate(&c, &g)
    }

    pub fn swapped_arms(&self) -> Validated {
        Validated {
            phase_match: self.phase_match.swapped_arms(),
            geometry: self.geometry.swapped_arms(),
        }
    }
}

/// Checks every invariant and reports all violations at once; never clamps.
pub fn validate(config: &PhaseMatchConfig, geom: &BeamGeometry) -> Result<Validated, ValidationError> {
    let mut v = Vec::new();
    let finite = [
        ("K_p", config.k_p),
        ("K_s", config.k_s),
        ("K_i", config.k_i),
        ("N_p", config.n_p),
        ("N_s", config.n_s),
        ("D", config.d),
        ("theta_i", config.theta_i),
        ("theta_s", config.theta_s),
        ("L", config.length),
        ("w_p", geom.w_p),
        ("w_o1", geom.w_o1),
        ("w_o2", geom.w_o2),
        ("M_3", geom.m_3),
        ("M_4", geom.m_4),
        ("w_ap", geom.w_ap.unwrap_or(1.0)),
        ("k_fresnel", geom.k_fresnel.unwrap_or(1.0)),
    ];
    for (name, x) in finite {
        if !x.is_finite() {
            v.push(Violation::NonFinite(name));
        }
    }
    if !v.is_empty() {
        return Err(ValidationError(v));
    }

    if config.length <= 0.0 {
        v.push(Violation::NonPositiveLength(config.length));
    }
    for (name, value) in [("K_p", config.k_p), ("K_s", config.k_s), ("K_i", config.k_i)] {
        if value <= 0.0 {
            v.push(Violation::NonPositiveWavenumber { name, value });
        }
    }
    for (name, value) in [("a_i", config.idler_walkoff()), ("a_s", config.signal_walkoff())] {
        if value <= 0.0 {
            v.push(Violation::NonPositiveWalkoff { name, value });
        }
    }
    let angle_sum = config.theta_i + config.theta_s;
    if angle_sum < 0.0 {
        v.push(Violation::NegativeAngleSum(angle_sum));
    }
    for (name, value) in [("w_p", geom.w_p), ("w_o1", geom.w_o1), ("w_o2", geom.w_o2)] {
        if value <= 0.0 {
            v.push(Violation::NonPositiveWaist { name, value });
        }
    }
    if let Some(value) = geom.w_ap {
        if value <= 0.0 {
            v.push(Violation::NonPositiveWaist { name: "w_ap", value });
        }
    }
    if let Some(value) = geom.k_fresnel {
        if value <= 0.0 {
            v.push(Violation::NonPositiveWavenumber { name: "k_fresnel", value });
        }
    }
    for (name, value) in [("M_3", geom.m_3), ("M_4", geom.m_4)] {
        if value == 0.0 {
            v.push(Violation::ZeroMagnification(name));
        }
    }

    if v.is_empty() {
        Ok(Validated {
            phase_match: *config,
            geometry: *geom,
        })
    } else {
        Err(ValidationError(v))
    }
}

/// On-disk configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub phase_match: PhaseMatchConfig,
    pub geometry: BeamGeometry,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
}

impl ConfigFile {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<Validated, ValidationError> {
        validate(&self.phase_match, &self.geometry)
    }
}

/// A parameter that sweeps and optimisers can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variable {
    #[serde(rename = "w_p")]
    PumpWaist,
    #[serde(rename = "w_o1")]
    PreparationWaist,
    #[serde(rename = "w_o2")]
    CollectionWaist,
    /// `w_o1 = w_o2`.
    #[serde(rename = "w_o")]
    TiedModeWaists,
    /// `w_p = w_o1 = w_o2`.
    #[serde(rename = "w_all")]
    AllWaists,
    #[serde(rename = "w_ap")]
    Aperture,
    #[serde(rename = "L")]
    Length,
}

impl Variable {
    pub const ALL: [Variable; 7] = [
        Variable::PumpWaist,
        Variable::PreparationWaist,
        Variable::CollectionWaist,
        Variable::TiedModeWaists,
        Variable::AllWaists,
        Variable::Aperture,
        Variable::Length,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Variable::PumpWaist => "w_p",
            Variable::PreparationWaist => "w_o1",
            Variable::CollectionWaist => "w_o2",
            Variable::TiedModeWaists => "w_o",
            Variable::AllWaists => "w_all",
            Variable::Aperture => "w_ap",
            Variable::Length => "L",
        }
    }

    pub fn set(&self, c: &mut PhaseMatchConfig, g: &mut BeamGeometry, value: f64) {
        match self {
            Variable::PumpWaist => g.w_p = value,
            Variable::PreparationWaist => g.w_o1 = value,
            Variable::CollectionWaist => g.w_o2 = value,
            Variable::TiedModeWaists => {
                g.w_o1 = value;
                g.w_o2 = value;
            }
            Variable::AllWaists => {
                g.w_p = value;
                g.w_o1 = value;
                g.w_o2 = value;
            }
            Variable::Aperture => g.w_ap = Some(value),
            Variable::Length => c.length = value,
        }
    }

    pub fn get(&self, c: &PhaseMatchConfig, g: &BeamGeometry) -> Option<f64> {
        match self {
            Variable::PumpWaist | Variable::AllWaists => Some(g.w_p),
            Variable::PreparationWaist | Variable::TiedModeWaists => Some(g.w_o1),
            Variable::CollectionWaist => Some(g.w_o2),
            Variable::Aperture => g.w_ap,
            Variable::Length => Some(c.length),
        }
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown {what} `{given}` (expected one of: {expected})")]
pub struct ParseNameError {
    pub what: &'static str,
    pub given: String,
    pub expected: String,
}

impl FromStr for Variable {
    type Err = ParseNameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variable::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| ParseNameError {
                what: "variable",
                given: s.to_string(),
                expected: Variable::ALL.map(|v| v.name()).join(", "),
            })
    }
}

/// Which efficiency (or rate) a result holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EfficiencyKind {
    #[serde(rename = "chi_M")]
    ChiM,
    #[serde(rename = "chi_P3")]
    ChiP3,
    #[serde(rename = "chi_P4")]
    ChiP4,
    #[serde(rename = "eta_M")]
    EtaM,
    #[serde(rename = "eta_P3")]
    EtaP3,
    #[serde(rename = "eta_P4")]
    EtaP4,
    #[serde(rename = "eps_P")]
    EpsP,
    #[serde(rename = "singles_C3")]
    SinglesC3,
}

impl EfficiencyKind {
    pub const ALL: [EfficiencyKind; 8] = [
        EfficiencyKind::ChiM,
        EfficiencyKind::ChiP3,
        EfficiencyKind::ChiP4,
        EfficiencyKind::EtaM,
        EfficiencyKind::EtaP3,
        EfficiencyKind::EtaP4,
        EfficiencyKind::EpsP,
        EfficiencyKind::SinglesC3,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            EfficiencyKind::ChiM => "chi_M",
            EfficiencyKind::ChiP3 => "chi_P3",
            EfficiencyKind::ChiP4 => "chi_P4",
            EfficiencyKind::EtaM => "eta_M",
            EfficiencyKind::EtaP3 => "eta_P3",
            EfficiencyKind::EtaP4 => "eta_P4",
            EfficiencyKind::EpsP => "eps_P",
            EfficiencyKind::SinglesC3 => "singles_C3",
        }
    }

    /// Rates are not bounded by one.
    pub fn is_efficiency(&self) -> bool {
        *self != EfficiencyKind::SinglesC3
    }
}

impl fmt::Display for EfficiencyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EfficiencyKind {
    type Err = ParseNameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        // `chi_P` and `eta_P` default to arm 3.
        let s = match s {
            "chi_P" => "chi_P3",
            "eta_P" => "eta_P3",
            other => other,
        };
        EfficiencyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ParseNameError {
                what: "efficiency kind",
                given: s.to_string(),
                expected: EfficiencyKind::ALL.map(|k| k.name()).join(", "),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    FullCrystal,
    ThinCrystal,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::FullCrystal => "full",
            Regime::ThinCrystal => "thin",
        }
    }
}

impl FromStr for Regime {
    type Err = ParseNameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" | "full_crystal" => Ok(Regime::FullCrystal),
            "thin" | "thin_crystal" => Ok(Regime::ThinCrystal),
            _ => Err(ParseNameError {
                what: "regime",
                given: s.to_string(),
                expected: "full, thin".into(),
            }),
        }
    }
}

/// Heralding arm (3, idler) or collection arm (4, signal).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arm {
    Three,
    Four,
}

/// Audit trail attached to a result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Note {
    /// Small-argument series used for the Erf ratio.
    SeriesBranch,
    /// Value normalised to supremum 1; the literal printed expression
    /// (with its extra factor 4) evaluates to `printed_value`.
    PrefactorNormalized { printed_value: f64 },
    /// Literal printed thin-crystal expression; carries units of µm², not
    /// a bounded efficiency.
    AsPrintedThinForm,
    /// Spurious `L` removed from the Erf argument denominator.
    SinglesLengthCorrected,
    /// Produced by numerical quadrature rather than a closed form.
    Quadrature { n_longitudinal: usize, n_transverse: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EfficiencyResult {
    pub kind: EfficiencyKind,
    pub value: f64,
    pub regime: Regime,
    pub inputs: Validated,
    pub notes: Vec<Note>,
}

impl EfficiencyResult {
    pub(crate) fn new(kind: EfficiencyKind, value: f64, regime: Regime, inputs: &Validated) -> Self {
        Self {
            kind,
            value,
            regime,
            inputs: *inputs,
            notes: Vec::new(),
        }
    }

    pub(crate) fn with_note(mut self, note: Note) -> Self {
        self.notes.push(note);
        self
    }
}
