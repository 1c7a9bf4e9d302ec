//! Coupling efficiencies of parametric-downconversion photon pairs into
//! single-mode fibres and multi-mode (bucket) detectors.
//!
//! [`closed_form`] evaluates the analytic expressions, [`oracle`]
//! integrates the defining overlap integrals numerically, [`optimizer`]
//! and [`scan`] produce figure-style curves, and [`fitting`] fits the
//! thin-crystal models to measured data.
//!
//! Units: micrometres, radians, rad/µm; `k_fresnel` in µm⁻².

// Negated comparisons in this crate are deliberate: they send NaN down the rejection path.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod closed_form;
pub mod dispersion;
pub mod fitting;
pub mod model;
pub mod optimizer;
pub mod oracle;
pub mod quadrature;
pub mod scan;
pub mod special;

pub use closed_form::{auxiliary_terms, evaluate, AuxiliaryTerms, ThinForm};
pub use dispersion::{walkoff_from_dispersion, DispersionError, DispersionSamples, DispersionTerms, IndexTable};
pub use fitting::{
    compare_pump_waists, fit, load_dataset, AbscissaKind, DataSet, FitError, FitModel, FitOutcome, FitParam,
    ModelPoint, PumpWaistComparison,
};
pub use model::{
    validate, Arm, BeamGeometry, ConfigError, ConfigFile, EfficiencyKind, EfficiencyResult, Note, ParseNameError,
    PhaseMatchConfig, Regime, Validated, ValidationError, Variable, Violation,
};
pub use optimizer::{optimize_waist, optimum_curve, CurvePoint, OptimizeError, OptimumRecord, DEFAULT_BRACKET};
pub use oracle::{oracle_efficiency, OracleError, QuadratureSpec};
pub use scan::{scan, Grid, ScanError, ScanSeries};
pub use special::erf;
