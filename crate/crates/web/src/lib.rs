//! WebAssembly bindings for the browser demo. Each export takes the JSON
//! configuration document as a string and returns a JSON string, so the page
//! needs no generated TypeScript types.

use pdc_coupling::{
    optimum_curve as curve_of_optima, oracle_efficiency, scan, ConfigFile, EfficiencyKind, Grid, QuadratureSpec,
    Regime, Validated, Variable, DEFAULT_BRACKET,
};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn parse<T: std::str::FromStr>(s: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| e.to_string())
}

fn load(config_json: &str) -> Result<Validated, String> {
    let file = ConfigFile::from_json(config_json).map_err(|e| e.to_string())?;
    file.validate().map_err(|e| e.to_string())
}

fn grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>, String> {
    Ok(Grid::new(lo, hi, count).map_err(|e| e.to_string())?.values())
}

/// Closed-form efficiency along one variable, one curve per family value.
#[allow(clippy::too_many_arguments)]
pub fn scan_family(
    config_json: &str,
    kind: &str,
    regime: &str,
    variable: &str,
    lo: f64,
    hi: f64,
    count: usize,
    family_variable: &str,
    family: &[f64],
) -> Result<String, String> {
    let v = load(config_json)?;
    let kind: EfficiencyKind = parse(kind)?;
    let regime: Regime = parse(regime)?;
    let variable: Variable = parse(variable)?;
    let xs = grid(lo, hi, count)?;
    let members: Vec<(Option<f64>, Validated)> = if family.is_empty() {
        vec![(None, v)]
    } else {
        let fv: Variable = parse(family_variable)?;
        family
            .iter()
            .map(|&f| Ok((Some(f), v.with_variable(fv, f).map_err(|e| e.to_string())?)))
            .collect::<Result<_, String>>()?
    };
    let mut curves = Vec::new();
    for (label, w) in members {
        let s = scan(kind, regime, variable, &xs, &w, None).map_err(|e| e.to_string())?;
        curves.push(json!({ "family": label, "y": s.ordinate }));
    }
    Ok(json!({ "x": xs, "variable": variable.name(), "kind": kind.name(), "curves": curves }).to_string())
}

/// Optimal waist of `free` as `sweep` varies; failures become `null`.
#[allow(clippy::too_many_arguments)]
pub fn optimum_sweep(
    config_json: &str,
    target: &str,
    regime: &str,
    free: &str,
    sweep: &str,
    lo: f64,
    hi: f64,
    count: usize,
) -> Result<String, String> {
    let v = load(config_json)?;
    let target: EfficiencyKind = parse(target)?;
    let regime: Regime = parse(regime)?;
    let free: Variable = parse(free)?;
    let sweep: Variable = parse(sweep)?;
    let xs = grid(lo, hi, count)?;
    let points = curve_of_optima(target, regime, free, DEFAULT_BRACKET, sweep, &xs, &v);
    let (mut optimum, mut value, mut edge) = (Vec::new(), Vec::new(), Vec::new());
    for p in points {
        match p.outcome {
            Ok(r) => {
                optimum.push(Value::from(r.optimum_value));
                value.push(Value::from(r.efficiency_at_optimum));
                edge.push(Value::from(r.no_interior_optimum));
            }
            Err(_) => {
                optimum.push(Value::Null);
                value.push(Value::Null);
                edge.push(Value::Null);
            }
        }
    }
    Ok(json!({
        "x": xs, "sweep": sweep.name(), "free": free.name(), "target": target.name(),
        "optimum": optimum, "value": value, "no_interior_optimum": edge,
    })
    .to_string())
}

/// Full-crystal closed form against the quadrature oracle along one variable.
pub fn oracle_sweep(
    config_json: &str,
    kind: &str,
    variable: &str,
    lo: f64,
    hi: f64,
    count: usize,
) -> Result<String, String> {
    let v = load(config_json)?;
    let kind: EfficiencyKind = parse(kind)?;
    let variable: Variable = parse(variable)?;
    let xs = grid(lo, hi, count)?;
    let spec = QuadratureSpec::default();
    let s = scan(kind, Regime::FullCrystal, variable, &xs, &v, Some(&spec)).map_err(|e| e.to_string())?;
    let oracle = s.oracle.unwrap_or_default();
    let worst = s
        .ordinate
        .iter()
        .zip(&oracle)
        .map(|(c, q)| if c == q { 0.0 } else { ((q - c) / c).abs() })
        .fold(0.0, f64::max);
    Ok(json!({
        "x": xs, "variable": variable.name(), "kind": kind.name(),
        "closed_form": s.ordinate, "oracle": oracle, "max_relative_deviation": worst,
    })
    .to_string())
}

/// Single-point oracle value, for spot checks from the console.
pub fn oracle_point(config_json: &str, kind: &str) -> Result<f64, String> {
    let v = load(config_json)?;
    let kind: EfficiencyKind = parse(kind)?;
    Ok(oracle_efficiency(kind, &v, &QuadratureSpec::default()).map_err(|e| e.to_string())?.value)
}

#[wasm_bindgen(js_name = scanFamily)]
#[allow(clippy::too_many_arguments)]
pub fn scan_family_js(
    config_json: &str,
    kind: &str,
    regime: &str,
    variable: &str,
    lo: f64,
    hi: f64,
    count: usize,
    family_variable: &str,
    family: Vec<f64>,
) -> Result<String, JsError> {
    scan_family(config_json, kind, regime, variable, lo, hi, count, family_variable, &family).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = optimumSweep)]
#[allow(clippy::too_many_arguments)]
pub fn optimum_sweep_js(
    config_json: &str,
    target: &str,
    regime: &str,
    free: &str,
    sweep: &str,
    lo: f64,
    hi: f64,
    count: usize,
) -> Result<String, JsError> {
    optimum_sweep(config_json, target, regime, free, sweep, lo, hi, count).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = oracleSweep)]
pub fn oracle_sweep_js(config_json: &str, kind: &str, variable: &str, lo: f64, hi: f64, count: usize) -> Result<String, JsError> {
    oracle_sweep(config_json, kind, variable, lo, hi, count).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = oraclePoint)]
pub fn oracle_point_js(config_json: &str, kind: &str) -> Result<f64, JsError> {
    oracle_point(config_json, kind).map_err(|e| JsError::new(&e))
}
