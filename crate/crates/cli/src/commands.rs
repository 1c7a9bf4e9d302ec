use std::path::Path;

use anyhow::{anyhow, Context};
use pdc_coupling::closed_form::{self, ThinForm};
use pdc_coupling::{
    compare_pump_waists, evaluate, fit, load_dataset, optimize_waist, optimum_curve, oracle_efficiency, scan,
    Arm, ConfigFile, EfficiencyKind, EfficiencyResult, FitOutcome, FitParam, Grid, ModelPoint, QuadratureSpec,
    Regime, Validated, Variable,
};

use crate::output::{fmt_g, sha256_hex, Csv};
use crate::{Cli, EvalArgs, FitArgs, OptimizeArgs, OracleCheckArgs, ScanArgs, Verb};

/// An error with the process exit code it maps to.
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

type Outcome<T> = Result<T, Failure>;

trait Classify<T> {
    /// Bad invocation, unreadable or malformed input: exit 1.
    fn usage(self) -> Outcome<T>;
    /// Parameters or data rejected by the model, or a failed computation: exit 2.
    fn invalid(self) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage(self) -> Outcome<T> {
        self.map_err(|e| Failure { code: 1, error: e.into() })
    }

    fn invalid(self) -> Outcome<T> {
        self.map_err(|e| Failure { code: 2, error: e.into() })
    }
}

struct Loaded {
    params: Validated,
    hash: String,
}

fn load_config(path: Option<&Path>) -> Outcome<Loaded> {
    let path = path.ok_or_else(|| anyhow!("--config is required")).usage()?;
    let bytes = std::fs::read(path)
        .with_context(|| format!("cannot read config {}", path.display()))
        .usage()?;
    let text = std::str::from_utf8(&bytes)
        .with_context(|| format!("config {} is not UTF-8", path.display()))
        .usage()?;
    let file = ConfigFile::from_json(text)
        .with_context(|| format!("config {}", path.display()))
        .usage()?;
    let params = file.validate().invalid()?;
    Ok(Loaded {
        params,
        hash: sha256_hex(&bytes),
    })
}

pub fn run(cli: &Cli, command: &str) -> Outcome<()> {
    let loaded = load_config(cli.config.as_deref())?;
    let mut csv = Csv::new(Some(&loaded.hash), command);
    let mut worst_deviation = None;
    match &cli.verb {
        Verb::Eval(a) => eval(a, &loaded.params, &mut csv)?,
        Verb::Scan(a) => scan_cmd(a, &loaded.params, &mut csv)?,
        Verb::Optimize(a) => optimize(a, &loaded.params, &mut csv)?,
        Verb::Fit(a) => fit_cmd(a, &loaded.params, &mut csv)?,
        Verb::OracleCheck(a) => worst_deviation = Some((oracle_check(a, &loaded.params, &mut csv)?, a.threshold)),
    }
    emit(cli.output.as_deref(), &csv)?;
    // The table is written even when the check fails, so the offending rows can be inspected.
    match worst_deviation {
        Some((worst, threshold)) if worst.is_nan() || worst > threshold => Err(anyhow!(
            "OracleMismatch: max relative deviation {} exceeds {}",
            fmt_g(worst),
            fmt_g(threshold)
        ))
        .invalid(),
        _ => Ok(()),
    }
}

fn emit(path: Option<&Path>, csv: &Csv) -> Outcome<()> {
    match path {
        Some(p) => {
            std::fs::write(p, csv.render())
                .with_context(|| format!("cannot write {}", p.display()))
                .usage()?;
            for line in csv.summary_lines() {
                println!("# {line}");
            }
        }
        None => print!("{}", csv.render()),
    }
    Ok(())
}

fn evaluate_with_form(kind: EfficiencyKind, regime: Regime, v: &Validated, as_printed: bool) -> Outcome<EfficiencyResult> {
    if as_printed {
        let form = ThinForm::AsPrinted;
        return match (kind, regime) {
            (EfficiencyKind::EtaM, Regime::ThinCrystal) => Ok(closed_form::eta_m_thin(v, form)),
            (EfficiencyKind::EtaP3, Regime::ThinCrystal) => Ok(closed_form::eta_p_thin(v, Arm::Three, form)),
            (EfficiencyKind::EtaP4, Regime::ThinCrystal) => Ok(closed_form::eta_p_thin(v, Arm::Four, form)),
            _ => Err(anyhow!("--as-printed applies only to eta_M, eta_P3, eta_P4 in the thin regime")).usage(),
        };
    }
    evaluate(kind, regime, v).invalid()
}

fn eval(a: &EvalArgs, v: &Validated, csv: &mut Csv) -> Outcome<()> {
    let result = evaluate_with_form(a.kind, a.regime, v, a.as_printed)?;
    let mut header = vec!["kind".to_string(), "regime".into(), "value".into()];
    let mut row = vec![a.kind.name().to_string(), a.regime.name().into(), fmt_g(result.value)];
    if a.oracle {
        let q = oracle_efficiency(a.kind, v, &a.quadrature.spec()).invalid()?;
        header.push("oracle".into());
        row.push(fmt_g(q.value));
        csv.summary(format!("oracle relative deviation: {}", fmt_g(relative(result.value, q.value))));
    }
    for note in &result.notes {
        csv.meta(format!("note: {note:?}"));
    }
    csv.header(&header);
    csv.row(&row);
    csv.summary(format!("{} ({}) = {}", a.kind, a.regime.name(), fmt_g(result.value)));
    Ok(())
}

fn parse_assignment(s: &str, what: &str) -> Outcome<(Variable, String)> {
    let (name, rest) = s
        .split_once('=')
        .ok_or_else(|| anyhow!("{what} must look like VAR=..., got `{s}`"))
        .usage()?;
    Ok((name.trim().parse::<Variable>().usage()?, rest.trim().to_string()))
}

fn parse_list(s: &str) -> Outcome<Vec<f64>> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().with_context(|| format!("`{x}` is not a number")))
        .collect::<Result<Vec<_>, _>>()
        .usage()
}

fn scan_cmd(a: &ScanArgs, v: &Validated, csv: &mut Csv) -> Outcome<()> {
    let xs = a.grid.values();
    let members: Vec<(String, Validated)> = match &a.family {
        None => vec![(a.kind.name().to_string(), *v)],
        Some(spec) => {
            let (var, list) = parse_assignment(spec, "--family")?;
            parse_list(&list)?
                .into_iter()
                .map(|x| {
                    let w = v.with_variable(var, x).invalid()?;
                    Ok((format!("{}@{}={}", a.kind, var, fmt_g(x)), w))
                })
                .collect::<Outcome<_>>()?
        }
    };
    let spec = a.oracle.then(|| a.quadrature.spec());
    let mut series = Vec::new();
    for (label, w) in &members {
        let s = scan(a.kind, a.regime, a.variable, &xs, w, spec.as_ref()).invalid()?;
        series.push((label.clone(), s));
    }
    let mut header = vec![a.variable.name().to_string()];
    for (label, s) in &series {
        header.push(label.clone());
        if s.oracle.is_some() {
            header.push(format!("{label}_oracle"));
        }
    }
    csv.meta(format!("regime: {}", a.regime.name()));
    csv.header(&header);
    for (i, x) in xs.iter().enumerate() {
        let mut row = vec![fmt_g(*x)];
        for (_, s) in &series {
            row.push(fmt_g(s.ordinate[i]));
            if let Some(o) = &s.oracle {
                row.push(fmt_g(o[i]));
            }
        }
        csv.row(&row);
    }
    for (label, s) in &series {
        let (imax, ymax) = s
            .ordinate
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, y)| if y > best.1 { (i, y) } else { best });
        let interior = imax > 0 && imax + 1 < xs.len();
        csv.summary(format!(
            "{label}: max {} at {} = {}{}",
            fmt_g(ymax),
            a.variable,
            fmt_g(xs[imax]),
            if interior { "" } else { " (grid edge)" }
        ));
        if let Some(o) = &s.oracle {
            let dev = s.ordinate.iter().zip(o).map(|(c, q)| relative(*c, *q)).fold(0.0, f64::max);
            csv.summary(format!("{label}: max oracle relative deviation {}", fmt_g(dev)));
        }
    }
    Ok(())
}

fn parse_bracket(s: &str) -> Outcome<(f64, f64)> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| anyhow!("--bracket must look like lo:hi, got `{s}`"))
        .usage()?;
    let num = |x: &str| x.trim().parse::<f64>().with_context(|| format!("`{x}` is not a number")).usage();
    Ok((num(lo)?, num(hi)?))
}

fn optimize(a: &OptimizeArgs, v: &Validated, csv: &mut Csv) -> Outcome<()> {
    let bracket = parse_bracket(&a.bracket)?;
    let optimum_col = format!("{}_optimum", a.free);
    let target_col = a.target.name().to_string();
    csv.meta(format!("regime: {}", a.regime.name()));
    csv.meta(format!("bracket: {}:{}", fmt_g(bracket.0), fmt_g(bracket.1)));
    match &a.sweep {
        None => {
            let r = optimize_waist(a.target, a.regime, a.free, bracket, v).invalid()?;
            csv.header(&[optimum_col, target_col, "no_interior_optimum".into()]);
            csv.row(&[
                fmt_g(r.optimum_value),
                fmt_g(r.efficiency_at_optimum),
                r.no_interior_optimum.to_string(),
            ]);
            csv.summary(format!(
                "optimum {} = {} with {} = {}{}",
                a.free,
                fmt_g(r.optimum_value),
                a.target,
                fmt_g(r.efficiency_at_optimum),
                if r.no_interior_optimum { " (no interior optimum)" } else { "" }
            ));
        }
        Some(spec) => {
            let (sweep, grid) = parse_assignment(spec, "--sweep")?;
            let grid: Grid = grid.parse().usage()?;
            let points = optimum_curve(a.target, a.regime, a.free, bracket, sweep, &grid.values(), v);
            csv.header(&[sweep.name().to_string(), optimum_col, target_col, "no_interior_optimum".into()]);
            let mut edge = 0;
            for p in &points {
                let r = p.outcome.as_ref().map_err(Clone::clone).invalid()?;
                edge += usize::from(r.no_interior_optimum);
                csv.row(&[
                    fmt_g(p.sweep_value),
                    fmt_g(r.optimum_value),
                    fmt_g(r.efficiency_at_optimum),
                    r.no_interior_optimum.to_string(),
                ]);
            }
            csv.summary(format!(
                "{} optima of {} over {}; {} at the bracket edge",
                points.len(),
                a.target,
                sweep,
                edge
            ));
        }
    }
    Ok(())
}

fn parse_initial(s: &str) -> Outcome<(FitParam, f64)> {
    let (name, value) = s
        .split_once('=')
        .ok_or_else(|| anyhow!("--set must look like PARAM=VALUE, got `{s}`"))
        .usage()?;
    let p: FitParam = name.trim().parse().usage()?;
    let x: f64 = value.trim().parse().with_context(|| format!("`{value}` is not a number")).usage()?;
    Ok((p, x))
}

fn fit_cmd(a: &FitArgs, v: &Validated, csv: &mut Csv) -> Outcome<()> {
    if !a.pump_waists.is_empty() && a.pump_waists.len() != a.data.len() {
        return Err(anyhow!(
            "{} --pump-waist values for {} --data files",
            a.pump_waists.len(),
            a.data.len()
        ))
        .usage();
    }
    let mut start = ModelPoint::new(*v);
    for s in &a.initial {
        let (p, x) = parse_initial(s)?;
        start = start.set(p, x).invalid()?;
    }
    let mut outcomes: Vec<(f64, FitOutcome)> = Vec::new();
    let multi = a.data.len() > 1;
    let mut header = vec!["abscissa_um".to_string(), "value".into(), "fitted".into(), "residual".into()];
    if multi {
        header.push("w_p".into());
    }
    csv.meta(format!("model: {}", a.model));
    let mut rows = Vec::new();
    for (i, path) in a.data.iter().enumerate() {
        let data = load_dataset(path, a.model.abscissa()).usage()?;
        let point = match a.pump_waists.get(i) {
            Some(&w) => start.set(FitParam::PumpWaist, w).invalid()?,
            None => start,
        };
        let out = fit(a.model, &data, &a.free, &point).invalid()?;
        if !out.converged {
            eprintln!("warning: fit of {} did not converge; reporting the best iterate", path.display());
        }
        if i == 0 && out.aperture_from_diameter {
            csv.meta("aperture width w_ap = iris diameter / 2");
        }
        let w_p = out.value(FitParam::PumpWaist);
        for r in &data.rows {
            let y = out.predict(r.abscissa).invalid()?;
            let mut row = vec![fmt_g(r.abscissa), fmt_g(r.value), fmt_g(y), fmt_g(r.value - y)];
            if multi {
                row.push(fmt_g(w_p));
            }
            rows.push(row);
        }
        let label = if multi { format!("[w_p={}] ", fmt_g(w_p)) } else { String::new() };
        csv.summary(format!(
            "{label}converged: {}; iterations: {}; residual_rms: {}; chi_square: {}",
            out.converged,
            out.iterations,
            fmt_g(out.residual_rms),
            fmt_g(out.chi_square)
        ));
        for p in &out.params {
            csv.summary(format!("{label}{} = {} +/- {}", p.param, fmt_g(p.value), fmt_g(p.uncertainty)));
        }
        csv.summary(format!("{label}saturation: {}", fmt_g(out.saturation())));
        outcomes.push((w_p, out));
    }
    csv.header(&header);
    for row in &rows {
        csv.row(row);
    }
    if multi {
        let cmp = compare_pump_waists(&outcomes).invalid()?;
        csv.summary(format!("larger pump waist gives higher saturation: {}", cmp.larger_pump_is_better));
        for (a, b) in &cmp.ties {
            csv.summary(format!("tie between w_p = {} and w_p = {}", fmt_g(*a), fmt_g(*b)));
        }
    }
    Ok(())
}

fn relative(reference: f64, other: f64) -> f64 {
    if reference == other {
        0.0
    } else {
        ((other - reference) / reference).abs()
    }
}

fn oracle_check(a: &OracleCheckArgs, v: &Validated, csv: &mut Csv) -> Outcome<f64> {
    let spec: QuadratureSpec = a.quadrature.spec();
    let points: Vec<(String, Validated)> = match (a.variable, &a.grid) {
        (Some(var), Some(grid)) => grid
            .values()
            .into_iter()
            .map(|x| Ok((fmt_g(x), v.with_variable(var, x).invalid()?)))
            .collect::<Outcome<_>>()?,
        _ => vec![(a.kind.name().to_string(), *v)],
    };
    let first = a.variable.map_or("kind".to_string(), |var| var.name().to_string());
    csv.header(&[first, "closed_form".into(), "oracle".into(), "relative_deviation".into()]);
    let mut worst: f64 = 0.0;
    for (label, w) in &points {
        let c = evaluate(a.kind, Regime::FullCrystal, w).invalid()?.value;
        let q = oracle_efficiency(a.kind, w, &spec).invalid()?.value;
        let d = relative(c, q);
        worst = worst.max(d);
        csv.row(&[label.clone(), fmt_g(c), fmt_g(q), fmt_g(d)]);
    }
    csv.summary(format!("max_relative_deviation: {}", fmt_g(worst)));
    csv.summary(format!("threshold: {}", fmt_g(a.threshold)));
    Ok(worst)
}
