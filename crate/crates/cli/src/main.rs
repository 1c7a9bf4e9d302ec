mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pdc_coupling::{EfficiencyKind, FitModel, FitParam, Grid, QuadratureSpec, Regime, Variable};

/// Coupling efficiencies of down-converted photon pairs into single-mode and
/// bucket detectors.
#[derive(Debug, Parser)]
#[command(name = "pdc-coupling", version, about)]
pub struct Cli {
    /// JSON configuration with `phase_match` and `geometry` sections.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Write the CSV here instead of standard output.
    #[arg(long, short, global = true, value_name = "PATH")]
    pub output: Option<PathBuf>,
    #[command(subcommand)]
    pub verb: Verb,
}

#[derive(Debug, Subcommand)]
pub enum Verb {
    /// Evaluate one efficiency at the configured point.
    Eval(EvalArgs),
    /// Sweep one variable over a grid.
    Scan(ScanArgs),
    /// Find the waist that maximises an efficiency.
    Optimize(OptimizeArgs),
    /// Fit a thin-crystal model to measured data.
    Fit(FitArgs),
    /// Compare closed forms against the quadrature oracle.
    OracleCheck(OracleCheckArgs),
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// chi_M, chi_P3, chi_P4, eta_M, eta_P3, eta_P4, eps_P or singles_C3.
    #[arg(long)]
    pub kind: EfficiencyKind,
    /// full or thin.
    #[arg(long, default_value = "full")]
    pub regime: Regime,
    /// Use the literal printed thin-crystal η expressions (units of µm²).
    #[arg(long)]
    pub as_printed: bool,
    /// Append the quadrature value.
    #[arg(long)]
    pub oracle: bool,
    #[command(flatten)]
    pub quadrature: QuadratureArgs,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    /// chi_M, chi_P3, chi_P4, eta_M, eta_P3, eta_P4, eps_P or singles_C3.
    #[arg(long)]
    pub kind: EfficiencyKind,
    /// w_p, w_o1, w_o2, w_o (both mode waists), w_all, w_ap or L.
    #[arg(long = "var")]
    pub variable: Variable,
    /// `lo:hi:count`, endpoints included.
    #[arg(long)]
    pub grid: Grid,
    /// full or thin.
    #[arg(long, default_value = "full")]
    pub regime: Regime,
    /// One curve per value, e.g. `w_p=150,200,400,600`.
    #[arg(long, value_name = "VAR=V1,V2,...")]
    pub family: Option<String>,
    /// Append quadrature columns.
    #[arg(long)]
    pub oracle: bool,
    #[command(flatten)]
    pub quadrature: QuadratureArgs,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    /// Efficiency to maximise, named as for `--kind`.
    #[arg(long)]
    pub target: EfficiencyKind,
    /// Waist to vary: w_p, w_o1, w_o2, w_o or w_all.
    #[arg(long)]
    pub free: Variable,
    /// full or thin.
    #[arg(long, default_value = "full")]
    pub regime: Regime,
    /// Search interval `lo:hi` in micrometres.
    #[arg(long, default_value = "5:2000")]
    pub bracket: String,
    /// Repeat the search along a second variable, e.g. `w_p=150:600:5`.
    #[arg(long, value_name = "VAR=LO:HI:COUNT")]
    pub sweep: Option<String>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// eps_P_thin (iris scan), chi_P_thin or chi_M_thin (pump-waist scan), singles_C3.
    #[arg(long)]
    pub model: FitModel,
    /// Measured CSV; repeat for several pump waists.
    #[arg(long, required = true)]
    pub data: Vec<PathBuf>,
    /// Pump waist of each `--data` file, in the same order.
    #[arg(long = "pump-waist")]
    pub pump_waists: Vec<f64>,
    /// Comma-separated free parameters from k_fresnel, w_p, w_o1, w_o2, scale.
    #[arg(long, value_delimiter = ',', required = true)]
    pub free: Vec<FitParam>,
    /// Initial guess overrides, e.g. `k_fresnel=2e-5`.
    #[arg(long = "set", value_name = "PARAM=VALUE")]
    pub initial: Vec<String>,
}

#[derive(Debug, Args)]
pub struct OracleCheckArgs {
    /// chi_M, chi_P3, chi_P4, eta_M, eta_P3, eta_P4, eps_P or singles_C3.
    #[arg(long)]
    pub kind: EfficiencyKind,
    /// Sweep this variable instead of checking the configured point.
    #[arg(long = "var", requires = "grid")]
    pub variable: Option<Variable>,
    /// `lo:hi:count`, endpoints included.
    #[arg(long, requires = "variable")]
    pub grid: Option<Grid>,
    /// Largest acceptable relative deviation.
    #[arg(long, default_value_t = 1e-3)]
    pub threshold: f64,
    #[command(flatten)]
    pub quadrature: QuadratureArgs,
}

#[derive(Debug, Args)]
pub struct QuadratureArgs {
    /// Gauss-Legendre nodes along the crystal.
    #[arg(long, default_value_t = QuadratureSpec::default().n_longitudinal)]
    pub n_longitudinal: usize,
    /// Gauss-Legendre nodes per transverse axis.
    #[arg(long, default_value_t = QuadratureSpec::default().n_transverse)]
    pub n_transverse: usize,
    /// Include the longitudinal phase factor of the field.
    #[arg(long)]
    pub include_phase: bool,
}

impl QuadratureArgs {
    pub fn spec(&self) -> QuadratureSpec {
        QuadratureSpec {
            n_longitudinal: self.n_longitudinal,
            n_transverse: self.n_transverse,
            include_phase: self.include_phase,
            ..QuadratureSpec::default()
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let command = std::env::args().skip(1).collect::<Vec<_>>().join(" ");
    match commands::run(&cli, &command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error);
            ExitCode::from(failure.code)
        }
    }
}
