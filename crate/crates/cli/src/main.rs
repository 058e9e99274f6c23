//! `alpha-patch`: command-line driver for alpha-patch simulations.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "alpha-patch", version, about = "Contour dynamics for alpha-patches")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by the commands that read a run configuration.
#[derive(Args, Debug, Clone, Default, Serialize)]
pub struct ConfigArgs {
    /// TOML configuration; defaults are used when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// two_circles, two_ellipses, wedge or from_file.
    #[arg(long)]
    pub scenario: Option<String>,
    /// Snapshot read by the from_file scenario.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Redistribution density parameter.
    #[arg(long)]
    pub nu: Option<f64>,
    /// Time-step factor.
    #[arg(long = "B")]
    pub b: Option<f64>,
    /// Largest step index of the run.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (results do not depend on this).
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct RunArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Continue from this snapshot; the time series in the output directory
    /// is cut back to the snapshot's step.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    /// `D = C (t* - t)^(1/alpha)`, estimating `t*`.
    Collapse,
    /// Slope of `log D` against `tau`.
    Slope,
    /// Exponent of the maximum curvature against `t* - t`.
    Curvature,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct FitArgs {
    /// Time-series CSV written by `run` or `run-ss`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "collapse")]
    pub model: FitModel,
    /// Fit window as `START,END`.
    #[arg(long, value_parser = parse_pair)]
    pub window: Option<(f64, f64)>,
    /// Use this many samples spread evenly over the window.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, default_value_t = 0.7)]
    pub alpha: f64,
    /// Collapse time for the curvature model.
    #[arg(long)]
    pub t_star: Option<f64>,
    /// Without `--window`, fit the last `--span` of time in which the gap is
    /// at least this many minimum node spacings wide.
    #[arg(long)]
    pub resolved: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub span: f64,
    /// Time-step factor of the run, used to recover node spacings from `dt`.
    #[arg(long = "B", default_value_t = 0.5)]
    pub b: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ClassifyArgs {
    /// Measured slope of `log D(tau)`; fitted from `--input` when omitted.
    #[arg(long)]
    pub m: Option<f64>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_parser = parse_pair)]
    pub window: Option<(f64, f64)>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, default_value_t = 0.7)]
    pub alpha: f64,
    #[arg(long, default_value_t = alpha_patches::diagnostics::DEFAULT_CLASSIFY_TOLERANCE)]
    pub tolerance: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct RescaleArgs {
    /// Snapshots to convert.
    #[arg(required = true)]
    pub snapshots: Vec<PathBuf>,
    #[arg(long)]
    pub t_star: f64,
    /// Collapse point as `X,Y`.
    #[arg(long, value_parser = parse_pair, default_value = "0,0")]
    pub x_star: (f64, f64),
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 0.7)]
    pub alpha: f64,
    #[arg(long, default_value_t = 200)]
    pub nodes: usize,
    /// Randomized segment/target pairs in the cross-method check.
    #[arg(long, default_value_t = 100)]
    pub pairs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct BackwardArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Magnitude of the fixed step in tau.
    #[arg(long)]
    pub dt: f64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a default configuration file.
    Init {
        #[arg(default_value = "alpha_patch.toml")]
        path: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        scenario: Option<String>,
        /// Overwrite an existing file.
        #[arg(long)]
        force: bool,
    },
    /// Evolve in physical variables.
    Run(RunArgs),
    /// Evolve in self-similar variables.
    RunSs(RunArgs),
    /// Map snapshots between physical and self-similar variables.
    Rescale(RescaleArgs),
    /// Fit a stored time series.
    Fit(FitArgs),
    /// Compare a slope with delta = 1/alpha.
    Classify(ClassifyArgs),
    /// Check the kernel against closed forms and between its methods.
    Verify(VerifyArgs),
    /// Evolve backwards in tau with fixed steps.
    Backward(BackwardArgs),
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected two numbers `A,B`, got `{s}`"))?;
    let a = a.trim().parse().map_err(|_| format!("bad number `{a}`"))?;
    let b = b.trim().parse().map_err(|_| format!("bad number `{b}`"))?;
    Ok((a, b))
}

/// Inputs echoed in error reports.
#[derive(Default)]
pub struct Echo(pub Option<serde_json::Value>);

impl Echo {
    pub fn set(&mut self, value: impl Serialize) {
        self.0 = serde_json::to_value(value).ok();
    }
}

fn report(command: &str, kind: &str, message: &str, echo: Option<serde_json::Value>) {
    let r = serde_json::json!({
        "status": "error",
        "command": command,
        "kind": kind,
        "message": message,
        "config": echo,
    });
    eprintln!("{}", serde_json::to_string_pretty(&r).unwrap_or_default());
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report("", "usage", e.to_string().trim(), None);
            return ExitCode::from(2);
        }
    };
    let mut echo = Echo::default();
    let (name, result) = match cli.command {
        Command::Init { path, alpha, scenario, force } => ("init", commands::init(&path, alpha, scenario, force, &mut echo)),
        Command::Run(a) => ("run", commands::run(&a, alpha_patches::Mode::Physical, &mut echo)),
        Command::RunSs(a) => ("run-ss", commands::run(&a, alpha_patches::Mode::SelfSimilar, &mut echo)),
        Command::Rescale(a) => ("rescale", commands::rescale(&a, &mut echo)),
        Command::Fit(a) => ("fit", commands::fit(&a, &mut echo)),
        Command::Classify(a) => ("classify", commands::classify(&a, &mut echo)),
        Command::Verify(a) => ("verify", commands::verify(&a, &mut echo)),
        Command::Backward(a) => ("backward", commands::backward(&a, &mut echo)),
    };
    match result {
        Ok(out) => {
            println!("{}", serde_json::to_string_pretty(&out.value).unwrap_or_default());
            if out.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            let kind = if let Some(core) = e.downcast_ref::<alpha_patches::Error>() {
                core.kind()
            } else if e.is::<commands::Usage>() {
                "usage"
            } else {
                "io"
            };
            report(name, kind, &format!("{e:#}"), echo.0);
            ExitCode::FAILURE
        }
    }
}
