//! Command-line front end. The binary only forwards to [`main_with_args`].

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::topology::{GraphKind, GraphSpec};

use super::commands::{counterexample_report, spectral, sweep, CounterexampleRequest};
use super::output::{write_artifacts, Manifest};
use super::{execute, exit_code, FlatConfig, RunConfig, EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK};

#[derive(Debug, Parser)]
#[command(name = "dadast", version, about = "Decentralized adaptive minimax simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment and write traces, a manifest and a plot script.
    Run(RunArgs),
    /// Check the frozen-iterate counterexample and print a JSON report.
    Counterexample(CounterexampleArgs),
    /// Run a grid over gamma_x, gamma_y, alpha, beta (comma-separated lists).
    Sweep(RunArgs),
    /// Print the connectivity constant and validation report of a network.
    Spectral(SpectralArgs),
}

/// Settings shared with config files; flags override the file.
#[derive(Debug, Args)]
struct RunArgs {
    /// Flat TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Re-run the configuration and instance recorded in a manifest.
    #[arg(long, conflicts_with = "config")]
    manifest: Option<PathBuf>,
    #[arg(long)]
    experiment: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    topology: Option<String>,
    /// Custom links, e.g. `0-1,1-2`.
    #[arg(long)]
    edges: Option<String>,
    #[arg(long)]
    algos: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    beta: Option<String>,
    #[arg(long = "gamma-x")]
    gamma_x: Option<String>,
    #[arg(long = "gamma-y")]
    gamma_y: Option<String>,
    #[arg(long)]
    c0: Option<String>,
    /// local-then-mix or mix-accumulators-first.
    #[arg(long)]
    order: Option<String>,
    #[arg(long = "K", visible_alias = "iterations")]
    iterations: Option<String>,
    #[arg(long)]
    stride: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// none, gaussian or clipped.
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    sigma: Option<String>,
    #[arg(long)]
    clip: Option<String>,
    #[arg(long = "out-dir")]
    out_dir: Option<String>,
    #[arg(long)]
    x0: Option<String>,
    #[arg(long)]
    y0: Option<String>,
    #[arg(long = "init-offset")]
    init_offset: Option<String>,
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    d: Option<String>,
    #[arg(long = "l-low")]
    l_low: Option<String>,
    #[arg(long = "l-high")]
    l_high: Option<String>,
    #[arg(long = "phi-margin")]
    phi_margin: Option<String>,
    /// Dual box `lo,hi`.
    #[arg(long = "y-box")]
    y_box: Option<String>,
    /// Dual ball radius around the origin.
    #[arg(long = "y-ball")]
    y_ball: Option<String>,
    /// Gradient level for `iterations_to_threshold` in sweeps.
    #[arg(long)]
    threshold: Option<String>,
}

impl RunArgs {
    fn flat(&self) -> Result<FlatConfig> {
        let base = match &self.config {
            Some(path) => FlatConfig::from_file(path)?,
            None => FlatConfig::default(),
        };
        let mut flags = FlatConfig::default();
        let pairs = [
            ("experiment", &self.experiment),
            ("n", &self.n),
            ("topology", &self.topology),
            ("edges", &self.edges),
            ("algos", &self.algos),
            ("alpha", &self.alpha),
            ("beta", &self.beta),
            ("gamma_x", &self.gamma_x),
            ("gamma_y", &self.gamma_y),
            ("c0", &self.c0),
            ("order", &self.order),
            ("K", &self.iterations),
            ("stride", &self.stride),
            ("seed", &self.seed),
            ("noise", &self.noise),
            ("sigma", &self.sigma),
            ("clip", &self.clip),
            ("out_dir", &self.out_dir),
            ("x0", &self.x0),
            ("y0", &self.y0),
            ("init_offset", &self.init_offset),
            ("p", &self.p),
            ("d", &self.d),
            ("l_low", &self.l_low),
            ("l_high", &self.l_high),
            ("phi_margin", &self.phi_margin),
            ("y_box", &self.y_box),
            ("y_ball", &self.y_ball),
            ("threshold", &self.threshold),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                flags.set_str(key, v)?;
            }
        }
        Ok(base.overlay(flags))
    }
}

#[derive(Debug, Args)]
struct CounterexampleArgs {
    #[arg(long, default_value_t = 0.75)]
    alpha: f64,
    #[arg(long, default_value_t = 0.25)]
    beta: f64,
    #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
    x0: f64,
    #[arg(long = "K", visible_alias = "iterations", default_value_t = 1000)]
    iterations: usize,
    #[arg(long = "gamma-x", default_value_t = 0.1)]
    gamma_x: f64,
    #[arg(long = "gamma-y", default_value_t = 0.1)]
    gamma_y: f64,
    /// Also write the report to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SpectralArgs {
    #[arg(long)]
    topology: String,
    /// One or more node counts, comma-separated.
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    /// Links for `--topology custom`, e.g. `0-1,1-2`.
    #[arg(long)]
    edges: Option<String>,
}

fn report(e: &Error) -> i32 {
    eprintln!("error: {e}");
    exit_code(e)
}

fn cmd_run(args: &RunArgs) -> Result<i32> {
    let (cfg, outcome) = match &args.manifest {
        Some(path) => {
            let m = Manifest::load(path)?;
            let mut cfg = m.config.clone();
            if let Some(dir) = &args.out_dir {
                cfg.out_dir = PathBuf::from(dir);
            }
            let outcome = m.rerun()?;
            (cfg, outcome)
        }
        None => {
            let cfg = RunConfig::resolve(&args.flat()?)?;
            let outcome = execute(&cfg)?;
            (cfg, outcome)
        }
    };
    let manifest = write_artifacts(&cfg, &outcome, &cfg.out_dir)?;
    println!(
        "wrote {} trace(s), manifest.json and plot.gp to {} (rho_w = {:.6}, ||W - J|| = {:.6})",
        manifest.runs.len(),
        cfg.out_dir.display(),
        manifest.network.rho_w,
        manifest.network.w_minus_j_norm
    );
    if let Some((ac, abort)) = outcome.first_abort() {
        eprintln!("error: {} {abort}; partial trace written", ac.algo);
        return Ok(EXIT_NUMERIC);
    }
    Ok(EXIT_OK)
}

fn cmd_sweep(args: &RunArgs) -> Result<i32> {
    if args.manifest.is_some() {
        return Err(Error::config("manifest", "not supported by sweep"));
    }
    let flat = args.flat()?;
    let dir = flat.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    let rows = sweep(&flat, Some(&dir))?;
    print!("{}", super::commands::sweep_csv(&rows));
    Ok(if rows.iter().all(|r| r.completed) { EXIT_OK } else { EXIT_NUMERIC })
}

fn cmd_counterexample(args: &CounterexampleArgs) -> Result<i32> {
    let req = CounterexampleRequest {
        alpha: args.alpha,
        beta: args.beta,
        x0: args.x0,
        iterations: args.iterations,
        gamma_x: args.gamma_x,
        gamma_y: args.gamma_y,
    };
    let rep = counterexample_report(&req)?;
    let json = serde_json::to_string_pretty(&rep)?;
    println!("{json}");
    if let Some(path) = &args.out {
        std::fs::write(path, &json)?;
    }
    Ok(if rep.d_tiada.completed && rep.d_adast.completed { EXIT_OK } else { EXIT_NUMERIC })
}

fn cmd_spectral(args: &SpectralArgs) -> Result<i32> {
    let mut kind: GraphKind = args.topology.parse().map_err(|e: Error| Error::config("topology", e.to_string()))?;
    if let Some(edges) = &args.edges {
        let mut f = FlatConfig::default();
        f.set_str("edges", edges)?;
        match kind {
            GraphKind::Custom(_) => kind = GraphKind::Custom(f.edges.unwrap_or_default()),
            _ => return Err(Error::config("edges", "only valid with `--topology custom`")),
        }
    }
    for &n in &args.n {
        let line = spectral(&GraphSpec::new(n, kind.clone())).map_err(|e| match e {
            Error::PowerIteration { .. } => e,
            other => Error::config("topology", other.to_string()),
        })?;
        println!("{}", serde_json::to_string(&line)?);
    }
    Ok(EXIT_OK)
}

/// Parses `args` (program name first) and runs the command; returns the
/// process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Counterexample(a) => cmd_counterexample(a),
        Command::Spectral(a) => cmd_spectral(a),
    };
    result.unwrap_or_else(|e| report(&e))
}
