//! The counterexample report, parameter sweeps and spectral summaries.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{run, AlgoConfig, Algorithm, Init, RunSetup, Trace};
use crate::error::{Error, Result};
use crate::metrics::{self, TraceRecord};
use crate::problems::{make_counterexample, NoiseModel, QuadraticMinimaxProblem};
use crate::topology::{weights_for, GraphKind, GraphSpec, ValidationReport, STOCHASTIC_TOL};

use super::output::{cell_dir, write_artifacts};
use super::{execute, with_thread_pool, FlatConfig, RunConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleRequest {
    pub alpha: f64,
    pub beta: f64,
    pub x0: f64,
    pub iterations: usize,
    pub gamma_x: f64,
    pub gamma_y: f64,
}

impl Default for CounterexampleRequest {
    fn default() -> Self {
        Self { alpha: 0.75, beta: 0.25, x0: 10.0, iterations: 1000, gamma_x: 0.1, gamma_y: 0.1 }
    }
}

/// Gradient-norm drift of D-TiAda started on the invariant line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrozenReport {
    pub initial_grad_x: f64,
    pub initial_grad_y: f64,
    pub max_rel_drift_x: f64,
    pub max_rel_drift_y: f64,
    pub completed: bool,
    pub error: Option<String>,
}

/// Progress of D-AdaST from the same start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeReport {
    pub initial_grad_x: f64,
    pub final_grad_x: f64,
    /// `final_grad_x / initial_grad_x`.
    pub grad_x_ratio: f64,
    pub initial_distance: f64,
    pub final_distance: f64,
    /// Length of the trailing window checked for monotone decrease.
    pub window: usize,
    /// Distance of the averaged iterate to the origin never increases over
    /// the trailing window.
    pub distance_monotone: bool,
    pub completed: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub request: CounterexampleRequest,
    pub slope: f64,
    pub d_tiada: FrozenReport,
    pub d_adast: EscapeReport,
}

/// Number of trailing iterations checked for monotone decrease.
pub const ESCAPE_WINDOW: usize = 1000;

fn norms(problem: &QuadraticMinimaxProblem, r: &TraceRecord) -> (f64, f64) {
    let gy = problem.mean_grad_y(&r.xbar, &r.ybar);
    (r.grad_xf_sq.sqrt(), metrics::sq_norm(&gy).sqrt())
}

fn dist(r: &TraceRecord) -> f64 {
    metrics::sq_norm(&r.xbar).sqrt().hypot(metrics::sq_norm(&r.ybar).sqrt())
}

/// Runs D-TiAda and D-AdaST with exact gradients on the three-node
/// counterexample from `(x0, slope * x0)`, recording every iteration.
pub fn counterexample_report(req: &CounterexampleRequest) -> Result<CounterexampleReport> {
    if req.x0 == 0.0 || !req.x0.is_finite() {
        return Err(Error::config("x0", "x0 must be finite and nonzero; 0 is a stationary point"));
    }
    let ce = make_counterexample(req.alpha, req.beta).map_err(|e| Error::config("alpha", e.to_string()))?;
    let w = weights_for(&GraphSpec::new(3, GraphKind::Complete))?;
    let setup = RunSetup {
        noise: NoiseModel::None,
        seed: 0,
        init: Init::uniform(vec![req.x0], vec![ce.slope * req.x0]),
        trace_stride: 1,
    };
    let cfg = |algo| {
        AlgoConfig::new(algo)
            .with_exponents(req.alpha, req.beta)
            .with_stepsizes(req.gamma_x, req.gamma_y)
            .with_c0(0.0)
            .with_iterations(req.iterations)
    };
    cfg(Algorithm::DTiada).validate(1).map_err(|e| Error::config("gamma_x", e.to_string()))?;

    let split = |res: std::result::Result<Trace, crate::algorithms::RunAbort>| match res {
        Ok(t) => (t, None),
        Err(a) => (a.partial, Some(a.source.to_string())),
    };
    let (tiada, tiada_err) = split(run(&ce.problem, &w, &cfg(Algorithm::DTiada), &setup));
    let (adast, adast_err) = split(run(&ce.problem, &w, &cfg(Algorithm::DAdast), &setup));

    let (gx0, gy0) = norms(&ce.problem, &tiada.records[0]);
    let mut drift_x: f64 = 0.0;
    let mut drift_y: f64 = 0.0;
    for r in &tiada.records {
        let (gx, gy) = norms(&ce.problem, r);
        drift_x = drift_x.max((gx - gx0).abs() / gx0);
        drift_y = drift_y.max((gy - gy0).abs() / gy0);
    }

    let first = &adast.records[0];
    let last = adast.records.last().expect("trace starts with k = 0");
    let dists: Vec<f64> = adast.records.iter().map(dist).collect();
    let start = dists.len().saturating_sub(ESCAPE_WINDOW + 1);
    let tail = &dists[start..];
    let (ax0, _) = norms(&ce.problem, first);
    let (ax1, _) = norms(&ce.problem, last);

    Ok(CounterexampleReport {
        request: req.clone(),
        slope: ce.slope,
        d_tiada: FrozenReport {
            initial_grad_x: gx0,
            initial_grad_y: gy0,
            max_rel_drift_x: drift_x,
            max_rel_drift_y: drift_y,
            completed: tiada_err.is_none(),
            error: tiada_err,
        },
        d_adast: EscapeReport {
            initial_grad_x: ax0,
            final_grad_x: ax1,
            grad_x_ratio: ax1 / ax0,
            initial_distance: dists[0],
            final_distance: *dists.last().unwrap(),
            window: tail.len().saturating_sub(1),
            distance_monotone: tail.windows(2).all(|p| p[1] <= p[0]),
            completed: adast_err.is_none(),
            error: adast_err,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub cell: usize,
    pub gamma_x: f64,
    pub gamma_y: f64,
    pub alpha: f64,
    pub beta: f64,
    pub algo: Algorithm,
    pub completed: bool,
    pub final_k: usize,
    pub final_grad_phi_sq: Option<f64>,
    pub final_grad_xf_sq: f64,
    pub final_zeta_v_sup: f64,
    /// First recorded iteration whose gradient measure is at most the
    /// threshold: `grad_phi_sq` when available, else `grad_xf_sq`.
    pub iterations_to_threshold: Option<usize>,
}

pub const SWEEP_HEADER: &str = "cell,gamma_x,gamma_y,alpha,beta,algo,completed,final_k,final_grad_phi_sq,final_grad_xf_sq,final_zeta_v_sup,iterations_to_threshold";

fn axis(key: &str, v: &Option<Vec<f64>>) -> Result<Vec<Option<f64>>> {
    match v {
        None => Ok(vec![None]),
        Some(list) if list.is_empty() => Err(Error::config(key, "empty grid")),
        Some(list) => Ok(list.iter().copied().map(Some).collect()),
    }
}

/// Expands the `gamma_x`, `gamma_y`, `alpha`, `beta` lists into the
/// cartesian grid of single-valued configurations.
pub fn sweep_cells(flat: &FlatConfig) -> Result<Vec<FlatConfig>> {
    let mut cells = Vec::new();
    let one = |v: Option<f64>| v.map(|x| vec![x]);
    for gx in axis("gamma_x", &flat.gamma_x)? {
        for gy in axis("gamma_y", &flat.gamma_y)? {
            for a in axis("alpha", &flat.alpha)? {
                for b in axis("beta", &flat.beta)? {
                    cells.push(FlatConfig {
                        gamma_x: one(gx),
                        gamma_y: one(gy),
                        alpha: one(a),
                        beta: one(b),
                        ..flat.clone()
                    });
                }
            }
        }
    }
    Ok(cells)
}

/// Runs every grid cell. With `out_dir`, each cell's artifacts go to
/// `out_dir/cell-NNN` and the table to `out_dir/sweep.csv`.
pub fn sweep(flat: &FlatConfig, out_dir: Option<&Path>) -> Result<Vec<SweepRow>> {
    let cells = sweep_cells(flat)?;
    let configs = cells.iter().map(RunConfig::resolve).collect::<Result<Vec<_>>>()?;
    let threshold = flat.threshold.unwrap_or(1e-3);

    let outcomes = with_thread_pool(|| {
        configs.par_iter().map(execute).collect::<Vec<Result<_>>>()
    })?;
    let mut rows = Vec::new();
    for (cell, (cfg, outcome)) in configs.iter().zip(outcomes).enumerate() {
        let outcome = outcome?;
        if let Some(dir) = out_dir {
            write_artifacts(cfg, &outcome, &cell_dir(dir, cell))?;
        }
        for r in &outcome.runs {
            let trace = r.trace();
            let last = trace.last().expect("trace starts with k = 0");
            let hit = trace
                .records
                .iter()
                .find(|t| t.grad_phi_sq.unwrap_or(t.grad_xf_sq) <= threshold)
                .map(|t| t.k);
            rows.push(SweepRow {
                cell,
                gamma_x: r.config.gamma_x,
                gamma_y: r.config.gamma_y,
                alpha: r.config.alpha,
                beta: r.config.beta,
                algo: r.config.algo,
                completed: r.result.is_ok(),
                final_k: last.k,
                final_grad_phi_sq: last.grad_phi_sq,
                final_grad_xf_sq: last.grad_xf_sq,
                final_zeta_v_sup: last.zeta_v_sup,
                iterations_to_threshold: hit,
            });
        }
    }
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("sweep.csv"), sweep_csv(&rows))?;
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = format!("{SWEEP_HEADER}\n");
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
    for r in rows {
        let _ = writeln!(
            s,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{},{},{},{},{:.16e},{:.16e},{}",
            r.cell,
            r.gamma_x,
            r.gamma_y,
            r.alpha,
            r.beta,
            r.algo,
            r.completed,
            r.final_k,
            opt(r.final_grad_phi_sq),
            r.final_grad_xf_sq,
            r.final_zeta_v_sup,
            r.iterations_to_threshold.map(|k| k.to_string()).unwrap_or_default()
        );
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralLine {
    pub topology: String,
    pub n: usize,
    pub rho_w: f64,
    pub w_minus_j_norm: f64,
    pub validation: ValidationReport,
}

pub fn spectral(spec: &GraphSpec) -> Result<SpectralLine> {
    let w = weights_for(spec)?;
    Ok(SpectralLine {
        topology: spec.kind.name().to_string(),
        n: spec.n,
        rho_w: w.rho_w(),
        w_minus_j_norm: w.w_minus_j_norm(),
        validation: w.validate(STOCHASTIC_TOL),
    })
}
