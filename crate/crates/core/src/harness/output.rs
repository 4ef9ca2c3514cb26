//! Trace CSVs, run manifests and plot scripts.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::TraceRecord;
use crate::problems::QuadraticMinimaxProblem;
use crate::topology::{ValidationReport, STOCHASTIC_TOL};

use super::{execute_with_problem, Outcome, RunConfig};

pub const TRACE_HEADER: &str =
    "k,grad_phi_sq,grad_xf_sq,consensus_x,consensus_y,zeta_v_inst,zeta_v_sup,zeta_u_inst,zeta_u_sup,avg_m_x,avg_m_y";

/// One parsed CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub grad_phi_sq: Option<f64>,
    pub grad_xf_sq: f64,
    pub consensus_x: f64,
    pub consensus_y: f64,
    pub zeta_v_inst: f64,
    pub zeta_v_sup: f64,
    pub zeta_u_inst: f64,
    pub zeta_u_sup: f64,
    pub avg_m_x: f64,
    pub avg_m_y: f64,
    pub xbar: Vec<f64>,
    pub ybar: Vec<f64>,
}

impl From<&TraceRecord> for TraceRow {
    fn from(r: &TraceRecord) -> Self {
        TraceRow {
            k: r.k,
            grad_phi_sq: r.grad_phi_sq,
            grad_xf_sq: r.grad_xf_sq,
            consensus_x: r.consensus_x,
            consensus_y: r.consensus_y,
            zeta_v_inst: r.zeta_v_inst,
            zeta_v_sup: r.zeta_v_sup,
            zeta_u_inst: r.zeta_u_inst,
            zeta_u_sup: r.zeta_u_sup,
            avg_m_x: r.avg_m_x,
            avg_m_y: r.avg_m_y,
            xbar: r.xbar.clone(),
            ybar: r.ybar.clone(),
        }
    }
}

// 17 significant digits round-trip every finite f64
fn num(out: &mut String, v: f64) {
    let _ = write!(out, ",{v:.16e}");
}

/// Header line for a trace with `p` primal and `d` dual coordinates.
pub fn trace_header(p: usize, d: usize) -> String {
    let mut h = TRACE_HEADER.to_string();
    for j in 0..p {
        let _ = write!(h, ",xbar_{j}");
    }
    for j in 0..d {
        let _ = write!(h, ",ybar_{j}");
    }
    h
}

/// Writes records as CSV. The coordinate columns follow the first record;
/// an empty trace gives a header-only file.
pub fn write_trace(records: &[TraceRecord], path: &Path) -> Result<()> {
    let (p, d) = records.first().map_or((0, 0), |r| (r.xbar.len(), r.ybar.len()));
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{}", trace_header(p, d))?;
    let mut line = String::new();
    for r in records {
        line.clear();
        let _ = write!(line, "{}", r.k);
        match r.grad_phi_sq {
            Some(g) => num(&mut line, g),
            None => line.push(','),
        }
        for v in [
            r.grad_xf_sq,
            r.consensus_x,
            r.consensus_y,
            r.zeta_v_inst,
            r.zeta_v_sup,
            r.zeta_u_inst,
            r.zeta_u_sup,
            r.avg_m_x,
            r.avg_m_y,
        ] {
            num(&mut line, v);
        }
        for &v in r.xbar.iter().chain(&r.ybar) {
            num(&mut line, v);
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

fn bad_csv(path: &Path, line: usize, msg: impl std::fmt::Display) -> Error {
    Error::config(path.display().to_string(), format!("line {line}: {msg}"))
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut lines = reader.lines();
    let header = lines.next().transpose()?.ok_or_else(|| bad_csv(path, 1, "missing header"))?;
    let cols: Vec<&str> = header.split(',').collect();
    let fixed = TRACE_HEADER.split(',').count();
    if cols.len() < fixed || cols[..fixed].join(",") != TRACE_HEADER {
        return Err(bad_csv(path, 1, "unexpected header"));
    }
    let p = cols[fixed..].iter().filter(|c| c.starts_with("xbar_")).count();
    let d = cols.len() - fixed - p;

    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i + 2;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != cols.len() {
            return Err(bad_csv(path, lineno, format!("{} fields, expected {}", f.len(), cols.len())));
        }
        let val = |j: usize| -> Result<f64> {
            f[j].parse::<f64>().map_err(|_| bad_csv(path, lineno, format!("bad number `{}`", f[j])))
        };
        let vals = (2..cols.len()).map(val).collect::<Result<Vec<f64>>>()?;
        rows.push(TraceRow {
            k: f[0].parse().map_err(|_| bad_csv(path, lineno, "bad iteration index"))?,
            grad_phi_sq: if f[1].is_empty() { None } else { Some(val(1)?) },
            grad_xf_sq: vals[0],
            consensus_x: vals[1],
            consensus_y: vals[2],
            zeta_v_inst: vals[3],
            zeta_v_sup: vals[4],
            zeta_u_inst: vals[5],
            zeta_u_sup: vals[6],
            avg_m_x: vals[7],
            avg_m_y: vals[8],
            xbar: vals[9..9 + p].to_vec(),
            ybar: vals[9 + p..9 + p + d].to_vec(),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkInfo {
    pub rho_w: f64,
    pub w_minus_j_norm: f64,
    pub validation: ValidationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub algo: String,
    pub trace_file: String,
    pub records: usize,
    pub completed: bool,
    #[serde(default)]
    pub error: Option<String>,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    /// Seconds since the Unix epoch; the only field that differs between
    /// identical runs.
    pub timestamp: u64,
    pub config: RunConfig,
    pub network: NetworkInfo,
    pub problem: QuadraticMinimaxProblem,
    pub runs: Vec<RunEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::config("manifest", e.to_string()))
    }

    /// Re-executes the recorded configuration on the recorded instance.
    pub fn rerun(&self) -> Result<Outcome> {
        execute_with_problem(&self.config, self.problem.clone())
    }
}

/// File name for each run: the algorithm name, suffixed by position when
/// an algorithm appears more than once.
fn trace_names(outcome: &Outcome) -> Vec<String> {
    let names: Vec<&str> = outcome.runs.iter().map(|r| r.config.algo.name()).collect();
    names
        .iter()
        .enumerate()
        .map(|(i, n)| {
            if names.iter().filter(|m| *m == n).count() > 1 {
                format!("{n}-{i}.csv")
            } else {
                format!("{n}.csv")
            }
        })
        .collect()
}

/// Writes one CSV per algorithm, `manifest.json` and `plot.gp` into `dir`.
pub fn write_artifacts(cfg: &RunConfig, outcome: &Outcome, dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let names = trace_names(outcome);
    let mut runs = Vec::new();
    for (run, name) in outcome.runs.iter().zip(&names) {
        let trace = run.trace();
        write_trace(&trace.records, &dir.join(name))?;
        runs.push(RunEntry {
            algo: run.config.algo.name().to_string(),
            trace_file: name.clone(),
            records: trace.len(),
            completed: run.result.is_ok(),
            error: run.result.as_ref().err().map(|e| e.source.to_string()),
        });
    }
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        config: RunConfig { out_dir: dir.to_path_buf(), ..cfg.clone() },
        network: NetworkInfo {
            rho_w: outcome.weights.rho_w(),
            w_minus_j_norm: outcome.weights.w_minus_j_norm(),
            validation: outcome.weights.validate(STOCHASTIC_TOL),
        },
        problem: outcome.problem.clone(),
        runs,
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    fs::write(dir.join("plot.gp"), gnuplot_script(&manifest))?;
    Ok(manifest)
}

/// A gnuplot script drawing gradient norm, stepsize inconsistency and
/// consensus error against iterations for every trace of the run.
pub fn gnuplot_script(manifest: &Manifest) -> String {
    let files: Vec<(String, String)> =
        manifest.runs.iter().map(|r| (r.trace_file.clone(), r.algo.clone())).collect();
    let constrained = !manifest.config.algo_configs.iter().all(|a| a.projection.is_all());
    // column numbers in the CSV
    let grad_col = if constrained { 3 } else { 2 };
    let grad_label = if constrained { "||grad_x f(xbar, ybar)||^2" } else { "||grad Phi(xbar)||^2" };
    let panel = |col: usize, title: &str| {
        let series: Vec<String> = files
            .iter()
            .map(|(f, a)| format!("'{f}' using 1:(${col} > 0 ? ${col} : NaN) with lines title '{a}'"))
            .collect();
        format!("set title \"{title}\"\nplot {}\n", series.join(", \\\n     "))
    };
    let mut s = String::new();
    s.push_str("# gnuplot -p plot.gp  (run from this directory)\n");
    s.push_str("set datafile separator ','\n");
    s.push_str("set terminal pngcairo size 1500,420\nset output 'plot.png'\n");
    s.push_str("set multiplot layout 1,3\nset logscale y\nset xlabel 'iteration'\nset format y '%.0e'\n");
    s.push_str(&panel(grad_col, grad_label));
    s.push_str(&panel(6, "stepsize inconsistency zeta_v"));
    s.push_str(&panel(4, "consensus error (x)"));
    s.push_str("unset multiplot\n");
    s
}

/// `dir` for a run, or `dir/cell-NNN` for a sweep cell.
pub fn cell_dir(dir: &Path, cell: usize) -> PathBuf {
    dir.join(format!("cell-{cell:03}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{execute, FlatConfig};

    fn record(k: usize, phi: Option<f64>) -> TraceRecord {
        TraceRecord {
            k,
            grad_phi_sq: phi,
            grad_xf_sq: 0.1 + 0.2,
            consensus_x: 1e-300,
            consensus_y: std::f64::consts::PI,
            zeta_v_inst: 5e-324,
            zeta_v_sup: 1.0 / 3.0,
            zeta_u_inst: 0.0,
            zeta_u_sup: 2.0f64.sqrt(),
            zeta_v_hat_inst: 0.0,
            zeta_u_hat_inst: 0.0,
            avg_m_x: 123_456_789.123_456_79,
            avg_m_y: 1e-6,
            ref_m_x: 0.0,
            ref_m_y: 0.0,
            xbar: vec![-0.7, 1e10],
            ybar: vec![f64::MIN_POSITIVE],
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let recs = vec![record(0, Some(1.0 / 7.0)), record(10, None)];
        write_trace(&recs, &path).unwrap();
        let rows = read_trace(&path).unwrap();
        let expect: Vec<TraceRow> = recs.iter().map(TraceRow::from).collect();
        assert_eq!(rows.len(), 2);
        for (a, b) in rows.iter().zip(&expect) {
            assert_eq!(a, b);
            assert_eq!(a.zeta_v_sup.to_bits(), b.zeta_v_sup.to_bits());
        }
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(&format!("{TRACE_HEADER},xbar_0,xbar_1,ybar_0\n")));
    }

    #[test]
    fn empty_trace_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        write_trace(&[], &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), format!("{TRACE_HEADER}\n"));
        assert!(read_trace(&path).unwrap().is_empty());
    }

    #[test]
    fn case_study_row_count() {
        let mut f = FlatConfig::default();
        for (k, v) in [("experiment", "case-study"), ("K", "100"), ("stride", "10"), ("algos", "d-adast")] {
            f.set_str(k, v).unwrap();
        }
        let cfg = RunConfig::resolve(&f).unwrap();
        let out = execute(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_artifacts(&cfg, &out, dir.path()).unwrap();
        assert_eq!(read_trace(&dir.path().join("d-adast.csv")).unwrap().len(), 11);
    }

    #[test]
    fn manifest_rerun_reproduces_traces() {
        let mut f = FlatConfig::default();
        for (k, v) in [("experiment", "custom"), ("n", "5"), ("K", "200"), ("noise", "gaussian"), ("seed", "9")] {
            f.set_str(k, v).unwrap();
        }
        let cfg = RunConfig::resolve(&f).unwrap();
        let first = tempfile::tempdir().unwrap();
        let m = write_artifacts(&cfg, &execute(&cfg).unwrap(), first.path()).unwrap();

        let loaded = Manifest::load(&first.path().join("manifest.json")).unwrap();
        assert_eq!(loaded.config, m.config);
        let second = tempfile::tempdir().unwrap();
        write_artifacts(&loaded.config, &loaded.rerun().unwrap(), second.path()).unwrap();
        for r in &m.runs {
            let a = fs::read_to_string(first.path().join(&r.trace_file)).unwrap();
            let b = fs::read_to_string(second.path().join(&r.trace_file)).unwrap();
            assert_eq!(a, b, "{}", r.trace_file);
        }
    }
}
