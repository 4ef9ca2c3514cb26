//! Experiment orchestration: configuration, execution and artifacts.

pub mod cli;
pub mod commands;
pub mod config;
pub mod output;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{run, AlgoConfig, Algorithm, Init, RunAbort, RunSetup, Trace, UpdateOrder};
use crate::error::{Error, Result};
use crate::problems::{
    make_counterexample, make_random, make_synthetic, make_two_node_case_study, NoiseModel, ProjectionSet,
    QuadraticMinimaxProblem,
};
use crate::topology::{weights_for, GraphKind, GraphSpec, WeightMatrix};

pub use config::FlatConfig;

/// Exit status for a successful command.
pub const EXIT_OK: i32 = 0;
/// Exit status for invalid configuration or arguments.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status for numerical aborts and I/O failures.
pub const EXIT_NUMERIC: i32 = 3;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonFinite { .. } | Error::PowerIteration { .. } | Error::Io(_) => EXIT_NUMERIC,
        _ => EXIT_CONFIG,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    CaseStudy,
    Counterexample,
    Synthetic,
    /// Random matrix-coefficient instance.
    Custom,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::CaseStudy => "case-study",
            Experiment::Counterexample => "counterexample",
            Experiment::Synthetic => "synthetic",
            Experiment::Custom => "custom",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "case-study" | "two-node" => Ok(Experiment::CaseStudy),
            "counterexample" => Ok(Experiment::Counterexample),
            "synthetic" => Ok(Experiment::Synthetic),
            "custom" | "random" => Ok(Experiment::Custom),
            other => Err(Error::InvalidParameter(format!("unknown experiment `{other}`"))),
        }
    }
}

/// How the problem instance is obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProblemSpec {
    CaseStudy,
    Counterexample { alpha: f64, beta: f64 },
    /// Drawn from the run seed.
    Synthetic { l_low: f64, l_high: f64 },
    /// Drawn from the run seed.
    Random { p: usize, d: usize, phi_margin: Option<f64> },
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub problem: ProblemSpec,
    pub topology: GraphSpec,
    pub algo_configs: Vec<AlgoConfig>,
    pub noise: NoiseModel,
    pub seed: u64,
    pub iterations: usize,
    pub trace_stride: usize,
    pub init: Init,
    pub out_dir: PathBuf,
}

fn single(key: &str, v: &Option<Vec<f64>>, default: f64) -> Result<f64> {
    match v.as_deref() {
        None => Ok(default),
        Some([x]) => Ok(*x),
        Some([]) => Err(Error::config(key, "no value given")),
        Some(_) => Err(Error::config(key, "expected a single value (lists are for `sweep`)")),
    }
}

/// Spread of per-node offsets from `+offset` (node 0) to `-offset` (last node).
fn spread(offset: f64, i: usize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        offset * (1.0 - 2.0 * i as f64 / (n - 1) as f64)
    }
}

impl RunConfig {
    /// Applies per-experiment defaults and checks consistency.
    pub fn resolve(flat: &FlatConfig) -> Result<Self> {
        use Experiment::*;
        let experiment = flat.experiment.ok_or_else(|| Error::config("experiment", "required"))?;

        let fixed_n = match experiment {
            CaseStudy => Some(2),
            Counterexample => Some(3),
            _ => None,
        };
        let n = match (fixed_n, flat.n) {
            (Some(f), Some(n)) if n != f => {
                return Err(Error::config("n", format!("the {experiment} experiment has exactly {f} nodes")))
            }
            (Some(f), _) => f,
            (None, Some(n)) if n >= 1 => n,
            (None, Some(_)) => return Err(Error::config("n", "must be at least 1")),
            (None, None) => return Err(Error::config("n", format!("required for the {experiment} experiment"))),
        };

        let mut kind = flat.topology.clone().unwrap_or(match experiment {
            CaseStudy | Counterexample => GraphKind::Complete,
            Synthetic => GraphKind::Exponential,
            Custom => GraphKind::Ring,
        });
        if let Some(edges) = &flat.edges {
            match kind {
                GraphKind::Custom(_) => kind = GraphKind::Custom(edges.clone()),
                _ => return Err(Error::config("edges", "only valid with `topology = \"custom\"`")),
            }
        }
        if experiment == Counterexample && kind != GraphKind::Complete {
            return Err(Error::config("topology", "the counterexample requires the complete graph"));
        }
        let topology = GraphSpec::new(n, kind);

        let (def_alpha, def_beta) = if experiment == Counterexample { (0.75, 0.25) } else { (0.6, 0.4) };
        let alpha = single("alpha", &flat.alpha, def_alpha)?;
        let beta = single("beta", &flat.beta, def_beta)?;
        let gamma_x = single("gamma_x", &flat.gamma_x, 0.1)?;
        let gamma_y = single("gamma_y", &flat.gamma_y, 0.1)?;

        let noise = match (experiment, flat.noise.as_deref()) {
            (Counterexample, Some(s)) if s != "none" => {
                return Err(Error::config("noise", "the counterexample requires exact gradients"))
            }
            (_, Some("none")) => NoiseModel::None,
            (_, Some("gaussian")) => NoiseModel::Gaussian { sigma: flat.sigma.unwrap_or(0.1f64.sqrt()) },
            (_, Some("clipped") | Some("gaussian-clipped")) => NoiseModel::GaussianClipped {
                sigma: flat.sigma.unwrap_or(0.1f64.sqrt()),
                clip: flat.clip.ok_or_else(|| Error::config("clip", "required for clipped noise"))?,
            },
            (_, Some(other)) => {
                return Err(Error::config("noise", format!("expected none, gaussian or clipped, got `{other}`")))
            }
            (Synthetic, None) => NoiseModel::Gaussian { sigma: flat.sigma.unwrap_or(0.1f64.sqrt()) },
            (_, None) => match flat.sigma {
                Some(sigma) if experiment != Counterexample => NoiseModel::Gaussian { sigma },
                _ => NoiseModel::None,
            },
        };
        noise.validate().map_err(|e| Error::config("sigma", e.to_string()))?;

        let problem = match experiment {
            CaseStudy => ProblemSpec::CaseStudy,
            Counterexample => ProblemSpec::Counterexample { alpha, beta },
            Synthetic => ProblemSpec::Synthetic {
                l_low: flat.l_low.unwrap_or(1.5),
                l_high: flat.l_high.unwrap_or(2.5),
            },
            Custom => ProblemSpec::Random {
                p: flat.p.unwrap_or(2),
                d: flat.d.unwrap_or(2),
                phi_margin: flat.phi_margin,
            },
        };
        let (p, d) = match &problem {
            ProblemSpec::Random { p, d, .. } => (*p, *d),
            _ => (1, 1),
        };
        if p == 0 || d == 0 {
            return Err(Error::config(if p == 0 { "p" } else { "d" }, "must be positive"));
        }

        let projection = match (&flat.y_box, flat.y_ball) {
            (Some(_), Some(_)) => return Err(Error::config("y_ball", "give either y_box or y_ball")),
            (Some(b), None) => ProjectionSet::Box { lo: vec![b[0]; d], hi: vec![b[1]; d] },
            (None, Some(r)) => ProjectionSet::Ball { center: vec![0.0; d], radius: r },
            (None, None) => ProjectionSet::All,
        };
        projection.validate(Some(d)).map_err(|e| Error::config("y_box", e.to_string()))?;

        let iterations = flat.iterations.unwrap_or(match experiment {
            CaseStudy => 100_000,
            Counterexample => 1_000,
            Synthetic | Custom => 10_000,
        });
        let trace_stride = flat.stride.unwrap_or(match experiment {
            CaseStudy => 100,
            Counterexample => 1,
            Synthetic | Custom => 10,
        });
        if trace_stride == 0 {
            return Err(Error::config("stride", "must be positive"));
        }

        let init = match experiment {
            Counterexample => {
                let x0 = flat.x0.unwrap_or(10.0);
                if x0 == 0.0 {
                    return Err(Error::config("x0", "x0 = 0 is a stationary point"));
                }
                if flat.y0.is_some() || flat.init_offset.is_some_and(|o| o != 0.0) {
                    return Err(Error::config("y0", "the counterexample starts on its invariant line"));
                }
                let ce = make_counterexample(alpha, beta).map_err(|e| Error::config("alpha", e.to_string()))?;
                Init::uniform(vec![x0], vec![ce.slope * x0])
            }
            _ => {
                let (x0, y0, off) = match experiment {
                    CaseStudy => (1.0, 1.0, 0.005),
                    _ => (0.0, 0.0, 0.0),
                };
                let x0 = flat.x0.unwrap_or(x0);
                let y0 = flat.y0.unwrap_or(y0);
                let off = flat.init_offset.unwrap_or(off);
                if off == 0.0 {
                    Init::uniform(vec![x0; p], vec![y0; d])
                } else {
                    Init::PerNode {
                        x: (0..n).map(|i| vec![x0 + spread(off, i, n); p]).collect(),
                        y: (0..n).map(|i| vec![y0 - spread(off, i, n); d]).collect(),
                    }
                }
            }
        };

        let algos = flat.algos.clone().unwrap_or_else(|| match experiment {
            Counterexample => vec![Algorithm::DTiada, Algorithm::DAdast],
            _ => vec![Algorithm::DSgda, Algorithm::DTiada, Algorithm::DAdast],
        });
        if algos.is_empty() {
            return Err(Error::config("algos", "no algorithm given"));
        }
        let c0 = flat.c0.unwrap_or(if experiment == Counterexample { 0.0 } else { AlgoConfig::DEFAULT_C0 });
        let algo_configs: Vec<AlgoConfig> = algos
            .iter()
            .map(|&a| AlgoConfig {
                algo: a,
                gamma_x,
                gamma_y,
                alpha,
                beta,
                c0,
                projection: projection.clone(),
                iterations,
                order: flat.order.unwrap_or(UpdateOrder::LocalThenMix),
            })
            .collect();
        for ac in &algo_configs {
            ac.validate(d).map_err(|e| {
                let key = if e.to_string().contains("beta") {
                    "alpha"
                } else if e.to_string().contains("c0") {
                    "c0"
                } else {
                    "gamma_x"
                };
                Error::config(key, e.to_string())
            })?;
        }

        Ok(RunConfig {
            experiment,
            problem,
            topology,
            algo_configs,
            noise,
            seed: flat.seed.unwrap_or(0),
            iterations,
            trace_stride,
            init,
            out_dir: flat.out_dir.clone().unwrap_or_else(|| PathBuf::from("out")),
        })
    }

    pub fn build_problem(&self) -> Result<QuadraticMinimaxProblem> {
        let n = self.topology.n;
        match &self.problem {
            ProblemSpec::CaseStudy => Ok(make_two_node_case_study()),
            ProblemSpec::Counterexample { alpha, beta } => Ok(make_counterexample(*alpha, *beta)?.problem),
            ProblemSpec::Synthetic { l_low, l_high } => make_synthetic(n, self.seed, *l_low, *l_high),
            ProblemSpec::Random { p, d, phi_margin } => make_random(n, *p, *d, self.seed, *phi_margin),
        }
    }

    pub fn setup(&self) -> RunSetup {
        RunSetup {
            noise: self.noise.clone(),
            seed: self.seed,
            init: self.init.clone(),
            trace_stride: self.trace_stride,
        }
    }
}

pub struct AlgoRun {
    pub config: AlgoConfig,
    pub result: std::result::Result<Trace, RunAbort>,
}

impl AlgoRun {
    /// The recorded rows, complete or partial.
    pub fn trace(&self) -> &Trace {
        match &self.result {
            Ok(t) => t,
            Err(a) => &a.partial,
        }
    }
}

pub struct Outcome {
    pub problem: QuadraticMinimaxProblem,
    pub weights: WeightMatrix,
    pub runs: Vec<AlgoRun>,
}

impl Outcome {
    /// The first numerical abort, if any.
    pub fn first_abort(&self) -> Option<(&AlgoConfig, &RunAbort)> {
        self.runs.iter().find_map(|r| r.result.as_ref().err().map(|e| (&r.config, e)))
    }
}

/// Runs `f` on a pool capped by `ADAST_THREADS` (unset or 0: all cores).
pub fn with_thread_pool<R: Send>(f: impl FnOnce() -> R + Send) -> Result<R> {
    let threads = match std::env::var("ADAST_THREADS") {
        Ok(s) if !s.trim().is_empty() => s
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::config("ADAST_THREADS", format!("expected a thread count, got `{s}`")))?,
        _ => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::config("ADAST_THREADS", e.to_string()))?;
    Ok(pool.install(f))
}

/// Builds the instance and network and runs every algorithm.
pub fn execute(cfg: &RunConfig) -> Result<Outcome> {
    execute_with_problem(cfg, cfg.build_problem()?)
}

/// As [`execute`] with a given instance, e.g. one read back from a manifest.
pub fn execute_with_problem(cfg: &RunConfig, problem: QuadraticMinimaxProblem) -> Result<Outcome> {
    let weights = weights_for(&cfg.topology)?;
    if problem.n() != weights.n() {
        return Err(Error::config(
            "n",
            format!("instance has {} nodes but the topology {}", problem.n(), weights.n()),
        ));
    }
    let setup = cfg.setup();
    let runs = with_thread_pool(|| {
        cfg.algo_configs
            .par_iter()
            .map(|ac| AlgoRun { config: ac.clone(), result: run(&problem, &weights, ac, &setup) })
            .collect::<Vec<_>>()
    })?;
    // configuration problems surface as errors, not as aborted runs
    for r in &runs {
        if let Err(abort) = &r.result {
            if exit_code(&abort.source) == EXIT_CONFIG {
                return Err(Error::config("algos", abort.source.to_string()));
            }
        }
    }
    Ok(Outcome { problem, weights, runs })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(pairs: &[(&str, &str)]) -> FlatConfig {
        let mut f = FlatConfig::default();
        for (k, v) in pairs {
            f.set_str(k, v).unwrap();
        }
        f
    }

    fn key_of(e: Error) -> String {
        match e {
            Error::Config { key, .. } => key,
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn case_study_defaults() {
        let c = RunConfig::resolve(&flat(&[("experiment", "case-study")])).unwrap();
        assert_eq!(c.topology.n, 2);
        assert_eq!(c.iterations, 100_000);
        assert_eq!(c.noise, NoiseModel::None);
        assert_eq!(c.algo_configs.len(), 3);
        match &c.init {
            Init::PerNode { x, y } => {
                assert_eq!(x, &vec![vec![1.005], vec![0.995]]);
                assert_eq!(y, &vec![vec![0.995], vec![1.005]]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn synthetic_requires_n() {
        assert_eq!(key_of(RunConfig::resolve(&flat(&[("experiment", "synthetic")])).unwrap_err()), "n");
        let c = RunConfig::resolve(&flat(&[("experiment", "synthetic"), ("n", "50")])).unwrap();
        assert_eq!(c.topology.kind, GraphKind::Exponential);
        assert_eq!(c.noise, NoiseModel::Gaussian { sigma: 0.1f64.sqrt() });
    }

    #[test]
    fn counterexample_constraints() {
        let c = RunConfig::resolve(&flat(&[("experiment", "counterexample")])).unwrap();
        assert_eq!(c.topology, GraphSpec::new(3, GraphKind::Complete));
        assert!(c.algo_configs.iter().all(|a| a.c0 == 0.0));
        for (k, v) in [("n", "4"), ("topology", "ring"), ("noise", "gaussian"), ("x0", "0"), ("alpha", "0.45")] {
            let e = RunConfig::resolve(&flat(&[("experiment", "counterexample"), (k, v)])).unwrap_err();
            assert_eq!(key_of(e), k);
        }
    }

    #[test]
    fn run_rejects_lists_and_bad_exponents() {
        let e = RunConfig::resolve(&flat(&[("experiment", "case-study"), ("gamma-x", "0.1,0.2")])).unwrap_err();
        assert_eq!(key_of(e), "gamma_x");
        let e = RunConfig::resolve(&flat(&[("experiment", "case-study"), ("alpha", "0.3")])).unwrap_err();
        assert_eq!(key_of(e), "alpha");
    }

    #[test]
    fn custom_topology_edges() {
        let c = RunConfig::resolve(&flat(&[
            ("experiment", "custom"),
            ("n", "3"),
            ("topology", "custom"),
            ("edges", "0-1,1-2"),
        ]))
        .unwrap();
        assert_eq!(c.topology.kind, GraphKind::Custom(vec![(0, 1), (1, 2)]));
        let e = RunConfig::resolve(&flat(&[("experiment", "custom"), ("n", "3"), ("edges", "0-1")])).unwrap_err();
        assert_eq!(key_of(e), "edges");
    }

    #[test]
    fn execute_runs_every_algorithm() {
        let c = RunConfig::resolve(&flat(&[("experiment", "custom"), ("n", "4"), ("K", "50")])).unwrap();
        let out = execute(&c).unwrap();
        assert_eq!(out.runs.len(), 3);
        assert!(out.first_abort().is_none());
        assert_eq!(out.runs[0].trace().last().unwrap().k, 50);
    }
}
