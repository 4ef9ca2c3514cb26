//! Decentralized gradient-descent-ascent steppers and the run loop.
//!
//! All four methods share one iteration skeleton: every node samples a
//! stochastic gradient at its current iterate, takes a local step, and the
//! network performs one gossip round through `W`, after which the dual
//! iterate is projected. They differ in the local stepsize:
//!
//! * `DSgda`: constant `gamma_x`, `gamma_y`.
//! * `DTiada`: each node keeps its own accumulated squared gradient norms
//!   `m_x`, `m_y` and steps with `gamma_x max(m_x, m_y)^-alpha` and
//!   `gamma_y m_y^-beta`. Accumulators never leave the node.
//! * `DAdast`: same stepsize rule, but `m_x`, `m_y` are gossiped together
//!   with the iterates, so every node tracks the network-wide accumulation.
//! * `DAdastCoordinate`: per-coordinate accumulators with a norm-based ratio.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::metrics::{self, TraceRecord};
use crate::problems::{NoiseModel, ProjectionSet, QuadraticMinimaxProblem};
use crate::topology::WeightMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    DSgda,
    DTiada,
    DAdast,
    DAdastCoordinate,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] =
        [Algorithm::DSgda, Algorithm::DTiada, Algorithm::DAdast, Algorithm::DAdastCoordinate];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::DSgda => "d-sgda",
            Algorithm::DTiada => "d-tiada",
            Algorithm::DAdast => "d-adast",
            Algorithm::DAdastCoordinate => "d-adast-coord",
        }
    }

    pub fn is_adaptive(self) -> bool {
        !matches!(self, Algorithm::DSgda)
    }

    /// Whether accumulators are gossiped.
    pub fn tracks_stepsizes(self) -> bool {
        matches!(self, Algorithm::DAdast | Algorithm::DAdastCoordinate)
    }

    pub fn is_coordinate_wise(self) -> bool {
        matches!(self, Algorithm::DAdastCoordinate)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "d-sgda" | "dsgda" | "sgda" => Ok(Algorithm::DSgda),
            "d-tiada" | "dtiada" | "tiada" => Ok(Algorithm::DTiada),
            "d-adast" | "dadast" | "adast" => Ok(Algorithm::DAdast),
            "d-adast-coord" | "d-adast-coordinate" | "dadast-coord" | "adast-coord" => {
                Ok(Algorithm::DAdastCoordinate)
            }
            other => Err(Error::InvalidParameter(format!("unknown algorithm `{other}`"))),
        }
    }
}

/// Where the stepsize-tracking gossip happens relative to the local step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateOrder {
    /// Local accumulate, local step with the pre-gossip accumulators, then a
    /// single gossip round carrying `m_x, m_y, x, y`.
    #[default]
    LocalThenMix,
    /// Gossip `m + h` first and step with the mixed accumulators, then
    /// gossip the iterates: two communication rounds per iteration.
    MixAccumulatorsFirst,
}

impl FromStr for UpdateOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "local-then-mix" | "algorithm" | "pseudo-code" => Ok(UpdateOrder::LocalThenMix),
            "mix-accumulators-first" | "compact" => Ok(UpdateOrder::MixAccumulatorsFirst),
            other => Err(Error::InvalidParameter(format!("unknown update order `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgoConfig {
    pub algo: Algorithm,
    pub gamma_x: f64,
    pub gamma_y: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Initial accumulator buffer.
    pub c0: f64,
    pub projection: ProjectionSet,
    pub iterations: usize,
    #[serde(default)]
    pub order: UpdateOrder,
}

impl AlgoConfig {
    pub const DEFAULT_C0: f64 = 1e-6;

    pub fn new(algo: Algorithm) -> Self {
        Self {
            algo,
            gamma_x: 0.1,
            gamma_y: 0.1,
            alpha: 0.6,
            beta: 0.4,
            c0: Self::DEFAULT_C0,
            projection: ProjectionSet::All,
            iterations: 1000,
            order: UpdateOrder::LocalThenMix,
        }
    }

    pub fn with_stepsizes(mut self, gamma_x: f64, gamma_y: f64) -> Self {
        self.gamma_x = gamma_x;
        self.gamma_y = gamma_y;
        self
    }

    pub fn with_exponents(mut self, alpha: f64, beta: f64) -> Self {
        self.alpha = alpha;
        self.beta = beta;
        self
    }

    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn with_c0(mut self, c0: f64) -> Self {
        self.c0 = c0;
        self
    }

    pub fn with_order(mut self, order: UpdateOrder) -> Self {
        self.order = order;
        self
    }

    pub fn with_projection(mut self, projection: ProjectionSet) -> Self {
        self.projection = projection;
        self
    }

    pub fn with_algo(mut self, algo: Algorithm) -> Self {
        self.algo = algo;
        self
    }

    /// `c0 = 0` is accepted: it reproduces accumulators without a buffer,
    /// and a node whose first gradient vanishes then trips the non-finite
    /// guard.
    pub fn validate(&self, d: usize) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.gamma_x) || !pos(self.gamma_y) {
            return Err(Error::InvalidParameter(format!(
                "stepsizes must be positive, got gamma_x = {}, gamma_y = {}",
                self.gamma_x, self.gamma_y
            )));
        }
        if self.algo.is_adaptive() && !(0.0 < self.beta && self.beta < self.alpha && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "adaptive methods need 0 < beta < alpha < 1, got alpha = {}, beta = {}",
                self.alpha, self.beta
            )));
        }
        if !(self.c0 >= 0.0 && self.c0.is_finite()) {
            return Err(Error::InvalidParameter(format!("c0 must be >= 0, got {}", self.c0)));
        }
        self.projection.validate(Some(d))
    }

    /// Length of a node's primal and dual accumulators.
    fn accumulator_dims(&self, p: usize, d: usize) -> (usize, usize) {
        if self.algo.is_coordinate_wise() {
            (p, d)
        } else {
            (1, 1)
        }
    }
}

/// One node's iterates and accumulators. Accumulators have length 1 for
/// scalar stepsizes and length `p` / `d` for coordinate-wise ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub m_x: Vec<f64>,
    pub m_y: Vec<f64>,
}

/// Starting iterates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Init {
    /// Every node starts at the same point.
    Uniform { x: Vec<f64>, y: Vec<f64> },
    PerNode { x: Vec<Vec<f64>>, y: Vec<Vec<f64>> },
}

impl Init {
    pub fn uniform(x: Vec<f64>, y: Vec<f64>) -> Self {
        Init::Uniform { x, y }
    }

    fn node(&self, i: usize) -> (&[f64], &[f64]) {
        match self {
            Init::Uniform { x, y } => (x, y),
            Init::PerNode { x, y } => (&x[i], &y[i]),
        }
    }

    fn check(&self, n: usize, p: usize, d: usize) -> Result<()> {
        if let Init::PerNode { x, y } = self {
            if x.len() != n || y.len() != n {
                return Err(Error::Dimension(format!(
                    "per-node init has {} / {} entries, expected {n}",
                    x.len(),
                    y.len()
                )));
            }
        }
        let count = match self {
            Init::Uniform { .. } => 1,
            Init::PerNode { .. } => n,
        };
        for i in 0..count {
            let (x, y) = self.node(i);
            if x.len() != p || y.len() != d {
                return Err(Error::Dimension(format!(
                    "initial point of node {i} has shape ({}, {}), expected ({p}, {d})",
                    x.len(),
                    y.len()
                )));
            }
        }
        Ok(())
    }

    /// The node-averaged starting point.
    pub fn mean(&self, n: usize) -> (Vec<f64>, Vec<f64>) {
        match self {
            Init::Uniform { x, y } => (x.clone(), y.clone()),
            Init::PerNode { x, y } => {
                let avg = |rows: &[Vec<f64>]| {
                    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                    metrics::node_mean(&flat, rows[0].len())
                };
                debug_assert_eq!(x.len(), n);
                (avg(x), avg(y))
            }
        }
    }
}

/// Preconditioners behind the stepsizes applied in the latest step:
/// the primal stepsize of entry `j` is `gamma_x * v[j]^-alpha` and the dual
/// one `gamma_y * u[j]^-beta`. Row-major `n x q`.
#[derive(Debug, Clone, PartialEq)]
pub struct AppliedStepsizes {
    pub v: Vec<f64>,
    pub u: Vec<f64>,
    pub q_v: usize,
    pub q_u: usize,
}

#[derive(Debug, Clone, Default)]
struct Scratch {
    gx: Vec<f64>,
    gy: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
    m_x: Vec<f64>,
    m_y: Vec<f64>,
}

/// The mutable state of a simulation: row-major stacks of all nodes.
#[derive(Debug, Clone)]
pub struct RunState {
    n: usize,
    p: usize,
    d: usize,
    qx: usize,
    qy: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    m_x: Vec<f64>,
    m_y: Vec<f64>,
    k: usize,
    /// Sum over iterations and nodes of squared stochastic gradient norms.
    grad_sq_x: f64,
    grad_sq_y: f64,
    applied: Option<AppliedStepsizes>,
    scratch: Scratch,
}

impl RunState {
    pub fn new(problem: &QuadraticMinimaxProblem, cfg: &AlgoConfig, init: &Init) -> Result<Self> {
        let (n, p, d) = (problem.n(), problem.p(), problem.d());
        init.check(n, p, d)?;
        let (qx, qy) = cfg.accumulator_dims(p, d);
        let mut x = Vec::with_capacity(n * p);
        let mut y = Vec::with_capacity(n * d);
        for i in 0..n {
            let (xi, yi) = init.node(i);
            x.extend_from_slice(xi);
            y.extend_from_slice(yi);
        }
        Ok(Self {
            n,
            p,
            d,
            qx,
            qy,
            x,
            y,
            m_x: vec![cfg.c0; n * qx],
            m_y: vec![cfg.c0; n * qy],
            k: 0,
            grad_sq_x: 0.0,
            grad_sq_y: 0.0,
            applied: None,
            scratch: Scratch::default(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Completed iterations.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn node(&self, i: usize) -> NodeState {
        NodeState {
            x: self.x[i * self.p..(i + 1) * self.p].to_vec(),
            y: self.y[i * self.d..(i + 1) * self.d].to_vec(),
            m_x: self.m_x[i * self.qx..(i + 1) * self.qx].to_vec(),
            m_y: self.m_y[i * self.qy..(i + 1) * self.qy].to_vec(),
        }
    }

    pub fn nodes(&self) -> Vec<NodeState> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Row-major `n x p` primal stack.
    pub fn xs(&self) -> &[f64] {
        &self.x
    }

    pub fn ys(&self) -> &[f64] {
        &self.y
    }

    pub fn m_xs(&self) -> &[f64] {
        &self.m_x
    }

    pub fn m_ys(&self) -> &[f64] {
        &self.m_y
    }

    pub fn xbar(&self) -> Vec<f64> {
        metrics::node_mean(&self.x, self.p)
    }

    pub fn ybar(&self) -> Vec<f64> {
        metrics::node_mean(&self.y, self.d)
    }

    pub fn applied(&self) -> Option<&AppliedStepsizes> {
        self.applied.as_ref()
    }

    /// `c0 + (1 / (n q)) * sum of squared primal gradient norms so far`:
    /// the value the node-averaged primal accumulator must equal.
    pub fn reference_m_x(&self, c0: f64) -> f64 {
        c0 + self.grad_sq_x / (self.n * self.qx) as f64
    }

    pub fn reference_m_y(&self, c0: f64) -> f64 {
        c0 + self.grad_sq_y / (self.n * self.qy) as f64
    }

    fn check_finite(&self) -> Result<()> {
        let fields: [(&str, &[f64], usize); 4] = [
            ("x", &self.x, self.p),
            ("y", &self.y, self.d),
            ("m_x", &self.m_x, self.qx),
            ("m_y", &self.m_y, self.qy),
        ];
        for (name, data, q) in fields {
            if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    k: self.k,
                    node: pos / q,
                    what: format!("{name} = {}", data[pos]),
                });
            }
        }
        Ok(())
    }
}

/// `a / max(a, b)`, exactly 1 on ties.
fn ratio(a: f64, b: f64) -> f64 {
    if a >= b {
        1.0
    } else {
        a / b
    }
}

fn sample_all(
    state: &mut RunState,
    problem: &QuadraticMinimaxProblem,
    noise: &NoiseModel,
    seed: u64,
) {
    let (n, p, d) = (state.n, state.p, state.d);
    let s = &mut state.scratch;
    s.gx.resize(n * p, 0.0);
    s.gy.resize(n * d, 0.0);
    for i in 0..n {
        problem.sample_grad_into(
            i,
            &state.x[i * p..(i + 1) * p],
            &state.y[i * d..(i + 1) * d],
            noise,
            seed,
            state.k as u64,
            &mut s.gx[i * p..(i + 1) * p],
            &mut s.gy[i * d..(i + 1) * d],
        );
    }
    state.grad_sq_x += metrics::sq_norm(&s.gx);
    state.grad_sq_y += metrics::sq_norm(&s.gy);
}

/// Gossip the local iterates in scratch into the state and project.
fn mix_iterates(state: &mut RunState, w: &WeightMatrix, set: &ProjectionSet) {
    let (p, d) = (state.p, state.d);
    w.mix_into(&state.scratch.x, p, &mut state.x);
    w.mix_into(&state.scratch.y, d, &mut state.y);
    if !set.is_all() {
        for yi in state.y.chunks_mut(d) {
            set.project_in_place(yi);
        }
    }
}

fn check_inputs(
    state: &RunState,
    problem: &QuadraticMinimaxProblem,
    w: &WeightMatrix,
    cfg: &AlgoConfig,
    expected: &[Algorithm],
) -> Result<()> {
    if !expected.contains(&cfg.algo) {
        return Err(Error::InvalidParameter(format!("stepper does not implement {}", cfg.algo)));
    }
    if w.n() != state.n || problem.n() != state.n {
        return Err(Error::Dimension(format!(
            "state has {} nodes, problem {}, weight matrix {}",
            state.n,
            problem.n(),
            w.n()
        )));
    }
    let (qx, qy) = cfg.accumulator_dims(state.p, state.d);
    if (qx, qy) != (state.qx, state.qy) {
        return Err(Error::Dimension("accumulator shape does not match the algorithm".into()));
    }
    Ok(())
}

/// Constant-stepsize decentralized stochastic GDA.
pub fn step_dsgda(
    state: &mut RunState,
    problem: &QuadraticMinimaxProblem,
    w: &WeightMatrix,
    cfg: &AlgoConfig,
    noise: &NoiseModel,
    seed: u64,
) -> Result<()> {
    check_inputs(state, problem, w, cfg, &[Algorithm::DSgda])?;
    sample_all(state, problem, noise, seed);
    let s = &mut state.scratch;
    s.x.clear();
    s.x.extend(state.x.iter().zip(&s.gx).map(|(x, g)| x - cfg.gamma_x * g));
    s.y.clear();
    s.y.extend(state.y.iter().zip(&s.gy).map(|(y, g)| y + cfg.gamma_y * g));
    mix_iterates(state, w, &cfg.projection);
    state.applied = None;
    state.k += 1;
    state.check_finite()
}

/// Scalar-accumulator local step shared by D-TiAda and D-AdaST: given each
/// node's accumulators `m` (already including this iteration's gradient),
/// writes the local iterates into scratch and records the stepsizes.
fn scalar_local_step(state: &mut RunState, cfg: &AlgoConfig, m_x: &[f64], m_y: &[f64]) {
    let (n, p, d) = (state.n, state.p, state.d);
    let s = &mut state.scratch;
    s.x.resize(n * p, 0.0);
    s.y.resize(n * d, 0.0);
    let mut v = Vec::with_capacity(n);
    let mut u = Vec::with_capacity(n);
    for i in 0..n {
        let (mx, my) = (m_x[i], m_y[i]);
        let mx_a = mx.powf(cfg.alpha);
        let psi = ratio(mx_a, my.powf(cfg.alpha));
        let sx = cfg.gamma_x * psi / mx_a;
        let sy = cfg.gamma_y * my.powf(-cfg.beta);
        for j in i * p..(i + 1) * p {
            s.x[j] = state.x[j] - sx * s.gx[j];
        }
        for j in i * d..(i + 1) * d {
            s.y[j] = state.y[j] + sy * s.gy[j];
        }
        v.push(mx.max(my));
        u.push(my);
    }
    state.applied = Some(AppliedStepsizes { v, u, q_v: 1, q_u: 1 });
}

fn accumulate_scalar(state: &mut RunState) {
    let (p, d) = (state.p, state.d);
    let s = &mut state.scratch;
    s.m_x.clear();
    s.m_x.extend(state.m_x.iter().zip(s.gx.chunks(p)).map(|(m, g)| m + metrics::sq_norm(g)));
    s.m_y.clear();
    s.m_y.extend(state.m_y.iter().zip(s.gy.chunks(d)).map(|(m, g)| m + metrics::sq_norm(g)));
}

/// Decentralized TiAda: local accumulators, never communicated.
pub fn step_dtiada(
    state: &mut RunState,
    problem: &QuadraticMinimaxProblem,
    w: &WeightMatrix,
    cfg: &AlgoConfig,
    noise: &NoiseModel,
    seed: u64,
) -> Result<()> {
    check_inputs(state, problem, w, cfg, &[Algorithm::DTiada])?;
    sample_all(state, problem, noise, seed);
    accumulate_scalar(state);
    let (mx, my) = (std::mem::take(&mut state.scratch.m_x), std::mem::take(&mut state.scratch.m_y));
    scalar_local_step(state, cfg, &mx, &my);
    state.m_x.copy_from_slice(&mx);
    state.m_y.copy_from_slice(&my);
    state.scratch.m_x = mx;
    state.scratch.m_y = my;
    mix_iterates(state, w, &cfg.projection);
    state.k += 1;
    state.check_finite()
}

/// D-AdaST with scalar stepsizes: accumulators are gossiped with the iterates.
pub fn step_dadast(
    state: &mut RunState,
    problem: &QuadraticMinimaxProblem,
    w: &WeightMatrix,
    cfg: &AlgoConfig,
    noise: &NoiseModel,
    seed: u64,
) -> Result<()> {
    check_inputs(state, problem, w, cfg, &[Algorithm::DAdast])?;
    sample_all(state, problem, noise, seed);
    accumulate_scalar(state);
    let (mx, my) = (std::mem::take(&mut state.scratch.m_x), std::mem::take(&mut state.scratch.m_y));
    match cfg.order {
        UpdateOrder::LocalThenMix => {
            scalar_local_step(state, cfg, &mx, &my);
            w.mix_into(&mx, 1, &mut state.m_x);
            w.mix_into(&my, 1, &mut state.m_y);
        }
        UpdateOrder::MixAccumulatorsFirst => {
            w.mix_into(&mx, 1, &mut state.m_x);
            w.mix_into(&my, 1, &mut state.m_y);
            let (mixed_x, mixed_y) = (state.m_x.clone(), state.m_y.clone());
            scalar_local_step(state, cfg, &mixed_x, &mixed_y);
        }
    }
    state.scratch.m_x = mx;
    state.scratch.m_y = my;
    mix_iterates(state, w, &cfg.projection);
    state.k += 1;
    state.check_finite()
}

fn coordinate_local_step(state: &mut RunState, cfg: &AlgoConfig, m_x: &[f64], m_y: &[f64]) {
    let (n, p, d) = (state.n, state.p, state.d);
    let s = &mut state.scratch;
    s.x.resize(n * p, 0.0);
    s.y.resize(n * d, 0.0);
    let mut v = Vec::with_capacity(n * p);
    let mut u = Vec::with_capacity(n * d);
    for i in 0..n {
        let mx = &m_x[i * p..(i + 1) * p];
        let my = &m_y[i * d..(i + 1) * d];
        let nx2 = metrics::sq_norm(mx);
        let ny2 = metrics::sq_norm(my);
        // ||m||^{2 alpha} = (||m||^2)^alpha
        let psi = ratio(nx2.powf(cfg.alpha), ny2.powf(cfg.alpha));
        let lift = if nx2 >= ny2 { 1.0 } else { ny2 / nx2 };
        for j in 0..p {
            let idx = i * p + j;
            s.x[idx] = state.x[idx] - cfg.gamma_x * psi * mx[j].powf(-cfg.alpha) * s.gx[idx];
            v.push(mx[j] * lift);
        }
        for j in 0..d {
            let idx = i * d + j;
            s.y[idx] = state.y[idx] + cfg.gamma_y * my[j].powf(-cfg.beta) * s.gy[idx];
            u.push(my[j]);
        }
    }
    state.applied = Some(AppliedStepsizes { v, u, q_v: p, q_u: d });
}

/// D-AdaST with coordinate-wise accumulators (Hadamard-squared gradients)
/// and the norm-based primal/dual ratio.
pub fn step_dadast_coordinate(
    state: &mut RunState,
    problem: &QuadraticMinimaxProblem,
    w: &WeightMatrix,
    cfg: &AlgoConfig,
    noise: &NoiseModel,
    seed: u64,
) -> Result<()> {
    check_inputs(state, problem, w, cfg, &[Algorithm::DAdastCoordinate])?;
    sample_all(state, problem, noise, seed);
    let (p, d) = (state.p, state.d);
    let mut mx: Vec<f64> = state.m_x.iter().zip(&state.scratch.gx).map(|(m, g)| m + g * g).collect();
    let mut my: Vec<f64> = state.m_y.iter().zip(&state.scratch.gy).map(|(m, g)| m + g * g).collect();
    match cfg.order {
        UpdateOrder::LocalThenMix => {
            coordinate_local_step(state, cfg, &mx, &my);
            w.mix_into(&mx, p, &mut state.m_x);
            w.mix_into(&my, d, &mut state.m_y);
        }
        UpdateOrder::MixAccumulatorsFirst => {
            w.mix_into(&mx, p, &mut state.m_x);
            w.mix_into(&my, d, &mut state.m_y);
            mx.copy_from_slice(&state.m_x);
            my.copy_from_slice(&state.m_y);
            coordinate_local_step(state, cfg, &mx, &my);
        }
    }
    mix_iterates(state, w, &cfg.projection);
    state.k += 1;
    state.check_finite()
}

/// Dispatches to the stepper for `cfg.algo`.
pub fn step(
    state: &mut RunState,
    problem: &QuadraticMinimaxProblem,
    w: &WeightMatrix,
    cfg: &AlgoConfig,
    noise: &NoiseModel,
    seed: u64,
) -> Result<()> {
    match cfg.algo {
        Algorithm::DSgda => step_dsgda(state, problem, w, cfg, noise, seed),
        Algorithm::DTiada => step_dtiada(state, problem, w, cfg, noise, seed),
        Algorithm::DAdast => step_dadast(state, problem, w, cfg, noise, seed),
        Algorithm::DAdastCoordinate => step_dadast_coordinate(state, problem, w, cfg, noise, seed),
    }
}

/// Everything a run needs besides the problem, the network and the
/// algorithm configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSetup {
    pub noise: NoiseModel,
    pub seed: u64,
    pub init: Init,
    pub trace_stride: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// A run that stopped early. `partial` holds every record emitted before
/// the failure; `source` identifies the iteration and node.
#[derive(Debug, Error)]
#[error("run aborted: {source}")]
pub struct RunAbort {
    #[source]
    pub source: Error,
    pub partial: Trace,
}

impl RunAbort {
    fn new(source: Error) -> Self {
        Self { source, partial: Trace::default() }
    }
}

/// Running suprema of the inconsistency measures across all iterations.
#[derive(Debug, Clone, Default)]
pub struct Recorder {
    zeta_v: f64,
    zeta_u: f64,
    zeta_v_hat: f64,
    zeta_u_hat: f64,
    zeta_v_sup: f64,
    zeta_u_sup: f64,
}

impl Recorder {
    /// Updates the per-iteration measures from the stepsizes just applied.
    pub fn observe(&mut self, state: &RunState, cfg: &AlgoConfig) {
        match state.applied() {
            Some(a) => {
                self.zeta_v = metrics::inconsistency_v(&a.v, cfg.alpha);
                self.zeta_u = metrics::inconsistency_u(&a.u, cfg.beta);
                self.zeta_v_hat = metrics::inconsistency_hat(&a.v, a.q_v, cfg.alpha);
                self.zeta_u_hat = metrics::inconsistency_hat(&a.u, a.q_u, cfg.beta);
            }
            None => {
                self.zeta_v = 0.0;
                self.zeta_u = 0.0;
                self.zeta_v_hat = 0.0;
                self.zeta_u_hat = 0.0;
            }
        }
        self.zeta_v_sup = self.zeta_v_sup.max(self.zeta_v);
        self.zeta_u_sup = self.zeta_u_sup.max(self.zeta_u);
    }

    pub fn record(
        &self,
        state: &RunState,
        problem: &QuadraticMinimaxProblem,
        cfg: &AlgoConfig,
    ) -> TraceRecord {
        let xbar = state.xbar();
        let ybar = state.ybar();
        let (consensus_x, consensus_y) = metrics::consensus_error(state.xs(), problem.p(), state.ys(), problem.d());
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        TraceRecord {
            k: state.k(),
            grad_phi_sq: metrics::grad_phi_sq(problem, &xbar, &cfg.projection),
            grad_xf_sq: metrics::sq_norm(&problem.mean_grad_x(&xbar, &ybar)),
            consensus_x,
            consensus_y,
            zeta_v_inst: self.zeta_v,
            zeta_v_sup: self.zeta_v_sup,
            zeta_u_inst: self.zeta_u,
            zeta_u_sup: self.zeta_u_sup,
            zeta_v_hat_inst: self.zeta_v_hat,
            zeta_u_hat_inst: self.zeta_u_hat,
            avg_m_x: mean(state.m_xs()),
            avg_m_y: mean(state.m_ys()),
            ref_m_x: state.reference_m_x(cfg.c0),
            ref_m_y: state.reference_m_y(cfg.c0),
            xbar,
            ybar,
        }
    }
}

/// Runs `cfg.iterations` steps, recording at `k = 0`, every
/// `trace_stride` iterations, and at the final iteration.
pub fn run(
    problem: &QuadraticMinimaxProblem,
    w: &WeightMatrix,
    cfg: &AlgoConfig,
    setup: &RunSetup,
) -> std::result::Result<Trace, RunAbort> {
    cfg.validate(problem.d()).map_err(RunAbort::new)?;
    setup.noise.validate().map_err(RunAbort::new)?;
    if setup.trace_stride == 0 {
        return Err(RunAbort::new(Error::InvalidParameter("trace stride must be positive".into())));
    }
    if w.n() != problem.n() {
        return Err(RunAbort::new(Error::Dimension(format!(
            "problem has {} nodes but the weight matrix {}",
            problem.n(),
            w.n()
        ))));
    }
    let mut state = RunState::new(problem, cfg, &setup.init).map_err(RunAbort::new)?;
    let mut recorder = Recorder::default();
    let mut trace = Trace::default();
    trace.records.push(recorder.record(&state, problem, cfg));

    for k in 1..=cfg.iterations {
        if let Err(source) = step(&mut state, problem, w, cfg, &setup.noise, setup.seed) {
            return Err(RunAbort { source, partial: trace });
        }
        recorder.observe(&state, cfg);
        if k % setup.trace_stride == 0 || k == cfg.iterations {
            trace.records.push(recorder.record(&state, problem, cfg));
        }
    }
    Ok(trace)
}

/// Centralized TiAda: a single node with `W = [1]`. A multi-node problem is
/// first collapsed to its averaged objective, and a per-node start to its
/// mean.
pub fn centralized_tiada(
    problem: &QuadraticMinimaxProblem,
    cfg: &AlgoConfig,
    setup: &RunSetup,
) -> std::result::Result<Trace, RunAbort> {
    let collapsed;
    let single = if problem.n() == 1 {
        problem
    } else {
        collapsed = problem.collapsed().map_err(RunAbort::new)?;
        &collapsed
    };
    let (x, y) = setup.init.mean(problem.n());
    let setup = RunSetup { init: Init::uniform(x, y), ..setup.clone() };
    let w = WeightMatrix::identity(1).map_err(RunAbort::new)?;
    let cfg = cfg.clone().with_algo(Algorithm::DTiada);
    run(single, &w, &cfg, &setup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_counterexample, make_random, make_two_node_case_study, QuadraticLocal};
    use approx::assert_relative_eq;

    fn one_node(b: f64, a: f64, c: f64, lx: f64, ly: f64) -> QuadraticMinimaxProblem {
        QuadraticMinimaxProblem::new("one", vec![QuadraticLocal::scalar(b, a, c, lx, ly)]).unwrap()
    }

    fn setup(init: Init) -> RunSetup {
        RunSetup { noise: NoiseModel::None, seed: 0, init, trace_stride: 1 }
    }

    #[test]
    fn dsgda_single_node_is_gda() {
        let pb = one_node(1.0, 2.0, 0.5, 0.3, -0.2);
        let w = WeightMatrix::identity(1).unwrap();
        let cfg = AlgoConfig::new(Algorithm::DSgda).with_stepsizes(0.1, 0.2);
        let mut st = RunState::new(&pb, &cfg, &Init::uniform(vec![1.0], vec![-1.0])).unwrap();
        let gx = pb.grad_x(0, &[1.0], &[-1.0]).unwrap()[0];
        let gy = pb.grad_y(0, &[1.0], &[-1.0]).unwrap()[0];
        step(&mut st, &pb, &w, &cfg, &NoiseModel::None, 0).unwrap();
        assert_eq!(st.xs()[0], 1.0 - 0.1 * gx);
        assert_eq!(st.ys()[0], -1.0 + 0.2 * gy);
    }

    #[test]
    fn dsgda_zero_gradient_keeps_consensual_state() {
        let pb = QuadraticMinimaxProblem::new(
            "flat",
            vec![QuadraticLocal::scalar(1.0, 0.0, 0.0, 0.0, 0.0); 3],
        )
        .unwrap();
        let w = crate::topology::weights_for(&crate::topology::GraphSpec::new(3, crate::topology::GraphKind::Ring)).unwrap();
        let cfg = AlgoConfig::new(Algorithm::DSgda);
        let mut st = RunState::new(&pb, &cfg, &Init::uniform(vec![2.0], vec![0.0])).unwrap();
        step(&mut st, &pb, &w, &cfg, &NoiseModel::None, 0).unwrap();
        for v in st.xs() {
            assert_relative_eq!(*v, 2.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn dsgda_opposite_gradients_keep_mean() {
        // node gradients in x are +1 and -1
        let pb = QuadraticMinimaxProblem::new(
            "opp",
            vec![QuadraticLocal::scalar(1.0, 0.0, 0.0, 1.0, 0.0), QuadraticLocal::scalar(1.0, 0.0, 0.0, -1.0, 0.0)],
        )
        .unwrap();
        let w = WeightMatrix::averaging(2).unwrap();
        let cfg = AlgoConfig::new(Algorithm::DSgda).with_stepsizes(0.7, 0.1);
        let mut st = RunState::new(&pb, &cfg, &Init::uniform(vec![0.4], vec![0.0])).unwrap();
        step(&mut st, &pb, &w, &cfg, &NoiseModel::None, 0).unwrap();
        assert_relative_eq!(st.xbar()[0], 0.4, epsilon = 1e-15);
    }

    #[test]
    fn dtiada_single_node_one_step() {
        // gradients at the start: gx^2 = 3, gy^2 = 8; with c0 = 1 this gives v = 9
        let pb = one_node(1.0, 0.0, 0.0, 3f64.sqrt(), 8f64.sqrt());
        let w = WeightMatrix::identity(1).unwrap();
        let cfg = AlgoConfig::new(Algorithm::DTiada).with_c0(1.0).with_stepsizes(0.5, 0.5);
        let mut st = RunState::new(&pb, &cfg, &Init::uniform(vec![0.0], vec![0.0])).unwrap();
        step(&mut st, &pb, &w, &cfg, &NoiseModel::None, 0).unwrap();
        assert_relative_eq!(st.m_xs()[0], 4.0, epsilon = 1e-15);
        assert_relative_eq!(st.m_ys()[0], 9.0, epsilon = 1e-15);
        let expect = -0.5 * 9f64.powf(-0.6) * 3f64.sqrt();
        assert_relative_eq!(st.xs()[0], expect, max_relative = 1e-14);
        assert_relative_eq!(st.applied().unwrap().v[0], 9.0, max_relative = 1e-15);
    }

    #[test]
    fn psi_form_matches_max_form() {
        for (mx, my, a) in [(4.0, 9.0, 0.6), (9.0, 4.0, 0.7), (2.0, 2.0, 0.55), (1e-3, 5e2, 0.9)] {
            let f: f64 = mx;
            let psi = ratio(f.powf(a), f64::powf(my, a));
            assert_relative_eq!(psi / f.powf(a), f.max(my).powf(-a), max_relative = 1e-14);
            assert!(psi > 0.0 && psi <= 1.0);
        }
        assert_eq!(ratio(3.0, 3.0), 1.0);
    }

    #[test]
    fn dadast_averaging_two_nodes() {
        // ||g1||^2 = 4, ||g2||^2 = 2, c0 = 1 -> mixed accumulators both 4
        let pb = QuadraticMinimaxProblem::new(
            "pair",
            vec![QuadraticLocal::scalar(1.0, 0.0, 0.0, 2.0, 0.0), QuadraticLocal::scalar(1.0, 0.0, 0.0, 2f64.sqrt(), 0.0)],
        )
        .unwrap();
        let w = WeightMatrix::averaging(2).unwrap();
        let cfg = AlgoConfig::new(Algorithm::DAdast).with_c0(1.0);
        let mut st = RunState::new(&pb, &cfg, &Init::uniform(vec![0.0], vec![0.0])).unwrap();
        step(&mut st, &pb, &w, &cfg, &NoiseModel::None, 0).unwrap();
        assert_relative_eq!(st.m_xs()[0], 4.0, epsilon = 1e-15);
        assert_relative_eq!(st.m_xs()[1], 4.0, epsilon = 1e-15);
    }

    #[test]
    fn dadast_with_averaging_matches_centralized_on_identical_nodes() {
        let l = QuadraticLocal::scalar(1.3, 0.7, -0.2, 0.5, -0.4);
        let pb = QuadraticMinimaxProblem::new("same", vec![l.clone(); 3]).unwrap();
        let single = QuadraticMinimaxProblem::new("single", vec![l]).unwrap();
        let cfg = AlgoConfig::new(Algorithm::DAdast).with_iterations(50);
        let s = setup(Init::uniform(vec![1.0], vec![1.0]));
        let t3 = run(&pb, &WeightMatrix::averaging(3).unwrap(), &cfg, &s).unwrap();
        let t1 = centralized_tiada(&single, &cfg, &s).unwrap();
        for (a, b) in t3.records.iter().zip(&t1.records) {
            assert_relative_eq!(a.xbar[0], b.xbar[0], max_relative = 1e-12);
            assert_relative_eq!(a.ybar[0], b.ybar[0], max_relative = 1e-12);
        }
    }

    #[test]
    fn dadast_tracking_conservation() {
        let pb = make_random(6, 2, 3, 5, Some(0.3)).unwrap();
        let w = crate::topology::weights_for(&crate::topology::GraphSpec::new(6, crate::topology::GraphKind::Ring)).unwrap();
        for algo in [Algorithm::DAdast, Algorithm::DAdastCoordinate] {
            let cfg = AlgoConfig::new(algo).with_iterations(300);
            let s = RunSetup {
                noise: NoiseModel::Gaussian { sigma: 0.3 },
                seed: 3,
                init: Init::uniform(vec![0.5, -0.5], vec![0.0, 0.0, 0.0]),
                trace_stride: 1,
            };
            let tr = run(&pb, &w, &cfg, &s).unwrap();
            for r in &tr.records {
                assert!((r.avg_m_x - r.ref_m_x).abs() <= 1e-12 * r.avg_m_x, "{algo} k={}", r.k);
                assert!((r.avg_m_y - r.ref_m_y).abs() <= 1e-12 * r.avg_m_y);
            }
        }
    }

    #[test]
    fn counterexample_freezes_dtiada() {
        let ce = make_counterexample(0.75, 0.25).unwrap();
        let w = WeightMatrix::averaging(3).unwrap();
        let cfg = AlgoConfig::new(Algorithm::DTiada).with_c0(0.0).with_exponents(0.75, 0.25);
        let mut st = RunState::new(&ce.problem, &cfg, &Init::uniform(vec![10.0], vec![10.0 * ce.slope])).unwrap();
        step(&mut st, &ce.problem, &w, &cfg, &NoiseModel::None, 0).unwrap();
        for i in 0..3 {
            assert_relative_eq!(st.xs()[i], 10.0, max_relative = 1e-12);
            assert_relative_eq!(st.ys()[i], 10.0 * ce.slope, max_relative = 1e-12);
        }
    }

    #[test]
    fn coordinate_scalar_case_squares_the_ratio() {
        // p = d = 1: coordinate ratio is psi^2 of the scalar one when m_x < m_y
        let pb = one_node(1.0, 0.0, 0.0, 1.0, 3.0);
        let w = WeightMatrix::identity(1).unwrap();
        let init = Init::uniform(vec![0.0], vec![0.0]);
        let base = AlgoConfig::new(Algorithm::DAdast).with_c0(1.0).with_stepsizes(1.0, 1.0);
        let mut s1 = RunState::new(&pb, &base, &init).unwrap();
        step(&mut s1, &pb, &w, &base, &NoiseModel::None, 0).unwrap();
        let coord = base.clone().with_algo(Algorithm::DAdastCoordinate);
        let mut s2 = RunState::new(&pb, &coord, &init).unwrap();
        step(&mut s2, &pb, &w, &coord, &NoiseModel::None, 0).unwrap();

        // m_x = 2, m_y = 10, alpha = 0.6
        let psi = (2f64 / 10.0).powf(0.6);
        let dx_scalar = -s1.xs()[0];
        let dx_coord = -s2.xs()[0];
        assert_relative_eq!(dx_scalar, psi * 2f64.powf(-0.6), max_relative = 1e-14);
        assert_relative_eq!(dx_coord, psi * psi * 2f64.powf(-0.6), max_relative = 1e-14);
        assert_eq!(s1.ys(), s2.ys());
    }

    #[test]
    fn coordinate_zero_gradient_leaves_accumulator() {
        // grad_x = b + A y - C x with A = 0, C = 0: coordinate 1 has b = 0
        let l = QuadraticLocal {
            dual_curvature: nalgebra::DMatrix::identity(1, 1),
            coupling: nalgebra::DMatrix::zeros(2, 1),
            primal_curvature: nalgebra::DMatrix::zeros(2, 2),
            primal_linear: nalgebra::DVector::from_vec(vec![1.5, 0.0]),
            dual_linear: nalgebra::DVector::zeros(1),
        };
        let pb = QuadraticMinimaxProblem::new("z", vec![l]).unwrap();
        let cfg = AlgoConfig::new(Algorithm::DAdastCoordinate).with_c0(0.5);
        let mut st = RunState::new(&pb, &cfg, &Init::uniform(vec![0.0, 0.0], vec![0.0])).unwrap();
        step(&mut st, &pb, &WeightMatrix::identity(1).unwrap(), &cfg, &NoiseModel::None, 0).unwrap();
        assert_eq!(st.m_xs()[1], 0.5);
        assert_eq!(st.m_xs()[0], 0.5 + 2.25);
    }

    #[test]
    fn coordinate_uniform_coordinates_reduce_to_symmetric_behaviour() {
        // identical coordinates: every coordinate follows the same path
        let l = QuadraticLocal {
            dual_curvature: nalgebra::DMatrix::identity(2, 2),
            coupling: nalgebra::DMatrix::identity(2, 2) * 0.8,
            primal_curvature: nalgebra::DMatrix::identity(2, 2) * -0.3,
            primal_linear: nalgebra::DVector::from_element(2, 0.2),
            dual_linear: nalgebra::DVector::from_element(2, -0.1),
        };
        let pb = QuadraticMinimaxProblem::new("sym", vec![l; 2]).unwrap();
        let cfg = AlgoConfig::new(Algorithm::DAdastCoordinate).with_iterations(100);
        let s = setup(Init::uniform(vec![1.0, 1.0], vec![0.5, 0.5]));
        let tr = run(&pb, &WeightMatrix::averaging(2).unwrap(), &cfg, &s).unwrap();
        for r in &tr.records {
            assert_eq!(r.xbar[0], r.xbar[1]);
            assert_eq!(r.zeta_v_inst, 0.0);
            assert_eq!(r.zeta_v_hat_inst, 0.0);
        }
    }

    #[test]
    fn run_record_counts() {
        let pb = make_two_node_case_study();
        let w = WeightMatrix::averaging(2).unwrap();
        let mut s = setup(Init::uniform(vec![1.0], vec![1.0]));
        let cfg = AlgoConfig::new(Algorithm::DAdast).with_iterations(0);
        assert_eq!(run(&pb, &w, &cfg, &s).unwrap().len(), 1);

        s.trace_stride = 10;
        let cfg = cfg.with_iterations(100);
        let ks: Vec<usize> = run(&pb, &w, &cfg, &s).unwrap().records.iter().map(|r| r.k).collect();
        assert_eq!(ks, (0..=100).step_by(10).collect::<Vec<_>>());

        let cfg = cfg.with_iterations(95);
        let ks: Vec<usize> = run(&pb, &w, &cfg, &s).unwrap().records.iter().map(|r| r.k).collect();
        assert_eq!(ks.last(), Some(&95));
        assert_eq!(ks.len(), 11);
    }

    #[test]
    fn runs_are_deterministic() {
        let pb = make_random(4, 2, 2, 8, Some(0.2)).unwrap();
        let w = WeightMatrix::averaging(4).unwrap();
        let cfg = AlgoConfig::new(Algorithm::DAdast).with_iterations(200);
        let s = RunSetup {
            noise: NoiseModel::Gaussian { sigma: 0.5 },
            seed: 42,
            init: Init::uniform(vec![0.0, 0.0], vec![0.0, 0.0]),
            trace_stride: 7,
        };
        assert_eq!(run(&pb, &w, &cfg, &s).unwrap(), run(&pb, &w, &cfg, &s).unwrap());
    }

    #[test]
    fn non_finite_iterates_abort_with_partial_trace() {
        // GDA with huge stepsizes on an unstable instance overflows
        let pb = make_two_node_case_study();
        let w = WeightMatrix::averaging(2).unwrap();
        let cfg = AlgoConfig::new(Algorithm::DSgda).with_stepsizes(50.0, 50.0).with_iterations(10_000);
        let err = run(&pb, &w, &cfg, &setup(Init::uniform(vec![1.0], vec![1.0]))).unwrap_err();
        assert!(matches!(err.source, Error::NonFinite { .. }));
        assert!(!err.partial.is_empty());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let pb = make_two_node_case_study();
        let w = WeightMatrix::averaging(2).unwrap();
        let s = setup(Init::uniform(vec![1.0], vec![1.0]));
        for cfg in [
            AlgoConfig::new(Algorithm::DAdast).with_exponents(0.4, 0.6),
            AlgoConfig::new(Algorithm::DTiada).with_stepsizes(0.0, 0.1),
            AlgoConfig::new(Algorithm::DTiada).with_c0(-1.0),
        ] {
            assert!(matches!(run(&pb, &w, &cfg, &s).unwrap_err().source, Error::InvalidParameter(_)));
        }
        let cfg = AlgoConfig::new(Algorithm::DSgda).with_exponents(0.4, 0.6);
        assert!(run(&pb, &w, &cfg, &s).is_ok());
    }

    #[test]
    fn projection_applied_after_mixing() {
        let pb = make_two_node_case_study();
        let w = WeightMatrix::averaging(2).unwrap();
        let cfg = AlgoConfig::new(Algorithm::DAdast)
            .with_projection(ProjectionSet::Box { lo: vec![-0.1], hi: vec![0.1] })
            .with_iterations(20);
        let tr = run(&pb, &w, &cfg, &setup(Init::uniform(vec![1.0], vec![0.0]))).unwrap();
        for r in &tr.records {
            assert!(r.ybar[0].abs() <= 0.1 + 1e-15);
            assert!(r.grad_phi_sq.is_none());
        }
    }
}
