//! Per-iteration evaluation quantities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::{ProjectionSet, QuadraticMinimaxProblem};

/// One row of a run trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    /// `||grad Phi(xbar)||^2`; `None` when the dual domain is constrained.
    pub grad_phi_sq: Option<f64>,
    /// `||grad_x f(xbar, ybar)||^2`.
    pub grad_xf_sq: f64,
    pub consensus_x: f64,
    pub consensus_y: f64,
    pub zeta_v_inst: f64,
    pub zeta_v_sup: f64,
    pub zeta_u_inst: f64,
    pub zeta_u_sup: f64,
    /// Within-node coordinate inconsistency; zero for scalar stepsizes.
    pub zeta_v_hat_inst: f64,
    pub zeta_u_hat_inst: f64,
    /// Mean of the primal accumulators over nodes (and coordinates).
    pub avg_m_x: f64,
    pub avg_m_y: f64,
    /// `c0` plus the network-mean running sum of squared primal gradients.
    pub ref_m_x: f64,
    pub ref_m_y: f64,
    pub xbar: Vec<f64>,
    pub ybar: Vec<f64>,
}

pub fn grad_phi_sq(problem: &QuadraticMinimaxProblem, xbar: &[f64], set: &ProjectionSet) -> Option<f64> {
    problem.grad_phi(xbar, set).ok().map(|g| sq_norm(&g))
}

pub(crate) fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum()
}

/// `max_j (v_j^{-e} - vbar^{-e})^2 / vbar^{-2e}` with `vbar` the mean of all
/// entries. Entries are per-node (scalar stepsizes) or per node and
/// coordinate, flattened.
pub fn inconsistency(precond: &[f64], exponent: f64) -> f64 {
    if precond.is_empty() {
        return 0.0;
    }
    let mean = precond.iter().sum::<f64>() / precond.len() as f64;
    let base = mean.powf(-exponent);
    precond
        .iter()
        .map(|v| {
            let r = (v.powf(-exponent) - base) / base;
            r * r
        })
        .fold(0.0, f64::max)
}

pub fn inconsistency_v(v: &[f64], alpha: f64) -> f64 {
    inconsistency(v, alpha)
}

pub fn inconsistency_u(u: &[f64], beta: f64) -> f64 {
    inconsistency(u, beta)
}

/// `||V^{-e} - (V J_q)^{-e}||^2 / (n q vbar^{-2e})`: deviation of each
/// coordinate's stepsize from the one given by its node's mean accumulator.
/// `precond` is row-major `n x q`.
pub fn inconsistency_hat(precond: &[f64], q: usize, exponent: f64) -> f64 {
    if precond.is_empty() || q == 0 {
        return 0.0;
    }
    let total = precond.len() as f64;
    let mean = precond.iter().sum::<f64>() / total;
    let base = mean.powf(-exponent);
    let mut acc = 0.0;
    for row in precond.chunks(q) {
        let row_mean = row.iter().sum::<f64>() / q as f64;
        let row_step = row_mean.powf(-exponent);
        for v in row {
            let dlt = v.powf(-exponent) - row_step;
            acc += dlt * dlt;
        }
    }
    acc / (total * base * base)
}

/// Column means of a row-major `n x q` stack.
pub fn node_mean(stack: &[f64], q: usize) -> Vec<f64> {
    let n = stack.len() / q;
    let mut m = vec![0.0; q];
    for row in stack.chunks(q) {
        for (a, v) in m.iter_mut().zip(row) {
            *a += v;
        }
    }
    m.iter_mut().for_each(|a| *a /= n as f64);
    m
}

/// `||X - 1 xbar^T||_F^2` of a row-major `n x q` stack.
pub fn consensus_sq(stack: &[f64], q: usize) -> f64 {
    let mean = node_mean(stack, q);
    stack
        .chunks(q)
        .map(|row| row.iter().zip(&mean).map(|(v, m)| (v - m) * (v - m)).sum::<f64>())
        .sum()
}

/// Consensus errors of the primal and dual stacks.
pub fn consensus_error(xs: &[f64], p: usize, ys: &[f64], d: usize) -> (f64, f64) {
    (consensus_sq(xs, p), consensus_sq(ys, d))
}

/// A line `a x + b y = c` in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Line {
    /// `3y = 5x + 2`, the stationary set of the two-node case study.
    pub const CASE_STUDY: Line = Line { a: -5.0, b: 3.0, c: 2.0 };
}

pub fn distance_to_line(xbar: f64, ybar: f64, line: Line) -> Result<f64> {
    let norm = line.a.hypot(line.b);
    if !(norm > 0.0) {
        return Err(Error::InvalidParameter("line needs (a, b) != (0, 0)".into()));
    }
    Ok((line.a * xbar + line.b * ybar - line.c).abs() / norm)
}
