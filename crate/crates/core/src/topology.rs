//! Communication graphs and gossip weight matrices.
//!
//! A [`GraphSpec`] names a topology; [`build_graph`] expands it into
//! adjacency lists, and [`metropolis_weights`] / [`uniform_out_weights`]
//! turn those into a doubly-stochastic [`WeightMatrix`]. The connectivity
//! constant `rho_w = ||W - J||_2^2` is computed by power iteration.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when checking that a built matrix is doubly stochastic.
pub const STOCHASTIC_TOL: f64 = 1e-12;

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 100_000;
/// Largest size at which a stalled power iteration falls back to a full SVD.
const SVD_FALLBACK_MAX_N: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphKind {
    Ring,
    DirectedRing,
    Exponential,
    Dense,
    Complete,
    /// Undirected links given as node pairs.
    Custom(Vec<(usize, usize)>),
}

impl GraphKind {
    pub fn is_directed(&self) -> bool {
        matches!(self, GraphKind::DirectedRing | GraphKind::Exponential)
    }

    pub fn name(&self) -> &'static str {
        match self {
            GraphKind::Ring => "ring",
            GraphKind::DirectedRing => "directed-ring",
            GraphKind::Exponential => "exponential",
            GraphKind::Dense => "dense",
            GraphKind::Complete => "complete",
            GraphKind::Custom(_) => "custom",
        }
    }
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GraphKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "ring" => Ok(GraphKind::Ring),
            "directed-ring" | "dring" => Ok(GraphKind::DirectedRing),
            "exponential" | "exp" => Ok(GraphKind::Exponential),
            "dense" => Ok(GraphKind::Dense),
            "complete" | "fc" | "full" => Ok(GraphKind::Complete),
            // edges are supplied separately
            "custom" => Ok(GraphKind::Custom(Vec::new())),
            other => Err(Error::InvalidSpec(format!("unknown topology `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub n: usize,
    pub kind: GraphKind,
}

impl GraphSpec {
    pub fn new(n: usize, kind: GraphKind) -> Self {
        Self { n, kind }
    }
}

/// Out-neighbour lists. Self-loops are never stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    out: Vec<Vec<usize>>,
    directed: bool,
}

impl Graph {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn out_neighbors(&self, i: usize) -> &[usize] {
        &self.out[i]
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.out[i].len()
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for nbrs in &self.out {
            for &j in nbrs {
                deg[j] += 1;
            }
        }
        deg
    }

    /// Whether every node is reachable from node 0 when edge directions are
    /// ignored. Returns the first unreachable node otherwise.
    fn first_unreached(&self) -> Option<usize> {
        let mut undirected: Vec<Vec<usize>> = self.out.clone();
        for (i, nbrs) in self.out.iter().enumerate() {
            for &j in nbrs {
                undirected[j].push(i);
            }
        }
        first_unreached(&undirected)
    }

    fn from_sets(n: usize, sets: Vec<BTreeSet<usize>>, directed: bool) -> Self {
        let out = sets.into_iter().map(|s| s.into_iter().collect()).collect();
        Graph { n, out, directed }
    }
}

fn first_unreached(adj: &[Vec<usize>]) -> Option<usize> {
    let n = adj.len();
    if n == 0 {
        return None;
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(i) = queue.pop_front() {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    seen.iter().position(|s| !s)
}

/// Offsets used by the exponential graph: `2^0, 2^1, ..., 2^floor(log2(n-1))`.
pub fn exponential_offsets(n: usize) -> Vec<usize> {
    if n < 2 {
        return Vec::new();
    }
    let mut offs = Vec::new();
    let mut s = 1usize;
    while s < n {
        offs.push(s);
        s *= 2;
    }
    offs
}

/// Offsets of the dense circulant graph. Powers of two come first, then the
/// remaining offsets in increasing order, until the undirected degree reaches
/// `n / 2`. For odd `n` with odd `n / 2` an exact match is impossible, so the
/// degree is rounded up to `n / 2 + 1`.
pub fn dense_offsets(n: usize) -> Vec<usize> {
    let target = n / 2;
    let half = n / 2;
    let contrib = |s: usize| if 2 * s == n { 1 } else { 2 };

    let mut order: Vec<usize> = Vec::new();
    let mut p = 1usize;
    while p <= half {
        order.push(p);
        p *= 2;
    }
    order.extend((1..=half).filter(|s| !s.is_power_of_two()));

    let mut degree = 0;
    let mut chosen = Vec::new();
    for &s in &order {
        // the antipodal offset adds one edge; only useful for odd remainders
        if contrib(s) == 1 && (target - degree).is_multiple_of(2) {
            continue;
        }
        if degree + contrib(s) <= target {
            degree += contrib(s);
            chosen.push(s);
        }
        if degree == target {
            break;
        }
    }
    if degree < target {
        if let Some(&s) = order.iter().find(|s| !chosen.contains(s)) {
            chosen.push(s);
        }
    }
    chosen
}

pub fn build_graph(spec: &GraphSpec) -> Result<Graph> {
    let n = spec.n;
    if n == 0 {
        return Err(Error::InvalidSpec("node count must be at least 1".into()));
    }
    let mut sets = vec![BTreeSet::new(); n];
    let link = |sets: &mut Vec<BTreeSet<usize>>, i: usize, j: usize, undirected: bool| {
        if i != j {
            sets[i].insert(j);
            if undirected {
                sets[j].insert(i);
            }
        }
    };

    match &spec.kind {
        GraphKind::Ring => {
            for i in 0..n {
                link(&mut sets, i, (i + 1) % n, true);
            }
        }
        GraphKind::DirectedRing => {
            for i in 0..n {
                link(&mut sets, i, (i + 1) % n, false);
            }
        }
        GraphKind::Exponential => {
            let offs = exponential_offsets(n);
            for i in 0..n {
                for &o in &offs {
                    link(&mut sets, i, (i + o) % n, false);
                }
            }
        }
        GraphKind::Dense => {
            let offs = dense_offsets(n);
            for i in 0..n {
                for &o in &offs {
                    link(&mut sets, i, (i + o) % n, true);
                }
            }
        }
        GraphKind::Complete => {
            for i in 0..n {
                for j in 0..n {
                    link(&mut sets, i, j, false);
                }
            }
        }
        GraphKind::Custom(edges) => {
            for &(i, j) in edges {
                if i >= n || j >= n {
                    return Err(Error::InvalidSpec(format!(
                        "edge ({i}, {j}) out of range for n = {n}"
                    )));
                }
                link(&mut sets, i, j, true);
            }
        }
    }

    Ok(Graph::from_sets(n, sets, spec.kind.is_directed()))
}

/// A doubly-stochastic gossip matrix with its cached connectivity constant.
#[derive(Debug, Clone)]
pub struct WeightMatrix {
    w: DMatrix<f64>,
    rows: Vec<Vec<(usize, f64)>>,
    rho_w: f64,
}

impl WeightMatrix {
    /// Wraps a matrix after checking it is doubly stochastic at
    /// [`STOCHASTIC_TOL`].
    pub fn new(w: DMatrix<f64>) -> Result<Self> {
        if !w.is_square() || w.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "weight matrix must be square and non-empty, got {}x{}",
                w.nrows(),
                w.ncols()
            )));
        }
        let report = validate_doubly_stochastic(&w, STOCHASTIC_TOL);
        if !report.passed {
            return Err(Error::InvalidGraph(format!(
                "weight matrix is not doubly stochastic (row dev {:.3e}, col dev {:.3e}, min entry {:.3e})",
                report.max_row_deviation, report.max_col_deviation, report.min_entry
            )));
        }
        let rho_w = spectral_rho(&w)?;
        let rows = (0..w.nrows())
            .map(|i| {
                (0..w.ncols())
                    .filter(|&j| w[(i, j)] != 0.0)
                    .map(|j| (j, w[(i, j)]))
                    .collect()
            })
            .collect();
        Ok(Self { w, rows, rho_w })
    }

    /// The averaging matrix `J = 11^T / n`.
    pub fn averaging(n: usize) -> Result<Self> {
        Self::new(DMatrix::from_element(n, n, 1.0 / n as f64))
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::new(DMatrix::identity(n, n))
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    /// `||W - J||_2^2`.
    pub fn rho_w(&self) -> f64 {
        self.rho_w
    }

    /// `||W - J||_2`, the unsquared spectral norm.
    pub fn w_minus_j_norm(&self) -> f64 {
        self.rho_w.sqrt()
    }

    /// One gossip round over row-major `n x q` data: `dst = W src`.
    pub fn mix_into(&self, src: &[f64], q: usize, dst: &mut [f64]) {
        debug_assert_eq!(src.len(), self.n() * q);
        debug_assert_eq!(dst.len(), src.len());
        for (i, row) in self.rows.iter().enumerate() {
            let out = &mut dst[i * q..(i + 1) * q];
            out.fill(0.0);
            for &(j, wij) in row {
                let s = &src[j * q..(j + 1) * q];
                for (o, v) in out.iter_mut().zip(s) {
                    *o += wij * v;
                }
            }
        }
    }

    pub fn validate(&self, tol: f64) -> ValidationReport {
        validate_doubly_stochastic(&self.w, tol)
    }
}

/// `W_ij = 1 / (1 + max(deg i, deg j))` on links, remainder on the diagonal.
pub fn metropolis_weights(graph: &Graph) -> Result<WeightMatrix> {
    let n = graph.n();
    for i in 0..n {
        for &j in graph.out_neighbors(i) {
            if !graph.out_neighbors(j).contains(&i) {
                return Err(Error::InvalidGraph(format!(
                    "metropolis weights need an undirected graph; link ({i}, {j}) has no reverse"
                )));
            }
        }
    }
    if let Some(unreached) = graph.first_unreached() {
        return Err(Error::Disconnected { unreached });
    }
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        let di = graph.out_degree(i);
        let mut off = 0.0;
        for &j in graph.out_neighbors(i) {
            let wij = 1.0 / (1.0 + di.max(graph.out_degree(j)) as f64);
            w[(i, j)] = wij;
            off += wij;
        }
        w[(i, i)] = 1.0 - off;
    }
    WeightMatrix::new(w)
}

/// `1 / (d + 1)` on every out-link and on the diagonal, for graphs whose
/// in- and out-degrees all equal a common `d`.
pub fn uniform_out_weights(graph: &Graph) -> Result<WeightMatrix> {
    let n = graph.n();
    let d = graph.out_degree(0);
    if let Some(i) = (0..n).find(|&i| graph.out_degree(i) != d) {
        return Err(Error::InvalidGraph(format!(
            "unequal out-degrees: node 0 has {d}, node {i} has {}",
            graph.out_degree(i)
        )));
    }
    if let Some((i, din)) = graph.in_degrees().into_iter().enumerate().find(|&(_, x)| x != d) {
        return Err(Error::InvalidGraph(format!(
            "in-degree of node {i} is {din}, expected {d}"
        )));
    }
    if let Some(unreached) = graph.first_unreached() {
        return Err(Error::Disconnected { unreached });
    }
    let wv = 1.0 / (d as f64 + 1.0);
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        w[(i, i)] = wv;
        for &j in graph.out_neighbors(i) {
            w[(i, j)] = wv;
        }
    }
    WeightMatrix::new(w)
}

/// Builds the graph for `spec` and the weighting used for its kind:
/// uniform out-weights for the directed kinds, Metropolis otherwise.
pub fn weights_for(spec: &GraphSpec) -> Result<WeightMatrix> {
    let graph = build_graph(spec)?;
    if spec.kind.is_directed() {
        uniform_out_weights(&graph)
    } else {
        metropolis_weights(&graph)
    }
}

/// Squared largest singular value of `W - J`, by power iteration on
/// `(W - J)^T (W - J)`.
///
/// Stops once the eigen-residual `||B v - lambda v||` falls below `1e-10 * lambda`.
/// Near-degenerate top eigenvalues can stall the iteration; for `n <= 64` a
/// full SVD settles those, larger matrices report the last estimate.
pub fn spectral_rho(w: &DMatrix<f64>) -> Result<f64> {
    let n = w.nrows();
    if n == 0 || !w.is_square() {
        return Err(Error::Dimension(format!("expected a non-empty square matrix, got {}x{}", n, w.ncols())));
    }
    let mut m = w.clone();
    m.add_scalar_mut(-1.0 / n as f64);
    let mt = m.transpose();

    // Fixed, non-symmetric start vector so no eigendirection is missed by symmetry.
    let mut v = DVector::from_fn(n, |i, _| 1.0 + ((i as f64 + 1.0) * 0.754_877_666).fract());
    v.normalize_mut();

    if m.amax() == 0.0 {
        return Ok(0.0);
    }

    let mut lambda = 0.0;
    let mut restart = 0;
    for _ in 0..POWER_MAX_ITER {
        let bv = &mt * (&m * &v);
        let norm = bv.norm();
        if norm == 0.0 {
            // start vector fell in the null space
            v = DVector::from_fn(n, |i, _| if i == restart % n { 1.0 } else { 0.0 });
            restart += 1;
            continue;
        }
        lambda = v.dot(&bv);
        let residual = (&bv - lambda * &v).norm();
        if residual <= POWER_TOL * lambda {
            return Ok(lambda);
        }
        v = bv / norm;
    }
    if n <= SVD_FALLBACK_MAX_N {
        let s = m.singular_values().max();
        return Ok(s * s);
    }
    Err(Error::PowerIteration { iterations: POWER_MAX_ITER, estimate: lambda })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub tol: f64,
    pub max_row_deviation: f64,
    pub max_col_deviation: f64,
    pub min_entry: f64,
    /// `(row, row_sum)` for rows outside tolerance.
    pub bad_rows: Vec<(usize, f64)>,
    /// `(col, col_sum)` for columns outside tolerance.
    pub bad_cols: Vec<(usize, f64)>,
    /// `(row, col, value)` for negative entries.
    pub negative_entries: Vec<(usize, usize, f64)>,
    pub passed: bool,
}

pub fn validate_doubly_stochastic(w: &DMatrix<f64>, tol: f64) -> ValidationReport {
    let mut bad_rows = Vec::new();
    let mut bad_cols = Vec::new();
    let mut negative_entries = Vec::new();
    let mut max_row_deviation: f64 = 0.0;
    let mut max_col_deviation: f64 = 0.0;

    for (i, row) in w.row_iter().enumerate() {
        let s = row.sum();
        let dev = (s - 1.0).abs();
        max_row_deviation = max_row_deviation.max(dev);
        if !(dev <= tol) {
            bad_rows.push((i, s));
        }
    }
    for (j, col) in w.column_iter().enumerate() {
        let s = col.sum();
        let dev = (s - 1.0).abs();
        max_col_deviation = max_col_deviation.max(dev);
        if !(dev <= tol) {
            bad_cols.push((j, s));
        }
    }
    for i in 0..w.nrows() {
        for j in 0..w.ncols() {
            if w[(i, j)] < 0.0 {
                negative_entries.push((i, j, w[(i, j)]));
            }
        }
    }
    let min_entry = w.iter().copied().fold(f64::INFINITY, f64::min);
    let passed = bad_rows.is_empty() && bad_cols.is_empty() && negative_entries.is_empty();
    ValidationReport {
        tol,
        max_row_deviation,
        max_col_deviation,
        min_entry,
        bad_rows,
        bad_cols,
        negative_entries,
        passed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn spec(n: usize, kind: GraphKind) -> GraphSpec {
        GraphSpec::new(n, kind)
    }

    #[test]
    fn ring_of_three_is_complete() {
        let g = build_graph(&spec(3, GraphKind::Ring)).unwrap();
        assert_eq!(g.out_neighbors(0), &[1, 2]);
        assert_eq!(g.out_neighbors(1), &[0, 2]);
        assert_eq!(g.out_neighbors(2), &[0, 1]);
    }

    #[test]
    fn complete_four_has_three_neighbors() {
        let g = build_graph(&spec(4, GraphKind::Complete)).unwrap();
        for i in 0..4 {
            assert_eq!(g.out_degree(i), 3);
            assert!(!g.out_neighbors(i).contains(&i));
        }
    }

    #[test]
    fn exponential_four_offsets() {
        let g = build_graph(&spec(4, GraphKind::Exponential)).unwrap();
        assert_eq!(g.out_neighbors(0), &[1, 2]);
        assert_eq!(g.out_neighbors(3), &[0, 1]);
        assert_eq!(exponential_offsets(50), vec![1, 2, 4, 8, 16, 32]);
    }

    #[test]
    fn dense_degree_is_half_n() {
        for n in [2, 4, 6, 8, 10, 16, 20, 32] {
            let g = build_graph(&spec(n, GraphKind::Dense)).unwrap();
            for i in 0..n {
                assert_eq!(g.out_degree(i), n / 2, "n = {n}");
            }
        }
        // odd n with odd n/2: one over
        for (n, deg) in [(3, 2), (7, 4), (11, 6)] {
            let g = build_graph(&spec(n, GraphKind::Dense)).unwrap();
            assert_eq!(g.out_degree(0), deg, "n = {n}");
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(matches!(build_graph(&spec(0, GraphKind::Ring)), Err(Error::InvalidSpec(_))));
        assert!(matches!(
            build_graph(&spec(3, GraphKind::Custom(vec![(0, 3)]))),
            Err(Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn metropolis_ring_three_is_averaging() {
        let w = weights_for(&spec(3, GraphKind::Ring)).unwrap();
        for v in w.matrix().iter() {
            assert_abs_diff_eq!(*v, 1.0 / 3.0, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(w.rho_w(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn metropolis_ring_four() {
        let w = weights_for(&spec(4, GraphKind::Ring)).unwrap();
        let m = w.matrix();
        assert_abs_diff_eq!(m[(0, 0)], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m[(0, 1)], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m[(0, 3)], 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(m[(0, 2)], 0.0);
        assert_abs_diff_eq!(w.rho_w(), 1.0 / 9.0, epsilon = 1e-9);
        assert!(w.validate(1e-12).passed);
    }

    #[test]
    fn metropolis_complete_is_averaging() {
        for n in [2, 5, 9] {
            let w = weights_for(&spec(n, GraphKind::Complete)).unwrap();
            for v in w.matrix().iter() {
                assert_abs_diff_eq!(*v, 1.0 / n as f64, epsilon = 1e-15);
            }
            assert_abs_diff_eq!(w.rho_w(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn metropolis_rejects_disconnected_and_directed() {
        let g = build_graph(&spec(4, GraphKind::Custom(vec![(0, 1), (2, 3)]))).unwrap();
        assert!(matches!(metropolis_weights(&g), Err(Error::Disconnected { unreached: 2 })));
        let g = build_graph(&spec(4, GraphKind::DirectedRing)).unwrap();
        assert!(matches!(metropolis_weights(&g), Err(Error::InvalidGraph(_))));
    }

    #[test]
    fn uniform_directed_ring_three() {
        let w = weights_for(&spec(3, GraphKind::DirectedRing)).unwrap();
        let m = w.matrix();
        for i in 0..3 {
            assert_eq!(m[(i, i)], 0.5);
            assert_eq!(m[(i, (i + 1) % 3)], 0.5);
            assert_eq!(m[(i, (i + 2) % 3)], 0.0);
        }
    }

    #[test]
    fn uniform_exponential_two_is_averaging() {
        let w = weights_for(&spec(2, GraphKind::Exponential)).unwrap();
        assert!(w.matrix().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn uniform_rejects_unequal_degrees() {
        let g = build_graph(&spec(4, GraphKind::Custom(vec![(0, 1), (1, 2), (2, 3)]))).unwrap();
        assert!(matches!(uniform_out_weights(&g), Err(Error::InvalidGraph(_))));
    }

    #[test]
    fn exponential_fifty_norm() {
        let w = weights_for(&spec(50, GraphKind::Exponential)).unwrap();
        assert!((w.w_minus_j_norm() - 0.71).abs() < 0.02);
        assert_abs_diff_eq!(w.rho_w(), 25.0 / 49.0, epsilon = 1e-9);
    }

    #[test]
    fn validation_reports() {
        let j = DMatrix::from_element(4, 4, 0.25);
        assert!(validate_doubly_stochastic(&j, 1e-12).passed);

        let row_only = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 0.5]);
        let r = validate_doubly_stochastic(&row_only, 1e-12);
        assert!(!r.passed);
        assert!(r.bad_rows.is_empty());
        assert_eq!(r.bad_cols, vec![(0, 1.5), (1, 0.5)]);

        let neg = DMatrix::from_row_slice(2, 2, &[1.5, -0.5, -0.5, 1.5]);
        let r = validate_doubly_stochastic(&neg, 1e-12);
        assert!(!r.passed);
        assert_eq!(r.negative_entries.len(), 2);
    }

    #[test]
    fn mix_matches_dense_product() {
        let w = weights_for(&spec(6, GraphKind::Ring)).unwrap();
        let src: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        let mut dst = vec![0.0; 12];
        w.mix_into(&src, 2, &mut dst);
        let x = DMatrix::from_row_slice(6, 2, &src);
        let expect = w.matrix() * x;
        for i in 0..6 {
            for c in 0..2 {
                assert_abs_diff_eq!(dst[i * 2 + c], expect[(i, c)], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn single_node() {
        let w = weights_for(&spec(1, GraphKind::Ring)).unwrap();
        assert_eq!(w.matrix()[(0, 0)], 1.0);
        assert_eq!(w.rho_w(), 0.0);
    }
}
