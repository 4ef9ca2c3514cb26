//! Quadratic nonconvex-strongly-concave minimax instances.
//!
//! Each node holds
//!
//! ```text
//! f_i(x, y) = -1/2 y^T B_i y + x^T A_i y - 1/2 x^T C_i x + b_i^T x + c_i^T y
//! ```
//!
//! with `B_i` positive definite. The network objective is the node average,
//! whose best response `y*(x) = Bbar^{-1} (Abar^T x + cbar)` and primal
//! gradient `grad Phi(x) = Abar y*(x) - Cbar x + bbar` are available in
//! closed form when the dual domain is unconstrained.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticLocal {
    /// `B`, d x d, symmetric positive definite.
    pub dual_curvature: DMatrix<f64>,
    /// `A`, p x d.
    pub coupling: DMatrix<f64>,
    /// `C`, p x p, symmetric.
    pub primal_curvature: DMatrix<f64>,
    /// `b`, length p.
    pub primal_linear: DVector<f64>,
    /// `c`, length d.
    pub dual_linear: DVector<f64>,
}

impl QuadraticLocal {
    /// A one-dimensional node: `-B/2 y^2 + A x y - C/2 x^2 + b x + c y`.
    pub fn scalar(b_yy: f64, a_xy: f64, c_xx: f64, lin_x: f64, lin_y: f64) -> Self {
        Self {
            dual_curvature: DMatrix::from_element(1, 1, b_yy),
            coupling: DMatrix::from_element(1, 1, a_xy),
            primal_curvature: DMatrix::from_element(1, 1, c_xx),
            primal_linear: DVector::from_element(1, lin_x),
            dual_linear: DVector::from_element(1, lin_y),
        }
    }

    pub fn p(&self) -> usize {
        self.coupling.nrows()
    }

    pub fn d(&self) -> usize {
        self.coupling.ncols()
    }

    fn check_shapes(&self) -> Result<()> {
        let (p, d) = (self.p(), self.d());
        let ok = self.dual_curvature.shape() == (d, d)
            && self.primal_curvature.shape() == (p, p)
            && self.primal_linear.len() == p
            && self.dual_linear.len() == d;
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension(format!("inconsistent block shapes for p = {p}, d = {d}")))
        }
    }

    pub fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        let (p, d) = (self.p(), self.d());
        let mut v = 0.0;
        for r in 0..d {
            let mut by = 0.0;
            for c in 0..d {
                by += self.dual_curvature[(r, c)] * y[c];
            }
            v -= 0.5 * y[r] * by;
            v += self.dual_linear[r] * y[r];
        }
        for r in 0..p {
            let mut ay = 0.0;
            for c in 0..d {
                ay += self.coupling[(r, c)] * y[c];
            }
            let mut cx = 0.0;
            for c in 0..p {
                cx += self.primal_curvature[(r, c)] * x[c];
            }
            v += x[r] * ay - 0.5 * x[r] * cx + self.primal_linear[r] * x[r];
        }
        v
    }

    /// `A y - C x + b`.
    pub fn grad_x_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let (p, d) = (self.p(), self.d());
        for r in 0..p {
            let mut g = self.primal_linear[r];
            for c in 0..d {
                g += self.coupling[(r, c)] * y[c];
            }
            for c in 0..p {
                g -= self.primal_curvature[(r, c)] * x[c];
            }
            out[r] = g;
        }
    }

    /// `-B y + A^T x + c`.
    pub fn grad_y_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let (p, d) = (self.p(), self.d());
        for r in 0..d {
            let mut g = self.dual_linear[r];
            for c in 0..d {
                g -= self.dual_curvature[(r, c)] * y[c];
            }
            for c in 0..p {
                g += self.coupling[(c, r)] * x[c];
            }
            out[r] = g;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseModel {
    None,
    /// i.i.d. `N(0, sigma^2)` per coordinate.
    Gaussian { sigma: f64 },
    /// Gaussian noise, then rescaled to norm at most `clip`.
    GaussianClipped { sigma: f64, clip: f64 },
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseModel::None => Ok(()),
            NoiseModel::Gaussian { sigma } if sigma >= 0.0 && sigma.is_finite() => Ok(()),
            NoiseModel::GaussianClipped { sigma, clip }
                if sigma >= 0.0 && sigma.is_finite() && clip > 0.0 =>
            {
                Ok(())
            }
            _ => Err(Error::InvalidParameter(format!("invalid noise model {self:?}"))),
        }
    }

    fn sigma(&self) -> f64 {
        match *self {
            NoiseModel::None => 0.0,
            NoiseModel::Gaussian { sigma } | NoiseModel::GaussianClipped { sigma, .. } => sigma,
        }
    }

    fn perturb(&self, out: &mut [f64], rng: &mut impl Rng) {
        if matches!(self, NoiseModel::None) {
            return;
        }
        let sigma = self.sigma();
        for v in out.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v += sigma * z;
        }
        if let NoiseModel::GaussianClipped { clip, .. } = *self {
            let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > clip {
                let s = clip / norm;
                out.iter_mut().for_each(|v| *v *= s);
            }
        }
    }
}

/// Closed convex dual domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProjectionSet {
    All,
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl ProjectionSet {
    pub fn is_all(&self) -> bool {
        matches!(self, ProjectionSet::All)
    }

    /// Checks the set is well formed and, when `dim` is given, matches it.
    pub fn validate(&self, dim: Option<usize>) -> Result<()> {
        match self {
            ProjectionSet::All => Ok(()),
            ProjectionSet::Box { lo, hi } => {
                if lo.len() != hi.len() {
                    return Err(Error::InvalidSet("box bounds differ in length".into()));
                }
                if let Some(j) = (0..lo.len()).find(|&j| !(lo[j] <= hi[j])) {
                    return Err(Error::InvalidSet(format!(
                        "box lower bound exceeds upper bound in coordinate {j}"
                    )));
                }
                match dim {
                    Some(d) if d != lo.len() => {
                        Err(Error::Dimension(format!("box has dimension {}, expected {d}", lo.len())))
                    }
                    _ => Ok(()),
                }
            }
            ProjectionSet::Ball { center, radius } => {
                if !(*radius > 0.0) {
                    return Err(Error::InvalidSet(format!("ball radius must be positive, got {radius}")));
                }
                match dim {
                    Some(d) if d != center.len() => Err(Error::Dimension(format!(
                        "ball has dimension {}, expected {d}",
                        center.len()
                    ))),
                    _ => Ok(()),
                }
            }
        }
    }

    pub fn project(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.validate(Some(y.len()))?;
        let mut out = y.to_vec();
        self.project_in_place(&mut out);
        Ok(out)
    }

    /// Euclidean projection. The set must already be validated.
    pub fn project_in_place(&self, y: &mut [f64]) {
        match self {
            ProjectionSet::All => {}
            ProjectionSet::Box { lo, hi } => {
                for ((v, l), h) in y.iter_mut().zip(lo).zip(hi) {
                    *v = v.clamp(*l, *h);
                }
            }
            ProjectionSet::Ball { center, radius } => {
                let dist = y
                    .iter()
                    .zip(center)
                    .map(|(v, c)| (v - c) * (v - c))
                    .sum::<f64>()
                    .sqrt();
                if dist > *radius {
                    let s = radius / dist;
                    for (v, c) in y.iter_mut().zip(center) {
                        *v = c + (*v - c) * s;
                    }
                }
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ProblemDoc {
    name: String,
    n: usize,
    p: usize,
    d: usize,
    mu: f64,
    smoothness: f64,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    drawn_l: Option<Vec<f64>>,
    locals: Vec<QuadraticLocal>,
}

/// The finite-sum problem `min_x max_y (1/n) sum_i f_i(x, y)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "ProblemDoc", into = "ProblemDoc")]
pub struct QuadraticMinimaxProblem {
    name: String,
    locals: Vec<QuadraticLocal>,
    p: usize,
    d: usize,
    mu: f64,
    smoothness: f64,
    seed: Option<u64>,
    drawn_l: Option<Vec<f64>>,
    mean: QuadraticLocal,
    mean_dual_chol: Cholesky<f64, Dyn>,
}

impl TryFrom<ProblemDoc> for QuadraticMinimaxProblem {
    type Error = Error;

    fn try_from(doc: ProblemDoc) -> Result<Self> {
        if doc.locals.len() != doc.n {
            return Err(Error::Dimension(format!(
                "document declares n = {} but has {} locals",
                doc.n,
                doc.locals.len()
            )));
        }
        let mut pb = Self::new(doc.name, doc.locals)?;
        pb.seed = doc.seed;
        pb.drawn_l = doc.drawn_l;
        Ok(pb)
    }
}

impl From<QuadraticMinimaxProblem> for ProblemDoc {
    fn from(pb: QuadraticMinimaxProblem) -> Self {
        ProblemDoc {
            name: pb.name,
            n: pb.locals.len(),
            p: pb.p,
            d: pb.d,
            mu: pb.mu,
            smoothness: pb.smoothness,
            seed: pb.seed,
            drawn_l: pb.drawn_l,
            locals: pb.locals,
        }
    }
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() <= 1e-12 * scale
}

impl QuadraticMinimaxProblem {
    /// Validates the blocks and caches the averaged coefficients. Each `B_i`
    /// must be symmetric positive definite.
    pub fn new(name: impl Into<String>, locals: Vec<QuadraticLocal>) -> Result<Self> {
        let first = locals
            .first()
            .ok_or_else(|| Error::InvalidParameter("a problem needs at least one node".into()))?;
        let (p, d) = (first.p(), first.d());
        if p == 0 || d == 0 {
            return Err(Error::Dimension("p and d must be positive".into()));
        }
        for (i, l) in locals.iter().enumerate() {
            l.check_shapes()?;
            if (l.p(), l.d()) != (p, d) {
                return Err(Error::Dimension(format!("node {i} has shape ({}, {}), expected ({p}, {d})", l.p(), l.d())));
            }
            if !is_symmetric(&l.dual_curvature) || !is_symmetric(&l.primal_curvature) {
                return Err(Error::InvalidParameter(format!("node {i}: B and C must be symmetric")));
            }
            if Cholesky::new(l.dual_curvature.clone()).is_none() {
                return Err(Error::NotPositiveDefinite(format!("B of node {i}")));
            }
        }

        let n = locals.len() as f64;
        let mut mean = QuadraticLocal {
            dual_curvature: DMatrix::zeros(d, d),
            coupling: DMatrix::zeros(p, d),
            primal_curvature: DMatrix::zeros(p, p),
            primal_linear: DVector::zeros(p),
            dual_linear: DVector::zeros(d),
        };
        for l in &locals {
            mean.dual_curvature += &l.dual_curvature;
            mean.coupling += &l.coupling;
            mean.primal_curvature += &l.primal_curvature;
            mean.primal_linear += &l.primal_linear;
            mean.dual_linear += &l.dual_linear;
        }
        mean.dual_curvature /= n;
        mean.coupling /= n;
        mean.primal_curvature /= n;
        mean.primal_linear /= n;
        mean.dual_linear /= n;

        let mean_dual_chol = Cholesky::new(mean.dual_curvature.clone())
            .ok_or_else(|| Error::NotPositiveDefinite("averaged B".into()))?;
        let mu = SymmetricEigen::new(mean.dual_curvature.clone()).eigenvalues.min();
        let smoothness = locals
            .iter()
            .map(|l| {
                spectral_norm(&l.dual_curvature)
                    .max(spectral_norm(&l.coupling))
                    .max(spectral_norm(&l.primal_curvature))
            })
            .fold(0.0, f64::max);

        Ok(Self {
            name: name.into(),
            locals,
            p,
            d,
            mu,
            smoothness,
            seed: None,
            drawn_l: None,
            mean,
            mean_dual_chol,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.locals.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Strong-concavity modulus of the averaged objective, `lambda_min(Bbar)`.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Largest spectral norm over all coefficient blocks.
    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// The `L_i` drawn by [`make_synthetic`], if this instance came from it.
    pub fn drawn_l(&self) -> Option<&[f64]> {
        self.drawn_l.as_deref()
    }

    pub fn locals(&self) -> &[QuadraticLocal] {
        &self.locals
    }

    pub fn local(&self, i: usize) -> &QuadraticLocal {
        &self.locals[i]
    }

    /// The node-averaged coefficients as a single quadratic.
    pub fn mean_local(&self) -> &QuadraticLocal {
        &self.mean
    }

    /// Restricts the instance to its averaged objective on a single node.
    pub fn collapsed(&self) -> Result<Self> {
        Self::new(format!("{}-collapsed", self.name), vec![self.mean.clone()])
    }

    fn check_point(&self, i: usize, x: &[f64], y: &[f64]) -> Result<()> {
        if i >= self.n() {
            return Err(Error::Dimension(format!("node {i} out of range for n = {}", self.n())));
        }
        if x.len() != self.p || y.len() != self.d {
            return Err(Error::Dimension(format!(
                "point has shape ({}, {}), expected ({}, {})",
                x.len(),
                y.len(),
                self.p,
                self.d
            )));
        }
        Ok(())
    }

    pub fn value(&self, i: usize, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_point(i, x, y)?;
        Ok(self.locals[i].value(x, y))
    }

    pub fn mean_value(&self, x: &[f64], y: &[f64]) -> f64 {
        self.mean.value(x, y)
    }

    pub fn grad_x(&self, i: usize, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        self.check_point(i, x, y)?;
        let mut g = vec![0.0; self.p];
        self.locals[i].grad_x_into(x, y, &mut g);
        Ok(g)
    }

    pub fn grad_y(&self, i: usize, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        self.check_point(i, x, y)?;
        let mut g = vec![0.0; self.d];
        self.locals[i].grad_y_into(x, y, &mut g);
        Ok(g)
    }

    pub fn mean_grad_x(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.p];
        self.mean.grad_x_into(x, y, &mut g);
        g
    }

    pub fn mean_grad_y(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.d];
        self.mean.grad_y_into(x, y, &mut g);
        g
    }

    /// Stochastic gradients of node `i` at iteration `k`. The x- and y-noise
    /// come from independent streams keyed by `(seed, i, k)`.
    pub fn sample_grad(
        &self,
        i: usize,
        x: &[f64],
        y: &[f64],
        noise: &NoiseModel,
        seed: u64,
        k: u64,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_point(i, x, y)?;
        let mut gx = vec![0.0; self.p];
        let mut gy = vec![0.0; self.d];
        self.sample_grad_into(i, x, y, noise, seed, k, &mut gx, &mut gy);
        Ok((gx, gy))
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn sample_grad_into(
        &self,
        i: usize,
        x: &[f64],
        y: &[f64],
        noise: &NoiseModel,
        seed: u64,
        k: u64,
        gx: &mut [f64],
        gy: &mut [f64],
    ) {
        let local = &self.locals[i];
        local.grad_x_into(x, y, gx);
        local.grad_y_into(x, y, gy);
        if !matches!(noise, NoiseModel::None) {
            noise.perturb(gx, &mut rng::stream(seed, i, k, Purpose::GradX));
            noise.perturb(gy, &mut rng::stream(seed, i, k, Purpose::GradY));
        }
    }

    fn require_unconstrained(&self, set: &ProjectionSet) -> Result<()> {
        if set.is_all() {
            Ok(())
        } else {
            Err(Error::Unsupported("closed-form best response needs an unconstrained dual domain".into()))
        }
    }

    /// `y*(x) = Bbar^{-1} (Abar^T x + cbar)`.
    pub fn y_star(&self, x: &[f64], set: &ProjectionSet) -> Result<Vec<f64>> {
        self.require_unconstrained(set)?;
        if x.len() != self.p {
            return Err(Error::Dimension(format!("x has length {}, expected {}", x.len(), self.p)));
        }
        let rhs = self.mean.coupling.tr_mul(&DVector::from_column_slice(x)) + &self.mean.dual_linear;
        Ok(self.mean_dual_chol.solve(&rhs).as_slice().to_vec())
    }

    /// `Phi(x) = f(x, y*(x))`.
    pub fn phi(&self, x: &[f64], set: &ProjectionSet) -> Result<f64> {
        let ys = self.y_star(x, set)?;
        Ok(self.mean.value(x, &ys))
    }

    /// `grad Phi(x) = grad_x f(x, y*(x))`.
    pub fn grad_phi(&self, x: &[f64], set: &ProjectionSet) -> Result<Vec<f64>> {
        let ys = self.y_star(x, set)?;
        Ok(self.mean_grad_x(x, &ys))
    }
}

/// Two nodes, p = d = 1, whose average is stationary on the line `3y = 5x + 2`.
pub fn make_two_node_case_study() -> QuadraticMinimaxProblem {
    let locals = vec![
        QuadraticLocal::scalar(0.9, 1.0, 1.0, -1.0, 0.6),
        QuadraticLocal::scalar(0.9, 2.0, 4.0, -1.0, 0.6),
    ];
    QuadraticMinimaxProblem::new("two-node-case-study", locals).expect("case study is well posed")
}

/// Three-node instance on which locally adapted stepsizes freeze the iterates.
#[derive(Debug, Clone)]
pub struct Counterexample {
    pub problem: QuadraticMinimaxProblem,
    /// `2^{-1/(2 alpha - 1)}`.
    pub a: f64,
    /// `2^{-1/(2 beta - 1)}`.
    pub b: f64,
    /// Initialising every node at `(x0, slope * x0)` keeps all iterates fixed.
    pub slope: f64,
}

pub fn make_counterexample(alpha: f64, beta: f64) -> Result<Counterexample> {
    if !(0.0 < beta && beta < 0.5 && 0.5 < alpha && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "counterexample needs 0 < beta < 0.5 < alpha < 1, got alpha = {alpha}, beta = {beta}"
        )));
    }
    let a = 2f64.powf(-1.0 / (2.0 * alpha - 1.0));
    let b = 2f64.powf(-1.0 / (2.0 * beta - 1.0));
    let k = -(1.0 + 1.0 / a + 1.0 / b);
    let locals = vec![
        QuadraticLocal::scalar(1.0, 1.0, 1.0, 0.0, 0.0),
        QuadraticLocal::scalar(1.0, k, 1.0, 0.0, 0.0),
        QuadraticLocal::scalar(1.0, k, 1.0, 0.0, 0.0),
    ];
    let problem = QuadraticMinimaxProblem::new("counterexample", locals)?;
    let slope = -(1.0 + a) / (a + a / b);
    Ok(Counterexample { problem, a, b, slope })
}

/// `f_i = -y^2/2 + L_i x y - L_i^2 x^2 / 2 - 2 L_i x + L_i y` with
/// `L_i ~ U(l_low, l_high)` drawn from the seeded stream.
pub fn make_synthetic(n: usize, seed: u64, l_low: f64, l_high: f64) -> Result<QuadraticMinimaxProblem> {
    if n == 0 {
        return Err(Error::InvalidParameter("synthetic instance needs n >= 1".into()));
    }
    if !(l_low <= l_high) {
        return Err(Error::InvalidParameter(format!("empty range [{l_low}, {l_high}]")));
    }
    let ls: Vec<f64> = (0..n)
        .map(|i| {
            let u: f64 = rng::stream(seed, i, 0, Purpose::Problem).random();
            l_low + (l_high - l_low) * u
        })
        .collect();
    let mut pb = make_synthetic_with(&ls)?;
    pb.seed = Some(seed);
    Ok(pb)
}

/// The synthetic family with given `L_i`.
pub fn make_synthetic_with(ls: &[f64]) -> Result<QuadraticMinimaxProblem> {
    let locals = ls
        .iter()
        .map(|&l| QuadraticLocal::scalar(1.0, l, l * l, -2.0 * l, l))
        .collect();
    let mut pb = QuadraticMinimaxProblem::new("synthetic", locals)?;
    pb.drawn_l = Some(ls.to_vec());
    Ok(pb)
}

/// Random matrix-coefficient instance.
///
/// `B_i = G G^T / d + mu_floor I`, entries of `A_i`, `b_i`, `c_i` standard
/// normal, `C_i` a symmetrised normal matrix (indefinite in general).
/// Coordinate `j` of both x and y is scaled by `1 + j`, so coordinates see
/// gradients of different magnitude. With `phi_margin = Some(m)`, every
/// `C_i` is shifted by the same multiple of the identity so that the
/// Hessian of `Phi` has smallest eigenvalue at least `m`.
pub fn make_random(
    n: usize,
    p: usize,
    d: usize,
    seed: u64,
    phi_margin: Option<f64>,
) -> Result<QuadraticMinimaxProblem> {
    const MU_FLOOR: f64 = 0.5;
    if n == 0 || p == 0 || d == 0 {
        return Err(Error::InvalidParameter("n, p and d must be positive".into()));
    }
    let scale_x = DVector::from_fn(p, |j, _| 1.0 + j as f64);
    let scale_y = DVector::from_fn(d, |j, _| 1.0 + j as f64);

    let mut locals: Vec<QuadraticLocal> = (0..n)
        .map(|i| {
            let mut r = rng::stream(seed, i, 1, Purpose::Problem);
            let mut normal = |rows: usize, cols: usize| {
                DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut r))
            };
            let g = normal(d, d);
            let b = &g * g.transpose() / d as f64 + DMatrix::identity(d, d) * MU_FLOOR;
            let a = normal(p, d);
            let s = normal(p, p);
            let c = (&s + s.transpose()) * 0.5;
            let bx = normal(p, 1).column(0).into_owned();
            let cy = normal(d, 1).column(0).into_owned();

            // diagonal rescaling keeps B positive definite and C symmetric
            let dy = DMatrix::from_diagonal(&scale_y);
            let dx = DMatrix::from_diagonal(&scale_x);
            QuadraticLocal {
                dual_curvature: &dy * b * &dy,
                coupling: &dx * a * &dy,
                primal_curvature: &dx * c * &dx,
                primal_linear: bx.component_mul(&scale_x),
                dual_linear: cy.component_mul(&scale_y),
            }
        })
        .collect();

    if let Some(margin) = phi_margin {
        let pb = QuadraticMinimaxProblem::new("random", locals.clone())?;
        let m = pb.mean_local();
        let binv_at = pb.mean_dual_chol.solve(&m.coupling.transpose());
        let hess = &m.coupling * binv_at - &m.primal_curvature;
        let hess = (&hess + hess.transpose()) * 0.5;
        let lmin = SymmetricEigen::new(hess).eigenvalues.min();
        if lmin < margin {
            let shift = margin - lmin;
            for l in &mut locals {
                for j in 0..p {
                    l.primal_curvature[(j, j)] -= shift;
                }
            }
        }
    }

    let mut pb = QuadraticMinimaxProblem::new("random", locals)?;
    pb.seed = Some(seed);
    Ok(pb)
}
