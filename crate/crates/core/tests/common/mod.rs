//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use dadast::problems::QuadraticMinimaxProblem;
use dadast::ProjectionSet;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `||W - J||_2^2` from a full SVD.
pub fn rho_by_svd(w: &DMatrix<f64>) -> f64 {
    let n = w.nrows();
    let j = DMatrix::from_element(n, n, 1.0 / n as f64);
    let s = (w - j).singular_values().max();
    s * s
}

/// A random doubly-stochastic matrix: a positive matrix, optionally
/// sparsified, balanced by alternating row and column normalisation.
pub fn sinkhorn(n: usize, seed: u64, sparsity: f64) -> DMatrix<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut m = DMatrix::from_fn(n, n, |i, j| {
        if i == j || r.random::<f64>() >= sparsity {
            r.random::<f64>() + 1e-3
        } else {
            0.0
        }
    });
    for _ in 0..100_000 {
        for i in 0..n {
            let s: f64 = m.row(i).sum();
            m.row_mut(i).iter_mut().for_each(|v| *v /= s);
        }
        for j in 0..n {
            let s: f64 = m.column(j).sum();
            m.column_mut(j).iter_mut().for_each(|v| *v /= s);
        }
        let worst = (0..n).map(|i| (m.row(i).sum() - 1.0).abs()).fold(0.0, f64::max);
        if worst < 1e-15 {
            break;
        }
    }
    m
}

/// Central-difference gradient of `f` at `x`.
pub fn fd_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|j| {
            let mut a = x.to_vec();
            let mut b = x.to_vec();
            a[j] += h;
            b[j] -= h;
            (f(&a) - f(&b)) / (2.0 * h)
        })
        .collect()
}

pub fn rel_close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(u, v)| (u - v).abs() <= tol * u.abs().max(v.abs()).max(1.0))
}

/// Checks all finite-difference identities on one instance at one point.
pub fn gradients_match(pb: &QuadraticMinimaxProblem, x: &[f64], y: &[f64], tol: f64) -> Result<(), String> {
    let h = 1e-4;
    for i in 0..pb.n() {
        let gx = pb.grad_x(i, x, y).unwrap();
        let gy = pb.grad_y(i, x, y).unwrap();
        let fx = fd_grad(|u| pb.value(i, u, y).unwrap(), x, h);
        let fy = fd_grad(|v| pb.value(i, x, v).unwrap(), y, h);
        if !rel_close(&gx, &fx, tol) || !rel_close(&gy, &fy, tol) {
            return Err(format!("node {i}: {gx:?} vs {fx:?}, {gy:?} vs {fy:?}"));
        }
    }
    let all = ProjectionSet::All;
    let g = pb.grad_phi(x, &all).unwrap();
    let fd = fd_grad(|u| pb.phi(u, &all).unwrap(), x, h);
    if !rel_close(&g, &fd, tol) {
        return Err(format!("grad Phi {g:?} vs {fd:?}"));
    }
    Ok(())
}

/// Mean of the last `frac` share of `v` (at least one element).
pub fn tail_mean(v: &[f64], frac: f64) -> f64 {
    let m = ((v.len() as f64 * frac).ceil() as usize).clamp(1, v.len());
    v[v.len() - m..].iter().sum::<f64>() / m as f64
}
