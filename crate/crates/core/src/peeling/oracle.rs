//! Independent check for peels: accelerated projected gradient ascent on
//! `pᵀ d p` over the simplex. Shares no factorization code with the solver.

use serde::{Deserialize, Serialize};

use crate::diversity::{quadratic_form, SimplexVector};
use crate::error::{Error, Result};
use crate::linalg::perron_norm_bound;
use crate::metric::MetricMatrix;

/// Euclidean projection onto `{p ≥ 0, Σp = 1}` (sort-and-threshold).
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cumulative += uk;
        let candidate = (cumulative - 1.0) / (k + 1) as f64;
        if uk - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpReport {
    pub p: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    /// Norm of the projected-gradient step at `p`, divided by the step size.
    pub gradient_mapping: f64,
}

/// Maximizes `pᵀ d p` on the simplex with FISTA and adaptive restarts.
///
/// Converges to the global maximum when `d` is strict negative type (the
/// objective is then strictly concave on the simplex). Stops once the
/// gradient mapping drops to `tol`.
pub fn qp_oracle(d: &MetricMatrix, tol: f64, max_iter: usize) -> Result<QpReport> {
    let n = d.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    // ∇(pᵀdp) = 2dp is Lipschitz with constant 2‖d‖₂.
    let lipschitz = 2.0 * perron_norm_bound(d.entries(), 50).max(f64::MIN_POSITIVE);
    let step = lipschitz.recip();

    let mut x = SimplexVector::uniform(n).into_vec();
    let mut dx = d.apply(&x);
    let mut y = x.clone();
    let mut dy = dx.clone();
    let mut momentum = 1.0_f64;

    for iteration in 0..max_iter {
        let stepped: Vec<f64> = y.iter().zip(&dy).map(|(a, g)| a + step * 2.0 * g).collect();
        let x_next = project_to_simplex(&stepped);
        let dx_next = d.apply(&x_next);
        let mapping = gradient_mapping(&x_next, &dx_next, step);
        if mapping <= tol {
            return Ok(QpReport {
                value: quadratic_form(d, &x_next),
                p: x_next,
                iterations: iteration + 1,
                gradient_mapping: mapping,
            });
        }

        // Restart when the step direction opposes the momentum; this test is
        // first order, so it keeps working once objective differences are
        // lost to rounding.
        let against: f64 = (0..n).map(|i| (x_next[i] - y[i]) * (x_next[i] - x[i])).sum();
        let momentum_next = if against < 0.0 {
            1.0
        } else {
            0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt())
        };
        let beta = if against < 0.0 { 0.0 } else { (momentum - 1.0) / momentum_next };
        // d is linear, so d·y follows from the stored products.
        for i in 0..n {
            y[i] = x_next[i] + beta * (x_next[i] - x[i]);
            dy[i] = dx_next[i] + beta * (dx_next[i] - dx[i]);
        }
        momentum = momentum_next;
        x = x_next;
        dx = dx_next;
    }
    Err(Error::NoConvergence(max_iter))
}

fn gradient_mapping(x: &[f64], dx: &[f64], step: f64) -> f64 {
    let stepped: Vec<f64> = x.iter().zip(dx).map(|(a, g)| a + step * 2.0 * g).collect();
    let projected = project_to_simplex(&stepped);
    let norm_sq: f64 = projected.iter().zip(x).map(|(p, a)| (p - a) * (p - a)).sum();
    norm_sq.sqrt() / step
}
