//! Similarity-sensitive diversity of order `q`, quadratic entropy and the
//! maximum-diversity distribution given by a positive weighting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::magnitude::{weighting, SimilarityMatrix};
use crate::metric::MetricMatrix;

/// `(Zp)_j` below this on the support is an underflow error.
pub const ZP_FLOOR: f64 = 1e-300;
/// Orders above this use the exact `q = ∞` formula.
pub const Q_INFINITY_THRESHOLD: f64 = 1e6;

/// A probability vector on `[n]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexVector {
    p: Vec<f64>,
    support: Vec<usize>,
}

impl SimplexVector {
    /// Validates nonnegativity and renormalizes to unit sum.
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(j) = p.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidDistribution(format!("p[{j}] = {}", p[j])));
        }
        let sum: f64 = p.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidDistribution("zero total mass".into()));
        }
        let p: Vec<f64> = p.into_iter().map(|v| v / sum).collect();
        let support = (0..p.len()).filter(|&j| p[j] > 0.0).collect();
        Ok(Self { p, support })
    }

    /// Zeroes entries in `[−tol, tol]` and renormalizes; anything more
    /// negative is rejected.
    pub fn from_clipped(mut v: Vec<f64>, tol: f64) -> Result<Self> {
        for (j, x) in v.iter_mut().enumerate() {
            if *x < -tol {
                return Err(Error::InvalidDistribution(format!("p[{j}] = {x} < -{tol:e}")));
            }
            if x.abs() <= tol {
                *x = 0.0;
            }
        }
        Self::new(v)
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            p: vec![1.0 / n as f64; n],
            support: (0..n).collect(),
        }
    }

    pub fn point_mass(n: usize, j: usize) -> Self {
        let mut p = vec![0.0; n];
        p[j] = 1.0;
        Self { p, support: vec![j] }
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.p
    }
}

fn check_dims(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// `ln (Zp)_j` on the support of `p`.
fn log_zp_on_support(z: &SimilarityMatrix, p: &SimplexVector) -> Result<Vec<(usize, f64)>> {
    check_dims(z.len(), p.len())?;
    let zp = z.apply(p.as_slice());
    p.support()
        .iter()
        .map(|&j| {
            if zp[j] < ZP_FLOOR {
                Err(Error::Underflow(j))
            } else {
                Ok((j, zp[j].ln()))
            }
        })
        .collect()
}

/// Diversity of order `q ∈ [1, ∞]`.
///
/// For `1 < q < ∞` this is `exp( log Σ_j p_j (Zp)_j^{q−1} / (1 − q) )`,
/// evaluated with log-sum-exp; `q = 1` and `q = ∞` are the limits
/// `∏ (Zp)_j^{−p_j}` and `1 / max (Zp)_j` over the support.
pub fn diversity_order_q(z: &SimilarityMatrix, p: &SimplexVector, q: f64) -> Result<f64> {
    if q.is_nan() || q < 1.0 {
        return Err(Error::InvalidOrder(q));
    }
    if q == 1.0 {
        return diversity_order_one(z, p);
    }
    let logs = log_zp_on_support(z, p)?;
    if q > Q_INFINITY_THRESHOLD {
        let max_log = logs.iter().map(|&(_, l)| l).fold(f64::NEG_INFINITY, f64::max);
        return Ok((-max_log).exp());
    }
    let terms: Vec<f64> = logs
        .iter()
        .map(|&(j, l)| p.as_slice()[j].ln() + (q - 1.0) * l)
        .collect();
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln();
    Ok((log_sum / (1.0 - q)).exp())
}

/// `D_1 = ∏_{j ∈ supp p} (Zp)_j^{−p_j}`, computed as `exp(−Σ p_j ln (Zp)_j)`.
pub fn diversity_order_one(z: &SimilarityMatrix, p: &SimplexVector) -> Result<f64> {
    Ok(log_diversity_order_one(z, p)?.exp())
}

/// `ln D_1 = −Σ_{j ∈ supp p} p_j ln (Zp)_j`.
pub fn log_diversity_order_one(z: &SimilarityMatrix, p: &SimplexVector) -> Result<f64> {
    let logs = log_zp_on_support(z, p)?;
    Ok(-logs.iter().map(|&(j, l)| p.as_slice()[j] * l).sum::<f64>())
}

/// Quadratic entropy `pᵀ d p`.
pub fn quadratic_entropy(d: &MetricMatrix, p: &SimplexVector) -> Result<f64> {
    check_dims(d.len(), p.len())?;
    Ok(quadratic_form(d, p.as_slice()))
}

pub(crate) fn quadratic_form(d: &MetricMatrix, x: &[f64]) -> f64 {
    let n = d.len();
    let mut s = 0.0;
    for j in 0..n {
        if x[j] == 0.0 {
            continue;
        }
        let mut row = 0.0;
        for k in 0..n {
            row += d.get(j, k) * x[k];
        }
        s += x[j] * row;
    }
    s
}

/// `t · pᵀ d p`, the first-order small-scale approximation of `ln D_1` for
/// `Z = exp[−t d]` (from `Z ≈ 11ᵀ − t d`).
pub fn small_scale_log_diversity(d: &MetricMatrix, p: &SimplexVector, t: f64) -> Result<f64> {
    Ok(t * quadratic_entropy(d, p)?)
}

/// Normalized weighting `w / Σ w`; requires every `w_j > 0`.
pub fn max_diversity_from_weighting(z: &SimilarityMatrix) -> Result<SimplexVector> {
    let w = weighting(z)?;
    if let Some((index, &value)) = w.w.iter().enumerate().find(|(_, v)| **v <= 0.0) {
        return Err(Error::NonPositiveWeighting { index, value });
    }
    SimplexVector::new(w.w)
}
