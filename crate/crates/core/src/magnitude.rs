//! Similarity matrices `Z = exp[−t d]`, weightings `Z w = 1` and magnitude.

use std::sync::OnceLock;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymmetricIndefinite;
use crate::metric::MetricMatrix;

/// Residual tolerance per point; the bound used is `DEFAULT_TOL_RES · n`.
pub const DEFAULT_TOL_RES: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolvePath {
    Cholesky,
    SymmetricIndefinite,
}

#[derive(Debug, Clone)]
enum Factorization {
    Cholesky(Cholesky<f64, Dyn>),
    Indefinite(SymmetricIndefinite),
}

impl Factorization {
    fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        match self {
            Factorization::Cholesky(c) => c.solve(b),
            Factorization::Indefinite(f) => DVector::from_vec(f.solve(b.as_slice())),
        }
    }

    fn path(&self) -> SolvePath {
        match self {
            Factorization::Cholesky(_) => SolvePath::Cholesky,
            Factorization::Indefinite(_) => SolvePath::SymmetricIndefinite,
        }
    }
}

/// Symmetric similarity matrix with unit diagonal and entries in `[0, 1]`,
/// usually `exp[−t d]`. The factorization is computed once on first use.
#[derive(Debug, Clone)]
pub struct SimilarityMatrix {
    z: DMatrix<f64>,
    t: Option<f64>,
    factorization: OnceLock<Option<Factorization>>,
}

impl SimilarityMatrix {
    pub fn new(d: &MetricMatrix, t: f64) -> Result<Self> {
        similarity_matrix(d, t)
    }

    /// A general similarity matrix (e.g. the identity for the naive model).
    pub fn from_raw(z: DMatrix<f64>) -> Result<Self> {
        if !z.is_square() {
            return Err(Error::NonSquare {
                rows: z.nrows(),
                cols: z.ncols(),
            });
        }
        let n = z.nrows();
        for i in 0..n {
            if z[(i, i)] != 1.0 {
                return Err(Error::InvalidConfig(format!("similarity diagonal Z[{i}][{i}] != 1")));
            }
            for j in 0..n {
                let v = z[(i, j)];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidConfig(format!("similarity entry Z[{i}][{j}] = {v}")));
                }
                if v != z[(j, i)] {
                    return Err(Error::InvalidConfig("similarity matrix is not symmetric".into()));
                }
            }
        }
        Ok(Self {
            z,
            t: None,
            factorization: OnceLock::new(),
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            z: DMatrix::identity(n, n),
            t: None,
            factorization: OnceLock::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.z.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn scale(&self) -> Option<f64> {
        self.t
    }

    /// `Z p`.
    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        (&self.z * DVector::from_column_slice(p)).as_slice().to_vec()
    }

    fn factorization(&self) -> Option<&Factorization> {
        self.factorization
            .get_or_init(|| {
                if let Some(c) = Cholesky::new(self.z.clone()) {
                    return Some(Factorization::Cholesky(c));
                }
                SymmetricIndefinite::factor(&self.z)
                    .ok()
                    .map(Factorization::Indefinite)
            })
            .as_ref()
    }
}

/// `Z = exp[−t d]` componentwise, with an exact unit diagonal.
pub fn similarity_matrix(d: &MetricMatrix, t: f64) -> Result<SimilarityMatrix> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::NonPositiveScale(t));
    }
    let n = d.len();
    let z = DMatrix::from_fn(n, n, |j, k| if j == k { 1.0 } else { (-t * d.get(j, k)).exp() });
    Ok(SimilarityMatrix {
        z,
        t: Some(t),
        factorization: OnceLock::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weighting {
    pub w: Vec<f64>,
    pub t: Option<f64>,
    pub magnitude: f64,
    /// `‖Z w − 1‖_∞`.
    pub residual: f64,
    pub solve_path: SolvePath,
}

pub fn weighting(z: &SimilarityMatrix) -> Result<Weighting> {
    weighting_with_tol(z, DEFAULT_TOL_RES * z.len().max(1) as f64)
}

/// Solves `Z w = 1` (Cholesky, falling back to Bunch–Kaufman) with one step
/// of iterative refinement.
pub fn weighting_with_tol(z: &SimilarityMatrix, tol_res: f64) -> Result<Weighting> {
    let n = z.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let fact = z.factorization().ok_or(Error::SingularOrIndefinite)?;
    let ones = DVector::from_element(n, 1.0);
    let mut w = fact.solve(&ones);
    let r = &ones - &z.z * &w;
    w += fact.solve(&r);
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularOrIndefinite);
    }
    let residual = (&ones - &z.z * &w).amax();
    if residual > tol_res {
        return Err(Error::ResidualTooLarge {
            residual,
            tolerance: tol_res,
        });
    }
    let magnitude = w.iter().sum();
    Ok(Weighting {
        w: w.as_slice().to_vec(),
        t: z.t,
        magnitude,
        residual,
        solve_path: fact.path(),
    })
}

/// One row of a magnitude profile; failed solves keep their error message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub t: f64,
    pub weighting: Option<Weighting>,
    pub error: Option<String>,
}

impl ProfilePoint {
    pub fn magnitude(&self) -> Option<f64> {
        self.weighting.as_ref().map(|w| w.magnitude)
    }
}

/// Weighting and magnitude at every scale in `t_grid`. A failed scale is
/// flagged, not fatal.
pub fn magnitude_profile(d: &MetricMatrix, t_grid: &[f64]) -> Result<Vec<ProfilePoint>> {
    magnitude_profile_with_tol(d, t_grid, DEFAULT_TOL_RES * d.len().max(1) as f64)
}

/// [`magnitude_profile`] with an absolute residual tolerance.
pub fn magnitude_profile_with_tol(d: &MetricMatrix, t_grid: &[f64], tol_res: f64) -> Result<Vec<ProfilePoint>> {
    if t_grid.is_empty() {
        return Err(Error::InvalidConfig("empty t grid".into()));
    }
    if let Some(&bad) = t_grid.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(Error::NonPositiveScale(bad));
    }
    Ok(t_grid
        .par_iter()
        .map(|&t| match similarity_matrix(d, t).and_then(|z| weighting_with_tol(&z, tol_res)) {
            Ok(w) => ProfilePoint {
                t,
                weighting: Some(w),
                error: None,
            },
            Err(e) => ProfilePoint {
                t,
                weighting: None,
                error: Some(e.to_string()),
            },
        })
        .collect())
}

/// `count` points log-spaced over `[lo, hi]`, endpoints included.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..count)
                .map(|i| {
                    if i == 0 {
                        lo
                    } else if i == count - 1 {
                        hi
                    } else {
                        (a + (b - a) * i as f64 / (count - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}

/// 50 log-spaced scales over `[1e-2, 1e2] / median off-diagonal distance`.
pub fn default_t_grid(d: &MetricMatrix) -> Vec<f64> {
    let n = d.len();
    let mut off: Vec<f64> = (0..n)
        .flat_map(|j| (j + 1..n).map(move |k| (j, k)))
        .map(|(j, k)| d.get(j, k))
        .collect();
    let median = if off.is_empty() {
        1.0
    } else {
        off.sort_by(f64::total_cmp);
        let m = off.len();
        if m % 2 == 1 {
            off[m / 2]
        } else {
            0.5 * (off[m / 2 - 1] + off[m / 2])
        }
    };
    log_spaced(1e-2 / median, 1e2 / median, 50)
}
