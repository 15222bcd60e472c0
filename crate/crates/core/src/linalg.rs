//! Dense symmetric linear algebra used by the solvers.
//!
//! Distance matrices of strict negative type have exactly one positive
//! eigenvalue, so they are symmetric *indefinite*. [`SymmetricIndefinite`] is
//! a Bunch–Kaufman `P A Pᵀ = L D Lᵀ` factorization with 1x1 and 2x2 pivots;
//! similarity matrices go through Cholesky first (see [`crate::magnitude`]).

use nalgebra::DMatrix;

/// Growth-control constant of the Bunch–Kaufman pivot rule, (1 + √17) / 8.
const BK_ALPHA: f64 = 0.640_388_203_202_208;

/// Returned when a pivot is numerically zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Singular {
    pub step: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pivot {
    One,
    Two,
}

/// `P A Pᵀ = L D Lᵀ` with unit lower-triangular `L` and block-diagonal `D`.
#[derive(Debug, Clone)]
pub struct SymmetricIndefinite {
    n: usize,
    /// Row-major; strict lower part holds `L`, diagonal blocks hold `D`.
    lu: Vec<f64>,
    /// `(P A Pᵀ)[i][j] = A[perm[i]][perm[j]]`.
    perm: Vec<usize>,
    /// Pivot kind keyed by the first index of its block.
    pivots: Vec<(usize, Pivot)>,
}

impl SymmetricIndefinite {
    pub fn factor(a: &DMatrix<f64>) -> Result<Self, Singular> {
        assert!(a.is_square());
        let idx: Vec<usize> = (0..a.nrows()).collect();
        Self::factor_principal(a, &idx)
    }

    /// Factorizes the principal submatrix `a[idx, idx]` without copying it out
    /// first.
    pub fn factor_principal(a: &DMatrix<f64>, idx: &[usize]) -> Result<Self, Singular> {
        let n = idx.len();
        let mut lu = vec![0.0; n * n];
        for (r, &i) in idx.iter().enumerate() {
            for (c, &j) in idx.iter().enumerate().take(r + 1) {
                lu[r * n + c] = a[(i, j)];
            }
        }
        let scale = lu.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let tiny = (n.max(1) as f64) * f64::EPSILON * scale;

        let mut perm: Vec<usize> = (0..n).collect();
        let mut pivots = Vec::with_capacity(n);
        let mut col0 = vec![0.0; n];
        let mut col1 = vec![0.0; n];

        let mut k = 0;
        while k < n {
            let absakk = lu[k * n + k].abs();
            let (imax, colmax) = (k + 1..n)
                .map(|i| (i, lu[i * n + k].abs()))
                .fold((k, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });

            if absakk.max(colmax) <= tiny {
                return Err(Singular { step: k });
            }

            let (kp, step) = if absakk >= BK_ALPHA * colmax {
                (k, Pivot::One)
            } else {
                let row = (k..imax).map(|j| lu[imax * n + j].abs());
                let col = (imax + 1..n).map(|i| lu[i * n + imax].abs());
                let rowmax = row.chain(col).fold(0.0_f64, f64::max);
                if absakk * rowmax >= BK_ALPHA * colmax * colmax {
                    (k, Pivot::One)
                } else if lu[imax * n + imax].abs() >= BK_ALPHA * rowmax {
                    (imax, Pivot::One)
                } else {
                    (imax, Pivot::Two)
                }
            };

            let kk = match step {
                Pivot::One => k,
                Pivot::Two => k + 1,
            };
            if kp != kk {
                symmetric_swap(&mut lu, n, kk, kp);
                perm.swap(kk, kp);
            }

            match step {
                Pivot::One => {
                    let dkk = lu[k * n + k];
                    if dkk.abs() <= tiny {
                        return Err(Singular { step: k });
                    }
                    for i in k + 1..n {
                        col0[i] = lu[i * n + k];
                    }
                    for i in k + 1..n {
                        let li = col0[i] / dkk;
                        if li != 0.0 {
                            let row = &mut lu[i * n + k + 1..=i * n + i];
                            for (x, c) in row.iter_mut().zip(&col0[k + 1..=i]) {
                                *x -= li * c;
                            }
                        }
                        lu[i * n + k] = li;
                    }
                    pivots.push((k, Pivot::One));
                    k += 1;
                }
                Pivot::Two => {
                    let d11 = lu[k * n + k];
                    let d21 = lu[(k + 1) * n + k];
                    let d22 = lu[(k + 1) * n + k + 1];
                    let det = d11 * d22 - d21 * d21;
                    let det_scale = (d11 * d22).abs().max(d21 * d21);
                    if det.abs() <= (n as f64) * f64::EPSILON * det_scale {
                        return Err(Singular { step: k });
                    }
                    for i in k + 2..n {
                        col0[i] = lu[i * n + k];
                        col1[i] = lu[i * n + k + 1];
                    }
                    for i in k + 2..n {
                        let l1 = (col0[i] * d22 - col1[i] * d21) / det;
                        let l2 = (col1[i] * d11 - col0[i] * d21) / det;
                        let row = &mut lu[i * n + k + 2..=i * n + i];
                        for ((x, c0), c1) in row
                            .iter_mut()
                            .zip(&col0[k + 2..=i])
                            .zip(&col1[k + 2..=i])
                        {
                            *x -= l1 * c0 + l2 * c1;
                        }
                        lu[i * n + k] = l1;
                        lu[i * n + k + 1] = l2;
                    }
                    pivots.push((k, Pivot::Two));
                    k += 2;
                }
            }
        }

        Ok(Self {
            n,
            lu,
            perm,
            pivots,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let lu = &self.lu;
        let mut y: Vec<f64> = self.perm.iter().map(|&i| b[i]).collect();

        // L y = P b
        for &(k, piv) in &self.pivots {
            match piv {
                Pivot::One => {
                    let yk = y[k];
                    for i in k + 1..n {
                        y[i] -= lu[i * n + k] * yk;
                    }
                }
                Pivot::Two => {
                    let (y0, y1) = (y[k], y[k + 1]);
                    for i in k + 2..n {
                        y[i] -= lu[i * n + k] * y0 + lu[i * n + k + 1] * y1;
                    }
                }
            }
        }
        // D z = y
        for &(k, piv) in &self.pivots {
            match piv {
                Pivot::One => y[k] /= lu[k * n + k],
                Pivot::Two => {
                    let d11 = lu[k * n + k];
                    let d21 = lu[(k + 1) * n + k];
                    let d22 = lu[(k + 1) * n + k + 1];
                    let det = d11 * d22 - d21 * d21;
                    let (y0, y1) = (y[k], y[k + 1]);
                    y[k] = (d22 * y0 - d21 * y1) / det;
                    y[k + 1] = (d11 * y1 - d21 * y0) / det;
                }
            }
        }
        // Lᵀ x = z
        for &(k, piv) in self.pivots.iter().rev() {
            match piv {
                Pivot::One => {
                    let s: f64 = (k + 1..n).map(|i| lu[i * n + k] * y[i]).sum();
                    y[k] -= s;
                }
                Pivot::Two => {
                    let s0: f64 = (k + 2..n).map(|i| lu[i * n + k] * y[i]).sum();
                    let s1: f64 = (k + 2..n).map(|i| lu[i * n + k + 1] * y[i]).sum();
                    y[k] -= s0;
                    y[k + 1] -= s1;
                }
            }
        }

        let mut x = vec![0.0; n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = y[i];
        }
        x
    }

    /// Numbers of (positive, negative) eigenvalues, by Sylvester's law of
    /// inertia applied to `D`.
    pub fn inertia(&self) -> (usize, usize) {
        let n = self.n;
        let lu = &self.lu;
        let mut pos = 0;
        let mut neg = 0;
        for &(k, piv) in &self.pivots {
            match piv {
                Pivot::One => {
                    if lu[k * n + k] > 0.0 {
                        pos += 1
                    } else {
                        neg += 1
                    }
                }
                Pivot::Two => {
                    let d11 = lu[k * n + k];
                    let d21 = lu[(k + 1) * n + k];
                    let d22 = lu[(k + 1) * n + k + 1];
                    if d11 * d22 - d21 * d21 < 0.0 {
                        pos += 1;
                        neg += 1;
                    } else if d11 + d22 > 0.0 {
                        pos += 2;
                    } else {
                        neg += 2;
                    }
                }
            }
        }
        (pos, neg)
    }
}

/// Swaps indices `a < b` of a symmetric matrix stored in the lower triangle,
/// including the already-computed rows of `L` to the left.
fn symmetric_swap(lu: &mut [f64], n: usize, a: usize, b: usize) {
    debug_assert!(a < b);
    for j in 0..a {
        lu.swap(a * n + j, b * n + j);
    }
    lu.swap(a * n + a, b * n + b);
    for j in a + 1..b {
        lu.swap(j * n + a, b * n + j);
    }
    for i in b + 1..n {
        lu.swap(i * n + a, i * n + b);
    }
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Upper bound on the spectral norm of a symmetric nonnegative matrix.
///
/// Runs power iteration from the all-ones vector and returns the
/// Collatz–Wielandt bound `max_i (A x)_i / x_i`, which dominates the Perron
/// root (and hence `‖A‖₂`) for every positive `x`.
pub fn perron_norm_bound(a: &DMatrix<f64>, iterations: usize) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut x = nalgebra::DVector::from_element(n, 1.0);
    let mut best = f64::INFINITY;
    for _ in 0..iterations.max(1) {
        let y = a * &x;
        let bound = y
            .iter()
            .zip(x.iter())
            .map(|(yi, xi)| yi / xi)
            .fold(0.0_f64, f64::max);
        best = best.min(bound);
        let norm = y.amax();
        if norm == 0.0 {
            return 0.0;
        }
        // Keep x strictly positive so the bound stays valid.
        x = y.map(|v| (v / norm).max(1e-300));
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn residual(a: &DMatrix<f64>, x: &[f64], b: &[f64]) -> f64 {
        let xv = nalgebra::DVector::from_column_slice(x);
        let r = a * xv - nalgebra::DVector::from_column_slice(b);
        r.amax()
    }

    #[test]
    fn solves_indefinite_needing_two_by_two_pivot() {
        // Zero diagonal forces a 2x2 pivot at the first step.
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0]);
        let f = SymmetricIndefinite::factor(&a).unwrap();
        let x = f.solve(&[1.0, 1.0, 1.0]);
        assert!((x[0] - 0.5).abs() < 1e-15);
        assert!(x[1].abs() < 1e-15);
        assert!((x[2] - 0.5).abs() < 1e-15);
        assert_eq!(f.inertia(), (1, 2));
    }

    #[test]
    fn detects_singular() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(SymmetricIndefinite::factor(&a).is_err());
        let z = DMatrix::<f64>::zeros(3, 3);
        assert!(SymmetricIndefinite::factor(&z).is_err());
    }

    #[test]
    fn principal_submatrix_matches_explicit_copy() {
        let a = DMatrix::from_fn(6, 6, |i, j| ((i as f64) - (j as f64)).abs().sqrt());
        let idx = [0, 2, 3, 5];
        let sub = a.select_rows(&idx).select_columns(&idx);
        let b = [1.0, -2.0, 0.5, 3.0];
        let x1 = SymmetricIndefinite::factor_principal(&a, &idx).unwrap().solve(&b);
        let x2 = SymmetricIndefinite::factor(&sub).unwrap().solve(&b);
        for (u, v) in x1.iter().zip(&x2) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn perron_bound_dominates_spectral_norm() {
        let a = DMatrix::from_fn(8, 8, |i, j| ((i as f64) - (j as f64)).abs());
        let ev = symmetric_eigenvalues(a.clone());
        let norm = ev.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let bound = perron_norm_bound(&a, 50);
        assert!(bound >= norm * (1.0 - 1e-14));
        assert!(bound <= norm * 1.01);
    }

    proptest! {
        #[test]
        fn agrees_with_lu_on_random_symmetric(
            n in 1usize..24,
            seed in proptest::collection::vec(-1.0f64..1.0, 24 * 24),
            rhs in proptest::collection::vec(-1.0f64..1.0, 24),
        ) {
            let a = DMatrix::from_fn(n, n, |i, j| {
                let (r, c) = if i >= j { (i, j) } else { (j, i) };
                seed[r * 24 + c]
            });
            let b = &rhs[..n];
            if let Some(x_lu) = a.clone().lu().solve(&nalgebra::DVector::from_column_slice(b)) {
                // Skip badly conditioned draws where neither solver is meaningful.
                let ev = symmetric_eigenvalues(a.clone());
                let min_abs = ev.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
                let max_abs = ev.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                prop_assume!(min_abs > 1e-6 * max_abs);
                let f = SymmetricIndefinite::factor(&a).unwrap();
                let x = f.solve(b);
                prop_assert!(residual(&a, &x, b) < 1e-9 * (1.0 + x_lu.amax()));
                let pos = ev.iter().filter(|v| **v > 0.0).count();
                prop_assert_eq!(f.inertia(), (pos, n - pos));
            }
        }
    }
}
