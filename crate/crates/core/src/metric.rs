//! Finite metrics: validation, distance-matrix builders, the reduced
//! negative-type test matrix and the single-linkage ultrametric.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Default relative tolerance for asymmetry and triangle-inequality checks.
pub const DEFAULT_TOL_TRI: f64 = 1e-9;
/// Default relative eigenvalue tolerance for negative-type classification.
pub const DEFAULT_TOL_EIG: f64 = 1e-10;
/// Default antipode tolerance for spherical metrics, in radians.
pub const DEFAULT_ANTIPODE_TOL: f64 = 1e-8;

/// A validated finite metric: symmetric, zero diagonal, positive off the
/// diagonal, triangle inequality within tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricMatrix {
    entries: DMatrix<f64>,
    labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n: usize,
    pub max_asymmetry: f64,
    pub max_triangle_violation: f64,
}

impl MetricMatrix {
    /// Wraps entries already known to form a metric (e.g. built from point
    /// coordinates). Only distinctness is checked.
    pub(crate) fn from_trusted(entries: DMatrix<f64>) -> Result<Self> {
        debug_assert!(entries.is_square());
        if let Some((j, k)) = first_zero_off_diagonal(&entries) {
            return Err(Error::DuplicatePoints(j, k));
        }
        Ok(Self {
            entries,
            labels: None,
        })
    }

    /// For tests that need a metric with repeated points.
    #[cfg(test)]
    pub(crate) fn from_trusted_allowing_duplicates(raw: Vec<Vec<f64>>) -> Self {
        let n = raw.len();
        Self {
            entries: DMatrix::from_fn(n, n, |i, j| raw[i][j]),
            labels: None,
        }
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.entries[(j, k)]
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|i| self.entries.row(i).iter().copied().collect())
            .collect()
    }

    pub fn max_entry(&self) -> f64 {
        self.entries.iter().copied().fold(0.0, f64::max)
    }

    /// Restriction to `idx` (in the given order), keeping labels.
    pub fn restrict(&self, idx: &[usize]) -> MetricMatrix {
        let entries = DMatrix::from_fn(idx.len(), idx.len(), |a, b| self.entries[(idx[a], idx[b])]);
        let labels = self
            .labels
            .as_ref()
            .map(|l| idx.iter().map(|&i| l[i].clone()).collect());
        MetricMatrix { entries, labels }
    }

    /// `c · d` for `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<MetricMatrix> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::NonPositiveScale(c));
        }
        Ok(MetricMatrix {
            entries: &self.entries * c,
            labels: self.labels.clone(),
        })
    }

    /// Row sums `Σ_k d_jk`.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.entries.row(j).sum()).collect()
    }

    /// `d p`.
    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|j| (0..n).map(|k| self.entries[(j, k)] * p[k]).sum())
            .collect()
    }
}

fn first_zero_off_diagonal(m: &DMatrix<f64>) -> Option<(usize, usize)> {
    let n = m.nrows();
    for j in 0..n {
        for k in j + 1..n {
            if m[(j, k)] == 0.0 {
                return Some((j, k));
            }
        }
    }
    None
}

fn check_square(raw: &[Vec<f64>]) -> Result<usize> {
    let n = raw.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    for row in raw {
        if row.len() != n {
            return Err(Error::NonSquare {
                rows: n,
                cols: row.len(),
            });
        }
    }
    Ok(n)
}

fn basic_checks(raw: &[Vec<f64>]) -> Result<usize> {
    let n = check_square(raw)?;
    for (i, row) in raw.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteEntry { row: i, col: j });
            }
            if v < 0.0 {
                return Err(Error::NegativeEntry {
                    row: i,
                    col: j,
                    value: v,
                });
            }
        }
        if row[i] != 0.0 {
            return Err(Error::NonZeroDiagonal {
                index: i,
                value: row[i],
            });
        }
    }
    Ok(n)
}

/// Symmetrizes by averaging, returning the matrix and `‖raw − rawᵀ‖_max`.
fn symmetrize(raw: &[Vec<f64>], n: usize) -> (DMatrix<f64>, f64) {
    let mut asym = 0.0_f64;
    let m = DMatrix::from_fn(n, n, |i, j| {
        asym = asym.max((raw[i][j] - raw[j][i]).abs());
        if i == j {
            0.0
        } else {
            0.5 * (raw[i][j] + raw[j][i])
        }
    });
    (m, asym)
}

/// Largest `d_ik − d_ij − d_jk` over all triples, with a witness.
pub fn max_triangle_violation(m: &DMatrix<f64>) -> (f64, Option<(usize, usize, usize)>) {
    let n = m.nrows();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut best = (0.0_f64, None);
            for j in 0..n {
                let dij = m[(i, j)];
                for k in 0..n {
                    let v = m[(i, k)] - dij - m[(j, k)];
                    if v > best.0 {
                        best = (v, Some((i, j, k)));
                    }
                }
            }
            best
        })
        .reduce(
            || (0.0, None),
            |a, b| if b.0 > a.0 || (b.0 == a.0 && a.1.is_none()) { b } else { a },
        )
}

/// Validates a raw square matrix as a finite metric.
///
/// Asymmetry up to `tol_tri · max entry` is averaged away; larger asymmetry
/// is rejected. Triangle violations are measured against the same
/// relative tolerance.
pub fn validate_metric(raw: &[Vec<f64>], tol_tri: f64) -> Result<(MetricMatrix, ValidationReport)> {
    if !(tol_tri >= 0.0) {
        return Err(Error::InvalidConfig(format!("tol_tri = {tol_tri}")));
    }
    let n = basic_checks(raw)?;
    let (entries, max_asymmetry) = symmetrize(raw, n);
    let scale = entries.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let tolerance = tol_tri * scale;
    if max_asymmetry > tolerance {
        return Err(Error::AsymmetryBeyondTolerance {
            max_asymmetry,
            tolerance,
        });
    }
    if let Some((j, k)) = first_zero_off_diagonal(&entries) {
        return Err(Error::DuplicatePoints(j, k));
    }
    let (max_triangle_violation, witness) = max_triangle_violation(&entries);
    if max_triangle_violation > tolerance {
        let (i, j, k) = witness.expect("violation has a witness");
        return Err(Error::TriangleViolation {
            i,
            j,
            k,
            violation: max_triangle_violation,
        });
    }
    let report = ValidationReport {
        n,
        max_asymmetry,
        max_triangle_violation,
    };
    Ok((
        MetricMatrix {
            entries,
            labels: None,
        },
        report,
    ))
}

/// Points merged by [`validate_metric_merging`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeReport {
    /// Original indices of the kept representatives.
    pub representatives: Vec<usize>,
    /// For each original index, the merged index it maps to.
    pub assignment: Vec<usize>,
    pub multiplicities: Vec<usize>,
}

/// Like [`validate_metric`] but collapses zero-distance groups onto their
/// lowest index instead of rejecting them.
pub fn validate_metric_merging(
    raw: &[Vec<f64>],
    tol_tri: f64,
) -> Result<(MetricMatrix, ValidationReport, MergeReport)> {
    let n = basic_checks(raw)?;
    let mut assignment = vec![usize::MAX; n];
    let mut representatives = Vec::new();
    for i in 0..n {
        if assignment[i] != usize::MAX {
            continue;
        }
        let g = representatives.len();
        representatives.push(i);
        for j in i..n {
            if assignment[j] == usize::MAX && raw[i][j] == 0.0 && raw[j][i] == 0.0 {
                assignment[j] = g;
            }
        }
    }
    let mut multiplicities = vec![0; representatives.len()];
    for &g in &assignment {
        multiplicities[g] += 1;
    }
    let reduced: Vec<Vec<f64>> = representatives
        .iter()
        .map(|&i| representatives.iter().map(|&j| raw[i][j]).collect())
        .collect();
    let (metric, report) = validate_metric(&reduced, tol_tri)?;
    Ok((
        metric,
        report,
        MergeReport {
            representatives,
            assignment,
            multiplicities,
        },
    ))
}

/// `T_k^-`: entries `d_kj + d_ik − d_ij` for `i, j ≠ k`.
pub fn reduced_test_matrix(d: &MetricMatrix, k: usize) -> Result<DMatrix<f64>> {
    let n = d.len();
    if n < 2 {
        return Err(Error::TooFewPoints { required: 2, got: n });
    }
    if k >= n {
        return Err(Error::IndexOutOfRange { index: k, n });
    }
    let keep: Vec<usize> = (0..n).filter(|&i| i != k).collect();
    Ok(DMatrix::from_fn(n - 1, n - 1, |a, b| {
        let (i, j) = (keep[a], keep[b]);
        d.get(k, j) + d.get(i, k) - d.get(i, j)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NegativeType {
    StrictNegativeType,
    NegativeTypeOnly,
    NotNegativeType,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NegativeTypeClass {
    pub class: NegativeType,
    pub min_eigenvalue: f64,
    pub max_abs_eigenvalue: f64,
    pub k_used: usize,
}

impl NegativeTypeClass {
    pub fn is_strict(&self) -> bool {
        self.class == NegativeType::StrictNegativeType
    }
}

/// Classifies `d` by the spectrum of `T_0^-`.
pub fn classify_negative_type(d: &MetricMatrix, tol_eig: f64) -> Result<NegativeTypeClass> {
    classify_negative_type_at(d, 0, tol_eig)
}

/// Same as [`classify_negative_type`] with an explicit deleted index.
pub fn classify_negative_type_at(d: &MetricMatrix, k: usize, tol_eig: f64) -> Result<NegativeTypeClass> {
    let t = reduced_test_matrix(d, k)?;
    let ev = linalg::symmetric_eigenvalues(t);
    let min_eigenvalue = ev[0];
    let max_abs_eigenvalue = ev.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let thresh = tol_eig * max_abs_eigenvalue;
    let class = if min_eigenvalue > thresh {
        NegativeType::StrictNegativeType
    } else if min_eigenvalue >= -thresh {
        NegativeType::NegativeTypeOnly
    } else {
        NegativeType::NotNegativeType
    };
    Ok(NegativeTypeClass {
        class,
        min_eigenvalue,
        max_abs_eigenvalue,
        k_used: k,
    })
}

/// A zero-sum unit vector `x` maximizing `−yᵀ T_k^- y` (with `y` = `x`
/// minus its `k`th entry), together with `xᵀ d x`.
///
/// Since `xᵀ d x = −yᵀ T_k^- y` for zero-sum `x`, a positive value is a
/// tolerance-free certificate that `d` is not of negative type.
pub fn negative_type_witness(d: &MetricMatrix, k: usize) -> Result<(f64, Vec<f64>)> {
    let t = reduced_test_matrix(d, k)?;
    let eig = t.symmetric_eigen();
    let (col, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or(Error::EmptyInput)?;
    let y = eig.eigenvectors.column(col);
    let mut x = Vec::with_capacity(d.len());
    let mut rest = y.iter();
    for i in 0..d.len() {
        x.push(if i == k { -y.sum() } else { *rest.next().unwrap_or(&0.0) });
    }
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    x.iter_mut().for_each(|v| *v /= norm);
    let dx = d.apply(&x);
    let value = x.iter().zip(&dx).map(|(a, b)| a * b).sum();
    Ok((value, x))
}

fn check_rows(points: &[Vec<f64>]) -> Result<usize> {
    let first = points.first().ok_or(Error::EmptyInput)?;
    let dim = first.len();
    for (r, row) in points.iter().enumerate() {
        if row.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: row.len(),
            });
        }
        if let Some(col) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEntry { row: r, col });
        }
    }
    Ok(dim)
}

fn pairwise<F>(m: usize, f: F) -> DMatrix<f64>
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|j| (0..m).map(|k| if k > j { f(j, k) } else { 0.0 }).collect())
        .collect();
    DMatrix::from_fn(m, m, |j, k| match j.cmp(&k) {
        std::cmp::Ordering::Less => rows[j][k],
        std::cmp::Ordering::Greater => rows[k][j],
        std::cmp::Ordering::Equal => 0.0,
    })
}

/// `‖x_j − x_k‖_p` over the rows of `points`.
pub fn euclidean_distance_matrix(points: &[Vec<f64>], norm_p: f64) -> Result<MetricMatrix> {
    if !(norm_p >= 1.0) || norm_p.is_infinite() {
        return Err(Error::InvalidExponent(norm_p));
    }
    check_rows(points)?;
    let entries = pairwise(points.len(), |j, k| {
        let diffs = points[j].iter().zip(&points[k]).map(|(a, b)| (a - b).abs());
        if norm_p == 2.0 {
            diffs.map(|v| v * v).sum::<f64>().sqrt()
        } else if norm_p == 1.0 {
            diffs.sum()
        } else {
            diffs.map(|v| v.powf(norm_p)).sum::<f64>().powf(norm_p.recip())
        }
    });
    MetricMatrix::from_trusted(entries)
}

/// Geodesic metric on the unit sphere after row normalization.
#[derive(Debug, Clone)]
pub struct SphericalMetric {
    pub metric: MetricMatrix,
    pub antipodes_present: bool,
    pub antipodal_pairs: Vec<(usize, usize)>,
}

/// Unit-normalizes each row.
pub fn normalize_rows(vectors: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    check_rows(vectors)?;
    vectors
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                Err(Error::ZeroVector(i))
            } else {
                Ok(v.iter().map(|x| x / norm).collect())
            }
        })
        .collect()
}

/// Angle between unit vectors, `2·atan2(‖u − v‖, ‖u + v‖)`.
///
/// Equal to `arccos⟨u, v⟩` but accurate near 0 and π.
pub fn unit_angle(u: &[f64], v: &[f64]) -> f64 {
    let (mut diff, mut sum) = (0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        diff += (a - b) * (a - b);
        sum += (a + b) * (a + b);
    }
    2.0 * diff.sqrt().atan2(sum.sqrt())
}

pub fn spherical_distance_matrix(vectors: &[Vec<f64>], antipode_tol: f64) -> Result<SphericalMetric> {
    let units = normalize_rows(vectors)?;
    let entries = pairwise(units.len(), |j, k| unit_angle(&units[j], &units[k]));
    let m = entries.nrows();
    let mut antipodal_pairs = Vec::new();
    for j in 0..m {
        for k in j + 1..m {
            if entries[(j, k)] > std::f64::consts::PI - antipode_tol {
                antipodal_pairs.push((j, k));
            }
        }
    }
    Ok(SphericalMetric {
        metric: MetricMatrix::from_trusted(entries)?,
        antipodes_present: !antipodal_pairs.is_empty(),
        antipodal_pairs,
    })
}

/// Subdominant ultrametric: `u_jk` is the minimax edge weight over all
/// `j → k` paths, read off a minimum spanning tree.
pub fn single_linkage_ultrametric(d: &MetricMatrix) -> MetricMatrix {
    let n = d.len();
    let mut u = DMatrix::zeros(n, n);
    if n < 2 {
        return MetricMatrix {
            entries: u,
            labels: d.labels.clone(),
        };
    }

    // Prim, O(n²).
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut parent = vec![0usize; n];
    let mut edges = Vec::with_capacity(n - 1);
    best[0] = 0.0;
    for _ in 0..n {
        let v = (0..n)
            .filter(|&i| !in_tree[i])
            .min_by(|&a, &b| best[a].total_cmp(&best[b]))
            .expect("vertex left");
        in_tree[v] = true;
        if v != 0 {
            edges.push((best[v], parent[v], v));
        }
        for w in 0..n {
            if !in_tree[w] && d.get(v, w) < best[w] {
                best[w] = d.get(v, w);
                parent[w] = v;
            }
        }
    }

    // Kruskal-order merge: every cross pair of two clusters gets the merge height.
    edges.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut cluster: Vec<usize> = (0..n).collect();
    for (w, a, b) in edges {
        let (ca, cb) = (cluster[a], cluster[b]);
        let (keep, gone) = if members[ca].len() >= members[cb].len() { (ca, cb) } else { (cb, ca) };
        let moved = std::mem::take(&mut members[gone]);
        for &x in &members[keep] {
            for &y in &moved {
                u[(x, y)] = w;
                u[(y, x)] = w;
            }
        }
        for &y in &moved {
            cluster[y] = keep;
        }
        members[keep].extend(moved);
    }
    MetricMatrix {
        entries: u,
        labels: d.labels.clone(),
    }
}

/// Example fixture: `d_01 = d_02 = 1`, `d_12 = δ`.
pub fn isosceles_example(delta: f64) -> MetricMatrix {
    let entries = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 1.0, 1.0, 0.0, delta, 1.0, delta, 0.0]);
    MetricMatrix::from_trusted(entries).expect("delta must be positive")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

    fn random_points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect()
    }

    #[test]
    fn validates_smallest_metric() {
        let (m, report) = validate_metric(&[vec![0.0, 1.0], vec![1.0, 0.0]], DEFAULT_TOL_TRI).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(report.max_triangle_violation, 0.0);
    }

    #[test]
    fn validates_isosceles_example() {
        let raw = vec![vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 0.01], vec![1.0, 0.01, 0.0]];
        let (m, _) = validate_metric(&raw, DEFAULT_TOL_TRI).unwrap();
        assert_eq!(m, isosceles_example(0.01));
    }

    #[test]
    fn rejects_nonzero_diagonal() {
        let err = validate_metric(&[vec![0.0, 1.0], vec![1.0, 0.5]], DEFAULT_TOL_TRI).unwrap_err();
        assert!(matches!(err, Error::NonZeroDiagonal { index: 1, .. }));
    }

    #[test]
    fn validation_errors() {
        assert!(matches!(
            validate_metric(&[vec![0.0, 1.0]], 1e-9),
            Err(Error::NonSquare { .. })
        ));
        assert!(matches!(
            validate_metric(&[vec![0.0, -1.0], vec![-1.0, 0.0]], 1e-9),
            Err(Error::NegativeEntry { .. })
        ));
        assert!(matches!(
            validate_metric(&[vec![0.0, 1.0], vec![1.1, 0.0]], 1e-9),
            Err(Error::AsymmetryBeyondTolerance { .. })
        ));
        assert!(matches!(
            validate_metric(&[vec![0.0, 0.0], vec![0.0, 0.0]], 1e-9),
            Err(Error::DuplicatePoints(0, 1))
        ));
        let bad = vec![vec![0.0, 1.0, 5.0], vec![1.0, 0.0, 1.0], vec![5.0, 1.0, 0.0]];
        match validate_metric(&bad, 1e-9) {
            Err(Error::TriangleViolation { i, j, k, violation }) => {
                assert_eq!((i, j, k), (0, 1, 2));
                assert!((violation - 3.0).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            validate_metric(&[vec![0.0, f64::INFINITY], vec![f64::INFINITY, 0.0]], 1e-9),
            Err(Error::NonFiniteEntry { .. })
        ));
    }

    #[test]
    fn small_asymmetry_is_averaged() {
        let raw = vec![vec![0.0, 1.0], vec![1.0 + 1e-12, 0.0]];
        let (m, report) = validate_metric(&raw, 1e-9).unwrap();
        assert_eq!(m.get(0, 1), m.get(1, 0));
        assert!(report.max_asymmetry > 0.0);
    }

    #[test]
    fn merging_collapses_duplicates() {
        let raw = vec![
            vec![0.0, 0.0, 1.0],
            vec![0.0, 0.0, 1.0],
            vec![1.0, 1.0, 0.0],
        ];
        let (m, _, merge) = validate_metric_merging(&raw, 1e-9).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(merge.multiplicities, vec![2, 1]);
        assert_eq!(merge.assignment, vec![0, 0, 1]);
    }

    #[test]
    fn reduced_test_matrix_examples() {
        let two = MetricMatrix::from_trusted(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        assert_eq!(reduced_test_matrix(&two, 0).unwrap(), DMatrix::from_element(1, 1, 2.0));
        let t = reduced_test_matrix(&isosceles_example(0.01), 0).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[2.0, 1.99, 1.99, 2.0]);
        assert!((t - expect).amax() < 1e-15);
        assert!(matches!(
            reduced_test_matrix(&two, 2),
            Err(Error::IndexOutOfRange { index: 2, n: 2 })
        ));
    }

    #[test]
    fn euclidean_examples() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        let d2 = euclidean_distance_matrix(&pts, 2.0).unwrap();
        assert_eq!(d2.get(0, 1), 1.0);
        assert_eq!(d2.get(0, 2), 1.0);
        assert_eq!(d2.get(1, 2), SQRT_2);
        let d1 = euclidean_distance_matrix(&pts, 1.0).unwrap();
        assert_eq!(d1.get(1, 2), 2.0);
        let d3 = euclidean_distance_matrix(&pts, 3.0).unwrap();
        assert!((d3.get(1, 2) - 2f64.powf(1.0 / 3.0)).abs() < 1e-15);
        assert!(matches!(
            euclidean_distance_matrix(&[vec![1.0, 2.0], vec![1.0, 2.0]], 2.0),
            Err(Error::DuplicatePoints(0, 1))
        ));
    }

    #[test]
    fn spherical_examples() {
        let s = spherical_distance_matrix(&[vec![1.0, 0.0], vec![0.0, 1.0]], DEFAULT_ANTIPODE_TOL).unwrap();
        assert!((s.metric.get(0, 1) - FRAC_PI_2).abs() < 1e-15);
        assert!(!s.antipodes_present);
        let s = spherical_distance_matrix(&[vec![1.0, 0.0], vec![-1.0, 0.0]], DEFAULT_ANTIPODE_TOL).unwrap();
        assert!(s.antipodes_present);
        assert_eq!(s.metric.get(0, 1), PI);
        assert!(matches!(
            spherical_distance_matrix(&[vec![0.0, 0.0], vec![1.0, 0.0]], 1e-8),
            Err(Error::ZeroVector(0))
        ));
        assert!(matches!(
            spherical_distance_matrix(&[vec![1.0, 1.0], vec![2.0, 2.0]], 1e-8),
            Err(Error::DuplicatePoints(0, 1))
        ));
    }

    fn sphere_points(points: &[[f64; 3]]) -> MetricMatrix {
        let v: Vec<Vec<f64>> = points.iter().map(|p| p.to_vec()).collect();
        spherical_distance_matrix(&v, DEFAULT_ANTIPODE_TOL).unwrap().metric
    }

    #[test]
    fn sphere_with_two_antipodal_pairs_is_not_strict() {
        // Poles plus two opposite equator points: x = (1, 1, −1, −1)/2 is a
        // zero-sum null direction of the quadratic form.
        let d = sphere_points(&[[0.0, 0.0, 1.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]);
        let c = classify_negative_type(&d, DEFAULT_TOL_EIG).unwrap();
        assert_eq!(c.class, NegativeType::NegativeTypeOnly);
    }

    #[test]
    fn poles_plus_one_equator_point_is_strict() {
        // T_0^- = [[2π, π], [π, π]] is positive definite.
        let d = sphere_points(&[[0.0, 0.0, 1.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]]);
        let t = reduced_test_matrix(&d, 0).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[2.0 * PI, PI, PI, PI]);
        assert!((t - expect).amax() < 1e-12);
        assert!(classify_negative_type(&d, DEFAULT_TOL_EIG).unwrap().is_strict());
    }

    #[test]
    fn random_planar_points_are_strict() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = euclidean_distance_matrix(&random_points(&mut rng, 10, 2), 2.0).unwrap();
        assert!(classify_negative_type(&d, DEFAULT_TOL_EIG).unwrap().is_strict());
    }

    #[test]
    fn ultrametric_chain_example() {
        let d = euclidean_distance_matrix(&[vec![0.0], vec![1.0], vec![3.0]], 2.0).unwrap();
        let u = single_linkage_ultrametric(&d);
        assert_eq!(u.get(0, 2), 2.0);
        assert_eq!(u.get(0, 1), 1.0);
        assert_eq!(u.get(1, 2), 2.0);
        // Ultrametric inputs are fixed points; two points are unchanged.
        assert_eq!(single_linkage_ultrametric(&u), u);
        let two = euclidean_distance_matrix(&[vec![0.0], vec![2.5]], 2.0).unwrap();
        assert_eq!(single_linkage_ultrametric(&two), two);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn test_matrix_symmetric_and_class_independent_of_k(seed in any::<u64>(), n in 2usize..30) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dim = rng.random_range(1..4);
            let mut d = euclidean_distance_matrix(&random_points(&mut rng, n, dim), 2.0).unwrap();
            if rng.random_bool(0.5) {
                d = single_linkage_ultrametric(&d);
            }
            let base = classify_negative_type(&d, DEFAULT_TOL_EIG).unwrap().class;
            for k in 0..n {
                let t = reduced_test_matrix(&d, k).unwrap();
                prop_assert_eq!(&t, &t.transpose());
                prop_assert_eq!(classify_negative_type_at(&d, k, DEFAULT_TOL_EIG).unwrap().class, base);
            }
        }

        #[test]
        fn euclidean_always_strict(seed in any::<u64>(), n in 2usize..50) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dim = rng.random_range(1..5);
            let d = euclidean_distance_matrix(&random_points(&mut rng, n, dim), 2.0).unwrap();
            prop_assert!(classify_negative_type(&d, DEFAULT_TOL_EIG).unwrap().is_strict());
        }

        #[test]
        fn ultrametric_properties(seed in any::<u64>(), n in 2usize..50) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = euclidean_distance_matrix(&random_points(&mut rng, n, 2), 2.0).unwrap();
            let u = single_linkage_ultrametric(&d);
            for i in 0..n {
                for j in 0..n {
                    prop_assert!(u.get(i, j) <= d.get(i, j));
                    prop_assert_eq!(u.get(i, j), u.get(j, i));
                    for k in 0..n {
                        prop_assert!(u.get(i, k) <= u.get(i, j).max(u.get(j, k)));
                    }
                }
            }
            let c = classify_negative_type(&u, DEFAULT_TOL_EIG).unwrap();
            prop_assert_ne!(c.class, NegativeType::NotNegativeType);
        }
    }
}
