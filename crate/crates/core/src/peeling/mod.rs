//! Maximum quadratic entropy ("peels") of strict negative type metrics.
//!
//! The peel `p_*(d) = argmax_{p ∈ Δ} pᵀ d p` is computed in two phases.
//!
//! The first repeatedly solves `d_JJ x = 1` and shrinks `J` to the positive
//! entries of the normalized solution until no entry is negative. This is
//! fast and usually exact, but dropping every negative entry at once can
//! discard points of the optimal support (it happens for higher-dimensional
//! Euclidean data), leaving `(d p)_k > (d p)_j` for some dropped `k`.
//!
//! When that happens a primal active-set phase finishes the job: add the
//! most violating point, step toward the maximizer on the enlarged affine
//! hull, and ratio-test back onto the simplex. On a strict negative type
//! metric the objective is strictly concave on the simplex, so this ends at
//! the unique maximizer.

mod oracle;

pub use oracle::{project_to_simplex, qp_oracle, QpReport};

use serde::{Deserialize, Serialize};

use crate::diversity::{quadratic_form, SimplexVector};
use crate::error::{Error, Result};
use crate::linalg::SymmetricIndefinite;
use crate::metric::{classify_negative_type, MetricMatrix, NegativeType, NegativeTypeClass};

pub const DEFAULT_TOL_NEG: f64 = 1e-12;
pub const DEFAULT_TOL_KKT: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeelOptions {
    /// Entries within `±tol_neg` count as zero.
    pub tol_neg: f64,
    pub tol_kkt: f64,
}

impl Default for PeelOptions {
    fn default() -> Self {
        Self {
            tol_neg: DEFAULT_TOL_NEG,
            tol_kkt: DEFAULT_TOL_KKT,
        }
    }
}

/// One peel of a metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeelLayer {
    pub p_star: SimplexVector,
    pub support: Vec<usize>,
    /// Passes of the shrinking loop after the initial solve.
    pub iterations: usize,
    /// `|J|` at each solve of the shrinking loop, starting with `n`.
    pub support_sizes: Vec<usize>,
    /// KKT residual where the shrinking loop stopped.
    pub shrink_kkt_residual: f64,
    /// Active-set steps needed after the shrinking loop (0 when it was
    /// already optimal).
    pub refinement_steps: usize,
    /// `p_*ᵀ d p_*`.
    pub entropy: f64,
    pub kkt_residual: f64,
    pub kkt_ok: bool,
    /// Last solve before clipping to the simplex.
    pub pre_clip: Vec<f64>,
    /// Set when the metric was not certified strict negative type.
    pub heuristic: bool,
    /// `(pᵀdp)(1ᵀd⁻¹1)`, attached to heuristic results.
    pub ratio_bound: Option<f64>,
}

/// Normalized solution of `d_JJ x = 1`, scattered into a length-`n` vector.
fn normalized_restricted_solve(d: &MetricMatrix, idx: &[usize]) -> Result<Vec<f64>> {
    let mut p = vec![0.0; d.len()];
    if let [j] = idx {
        // d_JJ = [0]; the point mass trivially satisfies d_JJ x = 0·1.
        p[*j] = 1.0;
        return Ok(p);
    }
    let singular = || Error::SingularSubmatrix { size: idx.len() };
    let fact = SymmetricIndefinite::factor_principal(d.entries(), idx).map_err(|_| singular())?;
    let x = fact.solve(&vec![1.0; idx.len()]);
    let total: f64 = x.iter().sum();
    // 1ᵀ d_JJ⁻¹ 1 > 0 whenever d_JJ is strict negative type.
    if !(total > 0.0 && total.is_finite()) {
        return Err(singular());
    }
    for (&j, xj) in idx.iter().zip(&x) {
        p[j] = xj / total;
    }
    Ok(p)
}

/// The peel `p_*(d)` with default tolerances.
pub fn scale_zero_argmax_diversity(d: &MetricMatrix) -> Result<PeelLayer> {
    scale_zero_argmax_diversity_with(d, &PeelOptions::default())
}

pub fn scale_zero_argmax_diversity_with(d: &MetricMatrix, opts: &PeelOptions) -> Result<PeelLayer> {
    let n = d.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let mut support: Vec<usize> = (0..n).collect();
    let mut support_sizes = vec![n];
    let mut p = normalized_restricted_solve(d, &support)?;
    let mut iterations = 0;
    while p.iter().any(|&v| v < -opts.tol_neg) {
        let next: Vec<usize> = support.iter().copied().filter(|&j| p[j] > opts.tol_neg).collect();
        if next.len() >= support.len() || next.is_empty() {
            return Err(Error::IterationOverflow { iterations });
        }
        support = next;
        support_sizes.push(support.len());
        iterations += 1;
        if iterations > n {
            return Err(Error::IterationOverflow { iterations });
        }
        p = normalized_restricted_solve(d, &support)?;
    }
    let mut shrunk = SimplexVector::from_clipped(p.clone(), opts.tol_neg)?;
    let shrink_kkt_residual = verify_kkt(d, &shrunk, opts.tol_kkt)?.residual;
    let mut pre_clip = p;
    let mut refinement_steps = 0;
    if shrink_kkt_residual > active_set_tolerance(d, &shrunk) {
        let (refined, steps) = active_set_refine(d, shrunk.as_slice(), opts)?;
        refinement_steps = steps;
        pre_clip = refined.clone();
        shrunk = SimplexVector::from_clipped(refined, opts.tol_neg)?;
    }
    let p_star = shrunk;
    let entropy = quadratic_form(d, p_star.as_slice());
    let kkt = verify_kkt(d, &p_star, opts.tol_kkt)?;
    Ok(PeelLayer {
        support: p_star.support().to_vec(),
        p_star,
        iterations,
        support_sizes,
        entropy,
        kkt_residual: kkt.residual,
        kkt_ok: kkt.ok,
        shrink_kkt_residual,
        refinement_steps,
        pre_clip,
        heuristic: false,
        ratio_bound: None,
    })
}

/// Violations of the optimality condition below this are rounding noise.
fn active_set_tolerance(d: &MetricMatrix, p: &SimplexVector) -> f64 {
    let g = d.apply(p.as_slice());
    1e-12 * g.iter().fold(1.0_f64, |m, v| m.max(v.abs()))
}

/// Primal active-set ascent from a feasible `p`, returning the maximizer
/// and the number of steps taken.
fn active_set_refine(d: &MetricMatrix, start: &[f64], opts: &PeelOptions) -> Result<(Vec<f64>, usize)> {
    let n = d.len();
    let mut p = start.to_vec();
    let mut in_j: Vec<bool> = p.iter().map(|&v| v > 0.0).collect();
    let max_steps = 20 * n + 20;
    let mut steps = 0;
    loop {
        let g = d.apply(&p);
        let level = (0..n).filter(|&j| in_j[j]).map(|j| g[j]).fold(f64::INFINITY, f64::min);
        let tol = 1e-12 * g.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        let entering = (0..n)
            .filter(|&k| !in_j[k])
            .map(|k| (k, g[k] - level))
            .filter(|&(_, gap)| gap > tol)
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
        let Some((k, _)) = entering else {
            return Ok((p, steps));
        };
        in_j[k] = true;
        // Move toward the maximizer on the affine hull of J, dropping
        // whichever coordinate hits zero first.
        loop {
            steps += 1;
            if steps > max_steps {
                return Err(Error::IterationOverflow { iterations: steps });
            }
            let idx: Vec<usize> = (0..n).filter(|&j| in_j[j]).collect();
            let q = normalized_restricted_solve(d, &idx)?;
            let blocking = idx
                .iter()
                .filter(|&&j| q[j] <= opts.tol_neg)
                .map(|&j| (j, if p[j] - q[j] > 0.0 { p[j] / (p[j] - q[j]) } else { 0.0 }))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            match blocking {
                None => {
                    p = q;
                    break;
                }
                Some((_, alpha)) => {
                    let alpha = alpha.clamp(0.0, 1.0);
                    for j in 0..n {
                        p[j] += alpha * (q[j] - p[j]);
                    }
                    for &j in &idx {
                        if q[j] <= opts.tol_neg && p[j] <= opts.tol_neg {
                            p[j] = 0.0;
                            in_j[j] = false;
                        }
                    }
                    let total: f64 = p.iter().sum();
                    p.iter_mut().for_each(|v| *v /= total);
                }
            }
        }
    }
}

/// How to treat a metric before peeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Certify {
    /// Classify first; refuse metrics that are not of negative type.
    Check,
    /// Assume strict negative type.
    Skip,
}

/// Peels after classifying `d`. Metrics that are negative type but not
/// certifiably strict are still peeled, tagged heuristic and given the
/// ratio bound.
pub fn peel_certified(
    d: &MetricMatrix,
    opts: &PeelOptions,
    certify: Certify,
    tol_eig: f64,
) -> Result<(PeelLayer, Option<NegativeTypeClass>)> {
    let class = match certify {
        Certify::Skip => None,
        Certify::Check if d.len() < 2 => None,
        Certify::Check => Some(classify_negative_type(d, tol_eig)?),
    };
    if let Some(c) = class {
        if c.class == NegativeType::NotNegativeType {
            return Err(Error::NotNegativeType {
                min_eigenvalue: c.min_eigenvalue,
            });
        }
    }
    let mut layer = scale_zero_argmax_diversity_with(d, opts)?;
    if matches!(class, Some(c) if c.class == NegativeType::NegativeTypeOnly) {
        layer.heuristic = true;
        layer.ratio_bound = diversity_ratio_bound(d, &layer.p_star).ok();
    }
    Ok((layer, class))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub ok: bool,
    pub residual: f64,
}

/// Checks optimality of `p` on the simplex: with `g = d p`, `g` must be
/// constant on the support and no larger anywhere else.
///
/// The residual is `max(0, max_{k∉supp} g_k − min_{j∈supp} g_j)` plus the
/// spread of `g` over the support.
pub fn verify_kkt(d: &MetricMatrix, p: &SimplexVector, tol_kkt: f64) -> Result<KktReport> {
    if d.len() != p.len() {
        return Err(Error::DimensionMismatch {
            expected: d.len(),
            got: p.len(),
        });
    }
    let g = d.apply(p.as_slice());
    let mut in_support = vec![false; g.len()];
    for &j in p.support() {
        in_support[j] = true;
    }
    let (mut lo, mut hi, mut outside) = (f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (j, &gj) in g.iter().enumerate() {
        if in_support[j] {
            lo = lo.min(gj);
            hi = hi.max(gj);
        } else {
            outside = outside.max(gj);
        }
    }
    let residual = (outside - lo).max(0.0) + (hi - lo);
    let mass: f64 = p.as_slice().iter().sum();
    let on_simplex = (mass - 1.0).abs() <= 1e-12;
    Ok(KktReport {
        ok: residual <= tol_kkt && on_simplex,
        residual,
    })
}

/// A peel computed on a residual subset, mapped back to original indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionLayer {
    /// Original indices the peel was computed on.
    pub domain: Vec<usize>,
    /// Original indices of the support.
    pub indices: Vec<usize>,
    /// Weights aligned with `indices`.
    pub weights: Vec<f64>,
    pub peel: PeelLayer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeelDecomposition {
    pub layers: Vec<DecompositionLayer>,
    /// Layer at which each original index was peeled; `None` if the run
    /// stopped at `max_layers` first.
    pub residual_order: Vec<Option<usize>>,
}

/// Peels, removes the support, and repeats on what is left.
pub fn iterated_peeling(d: &MetricMatrix, max_layers: Option<usize>) -> Result<PeelDecomposition> {
    iterated_peeling_with(d, max_layers, &PeelOptions::default())
}

pub fn iterated_peeling_with(
    d: &MetricMatrix,
    max_layers: Option<usize>,
    opts: &PeelOptions,
) -> Result<PeelDecomposition> {
    let n = d.len();
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut residual_order = vec![None; n];
    let mut layers = Vec::new();
    while !remaining.is_empty() && max_layers.is_none_or(|m| layers.len() < m) {
        let layer_idx = layers.len();
        let sub = d.restrict(&remaining);
        let peel = scale_zero_argmax_diversity_with(&sub, opts).map_err(|e| Error::Layer {
            layer: layer_idx,
            source: Box::new(e),
        })?;
        let indices: Vec<usize> = peel.support.iter().map(|&j| remaining[j]).collect();
        let weights: Vec<f64> = peel.support.iter().map(|&j| peel.p_star.as_slice()[j]).collect();
        for &i in &indices {
            residual_order[i] = Some(layer_idx);
        }
        let domain = remaining.clone();
        remaining.retain(|i| residual_order[*i].is_none());
        layers.push(DecompositionLayer {
            domain,
            indices,
            weights,
            peel,
        });
    }
    Ok(PeelDecomposition {
        layers,
        residual_order,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedoidReport {
    pub index: usize,
    pub row_sum: f64,
    /// All indices attaining the minimum row sum; `index` is the smallest.
    pub ties: Vec<usize>,
}

/// `argmin_j Σ_k d_jk`, lowest index on ties.
pub fn medoid(d: &MetricMatrix) -> Result<MedoidReport> {
    let sums = d.row_sums();
    let min = sums.iter().copied().fold(f64::INFINITY, f64::min);
    let ties: Vec<usize> = (0..sums.len()).filter(|&j| sums[j] == min).collect();
    let index = *ties.first().ok_or(Error::EmptyInput)?;
    Ok(MedoidReport {
        index,
        row_sum: min,
        ties,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineExtremum {
    /// `d⁻¹1 / (1ᵀd⁻¹1)`; may have negative entries.
    pub p_aff: Vec<f64>,
    /// `1 / (1ᵀd⁻¹1)`, an upper bound on `max_{p∈Δ} pᵀdp`.
    pub value: f64,
}

fn ones_inverse_ones(d: &MetricMatrix) -> Result<(Vec<f64>, f64)> {
    let fact = SymmetricIndefinite::factor(d.entries()).map_err(|_| Error::SingularMatrix)?;
    let x = fact.solve(&vec![1.0; d.len()]);
    let total: f64 = x.iter().sum();
    if !total.is_finite() || total == 0.0 {
        return Err(Error::SingularMatrix);
    }
    Ok((x, total))
}

/// Maximizer of `pᵀdp` over the affine hull `1ᵀp = 1`.
pub fn affine_extremum(d: &MetricMatrix) -> Result<AffineExtremum> {
    let (x, total) = ones_inverse_ones(d)?;
    Ok(AffineExtremum {
        p_aff: x.iter().map(|v| v / total).collect(),
        value: total.recip(),
    })
}

/// `(pᵀdp) · (1ᵀd⁻¹1)`: a lower bound on the small-scale diversity ratio of
/// `p` relative to the optimum.
pub fn diversity_ratio_bound(d: &MetricMatrix, p: &SimplexVector) -> Result<f64> {
    if d.len() != p.len() {
        return Err(Error::DimensionMismatch {
            expected: d.len(),
            got: p.len(),
        });
    }
    let (_, total) = ones_inverse_ones(d)?;
    Ok(quadratic_form(d, p.as_slice()) * total)
}
