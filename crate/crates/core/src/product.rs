//! L^p product metrics: `((d¹_{j₁k₁})^p + (d²_{j₂k₂})^p + …)^{1/p}` on
//! index tuples, flattened row-major (first factor outermost).

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::MetricMatrix;

pub const DEFAULT_PRODUCT_CAP: usize = 10_000;

/// Row-major bijection between flat indices and factor-index tuples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexMap {
    sizes: Vec<usize>,
}

impl IndexMap {
    pub fn new(sizes: Vec<usize>) -> Self {
        Self { sizes }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn len(&self) -> usize {
        self.sizes.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn tuple(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.sizes.len()];
        for (slot, &n) in out.iter_mut().zip(&self.sizes).rev() {
            *slot = flat % n;
            flat /= n;
        }
        out
    }

    pub fn flat(&self, tuple: &[usize]) -> Result<usize> {
        if tuple.len() != self.sizes.len() {
            return Err(Error::DimensionMismatch {
                expected: self.sizes.len(),
                got: tuple.len(),
            });
        }
        tuple.iter().zip(&self.sizes).try_fold(0, |acc, (&j, &n)| {
            if j >= n {
                Err(Error::IndexOutOfRange { index: j, n })
            } else {
                Ok(acc * n + j)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProductMetric {
    pub factor_sizes: Vec<usize>,
    pub p_exponent: f64,
    pub result: MetricMatrix,
    pub index_map: IndexMap,
}

fn check_exponent(p: f64) -> Result<()> {
    if p.is_finite() && p >= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidExponent(p))
    }
}

/// ℓ^p norm of a nonnegative tuple.
fn lp_norm(values: impl Iterator<Item = f64>, p: f64) -> f64 {
    if p == 1.0 {
        values.sum()
    } else if p == 2.0 {
        values.map(|v| v * v).sum::<f64>().sqrt()
    } else {
        values.map(|v| v.powf(p)).sum::<f64>().powf(p.recip())
    }
}

pub fn lp_product(d1: &MetricMatrix, d2: &MetricMatrix, p_exponent: f64) -> Result<ProductMetric> {
    lp_product_many_capped(&[d1, d2], p_exponent, DEFAULT_PRODUCT_CAP)
}

pub fn lp_product_many(factors: &[&MetricMatrix], p_exponent: f64) -> Result<ProductMetric> {
    lp_product_many_capped(factors, p_exponent, DEFAULT_PRODUCT_CAP)
}

/// Entries are computed directly as ℓ^p norms of distance tuples, so the
/// result does not depend on how the factors are grouped.
pub fn lp_product_many_capped(factors: &[&MetricMatrix], p_exponent: f64, cap: usize) -> Result<ProductMetric> {
    check_exponent(p_exponent)?;
    if factors.len() < 2 {
        return Err(Error::TooFewPoints {
            required: 2,
            got: factors.len(),
        });
    }
    if factors.iter().any(|f| f.is_empty()) {
        return Err(Error::EmptyInput);
    }
    let sizes: Vec<usize> = factors.iter().map(|f| f.len()).collect();
    let size = sizes
        .iter()
        .try_fold(1usize, |acc, &n| acc.checked_mul(n))
        .unwrap_or(usize::MAX);
    if size > cap {
        return Err(Error::ProductTooLarge { size, cap });
    }
    let index_map = IndexMap::new(sizes.clone());
    let tuples: Vec<Vec<usize>> = (0..size).map(|f| index_map.tuple(f)).collect();
    let rows: Vec<Vec<f64>> = tuples
        .par_iter()
        .map(|a| {
            tuples
                .iter()
                .map(|b| lp_norm(factors.iter().enumerate().map(|(l, f)| f.get(a[l], b[l])), p_exponent))
                .collect()
        })
        .collect();
    let entries = DMatrix::from_fn(size, size, |i, j| rows[i][j]);
    Ok(ProductMetric {
        factor_sizes: sizes,
        p_exponent,
        result: MetricMatrix::from_trusted(entries)?,
        index_map,
    })
}

/// Unit vector on the product with all marginals zero, supported on the
/// first 2×2 block: `(+1, −1) ⊗ (+1, −1) / 2`. Its quadratic form against
/// the L¹ product vanishes, so that product is never strict negative type.
pub fn degeneracy_witness_l1(d1: &MetricMatrix, d2: &MetricMatrix) -> Result<Vec<f64>> {
    for f in [d1, d2] {
        if f.len() < 2 {
            return Err(Error::TooFewPoints {
                required: 2,
                got: f.len(),
            });
        }
    }
    let n2 = d2.len();
    let mut x = vec![0.0; d1.len() * n2];
    x[0] = 0.5;
    x[1] = -0.5;
    x[n2] = -0.5;
    x[n2 + 1] = 0.5;
    Ok(x)
}

/// Marginal sums of a product vector, one vector per factor.
pub fn marginals(x: &[f64], index_map: &IndexMap) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = index_map.sizes().iter().map(|&n| vec![0.0; n]).collect();
    for (flat, &v) in x.iter().enumerate() {
        for (l, j) in index_map.tuple(flat).into_iter().enumerate() {
            out[l][j] += v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diversity::quadratic_form;
    use crate::metric::{
        classify_negative_type, euclidean_distance_matrix, max_triangle_violation, negative_type_witness,
        NegativeType,
    };
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_pair() -> MetricMatrix {
        euclidean_distance_matrix(&[vec![0.0], vec![1.0]], 2.0).unwrap()
    }

    fn random_points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> MetricMatrix {
        let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.random()).collect()).collect();
        euclidean_distance_matrix(&pts, 2.0).unwrap()
    }

    #[test]
    fn two_unit_pairs() {
        let u = unit_pair();
        let l2 = lp_product(&u, &u, 2.0).unwrap();
        assert_eq!(l2.result.get(0, 3), 2f64.sqrt());
        assert_eq!(l2.result.get(0, 1), 1.0);
        assert_eq!(l2.result.get(0, 2), 1.0);
        let l1 = lp_product(&u, &u, 1.0).unwrap();
        assert_eq!(l1.result.get(0, 3), 2.0);
        assert_eq!(l1.result.get(1, 2), 2.0);
    }

    #[test]
    fn three_unit_pairs_reach_cube_diagonal() {
        let u = unit_pair();
        let p = lp_product_many(&[&u, &u, &u], 2.0).unwrap();
        assert_eq!(p.result.len(), 8);
        assert!((p.result.max_entry() - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn index_map_round_trip() {
        let m = IndexMap::new(vec![3, 4, 2]);
        assert_eq!(m.len(), 24);
        for f in 0..24 {
            assert_eq!(m.flat(&m.tuple(f)).unwrap(), f);
        }
        assert_eq!(m.tuple(1), vec![0, 0, 1]);
        assert_eq!(m.tuple(2), vec![0, 1, 0]);
        assert!(m.flat(&[3, 0, 0]).is_err());
    }

    #[test]
    fn errors() {
        let u = unit_pair();
        assert!(matches!(lp_product(&u, &u, 0.5), Err(Error::InvalidExponent(_))));
        assert!(matches!(lp_product(&u, &u, f64::INFINITY), Err(Error::InvalidExponent(_))));
        let big = euclidean_distance_matrix(&(0..101).map(|i| vec![i as f64]).collect::<Vec<_>>(), 2.0).unwrap();
        assert!(matches!(
            lp_product(&big, &big, 2.0),
            Err(Error::ProductTooLarge { size: 10_201, cap: 10_000 })
        ));
        assert!(lp_product_many(&[&u], 2.0).is_err());
    }

    #[test]
    fn fixed_coordinate_slice_reduces_to_other_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_points(&mut rng, 4, 2);
        let b = random_points(&mut rng, 5, 3);
        let p = lp_product(&a, &b, 2.0).unwrap();
        for j1 in 0..4 {
            for j2 in 0..5 {
                for k2 in 0..5 {
                    let x = p.index_map.flat(&[j1, j2]).unwrap();
                    let y = p.index_map.flat(&[j1, k2]).unwrap();
                    assert_eq!(p.result.get(x, y), b.get(j2, k2));
                }
            }
        }
    }

    #[test]
    fn factor_order_is_an_isometry() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_points(&mut rng, 3, 2);
        let b = random_points(&mut rng, 4, 2);
        let ab = lp_product(&a, &b, 1.5).unwrap();
        let ba = lp_product(&b, &a, 1.5).unwrap();
        for x in 0..12 {
            for y in 0..12 {
                let (tx, ty) = (ab.index_map.tuple(x), ab.index_map.tuple(y));
                let sx = ba.index_map.flat(&[tx[1], tx[0]]).unwrap();
                let sy = ba.index_map.flat(&[ty[1], ty[0]]).unwrap();
                assert_eq!(ab.result.get(x, y), ba.result.get(sx, sy));
            }
        }
    }

    #[test]
    fn witness_examples() {
        let u = unit_pair();
        let x = degeneracy_witness_l1(&u, &u).unwrap();
        assert_eq!(x, vec![0.5, -0.5, -0.5, 0.5]);
        let l1 = lp_product(&u, &u, 1.0).unwrap();
        assert_eq!(quadratic_form(&l1.result, &x), 0.0);
        let l2 = lp_product(&u, &u, 2.0).unwrap();
        assert!(quadratic_form(&l2.result, &x) < 0.0);
        for m in marginals(&x, &l1.index_map) {
            assert!(m.iter().all(|&v| v == 0.0));
        }
        assert!(degeneracy_witness_l1(&u, &u.restrict(&[0])).is_err());
    }

    /// Strictness is not inherited by L^p products for p > 2: planar factors
    /// whose L² product is strict can have an L⁴ product that is not even
    /// negative type. Certified without tolerances by a zero-sum vector.
    #[test]
    fn large_exponent_products_can_lose_negative_type() {
        let mut found = 0;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_points(&mut rng, 8, 2);
            let b = random_points(&mut rng, 8, 2);
            let l2 = lp_product(&a, &b, 2.0).unwrap();
            assert!(classify_negative_type(&l2.result, 1e-10).unwrap().is_strict());
            let l4 = lp_product(&a, &b, 4.0).unwrap();
            let (value, x) = negative_type_witness(&l4.result, 0).unwrap();
            if value > 1e-6 {
                assert!(x.iter().sum::<f64>().abs() < 1e-12);
                assert_eq!(
                    classify_negative_type(&l4.result, 1e-10).unwrap().class,
                    NegativeType::NotNegativeType
                );
                found += 1;
            }
        }
        assert!(found > 0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn classification_battery(seed in any::<u64>(), n1 in 2usize..8, n2 in 2usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_points(&mut rng, n1, 2);
            let b = random_points(&mut rng, n2, 2);
            let l1 = lp_product(&a, &b, 1.0).unwrap();
            let class = classify_negative_type(&l1.result, 1e-10).unwrap();
            prop_assert_eq!(class.class, NegativeType::NegativeTypeOnly);
            let x = degeneracy_witness_l1(&a, &b).unwrap();
            prop_assert!(quadratic_form(&l1.result, &x).abs() <= 1e-12);
            for p in [1.25, 1.5, 2.0] {
                let lp = lp_product(&a, &b, p).unwrap();
                let class = classify_negative_type(&lp.result, 1e-10).unwrap();
                prop_assert!(class.is_strict(), "p = {}: {:?}", p, class);
                prop_assert!(quadratic_form(&lp.result, &x) < 0.0);
            }
        }

        // Along a line every L^p product lives in a 2-dimensional normed
        // plane, which embeds in L¹; strictness survives for all p > 1.
        #[test]
        fn collinear_factors_stay_strict_for_large_p(seed in any::<u64>(), n1 in 2usize..8, n2 in 2usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_points(&mut rng, n1, 1);
            let b = random_points(&mut rng, n2, 1);
            for p in [3.0, 4.0, 8.0] {
                let lp = lp_product(&a, &b, p).unwrap();
                prop_assert!(classify_negative_type(&lp.result, 1e-10).unwrap().is_strict());
            }
        }

        #[test]
        fn sandwich_and_triangle(seed in any::<u64>(), n1 in 2usize..6, n2 in 2usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_points(&mut rng, n1, 2);
            let b = random_points(&mut rng, n2, 2);
            let l1 = lp_product(&a, &b, 1.0).unwrap();
            let l2 = lp_product(&a, &b, 2.0).unwrap();
            for (x, y) in l1.result.entries().iter().zip(l2.result.entries().iter()) {
                prop_assert!(*x >= *y);
                prop_assert!(*y >= x / 2f64.sqrt() * (1.0 - 1e-15));
            }
            for p in [1.0, 1.5, 2.0, 4.0] {
                let lp = lp_product(&a, &b, p).unwrap();
                let (violation, _) = max_triangle_violation(lp.result.entries());
                prop_assert!(violation <= 1e-12);
            }
        }

        #[test]
        fn grouping_does_not_matter(seed in any::<u64>(), p in 1.0f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_points(&mut rng, 2, 2);
            let b = random_points(&mut rng, 3, 2);
            let c = random_points(&mut rng, 2, 2);
            let abc = lp_product_many(&[&a, &b, &c], p).unwrap();
            let left = lp_product(&lp_product(&a, &b, p).unwrap().result, &c, p).unwrap();
            for (x, y) in abc.result.entries().iter().zip(left.result.entries().iter()) {
                prop_assert!((x - y).abs() <= 1e-12 * x.max(1.0));
            }
        }
    }
}
