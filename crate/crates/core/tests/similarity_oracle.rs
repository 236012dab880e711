mod common;

use common::{euclid, gaussian};
use ndarray::Array2;
use proptest::prelude::*;
use simembed::similarity::{clone_target, mean_squared_distance, projected_similarity, rbf_kernel, uniform_mask, Scale};

#[test]
fn projected_similarity_matches_pairwise_recomputation() {
    let y = gaussian(5, 2, 1);
    let sigma = 0.7;
    let p = projected_similarity(y.view(), sigma).unwrap();
    for i in 0..5 {
        for j in 0..5 {
            let d2 = (y[[i, 0]] - y[[j, 0]]).powi(2) + (y[[i, 1]] - y[[j, 1]]).powi(2);
            assert!((p.values[[i, j]] - (-d2 / sigma).exp()).abs() <= 1e-12);
        }
    }
}

#[test]
fn analytic_similarity_values() {
    let y = ndarray::array![[0.0, 0.0], [0.0, 0.0], [1.0, 1.0]];
    let p = projected_similarity(y.view(), 2.0).unwrap();
    assert_eq!(p.values[[0, 1]], 1.0);
    assert!((p.values[[0, 2]] - (-1.0f64).exp()).abs() < 1e-15);
    assert!((p.values[[0, 2]] - 0.367879).abs() < 1e-6);
    assert!(projected_similarity(y.view(), 0.0).is_err());
}

#[test]
fn auto_copy_scale_is_mean_squared_pair_distance() {
    let y = gaussian(20, 2, 2) * 3.0;
    let mut sum = 0.0;
    let mut count = 0;
    for i in 0..20 {
        for j in (i + 1)..20 {
            sum += euclid(y.row(i), y.row(j)).powi(2);
            count += 1;
        }
    }
    let expect = sum / count as f64;
    let t = clone_target(y.view(), Scale::Auto).unwrap();
    assert!((t.sigma - expect).abs() <= 1e-10 * expect);
    assert!((mean_squared_distance(y.view()) - expect).abs() <= 1e-10 * expect);

    let two = ndarray::array![[0.0, 0.0], [1.0, 0.0]];
    let t = clone_target(two.view(), Scale::Auto).unwrap();
    assert_eq!(t.sigma, 1.0);
    assert!((t.values[[0, 1]] - (-1.0f64).exp()).abs() < 1e-15);

    let same = Array2::<f64>::ones((4, 2));
    assert!(clone_target(same.view(), Scale::Auto).unwrap().values.iter().all(|&v| v == 1.0));
    let one = Array2::<f64>::ones((1, 2));
    assert!(clone_target(one.view(), Scale::Auto).is_err());
}

#[test]
fn auto_kernel_width_on_standardized_wine() {
    let mut x = common::wine().features;
    let n = x.nrows();
    for mut c in x.columns_mut() {
        let m = c.sum() / n as f64;
        let sd = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        c.mapv_inplace(|v| (v - m) / sd);
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            sum += euclid(x.row(i), x.row(j));
            pairs += 1;
        }
    }
    assert_eq!(pairs, 15_753);
    let gamma = sum / pairs as f64;
    let k = rbf_kernel(x.view(), None, Scale::Auto).unwrap();
    assert!((k.gamma - gamma).abs() <= 1e-9);
    assert!(k.values.diag().iter().all(|&v| v == 1.0));
    for (i, j) in [(0, 1), (5, 170), (100, 33)] {
        let d2 = euclid(x.row(i), x.row(j)).powi(2);
        assert!((k.values[[i, j]] - (-d2 / (gamma * gamma)).exp()).abs() < 1e-12);
    }
}

#[test]
fn kernel_rules() {
    let a = ndarray::array![[0.0, 0.0], [3.0, 4.0]];
    let k = rbf_kernel(a.view(), None, Scale::Fixed(5.0)).unwrap();
    assert!((k.values[[0, 1]] - (-1.0f64).exp()).abs() < 1e-15);
    let b = ndarray::array![[0.0, 0.0, 1.0]];
    assert!(rbf_kernel(a.view(), Some(b.view()), Scale::Fixed(1.0)).is_err());
    assert!(rbf_kernel(a.view(), Some(a.view()), Scale::Auto).is_err());
    assert!(rbf_kernel(a.view(), None, Scale::Fixed(0.0)).is_err());
}

#[test]
fn uniform_mask_norms() {
    assert_eq!(uniform_mask::<f64>(3, 1.0).unwrap().l1_norm(), 9.0);
    assert_eq!(uniform_mask::<f64>(10, 0.5).unwrap().l1_norm(), 50.0);
    assert!(uniform_mask::<f64>(3, 1.5).is_err());
    let zero = uniform_mask::<f64>(3, 0.0).unwrap();
    let p = projected_similarity(gaussian(3, 2, 1).view(), 1.0).unwrap();
    assert!(matches!(
        simembed::optimizer::objective(&p, &p, &zero),
        Err(simembed::Error::ZeroMask)
    ));
}

fn permuted(a: &Array2<f64>, perm: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn(a.dim(), |(i, j)| a[[perm[i], perm[j]]])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn builders_commute_with_permutation(seed in 0u64..10_000) {
        let x = gaussian(8, 3, seed);
        let perm = [3, 0, 7, 1, 6, 2, 5, 4];
        let xp = x.select(ndarray::Axis(0), &perm);
        let p = projected_similarity(x.view(), 1.3).unwrap();
        let pp = projected_similarity(xp.view(), 1.3).unwrap();
        prop_assert!(common::max_abs_diff(&permuted(&p.values, &perm), &pp.values) < 1e-12);
        let t = clone_target(x.view(), Scale::Auto).unwrap();
        let tp = clone_target(xp.view(), Scale::Auto).unwrap();
        prop_assert!(common::max_abs_diff(&permuted(&t.values, &perm), &tp.values) < 1e-12);
        let k = rbf_kernel(x.view(), None, Scale::Auto).unwrap();
        let kp = rbf_kernel(xp.view(), None, Scale::Auto).unwrap();
        prop_assert!(common::max_abs_diff(&permuted(&k.values, &perm), &kp.values) < 1e-12);
    }

    #[test]
    fn scale_invariance(seed in 0u64..10_000, s in 0.1f64..10.0) {
        let y = gaussian(7, 2, seed);
        let p = projected_similarity(y.view(), 0.8).unwrap();
        let q = projected_similarity((&y * s).view(), 0.8 * s * s).unwrap();
        prop_assert!(common::max_abs_diff(&p.values, &q.values) < 1e-10);
        let t = clone_target(y.view(), Scale::Auto).unwrap();
        let u = clone_target((&y * s).view(), Scale::Auto).unwrap();
        prop_assert!(common::max_abs_diff(&t.values, &u.values) < 1e-10);
    }

    #[test]
    fn similarity_decreases_with_distance(d1 in 0.0f64..5.0, extra in 1e-3f64..5.0) {
        let y = ndarray::array![[0.0, 0.0], [d1, 0.0], [d1 + extra, 0.0]];
        let p = projected_similarity(y.view(), 1.0).unwrap();
        prop_assert!(p.values[[0, 1]] > p.values[[0, 2]] || p.values[[0, 2]] == 0.0);
        prop_assert!(p.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert!(common::max_abs_diff(&p.values, &p.values.t().to_owned()) <= 1e-10);
    }
}
