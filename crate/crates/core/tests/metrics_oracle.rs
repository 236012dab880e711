mod common;

use common::{euclid, gaussian, rng};
use ndarray::{Array2, ArrayView2};
use proptest::prelude::*;
use rand::Rng;
use simembed::knn::neighbors_of;
use simembed::metrics::{nearest_centroid_precision, neighbor_error, silhouette_scaled};

fn dist_matrix(y: ArrayView2<f64>) -> Array2<f64> {
    let n = y.nrows();
    Array2::from_shape_fn((n, n), |(i, j)| euclid(y.row(i), y.row(j)))
}

fn oracle_precision(y: &Array2<f64>, labels: &[i64]) -> f64 {
    let mut classes: Vec<i64> = labels.to_vec();
    classes.sort();
    classes.dedup();
    let centroid = |c: i64| {
        let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        let mut s = vec![0.0; y.ncols()];
        for &i in &idx {
            for k in 0..y.ncols() {
                s[k] += y[[i, k]];
            }
        }
        s.iter().map(|v| v / idx.len() as f64).collect::<Vec<_>>()
    };
    let cents: Vec<Vec<f64>> = classes.iter().map(|&c| centroid(c)).collect();
    let pred: Vec<i64> = (0..labels.len())
        .map(|i| {
            let d: Vec<f64> = cents
                .iter()
                .map(|c| c.iter().enumerate().map(|(k, v)| (y[[i, k]] - v).powi(2)).sum())
                .collect();
            let mut best = 0;
            for c in 1..d.len() {
                if d[c] < d[best] {
                    best = c;
                }
            }
            classes[best]
        })
        .collect();
    let mut total = 0.0;
    for &c in &classes {
        let tp = (0..labels.len()).filter(|&i| pred[i] == c && labels[i] == c).count() as f64;
        let pp = pred.iter().filter(|&&p| p == c).count() as f64;
        let support = labels.iter().filter(|&&l| l == c).count() as f64;
        total += support * if pp > 0.0 { tp / pp } else { 0.0 };
    }
    100.0 * total / labels.len() as f64
}

fn oracle_silhouette(y: &Array2<f64>, labels: &[i64]) -> f64 {
    let d = dist_matrix(y.view());
    let n = labels.len();
    let mut s = 0.0;
    for i in 0..n {
        let same: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == labels[i]).collect();
        if same.is_empty() {
            continue;
        }
        let a = same.iter().map(|&j| d[[i, j]]).sum::<f64>() / same.len() as f64;
        let mut b = f64::INFINITY;
        let mut others: Vec<i64> = labels.iter().copied().filter(|&l| l != labels[i]).collect();
        others.sort();
        others.dedup();
        for c in others {
            let m: Vec<usize> = (0..n).filter(|&j| labels[j] == c).collect();
            b = b.min(m.iter().map(|&j| d[[i, j]]).sum::<f64>() / m.len() as f64);
        }
        if a.max(b) > 0.0 {
            s += (b - a) / a.max(b);
        }
    }
    100.0 * s / n as f64
}

fn oracle_neighbor_error(y: &Array2<f64>, x: &Array2<f64>, k: usize) -> Vec<f64> {
    let dy = dist_matrix(y.view());
    let dx = dist_matrix(x.view());
    let n = y.nrows();
    let raw: Vec<f64> = (0..n)
        .map(|i| {
            let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            order.sort_by(|&a, &b| dy[[i, a]].partial_cmp(&dy[[i, b]]).unwrap().then(a.cmp(&b)));
            order[..k].iter().map(|&j| dx[[i, j]]).sum()
        })
        .collect();
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    raw.iter().map(|r| if hi > lo { (r - lo) / (hi - lo) } else { 0.0 }).collect()
}

fn random_labels(n: usize, classes: i64, seed: u64) -> Vec<i64> {
    let mut r = rng(seed);
    let mut l: Vec<i64> = (0..n).map(|_| r.random_range(0..classes)).collect();
    l[0] = 0;
    l[1] = 1;
    l
}

#[test]
fn metrics_match_brute_force_oracles() {
    for seed in 0..25 {
        let n = 20 + (seed as usize % 31);
        let y = gaussian(n, 2, seed);
        let x = gaussian(n, 6, seed + 500);
        let labels = random_labels(n, 2 + (seed as i64 % 3), seed + 900);
        let p = nearest_centroid_precision(y.view(), &labels).unwrap();
        assert!((p - oracle_precision(&y, &labels)).abs() <= 1e-10);
        let s = silhouette_scaled(y.view(), &labels).unwrap();
        assert!((s - oracle_silhouette(&y, &labels)).abs() <= 1e-10);
        let (pp, mean) = neighbor_error(y.view(), x.view(), 10).unwrap();
        let o = oracle_neighbor_error(&y, &x, 10);
        for (a, b) in pp.iter().zip(&o) {
            assert!((a - b).abs() <= 1e-10);
        }
        assert!((mean - o.iter().sum::<f64>() / n as f64).abs() <= 1e-10);
        let lo = pp.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = pp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!((lo, hi), (0.0, 1.0));
    }
}

#[test]
fn silhouette_four_point_hand_case() {
    let y = ndarray::array![[0.0, 0.0], [0.0, 1.0], [3.0, 0.0], [3.0, 1.0]];
    let labels = [0, 0, 1, 1];
    // a = 1, b = (3 + sqrt(10)) / 2 for every point
    let b = (3.0 + 10f64.sqrt()) / 2.0;
    let expect = 100.0 * (b - 1.0) / b;
    assert!((silhouette_scaled(y.view(), &labels).unwrap() - expect).abs() < 1e-12);
}

#[test]
fn random_labels_on_one_blob_score_near_half() {
    let mut total = 0.0;
    for seed in 0..20 {
        let y = gaussian(200, 2, 40 + seed);
        let mut r = rng(80 + seed);
        let mut labels: Vec<i64> = (0..200).map(|i| i % 2).collect();
        for i in (1..200).rev() {
            labels.swap(i, r.random_range(0..=i));
        }
        total += nearest_centroid_precision(y.view(), &labels).unwrap();
    }
    let mean = total / 20.0;
    assert!((40.0..=60.0).contains(&mean), "mean precision {mean}");
}

#[test]
fn planar_data_neighbor_error_uses_layout_distances() {
    let y = gaussian(30, 2, 3);
    let mut x = Array2::zeros((30, 5));
    x.slice_mut(ndarray::s![.., ..2]).assign(&y);
    let (pp, _) = neighbor_error(y.view(), x.view(), 10).unwrap();
    let raw: Vec<f64> = (0..30)
        .map(|i| neighbors_of(y.view(), i, 10).into_iter().map(|j| euclid(y.row(i), y.row(j))).sum())
        .collect();
    let tightest = (0..30).min_by(|&a, &b| raw[a].partial_cmp(&raw[b]).unwrap()).unwrap();
    assert_eq!(pp[tightest], 0.0);
}

#[test]
fn pca_layout_beats_random_layout() {
    let mut x = gaussian(120, 6, 4);
    for i in 0..120 {
        x[[i, 0]] += if i < 60 { 6.0 } else { -6.0 };
        x[[i, 1]] += (i % 3) as f64 * 4.0;
    }
    let pca = simembed::init::pca_2d(x.view()).unwrap();
    let random = gaussian(120, 2, 5);
    let (_, good) = neighbor_error(pca.coords.view(), x.view(), 10).unwrap();
    let (_, bad) = neighbor_error(random.view(), x.view(), 10).unwrap();
    assert!(good < bad, "{good} vs {bad}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn rigid_and_scale_invariance(seed in 0u64..10_000, angle in 0.0f64..std::f64::consts::TAU, tx in -5.0f64..5.0, s in 0.2f64..5.0) {
        let y = gaussian(25, 2, seed);
        let x = gaussian(25, 4, seed + 1);
        let labels = random_labels(25, 3, seed + 2);
        let (c, sn) = (angle.cos(), angle.sin());
        let rot = ndarray::array![[c, sn], [-sn, c]];
        let moved = y.dot(&rot) + tx;
        let scaled = &moved * s;

        let p0 = nearest_centroid_precision(y.view(), &labels).unwrap();
        let s0 = silhouette_scaled(y.view(), &labels).unwrap();
        let (e0, _) = neighbor_error(y.view(), x.view(), 10).unwrap();
        for l in [&moved, &scaled] {
            prop_assert!((nearest_centroid_precision(l.view(), &labels).unwrap() - p0).abs() < 1e-9);
            prop_assert!((silhouette_scaled(l.view(), &labels).unwrap() - s0).abs() < 1e-9);
        }
        let (e1, _) = neighbor_error(moved.view(), x.view(), 10).unwrap();
        let (e2, _) = neighbor_error(scaled.view(), x.view(), 10).unwrap();
        // ranking of points is preserved (neighbour sets may only change on exact ties)
        for (a, b) in [(&e0, &e1), (&e0, &e2)] {
            for i in 0..25 {
                prop_assert!((a[i] - b[i]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn relabeling_classes_changes_nothing(seed in 0u64..10_000) {
        let y = gaussian(30, 2, seed);
        let labels = random_labels(30, 3, seed + 3);
        let renamed: Vec<i64> = labels.iter().map(|&l| [17, -4, 9][l as usize]).collect();
        prop_assert!((nearest_centroid_precision(y.view(), &labels).unwrap() - nearest_centroid_precision(y.view(), &renamed).unwrap()).abs() < 1e-12);
        prop_assert!((silhouette_scaled(y.view(), &labels).unwrap() - silhouette_scaled(y.view(), &renamed).unwrap()).abs() < 1e-12);
    }
}
