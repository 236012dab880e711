//! Layout quality measures: nearest-centroid precision, silhouette and
//! neighbour error.

use std::collections::BTreeMap;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::knn::neighbors_of;
use crate::{Error, Result, Scalar};

pub const DEFAULT_NEIGHBOR_K: usize = 10;

/// Scores for one layout. Label-based scores are absent for unlabeled data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Weighted-average nearest-centroid precision, in `[0, 100]`.
    pub nearest_centroid_precision: Option<f64>,
    /// Mean silhouette times 100, in `[-100, 100]`.
    pub silhouette_scaled: Option<f64>,
    pub neighbor_error_mean: f64,
    pub neighbor_error_per_point: Vec<f64>,
}

fn dist<T: Scalar>(y: ArrayView2<'_, T>, a: usize, b: usize) -> f64 {
    y.row(a)
        .iter()
        .zip(y.row(b).iter())
        .map(|(&p, &q)| {
            let d = (p - q).as_f64();
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

fn groups(labels: &[i64]) -> BTreeMap<i64, Vec<usize>> {
    let mut g: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        g.entry(l).or_default().push(i);
    }
    g
}

fn check_labels<T: Scalar>(layout: ArrayView2<'_, T>, labels: &[i64]) -> Result<BTreeMap<i64, Vec<usize>>> {
    if labels.len() != layout.nrows() {
        return Err(Error::RowCountMismatch {
            expected: layout.nrows(),
            found: labels.len(),
        });
    }
    let g = groups(labels);
    if g.len() < 2 {
        return Err(Error::SingleClass);
    }
    Ok(g)
}

/// Fits one centroid per class on the layout, assigns every point to the
/// nearest centroid and returns the support-weighted mean of the per-class
/// precisions, times 100. A class that receives no predictions has
/// precision 0.
pub fn nearest_centroid_precision<T: Scalar>(layout: ArrayView2<'_, T>, labels: &[i64]) -> Result<f64> {
    let g = check_labels(layout, labels)?;
    let dim = layout.ncols();
    let classes: Vec<i64> = g.keys().copied().collect();
    let centroids: Vec<Vec<f64>> = g
        .values()
        .map(|idx| {
            (0..dim)
                .map(|c| idx.iter().map(|&i| layout[[i, c]].as_f64()).sum::<f64>() / idx.len() as f64)
                .collect()
        })
        .collect();

    let mut predicted = vec![0usize; classes.len()];
    let mut correct = vec![0usize; classes.len()];
    for (i, &label) in labels.iter().enumerate() {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (c, cen) in centroids.iter().enumerate() {
            let d: f64 = (0..dim)
                .map(|k| {
                    let v = layout[[i, k]].as_f64() - cen[k];
                    v * v
                })
                .sum();
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        predicted[best] += 1;
        if classes[best] == label {
            correct[best] += 1;
        }
    }
    let n = labels.len() as f64;
    let weighted: f64 = g
        .values()
        .enumerate()
        .map(|(c, idx)| {
            let precision = if predicted[c] == 0 {
                0.0
            } else {
                correct[c] as f64 / predicted[c] as f64
            };
            precision * idx.len() as f64
        })
        .sum();
    Ok(100.0 * weighted / n)
}

/// Mean silhouette coefficient with Euclidean distance, times 100. Points in
/// singleton classes contribute 0, as do points with `a = b = 0`.
pub fn silhouette_scaled<T: Scalar>(layout: ArrayView2<'_, T>, labels: &[i64]) -> Result<f64> {
    let g = check_labels(layout, labels)?;
    let n = labels.len();
    let mut total = 0.0;
    for i in 0..n {
        let own = &g[&labels[i]];
        if own.len() < 2 {
            continue;
        }
        let a = own.iter().filter(|&&j| j != i).map(|&j| dist(layout, i, j)).sum::<f64>() / (own.len() - 1) as f64;
        let b = g
            .iter()
            .filter(|(&l, _)| l != labels[i])
            .map(|(_, idx)| idx.iter().map(|&j| dist(layout, i, j)).sum::<f64>() / idx.len() as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(100.0 * total / n as f64)
}

/// For every point, the summed feature-space distance to its `k` nearest
/// layout neighbours, min-max normalized over the points. Returns the
/// per-point scores and their mean. All-equal raw scores normalize to zero.
pub fn neighbor_error<T: Scalar>(
    layout: ArrayView2<'_, T>,
    features: ArrayView2<'_, T>,
    k: usize,
) -> Result<(Vec<f64>, f64)> {
    let n = layout.nrows();
    if features.nrows() != n {
        return Err(Error::RowCountMismatch {
            expected: n,
            found: features.nrows(),
        });
    }
    if n <= k {
        return Err(Error::TooFewPoints { n, k });
    }
    let raw: Vec<f64> = (0..n)
        .map(|i| neighbors_of(layout, i, k).into_iter().map(|j| dist(features, i, j)).sum())
        .collect();
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let scores: Vec<f64> = if span > 0.0 {
        raw.iter().map(|&r| (r - lo) / span).collect()
    } else {
        vec![0.0; n]
    };
    let mean = scores.iter().sum::<f64>() / n as f64;
    Ok((scores, mean))
}

/// All measures for one layout. Label scores are skipped without labels.
pub fn evaluate<T: Scalar>(
    layout: ArrayView2<'_, T>,
    labels: Option<&[i64]>,
    features: ArrayView2<'_, T>,
    k: usize,
) -> Result<MetricReport> {
    let (per_point, mean) = neighbor_error(layout, features, k)?;
    let (precision, silhouette) = match labels {
        Some(l) => (
            Some(nearest_centroid_precision(layout, l)?),
            Some(silhouette_scaled(layout, l)?),
        ),
        None => (None, None),
    };
    Ok(MetricReport {
        nearest_centroid_precision: precision,
        silhouette_scaled: silhouette,
        neighbor_error_mean: mean,
        neighbor_error_per_point: per_point,
    })
}
