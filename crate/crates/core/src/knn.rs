//! Exact k-nearest-neighbour search by Euclidean distance.
//!
//! Ties are broken by the lower index so results are reproducible.

use ndarray::ArrayView2;

use crate::Scalar;

fn sq_dist<T: Scalar>(points: ArrayView2<'_, T>, a: usize, b: usize) -> T {
    points
        .row(a)
        .iter()
        .zip(points.row(b).iter())
        .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
}

/// The `k` nearest rows to row `query`, excluding the query itself,
/// closest first.
pub fn neighbors_of<T: Scalar>(points: ArrayView2<'_, T>, query: usize, k: usize) -> Vec<usize> {
    let n = points.nrows();
    let mut cand: Vec<(T, usize)> = (0..n)
        .filter(|&j| j != query)
        .map(|j| (sq_dist(points, query, j), j))
        .collect();
    let k = k.min(cand.len());
    if k == 0 {
        return Vec::new();
    }
    let cmp = |a: &(T, usize), b: &(T, usize)| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
    };
    if k < cand.len() {
        cand.select_nth_unstable_by(k - 1, cmp);
        cand.truncate(k);
    }
    cand.sort_by(cmp);
    cand.into_iter().map(|(_, j)| j).collect()
}

/// Neighbour lists for every row.
pub fn all_neighbors<T: Scalar>(points: ArrayView2<'_, T>, k: usize) -> Vec<Vec<usize>> {
    (0..points.nrows()).map(|i| neighbors_of(points, i, k)).collect()
}
