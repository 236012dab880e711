//! Dense helpers: pairwise distances and a symmetric eigensolver.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::Scalar;

/// Squared Euclidean distances between the rows of `a` and the rows of `b`,
/// computed from expanded dot products `|a|^2 + |b|^2 - 2 a.b` and clamped
/// at zero.
pub fn squared_distances<T: Scalar>(a: ArrayView2<'_, T>, b: ArrayView2<'_, T>) -> Array2<T> {
    let na = row_sq_norms(a);
    let nb = row_sq_norms(b);
    let mut d = a.dot(&b.t());
    let two = T::lit(2.0);
    for ((i, j), v) in d.indexed_iter_mut() {
        let s = na[i] + nb[j] - two * *v;
        *v = if s > T::zero() { s } else { T::zero() };
    }
    d
}

/// Squared distances within one point set. The result is exactly symmetric
/// with an exactly zero diagonal.
pub fn self_squared_distances<T: Scalar>(a: ArrayView2<'_, T>) -> Array2<T> {
    let n = a.nrows();
    if a.ncols() <= 4 {
        return direct_self_squared_distances(a);
    }
    let mut d = squared_distances(a, a);
    for i in 0..n {
        d[[i, i]] = T::zero();
        for j in (i + 1)..n {
            let v = d[[i, j]];
            d[[j, i]] = v;
        }
    }
    d
}

/// Squared distances from explicit coordinate differences. Used for
/// low-dimensional layouts where it is both cheap and exact for coincident
/// points.
pub fn direct_self_squared_distances<T: Scalar>(a: ArrayView2<'_, T>) -> Array2<T> {
    let n = a.nrows();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        let ri = a.row(i);
        for j in (i + 1)..n {
            let rj = a.row(j);
            let s = ri
                .iter()
                .zip(rj.iter())
                .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y));
            d[[i, j]] = s;
            d[[j, i]] = s;
        }
    }
    d
}

pub fn row_sq_norms<T: Scalar>(a: ArrayView2<'_, T>) -> Array1<T> {
    a.map_axis(Axis(1), |r| r.iter().fold(T::zero(), |acc, &x| acc + x * x))
}

/// Mean of the strictly upper triangle of a square matrix.
pub fn upper_mean<T: Scalar>(m: &Array2<T>) -> T {
    let n = m.nrows();
    let mut sum = T::zero();
    for i in 0..n {
        for j in (i + 1)..n {
            sum = sum + m[[i, j]];
        }
    }
    let pairs = n * (n - 1) / 2;
    sum / T::from_usize_lossy(pairs.max(1))
}

/// Eigen-decomposition of a real symmetric matrix.
///
/// Returns eigenvalues sorted in decreasing order and the matching
/// orthonormal eigenvectors as the columns of the second matrix. Householder
/// reduction to tridiagonal form followed by the implicit QL iteration.
pub fn symmetric_eigen<T: Scalar>(a: &Array2<T>) -> (Array1<T>, Array2<T>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "symmetric_eigen needs a square matrix");
    let mut v = a.clone();
    let mut d = Array1::zeros(n);
    let mut e = Array1::zeros(n);
    if n == 0 {
        return (d, v);
    }
    tridiagonalize(&mut v, &mut d, &mut e);
    tql2(&mut v, &mut d, &mut e);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[j].partial_cmp(&d[i]).unwrap_or(std::cmp::Ordering::Equal));
    let values = Array1::from_iter(order.iter().map(|&i| d[i]));
    let mut vectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        vectors.column_mut(dst).assign(&v.column(src));
    }
    (values, vectors)
}

fn tridiagonalize<T: Scalar>(v: &mut Array2<T>, d: &mut Array1<T>, e: &mut Array1<T>) {
    let n = v.nrows();
    for j in 0..n {
        d[j] = v[[n - 1, j]];
    }
    for i in (1..n).rev() {
        let mut scale = T::zero();
        let mut h = T::zero();
        for k in 0..i {
            scale = scale + d[k].abs();
        }
        if scale == T::zero() {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[[i - 1, j]];
                v[[i, j]] = T::zero();
                v[[j, i]] = T::zero();
            }
        } else {
            for k in 0..i {
                d[k] = d[k] / scale;
                h = h + d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > T::zero() {
                g = -g;
            }
            e[i] = scale * g;
            h = h - f * g;
            d[i - 1] = f - g;
            for j in 0..i {
                e[j] = T::zero();
            }
            for j in 0..i {
                f = d[j];
                v[[j, i]] = f;
                g = e[j] + v[[j, j]] * f;
                for k in (j + 1)..i {
                    g = g + v[[k, j]] * d[k];
                    e[k] = e[k] + v[[k, j]] * f;
                }
                e[j] = g;
            }
            f = T::zero();
            for j in 0..i {
                e[j] = e[j] / h;
                f = f + e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] = e[j] - hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[[k, j]] = v[[k, j]] - (f * e[k] + g * d[k]);
                }
                d[j] = v[[i - 1, j]];
                v[[i, j]] = T::zero();
            }
        }
        d[i] = h;
    }

    for i in 0..(n - 1) {
        v[[n - 1, i]] = v[[i, i]];
        v[[i, i]] = T::one();
        let h = d[i + 1];
        if h != T::zero() {
            for k in 0..=i {
                d[k] = v[[k, i + 1]] / h;
            }
            for j in 0..=i {
                let mut g = T::zero();
                for k in 0..=i {
                    g = g + v[[k, i + 1]] * v[[k, j]];
                }
                for k in 0..=i {
                    v[[k, j]] = v[[k, j]] - g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[[k, i + 1]] = T::zero();
        }
    }
    for j in 0..n {
        d[j] = v[[n - 1, j]];
        v[[n - 1, j]] = T::zero();
    }
    v[[n - 1, n - 1]] = T::one();
    e[0] = T::zero();
}

fn tql2<T: Scalar>(v: &mut Array2<T>, d: &mut Array1<T>, e: &mut Array1<T>) {
    let n = v.nrows();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = T::zero();

    let mut f = T::zero();
    let mut tst1 = T::zero();
    let eps = T::epsilon();
    let two = T::lit(2.0);
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m == n {
            m = n - 1;
        }
        if m > l {
            loop {
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (two * e[l]);
                let mut r = p.hypot(T::one());
                if p < T::zero() {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for i in (l + 2)..n {
                    d[i] = d[i] - h;
                }
                f = f + h;

                p = d[m];
                let mut c = T::one();
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = T::zero();
                let mut s2 = T::zero();
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        h = v[[k, i + 1]];
                        v[[k, i + 1]] = s * v[[k, i]] + c * h;
                        v[[k, i]] = c * v[[k, i]] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] = d[l] + f;
        e[l] = T::zero();
    }
}
