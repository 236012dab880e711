//! Initial layouts that get cloned: PCA, Force Scheme and layouts computed
//! elsewhere (for example t-SNE coordinates written to a file).

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{s, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::self_squared_distances;
use crate::preprocess::fit_pca_components;
use crate::{Error, Result, Scalar};

pub const DEFAULT_FORCE_ITERATIONS: usize = 50;
const FORCE_DAMPING: f64 = 0.125;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayoutSource {
    Pca,
    Force,
    External,
    Learned,
}

impl LayoutSource {
    pub fn as_str(self) -> &'static str {
        match self {
            LayoutSource::Pca => "pca",
            LayoutSource::Force => "force",
            LayoutSource::External => "external",
            LayoutSource::Learned => "learned",
        }
    }
}

/// Which technique produces the initial layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMethod {
    Pca,
    Force,
    External,
}

impl std::str::FromStr for InitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pca" => Ok(InitMethod::Pca),
            "force" => Ok(InitMethod::Force),
            "external" | "tsne" => Ok(InitMethod::External),
            other => Err(Error::InvalidConfig(format!("unknown init method `{other}`"))),
        }
    }
}

impl InitMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            InitMethod::Pca => "pca",
            InitMethod::Force => "force",
            InitMethod::External => "external",
        }
    }
}

/// Points in the visual space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Layout2D<T: Scalar> {
    /// `N x 2`
    pub coords: Array2<T>,
    pub source: LayoutSource,
}

impl<T: Scalar> Layout2D<T> {
    pub fn new(coords: Array2<T>, source: LayoutSource) -> Self {
        Self { coords, source }
    }

    pub fn len(&self) -> usize {
        self.coords.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.nrows() == 0
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Layout2D<T> {
        Layout2D {
            coords: self.coords.select(ndarray::Axis(0), indices),
            source: self.source,
        }
    }

    /// Root mean squared distance of the points from their centroid.
    pub fn rms_radius(&self) -> T {
        if self.is_empty() {
            return T::zero();
        }
        let mean = self.coords.mean_axis(ndarray::Axis(0)).expect("non-empty");
        let c = &self.coords - &mean;
        (c.iter().map(|&v| v * v).sum::<T>() / T::from_usize_lossy(self.len())).sqrt()
    }
}

/// Projection onto the top two principal components.
pub fn pca_2d<T: Scalar>(x: ArrayView2<'_, T>) -> Result<Layout2D<T>> {
    if x.nrows() < 3 {
        return Err(Error::TooFewPoints { n: x.nrows(), k: 2 });
    }
    let red = fit_pca_components(x, 2, false)?;
    let z = red.transform(x)?;
    let mut coords = Array2::zeros((x.nrows(), 2));
    coords.slice_mut(s![.., ..z.ncols()]).assign(&z);
    Ok(Layout2D::new(coords, LayoutSource::Pca))
}

/// Force Scheme placement.
///
/// Points start uniformly at random in the unit square. Each sweep visits
/// the points in a seeded random order; for the visited point `i` every
/// other point `j` moves along the direction `y_j - y_i` by a fraction of
/// `d_ij - |y_j - y_i|`, where `d_ij` is the feature-space distance divided
/// by the largest such distance. The fraction starts at `1/8`; a sweep that
/// would raise the total stress ([`force_stress`]) is undone and the
/// fraction halved, so stress never increases from one sweep to the next.
pub fn force_scheme<T: Scalar>(x: ArrayView2<'_, T>, iterations: usize, seed: u64) -> Result<Layout2D<T>> {
    force_scheme_traced(x, iterations, seed).map(|(l, _)| l)
}

/// [`force_scheme`] that also reports [`force_stress`] after every sweep.
pub fn force_scheme_traced<T: Scalar>(
    x: ArrayView2<'_, T>,
    iterations: usize,
    seed: u64,
) -> Result<(Layout2D<T>, Vec<T>)> {
    let n = x.nrows();
    if n < 3 {
        return Err(Error::TooFewPoints { n, k: 2 });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput {
            context: "force scheme input".into(),
        });
    }
    let dist = normalized_distances(x);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y = Array2::from_shape_fn((n, 2), |_| T::lit(rng.random::<f64>()));
    let mut order: Vec<usize> = (0..n).collect();
    let tiny = T::lit(1e-9);
    let mut trace = Vec::with_capacity(iterations);
    let mut damping = T::lit(FORCE_DAMPING);
    let mut stress = stress_against(&dist, y.view());
    for _ in 0..iterations {
        let before = y.clone();
        order.shuffle(&mut rng);
        for &i in &order {
            for j in 0..n {
                if j == i {
                    continue;
                }
                let vx = y[[j, 0]] - y[[i, 0]];
                let vy = y[[j, 1]] - y[[i, 1]];
                let low = (vx * vx + vy * vy).sqrt().max(tiny);
                let step = damping * (dist[[i, j]] - low) / low;
                y[[j, 0]] = y[[j, 0]] + step * vx;
                y[[j, 1]] = y[[j, 1]] + step * vy;
            }
        }
        let next = stress_against(&dist, y.view());
        if next > stress {
            y = before;
            damping = damping / T::lit(2.0);
        } else {
            stress = next;
        }
        trace.push(stress);
    }
    Ok((Layout2D::new(y, LayoutSource::Force), trace))
}

fn normalized_distances<T: Scalar>(x: ArrayView2<'_, T>) -> Array2<T> {
    let mut dist = self_squared_distances(x).mapv(|v| v.sqrt());
    let max = dist.iter().fold(T::zero(), |a, &b| a.max(b));
    if max > T::zero() {
        dist.mapv_inplace(|v| v / max);
    }
    dist
}

fn stress_against<T: Scalar>(dist: &Array2<T>, layout: ArrayView2<'_, T>) -> T {
    let low = crate::linalg::direct_self_squared_distances(layout).mapv(|v| v.sqrt());
    let n = dist.nrows();
    let mut s = T::zero();
    for i in 0..n {
        for j in (i + 1)..n {
            let d = dist[[i, j]] - low[[i, j]];
            s = s + d * d;
        }
    }
    s
}

/// Sum of squared differences between normalized feature distances and
/// layout distances, the quantity Force Scheme drives down.
pub fn force_stress<T: Scalar>(x: ArrayView2<'_, T>, layout: ArrayView2<'_, T>) -> T {
    stress_against(&normalized_distances(x), layout)
}

/// Reads a layout file: one `x,y` pair per line, `#` lines are comments.
pub fn load_external_layout<T: Scalar>(path: impl AsRef<Path>, expected_rows: Option<usize>) -> Result<Layout2D<T>> {
    let text = fs::read_to_string(path)?;
    parse_layout(&text, expected_rows)
}

pub fn parse_layout<T: Scalar>(text: &str, expected_rows: Option<usize>) -> Result<Layout2D<T>> {
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 2 {
            return Err(Error::Parse {
                line: line_no,
                column: fields.len().min(3),
                message: format!("expected 2 comma-separated values, found {}", fields.len()),
            });
        }
        for (col, f) in fields.iter().enumerate() {
            let v: f64 = f.trim().parse().map_err(|_| Error::Parse {
                line: line_no,
                column: col + 1,
                message: format!("`{}` is not a number", f.trim()),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    column: col + 1,
                    message: "non-finite coordinate".into(),
                });
            }
            values.push(T::lit(v));
        }
    }
    let rows = values.len() / 2;
    if let Some(expected) = expected_rows {
        if expected != rows {
            return Err(Error::RowCountMismatch { expected, found: rows });
        }
    }
    let coords = Array2::from_shape_vec((rows, 2), values).expect("two values per row");
    Ok(Layout2D::new(coords, LayoutSource::External))
}

/// Writes coordinates in the format [`load_external_layout`] reads. Values
/// use the shortest representation that parses back to the same number.
pub fn write_layout<T: Scalar>(layout: &Layout2D<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(f, "# x,y")?;
    for row in layout.coords.rows() {
        writeln!(f, "{:?},{:?}", row[0], row[1])?;
    }
    f.flush()?;
    Ok(())
}
