//! Dataset loading: CSV files, the plain-text matrix format and a JSON
//! registry of bundled datasets.
//!
//! Matrix format: a header line `rows cols` (or `rows cols labels`, in which
//! case every row carries one extra trailing integer label), followed by
//! whitespace-separated values in row-major order.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    /// `N x n`, all finite.
    pub features: Array2<f64>,
    pub labels: Option<Vec<i64>>,
    pub name: String,
    pub feature_names: Option<Vec<String>>,
}

impl LabeledDataset {
    pub fn new(features: Array2<f64>, labels: Option<Vec<i64>>, name: impl Into<String>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != features.nrows() {
                return Err(Error::RowCountMismatch {
                    expected: features.nrows(),
                    found: l.len(),
                });
            }
        }
        if let Some(((r, c), _)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteInput {
                context: format!("row {}, column {}", r + 1, c + 1),
            });
        }
        Ok(Self {
            features,
            labels,
            name: name.into(),
            feature_names: None,
        })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Sorted distinct labels.
    pub fn classes(&self) -> Vec<i64> {
        let set: BTreeSet<i64> = self.labels.iter().flatten().copied().collect();
        set.into_iter().collect()
    }

    /// Count of rows per label.
    pub fn supports(&self) -> BTreeMap<i64, usize> {
        let mut m = BTreeMap::new();
        for &l in self.labels.iter().flatten() {
            *m.entry(l).or_insert(0) += 1;
        }
        m
    }

    /// Same features without labels.
    pub fn unlabeled(&self) -> LabeledDataset {
        LabeledDataset {
            labels: None,
            ..self.clone()
        }
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: self.features.select(Axis(0), indices),
            labels: self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
            name: self.name.clone(),
            feature_names: self.feature_names.clone(),
        }
    }
}

fn parse_label(text: &str, line: usize, column: usize) -> Result<i64> {
    let t = text.trim();
    if let Ok(v) = t.parse::<i64>() {
        return Ok(v);
    }
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() && v.fract() == 0.0 => Ok(v as i64),
        _ => Err(Error::Parse {
            line,
            column,
            message: format!("label `{t}` is not an integer"),
        }),
    }
}

/// Reads a CSV file with a header row. All columns except `label_column`
/// must be numeric.
pub fn load_csv(path: impl AsRef<Path>, label_column: Option<&str>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_csv(&text, label_column, &name)
}

pub fn parse_csv(text: &str, label_column: Option<&str>, name: &str) -> Result<LabeledDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let csv_err = |e: csv::Error| {
        let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
        Error::Parse {
            line,
            column: 0,
            message: e.to_string(),
        }
    };
    let header: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(str::to_owned).collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            message: "missing header row".into(),
        });
    }
    let label_idx = match label_column {
        Some(lc) => Some(
            header
                .iter()
                .position(|h| h == lc)
                .ok_or_else(|| Error::MissingLabelColumn(lc.to_owned()))?,
        ),
        None => None,
    };
    let feature_cols: Vec<usize> = (0..header.len()).filter(|&c| Some(c) != label_idx).collect();

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(rows + 2);
        if record.len() != header.len() {
            return Err(Error::Parse {
                line,
                column: record.len().min(header.len()) + 1,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        for &c in &feature_cols {
            let field = &record[c];
            let v: f64 = field
                .parse()
                .map_err(|_| Error::NonNumericFeature { line, column: c + 1 })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    column: c + 1,
                    message: format!("non-finite value `{field}`"),
                });
            }
            values.push(v);
        }
        if let Some(li) = label_idx {
            labels.push(parse_label(&record[li], line, li + 1)?);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Parse {
            line: 2,
            column: 1,
            message: "no data rows".into(),
        });
    }
    let features = Array2::from_shape_vec((rows, feature_cols.len()), values).expect("rectangular rows");
    let mut ds = LabeledDataset::new(features, label_idx.map(|_| labels), name)?;
    ds.feature_names = Some(feature_cols.iter().map(|&c| header[c].clone()).collect());
    Ok(ds)
}

/// Keeps rows whose label is in `classes` (all rows when `classes` is empty),
/// then optionally draws a seeded uniform sample of `per_total` of them. The
/// sample keeps the original row order.
pub fn subset_by_class(
    ds: &LabeledDataset,
    classes: &[i64],
    per_total: Option<usize>,
    seed: u64,
) -> Result<LabeledDataset> {
    let labels = ds.labels.as_ref().ok_or(Error::MissingLabels)?;
    let present = ds.classes();
    for c in classes {
        if !present.contains(c) {
            return Err(Error::UnknownClass(*c));
        }
    }
    let mut rows: Vec<usize> = (0..ds.len())
        .filter(|&i| classes.is_empty() || classes.contains(&labels[i]))
        .collect();
    if let Some(total) = per_total {
        if total > rows.len() {
            return Err(Error::SampleTooLarge {
                requested: total,
                available: rows.len(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = rand::seq::index::sample(&mut rng, rows.len(), total).into_vec();
        picked.sort_unstable();
        rows = picked.into_iter().map(|p| rows[p]).collect();
    }
    Ok(ds.select(&rows))
}

/// Reads the plain-text matrix format.
pub fn load_vectors(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_vectors(&text, &name)
}

pub fn parse_vectors(text: &str, name: &str) -> Result<LabeledDataset> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (hline, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        column: 1,
        message: "empty matrix file".into(),
    })?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let bad_header = |column: usize, message: &str| Error::Parse {
        line: hline + 1,
        column,
        message: message.into(),
    };
    if fields.len() < 2 || fields.len() > 3 {
        return Err(bad_header(1, "header must be `rows cols [labels]`"));
    }
    let rows: usize = fields[0].parse().map_err(|_| bad_header(1, "row count is not an integer"))?;
    let cols: usize = fields[1].parse().map_err(|_| bad_header(2, "column count is not an integer"))?;
    let labeled = match fields.get(2) {
        None => false,
        Some(&"labels") => true,
        Some(_) => return Err(bad_header(3, "third header field must be `labels`")),
    };
    let width = cols + usize::from(labeled);

    let mut values = Vec::with_capacity(rows * cols);
    let mut labels = Vec::new();
    let mut count = 0usize;
    for (lineno, line) in lines {
        for (col, tok) in line.split_whitespace().enumerate() {
            let pos = count % width;
            let loc = |message: String| Error::Parse {
                line: lineno + 1,
                column: col + 1,
                message,
            };
            if labeled && pos == cols {
                labels.push(parse_label(tok, lineno + 1, col + 1)?);
            } else {
                let v: f64 = tok.parse().map_err(|_| loc(format!("`{tok}` is not a number")))?;
                if !v.is_finite() {
                    return Err(loc(format!("non-finite value `{tok}`")));
                }
                values.push(v);
            }
            count += 1;
        }
    }
    if count != rows * width {
        return Err(Error::ShapeHeaderMismatch {
            declared: rows,
            found: count.div_ceil(width.max(1)),
        });
    }
    let features = Array2::from_shape_vec((rows, cols), values).expect("count checked");
    LabeledDataset::new(features, labeled.then_some(labels), name)
}

/// Writes the plain-text matrix format. Values round-trip exactly.
pub fn write_vectors(ds: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, format_vectors(ds))?;
    Ok(())
}

pub fn format_vectors(ds: &LabeledDataset) -> String {
    let mut out = String::new();
    let _ = write!(out, "{} {}", ds.len(), ds.dim());
    if ds.labels.is_some() {
        out.push_str(" labels");
    }
    out.push('\n');
    for (i, row) in ds.features.rows().into_iter().enumerate() {
        let mut first = true;
        for v in row {
            if !first {
                out.push(' ');
            }
            first = false;
            let _ = write!(out, "{v:?}");
        }
        if let Some(l) = &ds.labels {
            let _ = write!(out, " {}", l[i]);
        }
        out.push('\n');
    }
    out
}

/// Class subset applied after loading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetSpec {
    #[serde(default)]
    pub classes: Vec<i64>,
    pub per_total: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

/// One registry entry. `path` is relative to the registry file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub path: PathBuf,
    pub label_column: Option<String>,
    #[serde(default)]
    pub description: String,
    /// Multiplier applied to every feature after loading.
    pub feature_scale: Option<f64>,
    pub subset: Option<SubsetSpec>,
    /// Fraction of variance kept by the PCA step.
    #[serde(default = "default_retained")]
    pub retained_fraction: f64,
    pub control_points: Option<usize>,
    pub k_original: Option<usize>,
    pub k_visual: Option<usize>,
    /// Class moved by the simulated drag in neighbour learning.
    pub drag_class: Option<i64>,
}

fn default_retained() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Registry {
    pub datasets: BTreeMap<String, DatasetEntry>,
    #[serde(skip)]
    pub root: PathBuf,
}

impl Registry {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reg: Registry = serde_json::from_str(&fs::read_to_string(path)?)?;
        reg.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(reg)
    }

    /// The registry shipped in the repository's `data/` directory.
    pub fn bundled() -> Result<Self> {
        Self::load(bundled_registry_path())
    }

    pub fn names(&self) -> Vec<&str> {
        self.datasets.keys().map(String::as_str).collect()
    }

    pub fn entry(&self, name: &str) -> Result<&DatasetEntry> {
        self.datasets.get(name).ok_or_else(|| Error::UnknownDataset(name.to_owned()))
    }

    /// Loads, scales and subsets the named dataset.
    pub fn load_dataset(&self, name: &str) -> Result<LabeledDataset> {
        let e = self.entry(name)?;
        let path = self.root.join(&e.path);
        let mut ds = match path.extension().and_then(|x| x.to_str()) {
            Some("csv") => load_csv(&path, e.label_column.as_deref())?,
            _ => load_vectors(&path)?,
        };
        ds.name = name.to_owned();
        if let Some(s) = e.feature_scale {
            ds.features.mapv_inplace(|v| v * s);
        }
        if let Some(sub) = &e.subset {
            ds = subset_by_class(&ds, &sub.classes, sub.per_total, sub.seed)?;
        }
        Ok(ds)
    }
}

/// `data/registry.json` at the workspace root.
pub fn bundled_registry_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/registry.json")
}
