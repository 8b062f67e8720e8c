//! Labeled feature datasets: loading, saving, synthesis and splitting.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of samples per class; covariance estimation needs two.
pub const MIN_CLASS_SAMPLES: usize = 2;

/// `N` feature vectors in `R^D` with dense class ids `0..K`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: DMatrix<f64>,
    labels: Vec<usize>,
    class_names: Vec<String>,
}

impl LabeledDataset {
    /// Builds a dataset, checking label range, class coverage, finiteness and
    /// the per-class minimum of [`MIN_CLASS_SAMPLES`].
    pub fn new(features: DMatrix<f64>, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.nrows(),
                found: labels.len(),
            });
        }
        if class_names.is_empty() {
            return Err(Error::InvalidInput("dataset has no classes".into()));
        }
        if features.ncols() == 0 {
            return Err(Error::InvalidInput("dataset has no feature columns".into()));
        }
        let k = class_names.len();
        let mut counts = vec![0usize; k];
        for &label in &labels {
            if label >= k {
                return Err(Error::InvalidClass {
                    class: label,
                    num_classes: k,
                });
            }
            counts[label] += 1;
        }
        if let Some((row, col)) = first_non_finite(&features) {
            return Err(Error::Parse {
                location: "features".into(),
                row: row + 1,
                column: Some(format!("f{col}")),
                message: "value is NaN or infinite".into(),
            });
        }
        check_class_counts(&counts, &class_names)?;
        Ok(Self {
            features,
            labels,
            class_names,
        })
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// Number of samples `N`.
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    /// Feature dimensionality `D`.
    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Number of classes `K`.
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let features = self.features.select_rows(indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::new(features, labels, self.class_names.clone())
    }

    /// Re-labels this dataset so its class ids follow `reference` names.
    ///
    /// The two name sets must be identical.
    pub fn align_classes(&self, reference: &[String]) -> Result<Self> {
        if reference.len() != self.num_classes() {
            return Err(Error::InvalidInput(format!(
                "class count mismatch: expected {}, found {}",
                reference.len(),
                self.num_classes()
            )));
        }
        let lookup: HashMap<&str, usize> = reference
            .iter()
            .enumerate()
            .map(|(i, name)| (name.as_str(), i))
            .collect();
        let mut remap = Vec::with_capacity(self.num_classes());
        for name in &self.class_names {
            match lookup.get(name.as_str()) {
                Some(&id) => remap.push(id),
                None => {
                    return Err(Error::InvalidInput(format!(
                        "class '{name}' is not among the reference classes"
                    )))
                }
            }
        }
        let labels = self.labels.iter().map(|&l| remap[l]).collect();
        Self::new(self.features.clone(), labels, reference.to_vec())
    }
}

fn first_non_finite(m: &DMatrix<f64>) -> Option<(usize, usize)> {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if !m[(r, c)].is_finite() {
                return Some((r, c));
            }
        }
    }
    None
}

fn check_class_counts(counts: &[usize], names: &[String]) -> Result<()> {
    for (count, name) in counts.iter().zip(names) {
        if *count < MIN_CLASS_SAMPLES {
            return Err(Error::InsufficientSamples {
                class: name.clone(),
                count: *count,
                needed: MIN_CLASS_SAMPLES,
            });
        }
    }
    Ok(())
}

/// Reads a comma-delimited file with a header row. Every column other than
/// `label_column` must be numeric. Labels are re-encoded to dense ids in order
/// of first appearance.
pub fn load_dataset(path: impl AsRef<Path>, label_column: &str) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let location = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };

    let headers = reader.headers().map_err(csv_err)?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::InvalidInput(format!("{location}: no label column '{label_column}'")))?;
    let width = headers.len();
    let dim = width - 1;

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut class_names: Vec<String> = Vec::new();
    let mut class_ids: HashMap<String, usize> = HashMap::new();

    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(csv_err)?;
        if record.len() != width {
            return Err(Error::Parse {
                location,
                row,
                column: None,
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            if c == label_idx {
                let next = class_names.len();
                let id = *class_ids.entry(cell.to_string()).or_insert_with(|| {
                    class_names.push(cell.to_string());
                    next
                });
                labels.push(id);
                continue;
            }
            let value: f64 = cell.parse().map_err(|_| Error::Parse {
                location: location.clone(),
                row,
                column: Some(headers[c].to_string()),
                message: format!("non-numeric value '{cell}'"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    location,
                    row,
                    column: Some(headers[c].to_string()),
                    message: format!("value '{cell}' is NaN or infinite"),
                });
            }
            values.push(value);
        }
    }

    if labels.is_empty() {
        return Err(Error::InvalidInput(format!("{location}: no data rows")));
    }
    if dim == 0 {
        return Err(Error::InvalidInput(format!("{location}: no feature columns")));
    }
    let features = DMatrix::from_row_slice(labels.len(), dim, &values);
    LabeledDataset::new(features, labels, class_names)
}

/// Writes `data` with header `f0,...,f{D-1},label`. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn save_dataset(data: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let header: Vec<String> = (0..data.dim()).map(|j| format!("f{j}")).collect();
    write_labeled_rows(
        path.as_ref(),
        &header,
        data.features(),
        data.labels(),
        data.class_names(),
    )
}

/// Shared writer for labeled matrices (datasets and embeddings).
pub(crate) fn write_labeled_rows(
    path: &Path,
    header: &[String],
    rows: &DMatrix<f64>,
    labels: &[usize],
    class_names: &[String],
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "{},label", header.join(",")).map_err(io)?;
    let mut line = String::new();
    for (r, &label) in labels.iter().enumerate() {
        line.clear();
        for c in 0..rows.ncols() {
            line.push_str(&format!("{},", rows[(r, c)]));
        }
        line.push_str(&csv_field(&class_names[label]));
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One Gaussian class in a [`SynthSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthClass {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub mean: Vec<f64>,
    /// Row-major `D×D` covariance.
    pub cov: Vec<Vec<f64>>,
    pub n: usize,
}

/// Gaussian mixture recipe for synthetic datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub classes: Vec<SynthClass>,
    pub seed: u64,
}

impl SynthSpec {
    /// `num_classes` unit-covariance classes in `R^dim` whose means sit on
    /// scaled coordinate axes, so every pair of means is `separation` apart.
    pub fn simplex(num_classes: usize, dim: usize, separation: f64, n_per_class: usize, seed: u64) -> Result<Self> {
        if num_classes > dim {
            return Err(Error::InvalidInput(format!(
                "need dim ≥ classes for axis means ({num_classes} classes, dim {dim})"
            )));
        }
        let scale = separation / std::f64::consts::SQRT_2;
        let identity: Vec<Vec<f64>> = (0..dim)
            .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let classes = (0..num_classes)
            .map(|k| {
                let mut mean = vec![0.0; dim];
                mean[k] = scale;
                SynthClass {
                    name: Some(format!("c{k}")),
                    mean,
                    cov: identity.clone(),
                    n: n_per_class,
                }
            })
            .collect();
        Ok(Self { classes, seed })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|source| Error::Json {
            context: "synth spec".into(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            context: path.display().to_string(),
            source,
        })
    }

    fn class_name(&self, k: usize) -> String {
        self.classes[k].name.clone().unwrap_or_else(|| format!("c{k}"))
    }

    /// Checks shapes and symmetry, and returns each class's Cholesky factor.
    fn validate(&self) -> Result<Vec<DMatrix<f64>>> {
        let first = self
            .classes
            .first()
            .ok_or_else(|| Error::InvalidInput("synth spec has no classes".into()))?;
        let dim = first.mean.len();
        if dim == 0 {
            return Err(Error::InvalidInput("class means are empty".into()));
        }
        let mut factors = Vec::with_capacity(self.classes.len());
        for (k, class) in self.classes.iter().enumerate() {
            let name = self.class_name(k);
            if class.mean.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: class.mean.len(),
                });
            }
            if class.cov.len() != dim || class.cov.iter().any(|row| row.len() != dim) {
                return Err(Error::InvalidInput(format!(
                    "class {name}: covariance must be {dim}×{dim}"
                )));
            }
            if class.n < MIN_CLASS_SAMPLES {
                return Err(Error::InsufficientSamples {
                    class: name,
                    count: class.n,
                    needed: MIN_CLASS_SAMPLES,
                });
            }
            if class
                .mean
                .iter()
                .chain(class.cov.iter().flatten())
                .any(|v| !v.is_finite())
            {
                return Err(Error::InvalidInput(format!("class {name}: non-finite parameter")));
            }
            let cov = DMatrix::from_fn(dim, dim, |i, j| class.cov[i][j]);
            for i in 0..dim {
                for j in 0..i {
                    if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 {
                        return Err(Error::InvalidInput(format!(
                            "class {name}: covariance is not symmetric at ({i},{j})"
                        )));
                    }
                }
            }
            let chol = cov
                .cholesky()
                .ok_or_else(|| Error::NotPositiveDefinite(format!("covariance of class {name}")))?;
            factors.push(chol.unpack());
        }
        Ok(factors)
    }
}

/// Draws every class in order from its Gaussian using one seeded generator.
pub fn synth_gaussian_mixture(spec: &SynthSpec) -> Result<LabeledDataset> {
    let factors = spec.validate()?;
    let dim = spec.classes[0].mean.len();
    let total: usize = spec.classes.iter().map(|c| c.n).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut values = Vec::with_capacity(total * dim);
    let mut labels = Vec::with_capacity(total);
    let mut z = DVector::zeros(dim);
    for (k, (class, lower)) in spec.classes.iter().zip(&factors).enumerate() {
        let mean = DVector::from_column_slice(&class.mean);
        for _ in 0..class.n {
            for v in z.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            let x = &mean + lower * &z;
            values.extend(x.iter());
            labels.push(k);
        }
    }
    let names = (0..spec.classes.len()).map(|k| spec.class_name(k)).collect();
    LabeledDataset::new(DMatrix::from_row_slice(total, dim, &values), labels, names)
}

/// Train/test row indices for a per-class stratified split; each list is in
/// ascending row order.
pub fn stratified_split_indices(
    data: &LabeledDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); data.num_classes()];
    for (i, &l) in data.labels().iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (k, mut rows) in by_class.into_iter().enumerate() {
        let n_train = (train_fraction * rows.len() as f64).round() as usize;
        let n_test = rows.len() - n_train;
        if n_train < MIN_CLASS_SAMPLES || n_test < MIN_CLASS_SAMPLES {
            return Err(Error::InsufficientSamples {
                class: data.class_names()[k].clone(),
                count: n_train.min(n_test),
                needed: MIN_CLASS_SAMPLES,
            });
        }
        rows.shuffle(&mut rng);
        train.extend_from_slice(&rows[..n_train]);
        test.extend_from_slice(&rows[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Splits `data` so each class contributes `round(train_fraction · n_k)` rows
/// to the training side.
pub fn stratified_split(
    data: &LabeledDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let (train, test) = stratified_split_indices(data, train_fraction, seed)?;
    Ok((data.subset(&train)?, data.subset(&test)?))
}
