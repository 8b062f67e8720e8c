//! Reference classifiers, confusion matrices, and correlation of `A` with
//! test accuracy across representations.
//!
//! The default classifier is a Gaussian discriminant fitted in the original
//! feature space; k-NN is offered as a second, model-free reference.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::class_models::{fit_class_gaussians, ClassGaussians};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::metric::pearson_correlation;

pub const DEFAULT_NEIGHBORS: usize = 5;
/// Fewest representations accepted by [`correlate_runs`].
pub const MIN_RECORDS: usize = 3;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierKind {
    #[default]
    GaussianDiscriminant,
    Knn {
        neighbors: usize,
    },
}

#[derive(Debug, Clone)]
pub enum Classifier {
    GaussianDiscriminant {
        models: ClassGaussians,
        log_priors: Vec<f64>,
    },
    Knn {
        neighbors: usize,
        features: DMatrix<f64>,
        labels: Vec<usize>,
        num_classes: usize,
    },
}

pub fn fit_reference_classifier(train: &LabeledDataset, kind: ClassifierKind) -> Result<Classifier> {
    match kind {
        ClassifierKind::GaussianDiscriminant => {
            let models = fit_class_gaussians(train.features(), train.labels(), train.class_names())?;
            let n = train.n() as f64;
            let log_priors = train.class_counts().iter().map(|&c| (c as f64 / n).ln()).collect();
            Ok(Classifier::GaussianDiscriminant { models, log_priors })
        }
        ClassifierKind::Knn { neighbors } => {
            if neighbors == 0 {
                return Err(Error::InvalidInput("k-NN needs at least one neighbor".into()));
            }
            Ok(Classifier::Knn {
                neighbors,
                features: train.features().clone(),
                labels: train.labels().to_vec(),
                num_classes: train.num_classes(),
            })
        }
    }
}

impl Classifier {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            Classifier::GaussianDiscriminant { .. } => ClassifierKind::GaussianDiscriminant,
            Classifier::Knn { neighbors, .. } => ClassifierKind::Knn { neighbors: *neighbors },
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Classifier::GaussianDiscriminant { models, .. } => models.dim(),
            Classifier::Knn { features, .. } => features.ncols(),
        }
    }

    /// Label for one point.
    ///
    /// Discriminant ties go to the lowest class id. k-NN picks neighbours by
    /// (distance, training row); vote ties go to the tied class with the
    /// nearest member, then the lowest id.
    pub fn predict_one(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(match self {
            Classifier::GaussianDiscriminant { models, log_priors } => {
                let mut best = (f64::NEG_INFINITY, 0);
                for (k, (m, lp)) in models.models().iter().zip(log_priors).enumerate() {
                    let score = lp + m.log_pdf_unchecked(x);
                    if score > best.0 {
                        best = (score, k);
                    }
                }
                best.1
            }
            Classifier::Knn {
                neighbors,
                features,
                labels,
                num_classes,
            } => {
                let mut dists: Vec<(f64, usize)> = (0..features.nrows())
                    .map(|r| {
                        let d: f64 = features.row(r).iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                        (d, r)
                    })
                    .collect();
                let k = (*neighbors).min(dists.len());
                let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
                if k < dists.len() {
                    dists.select_nth_unstable_by(k - 1, cmp);
                }
                let nearest = &mut dists[..k];
                nearest.sort_by(cmp);
                let mut votes = vec![0usize; *num_classes];
                let mut first_rank = vec![usize::MAX; *num_classes];
                for (rank, &(_, r)) in nearest.iter().enumerate() {
                    let c = labels[r];
                    votes[c] += 1;
                    first_rank[c] = first_rank[c].min(rank);
                }
                (0..*num_classes)
                    .max_by(|&a, &b| {
                        votes[a]
                            .cmp(&votes[b])
                            .then(first_rank[b].cmp(&first_rank[a]))
                            .then(b.cmp(&a))
                    })
                    .unwrap_or(0)
            }
        })
    }

    pub fn predict(&self, features: &DMatrix<f64>) -> Result<Vec<usize>> {
        if features.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: features.ncols(),
            });
        }
        let mut row = vec![0.0; features.ncols()];
        (0..features.nrows())
            .map(|r| {
                for (c, v) in row.iter_mut().enumerate() {
                    *v = features[(r, c)];
                }
                self.predict_one(&row)
            })
            .collect()
    }

    /// Predicts `test` and tallies accuracy and the confusion matrix.
    pub fn evaluate(&self, test: &LabeledDataset) -> Result<EvalResult> {
        let predicted = self.predict(test.features())?;
        let confusion = confusion_matrix(&predicted, test.labels(), test.num_classes())?;
        Ok(EvalResult::from_confusion(
            confusion,
            self.kind(),
            test.class_names().to_vec(),
        ))
    }
}

/// Entry `(i, j)` counts samples with truth `i` predicted as `j`.
pub fn confusion_matrix(predicted: &[usize], truth: &[usize], num_classes: usize) -> Result<Vec<Vec<u64>>> {
    if predicted.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: predicted.len(),
        });
    }
    let mut m = vec![vec![0u64; num_classes]; num_classes];
    for (&p, &t) in predicted.iter().zip(truth) {
        for label in [p, t] {
            if label >= num_classes {
                return Err(Error::InvalidClass {
                    class: label,
                    num_classes,
                });
            }
        }
        m[t][p] += 1;
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub accuracy: f64,
    /// Rows are true classes, columns predicted classes.
    pub confusion: Vec<Vec<u64>>,
    pub class_names: Vec<String>,
    pub classifier: ClassifierKind,
    pub n_test: usize,
}

impl EvalResult {
    pub fn from_confusion(confusion: Vec<Vec<u64>>, classifier: ClassifierKind, class_names: Vec<String>) -> Self {
        let n_test: u64 = confusion.iter().flatten().sum();
        let correct: u64 = (0..confusion.len()).map(|i| confusion[i][i]).sum();
        let accuracy = if n_test == 0 {
            0.0
        } else {
            correct as f64 / n_test as f64
        };
        Self {
            accuracy,
            confusion,
            class_names,
            classifier,
            n_test: n_test as usize,
        }
    }

    /// Confusion matrix as delimited text with class-name headers.
    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("truth\\predicted");
        for name in &self.class_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (name, row) in self.class_names.iter().zip(&self.confusion) {
            out.push_str(name);
            for c in row {
                out.push_str(&format!(",{c}"));
            }
            out.push('\n');
        }
        out
    }
}

/// One representation's train-side metric and test-side accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentationRecord {
    pub representation: String,
    pub metric_a: f64,
    pub test_accuracy: f64,
}

impl RepresentationRecord {
    pub fn new(representation: impl Into<String>, metric_a: f64, test_accuracy: f64) -> Result<Self> {
        let representation = representation.into();
        for (what, v) in [("metric A", metric_a), ("test accuracy", test_accuracy)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidInput(format!(
                    "{representation}: {what} {v} is outside [0, 1]"
                )));
            }
        }
        Ok(Self {
            representation,
            metric_a,
            test_accuracy,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub pearson_r: f64,
    pub records: Vec<RepresentationRecord>,
}

/// Pearson `r` between `A` and test accuracy across at least three records.
pub fn correlate_runs(records: &[RepresentationRecord]) -> Result<Correlation> {
    if records.len() < MIN_RECORDS {
        return Err(Error::InvalidInput(format!(
            "need at least {MIN_RECORDS} representation records, got {}",
            records.len()
        )));
    }
    let a: Vec<f64> = records.iter().map(|r| r.metric_a).collect();
    let acc: Vec<f64> = records.iter().map(|r| r.test_accuracy).collect();
    Ok(Correlation {
        pearson_r: pearson_correlation(&a, &acc)?,
        records: records.to_vec(),
    })
}

pub const RECORDS_HEADER: &str = "representation,metric_a,test_accuracy";

/// Parses a `representation,metric_a,test_accuracy` file. Errors carry the
/// 1-based line number.
pub fn parse_records(text: &str, location: &str) -> Result<Vec<RepresentationRecord>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, header)) if header.trim() == RECORDS_HEADER => {}
        Some((i, _)) => {
            return Err(Error::Parse {
                location: location.into(),
                row: i + 1,
                column: None,
                message: format!("expected header '{RECORDS_HEADER}'"),
            })
        }
        None => return Err(Error::InvalidInput(format!("{location}: empty record file"))),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let parse_err = |message: String| Error::Parse {
            location: location.into(),
            row: line_no,
            column: None,
            message,
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(parse_err(format!("expected 3 fields, found {}", fields.len())));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| parse_err(format!("non-numeric value '{s}'")))
        };
        let (a, acc) = (num(fields[1])?, num(fields[2])?);
        out.push(RepresentationRecord::new(fields[0], a, acc).map_err(|e| parse_err(e.to_string()))?);
    }
    Ok(out)
}

pub fn load_records(path: impl AsRef<Path>) -> Result<Vec<RepresentationRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_records(&text, &path.display().to_string())
}
