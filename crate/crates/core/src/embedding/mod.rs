//! Projection of feature vectors to a low-dimensional space.
//!
//! Exact t-SNE is the default projection; PCA is the linear alternative.

mod pca;
mod tsne;

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{load_dataset, write_labeled_rows, LabeledDataset};
use crate::error::{Error, Result};

pub use pca::pca_project;
pub use tsne::{conditional_affinities, kl_gradient, kl_objective, tsne_affinities, tsne_embed, TsneConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingMethod {
    Tsne,
    Pca,
}

impl std::fmt::Display for EmbeddingMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EmbeddingMethod::Tsne => f.write_str("tsne"),
            EmbeddingMethod::Pca => f.write_str("pca"),
        }
    }
}

/// Everything about an embedding except its coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMeta {
    pub method: EmbeddingMethod,
    pub target_dim: usize,
    /// KL divergence for t-SNE, fraction of retained variance for PCA.
    pub final_objective: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tsne: Option<TsneConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// `(iteration, KL)` checkpoints recorded during t-SNE optimization.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objective_trace: Vec<(usize, f64)>,
}

/// Projected points `z_n`, one row per input row.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub points: DMatrix<f64>,
    pub meta: EmbeddingMeta,
}

impl Embedding {
    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn final_objective(&self) -> f64 {
        self.meta.final_objective
    }

    /// Objective before the first update (t-SNE only).
    pub fn initial_objective(&self) -> Option<f64> {
        self.meta.objective_trace.first().map(|&(_, kl)| kl)
    }

    /// Writes `z0,...,z{d-1},label` rows plus a JSON sidecar with the metadata.
    pub fn save(&self, path: impl AsRef<Path>, labels: &[usize], class_names: &[String]) -> Result<()> {
        let path = path.as_ref();
        if labels.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                found: labels.len(),
            });
        }
        let header: Vec<String> = (0..self.dim()).map(|j| format!("z{j}")).collect();
        write_labeled_rows(path, &header, &self.points, labels, class_names)?;
        let meta_path = sidecar_path(path);
        let text = serde_json::to_string_pretty(&self.meta).map_err(|source| Error::Json {
            context: meta_path.display().to_string(),
            source,
        })?;
        std::fs::write(&meta_path, text + "\n").map_err(|e| Error::io(&meta_path, e))
    }
}

/// Location of the metadata sidecar for an embedding file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_os_string();
    name.push(".meta.json");
    PathBuf::from(name)
}

/// Reads an embedding file back as a labeled dataset of its coordinates, plus
/// its sidecar metadata when one is present.
pub fn load_embedding(path: impl AsRef<Path>) -> Result<(LabeledDataset, Option<EmbeddingMeta>)> {
    let path = path.as_ref();
    let data = load_dataset(path, "label")?;
    let meta_path = sidecar_path(path);
    let meta = if meta_path.exists() {
        let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        Some(serde_json::from_str(&text).map_err(|source| Error::Json {
            context: meta_path.display().to_string(),
            source,
        })?)
    } else {
        None
    };
    Ok((data, meta))
}

/// Fails on NaN/inf coordinates.
pub(crate) fn check_finite(points: &DMatrix<f64>, stage: &'static str, iteration: usize) -> Result<()> {
    if points.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { stage, iteration })
    }
}
