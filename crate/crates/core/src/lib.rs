//! Training-set estimate of the test accuracy a feature representation will
//! support.
//!
//! The pipeline projects labeled feature vectors to a low-dimensional space
//! ([`embedding`]), fits one Gaussian per class there ([`class_models`]), and
//! integrates each class density over the region where it dominates every
//! other class ([`metric`]). The mean of those per-class masses is the metric
//! `A`. [`eval`] trains a reference classifier so `A` can be checked against
//! real test accuracy.

pub mod class_models;
pub mod data;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod metric;

pub use class_models::{fit_class_gaussians, ClassGaussian, ClassGaussians};
pub use data::{
    load_dataset, save_dataset, stratified_split, synth_gaussian_mixture, LabeledDataset, SynthClass, SynthSpec,
};
pub use embedding::{
    kl_gradient, kl_objective, load_embedding, pca_project, sidecar_path, tsne_affinities, tsne_embed, Embedding,
    EmbeddingMeta, EmbeddingMethod, TsneConfig,
};
pub use error::{Error, Result};
pub use eval::{
    confusion_matrix, correlate_runs, fit_reference_classifier, load_records, Classifier, ClassifierKind, Correlation,
    EvalResult, RepresentationRecord,
};
pub use metric::{
    estimate_class_accuracy, estimate_metric, estimate_metric_with, grid_quadrature_accuracy, pairwise_confusion,
    pearson_correlation, MetricOptions, MetricReport, Weighting,
};

/// Default seed used when none is supplied.
pub const DEFAULT_SEED: u64 = 42;
