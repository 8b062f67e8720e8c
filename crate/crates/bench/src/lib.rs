//! Shared workloads for the criterion benchmarks.

use sepmetric::{synth_gaussian_mixture, LabeledDataset, SynthSpec};

/// `num_classes` unit Gaussians in `R^dim`, `per_class` points each.
pub fn workload(num_classes: usize, dim: usize, per_class: usize, separation: f64) -> LabeledDataset {
    let spec = SynthSpec::simplex(num_classes, dim, separation, per_class, 7).expect("valid simplex spec");
    synth_gaussian_mixture(&spec).expect("synthetic workload")
}
