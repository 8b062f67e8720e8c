//! Per-class dominance integrals, the overall metric `A`, pairwise confusion,
//! and the correlation used to validate `A` against test accuracy.
//!
//! `A_k` is the mass that class `k`'s density places on the region where
//! `log p_k(z)` strictly exceeds every other class's log density. It is
//! estimated by Monte Carlo: draw from `N(μ_k, Σ_k)` and count draws whose
//! unique argmax is `k`. Ties count against every class.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::class_models::{ClassGaussians, ModelSnapshot};
use crate::embedding::EmbeddingMeta;
use crate::error::{Error, Result};

pub const DEFAULT_MC_SAMPLES: usize = 100_000;
pub const MIN_MC_SAMPLES: usize = 1000;
pub const MIN_GRID_RESOLUTION: usize = 100;
/// Half-width of the quadrature box in units of the largest class std.
const GRID_SIGMAS: f64 = 8.0;

/// How per-class estimates are combined into `A`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Unweighted,
    /// Weight each class by its fitted sample count.
    SampleCount,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricOptions {
    pub n_samples: usize,
    pub seed: u64,
    pub weighting: Weighting,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            n_samples: DEFAULT_MC_SAMPLES,
            seed: crate::DEFAULT_SEED,
            weighting: Weighting::Unweighted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub overall: f64,
    pub per_class: Vec<f64>,
    /// Row `k`, column `k'`: mass of class `k` on the dominance region of `k'`.
    pub pairwise: Vec<Vec<f64>>,
    pub mc_stderr: Vec<f64>,
    pub n_samples: usize,
    pub seed: u64,
    pub weighting: Weighting,
    pub class_names: Vec<String>,
    pub models: Vec<ModelSnapshot>,
    #[serde(default)]
    pub embedding_meta: Option<EmbeddingMeta>,
}

impl MetricReport {
    /// Sum of binomial standard errors across row `k` of the pairwise matrix.
    pub fn pairwise_row_stderr(&self, k: usize) -> f64 {
        let n = self.n_samples as f64;
        self.pairwise[k].iter().map(|&p| (p * (1.0 - p) / n).sqrt()).sum()
    }

    pub fn summary_header() -> &'static str {
        "representation,metric_a,num_classes,n_samples,seed"
    }

    /// One flat delimited row for cross-run collation.
    pub fn summary_row(&self, representation: &str) -> String {
        format!(
            "{representation},{},{},{},{}",
            self.overall,
            self.per_class.len(),
            self.n_samples,
            self.seed
        )
    }
}

fn binomial_stderr(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Draws `n_samples` points from class `k` and counts, for every class, how
/// many draws it strictly dominates. Tied draws are not counted.
fn dominance_counts(models: &ClassGaussians, k: usize, n_samples: usize, seed: u64) -> Result<Vec<u64>> {
    if n_samples < MIN_MC_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "need at least {MIN_MC_SAMPLES} Monte Carlo samples, got {n_samples}"
        )));
    }
    let source = models.get(k)?;
    let num_classes = models.num_classes();
    let d = models.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise = vec![0.0; d];
    let mut z = vec![0.0; d];
    let mut counts = vec![0u64; num_classes];
    for _ in 0..n_samples {
        source.sample_into(&mut rng, &mut noise, &mut z);
        if let Some(winner) = strict_argmax(models, &z) {
            counts[winner] += 1;
        }
    }
    Ok(counts)
}

/// Class with the strictly largest log density at `z`, if unique.
fn strict_argmax(models: &ClassGaussians, z: &[f64]) -> Option<usize> {
    let mut best = f64::NEG_INFINITY;
    let mut winner = None;
    for (j, m) in models.models().iter().enumerate() {
        let lp = m.log_pdf_unchecked(z);
        if lp > best {
            best = lp;
            winner = Some(j);
        } else if lp == best {
            winner = None;
        }
    }
    winner
}

/// Monte Carlo estimate of `A_k` and its binomial standard error.
pub fn estimate_class_accuracy(models: &ClassGaussians, k: usize, n_samples: usize, seed: u64) -> Result<(f64, f64)> {
    let counts = dominance_counts(models, k, n_samples, seed)?;
    let a = counts[k] as f64 / n_samples as f64;
    Ok((a, binomial_stderr(a, n_samples)))
}

/// Mass of class `k` on the dominance region of `k_prime`. With the same seed
/// and sample count, `pairwise_confusion(k, k)` equals `A_k`.
pub fn pairwise_confusion(
    models: &ClassGaussians,
    k: usize,
    k_prime: usize,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    models.get(k_prime)?;
    let counts = dominance_counts(models, k, n_samples, seed)?;
    Ok(counts[k_prime] as f64 / n_samples as f64)
}

/// Seed used for class `k` within [`estimate_metric`].
pub fn class_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_add(k as u64)
}

/// Estimates every `A_k`, their mean `A`, and the pairwise matrix from one
/// set of draws per class. Class `k` draws with seed `seed + k`.
pub fn estimate_metric(models: &ClassGaussians, n_samples: usize, seed: u64) -> Result<MetricReport> {
    estimate_metric_with(
        models,
        &MetricOptions {
            n_samples,
            seed,
            weighting: Weighting::Unweighted,
        },
    )
}

pub fn estimate_metric_with(models: &ClassGaussians, options: &MetricOptions) -> Result<MetricReport> {
    let n = options.n_samples;
    let rows: Vec<Vec<u64>> = (0..models.num_classes())
        .into_par_iter()
        .map(|k| dominance_counts(models, k, n, class_seed(options.seed, k)))
        .collect::<Result<_>>()?;
    let pairwise: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().map(|&c| c as f64 / n as f64).collect())
        .collect();
    let per_class: Vec<f64> = pairwise.iter().enumerate().map(|(k, r)| r[k]).collect();
    let mc_stderr = per_class.iter().map(|&a| binomial_stderr(a, n)).collect();
    let overall = match options.weighting {
        Weighting::Unweighted => per_class.iter().sum::<f64>() / per_class.len() as f64,
        Weighting::SampleCount => {
            let weights: Vec<f64> = models.models().iter().map(|m| m.n_samples() as f64).collect();
            let total: f64 = weights.iter().sum();
            if total <= 0.0 {
                return Err(Error::InvalidInput(
                    "sample-count weighting needs models with recorded sample counts".into(),
                ));
            }
            per_class.iter().zip(&weights).map(|(a, w)| a * w).sum::<f64>() / total
        }
    };
    Ok(MetricReport {
        overall,
        per_class,
        pairwise,
        mc_stderr,
        n_samples: n,
        seed: options.seed,
        weighting: options.weighting,
        class_names: models.class_names().to_vec(),
        models: models.snapshot(),
        embedding_meta: None,
    })
}

/// Deterministic 2-D quadrature of `A_k`: a midpoint Riemann sum of class
/// `k`'s density over a `resolution × resolution` grid covering every mean
/// `± 8` times the largest class standard deviation, keeping only cells whose
/// centre has class `k` as strict argmax.
pub fn grid_quadrature_accuracy(models: &ClassGaussians, k: usize, resolution: usize) -> Result<f64> {
    if models.dim() != 2 {
        return Err(Error::InvalidInput(format!(
            "grid quadrature needs 2-D models, got {}-D",
            models.dim()
        )));
    }
    if resolution < MIN_GRID_RESOLUTION {
        return Err(Error::InvalidInput(format!(
            "grid resolution must be at least {MIN_GRID_RESOLUTION}, got {resolution}"
        )));
    }
    let target = models.get(k)?;
    let reach = GRID_SIGMAS * models.models().iter().map(|m| m.max_std()).fold(0.0f64, f64::max);
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for m in models.models() {
        for a in 0..2 {
            lo[a] = lo[a].min(m.mean()[a] - reach);
            hi[a] = hi[a].max(m.mean()[a] + reach);
        }
    }
    let hx = (hi[0] - lo[0]) / resolution as f64;
    let hy = (hi[1] - lo[1]) / resolution as f64;
    let row_mass: Vec<f64> = (0..resolution)
        .into_par_iter()
        .map(|i| {
            let x = lo[0] + (i as f64 + 0.5) * hx;
            let mut acc = 0.0;
            for j in 0..resolution {
                let z = [x, lo[1] + (j as f64 + 0.5) * hy];
                if strict_argmax(models, &z) == Some(k) {
                    acc += target.log_pdf_unchecked(&z).exp();
                }
            }
            acc
        })
        .collect();
    Ok(row_mass.iter().sum::<f64>() * hx * hy)
}

/// Pearson correlation coefficient of two equal-length series.
pub fn pearson_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::InvalidInput("correlation needs at least 2 values".into()));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::InvalidInput(
            "correlation is undefined for a constant series".into(),
        ));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}
