//! Per-class Gaussian densities in the embedded space.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::MIN_CLASS_SAMPLES;
use crate::error::{Error, Result};

/// Relative ridge added to each fitted covariance: `ε = RIDGE · trace(Σ)/d`.
pub const RIDGE: f64 = 1e-6;
/// Ridge used when a class has zero total variance.
pub const RIDGE_FLOOR: f64 = 1e-9;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `N(μ_k, Σ_k)` with a cached Cholesky factor and log-determinant.
#[derive(Debug, Clone)]
pub struct ClassGaussian {
    class_id: usize,
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    lower: DMatrix<f64>,
    log_det: f64,
    n_samples: usize,
}

impl ClassGaussian {
    /// Builds a model from explicit parameters. No ridge is applied.
    pub fn new(class_id: usize, mean: DVector<f64>, covariance: DMatrix<f64>, n_samples: usize) -> Result<Self> {
        let d = mean.len();
        if covariance.shape() != (d, d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: covariance.nrows(),
            });
        }
        for i in 0..d {
            for j in 0..i {
                if (covariance[(i, j)] - covariance[(j, i)]).abs() > 1e-12 {
                    return Err(Error::InvalidInput(format!(
                        "covariance of class {class_id} is not symmetric"
                    )));
                }
            }
        }
        let chol = Cholesky::<f64, Dyn>::new(covariance.clone())
            .ok_or_else(|| Error::NotPositiveDefinite(format!("covariance of class {class_id}")))?;
        let lower = chol.unpack();
        let log_det = 2.0 * lower.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(Self {
            class_id,
            mean,
            covariance,
            lower,
            log_det,
            n_samples,
        })
    }

    pub fn class_id(&self) -> usize {
        self.class_id
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn log_pdf(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: z.len(),
            });
        }
        Ok(self.log_pdf_unchecked(z))
    }

    /// Solves `L u = z − μ` by forward substitution; the quadratic form is `‖u‖²`.
    pub(crate) fn log_pdf_unchecked(&self, z: &[f64]) -> f64 {
        let d = self.dim();
        let mut u = [0.0f64; 8];
        let mut heap;
        let u: &mut [f64] = if d <= u.len() {
            &mut u[..d]
        } else {
            heap = vec![0.0; d];
            &mut heap
        };
        let mut maha = 0.0;
        for i in 0..d {
            let mut acc = z[i] - self.mean[i];
            for j in 0..i {
                acc -= self.lower[(i, j)] * u[j];
            }
            u[i] = acc / self.lower[(i, i)];
            maha += u[i] * u[i];
        }
        -0.5 * (d as f64 * LN_2PI + self.log_det + maha)
    }

    /// Writes one draw `μ + L e`, `e ~ N(0, I)`, into `out`.
    pub(crate) fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, noise: &mut [f64], out: &mut [f64]) {
        for e in noise.iter_mut() {
            *e = StandardNormal.sample(rng);
        }
        let d = self.dim();
        for i in 0..d {
            let mut acc = self.mean[i];
            for j in 0..=i {
                acc += self.lower[(i, j)] * noise[j];
            }
            out[i] = acc;
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let d = self.dim();
        let mut noise = vec![0.0; d];
        let mut out = vec![0.0; d];
        self.sample_into(rng, &mut noise, &mut out);
        DVector::from_vec(out)
    }

    /// Largest standard deviation along any direction.
    pub fn max_std(&self) -> f64 {
        self.covariance
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .fold(0.0f64, |m, &v| m.max(v))
            .sqrt()
    }
}

/// One fitted model per class id `0..K`.
#[derive(Debug, Clone)]
pub struct ClassGaussians {
    models: Vec<ClassGaussian>,
    dim: usize,
    class_names: Vec<String>,
}

impl ClassGaussians {
    pub fn new(models: Vec<ClassGaussian>, class_names: Vec<String>) -> Result<Self> {
        let dim = models
            .first()
            .map(ClassGaussian::dim)
            .ok_or_else(|| Error::InvalidInput("no class models".into()))?;
        if class_names.len() != models.len() {
            return Err(Error::InvalidInput(format!(
                "{} class names for {} models",
                class_names.len(),
                models.len()
            )));
        }
        for (k, m) in models.iter().enumerate() {
            if m.class_id != k {
                return Err(Error::InvalidInput(format!(
                    "model at position {k} has class id {}",
                    m.class_id
                )));
            }
            if m.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: m.dim(),
                });
            }
        }
        Ok(Self {
            models,
            dim,
            class_names,
        })
    }

    /// Models with default names `c0, c1, ...`.
    pub fn unnamed(models: Vec<ClassGaussian>) -> Result<Self> {
        let names = (0..models.len()).map(|k| format!("c{k}")).collect();
        Self::new(models, names)
    }

    pub fn models(&self) -> &[ClassGaussian] {
        &self.models
    }

    pub fn get(&self, k: usize) -> Result<&ClassGaussian> {
        self.models.get(k).ok_or(Error::InvalidClass {
            class: k,
            num_classes: self.models.len(),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.models.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn snapshot(&self) -> Vec<ModelSnapshot> {
        self.models
            .iter()
            .zip(&self.class_names)
            .map(|(m, name)| ModelSnapshot {
                class: name.clone(),
                mean: m.mean.iter().copied().collect(),
                cov: (0..m.dim())
                    .map(|i| m.covariance.row(i).iter().copied().collect())
                    .collect(),
                n: m.n_samples,
            })
            .collect()
    }
}

/// Serializable form of one class model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub class: String,
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub n: usize,
}

/// Fits `N(μ_k, Σ_k)` to the rows of `points` labelled `k`.
///
/// `Σ_k` is the unbiased sample covariance plus `ε·I`, where
/// `ε = 1e-6 · trace(Σ_k)/d` (or `1e-9` when the trace is zero).
pub fn fit_class_gaussians(points: &DMatrix<f64>, labels: &[usize], class_names: &[String]) -> Result<ClassGaussians> {
    if labels.len() != points.nrows() {
        return Err(Error::DimensionMismatch {
            expected: points.nrows(),
            found: labels.len(),
        });
    }
    let k = class_names.len();
    let d = points.ncols();
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        rows.get_mut(l)
            .ok_or(Error::InvalidClass {
                class: l,
                num_classes: k,
            })?
            .push(i);
    }
    let mut models = Vec::with_capacity(k);
    for (class, members) in rows.iter().enumerate() {
        let n = members.len();
        if n < MIN_CLASS_SAMPLES {
            return Err(Error::InsufficientSamples {
                class: class_names[class].clone(),
                count: n,
                needed: MIN_CLASS_SAMPLES,
            });
        }
        let mut mean = DVector::zeros(d);
        for &i in members {
            mean += points.row(i).transpose();
        }
        mean /= n as f64;
        let mut cov = DMatrix::zeros(d, d);
        for &i in members {
            let diff = points.row(i).transpose() - &mean;
            cov += &diff * diff.transpose();
        }
        cov /= (n - 1) as f64;
        // Exact symmetry, so the Cholesky input is well-formed.
        for i in 0..d {
            for j in 0..i {
                let avg = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                cov[(i, j)] = avg;
                cov[(j, i)] = avg;
            }
        }
        let trace = cov.trace();
        let eps = if trace > 0.0 {
            RIDGE * trace / d as f64
        } else {
            RIDGE_FLOOR
        };
        for i in 0..d {
            cov[(i, i)] += eps;
        }
        models.push(ClassGaussian::new(class, mean, cov, n)?);
    }
    ClassGaussians::new(models, class_names.to_vec())
}
