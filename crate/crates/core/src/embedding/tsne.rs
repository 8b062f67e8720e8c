//! Exact (O(N²)) t-SNE.
//!
//! Row-wise work is parallelised with rayon; every reduction across rows is
//! done serially in row order, so results are bit-identical for a given seed
//! regardless of thread count.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_finite, Embedding, EmbeddingMeta, EmbeddingMethod};
use crate::error::{Error, Result};

/// Maximum bisection steps per row when matching the perplexity.
const BISECTION_STEPS: usize = 50;
/// Accepted `|2^H − perplexity|` per row.
const PERPLEXITY_TOL: f64 = 1e-5;
/// Half-width of the log-precision search interval around the initial guess.
const LOG_BETA_SPAN: f64 = 50.0;
/// Floor on Student-t numerators before normalisation.
const Q_FLOOR: f64 = 1e-12;
const MIN_GAIN: f64 = 0.01;
/// Relative distance spread below which a row's neighbours count as equidistant.
const EQUIDISTANT_TOL: f64 = 1e-12;
/// KL is recorded every this many iterations.
const TRACE_EVERY: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneConfig {
    pub target_dim: usize,
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub early_exaggeration_iters: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch_iter: usize,
    /// Standard deviation of the isotropic Gaussian initialisation.
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            target_dim: 2,
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            early_exaggeration_iters: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch_iter: 250,
            init_scale: 1e-4,
            seed: crate::DEFAULT_SEED,
        }
    }
}

impl TsneConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if !(self.perplexity >= 1.0 && self.perplexity < n as f64) {
            return bad(format!(
                "perplexity must satisfy 1 ≤ perplexity < N (perplexity {}, N {n})",
                self.perplexity
            ));
        }
        if self.target_dim == 0 {
            return bad("target dimension must be at least 1".into());
        }
        if self.iterations == 0 || self.early_exaggeration_iters == 0 || self.momentum_switch_iter == 0 {
            return bad("iteration counts must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return bad(format!("init scale must be positive, got {}", self.init_scale));
        }
        if !(self.early_exaggeration > 0.0 && self.early_exaggeration.is_finite()) {
            return bad("early exaggeration must be positive".into());
        }
        Ok(())
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let (n, d) = m.shape();
    let mut out = Vec::with_capacity(n * d);
    for r in 0..n {
        out.extend(m.row(r).iter());
    }
    out
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Symmetrised joint affinities `P` for the rows of `features`.
///
/// Each conditional `p_{j|i}` uses a Gaussian kernel whose bandwidth is found
/// by bisection so that `2^H(P_i)` matches `perplexity`.
pub fn tsne_affinities(features: &DMatrix<f64>, perplexity: f64) -> Result<DMatrix<f64>> {
    let n = features.nrows();
    let p = joint_probabilities(&row_major(features), n, features.ncols(), perplexity)?;
    Ok(DMatrix::from_row_slice(n, n, &p))
}

/// Row-conditional affinities `p_{j|i}` (row `i` sums to 1), before
/// symmetrisation.
pub fn conditional_affinities(features: &DMatrix<f64>, perplexity: f64) -> Result<DMatrix<f64>> {
    let n = features.nrows();
    let cond = conditional_probabilities(&row_major(features), n, features.ncols(), perplexity)?;
    Ok(DMatrix::from_row_slice(n, n, &cond))
}

fn conditional_probabilities(x: &[f64], n: usize, dim: usize, perplexity: f64) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidInput("t-SNE needs at least 2 points".into()));
    }
    if !(perplexity > 0.0 && perplexity < n as f64) {
        return Err(Error::InvalidInput(format!(
            "perplexity {perplexity} must lie in (0, N) with N = {n}"
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("features contain non-finite values".into()));
    }
    let mut cond = vec![0.0; n * n];
    cond.par_chunks_mut(n)
        .enumerate()
        .try_for_each(|(i, out)| conditional_row(x, n, dim, i, perplexity, out))?;
    Ok(cond)
}

pub(crate) fn joint_probabilities(x: &[f64], n: usize, dim: usize, perplexity: f64) -> Result<Vec<f64>> {
    let cond = conditional_probabilities(x, n, dim, perplexity)?;

    let scale = 1.0 / (2.0 * n as f64);
    let mut joint = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            joint[i * n + j] = (cond[i * n + j] + cond[j * n + i]) * scale;
        }
    }
    Ok(joint)
}

fn conditional_row(x: &[f64], n: usize, dim: usize, i: usize, perplexity: f64, out: &mut [f64]) -> Result<()> {
    let xi = &x[i * dim..(i + 1) * dim];
    let mut dist: Vec<f64> = (0..n)
        .map(|j| {
            if j == i {
                0.0
            } else {
                sq_dist(xi, &x[j * dim..(j + 1) * dim])
            }
        })
        .collect();
    let (mut d_min, mut d_max) = (f64::INFINITY, 0.0f64);
    for (j, &d) in dist.iter().enumerate() {
        if j != i {
            d_min = d_min.min(d);
            d_max = d_max.max(d);
        }
    }
    if d_max == 0.0 {
        return Err(Error::Degenerate(format!(
            "row {i}: every other point coincides with it"
        )));
    }
    // Shifting by the nearest distance leaves p_{j|i} unchanged and keeps the
    // largest kernel value at 1.
    for (j, d) in dist.iter_mut().enumerate() {
        *d = if j == i { 0.0 } else { *d - d_min };
    }
    let spread = d_max - d_min;
    if spread <= EQUIDISTANT_TOL * d_max {
        // All neighbours equidistant: p_{j|i} is uniform for every bandwidth.
        let u = 1.0 / (n - 1) as f64;
        for (j, o) in out.iter_mut().enumerate() {
            *o = if j == i { 0.0 } else { u };
        }
        return Ok(());
    }

    let target = perplexity.ln();
    let mean_shift = dist.iter().sum::<f64>() / (n - 1) as f64;
    let center = (1.0 / mean_shift).ln();
    let (mut lo, mut hi) = (center - LOG_BETA_SPAN, center + LOG_BETA_SPAN);
    let mut log_beta = center;
    let mut gap = f64::INFINITY;
    for _ in 0..BISECTION_STEPS {
        let entropy = fill_kernel(&dist, i, log_beta.exp(), out);
        gap = entropy.exp() - perplexity;
        if gap.abs() < PERPLEXITY_TOL {
            return Ok(());
        }
        // Entropy falls as precision rises.
        if entropy > target {
            lo = log_beta;
        } else {
            hi = log_beta;
        }
        log_beta = 0.5 * (lo + hi);
    }
    let entropy = fill_kernel(&dist, i, log_beta.exp(), out);
    let final_gap = entropy.exp() - perplexity;
    if final_gap.abs() < PERPLEXITY_TOL {
        Ok(())
    } else {
        Err(Error::BisectionFailed {
            row: i,
            gap: final_gap.abs().min(gap.abs()),
        })
    }
}

/// Writes normalised kernel values into `out` and returns their entropy (nats).
fn fill_kernel(shifted: &[f64], i: usize, beta: f64, out: &mut [f64]) -> f64 {
    let mut sum = 0.0;
    let mut weighted = 0.0;
    for (j, (&d, o)) in shifted.iter().zip(out.iter_mut()).enumerate() {
        if j == i {
            *o = 0.0;
            continue;
        }
        let k = (-beta * d).exp();
        *o = k;
        sum += k;
        weighted += d * k;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
    sum.ln() + beta * weighted / sum
}

#[inline]
fn student_weight(a: &[f64], b: &[f64]) -> f64 {
    (1.0 / (1.0 + sq_dist(a, b))).max(Q_FLOOR)
}

/// Normaliser `Z = Σ_{i≠j} w_ij`, summed in row order.
fn student_normaliser(y: &[f64], n: usize, d: usize) -> f64 {
    let row_sums: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let yi = &y[i * d..(i + 1) * d];
            (0..n)
                .filter(|&j| j != i)
                .map(|j| student_weight(yi, &y[j * d..(j + 1) * d]))
                .sum::<f64>()
        })
        .collect();
    row_sums.iter().sum()
}

pub(crate) fn kl_divergence(p: &[f64], y: &[f64], n: usize, d: usize) -> f64 {
    let z = student_normaliser(y, n, d);
    let log_z = z.ln();
    let row_terms: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let yi = &y[i * d..(i + 1) * d];
            let mut acc = 0.0;
            for j in 0..n {
                let pij = p[i * n + j];
                if j == i || pij <= 0.0 {
                    continue;
                }
                let w = student_weight(yi, &y[j * d..(j + 1) * d]);
                acc += pij * (pij.ln() - w.ln() + log_z);
            }
            acc
        })
        .collect();
    row_terms.iter().sum::<f64>().max(0.0)
}

/// Gradient of KL(scale·P ‖ Q) with respect to every `y_i`.
pub(crate) fn kl_grad_into(p: &[f64], scale: f64, y: &[f64], n: usize, d: usize, grad: &mut [f64]) {
    let z = student_normaliser(y, n, d);
    grad.par_chunks_mut(d).enumerate().for_each(|(i, g)| {
        g.iter_mut().for_each(|v| *v = 0.0);
        let yi = &y[i * d..(i + 1) * d];
        for j in 0..n {
            if j == i {
                continue;
            }
            let yj = &y[j * d..(j + 1) * d];
            let w = student_weight(yi, yj);
            let coeff = 4.0 * (scale * p[i * n + j] - w / z) * w;
            for ((gk, a), b) in g.iter_mut().zip(yi).zip(yj) {
                *gk += coeff * (a - b);
            }
        }
    });
}

fn check_shapes(p: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<()> {
    let n = y.nrows();
    if p.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: p.nrows(),
        });
    }
    if p.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: p.ncols(),
        });
    }
    if n < 2 {
        return Err(Error::InvalidInput("need at least 2 points".into()));
    }
    Ok(())
}

/// `KL(P ‖ Q)` where `q_ij ∝ (1 + ‖y_i − y_j‖²)⁻¹` over all ordered pairs `i ≠ j`.
pub fn kl_objective(p: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    check_shapes(p, y)?;
    Ok(kl_divergence(&row_major(p), &row_major(y), y.nrows(), y.ncols()))
}

/// `∂KL/∂y_i = 4 Σ_j (p_ij − q_ij)(y_i − y_j)(1 + ‖y_i − y_j‖²)⁻¹`.
pub fn kl_gradient(p: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_shapes(p, y)?;
    let (n, d) = y.shape();
    let mut grad = vec![0.0; n * d];
    kl_grad_into(&row_major(p), 1.0, &row_major(y), n, d, &mut grad);
    Ok(DMatrix::from_row_slice(n, d, &grad))
}

/// Embeds the rows of `features` with exact t-SNE.
///
/// Gradient descent uses momentum, early exaggeration of `P`, and per-entry
/// adaptive gains. The layout is re-centred after every step.
pub fn tsne_embed(features: &DMatrix<f64>, config: &TsneConfig) -> Result<Embedding> {
    let n = features.nrows();
    config.validate(n)?;
    let d = config.target_dim;
    let p = joint_probabilities(&row_major(features), n, features.ncols(), config.perplexity)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init = Normal::new(0.0, config.init_scale).map_err(|e| Error::InvalidInput(format!("init scale: {e}")))?;
    let mut y: Vec<f64> = (0..n * d).map(|_| init.sample(&mut rng)).collect();
    let mut step = vec![0.0; n * d];
    let mut gains = vec![1.0f64; n * d];
    let mut grad = vec![0.0; n * d];

    let mut trace = vec![(0, kl_divergence(&p, &y, n, d))];
    for iter in 0..config.iterations {
        let exaggeration = if iter < config.early_exaggeration_iters {
            config.early_exaggeration
        } else {
            1.0
        };
        let momentum = if iter < config.momentum_switch_iter {
            config.initial_momentum
        } else {
            config.final_momentum
        };
        kl_grad_into(&p, exaggeration, &y, n, d, &mut grad);

        for (((g, s), gain), yv) in grad.iter().zip(step.iter_mut()).zip(gains.iter_mut()).zip(y.iter_mut()) {
            *gain = if (*g > 0.0) != (*s > 0.0) {
                *gain + 0.2
            } else {
                *gain * 0.8
            };
            *gain = (*gain).max(MIN_GAIN);
            *s = momentum * *s - config.learning_rate * *gain * g;
            *yv += *s;
        }
        for k in 0..d {
            let mean = (0..n).map(|i| y[i * d + k]).sum::<f64>() / n as f64;
            for i in 0..n {
                y[i * d + k] -= mean;
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                stage: "t-SNE optimization",
                iteration: iter + 1,
            });
        }

        let done = iter + 1;
        if done % TRACE_EVERY == 0 || done == config.early_exaggeration_iters || done == config.iterations {
            trace.push((done, kl_divergence(&p, &y, n, d)));
        }
    }

    let points = DMatrix::from_row_slice(n, d, &y);
    check_finite(&points, "t-SNE optimization", config.iterations)?;
    let final_objective = trace.last().map(|&(_, kl)| kl).unwrap_or(f64::NAN);
    Ok(Embedding {
        points,
        meta: EmbeddingMeta {
            method: EmbeddingMethod::Tsne,
            target_dim: d,
            final_objective,
            tsne: Some(config.clone()),
            seed: Some(config.seed),
            objective_trace: trace,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-2.0..2.0))
    }

    /// Brute-force Q for a row-major layout, by explicit double loop.
    fn naive_q(y: &DMatrix<f64>) -> DMatrix<f64> {
        let n = y.nrows();
        let mut w = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    w[(i, j)] = 1.0 / (1.0 + (y.row(i) - y.row(j)).norm_squared());
                }
            }
        }
        let z = w.sum();
        w / z
    }

    #[test]
    fn affinities_are_a_joint_distribution() {
        let x = random_matrix(12, 3, 1);
        let p = tsne_affinities(&x, 4.0).unwrap();
        assert!((p.sum() - 1.0).abs() < 1e-10);
        assert_eq!(p, p.transpose());
        for i in 0..12 {
            assert_eq!(p[(i, i)], 0.0);
        }
        assert!(p.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn equilateral_triangle_is_uniform() {
        let h = 3f64.sqrt() / 2.0;
        let x = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.5, h]);
        for perp in [1.2, 1.5, 2.0] {
            let p = tsne_affinities(&x, perp).unwrap();
            let v = p[(0, 1)];
            for i in 0..3 {
                for j in 0..3 {
                    if i != j {
                        assert!((p[(i, j)] - v).abs() < 1e-12);
                    }
                }
            }
        }
    }

    /// Perplexity of each conditional row, recovered from the joint matrix is
    /// not possible, so rebuild conditionals directly and compare against a
    /// dense sweep over bandwidths.
    #[test]
    fn row_perplexity_matches_grid_sweep() {
        let x = random_matrix(5, 3, 17);
        let n = 5;
        let flat = row_major(&x);
        for i in 0..n {
            let mut row = vec![0.0; n];
            conditional_row(&flat, n, 3, i, 2.0, &mut row).unwrap();
            let h: f64 = row.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum();
            assert!((2f64.powf(h) - 2.0).abs() < 1e-4);

            // Oracle: sweep sigma over a dense log grid, keep the closest.
            let dists: Vec<f64> = (0..n).map(|j| (x.row(i) - x.row(j)).norm_squared()).collect();
            let mut best = (f64::INFINITY, 0.0);
            for s in 0..200_000 {
                let sigma = 10f64.powf(-3.0 + 6.0 * s as f64 / 200_000.0);
                let ks: Vec<f64> = (0..n)
                    .map(|j| {
                        if j == i {
                            0.0
                        } else {
                            (-dists[j] / (2.0 * sigma * sigma)).exp()
                        }
                    })
                    .collect();
                let z: f64 = ks.iter().sum();
                let hh: f64 = ks
                    .iter()
                    .filter(|&&k| k > 0.0)
                    .map(|&k| -(k / z) * (k / z).log2())
                    .sum();
                let gap = (2f64.powf(hh) - 2.0).abs();
                if gap < best.0 {
                    best = (gap, sigma);
                }
            }
            let sigma = best.1;
            let ks: Vec<f64> = (0..n)
                .map(|j| {
                    if j == i {
                        0.0
                    } else {
                        (-dists[j] / (2.0 * sigma * sigma)).exp()
                    }
                })
                .collect();
            let z: f64 = ks.iter().sum();
            for j in 0..n {
                assert!((ks[j] / z - row[j]).abs() < 1e-3, "row {i} col {j}");
            }
        }
    }

    #[test]
    fn coincident_points_rejected() {
        let x = DMatrix::from_row_slice(3, 1, &[1.0, 1.0, 1.0]);
        assert!(matches!(tsne_affinities(&x, 1.5), Err(Error::Degenerate(_))));
    }

    #[test]
    fn unattainable_perplexity_reports_gap() {
        // Two nearest neighbours tie, so perplexity can never drop below 2.
        let x = DMatrix::from_row_slice(4, 1, &[0.0, 1.0, -1.0, 5.0]);
        assert!(matches!(
            tsne_affinities(&x, 1.1),
            Err(Error::BisectionFailed { row: 0, .. })
        ));
    }

    #[test]
    fn kl_zero_when_p_equals_q() {
        let y = random_matrix(6, 2, 3);
        let q = naive_q(&y);
        assert!(kl_objective(&q, &y).unwrap().abs() < 1e-12);
        assert!(kl_gradient(&q, &y).unwrap().norm() < 1e-10);
    }

    #[test]
    fn kl_matches_double_loop() {
        let y = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 1.0, 0.5, -0.3, 2.0, 1.5, -1.0]);
        #[rustfmt::skip]
        let p: DMatrix<f64> = DMatrix::from_row_slice(4, 4, &[
            0.0,  0.10, 0.05, 0.10,
            0.10, 0.0,  0.08, 0.07,
            0.05, 0.08, 0.0,  0.10,
            0.10, 0.07, 0.10, 0.0,
        ]);
        assert!((p.sum() - 1.0f64).abs() < 1e-15);
        let q = naive_q(&y);
        let mut oracle = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    oracle += p[(i, j)] * (p[(i, j)] / q[(i, j)]).ln();
                }
            }
        }
        let kl = kl_objective(&p, &y).unwrap();
        assert!((kl - oracle).abs() < 1e-12, "{kl} vs {oracle}");
    }

    #[test]
    fn gradient_rows_cancel_when_coincident() {
        let y = DMatrix::from_element(5, 2, 0.25);
        let p = tsne_affinities(&random_matrix(5, 3, 8), 2.0).unwrap();
        let g = kl_gradient(&p, &y).unwrap();
        assert!(g.row_sum().norm() < 1e-15);
    }

    #[test]
    fn shape_mismatch() {
        let y = DMatrix::zeros(4, 2);
        let p = DMatrix::zeros(3, 3);
        assert!(kl_objective(&p, &y).is_err());
        assert!(kl_gradient(&p, &y).is_err());
    }

    #[test]
    fn config_validation() {
        let x = random_matrix(10, 3, 2);
        let mut c = TsneConfig {
            perplexity: 10.0,
            ..Default::default()
        };
        assert!(tsne_embed(&x, &c).is_err());
        c.perplexity = 3.0;
        c.target_dim = 0;
        assert!(tsne_embed(&x, &c).is_err());
        c.target_dim = 2;
        c.iterations = 0;
        assert!(tsne_embed(&x, &c).is_err());
    }

    #[test]
    fn embed_reduces_objective_and_is_repeatable() {
        let x = random_matrix(40, 5, 4);
        let config = TsneConfig {
            perplexity: 8.0,
            ..Default::default()
        };
        let a = tsne_embed(&x, &config).unwrap();
        let b = tsne_embed(&x, &config).unwrap();
        assert_eq!(a, b);
        assert!(a.final_objective() < a.initial_objective().unwrap());
        let at = |it: usize| a.meta.objective_trace.iter().find(|&&(i, _)| i == it).unwrap().1;
        assert!(at(1000) < at(250));
        assert_eq!(a.n(), 40);
        assert_eq!(a.dim(), 2);
    }
}
