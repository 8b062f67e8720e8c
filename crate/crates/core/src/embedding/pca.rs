use nalgebra::{DMatrix, SymmetricEigen};

use super::{check_finite, Embedding, EmbeddingMeta, EmbeddingMethod};
use crate::error::{Error, Result};

/// Projects mean-centred rows onto the top `target_dim` eigenvectors of the
/// sample covariance. `final_objective` holds the retained variance fraction.
pub fn pca_project(features: &DMatrix<f64>, target_dim: usize) -> Result<Embedding> {
    let (n, dim) = features.shape();
    if target_dim == 0 || target_dim > n.min(dim) {
        return Err(Error::InvalidInput(format!(
            "PCA target dimension {target_dim} must lie in 1..={}",
            n.min(dim)
        )));
    }
    if n < 2 {
        return Err(Error::InvalidInput("PCA needs at least 2 rows".into()));
    }
    let (basis, retained) = principal_basis(features, target_dim)?;
    let mean = features.row_mean();
    let centered = DMatrix::from_fn(n, dim, |r, c| features[(r, c)] - mean[c]);
    let points = centered * &basis;
    check_finite(&points, "PCA projection", 0)?;
    Ok(Embedding {
        points,
        meta: EmbeddingMeta {
            method: EmbeddingMethod::Pca,
            target_dim,
            final_objective: retained,
            tsne: None,
            seed: None,
            objective_trace: Vec::new(),
        },
    })
}

/// `D×d` orthonormal basis of leading principal directions and the fraction
/// of total variance they capture.
pub(crate) fn principal_basis(features: &DMatrix<f64>, target_dim: usize) -> Result<(DMatrix<f64>, f64)> {
    let (n, dim) = features.shape();
    let mean = features.row_mean();
    let centered = DMatrix::from_fn(n, dim, |r, c| features[(r, c)] - mean[c]);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let total: f64 = cov.diagonal().iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::Degenerate(
            "all points are identical; no variance to project".into(),
        ));
    }
    let eig = SymmetricEigen::try_new(cov, f64::EPSILON, 0)
        .ok_or_else(|| Error::Degenerate("covariance eigendecomposition did not converge".into()))?;
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut basis = DMatrix::zeros(dim, target_dim);
    let mut kept = 0.0;
    for (col, &idx) in order.iter().take(target_dim).enumerate() {
        let mut v = eig.eigenvectors.column(idx).into_owned();
        // Fix the sign so the largest-magnitude loading is positive.
        let pivot = v
            .iter()
            .copied()
            .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if pivot < 0.0 {
            v.neg_mut();
        }
        basis.set_column(col, &v);
        kept += eig.eigenvalues[idx].max(0.0);
    }
    let all: f64 = eig.eigenvalues.iter().map(|&l| l.max(0.0)).sum();
    Ok((basis, (kept / all).clamp(0.0, 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Cyclic Jacobi eigensolver for small symmetric matrices; eigenvalues
    /// returned in descending order with matching column eigenvectors.
    fn jacobi_eigen(mut a: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
        let n = a.nrows();
        let mut v = DMatrix::identity(n, n);
        for _sweep in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[(i, j)] * a[(i, j)])
                .sum();
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[(p, q)].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    let mut rot = DMatrix::identity(n, n);
                    rot[(p, p)] = c;
                    rot[(q, q)] = c;
                    rot[(p, q)] = s;
                    rot[(q, p)] = -s;
                    a = rot.transpose() * &a * &rot;
                    v = &v * &rot;
                }
            }
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&x, &y| a[(y, y)].total_cmp(&a[(x, x)]));
        let vals = idx.iter().map(|&i| a[(i, i)]).collect();
        let vecs = DMatrix::from_fn(n, n, |r, c| v[(r, idx[c])]);
        (vals, vecs)
    }

    fn random(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn planar_data_retains_everything() {
        let coeffs = random(30, 2, 5);
        let plane = random(2, 5, 6);
        let x = coeffs * plane;
        let e = pca_project(&x, 2).unwrap();
        assert!((e.final_objective() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn full_basis_retains_everything() {
        let x = random(20, 3, 9);
        let e = pca_project(&x, 3).unwrap();
        assert!((e.final_objective() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projected_covariance_is_top_eigenvalues() {
        // Anisotropic scales so the leading eigenvalues are well separated.
        let mut x = random(50, 4, 21);
        for (c, s) in [3.0, 2.0, 1.0, 0.5].iter().enumerate() {
            x.column_mut(c).scale_mut(*s);
        }
        let mean = x.row_mean();
        let centered = DMatrix::from_fn(50, 4, |r, c| x[(r, c)] - mean[c]);
        let cov = centered.transpose() * &centered / 49.0;
        let (vals, _) = jacobi_eigen(cov);

        let e = pca_project(&x, 2).unwrap();
        let z = &e.points;
        let zc = z.transpose() * z / 49.0;
        assert!((zc[(0, 0)] - vals[0]).abs() < 1e-10);
        assert!((zc[(1, 1)] - vals[1]).abs() < 1e-10);
        assert!(zc[(0, 1)].abs() < 1e-10);
        let total: f64 = vals.iter().sum();
        assert!((e.final_objective() - (vals[0] + vals[1]) / total).abs() < 1e-10);
    }

    #[test]
    fn basis_is_orthonormal_and_projection_idempotent() {
        let x = random(40, 6, 2);
        let (basis, _) = principal_basis(&x, 3).unwrap();
        let gram = basis.transpose() * &basis;
        assert!((gram - DMatrix::identity(3, 3)).amax() < 1e-10);

        let e = pca_project(&x, 3).unwrap();
        let recon = &e.points * basis.transpose();
        let again = &recon * &basis;
        assert!((again - &e.points).amax() < 1e-10);
    }

    #[test]
    fn identical_points_are_degenerate() {
        let x = DMatrix::from_element(5, 3, 2.0);
        assert!(matches!(pca_project(&x, 2), Err(Error::Degenerate(_))));
    }

    #[test]
    fn target_dim_bounds() {
        let x = random(5, 3, 1);
        assert!(pca_project(&x, 4).is_err());
        assert!(pca_project(&x, 0).is_err());
    }
}
