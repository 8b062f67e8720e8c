use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sepmetric::class_models::ClassGaussian;
use sepmetric::data::stratified_split_indices;
use sepmetric::{
    estimate_metric, fit_class_gaussians, grid_quadrature_accuracy, kl_gradient, kl_objective, synth_gaussian_mixture,
    tsne_affinities, ClassGaussians, SynthSpec,
};

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-3.0..3.0))
}

/// Random symmetric joint distribution with zero diagonal.
fn random_joint(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let v: f64 = rng.random_range(0.01..1.0);
            p[(i, j)] = v;
            p[(j, i)] = v;
        }
    }
    let s = p.sum();
    p / s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn affinities_form_symmetric_distribution(seed in any::<u64>(), n in 4usize..30, dim in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_matrix(&mut rng, n, dim);
        let perplexity = rng.random_range(1.5..(n as f64 - 1.0).max(1.6));
        match tsne_affinities(&x, perplexity) {
            Ok(p) => {
                prop_assert!((p.sum() - 1.0).abs() < 1e-10);
                prop_assert_eq!(&p, &p.transpose());
                prop_assert!(p.iter().all(|&v| v >= 0.0));
                prop_assert!((0..n).all(|i| p[(i, i)] == 0.0));
            }
            // Ties among nearest neighbours can make a small perplexity unreachable.
            Err(e) => prop_assert!(matches!(e, sepmetric::Error::BisectionFailed { .. }), "{}", e),
        }
    }

    #[test]
    fn gradient_matches_central_differences(seed in any::<u64>(), n in 3usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_joint(&mut rng, n);
        let y = random_matrix(&mut rng, n, 2);
        let g = kl_gradient(&p, &y).unwrap();
        let h = 1e-5;
        for i in 0..n {
            for k in 0..2 {
                let mut plus = y.clone();
                plus[(i, k)] += h;
                let mut minus = y.clone();
                minus[(i, k)] -= h;
                let fd = (kl_objective(&p, &plus).unwrap() - kl_objective(&p, &minus).unwrap()) / (2.0 * h);
                let rel = (g[(i, k)] - fd).abs() / fd.abs().max(1e-3);
                prop_assert!(rel < 1e-4, "entry ({}, {}): analytic {} fd {}", i, k, g[(i, k)], fd);
            }
        }
    }

    #[test]
    fn kl_is_nonnegative_and_rotation_invariant(seed in any::<u64>(), n in 3usize..12, angle in 0.0f64..std::f64::consts::TAU) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_joint(&mut rng, n);
        let y = random_matrix(&mut rng, n, 2);
        let kl = kl_objective(&p, &y).unwrap();
        prop_assert!(kl >= 0.0);
        let (s, c) = angle.sin_cos();
        let rot = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let rotated = &y * rot.transpose();
        prop_assert!((kl_objective(&p, &rotated).unwrap() - kl).abs() < 1e-12);
    }

    #[test]
    fn split_preserves_rows(seed in any::<u64>(), frac in 0.2f64..0.8) {
        let d = synth_gaussian_mixture(&SynthSpec::simplex(3, 3, 1.0, 12, seed).unwrap()).unwrap();
        let (train, test) = stratified_split_indices(&d, frac, seed).unwrap();
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..d.n()).collect::<Vec<_>>());
        let counts = d.subset(&train).unwrap().class_counts();
        for c in counts {
            prop_assert!((c as f64 - frac * 12.0).abs() <= 1.0);
        }
    }

    #[test]
    fn fitted_means_follow_translation(seed in any::<u64>(), dx in -50.0f64..50.0, dy in -50.0f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = random_matrix(&mut rng, 12, 2);
        let labels: Vec<usize> = (0..12).map(|i| i % 2).collect();
        let names = vec!["a".to_string(), "b".to_string()];
        let shifted = DMatrix::from_fn(12, 2, |r, c| pts[(r, c)] + [dx, dy][c]);
        let a = fit_class_gaussians(&pts, &labels, &names).unwrap();
        let b = fit_class_gaussians(&shifted, &labels, &names).unwrap();
        for k in 0..2 {
            let (ma, mb) = (a.get(k).unwrap(), b.get(k).unwrap());
            let expected = ma.mean() + DVector::from_vec(vec![dx, dy]);
            prop_assert!((mb.mean() - expected).amax() < 1e-12);
            prop_assert!((mb.covariance() - ma.covariance()).amax() < 1e-10);
        }
    }
}

fn random_models(rng: &mut ChaCha8Rng, k: usize) -> ClassGaussians {
    let models = (0..k)
        .map(|c| {
            let mean = DVector::from_fn(2, |_, _| rng.random_range(-3.0..3.0));
            let a = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0));
            let cov = &a * a.transpose() + DMatrix::identity(2, 2) * 0.2;
            let cov = (&cov + cov.transpose()) * 0.5;
            ClassGaussian::new(c, mean, cov, 50).unwrap()
        })
        .collect();
    ClassGaussians::unnamed(models).unwrap()
}

#[test]
fn grid_oracle_agrees_with_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..20 {
        let k = 2 + trial % 3;
        let models = random_models(&mut rng, k);
        let report = estimate_metric(&models, 100_000, trial as u64).unwrap();
        for c in 0..k {
            let q = grid_quadrature_accuracy(&models, c, 600).unwrap();
            // Grid discretisation error is added to the MC tolerance.
            let tol = 4.0 * report.mc_stderr[c] + 2e-3;
            assert!(
                (q - report.per_class[c]).abs() < tol,
                "trial {trial} class {c}: grid {q} vs mc {} (tol {tol})",
                report.per_class[c]
            );
        }
    }
}

#[test]
fn metric_is_rigid_motion_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let models = random_models(&mut rng, 3);
    let (s, c) = 1.1f64.sin_cos();
    let rot = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
    let shift = DVector::from_vec(vec![4.0, -2.5]);
    let moved = ClassGaussians::unnamed(
        models
            .models()
            .iter()
            .map(|m| {
                let cov = &rot * m.covariance() * rot.transpose();
                let cov = (&cov + cov.transpose()) * 0.5;
                ClassGaussian::new(m.class_id(), &rot * m.mean() + &shift, cov, m.n_samples()).unwrap()
            })
            .collect(),
    )
    .unwrap();
    let a = estimate_metric(&models, 100_000, 1).unwrap();
    let b = estimate_metric(&moved, 100_000, 99).unwrap();
    for k in 0..3 {
        let se = (a.mc_stderr[k].powi(2) + b.mc_stderr[k].powi(2)).sqrt();
        assert!((a.per_class[k] - b.per_class[k]).abs() < 4.0 * se.max(1e-4));
    }
}

#[test]
fn report_partition_and_ranges() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let models = random_models(&mut rng, 4);
    let r = estimate_metric(&models, 20_000, 8).unwrap();
    for k in 0..4 {
        let row: f64 = r.pairwise[k].iter().sum();
        assert!((row - 1.0).abs() <= 4.0 * r.pairwise_row_stderr(k));
        assert_eq!(r.pairwise[k][k], r.per_class[k]);
        assert!(r.pairwise[k].iter().all(|v| (0.0..=1.0).contains(v)));
    }
    assert!((0.0..=1.0).contains(&r.overall));
}
