//! End-to-end checks across data, embedding, class models, metric and eval.

use statrs::distribution::{ContinuousCDF, Normal};

use sepmetric::{
    estimate_metric, fit_class_gaussians, fit_reference_classifier, stratified_split, synth_gaussian_mixture,
    tsne_embed, ClassifierKind, SynthClass, SynthSpec, TsneConfig,
};

fn phi(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

fn two_class(dim: usize, separation: f64, n: usize, seed: u64) -> SynthSpec {
    let eye: Vec<Vec<f64>> = (0..dim)
        .map(|i| (0..dim).map(|j| f64::from(u8::from(i == j))).collect())
        .collect();
    let mut far = vec![0.0; dim];
    far[0] = separation;
    SynthSpec {
        classes: vec![
            SynthClass {
                name: Some("left".into()),
                mean: vec![0.0; dim],
                cov: eye.clone(),
                n,
            },
            SynthClass {
                name: Some("right".into()),
                mean: far,
                cov: eye,
                n,
            },
        ],
        seed,
    }
}

/// Nearest-centroid accuracy computed independently of the metric code.
fn centroid_accuracy(points: &nalgebra::DMatrix<f64>, labels: &[usize], k: usize) -> f64 {
    let d = points.ncols();
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (r, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for c in 0..d {
            sums[l][c] += points[(r, c)];
        }
    }
    let correct = labels
        .iter()
        .enumerate()
        .filter(|&(r, &l)| {
            let best = (0..k)
                .min_by(|&a, &b| {
                    let da: f64 = (0..d)
                        .map(|c| (points[(r, c)] - sums[a][c] / counts[a] as f64).powi(2))
                        .sum();
                    let db: f64 = (0..d)
                        .map(|c| (points[(r, c)] - sums[b][c] / counts[b] as f64).powi(2))
                        .sum();
                    da.total_cmp(&db)
                })
                .unwrap();
            best == l
        })
        .count();
    correct as f64 / labels.len() as f64
}

#[test]
fn tsne_separates_distant_clouds() {
    let data = synth_gaussian_mixture(&two_class(10, 10.0, 50, 3)).unwrap();
    let config = TsneConfig {
        seed: 42,
        ..Default::default()
    };
    let e = tsne_embed(data.features(), &config).unwrap();
    assert_eq!(e.n(), 100);
    assert!(e.points.iter().all(|v| v.is_finite()));
    assert!(centroid_accuracy(&e.points, data.labels(), 2) >= 0.95);
    assert!(e.final_objective() < e.initial_objective().unwrap());

    let again = tsne_embed(data.features(), &config).unwrap();
    assert_eq!(e.points, again.points);
}

#[test]
fn discriminant_nears_bayes_rate() {
    let delta = 4.0;
    let train = synth_gaussian_mixture(&two_class(2, delta, 100, 10)).unwrap();
    let test = synth_gaussian_mixture(&two_class(2, delta, 100, 11)).unwrap();
    let clf = fit_reference_classifier(&train, ClassifierKind::GaussianDiscriminant).unwrap();
    let r = clf.evaluate(&test).unwrap();
    assert!(r.accuracy >= phi(delta / 2.0) - 0.05, "{}", r.accuracy);
    assert_eq!(r.n_test, 200);
    let row_sums: Vec<u64> = r.confusion.iter().map(|row| row.iter().sum()).collect();
    assert_eq!(row_sums, vec![100, 100]);
}

#[test]
fn discriminant_converges_with_more_data() {
    let delta = 2.0;
    let train = synth_gaussian_mixture(&two_class(2, delta, 1000, 20)).unwrap();
    let test = synth_gaussian_mixture(&two_class(2, delta, 5000, 21)).unwrap();
    let clf = fit_reference_classifier(&train, ClassifierKind::GaussianDiscriminant).unwrap();
    let acc = clf.evaluate(&test).unwrap().accuracy;
    assert!((acc - phi(1.0)).abs() < 0.03, "{acc}");
}

#[test]
fn identical_classes_score_at_chance() {
    let train = synth_gaussian_mixture(&two_class(2, 0.0, 250, 30)).unwrap();
    let test = synth_gaussian_mixture(&two_class(2, 0.0, 250, 31)).unwrap();
    for kind in [
        ClassifierKind::GaussianDiscriminant,
        ClassifierKind::Knn { neighbors: 5 },
    ] {
        let acc = fit_reference_classifier(&train, kind)
            .unwrap()
            .evaluate(&test)
            .unwrap()
            .accuracy;
        assert!((acc - 0.5).abs() < 0.1, "{kind:?}: {acc}");
    }
}

#[test]
fn evaluation_is_deterministic() {
    let data = synth_gaussian_mixture(&SynthSpec::simplex(3, 5, 2.0, 60, 4).unwrap()).unwrap();
    let (train, test) = stratified_split(&data, 0.5, 9).unwrap();
    for kind in [
        ClassifierKind::GaussianDiscriminant,
        ClassifierKind::Knn { neighbors: 5 },
    ] {
        let a = fit_reference_classifier(&train, kind).unwrap().evaluate(&test).unwrap();
        let b = fit_reference_classifier(&train, kind).unwrap().evaluate(&test).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn far_classes_estimate_near_one() {
    let data = synth_gaussian_mixture(&two_class(5, 20.0, 80, 12)).unwrap();
    let e = tsne_embed(data.features(), &TsneConfig::default()).unwrap();
    let models = fit_class_gaussians(&e.points, data.labels(), data.class_names()).unwrap();
    let report = estimate_metric(&models, 100_000, 42).unwrap();
    assert!(report.overall >= 0.99, "{}", report.overall);
}
