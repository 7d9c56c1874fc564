use proptest::prelude::*;

use ppm_core::prediction::{ks_statistic, posterior_predictive};
use ppm_core::simulate::simulate_classification;
use ppm_core::uncertainty::{
    classify_predictive, decision_boundary_band, decompose_uncertainty, generate_datasets,
    pool_ensemble_predictions, propagate_test_error, MeasuredValue,
};
use ppm_core::{fit, rng_from_seed, Dataset, FitConfig, Link, MeanForm, ModelSpec, PosteriorDraws};

#[test]
fn single_measured_cell_follows_its_error_model() {
    let data = Dataset::new(vec![0.5], vec![1.0])
        .unwrap()
        .with_errors(Some(vec![0.06]), None)
        .unwrap();
    let mut rng = rng_from_seed(1);
    let sets = generate_datasets(&data, 10_000, &mut rng).unwrap();
    let xs: Vec<f64> = sets.iter().map(|d| d.x()[0]).collect();
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let sd = (xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt();
    assert!((mean - 0.5).abs() < 0.002);
    assert!((sd - 0.06).abs() < 0.003);
    assert!(sets.iter().all(|d| d.y()[0] == 1.0));
}

fn regression_draws(n: usize) -> (ModelSpec, PosteriorDraws) {
    let model = ModelSpec::regression(MeanForm::TrueModel);
    let mut rng = rng_from_seed(3);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let z: [f64; 3] = std::array::from_fn(|_| rand::Rng::random_range(&mut rng, -1.0..1.0));
            vec![3.25 + 0.3 * z[0], 0.2 + 0.03 * z[1], 0.1 + 0.01 * z[2]]
        })
        .collect();
    let draws = PosteriorDraws::new(model.parameter_names(), rows, vec![0; n]).unwrap();
    (model, draws)
}

#[test]
fn exact_input_matches_posterior_predictive() {
    let (model, draws) = regression_draws(50_000);
    let mut rng = rng_from_seed(4);
    let exact =
        propagate_test_error(&model, &draws, MeasuredValue::exact(0.15), 50_000, &mut rng).unwrap();
    let plain = posterior_predictive(&model, &draws, 0.15, 1, &mut rng).unwrap();
    assert!(ks_statistic(exact.samples(), plain.samples()) < 0.02);
}

#[test]
fn input_error_inflates_variance() {
    let (model, draws) = regression_draws(100_000);
    let mut rng = rng_from_seed(5);
    let noisy = propagate_test_error(
        &model,
        &draws,
        MeasuredValue::new(0.15, 0.06).unwrap(),
        100_000,
        &mut rng,
    )
    .unwrap();
    let plain = posterior_predictive(&model, &draws, 0.15, 1, &mut rng).unwrap();
    assert!(noisy.variance() >= 0.99 * plain.variance());
    assert!(noisy.variance() > plain.variance());
}

#[test]
fn pooling_one_or_identical_fits() {
    let (model, draws) = regression_draws(5000);
    let single = pool_ensemble_predictions(
        std::slice::from_ref(&draws),
        &model,
        0.4,
        &mut rng_from_seed(6),
    )
    .unwrap();
    let direct = posterior_predictive(&model, &draws, 0.4, 1, &mut rng_from_seed(6)).unwrap();
    assert!(ks_statistic(single.samples(), direct.samples()) < 0.03);
    let twice = pool_ensemble_predictions(
        &[draws.clone(), draws.clone()],
        &model,
        0.4,
        &mut rng_from_seed(7),
    )
    .unwrap();
    assert!(ks_statistic(twice.samples(), direct.samples()) < 0.03);
}

#[test]
fn classification_pipeline() {
    let data = simulate_classification(200, [0.0, 1.5, -1.5], 2).unwrap();
    let model = ModelSpec::classification(2, Link::Logit).unwrap();
    let draws = fit(&model, &data, &FitConfig::default().with_seed(2)).unwrap();
    assert!(draws.diagnostics().unwrap().max_r_hat() <= 1.05);
    let grid: Vec<f64> = (0..=12).map(|i| -3.0 + 0.5 * i as f64).collect();
    let band = decision_boundary_band(&draws, &model, &grid, 0.95).unwrap();
    let w = band.widths();
    assert!(w[0] > w[6] && w[12] > w[6], "{w:?}");

    for x in [[0.0, 0.0], [2.0, -1.0], [-3.0, 3.0]] {
        let c = classify_predictive(&model, &draws, &x).unwrap();
        let u = decompose_uncertainty(&c.p_draws).unwrap();
        assert!((u.aleatoric + u.epistemic - u.mu_bar * (1.0 - u.mu_bar)).abs() <= 1e-12);
        assert_eq!(c.y_predictive, u.mu_bar);
    }
    assert!(classify_predictive(&model, &draws, &[0.0]).is_err());
}

#[test]
fn zero_coefficients_predict_a_fair_coin() {
    let model = ModelSpec::classification(2, Link::Logit).unwrap();
    let draws = PosteriorDraws::point_mass(model.parameter_names(), &[0.0, 0.0, 0.0], 10).unwrap();
    let c = classify_predictive(&model, &draws, &[1.3, -0.4]).unwrap();
    assert_eq!(c.y_predictive, 0.5);
}

#[test]
fn mirrored_labels_mirror_the_band() {
    let data = simulate_classification(150, [0.3, 1.5, -1.5], 8).unwrap();
    let flipped_y: Vec<f64> = data.y().iter().map(|&y| 1.0 - y).collect();
    let flipped = Dataset::with_features(2, data.x().to_vec(), flipped_y).unwrap();
    let model = ModelSpec::classification(2, Link::Logit).unwrap();
    let cfg = FitConfig::default().with_seed(3);
    let a = fit(&model, &data, &cfg).unwrap();
    let b = fit(&model, &flipped, &cfg).unwrap();
    let grid = [-2.0, 0.0, 2.0];
    let ba = decision_boundary_band(&a, &model, &grid, 0.9).unwrap();
    let bb = decision_boundary_band(&b, &model, &grid, 0.9).unwrap();
    // Flipping labels negates every coefficient and leaves the boundary in place.
    for i in 0..grid.len() {
        assert!(
            (ba.median[i] - bb.median[i]).abs() < 0.15,
            "{} vs {}",
            ba.median[i],
            bb.median[i]
        );
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decomposition_identity_holds(p in prop::collection::vec(0.0f64..=1.0, 2..200)) {
        let u = decompose_uncertainty(&p).unwrap();
        prop_assert!((u.aleatoric + u.epistemic - u.mu_bar * (1.0 - u.mu_bar)).abs() <= 1e-12);
        prop_assert!((0.0..=0.25).contains(&u.aleatoric));
        prop_assert!((0.0..=0.25 + 1e-15).contains(&u.epistemic));
        prop_assert!((0.0..=1.0).contains(&u.mu_bar));
    }

    #[test]
    fn spreading_draws_moves_uncertainty_to_epistemic(
        p in prop::collection::vec(0.05f64..=0.95, 4..100),
        k in 0.1f64..0.9,
    ) {
        let bar = mean(&p);
        prop_assume!(p.iter().any(|&v| (v - bar).abs() > 1e-3));
        // Mix each draw toward the end point on its side, keeping the mean.
        let lo = p.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let room = ((bar - 0.0) / (bar - lo)).min((1.0 - bar) / (hi - bar));
        let scale = 1.0 + k * (room - 1.0).max(0.0);
        prop_assume!(scale > 1.0 + 1e-6);
        let spread: Vec<f64> = p.iter().map(|&v| bar + scale * (v - bar)).collect();
        let (a, b) = (decompose_uncertainty(&p).unwrap(), decompose_uncertainty(&spread).unwrap());
        prop_assert!((a.mu_bar - b.mu_bar).abs() < 1e-12);
        prop_assert!(b.epistemic > a.epistemic);
        prop_assert!(b.aleatoric < a.aleatoric);
    }

    #[test]
    fn prediction_depends_only_on_the_mean(p in prop::collection::vec(0.0f64..=1.0, 2..100), seed in 0u64..100) {
        let mut shuffled = p.clone();
        let mut rng = rng_from_seed(seed);
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
        let (a, b) = (decompose_uncertainty(&p).unwrap(), decompose_uncertainty(&shuffled).unwrap());
        prop_assert!((a.mu_bar - b.mu_bar).abs() <= 1e-12);
    }

    #[test]
    fn out_of_range_draws_are_rejected(bad in prop_oneof![-1.0f64..-1e-9, 1.0f64 + 1e-9..2.0]) {
        prop_assert!(decompose_uncertainty(&[0.5, bad]).is_err());
    }
}
