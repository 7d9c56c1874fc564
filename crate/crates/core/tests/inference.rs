use ppm_core::inference::{plug_in_fit_with, PlugInConfig};
use ppm_core::prediction::posterior_predictive;
use ppm_core::simulate::simulate_dataset;
use ppm_core::{
    fit, fit_ensemble, plug_in_fit, rng_from_seed, Dataset, Error, FitConfig, MeanForm, ModelSpec,
    PosteriorDraws,
};

fn running_data(seed: u64) -> Dataset {
    simulate_dataset(100, 3.25, 0.2, 0.1, seed).unwrap()
}

fn quick() -> FitConfig {
    FitConfig {
        warmup: 600,
        samples: 500,
        ..FitConfig::default()
    }
}

#[test]
fn recovers_generating_parameters_across_seeds() {
    let model = ModelSpec::regression(MeanForm::TrueModel);
    for seed in [2, 5, 9] {
        let draws = fit(
            &model,
            &running_data(seed),
            &FitConfig::default().with_seed(seed),
        )
        .unwrap();
        let (m, s) = (draws.means(), draws.sds());
        for (j, truth) in [3.25, 0.2, 0.1].iter().enumerate() {
            assert!(
                (m[j] - truth).abs() <= 3.0 * s[j],
                "seed {seed} param {j}: {} ± {}",
                m[j],
                s[j]
            );
        }
        assert!(draws.diagnostics().unwrap().max_r_hat() <= 1.05);
    }
}

#[test]
fn draws_are_exact_and_deterministic() {
    let model = ModelSpec::regression(MeanForm::TrueModel);
    let data = running_data(1);
    let cfg = FitConfig {
        chains: 3,
        ..quick()
    }
    .with_seed(11);
    let a = fit(&model, &data, &cfg).unwrap();
    let b = fit(&model, &data, &cfg).unwrap();
    assert_eq!(a.n_draws(), 3 * 500);
    assert_eq!(a.n_chains(), 3);
    assert!(a.rows().zip(b.rows()).all(|(x, y)| x == y));
    assert_eq!(a.diagnostics(), b.diagnostics());
    for theta in a.rows() {
        assert!(model.log_posterior(&data, theta).unwrap().is_finite());
    }
    let c = fit(&model, &data, &cfg.with_seed(12)).unwrap();
    assert!(a.rows().zip(c.rows()).any(|(x, y)| x != y));
}

#[test]
fn chain_seeds_follow_the_master_seed() {
    let model = ModelSpec::regression(MeanForm::TrueModel);
    let data = running_data(1);
    let two = fit(
        &model,
        &data,
        &FitConfig {
            chains: 2,
            ..quick()
        }
        .with_seed(20),
    )
    .unwrap();
    let shifted = fit(
        &model,
        &data,
        &FitConfig {
            chains: 2,
            ..quick()
        }
        .with_seed(21),
    )
    .unwrap();
    assert_eq!(two.chain_series(0)[1], shifted.chain_series(0)[0]);
}

#[test]
fn invalid_configs_are_rejected() {
    let model = ModelSpec::regression(MeanForm::TrueModel);
    let data = running_data(1);
    assert!(fit(
        &model,
        &data,
        &FitConfig {
            chains: 1,
            ..quick()
        }
    )
    .is_err());
    assert!(fit(
        &model,
        &data,
        &FitConfig {
            samples: 0,
            ..quick()
        }
    )
    .is_err());
    let classification = ModelSpec::classification(2, ppm_core::Link::Logit).unwrap();
    assert!(fit(&classification, &data, &quick()).is_err());
}

#[test]
fn plug_in_recovers_noiseless_quadratic() {
    let x: Vec<f64> = (0..25).map(|i| i as f64 / 24.0).collect();
    let y: Vec<f64> = x.iter().map(|&v| 0.3 + 1.2 * v - 0.7 * v * v).collect();
    let data = Dataset::new(x, y).unwrap();
    let model = ModelSpec::regression(MeanForm::Quadratic);
    let theta = plug_in_fit(&model, &data).unwrap();
    for (got, want) in theta.iter().zip([0.3, 1.2, -0.7]) {
        assert!((got - want).abs() < 1e-4, "{theta:?}");
    }
    assert_eq!(theta, plug_in_fit(&model, &data).unwrap());
}

#[test]
fn plug_in_dominates_posterior_draws() {
    let data = ppm_core::simulate::subsample_every_kth(&running_data(1), 8).unwrap();
    let model = ModelSpec::regression(MeanForm::Quadratic);
    let theta = plug_in_fit_with(
        &model,
        &data,
        &PlugInConfig {
            seed: 3,
            ..Default::default()
        },
    )
    .unwrap();
    let best = model.log_posterior(&data, &theta).unwrap();
    let draws = fit(&model, &data, &FitConfig::default()).unwrap();
    let worst_gap = draws
        .rows()
        .map(|t| model.log_posterior(&data, t).unwrap() - best)
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(worst_gap <= 1e-6, "a draw beats the MAP by {worst_gap}");
}

#[test]
fn posterior_contracts_with_more_data() {
    let model = ModelSpec::regression(MeanForm::TrueModel);
    let (mut small, mut large) = (0.0, 0.0);
    for seed in 1..=5 {
        let a = fit(
            &model,
            &simulate_dataset(100, 3.25, 0.2, 0.1, seed).unwrap(),
            &quick().with_seed(seed),
        )
        .unwrap();
        let b = fit(
            &model,
            &simulate_dataset(200, 3.25, 0.2, 0.1, seed).unwrap(),
            &quick().with_seed(seed),
        )
        .unwrap();
        small += a.sds()[0];
        large += b.sds()[0];
    }
    assert!(large <= 1.1 * small, "sd(θ1) grew from {small} to {large}");
}

#[test]
fn ensemble_determinism_and_consistency() {
    let model = ModelSpec::regression(MeanForm::TrueModel);
    let data = running_data(1);
    let same = fit_ensemble(&model, &data, &[1, 1], &quick()).unwrap();
    assert!(same[0].rows().zip(same[1].rows()).all(|(a, b)| a == b));

    let fits = fit_ensemble(&model, &data, &[1, 2], &quick()).unwrap();
    let sequential: Vec<PosteriorDraws> = [1, 2]
        .iter()
        .map(|&s| fit(&model, &data, &quick().with_seed(s)).unwrap())
        .collect();
    for (a, b) in fits.iter().zip(&sequential) {
        assert!(a.rows().zip(b.rows()).all(|(x, y)| x == y));
    }

    let mut rng = rng_from_seed(5);
    let single = posterior_predictive(&model, &fits[0], 0.5, 10, &mut rng).unwrap();
    let pooled =
        ppm_core::uncertainty::pool_ensemble_predictions(&fits, &model, 0.5, &mut rng).unwrap();
    let mcse = single.sd() / (single.len() as f64).sqrt();
    assert!(
        (pooled.mean() - single.mean()).abs()
            < 2.0 * mcse.max(pooled.sd() / (pooled.len() as f64).sqrt())
    );

    assert!(matches!(
        fit_ensemble(&model, &data, &[], &quick()),
        Err(Error::Domain(_))
    ));
}

#[test]
fn ensemble_errors_name_the_seed() {
    let model = ModelSpec::regression(MeanForm::TrueModel);
    let data = running_data(1);
    let bad = FitConfig {
        chains: 1,
        ..quick()
    };
    match fit_ensemble(&model, &data, &[7, 8], &bad) {
        Err(Error::Ensemble { seed, .. }) => assert_eq!(seed, 7),
        other => panic!("expected an ensemble error, got {other:?}"),
    }
}
