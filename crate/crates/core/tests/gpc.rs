use cornercase::gpc::quadrature::{sigmoid, sigmoid_gaussian_integral};
use cornercase::gpc::{
    laplace_fit, optimize_hyperparams, GpcModel, HyperOptOptions, KernelParams, TrainingSet,
};
use cornercase::sampling::{label_with_oracle, latin_hypercube, monte_carlo, ParameterBox};
use cornercase::scenario::PhysicsConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

fn lhc_training(n: usize, seed: u64) -> TrainingSet {
    let bx = ParameterBox::scenario_default();
    let set = latin_hypercube(&bx, n, seed, 2_000).unwrap();
    let labeled = label_with_oracle(&set, &PhysicsConfig::default()).unwrap();
    TrainingSet::from_samples(bx, &labeled).unwrap()
}

fn kernel() -> KernelParams {
    KernelParams::new(20.0, vec![0.4, 0.8, 0.6])
}

fn queries(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..3).map(|_| rng.gen_range(-0.2..1.2)).collect())
        .collect()
}

/// Stratified Monte Carlo estimate of E[σ(f)], f ~ N(mean, var): one
/// uniform draw per equal-probability stratum, mapped through Φ⁻¹.
fn monte_carlo_integral(mean: f64, var: f64, samples: usize, rng: &mut ChaCha8Rng) -> f64 {
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let sd = var.sqrt();
    let total: f64 = (0..samples)
        .map(|i| {
            let u = (i as f64 + rng.gen::<f64>()) / samples as f64;
            sigmoid(mean + sd * std_normal.inverse_cdf(u))
        })
        .sum();
    total / samples as f64
}

#[test]
fn quadrature_matches_monte_carlo_integration() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let mean = rng.gen_range(-6.0..6.0);
        let var = rng.gen_range(0.0..30.0);
        let mc = monte_carlo_integral(mean, var, 1_000_000, &mut rng);
        let gh = sigmoid_gaussian_integral(mean, var);
        assert!((mc - gh).abs() < 1e-3, "mean {mean} var {var}: {gh} vs {mc}");
    }
}

#[test]
fn fitted_mode_is_stationary() {
    // The second kernel sits at the upper signal-variance bound, where the
    // posterior is flat and K is badly conditioned.
    let stiff = KernelParams::new(900.0, vec![0.6, 1.1, 0.9]);
    for (n, seed) in [(30, 1), (90, 2), (300, 3), (600, 4)] {
        for theta in [kernel(), stiff.clone()] {
            let model = laplace_fit(&lhc_training(n, seed), &theta).unwrap();
            assert!(model.stationarity_residual() < 1e-6, "n={n} {theta:?}: {}", model.stationarity_residual());
            assert!(model.hessian_diag().iter().all(|&w| w > 0.0 && w <= 0.25));
        }
    }
}

#[test]
fn flipping_labels_complements_predictions() {
    let training = lhc_training(90, 4);
    let a = laplace_fit(&training, &kernel()).unwrap();
    let b = laplace_fit(&training.flipped(), &kernel()).unwrap();
    let q = queries(500, 1);
    for (pa, pb) in a.predict_batch(&q).iter().zip(b.predict_batch(&q)) {
        assert!((pa.prob_collision + pb.prob_collision - 1.0).abs() < 1e-10);
    }
}

#[test]
fn training_order_does_not_matter() {
    let training = lhc_training(90, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut order: Vec<usize> = (0..training.len()).collect();
    for i in (1..order.len()).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    let permuted = TrainingSet::new(
        training.bounds.clone(),
        order.iter().map(|&i| training.x[i].clone()).collect(),
        order.iter().map(|&i| training.y[i]).collect(),
    )
    .unwrap();
    let a = laplace_fit(&training, &kernel()).unwrap();
    let b = laplace_fit(&permuted, &kernel()).unwrap();
    let q = queries(300, 3);
    for (pa, pb) in a.predict_batch(&q).iter().zip(b.predict_batch(&q)) {
        assert!((pa.prob_collision - pb.prob_collision).abs() < 1e-10);
        assert!((pa.latent_mean - pb.latent_mean).abs() < 1e-10);
    }
}

#[test]
fn predictive_variance_is_bounded_by_prior() {
    let training = lhc_training(90, 6);
    for theta in [kernel(), KernelParams::isotropic(300.0, 0.1, 3), KernelParams::isotropic(0.5, 2.0, 3)] {
        let model = laplace_fit(&training, &theta).unwrap();
        let q: Vec<Vec<f64>> = queries(300, 4).into_iter().chain(training.x.iter().cloned()).collect();
        for p in model.predict_batch(&q) {
            assert!(p.latent_var >= 0.0);
            assert!(p.latent_var <= theta.signal_variance + 1e-8);
            assert!((0.0..=1.0).contains(&p.prob_collision));
        }
    }
}

#[test]
fn far_queries_revert_to_one_half() {
    let training = lhc_training(90, 7);
    let l = 0.1;
    let model = laplace_fit(&training, &KernelParams::isotropic(50.0, l, 3)).unwrap();
    for q in [[1.0 + 8.0 * l, 0.5, 0.5], [-8.0 * l, 0.2, 0.9], [0.5, 0.5, 3.0]] {
        let nearest = training
            .x
            .iter()
            .map(|x| x.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
            .fold(f64::INFINITY, f64::min);
        assert!(nearest >= 8.0 * l);
        let p = model.predict(&q);
        assert!(p.extrapolated);
        assert!((p.prob_collision - 0.5).abs() <= 0.02, "{q:?}: {}", p.prob_collision);
    }
}

#[test]
fn json_round_trip_preserves_predictions() {
    let model = laplace_fit(&lhc_training(90, 8), &kernel()).unwrap();
    let back = GpcModel::from_json(&model.to_json()).unwrap();
    assert_eq!(back.log_marginal.to_bits(), model.log_marginal.to_bits());
    let q = queries(200, 5);
    for (a, b) in model.predict_batch(&q).iter().zip(back.predict_batch(&q)) {
        assert!((a.prob_collision - b.prob_collision).abs() < 1e-12);
        assert!((a.latent_var - b.latent_var).abs() < 1e-12);
    }
}

fn step_set() -> TrainingSet {
    let bx = ParameterBox::from_bounds(&[(0.0, 1.0)]).unwrap();
    let x: Vec<Vec<f64>> = (0..24).map(|i| vec![(i as f64 + 0.5) / 24.0]).collect();
    let y = x.iter().map(|p| if p[0] > 0.5 { 1.0 } else { -1.0 }).collect();
    TrainingSet::new(bx, x, y).unwrap()
}

#[test]
fn nelder_mead_matches_coarse_grid_optimum() {
    let training = step_set();
    let options = HyperOptOptions {
        restarts: 4,
        seed: 3,
        ..Default::default()
    };
    let found = optimize_hyperparams(&training, &options).unwrap();
    assert!(found.kernel.lengthscales[0] < 3.0);

    // 20 x 20 grid over (ln ℓ, ln σ_f²) spanning the search box.
    let b = options.bounds;
    let (l0, l1) = (b.lengthscale.0.ln(), b.lengthscale.1.ln());
    let (s0, s1) = (b.signal_variance.0.ln(), b.signal_variance.1.ln());
    let at = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / 19.0;
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for i in 0..20 {
        for j in 0..20 {
            let (ll, ls) = (at(l0, l1, i), at(s0, s1, j));
            let theta = KernelParams::new(ls.exp(), vec![ll.exp()]);
            if let Ok(m) = laplace_fit(&training, &theta) {
                if m.log_marginal > best.0 {
                    best = (m.log_marginal, ll, ls);
                }
            }
        }
    }
    let cell_l = (l1 - l0) / 19.0;
    let cell_s = (s1 - s0) / 19.0;
    let near = (found.kernel.lengthscales[0].ln() - best.1).abs() <= cell_l
        && (found.kernel.signal_variance.ln() - best.2).abs() <= cell_s;
    assert!(
        near || found.log_marginal >= best.0,
        "optimizer {:?} at {} vs grid ({}, {}) at {}",
        found.kernel,
        found.log_marginal,
        best.1.exp(),
        best.2.exp(),
        best.0
    );
    assert!(found.log_marginal >= best.0 - 1e-3);
}

#[test]
fn model_classifies_its_own_separable_training_data() {
    let bx = ParameterBox::scenario_default();
    let set = monte_carlo(&bx, 200, 9).unwrap();
    let labeled = label_with_oracle(&set, &PhysicsConfig::default()).unwrap();
    let training = TrainingSet::from_samples(bx, &labeled).unwrap();
    let model = laplace_fit(&training, &KernelParams::isotropic(100.0, 0.15, 3)).unwrap();
    let m = model.evaluate(&labeled).unwrap();
    assert!(m.accuracy >= 0.95, "{}", m.accuracy);
}
