use cornercase::sampling::{
    label, label_with_oracle, latin_hypercube, minimax_criterion, monte_carlo, split, DesignSpec,
    Method, ParameterBox,
};
use cornercase::scenario::PhysicsConfig;

fn strata(bx: &ParameterBox, points: &[Vec<f64>], col: usize) -> Vec<usize> {
    let n = points.len();
    let mut idx: Vec<usize> = points
        .iter()
        .map(|p| ((bx.normalize(p)[col] * n as f64).floor() as usize).min(n - 1))
        .collect();
    idx.sort_unstable();
    idx
}

#[test]
fn lhc_has_one_sample_per_stratum() {
    let bx = ParameterBox::scenario_default();
    for n in [10, 90, 900] {
        for seed in [0, 1] {
            let set = latin_hypercube(&bx, n, seed, 10_000).unwrap();
            assert_eq!(set.len(), n);
            assert!(set.points.iter().all(|p| bx.contains(p)));
            for col in 0..3 {
                assert_eq!(strata(&bx, &set.points, col), (0..n).collect::<Vec<_>>(), "n={n} col={col}");
            }
        }
    }
}

#[test]
fn lhc_covers_better_than_monte_carlo() {
    let bx = ParameterBox::scenario_default();
    let lhc = minimax_criterion(&bx, &latin_hypercube(&bx, 90, 11, 10_000).unwrap().points).unwrap();
    let mc: f64 = (0..20)
        .map(|s| minimax_criterion(&bx, &monte_carlo(&bx, 90, 100 + s).unwrap().points).unwrap())
        .sum::<f64>()
        / 20.0;
    assert!(lhc < mc, "lhc {lhc} vs mean mc {mc}");
}

#[test]
fn optimization_never_worsens_coverage() {
    let bx = ParameterBox::scenario_default();
    for seed in 0..5 {
        let start = minimax_criterion(&bx, &latin_hypercube(&bx, 50, seed, 0).unwrap().points).unwrap();
        let end = minimax_criterion(&bx, &latin_hypercube(&bx, 50, seed, 2_000).unwrap().points).unwrap();
        assert!(end <= start, "seed {seed}: {end} > {start}");
    }
}

#[test]
fn designs_and_splits_reproduce() {
    let bx = ParameterBox::scenario_default();
    for method in [Method::MonteCarlo, Method::LatinHypercube] {
        let spec = DesignSpec::new(method, 100, 7);
        let a = spec.generate(&bx).unwrap();
        assert_eq!(a, spec.generate(&bx).unwrap());
        let (train, test) = split(&a, &spec).unwrap();
        assert_eq!((train.len(), test.len()), (90, 10));
        let mut all: Vec<Vec<f64>> = train.points.iter().chain(&test.points).cloned().collect();
        let mut orig = a.points.clone();
        let key = |p: &Vec<f64>| p.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        all.sort_by_key(key);
        orig.sort_by_key(key);
        assert_eq!(all, orig);
    }
    assert_eq!(DesignSpec::new(Method::MonteCarlo, 1000, 0).n_train(), 900);
}

#[test]
fn simulated_labels_match_oracle_labels_on_designs() {
    let bx = ParameterBox::scenario_default();
    let c = PhysicsConfig::default();
    let set = latin_hypercube(&bx, 200, 3, 1_000).unwrap();
    let sim = label(&set, &c).unwrap();
    let orc = label_with_oracle(&set, &c).unwrap();
    assert_eq!(sim.len(), 200);
    for (i, (s, p)) in sim.iter().zip(&set.points).enumerate() {
        assert_eq!(s.params.as_array().to_vec(), *p, "order at {i}");
    }
    let agree = sim.iter().zip(&orc).filter(|(a, b)| a.outcome == b.outcome).count();
    assert!(agree >= 199);
}
