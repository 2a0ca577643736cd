use cornercase::sampling::{monte_carlo, ParameterBox};
use cornercase::scenario::{
    detection_distance, oracle, oracle_margin, simulate, Outcome, PhysicsConfig, ScenarioParams,
};
use proptest::prelude::*;

fn kmh(v: f64) -> f64 {
    v / 3.6
}

#[test]
fn integrator_agrees_with_oracle_outside_margin_band() {
    let c = PhysicsConfig::default();
    let bx = ParameterBox::scenario_default();
    let band = 2.0 * c.dt * kmh(bx.dims()[0].upper);
    let draws = monte_carlo(&bx, 10_000, 2024).unwrap();
    let mut disagreements = 0;
    for p in draws.scenarios().unwrap() {
        let sim = simulate(&p, &c).unwrap().outcome;
        if sim != oracle(&p, &c) {
            disagreements += 1;
            assert!(
                oracle_margin(&p, &c).abs() <= band,
                "disagreement outside the margin band at {p}"
            );
        }
    }
    assert!(disagreements <= 10, "{disagreements} disagreements");
}

#[test]
fn detection_gap_within_one_step_of_detection_distance() {
    let c = PhysicsConfig::default();
    let bx = ParameterBox::scenario_default();
    for p in monte_carlo(&bx, 500, 5).unwrap().scenarios().unwrap() {
        let t = simulate(&p, &c).unwrap();
        let gap = t.detection_gap.expect("target is always seen in the default box");
        let step = c.dt * kmh(p.speed_ego - p.speed_target);
        assert!((gap - detection_distance(&p, &c)).abs() <= step + 1e-12, "{p}");
        assert!(gap <= c.radar_max_range.min(c.initial_gap));
        assert!(t.min_gap >= 0.0);
        assert_eq!(t.min_gap == 0.0, t.outcome == Outcome::Collision);
    }
}

fn in_box() -> impl Strategy<Value = (f64, f64, f64)> {
    (40.0..=70.0f64, 5.0..=20.0f64, 10.0..=25.0f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn wider_aperture_never_causes_collision((e, t, a) in in_box(), extra in 0.0..15.0f64) {
        let c = PhysicsConfig::default();
        let narrow = simulate(&ScenarioParams::new(e, t, a), &c).unwrap().outcome;
        let wide = simulate(&ScenarioParams::new(e, t, (a + extra).min(25.0)), &c).unwrap().outcome;
        prop_assert!(!(narrow == Outcome::NoCollision && wide == Outcome::Collision));
    }

    #[test]
    fn faster_ego_never_avoids_collision((e, t, a) in in_box(), extra in 0.0..30.0f64) {
        let c = PhysicsConfig::default();
        let slow = simulate(&ScenarioParams::new(e, t, a), &c).unwrap().outcome;
        let fast = simulate(&ScenarioParams::new((e + extra).min(70.0), t, a), &c).unwrap().outcome;
        prop_assert!(!(slow == Outcome::Collision && fast == Outcome::NoCollision));
    }

    #[test]
    fn simulate_is_pure((e, t, a) in in_box()) {
        let c = PhysicsConfig::default();
        let p = ScenarioParams::new(e, t, a);
        let (x, y) = (simulate(&p, &c).unwrap(), simulate(&p, &c).unwrap());
        prop_assert_eq!(x.min_gap.to_bits(), y.min_gap.to_bits());
        prop_assert_eq!(x.time_to_outcome.to_bits(), y.time_to_outcome.to_bits());
        prop_assert_eq!(x, y);
    }

    #[test]
    fn equal_speeds_never_collide(v in 5.0..=70.0f64, a in 10.0..=25.0f64) {
        let c = PhysicsConfig::default();
        let p = ScenarioParams::new(v, v, a);
        prop_assert_eq!(oracle(&p, &c), Outcome::NoCollision);
        prop_assert_eq!(simulate(&p, &c).unwrap().outcome, Outcome::NoCollision);
    }
}
