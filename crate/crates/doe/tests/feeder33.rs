use doe::feeder_file::bundled_feeder;
use doe::scenario::{load_shape, random_requests, solar_shape, stress_day};
use doe_core::doe::{evaluate_b0, Direction};
use doe_core::grid::{residuals, DistFlowSolver, InjectionVector};
use doe_core::oracles::newton_power_flow;
use doe_core::snapshot::SamplingSpec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn base_case_matches_published_loss_and_minimum_voltage() {
    let f = bundled_feeder();
    let inj = InjectionVector {
        p: f.buses.iter().map(|b| b.base_load_p).collect(),
        q: f.buses.iter().map(|b| b.base_load_q).collect(),
    };
    let sol = DistFlowSolver::new(&f).unwrap().solve(&inj).unwrap();
    // widely reported for this feeder at 1.0 p.u. source voltage
    assert!((sol.loss - 202.7).abs() < 0.5, "loss {}", sol.loss);
    let (k, vmin) = sol
        .v
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |a, (k, &v)| if v < a.1 { (k, v) } else { a });
    assert_eq!(f.buses[k].id, 18);
    assert!((vmin - 0.9131).abs() < 5e-4, "vmin {vmin}");
}

#[test]
fn sweep_matches_newton_on_random_injections() {
    let f = bundled_feeder();
    let spec = SamplingSpec::desk(&f, 99);
    let solver = DistFlowSolver::new(&f).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..20 {
        let inj = spec.draw(&f, &mut rng);
        let sol = solver.solve(&inj).unwrap();
        let r = residuals(&f, &sol, &inj).unwrap();
        assert!(r.max() <= 1e-8, "{r:?}");
        let nt = newton_power_flow(&f, &inj).unwrap();
        for (a, b) in sol.v.iter().zip(&nt.v) {
            assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
        }
        assert!((sol.loss - nt.loss).abs() <= 1e-3);
    }
}

#[test]
fn stress_day_shapes() {
    assert_eq!(solar_shape(3.0), 0.0);
    assert!((solar_shape(12.0) - 1.0).abs() < 1e-12);
    assert_eq!(load_shape(19.0), 1.0);
    assert_eq!(load_shape(12.5), 0.3);
    let f = bundled_feeder();
    let day = stress_day(&f, Direction::Upper, 96);
    assert_eq!(day.intervals.len(), 96);
    day.check(&f).unwrap();
    let noon = &day.intervals[48];
    assert!(noon.ders[0].p_max > 790.0);
    assert_eq!(day.intervals[0].ders[0].p_max, 0.0);
    assert_eq!(day.intervals[76].ders[1].p_min, -500.0);
}

#[test]
fn stress_day_violates_limits_at_forecast() {
    let f = bundled_feeder();
    let up = stress_day(&f, Direction::Upper, 24);
    let noon = evaluate_b0(&f, &up, 12).unwrap();
    assert!(noon.verified.unwrap().deltas.rpf > 0.0);
    let down = stress_day(&f, Direction::Lower, 96);
    let evening = evaluate_b0(&f, &down, 76).unwrap();
    assert!(evening.verified.unwrap().deltas.ol > 0.0);
}

#[test]
fn random_requests_are_valid_and_seeded() {
    let f = bundled_feeder();
    let a = random_requests(&f, 12, 5);
    assert_eq!(a, random_requests(&f, 12, 5));
    assert_ne!(a, random_requests(&f, 12, 6));
    for r in &a {
        r.check(&f).unwrap();
    }
    assert!(a.iter().any(|r| r.direction == Direction::Lower));
    assert!(a.iter().any(|r| r.direction == Direction::Upper));
}
