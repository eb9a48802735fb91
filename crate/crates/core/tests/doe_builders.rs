mod common;

use common::{random_set, request, tiny_feeder};
use doe_core::doe::{
    build_icnn_lp, build_icnn_milp, build_lindistflow, build_surrogate_milp, evaluate_b0, linear_flows, pwl_secants,
    solve_doe, solve_interval, verify_with_oracle, Direction, DoeError, DoeInstance, Method, SolveContext,
    SurrogateSet, Weights,
};
use doe_core::grid::{violation_terms, DistFlowSolver, Feeder, Limits};
use doe_core::icnn::{Architecture, Model};
use doe_core::lp::{solve_lp, LpOptions};
use doe_core::milp::{solve_milp, BnbConfig};
use doe_core::oracles::{enumerate_binaries, minimize_convex_1d};
use doe_core::NoClock;

fn relu(v: f64) -> f64 {
    v.max(0.0)
}

/// Objective of a single-DER instance written out from forward passes.
fn surrogate_objective(feeder: &Feeder, set: &SurrogateSet, lim: &Limits, w: &Weights, dir: Direction, e: f64) -> f64 {
    let der = feeder.buses[3].der.unwrap();
    let n = feeder.buses.len();
    let mut x: Vec<f64> = feeder.buses.iter().map(|b| b.base_load_p).collect();
    x.extend(feeder.buses.iter().map(|b| b.base_load_q));
    x[3] -= e;
    x[n + 3] -= der.q_der;
    let loss = relu(set.loss.forward(&x).unwrap()[0]);
    let yv = set.v.forward(&x).unwrap();
    let dv: f64 = (0..n)
        .map(|k| relu(yv[k] - lim.v_max) + relu(yv[k + n] + lim.v_min))
        .sum();
    let yi = set.ol.forward(&x).unwrap();
    let dol: f64 = yi.iter().zip(&lim.i_max).map(|(i, m)| relu(i - m)).sum();
    let yp = set.rpf.forward(&x).unwrap();
    let drpf: f64 = yp.iter().zip(&lim.p_min).map(|(p, m)| relu(p + m)).sum();
    let dev = match dir {
        Direction::Upper => der.p_max - e,
        Direction::Lower => e - der.p_min,
    };
    w.w_doe * dev + w.w_loss * loss + w.w_v * dv + w.w_ol * dol + w.w_rpf * drpf
}

fn lp_objective(inst: &DoeInstance) -> (f64, Vec<f64>) {
    let s = solve_lp(inst.lp(), &LpOptions::default()).unwrap();
    assert!(s.is_optimal(), "{:?}", s.status);
    (s.objective, s.x)
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn relaxed_and_exact_encodings_agree_for_convex_nets() {
    let f = tiny_feeder();
    for seed in 0..6 {
        let set = random_set(&f, Architecture::Icnn, &[6, 5], seed);
        for dir in [Direction::Upper, Direction::Lower] {
            let req = request(&f, dir, Weights::default());
            let (lp_obj, _) = lp_objective(&build_icnn_lp(&f, &set, &req, 0).unwrap());
            let milp = build_icnn_milp(&f, &set, &req, 0).unwrap();
            let s = solve_milp(&milp.problem, &BnbConfig::default(), &NoClock).unwrap();
            assert!(
                close(lp_obj, s.objective, 1e-6),
                "seed {seed} {dir:?}: {lp_obj} vs {}",
                s.objective
            );
        }
    }
}

#[test]
fn units_fixed_by_their_interval_get_no_variable() {
    let f = tiny_feeder();
    let set = random_set(&f, Architecture::Icnn, &[6, 5], 3);
    let req = request(&f, Direction::Upper, Weights::default());
    let lp = build_icnn_lp(&f, &set, &req, 0).unwrap();
    let milp = build_icnn_milp(&f, &set, &req, 0).unwrap();
    let p = &milp.problem;
    let units = 4 * (6 + 5);
    assert!(p.units.len() < units, "no unit was fixed by bound propagation");
    assert_eq!(p.units.len(), p.binaries.len());
    assert_eq!(lp.problem.units.len(), p.units.len());
    assert_eq!(lp.lp().num_vars() + p.binaries.len(), p.lp.num_vars());
}

#[test]
fn lp_optimum_matches_line_search_over_the_envelope() {
    let f = tiny_feeder();
    let der = f.buses[3].der.unwrap();
    for seed in 0..6 {
        let set = random_set(&f, Architecture::Icnn, &[8, 4], seed);
        for dir in [Direction::Upper, Direction::Lower] {
            let w = Weights::default();
            let req = request(&f, dir, w);
            let (obj, _) = lp_objective(&build_icnn_lp(&f, &set, &req, 0).unwrap());
            let (_, best) = minimize_convex_1d(
                |e| surrogate_objective(&f, &set, &req.limits, &w, dir, e),
                der.p_min,
                der.p_max,
                1e-9,
            );
            assert!(close(obj, best, 1e-7), "seed {seed} {dir:?}: lp {obj} vs search {best}");
        }
    }
}

#[test]
fn delta_variables_equal_forward_recomputation() {
    let f = tiny_feeder();
    let set = random_set(&f, Architecture::Icnn, &[6, 5], 3);
    let req = request(&f, Direction::Upper, Weights::default());
    let inst = build_icnn_lp(&f, &set, &req, 0).unwrap();
    let (_, x) = lp_objective(&inst);
    let env = inst.envelope_values(&x);
    let input = req.intervals[0].injection(&f, &env).unwrap().to_features();
    let (loss, d) = set.predict(&input, &req.limits).unwrap();
    let got = inst.predicted(&x);
    assert!((got.v - d.v).abs() <= 1e-5);
    assert!((got.ol - d.ol).abs() <= 1e-5);
    assert!((got.rpf - d.rpf).abs() <= 1e-5);
    assert!((x[inst.loss] - loss).abs() <= 1e-5);
}

#[test]
fn exact_encoding_matches_binary_enumeration() {
    let f = tiny_feeder();
    let set = random_set(&f, Architecture::Mlp, &[3], 1);
    let req = request(&f, Direction::Upper, Weights::default());
    let inst = build_surrogate_milp(&f, &set, &req, 0).unwrap();
    assert!(inst.problem.binaries.len() <= 12, "{}", inst.problem.binaries.len());
    let s = solve_milp(&inst.problem, &BnbConfig::default(), &NoClock).unwrap();
    let (best, _) = enumerate_binaries(&inst.problem, &LpOptions::default()).unwrap();
    assert!(close(s.objective, best, 1e-7), "{} vs {best}", s.objective);
    let e = inst.envelope_values(&s.x)[0];
    let direct = surrogate_objective(&f, &set, &req.limits, &req.weights, Direction::Upper, e);
    assert!(close(s.objective, direct, 1e-6), "{} vs {direct}", s.objective);
}

#[test]
fn mlp_milp_is_no_worse_than_a_grid_search() {
    let f = tiny_feeder();
    let der = f.buses[3].der.unwrap();
    let set = random_set(&f, Architecture::Mlp, &[6, 4], 5);
    let w = Weights::default();
    let req = request(&f, Direction::Upper, w);
    let inst = build_surrogate_milp(&f, &set, &req, 0).unwrap();
    let s = solve_milp(&inst.problem, &BnbConfig::default(), &NoClock).unwrap();
    let grid = (0..=600)
        .map(|k| der.p_min + (der.p_max - der.p_min) * k as f64 / 600.0)
        .map(|e| surrogate_objective(&f, &set, &req.limits, &w, Direction::Upper, e))
        .fold(f64::INFINITY, f64::min);
    assert!(s.objective <= grid + 1e-6, "{} > {grid}", s.objective);
}

#[test]
fn without_penalties_the_envelope_is_the_forecast_limit() {
    let f = tiny_feeder();
    let set = random_set(&f, Architecture::Icnn, &[6, 5], 2);
    let w = Weights {
        w_loss: 0.0,
        w_v: 0.0,
        w_ol: 0.0,
        w_rpf: 0.0,
        ..Weights::default()
    };
    for (dir, want) in [(Direction::Upper, 400.0), (Direction::Lower, -200.0)] {
        let req = request(&f, dir, w);
        for inst in [
            build_icnn_lp(&f, &set, &req, 0).unwrap(),
            build_lindistflow(&f, &req, 0, 4).unwrap(),
        ] {
            let (obj, x) = lp_objective(&inst);
            assert!((inst.envelope_values(&x)[0] - want).abs() < 1e-7);
            assert!(obj.abs() < 1e-7);
        }
    }
}

#[test]
fn raising_the_reverse_flow_weight_never_raises_predicted_reverse_flow() {
    let f = tiny_feeder();
    let set = random_set(&f, Architecture::Icnn, &[8, 6], 4);
    let mut last = f64::INFINITY;
    for w_rpf in [0.0, 0.01, 0.1, 1.0, 10.0, 100.0, 1e3, 1e4] {
        let w = Weights {
            w_rpf,
            ..Weights::default()
        };
        let req = request(&f, Direction::Upper, w);
        let inst = build_icnn_lp(&f, &set, &req, 0).unwrap();
        let (_, x) = lp_objective(&inst);
        let env = inst.envelope_values(&x);
        let input = req.intervals[0].injection(&f, &env).unwrap().to_features();
        let (_, d) = set.predict(&input, &req.limits).unwrap();
        assert!(d.rpf <= last + 1e-6, "w_rpf {w_rpf}: {} > {last}", d.rpf);
        last = d.rpf;
    }
}

#[test]
fn objective_split_sums_to_the_solver_objective() {
    let f = tiny_feeder();
    let set = random_set(&f, Architecture::Icnn, &[6, 5], 0);
    let req = request(&f, Direction::Upper, Weights::default());
    for inst in [
        build_icnn_lp(&f, &set, &req, 0).unwrap(),
        build_lindistflow(&f, &req, 0, 6).unwrap(),
    ] {
        let (obj, x) = lp_objective(&inst);
        let j = inst.split(&x);
        assert!((j.total() - obj).abs() <= 1e-9 * obj.abs().max(1.0));
        assert!(j.j1 >= -1e-9 && j.j2 >= -1e-9 && j.j3 >= -1e-9);
    }
}

#[test]
fn lossless_lindistflow_satisfies_the_linear_flow_equations() {
    let f = tiny_feeder();
    let w = Weights {
        w_loss: 0.0,
        ..Weights::default()
    };
    let req = request(&f, Direction::Upper, w);
    let inst = build_lindistflow(&f, &req, 0, 4).unwrap();
    let (_, x) = lp_objective(&inst);
    let e = inst.envelope_values(&x)[0];
    let flows = linear_flows(&f, req.interval(0).unwrap(), &inst.envelope).unwrap();
    let line = |name: &str| {
        f.lines
            .iter()
            .position(|l| format!("{}_{}", l.from_bus, l.to_bus) == name[2..])
            .unwrap()
    };
    let bus = |name: &str| f.buses.iter().position(|b| b.id.to_string() == name[2..]).unwrap();
    let val = |name: &str| match &name[..1] {
        "P" => flows.p[line(name)].eval(&x),
        "Q" => flows.q[line(name)],
        _ => flows.v[bus(name)].eval(&x),
    };
    // flows by hand: bus 4 (DER) and bus 5 hang off bus 3
    let p34 = 80.0 - e;
    let p35 = 120.0;
    let p23 = p34 + p35;
    let p12 = p23 + 60.0;
    let q34 = 30.0 - 10.0;
    let q23 = q34 + 40.0;
    let q12 = q23 + 20.0;
    for (name, want) in [
        ("P_1_2", p12),
        ("P_2_3", p23),
        ("P_3_4", p34),
        ("P_3_5", p35),
        ("Q_1_2", q12),
    ] {
        assert!((val(name) - want).abs() < 1e-6, "{name}: {} vs {want}", val(name));
    }
    let drop = |p: f64, q: f64| 2.0 * (0.02 * p + 0.015 * q) / 1000.0;
    let v2 = 1.0 - drop(p12, q12);
    let v3 = v2 - drop(p23, q23);
    let v4 = v3 - drop(p34, q34);
    assert!((val("v_2") - v2).abs() < 1e-9);
    assert!((val("v_4") - v4).abs() < 1e-9);
}

#[test]
fn secant_error_respects_the_chord_bound() {
    let (lo, hi) = (-300.0, 500.0);
    for segments in [1, 2, 5, 16, 64, 256] {
        let sec = pwl_secants(lo, hi, segments).unwrap();
        let h: f64 = (hi - lo) / segments as f64;
        let bound = h * h / 4.0;
        for k in 0..5 {
            let s = lo + (hi - lo) * (0.13 + 0.19 * k as f64);
            let pwl = sec.iter().map(|(a, b)| a * s + b).fold(f64::NEG_INFINITY, f64::max);
            let err = pwl - s * s;
            assert!(
                err >= -1e-9 && err <= bound + 1e-9,
                "segments {segments}: err {err} bound {bound}"
            );
        }
    }
    assert!(matches!(pwl_secants(0.0, 1.0, 0), Err(DoeError::BadSegmentCount)));
    let f = tiny_feeder();
    let req = request(&f, Direction::Upper, Weights::default());
    assert!(matches!(
        build_lindistflow(&f, &req, 0, 0),
        Err(DoeError::BadSegmentCount)
    ));
}

#[test]
fn b0_is_scored_by_the_power_flow() {
    let f = tiny_feeder();
    let req = request(&f, Direction::Upper, Weights::default());
    let r = evaluate_b0(&f, &req, 0).unwrap();
    assert_eq!(r.envelope, vec![400.0]);
    assert_eq!(r.objective.j1, 0.0);
    let inj = req.intervals[0].injection(&f, &[400.0]).unwrap();
    let sol = DistFlowSolver::new(&f).unwrap().solve(&inj).unwrap();
    let d = violation_terms(&sol, &req.limits).unwrap();
    // 400 kW into 80 kW of local load pushes 320 kW back through line 3-4
    assert!(d.rpf > 200.0);
    assert_eq!(r.verified.as_ref().unwrap().deltas, d);
    assert!((r.objective.total() - (sol.loss + 1e3 * (d.v + d.ol + d.rpf))).abs() < 1e-9);
}

#[test]
fn feeder_without_ders_has_no_penalty_under_b0() {
    let mut f = tiny_feeder();
    f.buses[3].der = None;
    f.lines.iter_mut().for_each(|l| l.i_max = 100.0);
    let req = request(&f, Direction::Upper, Weights::default());
    let r = evaluate_b0(&f, &req, 0).unwrap();
    assert!(r.envelope.is_empty());
    assert_eq!(r.objective.j3, 0.0);
    let sol = DistFlowSolver::new(&f)
        .unwrap()
        .solve(&req.intervals[0].injection(&f, &[]).unwrap())
        .unwrap();
    assert_eq!(r.verified.unwrap().loss, sol.loss);
}

#[test]
fn interval_results_do_not_depend_on_order() {
    let f = tiny_feeder();
    let set = random_set(&f, Architecture::Icnn, &[6, 5], 1);
    let mut req = request(&f, Direction::Upper, Weights::default());
    req.intervals = (0..4)
        .map(|t| doe_core::doe::DoeInterval::from_feeder(&f, t, 0.4 + 0.2 * t as f64, 1.0 - 0.1 * t as f64))
        .collect();
    let mut ctx = SolveContext::new(&f, &NoClock);
    ctx.icnn = Some(&set);
    let fwd = solve_doe(&ctx, &req, Method::B1).unwrap();
    let mut rev = req.clone();
    rev.intervals.reverse();
    let mut back = solve_doe(&ctx, &rev, Method::B1).unwrap();
    back.reverse();
    assert_eq!(fwd, back);
    let mut one = req.clone();
    one.intervals.truncate(1);
    assert_eq!(solve_doe(&ctx, &one, Method::B1).unwrap()[0], fwd[0]);
    assert_eq!(solve_interval(&ctx, &req, Method::B1, 2).unwrap(), fwd[2]);
}

#[test]
fn verification_reports_the_true_power_flow() {
    let f = tiny_feeder();
    let set = random_set(&f, Architecture::Icnn, &[6, 5], 1);
    let req = request(&f, Direction::Upper, Weights::default());
    let mut ctx = SolveContext::new(&f, &NoClock);
    ctx.icnn = Some(&set);
    ctx.verify = false;
    let r = solve_interval(&ctx, &req, Method::B1, 0).unwrap();
    assert!(r.verified.is_none());
    let v = verify_with_oracle(&f, &r, &req, 0).unwrap();
    let sol = DistFlowSolver::new(&f)
        .unwrap()
        .solve(&req.intervals[0].injection(&f, &r.envelope).unwrap())
        .unwrap();
    assert_eq!(v.loss, sol.loss);
    assert_eq!(v.deltas, violation_terms(&sol, &req.limits).unwrap());
}

#[test]
fn envelopes_stay_inside_the_forecast_box() {
    let f = tiny_feeder();
    let icnn = random_set(&f, Architecture::Icnn, &[6, 5], 2);
    let mlp = random_set(&f, Architecture::Mlp, &[4], 2);
    let mut ctx = SolveContext::new(&f, &NoClock);
    ctx.icnn = Some(&icnn);
    ctx.mlp = Some(&mlp);
    for dir in [Direction::Upper, Direction::Lower] {
        let req = request(&f, dir, Weights::default());
        for m in Method::ALL {
            let r = solve_interval(&ctx, &req, m, 0).unwrap();
            assert!(r.envelope[0] >= -200.0 && r.envelope[0] <= 400.0, "{m} {dir:?}");
            assert!(r.objective.j1 >= 0.0);
        }
    }
}

#[test]
fn builders_refuse_bad_models() {
    let f = tiny_feeder();
    let req = request(&f, Direction::Upper, Weights::default());
    let mut set = random_set(&f, Architecture::Icnn, &[6, 5], 0);

    let mut unfolded = set.clone();
    unfolded.ol = Model::new(Architecture::Icnn, unfolded.ol.head, 10, &[6, 5], (0..4).collect(), 9);
    assert!(matches!(
        build_icnn_lp(&f, &unfolded, &req, 0),
        Err(DoeError::UnfoldedModel(_))
    ));

    let mut neg = set.clone();
    neg.v.layers[1].wz.as_mut().unwrap().data[0] = -0.5;
    assert!(matches!(
        build_icnn_lp(&f, &neg, &req, 0),
        Err(DoeError::NegativeZWeight { .. })
    ));

    let mut wrong = set.clone();
    std::mem::swap(&mut wrong.ol, &mut wrong.rpf);
    assert!(matches!(
        build_icnn_milp(&f, &wrong, &req, 0),
        Err(DoeError::HeadLimitMismatch(_))
    ));

    set.rpf.selection = vec![0, 1, 2, 7];
    assert!(matches!(
        build_icnn_lp(&f, &set, &req, 0),
        Err(DoeError::HeadLimitMismatch(_))
    ));

    let ctx = SolveContext::new(&f, &NoClock);
    let err = solve_interval(&ctx, &req, Method::B2, 0).unwrap_err();
    match err {
        DoeError::Interval { t: 0, source } => assert!(matches!(*source, DoeError::MissingModels(Method::B2))),
        other => panic!("{other:?}"),
    }
}

#[test]
fn requests_are_validated() {
    let f = tiny_feeder();
    let mut req = request(&f, Direction::Upper, Weights::default());
    req.weights.w_ol = -1.0;
    assert!(matches!(evaluate_b0(&f, &req, 0), Err(DoeError::InvalidRequest(_))));
    let mut req = request(&f, Direction::Upper, Weights::default());
    req.intervals[0].ders[0].p_min = 500.0;
    assert!(matches!(evaluate_b0(&f, &req, 0), Err(DoeError::InvalidRequest(_))));
    let mut req = request(&f, Direction::Upper, Weights::default());
    req.intervals[0].load_p.pop();
    assert!(matches!(
        build_lindistflow(&f, &req, 0, 4),
        Err(DoeError::InvalidRequest(_))
    ));
    let req = request(&f, Direction::Upper, Weights::default());
    assert!(matches!(evaluate_b0(&f, &req, 3), Err(DoeError::InvalidRequest(_))));
}
