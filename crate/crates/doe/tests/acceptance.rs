//! Acceptance suite on the bundled 33-bus feeder. Trains the surrogates once
//! and prints one PASS/FAIL line per criterion.

use std::process::ExitCode;
use std::time::Instant;

use doe::bench::{run_methods, SolverSetup};
use doe::dataset::generate_parallel;
use doe::feeder_file::bundled_feeder;
use doe::scenario::{random_requests, stress_day};
use doe::training::{train_surrogates, HeadReport, TrainSettings};
use doe_core::doe::{retrench, Direction, DoeRequest, DoeResult, Method, RetrenchPlan, SurrogateSet};
use doe_core::grid::{residuals, DistFlowSolver, Feeder};
use doe_core::icnn::{exact_inference_lp_all, mse_gradient, Architecture, HeadKind, Model};
use doe_core::lp::{LpOptions, LpProblem, Relation};
use doe_core::milp::{solve_milp, BnbConfig, MilpProblem};
use doe_core::oracles::{enumerate_binaries, newton_power_flow};
use doe_core::snapshot::SamplingSpec;
use doe_core::{Matrix, NoClock};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SAMPLES: usize = 20_000;
const SEED: u64 = 7;

struct Outcome {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
    seconds: f64,
}

struct Fixture {
    feeder: Feeder,
    spec: SamplingSpec,
    icnn: SurrogateSet,
    icnn_raw: SurrogateSet,
    mlp: SurrogateSet,
    reports: Vec<HeadReport>,
    icnn_train_seconds: f64,
}

fn fixture() -> Fixture {
    let feeder = bundled_feeder();
    let spec = SamplingSpec::desk(&feeder, SEED);
    let data = generate_parallel(&feeder, &spec, SAMPLES).expect("dataset");
    let mut settings = TrainSettings::default();
    settings.config.seed = SEED;
    let start = Instant::now();
    let (icnn_raw, mut reports) = train_surrogates(&feeder, &data, Architecture::Icnn, &settings).expect("ICNN");
    let icnn_train_seconds = start.elapsed().as_secs_f64();
    let (mlp, mlp_reports) = train_surrogates(&feeder, &data, Architecture::Mlp, &settings).expect("MLP");
    reports.extend(mlp_reports);
    Fixture {
        icnn: icnn_raw.clone().folded().expect("fold"),
        icnn_raw,
        mlp: mlp.folded().expect("fold"),
        feeder,
        spec,
        reports,
        icnn_train_seconds,
    }
}

fn setup(fx: &Fixture) -> SolverSetup<'_> {
    let mut s = SolverSetup::new(&fx.feeder);
    s.icnn = Some(&fx.icnn);
    s.mlp = Some(&fx.mlp);
    s
}

fn draws(fx: &Fixture, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| fx.spec.draw(&fx.feeder, &mut rng).to_features())
        .collect()
}

fn tightness(fx: &Fixture) -> (bool, String) {
    let mut s = setup(fx);
    s.verify = false;
    let requests = random_requests(&fx.feeder, 24, 11);
    let (mut worst_j, mut worst_e) = (0.0_f64, 0.0_f64);
    let mut failures = 0;
    for req in &requests {
        match (s.solve(req, Method::B1, 0), s.solve(req, Method::B2, 0)) {
            (Ok(a), Ok(b)) => {
                let (ja, jb) = (a.objective.total(), b.objective.total());
                worst_j = worst_j.max((jb - ja).abs() / ja.abs().max(1.0));
                for (x, y) in a.envelope.iter().zip(&b.envelope) {
                    worst_e = worst_e.max((x - y).abs());
                }
            }
            _ => failures += 1,
        }
    }
    (
        failures == 0 && worst_j <= 1e-4 && worst_e <= 0.1,
        format!(
            "{} instances, worst |dJ|/max(1,|J|) = {worst_j:.2e} (<= 1e-4), worst envelope gap = {worst_e:.4} kW (<= 0.1), {failures} solve failures",
            requests.len()
        ),
    )
}

fn exact_inference(fx: &Fixture) -> (bool, String) {
    let xs = draws(fx, 100, 21);
    let mut worst = 0.0_f64;
    let mut errors = 0;
    for m in fx.icnn.models() {
        for x in &xs {
            let fw = m.forward(x).unwrap();
            match exact_inference_lp_all(m, x) {
                Ok(lp) => {
                    for (a, b) in lp.iter().zip(&fw) {
                        worst = worst.max((a - b).abs());
                    }
                }
                Err(_) => errors += 1,
            }
        }
    }
    (
        errors == 0 && worst <= 1e-6,
        format!("4 heads x 100 inputs, worst |LP - forward| = {worst:.2e} (<= 1e-6), {errors} LP errors"),
    )
}

fn convexity(fx: &Fixture) -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut counts = Vec::new();
    let mut worst = f64::NEG_INFINITY;
    for m in fx.icnn.models() {
        let mut bad = 0;
        for _ in 0..1000 {
            let a = fx.spec.draw(&fx.feeder, &mut rng).to_features();
            let b = fx.spec.draw(&fx.feeder, &mut rng).to_features();
            let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
            let (fa, fb, fm) = (m.forward(&a).unwrap(), m.forward(&b).unwrap(), m.forward(&mid).unwrap());
            let excess = (0..fm.len())
                .map(|o| fm[o] - 0.5 * (fa[o] + fb[o]))
                .fold(f64::NEG_INFINITY, f64::max);
            worst = worst.max(excess);
            if excess > 1e-8 {
                bad += 1;
            }
        }
        counts.push(format!("{}={bad}", m.head.name()));
    }
    let total: usize = counts
        .iter()
        .map(|c| c.split('=').nth(1).unwrap().parse::<usize>().unwrap())
        .sum();
    (
        total == 0,
        format!(
            "1000 midpoints per head, violations beyond 1e-8: {}; largest f(mid) - mean = {worst:.2e}",
            counts.join(" ")
        ),
    )
}

fn power_flow(fx: &Fixture) -> (bool, String) {
    let solver = DistFlowSolver::new(&fx.feeder).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let (mut res, mut dv) = (0.0_f64, 0.0_f64);
    let mut failures = 0;
    for _ in 0..20 {
        let inj = fx.spec.draw(&fx.feeder, &mut rng);
        let sol = solver.solve(&inj).unwrap();
        res = res.max(residuals(&fx.feeder, &sol, &inj).unwrap().max());
        match newton_power_flow(&fx.feeder, &inj) {
            Some(nt) => {
                for (a, b) in sol.v.iter().zip(&nt.v) {
                    dv = dv.max((a - b).abs());
                }
            }
            None => failures += 1,
        }
    }
    (
        failures == 0 && res <= 1e-8 && dv <= 1e-6,
        format!("20 injections, max residual = {res:.2e} p.u. (<= 1e-8), max |V - V_newton| = {dv:.2e} p.u. (<= 1e-6)"),
    )
}

fn accuracy(fx: &Fixture) -> (bool, String) {
    let mut pass = fx.icnn_train_seconds < 1800.0;
    let mut parts = Vec::new();
    for r in fx.reports.iter().filter(|r| r.arch == Architecture::Icnn) {
        let limit = if r.head == HeadKind::Ol { 0.02 } else { 0.005 };
        pass &= r.nmae <= limit;
        parts.push(format!("{}={:.2e} (<= {limit})", r.head.name(), r.nmae));
    }
    let mlp: Vec<String> = fx
        .reports
        .iter()
        .filter(|r| r.arch == Architecture::Mlp)
        .map(|r| format!("{}={:.2e}", r.head.name(), r.nmae))
        .collect();
    (
        pass,
        format!(
            "ICNN held-out NMAE {}; training {:.0} s (< 1800); MLP for reference {}",
            parts.join(" "),
            fx.icnn_train_seconds,
            mlp.join(" ")
        ),
    )
}

/// Largest element-wise violation of a verified envelope, as
/// `(voltage p.u., current / I_max, reverse flow / |P_min|)`.
fn element_violations(fx: &Fixture, req: &DoeRequest, r: &DoeResult, pos: usize) -> [f64; 3] {
    let iv = &req.intervals[pos];
    let inj = iv.injection(&fx.feeder, &r.envelope).unwrap();
    let sol = DistFlowSolver::new(&fx.feeder).unwrap().solve(&inj).unwrap();
    let l = &req.limits;
    let v = sol
        .v
        .iter()
        .map(|&v| (v - l.v_max).max(0.0) + (l.v_min - v).max(0.0))
        .fold(0.0, f64::max);
    let i = sol
        .i
        .iter()
        .zip(&l.i_max)
        .map(|(&i, &m)| (i - m).max(0.0) / m)
        .fold(0.0, f64::max);
    let p = sol
        .p_flow
        .iter()
        .zip(&l.p_min)
        .map(|(&p, &m)| (m - p).max(0.0) / m.abs())
        .fold(0.0, f64::max);
    [v, i, p]
}

fn safety(fx: &Fixture) -> (bool, String) {
    let s = setup(fx);
    let mut pass = true;
    let mut parts = Vec::new();
    for dir in [Direction::Upper, Direction::Lower] {
        let req = stress_day(&fx.feeder, dir, 96);
        let (rows, st) = run_methods(&s, &req, &[Method::B0, Method::B1], false);
        if st.iter().any(|x| !x.ok()) {
            pass = false;
            parts.push(format!("{}: solve failures", dir.name()));
            continue;
        }
        let b0_j3: f64 = rows
            .iter()
            .filter(|r| r.method == Method::B0)
            .map(|r| r.verified.as_ref().unwrap().objective.j3)
            .sum();
        let b1: Vec<&DoeResult> = rows.iter().filter(|r| r.method == Method::B1).collect();
        let surrogate_j3 = b1.iter().map(|r| r.objective.j3).fold(0.0, f64::max);
        let mut worst = [0.0_f64; 3];
        let mut summed = [0.0_f64; 3];
        for (pos, r) in b1.iter().enumerate() {
            let e = element_violations(fx, &req, r, pos);
            let d = r.verified.as_ref().unwrap().deltas;
            for k in 0..3 {
                worst[k] = worst[k].max(e[k]);
            }
            summed[0] = summed[0].max(d.v);
            summed[1] = summed[1].max(d.ol);
            summed[2] = summed[2].max(d.rpf);
        }
        let ok = b0_j3 > 0.0 && surrogate_j3 <= 1e-6 && worst[0] <= 0.005 && worst[1] <= 0.01 && worst[2] <= 0.01;
        pass &= ok;
        parts.push(format!(
            "{}: B0 verified J3 = {b0_j3:.1} (> 0), B1 surrogate J3 max = {surrogate_j3:.1e}, B1 verified worst V = {:.2e} p.u. (<= 0.005), I = {:.2}% of I_max (<= 1%), reverse flow = {:.2}% of |P_min| (<= 1%); per-interval sums: dV {:.2e} p.u., dI {:.3} A, dP {:.3} kW",
            dir.name(),
            worst[0],
            100.0 * worst[1],
            100.0 * worst[2],
            summed[0],
            summed[1],
            summed[2],
        ));
    }
    (pass, parts.join("; "))
}

fn gradient(fx: &Fixture) -> (bool, String) {
    let mut model: Model = fx.icnn_raw.v.clone();
    let xs = draws(fx, 64, 51);
    let n = fx.feeder.buses.len();
    let solver = DistFlowSolver::new(&fx.feeder).unwrap();
    let mut x = Matrix::zeros(xs.len(), 2 * n);
    let mut y = Matrix::zeros(xs.len(), model.output_dim());
    for (r, raw) in xs.iter().enumerate() {
        let inj = doe_core::grid::InjectionVector::from_features(raw);
        let sol = solver.solve(&inj).unwrap();
        let target: Vec<f64> = model
            .selection
            .iter()
            .map(|&b| sol.v[b])
            .chain(model.selection.iter().map(|&b| -sol.v[b]))
            .collect();
        model.normalization.normalize_x(raw, x.row_mut(r));
        model.normalization.normalize_y(&target, y.row_mut(r));
    }
    let rows: Vec<usize> = (0..xs.len()).collect();
    let (_, grad) = mse_gradient(&model, &x, &y, &rows);
    let base = model.params();
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let mut worst = 0.0_f64;
    let h = 1e-6;
    for _ in 0..10 {
        let k = rng.gen_range(0..base.len());
        let mut p = base.clone();
        p[k] = base[k] + h;
        model.set_params(&p);
        let up = doe_core::icnn::mse(&model, &x, &y, &rows);
        p[k] = base[k] - h;
        model.set_params(&p);
        let down = doe_core::icnn::mse(&model, &x, &y, &rows);
        let fd = (up - down) / (2.0 * h);
        let rel = (grad[k] - fd).abs() / grad[k].abs().max(fd.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    model.set_params(&base);
    (
        worst <= 1e-4,
        format!("10 sampled parameters of the trained voltage head, worst relative error = {worst:.2e} (<= 1e-4)"),
    )
}

fn timing(fx: &Fixture) -> (bool, String) {
    let mut s = setup(fx);
    s.verify = false;
    s.bnb.time_limit = Some(10.0);
    let req = stress_day(&fx.feeder, Direction::Upper, 96);
    let methods = [Method::B1, Method::B3, Method::B2, Method::B4];
    let (rows, st) = run_methods(&s, &req, &methods, false);
    let failures: usize = st.iter().map(|x| x.failures.len()).sum();
    let mean = |m: Method| {
        let t: Vec<f64> = rows.iter().filter(|r| r.method == m).map(|r| r.wall_time).collect();
        t.iter().sum::<f64>() / t.len().max(1) as f64
    };
    let [b1, b3, b2, b4] = methods.map(mean);
    let b4_limited = rows
        .iter()
        .filter(|r| r.method == Method::B4 && r.limit_reached)
        .count();
    let b4_ok = (b4 > b2 && b4 > b3 && b4 > b1) || b4_limited > 0;
    (
        failures == 0 && b1 < b3 && b3 < b2 && b2 >= 2.0 * b1 && b4_ok,
        format!(
            "96 intervals, mean time B1 = {:.2} ms, B3 = {:.2} ms, B2 = {:.2} ms (B2/B1 = {:.1}, >= 2), B4 = {:.1} ms with {b4_limited} limit-stopped; {failures} solve failures",
            1e3 * b1,
            1e3 * b3,
            1e3 * b2,
            b2 / b1,
            1e3 * b4
        ),
    )
}

fn random_milp(rng: &mut ChaCha8Rng) -> MilpProblem {
    let nb = rng.gen_range(4..=8);
    let mut lp = LpProblem::new();
    let bins: Vec<usize> = (0..nb)
        .map(|k| lp.add_var(format!("b{k}"), 0.0, 1.0, rng.gen_range(-5.0..5.0)))
        .collect();
    let conts: Vec<usize> = (0..3)
        .map(|k| lp.add_var(format!("x{k}"), -4.0, 4.0, rng.gen_range(-2.0..2.0)))
        .collect();
    for r in 0..5 {
        let coeffs: Vec<(usize, f64)> = bins
            .iter()
            .chain(&conts)
            .map(|&j| (j, rng.gen_range(-3.0..3.0)))
            .collect();
        let rhs = rng.gen_range(-2.0..6.0);
        lp.add_row(format!("r{r}"), coeffs, Relation::Le, rhs);
    }
    MilpProblem {
        lp,
        binaries: bins,
        units: vec![],
    }
}

fn milp(_: &Fixture) -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let cfg = BnbConfig {
        abs_gap: 0.0,
        rel_gap: 0.0,
        ..BnbConfig::default()
    };
    let mut worst = 0.0_f64;
    let mut mismatched = 0;
    let mut infeasible = 0;
    for _ in 0..10 {
        let p = random_milp(&mut rng);
        let bb = solve_milp(&p, &cfg, &NoClock).unwrap();
        match enumerate_binaries(&p, &LpOptions::default()) {
            Some((best, _)) => {
                let d = (bb.objective - best).abs();
                worst = worst.max(d);
                if d > 1e-9 * best.abs().max(1.0) {
                    mismatched += 1;
                }
            }
            None => {
                infeasible += 1;
                if bb.status != doe_core::milp::MilpStatus::Infeasible {
                    mismatched += 1;
                }
            }
        }
    }
    (
        mismatched == 0,
        format!("10 instances with 4 to 8 binaries ({infeasible} infeasible), worst |B&B - enumeration| = {worst:.1e}"),
    )
}

fn retrenchment(fx: &Fixture) -> (bool, String) {
    let plan = retrench(&fx.feeder).unwrap();
    let small = fx.icnn.restrict(&plan).unwrap();
    let mut full = setup(fx);
    full.verify = false;
    let mut cut = full.clone();
    cut.icnn = Some(&small);
    let mut worst = 0.0_f64;
    let mut fewer = true;
    let mut sizes = (0, 0);
    let mut failures = 0;
    for dir in [Direction::Upper, Direction::Lower] {
        let req = stress_day(&fx.feeder, dir, 96);
        let (a, sa) = run_methods(&full, &req, &[Method::B1], false);
        let (b, sb) = run_methods(&cut, &req, &[Method::B1], false);
        failures += sa[0].failures.len() + sb[0].failures.len();
        for (x, y) in a.iter().zip(&b) {
            for (p, q) in x.envelope.iter().zip(&y.envelope) {
                worst = worst.max((p - q).abs());
            }
            fewer &= y.num_vars < x.num_vars;
            sizes = (x.num_vars, y.num_vars);
        }
    }
    (
        failures == 0 && fewer && worst <= 1.0,
        format!(
            "192 intervals, worst envelope difference = {worst:.4} kW (<= 1), LP variables {} -> {} ({} of {} outputs kept)",
            sizes.0,
            sizes.1,
            plan.size(),
            RetrenchPlan::full(&fx.feeder).size()
        ),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let fx = fixture();
    println!(
        "fixture: {SAMPLES} snapshots, ICNN and MLP surrogates trained in {:.0} s",
        start.elapsed().as_secs_f64()
    );
    type Check = fn(&Fixture) -> (bool, String);
    let checks: [(&str, Check, f64); 10] = [
        ("LP relaxation tightness", tightness, 600.0),
        ("LP-exact inference", exact_inference, 60.0),
        ("convexity", convexity, f64::INFINITY),
        ("power-flow oracle", power_flow, 60.0),
        ("surrogate accuracy", accuracy, f64::INFINITY),
        ("stress-day safety", safety, f64::INFINITY),
        ("gradient check", gradient, f64::INFINITY),
        ("timing ordering", timing, f64::INFINITY),
        ("MILP correctness", milp, f64::INFINITY),
        ("retrenchment consistency", retrenchment, f64::INFINITY),
    ];
    let mut outcomes = Vec::new();
    for (k, (name, check, budget)) in checks.into_iter().enumerate() {
        let t = Instant::now();
        let (mut pass, mut detail) = check(&fx);
        let seconds = t.elapsed().as_secs_f64();
        if seconds > budget {
            pass = false;
            detail.push_str(&format!("; took {seconds:.0} s, budget {budget:.0} s"));
        }
        let o = Outcome {
            id: k + 1,
            name,
            pass,
            detail,
            seconds,
        };
        println!(
            "{} {:>2} {}: {} [{:.1} s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.id,
            o.name,
            o.detail,
            o.seconds
        );
        outcomes.push(o);
    }
    let failed = outcomes.iter().filter(|o| !o.pass).count();
    println!(
        "acceptance: {} passed, {failed} failed, {:.0} s total",
        outcomes.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
