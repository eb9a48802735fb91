//! Slow, independent reference solvers for checking the production code.
//!
//! Nothing here shares an algorithm with the code it checks: power flow is
//! solved by Newton's method on the bus-injection model instead of the
//! branch-flow sweep, LPs by enumerating basic solutions instead of
//! pivoting, and MILPs by trying every binary assignment.

use std::vec;
use std::vec::Vec;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C;

use crate::grid::{validate_radial, Feeder, InjectionVector};
use crate::lp::{solve_lp, LpOptions, LpProblem, Relation};
use crate::milp::MilpProblem;

/// Power-flow quantities in the same units as `PowerFlowSolution`.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonSolution {
    /// p.u. per bus
    pub v: Vec<f64>,
    /// A per line
    pub i: Vec<f64>,
    /// kW per line, sending end
    pub p_flow: Vec<f64>,
    /// kVar per line, sending end
    pub q_flow: Vec<f64>,
    /// kW
    pub loss: f64,
    pub iterations: usize,
}

/// Newton-Raphson on the polar bus-injection equations with a
/// finite-difference Jacobian. Returns `None` without convergence.
pub fn newton_power_flow(feeder: &Feeder, inj: &InjectionVector) -> Option<NewtonSolution> {
    let topo = validate_radial(feeder).ok()?;
    let n = feeder.buses.len();
    let base = feeder.base_kva();
    let slack = topo.slack;
    let mut y = vec![vec![C::ZERO; n]; n];
    let series: Vec<C> = feeder.lines.iter().map(|l| C::new(l.r, l.x).inv()).collect();
    for (k, ys) in series.iter().enumerate() {
        let (a, b) = (topo.line_from[k], topo.line_to[k]);
        y[a][a] += ys;
        y[b][b] += ys;
        y[a][b] -= ys;
        y[b][a] -= ys;
    }
    // injections are the negated net loads
    let s_spec: Vec<C> = (0..n).map(|j| C::new(-inj.p[j] / base, -inj.q[j] / base)).collect();
    let pq: Vec<usize> = (0..n).filter(|&j| j != slack).collect();
    let mut mag = vec![feeder.slack_voltage; n];
    let mut ang = vec![0.0; n];

    let mismatch = |mag: &[f64], ang: &[f64]| -> Vec<f64> {
        let v: Vec<C> = (0..n).map(|j| C::from_polar(mag[j], ang[j])).collect();
        let mut out = Vec::with_capacity(2 * pq.len());
        let mut im = Vec::with_capacity(pq.len());
        for &j in &pq {
            let mut cur = C::ZERO;
            for k in 0..n {
                cur += y[j][k] * v[k];
            }
            let s = v[j] * cur.conj();
            out.push(s.re - s_spec[j].re);
            im.push(s.im - s_spec[j].im);
        }
        out.extend(im);
        out
    };

    let m = pq.len();
    for it in 1..=50 {
        let f = mismatch(&mag, &ang);
        if f.iter().fold(0.0_f64, |a, v| a.max(v.abs())) < 1e-12 {
            return Some(finish(feeder, &topo, &series, &mag, &ang, it));
        }
        let mut jac = vec![vec![0.0; 2 * m]; 2 * m];
        let h = 1e-7;
        for c in 0..2 * m {
            let (mut ma, mut an) = (mag.clone(), ang.clone());
            let (mut mb, mut bn) = (mag.clone(), ang.clone());
            if c < m {
                an[pq[c]] += h;
                bn[pq[c]] -= h;
            } else {
                ma[pq[c - m]] += h;
                mb[pq[c - m]] -= h;
            }
            let fa = mismatch(&ma, &an);
            let fb = mismatch(&mb, &bn);
            for r in 0..2 * m {
                jac[r][c] = (fa[r] - fb[r]) / (2.0 * h);
            }
        }
        let dx = dense_solve(jac, f.iter().map(|v| -v).collect())?;
        for (k, &j) in pq.iter().enumerate() {
            ang[j] += dx[k];
            mag[j] += dx[k + m];
        }
        if mag.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return None;
        }
    }
    None
}

fn finish(
    feeder: &Feeder,
    topo: &crate::grid::TopologyOrder,
    series: &[C],
    mag: &[f64],
    ang: &[f64],
    iterations: usize,
) -> NewtonSolution {
    let base = feeder.base_kva();
    let ib = feeder.base_current();
    let mut out = NewtonSolution {
        v: mag.to_vec(),
        i: Vec::new(),
        p_flow: Vec::new(),
        q_flow: Vec::new(),
        loss: 0.0,
        iterations,
    };
    for (k, line) in feeder.lines.iter().enumerate() {
        let (a, b) = (topo.line_from[k], topo.line_to[k]);
        let va = C::from_polar(mag[a], ang[a]);
        let vb = C::from_polar(mag[b], ang[b]);
        let cur = (va - vb) * series[k];
        let s = va * cur.conj();
        let i2 = cur.norm_sqr();
        out.i.push(cur.norm() * ib);
        out.p_flow.push(s.re * base);
        out.q_flow.push(s.im * base);
        out.loss += line.r * i2 * base;
    }
    out
}

/// Dense solve by fully pivoted LU. `None` when (numerically) singular.
pub fn dense_solve(a: Vec<Vec<f64>>, b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let m = DMatrix::from_fn(n, n, |i, j| a[i][j]);
    let lu = m.full_piv_lu();
    let u = lu.u();
    if (0..n).any(|i| u[(i, i)].abs() < 1e-11) {
        return None;
    }
    lu.solve(&DVector::from_vec(b)).map(|x| x.iter().copied().collect())
}

/// Minimum of a small bounded LP by trying every basic solution: each
/// choice of `n` tight constraints among rows and finite bounds. Returns
/// `None` when no basic solution is feasible.
pub fn lp_vertex_enumeration(p: &LpProblem, tol: f64) -> Option<(f64, Vec<f64>)> {
    let n = p.num_vars();
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut must: Vec<usize> = Vec::new();
    for c in &p.constraints {
        let mut a = vec![0.0; n];
        for &(j, v) in &c.coeffs {
            a[j] += v;
        }
        if c.relation == Relation::Eq {
            must.push(planes.len());
        }
        planes.push((a, c.rhs));
    }
    for j in 0..n {
        for bound in [p.lower[j], p.upper[j]] {
            if bound.is_finite() {
                let mut a = vec![0.0; n];
                a[j] = 1.0;
                planes.push((a, bound));
            }
        }
    }
    let free: Vec<usize> = (0..planes.len()).filter(|i| !must.contains(i)).collect();
    if must.len() > n {
        return None;
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut pick = Vec::new();
    choose(&free, n - must.len(), 0, &mut pick, &mut |extra| {
        let rows: Vec<usize> = must.iter().chain(extra).copied().collect();
        let a: Vec<Vec<f64>> = rows.iter().map(|&r| planes[r].0.clone()).collect();
        let b: Vec<f64> = rows.iter().map(|&r| planes[r].1).collect();
        let Some(x) = dense_solve(a, b) else { return };
        if p.max_violation(&x) > tol {
            return;
        }
        let obj = p.evaluate(&x);
        if best.as_ref().is_none_or(|(o, _)| obj < *o) {
            best = Some((obj, x));
        }
    });
    best
}

fn choose(items: &[usize], k: usize, start: usize, pick: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
    if pick.len() == k {
        f(pick);
        return;
    }
    for i in start..items.len() {
        if items.len() - i < k - pick.len() {
            break;
        }
        pick.push(items[i]);
        choose(items, k, i + 1, pick, f);
        pick.pop();
    }
}

/// Minimum of a MILP by solving the LP for every binary assignment.
pub fn enumerate_binaries(p: &MilpProblem, options: &LpOptions) -> Option<(f64, Vec<f64>)> {
    let nb = p.binaries.len();
    assert!(nb <= 20, "too many binaries to enumerate");
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << nb) {
        let mut lp = p.lp.clone();
        for (k, &b) in p.binaries.iter().enumerate() {
            let v = ((mask >> k) & 1) as f64;
            lp.lower[b] = v;
            lp.upper[b] = v;
        }
        let Ok(s) = solve_lp(&lp, options) else { continue };
        if s.is_optimal() && best.as_ref().is_none_or(|(o, _)| s.objective < *o) {
            best = Some((s.objective, s.x));
        }
    }
    best
}

/// Minimum of a convex function on `[lo, hi]` by golden-section search.
pub fn minimize_convex_1d(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let g = (libm::sqrt(5.0) - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let mut best = (f(lo), lo);
    for x in [0.5 * (a + b), hi] {
        let v = f(x);
        if v < best.0 {
            best = (v, x);
        }
    }
    (best.1, best.0)
}
