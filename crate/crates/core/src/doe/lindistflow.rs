use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use alloc::string::String;

use super::{add_envelope_vars, DoeError, DoeInstance, DoeInterval, DoeRequest};
use crate::grid::{validate_radial, Feeder};
use crate::lp::{LinExpr, LpProblem, Relation};
use crate::math::abs;
use crate::milp::MilpProblem;

/// Chords of `s²` over `[lo, hi]` split into `segments` equal pieces, as
/// `(slope, intercept)`. Their pointwise maximum is the piecewise-linear
/// interpolant, which overestimates `s²` by at most `(h/2)²` with
/// `h = (hi − lo)/segments`.
pub fn pwl_secants(lo: f64, hi: f64, segments: usize) -> Result<Vec<(f64, f64)>, DoeError> {
    if segments == 0 {
        return Err(DoeError::BadSegmentCount);
    }
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(DoeError::InvalidRequest(format!("bad secant range [{lo}, {hi}]")));
    }
    if hi - lo <= 1e-12 * (1.0 + abs(hi)) {
        return Ok(vec![(2.0 * lo, -lo * lo)]);
    }
    let h = (hi - lo) / segments as f64;
    Ok((0..segments)
        .map(|k| {
            let a = lo + h * k as f64;
            let b = a + h;
            // line through (a, a²) and (b, b²)
            (a + b, -a * b)
        })
        .collect())
}

/// Linearized branch flows and squared voltages as affine expressions in the
/// envelope variables. Flows are in kW/kVar, squared voltages in p.u.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFlows {
    /// Active flow of each line, indexed like `Feeder::lines`.
    pub p: Vec<LinExpr>,
    /// Reactive flow of each line; DER reactive output is fixed, so constant.
    pub q: Vec<f64>,
    /// Squared voltage of each bus, indexed like `Feeder::buses`.
    pub v: Vec<LinExpr>,
}

/// Solves the linear flow equations of interval `iv` symbolically:
///
/// ```text
/// P_ij = p_j + Σ_k P_jk,   Q_ij = q_j + Σ_k Q_jk
/// v_j  = v_i − 2(r_ij P_ij + x_ij Q_ij) / S_base
/// ```
///
/// with `p_j = load_j − envelope_j` at DER buses. `env` holds the envelope
/// variable of each DER of `iv`.
pub fn linear_flows(feeder: &Feeder, iv: &DoeInterval, env: &[usize]) -> Result<LinearFlows, DoeError> {
    let topo = validate_radial(feeder)?;
    let der_idx = iv.der_indices(feeder)?;
    if env.len() != der_idx.len() {
        return Err(DoeError::InvalidRequest(format!(
            "{} envelope variables for {} DERs",
            env.len(),
            der_idx.len()
        )));
    }
    let n = feeder.buses.len();
    let m = feeder.lines.len();
    let mut sub_p: Vec<LinExpr> = iv.load_p.iter().map(|&c| LinExpr::constant(c)).collect();
    let mut sub_q = iv.load_q.clone();
    for ((&b, d), &e) in der_idx.iter().zip(&iv.ders).zip(env) {
        sub_p[b].terms.push((e, -1.0));
        sub_q[b] -= d.q_der;
    }
    for &j in topo.order.iter().rev() {
        let mut acc = sub_p[j].clone();
        for &c in &topo.children[j] {
            acc.constant += sub_p[c].constant;
            acc.terms.extend_from_slice(&sub_p[c].terms);
            sub_q[j] += sub_q[c];
        }
        acc.merge_terms();
        sub_p[j] = acc;
    }
    let mut p = vec![LinExpr::default(); m];
    let mut q = vec![0.0; m];
    for l in 0..m {
        p[l] = sub_p[topo.line_to[l]].clone();
        q[l] = sub_q[topo.line_to[l]];
    }
    let base = feeder.base_kva();
    let mut v = vec![LinExpr::default(); n];
    v[topo.slack] = LinExpr::constant(feeder.slack_voltage * feeder.slack_voltage);
    for &j in &topo.order {
        let Some(l) = topo.parent_line[j] else { continue };
        let line = &feeder.lines[l];
        let up = &v[topo.line_from[l]];
        let k = 2.0 * line.r / base;
        let mut e = LinExpr::constant(up.constant - k * p[l].constant - 2.0 * line.x * q[l] / base);
        e.terms.extend_from_slice(&up.terms);
        e.terms.extend(p[l].terms.iter().map(|&(var, a)| (var, -k * a)));
        e.merge_terms();
        v[j] = e;
    }
    Ok(LinearFlows { p, q, v })
}

/// B3: linearized branch flow with a piecewise-linear loss estimate.
///
/// Flows and voltages enter as the affine expressions of [`linear_flows`].
/// Losses are estimated as `Σ (r_ij P_ij² + x_ij Q_ij²) / S_base` through
/// secant epigraphs over each flow's range on the envelope box. The thermal
/// limit becomes `|P_ij| ≤ I^max · √3 · V_base`, measured in A through the
/// base current; voltage violations use `|V| ≈ (1 + v)/2`. Every limit is
/// soft with the request's penalty weights. Loss terms that do not depend on the
/// envelope are folded into a constant.
pub fn build_lindistflow(
    feeder: &Feeder,
    request: &DoeRequest,
    t: usize,
    pwl_segments: usize,
) -> Result<DoeInstance, DoeError> {
    if pwl_segments == 0 {
        return Err(DoeError::BadSegmentCount);
    }
    request.check(feeder)?;
    let iv = request.interval(t)?;
    let lim = &request.limits;
    let w = request.weights;
    let base = feeder.base_kva();
    let amps_per_kw = feeder.base_current() / base;
    let slack = feeder.slack_index();

    let mut lp = LpProblem::new();
    let env = add_envelope_vars(&mut lp, iv, &w, request.direction);
    let flows = linear_flows(feeder, iv, &env)?;

    // loss epigraph
    let mut secant_rows = Vec::new();
    let mut loss_fixed = 0.0;
    for (l, line) in feeder.lines.iter().enumerate() {
        let tag = line_tag(feeder, l);
        let q = flows.q[l];
        loss_fixed += line.x * q * q / base;
        let pe = &flows.p[l];
        if line.r == 0.0 {
            continue;
        }
        if pe.terms.is_empty() {
            loss_fixed += line.r * pe.constant * pe.constant / base;
            continue;
        }
        let (lo, hi) = box_range(&lp, pe);
        secant_rows.push((tag, pe.clone(), line.r, pwl_secants(lo, hi, pwl_segments)?));
    }
    let loss = lp.add_var("loss", 0.0, f64::INFINITY, w.w_loss);
    let mut loss_terms = vec![(loss, 1.0)];
    for (tag, pe, r, secants) in secant_rows {
        let e = lp.add_var(format!("lossp_{tag}"), 0.0, f64::INFINITY, 0.0);
        for (k, (slope, icpt)) in secants.into_iter().enumerate() {
            // e ≥ r·(slope·P + icpt)/S
            let c = r * slope / base;
            let mut terms = vec![(e, 1.0)];
            terms.extend(pe.terms.iter().map(|&(j, a)| (j, -c * a)));
            lp.add_row(
                format!("lossp_{tag}_{k}"),
                terms,
                Relation::Ge,
                c * pe.constant + r * icpt / base,
            );
        }
        loss_terms.push((e, -1.0));
    }
    lp.add_row("loss_sum", loss_terms, Relation::Eq, loss_fixed);

    // soft limits
    let mut v_soft = SoftSum::new(&mut lp, "delta_v", w.w_v);
    for (j, v) in flows.v.iter().enumerate() {
        if j == slack {
            continue;
        }
        // s ≥ (1 + v)/2 − V^max,  s ≥ V^min − (1 + v)/2
        let id = feeder.buses[j].id;
        let hi = v.scaled(0.5, 0.5 - lim.v_max);
        let lo = v.scaled(-0.5, lim.v_min - 0.5);
        v_soft.add(&mut lp, format!("sv_{id}"), &[hi, lo]);
    }
    let d_v = v_soft.finish(&mut lp);

    let mut ol_soft = SoftSum::new(&mut lp, "delta_ol", w.w_ol);
    let mut rpf_soft = SoftSum::new(&mut lp, "delta_rpf", w.w_rpf);
    for (l, pe) in flows.p.iter().enumerate() {
        let tag = line_tag(feeder, l);
        let hi = pe.scaled(amps_per_kw, -lim.i_max[l]);
        let lo = pe.scaled(-amps_per_kw, -lim.i_max[l]);
        ol_soft.add(&mut lp, format!("sol_{tag}"), &[hi, lo]);
        // r ≥ P^min − P
        rpf_soft.add(&mut lp, format!("srpf_{tag}"), &[pe.scaled(-1.0, lim.p_min[l])]);
    }
    let d_ol = ol_soft.finish(&mut lp);
    let d_rpf = rpf_soft.finish(&mut lp);

    Ok(DoeInstance {
        problem: MilpProblem {
            lp,
            binaries: Vec::new(),
            units: Vec::new(),
        },
        envelope: env,
        loss,
        deltas: [d_v, d_ol, d_rpf],
        weights: w,
        direction: request.direction,
        forecast: iv.forecast_limit(request.direction),
    })
}

/// Range of `e` over the variable bounds of `lp`.
fn box_range(lp: &LpProblem, e: &LinExpr) -> (f64, f64) {
    e.terms.iter().fold((e.constant, e.constant), |(lo, hi), &(j, a)| {
        let (x, y) = (a * lp.lower[j], a * lp.upper[j]);
        (lo + x.min(y), hi + x.max(y))
    })
}

/// `δ = Σ_k s_k` with one slack `s_k ≥ max(0, e_k1, e_k2, …)` per limit.
/// Constant expressions become a lower bound on the slack instead of a row.
struct SoftSum {
    delta: usize,
    name: &'static str,
    terms: Vec<(usize, f64)>,
}

impl SoftSum {
    fn new(lp: &mut LpProblem, name: &'static str, weight: f64) -> Self {
        let delta = lp.add_var(name, 0.0, f64::INFINITY, weight);
        Self {
            delta,
            name,
            terms: vec![(delta, 1.0)],
        }
    }

    fn add(&mut self, lp: &mut LpProblem, name: String, exprs: &[LinExpr]) {
        let floor = exprs
            .iter()
            .filter(|e| e.terms.is_empty())
            .fold(0.0, |m: f64, e| m.max(e.constant));
        let s = lp.add_var(name.clone(), floor, f64::INFINITY, 0.0);
        for (k, e) in exprs.iter().enumerate().filter(|(_, e)| !e.terms.is_empty()) {
            let mut terms = vec![(s, 1.0)];
            terms.extend(e.terms.iter().map(|&(j, a)| (j, -a)));
            lp.add_row(format!("{name}_{k}"), terms, Relation::Ge, e.constant);
        }
        self.terms.push((s, -1.0));
    }

    fn finish(self, lp: &mut LpProblem) -> usize {
        lp.add_row(format!("{}_sum", self.name), self.terms, Relation::Eq, 0.0);
        self.delta
    }
}

fn line_tag(feeder: &Feeder, l: usize) -> String {
    let line = &feeder.lines[l];
    format!("{}_{}", line.from_bus, line.to_bus)
}
