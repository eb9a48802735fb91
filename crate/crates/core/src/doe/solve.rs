use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use super::{
    build_icnn_lp, build_icnn_milp, build_lindistflow, build_surrogate_milp, DoeError, DoeInstance, DoeRequest,
    DoeResult, Method, ObjectiveSplit, SurrogateSet, Verified,
};
use crate::clock::Clock;
use crate::grid::{violation_terms, DistFlowSolver, Feeder};
use crate::lp::solve_lp;
use crate::milp::{solve_milp, BnbConfig, MilpStatus};

/// Everything a method needs beyond the request itself.
pub struct SolveContext<'a> {
    pub feeder: &'a Feeder,
    /// Convex surrogates for B1 and B2, normalization folded.
    pub icnn: Option<&'a SurrogateSet>,
    /// Plain ReLU surrogates for B4, normalization folded.
    pub mlp: Option<&'a SurrogateSet>,
    pub bnb: BnbConfig,
    pub pwl_segments: usize,
    /// Run the power-flow oracle on every envelope.
    pub verify: bool,
    pub clock: &'a dyn Clock,
}

impl<'a> SolveContext<'a> {
    pub fn new(feeder: &'a Feeder, clock: &'a dyn Clock) -> Self {
        Self {
            feeder,
            icnn: None,
            mlp: None,
            bnb: BnbConfig::default(),
            pwl_segments: 8,
            verify: true,
            clock,
        }
    }

    fn models(&self, method: Method) -> Result<&'a SurrogateSet, DoeError> {
        match method {
            Method::B1 | Method::B2 => self.icnn,
            Method::B4 => self.mlp,
            _ => None,
        }
        .ok_or(DoeError::MissingModels(method))
    }

    /// Assembles the instance `method` solves for interval position `t`.
    pub fn build(&self, request: &DoeRequest, method: Method, t: usize) -> Result<DoeInstance, DoeError> {
        match method {
            Method::B0 => Err(DoeError::InvalidRequest("B0 has no optimization instance".into())),
            Method::B1 => build_icnn_lp(self.feeder, self.models(method)?, request, t),
            Method::B2 => build_icnn_milp(self.feeder, self.models(method)?, request, t),
            Method::B3 => build_lindistflow(self.feeder, request, t, self.pwl_segments),
            Method::B4 => build_surrogate_milp(self.feeder, self.models(method)?, request, t),
        }
    }
}

/// Every interval of `request`, in order. Errors carry the interval index.
pub fn solve_doe(ctx: &SolveContext<'_>, request: &DoeRequest, method: Method) -> Result<Vec<DoeResult>, DoeError> {
    request.check(ctx.feeder)?;
    (0..request.intervals.len())
        .map(|t| solve_interval(ctx, request, method, t))
        .collect()
}

/// One interval, addressed by position in `request.intervals`.
pub fn solve_interval(
    ctx: &SolveContext<'_>,
    request: &DoeRequest,
    method: Method,
    t: usize,
) -> Result<DoeResult, DoeError> {
    let tag = request.intervals.get(t).map_or(t, |iv| iv.t);
    solve_inner(ctx, request, method, t).map_err(|e| DoeError::Interval {
        t: tag,
        source: Box::new(e),
    })
}

fn solve_inner(ctx: &SolveContext<'_>, request: &DoeRequest, method: Method, t: usize) -> Result<DoeResult, DoeError> {
    if method == Method::B0 {
        let start = ctx.clock.seconds();
        let mut r = evaluate_b0(ctx.feeder, request, t)?;
        r.wall_time = ctx.clock.seconds() - start;
        return Ok(r);
    }
    let start = ctx.clock.seconds();
    let inst = ctx.build(request, method, t)?;
    let (mut x, iterations, nodes, gap, limit_reached) = if inst.problem.binaries.is_empty() {
        let s = solve_lp(inst.lp(), &ctx.bnb.lp)?;
        if !s.is_optimal() {
            return Err(DoeError::SolverStatus(format!("{:?}", s.status)));
        }
        (s.x, s.iterations, 0, 0.0, false)
    } else {
        let s = solve_milp(&inst.problem, &ctx.bnb, ctx.clock)?;
        let limit = match s.status {
            MilpStatus::Optimal => false,
            MilpStatus::NodeLimit | MilpStatus::TimeLimit => true,
            MilpStatus::Infeasible => return Err(DoeError::SolverStatus("Infeasible".into())),
        };
        (s.x, s.lp_iterations, s.nodes, s.gap, limit)
    };
    let wall_time = ctx.clock.seconds() - start;

    let iv = &request.intervals[t];
    for (&v, d) in inst.envelope.iter().zip(&iv.ders) {
        x[v] = x[v].clamp(d.p_min, d.p_max);
    }
    let envelope = inst.envelope_values(&x);
    let objective = inst.split(&x);
    let (predicted_loss, predicted) = match method {
        Method::B3 => (x[inst.loss], inst.predicted(&x)),
        _ => {
            let models = ctx.models(method)?;
            let input = iv.injection(ctx.feeder, &envelope)?.to_features();
            models.predict(&input, &request.limits)?
        }
    };
    let mut result = DoeResult {
        method,
        direction: request.direction,
        t: iv.t,
        der_buses: iv.ders.iter().map(|d| d.bus).collect(),
        envelope,
        objective,
        predicted,
        predicted_loss,
        verified: None,
        wall_time,
        num_vars: inst.lp().num_vars(),
        num_rows: inst.lp().num_rows(),
        num_binaries: inst.problem.binaries.len(),
        lp_iterations: iterations,
        nodes,
        gap,
        limit_reached,
    };
    if ctx.verify {
        result.verified = Some(verify_with_oracle(ctx.feeder, &result, request, t)?);
    }
    Ok(result)
}

/// B0: every DER at its forecast limit, scored by the power-flow oracle.
pub fn evaluate_b0(feeder: &Feeder, request: &DoeRequest, t: usize) -> Result<DoeResult, DoeError> {
    request.check(feeder)?;
    let iv = request.interval(t)?;
    let mut result = DoeResult {
        method: Method::B0,
        direction: request.direction,
        t: iv.t,
        der_buses: iv.ders.iter().map(|d| d.bus).collect(),
        envelope: iv.forecast_limit(request.direction),
        objective: ObjectiveSplit::default(),
        predicted: Default::default(),
        predicted_loss: 0.0,
        verified: None,
        wall_time: 0.0,
        num_vars: 0,
        num_rows: 0,
        num_binaries: 0,
        lp_iterations: 0,
        nodes: 0,
        gap: 0.0,
        limit_reached: false,
    };
    let v = verify_with_oracle(feeder, &result, request, t)?;
    result.objective = v.objective;
    result.predicted = v.deltas;
    result.predicted_loss = v.loss;
    result.verified = Some(v);
    Ok(result)
}

/// Exact power flow with every DER at its envelope value.
pub fn verify_with_oracle(
    feeder: &Feeder,
    result: &DoeResult,
    request: &DoeRequest,
    t: usize,
) -> Result<Verified, DoeError> {
    let iv = request.interval(t)?;
    if result.envelope.len() != iv.ders.len() {
        return Err(DoeError::InvalidRequest(
            "envelope length differs from DER count".into(),
        ));
    }
    let inj = iv.injection(feeder, &result.envelope)?;
    let sol = DistFlowSolver::new(feeder)?.solve(&inj)?;
    let deltas = violation_terms(&sol, &request.limits)?;
    let w = &request.weights;
    let dev: f64 = iv
        .forecast_limit(request.direction)
        .iter()
        .zip(&result.envelope)
        .map(|(f, e)| crate::math::abs(f - e))
        .sum();
    Ok(Verified {
        deltas,
        loss: sol.loss,
        objective: ObjectiveSplit {
            j1: w.w_doe * dev,
            j2: w.w_loss * sol.loss,
            j3: w.penalty(&deltas),
        },
    })
}
