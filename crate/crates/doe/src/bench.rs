//! Running several methods over the same request.

use doe_core::doe::{solve_interval, DoeRequest, DoeResult, Method, SolveContext, SurrogateSet};
use doe_core::grid::Feeder;
use doe_core::milp::BnbConfig;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::InstantClock;

/// Everything but the clock of a [`SolveContext`], shareable across threads.
#[derive(Debug, Clone)]
pub struct SolverSetup<'a> {
    pub feeder: &'a Feeder,
    pub icnn: Option<&'a SurrogateSet>,
    pub mlp: Option<&'a SurrogateSet>,
    pub bnb: BnbConfig,
    pub pwl_segments: usize,
    pub verify: bool,
}

impl<'a> SolverSetup<'a> {
    pub fn new(feeder: &'a Feeder) -> Self {
        Self {
            feeder,
            icnn: None,
            mlp: None,
            bnb: BnbConfig::default(),
            pwl_segments: 8,
            verify: true,
        }
    }

    pub fn context<'c>(&self, clock: &'c InstantClock) -> SolveContext<'c>
    where
        'a: 'c,
    {
        let mut ctx = SolveContext::new(self.feeder, clock);
        ctx.icnn = self.icnn;
        ctx.mlp = self.mlp;
        ctx.bnb = self.bnb;
        ctx.pwl_segments = self.pwl_segments;
        ctx.verify = self.verify;
        ctx
    }

    /// One interval with a fresh clock.
    pub fn solve(&self, request: &DoeRequest, method: Method, t: usize) -> Result<DoeResult, String> {
        let clock = InstantClock::new();
        solve_interval(&self.context(&clock), request, method, t).map_err(|e| e.to_string())
    }
}

/// Outcome of one method across the request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodStatus {
    pub method: Method,
    pub solved: usize,
    /// `(interval, message)` for every failed interval.
    pub failures: Vec<(usize, String)>,
}

impl MethodStatus {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Solves every interval with every method. Failed intervals are recorded
/// and skipped; rows come back grouped by method, intervals in order.
pub fn run_methods(
    setup: &SolverSetup<'_>,
    request: &DoeRequest,
    methods: &[Method],
    parallel: bool,
) -> (Vec<DoeResult>, Vec<MethodStatus>) {
    let mut rows = Vec::new();
    let mut statuses = Vec::new();
    let n = request.intervals.len();
    for &method in methods {
        let outcomes: Vec<Result<DoeResult, String>> = if parallel {
            (0..n)
                .into_par_iter()
                .map(|t| setup.solve(request, method, t))
                .collect()
        } else {
            (0..n).map(|t| setup.solve(request, method, t)).collect()
        };
        let mut status = MethodStatus {
            method,
            solved: 0,
            failures: Vec::new(),
        };
        for (t, o) in outcomes.into_iter().enumerate() {
            match o {
                Ok(r) => {
                    status.solved += 1;
                    rows.push(r);
                }
                Err(e) => status.failures.push((request.intervals[t].t, e)),
            }
        }
        statuses.push(status);
    }
    (rows, statuses)
}
