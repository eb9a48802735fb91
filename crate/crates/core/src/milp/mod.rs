//! Mixed-integer programming over ReLU networks.
//!
//! [`bound_propagate`] gives finite preactivation intervals over an input
//! box, [`encode_relu_bigm`] turns each ReLU into a big-M disjunction, and
//! [`solve_milp`] runs LP-based branch-and-bound on the binaries.

mod bounds;
mod encode;

pub use bounds::{bound_propagate, Interval, NetworkBounds};
pub use encode::{encode_relu_bigm, encode_relu_relaxed, EncodedNetwork};

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::clock::Clock;
use crate::icnn::IcnnError;
use crate::lp::{solve_lp, LinExpr, LpError, LpOptions, LpProblem, LpSolution, LpStatus};
use crate::math::{abs, relu, round};

/// Binaries closer than this to 0 or 1 count as integral.
pub const INTEGRALITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MilpError {
    #[error("input box is unbounded")]
    UnboundedInput,
    #[error("no finite interval for a ReLU unit")]
    IntervalMissing,
    #[error("no incumbent found; best bound {bound}")]
    NoIncumbentFound { bound: f64 },
    #[error("malformed problem: {0}")]
    Malformed(&'static str),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Model(#[from] IcnnError),
}

/// One encoded hidden unit, kept for the activation-pattern heuristic.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluUnit {
    pub pre: LinExpr,
    pub z: usize,
    pub beta: Option<usize>,
    /// Preactivation interval used for the big-M constants.
    pub interval: Option<Interval>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MilpProblem {
    pub lp: LpProblem,
    pub binaries: Vec<usize>,
    /// Encoded ReLU units in evaluation order; may be empty.
    pub units: Vec<ReluUnit>,
}

impl MilpProblem {
    pub fn check(&self) -> Result<(), MilpError> {
        self.lp.validate()?;
        let n = self.lp.num_vars();
        for &b in &self.binaries {
            if b >= n {
                return Err(MilpError::Malformed("binary index out of range"));
            }
            if self.lp.lower[b] < 0.0 || self.lp.upper[b] > 1.0 {
                return Err(MilpError::Malformed("binary bounds outside [0, 1]"));
            }
        }
        for u in &self.units {
            if let (Some(_), Some(iv)) = (u.beta, u.interval) {
                if !(iv.lo.is_finite() && iv.hi.is_finite() && iv.lo <= 0.0 && iv.hi >= 0.0) {
                    return Err(MilpError::Malformed("big-M interval must be finite and straddle 0"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeSelection {
    BestBound,
    DepthFirst,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BnbConfig {
    pub node_selection: NodeSelection,
    pub abs_gap: f64,
    pub rel_gap: f64,
    /// Seconds, measured by the clock passed to [`solve_milp`].
    pub time_limit: Option<f64>,
    pub node_limit: usize,
    /// Run the activation-pattern heuristic every this many nodes (0 = off).
    pub heuristic_every: usize,
    pub lp: LpOptions,
}

impl Default for BnbConfig {
    fn default() -> Self {
        Self {
            node_selection: NodeSelection::BestBound,
            abs_gap: 1e-6,
            rel_gap: 1e-6,
            time_limit: None,
            node_limit: 100_000,
            heuristic_every: 10,
            lp: LpOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MilpStatus {
    /// Gap target met.
    Optimal,
    Infeasible,
    NodeLimit,
    TimeLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpSolution {
    pub status: MilpStatus,
    /// Incumbent; binaries exactly 0 or 1.
    pub x: Vec<f64>,
    pub objective: f64,
    /// Lower bound on the optimum.
    pub bound: f64,
    /// `(objective − bound) / max(1, |objective|)`.
    pub gap: f64,
    pub nodes: usize,
    pub lp_iterations: usize,
    pub wall_time: f64,
}

struct Node {
    bound: f64,
    depth: usize,
    id: usize,
    fix: Vec<(usize, f64)>,
}

impl PartialEq for Node {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Node {
    /// Max-heap order: smallest bound first, then deepest, then oldest.
    fn cmp(&self, o: &Self) -> Ordering {
        o.bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&o.depth))
            .then(o.id.cmp(&self.id))
    }
}

struct Search<'a> {
    p: &'a MilpProblem,
    cfg: &'a BnbConfig,
    incumbent: Option<(f64, Vec<f64>)>,
    lp_iterations: usize,
}

impl Search<'_> {
    fn solve_with(&mut self, fix: &[(usize, f64)]) -> Result<LpSolution, MilpError> {
        let mut lp = self.p.lp.clone();
        for &(j, v) in fix {
            lp.lower[j] = v;
            lp.upper[j] = v;
        }
        let s = solve_lp(&lp, &self.cfg.lp)?;
        self.lp_iterations += s.iterations;
        Ok(s)
    }

    fn cutoff(&self) -> f64 {
        self.incumbent.as_ref().map_or(f64::INFINITY, |(v, _)| *v)
    }

    fn gap_closed(&self, bound: f64) -> bool {
        let inc = self.cutoff();
        inc - bound <= self.cfg.abs_gap || (inc - bound) / inc.abs().max(1.0) <= self.cfg.rel_gap
    }

    /// Fixes every binary at `values`, re-solves, and keeps the result when
    /// it improves the incumbent.
    fn try_assignment(&mut self, values: impl Iterator<Item = (usize, f64)>) -> Result<(), MilpError> {
        let fix: Vec<(usize, f64)> = values.collect();
        let s = self.solve_with(&fix)?;
        if s.status == LpStatus::Optimal && s.objective < self.cutoff() {
            let mut x = s.x;
            for &(j, v) in &fix {
                x[j] = v;
            }
            self.incumbent = Some((s.objective, x));
        }
        Ok(())
    }

    /// Evaluates the encoded network at the relaxation's inputs and fixes
    /// each binary to the resulting activation pattern.
    fn pattern_heuristic(&mut self, x: &[f64]) -> Result<(), MilpError> {
        let mut vals = x.to_vec();
        let mut fix = Vec::with_capacity(self.p.binaries.len());
        for u in &self.p.units {
            let a = u.pre.eval(&vals);
            vals[u.z] = relu(a);
            if let Some(b) = u.beta {
                fix.push((b, if a > 0.0 { 1.0 } else { 0.0 }));
            }
        }
        if fix.len() != self.p.binaries.len() {
            return Ok(());
        }
        self.try_assignment(fix.into_iter())
    }
}

/// Branch-and-bound over the binaries of `p`, most-fractional branching.
/// Incumbents come from integral node relaxations (binaries rounded, fixed
/// and re-solved) and from the activation-pattern heuristic.
pub fn solve_milp(p: &MilpProblem, cfg: &BnbConfig, clock: &dyn Clock) -> Result<MilpSolution, MilpError> {
    p.check()?;
    let t0 = clock.seconds();
    let mut s = Search {
        p,
        cfg,
        incumbent: None,
        lp_iterations: 0,
    };
    let mut open = BinaryHeap::new();
    let mut stack: Vec<Node> = Vec::new();
    let root = Node {
        bound: f64::NEG_INFINITY,
        depth: 0,
        id: 0,
        fix: Vec::new(),
    };
    match cfg.node_selection {
        NodeSelection::BestBound => open.push(root),
        NodeSelection::DepthFirst => stack.push(root),
    }
    let mut next_id = 1;
    let mut nodes = 0;
    let mut status = MilpStatus::Optimal;
    let mut pruned_bound = f64::INFINITY;

    loop {
        let node = match cfg.node_selection {
            NodeSelection::BestBound => open.pop(),
            NodeSelection::DepthFirst => stack.pop(),
        };
        let Some(node) = node else { break };
        if node.bound >= s.cutoff() || (s.incumbent.is_some() && s.gap_closed(node.bound)) {
            pruned_bound = pruned_bound.min(node.bound);
            if cfg.node_selection == NodeSelection::BestBound {
                // every remaining node is at least as bad
                open.clear();
                break;
            }
            continue;
        }
        if nodes >= cfg.node_limit {
            status = MilpStatus::NodeLimit;
            push_back(cfg, &mut open, &mut stack, node);
            break;
        }
        if cfg.time_limit.is_some_and(|t| clock.seconds() - t0 >= t) {
            status = MilpStatus::TimeLimit;
            push_back(cfg, &mut open, &mut stack, node);
            break;
        }
        nodes += 1;

        let sol = s.solve_with(&node.fix)?;
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => return Err(MilpError::Malformed("relaxation is unbounded")),
            LpStatus::IterLimit => {
                return Err(MilpError::Lp(LpError::NumericalBreakdown {
                    iterations: sol.iterations,
                    reason: "iteration limit in node relaxation",
                }))
            }
        }
        let bound = sol.objective.max(node.bound);
        if bound >= s.cutoff() {
            continue;
        }

        let mut branch: Option<(usize, f64)> = None;
        let mut best_frac = INTEGRALITY_TOL;
        for &b in &p.binaries {
            let v = sol.x[b];
            let frac = abs(v - round(v));
            if frac > best_frac {
                best_frac = frac;
                branch = Some((b, v));
            }
        }
        let Some((b, v)) = branch else {
            s.try_assignment(p.binaries.iter().map(|&b| (b, round(sol.x[b]).clamp(0.0, 1.0))))?;
            continue;
        };
        if !p.units.is_empty() && cfg.heuristic_every > 0 && (nodes - 1) % cfg.heuristic_every == 0 {
            s.pattern_heuristic(&sol.x)?;
            if s.gap_closed(bound) {
                pruned_bound = pruned_bound.min(bound);
                continue;
            }
        }
        // the child nearer the relaxed value is explored first
        let first = if v >= 0.5 { 1.0 } else { 0.0 };
        for val in [1.0 - first, first] {
            let mut fix = node.fix.clone();
            fix.push((b, val));
            let child = Node {
                bound,
                depth: node.depth + 1,
                id: next_id,
                fix,
            };
            next_id += 1;
            push_back(cfg, &mut open, &mut stack, child);
        }
    }

    let open_bound = open
        .iter()
        .chain(stack.iter())
        .map(|n| n.bound)
        .fold(f64::INFINITY, f64::min);
    let wall_time = clock.seconds() - t0;
    let Some((objective, x)) = s.incumbent else {
        if status == MilpStatus::Optimal {
            return Ok(MilpSolution {
                status: MilpStatus::Infeasible,
                x: Vec::new(),
                objective: f64::INFINITY,
                bound: f64::INFINITY,
                gap: 0.0,
                nodes,
                lp_iterations: s.lp_iterations,
                wall_time,
            });
        }
        return Err(MilpError::NoIncumbentFound {
            bound: open_bound.min(pruned_bound),
        });
    };
    let bound = open_bound.min(pruned_bound).min(objective);
    Ok(MilpSolution {
        status,
        gap: (objective - bound) / objective.abs().max(1.0),
        x,
        objective,
        bound,
        nodes,
        lp_iterations: s.lp_iterations,
        wall_time,
    })
}

fn push_back(cfg: &BnbConfig, open: &mut BinaryHeap<Node>, stack: &mut Vec<Node>, node: Node) {
    match cfg.node_selection {
        NodeSelection::BestBound => open.push(node),
        NodeSelection::DepthFirst => stack.push(node),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::Relation;
    use crate::NoClock;

    fn knapsack() -> MilpProblem {
        // max 5a + 4b + 3c + 7d + 2e  s.t. 2a + 3b + c + 4d + e ≤ 6
        let mut lp = LpProblem::new();
        let v = [5.0, 4.0, 3.0, 7.0, 2.0];
        let w = [2.0, 3.0, 1.0, 4.0, 1.0];
        let vars: Vec<usize> = (0..5)
            .map(|i| lp.add_var(alloc::format!("x{i}"), 0.0, 1.0, -v[i]))
            .collect();
        lp.add_row(
            "cap",
            vars.iter().zip(w).map(|(&j, w)| (j, w)).collect(),
            Relation::Le,
            6.0,
        );
        MilpProblem {
            lp,
            binaries: vars,
            units: Vec::new(),
        }
    }

    fn enumerate(v: &[f64], w: &[f64], cap: f64) -> f64 {
        let mut best: f64 = 0.0;
        for mask in 0u32..(1 << v.len()) {
            let (mut val, mut wt) = (0.0, 0.0);
            for i in 0..v.len() {
                if mask & (1 << i) != 0 {
                    val += v[i];
                    wt += w[i];
                }
            }
            if wt <= cap {
                best = best.max(val);
            }
        }
        -best
    }

    #[test]
    fn knapsack_matches_enumeration() {
        let p = knapsack();
        let expect = enumerate(&[5.0, 4.0, 3.0, 7.0, 2.0], &[2.0, 3.0, 1.0, 4.0, 1.0], 6.0);
        for sel in [NodeSelection::BestBound, NodeSelection::DepthFirst] {
            let cfg = BnbConfig {
                node_selection: sel,
                ..BnbConfig::default()
            };
            let s = solve_milp(&p, &cfg, &NoClock).unwrap();
            assert_eq!(s.status, MilpStatus::Optimal);
            assert!((s.objective - expect).abs() < 1e-9, "{} vs {expect}", s.objective);
            assert!(s.bound <= s.objective + 1e-9);
            assert!(s.x.iter().all(|&x| x == 0.0 || x == 1.0));
        }
    }

    #[test]
    fn presolved_binaries_solve_at_root() {
        let mut p = knapsack();
        for &b in &p.binaries.clone() {
            p.lp.lower[b] = 1.0;
        }
        p.lp.constraints.clear();
        let s = solve_milp(&p, &BnbConfig::default(), &NoClock).unwrap();
        assert_eq!(s.nodes, 1);
        assert_eq!(s.gap, 0.0);
        assert!((s.objective + 21.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_problem() {
        let mut p = knapsack();
        p.lp.add_row(
            "too_much",
            p.binaries.iter().map(|&b| (b, 1.0)).collect(),
            Relation::Ge,
            6.0,
        );
        let s = solve_milp(&p, &BnbConfig::default(), &NoClock).unwrap();
        assert_eq!(s.status, MilpStatus::Infeasible);
    }

    #[test]
    fn node_limit_without_incumbent() {
        let p = knapsack();
        let cfg = BnbConfig {
            node_limit: 0,
            ..BnbConfig::default()
        };
        assert!(matches!(
            solve_milp(&p, &cfg, &NoClock),
            Err(MilpError::NoIncumbentFound { .. })
        ));
    }

    #[test]
    fn binary_bounds_are_checked() {
        let mut p = knapsack();
        p.lp.upper[0] = 2.0;
        assert!(matches!(p.check(), Err(MilpError::Malformed(_))));
    }
}
