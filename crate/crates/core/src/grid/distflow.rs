use alloc::vec;
use alloc::vec::Vec;

use super::{validate_radial, Feeder, GridError, InjectionVector, PowerFlowSolution, TopologyOrder};
use crate::math::{abs, sqrt};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistFlowOptions {
    /// Max equation residual at convergence, p.u.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for DistFlowOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100,
        }
    }
}

/// Max-abs residual of each DistFlow equation family, in p.u.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Residuals {
    /// Active power balance.
    pub active: f64,
    /// Reactive power balance.
    pub reactive: f64,
    /// Squared-voltage drop.
    pub voltage: f64,
    /// Squared-current definition.
    pub current: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.active.max(self.reactive).max(self.voltage).max(self.current)
    }
}

/// Backward/forward sweep solver bound to one validated feeder.
#[derive(Debug, Clone)]
pub struct DistFlowSolver<'a> {
    feeder: &'a Feeder,
    topo: TopologyOrder,
    pub options: DistFlowOptions,
}

/// Per-unit branch state used during the sweep.
struct State {
    /// |V|² per bus
    v: Vec<f64>,
    p: Vec<f64>,
    q: Vec<f64>,
    /// |I|² per line
    l: Vec<f64>,
}

impl<'a> DistFlowSolver<'a> {
    pub fn new(feeder: &'a Feeder) -> Result<Self, GridError> {
        Ok(Self {
            feeder,
            topo: validate_radial(feeder)?,
            options: DistFlowOptions::default(),
        })
    }

    pub fn with_options(mut self, options: DistFlowOptions) -> Self {
        self.options = options;
        self
    }

    pub fn topology(&self) -> &TopologyOrder {
        &self.topo
    }

    pub fn feeder(&self) -> &Feeder {
        self.feeder
    }

    pub fn solve(&self, inj: &InjectionVector) -> Result<PowerFlowSolution, GridError> {
        let f = self.feeder;
        let n = f.buses.len();
        check_len("injection p", inj.p.len(), n)?;
        check_len("injection q", inj.q.len(), n)?;
        let base = f.base_kva();
        let pl: Vec<f64> = inj.p.iter().map(|v| v / base).collect();
        let ql: Vec<f64> = inj.q.iter().map(|v| v / base).collect();
        let t = &self.topo;
        let v0 = f.slack_voltage * f.slack_voltage;
        let m = f.lines.len();
        let mut s = State {
            v: vec![v0; n],
            p: vec![0.0; m],
            q: vec![0.0; m],
            l: vec![0.0; m],
        };

        let mut residual = f64::INFINITY;
        for it in 1..=self.options.max_iter {
            // backward: flows from leaves to the root
            for &j in t.order.iter().rev() {
                let Some(k) = t.parent_line[j] else { continue };
                let line = &f.lines[k];
                let (mut ps, mut qs) = (pl[j], ql[j]);
                for c in t.child_lines(j) {
                    ps += s.p[c];
                    qs += s.q[c];
                }
                s.p[k] = ps + line.r * s.l[k];
                s.q[k] = qs + line.x * s.l[k];
                s.l[k] = (s.p[k] * s.p[k] + s.q[k] * s.q[k]) / s.v[t.line_from[k]];
            }
            // forward: voltages from the root down
            for &j in &t.order {
                let Some(k) = t.parent_line[j] else { continue };
                let line = &f.lines[k];
                let i = t.line_from[k];
                let vj =
                    s.v[i] - 2.0 * (line.r * s.p[k] + line.x * s.q[k]) + (line.r * line.r + line.x * line.x) * s.l[k];
                if !(vj > 0.0) {
                    return Err(GridError::NegativeVoltageSquare {
                        bus: f.buses[j].id,
                        value: vj,
                    });
                }
                s.v[j] = vj;
            }
            residual = pu_residuals(f, t, &s, &pl, &ql).max();
            if !residual.is_finite() {
                return Err(GridError::NonConvergence {
                    iterations: it,
                    residual,
                });
            }
            if residual <= self.options.tol {
                return Ok(to_physical(f, s, it, residual));
            }
        }
        Err(GridError::NonConvergence {
            iterations: self.options.max_iter,
            residual,
        })
    }

    /// Residuals of a solution against an injection, p.u.
    pub fn residuals(&self, sol: &PowerFlowSolution, inj: &InjectionVector) -> Result<Residuals, GridError> {
        let f = self.feeder;
        let n = f.buses.len();
        let m = f.lines.len();
        check_len("injection p", inj.p.len(), n)?;
        check_len("injection q", inj.q.len(), n)?;
        check_len("solution v", sol.v.len(), n)?;
        check_len("solution i", sol.i.len(), m)?;
        check_len("solution p_flow", sol.p_flow.len(), m)?;
        check_len("solution q_flow", sol.q_flow.len(), m)?;
        let base = f.base_kva();
        let ib = f.base_current();
        let s = State {
            v: sol.v.iter().map(|v| v * v).collect(),
            p: sol.p_flow.iter().map(|v| v / base).collect(),
            q: sol.q_flow.iter().map(|v| v / base).collect(),
            l: sol.i.iter().map(|i| (i / ib) * (i / ib)).collect(),
        };
        let pl: Vec<f64> = inj.p.iter().map(|v| v / base).collect();
        let ql: Vec<f64> = inj.q.iter().map(|v| v / base).collect();
        Ok(pu_residuals(f, &self.topo, &s, &pl, &ql))
    }
}

/// Solves DistFlow on `feeder`, validating topology first.
pub fn solve_distflow(
    feeder: &Feeder,
    inj: &InjectionVector,
    options: DistFlowOptions,
) -> Result<PowerFlowSolution, GridError> {
    DistFlowSolver::new(feeder)?.with_options(options).solve(inj)
}

/// Residual norms of `sol` on every DistFlow equation family, p.u.
pub fn residuals(feeder: &Feeder, sol: &PowerFlowSolution, inj: &InjectionVector) -> Result<Residuals, GridError> {
    DistFlowSolver::new(feeder)?.residuals(sol, inj)
}

fn check_len(what: &'static str, got: usize, expected: usize) -> Result<(), GridError> {
    if got == expected {
        Ok(())
    } else {
        Err(GridError::DimensionMismatch { what, got, expected })
    }
}

fn pu_residuals(f: &Feeder, t: &TopologyOrder, s: &State, pl: &[f64], ql: &[f64]) -> Residuals {
    let mut r = Residuals::default();
    for (k, line) in f.lines.iter().enumerate() {
        let (i, j) = (t.line_from[k], t.line_to[k]);
        let (mut ps, mut qs) = (pl[j], ql[j]);
        for c in t.child_lines(j) {
            ps += s.p[c];
            qs += s.q[c];
        }
        let ra = abs(s.p[k] - ps - line.r * s.l[k]);
        let rq = abs(s.q[k] - qs - line.x * s.l[k]);
        let rv =
            abs(s.v[j] - s.v[i] + 2.0 * (line.r * s.p[k] + line.x * s.q[k])
                - (line.r * line.r + line.x * line.x) * s.l[k]);
        let rc = abs(s.l[k] * s.v[i] - (s.p[k] * s.p[k] + s.q[k] * s.q[k]));
        r.active = r.active.max(ra);
        r.reactive = r.reactive.max(rq);
        r.voltage = r.voltage.max(rv);
        r.current = r.current.max(rc);
    }
    r
}

fn to_physical(f: &Feeder, s: State, iterations: usize, residual: f64) -> PowerFlowSolution {
    let base = f.base_kva();
    let ib = f.base_current();
    let loss = f.lines.iter().zip(&s.l).map(|(line, l)| line.r * l).sum::<f64>() * base;
    PowerFlowSolution {
        v: s.v.iter().map(|v| sqrt(*v)).collect(),
        i: s.l.iter().map(|l| sqrt(*l) * ib).collect(),
        p_flow: s.p.iter().map(|p| p * base).collect(),
        q_flow: s.q.iter().map(|q| q * base).collect(),
        loss,
        iterations,
        residual,
    }
}
