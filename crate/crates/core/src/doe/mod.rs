//! Dynamic operating envelope instances.
//!
//! Every interval of a [`DoeRequest`] is an independent problem: choose one
//! envelope value per DER (the export cap `p⁺` or the import floor `p⁻`)
//! that stays close to the forecast limit while penalizing network loss and
//! voltage, thermal and reverse-flow violations. The five methods differ in
//! how the network is modeled:
//!
//! | method | network model |
//! |---|---|
//! | B0 | none, envelope = forecast limit |
//! | B1 | convex surrogates, LP relaxation of the ReLUs |
//! | B2 | convex surrogates, exact big-M MILP |
//! | B3 | LinDistFlow with piecewise-linear loss |
//! | B4 | plain ReLU surrogates, exact big-M MILP |

mod lindistflow;
mod retrench;
mod solve;
mod surrogate;

pub use lindistflow::{build_lindistflow, linear_flows, pwl_secants, LinearFlows};
pub use retrench::{retrench, RetrenchPlan};
pub use solve::{evaluate_b0, solve_doe, solve_interval, verify_with_oracle, SolveContext};
pub use surrogate::{build_icnn_lp, build_icnn_milp, build_surrogate_milp, SurrogateSet};

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::grid::{BusId, Feeder, GridError, InjectionVector, Limits, ViolationTerms};
use crate::icnn::{HeadKind, IcnnError};
use crate::lp::{LpError, LpProblem};
use crate::milp::{MilpError, MilpProblem};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DoeError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("{0:?} model has unfolded normalization")]
    UnfoldedModel(HeadKind),
    #[error("{head:?} model has a negative feedforward weight ({value})")]
    NegativeZWeight { head: HeadKind, value: f64 },
    #[error("{0:?} model outputs do not match the limits")]
    HeadLimitMismatch(HeadKind),
    #[error("{0} needs trained surrogates")]
    MissingModels(Method),
    #[error("piecewise-linear loss needs at least one segment")]
    BadSegmentCount,
    #[error("solver stopped with status {0}")]
    SolverStatus(String),
    #[error("interval {t}: {source}")]
    Interval { t: usize, source: Box<DoeError> },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error(transparent)]
    Icnn(#[from] IcnnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Export cap `p⁺`, pulled toward `p_max`.
    Upper,
    /// Import floor `p⁻`, pulled toward `p_min`.
    Lower,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::Upper => "upper",
            Direction::Lower => "lower",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    B0,
    B1,
    B2,
    B3,
    B4,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::B0, Method::B1, Method::B2, Method::B3, Method::B4];

    pub fn name(self) -> &'static str {
        match self {
            Method::B0 => "B0",
            Method::B1 => "B1",
            Method::B2 => "B2",
            Method::B3 => "B3",
            Method::B4 => "B4",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name().eq_ignore_ascii_case(s))
    }

    pub fn describe(self) -> &'static str {
        match self {
            Method::B0 => "forecast limits, no optimization",
            Method::B1 => "ICNN surrogates, LP relaxation",
            Method::B2 => "ICNN surrogates, big-M MILP",
            Method::B3 => "LinDistFlow LP",
            Method::B4 => "MLP surrogates, big-M MILP",
        }
    }
}

impl core::fmt::Display for Method {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// Objective weights. Violation weights multiply p.u. (voltage), A
/// (current) and kW (reverse flow); the others multiply kW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub w_doe: f64,
    pub w_loss: f64,
    pub w_v: f64,
    pub w_ol: f64,
    pub w_rpf: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            w_doe: 1.0,
            w_loss: 1.0,
            w_v: 1e3,
            w_ol: 1e3,
            w_rpf: 1e3,
        }
    }
}

impl Weights {
    fn check(&self) -> Result<(), DoeError> {
        let all = [self.w_doe, self.w_loss, self.w_v, self.w_ol, self.w_rpf];
        if all.iter().all(|w| *w >= 0.0 && w.is_finite()) {
            Ok(())
        } else {
            Err(DoeError::InvalidRequest(
                "weights must be finite and nonnegative".into(),
            ))
        }
    }

    /// Weighted violation cost.
    pub fn penalty(&self, d: &ViolationTerms) -> f64 {
        self.w_v * d.v + self.w_ol * d.ol + self.w_rpf * d.rpf
    }
}

/// Forecast limits of one DER for one interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerForecast {
    pub bus: BusId,
    /// kW
    pub p_max: f64,
    /// kW
    pub p_min: f64,
    /// kVar
    pub q_der: f64,
}

/// Loads and DER forecasts for one interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoeInterval {
    pub t: usize,
    /// kW per bus, feeder order.
    pub load_p: Vec<f64>,
    /// kVar per bus, feeder order.
    pub load_q: Vec<f64>,
    pub ders: Vec<DerForecast>,
}

impl DoeInterval {
    /// Base loads scaled by `load_scale` and the feeder's own DER ratings
    /// scaled by `der_scale` (applied to `p_max` only).
    pub fn from_feeder(feeder: &Feeder, t: usize, load_scale: f64, der_scale: f64) -> Self {
        Self {
            t,
            load_p: feeder.buses.iter().map(|b| b.base_load_p * load_scale).collect(),
            load_q: feeder.buses.iter().map(|b| b.base_load_q * load_scale).collect(),
            ders: feeder
                .buses
                .iter()
                .filter_map(|b| {
                    b.der.as_ref().map(|d| DerForecast {
                        bus: b.id,
                        p_max: d.p_max * der_scale,
                        p_min: d.p_min,
                        q_der: d.q_der,
                    })
                })
                .collect(),
        }
    }

    /// Bus index of every DER, request order.
    pub fn der_indices(&self, feeder: &Feeder) -> Result<Vec<usize>, DoeError> {
        self.ders
            .iter()
            .map(|d| {
                feeder
                    .bus_index(d.bus)
                    .ok_or_else(|| DoeError::InvalidRequest(alloc::format!("unknown DER bus {}", d.bus)))
            })
            .collect()
    }

    /// Net load with every DER injecting `envelope[k]`.
    pub fn injection(&self, feeder: &Feeder, envelope: &[f64]) -> Result<InjectionVector, DoeError> {
        let idx = self.der_indices(feeder)?;
        let mut inj = InjectionVector {
            p: self.load_p.clone(),
            q: self.load_q.clone(),
        };
        for ((&b, d), &e) in idx.iter().zip(&self.ders).zip(envelope) {
            inj.p[b] -= e;
            inj.q[b] -= d.q_der;
        }
        Ok(inj)
    }

    /// Forecast limit in `dir` for every DER.
    pub fn forecast_limit(&self, dir: Direction) -> Vec<f64> {
        self.ders
            .iter()
            .map(|d| match dir {
                Direction::Upper => d.p_max,
                Direction::Lower => d.p_min,
            })
            .collect()
    }

    fn check(&self, feeder: &Feeder) -> Result<(), DoeError> {
        let n = feeder.buses.len();
        if self.load_p.len() != n || self.load_q.len() != n {
            return Err(DoeError::InvalidRequest(alloc::format!(
                "interval {}: load vectors must have {n} entries",
                self.t
            )));
        }
        if self.load_p.iter().chain(&self.load_q).any(|v| !v.is_finite()) {
            return Err(DoeError::InvalidRequest(alloc::format!(
                "interval {}: non-finite load",
                self.t
            )));
        }
        let idx = self.der_indices(feeder)?;
        let mut seen = idx.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != idx.len() {
            return Err(DoeError::InvalidRequest(alloc::format!(
                "interval {}: two DERs on one bus",
                self.t
            )));
        }
        if idx.contains(&feeder.slack_index()) {
            return Err(DoeError::InvalidRequest("DER on the slack bus".into()));
        }
        for d in &self.ders {
            if !(d.p_min <= d.p_max) || !d.p_min.is_finite() || !d.p_max.is_finite() || !d.q_der.is_finite() {
                return Err(DoeError::InvalidRequest(alloc::format!(
                    "interval {}: DER at bus {} needs finite p_min <= p_max",
                    self.t,
                    d.bus
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoeRequest {
    pub intervals: Vec<DoeInterval>,
    pub limits: Limits,
    pub weights: Weights,
    pub direction: Direction,
}

impl DoeRequest {
    /// Interval at position `t`.
    pub fn interval(&self, t: usize) -> Result<&DoeInterval, DoeError> {
        self.intervals
            .get(t)
            .ok_or_else(|| DoeError::InvalidRequest(alloc::format!("no interval at position {t}")))
    }

    pub fn check(&self, feeder: &Feeder) -> Result<(), DoeError> {
        self.limits.check(feeder.lines.len())?;
        self.weights.check()?;
        for iv in &self.intervals {
            iv.check(feeder)?;
        }
        Ok(())
    }
}

/// `J = J1 + J2 + J3`: envelope deviation, loss, weighted violations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSplit {
    pub j1: f64,
    pub j2: f64,
    pub j3: f64,
}

impl ObjectiveSplit {
    pub fn total(&self) -> f64 {
        self.j1 + self.j2 + self.j3
    }
}

/// Ground truth for an envelope: exact power flow with every DER at its
/// envelope value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verified {
    pub deltas: ViolationTerms,
    /// kW
    pub loss: f64,
    pub objective: ObjectiveSplit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoeResult {
    pub method: Method,
    pub direction: Direction,
    pub t: usize,
    pub der_buses: Vec<BusId>,
    /// kW per DER, request order.
    pub envelope: Vec<f64>,
    /// As modeled by the method.
    pub objective: ObjectiveSplit,
    pub predicted: ViolationTerms,
    /// kW, as modeled by the method.
    pub predicted_loss: f64,
    pub verified: Option<Verified>,
    /// Seconds spent building and solving.
    pub wall_time: f64,
    pub num_vars: usize,
    pub num_rows: usize,
    pub num_binaries: usize,
    pub lp_iterations: usize,
    pub nodes: usize,
    /// Relative optimality gap (0 for LPs).
    pub gap: f64,
    /// True when a node or time limit stopped the search.
    pub limit_reached: bool,
}

/// An assembled instance. The LP methods leave `binaries` empty.
#[derive(Debug, Clone, PartialEq)]
pub struct DoeInstance {
    pub problem: MilpProblem,
    /// Envelope variable per DER, request order.
    pub envelope: Vec<usize>,
    /// Modeled loss (kW).
    pub loss: usize,
    /// Modeled `δ_v`, `δ_ol`, `δ_rpf`.
    pub deltas: [usize; 3],
    pub weights: Weights,
    pub direction: Direction,
    /// Forecast limit per DER in the optimized direction.
    pub forecast: Vec<f64>,
}

impl DoeInstance {
    pub fn lp(&self) -> &LpProblem {
        &self.problem.lp
    }

    /// Objective split at primal point `x`.
    pub fn split(&self, x: &[f64]) -> ObjectiveSplit {
        let w = &self.weights;
        let dev: f64 = self
            .envelope
            .iter()
            .zip(&self.forecast)
            .map(|(&v, &f)| match self.direction {
                Direction::Upper => f - x[v],
                Direction::Lower => x[v] - f,
            })
            .sum();
        ObjectiveSplit {
            j1: w.w_doe * dev,
            j2: w.w_loss * x[self.loss],
            j3: w.penalty(&self.predicted(x)),
        }
    }

    pub fn predicted(&self, x: &[f64]) -> ViolationTerms {
        ViolationTerms {
            v: x[self.deltas[0]],
            ol: x[self.deltas[1]],
            rpf: x[self.deltas[2]],
        }
    }

    pub fn envelope_values(&self, x: &[f64]) -> Vec<f64> {
        self.envelope.iter().map(|&v| x[v]).collect()
    }
}

/// Adds one envelope variable per DER with the deviation cost
/// `w_doe·(p_max − p⁺)` or `w_doe·(p⁻ − p_min)`, written without absolute
/// values since the bounds fix its sign.
fn add_envelope_vars(lp: &mut LpProblem, iv: &DoeInterval, w: &Weights, dir: Direction) -> Vec<usize> {
    iv.ders
        .iter()
        .map(|d| {
            let (cost, offset) = match dir {
                Direction::Upper => (-w.w_doe, w.w_doe * d.p_max),
                Direction::Lower => (w.w_doe, -w.w_doe * d.p_min),
            };
            lp.offset += offset;
            lp.add_var(alloc::format!("env_{}", d.bus), d.p_min, d.p_max, cost)
        })
        .collect()
}
