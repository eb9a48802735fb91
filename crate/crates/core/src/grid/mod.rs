//! Radial feeder model and DistFlow power flow.
//!
//! All interface quantities are physical: loads in kW/kVar, currents in A,
//! voltages in p.u. The solver works internally in per-unit on the feeder's
//! base power and base voltage.

mod distflow;
mod topology;
mod violation;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use distflow::{residuals, solve_distflow, DistFlowOptions, DistFlowSolver, Residuals};
pub use topology::{validate_radial, TopologyOrder};
pub use violation::{violation_terms, ViolationTerms};

use crate::math::sqrt;

pub type BusId = u32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("feeder has no buses")]
    Empty,
    #[error("duplicate bus id {0}")]
    DuplicateBus(BusId),
    #[error("line references unknown bus {0}")]
    UnknownBus(BusId),
    #[error("slack bus {0} is not a bus of the feeder")]
    UnknownSlack(BusId),
    #[error("duplicate edge between buses {0} and {1}")]
    DuplicateEdge(BusId, BusId),
    #[error("topology contains a cycle (through bus {0})")]
    CycleDetected(BusId),
    #[error("bus {0} is not connected to the slack bus")]
    DisconnectedBus(BusId),
    #[error("invalid {what} on line {from}-{to}: {value}")]
    InvalidLine {
        from: BusId,
        to: BusId,
        what: &'static str,
        value: f64,
    },
    #[error("DER at bus {0} has p_min > p_max")]
    InvalidDer(BusId),
    #[error("invalid voltage limits [{0}, {1}]")]
    InvalidLimits(f64, f64),
    #[error("dimension mismatch: {what} has length {got}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("power flow did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("squared voltage collapsed to {value} at bus {bus}")]
    NegativeVoltageSquare { bus: BusId, value: f64 },
}

/// Distributed energy resource attached to a bus. Injections are positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Der {
    /// kW
    pub p_max: f64,
    /// kW
    pub p_min: f64,
    /// Fixed reactive injection, kVar.
    pub q_der: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: BusId,
    /// Uncontrollable active load, kW.
    pub base_load_p: f64,
    /// Uncontrollable reactive load, kVar.
    pub base_load_q: f64,
    pub der: Option<Der>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from_bus: BusId,
    pub to_bus: BusId,
    /// Series resistance, p.u.
    pub r: f64,
    /// Series reactance, p.u.
    pub x: f64,
    /// Thermal limit, A.
    pub i_max: f64,
    /// Reverse-flow floor, kW (negative: downstream-to-upstream export).
    pub p_min_reverse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoltageBand {
    pub v_min: f64,
    pub v_max: f64,
}

/// Radial distribution feeder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feeder {
    pub name: String,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub slack_bus: BusId,
    /// Fixed slack voltage magnitude, p.u.
    pub slack_voltage: f64,
    /// MVA
    pub base_power: f64,
    /// kV (line-to-line)
    pub base_voltage: f64,
    /// Substation transformer rating, kVA. Normalizer for power metrics.
    pub rated_power_kva: f64,
    /// Line rated current, A. Normalizer for current metrics.
    pub rated_current_a: f64,
    pub voltage_band: VoltageBand,
}

impl Feeder {
    /// Checks the per-element invariants that do not depend on topology.
    pub fn check(&self) -> Result<(), GridError> {
        if self.buses.is_empty() {
            return Err(GridError::Empty);
        }
        let mut ids: Vec<BusId> = self.buses.iter().map(|b| b.id).collect();
        ids.sort_unstable();
        for w in ids.windows(2) {
            if w[0] == w[1] {
                return Err(GridError::DuplicateBus(w[0]));
            }
        }
        if self.bus_index(self.slack_bus).is_none() {
            return Err(GridError::UnknownSlack(self.slack_bus));
        }
        for l in &self.lines {
            let bad = |what, value| GridError::InvalidLine {
                from: l.from_bus,
                to: l.to_bus,
                what,
                value,
            };
            if !(l.r >= 0.0) || !l.r.is_finite() {
                return Err(bad("resistance", l.r));
            }
            if !(l.x >= 0.0) || !l.x.is_finite() {
                return Err(bad("reactance", l.x));
            }
            if !(l.i_max > 0.0) {
                return Err(bad("thermal limit", l.i_max));
            }
        }
        for b in &self.buses {
            if let Some(d) = &b.der {
                if !(d.p_min <= d.p_max) {
                    return Err(GridError::InvalidDer(b.id));
                }
            }
        }
        let band = self.voltage_band;
        if !(0.0 < band.v_min && band.v_min < band.v_max) {
            return Err(GridError::InvalidLimits(band.v_min, band.v_max));
        }
        Ok(())
    }

    pub fn bus_index(&self, id: BusId) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn slack_index(&self) -> usize {
        self.bus_index(self.slack_bus).expect("slack bus present")
    }

    /// Base power in kVA.
    pub fn base_kva(&self) -> f64 {
        self.base_power * 1000.0
    }

    /// Base current in A for a balanced three-phase system.
    pub fn base_current(&self) -> f64 {
        self.base_kva() / (sqrt(3.0) * self.base_voltage)
    }

    /// Indices of buses that carry a DER, in bus order.
    pub fn der_buses(&self) -> Vec<usize> {
        self.buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.der.is_some())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn line_ids(&self) -> Vec<(BusId, BusId)> {
        self.lines.iter().map(|l| (l.from_bus, l.to_bus)).collect()
    }

    /// Default operating limits from the feeder's own ratings.
    pub fn limits(&self) -> Limits {
        Limits {
            v_min: self.voltage_band.v_min,
            v_max: self.voltage_band.v_max,
            i_max: self.lines.iter().map(|l| l.i_max).collect(),
            p_min: self.lines.iter().map(|l| l.p_min_reverse).collect(),
        }
    }

    /// Content hash over a canonical encoding of every numeric field.
    /// Independent of how the feeder was serialized.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.name.as_bytes());
        let mut put = |v: f64| h.update(v.to_le_bytes());
        put(self.slack_bus as f64);
        put(self.slack_voltage);
        put(self.base_power);
        put(self.base_voltage);
        put(self.rated_power_kva);
        put(self.rated_current_a);
        put(self.voltage_band.v_min);
        put(self.voltage_band.v_max);
        for b in &self.buses {
            put(b.id as f64);
            put(b.base_load_p);
            put(b.base_load_q);
            match &b.der {
                Some(d) => {
                    put(1.0);
                    put(d.p_max);
                    put(d.p_min);
                    put(d.q_der);
                }
                None => put(0.0),
            }
        }
        for l in &self.lines {
            put(l.from_bus as f64);
            put(l.to_bus as f64);
            put(l.r);
            put(l.x);
            put(l.i_max);
            put(l.p_min_reverse);
        }
        let digest = h.finalize();
        digest[..16].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Operating limits for one DOE instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    /// p.u.
    pub v_min: f64,
    /// p.u.
    pub v_max: f64,
    /// A, per line
    pub i_max: Vec<f64>,
    /// kW, per line
    pub p_min: Vec<f64>,
}

impl Limits {
    pub fn check(&self, n_lines: usize) -> Result<(), GridError> {
        if !(0.0 < self.v_min && self.v_min < self.v_max) {
            return Err(GridError::InvalidLimits(self.v_min, self.v_max));
        }
        for (what, got) in [("i_max", self.i_max.len()), ("p_min", self.p_min.len())] {
            if got != n_lines {
                return Err(GridError::DimensionMismatch {
                    what,
                    got,
                    expected: n_lines,
                });
            }
        }
        Ok(())
    }
}

/// Net load per bus (consumption positive), indexed like `Feeder::buses`.
/// The slack entry is ignored by the solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionVector {
    /// kW
    pub p: Vec<f64>,
    /// kVar
    pub q: Vec<f64>,
}

impl InjectionVector {
    pub fn zeros(n: usize) -> Self {
        Self {
            p: alloc::vec![0.0; n],
            q: alloc::vec![0.0; n],
        }
    }

    /// Base loads with every DER idle except for its fixed reactive setpoint.
    pub fn base_case(feeder: &Feeder) -> Self {
        Self::with_der_output(feeder, |_, _| 0.0)
    }

    /// Base loads with each DER injecting `der_p(bus_index, der)` kW.
    pub fn with_der_output(feeder: &Feeder, mut der_p: impl FnMut(usize, &Der) -> f64) -> Self {
        let mut p = Vec::with_capacity(feeder.buses.len());
        let mut q = Vec::with_capacity(feeder.buses.len());
        for (i, b) in feeder.buses.iter().enumerate() {
            let (dp, dq) = match &b.der {
                Some(d) => (der_p(i, d), d.q_der),
                None => (0.0, 0.0),
            };
            p.push(b.base_load_p - dp);
            q.push(b.base_load_q - dq);
        }
        Self { p, q }
    }

    /// `[p; q]` as one vector, the surrogate input layout.
    pub fn to_features(&self) -> Vec<f64> {
        let mut x = self.p.clone();
        x.extend_from_slice(&self.q);
        x
    }

    pub fn from_features(x: &[f64]) -> Self {
        let n = x.len() / 2;
        Self {
            p: x[..n].to_vec(),
            q: x[n..].to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }
}

/// Converged power-flow state in physical units. Line quantities follow
/// `Feeder::lines` order and are oriented upstream to downstream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowSolution {
    /// |V| per bus, p.u.
    pub v: Vec<f64>,
    /// |I| per line, A
    pub i: Vec<f64>,
    /// Sending-end active flow per line, kW
    pub p_flow: Vec<f64>,
    /// Sending-end reactive flow per line, kVar
    pub q_flow: Vec<f64>,
    /// Σ r|I|², kW
    pub loss: f64,
    pub iterations: usize,
    /// Max equation mismatch at termination, p.u.
    pub residual: f64,
}
