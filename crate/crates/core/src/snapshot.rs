//! Labeled power-flow datasets for surrogate training.
//!
//! Row `i` of a dataset is a pure function of `(feeder, spec, i)`: it draws
//! from its own ChaCha8 stream, so rows can be generated in any order or in
//! parallel and assembled by index.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::grid::{DistFlowSolver, Feeder, GridError, InjectionVector, PowerFlowSolution};
use crate::math::{round, Matrix};

/// Attempts per row before the row is given up.
pub const MAX_ATTEMPTS_PER_ROW: usize = 64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SnapshotError {
    #[error("sampling spec is invalid: {0}")]
    InvalidSpec(&'static str),
    #[error("{rejected} of {attempted} samples failed to converge")]
    TooManyRejections { rejected: usize, attempted: usize },
    #[error("split leaves an empty side ({train} train / {test} test rows)")]
    EmptySplit { train: usize, test: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn valid(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        self.lo + (self.hi - self.lo) * rng.gen::<f64>()
    }
}

/// Independent uniform sampling of every bus load and DER output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingSpec {
    /// Multiplier on `base_load_p`, per bus.
    pub load_p: Vec<Range>,
    /// Multiplier on `base_load_q`, per bus.
    pub load_q: Vec<Range>,
    /// Active injection in kW, per DER in bus order.
    pub der_p: Vec<Range>,
    pub seed: u64,
}

impl SamplingSpec {
    /// Same load multiplier range at every bus, DERs over their full range.
    pub fn uniform(feeder: &Feeder, lo: f64, hi: f64, seed: u64) -> Self {
        let n = feeder.buses.len();
        Self {
            load_p: alloc::vec![Range::new(lo, hi); n],
            load_q: alloc::vec![Range::new(lo, hi); n],
            der_p: feeder
                .buses
                .iter()
                .filter_map(|b| b.der.as_ref())
                .map(|d| Range::new(d.p_min, d.p_max))
                .collect(),
            seed,
        }
    }

    /// Default desk ranges: 0.2 to 1.2 times base load.
    pub fn desk(feeder: &Feeder, seed: u64) -> Self {
        Self::uniform(feeder, 0.2, 1.2, seed)
    }

    pub fn check(&self, feeder: &Feeder) -> Result<(), SnapshotError> {
        let n = feeder.buses.len();
        if self.load_p.len() != n || self.load_q.len() != n {
            return Err(SnapshotError::InvalidSpec("load range count differs from bus count"));
        }
        if self.der_p.len() != feeder.der_buses().len() {
            return Err(SnapshotError::InvalidSpec("DER range count differs from DER count"));
        }
        let all = self.load_p.iter().chain(&self.load_q).chain(&self.der_p);
        if !all.clone().all(Range::valid) {
            return Err(SnapshotError::InvalidSpec("range not finite or lo > hi"));
        }
        Ok(())
    }

    /// Draws the injection for one attempt from `rng`.
    pub fn draw(&self, feeder: &Feeder, rng: &mut ChaCha8Rng) -> InjectionVector {
        let n = feeder.buses.len();
        let mut p = Vec::with_capacity(n);
        let mut q = Vec::with_capacity(n);
        let mut k = 0;
        for (j, bus) in feeder.buses.iter().enumerate() {
            let mut pj = bus.base_load_p * self.load_p[j].sample(rng);
            let mut qj = bus.base_load_q * self.load_q[j].sample(rng);
            if let Some(d) = &bus.der {
                pj -= self.der_p[k].sample(rng);
                qj -= d.q_der;
                k += 1;
            }
            p.push(pj);
            q.push(qj);
        }
        InjectionVector { p, q }
    }
}

/// One labeled row.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub injection: InjectionVector,
    pub solution: PowerFlowSolution,
    /// Non-converged draws discarded before this row.
    pub rejections: usize,
}

/// Generates row `index`. Every row draws from its own stream of the seed.
pub fn generate_row(solver: &DistFlowSolver<'_>, spec: &SamplingSpec, index: usize) -> Result<Snapshot, SnapshotError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);
    let mut rejections = 0;
    for _ in 0..MAX_ATTEMPTS_PER_ROW {
        let injection = spec.draw(solver.feeder(), &mut rng);
        match solver.solve(&injection) {
            Ok(solution) => {
                return Ok(Snapshot {
                    injection,
                    solution,
                    rejections,
                })
            }
            Err(GridError::NonConvergence { .. } | GridError::NegativeVoltageSquare { .. }) => {
                rejections += 1;
            }
            Err(e) => return Err(e.into()),
        }
    }
    Err(SnapshotError::TooManyRejections {
        rejected: rejections,
        attempted: rejections,
    })
}

/// Column-blocked dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotSet {
    /// `n × 2|M|` rows of `[p; q]` net load (kW, kVar).
    pub inputs: Matrix,
    /// kW per row.
    pub loss: Vec<f64>,
    /// p.u., `n × |M|`.
    pub v: Matrix,
    /// A, `n × |E|`.
    pub i: Matrix,
    /// kW, `n × |E|`.
    pub p_flow: Matrix,
    /// kVar, `n × |E|`.
    pub q_flow: Matrix,
    pub feeder_fingerprint: String,
    pub spec: SamplingSpec,
    /// Total non-converged draws discarded during generation.
    pub rejections: usize,
}

impl SnapshotSet {
    pub fn empty(feeder: &Feeder, spec: SamplingSpec) -> Self {
        let (nb, nl) = (feeder.buses.len(), feeder.lines.len());
        Self {
            inputs: Matrix::zeros(0, 2 * nb),
            loss: Vec::new(),
            v: Matrix::zeros(0, nb),
            i: Matrix::zeros(0, nl),
            p_flow: Matrix::zeros(0, nl),
            q_flow: Matrix::zeros(0, nl),
            feeder_fingerprint: feeder.fingerprint(),
            spec,
            rejections: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.loss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loss.is_empty()
    }

    pub fn push(&mut self, s: &Snapshot) {
        push_row(&mut self.inputs, &s.injection.to_features());
        self.loss.push(s.solution.loss);
        push_row(&mut self.v, &s.solution.v);
        push_row(&mut self.i, &s.solution.i);
        push_row(&mut self.p_flow, &s.solution.p_flow);
        push_row(&mut self.q_flow, &s.solution.q_flow);
        self.rejections += s.rejections;
    }

    /// Row `r` as an injection vector.
    pub fn injection(&self, r: usize) -> InjectionVector {
        InjectionVector::from_features(self.inputs.row(r))
    }

    /// Rows `idx` in the given order.
    pub fn select(&self, idx: &[usize]) -> Self {
        let pick = |m: &Matrix| {
            let mut out = Matrix::zeros(0, m.cols);
            for &r in idx {
                push_row(&mut out, m.row(r));
            }
            out
        };
        Self {
            inputs: pick(&self.inputs),
            loss: idx.iter().map(|&r| self.loss[r]).collect(),
            v: pick(&self.v),
            i: pick(&self.i),
            p_flow: pick(&self.p_flow),
            q_flow: pick(&self.q_flow),
            feeder_fingerprint: self.feeder_fingerprint.clone(),
            spec: self.spec.clone(),
            rejections: self.rejections,
        }
    }

    /// Checks that every block has the same row count and feeder shape.
    pub fn check(&self, feeder: &Feeder) -> Result<(), GridError> {
        let n = self.len();
        let (nb, nl) = (feeder.buses.len(), feeder.lines.len());
        let blocks = [
            ("inputs", &self.inputs, 2 * nb),
            ("v", &self.v, nb),
            ("i", &self.i, nl),
            ("p_flow", &self.p_flow, nl),
            ("q_flow", &self.q_flow, nl),
        ];
        for (what, m, cols) in blocks {
            if m.rows != n {
                return Err(GridError::DimensionMismatch {
                    what,
                    got: m.rows,
                    expected: n,
                });
            }
            if m.cols != cols {
                return Err(GridError::DimensionMismatch {
                    what,
                    got: m.cols,
                    expected: cols,
                });
            }
        }
        Ok(())
    }
}

fn push_row(m: &mut Matrix, row: &[f64]) {
    debug_assert_eq!(row.len(), m.cols);
    m.data.extend_from_slice(row);
    m.rows += 1;
}

/// Sequential generation of `n` rows.
pub fn generate(feeder: &Feeder, spec: &SamplingSpec, n: usize) -> Result<SnapshotSet, SnapshotError> {
    spec.check(feeder)?;
    let solver = DistFlowSolver::new(feeder)?;
    let mut set = SnapshotSet::empty(feeder, spec.clone());
    for i in 0..n {
        set.push(&generate_row(&solver, spec, i)?);
    }
    check_rejections(set.rejections, n)?;
    Ok(set)
}

/// Fails when more than half of all attempts were rejected.
pub fn check_rejections(rejected: usize, accepted: usize) -> Result<(), SnapshotError> {
    if rejected > accepted {
        return Err(SnapshotError::TooManyRejections {
            rejected,
            attempted: rejected + accepted,
        });
    }
    Ok(())
}

/// Seeded shuffle split into `(train, test)`.
pub fn split(set: &SnapshotSet, train_fraction: f64, seed: u64) -> Result<(SnapshotSet, SnapshotSet), SnapshotError> {
    let n = set.len();
    let n_train = if train_fraction > 0.0 && train_fraction < 1.0 {
        round(train_fraction * n as f64) as usize
    } else {
        0
    };
    if n_train == 0 || n_train >= n {
        return Err(SnapshotError::EmptySplit {
            train: n_train.min(n),
            test: n - n_train.min(n),
        });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((set.select(&idx[..n_train]), set.select(&idx[n_train..])))
}
