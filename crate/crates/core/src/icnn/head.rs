use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{IcnnError, Model};
use crate::grid::{Feeder, Limits};
use crate::math::{abs, relu, Matrix};
use crate::snapshot::SnapshotSet;

/// Which physical quantity a surrogate learns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    /// Total active loss, kW.
    Loss,
    /// Bus voltage magnitudes stacked as `[V; −V]`, p.u.
    V,
    /// Line current magnitudes, A.
    Ol,
    /// Negated line active flows `−P`, kW.
    Rpf,
}

impl HeadKind {
    pub const ALL: [HeadKind; 4] = [HeadKind::Loss, HeadKind::V, HeadKind::Ol, HeadKind::Rpf];

    pub fn name(self) -> &'static str {
        match self {
            HeadKind::Loss => "loss",
            HeadKind::V => "v",
            HeadKind::Ol => "ol",
            HeadKind::Rpf => "rpf",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    /// Output count for `selected` buses or lines.
    pub fn output_dim(self, selected: usize) -> usize {
        match self {
            HeadKind::Loss => 1,
            HeadKind::V => 2 * selected,
            HeadKind::Ol | HeadKind::Rpf => selected,
        }
    }

    /// Training targets in output order.
    pub fn targets(self, set: &SnapshotSet, selection: &[usize]) -> Matrix {
        let n = set.len();
        let mut y = Matrix::zeros(n, self.output_dim(selection.len()));
        for r in 0..n {
            let row = y.row_mut(r);
            match self {
                HeadKind::Loss => row[0] = set.loss[r],
                HeadKind::V => {
                    let m = selection.len();
                    for (k, &b) in selection.iter().enumerate() {
                        let v = set.v.get(r, b);
                        row[k] = v;
                        row[k + m] = -v;
                    }
                }
                HeadKind::Ol => {
                    for (k, &l) in selection.iter().enumerate() {
                        row[k] = set.i.get(r, l);
                    }
                }
                HeadKind::Rpf => {
                    for (k, &l) in selection.iter().enumerate() {
                        row[k] = -set.p_flow.get(r, l);
                    }
                }
            }
        }
        y
    }

    /// NMAE normalizer: nominal voltage, rated power, or rated current.
    pub fn normalizer(self, feeder: &Feeder) -> f64 {
        match self {
            HeadKind::V => 1.0,
            HeadKind::Loss | HeadKind::Rpf => feeder.rated_power_kva,
            HeadKind::Ol => feeder.rated_current_a,
        }
    }
}

/// Converts surrogate outputs into a violation score `1ᵀ max(y + ε, 0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationHead {
    pub kind: HeadKind,
    pub eps: Vec<f64>,
    /// Same meaning as [`Model::selection`].
    pub selection: Vec<usize>,
}

impl ViolationHead {
    /// `ε` for the given limits: `[−V^max; V^min]`, `−I^max`, `P^min`, or 0.
    pub fn new(kind: HeadKind, limits: &Limits, selection: Vec<usize>) -> Self {
        let eps = match kind {
            HeadKind::Loss => alloc::vec![0.0],
            HeadKind::V => selection
                .iter()
                .map(|_| -limits.v_max)
                .chain(selection.iter().map(|_| limits.v_min))
                .collect(),
            HeadKind::Ol => selection.iter().map(|&l| -limits.i_max[l]).collect(),
            HeadKind::Rpf => selection.iter().map(|&l| limits.p_min[l]).collect(),
        };
        Self { kind, eps, selection }
    }

    /// Head for `model` under `limits`.
    pub fn for_model(model: &Model, limits: &Limits) -> Self {
        Self::new(model.head, limits, model.selection.clone())
    }

    pub fn len(&self) -> usize {
        self.eps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps.is_empty()
    }

    pub fn violation(&self, y: &[f64]) -> Result<f64, IcnnError> {
        if y.len() != self.eps.len() {
            return Err(IcnnError::DimensionMismatch {
                what: "head output length",
                got: y.len(),
                expected: self.eps.len(),
            });
        }
        Ok(y.iter().zip(&self.eps).map(|(y, e)| relu(y + e)).sum())
    }

    /// Checks that `model` emits what this head expects.
    pub fn matches(&self, model: &Model) -> bool {
        model.head == self.kind && model.selection == self.selection && model.output_dim() == self.eps.len()
    }
}

/// Mean absolute error over all rows and outputs divided by `normalizer`.
pub fn nmae(model: &Model, x: &Matrix, y: &Matrix, normalizer: f64) -> Result<f64, IcnnError> {
    if !(normalizer > 0.0) {
        return Err(IcnnError::InvalidNormalizer(normalizer));
    }
    if x.rows == 0 {
        return Err(IcnnError::EmptyTestSet);
    }
    if y.rows != x.rows || y.cols != model.output_dim() {
        return Err(IcnnError::DataHeadMismatch("target shape"));
    }
    let mut total = 0.0;
    for r in 0..x.rows {
        let pred = model.forward(x.row(r))?;
        total += pred.iter().zip(y.row(r)).map(|(a, b)| abs(a - b)).sum::<f64>();
    }
    Ok(total / (x.rows * y.cols) as f64 / normalizer)
}
