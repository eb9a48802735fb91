//! Input-convex and plain ReLU networks.
//!
//! A network with `K` hidden layers computes
//!
//! ```text
//! z_1     = max(W_0^x x + b_0, 0)
//! z_{k+1} = max(W_k^z z_k + W_k^x x + b_k, 0)      k = 1..K-1
//! y       = W_K^z z_K + W_K^x x + b_K
//! ```
//!
//! With every `W_k^z ≥ 0` each output is a convex function of `x`. The
//! plain variant ([`Architecture::Mlp`]) drops the passthrough terms after
//! the first layer and leaves signs free.

mod head;
mod inference;
mod train;

pub use head::{nmae, HeadKind, ViolationHead};
pub use inference::{exact_inference_lp, exact_inference_lp_all};
pub use train::{mse, mse_gradient, train, Optimizer, TrainConfig, TrainReport};

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::lp::LpError;
use crate::math::{abs, relu, sqrt, Matrix};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IcnnError {
    #[error("{what}: got {got}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("non-finite training loss at epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("dataset does not match the head: {0}")]
    DataHeadMismatch(&'static str),
    #[error("feedforward weight {value} < 0 in layer {layer}")]
    NegativeZWeight { layer: usize, value: f64 },
    #[error("output scale {0} is not positive")]
    NegativeOutputScale(f64),
    #[error("normalization already folded")]
    AlreadyFolded,
    #[error("empty test set")]
    EmptyTestSet,
    #[error("normalizer must be positive, got {0}")]
    InvalidNormalizer(f64),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("LP solve failed: {0}")]
    SolverFailure(String),
}

impl From<LpError> for IcnnError {
    fn from(e: LpError) -> Self {
        IcnnError::SolverFailure(alloc::format!("{e}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Architecture {
    /// Passthrough at every layer, `W^z ≥ 0`.
    Icnn,
    /// Plain feedforward ReLU network.
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// From the previous hidden layer; absent on the first layer.
    pub wz: Option<Matrix>,
    /// From the network input.
    pub wx: Option<Matrix>,
    pub b: Vec<f64>,
}

impl Layer {
    pub fn width(&self) -> usize {
        self.b.len()
    }

    /// `b + W^z z + W^x x` into `out`.
    fn affine(&self, z: &[f64], x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.b);
        if let Some(wz) = &self.wz {
            wz.mul_add(z, out);
        }
        if let Some(wx) = &self.wx {
            wx.mul_add(x, out);
        }
    }
}

/// Affine maps around the network: `x̃ = (x − x_mean) / x_scale` on the way
/// in and `y = ỹ · y_scale + y_mean` on the way out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub x_mean: Vec<f64>,
    pub x_scale: Vec<f64>,
    pub y_mean: Vec<f64>,
    pub y_scale: Vec<f64>,
    /// Set once the maps have been absorbed into the weights.
    pub folded: bool,
}

impl Normalization {
    pub fn identity(input_dim: usize, output_dim: usize) -> Self {
        Self {
            x_mean: vec![0.0; input_dim],
            x_scale: vec![1.0; input_dim],
            y_mean: vec![0.0; output_dim],
            y_scale: vec![1.0; output_dim],
            folded: false,
        }
    }

    /// Column means and standard deviations. Constant columns get scale 1.
    pub fn fit(x: &Matrix, y: &Matrix) -> Self {
        let (x_mean, x_scale) = column_stats(x);
        let (y_mean, y_scale) = column_stats(y);
        Self {
            x_mean,
            x_scale,
            y_mean,
            y_scale,
            folded: false,
        }
    }

    pub fn normalize_x(&self, x: &[f64], out: &mut [f64]) {
        for j in 0..x.len() {
            out[j] = (x[j] - self.x_mean[j]) / self.x_scale[j];
        }
    }

    pub fn normalize_y(&self, y: &[f64], out: &mut [f64]) {
        for j in 0..y.len() {
            out[j] = (y[j] - self.y_mean[j]) / self.y_scale[j];
        }
    }

    fn denormalize_y(&self, y: &mut [f64]) {
        for j in 0..y.len() {
            y[j] = y[j] * self.y_scale[j] + self.y_mean[j];
        }
    }
}

fn column_stats(m: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = m.rows.max(1) as f64;
    let mut mean = vec![0.0; m.cols];
    for r in 0..m.rows {
        for (a, v) in mean.iter_mut().zip(m.row(r)) {
            *a += v;
        }
    }
    mean.iter_mut().for_each(|a| *a /= n);
    let mut var = vec![0.0; m.cols];
    for r in 0..m.rows {
        for ((a, v), mu) in var.iter_mut().zip(m.row(r)).zip(&mean) {
            *a += (v - mu) * (v - mu);
        }
    }
    let scale = var
        .iter()
        .zip(&mean)
        .map(|(v, mu)| {
            let s = sqrt(v / n);
            if s > 1e-9 * (1.0 + abs(*mu)) {
                s
            } else {
                1.0
            }
        })
        .collect();
    (mean, scale)
}

/// Where a trained model came from. Free-form except that the solver
/// refuses models whose feeder fingerprint differs from the feeder in use.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub feeder_fingerprint: String,
    pub selection_fingerprint: String,
    pub train_seed: u64,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub arch: Architecture,
    pub head: HeadKind,
    pub input_dim: usize,
    /// `K + 1` layers; the last one is the affine output layer.
    pub layers: Vec<Layer>,
    pub normalization: Normalization,
    /// Bus indices (voltage head) or line indices (current and reverse-flow
    /// heads) represented by the outputs. Empty for the loss head.
    pub selection: Vec<usize>,
    #[serde(default)]
    pub provenance: Provenance,
}

impl Model {
    /// Randomly initialized network. Passthrough and bias entries are drawn
    /// uniformly from `±1/√fan_in`; feedforward entries of the convex
    /// variant take the absolute value of the same draw.
    pub fn new(
        arch: Architecture,
        head: HeadKind,
        input_dim: usize,
        hidden: &[usize],
        selection: Vec<usize>,
        seed: u64,
    ) -> Self {
        let output_dim = head.output_dim(selection.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = 0;
        for (k, &width) in hidden.iter().chain(core::iter::once(&output_dim)).enumerate() {
            let has_x = k == 0 || arch == Architecture::Icnn;
            let fan_in = prev + if has_x { input_dim } else { 0 };
            let bound = 1.0 / sqrt(fan_in.max(1) as f64);
            let mut draw = |rows, cols, nonneg: bool| {
                let mut m = Matrix::zeros(rows, cols);
                for v in m.data.iter_mut() {
                    let w = rng.gen_range(-bound..bound);
                    *v = if nonneg { abs(w) } else { w };
                }
                m
            };
            let wz = (k > 0).then(|| draw(width, prev, arch == Architecture::Icnn));
            let wx = has_x.then(|| draw(width, input_dim, false));
            let b = (0..width).map(|_| rng.gen_range(-bound..bound)).collect();
            layers.push(Layer { wz, wx, b });
            prev = width;
        }
        Self {
            arch,
            head,
            input_dim,
            layers,
            normalization: Normalization::identity(input_dim, output_dim),
            selection,
            provenance: Provenance::default(),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Layer::width)
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1].iter().map(Layer::width).collect()
    }

    pub fn is_folded(&self) -> bool {
        self.normalization.folded
    }

    /// Checks shapes and, for the convex variant, the sign constraint.
    pub fn check(&self) -> Result<(), IcnnError> {
        if self.layers.is_empty() {
            return Err(IcnnError::DimensionMismatch {
                what: "layer count",
                got: 0,
                expected: 1,
            });
        }
        let mut prev = 0;
        for (k, l) in self.layers.iter().enumerate() {
            let w = l.width();
            match (&l.wz, k) {
                (None, 0) => {}
                (Some(m), k) if k > 0 && m.rows == w && m.cols == prev => {}
                _ => {
                    return Err(IcnnError::DimensionMismatch {
                        what: "feedforward weight shape",
                        got: k,
                        expected: prev,
                    })
                }
            }
            let needs_x = k == 0 || self.arch == Architecture::Icnn;
            match &l.wx {
                Some(m) if m.rows == w && m.cols == self.input_dim => {}
                None if !needs_x => {}
                _ => {
                    return Err(IcnnError::DimensionMismatch {
                        what: "passthrough weight shape",
                        got: k,
                        expected: self.input_dim,
                    })
                }
            }
            prev = w;
        }
        let expected = self.head.output_dim(self.selection.len());
        if self.output_dim() != expected {
            return Err(IcnnError::DimensionMismatch {
                what: "output width",
                got: self.output_dim(),
                expected,
            });
        }
        let n = &self.normalization;
        if n.x_mean.len() != self.input_dim
            || n.x_scale.len() != self.input_dim
            || n.y_mean.len() != expected
            || n.y_scale.len() != expected
        {
            return Err(IcnnError::DimensionMismatch {
                what: "normalization length",
                got: n.x_mean.len(),
                expected: self.input_dim,
            });
        }
        if self.arch == Architecture::Icnn {
            self.check_convex()?;
        }
        Ok(())
    }

    /// Smallest feedforward weight must be nonnegative.
    pub fn check_convex(&self) -> Result<(), IcnnError> {
        for (k, l) in self.layers.iter().enumerate() {
            if let Some(wz) = &l.wz {
                let m = wz.min_entry();
                if m < 0.0 {
                    return Err(IcnnError::NegativeZWeight { layer: k, value: m });
                }
            }
        }
        Ok(())
    }

    /// Smallest entry over every `W^z`, `+∞` without hidden-to-hidden links.
    pub fn min_z_weight(&self) -> f64 {
        self.layers
            .iter()
            .filter_map(|l| l.wz.as_ref())
            .map(Matrix::min_entry)
            .fold(f64::INFINITY, f64::min)
    }

    /// Evaluates the network on raw input `x`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, IcnnError> {
        if x.len() != self.input_dim {
            return Err(IcnnError::DimensionMismatch {
                what: "input length",
                got: x.len(),
                expected: self.input_dim,
            });
        }
        if self.normalization.folded {
            return Ok(self.forward_internal(x));
        }
        let mut xn = vec![0.0; x.len()];
        self.normalization.normalize_x(x, &mut xn);
        let mut y = self.forward_internal(&xn);
        self.normalization.denormalize_y(&mut y);
        Ok(y)
    }

    /// Network proper, without the normalization maps.
    pub fn forward_internal(&self, x: &[f64]) -> Vec<f64> {
        let mut z: Vec<f64> = Vec::new();
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate() {
            let mut a = vec![0.0; l.width()];
            l.affine(&z, x, &mut a);
            if k < last {
                a.iter_mut().for_each(|v| *v = relu(*v));
            }
            z = a;
        }
        z
    }

    /// Preactivations of every hidden layer for an internal-space input.
    pub fn preactivations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.layers.len() - 1);
        let mut z: Vec<f64> = Vec::new();
        for l in &self.layers[..self.layers.len() - 1] {
            let mut a = vec![0.0; l.width()];
            l.affine(&z, x, &mut a);
            z = a.iter().map(|&v| relu(v)).collect();
            out.push(a);
        }
        out
    }

    /// Clamps every negative `W^z` entry to zero. Idempotent.
    pub fn project_nonnegative(&mut self) {
        for l in &mut self.layers {
            if let Some(wz) = &mut l.wz {
                wz.data.iter_mut().for_each(|v| {
                    if *v < 0.0 {
                        *v = 0.0
                    }
                });
            }
        }
    }

    /// Absorbs the normalization maps into the weights so that the network
    /// proper consumes raw inputs and emits physical outputs.
    pub fn fold_normalization(&mut self) -> Result<(), IcnnError> {
        if self.normalization.folded {
            return Err(IcnnError::AlreadyFolded);
        }
        let n = self.normalization.clone();
        if let Some(&s) = n.y_scale.iter().find(|&&s| !(s > 0.0)) {
            return Err(IcnnError::NegativeOutputScale(s));
        }
        for l in &mut self.layers {
            if let Some(wx) = &mut l.wx {
                for r in 0..wx.rows {
                    let row = wx.row_mut(r);
                    let mut shift = 0.0;
                    for j in 0..row.len() {
                        row[j] /= n.x_scale[j];
                        shift += row[j] * n.x_mean[j];
                    }
                    l.b[r] -= shift;
                }
            }
        }
        let out = self.layers.last_mut().expect("output layer");
        for r in 0..out.width() {
            let s = n.y_scale[r];
            for m in [&mut out.wz, &mut out.wx].into_iter().flatten() {
                m.row_mut(r).iter_mut().for_each(|v| *v *= s);
            }
            out.b[r] = out.b[r] * s + n.y_mean[r];
        }
        let (ni, no) = (self.input_dim, self.output_dim());
        self.normalization = Normalization {
            folded: true,
            ..Normalization::identity(ni, no)
        };
        Ok(())
    }

    /// A copy keeping only the outputs tied to `keep` (indices into
    /// `selection`). Hidden layers are shared, so the kept outputs are
    /// unchanged.
    pub fn restrict_outputs(&self, keep: &[usize]) -> Result<Self, IcnnError> {
        let m = self.selection.len();
        if let Some(&bad) = keep.iter().find(|&&k| k >= m) {
            return Err(IcnnError::DimensionMismatch {
                what: "kept output index",
                got: bad,
                expected: m,
            });
        }
        let rows: Vec<usize> = match self.head {
            HeadKind::Loss => return Ok(self.clone()),
            HeadKind::V => keep.iter().copied().chain(keep.iter().map(|&k| k + m)).collect(),
            HeadKind::Ol | HeadKind::Rpf => keep.to_vec(),
        };
        let mut out = self.clone();
        let last = out.layers.last_mut().expect("output layer");
        let pick = |mat: &Matrix| {
            let mut res = Matrix::zeros(rows.len(), mat.cols);
            for (i, &r) in rows.iter().enumerate() {
                res.row_mut(i).copy_from_slice(mat.row(r));
            }
            res
        };
        last.wz = last.wz.as_ref().map(pick);
        last.wx = last.wx.as_ref().map(pick);
        last.b = rows.iter().map(|&r| last.b[r]).collect();
        let norm = &mut out.normalization;
        norm.y_mean = rows.iter().map(|&r| norm.y_mean[r]).collect();
        norm.y_scale = rows.iter().map(|&r| norm.y_scale[r]).collect();
        out.selection = keep.iter().map(|&k| self.selection[k]).collect();
        Ok(out)
    }

    /// Number of trainable parameters.
    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.wz.as_ref().map_or(0, |m| m.data.len()) + l.wx.as_ref().map_or(0, |m| m.data.len()) + l.b.len())
            .sum()
    }

    /// All parameters in a fixed order: per layer `W^z`, `W^x`, `b`.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            if let Some(m) = &l.wz {
                p.extend_from_slice(&m.data);
            }
            if let Some(m) = &l.wx {
                p.extend_from_slice(&m.data);
            }
            p.extend_from_slice(&l.b);
        }
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.num_params(), "parameter vector length");
        let mut o = 0;
        for l in &mut self.layers {
            for m in [&mut l.wz, &mut l.wx].into_iter().flatten() {
                let n = m.data.len();
                m.data.copy_from_slice(&p[o..o + n]);
                o += n;
            }
            let n = l.b.len();
            l.b.copy_from_slice(&p[o..o + n]);
            o += n;
        }
    }

    /// Flat indices of the `W^z` entries.
    pub fn z_weight_mask(&self) -> Vec<bool> {
        let mut mask = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            if let Some(m) = &l.wz {
                mask.extend(core::iter::repeat_n(true, m.data.len()));
            }
            if let Some(m) = &l.wx {
                mask.extend(core::iter::repeat_n(false, m.data.len()));
            }
            mask.extend(core::iter::repeat_n(false, l.b.len()));
        }
        mask
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn one_unit(w1x: f64) -> Model {
        let mut m = Model::new(Architecture::Icnn, HeadKind::Loss, 1, &[1], vec![], 0);
        m.layers[0] = Layer {
            wz: None,
            wx: Some(Matrix::from_rows(&[vec![1.0]])),
            b: vec![0.0],
        };
        m.layers[1] = Layer {
            wz: Some(Matrix::from_rows(&[vec![1.0]])),
            wx: Some(Matrix::from_rows(&[vec![w1x]])),
            b: vec![0.0],
        };
        m
    }

    #[test]
    fn relu_kills_negative_preactivation() {
        let m = one_unit(0.0);
        assert_eq!(m.forward(&[-2.0]).unwrap(), vec![0.0]);
        assert_eq!(m.forward(&[3.0]).unwrap(), vec![3.0]);
        assert!(matches!(
            m.forward(&[1.0, 2.0]),
            Err(IcnnError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn init_respects_sign_constraint_and_shapes() {
        let m = Model::new(Architecture::Icnn, HeadKind::V, 6, &[5, 4], vec![0, 2], 1);
        m.check().unwrap();
        assert_eq!(m.output_dim(), 4);
        assert!(m.min_z_weight() >= 0.0);
        let p = Model::new(Architecture::Mlp, HeadKind::Ol, 6, &[5, 4], vec![0, 2], 1);
        p.check().unwrap();
        assert!(p.layers[1].wx.is_none());
        assert!(p.min_z_weight() < 0.0);
    }

    #[test]
    fn projection_is_idempotent() {
        let mut m = Model::new(Architecture::Icnn, HeadKind::Loss, 3, &[4], vec![], 2);
        m.layers[1].wz.as_mut().unwrap().data[0] = -0.5;
        let untouched = m.layers[1].wx.clone();
        m.project_nonnegative();
        assert_eq!(m.layers[1].wz.as_ref().unwrap().data[0], 0.0);
        assert_eq!(m.layers[1].wx, untouched);
        let once = m.clone();
        m.project_nonnegative();
        assert_eq!(m, once);
    }

    #[test]
    fn params_round_trip() {
        let mut m = Model::new(Architecture::Icnn, HeadKind::Ol, 3, &[4, 2], vec![0, 1], 3);
        let p = m.params();
        assert_eq!(p.len(), m.num_params());
        assert_eq!(m.z_weight_mask().iter().filter(|&&b| b).count(), 4 * 2 + 2 * 2);
        let mut q = p.clone();
        q[0] += 1.0;
        m.set_params(&q);
        assert_eq!(m.params(), q);
    }

    #[test]
    fn fold_twice_is_an_error() {
        let mut m = Model::new(Architecture::Icnn, HeadKind::Loss, 2, &[3], vec![], 4);
        let before = m.clone();
        m.fold_normalization().unwrap();
        assert_eq!(m.layers, before.layers);
        assert_eq!(m.fold_normalization(), Err(IcnnError::AlreadyFolded));
    }

    #[test]
    fn negative_output_scale_cannot_fold() {
        let mut m = Model::new(Architecture::Icnn, HeadKind::Loss, 2, &[3], vec![], 4);
        m.normalization.y_scale[0] = -1.0;
        assert_eq!(m.fold_normalization(), Err(IcnnError::NegativeOutputScale(-1.0)));
    }

    #[test]
    fn restriction_keeps_outputs() {
        let m = Model::new(Architecture::Icnn, HeadKind::V, 3, &[4], vec![5, 6, 7], 8);
        let r = m.restrict_outputs(&[0, 2]).unwrap();
        assert_eq!(r.selection, vec![5, 7]);
        let x = [0.3, -0.2, 0.9];
        let full = m.forward(&x).unwrap();
        let part = r.forward(&x).unwrap();
        assert_eq!(part, vec![full[0], full[2], full[3], full[5]]);
    }
}
