use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Architecture, IcnnError, Model, Normalization};
use crate::math::{cholesky_solve, relu, sqrt, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Share of the training rows held out for early stopping when the
    /// caller has no separate validation set.
    pub validation_fraction: f64,
    /// Start the output layer from the least-squares fit of its
    /// unconstrained weights.
    pub least_squares_init: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 400,
            batch_size: 256,
            learning_rate: 1e-3,
            optimizer: Optimizer::Adam,
            seed: 0,
            patience: 20,
            validation_fraction: 0.1,
            least_squares_init: true,
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<(), IcnnError> {
        if self.batch_size == 0 {
            return Err(IcnnError::InvalidConfig("batch size must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(IcnnError::InvalidConfig("learning rate must be positive"));
        }
        if self.patience == 0 {
            return Err(IcnnError::InvalidConfig("patience must be positive"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(IcnnError::InvalidConfig("validation fraction must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean squared error in normalized units, per epoch.
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Validation loss before the first update.
    pub initial_val_loss: f64,
    /// Epoch whose parameters were kept (1-based, 0 = initialization).
    pub best_epoch: usize,
}

/// Trains `model` on raw-unit data. The normalization record is refitted on
/// the training rows, the loss is the mean squared error in normalized
/// output units, and for the convex variant every update is followed by
/// [`Model::project_nonnegative`]. Parameters from the best validation
/// epoch are kept. Zero epochs leave the model untouched.
pub fn train(
    model: &mut Model,
    train_x: &Matrix,
    train_y: &Matrix,
    val_x: &Matrix,
    val_y: &Matrix,
    cfg: &TrainConfig,
) -> Result<TrainReport, IcnnError> {
    cfg.check()?;
    model.check()?;
    if model.is_folded() {
        return Err(IcnnError::AlreadyFolded);
    }
    for (x, y) in [(train_x, train_y), (val_x, val_y)] {
        if x.cols != model.input_dim {
            return Err(IcnnError::DataHeadMismatch("input width"));
        }
        if y.cols != model.output_dim() {
            return Err(IcnnError::DataHeadMismatch("target width"));
        }
        if x.rows != y.rows {
            return Err(IcnnError::DataHeadMismatch("row counts differ"));
        }
    }
    if train_x.rows == 0 || val_x.rows == 0 {
        return Err(IcnnError::DataHeadMismatch("empty training or validation set"));
    }
    if cfg.epochs == 0 {
        return Ok(TrainReport::default());
    }

    model.normalization = Normalization::fit(train_x, train_y);
    let (tx, ty) = normalized(model, train_x, train_y);
    let (vx, vy) = normalized(model, val_x, val_y);
    if cfg.least_squares_init {
        least_squares_output(model, &tx, &ty);
    }
    let convex = model.arch == Architecture::Icnn;
    let mask = model.z_weight_mask();

    let all_val: Vec<usize> = (0..vx.rows).collect();
    let mut report = TrainReport {
        initial_val_loss: mse(model, &vx, &vy, &all_val),
        ..TrainReport::default()
    };
    let mut best = report.initial_val_loss;
    let mut best_params = model.params();
    let mut since_best = 0;

    let mut params = model.params();
    let mut m1 = vec![0.0; params.len()];
    let mut m2 = vec![0.0; params.len()];
    let mut step = 0i32;
    let (beta1, beta2, eps) = (0.9, 0.999, 1e-8);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..tx.rows).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grad) = mse_gradient(model, &tx, &ty, batch);
            if !loss.is_finite() {
                return Err(IcnnError::DivergedLoss { epoch });
            }
            epoch_loss += loss * batch.len() as f64;
            step += 1;
            match cfg.optimizer {
                Optimizer::Sgd => {
                    for (p, g) in params.iter_mut().zip(&grad) {
                        *p -= cfg.learning_rate * g;
                    }
                }
                Optimizer::Adam => {
                    let c1 = 1.0 - libm::pow(beta1, step as f64);
                    let c2 = 1.0 - libm::pow(beta2, step as f64);
                    for i in 0..params.len() {
                        m1[i] = beta1 * m1[i] + (1.0 - beta1) * grad[i];
                        m2[i] = beta2 * m2[i] + (1.0 - beta2) * grad[i] * grad[i];
                        params[i] -= cfg.learning_rate * (m1[i] / c1) / (sqrt(m2[i] / c2) + eps);
                    }
                }
            }
            if convex {
                for (p, &z) in params.iter_mut().zip(&mask) {
                    if z && *p < 0.0 {
                        *p = 0.0;
                    }
                }
            }
            model.set_params(&params);
        }
        let val = mse(model, &vx, &vy, &all_val);
        if !val.is_finite() {
            return Err(IcnnError::DivergedLoss { epoch });
        }
        report.train_loss.push(epoch_loss / tx.rows as f64);
        report.val_loss.push(val);
        if val < best {
            best = val;
            best_params.copy_from_slice(&params);
            report.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    model.set_params(&best_params);
    model.provenance.train_seed = cfg.seed;
    model.provenance.epochs = report.train_loss.len();
    Ok(report)
}

fn normalized(model: &Model, x: &Matrix, y: &Matrix) -> (Matrix, Matrix) {
    let mut nx = Matrix::zeros(x.rows, x.cols);
    let mut ny = Matrix::zeros(y.rows, y.cols);
    for r in 0..x.rows {
        model.normalization.normalize_x(x.row(r), nx.row_mut(r));
        model.normalization.normalize_y(y.row(r), ny.row_mut(r));
    }
    (nx, ny)
}

/// Mean squared error of the network proper over `rows`.
pub fn mse(model: &Model, x: &Matrix, y: &Matrix, rows: &[usize]) -> f64 {
    let mut total = 0.0;
    for &r in rows {
        let out = model.forward_internal(x.row(r));
        total += out.iter().zip(y.row(r)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    total / (rows.len() * y.cols).max(1) as f64
}

/// [`mse`] over `rows` and its gradient with respect to
/// [`Model::params`], by backpropagation through the network proper.
pub fn mse_gradient(model: &Model, x: &Matrix, y: &Matrix, rows: &[usize]) -> (f64, Vec<f64>) {
    let nl = model.layers.len();
    let mut offsets = Vec::with_capacity(nl);
    let mut o = 0;
    for l in &model.layers {
        let wz = o;
        o += l.wz.as_ref().map_or(0, |m| m.data.len());
        let wx = o;
        o += l.wx.as_ref().map_or(0, |m| m.data.len());
        let b = o;
        o += l.b.len();
        offsets.push((wz, wx, b));
    }
    let mut grad = vec![0.0; o];
    let scale = 2.0 / (rows.len() * y.cols).max(1) as f64;
    let mut total = 0.0;

    let mut acts: Vec<Vec<f64>> = model.layers.iter().map(|l| vec![0.0; l.width()]).collect();
    let mut pre: Vec<Vec<f64>> = acts.clone();
    for &r in rows {
        let xr = x.row(r);
        for k in 0..nl {
            let (done, rest) = acts.split_at_mut(k);
            let zprev: &[f64] = if k == 0 { &[] } else { &done[k - 1] };
            model.layers[k].affine(zprev, xr, &mut pre[k]);
            for (a, p) in rest[0].iter_mut().zip(&pre[k]) {
                *a = if k + 1 < nl { relu(*p) } else { *p };
            }
        }
        let out = &acts[nl - 1];
        let mut delta: Vec<f64> = out
            .iter()
            .zip(y.row(r))
            .map(|(a, b)| {
                total += (a - b) * (a - b);
                scale * (a - b)
            })
            .collect();
        for k in (0..nl).rev() {
            let layer = &model.layers[k];
            if k + 1 < nl {
                for (d, p) in delta.iter_mut().zip(&pre[k]) {
                    if *p <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let (owz, owx, ob) = offsets[k];
            for (i, &d) in delta.iter().enumerate() {
                grad[ob + i] += d;
            }
            if let Some(wx) = &layer.wx {
                for (i, &d) in delta.iter().enumerate() {
                    if d != 0.0 {
                        let g = &mut grad[owx + i * wx.cols..owx + (i + 1) * wx.cols];
                        for (gj, xj) in g.iter_mut().zip(xr) {
                            *gj += d * xj;
                        }
                    }
                }
            }
            if let Some(wz) = &layer.wz {
                let zprev = &acts[k - 1];
                let mut next = vec![0.0; wz.cols];
                for (i, &d) in delta.iter().enumerate() {
                    if d != 0.0 {
                        let g = &mut grad[owz + i * wz.cols..owz + (i + 1) * wz.cols];
                        for (gj, zj) in g.iter_mut().zip(zprev) {
                            *gj += d * zj;
                        }
                    }
                }
                wz.mul_t_add(&delta, &mut next);
                delta = next;
            }
        }
    }
    (total / (rows.len() * y.cols).max(1) as f64, grad)
}

/// Replaces the unconstrained weights of the output layer by their ridge
/// least-squares fit with everything else held fixed: passthrough and bias
/// for the convex variant, all output weights for the plain one.
fn least_squares_output(model: &mut Model, x: &Matrix, y: &Matrix) {
    let nl = model.layers.len();
    let convex = model.arch == Architecture::Icnn;
    let hidden_width = if nl > 1 { model.layers[nl - 2].width() } else { 0 };
    let nf = if convex { x.cols } else { hidden_width } + 1;
    let no = y.cols;
    let mut ata = vec![0.0; nf * nf];
    let mut atb = vec![0.0; nf * no];
    let mut feat = vec![0.0; nf];
    for r in 0..x.rows {
        let xr = x.row(r);
        let z = if nl > 1 { hidden_output(model, xr) } else { Vec::new() };
        let mut target = y.row(r).to_vec();
        let out = &model.layers[nl - 1];
        if convex {
            if let Some(wz) = &out.wz {
                for (t, row) in target.iter_mut().zip(0..wz.rows) {
                    *t -= crate::math::dot(wz.row(row), &z);
                }
            }
            feat[..x.cols].copy_from_slice(xr);
        } else {
            if let Some(wx) = &out.wx {
                for (t, row) in target.iter_mut().zip(0..wx.rows) {
                    *t -= crate::math::dot(wx.row(row), xr);
                }
            }
            feat[..hidden_width].copy_from_slice(&z);
        }
        feat[nf - 1] = 1.0;
        for i in 0..nf {
            if feat[i] == 0.0 {
                continue;
            }
            for j in 0..nf {
                ata[i * nf + j] += feat[i] * feat[j];
            }
            for o in 0..no {
                atb[i * no + o] += feat[i] * target[o];
            }
        }
    }
    let ridge = 1e-6 * x.rows as f64;
    for i in 0..nf {
        ata[i * nf + i] += ridge;
    }
    let out = &mut model.layers[nl - 1];
    for o in 0..no {
        let mut a = ata.clone();
        let mut b: Vec<f64> = (0..nf).map(|i| atb[i * no + o]).collect();
        if cholesky_solve(&mut a, nf, &mut b).is_none() {
            return;
        }
        let w = if convex { out.wx.as_mut() } else { out.wz.as_mut() };
        if let Some(w) = w {
            w.row_mut(o).copy_from_slice(&b[..nf - 1]);
        }
        out.b[o] = b[nf - 1];
    }
}

/// Activations of the last hidden layer.
fn hidden_output(model: &Model, x: &[f64]) -> Vec<f64> {
    let pre = model.preactivations(x);
    pre.last().map_or(Vec::new(), |a| a.iter().map(|&v| relu(v)).collect())
}
