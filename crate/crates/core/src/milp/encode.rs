use alloc::borrow::Cow;
use alloc::format;
use alloc::vec::Vec;

use super::{MilpError, NetworkBounds, ReluUnit};
use crate::icnn::{Layer, Model};
use crate::lp::{LinExpr, LpProblem, Relation};

/// Variables and expressions created when a network is written into an LP.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EncodedNetwork {
    /// Affine expression of each network output.
    pub outputs: Vec<LinExpr>,
    /// Activation of every hidden unit, per layer, as an expression in LP
    /// variables. Units fixed by their interval carry no variable.
    pub hidden: Vec<Vec<LinExpr>>,
    /// Hidden units that received an activation variable, in evaluation order.
    pub units: Vec<ReluUnit>,
    /// Binary variables created by the big-M encoding.
    pub binaries: Vec<usize>,
}

/// Convex relaxation `z ≥ a, z ≥ 0` of every ReLU. For a network with
/// nonnegative feedforward weights, minimizing a nondecreasing function of
/// its outputs over this relaxation recovers the exact network.
///
/// With `bounds`, units whose interval does not straddle zero are exact
/// already and are substituted: `z = a` when `lo ≥ 0`, `z = 0` when `hi ≤ 0`.
pub fn encode_relu_relaxed(
    lp: &mut LpProblem,
    model: &Model,
    inputs: &[LinExpr],
    bounds: Option<&NetworkBounds>,
    prefix: &str,
) -> Result<EncodedNetwork, MilpError> {
    encode(lp, model, inputs, prefix, bounds, false)
}

/// Exact mixed-integer encoding with one binary `β` per unit whose interval
/// straddles zero:
///
/// ```text
/// z ≥ a,  z ≥ 0,  z ≤ a − lo·(1 − β),  z ≤ hi·β
/// ```
///
/// Units with `lo ≥ 0` are substituted by `a`; units with `hi ≤ 0` by `0`.
pub fn encode_relu_bigm(
    lp: &mut LpProblem,
    model: &Model,
    inputs: &[LinExpr],
    bounds: &NetworkBounds,
    prefix: &str,
) -> Result<EncodedNetwork, MilpError> {
    encode(lp, model, inputs, prefix, Some(bounds), true)
}

fn encode(
    lp: &mut LpProblem,
    model: &Model,
    inputs: &[LinExpr],
    prefix: &str,
    bounds: Option<&NetworkBounds>,
    binary: bool,
) -> Result<EncodedNetwork, MilpError> {
    if inputs.len() != model.input_dim {
        return Err(MilpError::Malformed("input expression count differs from input width"));
    }
    let folded: Cow<'_, Model> = if model.is_folded() {
        Cow::Borrowed(model)
    } else {
        let mut m = model.clone();
        m.fold_normalization()?;
        Cow::Owned(m)
    };
    let m = folded.as_ref();
    let nl = m.layers.len();
    if let Some(b) = bounds {
        if b.hidden.len() != nl - 1 || b.hidden.iter().zip(&m.layers).any(|(h, l)| h.len() != l.width()) {
            return Err(MilpError::IntervalMissing);
        }
    }

    let mut enc = EncodedNetwork::default();
    let mut acc = Accumulator::default();
    let mut prev: Vec<LinExpr> = Vec::new();
    for (k, layer) in m.layers[..nl - 1].iter().enumerate() {
        let mut acts = Vec::with_capacity(layer.width());
        for i in 0..layer.width() {
            let pre = affine(layer, i, inputs, &prev, &mut acc);
            let iv = bounds.map(|b| b.hidden[k][i]);
            if let Some(iv) = iv {
                if !(iv.lo.is_finite() && iv.hi.is_finite()) {
                    return Err(MilpError::IntervalMissing);
                }
                if iv.lo >= 0.0 {
                    acts.push(pre);
                    continue;
                }
                if iv.hi <= 0.0 {
                    acts.push(LinExpr::constant(0.0));
                    continue;
                }
            }
            let name = format!("{prefix}z{}_{i}", k + 1);
            let z = lp.add_var(name.clone(), 0.0, f64::INFINITY, 0.0);
            // a − z ≤ −c  ⇔  z ≥ a
            lp.add_row(format!("{name}_ge"), pre.minus_var(z), Relation::Le, -pre.constant);
            let beta = match iv {
                Some(iv) if binary => {
                    let beta = lp.add_var(format!("{prefix}b{}_{i}", k + 1), 0.0, 1.0, 0.0);
                    // z − a_terms − lo·β ≤ c − lo
                    let mut t: Vec<(usize, f64)> = pre.terms.iter().map(|&(j, a)| (j, -a)).collect();
                    t.push((z, 1.0));
                    t.push((beta, -iv.lo));
                    lp.add_row(format!("{name}_act"), t, Relation::Le, pre.constant - iv.lo);
                    lp.add_row(
                        format!("{name}_off"),
                        alloc::vec![(z, 1.0), (beta, -iv.hi)],
                        Relation::Le,
                        0.0,
                    );
                    enc.binaries.push(beta);
                    Some(beta)
                }
                _ => None,
            };
            enc.units.push(ReluUnit {
                pre,
                z,
                beta,
                interval: iv,
            });
            acts.push(LinExpr {
                terms: alloc::vec![(z, 1.0)],
                constant: 0.0,
            });
        }
        enc.hidden.push(acts.clone());
        prev = acts;
    }
    let out = &m.layers[nl - 1];
    enc.outputs = (0..out.width())
        .map(|i| affine(out, i, inputs, &prev, &mut acc))
        .collect();
    Ok(enc)
}

/// Preactivation of unit `i` of `layer` as an expression in LP variables.
fn affine(layer: &Layer, i: usize, inputs: &[LinExpr], prev: &[LinExpr], acc: &mut Accumulator) -> LinExpr {
    if let Some(wx) = &layer.wx {
        for (&w, x) in wx.row(i).iter().zip(inputs) {
            acc.add(w, x);
        }
    }
    if let Some(wz) = &layer.wz {
        for (&w, x) in wz.row(i).iter().zip(prev) {
            acc.add(w, x);
        }
    }
    acc.take(layer.b[i])
}

/// Dense scratch for summing expressions over the LP's variables.
#[derive(Default)]
struct Accumulator {
    coef: Vec<f64>,
    seen: Vec<bool>,
    touched: Vec<usize>,
    constant: f64,
}

impl Accumulator {
    fn add(&mut self, w: f64, x: &LinExpr) {
        if w == 0.0 {
            return;
        }
        self.constant += w * x.constant;
        for &(j, a) in &x.terms {
            if j >= self.coef.len() {
                self.coef.resize(j + 1, 0.0);
                self.seen.resize(j + 1, false);
            }
            if !self.seen[j] {
                self.seen[j] = true;
                self.touched.push(j);
            }
            self.coef[j] += w * a;
        }
    }

    /// The accumulated expression plus `bias`, terms in variable order; resets the scratch.
    fn take(&mut self, bias: f64) -> LinExpr {
        self.touched.sort_unstable();
        let mut terms = Vec::with_capacity(self.touched.len());
        for &j in &self.touched {
            if self.coef[j] != 0.0 {
                terms.push((j, self.coef[j]));
            }
            self.coef[j] = 0.0;
            self.seen[j] = false;
        }
        self.touched.clear();
        let e = LinExpr {
            terms,
            constant: bias + self.constant,
        };
        self.constant = 0.0;
        e
    }
}
