use alloc::format;
use alloc::vec::Vec;

use super::{add_envelope_vars, DoeError, DoeInstance, DoeRequest, RetrenchPlan};
use crate::grid::{Feeder, Limits};
use crate::icnn::{Architecture, HeadKind, Model, ViolationHead};
use crate::lp::{LinExpr, LpProblem, Relation};
use crate::milp::{bound_propagate, encode_relu_bigm, encode_relu_relaxed, EncodedNetwork, MilpProblem};

/// The four surrogates one DOE instance needs.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateSet {
    pub loss: Model,
    pub v: Model,
    pub ol: Model,
    pub rpf: Model,
}

impl SurrogateSet {
    /// Folds the normalization of every model that still carries one.
    pub fn folded(mut self) -> Result<Self, DoeError> {
        for m in self.models_mut() {
            if !m.is_folded() {
                m.fold_normalization()?;
            }
        }
        Ok(self)
    }

    pub fn models(&self) -> [&Model; 4] {
        [&self.loss, &self.v, &self.ol, &self.rpf]
    }

    fn models_mut(&mut self) -> [&mut Model; 4] {
        [&mut self.loss, &mut self.v, &mut self.ol, &mut self.rpf]
    }

    pub fn arch(&self) -> Architecture {
        self.loss.arch
    }

    /// Copies whose outputs cover exactly the buses and lines of `plan`.
    pub fn restrict(&self, plan: &RetrenchPlan) -> Result<Self, DoeError> {
        let pick = |m: &Model, subset: &[usize]| -> Result<Model, DoeError> {
            let keep = RetrenchPlan::positions(&m.selection, subset).ok_or(DoeError::HeadLimitMismatch(m.head))?;
            Ok(m.restrict_outputs(&keep)?)
        };
        Ok(Self {
            loss: self.loss.clone(),
            v: pick(&self.v, &plan.voltage_buses)?,
            ol: pick(&self.ol, &plan.current_lines)?,
            rpf: pick(&self.rpf, &plan.reverse_lines)?,
        })
    }

    /// Shape, head, sign and provenance checks for use on `feeder`.
    pub fn check(&self, feeder: &Feeder, arch: Architecture) -> Result<(), DoeError> {
        let fp = feeder.fingerprint();
        let n = feeder.buses.len();
        for (m, kind) in self.models().into_iter().zip(HeadKind::ALL) {
            if m.head != kind {
                return Err(DoeError::HeadLimitMismatch(kind));
            }
            if m.arch != arch {
                return Err(DoeError::InvalidRequest(format!(
                    "{} model is {:?}, expected {arch:?}",
                    kind.name(),
                    m.arch
                )));
            }
            if arch == Architecture::Icnn {
                let w = m.min_z_weight();
                if w < 0.0 {
                    return Err(DoeError::NegativeZWeight { head: kind, value: w });
                }
            }
            m.check()?;
            if !m.is_folded() {
                return Err(DoeError::UnfoldedModel(kind));
            }
            let range = match kind {
                HeadKind::Loss => 0,
                HeadKind::V => n,
                HeadKind::Ol | HeadKind::Rpf => feeder.lines.len(),
            };
            if m.input_dim != 2 * n
                || m.selection.iter().any(|&s| s >= range)
                || m.output_dim() != kind.output_dim(m.selection.len())
            {
                return Err(DoeError::HeadLimitMismatch(kind));
            }
            let pf = &m.provenance.feeder_fingerprint;
            if !pf.is_empty() && *pf != fp {
                return Err(DoeError::InvalidRequest(format!(
                    "{} model was trained on a different feeder",
                    kind.name()
                )));
            }
        }
        Ok(())
    }

    /// Violation heads under `limits`, loss first.
    pub fn heads(&self, limits: &Limits) -> [ViolationHead; 4] {
        self.models().map(|m| ViolationHead::for_model(m, limits))
    }

    /// `(loss, δ)` predicted by the surrogates for raw input `x`.
    pub fn predict(&self, x: &[f64], limits: &Limits) -> Result<(f64, crate::grid::ViolationTerms), DoeError> {
        let heads = self.heads(limits);
        let mut out = [0.0; 4];
        for ((m, h), o) in self.models().into_iter().zip(&heads).zip(&mut out) {
            *o = h.violation(&m.forward(x)?)?;
        }
        Ok((
            out[0],
            crate::grid::ViolationTerms {
                v: out[1],
                ol: out[2],
                rpf: out[3],
            },
        ))
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Encoding {
    Relaxed,
    BigM,
}

/// B1: convex surrogates with each ReLU relaxed to `z ≥ a, z ≥ 0`.
pub fn build_icnn_lp(
    feeder: &Feeder,
    models: &SurrogateSet,
    request: &DoeRequest,
    t: usize,
) -> Result<DoeInstance, DoeError> {
    build(feeder, models, request, t, Architecture::Icnn, Encoding::Relaxed)
}

/// B2: convex surrogates with the exact big-M encoding.
pub fn build_icnn_milp(
    feeder: &Feeder,
    models: &SurrogateSet,
    request: &DoeRequest,
    t: usize,
) -> Result<DoeInstance, DoeError> {
    build(feeder, models, request, t, Architecture::Icnn, Encoding::BigM)
}

/// B4: plain ReLU surrogates with the exact big-M encoding.
pub fn build_surrogate_milp(
    feeder: &Feeder,
    models: &SurrogateSet,
    request: &DoeRequest,
    t: usize,
) -> Result<DoeInstance, DoeError> {
    build(feeder, models, request, t, Architecture::Mlp, Encoding::BigM)
}

fn build(
    feeder: &Feeder,
    models: &SurrogateSet,
    request: &DoeRequest,
    t: usize,
    arch: Architecture,
    encoding: Encoding,
) -> Result<DoeInstance, DoeError> {
    request.check(feeder)?;
    models.check(feeder, arch)?;
    let iv = request.interval(t)?;
    let n = feeder.buses.len();
    let w = request.weights;
    let mut lp = LpProblem::new();
    let env = add_envelope_vars(&mut lp, iv, &w, request.direction);

    // x = [p; q] with p_j = p⁰_j − envelope_j at DER buses
    let der_idx = iv.der_indices(feeder)?;
    let mut inputs: Vec<LinExpr> = iv
        .load_p
        .iter()
        .chain(&iv.load_q)
        .map(|&c| LinExpr::constant(c))
        .collect();
    let (mut x_lo, mut x_hi): (Vec<f64>, Vec<f64>) = inputs.iter().map(|e| (e.constant, e.constant)).unzip();
    for ((&b, d), &e) in der_idx.iter().zip(&iv.ders).zip(&env) {
        inputs[b].terms.push((e, -1.0));
        x_lo[b] = iv.load_p[b] - d.p_max;
        x_hi[b] = iv.load_p[b] - d.p_min;
        for v in [&mut inputs[n + b].constant, &mut x_lo[n + b], &mut x_hi[n + b]] {
            *v -= d.q_der;
        }
    }

    let heads = models.heads(&request.limits);
    let costs = [w.w_loss, w.w_v, w.w_ol, w.w_rpf];
    let mut out_vars = [0usize; 4];
    let mut binaries = Vec::new();
    let mut units = Vec::new();
    for (((m, head), cost), slot) in models.models().into_iter().zip(&heads).zip(costs).zip(&mut out_vars) {
        let prefix = format!("{}_", m.head.name());
        let bounds = bound_propagate(m, &x_lo, &x_hi)?;
        let enc: EncodedNetwork = match encoding {
            Encoding::Relaxed => encode_relu_relaxed(&mut lp, m, &inputs, Some(&bounds), &prefix)?,
            Encoding::BigM => encode_relu_bigm(&mut lp, m, &inputs, &bounds, &prefix)?,
        };
        *slot = add_violation(&mut lp, &enc.outputs, &head.eps, cost, &prefix);
        binaries.extend(enc.binaries);
        units.extend(enc.units);
    }
    Ok(DoeInstance {
        problem: MilpProblem { lp, binaries, units },
        envelope: env,
        loss: out_vars[0],
        deltas: [out_vars[1], out_vars[2], out_vars[3]],
        weights: w,
        direction: request.direction,
        forecast: iv.forecast_limit(request.direction),
    })
}

/// `ν_r ≥ y_r + ε_r`, `ν ≥ 0`, and `δ = Σ ν` carrying the weight.
fn add_violation(lp: &mut LpProblem, outputs: &[LinExpr], eps: &[f64], weight: f64, prefix: &str) -> usize {
    let delta = lp.add_var(format!("{prefix}delta"), 0.0, f64::INFINITY, weight);
    let mut sum = alloc::vec![(delta, 1.0)];
    for (r, (y, e)) in outputs.iter().zip(eps).enumerate() {
        let nu = lp.add_var(format!("{prefix}nu{r}"), 0.0, f64::INFINITY, 0.0);
        lp.add_row(
            format!("{prefix}nu{r}_ge"),
            y.minus_var(nu),
            Relation::Le,
            -(y.constant + e),
        );
        sum.push((nu, -1.0));
    }
    lp.add_row(format!("{prefix}delta_sum"), sum, Relation::Eq, 0.0);
    delta
}
