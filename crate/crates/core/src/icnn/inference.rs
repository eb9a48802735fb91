use alloc::borrow::Cow;
use alloc::format;
use alloc::vec::Vec;

use super::{IcnnError, Model};
use crate::lp::{solve_lp, LpOptions, LpProblem, LpStatus, Relation};

/// Evaluates output `output` of a convex network at raw input `x` as the
/// minimum of
///
/// ```text
/// min  y_o   s.t.  z_1 ≥ W_0^x x + b_0,  z_{k+1} ≥ W_k^z z_k + W_k^x x + b_k,  z ≥ 0
/// ```
///
/// whose optimum equals the forward pass whenever every `W^z ≥ 0`.
pub fn exact_inference_lp(model: &Model, x: &[f64], output: usize) -> Result<f64, IcnnError> {
    model.check_convex()?;
    if x.len() != model.input_dim {
        return Err(IcnnError::DimensionMismatch {
            what: "input length",
            got: x.len(),
            expected: model.input_dim,
        });
    }
    if output >= model.output_dim() {
        return Err(IcnnError::DimensionMismatch {
            what: "output index",
            got: output,
            expected: model.output_dim(),
        });
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

    let mut p = LpProblem::new();
    let mut prev: Vec<usize> = Vec::new();
    for (k, layer) in m.layers[..nl - 1].iter().enumerate() {
        let vars: Vec<usize> = (0..layer.width())
            .map(|i| p.add_var(format!("z{}_{}", k + 1, i), 0.0, f64::INFINITY, 0.0))
            .collect();
        for (i, &v) in vars.iter().enumerate() {
            let mut rhs = layer.b[i];
            if let Some(wx) = &layer.wx {
                rhs += crate::math::dot(wx.row(i), x);
            }
            let mut coeffs = alloc::vec![(v, 1.0)];
            if let Some(wz) = &layer.wz {
                for (j, &w) in wz.row(i).iter().enumerate() {
                    if w != 0.0 {
                        coeffs.push((prev[j], -w));
                    }
                }
            }
            p.add_row(format!("relu{}_{}", k + 1, i), coeffs, Relation::Ge, rhs);
        }
        prev = vars;
    }
    let out = &m.layers[nl - 1];
    p.offset = out.b[output];
    if let Some(wx) = &out.wx {
        p.offset += crate::math::dot(wx.row(output), x);
    }
    if let Some(wz) = &out.wz {
        for (j, &w) in wz.row(output).iter().enumerate() {
            p.objective[prev[j]] += w;
        }
    }
    let sol = solve_lp(&p, &LpOptions::default())?;
    if sol.status != LpStatus::Optimal {
        return Err(IcnnError::SolverFailure(format!("{:?}", sol.status)));
    }
    Ok(sol.objective)
}

/// [`exact_inference_lp`] for every output.
pub fn exact_inference_lp_all(model: &Model, x: &[f64]) -> Result<Vec<f64>, IcnnError> {
    (0..model.output_dim())
        .map(|o| exact_inference_lp(model, x, o))
        .collect()
}
