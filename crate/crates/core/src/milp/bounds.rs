use alloc::borrow::Cow;
use alloc::vec;
use alloc::vec::Vec;

use super::MilpError;
use crate::icnn::Model;
use crate::math::{abs, relu};

/// Closed interval of a preactivation or output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, v: f64, tol: f64) -> bool {
        v >= self.lo - tol && v <= self.hi + tol
    }
}

/// Interval bounds for every hidden preactivation and every output.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkBounds {
    pub hidden: Vec<Vec<Interval>>,
    pub output: Vec<Interval>,
}

/// Interval arithmetic through the network for raw inputs in
/// `[x_lo, x_hi]`. Each affine map is evaluated in center-radius form.
pub fn bound_propagate(model: &Model, x_lo: &[f64], x_hi: &[f64]) -> Result<NetworkBounds, MilpError> {
    let n = model.input_dim;
    if x_lo.len() != n || x_hi.len() != n {
        return Err(MilpError::Malformed("input box length differs from input width"));
    }
    if x_lo.iter().chain(x_hi).any(|v| !v.is_finite()) {
        return Err(MilpError::UnboundedInput);
    }
    if x_lo.iter().zip(x_hi).any(|(l, h)| l > h) {
        return Err(MilpError::Malformed("input box has lo > hi"));
    }
    let folded: Cow<'_, Model> = if model.is_folded() {
        Cow::Borrowed(model)
    } else {
        let mut m = model.clone();
        m.fold_normalization()?;
        Cow::Owned(m)
    };
    let m = folded.as_ref();
    let xc: Vec<f64> = x_lo.iter().zip(x_hi).map(|(l, h)| 0.5 * (l + h)).collect();
    let xr: Vec<f64> = x_lo.iter().zip(x_hi).map(|(l, h)| 0.5 * (h - l)).collect();

    let nl = m.layers.len();
    let mut zc: Vec<f64> = Vec::new();
    let mut zr: Vec<f64> = Vec::new();
    let mut hidden = Vec::with_capacity(nl - 1);
    let mut output = Vec::new();
    for (k, layer) in m.layers.iter().enumerate() {
        let w = layer.width();
        let mut c = layer.b.clone();
        let mut r = vec![0.0; w];
        for i in 0..w {
            if let Some(wx) = &layer.wx {
                for (j, &a) in wx.row(i).iter().enumerate() {
                    c[i] += a * xc[j];
                    r[i] += abs(a) * xr[j];
                }
            }
            if let Some(wz) = &layer.wz {
                for (j, &a) in wz.row(i).iter().enumerate() {
                    c[i] += a * zc[j];
                    r[i] += abs(a) * zr[j];
                }
            }
        }
        let iv: Vec<Interval> = c
            .iter()
            .zip(&r)
            .map(|(c, r)| Interval { lo: c - r, hi: c + r })
            .collect();
        if k + 1 == nl {
            output = iv;
        } else {
            zc = iv.iter().map(|i| 0.5 * (relu(i.lo) + relu(i.hi))).collect();
            zr = iv.iter().map(|i| 0.5 * (relu(i.hi) - relu(i.lo))).collect();
            hidden.push(iv);
        }
    }
    Ok(NetworkBounds { hidden, output })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::icnn::{Architecture, HeadKind, Layer};
    use crate::Matrix;
    use alloc::vec;

    #[test]
    fn single_affine_layer() {
        let mut m = Model::new(Architecture::Icnn, HeadKind::Loss, 1, &[1], vec![], 0);
        m.layers[0] = Layer {
            wz: None,
            wx: Some(Matrix::from_rows(&[vec![2.0]])),
            b: vec![1.0],
        };
        let b = bound_propagate(&m, &[0.0], &[1.0]).unwrap();
        assert_eq!(b.hidden[0][0], Interval { lo: 1.0, hi: 3.0 });
    }

    #[test]
    fn degenerate_box_gives_forward_preactivations() {
        let m = Model::new(Architecture::Mlp, HeadKind::Ol, 3, &[5, 4], vec![0, 1], 2);
        let x = [0.2, -0.7, 1.1];
        let b = bound_propagate(&m, &x, &x).unwrap();
        let pre = m.preactivations(&x);
        for (iv, a) in b.hidden.iter().zip(&pre) {
            for (i, v) in iv.iter().zip(a) {
                assert!((i.lo - v).abs() < 1e-12 && (i.hi - v).abs() < 1e-12);
            }
        }
        let y = m.forward(&x).unwrap();
        for (i, v) in b.output.iter().zip(&y) {
            assert!((i.lo - v).abs() < 1e-12 && (i.hi - v).abs() < 1e-12);
        }
    }

    #[test]
    fn unbounded_box_is_rejected() {
        let m = Model::new(Architecture::Mlp, HeadKind::Loss, 1, &[2], vec![], 2);
        assert!(matches!(
            bound_propagate(&m, &[f64::NEG_INFINITY], &[0.0]),
            Err(MilpError::UnboundedInput)
        ));
    }
}
