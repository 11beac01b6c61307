//! The endomorphism `h = ghat^-1 g` relating a metric to a reference metric,
//! and the scalar monitors built from it.

use crate::chern::connection;
use crate::deriv::Differentiator;
use crate::error::{LabError, Result};
use crate::grid::C64;
use crate::metric::HermitianMetricField;
use crate::tensor::{matmul, TensorField};

#[derive(Debug, Clone)]
pub struct RelativeEndomorphism {
    /// `h^a_b = ghat^{a cbar} g_{cbar b}`, layout `[a][b]`.
    pub h: TensorField,
    pub trace: Vec<f64>,
    pub det: Vec<f64>,
    /// `S = |Gamma - Gamma_hat|^2_g`.
    pub s: Vec<f64>,
}

/// `sum g^{m cbar} g_{mubar b} g^{l abar} X^b_{ml} conj(Y^mu_{c a})` at every
/// node, for connection-like tensors in `[b][m][l]` layout.
pub fn connection_inner(g: &TensorField, ginv: &TensorField, x: &TensorField, y: &TensorField) -> Vec<C64> {
    let n = g.n();
    let nodes = g.node_count();
    // lowered[mu][m][l] = g_{mubar b} X^b_{ml}
    let mut lowered = TensorField::zeros(g.grid().clone(), 3);
    for mu in 0..n {
        for m in 0..n {
            for l in 0..n {
                let dst_idx = lowered.index(&[mu, m, l]);
                let mut acc = vec![C64::new(0.0, 0.0); nodes];
                for b in 0..n {
                    let gv = g.at(&[mu, b]);
                    let xv = x.at(&[b, m, l]);
                    for i in 0..nodes {
                        acc[i] += gv[i] * xv[i];
                    }
                }
                *lowered.comp_mut(dst_idx) = acc;
            }
        }
    }
    let mut out = vec![C64::new(0.0, 0.0); nodes];
    for mu in 0..n {
        for m in 0..n {
            for c in 0..n {
                let gmc = ginv.at(&[m, c]);
                for l in 0..n {
                    let lv = lowered.at(&[mu, m, l]);
                    for a in 0..n {
                        let gla = ginv.at(&[l, a]);
                        let yv = y.at(&[mu, c, a]);
                        for i in 0..nodes {
                            out[i] += gmc[i] * gla[i] * lv[i] * yv[i].conj();
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn relative_endomorphism(
    g: &HermitianMetricField,
    reference: &HermitianMetricField,
    d: &Differentiator,
) -> Result<RelativeEndomorphism> {
    if g.grid() != reference.grid() {
        return Err(LabError::GridMismatch);
    }
    g.check_positive(0.0)?;
    reference.check_positive(0.0)?;
    let (ginv, gamma) = connection(g, d)?;
    let (ref_inv, ref_gamma) = connection(reference, d)?;
    let h = matmul(&ref_inv, g.tensor());
    let trace = h.trace().values().iter().map(|v| v.re).collect();
    let det = g
        .determinant()
        .iter()
        .zip(reference.determinant())
        .map(|(a, b)| a / b)
        .collect();
    let diff = gamma.sub(&ref_gamma)?;
    let s = connection_inner(g.tensor(), &ginv, &diff, &diff)
        .iter()
        .map(|v| v.re)
        .collect();
    Ok(RelativeEndomorphism { h, trace, det, s })
}
