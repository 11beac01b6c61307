//! Chern connection, torsion and curvature of a Hermitian metric.
//!
//! Index layouts (all components base-`n`, first index most significant):
//!
//! | field         | layout            | meaning                          |
//! |---------------|-------------------|----------------------------------|
//! | `ginv`        | `[j][k]`          | `g^{j kbar}`                     |
//! | `dg`          | `[m][k][j]`       | `d_m g_{kbar j}`                 |
//! | `dbar_g`      | `[m][k][j]`       | `d_mbar g_{kbar j}`              |
//! | `gamma`       | `[p][j][q]`       | `Gamma^p_{jq}`                   |
//! | `torsion`     | `[m][j][p]`       | `T^m_{jp}`                       |
//! | `torsion_low` | `[k][j][p]`       | `T_{kbar jp}`                    |
//! | `tau`         | `[i]`             | `tau_i = T^p_{pi}`               |
//! | `curvature`   | `[k][j][p][q]`    | `R_{kbar j}^p_q`                 |
//! | `ricci`       | `[k][j]`          | `R_{kbar j}^p_p` (first Ricci)   |
//! | `ricci_tilde` | `[p][q]`          | `g_{pbar l} g^{j kbar} R_{kbar j}^l_q` |

use std::sync::Arc;

use crate::deriv::{Differentiator, Direction};
use crate::error::{LabError, Result};
use crate::grid::{ScalarField, TorusGrid, C64};
use crate::metric::HermitianMetricField;
use crate::tensor::TensorField;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Index type of one tensor slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    /// Unbarred contravariant `W^a`.
    Up,
    /// Unbarred covariant `W_a`.
    Down,
    /// Barred contravariant `W^abar`.
    UpBar,
    /// Barred covariant `W_abar`.
    DownBar,
}

pub struct ChernPackage<'d> {
    pub metric: HermitianMetricField,
    pub deriv: &'d Differentiator,
    pub ginv: TensorField,
    pub condition: f64,
    pub dg: TensorField,
    pub dbar_g: TensorField,
    pub gamma: TensorField,
    pub torsion: TensorField,
    pub torsion_low: TensorField,
    pub tau: TensorField,
    pub curvature: TensorField,
    pub ricci: TensorField,
    pub ricci_tilde: TensorField,
    pub scalar: ScalarField,
}

fn fill(nodes: usize, mut f: impl FnMut(usize) -> C64) -> Vec<C64> {
    (0..nodes).map(&mut f).collect()
}

impl<'d> ChernPackage<'d> {
    pub fn new(metric: &HermitianMetricField, deriv: &'d Differentiator) -> Result<Self> {
        if metric.grid() != deriv.grid() {
            return Err(LabError::GridMismatch);
        }
        let n = metric.n();
        let grid = metric.grid().clone();
        let nodes = grid.node_count();
        let g = metric.tensor();
        let (ginv, condition) = metric.inverse()?;
        let (dg, dbar_g) = g.gradient(deriv);
        let gamma = contract_connection(&ginv, &dg);

        let mut torsion = TensorField::zeros(grid.clone(), 3);
        let mut torsion_low = TensorField::zeros(grid.clone(), 3);
        for m in 0..n {
            for j in 0..n {
                for p in 0..n {
                    let a = gamma.at(&[m, j, p]).to_vec();
                    let b = gamma.at(&[m, p, j]);
                    *torsion.comp_mut(torsion.index(&[m, j, p])) =
                        a.iter().zip(b.iter()).map(|(x, y)| x - y).collect();
                    let u = dg.at(&[j, m, p]);
                    let v = dg.at(&[p, m, j]);
                    *torsion_low.comp_mut(torsion_low.index(&[m, j, p])) =
                        u.iter().zip(v.iter()).map(|(x, y)| x - y).collect();
                }
            }
        }
        let mut tau = TensorField::zeros(grid.clone(), 1);
        for i in 0..n {
            let dst = tau.at_mut(&[i]);
            for p in 0..n {
                for (d, v) in dst.iter_mut().zip(torsion.at(&[p, p, i]).iter()) {
                    *d += v;
                }
            }
        }

        // R_{kbar j}^p_q = -d_kbar Gamma^p_{jq}; gamma is [p][j][q] and the
        // derivative index is prepended, giving [k][p][j][q].
        let dbar_gamma = gamma.derivative(deriv, Direction::Anti);
        let mut curvature = TensorField::zeros(grid.clone(), 4);
        for k in 0..n {
            for j in 0..n {
                for p in 0..n {
                    for q in 0..n {
                        let src = dbar_gamma.at(&[k, p, j, q]);
                        *curvature.comp_mut(curvature.index(&[k, j, p, q])) =
                            src.iter().map(|v| -v).collect();
                    }
                }
            }
        }

        let mut ricci = TensorField::zeros(grid.clone(), 2);
        for k in 0..n {
            for j in 0..n {
                let dst_idx = ricci.index(&[k, j]);
                let mut acc = vec![ZERO; nodes];
                for p in 0..n {
                    for (d, v) in acc.iter_mut().zip(curvature.at(&[k, j, p, p]).iter()) {
                        *d += v;
                    }
                }
                *ricci.comp_mut(dst_idx) = acc;
            }
        }

        // mixed[l][q] = g^{j kbar} R_{kbar j}^l_q
        let mut mixed = TensorField::zeros(grid.clone(), 2);
        for l in 0..n {
            for q in 0..n {
                let c = mixed.index(&[l, q]);
                let mut acc = vec![ZERO; nodes];
                for j in 0..n {
                    for k in 0..n {
                        let gi = ginv.at(&[j, k]);
                        let r = curvature.at(&[k, j, l, q]);
                        for i in 0..nodes {
                            acc[i] += gi[i] * r[i];
                        }
                    }
                }
                *mixed.comp_mut(c) = acc;
            }
        }
        let ricci_tilde = crate::tensor::matmul(g, &mixed);

        let scalar_values = fill(nodes, |i| {
            let mut s = ZERO;
            for j in 0..n {
                for k in 0..n {
                    s += ginv.at(&[j, k])[i] * ricci.at(&[k, j])[i];
                }
            }
            s
        });
        let scalar = ScalarField::new(grid.clone(), scalar_values)?;

        Ok(Self {
            metric: metric.clone(),
            deriv,
            ginv,
            condition,
            dg,
            dbar_g,
            gamma,
            torsion,
            torsion_low,
            tau,
            curvature,
            ricci,
            ricci_tilde,
            scalar,
        })
    }

    pub fn n(&self) -> usize {
        self.metric.n()
    }

    pub fn grid(&self) -> &Arc<TorusGrid> {
        self.metric.grid()
    }

    /// `nabla_p W` (Holo) or `nabla_pbar W` (Anti); the new index is
    /// prepended. Unbarred derivatives only see unbarred slots and vice
    /// versa, since the Chern connection has no mixed-type coefficients.
    pub fn covariant_derivative(&self, w: &TensorField, valence: &[Slot], dir: Direction) -> Result<TensorField> {
        if valence.len() != w.rank() {
            return Err(LabError::Valence {
                rank: w.rank(),
                valence: valence.len(),
            });
        }
        if w.grid() != self.grid() {
            return Err(LabError::GridMismatch);
        }
        let n = self.n();
        let nodes = self.grid().node_count();
        let mut out = w.derivative(self.deriv, dir);
        let conj = dir == Direction::Anti;
        for c in 0..out.component_count() {
            let idx = out.multi_index(c);
            let p = idx[0];
            let rest = &idx[1..];
            let mut acc = vec![ZERO; nodes];
            let mut touched = false;
            for (s, &slot) in valence.iter().enumerate() {
                let sign = match (slot, dir) {
                    (Slot::Up, Direction::Holo) | (Slot::UpBar, Direction::Anti) => 1.0,
                    (Slot::Down, Direction::Holo) | (Slot::DownBar, Direction::Anti) => -1.0,
                    _ => continue,
                };
                let a = rest[s];
                let mut src = rest.to_vec();
                for r in 0..n {
                    src[s] = r;
                    // Up: Gamma^a_{p r}; Down: Gamma^r_{p a}
                    let gam = if sign > 0.0 {
                        self.gamma.at(&[a, p, r])
                    } else {
                        self.gamma.at(&[r, p, a])
                    };
                    let wv = w.at(&src);
                    touched = true;
                    for i in 0..nodes {
                        let gv = if conj { gam[i].conj() } else { gam[i] };
                        acc[i] += gv * wv[i] * sign;
                    }
                }
            }
            if touched {
                for (o, v) in out.comp_mut(c).iter_mut().zip(acc) {
                    *o += v;
                }
            }
        }
        Ok(out)
    }

    /// `Delta W = g^{p qbar} nabla_p nabla_qbar W`.
    pub fn laplacian(&self, w: &TensorField, valence: &[Slot]) -> Result<TensorField> {
        let first = self.covariant_derivative(w, valence, Direction::Anti)?;
        let mut v2 = vec![Slot::DownBar];
        v2.extend_from_slice(valence);
        let second = self.covariant_derivative(&first, &v2, Direction::Holo)?;
        let n = self.n();
        let nodes = self.grid().node_count();
        let mut out = TensorField::zeros(self.grid().clone(), w.rank());
        let count = out.component_count();
        for c in 0..count {
            let dst = out.comp_mut(c);
            for p in 0..n {
                for q in 0..n {
                    let gi = self.ginv.at(&[p, q]);
                    let src = second.comp((p * n + q) * count + c);
                    for i in 0..nodes {
                        dst[i] += gi[i] * src[i];
                    }
                }
            }
        }
        Ok(out)
    }

    /// `(T Tbar)_{kbar j} = T_{kbar pq} g^{p rbar} g^{q sbar} conj(T_{jbar rs})`.
    pub fn torsion_square(&self) -> TensorField {
        let n = self.n();
        let nodes = self.grid().node_count();
        let t = &self.torsion_low;
        // raised[j][p][q] = g^{p rbar} g^{q sbar} conj(T_{jbar rs})
        let mut raised = TensorField::zeros(self.grid().clone(), 3);
        for j in 0..n {
            for p in 0..n {
                for q in 0..n {
                    let c = raised.index(&[j, p, q]);
                    let mut acc = vec![ZERO; nodes];
                    for r in 0..n {
                        for s in 0..n {
                            let a = self.ginv.at(&[p, r]);
                            let b = self.ginv.at(&[q, s]);
                            let tv = t.at(&[j, r, s]);
                            for i in 0..nodes {
                                acc[i] += a[i] * b[i] * tv[i].conj();
                            }
                        }
                    }
                    *raised.comp_mut(c) = acc;
                }
            }
        }
        let mut out = TensorField::zeros(self.grid().clone(), 2);
        for k in 0..n {
            for j in 0..n {
                let c = out.index(&[k, j]);
                let mut acc = vec![ZERO; nodes];
                for p in 0..n {
                    for q in 0..n {
                        let a = t.at(&[k, p, q]);
                        let b = raised.at(&[j, p, q]);
                        for i in 0..nodes {
                            acc[i] += a[i] * b[i];
                        }
                    }
                }
                *out.comp_mut(c) = acc;
            }
        }
        out
    }

    /// `|T|^2 = g^{j kbar} (T Tbar)_{kbar j}`, real and non-negative.
    pub fn torsion_norm_sq(&self) -> Vec<f64> {
        let tt = self.torsion_square();
        self.trace_with_inverse(&tt).iter().map(|v| v.re).collect()
    }

    /// `g^{j kbar} A_{kbar j}` for a rank-2 field `A` in `[k][j]` layout.
    pub fn trace_with_inverse(&self, a: &TensorField) -> Vec<C64> {
        let n = self.n();
        let nodes = self.grid().node_count();
        let mut out = vec![ZERO; nodes];
        for j in 0..n {
            for k in 0..n {
                let gi = self.ginv.at(&[j, k]);
                let av = a.at(&[k, j]);
                for i in 0..nodes {
                    out[i] += gi[i] * av[i];
                }
            }
        }
        out
    }

    /// Laplacian of a scalar, `g^{p qbar} d_p d_qbar f`, straight from
    /// partial derivatives.
    pub fn scalar_laplacian(&self, f: &[C64]) -> Vec<C64> {
        let n = self.n();
        let nodes = self.grid().node_count();
        let mut out = vec![ZERO; nodes];
        for q in 0..n {
            let dq = self.deriv.complex(f, q, Direction::Anti);
            for p in 0..n {
                let dpq = self.deriv.complex(&dq, p, Direction::Holo);
                let gi = self.ginv.at(&[p, q]);
                for i in 0..nodes {
                    out[i] += gi[i] * dpq[i];
                }
            }
        }
        out
    }

    /// Chern scalar curvature from `-g^{p qbar} d_p d_qbar log det g`.
    pub fn scalar_from_log_det(&self) -> Vec<C64> {
        let logdet: Vec<C64> = self
            .metric
            .determinant()
            .iter()
            .map(|d| C64::new(d.ln(), 0.0))
            .collect();
        self.scalar_laplacian(&logdet).iter().map(|v| -v).collect()
    }

    /// `R_{lbar m kbar j} = g_{kbar p} R_{lbar m}^p_j`, layout `[l][m][k][j]`.
    pub fn curvature_lowered(&self) -> TensorField {
        let n = self.n();
        let nodes = self.grid().node_count();
        let g = self.metric.tensor();
        let mut out = TensorField::zeros(self.grid().clone(), 4);
        for l in 0..n {
            for m in 0..n {
                for k in 0..n {
                    for j in 0..n {
                        let c = out.index(&[l, m, k, j]);
                        let mut acc = vec![ZERO; nodes];
                        for p in 0..n {
                            let gv = g.at(&[k, p]);
                            let r = self.curvature.at(&[l, m, p, j]);
                            for i in 0..nodes {
                                acc[i] += gv[i] * r[i];
                            }
                        }
                        *out.comp_mut(c) = acc;
                    }
                }
            }
        }
        out
    }
}

/// `Gamma^p_{jq} = g^{p abar} d_j g_{abar q}` in `[p][j][q]` layout, from
/// `ginv` (`[j][k]`) and `dg` (`[m][k][j]`).
pub fn contract_connection(ginv: &TensorField, dg: &TensorField) -> TensorField {
    let n = ginv.n();
    let nodes = ginv.node_count();
    let mut gamma = TensorField::zeros(ginv.grid().clone(), 3);
    for p in 0..n {
        for j in 0..n {
            for q in 0..n {
                let dst = gamma.at_mut(&[p, j, q]);
                for a in 0..n {
                    let gi = ginv.at(&[p, a]);
                    let d = dg.at(&[j, a, q]);
                    for i in 0..nodes {
                        dst[i] += gi[i] * d[i];
                    }
                }
            }
        }
    }
    gamma
}

/// Chern connection coefficients alone, with the inverse metric.
pub fn connection(metric: &HermitianMetricField, deriv: &Differentiator) -> Result<(TensorField, TensorField)> {
    if metric.grid() != deriv.grid() {
        return Err(LabError::GridMismatch);
    }
    let (ginv, _) = metric.inverse()?;
    let dg = metric.tensor().derivative(deriv, Direction::Holo);
    let gamma = contract_connection(&ginv, &dg);
    Ok((ginv, gamma))
}

/// Valence of the curvature tensor `R_{kbar j}^p_q`.
pub const CURVATURE_VALENCE: [Slot; 4] = [Slot::DownBar, Slot::Down, Slot::Up, Slot::Down];

/// Valence of the metric `g_{kbar j}`.
pub const METRIC_VALENCE: [Slot; 2] = [Slot::DownBar, Slot::Down];

/// Valence of an endomorphism `h^a_b`.
pub const ENDO_VALENCE: [Slot; 2] = [Slot::Up, Slot::Down];
