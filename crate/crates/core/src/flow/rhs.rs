use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::balance::{ddbar_omega_power, power_factorials};
use crate::chern::ChernPackage;
use crate::deriv::Differentiator;
use crate::error::{LabError, Result};
use crate::forms::{n1n1_to_matrix, DifferentialForm};
use crate::grid::C64;
use crate::linalg::inverse_with_condition;
use crate::metric::{volume_norm, HermitianMetricField, VolumeForm};
use crate::tensor::TensorField;

use super::{real, SourceSpec};

/// Relative forward-map residual accepted from a pointwise solve.
pub const SOLVE_RESIDUAL: f64 = 1e-10;
/// Condition number beyond which a pointwise system counts as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

/// `d/dt eta = -Rtilde - 1/2 T Tbar - Phi`, layout `[k][j]`.
pub fn eta_rhs(eta: &HermitianMetricField, source: &SourceSpec, d: &Differentiator) -> Result<TensorField> {
    let pkg = ChernPackage::new(eta, d)?;
    let mut out = pkg.ricci_tilde.axpy(0.5, &pkg.torsion_square())?.scale(real(-1.0));
    match source {
        SourceSpec::None => {}
        SourceSpec::Phi(phi) => out = out.sub(phi)?,
        SourceSpec::Psi(_) => {
            return Err(LabError::Source("eta_rhs takes Phi; convert psi with derive_phi first".into()))
        }
    }
    Ok(out)
}

/// Forward map of the omega form at one node: the matrix (in the `sigma`
/// basis) of `||Omega|| [gdot ^ omega^{n-2}/(n-2)! - 1/2 tr(g^-1 gdot) omega^{n-1}/(n-1)!]`,
/// which equals `||Omega|| det G [1/2 tr(G^-1 X) G^-1 - G^-1 X G^-1]`.
///
/// `ginv` is `G^-1` with `G[k][j] = g_{kbar j}`; `x[k][j]` is `gdot_{kbar j}`.
pub fn omega_forward(ginv: &DMatrix<C64>, det: f64, norm: f64, x: &DMatrix<C64>) -> DMatrix<C64> {
    let gx = ginv * x;
    let tr = gx.trace();
    (ginv * (tr * real(0.5)) - gx * ginv) * real(norm * det)
}

fn hermitian_coords(n: usize) -> Vec<(usize, usize, bool)> {
    let mut out = Vec::with_capacity(n * n);
    for a in 0..n {
        out.push((a, a, false));
        for b in a + 1..n {
            out.push((a, b, false));
            out.push((a, b, true));
        }
    }
    out
}

fn to_coords(m: &DMatrix<C64>, coords: &[(usize, usize, bool)]) -> Vec<f64> {
    coords
        .iter()
        .map(|&(a, b, imag)| if imag { m[(a, b)].im } else { m[(a, b)].re })
        .collect()
}

fn from_coords(v: &[f64], n: usize, coords: &[(usize, usize, bool)]) -> DMatrix<C64> {
    let mut m = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
    for (&(a, b, imag), &x) in coords.iter().zip(v) {
        if imag {
            m[(a, b)].im += x;
            m[(b, a)].im -= x;
        } else if a == b {
            m[(a, a)].re += x;
        } else {
            m[(a, b)].re += x;
            m[(b, a)].re += x;
        }
    }
    m
}

fn norm1(m: &DMatrix<f64>) -> f64 {
    (0..m.ncols()).map(|c| m.column(c).abs().sum()).fold(0.0, f64::max)
}

/// Outcome of one pointwise solve.
#[derive(Debug, Clone)]
pub struct PointwiseSolve {
    pub x: DMatrix<C64>,
    pub condition: f64,
    pub residual: f64,
}

/// Solves `omega_forward(X) = b` for Hermitian `X` as a dense real
/// `n^2 x n^2` system over the real coordinates of Hermitian matrices.
/// Returns `None` when the system is numerically singular.
pub fn solve_pointwise(ginv: &DMatrix<C64>, det: f64, norm: f64, b: &DMatrix<C64>) -> Option<PointwiseSolve> {
    let n = ginv.nrows();
    let coords = hermitian_coords(n);
    let dim = coords.len();
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    for (c, _) in coords.iter().enumerate() {
        let mut unit = vec![0.0; dim];
        unit[c] = 1.0;
        let image = omega_forward(ginv, det, norm, &from_coords(&unit, n, &coords));
        for (r, v) in to_coords(&image, &coords).into_iter().enumerate() {
            a[(r, c)] = v;
        }
    }
    let lu = a.clone().lu();
    let inv = lu.try_inverse()?;
    let condition = norm1(&a) * norm1(&inv);
    if !condition.is_finite() || condition > SINGULAR_CONDITION {
        return None;
    }
    let rhs = nalgebra::DVector::from_vec(to_coords(b, &coords));
    let sol = &inv * rhs;
    let x = from_coords(sol.as_slice(), n, &coords);
    let scale = b.norm();
    let residual = if scale > 0.0 {
        (omega_forward(ginv, det, norm, &x) - b).norm() / scale
    } else {
        x.norm()
    };
    Some(PointwiseSolve { x, condition, residual })
}

/// `(i d dbar omega^{n-2} - psi) / (n-2)!` as a `sigma`-basis matrix field.
pub fn omega_source_matrix(g: &HermitianMetricField, psi: Option<&DifferentialForm>, d: &Differentiator) -> Result<TensorField> {
    let mut form = ddbar_omega_power(g, d)?;
    if let Some(p) = psi {
        form = form.sub(p)?;
    }
    let (fact, _) = power_factorials(g.n());
    Ok(n1n1_to_matrix(&form)?.scale(real(1.0 / fact)))
}

/// `d/dt g` of the omega form, layout `[k][j]`.
pub fn omega_rhs(g: &HermitianMetricField, vol: &VolumeForm, source: &SourceSpec, d: &Differentiator) -> Result<TensorField> {
    let psi = match source {
        SourceSpec::None => None,
        SourceSpec::Psi(p) => Some(p),
        SourceSpec::Phi(_) => return Err(LabError::Source("the omega form takes psi, not Phi".into())),
    };
    // a real form has a Hermitian matrix; drop the round-off skew part
    let b = omega_source_matrix(g, psi, d)?.hermitian_part();
    let norm = volume_norm(g, vol)?;
    let det = g.determinant();
    let grid = g.grid().clone();
    let solved: Vec<Result<DMatrix<C64>>> = (0..grid.node_count())
        .into_par_iter()
        .map(|i| {
            let gm = g.matrix(i);
            let (ginv, _) = inverse_with_condition(&gm).ok_or_else(|| LabError::SingularSystem {
                node: i,
                coords: grid.coordinates(i),
                condition: f64::INFINITY,
            })?;
            let bm = b.node_matrix(i);
            let s = solve_pointwise(&ginv, det[i], norm.values()[i].re, &bm).ok_or_else(|| {
                LabError::SingularSystem {
                    node: i,
                    coords: grid.coordinates(i),
                    condition: f64::INFINITY,
                }
            })?;
            if !(s.residual <= SOLVE_RESIDUAL) {
                return Err(LabError::SingularSystem {
                    node: i,
                    coords: grid.coordinates(i),
                    condition: s.condition,
                });
            }
            Ok(s.x)
        })
        .collect();
    let mats = solved.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(TensorField::from_node_matrices(grid, &mats))
}

/// `d/dt eta = ||Omega|| (gdot - 1/2 tr(g^-1 gdot) g)` from `d/dt g`.
pub fn eta_rate_from_omega_rate(g: &HermitianMetricField, gdot: &TensorField, vol: &VolumeForm) -> Result<TensorField> {
    let norm = volume_norm(g, vol)?;
    let (ginv, _) = g.inverse()?;
    let n = g.n();
    let nodes = g.grid().node_count();
    let mut tr = vec![C64::new(0.0, 0.0); nodes];
    for j in 0..n {
        for k in 0..n {
            let a = ginv.at(&[j, k]);
            let b = gdot.at(&[k, j]);
            for i in 0..nodes {
                tr[i] += a[i] * b[i];
            }
        }
    }
    let half_tr: Vec<C64> = tr.iter().map(|v| v * 0.5).collect();
    Ok(gdot.sub(&g.tensor().mul_scalar_field(&half_tr))?.mul_scalar_field(norm.values()))
}

/// `Phi = -d/dt eta|_{omega flow with psi} - Rtilde(eta) - 1/2 T Tbar(eta)`:
/// the eta-form source that reproduces the omega flow driven by `psi` at
/// the current state. Zero up to solver round-off when `psi = 0` and the
/// metric is conformally balanced.
pub fn derive_phi(
    psi: Option<&DifferentialForm>,
    eta: &HermitianMetricField,
    vol: &VolumeForm,
    d: &Differentiator,
) -> Result<TensorField> {
    let g = super::omega_of(eta, vol)?;
    let source = match psi {
        Some(p) => {
            let s = SourceSpec::Psi(p.clone());
            s.validate(super::Formulation::Omega, d)?;
            s
        }
        None => SourceSpec::None,
    };
    let gdot = omega_rhs(&g, vol, &source, d)?;
    let eta_dot = eta_rate_from_omega_rate(&g, &gdot, vol)?;
    let flow = eta_rhs(eta, &SourceSpec::None, d)?;
    // eta_rhs without source is -Rtilde - 1/2 T Tbar, so Phi = flow - eta_dot
    Ok(flow.sub(&eta_dot)?.hermitian_part())
}
