//! Evolution identities along stored eta-form trajectories. Time
//! derivatives are centered differences over consecutive snapshots; every
//! spatial quantity is evaluated with the primary scheme at the centre
//! snapshot.

use crate::chern::{connection, ChernPackage, Slot, CURVATURE_VALENCE, ENDO_VALENCE};
use crate::deriv::{Differentiator, Direction};
use crate::endo::connection_inner;
use crate::error::{LabError, Result};
use crate::flow::{derive_phi, FlowState, Formulation, Trajectory};
use crate::forms::DifferentialForm;
use crate::grid::C64;
use crate::metric::{volume_norm, HermitianMetricField};
use crate::tensor::{matmul, TensorField};

use super::{Accum, ResidualReport, Verifier, EVOLUTION_TOLERANCE, S_EVOLUTION_TOLERANCE};

const ZERO: C64 = C64::new(0.0, 0.0);

/// Tolerance of the check `d/dt (Gamma - Gamma_hat) = g^-1 nabla gdot`.
pub const CONNECTION_RATE_TOLERANCE: f64 = 1e-6;

/// Consecutive snapshots `(before, centre, after)` with spacing `dt`.
struct Window<'a> {
    before: &'a FlowState,
    centre: &'a FlowState,
    after: &'a FlowState,
    dt: f64,
}

impl Window<'_> {
    fn rate(&self, f: impl Fn(&FlowState) -> Result<Vec<C64>>) -> Result<Vec<C64>> {
        let a = f(self.after)?;
        let b = f(self.before)?;
        Ok(a.iter().zip(b.iter()).map(|(x, y)| (x - y) / (2.0 * self.dt)).collect())
    }

    fn tensor_rate(&self, f: impl Fn(&FlowState) -> Result<TensorField>) -> Result<TensorField> {
        let a = f(self.after)?;
        let b = f(self.before)?;
        Ok(a.sub(&b)?.scale(C64::new(1.0 / (2.0 * self.dt), 0.0)))
    }
}

/// Splits an eta-form trajectory into centred windows; the snapshots must be
/// uniformly spaced.
fn windows(traj: &Trajectory) -> Result<(Vec<Window<'_>>, f64)> {
    let states = &traj.states;
    if states.len() < 3 {
        return Err(LabError::Trajectory(format!(
            "centred time differences need at least 3 snapshots, got {}",
            states.len()
        )));
    }
    if states.iter().any(|s| s.formulation != Formulation::Eta) {
        return Err(LabError::Trajectory("evolution identities are stated for eta-form trajectories".into()));
    }
    let dt = states[1].t - states[0].t;
    for w in states.windows(2) {
        let step = w[1].t - w[0].t;
        if !(dt > 0.0) || (step - dt).abs() > 1e-9 * dt {
            return Err(LabError::Trajectory(format!(
                "snapshots are not uniformly spaced: {step:e} vs {dt:e}"
            )));
        }
    }
    let out = states
        .windows(3)
        .map(|w| Window { before: &w[0], centre: &w[1], after: &w[2], dt })
        .collect();
    Ok((out, dt))
}

fn scalar_trace(ginv: &TensorField, a: &TensorField) -> Vec<C64> {
    let n = ginv.n();
    let mut out = vec![ZERO; ginv.node_count()];
    for j in 0..n {
        for k in 0..n {
            let gi = ginv.at(&[j, k]);
            let av = a.at(&[k, j]);
            for i in 0..out.len() {
                out[i] += gi[i] * av[i];
            }
        }
    }
    out
}

/// The `Phi` term of the eta-form flow as seen by the evolution checks.
#[derive(Debug, Clone, Copy, Default)]
pub enum Forcing<'a> {
    #[default]
    Zero,
    /// A fixed Hermitian field.
    Field(&'a TensorField),
    /// Derived from a `Psi` source at every snapshot, for trajectories of the
    /// omega-form converted to eta-form.
    FromPsi(&'a DifferentialForm),
}

impl Forcing<'_> {
    fn at(&self, state: &FlowState, d: &Differentiator) -> Result<TensorField> {
        let grid = state.metric.grid();
        match self {
            Forcing::Zero => Ok(TensorField::zeros(grid.clone(), 2)),
            Forcing::Field(p) if p.grid() == grid => Ok((*p).clone()),
            Forcing::Field(_) => Err(LabError::GridMismatch),
            Forcing::FromPsi(psi) => derive_phi(Some(psi), &state.metric, &state.volume, d),
        }
    }
}

/// `X^a_b = g^{a cbar} X_{cbar b}` for a `[k][j]` field.
fn raise(ginv: &TensorField, x: &TensorField) -> TensorField {
    matmul(ginv, x)
}

impl Verifier {
    fn evolution_report(&self, name: &str, acc: &Accum, tolerance: f64, dt: f64, relative: bool) -> ResidualReport {
        ResidualReport::build(
            name,
            acc.max(),
            acc.mean(),
            tolerance,
            self.grid(),
            self.oracle_spec(Some(dt), relative),
        )
    }

    /// `(d_t - Delta) Tr h = -g^{q pbar} (h^-1)^c_m nablahat_q h^m_j nablahat_pbar h^j_c
    ///  - g^{q pbar} Rhat_{pbar q}^a_j h^j_a - 1/2 ghat^{j kbar} (T Tbar)_{kbar j}
    ///  - ghat^{j kbar} Phi_{kbar j}` with `h = ghat^-1 g`.
    pub fn trh_evolution(
        &self,
        traj: &Trajectory,
        reference: &HermitianMetricField,
        phi: Forcing<'_>,
    ) -> Result<ResidualReport> {
        let (wins, dt) = windows(traj)?;
        let d = &self.primary;
        let ref_pkg = ChernPackage::new(reference, d)?;
        let ref_inv = &ref_pkg.ginv;
        let n = reference.n();
        let nodes = self.grid().node_count();
        let tr_h = |s: &FlowState| Ok(scalar_trace(ref_inv, s.metric.tensor()));
        let mut acc = Accum::default();
        for w in &wins {
            let g = &w.centre.metric;
            let phi = phi.at(w.centre, d)?;
            let pkg = ChernPackage::new(g, d)?;
            let lap = pkg.scalar_laplacian(&tr_h(w.centre)?);
            let lhs: Vec<C64> = w.rate(tr_h)?.iter().zip(lap.iter()).map(|(a, b)| a - b).collect();

            let h = matmul(ref_inv, g.tensor());
            let h_inv = matmul(&pkg.ginv, reference.tensor());
            // [q][m][j] and [p][j][c]
            let dh = ref_pkg.covariant_derivative(&h, &ENDO_VALENCE, Direction::Holo)?;
            let dbar_h = ref_pkg.covariant_derivative(&h, &ENDO_VALENCE, Direction::Anti)?;
            let mut rhs = vec![ZERO; nodes];
            for q in 0..n {
                for p in 0..n {
                    let gqp = pkg.ginv.at(&[q, p]);
                    for c in 0..n {
                        for m in 0..n {
                            let hi = h_inv.at(&[c, m]);
                            for j in 0..n {
                                let a = dh.at(&[q, m, j]);
                                let b = dbar_h.at(&[p, j, c]);
                                for i in 0..nodes {
                                    rhs[i] -= gqp[i] * hi[i] * a[i] * b[i];
                                }
                            }
                        }
                    }
                    for a in 0..n {
                        for j in 0..n {
                            let r = ref_pkg.curvature.at(&[p, q, a, j]);
                            let hv = h.at(&[j, a]);
                            for i in 0..nodes {
                                rhs[i] -= gqp[i] * r[i] * hv[i];
                            }
                        }
                    }
                }
            }
            let tt = scalar_trace(ref_inv, &pkg.torsion_square());
            let lam = scalar_trace(ref_inv, &phi);
            for i in 0..nodes {
                rhs[i] -= 0.5 * tt[i] + lam[i];
            }
            acc.diff(&lhs, &rhs);
        }
        Ok(self.evolution_report("trh_evolution", &acc, EVOLUTION_TOLERANCE, dt, false))
    }

    /// `(d_t - Delta) log ||Omega||_g = 1/4 |T|^2 + 1/2 i Lambda Phi` and the
    /// intermediate form `d_t log ||Omega||_g = 1/2 R + 1/4 |T|^2 + 1/2 i Lambda Phi`,
    /// with `i Lambda Phi = g^{j kbar} Phi_{kbar j}`.
    pub fn dilaton_evolution(&self, traj: &Trajectory, phi: Forcing<'_>) -> Result<Vec<ResidualReport>> {
        let (wins, dt) = windows(traj)?;
        let d = &self.primary;
        let log_norm = |s: &FlowState| -> Result<Vec<C64>> {
            Ok(volume_norm(&s.metric, &s.volume)?
                .values()
                .iter()
                .map(|v| C64::new(v.re.ln(), 0.0))
                .collect())
        };
        let mut full = Accum::default();
        let mut intermediate = Accum::default();
        for w in &wins {
            let g = &w.centre.metric;
            let phi = phi.at(w.centre, d)?;
            let pkg = ChernPackage::new(g, d)?;
            let rate = w.rate(log_norm)?;
            let lap = pkg.scalar_laplacian(&log_norm(w.centre)?);
            let t2 = pkg.torsion_norm_sq();
            let lam = pkg.trace_with_inverse(&phi);
            let source: Vec<C64> = t2.iter().zip(lam.iter()).map(|(t, l)| 0.25 * t + 0.5 * l).collect();
            let lhs: Vec<C64> = rate.iter().zip(lap.iter()).map(|(a, b)| a - b).collect();
            full.diff(&lhs, &source);
            let rhs: Vec<C64> = source
                .iter()
                .zip(pkg.scalar.values().iter())
                .map(|(s, r)| s + 0.5 * r)
                .collect();
            intermediate.diff(&rate, &rhs);
        }
        Ok(vec![
            self.evolution_report("dilaton_evolution", &full, EVOLUTION_TOLERANCE, dt, false),
            self.evolution_report("dilaton_evolution_intermediate", &intermediate, EVOLUTION_TOLERANCE, dt, false),
        ])
    }

    /// Evolution of `S = |Gamma - Gamma_hat|^2_g` along the flow, with
    /// `A = Gamma - Gamma_hat` (layout `[a][m][b]` for `A_m^a_b`) and
    /// `<X, Y> = g^{m cbar} g_{mubar b} g^{l abar} X_m^b_l conj(Y_c^mu_a)`:
    ///
    /// `(d_t - Delta) S = -|nablabar A|^2 - |nabla A|^2 + 2 Re <Y, A> - E-block`,
    /// `Y = -g^{p qbar} nabla_p Rhat_{qbar m}^a_b + g^{p qbar} T^r_{mp} R_{qbar r}^a_b
    ///  + nabla_m Q^a_b - nabla_m Phi^a_b`,
    ///
    /// where `Q = -1/2 T Tbar` and the E-block is
    /// `A_m^b_l conj(A_c^mu_a) {E^{m cbar} g_{mubar b} g^{l abar} - g^{m cbar} E_{mubar b} g^{l abar}
    ///  + g^{m cbar} g_{mubar b} E^{l abar}}` for `E = Q - Phi`.
    ///
    /// Reports the full identity (relative to the largest term), the heat
    /// operator `(d_t - Delta) A = Y`, and `d_t A = g^{a cbar} nabla_m gdot_{cbar b}`.
    pub fn s_evolution(
        &self,
        traj: &Trajectory,
        reference: &HermitianMetricField,
        phi: Forcing<'_>,
    ) -> Result<Vec<ResidualReport>> {
        let (wins, dt) = windows(traj)?;
        let d = &self.primary;
        let n = reference.n();
        let nodes = self.grid().node_count();
        let (_, gamma_hat) = connection(reference, d)?;
        let ref_pkg = ChernPackage::new(reference, d)?;
        let a_of = |s: &FlowState| -> Result<TensorField> {
            let (_, gamma) = connection(&s.metric, d)?;
            gamma.sub(&gamma_hat)
        };
        let conn_valence = [Slot::Up, Slot::Down, Slot::Down];

        let mut full = Accum::default();
        let mut heat = Accum::default();
        let mut rate_acc = Accum::default();
        let mut scale: f64 = 0.0;
        for w in &wins {
            let g = &w.centre.metric;
            let phi = phi.at(w.centre, d)?;
            let pkg = ChernPackage::new(g, d)?;
            let ginv = &pkg.ginv;
            let a = a_of(w.centre)?;

            // d_t A against g^-1 nabla gdot
            let a_rate = w.tensor_rate(a_of)?;
            let g_rate = w.tensor_rate(|s| Ok(s.metric.tensor().clone()))?;
            let ngdot = pkg.covariant_derivative(&g_rate, &crate::chern::METRIC_VALENCE, Direction::Holo)?;
            for al in 0..n {
                for m in 0..n {
                    for b in 0..n {
                        let mut v = vec![ZERO; nodes];
                        for c in 0..n {
                            let gi = ginv.at(&[al, c]);
                            let x = ngdot.at(&[m, c, b]);
                            for i in 0..nodes {
                                v[i] += gi[i] * x[i];
                            }
                        }
                        rate_acc.diff(a_rate.at(&[al, m, b]), &v);
                    }
                }
            }

            // Y, layout [a][m][b]
            let curv_hat = ref_pkg.curvature.clone();
            // [p][q][m][a][b]
            let n_rhat = pkg.covariant_derivative(&curv_hat, &CURVATURE_VALENCE, Direction::Holo)?;
            let q_low = pkg.torsion_square().scale(C64::new(-0.5, 0.0));
            let q_up = raise(ginv, &q_low);
            let phi_up = raise(ginv, &phi);
            // [m][a][b]
            let nq = pkg.covariant_derivative(&q_up, &ENDO_VALENCE, Direction::Holo)?;
            let nphi = pkg.covariant_derivative(&phi_up, &ENDO_VALENCE, Direction::Holo)?;
            let mut y = TensorField::zeros(self.grid().clone(), 3);
            for al in 0..n {
                for m in 0..n {
                    for b in 0..n {
                        let mut v: Vec<C64> = nq
                            .at(&[m, al, b])
                            .iter()
                            .zip(nphi.at(&[m, al, b]).iter())
                            .map(|(x, z)| x - z)
                            .collect();
                        for p in 0..n {
                            for q in 0..n {
                                let gi = ginv.at(&[p, q]);
                                let r = n_rhat.at(&[p, q, m, al, b]);
                                for i in 0..nodes {
                                    v[i] -= gi[i] * r[i];
                                }
                                for r_ in 0..n {
                                    let t = pkg.torsion.at(&[r_, m, p]);
                                    let rc = pkg.curvature.at(&[q, r_, al, b]);
                                    for i in 0..nodes {
                                        v[i] += gi[i] * t[i] * rc[i];
                                    }
                                }
                            }
                        }
                        y.set(&[al, m, b], v);
                    }
                }
            }

            // (d_t - Delta) A against Y
            let lap_a = pkg.laplacian(&a, &conn_valence)?;
            let heat_a = a_rate.sub(&lap_a)?;
            for c in 0..y.component_count() {
                heat.diff(heat_a.comp(c), y.comp(c));
            }

            // full identity
            let s_of = |s: &FlowState| -> Result<Vec<C64>> {
                let (gi, _) = s.metric.inverse()?;
                let x = a_of(s)?;
                Ok(connection_inner(s.metric.tensor(), &gi, &x, &x))
            };
            let s_rate = w.rate(s_of)?;
            let s_lap = pkg.scalar_laplacian(&s_of(w.centre)?);
            let lhs: Vec<C64> = s_rate.iter().zip(s_lap.iter()).map(|(x, z)| x - z).collect();

            // nabla A: [p][a][m][b]; nablabar A: [q][a][m][b]
            let na = pkg.covariant_derivative(&a, &conn_valence, Direction::Holo)?;
            let nba = pkg.covariant_derivative(&a, &conn_valence, Direction::Anti)?;
            let block = n * n * n;
            let slice = |t: &TensorField, p: usize| -> TensorField {
                TensorField::from_components(
                    self.grid().clone(),
                    3,
                    t.components()[p * block..(p + 1) * block].to_vec(),
                )
                .expect("slice layout")
            };
            let mut grad_sq = vec![ZERO; nodes];
            let mut grad_bar_sq = vec![ZERO; nodes];
            let na_s: Vec<TensorField> = (0..n).map(|p| slice(&na, p)).collect();
            let nba_s: Vec<TensorField> = (0..n).map(|p| slice(&nba, p)).collect();
            for p in 0..n {
                for q in 0..n {
                    let gi = ginv.at(&[p, q]);
                    let x = connection_inner(g.tensor(), ginv, &na_s[p], &na_s[q]);
                    let z = connection_inner(g.tensor(), ginv, &nba_s[q], &nba_s[p]);
                    for i in 0..nodes {
                        grad_sq[i] += gi[i] * x[i];
                        grad_bar_sq[i] += gi[i] * z[i];
                    }
                }
            }
            let ya = connection_inner(g.tensor(), ginv, &y, &a);

            // E-block with E = Q - Phi
            let e_low = q_low.sub(&phi)?;
            let e_up_up = matmul(&matmul(ginv, &e_low), ginv);
            let mut eblock = vec![ZERO; nodes];
            let gt = g.tensor();
            for m in 0..n {
                for c in 0..n {
                    for b in 0..n {
                        for l in 0..n {
                            let x = a.at(&[b, m, l]);
                            for mu in 0..n {
                                for al in 0..n {
                                    let z = a.at(&[mu, c, al]);
                                    let t1 = e_up_up.at(&[m, c]);
                                    let g1 = gt.at(&[mu, b]);
                                    let gi1 = ginv.at(&[l, al]);
                                    let gi2 = ginv.at(&[m, c]);
                                    let e2 = e_low.at(&[mu, b]);
                                    let e3 = e_up_up.at(&[l, al]);
                                    for i in 0..nodes {
                                        let braces = t1[i] * g1[i] * gi1[i] - gi2[i] * e2[i] * gi1[i]
                                            + gi2[i] * g1[i] * e3[i];
                                        eblock[i] += x[i] * z[i].conj() * braces;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            let rhs: Vec<C64> = (0..nodes)
                .map(|i| -grad_bar_sq[i] - grad_sq[i] + 2.0 * ya[i].re - eblock[i])
                .collect();
            for i in 0..nodes {
                let terms = [
                    s_rate[i].norm(),
                    s_lap[i].norm(),
                    grad_sq[i].norm(),
                    grad_bar_sq[i].norm(),
                    2.0 * ya[i].re.abs(),
                    eblock[i].norm(),
                ];
                scale = terms.into_iter().fold(scale, f64::max);
            }
            full.diff(&lhs, &rhs);
        }
        let mut rel = Accum::default();
        if scale > 0.0 {
            rel.push(full.max() / scale);
        } else {
            rel.push(full.max());
        }
        let mean = if scale > 0.0 { full.mean() / scale } else { full.mean() };
        let mut s_report = self.evolution_report("s_evolution", &rel, S_EVOLUTION_TOLERANCE, dt, true);
        s_report.mean_residual = mean;
        Ok(vec![
            s_report.with_note(format!("absolute residual {:e}, term scale {scale:e}", full.max())),
            self.evolution_report("s_heat_operator", &heat, EVOLUTION_TOLERANCE, dt, false),
            self.evolution_report("s_connection_rate", &rate_acc, CONNECTION_RATE_TOLERANCE, dt, false),
        ])
    }
}
