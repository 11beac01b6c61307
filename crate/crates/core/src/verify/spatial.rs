use crate::balance::{balanced_defect, stationarity_defect};
use crate::chern::{connection, ChernPackage, Slot, CURVATURE_VALENCE, ENDO_VALENCE, METRIC_VALENCE};
use crate::deriv::{Differentiator, Direction};
use crate::endo::connection_inner;
use crate::error::Result;
use crate::forms::DifferentialForm;
use crate::grid::C64;
use crate::metric::{volume_norm, HermitianMetricField, VolumeForm};
use crate::tensor::{matmul, TensorField};

use super::{random_tensor, Accum, ResidualReport, Sides, Verifier, BALANCED_TOLERANCE};

const ZERO: C64 = C64::new(0.0, 0.0);

fn components(t: &TensorField) -> Vec<Vec<C64>> {
    t.components().to_vec()
}

fn log_norm(g: &HermitianMetricField, vol: &VolumeForm, power: f64) -> Result<Vec<C64>> {
    Ok(volume_norm(g, vol)?
        .values()
        .iter()
        .map(|v| C64::new(power * v.re.ln(), 0.0))
        .collect())
}

fn connection_lhs(m: &[HermitianMetricField], d: &Differentiator) -> Result<Sides> {
    let (ginv, gamma) = connection(&m[0], d)?;
    let (_, gamma_hat) = connection(&m[1], d)?;
    let diff = gamma.sub(&gamma_hat)?;
    let s = connection_inner(m[0].tensor(), &ginv, &diff, &diff);
    Ok(vec![components(&diff), components(&diff), vec![s]])
}

fn connection_rhs(m: &[HermitianMetricField], d: &Differentiator) -> Result<Sides> {
    let (g, reference) = (&m[0], &m[1]);
    let n = g.n();
    let nodes = g.grid().node_count();
    let ref_pkg = ChernPackage::new(reference, d)?;
    // [i][l][j] = nabla_hat_i g_{lbar j}
    let nabla_g = ref_pkg.covariant_derivative(g.tensor(), &METRIC_VALENCE, Direction::Holo)?;
    let h = matmul(&ref_pkg.ginv, g.tensor());
    let nabla_h = ref_pkg.covariant_derivative(&h, &ENDO_VALENCE, Direction::Holo)?;
    let (ginv, _) = g.inverse()?;
    // h^-1 = g^-1 ghat
    let h_inv = matmul(&ginv, reference.tensor());

    let mut via_metric = Vec::with_capacity(n * n * n);
    let mut via_endo = Vec::with_capacity(n * n * n);
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let mut a = vec![ZERO; nodes];
                let mut b = vec![ZERO; nodes];
                for l in 0..n {
                    let gi = ginv.at(&[k, l]);
                    let ng = nabla_g.at(&[i, l, j]);
                    let hi = h_inv.at(&[k, l]);
                    let nh = nabla_h.at(&[i, l, j]);
                    for x in 0..nodes {
                        a[x] += gi[x] * ng[x];
                        b[x] += hi[x] * nh[x];
                    }
                }
                via_metric.push(a);
                via_endo.push(b);
            }
        }
    }

    // |nabla_hat g|^2_g with all three indices raised by g
    let mut s_direct = vec![ZERO; nodes];
    for m in 0..n {
        for c in 0..n {
            let gmc = ginv.at(&[m, c]);
            for k in 0..n {
                for nu in 0..n {
                    let gnk = ginv.at(&[nu, k]);
                    for l in 0..n {
                        let w = nabla_g.at(&[m, k, l]);
                        for a in 0..n {
                            let gla = ginv.at(&[l, a]);
                            let wc = nabla_g.at(&[c, nu, a]);
                            for x in 0..nodes {
                                s_direct[x] += gmc[x] * gnk[x] * gla[x] * w[x] * wc[x].conj();
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(vec![via_metric, via_endo, vec![s_direct]])
}

fn bianchi_lhs(m: &[HermitianMetricField], d: &Differentiator) -> Result<Sides> {
    let pkg = ChernPackage::new(&m[0], d)?;
    let r = components(&pkg.curvature_lowered());
    let nabla = pkg.covariant_derivative(&pkg.curvature, &CURVATURE_VALENCE, Direction::Holo)?;
    let nabla_bar = pkg.covariant_derivative(&pkg.curvature, &CURVATURE_VALENCE, Direction::Anti)?;
    Ok(vec![r.clone(), r, components(&nabla), components(&nabla_bar)])
}

fn bianchi_rhs(m: &[HermitianMetricField], d: &Differentiator) -> Result<Sides> {
    let g = &m[0];
    let n = g.n();
    let nodes = g.grid().node_count();
    let pkg = ChernPackage::new(g, d)?;
    let r_low = pkg.curvature_lowered();
    let t_low = &pkg.torsion_low;
    // [l][k][j][m]
    let nabla_t = pkg.covariant_derivative(t_low, &[Slot::DownBar, Slot::Down, Slot::Down], Direction::Anti)?;
    let mut t_bar = TensorField::zeros(g.grid().clone(), 3);
    for l in 0..n {
        for k in 0..n {
            for j in 0..n {
                t_bar.set(&[l, k, j], t_low.at(&[j, l, k]).iter().map(|v| v.conj()).collect());
            }
        }
    }
    // [m][l][k][j]
    let nabla_tbar = pkg.covariant_derivative(&t_bar, &[Slot::DownBar, Slot::DownBar, Slot::Down], Direction::Holo)?;

    let mut first = Vec::new();
    let mut first_conj = Vec::new();
    for l in 0..n {
        for m in 0..n {
            for k in 0..n {
                for j in 0..n {
                    let a = r_low.at(&[l, j, k, m]);
                    let b = nabla_t.at(&[l, k, j, m]);
                    first.push(a.iter().zip(b.iter()).map(|(x, y)| x + y).collect());
                    let c = r_low.at(&[k, m, l, j]);
                    let e = nabla_tbar.at(&[m, l, k, j]);
                    first_conj.push(c.iter().zip(e.iter()).map(|(x, y)| x - y).collect());
                }
            }
        }
    }

    // [m][k][j][a][b]
    let nabla_r = pkg.covariant_derivative(&pkg.curvature, &CURVATURE_VALENCE, Direction::Holo)?;
    let nbar_r = pkg.covariant_derivative(&pkg.curvature, &CURVATURE_VALENCE, Direction::Anti)?;
    let curv = &pkg.curvature;
    let tors = &pkg.torsion;
    let mut second = Vec::new();
    let mut second_bar = Vec::new();
    for m in 0..n {
        for k in 0..n {
            for j in 0..n {
                for a in 0..n {
                    for b in 0..n {
                        let mut rhs = nabla_r.at(&[j, k, m, a, b]).to_vec();
                        let mut rhs_bar = nbar_r.at(&[k, m, j, a, b]).to_vec();
                        for r in 0..n {
                            let t = tors.at(&[r, j, m]);
                            let rv = curv.at(&[k, r, a, b]);
                            // barred: l = m, conj(T^r_{k m}) R_{rbar j}^a_b
                            let tb = tors.at(&[r, k, m]);
                            let rb = curv.at(&[r, j, a, b]);
                            for x in 0..nodes {
                                rhs[x] += t[x] * rv[x];
                                rhs_bar[x] += tb[x].conj() * rb[x];
                            }
                        }
                        second.push(rhs);
                        second_bar.push(rhs_bar);
                    }
                }
            }
        }
    }
    Ok(vec![first, first_conj, second, second_bar])
}

const COMMUTATOR_SLOTS: [Slot; 3] = [Slot::Down, Slot::DownBar, Slot::Up];

fn commutator_lhs(m: &[HermitianMetricField], f: &[TensorField], d: &Differentiator) -> Result<Sides> {
    let n = m[0].n();
    let pkg = ChernPackage::new(&m[0], d)?;
    let w = &f[0];
    let mut out = Vec::new();
    for slot in COMMUTATOR_SLOTS {
        // nabla_j nabla_kbar W -> [j][k][i]
        let a = pkg.covariant_derivative(w, &[slot], Direction::Anti)?;
        let a = pkg.covariant_derivative(&a, &[Slot::DownBar, slot], Direction::Holo)?;
        // nabla_kbar nabla_j W -> [k][j][i]
        let b = pkg.covariant_derivative(w, &[slot], Direction::Holo)?;
        let b = pkg.covariant_derivative(&b, &[Slot::Down, slot], Direction::Anti)?;
        let mut group = Vec::new();
        for j in 0..n {
            for k in 0..n {
                for i in 0..n {
                    group.push(a.at(&[j, k, i]).iter().zip(b.at(&[k, j, i]).iter()).map(|(x, y)| x - y).collect());
                }
            }
        }
        out.push(group);
    }
    Ok(out)
}

fn commutator_rhs(m: &[HermitianMetricField], f: &[TensorField], d: &Differentiator) -> Result<Sides> {
    let n = m[0].n();
    let nodes = m[0].grid().node_count();
    let pkg = ChernPackage::new(&m[0], d)?;
    let curv = &pkg.curvature;
    let w = &f[0];
    let mut out = Vec::new();
    for slot in COMMUTATOR_SLOTS {
        let mut group = Vec::new();
        for j in 0..n {
            for k in 0..n {
                for i in 0..n {
                    let mut rhs = vec![ZERO; nodes];
                    for p in 0..n {
                        let wv = w.at(&[p]);
                        let r = match slot {
                            Slot::Down => curv.at(&[k, j, p, i]),
                            Slot::DownBar => curv.at(&[j, k, p, i]),
                            _ => curv.at(&[k, j, i, p]),
                        };
                        for x in 0..nodes {
                            rhs[x] += match slot {
                                Slot::Down => -r[x] * wv[x],
                                Slot::DownBar => r[x].conj() * wv[x],
                                _ => r[x] * wv[x],
                            };
                        }
                    }
                    group.push(rhs);
                }
            }
        }
        out.push(group);
    }
    Ok(out)
}

fn quasilinear_rhs(m: &[HermitianMetricField], d: &Differentiator) -> Result<Sides> {
    let g = &m[0];
    let n = g.n();
    let nodes = g.grid().node_count();
    let (ginv, _) = g.inverse()?;
    let (dg, dbar_g) = g.tensor().gradient(d);
    // [p][q][k][j] = d_pbar d_q g_{kbar j}
    let ddg = dg.derivative(d, Direction::Anti);
    let mut out = Vec::new();
    for k in 0..n {
        for j in 0..n {
            let mut rhs = vec![ZERO; nodes];
            for q in 0..n {
                for p in 0..n {
                    let gqp = ginv.at(&[q, p]);
                    let second = ddg.at(&[p, q, k, j]);
                    for x in 0..nodes {
                        rhs[x] -= gqp[x] * second[x];
                    }
                    for c in 0..n {
                        let a = dbar_g.at(&[p, k, c]);
                        for l in 0..n {
                            let gcl = ginv.at(&[c, l]);
                            let b = dg.at(&[q, l, j]);
                            for x in 0..nodes {
                                rhs[x] += gqp[x] * gcl[x] * a[x] * b[x];
                            }
                        }
                    }
                }
            }
            out.push(rhs);
        }
    }
    Ok(vec![out])
}

impl Verifier {
    /// `tau_i = d_i log ||Omega||` on conformally balanced metrics.
    pub fn tau_identity(&self, g: &HermitianMetricField, vol: &VolumeForm) -> Result<ResidualReport> {
        let defect = balanced_defect(g, vol, &self.primary)?;
        if !(defect < BALANCED_TOLERANCE) {
            return Ok(ResidualReport::precondition_failed(
                "tau_identity",
                self.grid(),
                self.oracle_spec(None, false),
                format!("balanced defect {defect:e} exceeds {BALANCED_TOLERANCE:e}"),
            ));
        }
        let vol = *vol;
        let mut reports = self.compare(
            &["tau_identity"],
            &[g],
            &[],
            |m, _, d| Ok(vec![components(&ChernPackage::new(&m[0], d)?.tau)]),
            |m, _, d| {
                let ln = log_norm(&m[0], &vol, 1.0)?;
                Ok(vec![(0..m[0].n()).map(|i| d.complex(&ln, i, Direction::Holo)).collect()])
            },
        )?;
        Ok(reports.remove(0).with_note(format!("balanced defect {defect:e}")))
    }

    /// Connection difference `Gamma - Gamma_hat` against
    /// `g^{k lbar} nabla_hat_i g_{lbar j}` and against `h^-1 nabla_hat h`,
    /// plus the two-path equality `|Gamma - Gamma_hat|^2_g = |nabla_hat g|^2_g`.
    pub fn connection_difference(&self, g: &HermitianMetricField, reference: &HermitianMetricField) -> Result<Vec<ResidualReport>> {
        self.compare(
            &["connection_difference", "connection_difference_endomorphism", "s_two_path"],
            &[g, reference],
            &[],
            |m, _, d| connection_lhs(m, d),
            |m, _, d| connection_rhs(m, d),
        )
    }

    /// First Bianchi identity and its conjugate, second Bianchi identity in
    /// unbarred and barred form.
    ///
    /// * `R_{lbar m kbar j} = R_{lbar j kbar m} + nabla_lbar T_{kbar jm}`
    /// * `R_{lbar m kbar j} = R_{kbar m lbar j} - nabla_m Tbar_{lbar kbar j}`,
    ///   `Tbar_{lbar kbar j} = conj(T_{jbar l k})`
    /// * `nabla_m R_{kbar j}^a_b = nabla_j R_{kbar m}^a_b + T^r_{jm} R_{kbar r}^a_b`
    /// * `nabla_lbar R_{kbar j}^a_b = nabla_kbar R_{lbar j}^a_b + conj(T^r_{kl}) R_{rbar j}^a_b`
    pub fn bianchi(&self, g: &HermitianMetricField) -> Result<Vec<ResidualReport>> {
        self.compare(
            &["bianchi_first", "bianchi_first_conjugate", "bianchi_second", "bianchi_second_barred"],
            &[g],
            &[],
            |m, _, d| bianchi_lhs(m, d),
            |m, _, d| bianchi_rhs(m, d),
        )
    }

    /// `[nabla_j, nabla_kbar] W_i = -R_{kbar j}^p_i W_p`,
    /// `[nabla_j, nabla_kbar] W_ibar = conj(R_{jbar k}^p_i) W_pbar` and
    /// `[nabla_j, nabla_kbar] W^p = R_{kbar j}^p_q W^q` on seeded random
    /// fields.
    pub fn commutator_convention(&self, g: &HermitianMetricField, seed: u64) -> Result<Vec<ResidualReport>> {
        let w = random_tensor(self.grid().clone(), 1, seed, 1);
        self.compare(
            &["commutator_covector", "commutator_covector_barred", "commutator_vector"],
            &[g],
            &[&w],
            commutator_lhs,
            commutator_rhs,
        )
    }

    /// `Rtilde_{kbar j} + g^{q pbar} d_pbar d_q g_{kbar j}
    ///  - g^{q pbar} g^{c lbar} d_pbar g_{kbar c} d_q g_{lbar j} = 0`.
    pub fn quasilinear_ricci(&self, g: &HermitianMetricField) -> Result<ResidualReport> {
        let mut r = self.compare(
            &["quasilinear_ricci"],
            &[g],
            &[],
            |m, _, d| Ok(vec![components(&ChernPackage::new(&m[0], d)?.ricci_tilde)]),
            |m, _, d| quasilinear_rhs(m, d),
        )?;
        Ok(r.remove(0))
    }

    /// `nabla g = 0` in both directions.
    pub fn metric_compatibility(&self, g: &HermitianMetricField) -> Result<ResidualReport> {
        let pkg = ChernPackage::new(g, &self.primary)?;
        let mut acc = Accum::default();
        for dir in [Direction::Holo, Direction::Anti] {
            let ng = pkg.covariant_derivative(g.tensor(), &METRIC_VALENCE, dir)?;
            for c in ng.components() {
                for v in c {
                    acc.push(v.norm());
                }
            }
        }
        Ok(self.report("metric_compatibility", &acc))
    }

    /// `max |Rtilde - Rtilde^*|`.
    pub fn ricci_tilde_hermitian(&self, g: &HermitianMetricField) -> Result<ResidualReport> {
        let pkg = ChernPackage::new(g, &self.primary)?;
        let mut acc = Accum::default();
        let n = g.n();
        for a in 0..n {
            for b in 0..n {
                let x = pkg.ricci_tilde.at(&[a, b]);
                let y: Vec<C64> = pkg.ricci_tilde.at(&[b, a]).iter().map(|v| v.conj()).collect();
                acc.diff(x, &y);
            }
        }
        Ok(self.report("ricci_tilde_hermitian", &acc))
    }

    /// Chern scalar curvature as `g^{j kbar} R_{kbar j}^p_p` against
    /// `Delta log ||Omega||^2 = -g^{p qbar} d_p d_qbar log det g`.
    pub fn scalar_curvature_two_path(&self, g: &HermitianMetricField, vol: &VolumeForm) -> Result<ResidualReport> {
        let vol = *vol;
        let mut r = self.compare(
            &["scalar_curvature_two_path"],
            &[g],
            &[],
            |m, _, d| Ok(vec![vec![ChernPackage::new(&m[0], d)?.scalar.values().to_vec()]]),
            |m, _, d| {
                let pkg = ChernPackage::new(&m[0], d)?;
                Ok(vec![vec![pkg.scalar_laplacian(&log_norm(&m[0], &vol, 2.0)?)]])
            },
        )?;
        Ok(r.remove(0))
    }

    /// Balanced defect `|d(||Omega|| omega^{n-1})|` and stationarity defect
    /// `|i d dbar omega^{n-2} - psi|`. The metric is stationary when both
    /// reports pass.
    pub fn stationarity(
        &self,
        g: &HermitianMetricField,
        vol: &VolumeForm,
        psi: Option<&DifferentialForm>,
    ) -> Result<Vec<ResidualReport>> {
        let mut b = Accum::default();
        b.push(balanced_defect(g, vol, &self.primary)?);
        let mut s = Accum::default();
        s.push(stationarity_defect(g, psi, &self.primary)?);
        let b_report = self.report("balanced_defect", &b);
        let s_report = self.report("stationarity_defect", &s);
        let stationary = b_report.pass && s_report.pass;
        Ok(vec![b_report, s_report.with_note(format!("stationary: {stationary}"))])
    }

    /// The full spatial suite on one metric.
    pub fn spatial_suite(&self, g: &HermitianMetricField, reference: &HermitianMetricField, vol: &VolumeForm, seed: u64) -> Result<Vec<ResidualReport>> {
        let mut out = self.connection_difference(g, reference)?;
        out.extend(self.bianchi(g)?);
        out.extend(self.commutator_convention(g, seed)?);
        out.push(self.quasilinear_ricci(g)?);
        out.push(self.metric_compatibility(g)?);
        out.push(self.ricci_tilde_hermitian(g)?);
        out.push(self.scalar_curvature_two_path(g, vol)?);
        Ok(out)
    }
}
