//! Scalar monitors recorded along a run. Everything is evaluated on the
//! omega-metric of the state, relative to the omega-metric of the initial
//! state.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::balance::balanced_defect;
use crate::chern::ChernPackage;
use crate::deriv::Differentiator;
use crate::endo::relative_endomorphism;
use crate::error::Result;
use crate::flow::FlowState;
use crate::metric::{volume_norm, HermitianMetricField};

/// Weights of the monitored test function `G = log S + eps Tr h - A log ||Omega||`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct TestFunctionWeights {
    pub epsilon: f64,
    #[serde(rename = "A")]
    pub a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "camelCase")]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub step: usize,
    /// Extremes over all nodes of the eigenvalues of `omega(t)` relative to `omega(0)`.
    pub h_eigenvalue_min: f64,
    pub h_eigenvalue_max: f64,
    /// `max |tau|`, with `|tau|^2 = g^{j kbar} tau_j conj(tau_k)`.
    pub tau_max: f64,
    pub norm_max: f64,
    pub norm_min: f64,
    pub s_max: f64,
    pub trace_h_min: f64,
    pub trace_h_max: f64,
    pub det_h_min: f64,
    /// `min_X [det h - ||Omega||^2_0 / sup ||Omega||^2_0]`, non-negative while
    /// the dilaton bound holds.
    pub det_chain_margin: f64,
    pub balanced_defect: f64,
    pub torsion_sq_max: f64,
    /// `max_X G`; absent when no weights were configured or `S` vanishes
    /// identically (as it does at `t = 0`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_function_max: Option<f64>,
}

impl DiagnosticsRecord {
    pub fn is_finite(&self) -> bool {
        [
            self.h_eigenvalue_min,
            self.h_eigenvalue_max,
            self.tau_max,
            self.norm_max,
            self.norm_min,
            self.s_max,
            self.trace_h_min,
            self.trace_h_max,
            self.det_h_min,
            self.det_chain_margin,
            self.balanced_defect,
            self.torsion_sq_max,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Data fixed at the start of a run.
#[derive(Debug, Clone)]
pub struct DiagnosticsBaseline {
    pub initial: HermitianMetricField,
    /// `||Omega||^2_0 / sup ||Omega||^2_0` per node.
    pub chain_floor: Vec<f64>,
    pub weights: Option<TestFunctionWeights>,
}

impl DiagnosticsBaseline {
    pub fn new(initial: &FlowState, weights: Option<TestFunctionWeights>) -> Result<Self> {
        let g0 = initial.omega_metric()?;
        let sq: Vec<f64> = volume_norm(&g0, &initial.volume)?
            .values()
            .iter()
            .map(|v| v.re * v.re)
            .collect();
        let sup = sq.iter().copied().fold(f64::MIN, f64::max);
        Ok(Self {
            chain_floor: sq.iter().map(|v| v / sup).collect(),
            initial: g0,
            weights,
        })
    }

    pub fn record(&self, state: &FlowState, step: usize, d: &Differentiator) -> Result<DiagnosticsRecord> {
        let g = state.omega_metric()?;
        let pkg = ChernPackage::new(&g, d)?;
        let n = g.n();
        let nodes = g.grid().node_count();
        let rel = relative_endomorphism(&g, &self.initial, d)?;
        let eig = g.relative_eigenvalues(&self.initial)?;
        let norm: Vec<f64> = volume_norm(&g, &state.volume)?.values().iter().map(|v| v.re).collect();

        let mut tau_sq = vec![0.0; nodes];
        for j in 0..n {
            for k in 0..n {
                let gi = pkg.ginv.at(&[j, k]);
                let a = pkg.tau.at(&[j]);
                let b = pkg.tau.at(&[k]);
                for i in 0..nodes {
                    tau_sq[i] += (gi[i] * a[i] * b[i].conj()).re;
                }
            }
        }

        let max = |v: &[f64]| v.iter().copied().fold(f64::MIN, f64::max);
        let min = |v: &[f64]| v.iter().copied().fold(f64::MAX, f64::min);
        let margin: Vec<f64> = rel.det.iter().zip(&self.chain_floor).map(|(a, b)| a - b).collect();
        let test_function_max = self.weights.and_then(|w| {
            if rel.s.iter().all(|&s| s <= 0.0) {
                return None;
            }
            let g_max = (0..nodes)
                .map(|i| rel.s[i].ln() + w.epsilon * rel.trace[i] - w.a * norm[i].ln())
                .fold(f64::MIN, f64::max);
            Some(g_max)
        });
        Ok(DiagnosticsRecord {
            t: state.t,
            step,
            h_eigenvalue_min: eig.iter().map(|e| min(e)).fold(f64::MAX, f64::min),
            h_eigenvalue_max: eig.iter().map(|e| max(e)).fold(f64::MIN, f64::max),
            tau_max: max(&tau_sq).max(0.0).sqrt(),
            norm_max: max(&norm),
            norm_min: min(&norm),
            s_max: max(&rel.s),
            trace_h_min: min(&rel.trace),
            trace_h_max: max(&rel.trace),
            det_h_min: min(&rel.det),
            det_chain_margin: min(&margin),
            balanced_defect: balanced_defect(&g, &state.volume, d)?,
            torsion_sq_max: max(&pkg.torsion_norm_sq()),
            test_function_max,
        })
    }
}
