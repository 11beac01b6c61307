//! Time integration of the flow in its two formulations.
//!
//! * Omega form: `d/dt (||Omega|| omega^{n-1}) / (n-1)! = (i d dbar omega^{n-2} - psi) / (n-2)!`,
//!   inverted node by node for `d/dt g`.
//! * Eta form: `d/dt eta = -Rtilde(eta) - 1/2 T Tbar(eta) - Phi` for the
//!   rescaled metric `eta = ||Omega||_g g`.
//!
//! Both are advanced with classical RK4 (see [`Integrator`]).

mod integrate;
mod rhs;

pub use integrate::*;
pub use rhs::*;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::balance::check_source_form;
use crate::deriv::Differentiator;
use crate::error::{LabError, Result};
use crate::forms::DifferentialForm;
use crate::grid::C64;
use crate::metric::{volume_norm, HermitianMetricField, VolumeForm};
use crate::tensor::TensorField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum Formulation {
    /// State is the metric `g` of `omega`.
    Omega,
    /// State is `eta = ||Omega||_g g`.
    Eta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub t: f64,
    pub metric: HermitianMetricField,
    pub formulation: Formulation,
    pub volume: VolumeForm,
}

fn require_dimension(n: usize) -> Result<()> {
    if n < 3 {
        return Err(LabError::Degenerate {
            n,
            reason: "the conversion exponent 2/(n-2) needs n >= 3".into(),
        });
    }
    Ok(())
}

/// `eta = ||Omega||_g g`.
pub fn eta_of(g: &HermitianMetricField, vol: &VolumeForm) -> Result<HermitianMetricField> {
    require_dimension(g.n())?;
    let norm: Vec<f64> = volume_norm(g, vol)?.values().iter().map(|v| v.re).collect();
    Ok(g.conformal(&norm))
}

/// `g = ||Omega||_eta^{2/(n-2)} eta`.
pub fn omega_of(eta: &HermitianMetricField, vol: &VolumeForm) -> Result<HermitianMetricField> {
    let n = eta.n();
    require_dimension(n)?;
    let exponent = 2.0 / (n as f64 - 2.0);
    let factor: Vec<f64> = volume_norm(eta, vol)?
        .values()
        .iter()
        .map(|v| v.re.powf(exponent))
        .collect();
    Ok(eta.conformal(&factor))
}

impl FlowState {
    pub fn new(metric: HermitianMetricField, formulation: Formulation, volume: VolumeForm) -> Result<Self> {
        require_dimension(metric.n())?;
        metric.check_positive(0.0)?;
        Ok(Self { t: 0.0, metric, formulation, volume })
    }

    /// The metric `g` of `omega`, whatever the formulation.
    pub fn omega_metric(&self) -> Result<HermitianMetricField> {
        match self.formulation {
            Formulation::Omega => Ok(self.metric.clone()),
            Formulation::Eta => omega_of(&self.metric, &self.volume),
        }
    }

    pub fn eta_metric(&self) -> Result<HermitianMetricField> {
        match self.formulation {
            Formulation::Omega => eta_of(&self.metric, &self.volume),
            Formulation::Eta => Ok(self.metric.clone()),
        }
    }
}

pub fn eta_from_omega(state: &FlowState) -> Result<FlowState> {
    Ok(FlowState {
        metric: state.eta_metric()?,
        formulation: Formulation::Eta,
        ..state.clone()
    })
}

pub fn omega_from_eta(state: &FlowState) -> Result<FlowState> {
    Ok(FlowState {
        metric: state.omega_metric()?,
        formulation: Formulation::Omega,
        ..state.clone()
    })
}

/// Source term of the flow.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum SourceSpec {
    #[default]
    None,
    /// Real closed `(n-1,n-1)`-form, omega form only.
    Psi(DifferentialForm),
    /// Hermitian matrix field `Phi_{kbar j}` (layout `[k][j]`), eta form only.
    Phi(TensorField),
}

/// Tolerance of the reality, closedness and Hermiticity checks on sources.
pub const SOURCE_TOLERANCE: f64 = 1e-10;

impl SourceSpec {
    pub fn is_none(&self) -> bool {
        matches!(self, SourceSpec::None)
    }

    /// Checks the source against the formulation it will drive.
    pub fn validate(&self, formulation: Formulation, d: &Differentiator) -> Result<()> {
        match (self, formulation) {
            (SourceSpec::None, _) => Ok(()),
            (SourceSpec::Psi(psi), Formulation::Omega) => {
                if psi.grid() != d.grid() {
                    return Err(LabError::GridMismatch);
                }
                check_source_form(psi, d, SOURCE_TOLERANCE)
            }
            (SourceSpec::Phi(phi), Formulation::Eta) => {
                if phi.grid() != d.grid() {
                    return Err(LabError::GridMismatch);
                }
                if phi.rank() != 2 {
                    return Err(LabError::Source(format!("Phi must be a matrix field, got rank {}", phi.rank())));
                }
                let skew = phi.skew_max();
                if skew > SOURCE_TOLERANCE * phi.max_abs().max(1.0) {
                    return Err(LabError::Source(format!("Phi is not Hermitian: skew part {skew:e}")));
                }
                Ok(())
            }
            (SourceSpec::Psi(_), Formulation::Eta) => Err(LabError::Source(
                "the eta form takes Phi; convert psi with derive_phi first".into(),
            )),
            (SourceSpec::Phi(_), Formulation::Omega) => {
                Err(LabError::Source("the omega form takes psi, not Phi".into()))
            }
        }
    }
}

pub(crate) fn real(v: f64) -> C64 {
    C64::new(v, 0.0)
}
