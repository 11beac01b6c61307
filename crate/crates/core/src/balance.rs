//! Balanced and stationarity defects of a metric.

use crate::deriv::Differentiator;
use crate::error::{LabError, Result};
use crate::forms::DifferentialForm;
use crate::metric::{metric_to_form, volume_norm, HermitianMetricField, VolumeForm};

/// Balanced defect below which a metric counts as conformally balanced.
pub const BALANCED_TOLERANCE: f64 = 1e-8;

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

/// `||Omega||_omega omega^{n-1}`.
pub fn dilaton_weighted_power(g: &HermitianMetricField, vol: &VolumeForm) -> Result<DifferentialForm> {
    let n = g.n();
    let omega = metric_to_form(g);
    let norm = volume_norm(g, vol)?;
    Ok(omega.power(n - 1)?.mul_function(norm.values()))
}

/// Max norm of `d(||Omega|| omega^{n-1})`, zero exactly on conformally
/// balanced metrics.
pub fn balanced_defect(g: &HermitianMetricField, vol: &VolumeForm, d: &Differentiator) -> Result<f64> {
    Ok(dilaton_weighted_power(g, vol)?.exterior_d(d)?.max_abs())
}

/// `i d dbar omega^{n-2}`, an `(n-1,n-1)`-form.
pub fn ddbar_omega_power(g: &HermitianMetricField, d: &Differentiator) -> Result<DifferentialForm> {
    let n = g.n();
    metric_to_form(g).power(n - 2)?.ddbar_i(d)
}

/// Max norm of `i d dbar omega^{n-2} - psi`.
pub fn stationarity_defect(g: &HermitianMetricField, psi: Option<&DifferentialForm>, d: &Differentiator) -> Result<f64> {
    let lhs = ddbar_omega_power(g, d)?;
    match psi {
        None => Ok(lhs.max_abs()),
        Some(p) => {
            if p.grid() != g.grid() {
                return Err(LabError::GridMismatch);
            }
            Ok(lhs.sub(p)?.max_abs())
        }
    }
}

/// Checks that a source form is a real, closed `(n-1,n-1)`-form.
pub fn check_source_form(psi: &DifferentialForm, d: &Differentiator, tol: f64) -> Result<()> {
    let n = psi.grid().n();
    if psi.bidegree() != (n - 1, n - 1) {
        return Err(LabError::Source(format!(
            "source must be an ({0},{0})-form, got {1:?}",
            n - 1,
            psi.bidegree()
        )));
    }
    let scale = psi.max_abs().max(1.0);
    let reality = psi.reality_defect()?;
    if reality > tol * scale {
        return Err(LabError::Source(format!("source is not real: defect {reality:e}")));
    }
    let closed = psi.exterior_d(d)?.max_abs();
    if closed > tol * scale {
        return Err(LabError::Source(format!("source is not closed: |d psi| = {closed:e}")));
    }
    Ok(())
}

/// `(n-2)!` and `(n-1)!` normalizations used by the flow.
pub fn power_factorials(n: usize) -> (f64, f64) {
    (factorial(n - 2), factorial(n - 1))
}
