use std::sync::Arc;

use iiblab_core::deriv::{DerivativeScheme, Differentiator};
use iiblab_core::error::LabError;
use iiblab_core::flow::*;
use iiblab_core::forms::sigma;
use iiblab_core::grid::{TorusGrid, C64};
use iiblab_core::metric::{self, FourierSeries, HermitianMetricField, VolumeForm};
use iiblab_core::verify::{Forcing, ResidualReport, Verifier, EVOLUTION_TOLERANCE};

fn setup(res: usize) -> (Arc<TorusGrid>, Differentiator) {
    let grid = Arc::new(TorusGrid::planar(3, res).unwrap());
    let d = Differentiator::new(grid.clone(), DerivativeScheme::Spectral);
    (grid, d)
}

fn balanced_state(grid: &Arc<TorusGrid>, amp: f64) -> FlowState {
    let f = FourierSeries::sin_x_cos_y(amp).evaluate(grid).unwrap();
    let g = metric::balanced(grid.clone(), 1.0, &f).unwrap();
    FlowState::new(g, Formulation::Omega, VolumeForm::unit()).unwrap()
}

fn kahler_reference(grid: &Arc<TorusGrid>) -> HermitianMetricField {
    let a: Vec<f64> = FourierSeries::sin_x_cos_y(0.2)
        .evaluate(grid)
        .unwrap()
        .iter()
        .map(|v| v.exp())
        .collect();
    metric::kahler_diagonal(grid.clone(), &a).unwrap()
}

fn eta_run(start: &FlowState, dt: f64, d: &Differentiator) -> Trajectory {
    let ctl = StepControl::fixed(dt, 4.0 * dt).with_cadence(1);
    integrate(&eta_from_omega(start).unwrap(), &SourceSpec::None, &ctl, d).unwrap()
}

fn all_reports(v: &Verifier, tr: &Trajectory, reference: &HermitianMetricField, phi: Forcing) -> Vec<ResidualReport> {
    let mut out = vec![v.trh_evolution(tr, reference, phi).unwrap()];
    out.extend(v.dilaton_evolution(tr, phi).unwrap());
    out.extend(v.s_evolution(tr, reference, phi).unwrap());
    out
}

#[test]
fn flat_trajectory_gives_exact_zeros() {
    let (grid, d) = setup(8);
    let start = FlowState::new(metric::flat(grid.clone()), Formulation::Omega, VolumeForm::unit()).unwrap();
    let tr = eta_run(&start, 1e-3, &d);
    let v = Verifier::new(grid.clone());
    for r in all_reports(&v, &tr, &metric::flat(grid.clone()), Forcing::Zero) {
        assert_eq!(r.max_residual, 0.0, "{}", r.identity);
        assert!(r.pass);
    }
}

#[test]
fn too_few_snapshots_are_rejected() {
    let (grid, d) = setup(8);
    let start = balanced_state(&grid, 0.3);
    let ctl = StepControl::fixed(1e-4, 2e-4).with_cadence(2);
    let tr = integrate(&eta_from_omega(&start).unwrap(), &SourceSpec::None, &ctl, &d).unwrap();
    assert_eq!(tr.states.len(), 2);
    let v = Verifier::new(grid.clone());
    assert!(matches!(v.dilaton_evolution(&tr, Forcing::Zero), Err(LabError::Trajectory(_))));
}

#[test]
fn omega_form_trajectory_is_rejected() {
    let (grid, d) = setup(8);
    let start = balanced_state(&grid, 0.3);
    let ctl = StepControl::fixed(1e-4, 4e-4).with_cadence(1);
    let tr = integrate(&start, &SourceSpec::None, &ctl, &d).unwrap();
    let v = Verifier::new(grid.clone());
    assert!(matches!(v.dilaton_evolution(&tr, Forcing::Zero), Err(LabError::Trajectory(_))));
    assert!(v.dilaton_evolution(&tr.converted(Formulation::Eta).unwrap(), Forcing::Zero).is_ok());
}

#[test]
fn balanced_family_identities_hold() {
    let (grid, d) = setup(32);
    let reference = kahler_reference(&grid);
    let tr = eta_run(&balanced_state(&grid, 0.3), 1e-5, &d);
    let v = Verifier::new(grid.clone());
    for r in all_reports(&v, &tr, &reference, Forcing::Zero) {
        assert!(r.pass, "{} {:e}", r.identity, r.max_residual);
        assert_eq!(r.oracle.dt, Some(1e-5));
    }
}

#[test]
fn derived_forcing_is_needed_with_a_source() {
    let (grid, d) = setup(16);
    let psi = sigma(grid.clone(), 0, 0).unwrap().scale(C64::new(0.1, 0.0));
    let ctl = StepControl::fixed(1e-5, 4e-5).with_cadence(1);
    let tr = integrate(&balanced_state(&grid, 0.3), &SourceSpec::Psi(psi.clone()), &ctl, &d)
        .unwrap()
        .converted(Formulation::Eta)
        .unwrap();
    let v = Verifier::new(grid.clone());
    let with = v.dilaton_evolution(&tr, Forcing::FromPsi(&psi)).unwrap();
    let without = v.dilaton_evolution(&tr, Forcing::Zero).unwrap();
    assert!(with[0].max_residual < 1e-4, "{:e}", with[0].max_residual);
    assert!(without[0].max_residual > 1e-3, "{:e}", without[0].max_residual);
}

#[test]
fn centred_differences_converge_at_second_order() {
    let (grid, d) = setup(16);
    let start = balanced_state(&grid, 0.3);
    let v = Verifier::new(grid.clone());
    let coarse = v.dilaton_evolution(&eta_run(&start, 2e-5, &d), Forcing::Zero).unwrap();
    let fine = v.dilaton_evolution(&eta_run(&start, 1e-5, &d), Forcing::Zero).unwrap();
    let ratio = coarse[0].max_residual / fine[0].max_residual;
    assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
    assert!(fine[0].max_residual < EVOLUTION_TOLERANCE);
}
