//! Acceptance suite: one pass/fail line per criterion, non-zero exit if any
//! criterion fails. Runs without the libtest harness so the lines always
//! reach the terminal.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use iiblab_core::balance::balanced_defect;
use iiblab_core::chern::ChernPackage;
use iiblab_core::deriv::{DerivativeScheme, Differentiator};
use iiblab_core::diagnostics::DiagnosticsBaseline;
use iiblab_core::error::Result;
use iiblab_core::flow::*;
use iiblab_core::forms::sigma;
use iiblab_core::grid::{TorusGrid, C64};
use iiblab_core::metric::{self, FourierSeries, FourierTerm, HermitianMetricField, RandomMetricSpec, VolumeForm};
use iiblab_core::verify::{Forcing, Verifier};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn setup(res: usize) -> (Arc<TorusGrid>, Differentiator) {
    let grid = Arc::new(TorusGrid::planar(3, res).unwrap());
    let d = Differentiator::new(grid.clone(), DerivativeScheme::Spectral);
    (grid, d)
}

fn balanced_state(grid: &Arc<TorusGrid>, profile: &FourierSeries, lambda: f64) -> Result<FlowState> {
    let f = profile.evaluate(grid)?;
    FlowState::new(metric::balanced(grid.clone(), lambda, &f)?, Formulation::Omega, VolumeForm::unit())
}

fn kahler_reference(grid: &Arc<TorusGrid>) -> Result<HermitianMetricField> {
    let a: Vec<f64> = FourierSeries::sin_x_cos_y(0.2).evaluate(grid)?.iter().map(|v| v.exp()).collect();
    metric::kahler_diagonal(grid.clone(), &a)
}

fn spectral(tr: &Trajectory) -> Differentiator {
    Differentiator::new(tr.states[0].metric.grid().clone(), DerivativeScheme::Spectral)
}

fn max_metric_diff(a: &FlowState, b: &FlowState) -> Result<f64> {
    Ok(a.omega_metric()?.tensor().sub(b.omega_metric()?.tensor())?.max_abs())
}

/// Identities named by the spatial criterion; the remaining suite members
/// hold exactly on the grid and are only held to the absolute bound.
const REFINED: [&str; 4] = ["connection_difference", "bianchi", "commutator", "s_two_path"];

fn spatial_suite() -> Result<Outcome> {
    let start = Instant::now();
    let mut worst: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    for seed in 0..20u64 {
        let mut at = Vec::new();
        for res in [32usize, 64] {
            let grid = Arc::new(TorusGrid::planar(3, res)?);
            let g = metric::random(grid.clone(), &RandomMetricSpec::new(seed))?;
            let reference = metric::random(grid.clone(), &RandomMetricSpec::new(seed + 1000))?;
            at.push(Verifier::new(grid).spatial_suite(&g, &reference, &VolumeForm::unit(), seed)?);
        }
        for (c, f) in at[0].iter().zip(&at[1]) {
            let e = worst.entry(c.identity.clone()).or_insert((0.0, f64::INFINITY));
            e.0 = e.0.max(c.max_residual);
            e.1 = e.1.min(c.max_residual / f.max_residual);
        }
    }
    let elapsed = start.elapsed();
    let mut pass = elapsed < Duration::from_secs(300);
    let (mut max_res, mut min_shrink) = (0.0f64, f64::INFINITY);
    for (name, (res, shrink)) in &worst {
        pass &= *res < 1e-7;
        max_res = max_res.max(*res);
        let refined = REFINED.iter().any(|p| name.starts_with(p)) || name == "quasilinear_ricci";
        if refined {
            pass &= *shrink >= 10.0;
            min_shrink = min_shrink.min(*shrink);
        }
    }
    outcome(
        pass,
        format!("{} identities x 20 seeds, max residual {max_res:.2e}, min shrink {min_shrink:.1}x, {elapsed:.1?}", worst.len()),
    )
}

fn balanced_identity() -> Result<Outcome> {
    let (grid, d) = setup(32);
    let amp = 0.3;
    let f = FourierSeries::sin_x_cos_y(amp).evaluate(&grid)?;
    let vol = VolumeForm::unit();
    let (mut defect, mut tau_res, mut closed) = (0.0f64, 0.0f64, 0.0f64);
    for lambda in [1.0, 1.7] {
        let g = metric::balanced(grid.clone(), lambda, &f)?;
        defect = defect.max(balanced_defect(&g, &vol, &d)?);
        tau_res = tau_res.max(Verifier::new(grid.clone()).tau_identity(&g, &vol)?.max_residual);
        let pkg = ChernPackage::new(&g, &d)?;
        for i in 0..grid.node_count() {
            let xy = grid.coordinates(i);
            let (x, y) = (2.0 * PI * xy[0], 2.0 * PI * xy[1]);
            // d/dz of amp sin(2 pi x) cos(2 pi y), with d = (d_x - i d_y) / 2
            let df = C64::new(amp * PI * x.cos() * y.cos(), amp * PI * x.sin() * y.sin());
            closed = closed.max((pkg.tau.get(&[0], i) + 2.0 * df).norm());
            closed = closed.max(pkg.tau.get(&[1], i).norm()).max(pkg.tau.get(&[2], i).norm());
        }
    }
    outcome(
        defect < 1e-10 && tau_res < 1e-8 && closed < 1e-8,
        format!("defect {defect:.2e}, tau identity {tau_res:.2e}, closed form {closed:.2e}"),
    )
}

fn formulation_equivalence() -> Result<Outcome> {
    let start = Instant::now();
    let (grid, d) = setup(32);
    let s0 = balanced_state(&grid, &FourierSeries::sin_x_cos_y(0.3), 1.0)?;
    let ctl = StepControl::fixed(1e-5, 0.01).with_cadence(1000);
    let omega = integrate(&s0, &SourceSpec::None, &ctl, &d)?;
    let eta = integrate(&eta_from_omega(&s0)?, &SourceSpec::None, &ctl, &d)?;
    let diff = max_metric_diff(omega.last(), eta.last())?;
    let moved = max_metric_diff(omega.last(), &s0)?;
    let elapsed = start.elapsed();
    let done = omega.stop == StopReason::Completed && eta.stop == StopReason::Completed;
    outcome(
        done && diff < 1e-6 && elapsed < Duration::from_secs(600),
        format!("t = {}, max difference {diff:.2e} (metric moved {moved:.2e}), {elapsed:.1?}", eta.last().t),
    )
}

/// Psi = 0 runs checked by the monotonicity and preservation criteria.
fn run_matrix() -> Result<Vec<(String, Trajectory)>> {
    let (grid, d) = setup(32);
    let two_modes = FourierSeries(vec![
        FourierTerm { k: vec![1, 1], cos: 0.0, sin: 0.15 },
        FourierTerm { k: vec![1, -1], cos: 0.0, sin: 0.15 },
    ]);
    let (grid16, d16) = setup(16);
    let mut out = Vec::new();
    let fixed = StepControl::fixed(1e-5, 0.01).with_cadence(50);
    let s0 = balanced_state(&grid, &FourierSeries::sin_x_cos_y(0.3), 1.0)?;
    out.push(("eta amp 0.3".to_string(), integrate(&eta_from_omega(&s0)?, &SourceSpec::None, &fixed, &d)?));
    out.push(("omega amp 0.3".to_string(), integrate(&s0, &SourceSpec::None, &fixed, &d)?));
    let mut cfl = StepControl::fixed(1e-5, 0.05).with_cadence(10);
    cfl.dt = TimeStep::Cfl;
    let s1 = balanced_state(&grid, &two_modes, 1.3)?;
    out.push(("eta two modes cfl".to_string(), integrate(&eta_from_omega(&s1)?, &SourceSpec::None, &cfl, &d)?));
    let s2 = balanced_state(&grid16, &FourierSeries::sin_x_cos_y(0.5), 0.8)?;
    out.push(("omega amp 0.5 cfl".to_string(), integrate(&s2, &SourceSpec::None, &cfl, &d16)?));
    Ok(out)
}

fn dilaton_bound(runs: &[(String, Trajectory)]) -> Result<Outcome> {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, tr) in runs {
        let d = &spectral(tr);
        let baseline = DiagnosticsBaseline::new(&tr.states[0], None)?;
        let (mut excess, mut margin) = (f64::NEG_INFINITY, f64::INFINITY);
        let first = baseline.record(&tr.states[0], 0, d)?.norm_max;
        let mut last = first;
        for (state, &step) in tr.states.iter().zip(&tr.steps) {
            let r = baseline.record(state, step, d)?;
            excess = excess.max(r.norm_max - first);
            margin = margin.min(r.det_chain_margin);
            last = r.norm_max;
        }
        pass &= tr.stop == StopReason::Completed && excess <= 1e-8 && margin >= -1e-8;
        parts.push(format!("{name}: sup {first:.4} -> {last:.4}, det margin {margin:.1e}"));
    }
    outcome(pass, parts.join("; "))
}

fn preservation(runs: &[(String, Trajectory)]) -> Result<Outcome> {
    let mut pass = true;
    let mut growth = 0.0f64;
    for (_, tr) in runs {
        let d = &spectral(tr);
        let vol = tr.states[0].volume;
        let initial = balanced_defect(&tr.states[0].omega_metric()?, &vol, d)?;
        pass &= initial < 1e-10;
        for state in &tr.states {
            growth = growth.max(balanced_defect(&state.omega_metric()?, &vol, d)? - initial);
        }
    }
    outcome(pass && growth < 1e-8, format!("{} runs, max defect growth {growth:.2e}", runs.len()))
}

fn evolution_window(grid: &Arc<TorusGrid>, d: &Differentiator, amp: f64, dt: f64) -> Result<Trajectory> {
    let s0 = balanced_state(grid, &FourierSeries::sin_x_cos_y(amp), 1.0)?;
    let ctl = StepControl::fixed(dt, 4.0 * dt).with_cadence(1);
    integrate(&eta_from_omega(&s0)?, &SourceSpec::None, &ctl, d)
}

fn evolution_identities() -> Result<Outcome> {
    let (grid, d) = setup(32);
    let reference = kahler_reference(&grid)?;
    let v = Verifier::new(grid.clone());
    let residuals = |dt: f64| -> Result<Vec<(String, f64)>> {
        let tr = evolution_window(&grid, &d, 0.3, dt)?;
        let mut reps = vec![v.trh_evolution(&tr, &reference, Forcing::Zero)?];
        reps.extend(v.dilaton_evolution(&tr, Forcing::Zero)?);
        Ok(reps.into_iter().map(|r| (r.identity, r.max_residual)).collect())
    };
    let fine = residuals(1e-5)?;
    let coarse = residuals(2e-5)?;
    let mut pass = true;
    let mut parts = Vec::new();
    for ((name, f), (_, c)) in fine.iter().zip(&coarse) {
        let ratio = c / f;
        pass &= *f < 1e-5 && (3.0..=5.0).contains(&ratio);
        parts.push(format!("{name} {f:.2e} (x{ratio:.2} per halving)"));
    }
    outcome(pass, parts.join(", "))
}

fn s_evolution() -> Result<Outcome> {
    let (grid, d) = setup(32);
    let reference = kahler_reference(&grid)?;
    let tr = evolution_window(&grid, &d, 0.05, 1e-5)?;
    let reps = Verifier::new(grid.clone()).s_evolution(&tr, &reference, Forcing::Zero)?;
    let main = reps.iter().find(|r| r.identity == "s_evolution").expect("s_evolution report");
    let parts: Vec<String> = reps.iter().map(|r| format!("{} {:.2e}", r.identity, r.max_residual)).collect();
    outcome(main.max_residual < 1e-3, format!("relative {}", parts.join(", ")))
}

fn integrator_order() -> Result<Outcome> {
    let (grid, d) = setup(32);
    let s0 = balanced_state(&grid, &FourierSeries::sin_x_cos_y(0.3), 1.0)?;
    let mut pass = true;
    let mut parts = Vec::new();
    for start in [eta_from_omega(&s0)?, s0.clone()] {
        let mut finals = Vec::new();
        for dt in [4e-4, 2e-4, 1e-4, 5e-5] {
            let ctl = StepControl::fixed(dt, 0.01).with_cadence(usize::MAX);
            finals.push(integrate(&start, &SourceSpec::None, &ctl, &d)?.last().metric.clone());
        }
        let ratios: Vec<f64> = finals
            .windows(3)
            .map(|w| {
                let a = w[0].tensor().sub(w[1].tensor()).unwrap().max_abs();
                let b = w[1].tensor().sub(w[2].tensor()).unwrap().max_abs();
                a / b
            })
            .collect();
        pass &= ratios.iter().all(|r| (8.0..=32.0).contains(r));
        parts.push(format!("{:?} ratios {:.2?}", start.formulation, ratios));
    }
    outcome(pass, parts.join(", "))
}

fn stationarity() -> Result<Outcome> {
    let (grid, d) = setup(16);
    let flat = metric::flat(grid.clone());
    let vol = VolumeForm::unit();
    let ctl = StepControl::fixed(1e-3, 0.1).with_cadence(1);
    let mut drift = 0.0f64;
    let mut steps = usize::MAX;
    for form in [Formulation::Omega, Formulation::Eta] {
        let s0 = FlowState::new(flat.clone(), form, vol)?;
        let tr = integrate(&s0, &SourceSpec::None, &ctl, &d)?;
        steps = steps.min(tr.steps_taken);
        for s in &tr.states {
            drift = drift.max(s.metric.tensor().sub(flat.tensor())?.max_abs());
        }
    }
    let v = Verifier::new(grid.clone());
    let mut exact = true;
    for eps in [0.125, 0.1, 1e-3] {
        let psi = sigma(grid.clone(), 0, 0)?.scale(C64::new(eps, 0.0));
        let r = v.stationarity(&flat, &vol, Some(&psi))?;
        exact &= r[0].max_residual == 0.0 && r[1].max_residual == eps;
    }
    outcome(
        steps >= 100 && drift < 1e-12 && exact,
        format!("{steps} steps per formulation, drift {drift:.1e}, source defect equals epsilon: {exact}"),
    )
}

fn main() -> ExitCode {
    let runs = match run_matrix() {
        Ok(r) => r,
        Err(e) => {
            println!("acceptance: could not integrate the run matrix: {e}");
            return ExitCode::FAILURE;
        }
    };
    let criteria: Vec<(&str, Box<dyn Fn() -> Result<Outcome> + '_>)> = vec![
        ("spatial identity suite", Box::new(spatial_suite)),
        ("balanced identity", Box::new(balanced_identity)),
        ("formulation equivalence", Box::new(formulation_equivalence)),
        ("dilaton monotone bound", Box::new(|| dilaton_bound(&runs))),
        ("evolution identities", Box::new(evolution_identities)),
        ("S evolution", Box::new(s_evolution)),
        ("balanced preservation", Box::new(|| preservation(&runs))),
        ("integrator order", Box::new(integrator_order)),
        ("stationarity", Box::new(stationarity)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (pass, detail) = match check() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!("criterion {} {:<26} {}  {detail}", i + 1, name, if pass { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
