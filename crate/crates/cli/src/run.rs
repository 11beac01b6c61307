//! The `run` and `verify` verbs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use iiblab_core::deriv::Differentiator;
use iiblab_core::diagnostics::{DiagnosticsBaseline, DiagnosticsRecord};
use iiblab_core::error::LabError;
use iiblab_core::flow::{eta_from_omega, FlowState, Formulation, Integrator, SourceSpec, StepControl, StopReason, TimeStep, Trajectory};
use iiblab_core::forms::{matrix_to_n1n1, DifferentialForm};
use iiblab_core::grid::TorusGrid;
use iiblab_core::metric::{self, HermitianMetricField, VolumeForm};
use iiblab_core::tensor::TensorField;
use iiblab_core::verify::{Forcing, ResidualReport, Verifier, DEFAULT_ORACLE};
use serde::Serialize;

use crate::config::{Dt, IdentityName, RunConfig, SnapshotPolicy, Source, VerifyEntry};
use crate::snapshot::Snapshot;
use crate::{CliError, ExitStatus};

pub const DIAGNOSTICS_FILE: &str = "diagnostics.jsonl";
pub const REPORTS_FILE: &str = "reports.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SNAPSHOT_DIR: &str = "snapshots";

/// Snapshots in the evolution-identity window.
pub const EVOLUTION_WINDOW: usize = 5;

/// First line of the diagnostics stream.
#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DiagnosticsHeader<'a> {
    pub format: &'static str,
    pub version: u32,
    pub config: &'a RunConfig,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RunSummary {
    pub status: ExitStatus,
    pub exit_code: i32,
    pub stop: StopReason,
    pub steps_taken: usize,
    pub t: f64,
    pub off_manifold: bool,
    pub initial_balanced_defect: f64,
    pub max_hermiticity_drift: f64,
    pub reports_pass: bool,
}

/// Everything resolved from a config before any time stepping.
pub struct Session {
    pub config: RunConfig,
    pub grid: Arc<TorusGrid>,
    pub deriv: Differentiator,
    pub volume: VolumeForm,
    pub initial: FlowState,
    pub reference: HermitianMetricField,
    pub source: SourceSpec,
    pub control: StepControl,
}

fn config_error(e: LabError) -> CliError {
    match e {
        LabError::Io(_) => CliError::Lab(e),
        other => CliError::Config(other.to_string()),
    }
}

impl Session {
    /// Validates the config and builds the initial data. Every failure here
    /// is a config error.
    pub fn new(config: RunConfig) -> Result<Self, CliError> {
        let grid = config.grid().map_err(|e| match e {
            CliError::Lab(l) => config_error(l),
            other => other,
        })?;
        let build = || -> Result<Self, LabError> {
            let deriv = Differentiator::new(grid.clone(), config.derivative);
            let volume = VolumeForm::new(iiblab_core::grid::C64::new(config.volume[0], config.volume[1]))?;
            let g = match config.initial_metric.build(&grid) {
                Ok(g) => g,
                Err(CliError::Lab(e)) => return Err(e),
                Err(CliError::Config(m)) => return Err(LabError::Source(m)),
            };
            let reference = match &config.reference_metric {
                None => metric::flat(grid.clone()),
                Some(f) => match f.build(&grid) {
                    Ok(g) => g,
                    Err(CliError::Lab(e)) => return Err(e),
                    Err(CliError::Config(m)) => return Err(LabError::Source(m)),
                },
            };
            let omega = FlowState::new(g, Formulation::Omega, volume)?;
            let initial = match config.formulation {
                Formulation::Omega => omega,
                Formulation::Eta => eta_from_omega(&omega)?,
            };
            let source = match (&config.source, config.formulation) {
                (Source::None, _) => SourceSpec::None,
                (Source::PsiConstant { .. }, Formulation::Eta) => {
                    return Err(LabError::Source(
                        "a psi-constant source drives the omega form; set \"formulation\": \"omega\"".into(),
                    ))
                }
                (Source::PsiConstant { .. }, Formulation::Omega) => {
                    let m = match config.source.psi_matrix(grid.n()) {
                        Ok(m) => m.expect("psi source"),
                        Err(e) => return Err(LabError::Source(e.to_string())),
                    };
                    SourceSpec::Psi(matrix_to_n1n1(&TensorField::constant_matrix(grid.clone(), &m))?)
                }
                (Source::PhiField { .. }, Formulation::Omega) => {
                    return Err(LabError::Source(
                        "a phi-field source drives the eta form; set \"formulation\": \"eta\"".into(),
                    ))
                }
                (Source::PhiField { file }, Formulation::Eta) => SourceSpec::Phi(load_phi(file, &grid)?),
            };
            source.validate(config.formulation, &deriv)?;
            let c = &config.control;
            let control = StepControl {
                cfl: c.cfl,
                dt: match c.dt {
                    Dt::Fixed(dt) => TimeStep::Fixed(dt),
                    Dt::Policy(_) => TimeStep::Cfl,
                },
                t_end: c.t_end,
                max_steps: c.max_steps,
                positivity_floor: c.positivity_floor,
                cadence: c.cadence,
            };
            control.validate()?;
            if !(c.evolution_dt > 0.0 && c.evolution_dt.is_finite()) {
                return Err(LabError::Trajectory(format!("evolutionDt must be positive, got {}", c.evolution_dt)));
            }
            initial.metric.check_positive(control.positivity_floor)?;
            Ok(Self {
                config: config.clone(),
                grid: grid.clone(),
                deriv,
                volume,
                initial,
                reference,
                source,
                control,
            })
        };
        build().map_err(config_error)
    }

    fn psi(&self) -> Option<&DifferentialForm> {
        match &self.source {
            SourceSpec::Psi(p) => Some(p),
            _ => None,
        }
    }

    /// Short uniformly spaced eta-form trajectory starting at `state`.
    fn evolution_window(&self, state: &FlowState) -> Result<Trajectory, LabError> {
        let dt = self.config.control.evolution_dt;
        let mut control = StepControl::fixed(dt, state.t + (EVOLUTION_WINDOW - 1) as f64 * dt).with_cadence(1);
        control.positivity_floor = self.control.positivity_floor;
        let window = Integrator::new(&self.deriv, self.source.clone(), control)?.integrate(state)?;
        if window.states.len() != EVOLUTION_WINDOW {
            return Err(LabError::Trajectory(format!("evolution window stopped early: {:?}", window.stop)));
        }
        match state.formulation {
            Formulation::Eta => Ok(window),
            Formulation::Omega => window.converted(Formulation::Eta),
        }
    }

    /// Runs the suite (the spatial checks when it is empty) on `state`.
    pub fn verify_state(&self, state: &FlowState) -> Result<Vec<ResidualReport>, CliError> {
        let entries: Vec<VerifyEntry> = if self.config.verify_suite.is_empty() {
            IdentityName::SPATIAL.iter().map(|&name| VerifyEntry { name, tolerance: None }).collect()
        } else {
            self.config.verify_suite.clone()
        };
        let v = Verifier::with_schemes(self.grid.clone(), self.config.derivative, DEFAULT_ORACLE, 1);
        let g = state.omega_metric()?;
        let vol = &state.volume;
        let seed = self.config.seed();
        let needs_window = entries.iter().any(|e| e.name.is_evolution());
        let window = if needs_window { Some(self.evolution_window(state)?) } else { None };
        let phi = match &self.source {
            SourceSpec::Psi(p) => Forcing::FromPsi(p),
            SourceSpec::Phi(p) => Forcing::Field(p),
            SourceSpec::None => Forcing::Zero,
        };
        let mut out = Vec::new();
        for e in &entries {
            let reports = match e.name {
                IdentityName::ConnectionDifference => v.connection_difference(&g, &self.reference)?,
                IdentityName::Bianchi => v.bianchi(&g)?,
                IdentityName::CommutatorConvention => v.commutator_convention(&g, seed)?,
                IdentityName::QuasilinearRicci => vec![v.quasilinear_ricci(&g)?],
                IdentityName::MetricCompatibility => vec![v.metric_compatibility(&g)?],
                IdentityName::RicciTildeHermitian => vec![v.ricci_tilde_hermitian(&g)?],
                IdentityName::ScalarCurvatureTwoPath => vec![v.scalar_curvature_two_path(&g, vol)?],
                IdentityName::TauIdentity => vec![v.tau_identity(&g, vol)?],
                IdentityName::Stationarity => v.stationarity(&g, vol, self.psi())?,
                IdentityName::TrhEvolution => {
                    vec![v.trh_evolution(window.as_ref().expect("window"), &self.reference, phi)?]
                }
                IdentityName::DilatonEvolution => v.dilaton_evolution(window.as_ref().expect("window"), phi)?,
                IdentityName::SEvolution => v.s_evolution(window.as_ref().expect("window"), &self.reference, phi)?,
            };
            out.extend(reports.into_iter().map(|r| match e.tolerance {
                Some(t) => r.with_tolerance(t),
                None => r,
            }));
        }
        Ok(out)
    }

    /// Integrates, streaming diagnostics and snapshots into `out`.
    pub fn run(&self, out: &Path) -> Result<RunSummary, CliError> {
        std::fs::create_dir_all(out).map_err(LabError::Io)?;
        let policy = self.config.output.snapshots;
        let snap_dir = out.join(SNAPSHOT_DIR);
        if policy != SnapshotPolicy::None {
            std::fs::create_dir_all(&snap_dir).map_err(LabError::Io)?;
        }
        let mut stream = BufWriter::new(File::create(out.join(DIAGNOSTICS_FILE)).map_err(LabError::Io)?);
        let header = DiagnosticsHeader { format: "iiblab-diagnostics", version: 1, config: &self.config };
        write_line(&mut stream, &serde_json::json!({ "header": header }))?;

        let baseline = DiagnosticsBaseline::new(&self.initial, self.config.test_function)?;
        let cadence = self.control.cadence;
        let mut last_recorded = None;
        let emit = |state: &FlowState, step: usize, stream: &mut BufWriter<File>| -> Result<(), LabError> {
            let record = baseline.record(state, step, &self.deriv)?;
            write_line(stream, &record)?;
            if policy == SnapshotPolicy::All {
                Snapshot::of_state(state, step).save(&snapshot_path(&snap_dir, step))?;
            }
            Ok(())
        };
        let integ = Integrator::new(&self.deriv, self.source.clone(), self.control.clone())?;
        let traj = integ.integrate_with(&self.initial, |state, step| {
            if step % cadence == 0 {
                emit(state, step, &mut stream)?;
                last_recorded = Some(step);
            }
            Ok(())
        })?;
        let final_state = traj.last();
        if last_recorded != Some(traj.steps_taken) {
            emit(final_state, traj.steps_taken, &mut stream)?;
        }
        if policy == SnapshotPolicy::Final {
            Snapshot::of_state(final_state, traj.steps_taken).save(&snapshot_path(&snap_dir, traj.steps_taken))?;
        }
        stream.flush().map_err(LabError::Io)?;

        let reports = if self.config.verify_suite.is_empty() {
            Vec::new()
        } else {
            self.verify_state(final_state)?
        };
        let reports_pass = reports.iter().all(|r| r.pass);
        write_reports(out, &self.config, &reports)?;
        let status = match traj.stop {
            StopReason::Singularity { .. } => ExitStatus::Singularity,
            StopReason::Blowup { .. } => ExitStatus::Blowup,
            _ if !reports_pass => ExitStatus::VerificationFailed,
            _ => ExitStatus::Ok,
        };
        let summary = RunSummary {
            status,
            exit_code: status.code(),
            stop: traj.stop.clone(),
            steps_taken: traj.steps_taken,
            t: final_state.t,
            off_manifold: traj.off_manifold,
            initial_balanced_defect: traj.initial_balanced_defect,
            max_hermiticity_drift: traj.max_hermiticity_drift,
            reports_pass,
        };
        let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
        std::fs::write(out.join(SUMMARY_FILE), text).map_err(LabError::Io)?;
        Ok(summary)
    }

    /// The `verify` verb: the suite on the initial data.
    pub fn verify(&self, out: Option<&Path>) -> Result<(Vec<ResidualReport>, ExitStatus), CliError> {
        let reports = self.verify_state(&self.initial)?;
        if let Some(dir) = out {
            std::fs::create_dir_all(dir).map_err(LabError::Io)?;
            write_reports(dir, &self.config, &reports)?;
        }
        let status = if reports.iter().all(|r| r.pass) { ExitStatus::Ok } else { ExitStatus::VerificationFailed };
        Ok((reports, status))
    }
}

pub fn snapshot_path(dir: &Path, step: usize) -> PathBuf {
    dir.join(format!("step_{step:08}.snap"))
}

fn write_line(w: &mut impl Write, value: &impl Serialize) -> Result<(), LabError> {
    serde_json::to_writer(&mut *w, value).map_err(|e| LabError::Io(e.into()))?;
    w.write_all(b"\n")?;
    Ok(())
}

fn write_reports(dir: &Path, config: &RunConfig, reports: &[ResidualReport]) -> Result<(), LabError> {
    let doc = serde_json::json!({
        "config": config,
        "allPass": reports.iter().all(|r| r.pass),
        "reports": reports,
    });
    std::fs::write(dir.join(REPORTS_FILE), serde_json::to_string_pretty(&doc).expect("reports serialize"))?;
    Ok(())
}

fn load_phi(path: &Path, grid: &Arc<TorusGrid>) -> Result<TensorField, LabError> {
    let snap = Snapshot::load(path)?;
    let field = match snap.array("phi") {
        Ok(f) => f.clone(),
        Err(_) => snap
            .arrays
            .iter()
            .find(|a| a.rank() == 2)
            .cloned()
            .ok_or_else(|| LabError::Source(format!("{} holds no matrix field", path.display())))?,
    };
    if field.grid().spec() != grid.spec() {
        return Err(LabError::Source(format!("{} was written on a different grid", path.display())));
    }
    // rebind to the session grid
    TensorField::from_components(grid.clone(), 2, field.components().to_vec())
}

/// Recomputes the diagnostics of a stored state against the run's initial
/// snapshot.
pub fn recompute_diagnostics(
    initial: &Snapshot,
    snap: &Snapshot,
    config: &RunConfig,
) -> Result<DiagnosticsRecord, CliError> {
    let state0 = initial.state()?;
    let state = snap.state()?;
    let grid = state0.metric.grid().clone();
    let d = Differentiator::new(grid, config.derivative);
    let baseline = DiagnosticsBaseline::new(&state0, config.test_function)?;
    Ok(baseline.record(&state, snap.header.step, &d)?)
}
