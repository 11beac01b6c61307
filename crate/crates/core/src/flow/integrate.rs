use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::balance::{balanced_defect, BALANCED_TOLERANCE};
use crate::deriv::Differentiator;
use crate::error::{LabError, Result};
use crate::metric::HermitianMetricField;
use crate::tensor::TensorField;

use super::{eta_rhs, omega_rhs, FlowState, Formulation, SourceSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum TimeStep {
    Fixed(f64),
    /// `cfl * dx^2 * min_x lambda_min(g)`, recomputed every step.
    Cfl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct StepControl {
    #[serde(default = "StepControl::default_cfl")]
    pub cfl: f64,
    pub dt: TimeStep,
    pub t_end: f64,
    #[serde(default = "StepControl::default_max_steps")]
    pub max_steps: usize,
    #[serde(default = "StepControl::default_floor")]
    pub positivity_floor: f64,
    /// Store a state every this many steps (the final state is always kept).
    #[serde(default = "StepControl::default_cadence")]
    pub cadence: usize,
}

impl StepControl {
    fn default_cfl() -> f64 {
        0.2
    }

    fn default_max_steps() -> usize {
        1_000_000
    }

    fn default_floor() -> f64 {
        1e-8
    }

    fn default_cadence() -> usize {
        10
    }

    pub fn fixed(dt: f64, t_end: f64) -> Self {
        Self {
            cfl: Self::default_cfl(),
            dt: TimeStep::Fixed(dt),
            t_end,
            max_steps: Self::default_max_steps(),
            positivity_floor: Self::default_floor(),
            cadence: Self::default_cadence(),
        }
    }

    pub fn with_cadence(mut self, cadence: usize) -> Self {
        self.cadence = cadence;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LabError::Trajectory(m));
        match self.dt {
            TimeStep::Fixed(dt) if !(dt > 0.0 && dt.is_finite()) => return bad(format!("dt must be positive, got {dt}")),
            TimeStep::Cfl if !(self.cfl > 0.0 && self.cfl.is_finite()) => {
                return bad(format!("cfl must be positive, got {}", self.cfl))
            }
            _ => {}
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be finite and non-negative, got {}", self.t_end));
        }
        if self.cadence == 0 {
            return bad("cadence must be at least 1".into());
        }
        if !(self.positivity_floor >= 0.0) {
            return bad(format!("positivity floor must be non-negative, got {}", self.positivity_floor));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case", rename_all_fields = "camelCase", tag = "kind")]
pub enum StopReason {
    Completed,
    MaxSteps,
    /// The smallest eigenvalue fell below the positivity floor. The last
    /// stored state is the last positive-definite one.
    Singularity {
        node: usize,
        coords: Vec<f64>,
        #[serde(rename = "minEigenvalue")]
        min_eigenvalue: f64,
    },
    /// A non-finite value appeared. The last stored state is the last valid one.
    Blowup { step: usize },
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Stored states, starting with the initial one, at the configured
    /// cadence, ending with the last valid state.
    pub states: Vec<FlowState>,
    /// Step index of every stored state.
    pub steps: Vec<usize>,
    pub stop: StopReason,
    pub steps_taken: usize,
    /// Largest skew-Hermitian part removed by a stage projection.
    pub max_hermiticity_drift: f64,
    /// Eta-form run started from data that is not conformally balanced.
    pub off_manifold: bool,
    pub initial_balanced_defect: f64,
}

impl Trajectory {
    pub fn last(&self) -> &FlowState {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }

    /// The same trajectory with every state converted to `formulation`.
    pub fn converted(&self, formulation: Formulation) -> Result<Self> {
        let states = self
            .states
            .iter()
            .map(|s| match formulation {
                Formulation::Eta => super::eta_from_omega(s),
                Formulation::Omega => super::omega_from_eta(s),
            })
            .collect::<Result<_>>()?;
        Ok(Self { states, ..self.clone() })
    }
}

/// Result of one RK4 step.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub state: FlowState,
    pub dt: f64,
    pub hermiticity_drift: f64,
}

/// Explicit RK4 method of lines for either formulation.
pub struct Integrator<'d> {
    pub deriv: &'d Differentiator,
    pub source: SourceSpec,
    pub control: StepControl,
}

fn project(t: TensorField, drift: &mut f64) -> Result<HermitianMetricField> {
    *drift = drift.max(t.skew_max());
    HermitianMetricField::from_tensor(t.hermitian_part())
}

impl<'d> Integrator<'d> {
    pub fn new(deriv: &'d Differentiator, source: SourceSpec, control: StepControl) -> Result<Self> {
        control.validate()?;
        Ok(Self { deriv, source, control })
    }

    /// Time derivative of the state's metric.
    pub fn rhs(&self, state: &FlowState) -> Result<TensorField> {
        match state.formulation {
            Formulation::Omega => omega_rhs(&state.metric, &state.volume, &self.source, self.deriv),
            Formulation::Eta => eta_rhs(&state.metric, &self.source, self.deriv),
        }
    }

    /// Step size the policy prescribes at `state`.
    pub fn time_step(&self, state: &FlowState) -> f64 {
        match self.control.dt {
            TimeStep::Fixed(dt) => dt,
            TimeStep::Cfl => {
                let dx = state.metric.grid().spacing();
                let lmin = state.metric.min_eigenvalues().into_iter().fold(f64::INFINITY, f64::min);
                self.control.cfl * dx * dx * lmin
            }
        }
    }

    /// One classical RK4 step of size `dt`; stage metrics are projected
    /// onto Hermitian matrices.
    pub fn step(&self, state: &FlowState, dt: f64) -> Result<StepResult> {
        let mut drift: f64 = 0.0;
        let y = state.metric.tensor();
        let at = |m: HermitianMetricField, t: f64| FlowState { t, metric: m, ..state.clone() };
        let k1 = self.rhs(state)?;
        let s2 = at(project(y.axpy(0.5 * dt, &k1)?, &mut drift)?, state.t + 0.5 * dt);
        let k2 = self.rhs(&s2)?;
        let s3 = at(project(y.axpy(0.5 * dt, &k2)?, &mut drift)?, state.t + 0.5 * dt);
        let k3 = self.rhs(&s3)?;
        let s4 = at(project(y.axpy(dt, &k3)?, &mut drift)?, state.t + dt);
        let k4 = self.rhs(&s4)?;
        let incr = k1.axpy(2.0, &k2)?.axpy(2.0, &k3)?.add(&k4)?;
        let next = project(y.axpy(dt / 6.0, &incr)?, &mut drift)?;
        Ok(StepResult {
            state: at(next, state.t + dt),
            dt,
            hermiticity_drift: drift,
        })
    }

    /// Integrates to `t_end`, stopping early on loss of positivity or
    /// non-finite values. `observe` sees every accepted state with its step
    /// index, including the initial one.
    pub fn integrate_with<F>(&self, initial: &FlowState, mut observe: F) -> Result<Trajectory>
    where
        F: FnMut(&FlowState, usize) -> Result<()>,
    {
        let d = self.deriv;
        if initial.metric.grid() != d.grid() {
            return Err(LabError::GridMismatch);
        }
        self.source.validate(initial.formulation, d)?;
        initial.metric.check_positive(self.control.positivity_floor)?;
        let g0 = initial.omega_metric()?;
        let defect = balanced_defect(&g0, &initial.volume, d)?;
        let balanced = defect < BALANCED_TOLERANCE;
        if initial.formulation == Formulation::Omega && !balanced {
            return Err(LabError::NotBalanced { defect, tolerance: BALANCED_TOLERANCE });
        }

        let mut traj = Trajectory {
            states: vec![initial.clone()],
            steps: vec![0],
            stop: StopReason::Completed,
            steps_taken: 0,
            max_hermiticity_drift: 0.0,
            off_manifold: !balanced,
            initial_balanced_defect: defect,
        };
        observe(initial, 0)?;
        let t0 = initial.t;
        let t_end = self.control.t_end;
        let mut state = initial.clone();
        let mut step = 0usize;
        while state.t < t_end {
            if step >= self.control.max_steps {
                traj.stop = StopReason::MaxSteps;
                break;
            }
            let mut dt = self.time_step(&state);
            let last = state.t + dt > t_end || t_end - (state.t + dt) < 1e-9 * dt;
            if last {
                dt = t_end - state.t;
            }
            let result = match self.step(&state, dt) {
                Ok(r) => r,
                Err(LabError::Positivity { node, coords, min_eigenvalue }) => {
                    traj.stop = StopReason::Singularity { node, coords, min_eigenvalue };
                    break;
                }
                Err(LabError::SingularSystem { node, coords, .. }) => {
                    let min_eigenvalue = state.metric.min_eigenvalues()[node];
                    traj.stop = StopReason::Singularity { node, coords, min_eigenvalue };
                    break;
                }
                Err(e) => return Err(e),
            };
            step += 1;
            let mut next = result.state;
            // avoid accumulating round-off in t
            if last {
                next.t = t_end;
            } else if let TimeStep::Fixed(nominal) = self.control.dt {
                next.t = t0 + step as f64 * nominal;
            }
            if next.metric.tensor().components().iter().flatten().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                traj.stop = StopReason::Blowup { step };
                break;
            }
            let mins = next.metric.min_eigenvalues();
            let (node, &worst) = mins
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .expect("grid has nodes");
            if !(worst > self.control.positivity_floor) {
                traj.stop = StopReason::Singularity {
                    node,
                    coords: next.metric.grid().coordinates(node),
                    min_eigenvalue: worst,
                };
                break;
            }
            traj.max_hermiticity_drift = traj.max_hermiticity_drift.max(result.hermiticity_drift);
            traj.steps_taken = step;
            state = next;
            observe(&state, step)?;
            if step % self.control.cadence == 0 {
                traj.states.push(state.clone());
                traj.steps.push(step);
            }
        }
        if *traj.steps.last().expect("initial state stored") != traj.steps_taken {
            traj.states.push(state);
            traj.steps.push(traj.steps_taken);
        }
        Ok(traj)
    }

    pub fn integrate(&self, initial: &FlowState) -> Result<Trajectory> {
        self.integrate_with(initial, |_, _| Ok(()))
    }
}

/// Single RK4 step with the step size the control prescribes.
pub fn step(state: &FlowState, source: &SourceSpec, control: &StepControl, d: &Differentiator) -> Result<StepResult> {
    let integ = Integrator::new(d, source.clone(), control.clone())?;
    let dt = integ.time_step(state);
    integ.step(state, dt)
}

pub fn integrate(state: &FlowState, source: &SourceSpec, control: &StepControl, d: &Differentiator) -> Result<Trajectory> {
    Integrator::new(d, source.clone(), control.clone())?.integrate(state)
}
