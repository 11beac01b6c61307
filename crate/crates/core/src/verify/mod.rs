//! Residual checks of exact geometric identities.
//!
//! Each check assembles the two sides of an identity through different
//! derivative code paths: the left side through the primary scheme and the
//! right side through the oracle scheme. By default these are the FFT path
//! and a tenth-order central difference stencil: the stencil error decays
//! like `h^10`, so residuals measure discretization error and shrink under
//! refinement instead of sitting at round-off. Time derivatives in evolution
//! checks come from centered differences over stored snapshots only.

mod evolution;
mod spatial;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::deriv::{restrict, DerivativeScheme, Differentiator};
use crate::error::Result;
use crate::metric::HermitianMetricField;
use crate::grid::{GridSpec, TorusGrid, C64};
use crate::tensor::TensorField;

pub use evolution::*;

/// Default tolerance for purely spatial identities.
pub const SPATIAL_TOLERANCE: f64 = 1e-7;
/// Default tolerance for evolution identities with `dt = 1e-5`.
pub const EVOLUTION_TOLERANCE: f64 = 1e-5;
/// Default relative tolerance for the full S evolution identity.
pub const S_EVOLUTION_TOLERANCE: f64 = 1e-3;
/// Oracle scheme of [`Verifier::new`].
pub const DEFAULT_ORACLE: DerivativeScheme = DerivativeScheme::CentralFd(10);
pub use crate::balance::BALANCED_TOLERANCE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum ReportStatus {
    Pass,
    Fail,
    /// The identity does not apply to the input.
    PreconditionFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "camelCase")]
pub struct OracleSpec {
    pub scheme: DerivativeScheme,
    pub oracle_scheme: DerivativeScheme,
    /// Resolution the oracle side is evaluated at.
    pub oracle_resolution: usize,
    pub swapped: bool,
    /// Spacing of the snapshots used for time differences, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Whether the residual is normalized by the size of the terms.
    pub relative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "camelCase")]
pub struct ResidualReport {
    pub identity: String,
    pub max_residual: f64,
    pub mean_residual: f64,
    pub tolerance: f64,
    pub grid: GridSpec,
    pub oracle: OracleSpec,
    pub status: ReportStatus,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ResidualReport {
    fn build(identity: &str, max: f64, mean: f64, tolerance: f64, grid: &TorusGrid, oracle: OracleSpec) -> Self {
        let pass = max <= tolerance;
        Self {
            identity: identity.to_string(),
            max_residual: max,
            mean_residual: mean,
            tolerance,
            grid: grid.spec(),
            oracle,
            status: if pass { ReportStatus::Pass } else { ReportStatus::Fail },
            pass,
            note: None,
        }
    }

    fn precondition_failed(identity: &str, grid: &TorusGrid, oracle: OracleSpec, note: String) -> Self {
        Self {
            identity: identity.to_string(),
            max_residual: f64::NAN,
            mean_residual: f64::NAN,
            tolerance: 0.0,
            grid: grid.spec(),
            oracle,
            status: ReportStatus::PreconditionFailed,
            pass: false,
            note: Some(note),
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    /// Re-evaluates the pass flag against a new tolerance.
    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        if self.status != ReportStatus::PreconditionFailed {
            self.pass = self.max_residual <= tolerance;
            self.status = if self.pass { ReportStatus::Pass } else { ReportStatus::Fail };
        }
        self
    }
}

/// Running max and mean of `|residual|`.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Accum {
    max: f64,
    sum: f64,
    count: usize,
}

impl Accum {
    pub(crate) fn push(&mut self, v: f64) {
        // NaN must poison the maximum rather than be skipped by f64::max
        if v.is_nan() || self.max.is_nan() {
            self.max = f64::NAN;
        } else {
            self.max = self.max.max(v);
        }
        self.sum += v;
        self.count += 1;
    }

    pub(crate) fn diff(&mut self, a: &[C64], b: &[C64]) {
        for (x, y) in a.iter().zip(b.iter()) {
            self.push((x - y).norm());
        }
    }

    pub(crate) fn max(&self) -> f64 {
        self.max
    }

    pub(crate) fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }

}

/// Groups of component fields, one group per identity.
pub(crate) type Sides = Vec<Vec<Vec<C64>>>;

/// Primary and oracle derivative paths for one grid.
///
/// The left side of every spatial identity is evaluated on the input grid
/// with the primary scheme. The right side is evaluated with the oracle
/// scheme on a grid `refinement` times finer, after trigonometric
/// interpolation of the inputs, and restricted back to the input nodes. With
/// `refinement = 1` both sides live on the input grid and identities that
/// hold exactly for the discrete operators only show round-off.
#[derive(Debug)]
pub struct Verifier {
    grid: Arc<TorusGrid>,
    oracle_grid: Arc<TorusGrid>,
    interp: Differentiator,
    pub primary: Differentiator,
    pub oracle: Differentiator,
    pub tolerance: f64,
    /// Evaluate the left side on the oracle path and the right side on the
    /// primary path instead.
    pub swapped: bool,
}

impl Verifier {
    /// FFT primary path, tenth-order stencil oracle on the same grid.
    pub fn new(grid: Arc<TorusGrid>) -> Self {
        Self::with_schemes(grid, DerivativeScheme::Spectral, DEFAULT_ORACLE, 1)
    }

    pub fn with_schemes(grid: Arc<TorusGrid>, primary: DerivativeScheme, oracle: DerivativeScheme, refinement: usize) -> Self {
        let refinement = refinement.max(1);
        let oracle_grid = if refinement == 1 {
            grid.clone()
        } else {
            let axes = grid.active_axes().to_vec();
            Arc::new(
                TorusGrid::new(grid.n(), axes, grid.resolution() * refinement.next_power_of_two())
                    .expect("refined grid is valid"),
            )
        };
        Self {
            interp: Differentiator::new(grid.clone(), DerivativeScheme::Spectral),
            primary: Differentiator::new(grid.clone(), primary),
            oracle: Differentiator::new(oracle_grid.clone(), oracle),
            grid,
            oracle_grid,
            tolerance: SPATIAL_TOLERANCE,
            swapped: false,
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn swapped(mut self) -> Self {
        self.swapped = !self.swapped;
        self
    }

    pub fn grid(&self) -> &Arc<TorusGrid> {
        &self.grid
    }

    pub fn refinement(&self) -> usize {
        self.oracle_grid.resolution() / self.grid.resolution()
    }

    pub(crate) fn oracle_spec(&self, dt: Option<f64>, relative: bool) -> OracleSpec {
        OracleSpec {
            scheme: self.primary.scheme(),
            oracle_scheme: self.oracle.scheme(),
            oracle_resolution: self.oracle_grid.resolution(),
            swapped: self.swapped,
            dt,
            relative,
        }
    }

    pub(crate) fn report(&self, identity: &str, acc: &Accum) -> ResidualReport {
        ResidualReport::build(identity, acc.max(), acc.mean(), self.tolerance, &self.grid, self.oracle_spec(None, false))
    }

    pub(crate) fn lift(&self, t: &TensorField) -> TensorField {
        if self.oracle_grid == self.grid {
            return t.clone();
        }
        let comps = t
            .components()
            .iter()
            .map(|c| self.interp.refine(c, &self.oracle))
            .collect();
        TensorField::from_components(self.oracle_grid.clone(), t.rank(), comps).expect("lifted layout")
    }

    pub(crate) fn lift_metric(&self, g: &HermitianMetricField) -> HermitianMetricField {
        HermitianMetricField::from_tensor(self.lift(g.tensor()).hermitian_part()).expect("rank 2")
    }

    fn restrict(&self, v: Vec<C64>) -> Vec<C64> {
        if self.oracle_grid == self.grid {
            v
        } else {
            restrict(&v, &self.oracle_grid, &self.grid)
        }
    }

    /// Evaluates both sides of a family of identities and compares them
    /// component by component on the input grid.
    pub(crate) fn compare<A, B>(
        &self,
        names: &[&str],
        metrics: &[&HermitianMetricField],
        fields: &[&TensorField],
        side_a: A,
        side_b: B,
    ) -> Result<Vec<ResidualReport>>
    where
        A: Fn(&[HermitianMetricField], &[TensorField], &Differentiator) -> Result<Sides>,
        B: Fn(&[HermitianMetricField], &[TensorField], &Differentiator) -> Result<Sides>,
    {
        let coarse_m: Vec<HermitianMetricField> = metrics.iter().map(|g| (*g).clone()).collect();
        let coarse_f: Vec<TensorField> = fields.iter().map(|f| (*f).clone()).collect();
        let fine_m: Vec<HermitianMetricField> = metrics.iter().map(|g| self.lift_metric(g)).collect();
        let fine_f: Vec<TensorField> = fields.iter().map(|f| self.lift(f)).collect();
        let restrict_all = |sides: Sides| -> Sides {
            sides
                .into_iter()
                .map(|group| group.into_iter().map(|c| self.restrict(c)).collect())
                .collect()
        };
        let (a, b) = if self.swapped {
            (restrict_all(side_a(&fine_m, &fine_f, &self.oracle)?), side_b(&coarse_m, &coarse_f, &self.primary)?)
        } else {
            (side_a(&coarse_m, &coarse_f, &self.primary)?, restrict_all(side_b(&fine_m, &fine_f, &self.oracle)?))
        };
        assert_eq!(a.len(), names.len());
        assert_eq!(b.len(), names.len());
        Ok(names
            .iter()
            .zip(a.iter().zip(b.iter()))
            .map(|(name, (ga, gb))| {
                let mut acc = Accum::default();
                assert_eq!(ga.len(), gb.len(), "{name}: sides disagree in size");
                for (x, y) in ga.iter().zip(gb.iter()) {
                    acc.diff(x, y);
                }
                self.report(name, &acc)
            })
            .collect())
    }
}

/// Seeded random band-limited complex tensor field (smooth test data for
/// commutator checks).
pub fn random_tensor(grid: Arc<TorusGrid>, rank: usize, seed: u64, bandwidth: i32) -> TensorField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let axes = grid.active_axes().to_vec();
    let mut out = TensorField::zeros(grid.clone(), rank);
    for c in 0..out.component_count() {
        let mut terms = Vec::new();
        for _ in 0..4 {
            let k: Vec<i32> = axes.iter().map(|_| rng.gen_range(-bandwidth..=bandwidth)).collect();
            let amp = C64::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
            terms.push((k, amp));
        }
        *out.comp_mut(c) = grid.sample(|x| {
            terms
                .iter()
                .map(|(k, a)| {
                    let phase: f64 = 2.0
                        * std::f64::consts::PI
                        * k.iter().zip(axes.iter()).map(|(&kv, ax)| kv as f64 * x[ax.0]).sum::<f64>();
                    a * C64::from_polar(1.0, phase)
                })
                .sum()
        });
    }
    out
}
