//! Run configuration: JSON, unknown keys rejected, published as a JSON
//! schema (`iiblab schema`).

use std::path::{Path, PathBuf};
use std::sync::Arc;

use iiblab_core::deriv::DerivativeScheme;
use iiblab_core::diagnostics::TestFunctionWeights;
use iiblab_core::flow::Formulation;
use iiblab_core::grid::{Axis, TorusGrid, C64};
use iiblab_core::metric::{self, FourierSeries, HermitianMetricField, RandomMetricSpec, VolumeForm};
use nalgebra::DMatrix;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: Geometry,
    pub initial_metric: MetricFamily,
    /// Reference metric for `h`, `S` and the evolution identities; flat when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_metric: Option<MetricFamily>,
    #[serde(default = "default_formulation")]
    pub formulation: Formulation,
    /// `Omega = c dz^1 ^ ... ^ dz^n`, given as `[re, im]`.
    #[serde(default = "default_volume")]
    pub volume: [f64; 2],
    #[serde(default)]
    pub source: Source,
    #[serde(default = "default_scheme")]
    pub derivative: DerivativeScheme,
    pub control: Control,
    #[serde(default)]
    pub verify_suite: Vec<VerifyEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_function: Option<TestFunctionWeights>,
    #[serde(default)]
    pub output: Output,
}

fn default_formulation() -> Formulation {
    Formulation::Eta
}

fn default_volume() -> [f64; 2] {
    [1.0, 0.0]
}

fn default_scheme() -> DerivativeScheme {
    DerivativeScheme::Spectral
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Geometry {
    pub n: usize,
    #[serde(default = "default_axes")]
    pub active_axes: Vec<String>,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
}

fn default_axes() -> Vec<String> {
    vec!["x1".into(), "y1".into()]
}

fn default_resolution() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case", rename_all_fields = "camelCase", tag = "family", deny_unknown_fields)]
pub enum MetricFamily {
    Flat,
    /// `diag(lambda^2 e^{2f}, e^f, ..., e^f)`.
    Balanced {
        #[serde(default = "one")]
        lambda: f64,
        f: FourierSeries,
    },
    /// `diag(e^{a}, 1, ..., 1)` with `a` a function of the first complex coordinate.
    KahlerDiagonal {
        #[serde(rename = "logA")]
        log_a: FourierSeries,
    },
    /// `exp(H)` with `H` a seeded random band-limited Hermitian field.
    Random {
        seed: u64,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        #[serde(default = "one_u32")]
        bandwidth: u32,
    },
}

fn one() -> f64 {
    1.0
}

fn one_u32() -> u32 {
    1
}

fn default_amplitude() -> f64 {
    0.3
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case", rename_all_fields = "camelCase", tag = "kind", deny_unknown_fields)]
pub enum Source {
    #[default]
    None,
    /// Constant `Psi = sum M[j][k] sigma_{j kbar}`; entries are `[re, im]`.
    /// Omega form only.
    PsiConstant { matrix: Vec<Vec<[f64; 2]>> },
    /// `Phi` read from a snapshot file holding a matrix field, relative to
    /// the config file. Eta form only.
    PhiField { file: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(untagged)]
pub enum Dt {
    Fixed(f64),
    /// The string `"cfl"`: `dt = cfl * dx^2 * lambda_min(g)` at every step.
    Policy(DtPolicy),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum DtPolicy {
    Cfl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Control {
    pub dt: Dt,
    pub t_end: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default = "default_floor")]
    pub positivity_floor: f64,
    /// Steps between diagnostics records and snapshots.
    #[serde(default = "default_cadence")]
    pub cadence: usize,
    /// Snapshot spacing of the short trajectory integrated for the
    /// evolution identities.
    #[serde(default = "default_evolution_dt")]
    pub evolution_dt: f64,
}

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

fn default_evolution_dt() -> f64 {
    1e-5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct VerifyEntry {
    pub name: IdentityName,
    /// Replaces the default tolerance of every report of this check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum IdentityName {
    ConnectionDifference,
    Bianchi,
    CommutatorConvention,
    QuasilinearRicci,
    MetricCompatibility,
    RicciTildeHermitian,
    ScalarCurvatureTwoPath,
    TauIdentity,
    Stationarity,
    TrhEvolution,
    DilatonEvolution,
    SEvolution,
}

impl IdentityName {
    /// Checks run by `verify` when the suite is empty.
    pub const SPATIAL: [IdentityName; 7] = [
        IdentityName::ConnectionDifference,
        IdentityName::Bianchi,
        IdentityName::CommutatorConvention,
        IdentityName::QuasilinearRicci,
        IdentityName::MetricCompatibility,
        IdentityName::RicciTildeHermitian,
        IdentityName::ScalarCurvatureTwoPath,
    ];

    pub fn is_evolution(self) -> bool {
        matches!(self, IdentityName::TrhEvolution | IdentityName::DilatonEvolution | IdentityName::SEvolution)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum SnapshotPolicy {
    /// Every diagnostics tick and the final state.
    #[default]
    All,
    Final,
    None,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Output {
    /// Output directory; `--out` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub snapshots: SnapshotPolicy,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let Source::PhiField { file } = &mut cfg.source {
            if file.is_relative() {
                if let Some(dir) = path.parent() {
                    *file = dir.join(&*file);
                }
            }
        }
        Ok(cfg)
    }

    /// Applies the `--seed` and `--resolution` overrides.
    pub fn with_overrides(mut self, seed: Option<u64>, resolution: Option<usize>) -> Self {
        if let Some(s) = seed {
            if let MetricFamily::Random { seed, .. } = &mut self.initial_metric {
                *seed = s;
            }
        }
        if let Some(r) = resolution {
            self.geometry.resolution = r;
        }
        self
    }

    /// Seed of the random test data used by the commutator check.
    pub fn seed(&self) -> u64 {
        match self.initial_metric {
            MetricFamily::Random { seed, .. } => seed,
            _ => 0,
        }
    }

    pub fn grid(&self) -> Result<Arc<TorusGrid>, CliError> {
        let axes = self
            .geometry
            .active_axes
            .iter()
            .map(|a| Axis::parse(a).ok_or_else(|| CliError::Config(format!("unknown axis `{a}`"))))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Arc::new(TorusGrid::new(self.geometry.n, axes, self.geometry.resolution)?))
    }

    pub fn volume(&self) -> Result<VolumeForm, CliError> {
        Ok(VolumeForm::new(C64::new(self.volume[0], self.volume[1]))?)
    }
}

impl MetricFamily {
    pub fn build(&self, grid: &Arc<TorusGrid>) -> Result<HermitianMetricField, CliError> {
        let g = match self {
            MetricFamily::Flat => metric::flat(grid.clone()),
            MetricFamily::Balanced { lambda, f } => {
                if grid.n() != 3 {
                    return Err(CliError::Config("the balanced family is defined for n = 3".into()));
                }
                metric::balanced(grid.clone(), *lambda, &f.evaluate(grid)?)?
            }
            MetricFamily::KahlerDiagonal { log_a } => {
                let a: Vec<f64> = log_a.evaluate(grid)?.iter().map(|v| v.exp()).collect();
                metric::kahler_diagonal(grid.clone(), &a)?
            }
            MetricFamily::Random { seed, amplitude, bandwidth } => metric::random(
                grid.clone(),
                &RandomMetricSpec { seed: *seed, amplitude: *amplitude, bandwidth: *bandwidth },
            )?,
        };
        Ok(g)
    }
}

impl Source {
    pub fn psi_matrix(&self, n: usize) -> Result<Option<DMatrix<C64>>, CliError> {
        let Source::PsiConstant { matrix } = self else {
            return Ok(None);
        };
        if matrix.len() != n || matrix.iter().any(|r| r.len() != n) {
            return Err(CliError::Config(format!("psi-constant matrix must be {n}x{n}")));
        }
        Ok(Some(DMatrix::from_fn(n, n, |j, k| C64::new(matrix[j][k][0], matrix[j][k][1]))))
    }
}

/// JSON schema of [`RunConfig`].
pub fn schema() -> schemars::schema::RootSchema {
    schemars::schema_for!(RunConfig)
}
