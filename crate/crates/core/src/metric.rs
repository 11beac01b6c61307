//! Hermitian metric fields, the holomorphic volume form and the built-in
//! metric families.
//!
//! A metric is stored as the matrix field `G[k][j] = g_{kbar j}`, so
//! `omega = i G[k][j] dz^j ^ dzbar^k` and `G` is a Hermitian matrix at every
//! node.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::forms::DifferentialForm;
use crate::grid::{ScalarField, TorusGrid, C64};
use crate::linalg::{determinant, generalized_eigenvalues, hermitian_eigenvalues, hermitian_exp, inverse_with_condition};
use crate::tensor::TensorField;

const I: C64 = C64::new(0.0, 1.0);

/// Holomorphic volume form `Omega = c dz^1 ^ ... ^ dz^n` with constant `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeForm {
    pub c: C64,
}

impl VolumeForm {
    pub fn new(c: C64) -> Result<Self> {
        if c.norm() == 0.0 || !c.re.is_finite() || !c.im.is_finite() {
            return Err(LabError::Source("volume form constant must be finite and nonzero".into()));
        }
        Ok(Self { c })
    }

    pub fn unit() -> Self {
        Self { c: C64::new(1.0, 0.0) }
    }
}

impl Default for VolumeForm {
    fn default() -> Self {
        Self::unit()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMetricField {
    g: TensorField,
}

impl HermitianMetricField {
    /// Wraps a rank-2 field without checks. Use [`Self::check_positive`]
    /// before handing the result to geometry routines.
    pub fn from_tensor(g: TensorField) -> Result<Self> {
        if g.rank() != 2 {
            return Err(LabError::Valence { rank: g.rank(), valence: 2 });
        }
        Ok(Self { g })
    }

    pub fn from_node_matrices(grid: Arc<TorusGrid>, mats: &[DMatrix<C64>]) -> Self {
        Self {
            g: TensorField::from_node_matrices(grid, mats),
        }
    }

    pub fn constant(grid: Arc<TorusGrid>, m: &DMatrix<C64>) -> Self {
        Self {
            g: TensorField::constant_matrix(grid, m),
        }
    }

    pub fn grid(&self) -> &Arc<TorusGrid> {
        self.g.grid()
    }

    pub fn n(&self) -> usize {
        self.g.n()
    }

    pub fn tensor(&self) -> &TensorField {
        &self.g
    }

    pub fn into_tensor(self) -> TensorField {
        self.g
    }

    pub fn matrix(&self, node: usize) -> DMatrix<C64> {
        self.g.node_matrix(node)
    }

    pub fn matrices(&self) -> Vec<DMatrix<C64>> {
        self.g.node_matrices()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        self.g.skew_max()
    }

    /// Smallest eigenvalue at every node.
    pub fn min_eigenvalues(&self) -> Vec<f64> {
        (0..self.g.node_count())
            .into_par_iter()
            .map(|i| hermitian_eigenvalues(&self.matrix(i))[0])
            .collect()
    }

    /// Fails with the worst node if some eigenvalue is `<= floor`.
    pub fn check_positive(&self, floor: f64) -> Result<()> {
        let mins = self.min_eigenvalues();
        let (node, &worst) = mins
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("grid has nodes");
        if worst > floor && worst.is_finite() {
            Ok(())
        } else {
            Err(LabError::Positivity {
                node,
                coords: self.grid().coordinates(node),
                min_eigenvalue: worst,
            })
        }
    }

    pub fn determinant(&self) -> Vec<f64> {
        (0..self.g.node_count())
            .into_par_iter()
            .map(|i| determinant(&self.matrix(i)).re)
            .collect()
    }

    /// Pointwise inverse `g^{j kbar}` stored as `Ginv[j][k]`, with the
    /// largest condition number seen.
    pub fn inverse(&self) -> Result<(TensorField, f64)> {
        let results: Vec<_> = (0..self.g.node_count())
            .into_par_iter()
            .map(|i| inverse_with_condition(&self.matrix(i)))
            .collect();
        let mut mats = Vec::with_capacity(results.len());
        let mut worst: f64 = 0.0;
        for (node, r) in results.into_iter().enumerate() {
            match r {
                Some((inv, cond)) => {
                    worst = worst.max(cond);
                    mats.push(inv);
                }
                None => {
                    return Err(LabError::SingularSystem {
                        node,
                        coords: self.grid().coordinates(node),
                        condition: f64::INFINITY,
                    })
                }
            }
        }
        Ok((TensorField::from_node_matrices(self.grid().clone(), &mats), worst))
    }

    /// Pointwise scale by a positive function.
    pub fn conformal(&self, f: &[f64]) -> Self {
        let fc: Vec<C64> = f.iter().map(|&v| C64::new(v, 0.0)).collect();
        Self {
            g: self.g.mul_scalar_field(&fc),
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            g: self.g.scale(C64::new(c, 0.0)),
        }
    }

    /// Eigenvalues of `h = ghat^-1 g` at every node (ascending), from the
    /// Hermitian generalized eigenproblem `det(g - lambda ghat) = 0`.
    pub fn relative_eigenvalues(&self, reference: &Self) -> Result<Vec<Vec<f64>>> {
        if self.grid() != reference.grid() {
            return Err(LabError::GridMismatch);
        }
        (0..self.g.node_count())
            .into_par_iter()
            .map(|i| {
                generalized_eigenvalues(&self.matrix(i), &reference.matrix(i)).ok_or_else(|| {
                    LabError::Positivity {
                        node: i,
                        coords: self.grid().coordinates(i),
                        min_eigenvalue: hermitian_eigenvalues(&reference.matrix(i))[0],
                    }
                })
            })
            .collect()
    }
}

/// `omega = i g_{kbar j} dz^j ^ dzbar^k`.
pub fn metric_to_form(g: &HermitianMetricField) -> DifferentialForm {
    let n = g.n();
    let mut omega = DifferentialForm::zero(g.grid().clone(), 1, 1).expect("(1,1) fits");
    for j in 0..n {
        for k in 0..n {
            *omega.component_mut(&[j], &[k]) = g.g.comp(k * n + j).iter().map(|v| v * I).collect();
        }
    }
    omega
}

/// Inverse of [`metric_to_form`]. Rejects non-real forms and checks
/// positivity against `floor`.
pub fn form_to_metric(omega: &DifferentialForm, floor: f64) -> Result<HermitianMetricField> {
    if omega.bidegree() != (1, 1) {
        return Err(LabError::Degree(format!("expected a (1,1)-form, got {:?}", omega.bidegree())));
    }
    let n = omega.grid().n();
    let scale = omega.max_abs().max(1.0);
    let defect = omega.reality_defect()?;
    if defect > 1e-12 * scale {
        return Err(LabError::Degree(format!("(1,1)-form is not real: defect {defect:e}")));
    }
    let mut g = TensorField::zeros(omega.grid().clone(), 2);
    for j in 0..n {
        for k in 0..n {
            *g.comp_mut(k * n + j) = omega.component(&[j], &[k]).iter().map(|v| -v * I).collect();
        }
    }
    let g = HermitianMetricField { g };
    g.check_positive(floor)?;
    Ok(g)
}

/// `||Omega||_g = sqrt(|c|^2 / det g)`.
pub fn volume_norm(g: &HermitianMetricField, vol: &VolumeForm) -> Result<ScalarField> {
    let det = g.determinant();
    if let Some((node, &d)) = det.iter().enumerate().find(|(_, d)| !(**d > 0.0)) {
        return Err(LabError::Positivity {
            node,
            coords: g.grid().coordinates(node),
            min_eigenvalue: d,
        });
    }
    let c2 = vol.c.norm_sqr();
    let values = det.iter().map(|&d| C64::new((c2 / d).sqrt(), 0.0)).collect();
    ScalarField::new(g.grid().clone(), values)
}

/// One term `cos * cos(2 pi k.x) + sin * sin(2 pi k.x)` of a real Fourier
/// series; `k` lists integer wavenumbers along the grid's active axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct FourierTerm {
    pub k: Vec<i32>,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

/// Real trigonometric polynomial over the active axes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(transparent)]
pub struct FourierSeries(pub Vec<FourierTerm>);

impl FourierSeries {
    /// `amp * sin(2 pi x1) cos(2 pi y1)` written as two terms.
    pub fn sin_x_cos_y(amp: f64) -> Self {
        FourierSeries(vec![
            FourierTerm { k: vec![1, 1], cos: 0.0, sin: 0.5 * amp },
            FourierTerm { k: vec![1, -1], cos: 0.0, sin: 0.5 * amp },
        ])
    }

    pub fn max_wavenumber(&self) -> i32 {
        self.0
            .iter()
            .flat_map(|t| t.k.iter().map(|v| v.abs()))
            .max()
            .unwrap_or(0)
    }

    pub fn evaluate(&self, grid: &TorusGrid) -> Result<Vec<f64>> {
        let axes = grid.active_axes();
        for t in &self.0 {
            if t.k.len() != axes.len() {
                return Err(LabError::Grid(format!(
                    "Fourier term has {} wavenumbers but the grid has {} active axes",
                    t.k.len(),
                    axes.len()
                )));
            }
        }
        if 2 * self.max_wavenumber() as usize >= grid.resolution() {
            return Err(LabError::Grid(format!(
                "wavenumber {} is not resolved at resolution {}",
                self.max_wavenumber(),
                grid.resolution()
            )));
        }
        Ok((0..grid.node_count())
            .map(|node| {
                let c = grid.coordinates(node);
                self.0
                    .iter()
                    .map(|t| {
                        let phase: f64 = t
                            .k
                            .iter()
                            .zip(axes.iter())
                            .map(|(&k, a)| k as f64 * c[a.0])
                            .sum::<f64>()
                            * 2.0
                            * PI;
                        t.cos * phase.cos() + t.sin * phase.sin()
                    })
                    .sum()
            })
            .collect())
    }
}

fn diag_metric(grid: Arc<TorusGrid>, diag: impl Fn(usize, usize) -> f64) -> HermitianMetricField {
    let n = grid.n();
    let mut g = TensorField::zeros(grid.clone(), 2);
    for m in 0..n {
        *g.comp_mut(m * n + m) = (0..grid.node_count()).map(|i| C64::new(diag(i, m), 0.0)).collect();
    }
    HermitianMetricField { g }
}

pub fn flat(grid: Arc<TorusGrid>) -> HermitianMetricField {
    let n = grid.n();
    HermitianMetricField::constant(grid, &DMatrix::identity(n, n))
}

/// Conformally balanced non-Kähler family
/// `g = diag(lambda^2 e^{(n-1) f}, e^f, ..., e^f)` with `f` a function of
/// the first complex coordinate. For `n = 3` this is
/// `diag(lambda^2 e^{2f}, e^f, e^f)`.
pub fn balanced(grid: Arc<TorusGrid>, lambda: f64, f: &[f64]) -> Result<HermitianMetricField> {
    if !(lambda > 0.0) {
        return Err(LabError::Source(format!("lambda must be positive, got {lambda}")));
    }
    if f.len() != grid.node_count() {
        return Err(LabError::Grid("conformal factor does not match grid".into()));
    }
    let n = grid.n();
    let lead = (n - 1) as f64;
    Ok(diag_metric(grid, |i, m| {
        if m == 0 {
            lambda * lambda * (lead * f[i]).exp()
        } else {
            f[i].exp()
        }
    }))
}

/// Kähler metric `diag(a, 1, ..., 1)` with `a > 0` a function of `z^1`.
pub fn kahler_diagonal(grid: Arc<TorusGrid>, a: &[f64]) -> Result<HermitianMetricField> {
    if a.iter().any(|&v| !(v > 0.0)) {
        return Err(LabError::Source("Kähler factor must be positive".into()));
    }
    Ok(diag_metric(grid, |i, m| if m == 0 { a[i] } else { 1.0 }))
}

/// Parameters of a random metric `g = exp(H)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct RandomMetricSpec {
    pub seed: u64,
    /// Bound on the operator norm of `H` at every point.
    #[serde(default = "RandomMetricSpec::default_amplitude")]
    pub amplitude: f64,
    /// Largest wavenumber (per active axis) present in `H`.
    #[serde(default = "RandomMetricSpec::default_bandwidth")]
    pub bandwidth: u32,
}

impl RandomMetricSpec {
    fn default_amplitude() -> f64 {
        0.3
    }

    fn default_bandwidth() -> u32 {
        1
    }

    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            amplitude: Self::default_amplitude(),
            bandwidth: Self::default_bandwidth(),
        }
    }
}

fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<C64> {
    let mut m = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
    for a in 0..n {
        m[(a, a)] = C64::new(rng.gen_range(-1.0..1.0), 0.0);
        for b in a + 1..n {
            let v = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            m[(a, b)] = v;
            m[(b, a)] = v.conj();
        }
    }
    m
}

/// Random positive-definite metric `exp(H)`,
/// `H(x) = sum_k C_k cos(2 pi k.x) + S_k sin(2 pi k.x)` with Hermitian
/// `C_k, S_k` over the wavenumbers `0 <= |k_a| <= bandwidth`. The
/// coefficients are scaled so that `sum ||C_k||_F + ||S_k||_F = amplitude`,
/// which bounds `||H(x)||` everywhere. They depend on the seed only, so
/// different resolutions sample the same smooth metric.
pub fn random(grid: Arc<TorusGrid>, spec: &RandomMetricSpec) -> Result<HermitianMetricField> {
    if !(spec.amplitude >= 0.0 && spec.amplitude.is_finite()) {
        return Err(LabError::Source("random amplitude must be finite and >= 0".into()));
    }
    if 2 * spec.bandwidth as usize >= grid.resolution() {
        return Err(LabError::Grid(format!(
            "bandwidth {} is not resolved at resolution {}",
            spec.bandwidth,
            grid.resolution()
        )));
    }
    let n = grid.n();
    let dims = grid.active_axes().len();
    let b = spec.bandwidth as i32;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut modes: Vec<(Vec<i32>, DMatrix<C64>, DMatrix<C64>)> = Vec::new();
    let width = (2 * b + 1) as usize;
    for code in 0..width.pow(dims as u32) {
        let k: Vec<i32> = (0..dims)
            .map(|a| ((code / width.pow((dims - 1 - a) as u32)) % width) as i32 - b)
            .collect();
        // keep one representative of each +-k pair
        let first_nonzero = k.iter().find(|&&v| v != 0).copied();
        if first_nonzero.map_or(false, |v| v < 0) {
            continue;
        }
        let c = random_hermitian(&mut rng, n);
        let s = if first_nonzero.is_some() {
            random_hermitian(&mut rng, n)
        } else {
            DMatrix::zeros(n, n)
        };
        modes.push((k, c, s));
    }
    let total: f64 = modes.iter().map(|(_, c, s)| c.norm() + s.norm()).sum();
    let scale = if total > 0.0 { spec.amplitude / total } else { 0.0 };
    let axes = grid.active_axes().to_vec();
    let mats: Vec<DMatrix<C64>> = (0..grid.node_count())
        .into_par_iter()
        .map(|node| {
            let x = grid.coordinates(node);
            let mut h = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
            for (k, c, s) in &modes {
                let phase: f64 =
                    2.0 * PI * k.iter().zip(axes.iter()).map(|(&kv, a)| kv as f64 * x[a.0]).sum::<f64>();
                h += c * C64::new(phase.cos() * scale, 0.0) + s * C64::new(phase.sin() * scale, 0.0);
            }
            hermitian_exp(&h)
        })
        .collect();
    Ok(HermitianMetricField::from_node_matrices(grid, &mats))
}
