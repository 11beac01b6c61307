//! Derivative operators on periodic grids.
//!
//! Three interchangeable schemes share one interface:
//!
//! * [`DerivativeScheme::Spectral`]: FFT along every active axis, multiply by
//!   the Fourier symbol, inverse FFT. The production path.
//! * [`DerivativeScheme::SpectralMatrix`]: the same trigonometric
//!   interpolant differentiated through the dense periodic differentiation
//!   matrix `D_ij = pi (-1)^(i-j) cot(pi (i-j) / N)`. No FFT code is shared,
//!   so it serves as the independent oracle path for identity checks.
//! * [`DerivativeScheme::CentralFd`]: explicit central stencils of even
//!   order. They share no code with the Fourier paths and converge
//!   algebraically, which makes them the oracle for convergence checks.
//!
//! In all schemes the first derivative of the Nyquist mode is zero, and a
//! field that is bitwise constant differentiates to exact zeros.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::grid::{Axis, TorusGrid, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum DerivativeScheme {
    Spectral,
    SpectralMatrix,
    /// Central difference stencil of the given even order (2 to 16).
    CentralFd(u8),
}

impl DerivativeScheme {
    /// The five-point stencil.
    pub const CENTRAL_FD4: DerivativeScheme = DerivativeScheme::CentralFd(4);

    pub fn name(self) -> String {
        match self {
            DerivativeScheme::Spectral => "spectral".into(),
            DerivativeScheme::SpectralMatrix => "spectral-matrix".into(),
            DerivativeScheme::CentralFd(order) => format!("central-fd{order}"),
        }
    }
}

impl std::fmt::Display for DerivativeScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name())
    }
}

impl schemars::JsonSchema for DerivativeScheme {
    fn schema_name() -> String {
        "DerivativeScheme".into()
    }

    fn json_schema(_: &mut schemars::gen::SchemaGenerator) -> schemars::schema::Schema {
        schemars::schema::SchemaObject {
            instance_type: Some(schemars::schema::InstanceType::String.into()),
            string: Some(Box::new(schemars::schema::StringValidation {
                pattern: Some("^(spectral|spectral-matrix|central-fd(2|4|6|8|10|12|14|16))$".into()),
                ..Default::default()
            })),
            ..Default::default()
        }
        .into()
    }
}

impl From<DerivativeScheme> for String {
    fn from(s: DerivativeScheme) -> String {
        s.name()
    }
}

impl TryFrom<String> for DerivativeScheme {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        match s.as_str() {
            "spectral" => Ok(DerivativeScheme::Spectral),
            "spectral-matrix" => Ok(DerivativeScheme::SpectralMatrix),
            other => other
                .strip_prefix("central-fd")
                .and_then(|o| o.parse::<u8>().ok())
                .filter(|o| *o >= 2 && *o <= 16 && o % 2 == 0)
                .map(DerivativeScheme::CentralFd)
                .ok_or_else(|| format!("unknown derivative scheme `{other}`")),
        }
    }
}

/// Weights `a_j`, `j = 1..=m`, of the order-`2m` central first derivative
/// `f'(x) ~ sum_j a_j (f(x + jh) - f(x - jh)) / h`.
pub fn central_weights(order: u8) -> Vec<f64> {
    let m = (order / 2) as i64;
    let fact = |k: i64| (1..=k).map(|v| v as f64).product::<f64>();
    (1..=m)
        .map(|j| {
            let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
            sign * fact(m) * fact(m) / (j as f64 * fact(m - j) * fact(m + j))
        })
        .collect()
}

/// Holomorphic `d/dz^j` or antiholomorphic `d/dzbar^j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Holo,
    Anti,
}

pub struct Differentiator {
    grid: Arc<TorusGrid>,
    scheme: DerivativeScheme,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Row-major `N x N` periodic differentiation matrix (SpectralMatrix only).
    matrix: Vec<f64>,
    /// Fourier symbols of `d/dz^j` and `d/dzbar^j`, indexed `[j][spectral index]`.
    holo_symbols: Vec<Vec<C64>>,
    anti_symbols: Vec<Vec<C64>>,
    /// Fourier symbols `i 2 pi k` of the real partials, per active axis.
    partial_symbols: Vec<Vec<C64>>,
    /// Spectral indices in the outer band used by the aliasing indicator.
    high_band: Vec<bool>,
}

impl std::fmt::Debug for Differentiator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Differentiator")
            .field("grid", &self.grid)
            .field("scheme", &self.scheme)
            .finish()
    }
}

fn wavenumber(i: usize, n: usize) -> f64 {
    if 2 * i < n {
        i as f64
    } else if 2 * i == n {
        0.0
    } else {
        i as f64 - n as f64
    }
}

/// Fourier symbol of `d/dz^j` (Holo) or `d/dzbar^j` (Anti) at angular
/// wavenumbers `wav` (one per active axis).
fn complex_symbol(grid: &TorusGrid, wav: &[f64], j: usize, dir: Direction) -> C64 {
    let kx = grid.active_position(Axis::x(j)).map_or(0.0, |p| wav[p]);
    let ky = grid.active_position(Axis::y(j)).map_or(0.0, |p| wav[p]);
    // d/dz = (d/dx - i d/dy)/2, d/dzbar = (d/dx + i d/dy)/2
    match dir {
        Direction::Holo => C64::new(0.5 * ky, 0.5 * kx),
        Direction::Anti => C64::new(-0.5 * ky, 0.5 * kx),
    }
}

fn is_constant(f: &[C64]) -> bool {
    match f.first() {
        Some(&first) => f.iter().all(|&v| v == first),
        None => true,
    }
}

impl Differentiator {
    pub fn new(grid: Arc<TorusGrid>, scheme: DerivativeScheme) -> Self {
        let res = grid.resolution();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(res);
        let inverse = planner.plan_fft_inverse(res);
        let matrix = if scheme == DerivativeScheme::SpectralMatrix {
            let mut m = vec![0.0; res * res];
            for i in 0..res {
                for j in 0..res {
                    if i != j {
                        let d = i as f64 - j as f64;
                        let sign = if (i + res - j) % 2 == 0 { 1.0 } else { -1.0 };
                        m[i * res + j] = PI * sign / (PI * d / res as f64).tan();
                    }
                }
            }
            m
        } else {
            Vec::new()
        };
        let count = grid.node_count();
        let wav: Vec<Vec<f64>> = (0..count)
            .map(|idx| {
                grid.multi_index(idx)
                    .into_iter()
                    .map(|i| 2.0 * PI * wavenumber(i, res))
                    .collect()
            })
            .collect();
        let symbols = |dir: Direction| -> Vec<Vec<C64>> {
            (0..grid.n())
                .map(|j| wav.iter().map(|w| complex_symbol(&grid, w, j, dir)).collect())
                .collect()
        };
        let holo_symbols = symbols(Direction::Holo);
        let anti_symbols = symbols(Direction::Anti);
        let partial_symbols = (0..grid.active_axes().len())
            .map(|pos| wav.iter().map(|w| C64::new(0.0, w[pos])).collect())
            .collect();
        let high_band = (0..count)
            .map(|idx| {
                grid.multi_index(idx)
                    .into_iter()
                    .any(|i| 2 * i == res || wavenumber(i, res).abs() >= 0.375 * res as f64)
            })
            .collect();
        Self {
            grid,
            scheme,
            forward,
            inverse,
            matrix,
            high_band,
            holo_symbols,
            anti_symbols,
            partial_symbols,
        }
    }

    pub fn grid(&self) -> &Arc<TorusGrid> {
        &self.grid
    }

    pub fn scheme(&self) -> DerivativeScheme {
        self.scheme
    }

    /// Applies `op` to every line of `data` along the `pos`-th active axis.
    fn for_each_line<F>(&self, data: &mut [C64], pos: usize, mut op: F)
    where
        F: FnMut(&mut [C64]),
    {
        let res = self.grid.resolution();
        let stride = self.grid.stride(pos);
        let count = data.len();
        let mut line = vec![C64::new(0.0, 0.0); res];
        for base in 0..count {
            if (base / stride) % res != 0 {
                continue;
            }
            for (k, slot) in line.iter_mut().enumerate() {
                *slot = data[base + k * stride];
            }
            op(&mut line);
            for (k, slot) in line.iter().enumerate() {
                data[base + k * stride] = *slot;
            }
        }
    }

    /// Multi-dimensional DFT over the active axes (unnormalized).
    pub fn spectrum(&self, f: &[C64]) -> Vec<C64> {
        let mut data = f.to_vec();
        let mut scratch = vec![C64::new(0.0, 0.0); self.forward.get_inplace_scratch_len()];
        for pos in 0..self.grid.active_axes().len() {
            self.for_each_line(&mut data, pos, |line| {
                self.forward.process_with_scratch(line, &mut scratch)
            });
        }
        data
    }

    fn inverse_spectrum(&self, mut data: Vec<C64>) -> Vec<C64> {
        let mut scratch = vec![C64::new(0.0, 0.0); self.inverse.get_inplace_scratch_len()];
        for pos in 0..self.grid.active_axes().len() {
            self.for_each_line(&mut data, pos, |line| {
                self.inverse.process_with_scratch(line, &mut scratch)
            });
        }
        let scale = 1.0 / data.len() as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
        data
    }

    fn zeros(&self) -> Vec<C64> {
        vec![C64::new(0.0, 0.0); self.grid.node_count()]
    }

    /// Partial derivative along a real axis.
    pub fn partial(&self, f: &[C64], axis: Axis) -> Vec<C64> {
        let Some(pos) = self.grid.active_position(axis) else {
            return self.zeros();
        };
        if is_constant(f) {
            return self.zeros();
        }
        match self.scheme {
            DerivativeScheme::Spectral => {
                let mut spec = self.spectrum(f);
                for (v, s) in spec.iter_mut().zip(self.partial_symbols[pos].iter()) {
                    *v *= s;
                }
                self.inverse_spectrum(spec)
            }
            DerivativeScheme::SpectralMatrix => {
                let res = self.grid.resolution();
                let mut out = f.to_vec();
                let mut tmp = vec![C64::new(0.0, 0.0); res];
                self.for_each_line(&mut out, pos, |line| {
                    for (i, t) in tmp.iter_mut().enumerate() {
                        let row = &self.matrix[i * res..(i + 1) * res];
                        *t = row
                            .iter()
                            .zip(line.iter())
                            .fold(C64::new(0.0, 0.0), |acc, (&d, &v)| acc + v * d);
                    }
                    line.copy_from_slice(&tmp);
                });
                out
            }
            DerivativeScheme::CentralFd(order) => {
                let res = self.grid.resolution();
                let weights: Vec<f64> = central_weights(order).iter().map(|a| a * res as f64).collect();
                let mut out = f.to_vec();
                let mut tmp = vec![C64::new(0.0, 0.0); res];
                self.for_each_line(&mut out, pos, |line| {
                    for (i, t) in tmp.iter_mut().enumerate() {
                        let at = |o: isize| line[((i as isize + o).rem_euclid(res as isize)) as usize];
                        *t = weights
                            .iter()
                            .enumerate()
                            .fold(C64::new(0.0, 0.0), |acc, (j, a)| {
                                let j = j as isize + 1;
                                acc + (at(j) - at(-j)) * *a
                            });
                    }
                    line.copy_from_slice(&tmp);
                });
                out
            }
        }
    }

    /// `d/dz^j` (Holo) or `d/dzbar^j` (Anti) of a scalar field.
    pub fn complex(&self, f: &[C64], j: usize, dir: Direction) -> Vec<C64> {
        if !self.grid.direction_active(j) || is_constant(f) {
            return self.zeros();
        }
        match self.scheme {
            DerivativeScheme::Spectral => {
                let spec = self.spectrum(f);
                self.apply_symbol(&spec, j, dir)
            }
            _ => {
                let dx = self.partial(f, Axis::x(j));
                let dy = self.partial(f, Axis::y(j));
                let s = match dir {
                    Direction::Holo => -1.0,
                    Direction::Anti => 1.0,
                };
                dx.iter()
                    .zip(dy.iter())
                    .map(|(&a, &b)| (a + C64::new(0.0, s) * b) * 0.5)
                    .collect()
            }
        }
    }

    fn apply_symbol(&self, spec: &[C64], j: usize, dir: Direction) -> Vec<C64> {
        let symbols = match dir {
            Direction::Holo => &self.holo_symbols[j],
            Direction::Anti => &self.anti_symbols[j],
        };
        let out: Vec<C64> = spec.iter().zip(symbols.iter()).map(|(v, s)| v * s).collect();
        self.inverse_spectrum(out)
    }

    /// All first complex derivatives `(d_j f, d_jbar f)` for `j = 0..n`,
    /// sharing one forward transform in the spectral scheme.
    pub fn gradient(&self, f: &[C64]) -> (Vec<Vec<C64>>, Vec<Vec<C64>>) {
        let (holo, anti, _) = self.gradient_flagged(f);
        (holo, anti)
    }

    /// [`Self::gradient`] plus the top-band ratio of `f` (see
    /// [`Self::top_band_ratio`]), reusing the transform when possible.
    pub fn gradient_flagged(&self, f: &[C64]) -> (Vec<Vec<C64>>, Vec<Vec<C64>>, f64) {
        let n = self.grid.n();
        if is_constant(f) {
            return (vec![self.zeros(); n], vec![self.zeros(); n], 0.0);
        }
        if self.scheme == DerivativeScheme::Spectral {
            let spec = self.spectrum(f);
            let ratio = self.band_ratio_of_spectrum(&spec);
            let mut holo = Vec::with_capacity(n);
            let mut anti = Vec::with_capacity(n);
            for j in 0..n {
                if self.grid.direction_active(j) {
                    holo.push(self.apply_symbol(&spec, j, Direction::Holo));
                    anti.push(self.apply_symbol(&spec, j, Direction::Anti));
                } else {
                    holo.push(self.zeros());
                    anti.push(self.zeros());
                }
            }
            (holo, anti, ratio)
        } else {
            let holo = (0..n).map(|j| self.complex(f, j, Direction::Holo)).collect();
            let anti = (0..n).map(|j| self.complex(f, j, Direction::Anti)).collect();
            (holo, anti, self.top_band_ratio(f))
        }
    }

    /// Ratio of the largest Fourier coefficient in the outer band
    /// (`|k| >= 3N/8` along some active axis) to the largest coefficient.
    /// Values far above round-off mean the grid under-resolves the field.
    pub fn top_band_ratio(&self, f: &[C64]) -> f64 {
        if is_constant(f) {
            return 0.0;
        }
        self.band_ratio_of_spectrum(&self.spectrum(f))
    }

    fn band_ratio_of_spectrum(&self, spec: &[C64]) -> f64 {
        let mut top: f64 = 0.0;
        let mut all: f64 = 0.0;
        for (v, &high) in spec.iter().zip(self.high_band.iter()) {
            let m = v.norm();
            all = all.max(m);
            if high {
                top = top.max(m);
            }
        }
        if all == 0.0 {
            0.0
        } else {
            top / all
        }
    }
}

impl Differentiator {
    /// Trigonometric interpolation of `f` onto the (finer) grid of `fine`.
    /// The Nyquist coefficient is split evenly between `+N/2` and `-N/2` so
    /// the interpolant reproduces `f` at the coarse nodes.
    pub fn refine(&self, f: &[C64], fine: &Differentiator) -> Vec<C64> {
        let coarse_grid = &self.grid;
        let fine_grid = &fine.grid;
        assert_eq!(coarse_grid.active_axes(), fine_grid.active_axes());
        assert!(fine_grid.resolution() >= coarse_grid.resolution());
        if is_constant(f) {
            return vec![f.first().copied().unwrap_or_default(); fine_grid.node_count()];
        }
        let rc = coarse_grid.resolution();
        let rf = fine_grid.resolution();
        let dims = coarse_grid.active_axes().len();
        let spec = self.spectrum(f);
        let mut out = vec![C64::new(0.0, 0.0); fine_grid.node_count()];
        let scale = fine_grid.node_count() as f64 / coarse_grid.node_count() as f64;
        for (idx, v) in spec.iter().enumerate() {
            let mi = coarse_grid.multi_index(idx);
            let mut targets: Vec<(usize, f64)> = vec![(0, scale)];
            for (pos, &i) in mi.iter().enumerate() {
                let stride = fine_grid.stride(pos);
                let choices: Vec<(usize, f64)> = if 2 * i == rc {
                    vec![(rc / 2, 0.5), (rf - rc / 2, 0.5)]
                } else if 2 * i < rc {
                    vec![(i, 1.0)]
                } else {
                    vec![(rf - (rc - i), 1.0)]
                };
                targets = targets
                    .iter()
                    .flat_map(|&(t, w)| choices.iter().map(move |&(c, cw)| (t + c * stride, w * cw)))
                    .collect();
            }
            debug_assert!(targets.len() <= 1 << dims);
            for (t, w) in targets {
                out[t] += v * w;
            }
        }
        fine.inverse_spectrum(out)
    }
}

/// Values of a field on `fine` at the nodes of the coarser grid `coarse`.
pub fn restrict(f: &[C64], fine: &TorusGrid, coarse: &TorusGrid) -> Vec<C64> {
    let ratio = fine.resolution() / coarse.resolution();
    (0..coarse.node_count())
        .map(|node| {
            let fine_node: usize = coarse
                .multi_index(node)
                .iter()
                .enumerate()
                .map(|(pos, &i)| i * ratio * fine.stride(pos))
                .sum();
            f[fine_node]
        })
        .collect()
}

/// Threshold on [`Differentiator::top_band_ratio`] above which results are
/// flagged as possibly aliased.
pub const ALIASING_THRESHOLD: f64 = 1e-8;
