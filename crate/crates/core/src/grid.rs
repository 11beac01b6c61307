//! Uniform periodic grids on the flat torus `C^n / (Z^n + i Z^n)`.
//!
//! The `2n` real coordinates are numbered `x1 = 0, y1 = 1, x2 = 2, y2 = 3, ...`.
//! Fields vary only along the *active* axes; along every other axis they are
//! constant by construction, which is what keeps `n = 3` runs cheap.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

pub type C64 = Complex64;

pub const MAX_DIMENSION: usize = 4;

/// Real coordinate axis of the torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Axis(pub usize);

impl Axis {
    pub fn x(j: usize) -> Self {
        Axis(2 * j)
    }

    pub fn y(j: usize) -> Self {
        Axis(2 * j + 1)
    }

    /// Index of the complex coordinate this axis belongs to (0-based).
    pub fn complex_index(self) -> usize {
        self.0 / 2
    }

    pub fn is_imaginary(self) -> bool {
        self.0 % 2 == 1
    }

    pub fn parse(name: &str) -> Option<Self> {
        let (kind, rest) = name.split_at(1.min(name.len()));
        let j: usize = rest.parse().ok()?;
        if j == 0 {
            return None;
        }
        match kind {
            "x" => Some(Axis::x(j - 1)),
            "y" => Some(Axis::y(j - 1)),
            _ => None,
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = if self.is_imaginary() { 'y' } else { 'x' };
        write!(f, "{}{}", kind, self.complex_index() + 1)
    }
}

/// Serializable description of a grid, used in reports and snapshot headers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "camelCase")]
pub struct GridSpec {
    pub n: usize,
    pub active_axes: Vec<String>,
    pub resolution: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TorusGrid {
    n: usize,
    active: Vec<Axis>,
    resolution: usize,
}

impl TorusGrid {
    pub fn new(n: usize, mut active: Vec<Axis>, resolution: usize) -> Result<Self> {
        if n < 3 {
            return Err(LabError::Degenerate {
                n,
                reason: "the omega-formulation needs n >= 3 (exponent 2/(n-2))".into(),
            });
        }
        if n > MAX_DIMENSION {
            return Err(LabError::Grid(format!(
                "complex dimension {n} exceeds the supported maximum {MAX_DIMENSION}"
            )));
        }
        if resolution < 4 || !resolution.is_power_of_two() {
            return Err(LabError::Grid(format!(
                "resolution {resolution} must be a power of two >= 4"
            )));
        }
        active.sort();
        active.dedup();
        if let Some(bad) = active.iter().find(|a| a.0 >= 2 * n) {
            return Err(LabError::Grid(format!("axis {bad} does not exist for n = {n}")));
        }
        if active.is_empty() {
            return Err(LabError::Grid("at least one active axis is required".into()));
        }
        Ok(Self {
            n,
            active,
            resolution,
        })
    }

    /// The default desk-scale configuration: fields depend on `(x1, y1)` only.
    pub fn planar(n: usize, resolution: usize) -> Result<Self> {
        Self::new(n, vec![Axis::x(0), Axis::y(0)], resolution)
    }

    pub fn from_spec(spec: &GridSpec) -> Result<Self> {
        let axes = spec
            .active_axes
            .iter()
            .map(|s| Axis::parse(s).ok_or_else(|| LabError::Grid(format!("unknown axis '{s}'"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(spec.n, axes, spec.resolution)
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec {
            n: self.n,
            active_axes: self.active.iter().map(|a| a.to_string()).collect(),
            resolution: self.resolution,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn active_axes(&self) -> &[Axis] {
        &self.active
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.resolution as f64
    }

    pub fn node_count(&self) -> usize {
        self.resolution.pow(self.active.len() as u32)
    }

    /// Position of `axis` among the active axes, if it is active.
    pub fn active_position(&self, axis: Axis) -> Option<usize> {
        self.active.iter().position(|&a| a == axis)
    }

    pub fn is_active(&self, axis: Axis) -> bool {
        self.active_position(axis).is_some()
    }

    /// True if the complex coordinate `j` has at least one active real axis.
    pub fn direction_active(&self, j: usize) -> bool {
        self.is_active(Axis::x(j)) || self.is_active(Axis::y(j))
    }

    /// Row-major stride of the `pos`-th active axis.
    pub fn stride(&self, pos: usize) -> usize {
        self.resolution.pow((self.active.len() - 1 - pos) as u32)
    }

    /// Integer index along each active axis.
    pub fn multi_index(&self, node: usize) -> Vec<usize> {
        (0..self.active.len())
            .map(|pos| (node / self.stride(pos)) % self.resolution)
            .collect()
    }

    /// Coordinates of a node along all `2n` real axes (inactive axes read 0).
    pub fn coordinates(&self, node: usize) -> Vec<f64> {
        let mut coords = vec![0.0; 2 * self.n];
        for (pos, idx) in self.multi_index(node).into_iter().enumerate() {
            coords[self.active[pos].0] = idx as f64 / self.resolution as f64;
        }
        coords
    }

    /// Evaluates `f` at every node, passing the `2n` real coordinates.
    pub fn sample<F>(&self, mut f: F) -> Vec<C64>
    where
        F: FnMut(&[f64]) -> C64,
    {
        (0..self.node_count()).map(|i| f(&self.coordinates(i))).collect()
    }
}

/// A complex scalar function sampled on a torus grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Arc<TorusGrid>,
    values: Vec<C64>,
}

impl ScalarField {
    pub fn new(grid: Arc<TorusGrid>, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(LabError::Grid(format!(
                "{} values supplied for {} nodes",
                values.len(),
                grid.node_count()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Arc<TorusGrid>, value: C64) -> Self {
        let values = vec![value; grid.node_count()];
        Self { grid, values }
    }

    pub fn from_fn<F>(grid: Arc<TorusGrid>, f: F) -> Self
    where
        F: FnMut(&[f64]) -> C64,
    {
        let values = grid.sample(f);
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<TorusGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.values)
    }

    pub fn max_re(&self) -> f64 {
        self.values.iter().map(|v| v.re).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_re(&self) -> f64 {
        self.values.iter().map(|v| v.re).fold(f64::INFINITY, f64::min)
    }
}

pub fn max_abs(values: &[C64]) -> f64 {
    values.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

pub fn mean_abs(values: &[C64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().map(|v| v.norm()).sum::<f64>() / values.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_dimension_and_bad_resolution() {
        assert!(matches!(
            TorusGrid::planar(2, 32),
            Err(LabError::Degenerate { n: 2, .. })
        ));
        assert!(TorusGrid::planar(3, 24).is_err());
        assert!(TorusGrid::new(3, vec![Axis(6)], 16).is_err());
    }

    #[test]
    fn node_coordinates_are_uniform() {
        let grid = TorusGrid::planar(3, 8).unwrap();
        assert_eq!(grid.node_count(), 64);
        let c = grid.coordinates(8 * 3 + 5);
        assert_eq!(c[0], 3.0 / 8.0);
        assert_eq!(c[1], 5.0 / 8.0);
        assert!(c[2..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn axis_names_round_trip() {
        for a in 0..8 {
            let axis = Axis(a);
            assert_eq!(Axis::parse(&axis.to_string()), Some(axis));
        }
        assert_eq!(Axis::parse("z1"), None);
        assert_eq!(Axis::parse("x0"), None);
    }
}
