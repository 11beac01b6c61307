//! Indexed complex tensor fields on a torus grid.
//!
//! Every index runs over `0..n`. Storage is component-major: one contiguous
//! vector of node values per component, with the component number given by
//! reading the index tuple as base-`n` digits (first index most significant).
//! The meaning of each slot (upper/lower, barred/unbarred) is fixed by the
//! producer and documented where the tensor is built.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::deriv::{Differentiator, Direction};
use crate::error::{LabError, Result};
use crate::grid::{max_abs, mean_abs, ScalarField, TorusGrid, C64};

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    grid: Arc<TorusGrid>,
    rank: usize,
    comps: Vec<Vec<C64>>,
}

/// Rank-2 tensor field read as an `n x n` matrix at every node.
pub type MatrixField = TensorField;

impl TensorField {
    pub fn zeros(grid: Arc<TorusGrid>, rank: usize) -> Self {
        let count = grid.n().pow(rank as u32);
        let comps = vec![vec![ZERO; grid.node_count()]; count];
        Self { grid, rank, comps }
    }

    pub fn from_components(grid: Arc<TorusGrid>, rank: usize, comps: Vec<Vec<C64>>) -> Result<Self> {
        if comps.len() != grid.n().pow(rank as u32)
            || comps.iter().any(|c| c.len() != grid.node_count())
        {
            return Err(LabError::Grid("component layout does not match grid".into()));
        }
        Ok(Self { grid, rank, comps })
    }

    /// Builds a rank-2 field from one matrix per node.
    pub fn from_node_matrices(grid: Arc<TorusGrid>, mats: &[DMatrix<C64>]) -> Self {
        let n = grid.n();
        let mut out = Self::zeros(grid, 2);
        for (node, m) in mats.iter().enumerate() {
            for a in 0..n {
                for b in 0..n {
                    out.comps[a * n + b][node] = m[(a, b)];
                }
            }
        }
        out
    }

    /// A rank-2 field equal to the same matrix at every node.
    pub fn constant_matrix(grid: Arc<TorusGrid>, m: &DMatrix<C64>) -> Self {
        let n = grid.n();
        let mut out = Self::zeros(grid, 2);
        for a in 0..n {
            for b in 0..n {
                out.comps[a * n + b].fill(m[(a, b)]);
            }
        }
        out
    }

    pub fn grid(&self) -> &Arc<TorusGrid> {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn node_count(&self) -> usize {
        self.grid.node_count()
    }

    pub fn component_count(&self) -> usize {
        self.comps.len()
    }

    pub fn index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.rank);
        let n = self.n();
        idx.iter().fold(0, |acc, &i| acc * n + i)
    }

    /// Inverse of [`Self::index`].
    pub fn multi_index(&self, mut comp: usize) -> Vec<usize> {
        let n = self.n();
        let mut idx = vec![0; self.rank];
        for slot in idx.iter_mut().rev() {
            *slot = comp % n;
            comp /= n;
        }
        idx
    }

    pub fn at(&self, idx: &[usize]) -> &[C64] {
        &self.comps[self.index(idx)]
    }

    pub fn at_mut(&mut self, idx: &[usize]) -> &mut [C64] {
        let c = self.index(idx);
        &mut self.comps[c]
    }

    pub fn set(&mut self, idx: &[usize], values: Vec<C64>) {
        debug_assert_eq!(values.len(), self.node_count());
        let c = self.index(idx);
        self.comps[c] = values;
    }

    pub fn comp(&self, c: usize) -> &[C64] {
        &self.comps[c]
    }

    pub fn comp_mut(&mut self, c: usize) -> &mut Vec<C64> {
        &mut self.comps[c]
    }

    pub fn components(&self) -> &[Vec<C64>] {
        &self.comps
    }

    pub fn get(&self, idx: &[usize], node: usize) -> C64 {
        self.comps[self.index(idx)][node]
    }

    /// The `n x n` matrix `[a][b] = T[a, b]` at a node (rank 2 only).
    pub fn node_matrix(&self, node: usize) -> DMatrix<C64> {
        assert_eq!(self.rank, 2, "node_matrix on rank-{} tensor", self.rank);
        let n = self.n();
        DMatrix::from_fn(n, n, |a, b| self.comps[a * n + b][node])
    }

    pub fn set_node_matrix(&mut self, node: usize, m: &DMatrix<C64>) {
        let n = self.n();
        for a in 0..n {
            for b in 0..n {
                self.comps[a * n + b][node] = m[(a, b)];
            }
        }
    }

    pub fn node_matrices(&self) -> Vec<DMatrix<C64>> {
        (0..self.node_count()).map(|i| self.node_matrix(i)).collect()
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid || self.rank != other.rank {
            return Err(LabError::GridMismatch);
        }
        Ok(())
    }

    pub fn zip_with<F>(&self, other: &Self, f: F) -> Result<Self>
    where
        F: Fn(C64, C64) -> C64,
    {
        self.check_same(other)?;
        let comps = self
            .comps
            .iter()
            .zip(other.comps.iter())
            .map(|(a, b)| a.iter().zip(b.iter()).map(|(&x, &y)| f(x, y)).collect())
            .collect();
        Ok(Self {
            grid: self.grid.clone(),
            rank: self.rank,
            comps,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn map<F: Fn(C64) -> C64>(&self, f: F) -> Self {
        Self {
            grid: self.grid.clone(),
            rank: self.rank,
            comps: self
                .comps
                .iter()
                .map(|c| c.iter().map(|&v| f(v)).collect())
                .collect(),
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        self.map(|v| v * s)
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b * s)
    }

    /// Multiplies every component pointwise by a scalar field.
    pub fn mul_scalar_field(&self, f: &[C64]) -> Self {
        Self {
            grid: self.grid.clone(),
            rank: self.rank,
            comps: self
                .comps
                .iter()
                .map(|c| c.iter().zip(f.iter()).map(|(&a, &b)| a * b).collect())
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().map(|c| max_abs(c)).fold(0.0, f64::max)
    }

    pub fn mean_abs(&self) -> f64 {
        if self.comps.is_empty() {
            return 0.0;
        }
        self.comps.iter().map(|c| mean_abs(c)).sum::<f64>() / self.comps.len() as f64
    }

    /// Pointwise maximum over components of `|T|`, one value per node.
    pub fn pointwise_max_abs(&self) -> Vec<f64> {
        let mut out = vec![0.0f64; self.node_count()];
        for c in &self.comps {
            for (o, v) in out.iter_mut().zip(c.iter()) {
                *o = o.max(v.norm());
            }
        }
        out
    }

    /// Largest entry of `(A - A^*) / 2` (rank 2).
    pub fn skew_max(&self) -> f64 {
        let n = self.n();
        let mut worst: f64 = 0.0;
        for a in 0..n {
            for b in 0..n {
                let x = &self.comps[a * n + b];
                let y = &self.comps[b * n + a];
                for (u, v) in x.iter().zip(y.iter()) {
                    worst = worst.max(((u - v.conj()) * 0.5).norm());
                }
            }
        }
        worst
    }

    /// `(A + A^*) / 2` at every node (rank 2).
    pub fn hermitian_part(&self) -> Self {
        let n = self.n();
        let mut out = self.clone();
        for a in 0..n {
            for b in 0..n {
                let x = &self.comps[a * n + b];
                let y = &self.comps[b * n + a];
                out.comps[a * n + b] = x
                    .iter()
                    .zip(y.iter())
                    .map(|(u, v)| (u + v.conj()) * 0.5)
                    .collect();
            }
        }
        out
    }

    /// Derivative of every component; the new direction index is prepended.
    pub fn derivative(&self, d: &Differentiator, dir: Direction) -> Self {
        let n = self.n();
        let mut comps = Vec::with_capacity(n * self.comps.len());
        for j in 0..n {
            for c in &self.comps {
                comps.push(d.complex(c, j, dir));
            }
        }
        Self {
            grid: self.grid.clone(),
            rank: self.rank + 1,
            comps,
        }
    }

    /// Both `d_j T` and `d_jbar T`, sharing transforms.
    pub fn gradient(&self, d: &Differentiator) -> (Self, Self) {
        let n = self.n();
        let count = self.comps.len();
        let mut holo = vec![Vec::new(); n * count];
        let mut anti = vec![Vec::new(); n * count];
        for (c, field) in self.comps.iter().enumerate() {
            let (h, a) = d.gradient(field);
            for (j, (hj, aj)) in h.into_iter().zip(a).enumerate() {
                holo[j * count + c] = hj;
                anti[j * count + c] = aj;
            }
        }
        let wrap = |comps| Self {
            grid: self.grid.clone(),
            rank: self.rank + 1,
            comps,
        };
        (wrap(holo), wrap(anti))
    }

    pub fn trace(&self) -> ScalarField {
        let n = self.n();
        let mut out = vec![ZERO; self.node_count()];
        for a in 0..n {
            for (o, v) in out.iter_mut().zip(self.comps[a * n + a].iter()) {
                *o += v;
            }
        }
        ScalarField::new(self.grid.clone(), out).expect("trace matches grid")
    }
}

/// Pointwise `sum_b A[a][b] B[b][c]` for rank-2 fields.
pub fn matmul(a: &MatrixField, b: &MatrixField) -> MatrixField {
    let n = a.n();
    let nodes = a.node_count();
    let mut out = TensorField::zeros(a.grid().clone(), 2);
    for i in 0..n {
        for k in 0..n {
            let dst = &mut out.comps[i * n + k];
            for j in 0..n {
                let x = &a.comps[i * n + j];
                let y = &b.comps[j * n + k];
                for node in 0..nodes {
                    dst[node] += x[node] * y[node];
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip() {
        let grid = Arc::new(TorusGrid::planar(3, 4).unwrap());
        let t = TensorField::zeros(grid, 4);
        for c in 0..t.component_count() {
            assert_eq!(t.index(&t.multi_index(c)), c);
        }
        assert_eq!(t.index(&[1, 2, 0, 1]), 27 + 18 + 1);
    }

    #[test]
    fn hermitian_projection_removes_skew_part() {
        let grid = Arc::new(TorusGrid::planar(3, 4).unwrap());
        let m = DMatrix::from_fn(3, 3, |a, b| C64::new(a as f64 + 1.0, b as f64 - 0.5));
        let t = TensorField::constant_matrix(grid, &m);
        assert!(t.skew_max() > 0.1);
        let h = t.hermitian_part();
        assert_eq!(h.skew_max(), 0.0);
    }
}
