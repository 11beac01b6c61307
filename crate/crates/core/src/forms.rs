//! Complex differential forms `sum f_{JK} dz^J ^ dzbar^K` on a torus grid.
//!
//! Multi-indices are stored as strictly increasing lists; the component
//! vector is laid out as `comps[rank(J) * count(q) + rank(K)]` where `rank`
//! is the lexicographic position among all subsets of that size.
//!
//! Sign conventions:
//!
//! * reordering `dz^J ^ dzbar^K ^ dz^J' ^ dzbar^K'` into canonical order
//!   costs `(-1)^(|K| |J'|)` times the parities of the two merges;
//! * `d/dz^j` lands in front of `dz^J`, so inserting `j` into `J` costs
//!   `(-1)^#{i in J : i < j}`;
//! * `d/dzbar^k` crosses all of `dz^J` and then part of `dzbar^K`, costing
//!   `(-1)^(|J| + #{i in K : i < k})`.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::deriv::{Differentiator, Direction, ALIASING_THRESHOLD};
use crate::error::{LabError, Result};
use crate::grid::{max_abs, ScalarField, TorusGrid, C64};
use crate::tensor::TensorField;

const ZERO: C64 = C64::new(0.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// All strictly increasing `k`-subsets of `0..n`, in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k <= n {
        rec(0, n, k, &mut Vec::with_capacity(k), &mut out);
    }
    out
}

fn mask(idx: &[usize]) -> usize {
    idx.iter().fold(0, |m, &i| m | (1 << i))
}

/// Sign of the permutation sorting the concatenation `a ++ b` (both
/// increasing), or `None` if they share an index.
pub fn merge_sign(a: &[usize], b: &[usize]) -> Option<f64> {
    if mask(a) & mask(b) != 0 {
        return None;
    }
    let inversions: usize = a.iter().map(|&x| b.iter().filter(|&&y| y < x).count()).sum();
    Some(if inversions % 2 == 0 { 1.0 } else { -1.0 })
}

fn merged(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut v: Vec<usize> = a.iter().chain(b.iter()).copied().collect();
    v.sort_unstable();
    v
}

/// Monomial bookkeeping for one bidegree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormBasis {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub holo: Vec<Vec<usize>>,
    pub anti: Vec<Vec<usize>>,
    holo_rank: Vec<usize>,
    anti_rank: Vec<usize>,
}

impl FormBasis {
    pub fn new(n: usize, p: usize, q: usize) -> Result<Self> {
        if p > n || q > n {
            return Err(LabError::Degree(format!(
                "bidegree ({p},{q}) exceeds complex dimension {n}"
            )));
        }
        let holo = combinations(n, p);
        let anti = combinations(n, q);
        let mut holo_rank = vec![usize::MAX; 1 << n];
        let mut anti_rank = vec![usize::MAX; 1 << n];
        for (r, j) in holo.iter().enumerate() {
            holo_rank[mask(j)] = r;
        }
        for (r, k) in anti.iter().enumerate() {
            anti_rank[mask(k)] = r;
        }
        Ok(Self {
            n,
            p,
            q,
            holo,
            anti,
            holo_rank,
            anti_rank,
        })
    }

    pub fn len(&self) -> usize {
        self.holo.len() * self.anti.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Component slot of the monomial `dz^J ^ dzbar^K` (increasing indices).
    pub fn slot(&self, j: &[usize], k: &[usize]) -> usize {
        self.holo_rank[mask(j)] * self.anti.len() + self.anti_rank[mask(k)]
    }

    pub fn indices(&self, slot: usize) -> (&[usize], &[usize]) {
        let a = self.anti.len();
        (&self.holo[slot / a], &self.anti[slot % a])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DifferentialForm {
    grid: Arc<TorusGrid>,
    basis: Arc<FormBasis>,
    comps: Vec<Vec<C64>>,
    aliasing: bool,
}

impl DifferentialForm {
    pub fn zero(grid: Arc<TorusGrid>, p: usize, q: usize) -> Result<Self> {
        let basis = Arc::new(FormBasis::new(grid.n(), p, q)?);
        let comps = vec![vec![ZERO; grid.node_count()]; basis.len()];
        Ok(Self {
            grid,
            basis,
            comps,
            aliasing: false,
        })
    }

    /// A scalar field viewed as a `(0,0)`-form.
    pub fn from_scalar(f: &ScalarField) -> Self {
        let mut out = Self::zero(f.grid().clone(), 0, 0).expect("(0,0) always valid");
        out.comps[0] = f.values().to_vec();
        out
    }

    /// The constant monomial `c dz^J ^ dzbar^K`; indices need not be sorted.
    pub fn monomial(grid: Arc<TorusGrid>, j: &[usize], k: &[usize], c: C64) -> Result<Self> {
        let mut out = Self::zero(grid, j.len(), k.len())?;
        let n = out.basis.n;
        if j.iter().chain(k.iter()).any(|&i| i >= n) {
            return Err(LabError::Degree(format!("index out of range for n = {n}")));
        }
        let (Some(sj), Some(sk)) = (sort_sign(j), sort_sign(k)) else {
            return Ok(out);
        };
        let (mut js, mut ks) = (j.to_vec(), k.to_vec());
        js.sort_unstable();
        ks.sort_unstable();
        let slot = out.basis.slot(&js, &ks);
        out.comps[slot].fill(c * (sj * sk));
        Ok(out)
    }

    pub fn grid(&self) -> &Arc<TorusGrid> {
        &self.grid
    }

    pub fn basis(&self) -> &FormBasis {
        &self.basis
    }

    pub fn bidegree(&self) -> (usize, usize) {
        (self.basis.p, self.basis.q)
    }

    pub fn degree(&self) -> usize {
        self.basis.p + self.basis.q
    }

    /// True if a derivative that produced this form (or one of its inputs)
    /// saw a field whose spectrum reaches the top of the grid's band.
    pub fn aliasing_warning(&self) -> bool {
        self.aliasing
    }

    pub fn components(&self) -> &[Vec<C64>] {
        &self.comps
    }

    pub fn component(&self, j: &[usize], k: &[usize]) -> &[C64] {
        &self.comps[self.basis.slot(j, k)]
    }

    pub fn component_mut(&mut self, j: &[usize], k: &[usize]) -> &mut Vec<C64> {
        let s = self.basis.slot(j, k);
        &mut self.comps[s]
    }

    pub fn slot_mut(&mut self, slot: usize) -> &mut Vec<C64> {
        &mut self.comps[slot]
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().map(|c| max_abs(c)).fold(0.0, f64::max)
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(LabError::GridMismatch);
        }
        if self.bidegree() != other.bidegree() {
            return Err(LabError::Degree(format!(
                "cannot combine bidegrees {:?} and {:?}",
                self.bidegree(),
                other.bidegree()
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.lin_comb(ONE, other, ONE)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.lin_comb(ONE, other, -ONE)
    }

    /// `a * self + b * other`.
    pub fn lin_comb(&self, a: C64, other: &Self, b: C64) -> Result<Self> {
        self.check_same(other)?;
        let comps = self
            .comps
            .iter()
            .zip(other.comps.iter())
            .map(|(x, y)| x.iter().zip(y.iter()).map(|(&u, &v)| a * u + b * v).collect())
            .collect();
        Ok(Self {
            grid: self.grid.clone(),
            basis: self.basis.clone(),
            comps,
            aliasing: self.aliasing || other.aliasing,
        })
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = self.clone();
        for c in out.comps.iter_mut() {
            for v in c.iter_mut() {
                *v *= s;
            }
        }
        out
    }

    /// Multiplies every coefficient by a scalar function.
    pub fn mul_function(&self, f: &[C64]) -> Self {
        let mut out = self.clone();
        for c in out.comps.iter_mut() {
            for (v, &w) in c.iter_mut().zip(f.iter()) {
                *v *= w;
            }
        }
        out
    }

    pub fn wedge(&self, other: &Self) -> Result<Self> {
        if self.grid != other.grid {
            return Err(LabError::GridMismatch);
        }
        let (pa, qa) = self.bidegree();
        let (pb, qb) = other.bidegree();
        let n = self.basis.n;
        if pa + pb > n || qa + qb > n {
            return Err(LabError::Degree(format!(
                "wedge of ({pa},{qa}) and ({pb},{qb}) overflows n = {n}"
            )));
        }
        let mut out = Self::zero(self.grid.clone(), pa + pb, qa + qb)?;
        out.aliasing = self.aliasing || other.aliasing;
        let cross = if qa * pb % 2 == 0 { 1.0 } else { -1.0 };
        for (sa, a) in self.comps.iter().enumerate() {
            let (ja, ka) = self.basis.indices(sa);
            for (sb, b) in other.comps.iter().enumerate() {
                let (jb, kb) = other.basis.indices(sb);
                let (Some(s1), Some(s2)) = (merge_sign(ja, jb), merge_sign(ka, kb)) else {
                    continue;
                };
                let sign = cross * s1 * s2;
                let slot = out.basis.slot(&merged(ja, jb), &merged(ka, kb));
                let dst = &mut out.comps[slot];
                for ((d, &x), &y) in dst.iter_mut().zip(a.iter()).zip(b.iter()) {
                    *d += x * y * sign;
                }
            }
        }
        Ok(out)
    }

    /// `self ^ self ^ ... ^ self` (`k` factors); `k = 0` gives the constant 1.
    pub fn power(&self, k: usize) -> Result<Self> {
        let mut acc = Self::from_scalar(&ScalarField::constant(self.grid.clone(), ONE));
        for _ in 0..k {
            acc = acc.wedge(self)?;
        }
        Ok(acc)
    }

    fn differentiate(&self, d: &Differentiator, dir: Direction) -> Result<Self> {
        if self.grid != *d.grid() {
            return Err(LabError::GridMismatch);
        }
        let (p, q) = self.bidegree();
        let n = self.basis.n;
        let (np, nq) = match dir {
            Direction::Holo => (p + 1, q),
            Direction::Anti => (p, q + 1),
        };
        if np > n || nq > n {
            return Err(LabError::Degree(format!(
                "derivative of a ({p},{q})-form exceeds n = {n}"
            )));
        }
        let mut out = Self::zero(self.grid.clone(), np, nq)?;
        out.aliasing = self.aliasing;
        for (s, f) in self.comps.iter().enumerate() {
            let (j, k) = self.basis.indices(s);
            let (holo, anti, ratio) = d.gradient_flagged(f);
            if ratio > ALIASING_THRESHOLD {
                out.aliasing = true;
            }
            let derivs = match dir {
                Direction::Holo => holo,
                Direction::Anti => anti,
            };
            for (m, df) in derivs.iter().enumerate() {
                let (nj, nk, sign) = match dir {
                    Direction::Holo => {
                        if j.contains(&m) {
                            continue;
                        }
                        let before = j.iter().filter(|&&i| i < m).count();
                        (merged(j, &[m]), k.to_vec(), parity(before))
                    }
                    Direction::Anti => {
                        if k.contains(&m) {
                            continue;
                        }
                        let before = k.iter().filter(|&&i| i < m).count();
                        (j.to_vec(), merged(k, &[m]), parity(p + before))
                    }
                };
                let slot = out.basis.slot(&nj, &nk);
                for (o, &v) in out.comps[slot].iter_mut().zip(df.iter()) {
                    *o += v * sign;
                }
            }
        }
        Ok(out)
    }

    pub fn del(&self, d: &Differentiator) -> Result<Self> {
        self.differentiate(d, Direction::Holo)
    }

    pub fn delbar(&self, d: &Differentiator) -> Result<Self> {
        self.differentiate(d, Direction::Anti)
    }

    /// `d = del + delbar`, returned as its two pure-type pieces.
    pub fn exterior_d(&self, d: &Differentiator) -> Result<MixedForm> {
        Ok(MixedForm {
            parts: vec![self.del(d)?, self.delbar(d)?],
        })
    }

    /// `i del delbar`.
    pub fn ddbar_i(&self, d: &Differentiator) -> Result<Self> {
        Ok(self.delbar(d)?.del(d)?.scale(I))
    }

    /// Largest violation of the reality condition
    /// `f_{K,J} = (-1)^(pq) conj(f_{J,K})` (only meaningful for `p = q`).
    pub fn reality_defect(&self) -> Result<f64> {
        let (p, q) = self.bidegree();
        if p != q {
            return Err(LabError::Degree(format!(
                "reality is defined for (p,p)-forms, got ({p},{q})"
            )));
        }
        let sign = parity(p * q);
        let mut worst: f64 = 0.0;
        for (s, f) in self.comps.iter().enumerate() {
            let (j, k) = self.basis.indices(s);
            let g = &self.comps[self.basis.slot(k, j)];
            for (a, b) in f.iter().zip(g.iter()) {
                worst = worst.max((b - a.conj() * sign).norm());
            }
        }
        Ok(worst)
    }

    pub fn is_real(&self, tol: f64) -> bool {
        self.reality_defect().map(|d| d <= tol).unwrap_or(false)
    }
}

const ONE: C64 = C64::new(1.0, 0.0);

fn parity(k: usize) -> f64 {
    if k % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Sign of the permutation sorting `idx`, or `None` on a repeated index.
fn sort_sign(idx: &[usize]) -> Option<f64> {
    let mut inversions = 0;
    for a in 0..idx.len() {
        for b in a + 1..idx.len() {
            if idx[a] == idx[b] {
                return None;
            }
            if idx[a] > idx[b] {
                inversions += 1;
            }
        }
    }
    Some(parity(inversions))
}

/// A sum of forms of different bidegrees (the output of `d`).
#[derive(Debug, Clone, PartialEq)]
pub struct MixedForm {
    pub parts: Vec<DifferentialForm>,
}

impl MixedForm {
    pub fn max_abs(&self) -> f64 {
        self.parts.iter().map(|f| f.max_abs()).fold(0.0, f64::max)
    }

    /// Applies `d` again, collecting pieces of equal bidegree.
    pub fn exterior_d(&self, d: &Differentiator) -> Result<MixedForm> {
        let mut parts: Vec<DifferentialForm> = Vec::new();
        for f in &self.parts {
            for g in f.exterior_d(d)?.parts {
                match parts.iter_mut().find(|h| h.bidegree() == g.bidegree()) {
                    Some(h) => *h = h.add(&g)?,
                    None => parts.push(g),
                }
            }
        }
        Ok(MixedForm { parts })
    }

    pub fn aliasing_warning(&self) -> bool {
        self.parts.iter().any(|f| f.aliasing_warning())
    }
}

/// Complement indices `J^c = {0..n} \ {j}`.
fn complement(n: usize, j: usize) -> Vec<usize> {
    (0..n).filter(|&i| i != j).collect()
}

/// Coefficient `c` with `sigma_{jk} = c dz^{j^c} ^ dzbar^{k^c}`, fixed by
/// `sigma_{jk} ^ (i dz^j ^ dzbar^k) = prod_m (i dz^m ^ dzbar^m)`.
pub fn complement_coefficient(n: usize, j: usize, k: usize) -> C64 {
    // prod_m (i dz^m ^ dzbar^m) = i^n (-1)^(n(n-1)/2) dz^{0..n} ^ dzbar^{0..n}
    let top = I.powu(n as u32) * parity(n * (n - 1) / 2);
    let jc = complement(n, j);
    let kc = complement(n, k);
    // dz^{jc} ^ dzbar^{kc} ^ dz^j ^ dzbar^k
    let cross = parity(n - 1);
    let s = cross * merge_sign(&jc, &[j]).unwrap() * merge_sign(&kc, &[k]).unwrap();
    top / (I * s)
}

/// The basis form `sigma_{jk}` as a constant `(n-1,n-1)`-form.
pub fn sigma(grid: Arc<TorusGrid>, j: usize, k: usize) -> Result<DifferentialForm> {
    let n = grid.n();
    if j >= n || k >= n {
        return Err(LabError::Degree(format!("sigma index out of range for n = {n}")));
    }
    let c = complement_coefficient(n, j, k);
    DifferentialForm::monomial(grid, &complement(n, j), &complement(n, k), c)
}

/// Matrix field `M[j][k]` with `theta = sum M[j][k] sigma_{jk}`.
pub fn n1n1_to_matrix(theta: &DifferentialForm) -> Result<TensorField> {
    let n = theta.basis.n;
    if theta.bidegree() != (n - 1, n - 1) {
        return Err(LabError::Degree(format!(
            "expected an ({0},{0})-form, got {1:?}",
            n - 1,
            theta.bidegree()
        )));
    }
    let mut out = TensorField::zeros(theta.grid.clone(), 2);
    for j in 0..n {
        for k in 0..n {
            let c = complement_coefficient(n, j, k);
            let src = theta.component(&complement(n, j), &complement(n, k));
            *out.comp_mut(j * n + k) = src.iter().map(|v| v / c).collect();
        }
    }
    Ok(out)
}

pub fn matrix_to_n1n1(m: &TensorField) -> Result<DifferentialForm> {
    let n = m.n();
    if m.rank() != 2 {
        return Err(LabError::Degree(format!("expected a matrix field, got rank {}", m.rank())));
    }
    let mut out = DifferentialForm::zero(m.grid().clone(), n - 1, n - 1)?;
    for j in 0..n {
        for k in 0..n {
            let c = complement_coefficient(n, j, k);
            *out.component_mut(&complement(n, j), &complement(n, k)) =
                m.comp(j * n + k).iter().map(|v| v * c).collect();
        }
    }
    Ok(out)
}

/// Pointwise version of [`n1n1_to_matrix`] for a single node's wedge
/// algebra: the `n x n` matrix of `beta ^ omega^(n-2) / (n-2)!` where
/// `omega = i G[k][j] dz^j ^ dzbar^k` and `beta = i B[k][j] dz^j ^ dzbar^k`.
///
/// Evaluates the full monomial expansion; used to build and check the
/// pointwise linear systems of the flow.
pub fn pointwise_wedge_matrix(g: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    let n = g.nrows();
    let grid = Arc::new(TorusGrid::new(n, vec![crate::grid::Axis(0)], 4).expect("valid"));
    let one_node = |m: &DMatrix<C64>| {
        let mut f = DifferentialForm::zero(grid.clone(), 1, 1).expect("valid");
        for j in 0..n {
            for k in 0..n {
                f.component_mut(&[j], &[k]).fill(I * m[(k, j)]);
            }
        }
        f
    };
    let omega = one_node(g);
    let beta = one_node(b);
    let mut prod = beta.wedge(&omega.power(n - 2).expect("degree fits")).expect("degree fits");
    let fact: f64 = (1..=n - 2).map(|v| v as f64).product();
    prod = prod.scale(C64::new(1.0 / fact, 0.0));
    let m = n1n1_to_matrix(&prod).expect("degree fits");
    DMatrix::from_fn(n, n, |j, k| m.comp(j * n + k)[0])
}
