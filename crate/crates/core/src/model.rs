//! Core domain types shared by every stage of the pipeline.
//!
//! Adjacency layers are stored as dense bit matrices: one packed row of
//! `ceil(n / 64)` words per node. That keeps `n = 2000, L = 200` inside a few
//! tens of megabytes while still giving O(1) entry access and word-parallel
//! row intersections for the squared-adjacency aggregate.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScceError};

/// Number of free entries of a symmetric `k x k` matrix.
pub fn vec_dim(k: usize) -> usize {
    k * (k + 1) / 2
}

/// 1-based position of entry `(s, t)`, `1 <= s <= t <= k`, in the column-wise
/// upper-triangular vectorization: `(2s + t(t-1)) / 2`.
pub fn vec_index(s: usize, t: usize, k: usize) -> Result<usize> {
    if s == 0 || s > t || t > k {
        return Err(ScceError::InvalidIndex { s, t, k });
    }
    Ok((2 * s + t * (t - 1)) / 2)
}

/// 0-based counterpart of [`vec_index`] for `s <= t < k`.
#[inline]
pub(crate) fn ut_offset(s: usize, t: usize) -> usize {
    debug_assert!(s <= t);
    s + t * (t + 1) / 2
}

/// Inverse of [`ut_offset`]: the 0-based `(s, t)` pairs in vectorization order.
pub(crate) fn ut_pairs(k: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(vec_dim(k));
    for t in 0..k {
        for s in 0..=t {
            out.push((s, t));
        }
    }
    out
}

/// Dense symmetric `K x K` matrix. Construction symmetrizes `(M + M^T) / 2`,
/// so the stored matrix is exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SymKxK(DMatrix<f64>);

impl SymKxK {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(ScceError::DimensionMismatch(format!(
                "expected a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(Self::symmetrized(m))
    }

    /// Infallible constructor for matrices known to be square.
    pub(crate) fn symmetrized(mut m: DMatrix<f64>) -> Self {
        let k = m.nrows();
        for i in 0..k {
            for j in (i + 1)..k {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        SymKxK(m)
    }

    pub fn from_row_slice(k: usize, data: &[f64]) -> Result<Self> {
        if data.len() != k * k {
            return Err(ScceError::DimensionMismatch(format!(
                "{} values cannot fill a {k}x{k} matrix",
                data.len()
            )));
        }
        Ok(Self::symmetrized(DMatrix::from_row_slice(k, k, data)))
    }

    pub fn zeros(k: usize) -> Self {
        SymKxK(DMatrix::zeros(k, k))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, s: usize, t: usize) -> f64 {
        self.0[(s, t)]
    }

    /// `R^T M R` for a `K x K` (or `K x K'`) matrix `R`.
    pub fn congruence(&self, r: &DMatrix<f64>) -> SymKxK {
        SymKxK::symmetrized(r.transpose() * &self.0 * r)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.0.amax()
    }
}

/// Upper triangle of a [`SymKxK`] stacked column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct VecUT {
    k: usize,
    values: DVector<f64>,
}

impl VecUT {
    pub fn new(k: usize, values: DVector<f64>) -> Result<Self> {
        if values.len() != vec_dim(k) {
            return Err(ScceError::DimensionMismatch(format!(
                "a K={k} vectorization has {} entries, got {}",
                vec_dim(k),
                values.len()
            )));
        }
        Ok(VecUT { k, values })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.values
    }
}

pub fn vectorize(m: &SymKxK) -> VecUT {
    let k = m.dim();
    let mut v = DVector::zeros(vec_dim(k));
    for (idx, (s, t)) in ut_pairs(k).into_iter().enumerate() {
        v[idx] = m.get(s, t);
    }
    VecUT { k, values: v }
}

pub fn devectorize(v: &VecUT, k: usize) -> Result<SymKxK> {
    if v.k != k || v.values.len() != vec_dim(k) {
        return Err(ScceError::DimensionMismatch(format!(
            "vectorization of dimension {} does not describe a {k}x{k} matrix",
            v.values.len()
        )));
    }
    Ok(SymKxK(DMatrix::from_fn(k, k, |a, b| v.values[ut_offset(a.min(b), a.max(b))])))
}

/// Frobenius norm of the symmetric matrix described by a raw vectorization,
/// counting each off-diagonal entry twice.
pub(crate) fn frobenius_of_vectorized(k: usize, v: &[f64]) -> f64 {
    let mut acc = 0.0;
    let mut idx = 0;
    for t in 0..k {
        for s in 0..=t {
            let w = if s == t { 1.0 } else { 2.0 };
            acc += w * v[idx] * v[idx];
            idx += 1;
        }
    }
    acc.sqrt()
}

/// One symmetric, zero-diagonal binary layer packed into 64-bit words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryLayer {
    n: usize,
    words: usize,
    bits: Vec<u64>,
}

impl BinaryLayer {
    pub fn empty(n: usize) -> Self {
        let words = n.div_ceil(64).max(1);
        BinaryLayer {
            n,
            words,
            bits: vec![0; n * words],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Sets the undirected edge `{i, j}`. Self loops are rejected.
    pub fn insert_edge(&mut self, i: usize, j: usize) -> Result<()> {
        if i >= self.n || j >= self.n {
            return Err(ScceError::InvalidNetwork(format!(
                "edge ({i}, {j}) outside node range 0..{}",
                self.n
            )));
        }
        if i == j {
            return Err(ScceError::InvalidNetwork(format!(
                "self loop at node {i}; layers must have a zero diagonal"
            )));
        }
        self.set_unchecked(i, j);
        self.set_unchecked(j, i);
        Ok(())
    }

    #[inline]
    pub(crate) fn set_unchecked(&mut self, i: usize, j: usize) {
        self.bits[i * self.words + j / 64] |= 1u64 << (j % 64);
    }

    #[inline]
    pub fn contains(&self, i: usize, j: usize) -> bool {
        (self.bits[i * self.words + j / 64] >> (j % 64)) & 1 == 1
    }

    #[inline]
    pub fn row_words(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words..(i + 1) * self.words]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.row_words(i).iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Neighbours of `i` in increasing order.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.row_words(i)
            .iter()
            .enumerate()
            .flat_map(|(wi, &word)| {
                let mut w = word;
                std::iter::from_fn(move || {
                    if w == 0 {
                        None
                    } else {
                        let b = w.trailing_zeros() as usize;
                        w &= w - 1;
                        Some(wi * 64 + b)
                    }
                })
            })
    }

    pub fn edge_count(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum::<usize>() / 2
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for j in self.neighbors(i) {
                m[(i, j)] = 1.0;
            }
        }
        m
    }
}

/// Read-only access to a stack of `L` symmetric `n x n` layers.
pub trait LayerStack: Sync {
    fn n(&self) -> usize;
    fn num_layers(&self) -> usize;
    /// `A_l X` for a dense `n x k` matrix `X`.
    fn layer_times(&self, l: usize, x: &DMatrix<f64>) -> DMatrix<f64>;
    fn layer_dense(&self, l: usize) -> DMatrix<f64>;
}

/// `L` binary symmetric zero-diagonal adjacency layers on a shared node set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiLayerNetwork {
    n: usize,
    layers: Vec<BinaryLayer>,
}

impl MultiLayerNetwork {
    pub fn from_layers(n: usize, layers: Vec<BinaryLayer>) -> Result<Self> {
        if n == 0 {
            return Err(ScceError::InvalidNetwork("node count must be positive".into()));
        }
        if layers.is_empty() {
            return Err(ScceError::InvalidNetwork("at least one layer is required".into()));
        }
        if let Some((l, layer)) = layers.iter().enumerate().find(|(_, layer)| layer.n != n) {
            return Err(ScceError::InvalidNetwork(format!(
                "layer {l} has {} nodes, expected {n}",
                layer.n
            )));
        }
        Ok(MultiLayerNetwork { n, layers })
    }

    /// Builds a network from `(layer, i, j)` edge triples. Both orientations of
    /// an edge may be listed; self loops are an error.
    pub fn from_edges<I>(n: usize, num_layers: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, usize)>,
    {
        let mut layers = vec![BinaryLayer::empty(n); num_layers];
        for (l, i, j) in edges {
            let layer = layers.get_mut(l).ok_or_else(|| {
                ScceError::InvalidNetwork(format!("layer index {l} outside 0..{num_layers}"))
            })?;
            layer.insert_edge(i, j)?;
        }
        Self::from_layers(n, layers)
    }

    /// Validates dense `{0, 1}` matrices: symmetric with zero diagonal.
    pub fn from_dense(layers: &[DMatrix<f64>]) -> Result<Self> {
        let n = layers.first().map(|m| m.nrows()).unwrap_or(0);
        let mut out = Vec::with_capacity(layers.len());
        for (l, a) in layers.iter().enumerate() {
            if a.nrows() != n || a.ncols() != n {
                return Err(ScceError::InvalidNetwork(format!(
                    "layer {l} is {}x{}, expected {n}x{n}",
                    a.nrows(),
                    a.ncols()
                )));
            }
            let mut layer = BinaryLayer::empty(n);
            for i in 0..n {
                if a[(i, i)] != 0.0 {
                    return Err(ScceError::InvalidNetwork(format!(
                        "layer {l} has a non-zero diagonal entry at node {i}"
                    )));
                }
                for j in (i + 1)..n {
                    let (x, y) = (a[(i, j)], a[(j, i)]);
                    if x != y {
                        return Err(ScceError::InvalidNetwork(format!(
                            "layer {l} is not symmetric at ({i}, {j})"
                        )));
                    }
                    if x == 1.0 {
                        layer.insert_edge(i, j)?;
                    } else if x != 0.0 {
                        return Err(ScceError::InvalidNetwork(format!(
                            "layer {l} entry ({i}, {j}) = {x} is not binary"
                        )));
                    }
                }
            }
            out.push(layer);
        }
        Self::from_layers(n, out)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, l: usize) -> &BinaryLayer {
        &self.layers[l]
    }

    pub fn layers(&self) -> &[BinaryLayer] {
        &self.layers
    }

    /// Edge density of each layer, `edges / C(n, 2)`.
    pub fn densities(&self) -> Vec<f64> {
        let pairs = (self.n * self.n.saturating_sub(1) / 2).max(1) as f64;
        self.layers
            .iter()
            .map(|l| l.edge_count() as f64 / pairs)
            .collect()
    }
}

impl LayerStack for MultiLayerNetwork {
    fn n(&self) -> usize {
        self.n
    }

    fn num_layers(&self) -> usize {
        self.layers.len()
    }

    fn layer_times(&self, l: usize, x: &DMatrix<f64>) -> DMatrix<f64> {
        let layer = &self.layers[l];
        let k = x.ncols();
        let mut out = DMatrix::zeros(self.n, k);
        for i in 0..self.n {
            for j in layer.neighbors(i) {
                for c in 0..k {
                    out[(i, c)] += x[(j, c)];
                }
            }
        }
        out
    }

    fn layer_dense(&self, l: usize) -> DMatrix<f64> {
        self.layers[l].to_dense()
    }
}

/// Real-valued symmetric layers. Used to feed population matrices `Q_l`
/// (diagonal retained) through the estimators, which isolates the algebra
/// from Bernoulli noise.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayers {
    n: usize,
    layers: Vec<DMatrix<f64>>,
}

impl DenseLayers {
    pub fn new(layers: Vec<DMatrix<f64>>) -> Result<Self> {
        let n = layers.first().map(|m| m.nrows()).unwrap_or(0);
        if n == 0 {
            return Err(ScceError::InvalidNetwork("empty layer stack".into()));
        }
        for (l, m) in layers.iter().enumerate() {
            if m.nrows() != n || m.ncols() != n {
                return Err(ScceError::InvalidNetwork(format!(
                    "layer {l} is {}x{}, expected {n}x{n}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if (m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
                return Err(ScceError::InvalidNetwork(format!("layer {l} is not symmetric")));
            }
        }
        Ok(DenseLayers { n, layers })
    }

    pub fn layers(&self) -> &[DMatrix<f64>] {
        &self.layers
    }

    /// `sum_l A_l^2` without any degree correction.
    pub fn aggregate_squares(&self) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.n, self.n);
        for a in &self.layers {
            s += a * a;
        }
        (&s + s.transpose()) * 0.5
    }
}

impl LayerStack for DenseLayers {
    fn n(&self) -> usize {
        self.n
    }

    fn num_layers(&self) -> usize {
        self.layers.len()
    }

    fn layer_times(&self, l: usize, x: &DMatrix<f64>) -> DMatrix<f64> {
        &self.layers[l] * x
    }

    fn layer_dense(&self, l: usize) -> DMatrix<f64> {
        self.layers[l].clone()
    }
}

/// Node degrees of one binary layer, `D_ii = sum_j A_ij`.
pub fn degree_diagonal(layer: &BinaryLayer) -> Vec<f64> {
    (0..layer.n()).map(|i| layer.degree(i) as f64).collect()
}

/// Serializable layer-indexed summary used by the JSON exports.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LayerMatrixRecord {
    pub layer: usize,
    pub dim: usize,
    /// Upper triangle in row-major order: (0,0), (0,1), ..., (0,K-1), (1,1), ...
    pub upper_row_major: Vec<f64>,
}

impl LayerMatrixRecord {
    pub fn from_matrix(layer: usize, m: &DMatrix<f64>) -> Self {
        let dim = m.nrows();
        let mut upper = Vec::with_capacity(vec_dim(dim));
        for i in 0..dim {
            for j in i..dim {
                upper.push(m[(i, j)]);
            }
        }
        LayerMatrixRecord {
            layer,
            dim,
            upper_row_major: upper,
        }
    }
}
