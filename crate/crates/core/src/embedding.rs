//! Common-eigenspace estimation.
//!
//! The primary estimator eigendecomposes `sum_l (A_l^2 - D_l)`. For binary
//! layers `(A_l^2)_ij` is the number of common neighbours of `i` and `j`, so the
//! aggregate is an integer matrix with an exactly zero diagonal and is built
//! from word-wise AND + popcount over the packed adjacency rows.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, ScceError};
use crate::linalg::{apply_sign_convention, eigen_by_magnitude, eigen_ordered, leading_by_magnitude};
pub use crate::linalg::EigenvalueOrder;
use crate::model::{LayerStack, MultiLayerNetwork};
use crate::rng;

/// Eigenvalue magnitudes closer than this are treated as tied at the cut.
pub const EIGENGAP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingMethod {
    /// Leading eigenvectors of the bias-adjusted sum of squares.
    Aggregate,
    /// Multiple adjacency spectral embedding baseline.
    Mase,
}

/// Embedding method plus the eigenvalue ranking used by the aggregate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Embedder {
    pub method: EmbeddingMethod,
    pub order: EigenvalueOrder,
}

impl Embedder {
    /// Bias-adjusted aggregate with algebraic ranking.
    pub const SCCE: Embedder = Embedder {
        method: EmbeddingMethod::Aggregate,
        order: EigenvalueOrder::Algebraic,
    };
    pub const MASE: Embedder = Embedder {
        method: EmbeddingMethod::Mase,
        order: EigenvalueOrder::Magnitude,
    };

    pub fn embed(&self, net: &MultiLayerNetwork, k: usize) -> Result<EigenspaceEstimate> {
        match self.method {
            EmbeddingMethod::Aggregate => aggregate_eigenspace_ordered(net, k, self.order),
            EmbeddingMethod::Mase => mase_eigenspace(net, k),
        }
    }

    pub fn label(&self) -> &'static str {
        self.method.label()
    }
}

impl EmbeddingMethod {
    pub fn label(self) -> &'static str {
        match self {
            EmbeddingMethod::Aggregate => "scce",
            EmbeddingMethod::Mase => "mase",
        }
    }
}

/// `n x K` orthonormal basis with the associated leading eigenvalues
/// (singular values for MASE), ordered by magnitude.
#[derive(Debug, Clone)]
pub struct EigenspaceEstimate {
    basis: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    method: EmbeddingMethod,
    eigengap_ambiguous: bool,
}

impl EigenspaceEstimate {
    /// Wraps an externally supplied basis, e.g. the population `U` or an
    /// aligned `Uhat Z^T`. Columns must be orthonormal to 1e-8.
    pub fn from_basis(basis: DMatrix<f64>, eigenvalues: Vec<f64>, method: EmbeddingMethod) -> Result<Self> {
        let k = basis.ncols();
        if eigenvalues.len() != k {
            return Err(ScceError::DimensionMismatch(format!(
                "{} eigenvalues for a rank-{k} basis",
                eigenvalues.len()
            )));
        }
        let gram = basis.transpose() * &basis;
        if (gram - DMatrix::identity(k, k)).amax() > 1e-8 {
            return Err(ScceError::InvalidArgument("basis columns are not orthonormal".into()));
        }
        Ok(EigenspaceEstimate {
            basis,
            eigenvalues,
            method,
            eigengap_ambiguous: false,
        })
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn method(&self) -> EmbeddingMethod {
        self.method
    }

    /// Set when `|lambda_K|` and `|lambda_{K+1}|` are within
    /// [`EIGENGAP_TOLERANCE`]; the subspace is then not uniquely defined.
    pub fn eigengap_ambiguous(&self) -> bool {
        self.eigengap_ambiguous
    }

    pub fn n(&self) -> usize {
        self.basis.nrows()
    }

    pub fn k(&self) -> usize {
        self.basis.ncols()
    }

    /// Same subspace expressed in the basis `Uhat R^T`.
    pub fn rotated(&self, r: &DMatrix<f64>) -> EigenspaceEstimate {
        EigenspaceEstimate {
            basis: &self.basis * r.transpose(),
            ..self.clone()
        }
    }
}

/// Per-node rows of all layers concatenated, for one AND/popcount pass.
fn stacked_rows(net: &MultiLayerNetwork) -> (usize, Vec<u64>) {
    let n = net.n();
    let per_layer = net.layer(0).row_words(0).len();
    let stride = per_layer * net.num_layers();
    let mut out = vec![0u64; n * stride];
    for i in 0..n {
        for (l, layer) in net.layers().iter().enumerate() {
            let dst = i * stride + l * per_layer;
            out[dst..dst + per_layer].copy_from_slice(layer.row_words(i));
        }
    }
    (stride, out)
}

#[inline(always)]
fn and_popcount(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x & y).count_ones()).sum()
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "popcnt")]
unsafe fn common_counts_row_popcnt(rows: &[u64], stride: usize, i: usize, out: &mut [u32]) {
    common_counts_row(rows, stride, i, out)
}

#[inline(always)]
fn common_counts_row(rows: &[u64], stride: usize, i: usize, out: &mut [u32]) {
    let a = &rows[i * stride..(i + 1) * stride];
    for (j, slot) in out.iter_mut().enumerate().skip(i) {
        let b = &rows[j * stride..(j + 1) * stride];
        *slot = and_popcount(a, b);
    }
}

/// `C_ij = sum_l (A_l^2)_ij`, i.e. common neighbours summed over layers,
/// including the diagonal (total degree).
fn common_neighbor_counts(net: &MultiLayerNetwork) -> Vec<u32> {
    let n = net.n();
    let (stride, rows) = stacked_rows(net);
    #[cfg(target_arch = "x86_64")]
    let fast = std::is_x86_feature_detected!("popcnt");
    let mut counts = vec![0u32; n * n];
    counts.par_chunks_mut(n).enumerate().for_each(|(i, out)| {
        #[cfg(target_arch = "x86_64")]
        if fast {
            // SAFETY: the popcnt feature was detected at runtime above.
            unsafe { common_counts_row_popcnt(&rows, stride, i, out) };
            return;
        }
        common_counts_row(&rows, stride, i, out);
    });
    for i in 0..n {
        for j in 0..i {
            counts[i * n + j] = counts[j * n + i];
        }
    }
    counts
}

/// `sum_l (A_l^2 - D_l)`. Symmetric, zero diagonal, integer valued.
pub fn aggregate_bias_adjusted(net: &MultiLayerNetwork) -> DMatrix<f64> {
    let n = net.n();
    let counts = common_neighbor_counts(net);
    DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { counts[i * n + j] as f64 })
}

/// `sum_l A_l^2` without the degree correction.
pub fn aggregate_squares(net: &MultiLayerNetwork) -> DMatrix<f64> {
    let n = net.n();
    let counts = common_neighbor_counts(net);
    DMatrix::from_fn(n, n, |i, j| counts[i * n + j] as f64)
}

/// The `K` eigenvectors of the symmetric matrix `s` whose eigenvalues are
/// largest in absolute value, with the sign convention applied.
pub fn leading_eigenspace(s: &DMatrix<f64>, k: usize) -> Result<EigenspaceEstimate> {
    leading_eigenspace_ordered(s, k, EigenvalueOrder::Magnitude)
}

/// As [`leading_eigenspace`] with an explicit ranking of eigenvalues.
pub fn leading_eigenspace_ordered(s: &DMatrix<f64>, k: usize, order: EigenvalueOrder) -> Result<EigenspaceEstimate> {
    let n = s.nrows();
    if s.ncols() != n {
        return Err(ScceError::DimensionMismatch(format!("aggregate is {}x{}", n, s.ncols())));
    }
    if k == 0 || k > n {
        return Err(ScceError::InvalidArgument(format!("K = {k} must be in 1..={n}")));
    }
    let (values, vectors) = eigen_ordered(s.clone(), order)?;
    let rank = |v: f64| match order {
        EigenvalueOrder::Magnitude => v.abs(),
        EigenvalueOrder::Algebraic => v,
    };
    let eigengap_ambiguous = k < n && (rank(values[k - 1]) - rank(values[k])).abs() <= EIGENGAP_TOLERANCE;
    if eigengap_ambiguous {
        log::warn!(
            "eigengap at K={k} is below {EIGENGAP_TOLERANCE:e} (lambda_K={}, lambda_K+1={})",
            values[k - 1],
            values[k]
        );
    }
    let mut basis = vectors.columns(0, k).into_owned();
    apply_sign_convention(&mut basis);
    Ok(EigenspaceEstimate {
        basis,
        eigenvalues: values[..k].to_vec(),
        method: EmbeddingMethod::Aggregate,
        eigengap_ambiguous,
    })
}

/// All eigenvalues of `s`, by decreasing magnitude.
pub fn spectrum_by_magnitude(s: &DMatrix<f64>) -> Result<Vec<f64>> {
    Ok(eigen_by_magnitude(s.clone())?.0)
}

/// Bias-adjusted aggregate followed by its `K` largest (algebraic)
/// eigenpairs. The aggregate estimates the positive semidefinite
/// `sum_l Q_l^2`, so the signal sits at the top of the spectrum while noise
/// spreads symmetrically around zero.
pub fn aggregate_eigenspace(net: &MultiLayerNetwork, k: usize) -> Result<EigenspaceEstimate> {
    aggregate_eigenspace_ordered(net, k, EigenvalueOrder::Algebraic)
}

pub fn aggregate_eigenspace_ordered(net: &MultiLayerNetwork, k: usize, order: EigenvalueOrder) -> Result<EigenspaceEstimate> {
    leading_eigenspace_ordered(&aggregate_bias_adjusted(net), k, order)
}

/// MASE baseline: top-`K` (by magnitude) eigenvectors of every layer,
/// concatenated into `n x LK`, then its `K` leading left singular vectors.
pub fn mase_eigenspace<S: LayerStack>(layers: &S, k: usize) -> Result<EigenspaceEstimate> {
    let n = layers.n();
    if k == 0 || k > n {
        return Err(ScceError::InvalidArgument(format!("K = {k} must be in 1..={n}")));
    }
    let blocks: Vec<DMatrix<f64>> = (0..layers.num_layers())
        .into_par_iter()
        .map(|l| leading_by_magnitude(&layers.layer_dense(l), k).map(|(_, v)| v))
        .collect::<Result<_>>()?;
    let mut stacked = DMatrix::zeros(n, k * blocks.len());
    for (l, b) in blocks.iter().enumerate() {
        stacked.columns_mut(l * k, k).copy_from(b);
    }
    // left singular vectors of V are eigenvectors of V V^T
    let gram = &stacked * stacked.transpose();
    let (values, vectors) = leading_by_magnitude(&gram, (k + 1).min(n))?;
    let eigengap_ambiguous = k < n && (values[k - 1].abs() - values[k].abs()).abs() <= EIGENGAP_TOLERANCE;
    let mut basis = vectors.columns(0, k).into_owned();
    apply_sign_convention(&mut basis);
    Ok(EigenspaceEstimate {
        basis,
        eigenvalues: values[..k].iter().map(|v| v.max(0.0).sqrt()).collect(),
        method: EmbeddingMethod::Mase,
        eigengap_ambiguous,
    })
}

/// `min_Z ||Uhat - U Z||_F` over orthogonal `Z`.
pub fn subspace_distance(u: &DMatrix<f64>, uhat: &DMatrix<f64>) -> Result<f64> {
    let z = crate::estimator::procrustes_align(u, uhat)?;
    Ok((uhat - u * z.z()).norm())
}

const KMEANS_RESTARTS: u64 = 10;
const KMEANS_MAX_ITER: usize = 300;

/// k-means labels on the rows of `Uhat` (row-normalized when
/// `normalize_rows`, the degree-corrected setting). Best of ten seeded
/// k-means++ restarts by within-cluster sum of squares. Labels are numbered
/// in order of first appearance.
pub fn cluster_communities(
    emb: &EigenspaceEstimate,
    k: usize,
    seed: u64,
    normalize_rows: bool,
) -> Result<Vec<usize>> {
    let n = emb.n();
    let d = emb.k();
    let mut points: Vec<Vec<f64>> = (0..n).map(|i| emb.basis.row(i).iter().copied().collect()).collect();
    if normalize_rows {
        for p in &mut points {
            let norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                p.iter_mut().for_each(|x| *x /= norm);
            }
        }
    }
    if k == 0 {
        return Err(ScceError::InvalidArgument("K must be positive".into()));
    }
    let mut distinct: Vec<Vec<u64>> = points.iter().map(|p| p.iter().map(|x| x.to_bits()).collect()).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if k > distinct.len() {
        return Err(ScceError::InvalidArgument(format!(
            "K = {k} exceeds the {} distinct embedding rows",
            distinct.len()
        )));
    }

    let mut best: Option<(f64, Vec<usize>)> = None;
    for restart in 0..KMEANS_RESTARTS {
        let mut r = rng::keyed(seed, &[0x6b6d, restart]);
        let (labels, inertia) = lloyd(&points, d, k, &mut r);
        if best.as_ref().is_none_or(|(b, _)| inertia < *b) {
            best = Some((inertia, labels));
        }
    }
    let labels = best.map(|(_, l)| l).unwrap_or_default();
    Ok(relabel_by_first_appearance(&labels, k))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn lloyd<R: Rng>(points: &[Vec<f64>], d: usize, k: usize, r: &mut R) -> (Vec<usize>, f64) {
    let n = points.len();
    // k-means++ seeding
    let mut centers: Vec<Vec<f64>> = vec![points[r.random_range(0..n)].clone()];
    let mut nearest: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = nearest.iter().sum();
        let idx = if total <= 0.0 {
            r.random_range(0..n)
        } else {
            let mut target = r.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in nearest.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        };
        centers.push(points[idx].clone());
        for (i, p) in points.iter().enumerate() {
            nearest[i] = nearest[i].min(sq_dist(p, centers.last().unwrap()));
        }
    }

    let mut labels = vec![0usize; n];
    for iter in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut best = (f64::INFINITY, 0);
            for (c, center) in centers.iter().enumerate() {
                let dd = sq_dist(p, center);
                if dd < best.0 {
                    best = (dd, c);
                }
            }
            if labels[i] != best.1 || iter == 0 {
                changed |= labels[i] != best.1;
                labels[i] = best.1;
            }
        }
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&labels) {
            counts[c] += 1;
            sums[c].iter_mut().zip(p).for_each(|(s, x)| *s += x);
        }
        for c in 0..k {
            if counts[c] == 0 {
                // re-seed an empty cluster at the point farthest from its center
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq_dist(&points[a], &centers[labels[a]]).total_cmp(&sq_dist(&points[b], &centers[labels[b]]))
                    })
                    .unwrap_or(0);
                centers[c] = points[far].clone();
                labels[far] = c;
                changed = true;
            } else {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        if !changed && iter > 0 {
            break;
        }
    }
    let inertia = points.iter().zip(&labels).map(|(p, &c)| sq_dist(p, &centers[c])).sum();
    (labels, inertia)
}

fn relabel_by_first_appearance(labels: &[usize], k: usize) -> Vec<usize> {
    let mut map = vec![usize::MAX; k];
    let mut next = 0;
    labels
        .iter()
        .map(|&c| {
            if map[c] == usize::MAX {
                map[c] = next;
                next += 1;
            }
            map[c]
        })
        .collect()
}
