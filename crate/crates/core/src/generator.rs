//! Multi-layer SBM / DCSBM specifications, sampling and population quantities.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, ScceError};
use crate::model::{BinaryLayer, MultiLayerNetwork, SymKxK};
use crate::rng;

const PROBABILITY_SLACK: f64 = 1e-12;

/// Parameters of a multi-layer (degree-corrected) stochastic block model.
///
/// Community labels are 0-based. Edge `{i, j}` of layer `l` is present with
/// probability `rho * psi_i * psi_j * B_l[g_i, g_j]`, with `psi = 1` when no
/// degree parameters are given.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockModelSpec {
    k: usize,
    membership: Vec<usize>,
    connectivity: Vec<SymKxK>,
    rho: f64,
    psi: Option<Vec<f64>>,
}

impl BlockModelSpec {
    pub fn new(
        k: usize,
        membership: Vec<usize>,
        connectivity: Vec<SymKxK>,
        rho: f64,
        psi: Option<Vec<f64>>,
    ) -> Result<Self> {
        if k == 0 {
            return Err(ScceError::InvalidSpec("K must be positive".into()));
        }
        if membership.is_empty() {
            return Err(ScceError::InvalidSpec("membership vector is empty".into()));
        }
        if connectivity.is_empty() {
            return Err(ScceError::InvalidSpec("at least one layer is required".into()));
        }
        if let Some((i, &g)) = membership.iter().enumerate().find(|(_, &g)| g >= k) {
            return Err(ScceError::InvalidSpec(format!(
                "node {i} has label {g}, labels must be below K={k}"
            )));
        }
        let mut sizes = vec![0usize; k];
        for &g in &membership {
            sizes[g] += 1;
        }
        if let Some(empty) = sizes.iter().position(|&c| c == 0) {
            return Err(ScceError::EmptyCommunity(empty));
        }
        if !(0.0..=1.0).contains(&rho) {
            return Err(ScceError::InvalidSpec(format!("rho = {rho} outside [0, 1]")));
        }
        let mut clean = Vec::with_capacity(connectivity.len());
        for (l, b) in connectivity.into_iter().enumerate() {
            if b.dim() != k {
                return Err(ScceError::InvalidSpec(format!(
                    "connectivity of layer {l} is {0}x{0}, expected {k}x{k}",
                    b.dim()
                )));
            }
            let mut m = b.into_inner();
            for v in m.iter_mut() {
                if !(-PROBABILITY_SLACK..=1.0 + PROBABILITY_SLACK).contains(v) {
                    return Err(ScceError::InvalidSpec(format!(
                        "connectivity of layer {l} has entry {v} outside [0, 1]"
                    )));
                }
                *v = v.clamp(0.0, 1.0);
            }
            clean.push(SymKxK::symmetrized(m));
        }
        if let Some(psi) = &psi {
            if psi.len() != membership.len() {
                return Err(ScceError::InvalidSpec(format!(
                    "psi has {} entries for {} nodes",
                    psi.len(),
                    membership.len()
                )));
            }
            if let Some(bad) = psi.iter().find(|&&p| !(p > 0.0 && p.is_finite())) {
                return Err(ScceError::InvalidSpec(format!("psi entry {bad} is not positive")));
            }
        }
        Ok(BlockModelSpec {
            k,
            membership,
            connectivity: clean,
            rho,
            psi,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.membership.len()
    }

    pub fn num_layers(&self) -> usize {
        self.connectivity.len()
    }

    pub fn membership(&self) -> &[usize] {
        &self.membership
    }

    pub fn connectivity(&self) -> &[SymKxK] {
        &self.connectivity
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn psi(&self) -> Option<&[f64]> {
        self.psi.as_deref()
    }

    pub fn is_degree_corrected(&self) -> bool {
        self.psi.is_some()
    }

    #[inline]
    pub fn psi_at(&self, i: usize) -> f64 {
        self.psi.as_ref().map_or(1.0, |p| p[i])
    }

    pub fn community_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.k];
        for &g in &self.membership {
            sizes[g] += 1;
        }
        sizes
    }

    /// `||phi_k||^2`: squared norm of `psi` restricted to community `k`. Equals
    /// the community size when `psi = 1`.
    pub fn effective_sizes(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.k];
        for (i, &g) in self.membership.iter().enumerate() {
            let p = self.psi_at(i);
            out[g] += p * p;
        }
        out
    }

    /// `Q_{l,ij}`, also defined on the diagonal.
    #[inline]
    pub fn edge_probability(&self, l: usize, i: usize, j: usize) -> f64 {
        self.rho
            * self.psi_at(i)
            * self.psi_at(j)
            * self.connectivity[l].get(self.membership[i], self.membership[j])
    }

    /// Same model with the layers replaced.
    pub fn with_connectivity(&self, connectivity: Vec<SymKxK>) -> Result<Self> {
        Self::new(self.k, self.membership.clone(), connectivity, self.rho, self.psi.clone())
    }

    /// Checks that every off-diagonal edge probability is at most one, naming
    /// the first offending `(layer, i, j)` otherwise.
    pub fn validate_probabilities(&self) -> Result<()> {
        // two largest psi values per community, with their node indices
        let mut top: Vec<[(f64, usize); 2]> = vec![[(-1.0, usize::MAX); 2]; self.k];
        for (i, &g) in self.membership.iter().enumerate() {
            let p = self.psi_at(i);
            let slot = &mut top[g];
            if p > slot[0].0 {
                slot[1] = slot[0];
                slot[0] = (p, i);
            } else if p > slot[1].0 {
                slot[1] = (p, i);
            }
        }
        for (l, b) in self.connectivity.iter().enumerate() {
            for s in 0..self.k {
                for t in s..self.k {
                    let (i, j) = if s == t {
                        if top[s][1].1 == usize::MAX {
                            continue;
                        }
                        (top[s][0].1, top[s][1].1)
                    } else {
                        (top[s][0].1, top[t][0].1)
                    };
                    let p = self.rho * self.psi_at(i) * self.psi_at(j) * b.get(s, t);
                    if p > 1.0 + PROBABILITY_SLACK {
                        let (i, j) = (i.min(j), i.max(j));
                        return Err(ScceError::ProbabilityOutOfRange {
                            layer: l,
                            i,
                            j,
                            probability: p,
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Community sizes for `n` nodes split by `proportions`, using largest
/// remainder rounding so the sizes sum to `n`.
pub fn sizes_from_proportions(n: usize, proportions: &[f64]) -> Result<Vec<usize>> {
    if proportions.is_empty() || proportions.iter().any(|&p| !(p > 0.0)) {
        return Err(ScceError::InvalidArgument("proportions must be positive".into()));
    }
    let total: f64 = proportions.iter().sum();
    let exact: Vec<f64> = proportions.iter().map(|p| p / total * n as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut remaining = n - sizes.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..exact.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for idx in order {
        if remaining == 0 {
            break;
        }
        sizes[idx] += 1;
        remaining -= 1;
    }
    Ok(sizes)
}

/// Contiguous labelling: the first `sizes[0]` nodes are community 0, and so on.
pub fn membership_from_sizes(sizes: &[usize]) -> Vec<usize> {
    sizes
        .iter()
        .enumerate()
        .flat_map(|(k, &c)| std::iter::repeat_n(k, c))
        .collect()
}

/// Orthogonal basis used by the simulation designs.
pub fn simulation_basis() -> DMatrix<f64> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    DMatrix::from_row_slice(3, 3, &[0.5, 0.5, -h, 0.5, 0.5, h, h, -h, 0.0])
}

/// `V diag(scales) V^T` with `V` the fixed [`simulation_basis`].
pub fn connectivity_from_spectrum(scales: [f64; 3]) -> SymKxK {
    let v = simulation_basis();
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&scales));
    SymKxK::symmetrized(&v * d * v.transpose())
}

/// Degree parameters `psi = beta * x / ||x||_2` with `x_i ~ Uniform(2, 3)`.
pub fn sample_psi(n: usize, beta: f64, seed: u64) -> Result<Vec<f64>> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(ScceError::InvalidArgument(format!("beta = {beta} must be positive")));
    }
    if n == 0 {
        return Err(ScceError::InvalidArgument("n must be positive".into()));
    }
    let mut r = rng::keyed(seed, &[0x9517]);
    let raw: Vec<f64> = (0..n).map(|_| r.random_range(2.0..3.0)).collect();
    let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(raw.into_iter().map(|x| beta * x / norm).collect())
}

/// Two-regime simulation design: layers `0..L/2` use `first`, the rest use
/// `second`.
pub fn two_regime_spec(
    n: usize,
    proportions: &[f64],
    num_layers: usize,
    rho: f64,
    first: &SymKxK,
    second: &SymKxK,
    psi: Option<Vec<f64>>,
) -> Result<BlockModelSpec> {
    let sizes = sizes_from_proportions(n, proportions)?;
    let half = num_layers / 2;
    let connectivity = (0..num_layers)
        .map(|l| if l < half { first.clone() } else { second.clone() })
        .collect();
    BlockModelSpec::new(first.dim(), membership_from_sizes(&sizes), connectivity, rho, psi)
}

/// Two-regime design for testing `M_1 = M_2`: layer 0 uses `first`, layer 1
/// uses `first` with its `(0, 0)` entry raised by `delta` (so
/// `||B_1 - B_2||_F = delta`), layers `2..=L/2` use `first` and the rest use
/// `second`.
pub fn pair_perturbation_spec(
    n: usize,
    proportions: &[f64],
    num_layers: usize,
    rho: f64,
    first: &SymKxK,
    second: &SymKxK,
    delta: f64,
    psi: Option<Vec<f64>>,
) -> Result<BlockModelSpec> {
    if num_layers < 2 {
        return Err(ScceError::InvalidSpec("the perturbation design needs L >= 2".into()));
    }
    let mut raised = first.matrix().clone();
    raised[(0, 0)] += delta;
    let raised = SymKxK::new(raised)?;
    let half = num_layers / 2;
    let connectivity = (0..num_layers)
        .map(|l| match l {
            1 => raised.clone(),
            l if l <= half => first.clone(),
            _ => second.clone(),
        })
        .collect();
    let sizes = sizes_from_proportions(n, proportions)?;
    BlockModelSpec::new(first.dim(), membership_from_sizes(&sizes), connectivity, rho, psi)
}

/// Samples every layer. Layer `l` consumes ChaCha8 stream `l` of `seed` in
/// row-major upper-triangular order, so the output is independent of how the
/// layers are scheduled across threads.
pub fn sample_network(spec: &BlockModelSpec, seed: u64) -> Result<MultiLayerNetwork> {
    spec.validate_probabilities()?;
    let layers: Vec<BinaryLayer> = (0..spec.num_layers())
        .into_par_iter()
        .map(|l| sample_layer(spec, seed, l))
        .collect();
    MultiLayerNetwork::from_layers(spec.n(), layers)
}

const TWO_POW_32: f64 = 4_294_967_296.0;

pub(crate) fn sample_layer(spec: &BlockModelSpec, seed: u64, l: usize) -> BinaryLayer {
    let n = spec.n();
    let k = spec.k();
    let mut r = rng::stream(seed, l as u64);
    let mut layer = BinaryLayer::empty(n);
    let b = spec.connectivity()[l].matrix();
    let base: Vec<f64> = (0..k * k).map(|idx| spec.rho() * b[(idx / k, idx % k)] * TWO_POW_32).collect();
    let g = spec.membership();
    for i in 0..n {
        let row = &base[g[i] * k..(g[i] + 1) * k];
        let pi = spec.psi_at(i);
        for j in (i + 1)..n {
            // one u32 per pair keeps the (i, j) -> counter mapping fixed
            let u = r.next_u32() as f64;
            let threshold = match spec.psi() {
                None => row[g[j]],
                Some(psi) => row[g[j]] * pi * psi[j],
            };
            if u < threshold {
                layer.set_unchecked(i, j);
                layer.set_unchecked(j, i);
            }
        }
    }
    layer
}

/// Exact population factors `Q_l = U M_l U^T`.
#[derive(Debug, Clone)]
pub struct PopulationDecomposition {
    spec: BlockModelSpec,
    u: DMatrix<f64>,
    m: Vec<SymKxK>,
}

impl PopulationDecomposition {
    pub fn spec(&self) -> &BlockModelSpec {
        &self.spec
    }

    /// `n x K`, orthonormal columns.
    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn scores(&self) -> &[SymKxK] {
        &self.m
    }

    pub fn score(&self, l: usize) -> &SymKxK {
        &self.m[l]
    }

    /// Materializes `Q_l` (diagonal included).
    pub fn population_matrix(&self, l: usize) -> DMatrix<f64> {
        let n = self.spec.n();
        DMatrix::from_fn(n, n, |i, j| self.spec.edge_probability(l, i, j))
    }

    /// `P_l = Q_l - diag(Q_l)`, the mean of the adjacency matrix.
    pub fn mean_adjacency(&self, l: usize) -> DMatrix<f64> {
        let mut p = self.population_matrix(l);
        p.fill_diagonal(0.0);
        p
    }

    /// `U^T diag(Q_l) U` without materializing `Q_l`.
    pub fn projected_diagonal(&self, l: usize) -> DMatrix<f64> {
        let k = self.spec.k();
        let mut out = DMatrix::zeros(k, k);
        for i in 0..self.spec.n() {
            let q = self.spec.edge_probability(l, i, i);
            for s in 0..k {
                let us = self.u[(i, s)];
                if us == 0.0 {
                    continue;
                }
                for t in 0..k {
                    out[(s, t)] += us * q * self.u[(i, t)];
                }
            }
        }
        out
    }
}

pub fn population_decomposition(spec: &BlockModelSpec) -> Result<PopulationDecomposition> {
    let k = spec.k();
    let eff = spec.effective_sizes();
    if let Some(empty) = eff.iter().position(|&v| v <= 0.0) {
        return Err(ScceError::EmptyCommunity(empty));
    }
    let mut u = DMatrix::zeros(spec.n(), k);
    for (i, &g) in spec.membership().iter().enumerate() {
        u[(i, g)] = spec.psi_at(i) / eff[g].sqrt();
    }
    let root = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(k, eff.iter().map(|v| v.sqrt())));
    let m = spec
        .connectivity()
        .iter()
        .map(|b| SymKxK::symmetrized(&root * b.matrix() * &root * spec.rho()))
        .collect();
    Ok(PopulationDecomposition {
        spec: spec.clone(),
        u,
        m,
    })
}

/// Rescales `psi` so its maximum inside every community is one, moving the
/// scale into the connectivity matrices. `Q_l` is unchanged.
pub fn identifiable_form(spec: &BlockModelSpec) -> Result<BlockModelSpec> {
    let Some(psi) = spec.psi() else {
        return Ok(spec.clone());
    };
    let k = spec.k();
    let mut peak = vec![0.0f64; k];
    for (i, &g) in spec.membership().iter().enumerate() {
        peak[g] = peak[g].max(psi[i]);
    }
    let new_psi: Vec<f64> = psi
        .iter()
        .zip(spec.membership())
        .map(|(p, &g)| p / peak[g])
        .collect();
    let scale = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(peak));
    let connectivity = spec
        .connectivity()
        .iter()
        .map(|b| SymKxK::symmetrized(&scale * b.matrix() * &scale))
        .collect();
    BlockModelSpec::new(k, spec.membership().to_vec(), connectivity, spec.rho(), Some(new_psi))
}

/// Numerical diagnostics for the model conditions. Pure report: only rank
/// deficiency of the aggregated connectivity is flagged.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    /// `lambda_min(sum_l B_l^2) / L`.
    pub min_eigen_sum_b_squared_per_layer: f64,
    pub aggregate_rank_deficient: bool,
    /// `min_k n_k * K / n` and `max_k n_k * K / n`.
    pub size_ratio_min: f64,
    pub size_ratio_max: f64,
    /// `s^2(Q_l) = sum_ij Q_ij (1 - Q_ij)` per layer.
    pub edge_variance: Vec<f64>,
    /// `K ||phi_k|| / ||psi||` per community.
    pub degree_balance: Vec<f64>,
}

pub fn check_assumptions(spec: &BlockModelSpec) -> AssumptionReport {
    let k = spec.k();
    let n = spec.n();
    let layers = spec.num_layers();
    let mut sum_sq = DMatrix::zeros(k, k);
    for b in spec.connectivity() {
        sum_sq += b.matrix() * b.matrix();
    }
    let eig = SymmetricEigen::new(sum_sq.clone());
    let lambda_min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let scale = sum_sq.amax().max(1.0);
    let sizes = spec.community_sizes();
    let ratio = |c: usize| c as f64 * k as f64 / n as f64;
    let size_ratio_min = sizes.iter().map(|&c| ratio(c)).fold(f64::INFINITY, f64::min);
    let size_ratio_max = sizes.iter().map(|&c| ratio(c)).fold(0.0, f64::max);

    let edge_variance = (0..layers)
        .map(|l| {
            if spec.is_degree_corrected() {
                let mut acc = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        let q = spec.edge_probability(l, i, j);
                        acc += q * (1.0 - q);
                    }
                }
                acc
            } else {
                let b = spec.connectivity()[l].matrix();
                let mut acc = 0.0;
                for s in 0..k {
                    for t in 0..k {
                        let q = spec.rho() * b[(s, t)];
                        acc += (sizes[s] * sizes[t]) as f64 * q * (1.0 - q);
                    }
                }
                acc
            }
        })
        .collect();

    let eff = spec.effective_sizes();
    let psi_norm = eff.iter().sum::<f64>().sqrt();
    let degree_balance = eff.iter().map(|e| k as f64 * e.sqrt() / psi_norm).collect();

    AssumptionReport {
        min_eigen_sum_b_squared_per_layer: lambda_min / layers as f64,
        aggregate_rank_deficient: lambda_min <= 1e-12 * scale,
        size_ratio_min,
        size_ratio_max,
        edge_variance,
        degree_balance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b1() -> SymKxK {
        connectivity_from_spectrum([1.5, 0.2, 0.5])
    }

    fn b2() -> SymKxK {
        connectivity_from_spectrum([1.5, 0.2, -0.5])
    }

    fn assert_close(a: &DMatrix<f64>, b: &[f64], tol: f64) {
        let b = DMatrix::from_row_slice(a.nrows(), a.ncols(), b);
        assert!((a - &b).amax() < tol, "{a} vs {b}");
    }

    #[test]
    fn spectrum_connectivity_reproduces_reference_displays() {
        assert_close(b1().matrix(), &[0.675, 0.175, 0.46, 0.175, 0.675, 0.46, 0.46, 0.46, 0.85], 0.005);
        assert_close(b2().matrix(), &[0.175, 0.675, 0.46, 0.675, 0.175, 0.46, 0.46, 0.46, 0.85], 0.005);
        let e2 = connectivity_from_spectrum([1.0, 0.4, 0.1]);
        assert_close(e2.matrix(), &[0.4, 0.3, 0.212, 0.3, 0.4, 0.212, 0.212, 0.212, 0.7], 0.001);
    }

    #[test]
    fn largest_remainder_sizes() {
        assert_eq!(sizes_from_proportions(500, &[0.4, 0.3, 0.3]).unwrap(), vec![200, 150, 150]);
        assert_eq!(sizes_from_proportions(10, &[1.0, 1.0, 1.0]).unwrap(), vec![4, 3, 3]);
        assert_eq!(sizes_from_proportions(7, &[0.5, 0.5]).unwrap().iter().sum::<usize>(), 7);
        assert!(sizes_from_proportions(10, &[]).is_err());
    }

    #[test]
    fn rejects_empty_communities_and_bad_entries() {
        let b = SymKxK::from_row_slice(2, &[0.5, 0.1, 0.1, 0.5]).unwrap();
        assert!(matches!(
            BlockModelSpec::new(2, vec![0, 0, 0], vec![b.clone()], 0.5, None),
            Err(ScceError::EmptyCommunity(1))
        ));
        let bad = SymKxK::from_row_slice(2, &[1.5, 0.1, 0.1, 0.5]).unwrap();
        assert!(BlockModelSpec::new(2, vec![0, 1], vec![bad], 0.5, None).is_err());
        assert!(BlockModelSpec::new(2, vec![0, 1], vec![b.clone()], 0.5, Some(vec![1.0, -1.0])).is_err());
        assert!(BlockModelSpec::new(2, vec![0, 2], vec![b], 0.5, None).is_err());
    }

    #[test]
    fn zero_rho_gives_empty_layers_and_full_b_gives_complete_graphs() {
        let spec = two_regime_spec(30, &[0.4, 0.3, 0.3], 4, 0.0, &b1(), &b2(), None).unwrap();
        let net = sample_network(&spec, 1).unwrap();
        assert!(net.layers().iter().all(|l| l.edge_count() == 0));

        let ones = SymKxK::from_row_slice(2, &[1.0; 4]).unwrap();
        let spec = BlockModelSpec::new(2, membership_from_sizes(&[5, 7]), vec![ones; 3], 1.0, None).unwrap();
        let net = sample_network(&spec, 1).unwrap();
        assert!(net.layers().iter().all(|l| l.edge_count() == 12 * 11 / 2));
    }

    #[test]
    fn probability_above_one_is_reported_with_location() {
        let ones = SymKxK::from_row_slice(2, &[1.0; 4]).unwrap();
        let psi = vec![1.0, 1.0, 2.0, 1.0];
        let spec = BlockModelSpec::new(2, vec![0, 0, 1, 1], vec![ones.clone(), ones], 0.9, Some(psi)).unwrap();
        match sample_network(&spec, 0) {
            Err(ScceError::ProbabilityOutOfRange { layer, i, j, probability }) => {
                assert_eq!(layer, 0);
                assert!(i == 2 || j == 2);
                assert!(probability > 1.0);
            }
            other => panic!("expected probability error, got {other:?}"),
        }
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let spec = two_regime_spec(60, &[0.4, 0.3, 0.3], 6, 0.3, &b1(), &b2(), None).unwrap();
        let a = sample_network(&spec, 42).unwrap();
        let b = sample_network(&spec, 42).unwrap();
        let c = sample_network(&spec, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn population_score_matches_hand_arithmetic() {
        let spec = two_regime_spec(500, &[0.4, 0.3, 0.3], 2, 0.1, &b1(), &b2(), None).unwrap();
        let pop = population_decomposition(&spec).unwrap();
        let expected = 0.1 * 200.0 * b1().get(0, 0);
        assert!((pop.score(0).get(0, 0) - expected).abs() < 1e-10);
        assert!((pop.score(0).get(0, 0) - 13.5).abs() < 0.01);
    }

    #[test]
    fn population_factors_reconstruct_q() {
        let psi = sample_psi(40, 4.0, 3).unwrap();
        for psi in [None, Some(psi)] {
            let spec = two_regime_spec(40, &[0.4, 0.3, 0.3], 2, 0.4, &b1(), &b2(), psi).unwrap();
            let pop = population_decomposition(&spec).unwrap();
            let u = pop.u();
            assert!((u.transpose() * u - DMatrix::identity(3, 3)).amax() < 1e-10);
            for l in 0..2 {
                let q = u * pop.score(l).matrix() * u.transpose();
                assert!((q - pop.population_matrix(l)).amax() < 1e-10);
            }
        }
    }

    #[test]
    fn unit_psi_matches_plain_sbm() {
        let sbm = two_regime_spec(50, &[0.4, 0.3, 0.3], 2, 0.2, &b1(), &b2(), None).unwrap();
        let dc = two_regime_spec(50, &[0.4, 0.3, 0.3], 2, 0.2, &b1(), &b2(), Some(vec![1.0; 50])).unwrap();
        let (a, b) = (population_decomposition(&sbm).unwrap(), population_decomposition(&dc).unwrap());
        assert_eq!(a.u(), b.u());
        assert_eq!(a.scores(), b.scores());
    }

    #[test]
    fn single_community_population() {
        let b = SymKxK::from_row_slice(1, &[0.3]).unwrap();
        let spec = BlockModelSpec::new(1, vec![0; 16], vec![b], 0.5, None).unwrap();
        let pop = population_decomposition(&spec).unwrap();
        assert!(pop.u().iter().all(|&x| (x - 0.25).abs() < 1e-15));
        assert!((pop.score(0).get(0, 0) - 0.5 * 16.0 * 0.3).abs() < 1e-12);
    }

    #[test]
    fn psi_normalization_and_support() {
        for seed in 0..5 {
            let psi = sample_psi(300, 10.4, seed).unwrap();
            let norm = psi.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 10.4).abs() < 1e-12);
            let max = psi.iter().cloned().fold(0.0, f64::max);
            let min = psi.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(max / min <= 1.5);
        }
        assert!(sample_psi(10, 0.0, 0).is_err());
    }

    #[test]
    fn identifiable_form_preserves_population() {
        let psi = sample_psi(30, 3.0, 11).unwrap();
        let spec = two_regime_spec(30, &[0.4, 0.3, 0.3], 2, 0.5, &b1(), &b2(), Some(psi)).unwrap();
        let ident = identifiable_form(&spec).unwrap();
        for k in 0..3 {
            let peak = (0..30)
                .filter(|&i| ident.membership()[i] == k)
                .map(|i| ident.psi_at(i))
                .fold(0.0, f64::max);
            assert!((peak - 1.0).abs() < 1e-15);
        }
        for l in 0..2 {
            for i in 0..30 {
                for j in 0..30 {
                    let d = spec.edge_probability(l, i, j) - ident.edge_probability(l, i, j);
                    assert!(d.abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn assumption_report_values() {
        let spec = two_regime_spec(100, &[0.4, 0.3, 0.3], 10, 0.1, &b1(), &b2(), None).unwrap();
        let rep = check_assumptions(&spec);
        assert!((rep.min_eigen_sum_b_squared_per_layer - 0.04).abs() < 1e-12);
        assert!(!rep.aggregate_rank_deficient);
        assert!((rep.size_ratio_min - 0.9).abs() < 1e-12);
        assert!((rep.size_ratio_max - 1.2).abs() < 1e-12);
        for (k, &n_k) in [40.0f64, 30.0, 30.0].iter().enumerate() {
            assert!((rep.degree_balance[k] - 3.0 * (n_k / 100.0).sqrt()).abs() < 1e-12);
        }

        // identical layers: the ratio does not depend on L
        let one = two_regime_spec(30, &[0.4, 0.3, 0.3], 2, 0.1, &b1(), &b1(), None).unwrap();
        let many = two_regime_spec(30, &[0.4, 0.3, 0.3], 12, 0.1, &b1(), &b1(), None).unwrap();
        let (a, b) = (check_assumptions(&one), check_assumptions(&many));
        assert!((a.min_eigen_sum_b_squared_per_layer - b.min_eigen_sum_b_squared_per_layer).abs() < 1e-12);
        assert!((a.min_eigen_sum_b_squared_per_layer - 0.04).abs() < 1e-12);

        let singular = connectivity_from_spectrum([1.0, 0.0, 0.5]);
        let spec = two_regime_spec(30, &[0.4, 0.3, 0.3], 4, 0.1, &singular, &singular, None).unwrap();
        assert!(check_assumptions(&spec).aggregate_rank_deficient);
    }

    #[test]
    fn edge_variance_matches_direct_sum() {
        let spec = two_regime_spec(24, &[0.4, 0.3, 0.3], 2, 0.3, &b1(), &b2(), None).unwrap();
        let rep = check_assumptions(&spec);
        let pop = population_decomposition(&spec).unwrap();
        for l in 0..2 {
            let q = pop.population_matrix(l);
            let direct: f64 = q.iter().map(|x| x * (1.0 - x)).sum();
            assert!((rep.edge_variance[l] - direct).abs() < 1e-10);
        }
    }
}
