//! Layer-wise score matrices, Procrustes alignment, covariance of the
//! vectorized scores, and the simulation-only bias residual.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::embedding::{EigenspaceEstimate, EmbeddingMethod};
use crate::error::{Result, ScceError};
use crate::generator::PopulationDecomposition;
use crate::linalg::{inverse_sqrt, psd_repair, Compensated};
use crate::model::{ut_pairs, vec_dim, LayerMatrixRecord, LayerStack, MultiLayerNetwork, SymKxK};

/// `Mhat_l = Uhat^T A_l Uhat` for every layer.
#[derive(Debug, Clone)]
pub struct ScoreEstimate {
    scores: Vec<SymKxK>,
    method: EmbeddingMethod,
}

impl ScoreEstimate {
    pub fn new(scores: Vec<SymKxK>, method: EmbeddingMethod) -> Self {
        ScoreEstimate { scores, method }
    }

    pub fn scores(&self) -> &[SymKxK] {
        &self.scores
    }

    pub fn score(&self, l: usize) -> &SymKxK {
        &self.scores[l]
    }

    pub fn num_layers(&self) -> usize {
        self.scores.len()
    }

    pub fn k(&self) -> usize {
        self.scores.first().map_or(0, |m| m.dim())
    }

    /// Embedding the scores were computed from.
    pub fn method(&self) -> EmbeddingMethod {
        self.method
    }

    /// `Z Mhat_l Z^T` for every layer.
    pub fn aligned(&self, z: &DMatrix<f64>) -> ScoreEstimate {
        ScoreEstimate {
            scores: self.scores.iter().map(|m| m.congruence(&z.transpose())).collect(),
            method: self.method,
        }
    }

    pub fn records(&self) -> Vec<LayerMatrixRecord> {
        self.scores
            .iter()
            .enumerate()
            .map(|(l, m)| LayerMatrixRecord::from_matrix(l, m.matrix()))
            .collect()
    }
}

pub fn estimate_scores<S: LayerStack>(layers: &S, emb: &EigenspaceEstimate) -> Result<ScoreEstimate> {
    if emb.n() != layers.n() {
        return Err(ScceError::DimensionMismatch(format!(
            "embedding has {} rows, network has {} nodes",
            emb.n(),
            layers.n()
        )));
    }
    let u = emb.basis();
    let scores = (0..layers.num_layers())
        .into_par_iter()
        .map(|l| SymKxK::symmetrized(u.transpose() * layers.layer_times(l, u)))
        .collect();
    Ok(ScoreEstimate {
        scores,
        method: emb.method(),
    })
}

/// Orthogonal `Z` minimizing `||U^T Uhat - Z||_F`.
#[derive(Debug, Clone)]
pub struct AlignmentResult {
    z: DMatrix<f64>,
    residual: f64,
}

impl AlignmentResult {
    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }
}

const ALIGNMENT_RANK_TOLERANCE: f64 = 1e-10;

/// Polar factor of `U^T Uhat`: with `U^T Uhat = W S V^T`, `Z = W V^T`.
pub fn procrustes_align(u: &DMatrix<f64>, uhat: &DMatrix<f64>) -> Result<AlignmentResult> {
    if u.nrows() != uhat.nrows() || u.ncols() != uhat.ncols() {
        return Err(ScceError::DimensionMismatch(format!(
            "U is {}x{}, Uhat is {}x{}",
            u.nrows(),
            u.ncols(),
            uhat.nrows(),
            uhat.ncols()
        )));
    }
    let cross = u.transpose() * uhat;
    let svd = cross.clone().svd(true, true);
    let smallest = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(smallest > ALIGNMENT_RANK_TOLERANCE) {
        return Err(ScceError::RankDeficientAlignment {
            smallest_singular_value: smallest,
        });
    }
    let (Some(w), Some(vt)) = (svd.u, svd.v_t) else {
        return Err(ScceError::Factorization("SVD did not return singular vectors".into()));
    };
    let z = w * vt;
    let residual = (cross - &z).norm();
    Ok(AlignmentResult { z, residual })
}

/// Covariance of `vec(U^T G U)` for a `d = K(K+1)/2` vectorization.
#[derive(Debug, Clone)]
pub struct CovarianceEstimate {
    sigma: DMatrix<f64>,
    layer: usize,
}

impl CovarianceEstimate {
    pub fn new(sigma: DMatrix<f64>, layer: usize) -> Result<Self> {
        if sigma.nrows() != sigma.ncols() {
            return Err(ScceError::DimensionMismatch("covariance must be square".into()));
        }
        Ok(CovarianceEstimate {
            sigma: SymKxK::symmetrized(sigma).into_inner(),
            layer,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn layer(&self) -> usize {
        self.layer
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn record(&self) -> LayerMatrixRecord {
        LayerMatrixRecord::from_matrix(self.layer, &self.sigma)
    }
}

/// Row-major copy, for cache-friendly row access.
fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

/// Evaluates
/// `Sigma[(s,t),(s',t')] = sum_{i<j} (U_is U_jt + U_js U_it)(U_is' U_jt' + U_js' U_it') w_ij`
/// where `w_ij` is the edge variance. Rows `i` are summed in order with
/// Kahan compensation; each row's `j` sum is a plain accumulation.
pub fn covariance_from_weights<W>(u: &DMatrix<f64>, weight: W) -> DMatrix<f64>
where
    W: Fn(usize, usize) -> f64 + Sync,
{
    let n = u.nrows();
    let k = u.ncols();
    let d = vec_dim(k);
    let pairs = ut_pairs(k);
    let tri = d * (d + 1) / 2;
    let rows = row_major(u);

    let row_sums: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let ui = &rows[i * k..(i + 1) * k];
            let mut acc = vec![0.0; tri];
            let mut x = vec![0.0; d];
            for j in (i + 1)..n {
                let w = weight(i, j);
                if w == 0.0 {
                    continue;
                }
                let uj = &rows[j * k..(j + 1) * k];
                for (a, &(s, t)) in pairs.iter().enumerate() {
                    x[a] = ui[s] * uj[t] + uj[s] * ui[t];
                }
                let mut idx = 0;
                for a in 0..d {
                    let wa = w * x[a];
                    for b in a..d {
                        acc[idx] += wa * x[b];
                        idx += 1;
                    }
                }
            }
            acc
        })
        .collect();

    let mut totals = vec![Compensated::default(); tri];
    for row in &row_sums {
        for (t, v) in totals.iter_mut().zip(row) {
            t.add(*v);
        }
    }
    let mut sigma = DMatrix::zeros(d, d);
    let mut idx = 0;
    for a in 0..d {
        for b in a..d {
            let v = totals[idx].value();
            sigma[(a, b)] = v;
            sigma[(b, a)] = v;
            idx += 1;
        }
    }
    sigma
}

/// Plug-in covariance for layer `l`: `U -> Uhat` and
/// `Q_l -> clip(Uhat Mhat_l Uhat^T, 0, 1)`, then PSD repair.
pub fn estimate_covariance(emb: &EigenspaceEstimate, scores: &ScoreEstimate, l: usize) -> Result<CovarianceEstimate> {
    let m = scores.scores.get(l).ok_or_else(|| {
        ScceError::InvalidArgument(format!("layer {l} outside 0..{}", scores.num_layers()))
    })?;
    if m.dim() != emb.k() {
        return Err(ScceError::DimensionMismatch(format!(
            "scores are {0}x{0}, embedding has rank {1}",
            m.dim(),
            emb.k()
        )));
    }
    let u = emb.basis();
    let k = emb.k();
    let v = row_major(&(u * m.matrix()));
    let rows = row_major(u);
    let sigma = covariance_from_weights(u, |i, j| {
        let vi = &v[i * k..(i + 1) * k];
        let uj = &rows[j * k..(j + 1) * k];
        let q = vi.iter().zip(uj).map(|(a, b)| a * b).sum::<f64>().clamp(0.0, 1.0);
        q * (1.0 - q)
    });
    CovarianceEstimate::new(psd_repair(sigma)?, l)
}

/// Plug-in covariances for all layers.
pub fn estimate_covariances(emb: &EigenspaceEstimate, scores: &ScoreEstimate) -> Result<Vec<CovarianceEstimate>> {
    (0..scores.num_layers())
        .map(|l| estimate_covariance(emb, scores, l))
        .collect()
}

/// Exact covariance from the true `U` and `Q_l`.
pub fn population_covariance(pop: &PopulationDecomposition, l: usize) -> Result<CovarianceEstimate> {
    let spec = pop.spec();
    if l >= spec.num_layers() {
        return Err(ScceError::InvalidArgument(format!(
            "layer {l} outside 0..{}",
            spec.num_layers()
        )));
    }
    let sigma = covariance_from_weights(pop.u(), |i, j| {
        let q = spec.edge_probability(l, i, j);
        q * (1.0 - q)
    });
    CovarianceEstimate::new(sigma, l)
}

/// `Sigma^{-1/2} v`. Requires a positive definite covariance.
pub fn whiten(cov: &CovarianceEstimate, v: &DVector<f64>) -> Result<DVector<f64>> {
    if v.len() != cov.dim() {
        return Err(ScceError::DimensionMismatch(format!(
            "vector of length {} for a {1}x{1} covariance",
            v.len(),
            cov.dim()
        )));
    }
    Ok(inverse_sqrt(cov.matrix())? * v)
}

/// `U^T G_l U` with `G_l = A_l - P_l`, computed from the binary layer.
pub fn projected_noise(pop: &PopulationDecomposition, net: &MultiLayerNetwork, l: usize) -> SymKxK {
    let u = pop.u();
    let uau = u.transpose() * net.layer_times(l, u);
    // U^T P_l U = M_l - U^T diag(Q_l) U
    let upu = pop.score(l).matrix() - pop.projected_diagonal(l);
    SymKxK::symmetrized(uau - upu)
}

/// Bias residuals `E_l = Mhat_l - Z^T M_l Z - Z^T U^T G_l U Z`.
#[derive(Debug, Clone, Serialize)]
pub struct BiasEstimate {
    #[serde(skip)]
    pub residuals: Vec<SymKxK>,
    pub frobenius: Vec<f64>,
    /// `sum_l ||E_l||_F / L`.
    pub mean_frobenius: f64,
}

fn bias_from_projected_noise(
    scores: &ScoreEstimate,
    pop: &PopulationDecomposition,
    alignment: &AlignmentResult,
    noise: impl Fn(usize) -> Result<DMatrix<f64>>,
) -> Result<BiasEstimate> {
    if scores.num_layers() != pop.scores().len() || scores.k() != pop.spec().k() {
        return Err(ScceError::DimensionMismatch(format!(
            "{} estimated layers of rank {} vs {} population layers of rank {}",
            scores.num_layers(),
            scores.k(),
            pop.scores().len(),
            pop.spec().k()
        )));
    }
    let z = alignment.z();
    let mut residuals = Vec::with_capacity(scores.num_layers());
    for l in 0..scores.num_layers() {
        let ugu = noise(l)?;
        let e = scores.score(l).matrix() - z.transpose() * pop.score(l).matrix() * z - z.transpose() * ugu * z;
        residuals.push(SymKxK::symmetrized(e));
    }
    let frobenius: Vec<f64> = residuals.iter().map(|e| e.frobenius_norm()).collect();
    let mean_frobenius = frobenius.iter().sum::<f64>() / frobenius.len() as f64;
    Ok(BiasEstimate {
        residuals,
        frobenius,
        mean_frobenius,
    })
}

/// Bias residual for a sampled binary network (noise `G_l = A_l - P_l`).
pub fn extract_bias(
    scores: &ScoreEstimate,
    pop: &PopulationDecomposition,
    alignment: &AlignmentResult,
    net: &MultiLayerNetwork,
) -> Result<BiasEstimate> {
    if net.n() != pop.spec().n() {
        return Err(ScceError::DimensionMismatch("network and population sizes differ".into()));
    }
    bias_from_projected_noise(scores, pop, alignment, |l| Ok(projected_noise(pop, net, l).into_inner()))
}

/// Bias residual with explicit dense noise matrices `G_l`.
pub fn extract_bias_with_noise(
    scores: &ScoreEstimate,
    pop: &PopulationDecomposition,
    alignment: &AlignmentResult,
    noise: &[DMatrix<f64>],
) -> Result<BiasEstimate> {
    if noise.len() != scores.num_layers() {
        return Err(ScceError::DimensionMismatch(format!(
            "{} noise matrices for {} layers",
            noise.len(),
            scores.num_layers()
        )));
    }
    let u = pop.u();
    bias_from_projected_noise(scores, pop, alignment, |l| {
        if noise[l].nrows() != u.nrows() || noise[l].ncols() != u.nrows() {
            return Err(ScceError::DimensionMismatch(format!("noise matrix {l} has the wrong shape")));
        }
        Ok(u.transpose() * &noise[l] * u)
    })
}

/// Simulation setting for evaluating the bound shapes.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundSetting {
    pub n: usize,
    pub layers: usize,
    pub rho: f64,
    /// `||psi||_2`; `None` for the plain SBM (`psi = 1`, norm `sqrt(n)`).
    pub psi_norm: Option<f64>,
}

/// Structural terms of the error bounds with all constants set to one.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundTerms {
    /// `1/n + sqrt(log(L+n)) / sqrt(L rho n)`.
    pub eigenspace_sbm: f64,
    /// `n/||psi||^4 + n^{3/2} sqrt(log(L+n)) / (sqrt(L rho) ||psi||^4)`.
    pub eigenspace_dcsbm: f64,
    /// `rho + sqrt(log(L+n) / L)`.
    pub bias_sbm: f64,
    /// `n^2 sqrt(log(L+n)) / (sqrt(L) ||psi||^4) + max(n^{3/2} sqrt(rho) / ||psi||^4, rho)`.
    pub bias_dcsbm: f64,
}

pub fn bound_terms(setting: &BoundSetting) -> BoundTerms {
    let n = setting.n as f64;
    let l = setting.layers as f64;
    let rho = setting.rho;
    let log = (l + n).ln();
    let psi_norm = setting.psi_norm.unwrap_or(n.sqrt());
    let psi4 = psi_norm.powi(4);
    BoundTerms {
        eigenspace_sbm: 1.0 / n + log.sqrt() / (l * rho * n).sqrt(),
        eigenspace_dcsbm: n / psi4 + n.powf(1.5) * log.sqrt() / ((l * rho).sqrt() * psi4),
        bias_sbm: rho + (log / l).sqrt(),
        bias_dcsbm: n * n * log.sqrt() / (l.sqrt() * psi4) + (n.powf(1.5) * rho.sqrt() / psi4).max(rho),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundRow {
    pub setting: BoundSetting,
    pub measured_bias: f64,
    pub terms: BoundTerms,
    /// measured bias over the applicable bias term
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub rows: Vec<BoundRow>,
    /// `max ratio / min ratio` over the rows.
    pub ratio_spread: f64,
}

/// Tabulates measured `||E_l||_F` against the bias-bound shape. Constants
/// are unknown, so only ratios are reported.
pub fn theorem_bound_report(measurements: &[(BoundSetting, f64)]) -> BoundReport {
    let rows: Vec<BoundRow> = measurements
        .iter()
        .map(|&(setting, measured_bias)| {
            let terms = bound_terms(&setting);
            let scale = if setting.psi_norm.is_some() {
                terms.bias_dcsbm
            } else {
                terms.bias_sbm
            };
            BoundRow {
                setting,
                measured_bias,
                terms,
                ratio: measured_bias / scale,
            }
        })
        .collect();
    let max = rows.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max);
    let min = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    BoundReport {
        ratio_spread: if rows.is_empty() { f64::NAN } else { max / min },
        rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::leading_eigenspace;
    use crate::generator::{connectivity_from_spectrum, population_decomposition, two_regime_spec};
    use crate::model::{BinaryLayer, DenseLayers};

    fn rotation(theta: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()])
    }

    fn small_basis() -> DMatrix<f64> {
        let raw = DMatrix::from_fn(8, 2, |i, j| ((i * 7 + j * 3) % 5) as f64 - 1.5 + 0.1 * i as f64);
        raw.qr().q()
    }

    #[test]
    fn zero_layer_gives_zero_scores() {
        let net = MultiLayerNetwork::from_layers(8, vec![BinaryLayer::empty(8)]).unwrap();
        let emb = EigenspaceEstimate::from_basis(small_basis(), vec![1.0, 1.0], EmbeddingMethod::Aggregate).unwrap();
        let s = estimate_scores(&net, &emb).unwrap();
        assert_eq!(s.score(0).matrix(), &DMatrix::zeros(2, 2));
        let wrong = MultiLayerNetwork::from_layers(9, vec![BinaryLayer::empty(9)]).unwrap();
        assert!(estimate_scores(&wrong, &emb).is_err());
    }

    #[test]
    fn procrustes_identity_and_rotation() {
        let u = small_basis();
        let a = procrustes_align(&u, &u).unwrap();
        assert!((a.z() - DMatrix::identity(2, 2)).amax() < 1e-12);
        assert!(a.residual() < 1e-12);
        let r = rotation(0.7);
        let a = procrustes_align(&u, &(&u * &r)).unwrap();
        assert!((a.z() - &r).amax() < 1e-12);
        assert!(a.residual() < 1e-12);
        assert!((a.z().transpose() * a.z() - DMatrix::identity(2, 2)).amax() < 1e-10);
    }

    #[test]
    fn procrustes_rejects_orthogonal_subspaces() {
        let mut u = DMatrix::zeros(4, 1);
        u[(0, 0)] = 1.0;
        let mut v = DMatrix::zeros(4, 1);
        v[(1, 0)] = 1.0;
        assert!(matches!(procrustes_align(&u, &v), Err(ScceError::RankDeficientAlignment { .. })));
    }

    #[test]
    fn covariance_vanishes_for_degenerate_probabilities() {
        let u = small_basis();
        assert_eq!(covariance_from_weights(&u, |_, _| 0.0), DMatrix::zeros(3, 3));
        for fill in [0.0, 1.0] {
            let spec_b = SymKxK::from_row_slice(1, &[fill]).unwrap();
            let spec = crate::generator::BlockModelSpec::new(1, vec![0; 6], vec![spec_b], 1.0, None).unwrap();
            let pop = population_decomposition(&spec).unwrap();
            assert_eq!(population_covariance(&pop, 0).unwrap().matrix(), &DMatrix::zeros(1, 1));
        }
    }

    #[test]
    fn noiseless_pipeline_recovers_scores() {
        let b1 = connectivity_from_spectrum([1.5, 0.2, 0.5]);
        let b2 = connectivity_from_spectrum([1.5, 0.2, -0.5]);
        let spec = two_regime_spec(30, &[0.4, 0.3, 0.3], 4, 0.3, &b1, &b2, None).unwrap();
        let pop = population_decomposition(&spec).unwrap();
        let dense = DenseLayers::new((0..4).map(|l| pop.population_matrix(l)).collect()).unwrap();
        let emb = leading_eigenspace(&dense.aggregate_squares(), 3).unwrap();
        let scores = estimate_scores(&dense, &emb).unwrap();
        let align = procrustes_align(pop.u(), emb.basis()).unwrap();
        let aligned = scores.aligned(align.z());
        for l in 0..4 {
            assert!((aligned.score(l).matrix() - pop.score(l).matrix()).amax() < 1e-8);
        }

        // Uhat = U Z, so a noise G_l gives E_l = -Uhat^T G_l Uhat
        let noise: Vec<DMatrix<f64>> = (0..4)
            .map(|l| DMatrix::from_diagonal(&pop.population_matrix(l).diagonal()))
            .collect();
        let bias = extract_bias_with_noise(&scores, &pop, &align, &noise).unwrap();
        for l in 0..4 {
            let expected = -(emb.basis().transpose() * &noise[l] * emb.basis());
            assert!((bias.residuals[l].matrix() - &expected).amax() < 1e-8);
        }
        let zero: Vec<DMatrix<f64>> = (0..4).map(|_| DMatrix::zeros(30, 30)).collect();
        let bias = extract_bias_with_noise(&scores, &pop, &align, &zero).unwrap();
        assert!(bias.frobenius.iter().all(|&f| f < 1e-8));
    }

    #[test]
    fn bound_terms_evaluate_closed_forms() {
        let t = bound_terms(&BoundSetting {
            n: 300,
            layers: 50,
            rho: 0.2,
            psi_norm: Some(10.4),
        });
        let log = 350f64.ln();
        let psi4 = 10.4f64.powi(4);
        let expected = 300f64.powi(2) * log.sqrt() / (50f64.sqrt() * psi4)
            + (300f64.powf(1.5) * 0.2f64.sqrt() / psi4).max(0.2);
        assert!((t.bias_dcsbm - expected).abs() < 1e-9 * expected);
        let sbm = bound_terms(&BoundSetting {
            n: 300,
            layers: 50,
            rho: 0.2,
            psi_norm: None,
        });
        assert!((sbm.bias_sbm - (0.2 + (log / 50.0).sqrt())).abs() < 1e-12);
        // psi = 1 turns the leading DCSBM term into sqrt(log(L+n)/L)
        let unit = bound_terms(&BoundSetting {
            n: 300,
            layers: 50,
            rho: 0.2,
            psi_norm: Some(300f64.sqrt()),
        });
        let lead = unit.bias_dcsbm - (300f64.powf(1.5) * 0.2f64.sqrt() / 300f64.powi(2)).max(0.2);
        assert!((lead - (log / 50.0).sqrt()).abs() < 1e-9);
    }
}
