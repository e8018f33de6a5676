//! Confidence intervals, pairwise homogeneity tests and the Holm step-down
//! procedure.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::embedding::{Embedder, EigenspaceEstimate, EmbeddingMethod};
use crate::error::{Result, ScceError};
use crate::estimator::{estimate_covariance, estimate_scores, procrustes_align, CovarianceEstimate, ScoreEstimate};
use crate::generator::{population_decomposition, sample_network, BlockModelSpec, PopulationDecomposition};
use crate::linalg::{psd_repair, psd_sqrt};
use crate::model::{frobenius_of_vectorized, vec_dim, vec_index, LayerStack};
use crate::rng;

/// Diagonal jitter added before taking the square root used for sampling.
pub const SAMPLING_JITTER: f64 = 1e-12;

/// Default number of Monte Carlo null draws per pair test.
pub const DEFAULT_NULL_SAMPLES: usize = 2000;

/// `z_{1-p}`-style standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// `center +- half_width` for `M_{l,st}` (1-based `s <= t`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntervalEstimate {
    pub layer: usize,
    pub s: usize,
    pub t: usize,
    pub center: f64,
    pub half_width: f64,
    pub alpha: f64,
}

impl IntervalEstimate {
    pub fn lower(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.center + self.half_width
    }

    pub fn covers(&self, value: f64) -> bool {
        (value - self.center).abs() <= self.half_width
    }
}

/// Level `1 - alpha` interval for entry `(s, t)` of layer `l`, in the basis
/// the scores were estimated in.
pub fn confidence_interval(
    scores: &ScoreEstimate,
    cov: &CovarianceEstimate,
    l: usize,
    s: usize,
    t: usize,
    alpha: f64,
) -> Result<IntervalEstimate> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ScceError::InvalidArgument(format!("alpha = {alpha} must lie in (0, 1)")));
    }
    if l >= scores.num_layers() {
        return Err(ScceError::InvalidArgument(format!(
            "layer {l} outside 0..{}",
            scores.num_layers()
        )));
    }
    if cov.layer() != l {
        return Err(ScceError::InvalidArgument(format!(
            "covariance belongs to layer {}, not {l}",
            cov.layer()
        )));
    }
    let k = scores.k();
    let d = vec_index(s, t, k)? - 1;
    if cov.dim() != vec_dim(k) {
        return Err(ScceError::DimensionMismatch(format!(
            "covariance is {0}x{0}, expected {1}",
            cov.dim(),
            vec_dim(k)
        )));
    }
    let variance = cov.matrix()[(d, d)].max(0.0);
    Ok(IntervalEstimate {
        layer: l,
        s,
        t,
        center: scores.score(l).get(s - 1, t - 1),
        half_width: normal_quantile(1.0 - alpha / 2.0) * variance.sqrt(),
        alpha,
    })
}

/// Covered and total `(l, s <= t)` events.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CoverageCount {
    pub covered: usize,
    pub events: usize,
}

impl CoverageCount {
    pub fn rate(&self) -> f64 {
        self.covered as f64 / self.events as f64
    }
}

/// Intervals for every `(l, s <= t)` of one network, evaluated against the
/// population. The embedding is first rotated onto the true basis
/// (`Uhat Z^T`), so centers are `Z Mhat_l Z^T` and the covariance is built
/// from the aligned basis; `Qhat` is unaffected by the rotation.
pub fn evaluate_coverage<S: LayerStack>(
    pop: &PopulationDecomposition,
    layers: &S,
    emb: &EigenspaceEstimate,
    alpha: f64,
) -> Result<CoverageCount> {
    let align = procrustes_align(pop.u(), emb.basis())?;
    let aligned = emb.rotated(align.z());
    let scores = estimate_scores(layers, &aligned)?;
    let k = scores.k();
    let per_layer: Vec<CoverageCount> = (0..scores.num_layers())
        .into_par_iter()
        .map(|l| {
            let cov = estimate_covariance(&aligned, &scores, l)?;
            let mut count = CoverageCount::default();
            for t in 1..=k {
                for s in 1..=t {
                    let ci = confidence_interval(&scores, &cov, l, s, t, alpha)?;
                    count.events += 1;
                    if ci.covers(pop.score(l).get(s - 1, t - 1)) {
                        count.covered += 1;
                    }
                }
            }
            Ok(count)
        })
        .collect::<Result<_>>()?;
    Ok(per_layer.iter().fold(CoverageCount::default(), |acc, c| CoverageCount {
        covered: acc.covered + c.covered,
        events: acc.events + c.events,
    }))
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverageReport {
    pub method: EmbeddingMethod,
    pub alpha: f64,
    pub reps: usize,
    /// Pooled over replications, layers and entries.
    pub coverage: f64,
    pub per_rep: Vec<f64>,
}

/// Average interval coverage over `reps` sampled networks. Replication `r`
/// samples with seed `derive_seed(seed, [r])`.
pub fn coverage_experiment(
    spec: &BlockModelSpec,
    reps: usize,
    alpha: f64,
    seed: u64,
    embedder: Embedder,
) -> Result<CoverageReport> {
    if reps == 0 {
        return Err(ScceError::InvalidArgument("reps must be at least 1".into()));
    }
    let pop = population_decomposition(spec)?;
    let counts: Vec<CoverageCount> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let net = sample_network(spec, rng::derive_seed(seed, &[r as u64]))?;
            let emb = embedder.embed(&net, spec.k())?;
            evaluate_coverage(&pop, &net, &emb, alpha)
        })
        .collect::<Result<_>>()?;
    let covered: usize = counts.iter().map(|c| c.covered).sum();
    let events: usize = counts.iter().map(|c| c.events).sum();
    Ok(CoverageReport {
        method: embedder.method,
        alpha,
        reps,
        coverage: covered as f64 / events as f64,
        per_rep: counts.iter().map(CoverageCount::rate).collect(),
    })
}

/// Outcome of testing `H_0: M_k = M_l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairTestResult {
    pub k: usize,
    pub l: usize,
    pub statistic: f64,
    pub p_value: f64,
    pub null_samples: usize,
}

/// `T_kl = ||Mhat_k - Mhat_l||_F` against `B` draws of `||v||_F`,
/// `v ~ N(0, Sigma_k + Sigma_l)`. The stream is keyed by the unordered pair,
/// so `(k, l)` and `(l, k)` give identical results.
pub fn pair_test(
    scores: &ScoreEstimate,
    covs: &[CovarianceEstimate],
    k: usize,
    l: usize,
    null_samples: usize,
    seed: u64,
) -> Result<PairTestResult> {
    if k == l {
        return Err(ScceError::InvalidArgument("pair test needs two distinct layers".into()));
    }
    if null_samples < 99 {
        return Err(ScceError::InvalidArgument(format!(
            "at least 99 null samples required, got {null_samples}"
        )));
    }
    let layers = scores.num_layers();
    if k >= layers || l >= layers || covs.len() != layers {
        return Err(ScceError::InvalidArgument(format!(
            "pair ({k}, {l}) with {layers} score layers and {} covariances",
            covs.len()
        )));
    }
    let statistic = (scores.score(k).matrix() - scores.score(l).matrix()).norm();
    let dim = scores.k();
    let sum = covs[k].matrix() + covs[l].matrix();
    let root = psd_sqrt(&psd_repair(sum)?, SAMPLING_JITTER)?;
    let (lo, hi) = (k.min(l), k.max(l));
    let mut stream = rng::keyed(seed, &[lo as u64, hi as u64]);
    let d = root.nrows();
    let mut z = DVector::zeros(d);
    let mut exceed = 0usize;
    for _ in 0..null_samples {
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(&mut stream);
        }
        let v = &root * &z;
        if frobenius_of_vectorized(dim, v.as_slice()) >= statistic {
            exceed += 1;
        }
    }
    Ok(PairTestResult {
        k,
        l,
        statistic,
        p_value: (1 + exceed) as f64 / (null_samples + 1) as f64,
        null_samples,
    })
}

/// Every pair `k < l`, in lexicographic order.
pub fn all_pair_tests(
    scores: &ScoreEstimate,
    covs: &[CovarianceEstimate],
    null_samples: usize,
    seed: u64,
) -> Result<Vec<PairTestResult>> {
    let layers = scores.num_layers();
    let pairs: Vec<(usize, usize)> = (0..layers)
        .flat_map(|k| ((k + 1)..layers).map(move |l| (k, l)))
        .collect();
    pairs
        .into_par_iter()
        .map(|(k, l)| pair_test(scores, covs, k, l, null_samples, seed))
        .collect()
}

/// Empirical null of `T_kl` from networks regenerated under the population.
#[derive(Debug, Clone, Serialize)]
pub struct OracleNull {
    pub k: usize,
    pub l: usize,
    /// Sorted ascending.
    pub statistics: Vec<f64>,
}

impl OracleNull {
    /// `(1 + #{T_null >= t}) / (R + 1)`.
    pub fn p_value(&self, t: f64) -> f64 {
        let below = self.statistics.partition_point(|&x| x < t);
        (1 + self.statistics.len() - below) as f64 / (self.statistics.len() + 1) as f64
    }
}

/// Samples `reps` networks from `spec` (which should satisfy `M_k = M_l`) and
/// records `||Mhat_k - Mhat_l||_F` for each.
pub fn oracle_null(
    spec: &BlockModelSpec,
    k: usize,
    l: usize,
    reps: usize,
    seed: u64,
    embedder: Embedder,
) -> Result<OracleNull> {
    if k == l || k >= spec.num_layers() || l >= spec.num_layers() {
        return Err(ScceError::InvalidArgument(format!(
            "invalid layer pair ({k}, {l}) for {} layers",
            spec.num_layers()
        )));
    }
    let mut statistics: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let net = sample_network(spec, rng::derive_seed(seed, &[0x0AC1E, r as u64]))?;
            let emb = embedder.embed(&net, spec.k())?;
            let scores = estimate_scores(&net, &emb)?;
            Ok((scores.score(k).matrix() - scores.score(l).matrix()).norm())
        })
        .collect::<Result<_>>()?;
    statistics.sort_by(f64::total_cmp);
    Ok(OracleNull { k, l, statistics })
}

#[derive(Debug, Clone, Serialize)]
pub struct PowerPoint {
    pub delta: f64,
    pub power: f64,
    /// Rejection rate using the oracle null, when one was supplied.
    pub oracle_power: Option<f64>,
    /// Fraction of replications where both procedures agree.
    pub agreement: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct PowerSettings {
    pub k: usize,
    pub l: usize,
    pub reps: usize,
    pub alpha: f64,
    pub null_samples: usize,
    pub seed: u64,
    pub embedder: Embedder,
}

/// Rejection rate of `H_0: M_k = M_l` for each `delta`. Replication `r` uses
/// the same sampling seed at every delta, so curves share common random
/// numbers.
pub fn power_curve<F>(
    family: F,
    deltas: &[f64],
    settings: &PowerSettings,
    oracle: Option<&OracleNull>,
) -> Result<Vec<PowerPoint>>
where
    F: Fn(f64) -> Result<BlockModelSpec> + Sync,
{
    if deltas.windows(2).any(|w| w[1] < w[0]) {
        return Err(ScceError::InvalidArgument("deltas must be ascending".into()));
    }
    let s = settings;
    deltas
        .iter()
        .map(|&delta| {
            let spec = family(delta)?;
            let outcomes: Vec<(bool, Option<bool>)> = (0..s.reps)
                .into_par_iter()
                .map(|r| {
                    let net = sample_network(&spec, rng::derive_seed(s.seed, &[r as u64]))?;
                    let emb = s.embedder.embed(&net, spec.k())?;
                    let scores = estimate_scores(&net, &emb)?;
                    let mut covs: Vec<CovarianceEstimate> = Vec::with_capacity(spec.num_layers());
                    for l in 0..spec.num_layers() {
                        covs.push(if l == s.k || l == s.l {
                            estimate_covariance(&emb, &scores, l)?
                        } else {
                            CovarianceEstimate::new(DMatrix::zeros(vec_dim(spec.k()), vec_dim(spec.k())), l)?
                        });
                    }
                    let test = pair_test(
                        &scores,
                        &covs,
                        s.k,
                        s.l,
                        s.null_samples,
                        rng::derive_seed(s.seed, &[0x7E57, r as u64]),
                    )?;
                    let oracle_reject = oracle.map(|o| o.p_value(test.statistic) <= s.alpha);
                    Ok((test.p_value <= s.alpha, oracle_reject))
                })
                .collect::<Result<_>>()?;
            let reps = outcomes.len() as f64;
            let power = outcomes.iter().filter(|o| o.0).count() as f64 / reps;
            let (oracle_power, agreement) = match oracle {
                Some(_) => (
                    Some(outcomes.iter().filter(|o| o.1 == Some(true)).count() as f64 / reps),
                    Some(outcomes.iter().filter(|o| o.1 == Some(o.0)).count() as f64 / reps),
                ),
                None => (None, None),
            };
            Ok(PowerPoint {
                delta,
                power,
                oracle_power,
                agreement,
            })
        })
        .collect()
}

/// One step of the Holm audit trail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HolmStep {
    pub k: usize,
    pub l: usize,
    pub p_value: f64,
    pub threshold: f64,
    pub rejected: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct HolmOutcome {
    /// `decisions[k][l]` is true when `H_kl` is rejected; symmetric, diagonal false.
    pub decisions: Vec<Vec<bool>>,
    pub steps: Vec<HolmStep>,
    pub alpha: f64,
}

impl HolmOutcome {
    pub fn rejections(&self) -> usize {
        self.steps.iter().filter(|s| s.rejected).count()
    }
}

/// Holm step-down over all `C(L, 2)` pairs. Step `i` (1-based) rejects iff
/// `p_(i) <= alpha / (m - i + 1)` and every earlier step rejected. Equal
/// p-values keep pair order `(k, l)`.
pub fn holm_procedure(num_layers: usize, p_values: &[(usize, usize, f64)], alpha: f64) -> Result<HolmOutcome> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ScceError::InvalidArgument(format!("alpha = {alpha} must lie in (0, 1)")));
    }
    let m = num_layers * num_layers.saturating_sub(1) / 2;
    if p_values.len() != m {
        return Err(ScceError::InvalidArgument(format!(
            "{} p-values supplied, {m} pairs expected",
            p_values.len()
        )));
    }
    let mut seen = vec![false; num_layers * num_layers];
    let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(m);
    for &(a, b, p) in p_values {
        let (k, l) = (a.min(b), a.max(b));
        if k == l || l >= num_layers {
            return Err(ScceError::InvalidArgument(format!("invalid pair ({a}, {b})")));
        }
        if seen[k * num_layers + l] {
            return Err(ScceError::InvalidArgument(format!("pair ({k}, {l}) listed twice")));
        }
        seen[k * num_layers + l] = true;
        if !(p > 0.0 && p <= 1.0) {
            return Err(ScceError::InvalidArgument(format!("p-value {p} for ({k}, {l}) outside (0, 1]")));
        }
        entries.push((k, l, p));
    }
    entries.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
    entries.sort_by(|x, y| x.2.total_cmp(&y.2));

    let mut decisions = vec![vec![false; num_layers]; num_layers];
    let mut steps = Vec::with_capacity(m);
    let mut still_rejecting = true;
    for (i, &(k, l, p)) in entries.iter().enumerate() {
        let threshold = alpha / (m - i) as f64;
        let rejected = still_rejecting && p <= threshold;
        still_rejecting = rejected;
        if rejected {
            decisions[k][l] = true;
            decisions[l][k] = true;
        }
        steps.push(HolmStep {
            k,
            l,
            p_value: p,
            threshold,
            rejected,
        });
    }
    Ok(HolmOutcome {
        decisions,
        steps,
        alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SymKxK;

    fn scores(ms: Vec<SymKxK>) -> ScoreEstimate {
        ScoreEstimate::new(ms, EmbeddingMethod::Aggregate)
    }

    fn zero_covs(layers: usize, k: usize) -> Vec<CovarianceEstimate> {
        (0..layers)
            .map(|l| CovarianceEstimate::new(DMatrix::zeros(vec_dim(k), vec_dim(k)), l).unwrap())
            .collect()
    }

    #[test]
    fn interval_width_and_errors() {
        let s = scores(vec![SymKxK::from_row_slice(2, &[1.0, 2.0, 2.0, 3.0]).unwrap()]);
        let cov = CovarianceEstimate::new(DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0, 0.0])), 0).unwrap();
        let ci = confidence_interval(&s, &cov, 0, 1, 1, 0.05).unwrap();
        assert!((ci.half_width - 1.959_963_984_540_054 * 2.0).abs() < 1e-9);
        assert_eq!(ci.center, 1.0);
        let degenerate = confidence_interval(&s, &cov, 0, 2, 2, 0.05).unwrap();
        assert_eq!(degenerate.half_width, 0.0);
        assert!(degenerate.covers(3.0));
        let wide_alpha = confidence_interval(&s, &cov, 0, 1, 2, 1.0 - 1e-12).unwrap();
        assert!(wide_alpha.half_width < 1e-10);
        assert!(confidence_interval(&s, &cov, 0, 1, 1, 0.0).is_err());
        assert!(confidence_interval(&s, &cov, 0, 1, 1, 1.0).is_err());
        assert!(confidence_interval(&s, &cov, 0, 2, 1, 0.05).is_err());
    }

    #[test]
    fn pair_test_edge_cases() {
        let m = SymKxK::from_row_slice(2, &[1.0, 0.5, 0.5, 2.0]).unwrap();
        let s = scores(vec![m.clone(), m.clone(), SymKxK::zeros(2)]);
        let covs = zero_covs(3, 2);
        let same = pair_test(&s, &covs, 0, 1, 199, 1).unwrap();
        assert_eq!(same.statistic, 0.0);
        assert_eq!(same.p_value, 1.0);
        let diff = pair_test(&s, &covs, 0, 2, 199, 1).unwrap();
        assert_eq!(diff.p_value, 1.0 / 200.0);
        assert!(pair_test(&s, &covs, 1, 1, 199, 1).is_err());
        assert!(pair_test(&s, &covs, 0, 1, 98, 1).is_err());
    }

    #[test]
    fn holm_hand_example() {
        let out = holm_procedure(3, &[(0, 1, 0.001), (0, 2, 0.02), (1, 2, 0.9)], 0.05).unwrap();
        let rejected: Vec<bool> = out.steps.iter().map(|s| s.rejected).collect();
        assert_eq!(rejected, vec![true, true, false]);
        assert!(out.decisions[1][0] && out.decisions[2][0] && !out.decisions[2][1]);
        assert!((out.steps[1].threshold - 0.025).abs() < 1e-15);
    }

    #[test]
    fn holm_stops_at_first_acceptance() {
        // the third p-value would pass its own threshold but comes after an acceptance
        let out = holm_procedure(3, &[(0, 1, 0.01), (0, 2, 0.04), (1, 2, 0.045)], 0.05).unwrap();
        assert_eq!(out.rejections(), 1);
        let none = holm_procedure(3, &[(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)], 0.05).unwrap();
        assert_eq!(none.rejections(), 0);
        assert!(holm_procedure(3, &[(0, 1, 0.1), (0, 1, 0.2), (1, 2, 0.3)], 0.05).is_err());
        assert!(holm_procedure(3, &[(0, 1, 0.0), (0, 2, 0.2), (1, 2, 0.3)], 0.05).is_err());
    }

    #[test]
    fn holm_ties_follow_pair_order() {
        let out = holm_procedure(3, &[(1, 2, 0.01), (0, 2, 0.01), (0, 1, 0.01)], 0.05).unwrap();
        let order: Vec<(usize, usize)> = out.steps.iter().map(|s| (s.k, s.l)).collect();
        assert_eq!(order, vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn oracle_p_value_counts_ties() {
        let o = OracleNull {
            k: 0,
            l: 1,
            statistics: vec![1.0, 2.0, 2.0, 3.0],
        };
        assert_eq!(o.p_value(2.0), 4.0 / 5.0);
        assert_eq!(o.p_value(10.0), 1.0 / 5.0);
        assert_eq!(o.p_value(0.0), 1.0);
    }
}
