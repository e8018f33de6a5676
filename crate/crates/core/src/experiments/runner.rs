//! Executes an [`ExperimentConfig`] and writes its tables and plots.
//!
//! Every grid cell draws from a seed derived from `(seed, n, L, rho)`, so a
//! cell's numbers do not depend on which other cells are in the grid.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::config::{Connectivity, ExperimentConfig, ExperimentKind, ModelKind};
use super::ingest::{ingest_edge_list, IngestOptions, IngestedNetwork};
use super::output::{ensure_dir, write_csv, write_json, write_matrix_csv, write_text};
use super::scree::scree_values;
use super::svg::{heatmap, line_plot, Series};
use crate::embedding::{Embedder, EmbeddingMethod};
use crate::error::Result;
use crate::estimator::{
    bound_terms, estimate_covariances, estimate_scores, extract_bias, procrustes_align, theorem_bound_report,
    BoundSetting,
};
use crate::generator::{
    connectivity_from_spectrum, pair_perturbation_spec, population_decomposition, sample_network, sample_psi,
    two_regime_spec, BlockModelSpec,
};
use crate::inference::{
    all_pair_tests, confidence_interval, coverage_experiment, holm_procedure, oracle_null, power_curve, HolmOutcome,
    PairTestResult, PowerSettings,
};
use crate::model::MultiLayerNetwork;
use crate::rng::derive_seed;

/// Files written by a run, in write order.
#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub files: Vec<PathBuf>,
}

impl RunOutput {
    fn push(&mut self, path: PathBuf) {
        self.files.push(path);
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    ensure_dir(&cfg.out)?;
    let mut out = RunOutput::default();
    out.push(write_text(&cfg.out.join("config.toml"), &cfg.to_toml())?);
    match cfg.kind {
        ExperimentKind::Bias => run_bias(cfg, &mut out)?,
        ExperimentKind::Coverage => run_coverage(cfg, &mut out)?,
        ExperimentKind::Power => run_power(cfg, &mut out)?,
        ExperimentKind::Holm => run_holm(cfg, &mut out)?,
        ExperimentKind::RealData => run_real_data(cfg, &mut out)?,
        ExperimentKind::Scree => run_scree(cfg, &mut out)?,
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    n_index: usize,
    n: usize,
    layers: usize,
    rho: f64,
}

fn cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let mut v = Vec::new();
    for (n_index, &n) in cfg.grid.n.iter().enumerate() {
        for &layers in &cfg.grid.layers {
            for &rho in &cfg.grid.rho {
                v.push(Cell {
                    n_index,
                    n,
                    layers,
                    rho,
                });
            }
        }
    }
    v
}

fn cell_seed(cfg: &ExperimentConfig, c: &Cell) -> u64 {
    derive_seed(cfg.seed, &[c.n as u64, c.layers as u64, c.rho.to_bits()])
}

fn beta(cfg: &ExperimentConfig, c: &Cell) -> Option<f64> {
    match cfg.model {
        ModelKind::Sbm => None,
        ModelKind::Dcsbm => Some(cfg.grid.beta[c.n_index]),
    }
}

/// Degree parameters are drawn once per `n` so every cell sharing `n` sees
/// the same `psi`.
fn psi(cfg: &ExperimentConfig, c: &Cell) -> Result<Option<Vec<f64>>> {
    beta(cfg, c)
        .map(|b| sample_psi(c.n, b, derive_seed(cfg.seed, &[c.n as u64, 0xB7A])))
        .transpose()
}

fn regimes(scales: &Connectivity) -> (crate::model::SymKxK, crate::model::SymKxK) {
    (connectivity_from_spectrum(scales.first), connectivity_from_spectrum(scales.second))
}

fn regime_spec(cfg: &ExperimentConfig, c: &Cell) -> Result<BlockModelSpec> {
    let (first, second) = regimes(&cfg.scales());
    two_regime_spec(c.n, &cfg.grid.proportions, c.layers, c.rho, &first, &second, psi(cfg, c)?)
}

fn embedders(cfg: &ExperimentConfig) -> Vec<Embedder> {
    let mut v = vec![Embedder {
        method: EmbeddingMethod::Aggregate,
        order: cfg.eigen_order,
    }];
    if cfg.mase {
        v.push(Embedder::MASE);
    }
    v
}

fn file(cfg: &ExperimentConfig, name: &str) -> PathBuf {
    cfg.out.join(name)
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

#[derive(Serialize)]
struct BiasRaw {
    model: &'static str,
    n: usize,
    #[serde(rename = "L")]
    layers: usize,
    rho: f64,
    beta: Option<f64>,
    rep: usize,
    mean_bias_frobenius: f64,
}

#[derive(Serialize)]
struct BiasSummary {
    kind: &'static str,
    model: &'static str,
    n: usize,
    #[serde(rename = "L")]
    layers: usize,
    rho: f64,
    k: usize,
    beta: Option<f64>,
    reps: usize,
    seed: u64,
    mean_bias_frobenius: f64,
    median_bias_frobenius: f64,
    bound_term: f64,
    bound_ratio: f64,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        (v[m / 2 - 1] + v[m / 2]) / 2.0
    }
}

/// Per-replication layer-averaged `||E_l||_F` for one design.
pub fn bias_replications(spec: &BlockModelSpec, reps: usize, seed: u64, embedder: Embedder) -> Result<Vec<f64>> {
    let pop = population_decomposition(spec)?;
    (0..reps)
        .into_par_iter()
        .map(|r| {
            let net = sample_network(spec, derive_seed(seed, &[r as u64]))?;
            let emb = embedder.embed(&net, spec.k())?;
            let scores = estimate_scores(&net, &emb)?;
            let align = procrustes_align(pop.u(), emb.basis())?;
            Ok(extract_bias(&scores, &pop, &align, &net)?.mean_frobenius)
        })
        .collect()
}

fn run_bias(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<()> {
    let embedder = embedders(cfg)[0];
    let mut raw = Vec::new();
    let mut summary = Vec::new();
    let mut measurements = Vec::new();
    for c in cells(cfg) {
        let spec = regime_spec(cfg, &c)?;
        let values = bias_replications(&spec, cfg.reps, cell_seed(cfg, &c), embedder)?;
        let b = beta(cfg, &c);
        for (rep, &v) in values.iter().enumerate() {
            raw.push(BiasRaw {
                model: cfg.model.name(),
                n: c.n,
                layers: c.layers,
                rho: c.rho,
                beta: b,
                rep,
                mean_bias_frobenius: v,
            });
        }
        let setting = BoundSetting {
            n: c.n,
            layers: c.layers,
            rho: c.rho,
            psi_norm: b,
        };
        let terms = bound_terms(&setting);
        let bound = if b.is_some() { terms.bias_dcsbm } else { terms.bias_sbm };
        let med = median(&values);
        measurements.push((setting, med));
        summary.push(BiasSummary {
            kind: "bias",
            model: cfg.model.name(),
            n: c.n,
            layers: c.layers,
            rho: c.rho,
            k: cfg.grid.k,
            beta: b,
            reps: cfg.reps,
            seed: cfg.seed,
            mean_bias_frobenius: values.iter().sum::<f64>() / values.len() as f64,
            median_bias_frobenius: med,
            bound_term: bound,
            bound_ratio: med / bound,
        });
    }
    out.push(write_csv(&file(cfg, "bias_raw.csv"), &raw)?);
    out.push(write_csv(&file(cfg, "bias_summary.csv"), &summary)?);
    out.push(write_json(&file(cfg, "bias_bound_report.json"), &theorem_bound_report(&measurements))?);

    let mut series: Vec<Series> = Vec::new();
    for s in &summary {
        let label = format!("n={}, rho={}", s.n, fmt_num(s.rho));
        match series.iter_mut().find(|x| x.label == label) {
            Some(x) => x.points.push((s.layers as f64, s.mean_bias_frobenius)),
            None => series.push(Series {
                label,
                points: vec![(s.layers as f64, s.mean_bias_frobenius)],
            }),
        }
    }
    let svg = line_plot("Layer-averaged bias norm", "L", "mean ||E_l||_F", &series);
    out.push(write_text(&file(cfg, "bias.svg"), &svg)?);
    Ok(())
}

#[derive(Serialize)]
struct CoverageRaw {
    model: &'static str,
    n: usize,
    #[serde(rename = "L")]
    layers: usize,
    rho: f64,
    beta: Option<f64>,
    method: &'static str,
    rep: usize,
    coverage: f64,
}

#[derive(Serialize)]
struct CoverageSummary {
    kind: &'static str,
    model: &'static str,
    n: usize,
    #[serde(rename = "L")]
    layers: usize,
    rho: f64,
    k: usize,
    beta: Option<f64>,
    reps: usize,
    alpha: f64,
    seed: u64,
    method: &'static str,
    coverage: f64,
}

fn run_coverage(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<()> {
    let mut raw = Vec::new();
    let mut summary = Vec::new();
    for c in cells(cfg) {
        let spec = regime_spec(cfg, &c)?;
        let b = beta(cfg, &c);
        for embedder in embedders(cfg) {
            // same seed for every method: the comparison is paired
            let report = coverage_experiment(&spec, cfg.reps, cfg.alpha, cell_seed(cfg, &c), embedder)?;
            for (rep, &v) in report.per_rep.iter().enumerate() {
                raw.push(CoverageRaw {
                    model: cfg.model.name(),
                    n: c.n,
                    layers: c.layers,
                    rho: c.rho,
                    beta: b,
                    method: embedder.label(),
                    rep,
                    coverage: v,
                });
            }
            summary.push(CoverageSummary {
                kind: "coverage",
                model: cfg.model.name(),
                n: c.n,
                layers: c.layers,
                rho: c.rho,
                k: cfg.grid.k,
                beta: b,
                reps: cfg.reps,
                alpha: cfg.alpha,
                seed: cfg.seed,
                method: embedder.label(),
                coverage: report.coverage,
            });
        }
    }
    out.push(write_csv(&file(cfg, "coverage_raw.csv"), &raw)?);
    out.push(write_csv(&file(cfg, "coverage_summary.csv"), &summary)?);

    let mut series: Vec<Series> = Vec::new();
    for s in &summary {
        let label = format!("{} L={} rho={}", s.method, s.layers, fmt_num(s.rho));
        match series.iter_mut().find(|x| x.label == label) {
            Some(x) => x.points.push((s.n as f64, s.coverage)),
            None => series.push(Series {
                label,
                points: vec![(s.n as f64, s.coverage)],
            }),
        }
    }
    let title = format!("Coverage of {}% intervals", fmt_num(100.0 * (1.0 - cfg.alpha)));
    out.push(write_text(&file(cfg, "coverage.svg"), &line_plot(&title, "n", "coverage", &series))?);
    Ok(())
}

#[derive(Serialize)]
struct PowerSummary {
    kind: &'static str,
    model: &'static str,
    n: usize,
    #[serde(rename = "L")]
    layers: usize,
    rho: f64,
    k: usize,
    beta: Option<f64>,
    reps: usize,
    alpha: f64,
    null_samples: usize,
    oracle_reps: usize,
    seed: u64,
    method: &'static str,
    delta: f64,
    power: f64,
    oracle_power: Option<f64>,
    agreement: Option<f64>,
}

#[derive(Serialize)]
struct OracleRow {
    n: usize,
    #[serde(rename = "L")]
    layers: usize,
    rho: f64,
    index: usize,
    statistic: f64,
}

fn run_power(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<()> {
    let (first, second) = regimes(&cfg.scales());
    let mut summary = Vec::new();
    let mut oracle_rows = Vec::new();
    let mut series: Vec<Series> = Vec::new();
    for c in cells(cfg) {
        let psi_c = psi(cfg, &c)?;
        let family = |delta: f64| {
            pair_perturbation_spec(
                c.n,
                &cfg.grid.proportions,
                c.layers,
                c.rho,
                &first,
                &second,
                delta,
                psi_c.clone(),
            )
        };
        let seed = cell_seed(cfg, &c);
        let all = embedders(cfg);
        let oracle = oracle_null(&family(0.0)?, 0, 1, cfg.power.oracle_reps, derive_seed(seed, &[0x0AC]), all[0])?;
        for (index, &statistic) in oracle.statistics.iter().enumerate() {
            oracle_rows.push(OracleRow {
                n: c.n,
                layers: c.layers,
                rho: c.rho,
                index,
                statistic,
            });
        }
        for embedder in all {
            let settings = PowerSettings {
                k: 0,
                l: 1,
                reps: cfg.reps,
                alpha: cfg.alpha,
                null_samples: cfg.null_samples,
                seed,
                embedder,
            };
            let with_oracle = (embedder.method == EmbeddingMethod::Aggregate).then_some(&oracle);
            let points = power_curve(family, &cfg.power.deltas, &settings, with_oracle)?;
            let suffix = format!(" (n={}, L={}, rho={})", c.n, c.layers, fmt_num(c.rho));
            series.push(Series {
                label: format!("{}{}", embedder.label(), suffix),
                points: points.iter().map(|p| (p.delta, p.power)).collect(),
            });
            if with_oracle.is_some() {
                series.push(Series {
                    label: format!("scce-oracle{suffix}"),
                    points: points.iter().map(|p| (p.delta, p.oracle_power.unwrap_or(f64::NAN))).collect(),
                });
            }
            for p in points {
                summary.push(PowerSummary {
                    kind: "power",
                    model: cfg.model.name(),
                    n: c.n,
                    layers: c.layers,
                    rho: c.rho,
                    k: cfg.grid.k,
                    beta: beta(cfg, &c),
                    reps: cfg.reps,
                    alpha: cfg.alpha,
                    null_samples: cfg.null_samples,
                    oracle_reps: cfg.power.oracle_reps,
                    seed: cfg.seed,
                    method: embedder.label(),
                    delta: p.delta,
                    power: p.power,
                    oracle_power: p.oracle_power,
                    agreement: p.agreement,
                });
            }
        }
    }
    out.push(write_csv(&file(cfg, "power_summary.csv"), &summary)?);
    out.push(write_csv(&file(cfg, "power_oracle_null.csv"), &oracle_rows)?);
    let svg = line_plot("Empirical power", "||B_1 - B_2||_F", "power", &series);
    out.push(write_text(&file(cfg, "power.svg"), &svg)?);
    Ok(())
}

#[derive(Serialize)]
struct HolmRaw {
    model: &'static str,
    n: usize,
    #[serde(rename = "L")]
    layers: usize,
    rho: f64,
    method: &'static str,
    run: usize,
    rejections: usize,
    false_rejections: usize,
    missed_rejections: usize,
    exact_recovery: bool,
}

#[derive(Serialize)]
struct HolmSummary {
    kind: &'static str,
    model: &'static str,
    n: usize,
    #[serde(rename = "L")]
    layers: usize,
    rho: f64,
    k: usize,
    beta: Option<f64>,
    runs: usize,
    alpha: f64,
    null_samples: usize,
    seed: u64,
    method: &'static str,
    exact_recovery_rate: f64,
    mean_rejections: f64,
}

/// Estimates, plug-in covariances, all pair tests and the Holm procedure
/// for one network.
pub fn homogeneity_analysis(
    net: &MultiLayerNetwork,
    k: usize,
    embedder: Embedder,
    null_samples: usize,
    alpha: f64,
    seed: u64,
) -> Result<(Vec<PairTestResult>, HolmOutcome)> {
    let emb = embedder.embed(net, k)?;
    let scores = estimate_scores(net, &emb)?;
    let covs = estimate_covariances(&emb, &scores)?;
    let tests = all_pair_tests(&scores, &covs, null_samples, seed)?;
    let p: Vec<(usize, usize, f64)> = tests.iter().map(|t| (t.k, t.l, t.p_value)).collect();
    let holm = holm_procedure(net.num_layers(), &p, alpha)?;
    Ok((tests, holm))
}

fn pvalue_cells(layers: usize, tests: &[PairTestResult]) -> Vec<Vec<String>> {
    let mut cells = vec![vec![String::new(); layers]; layers];
    for t in tests {
        cells[t.k][t.l] = t.p_value.to_string();
        cells[t.l][t.k] = t.p_value.to_string();
    }
    cells
}

fn decision_cells(holm: &HolmOutcome) -> Vec<Vec<String>> {
    let l = holm.decisions.len();
    (0..l)
        .map(|i| {
            (0..l)
                .map(|j| match (i == j, holm.decisions[i][j]) {
                    (true, _) => String::new(),
                    (false, true) => "reject".into(),
                    (false, false) => "accept".into(),
                })
                .collect()
        })
        .collect()
}

/// Accepted pairs (and the diagonal) as 1, rejected as 0.
fn acceptance_matrix(holm: &HolmOutcome) -> Vec<Vec<f64>> {
    holm.decisions
        .iter()
        .map(|row| row.iter().map(|&r| if r { 0.0 } else { 1.0 }).collect())
        .collect()
}

const OLIVE: (u8, u8, u8) = (128, 128, 0);

fn write_holm_files(
    dir: &Path,
    prefix: &str,
    labels: &[String],
    tests: &[PairTestResult],
    holm: &HolmOutcome,
    out: &mut RunOutput,
) -> Result<()> {
    let l = labels.len();
    out.push(write_matrix_csv(&dir.join(format!("{prefix}_pvalues.csv")), labels, &pvalue_cells(l, tests))?);
    out.push(write_matrix_csv(&dir.join(format!("{prefix}_decisions.csv")), labels, &decision_cells(holm))?);
    out.push(write_json(&dir.join(format!("{prefix}_audit.json")), holm)?);
    let svg = heatmap(
        &format!("Holm decisions ({prefix}): olive = accept"),
        labels,
        &acceptance_matrix(holm),
        OLIVE,
    );
    out.push(write_text(&dir.join(format!("{prefix}_decisions.svg")), &svg)?);
    Ok(())
}

fn run_holm(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<()> {
    let mut raw = Vec::new();
    let mut summary = Vec::new();
    for c in cells(cfg) {
        let spec = regime_spec(cfg, &c)?;
        let seed = cell_seed(cfg, &c);
        let half = c.layers / 2;
        let labels: Vec<String> = (1..=c.layers).map(|l| l.to_string()).collect();
        for embedder in embedders(cfg) {
            let runs: Vec<(Vec<PairTestResult>, HolmOutcome)> = (0..cfg.reps)
                .map(|r| {
                    let net = sample_network(&spec, derive_seed(seed, &[r as u64]))?;
                    homogeneity_analysis(
                        &net,
                        spec.k(),
                        embedder,
                        cfg.null_samples,
                        cfg.alpha,
                        derive_seed(seed, &[0x7E57, r as u64]),
                    )
                })
                .collect::<Result<_>>()?;
            let mut accept_rate = vec![vec![0.0; c.layers]; c.layers];
            let mut exact = 0usize;
            let mut total_rejections = 0usize;
            for (run, (_, holm)) in runs.iter().enumerate() {
                let (mut false_rej, mut missed) = (0, 0);
                for a in 0..c.layers {
                    for b in (a + 1)..c.layers {
                        let differ = (a < half) != (b < half);
                        match (differ, holm.decisions[a][b]) {
                            (false, true) => false_rej += 1,
                            (true, false) => missed += 1,
                            _ => {}
                        }
                    }
                    for b in 0..c.layers {
                        if !holm.decisions[a][b] {
                            accept_rate[a][b] += 1.0 / cfg.reps as f64;
                        }
                    }
                }
                let ok = false_rej == 0 && missed == 0;
                exact += ok as usize;
                total_rejections += holm.rejections();
                raw.push(HolmRaw {
                    model: cfg.model.name(),
                    n: c.n,
                    layers: c.layers,
                    rho: c.rho,
                    method: embedder.label(),
                    run,
                    rejections: holm.rejections(),
                    false_rejections: false_rej,
                    missed_rejections: missed,
                    exact_recovery: ok,
                });
            }
            summary.push(HolmSummary {
                kind: "holm",
                model: cfg.model.name(),
                n: c.n,
                layers: c.layers,
                rho: c.rho,
                k: cfg.grid.k,
                beta: beta(cfg, &c),
                runs: cfg.reps,
                alpha: cfg.alpha,
                null_samples: cfg.null_samples,
                seed: cfg.seed,
                method: embedder.label(),
                exact_recovery_rate: exact as f64 / cfg.reps as f64,
                mean_rejections: total_rejections as f64 / cfg.reps as f64,
            });
            let prefix = format!("holm_n{}_L{}_rho{}_{}", c.n, c.layers, fmt_num(c.rho), embedder.label());
            let (tests, holm) = &runs[0];
            write_holm_files(&cfg.out, &format!("{prefix}_run0"), &labels, tests, holm, out)?;
            let svg = heatmap(
                &format!("Acceptance frequency over {} runs ({})", cfg.reps, embedder.label()),
                &labels,
                &accept_rate,
                OLIVE,
            );
            out.push(write_text(&cfg.out.join(format!("{prefix}_acceptance_rate.svg")), &svg)?);
        }
    }
    out.push(write_csv(&file(cfg, "holm_raw.csv"), &raw)?);
    out.push(write_csv(&file(cfg, "holm_summary.csv"), &summary)?);
    Ok(())
}

#[derive(Serialize)]
struct IntervalRow {
    method: &'static str,
    layer: String,
    s: usize,
    t: usize,
    center: f64,
    half_width: f64,
    lower: f64,
    upper: f64,
    alpha: f64,
}

#[derive(Serialize)]
struct PairRow {
    method: &'static str,
    layer_k: String,
    layer_l: String,
    statistic: f64,
    p_value: f64,
    null_samples: usize,
    rejected: bool,
}

#[derive(Serialize)]
struct ScoreExport {
    method: &'static str,
    layer_ids: Vec<String>,
    eigenvalues: Vec<f64>,
    scores: Vec<crate::model::LayerMatrixRecord>,
    covariances: Vec<crate::model::LayerMatrixRecord>,
}

/// Estimates, intervals and homogeneity tests on an ingested network.
pub fn analyze_network(
    data: &IngestedNetwork,
    cfg: &ExperimentConfig,
    out_dir: &Path,
    with_tests: bool,
    out: &mut RunOutput,
) -> Result<()> {
    let net = &data.network;
    let k = cfg.grid.k;
    let mut intervals = Vec::new();
    let mut pairs = Vec::new();
    for embedder in embedders(cfg) {
        let emb = embedder.embed(net, k)?;
        let scores = estimate_scores(net, &emb)?;
        let covs = estimate_covariances(&emb, &scores)?;
        for (l, cov) in covs.iter().enumerate() {
            for t in 1..=k {
                for s in 1..=t {
                    let ci = confidence_interval(&scores, cov, l, s, t, cfg.alpha)?;
                    intervals.push(IntervalRow {
                        method: embedder.label(),
                        layer: data.layer_ids[l].clone(),
                        s,
                        t,
                        center: ci.center,
                        half_width: ci.half_width,
                        lower: ci.lower(),
                        upper: ci.upper(),
                        alpha: cfg.alpha,
                    });
                }
            }
        }
        out.push(write_json(
            &out_dir.join(format!("scores_{}.json", embedder.label())),
            &ScoreExport {
                method: embedder.label(),
                layer_ids: data.layer_ids.clone(),
                eigenvalues: emb.eigenvalues().to_vec(),
                scores: scores.records(),
                covariances: covs.iter().map(|c| c.record()).collect(),
            },
        )?);
        if with_tests && net.num_layers() >= 2 {
            let tests = all_pair_tests(&scores, &covs, cfg.null_samples, cfg.seed)?;
            let p: Vec<(usize, usize, f64)> = tests.iter().map(|t| (t.k, t.l, t.p_value)).collect();
            let holm = holm_procedure(net.num_layers(), &p, cfg.alpha)?;
            for t in &tests {
                pairs.push(PairRow {
                    method: embedder.label(),
                    layer_k: data.layer_ids[t.k].clone(),
                    layer_l: data.layer_ids[t.l].clone(),
                    statistic: t.statistic,
                    p_value: t.p_value,
                    null_samples: t.null_samples,
                    rejected: holm.decisions[t.k][t.l],
                });
            }
            write_holm_files(out_dir, &format!("holm_{}", embedder.label()), &data.layer_ids, &tests, &holm, out)?;
        }
    }
    out.push(write_csv(&out_dir.join("intervals.csv"), &intervals)?);
    if with_tests {
        out.push(write_csv(&out_dir.join("pair_tests.csv"), &pairs)?);
    }
    Ok(())
}

pub fn ingest_from(cfg: &ExperimentConfig) -> Result<Option<IngestedNetwork>> {
    cfg.data
        .as_ref()
        .map(|d| {
            ingest_edge_list(
                &d.path,
                IngestOptions {
                    threshold: d.threshold,
                    min_total_degree: d.min_total_degree,
                },
            )
        })
        .transpose()
}

fn run_real_data(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<()> {
    let data = ingest_from(cfg)?.ok_or_else(|| crate::error::ScceError::config("data.path", "missing"))?;
    out.push(write_json(&file(cfg, "ingest_report.json"), &data.report)?);
    analyze_network(&data, cfg, &cfg.out, true, out)?;
    write_scree(cfg, &data.network, "data", None, out)
}

#[derive(Serialize)]
struct ScreeOut {
    kind: &'static str,
    source: &'static str,
    n: usize,
    #[serde(rename = "L")]
    layers: usize,
    rho: Option<f64>,
    seed: u64,
    index: usize,
    eigenvalue: f64,
}

pub fn write_scree(
    cfg: &ExperimentConfig,
    net: &MultiLayerNetwork,
    source: &'static str,
    rho: Option<f64>,
    out: &mut RunOutput,
) -> Result<()> {
    let rows = scree_values(net, cfg.scree.max_index.min(net.n()))?;
    let table: Vec<ScreeOut> = rows
        .iter()
        .map(|r| ScreeOut {
            kind: "scree",
            source,
            n: net.n(),
            layers: net.num_layers(),
            rho,
            seed: cfg.seed,
            index: r.index,
            eigenvalue: r.eigenvalue,
        })
        .collect();
    out.push(write_csv(&file(cfg, "scree.csv"), &table)?);
    let series = [Series {
        label: "sum A_l^2 / n".into(),
        points: rows.iter().map(|r| (r.index as f64, r.eigenvalue)).collect(),
    }];
    out.push(write_text(
        &file(cfg, "scree.svg"),
        &line_plot("Scree plot", "index", "eigenvalue", &series),
    )?);
    Ok(())
}

fn run_scree(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<()> {
    if let Some(data) = ingest_from(cfg)? {
        out.push(write_json(&file(cfg, "ingest_report.json"), &data.report)?);
        return write_scree(cfg, &data.network, "data", None, out);
    }
    let (spec, net) = simulate_first_cell(cfg)?;
    write_scree(cfg, &net, "simulated", Some(spec.rho()), out)
}

/// Samples the network of the first grid cell, as `run_scree` does.
pub fn simulate_first_cell(cfg: &ExperimentConfig) -> Result<(BlockModelSpec, MultiLayerNetwork)> {
    let c = *cells(cfg)
        .first()
        .ok_or_else(|| crate::error::ScceError::config("grid.n", "grid is empty"))?;
    let spec = regime_spec(cfg, &c)?;
    let net = sample_network(&spec, cell_seed(cfg, &c))?;
    Ok((spec, net))
}
