use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use scce::experiments::config::{DataSection, ExperimentConfig, ExperimentKind};
use scce::experiments::ingest::{export_edge_list, ingest_edge_list, IngestOptions};
use scce::experiments::output::{ensure_dir, write_json};
use scce::experiments::runner::{analyze_network, ingest_from, run_experiment, simulate_first_cell, write_scree, RunOutput};
use scce::{Result, ScceError};

#[derive(Parser)]
#[command(name = "scce", version, about = "Common-eigenspace estimation and inference for multi-layer block models")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Named preset grid, used when no --config is given.
    #[arg(long, global = true)]
    preset: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Multiplies replication counts.
    #[arg(long, global = true)]
    scale: Option<f64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Edge list with `layer,i,j[,weight]` records.
    #[arg(long)]
    input: PathBuf,
    /// A record becomes an edge when its weight exceeds this.
    #[arg(long, default_value_t = 0.0)]
    threshold: f64,
    /// Drop nodes whose degree summed over layers is below this.
    #[arg(long, default_value_t = 0)]
    min_total_degree: usize,
}

#[derive(Args, Clone)]
struct AnalysisArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Number of communities.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Also run the MASE baseline.
    #[arg(long)]
    mase: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a network from the first grid cell and write it as an edge list.
    Generate,
    /// Estimate scores, covariances and confidence intervals on an edge list.
    Estimate(AnalysisArgs),
    /// Run all pairwise homogeneity tests with Holm correction on an edge list.
    Test {
        #[command(flatten)]
        analysis: AnalysisArgs,
        /// Null draws per pair test.
        #[arg(long)]
        null_samples: Option<usize>,
    },
    /// Run a configured experiment or preset.
    Experiment,
    /// Ingest an edge list, apply threshold and degree filter, re-export it.
    Ingest(DataArgs),
    /// Scree values of the squared-adjacency aggregate.
    Scree {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        max_index: Option<usize>,
    },
}

fn base_config(g: &Global, fallback: &str) -> Result<ExperimentConfig> {
    let mut cfg = match (&g.config, &g.preset) {
        (Some(path), _) => ExperimentConfig::from_path(path)?,
        (None, Some(name)) => ExperimentConfig::preset(name)?,
        (None, None) => ExperimentConfig::preset(fallback)?,
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &g.out {
        cfg.out = out.clone();
    }
    if let Some(scale) = g.scale {
        cfg = cfg.scaled(scale)?;
    }
    Ok(cfg)
}

fn data_section(d: &DataArgs) -> DataSection {
    DataSection {
        path: d.input.clone(),
        threshold: d.threshold,
        min_total_degree: d.min_total_degree,
    }
}

fn analysis_config(g: &Global, a: &AnalysisArgs) -> Result<ExperimentConfig> {
    let mut cfg = base_config(g, "holm")?;
    cfg.kind = ExperimentKind::RealData;
    cfg.data = Some(data_section(&a.data));
    if let Some(k) = a.k {
        cfg.grid.k = k;
    }
    if let Some(alpha) = a.alpha {
        cfg.alpha = alpha;
    }
    let configured = g.config.is_some() || g.preset.is_some();
    cfg.mase = a.mase || (configured && cfg.mase);
    Ok(cfg)
}

fn run(cli: Cli) -> Result<RunOutput> {
    let g = &cli.global;
    let mut out = RunOutput::default();
    match &cli.command {
        Command::Generate => {
            let cfg = base_config(g, "scree")?;
            cfg.validate()?;
            let (spec, net) = simulate_first_cell(&cfg)?;
            ensure_dir(&cfg.out)?;
            let nodes: Vec<String> = (0..net.n()).map(|i| i.to_string()).collect();
            let layers: Vec<String> = (0..net.num_layers()).map(|l| l.to_string()).collect();
            let path = cfg.out.join("network.csv");
            export_edge_list(BufWriter::new(File::create(&path)?), &net, &nodes, &layers)?;
            out.files.push(path);
            out.files.push(write_json(&cfg.out.join("membership.json"), &spec.membership())?);
        }
        Command::Estimate(a) | Command::Test { analysis: a, .. } => {
            let with_tests = matches!(cli.command, Command::Test { .. });
            let mut cfg = analysis_config(g, a)?;
            if let Command::Test {
                null_samples: Some(b), ..
            } = cli.command
            {
                cfg.null_samples = b;
            }
            cfg.validate()?;
            ensure_dir(&cfg.out)?;
            let data = ingest_from(&cfg)?.ok_or_else(|| ScceError::config("data.path", "missing"))?;
            out.files.push(write_json(&cfg.out.join("ingest_report.json"), &data.report)?);
            analyze_network(&data, &cfg, &cfg.out, with_tests, &mut out)?;
        }
        Command::Experiment => {
            if g.config.is_none() && g.preset.is_none() {
                return Err(ScceError::config("preset", "experiment needs --config or --preset"));
            }
            out = run_experiment(&base_config(g, "bias")?)?;
        }
        Command::Ingest(d) => {
            let cfg = base_config(g, "scree")?;
            let data = ingest_edge_list(
                &d.input,
                IngestOptions {
                    threshold: d.threshold,
                    min_total_degree: d.min_total_degree,
                },
            )?;
            for w in &data.report.warnings {
                log::warn!("{w}");
            }
            ensure_dir(&cfg.out)?;
            let path = cfg.out.join("network.csv");
            export_edge_list(BufWriter::new(File::create(&path)?), &data.network, &data.node_ids, &data.layer_ids)?;
            out.files.push(path);
            out.files.push(write_json(&cfg.out.join("ingest_report.json"), &data.report)?);
        }
        Command::Scree { input, max_index } => {
            let mut cfg = base_config(g, "scree")?;
            cfg.kind = ExperimentKind::Scree;
            if let Some(m) = max_index {
                cfg.scree.max_index = *m;
            }
            if let Some(path) = input {
                cfg.data = Some(DataSection {
                    path: path.clone(),
                    threshold: 0.0,
                    min_total_degree: 0,
                });
                cfg.validate()?;
                ensure_dir(&cfg.out)?;
                let data = ingest_from(&cfg)?.ok_or_else(|| ScceError::config("data.path", "missing"))?;
                write_scree(&cfg, &data.network, "data", None, &mut out)?;
            } else {
                out = run_experiment(&cfg)?;
            }
        }
    }
    Ok(out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let threads = cli.global.threads.unwrap_or(0);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::FAILURE;
        }
    };
    match pool.install(|| run(cli)) {
        Ok(out) => {
            for f in &out.files {
                info!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
