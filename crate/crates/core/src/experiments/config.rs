//! Experiment configuration (TOML) and the shipped presets.
//!
//! ```toml
//! kind = "coverage"          # bias | coverage | power | holm | real-data | scree
//! model = "sbm"              # sbm | dcsbm
//! seed = 7
//! reps = 200
//! alpha = 0.05
//! null_samples = 2000
//! out = "out/table1"
//! mase = true                # add the MASE baseline column
//!
//! [grid]
//! n = [300, 500]
//! layers = [100]
//! rho = [0.2, 0.3]
//! k = 3
//! beta = [10.4, 13.4]        # dcsbm only, one value per n
//! proportions = [0.4, 0.3, 0.3]
//!
//! [connectivity]             # eigenvalues of the two regimes
//! first = [1.5, 0.2, 0.5]
//! second = [1.5, 0.2, -0.5]
//!
//! [power]
//! deltas = [0.0, 0.05, 0.1]
//! oracle_reps = 200
//!
//! [data]                     # real-data and scree
//! path = "edges.csv"
//! threshold = 2000.0
//! min_total_degree = 23
//!
//! [scree]
//! max_index = 10
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embedding::EigenvalueOrder;
use crate::error::{Result, ScceError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Bias,
    Coverage,
    Power,
    Holm,
    RealData,
    Scree,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Bias => "bias",
            ExperimentKind::Coverage => "coverage",
            ExperimentKind::Power => "power",
            ExperimentKind::Holm => "holm",
            ExperimentKind::RealData => "real-data",
            ExperimentKind::Scree => "scree",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Sbm,
    Dcsbm,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Sbm => "sbm",
            ModelKind::Dcsbm => "dcsbm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    #[serde(default = "default_n")]
    pub n: Vec<usize>,
    #[serde(default = "default_layers")]
    pub layers: Vec<usize>,
    #[serde(default = "default_rho")]
    pub rho: Vec<f64>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub beta: Vec<f64>,
    #[serde(default = "default_proportions")]
    pub proportions: Vec<f64>,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            n: default_n(),
            layers: default_layers(),
            rho: default_rho(),
            k: default_k(),
            beta: Vec::new(),
            proportions: default_proportions(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Connectivity {
    pub first: [f64; 3],
    pub second: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSection {
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
    #[serde(default = "default_oracle_reps")]
    pub oracle_reps: usize,
}

impl Default for PowerSection {
    fn default() -> Self {
        PowerSection {
            deltas: default_deltas(),
            oracle_reps: default_oracle_reps(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub path: PathBuf,
    #[serde(default)]
    pub threshold: f64,
    #[serde(default)]
    pub min_total_degree: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScreeSection {
    #[serde(default = "default_max_index")]
    pub max_index: usize,
}

impl Default for ScreeSection {
    fn default() -> Self {
        ScreeSection {
            max_index: default_max_index(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default = "default_model")]
    pub model: ModelKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_null_samples")]
    pub null_samples: usize,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub mase: bool,
    #[serde(default = "default_eigen_order")]
    pub eigen_order: EigenvalueOrder,
    #[serde(default)]
    pub grid: Grid,
    #[serde(default)]
    pub connectivity: Option<Connectivity>,
    #[serde(default)]
    pub power: PowerSection,
    #[serde(default)]
    pub data: Option<DataSection>,
    #[serde(default)]
    pub scree: ScreeSection,
}

fn default_n() -> Vec<usize> {
    vec![300]
}
fn default_layers() -> Vec<usize> {
    vec![50]
}
fn default_rho() -> Vec<f64> {
    vec![0.2]
}
fn default_k() -> usize {
    3
}
fn default_proportions() -> Vec<f64> {
    vec![0.4, 0.3, 0.3]
}
fn default_deltas() -> Vec<f64> {
    vec![0.0, 0.025, 0.05, 0.075, 0.1, 0.15, 0.2]
}
fn default_oracle_reps() -> usize {
    200
}
fn default_max_index() -> usize {
    10
}
fn default_model() -> ModelKind {
    ModelKind::Sbm
}
fn default_reps() -> usize {
    100
}
fn default_alpha() -> f64 {
    0.05
}
fn default_null_samples() -> usize {
    crate::inference::DEFAULT_NULL_SAMPLES
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn default_eigen_order() -> EigenvalueOrder {
    EigenvalueOrder::Algebraic
}

fn field_error(field: &str, message: impl Into<String>) -> ScceError {
    ScceError::config(field, message)
}

/// Eigenvalue scales of the bias, coverage and power regimes.
pub const REGIME_SCALES: Connectivity = Connectivity {
    first: [1.5, 0.2, 0.5],
    second: [1.5, 0.2, -0.5],
};

/// Eigenvalue scales of the two-block Holm configuration.
pub const HOLM_SCALES: Connectivity = Connectivity {
    first: [1.0, 0.4, 0.1],
    second: [1.0, 0.4, -0.1],
};

pub const PRESETS: [&str; 7] = ["bias", "bias-n", "table1", "table2", "power", "holm", "scree"];

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| field_error("<config>", e.message().to_string()))?;
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let message = e.inner().message().to_string();
            let field = if path == "." { "<config>".to_string() } else { path };
            field_error(&field, message)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }

    /// Connectivity scales, falling back to the kind's default regime.
    pub fn scales(&self) -> Connectivity {
        self.connectivity.clone().unwrap_or(match self.kind {
            ExperimentKind::Holm => HOLM_SCALES,
            _ => REGIME_SCALES,
        })
    }

    /// Multiplies the replication counts by `scale` (at least one each).
    pub fn scaled(mut self, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(field_error("scale", format!("must be positive, got {scale}")));
        }
        let apply = |v: usize| ((v as f64 * scale).round() as usize).max(1);
        self.reps = apply(self.reps);
        self.power.oracle_reps = apply(self.power.oracle_reps);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if self.reps == 0 {
            return Err(field_error("reps", "must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(field_error("alpha", "must lie in (0, 1)"));
        }
        if self.null_samples < 99 {
            return Err(field_error("null_samples", "must be at least 99"));
        }
        if g.k == 0 {
            return Err(field_error("grid.k", "must be positive"));
        }
        let simulated = !matches!(self.kind, ExperimentKind::RealData)
            && !(self.kind == ExperimentKind::Scree && self.data.is_some());
        if simulated {
            if g.n.is_empty() || g.n.iter().any(|&n| n < 2) {
                return Err(field_error("grid.n", "needs at least one value >= 2"));
            }
            if g.layers.is_empty() || g.layers.contains(&0) {
                return Err(field_error("grid.layers", "needs at least one positive value"));
            }
            if g.rho.is_empty() || g.rho.iter().any(|&r| !(r > 0.0 && r <= 1.0)) {
                return Err(field_error("grid.rho", "values must lie in (0, 1]"));
            }
            if g.k != 3 {
                return Err(field_error("grid.k", "simulation regimes are defined for K = 3"));
            }
            if g.proportions.len() != g.k || g.proportions.iter().any(|&p| !(p > 0.0)) {
                return Err(field_error("grid.proportions", "needs K positive entries"));
            }
            if self.model == ModelKind::Dcsbm {
                if g.beta.len() != g.n.len() {
                    return Err(field_error("grid.beta", "dcsbm needs one beta per grid.n value"));
                }
                if g.beta.iter().any(|&b| !(b > 0.0)) {
                    return Err(field_error("grid.beta", "values must be positive"));
                }
            }
        }
        match self.kind {
            ExperimentKind::Power => {
                let d = &self.power.deltas;
                if d.is_empty() || d.iter().any(|&x| !(x >= 0.0)) || d.windows(2).any(|w| w[1] < w[0]) {
                    return Err(field_error("power.deltas", "must be non-empty, non-negative and ascending"));
                }
                if g.layers.iter().any(|&l| l < 4 || l % 2 != 0) {
                    return Err(field_error("grid.layers", "power layouts need an even L >= 4"));
                }
            }
            ExperimentKind::Holm | ExperimentKind::Bias | ExperimentKind::Coverage => {
                if g.layers.iter().any(|&l| l < 2) {
                    return Err(field_error("grid.layers", "two regimes need L >= 2"));
                }
            }
            ExperimentKind::RealData => {
                if self.data.is_none() {
                    return Err(field_error("data.path", "real-data experiments need a [data] section"));
                }
            }
            ExperimentKind::Scree => {
                if self.scree.max_index == 0 {
                    return Err(field_error("scree.max_index", "must be positive"));
                }
            }
        }
        Ok(())
    }

    /// Named preset grids at full replication counts.
    pub fn preset(name: &str) -> Result<Self> {
        let base = |kind| ExperimentConfig {
            kind,
            model: ModelKind::Sbm,
            seed: 20240501,
            reps: 100,
            alpha: 0.05,
            null_samples: crate::inference::DEFAULT_NULL_SAMPLES,
            out: PathBuf::from("out").join(name),
            mase: false,
            eigen_order: EigenvalueOrder::Algebraic,
            grid: Grid::default(),
            connectivity: None,
            power: PowerSection::default(),
            data: None,
            scree: ScreeSection::default(),
        };
        let cfg = match name {
            "bias" => {
                let mut c = base(ExperimentKind::Bias);
                c.grid.n = vec![500];
                c.grid.layers = vec![20, 60, 180];
                c.grid.rho = vec![0.3, 0.2, 0.1, 0.05];
                c
            }
            "bias-n" => {
                let mut c = base(ExperimentKind::Bias);
                c.grid.n = vec![200, 300, 400, 500];
                c.grid.layers = vec![20, 60, 180];
                c.grid.rho = vec![0.1];
                c
            }
            "table1" => {
                let mut c = base(ExperimentKind::Coverage);
                c.reps = 200;
                c.mase = true;
                c.grid.n = vec![100, 200, 300, 400, 500];
                c.grid.layers = vec![50, 100];
                c.grid.rho = vec![0.3, 0.2, 0.1, 0.05];
                c
            }
            "table2" => {
                let mut c = base(ExperimentKind::Coverage);
                c.model = ModelKind::Dcsbm;
                c.reps = 200;
                c.mase = true;
                c.grid.n = vec![300, 400, 500];
                c.grid.beta = vec![10.4, 12.0, 13.4];
                c.grid.layers = vec![50, 100];
                c.grid.rho = vec![0.3, 0.2, 0.1, 0.05];
                c
            }
            "power" => {
                let mut c = base(ExperimentKind::Power);
                c.mase = true;
                c.grid.n = vec![300];
                c.grid.layers = vec![50];
                c.grid.rho = vec![0.2];
                c
            }
            "holm" => {
                let mut c = base(ExperimentKind::Holm);
                c.reps = 20;
                c.null_samples = 20000;
                c.mase = true;
                c.grid.n = vec![500];
                c.grid.layers = vec![20];
                c.grid.rho = vec![0.2];
                c
            }
            "scree" => {
                let mut c = base(ExperimentKind::Scree);
                c.reps = 1;
                c.grid.n = vec![500];
                c.grid.layers = vec![100];
                c.grid.rho = vec![0.1];
                c
            }
            other => {
                return Err(field_error(
                    "preset",
                    format!("unknown preset `{other}` (known: {})", PRESETS.join(", ")),
                ))
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_scale() {
        for name in PRESETS {
            let c = ExperimentConfig::preset(name).unwrap();
            let s = c.clone().scaled(0.001).unwrap();
            assert_eq!(s.reps, 1);
            assert_eq!(s.grid, c.grid);
        }
        assert!(ExperimentConfig::preset("nope").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let c = ExperimentConfig::preset("table2").unwrap();
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn errors_name_the_field() {
        let err = ExperimentConfig::from_toml("kind = \"coverage\"\nalpha = 1.5\n").unwrap_err();
        assert!(matches!(err, ScceError::Config { ref field, .. } if field == "alpha"));
        let err = ExperimentConfig::from_toml("kind = \"coverage\"\nmodel = \"dcsbm\"\n").unwrap_err();
        assert!(matches!(err, ScceError::Config { ref field, .. } if field == "grid.beta"));
        let err = ExperimentConfig::from_toml("kind = \"coverage\"\nbogus = 1\n").unwrap_err();
        assert!(matches!(err, ScceError::Config { ref field, .. } if field == "bogus"));
        let err = ExperimentConfig::from_toml("kind = \"real-data\"\n").unwrap_err();
        assert!(matches!(err, ScceError::Config { ref field, .. } if field == "data.path"));
    }
}
