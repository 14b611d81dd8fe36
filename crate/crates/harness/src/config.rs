//! Experiment configuration (TOML). All power-like quantities are dBm here and converted once,
//! in `nfbf_core::units`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nfbf_core::pipeline::PipelineConfig;
use nfbf_core::scenario::ScenarioConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Robust,
    NonRobust,
    OmaTdma,
    OmaFdma,
    Zf,
}

impl Baseline {
    pub const ALL: [Baseline; 5] = [Baseline::Robust, Baseline::NonRobust, Baseline::OmaTdma, Baseline::OmaFdma, Baseline::Zf];

    pub fn name(self) -> &'static str {
        match self {
            Baseline::Robust => "robust",
            Baseline::NonRobust => "non_robust",
            Baseline::OmaTdma => "oma_tdma",
            Baseline::OmaFdma => "oma_fdma",
            Baseline::Zf => "zf",
        }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ExperimentKind {
    Convergence,
    BoundVsNt,
    BoundVsEps,
    RateVsDistance,
    Baselines,
    RobustnessVsErr,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::BoundVsNt => "bound_vs_nt",
            ExperimentKind::BoundVsEps => "bound_vs_eps",
            ExperimentKind::RateVsDistance => "rate_vs_distance",
            ExperimentKind::Baselines => "baselines",
            ExperimentKind::RobustnessVsErr => "robustness_vs_err",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        <Self as clap::ValueEnum>::from_str(s, true).map_err(|_| HarnessError::Config(format!("unknown experiment {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sweeps {
    /// Element counts for `bound_vs_nt`; each must be a multiple of `scenario.rows`.
    pub n_elements: Vec<usize>,
    /// Position-error radii (m) for `bound_vs_eps` and `robustness_vs_err`.
    pub pos_err: Vec<f64>,
    /// Near-user ring radii (m) for `rate_vs_distance`.
    pub near_distances: Vec<f64>,
    /// Far ring radius minus near ring radius (m).
    pub pair_gap: f64,
    /// Position-error samples per user when checking bound dominance.
    pub bound_samples: usize,
}

impl Default for Sweeps {
    fn default() -> Self {
        Self {
            n_elements: vec![16, 32, 64],
            pos_err: vec![0.0, 0.05, 0.1, 0.2],
            near_distances: vec![10.0, 15.0, 20.0, 25.0],
            pair_gap: 5.0,
            bound_samples: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Used when the command line does not name one.
    pub experiment: Option<ExperimentKind>,
    pub seeds: Vec<u64>,
    pub baselines: Vec<Baseline>,
    pub output_dir: PathBuf,
    pub scenario: ScenarioConfig,
    pub pipeline: PipelineConfig,
    pub sweeps: Sweeps,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            seeds: (0..10).collect(),
            baselines: Baseline::ALL.to_vec(),
            output_dir: PathBuf::from("results"),
            scenario: ScenarioConfig::default(),
            pipeline: PipelineConfig::default(),
            sweeps: Sweeps::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        self.scenario.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.seeds.is_empty() {
            return bad("seed list is empty".into());
        }
        if self.baselines.is_empty() {
            return bad("baseline list is empty".into());
        }
        let s = &self.sweeps;
        if s.n_elements.is_empty() || s.pos_err.is_empty() || s.near_distances.is_empty() {
            return bad("every sweep needs at least one value".into());
        }
        if let Some(n) = s.n_elements.iter().find(|&&n| n == 0 || n % self.scenario.rows != 0) {
            return bad(format!("element count {n} is not a positive multiple of rows = {}", self.scenario.rows));
        }
        if s.pos_err.iter().any(|&e| !(e >= 0.0 && e.is_finite())) {
            return bad("position-error radii must be finite and nonnegative".into());
        }
        if s.near_distances.iter().any(|&d| !(d > 0.0 && d.is_finite())) || !(s.pair_gap >= 0.0) {
            return bad("distances must be positive and the pair gap nonnegative".into());
        }
        if s.bound_samples == 0 {
            return bad("bound_samples must be positive".into());
        }
        Ok(())
    }

    /// Short SHA-256 of the configuration, excluding where results are written.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let json = serde_json::to_string(&c).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
