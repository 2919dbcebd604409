//! The experiment configuration: one JSON document describing a source, the
//! encoded-set cases and every sweep.

use std::path::Path;

use privregion::model::{EncodedSet, SourceModel, SourceSpec};
use privregion::region::SolverParams;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub sizes: Vec<usize>,
    pub revealed: Vec<usize>,
    pub hidden: Vec<usize>,
    /// Row-major over the attributes in ascending index order.
    pub joint: Vec<f64>,
    #[serde(default)]
    pub recon_size: Option<usize>,
    /// `|X_R|` rows by `recon_size` columns; Hamming when omitted.
    #[serde(default)]
    pub distortion: Option<Vec<Vec<f64>>>,
}

impl SourceConfig {
    pub fn spec(&self) -> SourceSpec<f64> {
        SourceSpec {
            sizes: self.sizes.clone(),
            revealed: self.revealed.clone(),
            hidden: self.hidden.clone(),
            joint: self.joint.clone(),
            recon_size: self.recon_size,
            distortion: self.distortion.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    pub name: String,
    pub attrs: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    /// Exact enumeration when the budget allows it, Monte Carlo otherwise.
    Auto,
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    /// Name of the case whose encoded set is simulated.
    pub case: String,
    /// The test channel is the minimum-leakage witness at this distortion.
    pub distortion: f64,
    pub n_list: Vec<usize>,
    /// Code rate `R`; the codebook has `ceil(2^{nR})` words.
    pub rate: f64,
    /// Typicality schedule constant: `delta(n) = (c / sqrt n) log2 n`.
    pub c: f64,
    pub tau: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub mode: SimMode,
}

fn default_trials() -> usize {
    10_000
}

fn default_mode() -> SimMode {
    SimMode::Auto
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Largest blocklength of the exhaustive pair scans, per alphabet pair.
    pub binary_max_n: usize,
    pub ternary_max_n: usize,
    /// Typicality constants of the scans, as `numerator / denominator`.
    pub deltas: Vec<(i64, i64)>,
    pub probability_max_n: usize,
    pub continuity_trials: usize,
    pub cardinality_n: Vec<usize>,
    pub schedule_c: f64,
    pub schedule_max_k: u32,
    pub convexity_trials: usize,
    pub convexity_tol: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            binary_max_n: 8,
            ternary_max_n: 5,
            deltas: vec![(1, 10), (1, 5)],
            probability_max_n: 12,
            continuity_trials: 10_000,
            cardinality_n: (2..=12).collect(),
            schedule_c: 0.5,
            schedule_max_k: 20,
            convexity_trials: 100,
            convexity_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub description: String,
    pub source: SourceConfig,
    pub cases: Vec<CaseConfig>,
    /// Distortion grid of `curve`.
    pub d_grid: Vec<f64>,
    /// Distortion list of `table`; the curve grid when omitted.
    #[serde(default)]
    pub d_list: Option<Vec<f64>>,
    #[serde(default)]
    pub solver: SolverParams,
    #[serde(default)]
    pub simulation: Option<SimulationConfig>,
    #[serde(default)]
    pub verify: VerifyConfig,
}

/// A validated configuration with its built source.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub source: SourceModel<f64>,
    pub sets: Vec<EncodedSet>,
}

impl Experiment {
    pub fn case_index(&self, name: &str) -> Option<usize> {
        self.config.cases.iter().position(|c| c.name == name)
    }

    pub fn table_list(&self) -> &[f64] {
        self.config.d_list.as_deref().unwrap_or(&self.config.d_grid)
    }
}

#[derive(Debug)]
pub enum ConfigError {
    Read(String),
    Invalid(Vec<String>),
}

pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Read(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| ConfigError::Read(format!("{}: {e}", path.display())))
}

fn check_grid(name: &str, grid: &[f64], out: &mut Vec<String>) {
    if grid.is_empty() {
        out.push(format!("{name} is empty"));
    }
    if grid.iter().any(|d| !d.is_finite() || *d < 0.0) {
        out.push(format!("{name} must contain finite nonnegative distortions"));
    }
}

/// Collects every violated invariant; builds the source when there are none.
pub fn validate(config: ExperimentConfig) -> Result<Experiment, ConfigError> {
    let mut out = Vec::new();
    let sets: Vec<EncodedSet> = config.cases.iter().map(|c| EncodedSet::new(c.attrs.clone())).collect();
    let spec = config.source.spec();
    out.extend(spec.validate(&sets).iter().map(ToString::to_string));

    if config.cases.is_empty() {
        out.push("at least one case is required".into());
    }
    for (i, c) in config.cases.iter().enumerate() {
        if c.name.is_empty() || c.name.contains([',', '"', '\n']) {
            out.push(format!("case {i}: name must be nonempty without commas, quotes or newlines"));
        }
        if config.cases[..i].iter().any(|o| o.name == c.name) {
            out.push(format!("case {i}: duplicate name {:?}", c.name));
        }
    }
    check_grid("d_grid", &config.d_grid, &mut out);
    if let Some(list) = &config.d_list {
        check_grid("d_list", list, &mut out);
    }
    if let Err(e) = config.solver.validate() {
        out.push(format!("solver: {e}"));
    }
    if let Some(sim) = &config.simulation {
        if !config.cases.iter().any(|c| c.name == sim.case) {
            out.push(format!("simulation: unknown case {:?}", sim.case));
        }
        if sim.n_list.is_empty() || sim.n_list.contains(&0) {
            out.push("simulation: n_list must hold positive blocklengths".into());
        }
        if !(sim.rate >= 0.0 && sim.rate.is_finite()) {
            out.push("simulation: rate must be finite and nonnegative".into());
        }
        if !(sim.c > 0.0 && sim.c.is_finite()) {
            out.push("simulation: c must be positive".into());
        }
        if !(sim.tau > 0.0 && sim.tau < 0.5) {
            out.push("simulation: tau must lie in (0, 1/2)".into());
        }
        if !(sim.distortion >= 0.0 && sim.distortion.is_finite()) {
            out.push("simulation: distortion must be finite and nonnegative".into());
        }
        if sim.trials == 0 {
            out.push("simulation: trials must be positive".into());
        }
    }
    let v = &config.verify;
    if v.deltas.is_empty() || v.deltas.iter().any(|&(p, q)| p <= 0 || q <= 0) {
        out.push("verify: deltas must be positive fractions".into());
    }
    if v.binary_max_n == 0 || v.ternary_max_n == 0 || v.probability_max_n == 0 {
        out.push("verify: blocklength limits must be positive".into());
    }
    if v.convexity_trials == 0 || v.continuity_trials == 0 {
        out.push("verify: trial counts must be positive".into());
    }
    if !(v.schedule_c > 0.0) || !(v.convexity_tol >= 0.0) {
        out.push("verify: schedule_c must be positive and convexity_tol nonnegative".into());
    }

    if !out.is_empty() {
        return Err(ConfigError::Invalid(out));
    }
    let source = spec.build().map_err(|e| ConfigError::Invalid(vec![e.to_string()]))?;
    Ok(Experiment { config, source, sets })
}
