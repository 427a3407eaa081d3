//! Run configuration: a TOML file with nested tables.
//!
//! ```toml
//! seed = 7
//! solver = "primal_dual"
//!
//! [stopping]
//! iterations = 1000
//!
//! [problem]
//! kind = "quadratic"
//! dim = 10
//! constraints = 3
//!
//! [schedule]
//! policy = "constant"
//! r = 1
//! m = 10000
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use pps_core::network::TopologyKind;
use pps_core::quantize::Codec;
use pps_core::schedules::SamplePolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Primal,
    PrimalDual,
    Decentralized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    /// `½(x − c)ᵀQ(x − c)` with random `c` and `Q = I + GGᵀ/n`. With
    /// `constraints > 0`, random `Ax = b` is attached (primal-dual solver);
    /// under the decentralised solver every node draws its own local.
    /// `centres` names a file with one centre per row (one per node for the
    /// decentralised solver); those locals use `Q = I`.
    Quadratic {
        dim: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        centres: Option<PathBuf>,
        #[serde(default)]
        constraints: usize,
        #[serde(default = "one")]
        spread: f64,
        #[serde(default)]
        noise: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// `ln Σ_j b_j exp(A_jᵀx)`: a random row-stochastic `A` of size
    /// `terms × dim`, or `A` read from `matrix` (one term per row) with
    /// weights from `weights` (default all ones).
    Lse {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        terms: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dim: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        matrix: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<PathBuf>,
        #[serde(default)]
        noise: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        l1_bound: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// Entropic semi-discrete barycentre of random 1-D Gaussians on a grid.
    Wb {
        support: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma: Option<f64>,
        #[serde(default = "default_eval_samples")]
        eval_samples: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
}

impl ProblemSpec {
    pub fn seed(&self) -> Option<u64> {
        match *self {
            ProblemSpec::Quadratic { seed, .. } | ProblemSpec::Lse { seed, .. } | ProblemSpec::Wb { seed, .. } => seed,
        }
    }

    pub fn with_seed(&self, s: u64) -> Self {
        let mut out = self.clone();
        match &mut out {
            ProblemSpec::Quadratic { seed, .. } | ProblemSpec::Lse { seed, .. } | ProblemSpec::Wb { seed, .. } => {
                *seed = Some(seed.unwrap_or(s))
            }
        }
        out
    }

    /// Input files the problem reads, with the config key naming each.
    pub fn files(&self) -> Vec<(&'static str, &PathBuf)> {
        match self {
            ProblemSpec::Quadratic { centres, .. } => centres.iter().map(|p| ("centres", p)).collect(),
            ProblemSpec::Lse { matrix, weights, .. } => {
                matrix.iter().map(|p| ("matrix", p)).chain(weights.iter().map(|p| ("weights", p))).collect()
            }
            ProblemSpec::Wb { .. } => Vec::new(),
        }
    }

    fn files_mut(&mut self) -> Vec<&mut PathBuf> {
        match self {
            ProblemSpec::Quadratic { centres, .. } => centres.iter_mut().collect(),
            ProblemSpec::Lse { matrix, weights, .. } => matrix.iter_mut().chain(weights.iter_mut()).collect(),
            ProblemSpec::Wb { .. } => Vec::new(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProblemSpec::Quadratic { .. } => "quadratic",
            ProblemSpec::Lse { .. } => "lse",
            ProblemSpec::Wb { .. } => "wb",
        }
    }
}

fn one() -> f64 {
    1.0
}

fn default_eval_samples() -> usize {
    1000
}

fn default_delta() -> f64 {
    0.1
}

fn default_float_bits() -> u32 {
    64
}

/// Fixed horizon, or the first horizon whose accuracy bound reaches a target.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stopping {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
}

/// Sample-size policy plus the constants the coefficient sequences need.
/// `sigma`, `b`, `radius` and `lipschitz` override values derived from the
/// problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    #[serde(flatten)]
    pub policy: SamplePolicy,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "one")]
    pub j: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    /// `B*`, bound on the local gradients at the optimum (decentralised runs).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_star: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
    /// Use the quantized variance model; defaults to `true` unless the codec
    /// is the identity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantized: Option<bool>,
    /// Constant `β` in place of the default sequence. Checked like any other
    /// schedule, so `β ≤ L` is rejected.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// File stem; defaults to the config file's stem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Also write per-edge bit counts (decentralised runs).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub edges: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub solver: SolverKind,
    #[serde(default = "default_float_bits")]
    pub float_bits: u32,
    pub stopping: Stopping,
    pub problem: ProblemSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<TopologyKind>,
    pub schedule: ScheduleConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codec: Option<Codec>,
    #[serde(default, skip_serializing_if = "is_default_output")]
    pub output: OutputConfig,
}

fn is_default_output(o: &OutputConfig) -> bool {
    *o == OutputConfig::default()
}

/// A configuration problem, located in the source text when possible.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `key` inside table `table` (top level when empty), falling back to
/// the table header.
pub fn locate(text: &str, table: &str, key: Option<&str>) -> Option<usize> {
    let mut current = String::new();
    let mut header = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.split(']').next()) {
            current = name.trim().to_string();
            if current == table {
                header = Some(i + 1);
            }
            continue;
        }
        if current == table {
            if let Some(k) = key {
                let lhs = line.split('=').next().unwrap_or("").trim();
                if line.contains('=') && lhs == k {
                    return Some(i + 1);
                }
            }
        }
    }
    header
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError {
            line: e.span().map(|s| line_of_offset(text, s.start)),
            message: e.message().trim().to_string(),
        })?;
        cfg.check(text)?;
        Ok(cfg)
    }

    /// Parses the file at `path`. Input files and the output directory named
    /// in the config are taken relative to its directory; input files must
    /// exist.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError { line: None, message: format!("cannot read {}: {e}", path.display()) })?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for f in cfg.problem.files_mut() {
            if f.is_relative() {
                *f = base.join(&*f);
            }
        }
        if let Some(dir) = cfg.output.dir.as_mut().filter(|d| d.is_relative()) {
            *dir = base.join(&*dir);
        }
        for (key, f) in cfg.problem.files() {
            if !f.is_file() {
                return Err(ConfigError {
                    line: locate(&text, "problem", Some(key)),
                    message: format!("`{key}` file {} does not exist", f.display()),
                });
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    /// Problem seed, defaulting to the run seed.
    pub fn problem_seed(&self) -> u64 {
        self.problem.seed().unwrap_or(self.seed)
    }

    /// Cross-field checks that serde cannot express.
    fn check(&self, text: &str) -> Result<(), ConfigError> {
        let err = |table: &str, key: Option<&str>, message: String| ConfigError { line: locate(text, table, key).or(Some(1)), message };
        let s = &self.stopping;
        match (s.iterations, s.target_epsilon) {
            (Some(_), Some(_)) => {
                return Err(err("stopping", Some("target_epsilon"), "set either `iterations` or `target_epsilon`, not both".into()))
            }
            (None, None) => return Err(err("stopping", None, "set `iterations` or `target_epsilon`".into())),
            (Some(0), None) => return Err(err("stopping", Some("iterations"), "`iterations` must be at least 1".into())),
            (None, Some(e)) => {
                if !(e > 0.0) {
                    return Err(err("stopping", Some("target_epsilon"), "`target_epsilon` must be positive".into()));
                }
                if s.max_iterations.is_none() {
                    return Err(err("stopping", None, "`target_epsilon` needs `max_iterations`".into()));
                }
            }
            _ => {}
        }
        if s.iterations.is_some() && s.max_iterations.is_some() {
            return Err(err("stopping", Some("max_iterations"), "`max_iterations` only applies with `target_epsilon`".into()));
        }
        if self.float_bits != 32 && self.float_bits != 64 {
            return Err(err("", Some("float_bits"), format!("float_bits must be 32 or 64, got {}", self.float_bits)));
        }
        if let SamplePolicy::VariableR { eps } | SamplePolicy::VariableM { eps } = self.schedule.policy {
            if !(eps > 0.0) {
                return Err(err("schedule", Some("eps"), "`eps` must be positive".into()));
            }
        }
        match (self.solver, &self.problem, &self.topology) {
            (SolverKind::Decentralized, _, None) => {
                return Err(err("", Some("solver"), "the decentralized solver needs a [topology] table".into()))
            }
            (SolverKind::Primal | SolverKind::PrimalDual, _, Some(_)) => {
                return Err(err("topology", None, "[topology] only applies to the decentralized solver".into()))
            }
            (SolverKind::Primal, ProblemSpec::Wb { .. }, _) => {
                return Err(err("problem", Some("kind"), "the primal solver supports quadratic and lse problems".into()))
            }
            (SolverKind::Primal, ProblemSpec::Quadratic { constraints, .. }, _) if *constraints > 0 => {
                return Err(err("problem", Some("constraints"), "constraints need the primal_dual solver".into()))
            }
            (SolverKind::PrimalDual, ProblemSpec::Quadratic { constraints: 0, .. }, _) => {
                return Err(err("problem", Some("constraints"), "the primal_dual solver needs `constraints` ≥ 1".into()))
            }
            (SolverKind::PrimalDual, p, _) if !matches!(p, ProblemSpec::Quadratic { .. }) => {
                return Err(err("problem", Some("kind"), "the primal_dual solver supports quadratic problems".into()))
            }
            (SolverKind::Decentralized, ProblemSpec::Lse { .. }, _) => {
                return Err(err("problem", Some("kind"), "the decentralized solver supports quadratic and wb problems".into()))
            }
            (SolverKind::Decentralized, ProblemSpec::Quadratic { constraints, .. }, _) if *constraints > 0 => {
                return Err(err("problem", Some("constraints"), "decentralized problems carry no extra constraints".into()))
            }
            _ => {}
        }
        if let ProblemSpec::Lse { terms, dim, matrix, weights, .. } = &self.problem {
            match (matrix, terms, dim) {
                (None, Some(_), Some(_)) => {
                    if weights.is_some() {
                        return Err(err("problem", Some("weights"), "`weights` needs `matrix`".into()));
                    }
                }
                (None, _, _) => return Err(err("problem", None, "lse needs `terms` and `dim`, or a `matrix` file".into())),
                (Some(_), None, None) => {}
                (Some(_), _, _) => {
                    return Err(err("problem", Some("matrix"), "`matrix` fixes the size; drop `terms` and `dim`".into()))
                }
            }
        }
        Ok(())
    }
}
