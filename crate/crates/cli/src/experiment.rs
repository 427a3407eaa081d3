//! Turns a [`RunConfig`] into a concrete problem, schedule and solver run.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use pps_core::linalg::norm;
use pps_core::network::{decentralized_solve, laplacian, DecentralizedOptions, EdgeRecord, NetworkProblem, Topology};
use pps_core::oracles::{NoiseModel, NoisyOracle};
use pps_core::problems::{
    quadratic_kkt_solution, ConjugateOracle, LogSumExp, QuadraticLocal, SemiDiscreteWb,
};
use pps_core::quantize::Codec;
use pps_core::rng::stream;
use pps_core::schedules::{
    epsilon_bounds, validate, BoundKind, Schedule, ScheduleSpec, VarianceModel,
};
use pps_core::solvers::{primal_dual_solve, primal_solve, AffineProblem, PrimalDualOptions, PrimalProblem, Reference, RunTrace};

use crate::config::{ProblemSpec, RunConfig, SolverKind};
use crate::CliError;

const PROBLEM_STREAM: u64 = 0x70;
const SOLVER_STREAM: u64 = 0x71;

/// The solver-facing problem built from a config.
pub enum Instance {
    Primal { oracle: NoisyOracle, lipschitz: f64, optimum: Option<f64>, radius: Option<f64> },
    PrimalDual(AffineProblem),
    Decentralized(NetworkProblem),
}

/// Everything a run needs, resolved from the config.
pub struct Experiment {
    pub config: RunConfig,
    pub instance: Instance,
    pub spec: ScheduleSpec,
    pub codec: Codec,
    pub fingerprint: String,
}

/// SHA-256 over the resolved problem and topology description.
pub fn fingerprint(config: &RunConfig) -> String {
    #[derive(Serialize)]
    struct Key<'a> {
        problem: &'a ProblemSpec,
        topology: &'a Option<pps_core::network::TopologyKind>,
    }
    let problem = config.problem.with_seed(config.seed);
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&Key { problem: &problem, topology: &config.topology }).expect("serialisable"));
    for (_, path) in config.problem.files() {
        // contents, not names, identify the problem; unreadable files surface when the run builds
        if let Ok(bytes) = std::fs::read(path) {
            h.update(&bytes);
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Numeric table: one row per line, fields separated by commas or
/// whitespace, `#` starts a comment.
pub fn read_rows(path: &std::path::Path) -> Result<Vec<Vec<f64>>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .map(|f| f.parse::<f64>().map_err(|e| CliError::Config(format!("{}:{}: {f:?}: {e}", path.display(), i + 1))))
            .collect::<Result<Vec<f64>, _>>()?;
        if !row.is_empty() {
            rows.push(row);
        }
    }
    if rows.is_empty() {
        return Err(CliError::Config(format!("{}: no numbers", path.display())));
    }
    Ok(rows)
}

/// Centres from `file`, checked for count and dimension.
fn centres(file: &std::path::Path, count: usize, dim: usize) -> Result<Vec<Vec<f64>>, CliError> {
    let rows = read_rows(file)?;
    if rows.len() != count {
        return Err(CliError::Config(format!("{}: expected {count} centre rows, found {}", file.display(), rows.len())));
    }
    if let Some(bad) = rows.iter().position(|r| r.len() != dim) {
        return Err(CliError::Config(format!("{}: row {} has {} entries, dim is {dim}", file.display(), bad + 1, rows[bad].len())));
    }
    Ok(rows)
}

/// `count` quadratic locals, from a centres file or the generator.
fn quadratic_locals(
    file: Option<&std::path::Path>,
    count: usize,
    dim: usize,
    spread: f64,
    rng: &mut pps_core::rng::SimRng,
) -> Result<Vec<QuadraticLocal>, CliError> {
    Ok(match file {
        Some(f) => centres(f, count, dim)?.into_iter().map(QuadraticLocal::identity).collect(),
        None => (0..count).map(|_| QuadraticLocal::random(dim, spread, rng)).collect(),
    })
}

fn lse_problem(
    terms: Option<usize>,
    dim: Option<usize>,
    matrix: Option<&std::path::Path>,
    weights: Option<&std::path::Path>,
    rng: &mut pps_core::rng::SimRng,
) -> Result<LogSumExp, CliError> {
    let Some(file) = matrix else {
        return Ok(LogSumExp::random_row_stochastic(terms.unwrap_or(1), dim.unwrap_or(1), rng));
    };
    let rows = read_rows(file)?;
    let cols = rows[0].len();
    if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
        return Err(CliError::Config(format!("{}: row {} has {} entries, expected {cols}", file.display(), bad + 1, rows[bad].len())));
    }
    let a = DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]);
    let b = match weights {
        Some(w) => read_rows(w)?.concat(),
        None => vec![1.0; rows.len()],
    };
    LogSumExp::new(a, b).map_err(build_error)
}

fn noise_model(scale: f64) -> NoiseModel {
    if scale > 0.0 {
        NoiseModel::truncated_gaussian(scale)
    } else {
        NoiseModel::Exact
    }
}

fn build_error(e: pps_core::Error) -> CliError {
    match e {
        pps_core::Error::InvalidSchedule(_) => CliError::Schedule(e.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

fn build_instance(cfg: &RunConfig) -> Result<(Instance, usize, f64, bool, f64), CliError> {
    let mut rng = stream(cfg.problem_seed(), &[PROBLEM_STREAM]);
    let sc = &cfg.schedule;
    // (instance, quantized dimension, default σ, simplex messages, ‖A‖)
    Ok(match (cfg.solver, &cfg.problem) {
        (SolverKind::Primal, ProblemSpec::Quadratic { dim, spread, noise, centres, .. }) => {
            let (dim, noise) = (*dim, *noise);
            let f = quadratic_locals(centres.as_deref(), 1, dim, *spread, &mut rng)?.remove(0);
            let lipschitz = f.smoothness();
            let radius = norm(&f.c);
            let g = f.clone();
            let oracle = NoisyOracle::new(dim, move |x| g.gradient(x)).with_value(move |x| f.value(x)).with_noise(noise_model(noise));
            let sigma = noise * (dim as f64).sqrt();
            (Instance::Primal { oracle, lipschitz, optimum: Some(0.0), radius: Some(radius) }, dim, sigma, false, 1.0)
        }
        (SolverKind::Primal, ProblemSpec::Lse { terms, dim, matrix, weights, noise, l1_bound, .. }) => {
            let f = lse_problem(*terms, *dim, matrix.as_deref(), weights.as_deref(), &mut rng)?;
            let (dim, noise) = (f.dim(), *noise);
            let lipschitz = f.lipschitz();
            let oracle = f.oracle(noise_model(noise), *l1_bound);
            let sigma = noise * (dim as f64).sqrt();
            (Instance::Primal { oracle, lipschitz, optimum: None, radius: None }, dim, sigma, false, 1.0)
        }
        (SolverKind::PrimalDual, ProblemSpec::Quadratic { dim, constraints, spread, noise, centres, .. }) => {
            let (dim, constraints, noise) = (*dim, *constraints, *noise);
            let f = quadratic_locals(centres.as_deref(), 1, dim, *spread, &mut rng)?.remove(0).with_noise(noise_model(noise));
            let a = DMatrix::from_fn(constraints, dim, |_, _| rng.random_range(-1.0..1.0));
            let b: Vec<f64> = (0..constraints).map(|_| rng.random_range(-1.0..1.0)).collect();
            let s = quadratic_kkt_solution(std::slice::from_ref(&f), &a, &b).map_err(build_error)?;
            let reference = Reference { x: s.x, lambda: s.lambda, value: s.value };
            let p = AffineProblem::new(a, b, Arc::new(f), sc.radius, Some(reference)).map_err(build_error)?;
            let a_norm = p.a_norm();
            let sigma = a_norm * noise * (dim as f64).sqrt();
            (Instance::PrimalDual(p), constraints, sigma, false, a_norm)
        }
        (SolverKind::Decentralized, p) => {
            let kind = cfg.topology.as_ref().expect("checked at parse time");
            let topology = Topology::build(kind).map_err(build_error)?;
            let m = topology.m;
            let spectrum = laplacian(&topology).map_err(build_error)?;
            let (nodes, optimum, b_star, n, sigma, simplex): (Vec<Arc<dyn ConjugateOracle>>, _, _, _, _, _) = match p {
                ProblemSpec::Quadratic { dim, spread, noise, centres, .. } => {
                    let (dim, noise) = (*dim, *noise);
                    let locals: Vec<QuadraticLocal> = quadratic_locals(centres.as_deref(), m, dim, *spread, &mut rng)?
                        .into_iter()
                        .map(|f| f.with_noise(noise_model(noise)))
                        .collect();
                    let (x_star, value) = consensus_optimum(&locals);
                    let b_star = locals.iter().map(|f| norm(&f.gradient(&x_star))).fold(0.0, f64::max);
                    let nodes = locals.into_iter().map(|f| Arc::new(f) as Arc<dyn ConjugateOracle>).collect();
                    (nodes, Some(value), b_star, dim, noise * (dim as f64).sqrt(), false)
                }
                &ProblemSpec::Wb { support, gamma, eval_samples, .. } => {
                    let wb = Arc::new(SemiDiscreteWb::random_gaussians_1d(m, support, gamma, &mut rng).map_err(build_error)?);
                    let seed = cfg.problem_seed();
                    let nodes = (0..m)
                        .map(|i| wb.node(i, eval_samples, seed).map(|o| Arc::new(o) as Arc<dyn ConjugateOracle>))
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(build_error)?;
                    // samples lie on the simplex, so their spread is at most √2
                    (nodes, None, 1.0, support, 2f64.sqrt(), true)
                }
                ProblemSpec::Lse { .. } => unreachable!("rejected at parse time"),
            };
            let b_star = sc.b_star.unwrap_or(b_star);
            let radius = match sc.radius {
                Some(r) => r,
                None if m > 1 => pps_core::network::network_radius(b_star, m, &spectrum),
                None => 1.0,
            };
            let a_norm = spectrum.norm.sqrt();
            let problem = NetworkProblem::new(nodes, topology, radius, optimum).map_err(build_error)?;
            (Instance::Decentralized(problem), n, sigma, simplex, a_norm)
        }
        _ => unreachable!("solver/problem pairs are checked at parse time"),
    })
}

/// Minimiser of `Σ_i f_i` over a common `x`, and `(1/m) Σ_i f_i(x*)`.
fn consensus_optimum(locals: &[QuadraticLocal]) -> (Vec<f64>, f64) {
    let n = locals[0].c.len();
    let mut q = DMatrix::zeros(n, n);
    let mut rhs = DVector::zeros(n);
    for f in locals {
        q += &f.q;
        rhs += &f.q * DVector::from_column_slice(&f.c);
    }
    let x = q.cholesky().expect("sum of SPD matrices").solve(&rhs);
    let x: Vec<f64> = x.iter().copied().collect();
    let value = locals.iter().map(|f| f.value(&x)).sum::<f64>() / locals.len() as f64;
    (x, value)
}

impl Experiment {
    pub fn build(config: &RunConfig) -> Result<Self, CliError> {
        let (mut instance, n, sigma_default, simplex, a_norm) = build_instance(config)?;
        let sc = &config.schedule;
        let codec = config.codec.unwrap_or(Codec::Pps { simplified: true });
        let (lipschitz, radius) = match &mut instance {
            Instance::Primal { lipschitz, radius, .. } => {
                if let Some(l) = sc.lipschitz {
                    *lipschitz = l;
                }
                let r = sc.radius.or(*radius).ok_or_else(|| {
                    CliError::Config("schedule.radius is required: the distance to the minimiser is unknown for this problem".into())
                })?;
                (*lipschitz, r)
            }
            Instance::PrimalDual(p) => {
                if let Some(l) = sc.lipschitz {
                    p.lipschitz = l;
                }
                (p.lipschitz, p.radius)
            }
            Instance::Decentralized(p) => {
                if let Some(l) = sc.lipschitz {
                    p.lipschitz = l;
                }
                (p.lipschitz, p.radius)
            }
        };
        let spec = ScheduleSpec {
            lipschitz,
            radius,
            a_norm,
            delta: sc.delta,
            j: sc.j,
            policy: sc.policy,
            variance: VarianceModel {
                n,
                b: sc.b.unwrap_or(1.0),
                sigma: sc.sigma.unwrap_or(sigma_default),
                simplex,
                quantized: sc.quantized.unwrap_or(codec != Codec::Identity),
            },
        };
        spec.constants().map_err(build_error)?;
        Ok(Self { config: config.clone(), instance, spec, codec, fingerprint: fingerprint(config) })
    }

    fn bound_kind(&self) -> BoundKind {
        match self.instance {
            Instance::Primal { .. } => BoundKind::Primal,
            _ => BoundKind::PrimalDual,
        }
    }

    /// Builds and checks the schedule, and resolves the horizon. A target
    /// accuracy picks the first horizon whose bound reaches it.
    pub fn plan(&self) -> Result<Plan, CliError> {
        let st = &self.config.stopping;
        let cap = st.iterations.or(st.max_iterations).expect("checked at parse time");
        let mut schedule = self.spec.build(cap).map_err(|e| match e {
            pps_core::Error::InvalidParameter { .. } => CliError::Config(format!("schedule: {e}")),
            other => CliError::Schedule(other.to_string()),
        })?;
        if let Some(beta) = self.config.schedule.beta {
            schedule.beta.fill(beta);
        }
        let violations = validate(&schedule, self.spec.lipschitz, cap);
        if !violations.is_empty() {
            let v: Vec<String> = violations.iter().take(5).map(ToString::to_string).collect();
            return Err(CliError::Schedule(v.join("; ")));
        }
        let consts = self.spec.constants().map_err(build_error)?;
        let bounds = epsilon_bounds(&schedule, self.spec.radius, self.spec.lipschitz, self.spec.a_norm, &consts, self.bound_kind())
            .map_err(|e| CliError::Schedule(e.to_string()))?;
        let mut warnings = Vec::new();
        let horizon = match st.target_epsilon {
            None => cap,
            Some(target) => match bounds.iter().skip(1).position(|&e| e <= target) {
                Some(i) => i + 1,
                None => {
                    warnings.push(format!(
                        "accuracy bound {:e} at max_iterations = {cap} is above target {target:e}; stopping at max_iterations",
                        bounds[cap]
                    ));
                    cap
                }
            },
        };
        Ok(Plan { epsilon: bounds[horizon], schedule: schedule.truncated(horizon), horizon, warnings })
    }

    pub fn run(&self, plan: &Plan) -> Result<Outcome, CliError> {
        let cfg = &self.config;
        let rng = stream(cfg.seed, &[SOLVER_STREAM]);
        let runtime = |e: pps_core::Error| match e {
            pps_core::Error::InvalidSchedule(_) => CliError::Schedule(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        };
        let (trace, edges) = match &self.instance {
            Instance::Primal { oracle, lipschitz, optimum, .. } => {
                let p = PrimalProblem { oracle, lipschitz: *lipschitz, optimum: *optimum };
                (primal_solve(&p, &plan.schedule, plan.horizon, self.codec, cfg.float_bits, rng).map_err(runtime)?.trace, None)
            }
            Instance::PrimalDual(p) => {
                let options = PrimalDualOptions { codec: self.codec, float_bits: cfg.float_bits, constants: self.spec.constants().ok() };
                (primal_dual_solve(p, &plan.schedule, plan.horizon, options, rng).map_err(runtime)?.trace, None)
            }
            Instance::Decentralized(p) => {
                let options = DecentralizedOptions {
                    codec: self.codec,
                    float_bits: cfg.float_bits,
                    seed: pps_core::rng::derive_seed(cfg.seed, &[SOLVER_STREAM]),
                    record_edges: cfg.output.edges,
                    order: None,
                };
                let run = decentralized_solve(p, &plan.schedule, plan.horizon, &options).map_err(runtime)?;
                (run.trace, cfg.output.edges.then_some(run.edge_log))
            }
        };
        if let Some(bad) = trace.rows.iter().find(|r| !r.dual_value.is_finite() && !r.dual_value.is_nan()) {
            return Err(CliError::Runtime(format!("dual value diverged at t = {}", bad.t)));
        }
        Ok(Outcome { trace, edges })
    }

    pub fn lipschitz(&self) -> f64 {
        self.spec.lipschitz
    }

    pub fn radius(&self) -> f64 {
        self.spec.radius
    }

}

pub struct Plan {
    pub schedule: Schedule,
    pub horizon: usize,
    /// Accuracy bound at `horizon`.
    pub epsilon: f64,
    pub warnings: Vec<String>,
}

pub struct Outcome {
    pub trace: RunTrace,
    pub edges: Option<Vec<EdgeRecord>>,
}
