//! Synchronous simulator for the decentralised primal-dual method.
//!
//! Node `i` holds `λ^i, z^i, x^i` and the running sum
//! `S^i = Σ_k α_k Σ_j W_ij G_k^j`. A round has two barrier-separated phases:
//!
//! 1. every node forms its query point `μ^i`, restores
//!    `x^i(μ^i) = ∇F_i*(m μ^i)` over a batch, encodes it with PPS and posts the
//!    message to its neighbours;
//! 2. every node combines `Σ_j W_ij G^j` (its own message enters through
//!    `W_ii` without being transmitted) and updates its state.
//!
//! Messages of round `t + 1` are written to a fresh buffer during phase 1, so
//! no node can observe them before phase 2. Each node draws from its own
//! stream `(seed, node, round)`, which makes the result independent of the
//! order in which nodes are processed.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::topology::{LaplacianSpectrum, Topology};
use crate::error::{invalid, Error, Result};
use crate::linalg::{matvec, norm};
use crate::problems::{restore_batch, ConjugateOracle};
use crate::quantize::Codec;
use crate::rng::stream;
use crate::schedules::{ensure_valid, Schedule};
use crate::solvers::{OracleReply, QuantizedOracle, RunTrace, TraceRow};

/// `L = m ‖W‖₂ / γ`
pub fn network_lipschitz(m: usize, spectrum: &LaplacianSpectrum, gamma: f64) -> f64 {
    m as f64 * spectrum.norm / gamma
}

/// `R = B* / √(m λ₂(W))`
pub fn network_radius(b_star: f64, m: usize, spectrum: &LaplacianSpectrum) -> f64 {
    b_star / (m as f64 * spectrum.lambda2).sqrt()
}

/// `‖√𝑾 𝒙‖` with `𝑾 = W ⊗ I`.
pub fn consensus_gap(x_nodes: &[Vec<f64>], spectrum: &LaplacianSpectrum) -> f64 {
    let m = x_nodes.len();
    let n = x_nodes.first().map_or(0, Vec::len);
    let mut total = 0.0;
    for k in 0..n {
        let col: Vec<f64> = (0..m).map(|i| x_nodes[i][k]).collect();
        let y = matvec(&spectrum.sqrt_w, &col);
        total += y.iter().map(|v| v * v).sum::<f64>();
    }
    total.sqrt()
}

/// Local objectives on a graph, `min (1/m) Σ_i f_i(x^i)` subject to consensus.
#[derive(Clone)]
pub struct NetworkProblem {
    pub nodes: Vec<Arc<dyn ConjugateOracle>>,
    pub topology: Topology,
    pub spectrum: LaplacianSpectrum,
    /// Lipschitz constant of the dual gradient, `m ‖W‖₂ / γ`.
    pub lipschitz: f64,
    pub radius: f64,
    /// `f(x*)` for the averaged objective, when known.
    pub optimum: Option<f64>,
}

impl NetworkProblem {
    pub fn new(nodes: Vec<Arc<dyn ConjugateOracle>>, topology: Topology, radius: f64, optimum: Option<f64>) -> Result<Self> {
        if nodes.len() != topology.m {
            return Err(Error::DimensionMismatch { expected: topology.m, got: nodes.len() });
        }
        let n = nodes[0].dim();
        if let Some(bad) = nodes.iter().find(|o| o.dim() != n) {
            return Err(Error::DimensionMismatch { expected: n, got: bad.dim() });
        }
        let spectrum = super::laplacian(&topology)?;
        let gamma = nodes.iter().map(|o| o.strong_convexity()).fold(f64::INFINITY, f64::min);
        if !(gamma > 0.0) {
            return Err(invalid("gamma", "local objectives must be strongly convex"));
        }
        let lipschitz = network_lipschitz(topology.m, &spectrum, gamma);
        Ok(Self { nodes, topology, spectrum, lipschitz, radius, optimum })
    }

    pub fn m(&self) -> usize {
        self.topology.m
    }

    pub fn n(&self) -> usize {
        self.nodes[0].dim()
    }

    /// `(1/m) Σ_i f_i*(m λ^i)`
    pub fn dual_value(&self, lambda: &[Vec<f64>]) -> Option<f64> {
        let m = self.m() as f64;
        let mut s = 0.0;
        for (o, l) in self.nodes.iter().zip(lambda) {
            let scaled: Vec<f64> = l.iter().map(|v| m * v).collect();
            s += o.conjugate_value(&scaled)?;
        }
        Some(s / m)
    }

    /// `(1/m) Σ_i f_i(x^i)`
    pub fn primal_value(&self, x: &[Vec<f64>]) -> Option<f64> {
        let mut s = 0.0;
        for (o, xi) in self.nodes.iter().zip(x) {
            s += o.primal_value(xi)?;
        }
        Some(s / self.m() as f64)
    }

    /// `Σ_j W_ij v^j` over the neighbourhood of `i`, self included.
    fn combine(&self, i: usize, v: &[Vec<f64>]) -> Vec<f64> {
        let w = &self.spectrum.w;
        let mut out: Vec<f64> = v[i].iter().map(|x| w[(i, i)] * x).collect();
        for &j in self.topology.neighbors(i) {
            let wij = w[(i, j)];
            out.iter_mut().zip(&v[j]).for_each(|(o, x)| *o += wij * x);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeRecord {
    pub round: usize,
    pub src: usize,
    pub dst: usize,
    pub bits: u64,
}

#[derive(Debug, Clone)]
pub struct DecentralizedOptions {
    pub codec: Codec,
    pub float_bits: u32,
    pub seed: u64,
    pub record_edges: bool,
    /// Node processing order inside each phase; `None` is `0..m`.
    pub order: Option<Vec<usize>>,
}

impl Default for DecentralizedOptions {
    fn default() -> Self {
        Self { codec: Codec::Pps { simplified: true }, float_bits: 64, seed: 0, record_edges: false, order: None }
    }
}

/// One node's outgoing message for a round.
struct Post {
    mu: Vec<f64>,
    z: Vec<f64>,
    restored: Vec<f64>,
    message: Vec<f64>,
    bits: u64,
}

/// Per-node state of the simulator after round `t`.
#[derive(Debug, Clone)]
pub struct Decentralized {
    pub t: usize,
    pub lambda: Vec<Vec<f64>>,
    pub mu: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub weighted_sum: Vec<Vec<f64>>,
    pub x: Vec<Vec<f64>>,
    pub a_sum: f64,
    pub bits_sent: Vec<u64>,
    pub bits_received: Vec<u64>,
    pub calls: u64,
    pub edge_log: Vec<EdgeRecord>,
}

impl Decentralized {
    fn order(problem: &NetworkProblem, options: &DecentralizedOptions) -> Result<Vec<usize>> {
        let m = problem.m();
        match &options.order {
            None => Ok((0..m).collect()),
            Some(o) => {
                let mut s = o.clone();
                s.sort_unstable();
                if s != (0..m).collect::<Vec<_>>() {
                    return Err(invalid("order", "must be a permutation of the nodes"));
                }
                Ok(o.clone())
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn post(
        problem: &NetworkProblem,
        options: &DecentralizedOptions,
        i: usize,
        round: usize,
        mu: Vec<f64>,
        z: Vec<f64>,
        r: usize,
        m_samples: usize,
    ) -> Result<Post> {
        let mut rng = stream(options.seed, &[i as u64, round as u64]);
        let scale = problem.m() as f64;
        let arg: Vec<f64> = mu.iter().map(|v| scale * v).collect();
        let restored = restore_batch(problem.nodes[i].as_ref(), &arg, r, &mut rng)?;
        let enc = options.codec.encode(&restored, m_samples, options.float_bits, &mut rng)?;
        Ok(Post { mu, z, restored, message: enc.decoded, bits: enc.bits })
    }

    fn deliver(&mut self, problem: &NetworkProblem, options: &DecentralizedOptions, posts: &[Post], round: usize) {
        for (i, p) in posts.iter().enumerate() {
            for &j in problem.topology.neighbors(i) {
                self.bits_sent[i] += p.bits;
                self.bits_received[j] += p.bits;
                if options.record_edges {
                    self.edge_log.push(EdgeRecord { round, src: i, dst: j, bits: p.bits });
                }
            }
        }
    }

    pub fn start(problem: &NetworkProblem, schedule: &Schedule, options: &DecentralizedOptions) -> Result<Self> {
        let (m, n) = (problem.m(), problem.n());
        let order = Self::order(problem, options)?;
        let mut slots: Vec<Option<Post>> = (0..m).map(|_| None).collect();
        for &i in &order {
            slots[i] = Some(Self::post(problem, options, i, 0, vec![0.0; n], Vec::new(), schedule.r[0], schedule.m[0])?);
        }
        let posts: Vec<Post> = slots.into_iter().map(Option::unwrap).collect();
        let messages: Vec<Vec<f64>> = posts.iter().map(|p| p.message.clone()).collect();
        let (a0, b0) = (schedule.alpha[0], schedule.beta[0]);
        let mut st = Self {
            t: 0,
            lambda: vec![Vec::new(); m],
            mu: vec![vec![0.0; n]; m],
            z: vec![Vec::new(); m],
            weighted_sum: vec![Vec::new(); m],
            x: posts.iter().map(|p| p.restored.clone()).collect(),
            a_sum: a0,
            bits_sent: vec![0; m],
            bits_received: vec![0; m],
            calls: (m * schedule.r[0]) as u64,
            edge_log: Vec::new(),
        };
        for &i in &order {
            let h = problem.combine(i, &messages);
            st.lambda[i] = h.iter().map(|v| -a0 / b0 * v).collect();
            st.weighted_sum[i] = h.iter().map(|v| a0 * v).collect();
        }
        st.deliver(problem, options, &posts, 0);
        Ok(st)
    }

    pub fn step(&mut self, problem: &NetworkProblem, schedule: &Schedule, options: &DecentralizedOptions) -> Result<()> {
        let t = self.t;
        if t + 1 >= schedule.alpha.len() {
            return Err(invalid("schedule", format!("no coefficients for round {}", t + 1)));
        }
        let m = problem.m();
        let order = Self::order(problem, options)?;
        let beta = schedule.beta[t];
        let alpha_next = schedule.alpha[t + 1];
        let a_next = self.a_sum + alpha_next;
        let tau = alpha_next / a_next;

        // phase 1: reads round-t state only, writes the round-(t+1) buffer
        let mut slots: Vec<Option<Post>> = (0..m).map(|_| None).collect();
        for &i in &order {
            let z: Vec<f64> = self.weighted_sum[i].iter().map(|s| -s / beta).collect();
            let mu = z.iter().zip(&self.lambda[i]).map(|(z, l)| tau * z + (1.0 - tau) * l).collect();
            slots[i] = Some(Self::post(problem, options, i, t + 1, mu, z, schedule.r[t + 1], schedule.m[t + 1])?);
        }
        let posts: Vec<Post> = slots.into_iter().map(Option::unwrap).collect();
        let messages: Vec<Vec<f64>> = posts.iter().map(|p| p.message.clone()).collect();
        if messages.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite message in round {}", t + 1)));
        }

        // phase 2: combine and update
        for &i in &order {
            let h = problem.combine(i, &messages);
            let p = &posts[i];
            for ((l, zi), hi) in self.lambda[i].iter_mut().zip(&p.z).zip(&h) {
                let mu_hat = zi - alpha_next / beta * hi;
                *l = tau * mu_hat + (1.0 - tau) * *l;
            }
            self.x[i].iter_mut().zip(&p.restored).for_each(|(x, v)| *x = tau * v + (1.0 - tau) * *x);
            self.weighted_sum[i].iter_mut().zip(&h).for_each(|(s, v)| *s += alpha_next * v);
        }
        for (i, p) in posts.iter().enumerate() {
            self.mu[i] = p.mu.clone();
            self.z[i] = p.z.clone();
        }
        self.deliver(problem, options, &posts, t + 1);
        self.calls += (m * schedule.r[t + 1]) as u64;
        self.a_sum = a_next;
        self.t = t + 1;
        Ok(())
    }

    pub fn total_bits(&self) -> u64 {
        self.bits_sent.iter().sum()
    }

    fn row(&self, problem: &NetworkProblem, schedule: &Schedule) -> TraceRow {
        let t = self.t;
        let primal_gap = match (problem.optimum, problem.primal_value(&self.x)) {
            (Some(fs), Some(v)) => v - fs,
            _ => f64::NAN,
        };
        TraceRow {
            t,
            dual_value: problem.dual_value(&self.lambda).unwrap_or(f64::NAN),
            primal_gap,
            gap: consensus_gap(&self.x, &problem.spectrum),
            calls: self.calls,
            bits: self.total_bits(),
            r: schedule.r[t],
            m: schedule.m[t],
            alpha: schedule.alpha[t],
            beta: schedule.beta[t],
        }
    }
}

#[derive(Debug, Clone)]
pub struct DecentralizedRun {
    pub x_nodes: Vec<Vec<f64>>,
    pub lambda_nodes: Vec<Vec<f64>>,
    pub trace: RunTrace,
    pub bits_sent: Vec<u64>,
    pub bits_received: Vec<u64>,
    pub edge_log: Vec<EdgeRecord>,
}

/// Runs `horizon` synchronous rounds.
pub fn decentralized_solve(
    problem: &NetworkProblem,
    schedule: &Schedule,
    horizon: usize,
    options: &DecentralizedOptions,
) -> Result<DecentralizedRun> {
    if schedule.horizon() < horizon {
        return Err(invalid("schedule", format!("covers {} rounds, {horizon} requested", schedule.horizon())));
    }
    let schedule = schedule.truncated(horizon);
    ensure_valid(&schedule, problem.lipschitz)?;
    let mut st = Decentralized::start(problem, &schedule, options)?;
    let mut trace = RunTrace::default();
    trace.rows.push(st.row(problem, &schedule));
    while st.t < horizon {
        st.step(problem, &schedule, options)?;
        trace.rows.push(st.row(problem, &schedule));
    }
    Ok(DecentralizedRun {
        x_nodes: st.x,
        lambda_nodes: st.lambda,
        trace,
        bits_sent: st.bits_sent,
        bits_received: st.bits_received,
        edge_log: st.edge_log,
    })
}

/// The same network problem viewed as one affine-constrained problem in the
/// lifted variable `λ̃`, with `λ = √𝑾 λ̃`. The message is `√𝑾 X` where `X`
/// stacks the per-node PPS messages, drawn from the same per-node streams as
/// the simulator.
pub struct LiftedOracle<'a> {
    pub problem: &'a NetworkProblem,
    pub options: DecentralizedOptions,
    sqrt_lifted: DMatrix<f64>,
}

impl<'a> LiftedOracle<'a> {
    pub fn new(problem: &'a NetworkProblem, options: DecentralizedOptions) -> Self {
        let sqrt_lifted = problem.spectrum.sqrt_w.kronecker(&DMatrix::<f64>::identity(problem.n(), problem.n()));
        Self { problem, options, sqrt_lifted }
    }

    /// `√𝑾 v` for a stacked vector.
    pub fn lift(&self, v: &[f64]) -> Vec<f64> {
        matvec(&self.sqrt_lifted, v)
    }
}

impl QuantizedOracle for LiftedOracle<'_> {
    fn dim(&self) -> usize {
        self.problem.m() * self.problem.n()
    }

    fn call(&mut self, point: &[f64], t: usize, r: usize, m: usize) -> Result<OracleReply> {
        let n = self.problem.n();
        let nu = self.lift(point);
        let mut stacked = Vec::with_capacity(nu.len());
        let mut restored = Vec::with_capacity(nu.len());
        let mut bits = 0;
        for (i, chunk) in nu.chunks(n).enumerate() {
            let p = Decentralized::post(self.problem, &self.options, i, t, chunk.to_vec(), Vec::new(), r, m)?;
            stacked.extend_from_slice(&p.message);
            restored.extend_from_slice(&p.restored);
            bits += p.bits * self.problem.topology.degree(i) as u64;
        }
        Ok(OracleReply {
            message: self.lift(&stacked),
            primal: Some(restored),
            bits,
            calls: (r * self.problem.m()) as u64,
        })
    }
}

/// `‖(√𝑾 λ̃ − √𝑾 √𝑾 x(√𝑾 λ̃)) − (λ − 𝑾 x(λ))‖` with `λ = √𝑾 λ̃`. The left side
/// uses the dense lifted square root, the right side neighbourhood sums, and
/// `x^i(λ) = ∇f_i*(m λ^i)` comes from the deterministic restoration.
pub fn dual_gradient_identity_check(problem: &NetworkProblem, lifted_lambda: &[Vec<f64>]) -> Result<f64> {
    let (m, n) = (problem.m(), problem.n());
    if lifted_lambda.len() != m || lifted_lambda.iter().any(|v| v.len() != n) {
        return Err(Error::DimensionMismatch { expected: m * n, got: lifted_lambda.iter().map(Vec::len).sum() });
    }
    let sq = problem.spectrum.sqrt_w.kronecker(&DMatrix::<f64>::identity(n, n));
    let flat: Vec<f64> = lifted_lambda.concat();
    let restore = |lam: &[f64]| -> Result<Vec<Vec<f64>>> {
        let mut rng = stream(0, &[]);
        lam.chunks(n)
            .enumerate()
            .map(|(i, l)| {
                let arg: Vec<f64> = l.iter().map(|v| m as f64 * v).collect();
                problem.nodes[i].restore_sample(&arg, &mut rng)
            })
            .collect()
    };
    let lam = matvec(&sq, &flat);
    let x = restore(&lam)?.concat();
    let grad = matvec(&sq, &x);
    let lhs: Vec<f64> = matvec(&sq, &flat.iter().zip(&grad).map(|(a, g)| a - g).collect::<Vec<_>>());

    let lam_nodes: Vec<Vec<f64>> = lam.chunks(n).map(<[f64]>::to_vec).collect();
    let x_nodes = restore(&lam)?;
    let mut rhs = Vec::with_capacity(m * n);
    for i in 0..m {
        let wx = problem.combine(i, &x_nodes);
        rhs.extend(lam_nodes[i].iter().zip(&wx).map(|(l, w)| l - w));
    }
    Ok(norm(&lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect::<Vec<_>>()))
}

/// Inputs of the order-of-magnitude bit estimate
/// `B² d log n · max{ (1/σ²) √(D B*²/(γ ε m d)), D B*²/ε², m²/(γ² ε²) }`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BitBoundParams {
    pub b: f64,
    pub b_star: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BitsReport {
    pub per_node: Vec<u64>,
    /// Keyed by `(src, dst)`.
    pub per_edge: BTreeMap<(usize, usize), u64>,
    pub total: u64,
    /// The three terms of the max, each already multiplied by `B² d log n`.
    pub bound_terms: Option<[f64; 3]>,
}

pub fn bits_report(run: &DecentralizedRun, problem: &NetworkProblem, params: Option<BitBoundParams>) -> BitsReport {
    let mut per_edge = BTreeMap::new();
    for e in &run.edge_log {
        *per_edge.entry((e.src, e.dst)).or_insert(0) += e.bits;
    }
    let bound_terms = params.map(|p| {
        let d = problem.topology.max_degree().max(1) as f64;
        let diam = problem.topology.diameter() as f64;
        let m = problem.m() as f64;
        let lead = p.b * p.b * d * (problem.n() as f64).ln();
        [
            lead / (p.sigma * p.sigma) * (diam * p.b_star * p.b_star / (p.gamma * p.eps * m * d)).sqrt(),
            lead * diam * p.b_star * p.b_star / (p.eps * p.eps),
            lead * m * m / (p.gamma * p.gamma * p.eps * p.eps),
        ]
    });
    BitsReport { per_node: run.bits_sent.clone(), per_edge, total: run.bits_sent.iter().sum(), bound_terms }
}
