//! Accelerated stochastic methods driven by a quantized oracle.
//!
//! The primal method (unconstrained `min f`) and the primal-dual method
//! (`min f(x)` s.t. `Ax = b`, run on the dual `φ(λ) = λᵀb + f*(−Aᵀλ)`) share
//! one recursion:
//!
//! ```text
//! λ_0 = −(α_0/β_0) G_0,                        G_0 at μ_0 = 0
//! z_t = −(1/β_t) Σ_{i≤t} α_i G_i
//! τ_t = α_{t+1} / A_{t+1}
//! μ_{t+1} = τ_t z_t + (1 − τ_t) λ_t            query point
//! μ̂_{t+1} = z_t − (α_{t+1}/β_t) G_{t+1}
//! λ_{t+1} = τ_t μ̂_{t+1} + (1 − τ_t) λ_t
//! ```
//!
//! The primal-dual method additionally averages the primal restorations
//! returned with each message, `x_{t+1} = τ_t x(−Aᵀμ_{t+1}) + (1 − τ_t) x_t`.

mod affine;
mod trace;

pub use affine::{feasibility_gap, AffineOracle, AffineProblem, Reference};
pub use trace::{RunTrace, TraceRow};

use rand::RngCore;

use crate::error::{invalid, Error, Result};
use crate::linalg::axpy;
use crate::oracles::{minibatch, GradientOracle};
use crate::quantize::Codec;
use crate::rng::SimRng;
use crate::schedules::{ensure_valid, epsilon_bound, BoundKind, Schedule, TheoryConstants};

/// One quantized message and what it cost.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReply {
    /// Decoded message `G`.
    pub message: Vec<f64>,
    /// Primal restoration `x(−Aᵀμ, ξ)` for the same batch, if any.
    pub primal: Option<Vec<f64>>,
    pub bits: u64,
    pub calls: u64,
}

pub trait QuantizedOracle {
    fn dim(&self) -> usize;

    /// Message for query point `point` at step `t` with batch `r` and `m`
    /// PPS samples.
    fn call(&mut self, point: &[f64], t: usize, r: usize, m: usize) -> Result<OracleReply>;
}

/// Quantized mini-batch gradients of an unconstrained objective.
pub struct GradientPps<'a, R: RngCore> {
    pub oracle: &'a dyn GradientOracle,
    pub codec: Codec,
    pub float_bits: u32,
    pub rng: R,
}

impl<R: RngCore> QuantizedOracle for GradientPps<'_, R> {
    fn dim(&self) -> usize {
        self.oracle.dim()
    }

    fn call(&mut self, point: &[f64], _t: usize, r: usize, m: usize) -> Result<OracleReply> {
        let g = minibatch(self.oracle, point, r, &mut self.rng)?;
        let enc = self.codec.encode(&g, m, self.float_bits, &mut self.rng)?;
        Ok(OracleReply { message: enc.decoded, primal: None, bits: enc.bits, calls: r as u64 })
    }
}

/// State of the shared recursion after step `t`.
#[derive(Debug, Clone)]
pub struct Accelerated {
    pub t: usize,
    /// `λ_t` (`x_t` in the primal method).
    pub lambda: Vec<f64>,
    /// Last query point `μ_t` (`y_t`).
    pub mu: Vec<f64>,
    /// `z_{t−1}` used by the last step; empty before the first step.
    pub z: Vec<f64>,
    /// `S_t = Σ_{i≤t} α_i G_i`.
    pub weighted_sum: Vec<f64>,
    /// `A_t`
    pub a_sum: f64,
    /// Running average of primal restorations, when the oracle supplies them.
    pub primal: Option<Vec<f64>>,
    pub calls: u64,
    pub bits: u64,
    pub last_message: Vec<f64>,
}

impl Accelerated {
    /// Initial call at `μ_0 = 0`. The schedule is assumed validated.
    pub fn start(oracle: &mut dyn QuantizedOracle, schedule: &Schedule) -> Result<Self> {
        if schedule.alpha.is_empty() {
            return Err(invalid("schedule", "empty"));
        }
        let n = oracle.dim();
        let mu = vec![0.0; n];
        let reply = oracle.call(&mu, 0, schedule.r[0], schedule.m[0])?;
        check_len(&reply.message, n)?;
        let (a0, b0) = (schedule.alpha[0], schedule.beta[0]);
        let lambda = reply.message.iter().map(|g| -a0 / b0 * g).collect();
        let weighted_sum = reply.message.iter().map(|g| a0 * g).collect();
        Ok(Self {
            t: 0,
            lambda,
            mu,
            z: Vec::new(),
            weighted_sum,
            a_sum: a0,
            primal: reply.primal,
            calls: reply.calls,
            bits: reply.bits,
            last_message: reply.message,
        })
    }

    /// Advances from `t` to `t + 1`.
    pub fn step(&mut self, oracle: &mut dyn QuantizedOracle, schedule: &Schedule) -> Result<()> {
        let t = self.t;
        if t + 1 >= schedule.alpha.len() {
            return Err(invalid("schedule", format!("no coefficients for step {}", t + 1)));
        }
        let beta = schedule.beta[t];
        let alpha_next = schedule.alpha[t + 1];
        let z: Vec<f64> = self.weighted_sum.iter().map(|s| -s / beta).collect();
        let a_next = self.a_sum + alpha_next;
        let tau = alpha_next / a_next;
        let mu: Vec<f64> = z.iter().zip(&self.lambda).map(|(z, l)| tau * z + (1.0 - tau) * l).collect();

        let reply = oracle.call(&mu, t + 1, schedule.r[t + 1], schedule.m[t + 1])?;
        check_len(&reply.message, mu.len())?;
        let g = &reply.message;
        for ((l, zi), gi) in self.lambda.iter_mut().zip(&z).zip(g) {
            let mu_hat = zi - alpha_next / beta * gi;
            *l = tau * mu_hat + (1.0 - tau) * *l;
        }
        match (&mut self.primal, &reply.primal) {
            (Some(avg), Some(x)) => avg.iter_mut().zip(x).for_each(|(a, v)| *a = tau * v + (1.0 - tau) * *a),
            (None, None) => {}
            _ => return Err(Error::Numeric("oracle switched primal restoration on or off".into())),
        }
        axpy(alpha_next, g, &mut self.weighted_sum);
        self.a_sum = a_next;
        self.mu = mu;
        self.z = z;
        self.calls += reply.calls;
        self.bits += reply.bits;
        self.last_message = reply.message;
        self.t = t + 1;
        Ok(())
    }
}

fn check_len(v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: v.len() });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite oracle message".into()));
    }
    Ok(())
}

fn base_row(state: &Accelerated, schedule: &Schedule) -> TraceRow {
    let t = state.t;
    TraceRow {
        t,
        dual_value: f64::NAN,
        primal_gap: f64::NAN,
        gap: f64::NAN,
        calls: state.calls,
        bits: state.bits,
        r: schedule.r[t],
        m: schedule.m[t],
        alpha: schedule.alpha[t],
        beta: schedule.beta[t],
    }
}

#[derive(Debug, Clone)]
pub struct PrimalRun {
    pub x: Vec<f64>,
    pub trace: RunTrace,
}

/// Unconstrained objective seen through a stochastic gradient oracle.
pub struct PrimalProblem<'a> {
    pub oracle: &'a dyn GradientOracle,
    pub lipschitz: f64,
    /// `min f`, when known.
    pub optimum: Option<f64>,
}

/// Primal accelerated method on `min f`. The trace's `primal_gap` column is
/// `f(x_t) − f*` when both the objective value and the optimum are known.
pub fn primal_solve(
    problem: &PrimalProblem,
    schedule: &Schedule,
    horizon: usize,
    codec: Codec,
    float_bits: u32,
    rng: SimRng,
) -> Result<PrimalRun> {
    let PrimalProblem { oracle, lipschitz, optimum } = *problem;
    if schedule.horizon() < horizon {
        return Err(invalid("schedule", format!("covers {} steps, {horizon} requested", schedule.horizon())));
    }
    let schedule = schedule.truncated(horizon);
    ensure_valid(&schedule, lipschitz)?;
    let mut q = GradientPps { oracle, codec, float_bits, rng };
    let mut state = Accelerated::start(&mut q, &schedule)?;
    let mut trace = RunTrace::default();
    let row = |s: &Accelerated| {
        let mut r = base_row(s, &schedule);
        if let (Some(v), Some(fs)) = (oracle.value(&s.lambda), optimum) {
            r.primal_gap = v - fs;
        }
        r
    };
    trace.rows.push(row(&state));
    while state.t < horizon {
        state.step(&mut q, &schedule)?;
        trace.rows.push(row(&state));
    }
    Ok(PrimalRun { x: state.lambda, trace })
}

#[derive(Debug, Clone)]
pub struct PrimalDualRun {
    pub lambda: Vec<f64>,
    pub x: Vec<f64>,
    pub trace: RunTrace,
}

/// Options of [`primal_dual_solve`].
#[derive(Debug, Clone, Copy)]
pub struct PrimalDualOptions {
    pub codec: Codec,
    pub float_bits: u32,
    /// When set together with a reference solution, the final gap is compared
    /// against the accuracy bound and a note is added on violation.
    pub constants: Option<TheoryConstants>,
}

impl Default for PrimalDualOptions {
    fn default() -> Self {
        Self { codec: Codec::Pps { simplified: false }, float_bits: 64, constants: None }
    }
}

/// Primal-dual method for `min f(x)` s.t. `Ax = b`.
pub fn primal_dual_solve(
    problem: &AffineProblem,
    schedule: &Schedule,
    horizon: usize,
    options: PrimalDualOptions,
    rng: SimRng,
) -> Result<PrimalDualRun> {
    if schedule.horizon() < horizon {
        return Err(invalid("schedule", format!("covers {} steps, {horizon} requested", schedule.horizon())));
    }
    let schedule = schedule.truncated(horizon);
    ensure_valid(&schedule, problem.lipschitz)?;
    let mut q = AffineOracle { problem, codec: options.codec, float_bits: options.float_bits, rng };
    let mut state = Accelerated::start(&mut q, &schedule)?;
    let mut trace = RunTrace::default();
    let row = |s: &Accelerated| {
        let mut r = base_row(s, &schedule);
        r.dual_value = problem.dual_value(&s.lambda).unwrap_or(f64::NAN);
        let x = s.primal.as_deref().expect("affine oracle restores the primal");
        r.gap = feasibility_gap(problem, x);
        if let (Some(reference), Some(v)) = (&problem.reference, problem.objective.primal_value(x)) {
            r.primal_gap = v - reference.value;
        }
        r
    };
    trace.rows.push(row(&state));
    while state.t < horizon {
        state.step(&mut q, &schedule)?;
        trace.rows.push(row(&state));
    }
    if let (Some(c), Some(last)) = (options.constants, trace.rows.last()) {
        let eps = epsilon_bound(&schedule, problem.radius, problem.lipschitz, problem.a_norm(), &c, BoundKind::PrimalDual)?;
        if last.primal_gap > eps {
            trace.notes.push(format!("objective gap {:e} exceeds the accuracy bound {eps:e}", last.primal_gap));
        }
        if last.gap > eps / problem.radius {
            trace.notes.push(format!("feasibility gap {:e} exceeds the bound {:e}", last.gap, eps / problem.radius));
        }
        if let Some(r) = &problem.reference {
            let norm = crate::linalg::norm(&r.lambda);
            if norm > problem.radius {
                trace.notes.push(format!("‖λ*‖ = {norm:e} exceeds the configured radius {:e}", problem.radius));
            }
        }
    }
    let x = state.primal.take().expect("affine oracle restores the primal");
    Ok(PrimalDualRun { lambda: state.lambda, x, trace })
}
