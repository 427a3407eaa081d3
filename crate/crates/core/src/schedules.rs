//! Coefficient sequences `α_t`, `β_t`, sample-size policies `r_t`, `M_t`,
//! and the theory constants / accuracy bound that go with them.
//!
//! A schedule is materialised for `t = 0..=T` and checked against three
//! conditions before any solver uses it:
//!
//! 1. `α₀ ∈ (0, 1]`
//! 2. `L < β_t ≤ β_{t+1}`
//! 3. `α_t² β_t ≤ β_{t−1} A_t` for `t ≥ 1`, where `A_t = Σ_{i≤t} α_i`

use std::f64::consts::{E, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quantize::{pps_sigma2, pps_sigma2_simplex};

/// Relative margin keeping `β_t` strictly above `L` when the variance proxy vanishes.
pub const BETA_MARGIN: f64 = 1e-9;

/// Smallest `β` the builder emits: strictly above `L`, and positive when `L = 0`.
pub fn beta_floor(lipschitz: f64) -> f64 {
    if lipschitz > 0.0 {
        lipschitz * (1.0 + BETA_MARGIN)
    } else {
        BETA_MARGIN
    }
}

/// Rounds a non-negative real sample count up to an integer, floored at 1.
/// Values within 1e-9 (relative) of an integer are snapped first so that
/// round-off does not add a spurious sample.
pub fn ceil_count(x: f64) -> usize {
    if !(x > 1.0) {
        return 1;
    }
    let near = x.round();
    let v = if (x - near).abs() <= 1e-9 * x { near } else { x.ceil() };
    v as usize
}

pub fn default_alpha(t: usize) -> f64 {
    (t as f64 + 1.0) / (2.0 * SQRT_2)
}

/// `β_t = L + σ_{r_t,M_t} (t+2)^{3/2} / (2^{1/4} √3 R)`
pub fn default_beta(t: usize, lipschitz: f64, radius: f64, sigma_rm: f64) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(invalid("R", "must be positive"));
    }
    Ok(lipschitz + sigma_rm * (t as f64 + 2.0).powf(1.5) / (2f64.powf(0.25) * 3f64.sqrt() * radius))
}

/// `M = 2(1 − 1/n) B² r / (e σ²)`, balancing quantization and oracle noise.
pub fn m_from_r(r: usize, n: usize, b: f64, sigma: f64) -> Result<usize> {
    if !(sigma > 0.0) {
        return Err(invalid("sigma", "must be positive to derive M from r"));
    }
    let nf = n as f64;
    Ok(ceil_count(2.0 * (1.0 - 1.0 / nf) * b * b * r as f64 / (E * sigma * sigma)))
}

/// `r = e σ² M / (2(1 − 1/n) B²)`, the inverse relation of [`m_from_r`].
pub fn r_from_m(m: usize, n: usize, b: f64, sigma: f64) -> Result<usize> {
    let denom = 2.0 * (1.0 - 1.0 / n as f64) * b * b;
    if !(denom > 0.0) {
        return Err(invalid("n, B", "need n > 1 and B > 0 to derive r from M"));
    }
    Ok(ceil_count(E * sigma * sigma * m as f64 / denom))
}

/// Constants of the high-probability bounds for confidence level `δ` and
/// poly-log factor `J(T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    pub delta: f64,
    pub j: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c1p: f64,
    pub c2p: f64,
}

pub fn theory_constants(delta: f64, j: f64) -> Result<TheoryConstants> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("delta", "must lie in (0, 1)"));
    }
    if !(j >= 0.0) {
        return Err(invalid("J", "must be non-negative"));
    }
    let l5 = (5.0 / delta).ln();
    let l4 = (4.0 / delta).ln();
    let s5 = (3.0 * l5).sqrt();
    let s4 = (3.0 * l4).sqrt();
    let lead = 2.0 * j + SQRT_2 - 1.0;
    let c1 = lead * (SQRT_2 + (SQRT_2 + 1.0) * s5) + SQRT_2 - 2.0;
    Ok(TheoryConstants {
        delta,
        j,
        c1,
        c2: 1.0 + l5,
        c3: c1 + 2.0 * SQRT_2 * j * (1.0 + s5),
        c4: SQRT_2 * (1.0 + s5),
        c1p: lead * (SQRT_2 + (SQRT_2 + 1.0) * s4) + SQRT_2 - 2.0,
        c2p: 1.0 + l4,
    })
}

/// Problem-scale quantities the variable policies depend on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyScale {
    pub eps: f64,
    pub lipschitz: f64,
    pub radius: f64,
    pub a_norm: f64,
}

impl PolicyScale {
    fn check(&self) -> Result<()> {
        for (name, v) in [("epsilon", self.eps), ("L", self.lipschitz), ("R", self.radius), ("A_norm", self.a_norm)] {
            if !(v > 0.0) {
                return Err(invalid(name, "must be positive"));
            }
        }
        Ok(())
    }

    fn bracket(&self, c: &TheoryConstants) -> f64 {
        let mixed = c.c3 + c.c4 * self.lipschitz / (self.a_norm * self.radius);
        (18.0 * c.c2 * c.c2).max(mixed * mixed)
    }
}

/// Growing batch size (noise-dominated regime).
pub fn variable_r(alpha_t: f64, sigma: f64, consts: &TheoryConstants, scale: &PolicyScale) -> Result<usize> {
    scale.check()?;
    Ok(ceil_count(34.0 * sigma * sigma * alpha_t / (scale.eps * scale.lipschitz) * scale.bracket(consts)))
}

/// Growing sample count (small-noise regime).
pub fn variable_m(alpha_t: f64, n: usize, b: f64, consts: &TheoryConstants, scale: &PolicyScale) -> Result<usize> {
    scale.check()?;
    let q = (1.0 - 1.0 / n as f64) * b * b;
    Ok(ceil_count(68.0 * q * alpha_t / (scale.eps * E * scale.lipschitz) * scale.bracket(consts)))
}

/// Iterations for the constant-batch policy (`r_t = r`, `M_t` from `r`)
/// to reach accuracy `eps`: the oracle-call count divided by `r`.
pub fn constant_batch_iterations(r: usize, sigma: f64, consts: &TheoryConstants, scale: &PolicyScale) -> Result<usize> {
    scale.check()?;
    let PolicyScale { eps, lipschitz: l, radius: rr, a_norm } = *scale;
    let rf = r as f64;
    let det = 2.0 * 3f64.sqrt() * (l * rr * rr / eps).sqrt();
    let noise_r = 1200.0 * (2f64.powf(0.25) * consts.c2 + consts.c3).powi(2) * sigma * sigma * rr * rr / (eps * eps) / rf;
    let noise_l = 1200.0 * consts.c4 * consts.c4 * sigma * sigma * l * l / (eps * eps * a_norm * a_norm) / rf;
    Ok(ceil_count(det.max(noise_r).max(noise_l)))
}

/// How `σ_{r,M}` is computed from the active sample sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceModel {
    /// Dimension of the quantized vectors.
    pub n: usize,
    /// ℓ₁ bound on raw stochastic gradients.
    pub b: f64,
    /// Sub-Gaussian parameter of the raw oracle.
    pub sigma: f64,
    /// Use the simplex variant of the bound (unit-mass gradients).
    #[serde(default)]
    pub simplex: bool,
    /// `false` drops the quantization term (dense transmission).
    #[serde(default = "yes")]
    pub quantized: bool,
}

fn yes() -> bool {
    true
}

impl VarianceModel {
    pub fn sigma2(&self, r: usize, m: usize) -> f64 {
        match (self.quantized, self.simplex) {
            (false, _) => 50.0 * self.sigma * self.sigma / r as f64,
            (true, true) => pps_sigma2_simplex(r, m, self.n, self.sigma),
            (true, false) => pps_sigma2(r, m, self.n, self.b, self.sigma),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum SamplePolicy {
    Constant { r: usize, m: usize },
    /// Constant batch `r`, `M` balanced to it.
    MFromR { r: usize },
    /// Constant `M`, batch balanced to it.
    RFromM { m: usize },
    /// Batch grows with `α_t`; `M` balanced to it.
    VariableR { eps: f64 },
    /// `M` grows with `α_t`; batch balanced to it.
    VariableM { eps: f64 },
}

/// Everything needed to materialise a [`Schedule`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleSpec {
    pub lipschitz: f64,
    pub radius: f64,
    pub a_norm: f64,
    pub delta: f64,
    pub j: f64,
    pub policy: SamplePolicy,
    pub variance: VarianceModel,
}

impl ScheduleSpec {
    fn samples(&self, t: usize, consts: &TheoryConstants) -> Result<(usize, usize)> {
        let v = &self.variance;
        let scale = |eps| PolicyScale { eps, lipschitz: self.lipschitz, radius: self.radius, a_norm: self.a_norm };
        Ok(match self.policy {
            SamplePolicy::Constant { r, m } => (r.max(1), m.max(1)),
            SamplePolicy::MFromR { r } => (r.max(1), m_from_r(r.max(1), v.n, v.b, v.sigma)?),
            SamplePolicy::RFromM { m } => (r_from_m(m.max(1), v.n, v.b, v.sigma)?, m.max(1)),
            SamplePolicy::VariableR { eps } => {
                let r = variable_r(default_alpha(t), v.sigma, consts, &scale(eps))?;
                (r, m_from_r(r, v.n, v.b, v.sigma)?)
            }
            SamplePolicy::VariableM { eps } => {
                let m = variable_m(default_alpha(t), v.n, v.b, consts, &scale(eps))?;
                (r_from_m(m, v.n, v.b, v.sigma)?, m)
            }
        })
    }

    pub fn constants(&self) -> Result<TheoryConstants> {
        theory_constants(self.delta, self.j)
    }

    /// Default `α`, `β` with the policy's `r_t`, `M_t` for `t = 0..=horizon`.
    /// `σ_{r_t,M_t}` is recomputed from the active sample sizes each step.
    pub fn build(&self, horizon: usize) -> Result<Schedule> {
        let consts = self.constants()?;
        let mut s = Schedule::with_capacity(horizon + 1);
        for t in 0..=horizon {
            let (r, m) = self.samples(t, &consts)?;
            let sigma_rm = self.variance.sigma2(r, m).sqrt();
            let beta = default_beta(t, self.lipschitz, self.radius, sigma_rm)?.max(beta_floor(self.lipschitz));
            s.push(default_alpha(t), beta, r, m, sigma_rm);
        }
        Ok(s)
    }
}

/// Materialised coefficient sequences for `t = 0..=T`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Schedule {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub r: Vec<usize>,
    pub m: Vec<usize>,
    /// `σ_{r_t,M_t}` used for `β_t` and the accuracy bound.
    pub sigma_rm: Vec<f64>,
}

impl Schedule {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            alpha: Vec::with_capacity(n),
            beta: Vec::with_capacity(n),
            r: Vec::with_capacity(n),
            m: Vec::with_capacity(n),
            sigma_rm: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, alpha: f64, beta: f64, r: usize, m: usize, sigma_rm: f64) {
        self.alpha.push(alpha);
        self.beta.push(beta);
        self.r.push(r);
        self.m.push(m);
        self.sigma_rm.push(sigma_rm);
    }

    /// Constant `β`, default `α`, fixed sample sizes.
    pub fn constant(horizon: usize, beta: f64, r: usize, m: usize) -> Self {
        let mut s = Self::with_capacity(horizon + 1);
        for t in 0..=horizon {
            s.push(default_alpha(t), beta, r, m, 0.0);
        }
        s
    }

    /// Last index `T`.
    pub fn horizon(&self) -> usize {
        self.alpha.len().saturating_sub(1)
    }

    /// `A_t = Σ_{i≤t} α_i` for every `t`.
    pub fn cumulative_alpha(&self) -> Vec<f64> {
        self.alpha
            .iter()
            .scan(0.0, |acc, a| {
                *acc += a;
                Some(*acc)
            })
            .collect()
    }

    pub fn truncated(&self, horizon: usize) -> Schedule {
        let k = (horizon + 1).min(self.alpha.len());
        Schedule {
            alpha: self.alpha[..k].to_vec(),
            beta: self.beta[..k].to_vec(),
            r: self.r[..k].to_vec(),
            m: self.m[..k].to_vec(),
            sigma_rm: self.sigma_rm[..k].to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    AlphaZero(f64),
    BetaNotAboveL { t: usize, beta: f64 },
    BetaDecreasing { t: usize },
    Growth { t: usize, lhs: f64, rhs: f64 },
    BadSampleSize { t: usize },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::AlphaZero(a) => write!(f, "alpha_0 = {a} outside (0, 1]"),
            Violation::BetaNotAboveL { t, beta } => write!(f, "beta_{t} = {beta} not above L"),
            Violation::BetaDecreasing { t } => write!(f, "beta_{} < beta_{t}", t + 1),
            Violation::Growth { t, lhs, rhs } => write!(f, "alpha_{t}^2 beta_{t} = {lhs} > beta_{}·A_{t} = {rhs}", t - 1),
            Violation::BadSampleSize { t } => write!(f, "zero sample size at t = {t}"),
        }
    }
}

/// Checks the three coefficient conditions on `t = 0..=min(T, horizon)`.
pub fn validate(schedule: &Schedule, lipschitz: f64, horizon: usize) -> Vec<Violation> {
    let mut out = Vec::new();
    if schedule.alpha.is_empty() {
        return vec![Violation::AlphaZero(0.0)];
    }
    let last = horizon.min(schedule.horizon());
    let a0 = schedule.alpha[0];
    if !(a0 > 0.0 && a0 <= 1.0) {
        out.push(Violation::AlphaZero(a0));
    }
    let cum = schedule.cumulative_alpha();
    for t in 0..=last {
        let b = schedule.beta[t];
        if !(b > lipschitz) {
            out.push(Violation::BetaNotAboveL { t, beta: b });
        }
        if t < last && !(b <= schedule.beta[t + 1]) {
            out.push(Violation::BetaDecreasing { t });
        }
        if t >= 1 {
            let lhs = schedule.alpha[t] * schedule.alpha[t] * b;
            let rhs = schedule.beta[t - 1] * cum[t];
            if !(lhs <= rhs) {
                out.push(Violation::Growth { t, lhs, rhs });
            }
        }
        if schedule.r[t] == 0 || schedule.m[t] == 0 {
            out.push(Violation::BadSampleSize { t });
        }
    }
    out
}

pub fn ensure_valid(schedule: &Schedule, lipschitz: f64) -> Result<()> {
    let v = validate(schedule, lipschitz, schedule.horizon());
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidSchedule(v.iter().take(5).map(ToString::to_string).collect()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    PrimalDual,
    Primal,
}

/// High-probability accuracy `ε(T, δ, α, β, r, M)` for the whole schedule.
pub fn epsilon_bound(
    schedule: &Schedule,
    radius: f64,
    lipschitz: f64,
    a_norm: f64,
    consts: &TheoryConstants,
    kind: BoundKind,
) -> Result<f64> {
    let all = epsilon_bounds(schedule, radius, lipschitz, a_norm, consts, kind)?;
    Ok(*all.last().unwrap())
}

/// `ε` for every prefix: entry `T` is the bound for the schedule truncated to
/// horizon `T`.
pub fn epsilon_bounds(
    schedule: &Schedule,
    radius: f64,
    lipschitz: f64,
    a_norm: f64,
    consts: &TheoryConstants,
    kind: BoundKind,
) -> Result<Vec<f64>> {
    if schedule.alpha.is_empty() {
        return Err(invalid("schedule", "empty"));
    }
    let (mid, tail) = match kind {
        BoundKind::PrimalDual => {
            if !(a_norm > 0.0) {
                return Err(invalid("A_norm", "must be positive"));
            }
            (consts.c3 * radius + consts.c4 * lipschitz / a_norm, consts.c2)
        }
        BoundKind::Primal => (consts.c1p * radius, consts.c2p),
    };
    let cum = schedule.cumulative_alpha();
    let mut out = Vec::with_capacity(cum.len());
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for t in 0..schedule.alpha.len() {
        let gap = schedule.beta[t] - lipschitz;
        if !(gap > 0.0) {
            return Err(Error::InvalidSchedule(vec![Violation::BetaNotAboveL { t, beta: schedule.beta[t] }.to_string()]));
        }
        let s2t = schedule.sigma_rm[t] * schedule.sigma_rm[t];
        s1 += schedule.alpha[t] * schedule.alpha[t] * s2t;
        if s2t > 0.0 {
            s2 += cum[t] * s2t / gap;
        }
        let at = cum[t];
        out.push(schedule.beta[t] * radius * radius / (2.0 * at) + mid / at * s1.sqrt() + tail / at * s2);
    }
    Ok(out)
}

/// Both sides of the coefficient identities for `α_t = (t+1)/a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoeffIdentities {
    /// `(1/A_T) √(Σ α_t²)` by direct summation.
    pub ratio: f64,
    /// `√(2(2T+3) / (3(T+1)(T+2)))`.
    pub ratio_closed_form: f64,
    /// `(2/√3)/√T`.
    pub ratio_bound: f64,
    /// `(1/A_T) Σ A_t / (t+2)^{3/2}` by direct summation.
    pub weighted: f64,
    /// `(2/3)/√T`.
    pub weighted_bound: f64,
}

pub fn coeff_identities(a: f64, horizon: usize) -> CoeffIdentities {
    let mut sum_sq = 0.0;
    let mut cum = 0.0;
    let mut weighted = 0.0;
    for t in 0..=horizon {
        let alpha = (t as f64 + 1.0) / a;
        sum_sq += alpha * alpha;
        cum += alpha;
        weighted += cum / (t as f64 + 2.0).powf(1.5);
    }
    let tf = horizon as f64;
    CoeffIdentities {
        ratio: sum_sq.sqrt() / cum,
        ratio_closed_form: (2.0 * (2.0 * tf + 3.0) / (3.0 * (tf + 1.0) * (tf + 2.0))).sqrt(),
        ratio_bound: 2.0 / 3f64.sqrt() / tf.sqrt(),
        weighted: weighted / cum,
        weighted_bound: 2.0 / 3.0 / tf.sqrt(),
    }
}
