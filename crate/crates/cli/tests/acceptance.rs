//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). Pass criterion numbers as
//! arguments to run a subset, e.g. `cargo test --test acceptance -- 7 9`.

use std::f64::consts::SQRT_2;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use pps_cli::compare::Column;
use pps_cli::{compare_files, run_config, Experiment, RunConfig};
use pps_core::linalg::{dist, norm, norm1};
use pps_core::network::{
    decentralized_solve, Decentralized, DecentralizedOptions, LiftedOracle, NetworkProblem, Topology,
};
use pps_core::oracles::NoiseModel;
use pps_core::problems::{ConjugateOracle, LogSumExp, QuadraticLocal, SemiDiscreteWb};
use pps_core::quantize::{
    decode_from_bytes, encode_to_bytes, estimate_second_moment, message_bits, pps_decode, pps_encode, wire_size,
    Codec, Encoding, OneHotCompressor, QuantizedGradient, RandomMCompressor,
};
use pps_core::rng::{seeded, stream};
use pps_core::schedules::{
    coeff_identities, constant_batch_iterations, validate, PolicyScale, SamplePolicy, ScheduleSpec, VarianceModel,
};
use pps_core::solvers::{Accelerated, TraceRow};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_simplex(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn one_hot_identity() -> Check {
    let mut rng = seeded(101);
    let mut worst_exact = 0.0f64;
    for n in 2..=6 {
        for _ in 0..100 {
            let v = random_simplex(n, &mut rng);
            let lhs: f64 = (0..n)
                .map(|k| {
                    let mut e = vec![0.0; n];
                    e[k] = 1.0;
                    v[k] * dist(&v, &e).powi(2)
                })
                .sum();
            let rhs = 1.0 - norm(&v).powi(2);
            worst_exact = worst_exact.max((lhs - rhs).abs());
        }
    }
    ensure(worst_exact <= 1e-12, || format!("enumeration off by {worst_exact:e}"))?;
    let mut worst_mc = 0.0f64;
    for _ in 0..100 {
        let v = random_simplex(10, &mut rng);
        let stats = estimate_second_moment(&OneHotCompressor, &v, 100_000, &mut rng).map_err(|e| e.to_string())?;
        let rhs = 1.0 - norm(&v).powi(2);
        worst_mc = worst_mc.max((stats.empirical_second_moment - rhs).abs() / rhs);
    }
    ensure(worst_mc <= 0.01, || format!("Monte-Carlo relative error {worst_mc:.4}"))?;
    Ok(format!("enumeration error {worst_exact:.1e}, n=10 Monte-Carlo relative error {worst_mc:.2e}"))
}

fn pps_unbiased() -> Check {
    const N: usize = 100_000;
    let mut rng = seeded(102);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let v: Vec<f64> =
            (0..50).map(|_| if rng.random::<f64>() < 0.1 { 0.0 } else { rng.random_range(-1.0..1.0) }).collect();
        for m in [1, 4, 16] {
            let mut sum = vec![0.0; 50];
            let mut sum_sq = vec![0.0; 50];
            for _ in 0..N {
                let d = pps_decode(&pps_encode(&v, m, &mut rng).map_err(|e| e.to_string())?);
                for k in 0..50 {
                    sum[k] += d[k];
                    sum_sq[k] += d[k] * d[k];
                }
            }
            for k in 0..50 {
                let mean = sum[k] / N as f64;
                let var = (sum_sq[k] / N as f64 - mean * mean).max(0.0);
                let err = (mean - v[k]).abs();
                if var == 0.0 {
                    ensure(err <= 1e-12, || format!("constant coordinate {k} biased by {err:e}"))?;
                } else {
                    let z = err / (var / N as f64).sqrt();
                    worst = worst.max(z);
                }
            }
        }
    }
    ensure(worst <= 6.0, || format!("largest standardised deviation {worst:.2} > 6"))?;
    Ok(format!("largest standardised deviation {worst:.2} (limit 6)"))
}

fn random_m_second_moment() -> Check {
    let mut rng = seeded(103);
    let x: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
    let stats = estimate_second_moment(&RandomMCompressor { m: 5 }, &x, 100_000, &mut rng).map_err(|e| e.to_string())?;
    let expected = 10.0 / 5.0 - 1.0;
    let rel = (stats.relative_second_moment - expected).abs() / expected;
    ensure(rel <= 0.05, || format!("ratio {:.4} vs {expected}", stats.relative_second_moment))?;
    Ok(format!("E‖Q(x)−x‖²/‖x‖² = {:.4} vs n/M − 1 = {expected} ({:.2}% off)", stats.relative_second_moment, 100.0 * rel))
}

fn random_message(dim: usize, rng: &mut impl Rng) -> (QuantizedGradient, u32) {
    let fb = if rng.random::<bool>() { 32 } else { 64 };
    let m = rng.random_range(1..=200);
    let mut idx = |count: usize| (0..count).map(|_| rng.random_range(0..dim as u32)).collect::<Vec<u32>>();
    let pos_indices = idx(m);
    let neg_indices = idx(m);
    let mut q = QuantizedGradient::empty(dim, Encoding::General);
    match rng.random_range(0..4) {
        0 => {
            q.encoding = Encoding::Simplified;
            q.pos_mass = 1.0;
            q.pos_indices = pos_indices;
        }
        1 => {
            q.encoding = Encoding::Simplified;
            q.pos_mass = rng.random_range(0.1..10.0);
            q.pos_indices = pos_indices;
        }
        2 => {
            q.neg_mass = rng.random_range(0.1..10.0);
            q.neg_indices = neg_indices;
        }
        _ => {
            q.pos_mass = rng.random_range(0.1..10.0);
            q.neg_mass = rng.random_range(0.1..10.0);
            q.pos_indices = pos_indices;
            q.neg_indices = neg_indices;
        }
    }
    (q, fb)
}

fn bit_accounting() -> Check {
    let mut rng = seeded(104);
    let dims = [2usize, 1_000, 1_000_000];
    for i in 0..1000 {
        let (q, fb) = random_message(dims[i % 3], &mut rng);
        let bytes = encode_to_bytes(&q, fb).map_err(|e| e.to_string())?;
        let size = wire_size(&q, fb).map_err(|e| e.to_string())?;
        let bits = message_bits(&q, fb);
        ensure(size.payload_bits == bits, || format!("message {i}: payload {} vs {bits}", size.payload_bits))?;
        ensure((bytes.len() - size.header_bytes) as u64 == bits.div_ceil(8), || {
            format!("message {i}: {} payload bytes for {bits} bits", bytes.len() - size.header_bytes)
        })?;
        let back = decode_from_bytes(&bytes, q.dim).map_err(|e| e.to_string())?;
        ensure(back.pos_indices == q.pos_indices && back.neg_indices == q.neg_indices, || format!("message {i}: indices differ"))?;
    }
    let mut q = QuantizedGradient::empty(10_000, Encoding::General);
    q.pos_mass = 1.5;
    q.neg_mass = 0.25;
    q.pos_indices = (0..100).collect();
    q.neg_indices = (9_900..10_000).collect();
    let bytes = encode_to_bytes(&q, 32).map_err(|e| e.to_string())?;
    let size = wire_size(&q, 32).map_err(|e| e.to_string())?;
    let payload = (bytes.len() - size.header_bytes) * 8;
    ensure(message_bits(&q, 32) == 2864 && payload == 2864, || format!("worked example gives {payload} bits"))?;
    Ok("1000 messages round-trip with payload = message_bits; worked example 2864 bits".into())
}

fn coefficient_identity() -> Check {
    let mut worst = 0.0f64;
    for a in [1.0, 2.0 * SQRT_2, 10.0] {
        for t in 1..=1000 {
            let c = coeff_identities(a, t);
            worst = worst.max((c.ratio - c.ratio_closed_form).abs());
            ensure(c.ratio <= c.ratio_bound, || format!("a={a}, T={t}: ratio bound fails"))?;
            ensure(c.weighted <= c.weighted_bound, || format!("a={a}, T={t}: weighted bound fails"))?;
        }
    }
    ensure(worst <= 1e-12, || format!("identity off by {worst:e}"))?;
    Ok(format!("identity error {worst:.1e}; both inequalities hold for T ≤ 1000"))
}

fn schedule_validity() -> Check {
    const T: usize = 10_000;
    let grid = [0.1, 1.0, 10.0];
    let policies = [
        SamplePolicy::Constant { r: 1, m: 1 },
        SamplePolicy::MFromR { r: 4 },
        SamplePolicy::RFromM { m: 16 },
        SamplePolicy::VariableR { eps: 0.1 },
        SamplePolicy::VariableM { eps: 0.1 },
    ];
    let mut count = 0;
    for &l in &grid {
        for &r in &grid {
            for &sigma in &grid {
                for policy in policies {
                    let spec = ScheduleSpec {
                        lipschitz: l,
                        radius: r,
                        a_norm: 1.0,
                        delta: 0.1,
                        j: 1.0,
                        policy,
                        variance: VarianceModel { n: 10, b: 1.0, sigma, simplex: false, quantized: true },
                    };
                    let s = spec.build(T).map_err(|e| format!("{policy:?} at L={l}, R={r}, σ={sigma}: {e}"))?;
                    let v = validate(&s, l, T);
                    ensure(v.is_empty(), || format!("{policy:?} at L={l}, R={r}, σ={sigma}: {}", v[0]))?;
                    count += 1;
                }
            }
        }
    }
    Ok(format!("{count} schedules of length 10⁴ satisfy all three conditions"))
}

const QUAD_CONFIG: &str = r#"
seed = 1
solver = "primal_dual"

[stopping]
iterations = 1000

[problem]
kind = "quadratic"
dim = 10
constraints = 3
seed = 7

[schedule]
policy = "constant"
r = 1
m = 10000
quantized = false
"#;

/// Least-squares slope of `ln y` against `ln t` over `t ∈ [lo, hi]`.
fn loglog_slope(rows: &[TraceRow], lo: usize, hi: usize, y: impl Fn(&TraceRow) -> f64) -> f64 {
    let pts: Vec<(f64, f64)> =
        rows.iter().filter(|r| r.t >= lo && r.t <= hi).map(|r| ((r.t as f64).ln(), y(r).ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

fn exact_solve() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = RunConfig::parse(QUAD_CONFIG).map_err(|e| e.to_string())?;
    let run = run_config(&cfg, "pps", Some(dir.path())).map_err(|e| e.to_string())?;
    let last = run.outcome.trace.last().unwrap();
    ensure(last.primal_gap.abs() <= 1e-3 && last.gap <= 1e-3, || {
        format!("T=1000: |f − f*| = {:e}, ‖Ax − b‖ = {:e}", last.primal_gap, last.gap)
    })?;
    let mut dense = cfg.clone();
    dense.codec = Some(Codec::Identity);
    let base = run_config(&dense, "dense", Some(dir.path())).map_err(|e| e.to_string())?;
    let rows = &base.outcome.trace.rows;
    let slope = loglog_slope(rows, 16, 512, |r| r.primal_gap.abs());
    ensure((slope + 2.0).abs() <= 0.15, || format!("f-gap slope {slope:.3} outside −2 ± 0.15"))?;
    Ok(format!(
        "T=1000: |f − f*| = {:.1e}, ‖Ax − b‖ = {:.1e}; unquantized f-gap slope on [16, 512] = {slope:.3}",
        last.primal_gap.abs(),
        last.gap
    ))
}

fn consensus() -> Check {
    let mut rng = seeded(108);
    let centres: Vec<Vec<f64>> = (0..5).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let nodes: Vec<Arc<dyn ConjugateOracle>> =
        centres.iter().map(|c| Arc::new(QuadraticLocal::identity(c.clone())) as Arc<dyn ConjugateOracle>).collect();
    let p = NetworkProblem::new(nodes, Topology::ring(5).map_err(|e| e.to_string())?, 1.0, None).map_err(|e| e.to_string())?;
    let spec = |l: f64, m: usize| ScheduleSpec {
        lipschitz: l,
        radius: 1.0,
        a_norm: 1.0,
        delta: 0.1,
        j: 1.0,
        policy: SamplePolicy::Constant { r: 1, m },
        variance: VarianceModel { n: 3, b: 1.0, sigma: 0.0, simplex: false, quantized: false },
    };
    let s = spec(p.lipschitz, 10_000).build(2000).map_err(|e| e.to_string())?;
    let opts = DecentralizedOptions { codec: Codec::Pps { simplified: false }, seed: 8, ..Default::default() };
    let run = decentralized_solve(&p, &s, 2000, &opts).map_err(|e| e.to_string())?;
    let mean: Vec<f64> = (0..3).map(|k| centres.iter().map(|c| c[k]).sum::<f64>() / 5.0).collect();
    let gap = run.trace.last().unwrap().gap;
    let far = run.x_nodes.iter().map(|x| dist(x, &mean)).fold(0.0, f64::max);
    ensure(gap <= 1e-2 && far <= 1e-2, || format!("consensus gap {gap:e}, distance to mean {far:e}"))?;

    let small: Vec<Arc<dyn ConjugateOracle>> = [vec![1.0, -0.5], vec![-0.3, 0.8]]
        .into_iter()
        .map(|c| Arc::new(QuadraticLocal::identity(c).with_noise(NoiseModel::truncated_gaussian(0.1))) as Arc<dyn ConjugateOracle>)
        .collect();
    let p2 = NetworkProblem::new(small, Topology::ring(2).map_err(|e| e.to_string())?, 1.0, None).map_err(|e| e.to_string())?;
    let s2 = spec(p2.lipschitz, 3).build(50).map_err(|e| e.to_string())?;
    let opts2 = DecentralizedOptions { codec: Codec::Pps { simplified: false }, seed: 9, ..Default::default() };
    let mut dec = Decentralized::start(&p2, &s2, &opts2).map_err(|e| e.to_string())?;
    let mut lifted = LiftedOracle::new(&p2, opts2.clone());
    let mut cen = Accelerated::start(&mut lifted, &s2).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for _ in 0..=50 {
        worst = worst.max(dist(&lifted.lift(&cen.lambda), &dec.lambda.concat()));
        worst = worst.max(dist(cen.primal.as_ref().unwrap(), &dec.x.concat()));
        if dec.t == 50 {
            break;
        }
        dec.step(&p2, &s2, &opts2).map_err(|e| e.to_string())?;
        cen.step(&mut lifted, &s2).map_err(|e| e.to_string())?;
    }
    ensure(worst <= 1e-12, || format!("simulator and centralised runs differ by {worst:e}"))?;
    Ok(format!("consensus gap {gap:.1e}, max distance to mean {far:.1e}; simulator vs centralised {worst:.1e}"))
}

const WB_CONFIG: &str = r#"
seed = 5
solver = "decentralized"

[stopping]
iterations = 2000

[problem]
kind = "wb"
support = 50
seed = 11

[topology]
kind = "ring"
m = 5

[schedule]
policy = "constant"
r = 10
m = 1
radius = 10.0

[codec]
kind = "pps"
simplified = true
"#;

fn communication_savings() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let pps = RunConfig::parse(WB_CONFIG).map_err(|e| e.to_string())?;
    let mut dense = pps.clone();
    dense.codec = Some(Codec::Identity);
    let runs: Vec<_> = [(pps, "pps"), (dense, "baseline")]
        .into_par_iter()
        .map(|(c, name)| run_config(&c, name, Some(dir.path())))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let rep = compare_files(&runs[0].paths.trace, &runs[1].paths.trace, Column::DualValue, 0.05).map_err(|e| e.to_string())?;
    let start = runs[1].outcome.trace.rows[0].dual_value;
    // share of the baseline's decrease that the quantized run achieves by its end
    let progress = (start - rep.final_a) / (start - rep.final_b);
    let fraction = rep.bits_fraction().ok_or_else(|| {
        format!("quantized run never within 5% of the baseline's {:.4} (ends at {:.4})", rep.final_b, rep.final_a)
    })?;
    ensure(fraction <= 0.1, || format!("needs {fraction:.3} of the baseline's bits"))?;
    Ok(format!(
        "within 5% of baseline dual {:.4} after {} bits = {:.2e} of its {} bits; final {:.4} ({:.0}% of the baseline's decrease)",
        rep.final_b,
        rep.bits_to_match.unwrap(),
        fraction,
        rep.bits_b,
        rep.final_a,
        100.0 * progress
    ))
}

fn log_sum_exp() -> Check {
    let mut rng = seeded(110);
    let mut worst_fd = 0.0f64;
    let mut worst_l1 = 0.0f64;
    for _ in 0..50 {
        let terms = rng.random_range(1..=20);
        let dim = rng.random_range(1..=20);
        let f = LogSumExp::random_row_stochastic(terms, dim, &mut rng);
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let g = f.gradient(&x);
        let h = 1e-5;
        let fd: Vec<f64> = (0..dim)
            .map(|i| {
                let mut up = x.clone();
                let mut dn = x.clone();
                up[i] += h;
                dn[i] -= h;
                (f.value(&up) - f.value(&dn)) / (2.0 * h)
            })
            .collect();
        worst_fd = worst_fd.max(dist(&g, &fd) / norm(&g));
        worst_l1 = worst_l1.max((norm1(&g) - 1.0).abs());
        let mut brute = 0.0f64;
        for i in 0..dim {
            let mut s = 0.0;
            for j in 0..terms {
                s += f.a[(j, i)] * f.a[(j, i)];
            }
            brute = brute.max(s);
        }
        // same sums in a different order, so only round-off may differ
        ensure((f.lipschitz() - brute).abs() <= 1e-12 * brute, || format!("L = {} vs brute force {brute}", f.lipschitz()))?;
    }
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    ensure(LogSumExp::new(a, vec![1.0, 1.0]).map_err(|e| e.to_string())?.lipschitz() == 1.0, || "permutation L ≠ 1".into())?;
    ensure(worst_fd <= 1e-6, || format!("finite-difference relative error {worst_fd:e}"))?;
    ensure(worst_l1 <= 1e-12, || format!("‖∇f‖₁ off by {worst_l1:e}"))?;
    Ok(format!("FD relative error {worst_fd:.1e}, |‖∇f‖₁ − 1| ≤ {worst_l1:.1e}, L matches brute force"))
}

fn wb_oracle() -> Check {
    let mut rng = seeded(111);
    let wb = SemiDiscreteWb::random_gaussians_1d(5, 50, None, &mut rng).map_err(|e| e.to_string())?;
    let (mut simplex, mut shift, mut fd) = (0.0f64, 0.0f64, 0.0f64);
    for node in 0..5 {
        let xs = wb.draw(node, 200, &mut rng);
        for _ in 0..4 {
            let lam: Vec<f64> = (0..50).map(|_| rng.random_range(-5.0..5.0)).collect();
            for x in &xs {
                let p = wb.sample_softmax(&lam, x);
                let low = p.iter().copied().fold(0.0, f64::min);
                simplex = simplex.max((p.iter().sum::<f64>() - 1.0).abs()).max(-low);
            }
            let g = wb.conjugate_gradient_on(node, &lam, &xs).map_err(|e| e.to_string())?;
            simplex = simplex.max((g.iter().sum::<f64>() - 1.0).abs());
            let v = wb.conjugate_value_on(node, &lam, &xs).map_err(|e| e.to_string())?;
            let shifted: Vec<f64> = lam.iter().map(|l| l + 3.7).collect();
            let vs = wb.conjugate_value_on(node, &shifted, &xs).map_err(|e| e.to_string())?;
            shift = shift.max((vs - v - 3.7).abs());
            let h = 1e-4;
            for k in 0..50 {
                let mut up = lam.clone();
                let mut dn = lam.clone();
                up[k] += h;
                dn[k] -= h;
                let d = (wb.conjugate_value_on(node, &up, &xs).unwrap() - wb.conjugate_value_on(node, &dn, &xs).unwrap()) / (2.0 * h);
                fd = fd.max((d - g[k]).abs());
            }
        }
    }
    ensure(simplex <= 1e-12, || format!("simplex violation {simplex:e}"))?;
    ensure(shift <= 1e-12, || format!("shift identity off by {shift:e}"))?;
    ensure(fd <= 1e-5, || format!("finite-difference mismatch {fd:e}"))?;
    Ok(format!("simplex violation {simplex:.1e}, shift error {shift:.1e}, CRN finite-difference error {fd:.1e}"))
}

fn large_deviation() -> Check {
    const SEEDS: u64 = 100;
    const NOISE_ITERATIONS: f64 = 300.0;
    let text = QUAD_CONFIG
        .replace("seed = 7", "seed = 7\nnoise = 0.0")
        .replace("policy = \"constant\"\nr = 1\nm = 10000\nquantized = false", "policy = \"m_from_r\"\nr = 1\ndelta = 0.2");
    let mut probe_cfg = RunConfig::parse(&text).map_err(|e| e.to_string())?;
    let probe = Experiment::build(&probe_cfg).map_err(|e| e.to_string())?;
    let pps_cli::experiment::Instance::PrimalDual(problem) = &probe.instance else {
        return Err("expected a primal-dual instance".into());
    };
    let mut spec = probe.spec;
    // ℓ₁ size of the noiseless dual gradient at the start, doubled for head-room
    let g0 = problem.dual_oracle(&vec![0.0; problem.dual_dim()], &mut stream(0, &[0])).map_err(|e| e.to_string())?;
    let b = 2.0 * norm1(&g0);
    let eps = 0.3 * spec.radius * b;
    let consts = spec.constants().map_err(|e| e.to_string())?;
    let scale = PolicyScale { eps, lipschitz: spec.lipschitz, radius: spec.radius, a_norm: spec.a_norm };
    // the noise term of the horizon grows as σ²; pick σ so it alone asks for about 300 steps
    let per_unit = constant_batch_iterations(1, 1e3, &consts, &scale).map_err(|e| e.to_string())? as f64 / 1e6;
    let sigma = (NOISE_ITERATIONS / per_unit).sqrt();
    // restoration noise s per coordinate gives σ = ‖A‖·s·√dim
    let noise_scale = sigma / (spec.a_norm * (problem.primal_dim() as f64).sqrt());
    if let pps_cli::config::ProblemSpec::Quadratic { noise, .. } = &mut probe_cfg.problem {
        *noise = noise_scale;
    }
    spec.variance.sigma = sigma;
    let horizon = constant_batch_iterations(1, sigma, &consts, &scale).map_err(|e| e.to_string())?;
    ensure(horizon <= 20_000, || format!("case-1 horizon {horizon} too long for the suite"))?;

    let mut cfg = probe_cfg.clone();
    cfg.stopping.iterations = Some(horizon);
    cfg.schedule.b = Some(b);
    let finals: Vec<(f64, f64)> = (0..SEEDS)
        .into_par_iter()
        .map(|seed| {
            let mut c = cfg.clone();
            c.seed = seed;
            let exp = Experiment::build(&c).map_err(|e| e.to_string())?;
            let plan = exp.plan().map_err(|e| e.to_string())?;
            let out = exp.run(&plan).map_err(|e| e.to_string())?;
            let last = out.trace.last().unwrap();
            Ok::<_, String>((last.primal_gap / eps, last.gap * spec.radius / eps))
        })
        .collect::<Result<_, _>>()?;
    let rate = finals.iter().filter(|(f, g)| *f > 1.0 || *g > 1.0).count() as f64 / SEEDS as f64;
    let worst_f = finals.iter().map(|p| p.0).fold(f64::MIN, f64::max);
    let worst_g = finals.iter().map(|p| p.1).fold(f64::MIN, f64::max);
    let m = pps_core::schedules::m_from_r(1, spec.variance.n, b, sigma).map_err(|e| e.to_string())?;
    ensure(rate <= 0.3, || format!("failure fraction {rate:.2} > 0.3"))?;
    Ok(format!(
        "ε = {eps:.3e}, σ = {sigma:.2e}, T = {horizon}, M = {m}: failure fraction {rate:.2} over {SEEDS} seeds; worst (f − f*)/ε = {worst_f:.1e}, worst R‖Ax − b‖/ε = {worst_g:.1e}"
    ))
}

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Check,
}

fn main() {
    let secs = |s| Some(Duration::from_secs(s));
    let all = [
        Criterion { id: 1, name: "one-hot second moment", limit: secs(10), run: one_hot_identity },
        Criterion { id: 2, name: "PPS unbiasedness", limit: secs(30), run: pps_unbiased },
        Criterion { id: 3, name: "random-M second moment", limit: None, run: random_m_second_moment },
        Criterion { id: 4, name: "bit accounting", limit: None, run: bit_accounting },
        Criterion { id: 5, name: "coefficient identity", limit: None, run: coefficient_identity },
        Criterion { id: 6, name: "schedule validity", limit: None, run: schedule_validity },
        Criterion { id: 7, name: "exact-solve benchmark", limit: secs(60), run: exact_solve },
        Criterion { id: 8, name: "decentralised consensus", limit: None, run: consensus },
        Criterion { id: 9, name: "communication savings", limit: secs(300), run: communication_savings },
        Criterion { id: 10, name: "log-sum-exp oracle", limit: None, run: log_sum_exp },
        Criterion { id: 11, name: "barycentre oracle", limit: None, run: wb_oracle },
        Criterion { id: 12, name: "large-deviation check", limit: secs(300), run: large_deviation },
    ];
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for c in all.iter().filter(|c| wanted.is_empty() || wanted.contains(&c.id)) {
        let start = Instant::now();
        let result = (c.run)();
        let took = start.elapsed();
        let result = match (result, c.limit) {
            (Ok(_), Some(l)) if took > l => Err(format!("took {:.1} s, limit {} s", took.as_secs_f64(), l.as_secs())),
            (r, _) => r,
        };
        match result {
            Ok(detail) => println!("criterion {:>2} PASS  {} ({:.1} s): {detail}", c.id, c.name, took.as_secs_f64()),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {} ({:.1} s): {detail}", c.id, c.name, took.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
