use std::sync::Arc;

use proptest::prelude::*;

use pps_core::linalg::dist;
use pps_core::network::{consensus_gap, laplacian, Topology, TopologyKind};
use pps_core::problems::{GaussianMeasure, SemiDiscreteWb};
use pps_core::quantize::{
    decode_from_bytes, encode_to_bytes, message_bits, pps_decode, pps_encode, pps_simplified_encode, split_signs,
    wire_size,
};
use pps_core::rng::seeded;
use pps_core::schedules::{m_from_r, r_from_m, validate, SamplePolicy, ScheduleSpec, VarianceModel};

fn vector(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), -10.0..10.0f64, Just(-0.0), Just(1e-310)], 1..max_len)
}

proptest! {
    #[test]
    fn split_then_recombine(g in vector(40)) {
        let (pos, neg) = split_signs(&g);
        prop_assert!(pos.iter().chain(&neg).all(|&v| v >= 0.0));
        for ((p, n), v) in pos.iter().zip(&neg).zip(&g) {
            prop_assert_eq!(p - n, *v);
        }
    }

    #[test]
    fn decoded_parts_keep_their_mass(g in vector(40), m in 1usize..50, seed in any::<u64>()) {
        let q = pps_encode(&g, m, &mut seeded(seed)).unwrap();
        let d = pps_decode(&q);
        let pos: f64 = d.iter().filter(|v| **v > 0.0).sum();
        let neg: f64 = -d.iter().filter(|v| **v < 0.0).sum::<f64>();
        // a coordinate can receive both signs only if g has both at once, which it cannot
        prop_assert!((pos - q.pos_mass).abs() <= 1e-12 * q.pos_mass.max(1.0));
        prop_assert!((neg - q.neg_mass).abs() <= 1e-12 * q.neg_mass.max(1.0));
        // support of the message lies in the support of g
        for (dv, gv) in d.iter().zip(&g) {
            prop_assert!(*dv == 0.0 || dv.signum() == gv.signum());
        }
    }

    #[test]
    fn wire_round_trip(g in vector(300), m in 1usize..40, seed in any::<u64>(), f32_width in any::<bool>()) {
        let fb = if f32_width { 32 } else { 64 };
        let q = pps_encode(&g, m, &mut seeded(seed)).unwrap();
        prop_assume!(fb == 64 || [q.pos_mass, q.neg_mass].iter().all(|&x| x == 0.0 || x as f32 != 0.0));
        let bytes = encode_to_bytes(&q, fb).unwrap();
        let size = wire_size(&q, fb).unwrap();
        prop_assert_eq!(bytes.len(), size.total_bytes);
        prop_assert_eq!(size.payload_bits, message_bits(&q, fb));
        let back = decode_from_bytes(&bytes, g.len()).unwrap();
        prop_assert_eq!(&back.pos_indices, &q.pos_indices);
        prop_assert_eq!(&back.neg_indices, &q.neg_indices);
        if fb == 64 {
            prop_assert_eq!(back.pos_mass, q.pos_mass);
            prop_assert_eq!(back.neg_mass, q.neg_mass);
        }
    }

    #[test]
    fn simplified_decodes_to_simplex(w in prop::collection::vec(0.0..1.0f64, 2..30), m in 1usize..20, seed in any::<u64>()) {
        let s: f64 = w.iter().sum();
        prop_assume!(s > 1e-6);
        let v: Vec<f64> = w.iter().map(|x| x / s).collect();
        let q = pps_simplified_encode(&v, m, &mut seeded(seed)).unwrap();
        prop_assert_eq!(q.pos_mass, 1.0);
        let d = pps_decode(&q);
        prop_assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn policy_round_trip(r in 1usize..=1000, b in 0.5..3.0f64, sigma in 0.05..0.5f64, n in 2usize..100) {
        let ratio = 2.0 * (1.0 - 1.0 / n as f64) * b * b / (std::f64::consts::E * sigma * sigma);
        prop_assume!(ratio >= 1.0);
        let m = m_from_r(r, n, b, sigma).unwrap();
        let back = r_from_m(m, n, b, sigma).unwrap();
        prop_assert!(back == r || back == r + 1);
    }

    #[test]
    fn default_schedules_are_valid(l in 0.01..100.0f64, radius in 0.01..100.0f64, sigma in 0.0..10.0f64, r in 1usize..50, m in 1usize..50) {
        let spec = ScheduleSpec {
            lipschitz: l,
            radius,
            a_norm: 1.0,
            delta: 0.1,
            j: 1.0,
            policy: SamplePolicy::Constant { r, m },
            variance: VarianceModel { n: 10, b: 1.0, sigma, simplex: false, quantized: true },
        };
        let s = spec.build(300).unwrap();
        prop_assert!(validate(&s, l, 300).is_empty());
    }

    #[test]
    fn consensus_gap_ignores_common_shift(m in 2usize..8, shift in prop::collection::vec(-5.0..5.0f64, 3), seed in any::<u64>()) {
        let s = laplacian(&Topology::build(&TopologyKind::ErdosRenyi { m, p: 0.6, seed }).unwrap()).unwrap();
        let x: Vec<Vec<f64>> = (0..m).map(|i| (0..3).map(|k| ((i * 3 + k) as f64).sin()).collect()).collect();
        let y: Vec<Vec<f64>> = x.iter().map(|v| v.iter().zip(&shift).map(|(a, b)| a + b).collect()).collect();
        prop_assert!((consensus_gap(&x, &s) - consensus_gap(&y, &s)).abs() < 1e-9);
    }
}

#[test]
fn wb_gradient_samples_stay_in_simplex_and_are_lipschitz() {
    // per-node contract: ‖∇W*(λ) − ∇W*(λ')‖ ≤ ‖λ − λ'‖/γ on shared samples
    let wb = Arc::new(SemiDiscreteWb::random_gaussians_1d(3, 25, None, &mut seeded(31)).unwrap());
    let mut rng = seeded(32);
    let xs = wb.draw(0, 20, &mut rng);
    let mut worst: f64 = 0.0;
    for k in 0..1000 {
        let a: Vec<f64> = (0..25).map(|j| ((k * 31 + j * 7) as f64).sin() * 3.0).collect();
        let b: Vec<f64> = (0..25).map(|j| ((k * 17 + j * 3) as f64).cos() * 3.0).collect();
        for x in &xs[..2] {
            let s = wb.sample_softmax(&a, x);
            assert!(s.iter().all(|&v| v >= 0.0));
            assert!((s.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
        let ga = wb.conjugate_gradient_on(0, &a, &xs).unwrap();
        let gb = wb.conjugate_gradient_on(0, &b, &xs).unwrap();
        worst = worst.max(dist(&ga, &gb) * wb.gamma / dist(&a, &b));
    }
    assert!(worst <= 1.0, "empirical Lipschitz ratio {worst}");
}

#[test]
fn wb_value_is_smooth_in_gamma() {
    let measure = GaussianMeasure::new(vec![0.3], vec![0.9]).unwrap();
    let xs: Vec<Vec<f64>> = (0..200).map(|k| vec![(k as f64 * 0.61).sin() * 2.0]).collect();
    let lam = vec![0.2; 8];
    let mut prev = None;
    for step in 0..=100 {
        let gamma = 0.1 * 100f64.powf(step as f64 / 100.0);
        let p = SemiDiscreteWb::new(pps_core::problems::wb::grid_1d(8, -2.0, 2.0), gamma, vec![measure.clone()]).unwrap();
        let v = p.conjugate_value_on(0, &lam, &xs).unwrap();
        assert!(v.is_finite());
        if let Some(pv) = prev {
            let jump: f64 = v - pv;
            assert!(jump.abs() < 0.2 * (1.0 + v.abs()), "gamma={gamma}");
        }
        prev = Some(v);
    }
}
