use lazyrob_core::linalg::{dot, norm2};
use lazyrob_core::network::init_network;
use lazyrob_core::rng::Rng;
use lazyrob_core::theory::{check_fvalue_ball, grad_diff_probe, sign_flip_sets};
use lazyrob_core::NetworkParams;
use proptest::prelude::*;

fn fresh(seed: u64, d: usize, m: usize) -> (NetworkParams, Vec<f64>) {
    let p = init_network(&mut Rng::new(seed), d, m).unwrap();
    let x = Rng::with_stream(seed, 7).unit_vector(d).unwrap();
    (p, x)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flippable_sets_match_brute_force(seed in any::<u64>(), d in 2usize..8, m in 1usize..40, v in 0.0f64..1.5) {
        let (p, x) = fresh(seed, d, m);
        let sets = sign_flip_sets(&p, &x, v, None, 0.1).unwrap();
        let mut rng = Rng::with_stream(seed, 3);
        for s in 0..m {
            let w0 = p.w0().col(s);
            let z0 = dot(w0, &x).unwrap();
            let member = sets.s_v_exact.contains(&s);
            // the steepest move inside the ball is a witness whenever one exists
            let dir = if z0 > 0.0 { -v } else { v };
            let witness: Vec<f64> = w0.iter().zip(&x).map(|(w, xi)| w + dir * xi).collect();
            let flips = |w: &[f64]| (dot(w, &x).unwrap() > 0.0) != (z0 > 0.0);
            prop_assert_eq!(flips(&witness), member, "neuron {}", s);
            if !member {
                for _ in 0..50 {
                    let off = rng.in_ball(d, v).unwrap();
                    let w: Vec<f64> = w0.iter().zip(&off).map(|(a, b)| a + b).collect();
                    prop_assert!(!flips(&w));
                }
            }
        }
    }

    #[test]
    fn flippable_sets_grow_with_the_radius(seed in any::<u64>(), d in 2usize..8, m in 1usize..40, v in 0.0f64..1.0) {
        let (p, x) = fresh(seed, d, m);
        let small = sign_flip_sets(&p, &x, v, None, 0.1).unwrap().s_v_exact;
        let large = sign_flip_sets(&p, &x, 2.0 * v, None, 0.1).unwrap().s_v_exact;
        prop_assert!(small.iter().all(|s| large.contains(s)));
        if v == 0.0 {
            prop_assert!(small.is_empty());
        }
    }

    #[test]
    fn grad_diff_scales_with_the_weights(seed in any::<u64>(), d in 2usize..10, m in 1usize..40, r in 0.0f64..0.5, k in 0.1f64..10.0) {
        let (p, x) = fresh(seed, d, m);
        let a = grad_diff_probe(&p, &x, r, 20, 1.0, 1.0, &mut Rng::new(seed)).unwrap();
        let b = grad_diff_probe(&p.cone_scale(k).unwrap(), &x, r, 20, 1.0, 1.0, &mut Rng::new(seed)).unwrap();
        prop_assert_eq!(a.max_switched, b.max_switched);
        prop_assert!((b.report.measured - k * a.report.measured).abs() <= 1e-12 * k * a.report.measured.max(1.0));
        if r == 0.0 {
            prop_assert_eq!(a.report.measured, 0.0);
        }
    }

    #[test]
    fn probes_inside_one_linear_region_see_no_change(seed in any::<u64>(), d in 2usize..10, m in 1usize..40) {
        let (p, x) = fresh(seed, d, m);
        let z = p.preactivations(&x).unwrap();
        let r = p.w().columns().zip(&z).map(|(w, zs)| zs.abs() / norm2(w)).fold(f64::INFINITY, f64::min) * 0.5;
        prop_assume!(r > 0.0 && r.is_finite());
        let probe = grad_diff_probe(&p, &x, r, 20, 1.0, 1.0, &mut Rng::new(seed)).unwrap();
        prop_assert_eq!(probe.max_switched, 0);
        prop_assert_eq!(probe.report.measured, 0.0);
    }

    #[test]
    fn fvalue_bound_holds_over_the_ball_at_zero_radius(seed in any::<u64>(), d in 2usize..10, m in 1usize..60) {
        let (p, x) = fresh(seed, d, m);
        let r = check_fvalue_ball(&p, &x, 0.5, 0.0).unwrap();
        prop_assert!((r.measured - p.forward(&x).unwrap().abs()).abs() <= 1e-12 * (1.0 + r.measured));
    }
}

#[test]
fn gradient_difference_at_init_is_a_small_fraction_of_sqrt_d() {
    let (d, m) = (400, 40_000);
    let (p, x) = fresh(0, d, m);
    let probe = grad_diff_probe(&p, &x, 1.0 / (d as f64).sqrt(), 200, 1.0, 1.0, &mut Rng::new(1)).unwrap();
    assert!(probe.report.precondition_ok);
    assert!(probe.ratio_sqrt_d <= 0.5, "{}", probe.ratio_sqrt_d);
}
