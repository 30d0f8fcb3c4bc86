use lazyrob_core::attacks::{
    minimal_eta_search, pgd_attack, robust_accuracy, sign_flipped, single_step_attack, PgdConfig, PgdStep,
};
use lazyrob_core::data::synth_sphere;
use lazyrob_core::linalg::{dist2, norm2};
use lazyrob_core::network::init_network;
use lazyrob_core::rng::Rng;
use lazyrob_core::training::{sgd_lazy_train, LazyRadius, TrainConfig};
use lazyrob_core::NetworkParams;
use proptest::prelude::*;

fn fresh(seed: u64, d: usize, m: usize) -> (NetworkParams, Vec<f64>) {
    let p = init_network(&mut Rng::new(seed), d, m).unwrap();
    let x = Rng::with_stream(seed, 7).unit_vector(d).unwrap();
    (p, x)
}

fn at(x: &[f64], g: &[f64], eta: f64) -> Vec<f64> {
    x.iter().zip(g).map(|(a, b)| a + eta * b).collect()
}

fn shape() -> impl Strategy<Value = (u64, usize, usize)> {
    (any::<u64>(), 2usize..20, 4usize..60)
}

proptest! {
    #[test]
    fn single_step_has_the_prescribed_size_and_direction((seed, d, m) in shape(), c2 in 0.01f64..10.0) {
        let (p, x) = fresh(seed, d, m);
        let (f, g) = p.forward_and_gradient(&x).unwrap();
        let gn = norm2(&g);
        prop_assume!(gn > 0.0 && f.abs() > 1e-12);
        let o = single_step_attack(&p, &x, c2).unwrap();
        prop_assert!((o.eta.abs() - c2 / (gn * gn)).abs() <= 1e-12 * o.eta.abs());
        prop_assert!(o.eta * f < 0.0);
        prop_assert!((o.delta_norm - c2 / gn).abs() <= 1e-12 * o.delta_norm);
        prop_assert_eq!(o.f_after, p.forward(&at(&x, &g, o.eta)).unwrap());
        prop_assert_eq!(o.flipped, sign_flipped(f, o.f_after));
    }

    #[test]
    fn minimal_eta_returns_a_certified_cell((seed, d, m) in shape()) {
        let (p, x) = fresh(seed, d, m);
        let (f, g) = p.forward_and_gradient(&x).unwrap();
        prop_assume!(f.abs() > 1e-9 && norm2(&g) > 0.0);
        let tol = 1e-9;
        let o = minimal_eta_search(&p, &x, 100.0, tol).unwrap();
        if o.flipped {
            prop_assert!(sign_flipped(f, p.forward(&at(&x, &g, o.eta)).unwrap()));
            let inner = o.eta - o.eta.signum() * 8.0 * tol;
            if inner * o.eta > 0.0 {
                prop_assert!(!sign_flipped(f, p.forward(&at(&x, &g, inner)).unwrap()));
            }
        }
    }

    #[test]
    fn cone_scaling_preserves_attack_outcomes((seed, d, m) in shape(), c2 in 0.01f64..4.0) {
        let (p, x) = fresh(seed, d, m);
        prop_assume!(p.forward(&x).unwrap().abs() > 1e-9);
        let base = single_step_attack(&p, &x, c2).unwrap();
        for r in [0.1, 10.0] {
            let scaled = single_step_attack(&p.cone_scale(r).unwrap(), &x, c2 * r).unwrap();
            prop_assert_eq!(scaled.flipped, base.flipped);
            prop_assert!((scaled.delta_norm - base.delta_norm).abs() <= 1e-9 * base.delta_norm);
        }
    }

    #[test]
    fn pgd_iterates_stay_in_the_budget((seed, d, m) in shape(), radius in 0.01f64..2.0, steps in 1usize..30, raw in any::<bool>()) {
        let (p, x) = fresh(seed, d, m);
        let y = if seed % 2 == 0 { 1 } else { -1 };
        let mut cfg = PgdConfig::standard(radius, steps);
        cfg.early_stop = false;
        if raw {
            cfg.step = PgdStep::Raw;
            cfg.alpha = 3.0;
        }
        // every prefix of the run is itself a run with fewer steps
        for k in 1..=steps {
            let o = pgd_attack(&p, &x, y, &PgdConfig { steps: k, ..cfg }).unwrap();
            prop_assert!(dist2(&o.x_adv, &x).unwrap() <= radius * (1.0 + 4.0 * f64::EPSILON));
            prop_assert_eq!(o.delta_norm, dist2(&o.x_adv, &x).unwrap());
        }
    }
}

#[test]
fn robust_accuracy_does_not_grow_with_the_budget() {
    let d = 25;
    let data = synth_sphere(&mut Rng::new(4), d, 200, 0.5).unwrap();
    let p = init_network(&mut Rng::new(2), d, 200).unwrap();
    let cfg =
        TrainConfig { lr_sgd: 1.0, batch_size: 20, max_epochs: 5, radius: LazyRadius::C0(20.0), ..Default::default() };
    let (p, _) = sgd_lazy_train(p, &data, &cfg).unwrap();
    let mut last = 1.0;
    for r in [0.01, 0.05, 0.1, 0.2, 0.4, 0.8] {
        let acc = robust_accuracy(&p, &data, &PgdConfig::standard(r, 40)).unwrap();
        assert!(acc <= last, "R={r}: {acc} > {last}");
        last = acc;
    }
}

#[test]
fn boundary_inputs_are_ties() {
    let (p, _) = fresh(1, 4, 8);
    let o = minimal_eta_search(&p, &[0.0; 4], 1.0, 1e-9).unwrap();
    assert!(o.boundary_case && !o.flipped && o.eta == 0.0);
}
