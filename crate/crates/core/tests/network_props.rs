use lazyrob_core::linalg::{dot, norm2, Matrix};
use lazyrob_core::network::init_network;
use lazyrob_core::rng::Rng;
use lazyrob_core::NetworkParams;
use proptest::prelude::*;

/// Random net whose weights sit a small random distance from their snapshot.
fn net(seed: u64, d: usize, m: usize, drift: f64) -> NetworkParams {
    let mut rng = Rng::new(seed);
    let p = init_network(&mut rng, d, m).unwrap();
    let w: Vec<f64> = p.w().as_slice().iter().map(|v| v + drift * rng.gaussian()).collect();
    let w = Matrix::from_col_major(d, m, w).unwrap();
    NetworkParams::from_parts(p.a().to_vec(), w, p.w0().clone()).unwrap()
}

fn unit(seed: u64, d: usize) -> Vec<f64> {
    Rng::with_stream(seed, 99).unit_vector(d).unwrap()
}

fn shape() -> impl Strategy<Value = (u64, usize, usize)> {
    (any::<u64>(), 1usize..12, 1usize..40)
}

proptest! {
    #[test]
    fn positively_homogeneous_in_the_input((seed, d, m) in shape(), t in 0.01f64..100.0) {
        let p = net(seed, d, m, 0.3);
        let x = unit(seed, d);
        let tx: Vec<f64> = x.iter().map(|v| t * v).collect();
        let (f, ft) = (p.forward(&x).unwrap(), p.forward(&tx).unwrap());
        prop_assert!((ft - t * f).abs() <= 1e-12 * (t * f.abs()).max(1e-300) + 1e-13 * t);
    }

    #[test]
    fn positively_homogeneous_in_the_weights((seed, d, m) in shape(), r in 0.01f64..100.0) {
        let p = net(seed, d, m, 0.3);
        let x = unit(seed, d);
        let f = p.forward(&x).unwrap();
        let fr = p.cone_scale(r).unwrap().forward(&x).unwrap();
        prop_assert!((fr - r * f).abs() <= 1e-12 * (r * f.abs()) + 1e-13 * r);
        if f.abs() > 1e-12 {
            prop_assert_eq!(fr > 0.0, f > 0.0);
        }
    }

    #[test]
    fn linear_along_kink_free_segments((seed, d, m) in shape()) {
        let p = net(seed, d, m, 0.3);
        let x = unit(seed, d);
        let u = unit(seed ^ 1, d);
        let z = p.preactivations(&x).unwrap();
        let zu = p.w().tr_mul_vec(&u).unwrap();
        // largest step that crosses no kink
        let mut t_max = 1.0f64;
        for (a, b) in z.iter().zip(&zu) {
            if a * b < 0.0 {
                t_max = t_max.min(-a / b);
            }
        }
        let t = 0.5 * t_max;
        prop_assume!(t > 1e-6);
        let xt: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + t * b).collect();
        let g = p.input_gradient(&x).unwrap();
        let predicted = p.forward(&x).unwrap() + t * dot(&g, &u).unwrap();
        let actual = p.forward(&xt).unwrap();
        prop_assert!((actual - predicted).abs() <= 1e-9 * (1.0 + actual.abs()));
    }

    #[test]
    fn zero_input_gives_zero((seed, d, m) in shape()) {
        prop_assert_eq!(net(seed, d, m, 0.1).forward(&vec![0.0; d]).unwrap(), 0.0);
    }

    #[test]
    fn projection_bounds_the_deviation((seed, d, m) in shape(), drift in 0.0f64..3.0, radius in 0.0f64..2.0) {
        let p = net(seed, d, m, drift).project_weights(radius).unwrap();
        prop_assert!(p.lazy_deviation() <= radius * (1.0 + 4.0 * f64::EPSILON));
        let again = p.project_weights(radius).unwrap();
        prop_assert_eq!(again.w().as_slice(), p.w().as_slice());
    }

    #[test]
    fn projection_keeps_signs_and_snapshot((seed, d, m) in shape(), radius in 0.0f64..1.0) {
        let p = net(seed, d, m, 1.0);
        let q = p.project_weights(radius).unwrap();
        prop_assert_eq!(q.a(), p.a());
        prop_assert_eq!(q.w0().as_slice(), p.w0().as_slice());
    }

    #[test]
    fn a_small_step_against_the_weight_gradient_lowers_the_loss(seed in any::<u64>(), d in 2usize..10, m in 2usize..30) {
        let p = net(seed, d, m, 0.2);
        let mut rng = Rng::with_stream(seed, 5);
        let batch: Vec<(Vec<f64>, i8)> = (0..8).map(|_| (rng.unit_vector(d).unwrap(), rng.sign())).collect();
        let loss = |q: &NetworkParams| batch.iter().map(|(x, y)| q.logistic_loss(x, *y).unwrap()).sum::<f64>();
        let g = p.weight_gradient(batch.iter().map(|(x, y)| (x.as_slice(), *y))).unwrap();
        let gn = norm2(g.as_slice());
        prop_assume!(gn > 1e-8);
        let l0 = loss(&p);
        // backtracking line search along −g must find a strict decrease
        let mut lr = 1.0;
        let mut decreased = false;
        for _ in 0..40 {
            let w: Vec<f64> = p.w().as_slice().iter().zip(g.as_slice()).map(|(w, gi)| w - lr * gi).collect();
            let q = NetworkParams::from_parts(p.a().to_vec(), Matrix::from_col_major(d, m, w).unwrap(), p.w0().clone()).unwrap();
            if loss(&q) < l0 {
                decreased = true;
                break;
            }
            lr *= 0.5;
        }
        prop_assert!(decreased);
    }
}

#[test]
fn input_gradient_norm_at_init_matches_its_expectation() {
    let (d, m) = (400, 10_000);
    let seeds = 20;
    let inside = (0..seeds)
        .filter(|&s| {
            let p = init_network(&mut Rng::new(s), d, m).unwrap();
            let x = unit(s, d);
            let gn = norm2(&p.input_gradient(&x).unwrap());
            let sd = (d as f64).sqrt();
            (0.6 * sd..=0.85 * sd).contains(&gn)
        })
        .count();
    assert!(inside as f64 >= 0.95 * seeds as f64, "{inside}/{seeds}");
}

#[test]
fn init_column_norms_average_to_d() {
    let p = init_network(&mut Rng::new(3), 100, 10_000).unwrap();
    let mean = p.w().columns().map(|c| c.iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / 1e4;
    assert!((95.0..=105.0).contains(&mean), "{mean}");
}
