use lazyrob_core::linalg::{dist2, l2_project_to_ball, norm2};
use lazyrob_core::rng::{sample_gaussian_vec, sample_sign_vec, Rng};
use proptest::prelude::*;

fn vec_of(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, d)
}

fn ball_case() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64)> {
    (1usize..8).prop_flat_map(|d| (vec_of(d), vec_of(d), 0.0f64..5.0))
}

proptest! {
    #[test]
    fn projection_is_idempotent_bit_for_bit((v, c, r) in ball_case()) {
        let once = l2_project_to_ball(&v, &c, r).unwrap();
        let twice = l2_project_to_ball(&once, &c, r).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn projection_lands_in_the_ball((v, c, r) in ball_case()) {
        let p = l2_project_to_ball(&v, &c, r).unwrap();
        prop_assert!(dist2(&p, &c).unwrap() <= r * (1.0 + 4.0 * f64::EPSILON));
    }

    #[test]
    fn inside_points_are_returned_unchanged((c, u) in (1usize..8).prop_flat_map(|d| (vec_of(d), vec_of(d))), r in 0.1f64..5.0) {
        let n = norm2(&u);
        prop_assume!(n > 0.0);
        let v: Vec<f64> = c.iter().zip(&u).map(|(ci, ui)| ci + 0.9 * r * ui / n).collect();
        prop_assert_eq!(l2_project_to_ball(&v, &c, r).unwrap(), v);
    }

    #[test]
    fn gaussian_samples_are_reproducible(seed in any::<u64>(), d in 1usize..64) {
        let a = sample_gaussian_vec(&mut Rng::new(seed), d).unwrap();
        let b = sample_gaussian_vec(&mut Rng::new(seed), d).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn sign_samples_are_reproducible(seed in any::<u64>(), m in 1usize..64) {
        let a = sample_sign_vec(&mut Rng::new(seed), m).unwrap();
        prop_assert!(a.iter().all(|&s| s == 1 || s == -1));
        prop_assert_eq!(a, sample_sign_vec(&mut Rng::new(seed), m).unwrap());
    }
}

#[test]
fn projection_is_the_nearest_point_of_the_ball() {
    let mut rng = Rng::new(11);
    let d = 5;
    for _ in 0..1000 {
        let v: Vec<f64> = (0..d).map(|_| 4.0 * rng.gaussian()).collect();
        let c: Vec<f64> = (0..d).map(|_| rng.gaussian()).collect();
        let r = 3.0 * rng.uniform();
        let p = l2_project_to_ball(&v, &c, r).unwrap();
        let best = dist2(&p, &v).unwrap();
        for _ in 0..1000 {
            let off = rng.in_ball(d, r).unwrap();
            let q: Vec<f64> = c.iter().zip(&off).map(|(a, b)| a + b).collect();
            assert!(best <= dist2(&q, &v).unwrap() * (1.0 + 1e-12) + 1e-12);
        }
    }
}

#[test]
fn squared_norm_concentrates_like_a_chi_square() {
    let d = 10_000;
    let half_width = 4.0 * (d as f64 * 4f64.ln()).sqrt();
    let seeds = 200;
    let misses = (0..seeds)
        .filter(|&s| {
            let v = sample_gaussian_vec(&mut Rng::new(s), d).unwrap();
            let sq: f64 = v.iter().map(|x| x * x).sum();
            (sq - d as f64).abs() > half_width
        })
        .count();
    // the tail bound allows half of the seeds to miss
    assert!(misses <= seeds as usize / 2, "{misses} of {seeds} outside the band");
}

#[test]
fn sample_means_are_centred() {
    let bad = (0..100u64)
        .filter(|&s| {
            let v = sample_gaussian_vec(&mut Rng::new(s), 10_000).unwrap();
            (v.iter().sum::<f64>() / 1e4).abs() >= 0.05
        })
        .count();
    assert!(bad <= 1);
    let signs = sample_sign_vec(&mut Rng::new(5), 100_000).unwrap();
    let mean = signs.iter().map(|&s| s as f64).sum::<f64>() / 1e5;
    assert!(mean.abs() < 0.02);
}
