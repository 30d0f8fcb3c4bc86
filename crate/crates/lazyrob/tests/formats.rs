use lazyrob::config::ExperimentConfig;
use lazyrob::files::{dataset_from_bytes, dataset_to_bytes, Checkpoint};
use lazyrob_core::data::synth_sphere;
use lazyrob_core::linalg::Matrix;
use lazyrob_core::network::init_network;
use lazyrob_core::rng::Rng;
use lazyrob_core::NetworkParams;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn checkpoints_restore_exact_bits(seed in any::<u64>(), d in 1usize..10, m in 1usize..20, c0 in 0.0f64..100.0, drift in -5.0f64..5.0) {
        let mut rng = Rng::new(seed);
        let p = init_network(&mut rng, d, m).unwrap();
        let w: Vec<f64> = p.w().as_slice().iter().map(|v| v + drift * rng.gaussian()).collect();
        let params = NetworkParams::from_parts(p.a().to_vec(), Matrix::from_col_major(d, m, w).unwrap(), p.w0().clone()).unwrap();
        let ck = Checkpoint { params, seed, c0 };
        let bytes = ck.to_bytes();
        prop_assert_eq!(Checkpoint::from_bytes(&bytes).unwrap(), ck);
        prop_assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn dataset_cache_restores_exact_bits(seed in any::<u64>(), d in 2usize..20, n in 1usize..30, margin in 0.0f64..0.9) {
        let data = synth_sphere(&mut Rng::new(seed), d, n, margin).unwrap();
        prop_assert_eq!(dataset_from_bytes(&dataset_to_bytes(&data)).unwrap(), data);
    }

    #[test]
    fn config_hash_follows_content(d in prop::collection::vec(1usize..1000, 1..6), c0 in 0.1f64..100.0, seeds in prop::collection::vec(any::<u64>(), 1..4)) {
        let mut c = ExperimentConfig::default();
        c.grid.d = d;
        c.grid.c0 = vec![c0];
        c.seeds = seeds;
        let back = ExperimentConfig::from_json(&c.to_json()).unwrap();
        prop_assert_eq!(back.hash(), c.hash());
        c.grid.c0 = vec![c0 * 2.0];
        prop_assert_ne!(back.hash(), c.hash());
    }
}
