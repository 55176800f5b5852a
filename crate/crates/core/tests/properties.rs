use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use nsl_core::error_charge::err_charge;
use nsl_core::generate::{random_datum, random_sheaf, DatumLimits};
use nsl_core::reduction_engine::{replay, run, step_bound, Seeded};
use nsl_core::sheaf_on_tree::{h0, h0_oracle, Gluing};
use nsl_core::Q;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rationals_round_trip(n in -10_000i64..10_000, d in 1i64..500) {
        let q = Q::new(n, d);
        let s = serde_json::to_string(&q).unwrap();
        prop_assert_eq!(serde_json::from_str::<Q>(&s).unwrap(), q.clone());
        prop_assert_eq!(q.to_string().parse::<Q>().unwrap(), q);
    }

    #[test]
    fn h0_formula_matches_seeded_oracle(seed in any::<u64>(), r in 1u32..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_sheaf(&mut rng, 5, r, 4);
        prop_assert_eq!(h0(&f).unwrap(), h0_oracle(&f, Gluing::Seeded(seed)).unwrap());
    }

    #[test]
    fn seeded_reduction_terminates_and_replays(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_datum(&mut rng, &DatumLimits::default());
        let bound = step_bound(&d).unwrap();
        let out = run(d.clone(), &mut Seeded::new(seed)).unwrap();
        prop_assert!(err_charge(&out.state.datum).is_zero());
        prop_assert!(out.steps as u64 <= bound);
        let end = replay(&d, &out.state.trace).unwrap();
        prop_assert_eq!(
            serde_json::to_value(&end).unwrap(),
            serde_json::to_value(&out.state.datum).unwrap()
        );
    }
}
