mod support;

use casegen_core::{parse_case_bundle, serialize_case};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::gen::random_case;

proptest! {
    #[test]
    fn bundle_round_trip(seed in any::<u64>()) {
        let case = random_case(&mut ChaCha8Rng::seed_from_u64(seed));
        let text = serialize_case(&case);
        let back = parse_case_bundle(&text).unwrap();
        prop_assert_eq!(&back, &case);
        prop_assert_eq!(serialize_case(&back), text);
    }
}
