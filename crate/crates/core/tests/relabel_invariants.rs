mod support;

use proptest::prelude::*;
use support::checks::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn environment_untouched_and_own_messages_restored(
        seed in any::<u64>(),
        channel in any::<u8>(),
        greedy in any::<bool>(),
        mode_bits in any::<u64>(),
    ) {
        restore_invariants(seed, channel_for(channel), greedy, mode_bits).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn ordered_relabelling_is_idempotent(seed in any::<u64>(), skip in any::<bool>()) {
        idempotence(seed, skip).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn no_drift_is_a_fixpoint(seed in any::<u64>(), mode in 0u64..3) {
        no_drift_fixpoint(seed, mode_for(mode)).map_err(TestCaseError::fail)?;
    }
}

#[test]
fn shared_relabel_then_restore_equals_per_agent_relabel() {
    shared_equals_independent().unwrap();
}
