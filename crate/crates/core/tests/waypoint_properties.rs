#[path = "support/fsm.rs"]
mod fsm;

use proptest::prelude::*;

#[test]
fn long_offer_stream_respects_the_rate_limit() {
    let r = fsm::offer_stream(2024, 10_000);
    assert!(r.ticks == 10_000 && r.accepted > 50 && r.episodes > 50, "{r:?}");
    assert!(r.worst_excess <= 0, "{r:?}");
    assert_eq!(r.resume_violations, 0, "{r:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn offer_streams_never_exceed_the_bound(seed in any::<u64>()) {
        let r = fsm::offer_stream(seed, 2_000);
        prop_assert!(r.worst_excess <= 0, "{:?}", r);
        prop_assert_eq!(r.resume_violations, 0);
    }

    #[test]
    fn priority_free_runs_finish(seed in any::<u64>()) {
        prop_assert!(fsm::priority_free_run(seed, 0.3).is_some());
    }
}
