mod support;

use commrelabel::RngStream;
use proptest::prelude::*;
use support::numeric::*;

#[test]
fn tape_gradients_match_finite_differences_on_50_nets() {
    for seed in 0..50 {
        let err = gradient_check(seed);
        assert!(err < 1e-4, "net {seed}: relative error {err}");
    }
}

#[test]
fn straight_through_matches_relaxed_sample() {
    for seed in 0..50 {
        let err = straight_through_check(seed);
        assert!(err < 1e-4, "case {seed}: relative error {err}");
    }
}

#[test]
fn uniform_logits_give_uniform_choices() {
    for k in [2, 5, 6] {
        let (counts, ok) = uniform_frequency(k, 10_000, k as u64);
        assert!(ok, "{counts:?}");
    }
}

#[test]
fn soft_update_arithmetic() {
    assert!(soft_update_check());
}

#[test]
fn adam_follows_scalar_recurrence() {
    assert!(adam_check() < 1e-15);
}

proptest! {
    #[test]
    fn gumbel_samples_are_one_hot_on_the_simplex(
        logits in prop::collection::vec(-20.0f64..20.0, 1..10),
        beta in 0.1f64..5.0,
        seed in any::<u64>(),
    ) {
        prop_assert!(gumbel_sample_is_valid(&logits, beta, &mut RngStream::new(seed)));
    }
}
