//! The simulator against the M/M/1 closed form.

mod common;

use common::mm1;

#[test]
fn mm1_mean_wait_matches_the_closed_form() {
    let (w, n) = mm1::mean_wait(1);
    // about λ·T customers
    assert!((45_000..55_000).contains(&n), "{n}");
    assert!((w / mm1::expected_wait() - 1.0).abs() < 0.1, "mean wait {w}");
}
