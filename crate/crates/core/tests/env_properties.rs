mod common;

use std::time::Instant;

#[test]
fn randomized_corpora() {
    let start = Instant::now();
    common::checks::env_properties(1000, 2024);
    assert!(start.elapsed().as_secs() < 30);
}
