mod common;

use std::time::Instant;

use nep::kernel::Kernel;
use nep::{kernel_feature, KernelBank};

#[test]
fn matches_naive_pooling() {
    let start = Instant::now();
    common::checks::kernel_pooling(500, 99);
    assert!(start.elapsed().as_secs() < 10);
}

#[test]
fn distant_bank_still_normalizes() {
    let bank = KernelBank::new(vec![
        Kernel { mu: -1.0, sigma: 0.01 },
        Kernel { mu: -0.9, sigma: 0.01 },
    ])
    .unwrap();
    let f = kernel_feature(&[1.0, 0.0], &[vec![1.0, 0.0]], &bank).unwrap();
    let sum: f64 = f.as_slice().iter().sum();
    assert!((sum - 1.0).abs() < 1e-9);
    assert!(f.as_slice().iter().all(|&v| v > 0.0));
}
