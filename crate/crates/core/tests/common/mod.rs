#![allow(dead_code)]

pub mod oracle;

use ensel::synth::{generate_pool, CorrelationGroup, SynthConfig};
use ensel::PredictionPool;

/// CIFAR-10-like pool with two correlated groups.
pub fn grouped_pool(num_samples: usize, seed: u64, rho: f64) -> PredictionPool {
    let mut cfg = SynthConfig::cifar10_like(num_samples, seed);
    cfg.groups = vec![
        CorrelationGroup {
            members: vec![0, 1],
            rho,
        },
        CorrelationGroup {
            members: vec![5, 6, 7, 8, 9],
            rho,
        },
    ];
    generate_pool(&cfg).expect("valid synthetic config")
}
