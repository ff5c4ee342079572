//! Synthetic prediction pools with planted error correlation.
//!
//! Every model gets an error set of exactly `round((1 - accuracy) * N)`
//! samples: the samples with the smallest "difficulty keys". Keys are uniform
//! per sample. Models in a correlation group share one latent key per sample,
//! and each member uses that shared key with probability `rho` (its own private
//! key otherwise), so members of a group tend to fail on the same samples.
//! Ungrouped models, or groups with `rho = 0`, fail independently.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pool::{ModelRecord, PredictionPool, ProbMatrix};

/// Accuracies of the ten CIFAR-10 reference networks, model 0 first.
pub const CIFAR10_ACCURACIES: [f64; 10] = [
    0.9668, 0.9546, 0.9623, 0.9621, 0.9334, 0.9173, 0.9263, 0.9310, 0.9339, 0.9368,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationGroup {
    pub members: Vec<usize>,
    /// Per-sample probability that a member uses the group's shared key.
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    #[serde(default = "default_dataset")]
    pub dataset: String,
    pub num_models: usize,
    pub num_samples: usize,
    pub num_classes: usize,
    pub accuracies: Vec<f64>,
    #[serde(default)]
    pub groups: Vec<CorrelationGroup>,
    #[serde(default)]
    pub seed: u64,
}

fn default_dataset() -> String {
    "synthetic".to_string()
}

impl SynthConfig {
    /// Ten models with the CIFAR-10 reference accuracies and no correlation.
    pub fn cifar10_like(num_samples: usize, seed: u64) -> Self {
        Self {
            dataset: default_dataset(),
            num_models: 10,
            num_samples,
            num_classes: 10,
            accuracies: CIFAR10_ACCURACIES.to_vec(),
            groups: Vec::new(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_models < 2 {
            return bad(format!("need at least 2 models, got {}", self.num_models));
        }
        if self.num_samples == 0 {
            return bad("need at least one sample".into());
        }
        if self.num_classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.num_classes));
        }
        if self.accuracies.len() != self.num_models {
            return bad(format!(
                "{} accuracies for {} models",
                self.accuracies.len(),
                self.num_models
            ));
        }
        if let Some(a) = self.accuracies.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
            return bad(format!("accuracy {a} outside (0, 1]"));
        }
        let mut seen = vec![false; self.num_models];
        for g in &self.groups {
            if !(0.0..=1.0).contains(&g.rho) {
                return bad(format!("rho {} outside [0, 1]", g.rho));
            }
            for &m in &g.members {
                if m >= self.num_models {
                    return bad(format!(
                        "group member {m} outside {} models",
                        self.num_models
                    ));
                }
                if std::mem::replace(&mut seen[m], true) {
                    return bad(format!("model {m} appears in more than one group"));
                }
            }
        }
        Ok(())
    }

    /// Number of samples model `i` gets wrong.
    pub fn error_count(&self, model: usize) -> usize {
        ((1.0 - self.accuracies[model]) * self.num_samples as f64).round() as usize
    }
}

fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the combined inputs
    let mut z = seed
        ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03)
        ^ (index + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_LABELS: u64 = 1;
const STREAM_GROUP: u64 = 2;
const STREAM_MODEL: u64 = 3;

pub fn generate_pool(cfg: &SynthConfig) -> Result<PredictionPool> {
    cfg.validate()?;
    let n = cfg.num_samples;
    let c = cfg.num_classes;

    let mut label_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_LABELS, 0));
    let labels: Vec<usize> = (0..n).map(|_| label_rng.gen_range(0..c)).collect();

    let shared_keys: Vec<Vec<f64>> = (0..cfg.groups.len())
        .map(|g| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_GROUP, g as u64));
            (0..n).map(|_| rng.gen::<f64>()).collect()
        })
        .collect();
    let mut group_of: Vec<Option<usize>> = vec![None; cfg.num_models];
    for (g, group) in cfg.groups.iter().enumerate() {
        for &m in &group.members {
            group_of[m] = Some(g);
        }
    }

    let models = (0..cfg.num_models)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_MODEL, i as u64));
            let group = group_of[i].map(|g| (&shared_keys[g], cfg.groups[g].rho));
            let keys: Vec<f64> = (0..n)
                .map(|k| {
                    let private = rng.gen::<f64>();
                    let coin = rng.gen::<f64>();
                    match group {
                        Some((shared, rho)) if coin < rho => shared[k],
                        _ => private,
                    }
                })
                .collect();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]).then(a.cmp(&b)));
            let mut wrong = vec![false; n];
            for &k in &order[..cfg.error_count(i)] {
                wrong[k] = true;
            }

            let mut pred_labels = Vec::with_capacity(n);
            let mut probs = Vec::with_capacity(n * c);
            let mut rest = vec![0.0; c - 1];
            for k in 0..n {
                let pred = if wrong[k] {
                    (labels[k] + 1 + rng.gen_range(0..c - 1)) % c
                } else {
                    labels[k]
                };
                // top mass in (0.5, 1); the remainder goes to the other classes
                let top = 0.5 + rng.gen::<f64>().max(1e-9) * 0.5;
                for r in rest.iter_mut() {
                    *r = rng.gen::<f64>() + 1e-12;
                }
                let total: f64 = rest.iter().sum();
                let mut others = rest.iter().map(|r| r / total * (1.0 - top));
                for j in 0..c {
                    probs.push(if j == pred {
                        top
                    } else {
                        others.next().expect("c - 1 others")
                    });
                }
                pred_labels.push(pred);
            }
            let probs = ProbMatrix::from_flat(c, probs)?;
            Ok(ModelRecord::new(i, format!("synth_{i}"), pred_labels).with_probs(probs))
        })
        .collect::<Result<Vec<_>>>()?;

    PredictionPool::new(cfg.dataset.clone(), c, labels, models)
}
