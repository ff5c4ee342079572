//! Negative-sample sets and seeded fixed-size subsets of them.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pool::CorrectnessMatrix;

pub const DEFAULT_SAMPLE_SIZE: usize = 100;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Which models' failures define the negative set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeScheme {
    /// Samples at least one model gets wrong.
    AnyModel,
    /// Samples every model gets wrong.
    AllModels,
    /// Samples the given model gets wrong.
    FocalModel(usize),
}

impl fmt::Display for NegativeScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NegativeScheme::AnyModel => f.write_str("any_model"),
            NegativeScheme::AllModels => f.write_str("all_models"),
            NegativeScheme::FocalModel(i) => write!(f, "focal_model({i})"),
        }
    }
}

/// Scheme kind as accepted on the command line; `focal` needs a model id elsewhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    Any,
    All,
    Focal,
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "any" | "any_model" => Ok(SchemeKind::Any),
            "all" | "all_models" => Ok(SchemeKind::All),
            "focal" | "focal_model" => Ok(SchemeKind::Focal),
            other => Err(Error::InvalidArgument(format!(
                "unknown sampling scheme {other:?} (expected any, all or focal)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegativeSampleSet {
    pub scheme: NegativeScheme,
    /// Sorted, unique sample indices.
    pub indices: Vec<usize>,
    pub seed: u64,
    pub requested_size: usize,
}

impl NegativeSampleSet {
    /// Full negative set for `scheme`, subsampled to `size` with `seed`.
    pub fn draw(
        corr: &CorrectnessMatrix,
        scheme: NegativeScheme,
        size: usize,
        seed: u64,
    ) -> Result<Self> {
        let full = negatives(corr, scheme)?;
        sample_subset(scheme, &full, size, seed)
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

pub fn negatives(corr: &CorrectnessMatrix, scheme: NegativeScheme) -> Result<Vec<usize>> {
    match scheme {
        NegativeScheme::AnyModel => negatives_any(corr),
        NegativeScheme::AllModels => negatives_all(corr),
        NegativeScheme::FocalModel(i) => negatives_focal(corr, i),
    }
}

fn non_empty(scheme: NegativeScheme, set: Vec<usize>) -> Result<Vec<usize>> {
    if set.is_empty() {
        Err(Error::EmptyNegatives {
            scheme: scheme.to_string(),
        })
    } else {
        Ok(set)
    }
}

/// Samples misclassified by at least one model.
pub fn negatives_any(corr: &CorrectnessMatrix) -> Result<Vec<usize>> {
    let set = (0..corr.num_samples())
        .filter(|&k| corr.rows().iter().any(|row| !row[k]))
        .collect();
    non_empty(NegativeScheme::AnyModel, set)
}

/// Samples misclassified by every model.
pub fn negatives_all(corr: &CorrectnessMatrix) -> Result<Vec<usize>> {
    let set = (0..corr.num_samples())
        .filter(|&k| corr.rows().iter().all(|row| !row[k]))
        .collect();
    non_empty(NegativeScheme::AllModels, set)
}

/// Samples misclassified by `focal`.
pub fn negatives_focal(corr: &CorrectnessMatrix, focal: usize) -> Result<Vec<usize>> {
    if focal >= corr.num_models() {
        return Err(Error::InvalidArgument(format!(
            "focal model {focal} not in pool of {}",
            corr.num_models()
        )));
    }
    let set = corr
        .row(focal)
        .iter()
        .enumerate()
        .filter(|(_, &ok)| !ok)
        .map(|(k, _)| k)
        .collect();
    non_empty(NegativeScheme::FocalModel(focal), set)
}

/// Uniform sample of `size` elements of `full` without replacement.
///
/// Runs a partial Fisher-Yates shuffle over a sorted copy of `full`, so the
/// result depends only on the set contents, `size` and `seed`. The output is
/// sorted. Requests at or above `|full|` return the whole set.
pub fn sample_subset(
    scheme: NegativeScheme,
    full: &[usize],
    size: usize,
    seed: u64,
) -> Result<NegativeSampleSet> {
    if full.is_empty() {
        return Err(Error::EmptyNegatives {
            scheme: scheme.to_string(),
        });
    }
    if size == 0 {
        return Err(Error::InvalidArgument(
            "sample size must be positive".into(),
        ));
    }
    let mut pool = full.to_vec();
    pool.sort_unstable();
    pool.dedup();

    let indices = if size >= pool.len() {
        pool
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in 0..size {
            let j = rng.gen_range(i..pool.len());
            pool.swap(i, j);
        }
        pool.truncate(size);
        pool.sort_unstable();
        pool
    };
    Ok(NegativeSampleSet {
        scheme,
        indices,
        seed,
        requested_size: size,
    })
}

/// Per-focal seed, independent of the order in which focals are visited.
pub fn focal_seed(base_seed: u64, focal: usize) -> u64 {
    base_seed ^ GOLDEN_GAMMA.wrapping_mul(focal as u64 + 1)
}
