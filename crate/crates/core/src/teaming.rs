//! Candidate ensemble teams.

use std::fmt;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest pool for which every team is materialized.
pub const MAX_ENUMERATION_POOL: usize = 20;

/// A sorted set of at least two distinct model ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct EnsembleTeam {
    members: Vec<usize>,
}

impl EnsembleTeam {
    /// Sorts `members`; rejects duplicates and teams smaller than two.
    pub fn new(mut members: Vec<usize>) -> Result<Self> {
        members.sort_unstable();
        if members.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidTeam(format!(
                "duplicate member in {members:?}"
            )));
        }
        if members.len() < 2 {
            return Err(Error::InvalidTeam(format!(
                "a team needs at least 2 members, got {}",
                members.len()
            )));
        }
        Ok(Self { members })
    }

    /// Parses the compact form (`"045"`, one digit per member) or the
    /// dash-separated form (`"0-4-12"`), then checks every id is below `pool_size`.
    pub fn parse(s: &str, pool_size: usize) -> Result<Self> {
        let s = s.trim();
        let members: Vec<usize> = if s.contains('-') || s.contains(',') {
            s.split(['-', ','])
                .map(|part| {
                    part.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::InvalidTeam(format!("bad member {part:?} in {s:?}")))
                })
                .collect::<Result<_>>()?
        } else {
            if pool_size > 10 && s.len() > 1 {
                return Err(Error::InvalidTeam(format!(
                    "{s:?} is ambiguous for a pool of {pool_size} models; use dash-separated ids"
                )));
            }
            s.chars()
                .map(|c| {
                    c.to_digit(10)
                        .map(|d| d as usize)
                        .ok_or_else(|| Error::InvalidTeam(format!("bad member {c:?} in {s:?}")))
                })
                .collect::<Result<_>>()?
        };
        if let Some(&bad) = members.iter().find(|&&m| m >= pool_size) {
            return Err(Error::InvalidTeam(format!(
                "member {bad} not in pool of {pool_size}"
            )));
        }
        Self::new(members)
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn contains(&self, model: usize) -> bool {
        self.members.binary_search(&model).is_ok()
    }

    /// Compact digits for pools of at most ten models, dash-separated otherwise.
    pub fn canonical(&self, pool_size: usize) -> String {
        if pool_size <= 10 {
            self.members.iter().map(|m| m.to_string()).collect()
        } else {
            self.dashed()
        }
    }

    fn dashed(&self) -> String {
        self.members
            .iter()
            .map(|m| m.to_string())
            .collect::<Vec<_>>()
            .join("-")
    }

    /// Every sub-team of size two or more, the team itself included.
    pub fn sub_teams(&self) -> Vec<EnsembleTeam> {
        let s = self.size();
        let mut out = Vec::new();
        for size in 2..=s {
            for combo in Combinations::new(s, size) {
                let members = combo.iter().map(|&p| self.members[p]).collect();
                out.push(EnsembleTeam { members });
            }
        }
        out
    }
}

impl fmt::Display for EnsembleTeam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.members.iter().all(|&m| m < 10) {
            f.write_str(&self.canonical(10))
        } else {
            f.write_str(&self.dashed())
        }
    }
}

impl TryFrom<Vec<usize>> for EnsembleTeam {
    type Error = Error;

    fn try_from(members: Vec<usize>) -> Result<Self> {
        Self::new(members)
    }
}

impl From<EnsembleTeam> for Vec<usize> {
    fn from(team: EnsembleTeam) -> Self {
        team.members
    }
}

/// Index-vector combinations of `k` out of `n`, in lexicographic order.
struct Combinations {
    n: usize,
    current: Option<Vec<usize>>,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        let current = (k <= n).then(|| (0..k).collect());
        Self { n, current }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.take()?;
        let k = out.len();
        let mut next = out.clone();
        // rightmost position that can still move right
        let mut i = k;
        while i > 0 {
            i -= 1;
            if next[i] < self.n - k + i {
                next[i] += 1;
                for j in i + 1..k {
                    next[j] = next[j - 1] + 1;
                }
                self.current = Some(next);
                return Some(out);
            }
        }
        Some(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub teams: Vec<EnsembleTeam>,
    pub pool_size: usize,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.teams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.teams.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, EnsembleTeam> {
        self.teams.iter()
    }

    pub fn position(&self, team: &EnsembleTeam) -> Option<usize> {
        self.teams.iter().position(|t| t == team)
    }
}

/// All teams of a pool of `pool_size` models, ordered by size and then
/// lexicographically by member ids.
pub fn enumerate_teams(
    pool_size: usize,
    size_filter: Option<RangeInclusive<usize>>,
) -> Result<CandidateSet> {
    if pool_size < 2 {
        return Err(Error::InvalidArgument(format!(
            "pool size must be at least 2, got {pool_size}"
        )));
    }
    if pool_size > MAX_ENUMERATION_POOL {
        return Err(Error::EnumerationLimit {
            pool_size,
            limit: MAX_ENUMERATION_POOL,
        });
    }
    let sizes = size_filter.unwrap_or(2..=pool_size);
    if sizes.is_empty() || *sizes.start() < 2 || *sizes.end() > pool_size {
        return Err(Error::InvalidArgument(format!(
            "team size filter {}..={} outside [2, {pool_size}]",
            sizes.start(),
            sizes.end()
        )));
    }
    let mut teams = Vec::new();
    for size in sizes {
        teams.extend(Combinations::new(pool_size, size).map(|members| EnsembleTeam { members }));
    }
    Ok(CandidateSet { teams, pool_size })
}

/// Teams of exactly `size` members that include `focal`.
pub fn teams_containing(
    cands: &CandidateSet,
    focal: usize,
    size: usize,
) -> Result<Vec<&EnsembleTeam>> {
    if focal >= cands.pool_size {
        return Err(Error::InvalidArgument(format!(
            "focal model {focal} not in pool of {}",
            cands.pool_size
        )));
    }
    Ok(cands
        .iter()
        .filter(|t| t.size() == size && t.contains(focal))
        .collect())
}

/// `n` choose `k`; exact for every `n` this crate enumerates.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}
