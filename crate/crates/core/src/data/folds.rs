//! Cross-validation split protocols.
//!
//! Each protocol maps a sample to one key (warm, unseen_pair, unseen_cell,
//! per-sample external groups) or to one key per drug (unseen_drug,
//! scaffold, per-drug external groups). Distinct keys are ordered by a
//! seeded hash and dealt round-robin into `k` folds. A sample whose two drug
//! keys land in folds `fa` and `fb` is tested in fold `f` only when
//! `fa = fb = f`, trained on when neither equals `f`, and dropped otherwise.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use super::dataset::{Drug, Sample};
use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Protocol {
    Warm,
    UnseenPair,
    UnseenCell,
    UnseenDrug,
    Scaffold,
    ExternalGroup,
}

impl Protocol {
    pub const ALL: [Protocol; 6] = [
        Protocol::Warm,
        Protocol::UnseenPair,
        Protocol::UnseenCell,
        Protocol::UnseenDrug,
        Protocol::Scaffold,
        Protocol::ExternalGroup,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Warm => "warm",
            Protocol::UnseenPair => "unseen_pair",
            Protocol::UnseenCell => "unseen_cell",
            Protocol::UnseenDrug => "unseen_drug",
            Protocol::Scaffold => "scaffold",
            Protocol::ExternalGroup => "external_group",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = CoreError;
    fn from_str(s: &str) -> Result<Self> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| CoreError::Invalid(format!("unknown protocol {s:?}")))
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seeded sort key for fold dealing: `splitmix64(fnv1a(key) ^ splitmix64(seed))`.
pub fn rank_hash(seed: u64, key: &str) -> u64 {
    splitmix64(fnv1a(key.as_bytes()) ^ splitmix64(seed))
}

/// Keys of one sample: one for sample-level protocols, `[key(a), key(b)]`
/// for drug-level ones.
fn sample_keys(protocol: Protocol, i: usize, s: &Sample, drugs: &[Drug], per_drug_groups: bool) -> Result<Vec<String>> {
    let drug_key = |d: usize| -> Result<String> {
        let drug = drugs.get(d).ok_or_else(|| CoreError::UnresolvedId { kind: "drug", id: d.to_string() })?;
        Ok(match protocol {
            Protocol::UnseenDrug => drug.id.clone(),
            Protocol::Scaffold => drug.scaffold.clone(),
            _ => drug
                .group_label
                .clone()
                .ok_or_else(|| CoreError::MissingKey { what: format!("group_label for drug {}", drug.id) })?,
        })
    };
    Ok(match protocol {
        Protocol::Warm => vec![i.to_string()],
        Protocol::UnseenPair => {
            let (x, y) = (&drugs[s.a].id, &drugs[s.b].id);
            let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
            vec![format!("{lo}|{hi}")]
        }
        Protocol::UnseenCell => vec![s.cell.to_string()],
        Protocol::ExternalGroup if !per_drug_groups => vec![s
            .group_label
            .clone()
            .ok_or_else(|| CoreError::MissingKey { what: format!("group_label for sample {i}") })?],
        _ => vec![drug_key(s.a)?, drug_key(s.b)?],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldPlan {
    pub protocol: Protocol,
    pub k: usize,
    pub seed: u64,
    /// Per sample, the folds of its key(s); equal for sample-level keys.
    pub assignments: Vec<(usize, usize)>,
    /// Per sample, the protocol keys used for the disjointness check.
    pub keys: Vec<Vec<String>>,
}

/// Builds a fold plan. External groups come from per-sample labels when
/// every sample has one, otherwise from per-drug labels.
pub fn make_folds(samples: &[Sample], drugs: &[Drug], protocol: Protocol, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(CoreError::Invalid(format!("k must be at least 2, got {k}")));
    }
    if samples.is_empty() {
        return Err(CoreError::EmptySelection);
    }
    let per_drug_groups = protocol == Protocol::ExternalGroup && samples.iter().any(|s| s.group_label.is_none());
    let keys = samples
        .iter()
        .enumerate()
        .map(|(i, s)| sample_keys(protocol, i, s, drugs, per_drug_groups))
        .collect::<Result<Vec<_>>>()?;
    let distinct: BTreeSet<&String> = keys.iter().flatten().collect();
    if distinct.len() < k {
        return Err(CoreError::InsufficientGroups { protocol: protocol.name(), k, found: distinct.len() });
    }
    let mut ordered: Vec<&String> = distinct.into_iter().collect();
    ordered.sort_by_key(|key| (rank_hash(seed, key), key.to_string()));
    let fold_of: BTreeMap<&String, usize> = ordered.iter().enumerate().map(|(pos, key)| (*key, pos % k)).collect();
    let assignments = keys
        .iter()
        .map(|ks| {
            let fa = fold_of[&ks[0]];
            (fa, ks.get(1).map_or(fa, |kb| fold_of[kb]))
        })
        .collect();
    Ok(FoldPlan { protocol, k, seed, assignments, keys })
}

impl FoldPlan {
    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        self.select(|&(a, b)| a == fold && b == fold)
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        self.select(|&(a, b)| a != fold && b != fold)
    }

    /// Samples straddling the test/train boundary of `fold`.
    pub fn dropped_indices(&self, fold: usize) -> Vec<usize> {
        self.select(|&(a, b)| (a == fold) != (b == fold))
    }

    fn select(&self, pred: impl Fn(&(usize, usize)) -> bool) -> Vec<usize> {
        self.assignments.iter().enumerate().filter(|(_, a)| pred(a)).map(|(i, _)| i).collect()
    }

    /// Protocol keys seen in the given samples.
    pub fn key_set(&self, indices: &[usize]) -> BTreeSet<&str> {
        indices.iter().flat_map(|&i| self.keys[i].iter().map(String::as_str)).collect()
    }

    /// `sample_index,fold_id` with `fold_id` either `f` or `fa|fb`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["sample_index", "fold_id"])?;
        for (i, &(a, b)) in self.assignments.iter().enumerate() {
            let id = if a == b { a.to_string() } else { format!("{a}|{b}") };
            wr.write_record([i.to_string(), id])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads a plan written by [`FoldPlan::write_csv`]; keys are not stored,
    /// so each sample is keyed by its own index.
    pub fn read_csv<R: Read>(r: R, protocol: Protocol, seed: u64) -> Result<Self> {
        let mut rows: Vec<(usize, (usize, usize))> = Vec::new();
        let bad = |s: &str| CoreError::Invalid(format!("bad fold row {s:?}"));
        for rec in csv::Reader::from_reader(r).records() {
            let rec = rec?;
            let i: usize = rec[0].trim().parse().map_err(|_| bad(&rec[0]))?;
            let f = rec[1].trim();
            let pair = match f.split_once('|') {
                Some((a, b)) => (a.parse().map_err(|_| bad(f))?, b.parse().map_err(|_| bad(f))?),
                None => {
                    let a = f.parse().map_err(|_| bad(f))?;
                    (a, a)
                }
            };
            rows.push((i, pair));
        }
        rows.sort_unstable();
        if rows.iter().enumerate().any(|(pos, &(i, _))| pos != i) {
            return Err(CoreError::Invalid("fold plan must list every sample index exactly once".into()));
        }
        let k = rows.iter().map(|&(_, (a, b))| a.max(b) + 1).max().unwrap_or(0);
        Ok(FoldPlan {
            protocol,
            k,
            seed,
            keys: (0..rows.len()).map(|i| vec![i.to_string()]).collect(),
            assignments: rows.into_iter().map(|(_, p)| p).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn protocol_names_round_trip() {
        for p in Protocol::ALL {
            assert_eq!(p.name().parse::<Protocol>().unwrap(), p);
        }
        assert!("cold".parse::<Protocol>().is_err());
    }

    #[test]
    fn rank_hash_reference_values() {
        // fnv1a("") is the offset basis; splitmix64(0) is a known constant.
        assert_eq!(fnv1a(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(splitmix64(0), 0xe220_a839_7b1d_cdaf);
    }
}
