//! Frequent binary pattern extraction.
//!
//! Every stride-1 window of `k` bits is counted and the unique patterns are
//! returned in canonical order: occurrence count descending, ties broken by
//! ascending pattern value. The same key is used wherever patterns from
//! different lists are compared, so the order is total and symmetric.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bits::{check_pattern_len, BinaryTemplate, Pattern};
use crate::error::{Error, Result};

/// Largest `k` counted with a dense table.
const DENSE_LIMIT: u32 = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternCount {
    pub pattern: Pattern,
    pub count: usize,
}

impl PatternCount {
    /// Canonical ranking: more occurrences first, then smaller value.
    pub fn rank_cmp(&self, other: &PatternCount) -> Ordering {
        other
            .count
            .cmp(&self.count)
            .then(self.pattern.value().cmp(&other.pattern.value()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternList {
    entries: Vec<PatternCount>,
    k: u32,
    source_n: usize,
}

impl PatternList {
    /// Builds a list from arbitrary `(pattern, count)` pairs, sorting them canonically.
    pub fn from_counts(mut entries: Vec<PatternCount>, k: u32, source_n: usize) -> Result<Self> {
        check_pattern_len(k)?;
        if entries.iter().any(|e| e.pattern.k() != k || e.count == 0) {
            return Err(Error::Argument(
                "entries must be non-empty counts of k-bit patterns".into(),
            ));
        }
        entries.sort_by(PatternCount::rank_cmp);
        if entries.windows(2).any(|w| w[0].pattern == w[1].pattern) {
            return Err(Error::Argument("duplicate pattern in list".into()));
        }
        Ok(PatternList {
            entries,
            k,
            source_n,
        })
    }

    pub fn entries(&self) -> &[PatternCount] {
        &self.entries
    }

    pub fn patterns(&self) -> impl Iterator<Item = Pattern> + '_ {
        self.entries.iter().map(|e| e.pattern)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn source_n(&self) -> usize {
        self.source_n
    }

    pub fn total_count(&self) -> usize {
        self.entries.iter().map(|e| e.count).sum()
    }

    pub fn top(&self) -> Result<PatternCount> {
        self.entries
            .first()
            .copied()
            .ok_or_else(|| Error::State("top pattern of an empty list".into()))
    }
}

/// Counts every `k`-bit window of `f` (start positions `0..=n-k`).
pub fn extract_patterns(f: &BinaryTemplate, k: u32) -> Result<PatternList> {
    check_pattern_len(k)?;
    if k as usize >= f.len() {
        return Err(Error::Argument(format!(
            "pattern length {k} must be below template length {}",
            f.len()
        )));
    }
    let entries: Vec<PatternCount> = if k <= DENSE_LIMIT {
        let mut counts = vec![0usize; 1 << k];
        for w in f.windows(k) {
            counts[w as usize] += 1;
        }
        counts
            .into_iter()
            .enumerate()
            .filter(|(_, c)| *c > 0)
            .map(|(v, count)| PatternCount {
                pattern: Pattern::new_unchecked(v as u32, k),
                count,
            })
            .collect()
    } else {
        let mut counts = BTreeMap::new();
        for w in f.windows(k) {
            *counts.entry(w).or_insert(0usize) += 1;
        }
        counts
            .into_iter()
            .map(|(v, count)| PatternCount {
                pattern: Pattern::new_unchecked(v, k),
                count,
            })
            .collect()
    };
    PatternList::from_counts(entries, k, f.len())
}

/// The most frequent pattern of the list.
pub fn top_pattern(pl: &PatternList) -> Result<Pattern> {
    pl.top().map(|e| e.pattern)
}
