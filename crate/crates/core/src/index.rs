//! Multi-biometric bin table.
//!
//! Every enrolled subject is assigned exactly one `k`-bit pattern (its bin):
//!
//! * `FeatureConcat`: top pattern of the concatenation of the subject's
//!   templates, in the table's characteristic order.
//! * `RankedCodes`: the best-ranked of the per-characteristic top patterns
//!   (count descending, value ascending).
//! * `XorCodes`: XOR of the per-characteristic top patterns.
//!
//! The last two do not depend on characteristic order.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bits::{check_pattern_len, concat, BinaryTemplate, Pattern};
use crate::error::{Error, Result};
use crate::patterns::{extract_patterns, PatternCount};
use crate::protect::{ProtectedTemplate, SchemeConfig};

pub const INDEX_FORMAT: &str = "mbidx-index";
pub const INDEX_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubjectId(pub u64);

impl fmt::Display for SubjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    FeatureConcat,
    RankedCodes,
    XorCodes,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [
        Strategy::FeatureConcat,
        Strategy::RankedCodes,
        Strategy::XorCodes,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::FeatureConcat => "feature-concat",
            Strategy::RankedCodes => "ranked-codes",
            Strategy::XorCodes => "xor-codes",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "feature-concat" | "concat" | "feature" => Ok(Strategy::FeatureConcat),
            "ranked-codes" | "ranked" => Ok(Strategy::RankedCodes),
            "xor-codes" | "xor" => Ok(Strategy::XorCodes),
            other => Err(Error::Config(format!("unknown strategy {other:?}"))),
        }
    }
}

/// How templates are turned into bins; shared by indexing and retrieval.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub strategy: Strategy,
    pub k: u32,
    pub characteristic_order: Vec<String>,
}

impl Layout {
    pub fn new(strategy: Strategy, k: u32, characteristic_order: Vec<String>) -> Result<Self> {
        check_pattern_len(k)?;
        if characteristic_order.is_empty() {
            return Err(Error::Config(
                "at least one characteristic is required".into(),
            ));
        }
        let unique: BTreeSet<&String> = characteristic_order.iter().collect();
        if unique.len() != characteristic_order.len() {
            return Err(Error::Config("characteristic order has duplicates".into()));
        }
        Ok(Layout {
            strategy,
            k,
            characteristic_order,
        })
    }

    pub fn m(&self) -> usize {
        self.characteristic_order.len()
    }

    /// Templates in characteristic order, after checking the set matches exactly.
    pub(crate) fn ordered<'a>(
        &self,
        templates: &'a BTreeMap<String, ProtectedTemplate>,
    ) -> Result<Vec<&'a BinaryTemplate>> {
        if templates.len() != self.m() {
            return Err(Error::Config(format!(
                "expected {} characteristics, got {}",
                self.m(),
                templates.len()
            )));
        }
        let ordered = self
            .characteristic_order
            .iter()
            .map(|c| {
                templates
                    .get(c)
                    .map(|t| &t.binary)
                    .ok_or_else(|| Error::Config(format!("missing characteristic {c:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if self.strategy != Strategy::FeatureConcat
            && ordered.windows(2).any(|w| w[0].len() != w[1].len())
        {
            return Err(Error::Dimension(format!(
                "{} needs equal template lengths across characteristics",
                self.strategy
            )));
        }
        Ok(ordered)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnrolRecord {
    pub subject_id: SubjectId,
    pub templates: BTreeMap<String, ProtectedTemplate>,
}

/// Per-characteristic top entries, in layout order.
fn tops(parts: &[&BinaryTemplate], k: u32) -> Result<Vec<PatternCount>> {
    parts
        .iter()
        .map(|t| extract_patterns(t, k)?.top())
        .collect()
}

pub fn assign_bin(rec: &EnrolRecord, layout: &Layout) -> Result<Pattern> {
    let parts = layout.ordered(&rec.templates)?;
    let k = layout.k;
    match layout.strategy {
        Strategy::FeatureConcat => {
            let joined = concat(parts.iter().copied())?;
            Ok(extract_patterns(&joined, k)?.top()?.pattern)
        }
        Strategy::RankedCodes => Ok(tops(&parts, k)?
            .into_iter()
            .min_by(PatternCount::rank_cmp)
            .expect("layout has at least one characteristic")
            .pattern),
        Strategy::XorCodes => tops(&parts, k)?
            .into_iter()
            .try_fold(Pattern::zero(k)?, |acc, e| acc.xor(e.pattern)),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OccupancyStats {
    /// Sizes of the non-empty bins, in pattern order.
    pub sizes: Vec<usize>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinTable {
    pub format: String,
    pub version: u32,
    pub layout: Layout,
    pub scheme: SchemeConfig,
    pub scheme_digest: String,
    /// Pattern value to the sorted subjects it indexes.
    bins: BTreeMap<u32, Vec<SubjectId>>,
    store: BTreeMap<SubjectId, EnrolRecord>,
}

pub fn scheme_digest(scheme: &SchemeConfig) -> String {
    let json = serde_json::to_vec(scheme).expect("scheme config serializes");
    hex::encode(Sha256::digest(&json))
}

impl BinTable {
    pub fn build(records: Vec<EnrolRecord>, layout: Layout, scheme: SchemeConfig) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Enrollment("no records to enrol".into()));
        }
        let mut lengths: Option<Vec<usize>> = None;
        let mut bins: BTreeMap<u32, Vec<SubjectId>> = BTreeMap::new();
        let mut store = BTreeMap::new();
        for rec in records {
            let these: Vec<usize> = layout
                .ordered(&rec.templates)?
                .iter()
                .map(|t| t.len())
                .collect();
            match &lengths {
                None => lengths = Some(these),
                Some(l) if *l != these => {
                    return Err(Error::Dimension(format!(
                        "subject {} has template lengths {these:?}, expected {l:?}",
                        rec.subject_id
                    )))
                }
                Some(_) => {}
            }
            let bin = assign_bin(&rec, &layout)?;
            if store.contains_key(&rec.subject_id) {
                return Err(Error::Enrollment(format!(
                    "duplicate subject id {}",
                    rec.subject_id
                )));
            }
            bins.entry(bin.value()).or_default().push(rec.subject_id);
            store.insert(rec.subject_id, rec);
        }
        for members in bins.values_mut() {
            members.sort();
        }
        Ok(BinTable {
            format: INDEX_FORMAT.into(),
            version: INDEX_VERSION,
            scheme_digest: scheme_digest(&scheme),
            layout,
            scheme,
            bins,
            store,
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn strategy(&self) -> Strategy {
        self.layout.strategy
    }

    pub fn k(&self) -> u32 {
        self.layout.k
    }

    pub fn m(&self) -> usize {
        self.layout.m()
    }

    pub fn len(&self) -> usize {
        self.store.len()
    }

    pub fn is_empty(&self) -> bool {
        self.store.is_empty()
    }

    pub fn bin(&self, pattern: Pattern) -> &[SubjectId] {
        self.bins
            .get(&pattern.value())
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn bins(&self) -> impl Iterator<Item = (Pattern, &[SubjectId])> + '_ {
        let k = self.k();
        self.bins
            .iter()
            .map(move |(&v, ids)| (Pattern::new_unchecked(v, k), ids.as_slice()))
    }

    pub fn bin_of(&self, id: SubjectId) -> Option<Pattern> {
        self.bins()
            .find(|(_, ids)| ids.binary_search(&id).is_ok())
            .map(|(p, _)| p)
    }

    pub fn record(&self, id: SubjectId) -> Option<&EnrolRecord> {
        self.store.get(&id)
    }

    pub fn records(&self) -> impl Iterator<Item = &EnrolRecord> + '_ {
        self.store.values()
    }

    pub fn occupancy_stats(&self) -> OccupancyStats {
        let sizes: Vec<usize> = self.bins.values().map(Vec::len).collect();
        let (mean, std) = mean_std(sizes.iter().map(|&s| s as f64));
        OccupancyStats { sizes, mean, std }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let table: BinTable = serde_json::from_str(s)?;
        if table.format != INDEX_FORMAT || table.version != INDEX_VERSION {
            return Err(Error::Config(format!(
                "unsupported index format {} v{}",
                table.format, table.version
            )));
        }
        if table.scheme_digest != scheme_digest(&table.scheme) {
            return Err(Error::Config(
                "index scheme digest does not match its scheme".into(),
            ));
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

/// Mean and population standard deviation, summed in iteration order.
pub fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}
