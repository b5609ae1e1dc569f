//! Closed-set and open-set identification experiments.
//!
//! Identities are shuffled once per protocol seed. The first
//! `calibration_identities` are set aside for score normalization; the rest
//! are split round-robin into `folds` groups, and fold `f` enrols every
//! experiment identity outside group `f`. For each fold, every
//! (identity, characteristic) picks two distinct samples at random, one to
//! enrol and one to probe with. All of this depends only on the seed, the
//! identity and the characteristic name, so every strategy, `k` and
//! characteristic ordering sees the same samples.
//!
//! In closed-set runs a probe walks its whole pattern sequence and its cost
//! is counted up to and including the bin holding its mate. Open-set runs
//! hold out a share of each fold's identities as non-mated probes and visit
//! a fixed number of bins.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{write_atomic, EmbeddingDataset};
use crate::error::{Error, Result};
use crate::index::{mean_std, BinTable, EnrolRecord, Layout, Strategy, SubjectId};
use crate::protect::{ProtectedTemplate, Protector, Scheme, SchemeConfig};
use crate::retrieve::{
    exhaustive_search, search_with, Calibration, ProbeSet, SearchOptions, VisitPlan,
};
use crate::rng::{derive_seed, GaussianStream};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// FPIR operating points read off every open-set DET curve.
pub const FPIR_TARGETS: [f64; 2] = [0.01, 0.1];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "policy")]
pub enum TPolicy {
    Fixed {
        t: usize,
    },
    /// `ceil(mean + std)` of the closed-set bins visited.
    ClosedSetDerived,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Protocol {
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_calibration")]
    pub calibration_identities: usize,
    /// Share of each fold's identities removed from enrolment to act as non-mated probes.
    #[serde(default = "default_split")]
    pub open_set_split: f64,
    #[serde(default = "default_t_policy")]
    pub t_policy: TPolicy,
    #[serde(default = "default_k_range")]
    pub k_range: Vec<u32>,
    #[serde(default = "default_true")]
    pub empty_bins_consume_visit: bool,
}

fn default_folds() -> usize {
    10
}
fn default_calibration() -> usize {
    50
}
fn default_split() -> f64 {
    0.2
}
fn default_t_policy() -> TPolicy {
    TPolicy::ClosedSetDerived
}
fn default_k_range() -> Vec<u32> {
    (3..=8).collect()
}
fn default_true() -> bool {
    true
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol {
            folds: default_folds(),
            seed: 0,
            calibration_identities: default_calibration(),
            open_set_split: default_split(),
            t_policy: default_t_policy(),
            k_range: default_k_range(),
            empty_bins_consume_visit: true,
        }
    }
}

impl Protocol {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::Config("at least two folds are required".into()));
        }
        if !(0.0..1.0).contains(&self.open_set_split) {
            return Err(Error::Config(format!(
                "open_set_split {} outside [0, 1)",
                self.open_set_split
            )));
        }
        if self.k_range.is_empty() {
            return Err(Error::Config("k_range is empty".into()));
        }
        for &k in &self.k_range {
            crate::bits::check_pattern_len(k).map_err(|e| Error::Config(e.to_string()))?;
        }
        if let TPolicy::Fixed { t: 0 } = self.t_policy {
            return Err(Error::Config("fixed t must be positive".into()));
        }
        Ok(())
    }

    fn search_options(&self) -> SearchOptions {
        SearchOptions {
            empty_bins_consume_visit: self.empty_bins_consume_visit,
        }
    }
}

/// Whether and how the enrolment database is binned.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum Indexing {
    Exhaustive,
    Binned { strategy: Strategy, k: u32 },
}

impl Indexing {
    pub fn label(&self) -> String {
        match self {
            Indexing::Exhaustive => "exhaustive".into(),
            Indexing::Binned { strategy, .. } => strategy.to_string(),
        }
    }

    pub fn k(&self) -> Option<u32> {
        match self {
            Indexing::Exhaustive => None,
            Indexing::Binned { k, .. } => Some(*k),
        }
    }
}

/// Every sample of a dataset, protected under one scheme configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct ProtectedDataset {
    pub scheme: SchemeConfig,
    pub characteristics: Vec<String>,
    subjects: BTreeMap<SubjectId, BTreeMap<String, Vec<ProtectedTemplate>>>,
}

impl ProtectedDataset {
    pub fn protect(ds: &EmbeddingDataset, scheme: &SchemeConfig) -> Result<Self> {
        ds.validate()?;
        let by_subject = ds.by_subject();
        let mut subjects: BTreeMap<SubjectId, BTreeMap<String, Vec<ProtectedTemplate>>> =
            BTreeMap::new();
        for info in &ds.characteristics {
            let protector = Protector::new(scheme, &info.name, info.dim)?;
            let protected: Vec<(SubjectId, Vec<ProtectedTemplate>)> = by_subject
                .par_iter()
                .map(|(id, per)| {
                    let samples = per[&info.name]
                        .iter()
                        .map(|(_, e)| protector.protect(e))
                        .collect::<Result<Vec<_>>>()?;
                    Ok((*id, samples))
                })
                .collect::<Result<_>>()?;
            for (id, samples) in protected {
                subjects
                    .entry(id)
                    .or_default()
                    .insert(info.name.clone(), samples);
            }
        }
        Ok(ProtectedDataset {
            scheme: scheme.clone(),
            characteristics: ds.characteristic_names(),
            subjects,
        })
    }

    pub fn subject_ids(&self) -> Vec<SubjectId> {
        self.subjects.keys().copied().collect()
    }

    pub fn samples(&self, id: SubjectId, characteristic: &str) -> Option<&[ProtectedTemplate]> {
        self.subjects
            .get(&id)
            .and_then(|per| per.get(characteristic))
            .map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    /// Templates of sample `sample` of one subject, one per characteristic.
    pub fn sample_set(
        &self,
        id: SubjectId,
        characteristics: &[String],
        sample: usize,
    ) -> Result<BTreeMap<String, ProtectedTemplate>> {
        characteristics
            .iter()
            .map(|c| {
                let t = self
                    .samples(id, c)
                    .and_then(|s| s.get(sample))
                    .ok_or_else(|| {
                        Error::Enrollment(format!("subject {id} has no {c:?} sample {sample}"))
                    })?;
                Ok((c.clone(), t.clone()))
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let records = self
            .subjects
            .iter()
            .flat_map(|(id, per)| {
                per.iter().flat_map(move |(c, samples)| {
                    samples
                        .iter()
                        .enumerate()
                        .map(move |(i, t)| ProtectedRecord {
                            subject_id: *id,
                            characteristic: c.clone(),
                            sample: i as u32,
                            template: t.clone(),
                        })
                })
            })
            .collect();
        Ok(serde_json::to_string(&ProtectedFile {
            format: PROTECTED_FORMAT.into(),
            version: 1,
            scheme: self.scheme.clone(),
            characteristics: self.characteristics.clone(),
            records,
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: ProtectedFile = serde_json::from_str(s)?;
        if file.format != PROTECTED_FORMAT || file.version != 1 {
            return Err(Error::Config(format!(
                "not a protected template file (format {:?} version {})",
                file.format, file.version
            )));
        }
        file.scheme.validate()?;
        let mut subjects: BTreeMap<SubjectId, BTreeMap<String, Vec<ProtectedTemplate>>> =
            BTreeMap::new();
        for r in file.records {
            if !file.characteristics.contains(&r.characteristic) {
                return Err(Error::Enrollment(format!(
                    "record of undeclared characteristic {:?}",
                    r.characteristic
                )));
            }
            let samples = subjects
                .entry(r.subject_id)
                .or_default()
                .entry(r.characteristic.clone())
                .or_default();
            if r.sample as usize != samples.len() {
                return Err(Error::Enrollment(format!(
                    "subject {} {:?}: samples out of order",
                    r.subject_id, r.characteristic
                )));
            }
            samples.push(r.template);
        }
        for (id, per) in &subjects {
            if per.len() != file.characteristics.len() {
                return Err(Error::Enrollment(format!(
                    "subject {id} lacks a characteristic"
                )));
            }
        }
        Ok(ProtectedDataset {
            scheme: file.scheme,
            characteristics: file.characteristics,
            subjects,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    pub fn store(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }
}

pub const PROTECTED_FORMAT: &str = "mbidx-protected";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProtectedFile {
    format: String,
    version: u32,
    scheme: SchemeConfig,
    characteristics: Vec<String>,
    records: Vec<ProtectedRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProtectedRecord {
    subject_id: SubjectId,
    characteristic: String,
    sample: u32,
    template: ProtectedTemplate,
}

/// Identity partition and per-fold sample choice.
#[derive(Clone, Debug)]
pub struct FoldPlan {
    pub calibration: Vec<SubjectId>,
    /// Held-out group of each fold.
    pub groups: Vec<Vec<SubjectId>>,
    seed: u64,
}

impl FoldPlan {
    pub fn new(ids: &[SubjectId], protocol: &Protocol) -> Result<Self> {
        protocol.validate()?;
        let mut ids = ids.to_vec();
        ids.sort();
        ids.shuffle(GaussianStream::new(derive_seed(protocol.seed, "identities"), 0).rng());
        if ids.len() < protocol.calibration_identities + 2 * protocol.folds {
            return Err(Error::Protocol(format!(
                "{} identities are too few for {} calibration identities and {} folds",
                ids.len(),
                protocol.calibration_identities,
                protocol.folds
            )));
        }
        let rest = ids.split_off(protocol.calibration_identities);
        let mut groups = vec![Vec::new(); protocol.folds];
        for (i, id) in rest.into_iter().enumerate() {
            groups[i % protocol.folds].push(id);
        }
        Ok(FoldPlan {
            calibration: ids,
            groups,
            seed: protocol.seed,
        })
    }

    pub fn folds(&self) -> usize {
        self.groups.len()
    }

    /// Identities enrolled in fold `f` of a closed-set run, sorted.
    pub fn enrolled(&self, fold: usize) -> Vec<SubjectId> {
        let mut out: Vec<SubjectId> = self
            .groups
            .iter()
            .enumerate()
            .filter(|(g, _)| *g != fold)
            .flat_map(|(_, ids)| ids.iter().copied())
            .collect();
        out.sort();
        out
    }

    /// Enrolment and probe sample indices of one identity in one fold.
    pub fn pick_samples(
        &self,
        fold: usize,
        id: SubjectId,
        characteristic: &str,
        available: usize,
    ) -> (usize, usize) {
        let seed = derive_seed(self.seed, &format!("fold{fold}/{characteristic}"));
        let mut g = GaussianStream::new(seed, id.0);
        let rng = g.rng();
        let enrol = rng.random_range(0..available);
        let mut probe = rng.random_range(0..available - 1);
        if probe >= enrol {
            probe += 1;
        }
        (enrol, probe)
    }

    /// Splits fold members into (enrolled, non-mated) for an open-set run.
    pub fn open_set_split(
        &self,
        fold: usize,
        split: f64,
    ) -> Result<(Vec<SubjectId>, Vec<SubjectId>)> {
        let mut ids = self.enrolled(fold);
        let held = (ids.len() as f64 * split).round() as usize;
        if held == 0 {
            return Err(Error::Protocol(
                "open-set split leaves no non-mated probes".into(),
            ));
        }
        if held >= ids.len() {
            return Err(Error::Protocol(
                "open-set split leaves nobody enrolled".into(),
            ));
        }
        let seed = derive_seed(self.seed, &format!("open{fold}"));
        ids.shuffle(GaussianStream::new(seed, 0).rng());
        let mut non_mated = ids.split_off(ids.len() - held);
        ids.sort();
        non_mated.sort();
        Ok((ids, non_mated))
    }
}

struct FoldData {
    table: Option<BinTable>,
    references: BTreeMap<SubjectId, EnrolRecord>,
    probes: BTreeMap<SubjectId, ProbeSet>,
    calibration: Calibration,
    m: usize,
}

impl FoldData {
    fn enrolled_len(&self) -> usize {
        self.references.len()
    }
}

fn sample_pair(
    data: &ProtectedDataset,
    plan: &FoldPlan,
    fold: usize,
    id: SubjectId,
    characteristics: &[String],
) -> Result<(
    BTreeMap<String, ProtectedTemplate>,
    BTreeMap<String, ProtectedTemplate>,
)> {
    let mut enrol = BTreeMap::new();
    let mut probe = BTreeMap::new();
    for c in characteristics {
        let samples = data
            .samples(id, c)
            .filter(|s| s.len() >= 2)
            .ok_or_else(|| Error::Protocol(format!("subject {id} lacks two {c:?} samples")))?;
        let (e, p) = plan.pick_samples(fold, id, c, samples.len());
        enrol.insert(c.clone(), samples[e].clone());
        probe.insert(c.clone(), samples[p].clone());
    }
    Ok((enrol, probe))
}

fn prepare_fold(
    data: &ProtectedDataset,
    characteristics: &[String],
    indexing: Indexing,
    plan: &FoldPlan,
    fold: usize,
    enrolled: &[SubjectId],
    probe_ids: &[SubjectId],
) -> Result<FoldData> {
    let mut cal_refs = Vec::new();
    let mut cal_probes = Vec::new();
    for &id in &plan.calibration {
        let (e, p) = sample_pair(data, plan, fold, id, characteristics)?;
        cal_refs.push(e);
        cal_probes.push(p);
    }
    let calibration = Calibration::from_pairs(
        &cal_refs.iter().collect::<Vec<_>>(),
        &cal_probes.iter().collect::<Vec<_>>(),
        data.scheme.scheme,
    )?;

    let mut references = BTreeMap::new();
    let mut probes = BTreeMap::new();
    for &id in enrolled {
        let (e, _) = sample_pair(data, plan, fold, id, characteristics)?;
        references.insert(
            id,
            EnrolRecord {
                subject_id: id,
                templates: e,
            },
        );
    }
    for &id in probe_ids {
        let (_, p) = sample_pair(data, plan, fold, id, characteristics)?;
        probes.insert(id, ProbeSet::new(p));
    }
    let table = match indexing {
        Indexing::Exhaustive => None,
        Indexing::Binned { strategy, k } => {
            let layout = Layout::new(strategy, k, characteristics.to_vec())?;
            Some(BinTable::build(
                references.values().cloned().collect(),
                layout,
                data.scheme.clone(),
            )?)
        }
    };
    Ok(FoldData {
        table,
        references,
        probes,
        calibration,
        m: characteristics.len(),
    })
}

/// What happened to one probe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeLog {
    pub fold: usize,
    pub subject_id: SubjectId,
    pub mated: bool,
    pub bins_visited: usize,
    pub comparisons: usize,
    /// `N * m` of the fold.
    pub baseline: usize,
    /// Mate present among the retrieved candidates.
    pub hit: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mate_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_score: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub probes: usize,
    /// Share of mated probes whose mate was retrieved.
    pub hit_rate: f64,
    pub mean_comparisons: f64,
    /// Population standard deviation.
    pub std_comparisons: f64,
    pub mean_baseline: f64,
    pub w_l: f64,
    pub w_u: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_open: Option<f64>,
    pub mean_bins_visited: f64,
    pub std_bins_visited: f64,
}

impl Metrics {
    pub fn from_logs(logs: &[ProbeLog], open_set: bool) -> Result<Self> {
        if logs.is_empty() {
            return Err(Error::Protocol("no probes".into()));
        }
        let mated: Vec<&ProbeLog> = logs.iter().filter(|l| l.mated).collect();
        let hit_rate = if mated.is_empty() {
            0.0
        } else {
            mated.iter().filter(|l| l.hit).count() as f64 / mated.len() as f64
        };
        let (mean_comparisons, std_comparisons) =
            mean_std(logs.iter().map(|l| l.comparisons as f64));
        let mean_baseline = logs.iter().map(|l| l.baseline as f64).sum::<f64>() / logs.len() as f64;
        let (mean_bins_visited, std_bins_visited) =
            mean_std(logs.iter().map(|l| l.bins_visited as f64));
        let (w_l, w_u) = workload_bounds(mean_comparisons, std_comparisons, mean_baseline);
        Ok(Metrics {
            probes: logs.len(),
            hit_rate,
            mean_comparisons,
            std_comparisons,
            mean_baseline,
            w_l,
            w_u,
            w_open: open_set.then_some(w_l),
            mean_bins_visited,
            std_bins_visited,
        })
    }
}

/// `(W_l, W_u)`: mean comparisons, and mean plus one standard deviation, over the baseline.
pub fn workload_bounds(mean: f64, std: f64, baseline: f64) -> (f64, f64) {
    (mean / baseline, (mean + std) / baseline)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetPoint {
    #[serde(with = "extended_f64")]
    pub threshold: f64,
    pub fpir: f64,
    pub fnir: f64,
}

/// JSON has no infinities; they are written as the strings `"inf"` / `"-inf"`.
mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) if s == "inf" => Ok(f64::INFINITY),
            Repr::Str(s) if s == "-inf" => Ok(f64::NEG_INFINITY),
            Repr::Str(s) => Err(serde::de::Error::custom(format!("bad threshold {s:?}"))),
        }
    }
}

/// FPIR/FNIR at `-inf`, every distinct observed score, and `+inf`.
///
/// A non-mated search is a false positive at `tau` if its best candidate
/// scores at least `tau`; a mated search is a false negative if its mate was
/// not retrieved or scores below `tau`.
pub fn det_curve(mated: &[Option<f64>], non_mated: &[Option<f64>]) -> Result<Vec<DetPoint>> {
    if mated.is_empty() || non_mated.is_empty() {
        return Err(Error::Protocol(
            "a DET curve needs mated and non-mated searches".into(),
        ));
    }
    let mut thresholds: Vec<f64> = mated.iter().chain(non_mated).flatten().copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let mut m_scores: Vec<f64> = mated.iter().flatten().copied().collect();
    let mut n_scores: Vec<f64> = non_mated.iter().flatten().copied().collect();
    m_scores.sort_by(f64::total_cmp);
    n_scores.sort_by(f64::total_cmp);
    let m_missing = mated.len() - m_scores.len();
    let point = |tau: f64| {
        let below_m = m_scores.partition_point(|&s| s < tau);
        let at_least_n = n_scores.len() - n_scores.partition_point(|&s| s < tau);
        DetPoint {
            threshold: tau,
            fpir: at_least_n as f64 / non_mated.len() as f64,
            fnir: (m_missing + below_m) as f64 / mated.len() as f64,
        }
    };
    Ok(std::iter::once(f64::NEG_INFINITY)
        .chain(thresholds)
        .chain(std::iter::once(f64::INFINITY))
        .map(point)
        .collect())
}

/// FNIR where the curve crosses `target` FPIR, interpolated linearly in FPIR.
pub fn fnir_at_fpir(det: &[DetPoint], target: f64) -> f64 {
    let i = det
        .iter()
        .position(|p| p.fpir <= target)
        .expect("the +inf endpoint has FPIR 0");
    if i == 0 || det[i].fpir == target {
        return det[i].fnir;
    }
    let (a, b) = (det[i - 1], det[i]);
    a.fnir + (b.fnir - a.fnir) * (a.fpir - target) / (a.fpir - b.fpir)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    ClosedSet,
    OpenSet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FnirPoint {
    pub fpir: f64,
    pub fnir: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub enrolled: usize,
    pub metrics: Metrics,
    pub probes: Vec<ProbeLog>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scenario: Scenario,
    pub characteristics: Vec<String>,
    pub scheme: Scheme,
    pub indexing: Indexing,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<usize>,
    pub aggregate: Metrics,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fnir_at: Vec<FnirPoint>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub det: Vec<DetPoint>,
    pub folds: Vec<FoldReport>,
}

impl EvalReport {
    pub fn all_probes(&self) -> impl Iterator<Item = &ProbeLog> + '_ {
        self.folds.iter().flat_map(|f| f.probes.iter())
    }

    pub fn fnir(&self, fpir: f64) -> Option<f64> {
        self.fnir_at.iter().find(|p| p.fpir == fpir).map(|p| p.fnir)
    }

    pub fn label(&self) -> String {
        self.characteristics.join("-")
    }
}

fn check_characteristics(data: &ProtectedDataset, characteristics: &[String]) -> Result<()> {
    if characteristics.is_empty() {
        return Err(Error::Config("no characteristics selected".into()));
    }
    for c in characteristics {
        if !data.characteristics.contains(c) {
            return Err(Error::Config(format!(
                "dataset has no characteristic {c:?}"
            )));
        }
    }
    Ok(())
}

fn closed_set_fold(
    data: &ProtectedDataset,
    characteristics: &[String],
    indexing: Indexing,
    protocol: &Protocol,
    plan: &FoldPlan,
    fold: usize,
) -> Result<FoldReport> {
    let enrolled = plan.enrolled(fold);
    let fd = prepare_fold(
        data,
        characteristics,
        indexing,
        plan,
        fold,
        &enrolled,
        &enrolled,
    )?;
    let baseline = fd.enrolled_len() * fd.m;
    let opts = protocol.search_options();
    let logs = fd
        .probes
        .par_iter()
        .map(|(&id, z)| {
            let Some(table) = &fd.table else {
                return Ok(ProbeLog {
                    fold,
                    subject_id: id,
                    mated: true,
                    bins_visited: 0,
                    comparisons: baseline,
                    baseline,
                    hit: true,
                    mate_score: None,
                    top_score: None,
                });
            };
            let mate_bin = table
                .bin_of(id)
                .ok_or_else(|| Error::Protocol(format!("probe subject {id} is not enrolled")))?;
            let full = 1usize << table.k();
            let visits = VisitPlan::build(z, table, full, opts)?;
            let (bins_visited, hit) = match visits.position(mate_bin) {
                Some(pos) => (pos, true),
                None => (visits.bins.len(), false),
            };
            Ok(ProbeLog {
                fold,
                subject_id: id,
                mated: true,
                bins_visited,
                comparisons: visits.comparisons(bins_visited, fd.m),
                baseline,
                hit,
                mate_score: None,
                top_score: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FoldReport {
        fold,
        enrolled: fd.enrolled_len(),
        metrics: Metrics::from_logs(&logs, false)?,
        probes: logs,
    })
}

/// Closed-set identification; every probe has an enrolled mate.
pub fn closed_set_run(
    data: &ProtectedDataset,
    characteristics: &[String],
    indexing: Indexing,
    protocol: &Protocol,
) -> Result<EvalReport> {
    check_characteristics(data, characteristics)?;
    let plan = FoldPlan::new(&data.subject_ids(), protocol)?;
    let folds = (0..plan.folds())
        .map(|f| closed_set_fold(data, characteristics, indexing, protocol, &plan, f))
        .collect::<Result<Vec<_>>>()?;
    let logs: Vec<ProbeLog> = folds
        .iter()
        .flat_map(|f| f.probes.iter().cloned())
        .collect();
    Ok(EvalReport {
        scenario: Scenario::ClosedSet,
        characteristics: characteristics.to_vec(),
        scheme: data.scheme.scheme,
        indexing,
        t: None,
        aggregate: Metrics::from_logs(&logs, false)?,
        fnir_at: Vec::new(),
        det: Vec::new(),
        folds,
    })
}

/// Bins visited in open-set runs under `policy`.
pub fn resolve_t(
    data: &ProtectedDataset,
    characteristics: &[String],
    indexing: Indexing,
    policy: TPolicy,
    protocol: &Protocol,
) -> Result<Option<usize>> {
    let Indexing::Binned { k, .. } = indexing else {
        return Ok(None);
    };
    let max = 1usize << k;
    let t = match policy {
        TPolicy::Fixed { t } => t,
        TPolicy::ClosedSetDerived => {
            let closed = closed_set_run(data, characteristics, indexing, protocol)?;
            (closed.aggregate.mean_bins_visited + closed.aggregate.std_bins_visited).ceil() as usize
        }
    };
    Ok(Some(t.clamp(1, max)))
}

/// Open-set identification with a fixed bin budget.
pub fn open_set_run(
    data: &ProtectedDataset,
    characteristics: &[String],
    indexing: Indexing,
    policy: TPolicy,
    protocol: &Protocol,
) -> Result<EvalReport> {
    check_characteristics(data, characteristics)?;
    let t = resolve_t(data, characteristics, indexing, policy, protocol)?;
    let plan = FoldPlan::new(&data.subject_ids(), protocol)?;
    let opts = protocol.search_options();
    let mut folds = Vec::new();
    for fold in 0..plan.folds() {
        let (enrolled, non_mated) = plan.open_set_split(fold, protocol.open_set_split)?;
        let mut probe_ids = enrolled.clone();
        probe_ids.extend(&non_mated);
        let fd = prepare_fold(
            data,
            characteristics,
            indexing,
            &plan,
            fold,
            &enrolled,
            &probe_ids,
        )?;
        let baseline = fd.enrolled_len() * fd.m;
        let flat = match fd.table {
            Some(_) => None,
            None => Some(exhaustive_table(&fd, data, characteristics)?),
        };
        let logs = fd
            .probes
            .par_iter()
            .map(|(&id, z)| {
                let (list, bins_visited) = match (&fd.table, &flat, t) {
                    (Some(table), _, Some(t)) => {
                        let l = search_with(z, table, t, &fd.calibration, opts)?;
                        let b = l.bins_visited;
                        (l, b)
                    }
                    (_, Some(table), _) => (exhaustive_search(z, table, &fd.calibration)?, 0),
                    _ => unreachable!("binned runs always resolve t"),
                };
                let mated = fd.references.contains_key(&id);
                let mate_score = if mated { list.score_of(id) } else { None };
                Ok(ProbeLog {
                    fold,
                    subject_id: id,
                    mated,
                    bins_visited,
                    comparisons: list.comparisons_performed,
                    baseline,
                    hit: mate_score.is_some(),
                    mate_score,
                    top_score: list.top().map(|c| c.score),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        folds.push(FoldReport {
            fold,
            enrolled: fd.enrolled_len(),
            metrics: Metrics::from_logs(&logs, true)?,
            probes: logs,
        });
    }
    let logs: Vec<ProbeLog> = folds
        .iter()
        .flat_map(|f| f.probes.iter().cloned())
        .collect();
    let mated: Vec<Option<f64>> = logs
        .iter()
        .filter(|l| l.mated)
        .map(|l| l.mate_score)
        .collect();
    let non_mated: Vec<Option<f64>> = logs
        .iter()
        .filter(|l| !l.mated)
        .map(|l| l.top_score)
        .collect();
    let det = det_curve(&mated, &non_mated)?;
    let fnir_at = FPIR_TARGETS
        .iter()
        .map(|&fpir| FnirPoint {
            fpir,
            fnir: fnir_at_fpir(&det, fpir),
        })
        .collect();
    Ok(EvalReport {
        scenario: Scenario::OpenSet,
        characteristics: characteristics.to_vec(),
        scheme: data.scheme.scheme,
        indexing,
        t,
        aggregate: Metrics::from_logs(&logs, true)?,
        fnir_at,
        det,
        folds,
    })
}

/// A single-bin table over the fold's references, for unbinned searches.
fn exhaustive_table(
    fd: &FoldData,
    data: &ProtectedDataset,
    characteristics: &[String],
) -> Result<BinTable> {
    let layout = Layout::new(Strategy::FeatureConcat, 1, characteristics.to_vec())?;
    BinTable::build(
        fd.references.values().cloned().collect(),
        layout,
        data.scheme.clone(),
    )
}

/// One closed-set report per `k`.
pub fn k_sweep(
    data: &ProtectedDataset,
    characteristics: &[String],
    strategy: Strategy,
    k_range: &[u32],
    protocol: &Protocol,
) -> Result<Vec<EvalReport>> {
    k_range
        .iter()
        .map(|&k| {
            closed_set_run(
                data,
                characteristics,
                Indexing::Binned { strategy, k },
                protocol,
            )
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TSweepPoint {
    pub t: usize,
    pub hit_rate: f64,
    /// Mean share of the baseline compared when visiting `t` bins.
    pub w: f64,
}

/// Closed-set hit rate and workload for every bin budget `t = 1..=2^k`.
pub fn t_sweep(
    data: &ProtectedDataset,
    characteristics: &[String],
    strategy: Strategy,
    k: u32,
    protocol: &Protocol,
) -> Result<Vec<TSweepPoint>> {
    check_characteristics(data, characteristics)?;
    let plan = FoldPlan::new(&data.subject_ids(), protocol)?;
    let indexing = Indexing::Binned { strategy, k };
    let full = 1usize << k;
    let opts = protocol.search_options();
    // per probe: (mate position, comparisons at each t, baseline)
    let mut rows: Vec<(Option<usize>, Vec<usize>, usize)> = Vec::new();
    for fold in 0..plan.folds() {
        let enrolled = plan.enrolled(fold);
        let fd = prepare_fold(
            data,
            characteristics,
            indexing,
            &plan,
            fold,
            &enrolled,
            &enrolled,
        )?;
        let table = fd.table.as_ref().expect("binned");
        let baseline = fd.enrolled_len() * fd.m;
        let part = fd
            .probes
            .par_iter()
            .map(|(&id, z)| {
                let visits = VisitPlan::build(z, table, full, opts)?;
                let mate_bin = table.bin_of(id).expect("probe is enrolled");
                let costs = (1..=full).map(|t| visits.comparisons(t, fd.m)).collect();
                Ok((visits.position(mate_bin), costs, baseline))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.extend(part);
    }
    let n = rows.len() as f64;
    let mean_baseline = rows.iter().map(|r| r.2 as f64).sum::<f64>() / n;
    Ok((1..=full)
        .map(|t| {
            let hits = rows.iter().filter(|r| r.0.is_some_and(|p| p <= t)).count();
            let comps = rows.iter().map(|r| r.1[t - 1] as f64).sum::<f64>() / n;
            TSweepPoint {
                t,
                hit_rate: hits as f64 / n,
                w: comps / mean_baseline,
            }
        })
        .collect())
}
