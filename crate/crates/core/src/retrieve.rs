//! Bin-limited retrieval with score-level fusion.
//!
//! A probe is turned into an ordered sequence of patterns according to the
//! table's strategy; the first `t` of them are visited. Every subject found in
//! a visited bin is compared on each characteristic with the scheme's native
//! comparator, the scores are z-normalized with per-characteristic calibration
//! statistics and summed. The workload of a search is `m` times the number of
//! subjects in the visited bins.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::bits::{concat, Pattern};
use crate::error::{Error, Result};
use crate::index::{BinTable, EnrolRecord, Layout, Strategy, SubjectId};
use crate::patterns::{extract_patterns, PatternCount, PatternList};
use crate::protect::{similarity, ProtectedTemplate, Scheme};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProbeSet {
    pub templates: BTreeMap<String, ProtectedTemplate>,
}

impl ProbeSet {
    pub fn new(templates: BTreeMap<String, ProtectedTemplate>) -> Self {
        ProbeSet { templates }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
}

impl NormStats {
    /// Mean and population standard deviation of calibration scores.
    pub fn from_scores(scores: &[f64]) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Config("no calibration scores".into()));
        }
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
        Ok(NormStats {
            mean,
            std: var.sqrt(),
        })
    }
}

pub fn zscore_normalize(s: f64, stats: &NormStats) -> Result<f64> {
    if stats.std.is_nan() || stats.std <= 0.0 {
        return Err(Error::Config(format!(
            "degenerate calibration (std = {})",
            stats.std
        )));
    }
    Ok((s - stats.mean) / stats.std)
}

/// Per-characteristic score statistics.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Calibration(pub BTreeMap<String, NormStats>);

impl Calibration {
    /// Scores every reference against every probe (mated and non-mated) per characteristic.
    pub fn from_pairs(
        references: &[&BTreeMap<String, ProtectedTemplate>],
        probes: &[&BTreeMap<String, ProtectedTemplate>],
        scheme: Scheme,
    ) -> Result<Self> {
        let names: BTreeSet<&String> = references
            .iter()
            .chain(probes)
            .flat_map(|t| t.keys())
            .collect();
        let mut out = BTreeMap::new();
        for name in names {
            let mut scores = Vec::with_capacity(references.len() * probes.len());
            for r in references {
                for p in probes {
                    let (Some(a), Some(b)) = (r.get(name), p.get(name)) else {
                        return Err(Error::Config(format!(
                            "calibration sample without characteristic {name:?}"
                        )));
                    };
                    scores.push(similarity(a, b, scheme)?);
                }
            }
            out.insert(name.clone(), NormStats::from_scores(&scores)?);
        }
        Ok(Calibration(out))
    }

    pub fn get(&self, characteristic: &str) -> Result<&NormStats> {
        self.0.get(characteristic).ok_or_else(|| {
            Error::Config(format!(
                "no calibration for characteristic {characteristic:?}"
            ))
        })
    }
}

fn pattern_lists(z: &ProbeSet, layout: &Layout) -> Result<Vec<PatternList>> {
    layout
        .ordered(&z.templates)?
        .into_iter()
        .map(|t| extract_patterns(t, layout.k))
        .collect()
}

/// Ordered patterns a probe visits, most promising first.
pub fn probe_sequence(z: &ProbeSet, layout: &Layout) -> Result<Vec<Pattern>> {
    match layout.strategy {
        Strategy::FeatureConcat => {
            let parts = layout.ordered(&z.templates)?;
            let joined = concat(parts)?;
            Ok(extract_patterns(&joined, layout.k)?.patterns().collect())
        }
        Strategy::RankedCodes => {
            let mut best: BTreeMap<u32, PatternCount> = BTreeMap::new();
            for list in pattern_lists(z, layout)? {
                for e in list.entries() {
                    let slot = best.entry(e.pattern.value()).or_insert(*e);
                    slot.count = slot.count.max(e.count);
                }
            }
            let mut merged: Vec<PatternCount> = best.into_values().collect();
            merged.sort_by(PatternCount::rank_cmp);
            Ok(merged.into_iter().map(|e| e.pattern).collect())
        }
        Strategy::XorCodes => {
            let lists = pattern_lists(z, layout)?;
            let ranked: Vec<Vec<Pattern>> = lists.iter().map(|l| l.patterns().collect()).collect();
            Ok(xor_sequence(&ranked, layout.k))
        }
    }
}

/// XORs one pattern from each list, taking tuples in ascending order of
/// summed rank (ties by resulting value), keeping first appearances.
/// At most `m * 2^k` tuples are combined.
fn xor_sequence(lists: &[Vec<Pattern>], k: u32) -> Vec<Pattern> {
    let space = 1usize << k;
    let cap = lists.len() * space;
    if lists.iter().any(Vec::is_empty) {
        return Vec::new();
    }
    let max_sum: usize = lists.iter().map(|l| l.len() - 1).sum();
    let mut seen = vec![false; space];
    let mut out = Vec::new();
    let mut used = 0usize;
    for sum in 0..=max_sum {
        let mut group = Vec::new();
        tuples_with_sum(lists, sum, 0, 0, &mut group);
        group.sort_unstable();
        for v in group {
            if used == cap || out.len() == space {
                return out;
            }
            used += 1;
            if !seen[v as usize] {
                seen[v as usize] = true;
                out.push(Pattern::new_unchecked(v, k));
            }
        }
    }
    out
}

fn tuples_with_sum(
    lists: &[Vec<Pattern>],
    remaining: usize,
    depth: usize,
    acc: u32,
    out: &mut Vec<u32>,
) {
    let list = &lists[depth];
    if depth + 1 == lists.len() {
        if remaining < list.len() {
            out.push(acc ^ list[remaining].value());
        }
        return;
    }
    let rest_max: usize = lists[depth + 1..].iter().map(|l| l.len() - 1).sum();
    let lo = remaining.saturating_sub(rest_max);
    let hi = remaining.min(list.len() - 1);
    for (r, entry) in list.iter().enumerate().take(hi + 1).skip(lo) {
        tuples_with_sum(lists, remaining - r, depth + 1, acc ^ entry.value(), out);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SearchOptions {
    /// Whether a pattern that indexes nobody still uses up one of the `t` visits.
    pub empty_bins_consume_visit: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            empty_bins_consume_visit: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct VisitedBin {
    pub pattern: Pattern,
    pub occupancy: usize,
}

/// The bins a search visits, in order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct VisitPlan {
    pub bins: Vec<VisitedBin>,
    pub t: usize,
}

impl VisitPlan {
    pub fn build(z: &ProbeSet, table: &BinTable, t: usize, opts: SearchOptions) -> Result<Self> {
        check_t(t, table.k())?;
        let bins = probe_sequence(z, table.layout())?
            .into_iter()
            .map(|pattern| VisitedBin {
                pattern,
                occupancy: table.bin(pattern).len(),
            })
            .filter(|b| opts.empty_bins_consume_visit || b.occupancy > 0)
            .take(t)
            .collect();
        Ok(VisitPlan { bins, t })
    }

    /// Comparisons needed to visit the first `visits` bins.
    pub fn comparisons(&self, visits: usize, m: usize) -> usize {
        m * self
            .bins
            .iter()
            .take(visits)
            .map(|b| b.occupancy)
            .sum::<usize>()
    }

    /// 1-based position of a pattern in the plan.
    pub fn position(&self, pattern: Pattern) -> Option<usize> {
        self.bins
            .iter()
            .position(|b| b.pattern == pattern)
            .map(|i| i + 1)
    }
}

fn check_t(t: usize, k: u32) -> Result<()> {
    let max = 1usize << k;
    if t == 0 || t > max {
        return Err(Error::Argument(format!("t = {t} outside 1..={max}")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub subject_id: SubjectId,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateList {
    /// Fused score descending, ties by subject id ascending.
    pub candidates: Vec<Candidate>,
    pub comparisons_performed: usize,
    pub bins_visited: usize,
}

impl CandidateList {
    pub fn top(&self) -> Option<&Candidate> {
        self.candidates.first()
    }

    pub fn score_of(&self, id: SubjectId) -> Option<f64> {
        self.candidates
            .iter()
            .find(|c| c.subject_id == id)
            .map(|c| c.score)
    }
}

/// Sum of z-normalized per-characteristic similarities, summed in name order.
pub fn fused_score(
    z: &ProbeSet,
    rec: &EnrolRecord,
    scheme: Scheme,
    calib: &Calibration,
) -> Result<f64> {
    let mut total = 0.0;
    for (name, probe) in &z.templates {
        let reference = rec.templates.get(name).ok_or_else(|| {
            Error::Config(format!(
                "subject {} has no {name:?} template",
                rec.subject_id
            ))
        })?;
        total += zscore_normalize(similarity(reference, probe, scheme)?, calib.get(name)?)?;
    }
    Ok(total)
}

fn rank(
    z: &ProbeSet,
    table: &BinTable,
    ids: impl Iterator<Item = SubjectId>,
    calib: &Calibration,
) -> Result<Vec<Candidate>> {
    let scheme = table.scheme.scheme;
    let mut out = ids
        .map(|id| {
            let rec = table.record(id).expect("binned subjects are stored");
            Ok(Candidate {
                subject_id: id,
                score: fused_score(z, rec, scheme, calib)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.subject_id.cmp(&b.subject_id))
    });
    Ok(out)
}

fn check_probe(z: &ProbeSet, table: &BinTable, calib: &Calibration) -> Result<()> {
    table.layout().ordered(&z.templates)?;
    for name in &table.layout().characteristic_order {
        calib.get(name)?;
    }
    Ok(())
}

pub fn search(
    z: &ProbeSet,
    table: &BinTable,
    t: usize,
    calib: &Calibration,
) -> Result<CandidateList> {
    search_with(z, table, t, calib, SearchOptions::default())
}

pub fn search_with(
    z: &ProbeSet,
    table: &BinTable,
    t: usize,
    calib: &Calibration,
    opts: SearchOptions,
) -> Result<CandidateList> {
    check_probe(z, table, calib)?;
    let plan = VisitPlan::build(z, table, t, opts)?;
    let ids = plan
        .bins
        .iter()
        .flat_map(|b| table.bin(b.pattern).iter().copied());
    Ok(CandidateList {
        candidates: rank(z, table, ids, calib)?,
        comparisons_performed: plan.comparisons(plan.bins.len(), table.m()),
        bins_visited: plan.bins.len(),
    })
}

/// Scores every enrolled subject, ignoring the bins.
pub fn exhaustive_search(
    z: &ProbeSet,
    table: &BinTable,
    calib: &Calibration,
) -> Result<CandidateList> {
    check_probe(z, table, calib)?;
    let ids = table.records().map(|r| r.subject_id);
    Ok(CandidateList {
        candidates: rank(z, table, ids, calib)?,
        comparisons_performed: table.len() * table.m(),
        bins_visited: 0,
    })
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::bits::BinaryTemplate;
    use crate::protect::SchemeConfig;

    fn random(rng: &mut ChaCha8Rng, n: usize) -> BinaryTemplate {
        BinaryTemplate::from_bits((0..n).map(|_| rng.random_bool(0.5))).unwrap()
    }

    fn flip(rng: &mut ChaCha8Rng, t: &BinaryTemplate, p: f64) -> BinaryTemplate {
        BinaryTemplate::from_bits(t.iter().map(|b| b ^ rng.random_bool(p))).unwrap()
    }

    fn templates(parts: &[(&str, &BinaryTemplate)]) -> BTreeMap<String, ProtectedTemplate> {
        parts
            .iter()
            .map(|(c, t)| (c.to_string(), ProtectedTemplate::binary((*t).clone())))
            .collect()
    }

    fn layout(strategy: Strategy, k: u32, order: &[&str]) -> Layout {
        Layout::new(strategy, k, order.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    fn unit_calibration(names: &[&str]) -> Calibration {
        Calibration(
            names
                .iter()
                .map(|n| {
                    (
                        n.to_string(),
                        NormStats {
                            mean: 0.5,
                            std: 0.1,
                        },
                    )
                })
                .collect(),
        )
    }

    struct Fixture {
        refs: Vec<BTreeMap<String, ProtectedTemplate>>,
        probes: Vec<ProbeSet>,
    }

    fn fixture(seed: u64, n: usize, names: &[&str], bits: usize, noise: f64) -> Fixture {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut refs = Vec::new();
        let mut probes = Vec::new();
        for _ in 0..n {
            let base: Vec<BinaryTemplate> = names.iter().map(|_| random(&mut rng, bits)).collect();
            let noisy: Vec<BinaryTemplate> =
                base.iter().map(|b| flip(&mut rng, b, noise)).collect();
            let pairs: Vec<(&str, &BinaryTemplate)> =
                names.iter().copied().zip(base.iter()).collect();
            refs.push(templates(&pairs));
            let pairs: Vec<(&str, &BinaryTemplate)> =
                names.iter().copied().zip(noisy.iter()).collect();
            probes.push(ProbeSet::new(templates(&pairs)));
        }
        Fixture { refs, probes }
    }

    fn table(f: &Fixture, l: Layout) -> BinTable {
        let recs = f
            .refs
            .iter()
            .enumerate()
            .map(|(i, t)| EnrolRecord {
                subject_id: SubjectId(i as u64),
                templates: t.clone(),
            })
            .collect();
        BinTable::build(recs, l, SchemeConfig::new(Scheme::SignBaseline, 0)).unwrap()
    }

    #[test]
    fn zscore_examples() {
        let stats = NormStats::from_scores(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(zscore_normalize(stats.mean, &stats).unwrap(), 0.0);
        let z = zscore_normalize(3.0, &stats).unwrap();
        // mean 2, population std sqrt(2/3)
        assert!((z - 1.224_744_871).abs() < 1e-9, "{z}");
        assert!(zscore_normalize(2.5, &stats).unwrap() > zscore_normalize(2.4, &stats).unwrap());
        let flat = NormStats {
            mean: 1.0,
            std: 0.0,
        };
        assert!(matches!(
            zscore_normalize(1.0, &flat),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn single_characteristic_sequences_match_extraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..30 {
            let f = random(&mut rng, 200);
            let z = ProbeSet::new(templates(&[("face", &f)]));
            let want: Vec<Pattern> = extract_patterns(&f, 5).unwrap().patterns().collect();
            for s in Strategy::ALL {
                assert_eq!(
                    probe_sequence(&z, &layout(s, 5, &["face"])).unwrap(),
                    want,
                    "{s}"
                );
            }
        }
    }

    #[test]
    fn xor_sequence_starts_with_rank_zero_tuple() {
        let p = |s: &str| Pattern::parse_bits(s).unwrap();
        let seq = xor_sequence(&[vec![p("101"), p("001")], vec![p("011")]], 3);
        assert_eq!(seq, vec![p("110"), p("010")]);
    }

    #[test]
    fn xor_sequence_orders_groups_by_rank_sum_then_value() {
        let p = |v: u32| Pattern::new(v, 3).unwrap();
        // rank-sum 1 tuples: (1,0) -> 4^2 = 6, (0,1) -> 1^3 = 2; sorted gives 2 then 6
        let seq = xor_sequence(&[vec![p(1), p(4)], vec![p(2), p(3)]], 3);
        assert_eq!(seq, vec![p(3), p(2), p(6), p(7)]);
    }

    #[test]
    fn noiseless_probe_hits_its_bin_first() {
        let f = fixture(2, 40, &["a", "b", "c"], 128, 0.0);
        for s in Strategy::ALL {
            let t = table(&f, layout(s, 4, &["a", "b", "c"]));
            for (i, z) in f.probes.iter().enumerate() {
                let seq = probe_sequence(z, t.layout()).unwrap();
                assert_eq!(Some(seq[0]), t.bin_of(SubjectId(i as u64)), "{s}");
            }
        }
    }

    #[test]
    fn visiting_all_of_a_single_bin_costs_n_m() {
        let f = fixture(3, 1, &["a", "b"], 64, 0.0);
        let recs: Vec<EnrolRecord> = (0..25)
            .map(|i| EnrolRecord {
                subject_id: SubjectId(i),
                templates: f.refs[0].clone(),
            })
            .collect();
        let t = BinTable::build(
            recs,
            layout(Strategy::FeatureConcat, 3, &["a", "b"]),
            SchemeConfig::new(Scheme::SignBaseline, 0),
        )
        .unwrap();
        let res = search(&f.probes[0], &t, 8, &unit_calibration(&["a", "b"])).unwrap();
        assert_eq!(res.candidates.len(), 25);
        assert_eq!(res.comparisons_performed, 50);
    }

    #[test]
    fn comparisons_follow_visited_occupancy() {
        let f = fixture(4, 150, &["a", "b"], 128, 0.1);
        let t = table(&f, layout(Strategy::FeatureConcat, 3, &["a", "b"]));
        let calib = unit_calibration(&["a", "b"]);
        let z = &f.probes[0];
        let seq = probe_sequence(z, t.layout()).unwrap();
        let want = 2 * (t.bin(seq[0]).len() + t.bin(seq[1]).len());
        let res = search(z, &t, 2, &calib).unwrap();
        assert_eq!(res.comparisons_performed, want);
        assert_eq!(res.bins_visited, 2);
    }

    #[test]
    fn t_out_of_range() {
        let f = fixture(5, 3, &["a"], 64, 0.0);
        let t = table(&f, layout(Strategy::FeatureConcat, 3, &["a"]));
        let calib = unit_calibration(&["a"]);
        assert!(matches!(
            search(&f.probes[0], &t, 0, &calib),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            search(&f.probes[0], &t, 9, &calib),
            Err(Error::Argument(_))
        ));
        assert!(search(&f.probes[0], &t, 8, &calib).is_ok());
    }

    #[test]
    fn missing_calibration_is_config_error() {
        let f = fixture(6, 3, &["a", "b"], 64, 0.0);
        let t = table(&f, layout(Strategy::RankedCodes, 3, &["a", "b"]));
        let calib = unit_calibration(&["a"]);
        assert!(matches!(
            search(&f.probes[0], &t, 1, &calib),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            exhaustive_search(&f.probes[0], &t, &calib),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn probe_with_wrong_characteristics() {
        let f = fixture(7, 3, &["a", "b"], 64, 0.0);
        let t = table(&f, layout(Strategy::XorCodes, 3, &["a", "b"]));
        let g = fixture(7, 1, &["a", "c"], 64, 0.0);
        let calib = unit_calibration(&["a", "b", "c"]);
        assert!(matches!(
            search(&g.probes[0], &t, 1, &calib),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn noiseless_self_search_ranks_mate_first() {
        let f = fixture(8, 60, &["a", "b"], 128, 0.0);
        let refs: Vec<_> = f.refs.iter().collect();
        let probes: Vec<_> = f.probes.iter().map(|p| &p.templates).collect();
        let calib = Calibration::from_pairs(&refs, &probes, Scheme::SignBaseline).unwrap();
        for s in Strategy::ALL {
            let t = table(&f, layout(s, 4, &["a", "b"]));
            for (i, z) in f.probes.iter().enumerate() {
                let res = search(z, &t, 1, &calib).unwrap();
                assert_eq!(res.top().unwrap().subject_id, SubjectId(i as u64));
            }
        }
    }

    #[test]
    fn search_is_a_restriction_of_exhaustive_search() {
        let f = fixture(9, 120, &["a", "b", "c"], 96, 0.1);
        let refs: Vec<_> = f.refs.iter().collect();
        let probes: Vec<_> = f.probes.iter().map(|p| &p.templates).collect();
        let calib = Calibration::from_pairs(&refs, &probes, Scheme::SignBaseline).unwrap();
        for s in Strategy::ALL {
            let t = table(&f, layout(s, 4, &["a", "b", "c"]));
            for z in f.probes.iter().take(20) {
                let full = exhaustive_search(z, &t, &calib).unwrap();
                assert_eq!(full.comparisons_performed, 120 * 3);
                let mut prev: Option<CandidateList> = None;
                for budget in 1..=16 {
                    let part = search(z, &t, budget, &calib).unwrap();
                    for c in &part.candidates {
                        assert_eq!(full.score_of(c.subject_id), Some(c.score));
                    }
                    if let Some(p) = &prev {
                        assert!(p.comparisons_performed <= part.comparisons_performed);
                        assert!(p
                            .candidates
                            .iter()
                            .all(|c| part.score_of(c.subject_id).is_some()));
                    }
                    prev = Some(part);
                }
                let all = search(z, &t, 16, &calib).unwrap();
                if all.candidates.len() == t.len() {
                    assert_eq!(all.candidates, full.candidates);
                }
            }
        }
    }

    #[test]
    fn empty_bins_can_be_skipped() {
        let f = fixture(10, 20, &["a"], 128, 0.2);
        let t = table(&f, layout(Strategy::FeatureConcat, 6, &["a"]));
        let calib = unit_calibration(&["a"]);
        let z = &f.probes[0];
        let counting = search_with(z, &t, 5, &calib, SearchOptions::default()).unwrap();
        let skipping = search_with(
            z,
            &t,
            5,
            &calib,
            SearchOptions {
                empty_bins_consume_visit: false,
            },
        )
        .unwrap();
        assert!(skipping.comparisons_performed >= counting.comparisons_performed);
        let plan = VisitPlan::build(
            z,
            &t,
            5,
            SearchOptions {
                empty_bins_consume_visit: false,
            },
        )
        .unwrap();
        assert!(plan.bins.iter().all(|b| b.occupancy > 0));
    }
}
