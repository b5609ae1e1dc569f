use std::collections::BTreeMap;

use mbidx_core::datagen;
use mbidx_core::report::{self, ReportFile};
use mbidx_core::*;
use tempfile::TempDir;

fn small(seed: u64, identities: usize) -> EmbeddingDataset {
    let mut spec = SynthSpec::default_profile(seed);
    spec.n_identities = identities;
    generate(&spec).unwrap()
}

fn set(
    pd: &ProtectedDataset,
    id: u64,
    chars: &[String],
    s: usize,
) -> BTreeMap<String, ProtectedTemplate> {
    pd.sample_set(SubjectId(id), chars, s).unwrap()
}

#[test]
fn files_round_trip_through_disk() {
    let dir = TempDir::new().unwrap();
    let ds = small(3, 40);
    let csv = dir.path().join("e.csv");
    let bin = dir.path().join("e.bin");
    datagen::store_csv(&csv, &ds).unwrap();
    datagen::store_binary(&bin, &ds).unwrap();
    assert_eq!(datagen::load(&csv).unwrap(), ds);
    assert_eq!(datagen::load(&bin).unwrap(), ds);

    let pd = ProtectedDataset::protect(&ds, &SchemeConfig::new(Scheme::IomGrp, 3)).unwrap();
    let path = dir.path().join("p.json");
    pd.store(&path).unwrap();
    let back = ProtectedDataset::load(&path).unwrap();
    assert_eq!(back, pd);
}

#[test]
fn enrol_store_reload_and_identify() {
    let dir = TempDir::new().unwrap();
    let ds = small(8, 200);
    let chars = ds.characteristic_names();
    let pd = ProtectedDataset::protect(&ds, &SchemeConfig::new(Scheme::BioHashing, 8)).unwrap();
    let ids: Vec<u64> = (0..200).collect();
    let records: Vec<EnrolRecord> = ids
        .iter()
        .map(|&id| EnrolRecord {
            subject_id: SubjectId(id),
            templates: set(&pd, id, &chars, 0),
        })
        .collect();
    let layout = Layout::new(Strategy::RankedCodes, 4, chars.clone()).unwrap();
    let table = BinTable::build(records, layout, pd.scheme.clone()).unwrap();
    let path = dir.path().join("index.json");
    std::fs::write(&path, table.to_json().unwrap()).unwrap();
    let table = BinTable::load(&path).unwrap();
    assert_eq!(table.len(), 200);

    let refs: Vec<_> = ids[..30]
        .iter()
        .map(|&id| set(&pd, id, &chars, 0))
        .collect();
    let probes: Vec<_> = ids[..30]
        .iter()
        .map(|&id| set(&pd, id, &chars, 1))
        .collect();
    let calib = Calibration::from_pairs(
        &refs.iter().collect::<Vec<_>>(),
        &probes.iter().collect::<Vec<_>>(),
        Scheme::BioHashing,
    )
    .unwrap();

    let mut hits = 0;
    for &id in &ids {
        let z = ProbeSet::new(set(&pd, id, &chars, 1));
        let full = exhaustive_search(&z, &table, &calib).unwrap();
        assert_eq!(full.comparisons_performed, 200 * 3);
        assert_eq!(full.candidates[0].subject_id, SubjectId(id));
        let binned = search(&z, &table, 16, &calib).unwrap();
        assert_eq!(binned.comparisons_performed, 200 * 3);
        assert_eq!(binned.candidates, full.candidates);
        let few = search(&z, &table, 2, &calib).unwrap();
        assert!(few.comparisons_performed <= binned.comparisons_performed);
        if few.candidates.first().map(|c| c.subject_id) == Some(SubjectId(id)) {
            hits += 1;
        }
    }
    assert!(hits > 0 && hits < 200, "{hits}");
}

#[test]
fn written_reports_parse_back() {
    let dir = TempDir::new().unwrap();
    let ds = small(1, 150);
    let chars = ds.characteristic_names();
    let pd = ProtectedDataset::protect(&ds, &SchemeConfig::new(Scheme::SignBaseline, 1)).unwrap();
    let protocol = Protocol {
        seed: 1,
        folds: 5,
        calibration_identities: 20,
        ..Protocol::default()
    };
    let ix = Indexing::Binned {
        strategy: Strategy::XorCodes,
        k: 4,
    };
    let reports = vec![
        closed_set_run(&pd, &chars, ix, &protocol).unwrap(),
        open_set_run(&pd, &chars, ix, TPolicy::ClosedSetDerived, &protocol).unwrap(),
    ];
    report::write_reports(dir.path(), "r", &reports).unwrap();
    let text = std::fs::read_to_string(dir.path().join("r.json")).unwrap();
    let file = ReportFile::from_json(&text).unwrap();
    assert_eq!(file, ReportFile::new(&reports));
    for name in ["r.csv", "r_probes.csv", "r_det.csv"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let probes = std::fs::read_to_string(dir.path().join("r_probes.csv")).unwrap();
    let logged: usize = reports.iter().map(|r| r.all_probes().count()).sum();
    assert_eq!(probes.lines().count(), logged + 1);
}
