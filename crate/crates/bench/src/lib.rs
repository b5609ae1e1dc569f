//! Shared fixtures for the criterion benches.

use std::collections::BTreeMap;

use mbidx_core::{
    generate, BinTable, Calibration, EnrolRecord, Indexing, Layout, ProbeSet, ProtectedDataset,
    ProtectedTemplate, Scheme, SchemeConfig, Strategy, SynthSpec,
};

pub struct Fixture {
    pub data: ProtectedDataset,
    pub characteristics: Vec<String>,
}

impl Fixture {
    pub fn new(identities: usize, scheme: Scheme) -> Self {
        let mut spec = SynthSpec::default_profile(1);
        spec.n_identities = identities;
        let ds = generate(&spec).expect("synthetic profile");
        let data = ProtectedDataset::protect(&ds, &SchemeConfig::new(scheme, 1)).expect("protect");
        Fixture {
            characteristics: ds.characteristic_names(),
            data,
        }
    }

    fn set(&self, id: mbidx_core::SubjectId, sample: usize) -> BTreeMap<String, ProtectedTemplate> {
        self.data
            .sample_set(id, &self.characteristics, sample)
            .expect("sample present")
    }

    pub fn records(&self) -> Vec<EnrolRecord> {
        self.data
            .subject_ids()
            .into_iter()
            .map(|id| EnrolRecord {
                subject_id: id,
                templates: self.set(id, 0),
            })
            .collect()
    }

    pub fn table(&self, strategy: Strategy, k: u32) -> BinTable {
        let layout = Layout::new(strategy, k, self.characteristics.clone()).expect("layout");
        BinTable::build(self.records(), layout, self.data.scheme.clone()).expect("table")
    }

    pub fn calibration(&self) -> Calibration {
        let ids: Vec<_> = self.data.subject_ids().into_iter().take(50).collect();
        let refs: Vec<_> = ids.iter().map(|&id| self.set(id, 0)).collect();
        let probes: Vec<_> = ids.iter().map(|&id| self.set(id, 1)).collect();
        Calibration::from_pairs(
            &refs.iter().collect::<Vec<_>>(),
            &probes.iter().collect::<Vec<_>>(),
            self.data.scheme.scheme,
        )
        .expect("calibration")
    }

    pub fn probes(&self) -> Vec<ProbeSet> {
        self.data
            .subject_ids()
            .into_iter()
            .map(|id| ProbeSet::new(self.set(id, 1)))
            .collect()
    }
}

pub fn indexings(k: u32) -> Vec<Indexing> {
    std::iter::once(Indexing::Exhaustive)
        .chain(
            Strategy::ALL
                .iter()
                .map(|&strategy| Indexing::Binned { strategy, k }),
        )
        .collect()
}
