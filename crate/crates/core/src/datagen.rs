//! Synthetic multi-characteristic embeddings and dataset files.
//!
//! Each identity gets a standard-normal class mean per characteristic; every
//! sample is that mean plus `sigma` times standard-normal noise. Streams are
//! keyed by (seed, characteristic name, identity), so adding or reordering
//! characteristics does not change the others.
//!
//! Two on-disk formats:
//!
//! * CSV, header `subject_id,characteristic,sample_id,v0,...,v{D-1}` where `D`
//!   is the largest dimension; a row carries exactly its characteristic's
//!   dimension worth of values.
//! * A packed little-endian container (`*.bin`) with a JSON manifest next to
//!   it (same stem, `.json`). Each record is `u64 subject_id`,
//!   `u32 characteristic index` (into the manifest list), `u32 sample_id`,
//!   then `dim` `f32` values.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::SubjectId;
use crate::protect::Embedding;
use crate::rng::{derive_seed, GaussianStream};

pub const MANIFEST_FORMAT: &str = "mbidx-embeddings";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharacteristicSpec {
    pub name: String,
    pub dim: usize,
    pub sigma: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_samples() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n_identities: usize,
    pub characteristics: Vec<CharacteristicSpec>,
    #[serde(default)]
    pub seed: u64,
}

impl SynthSpec {
    /// 1000 identities, face/fingerprint/iris stand-ins of dimension 512
    /// with increasing intra-class noise. Illustrative, not calibrated.
    pub fn default_profile(seed: u64) -> Self {
        let ch = |name: &str, sigma| CharacteristicSpec {
            name: name.into(),
            dim: 512,
            sigma,
            samples: 2,
        };
        SynthSpec {
            n_identities: 1000,
            characteristics: vec![ch("fingerprint", 0.3), ch("face", 0.5), ch("iris", 0.8)],
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_identities == 0 {
            return Err(Error::Config("n_identities must be positive".into()));
        }
        if self.characteristics.is_empty() {
            return Err(Error::Config(
                "at least one characteristic is required".into(),
            ));
        }
        let mut names = BTreeSet::new();
        for c in &self.characteristics {
            check_name(&c.name)?;
            if !names.insert(&c.name) {
                return Err(Error::Config(format!(
                    "duplicate characteristic {:?}",
                    c.name
                )));
            }
            if c.dim < 2 {
                return Err(Error::Config(format!("{}: dim must be at least 2", c.name)));
            }
            if !(c.sigma >= 0.0 && c.sigma.is_finite()) {
                return Err(Error::Config(format!(
                    "{}: sigma must be finite and non-negative, got {}",
                    c.name, c.sigma
                )));
            }
            if c.samples < 2 {
                return Err(Error::Config(format!(
                    "{}: at least two samples per identity are needed",
                    c.name
                )));
            }
        }
        Ok(())
    }
}

fn check_name(name: &str) -> Result<()> {
    if name.is_empty() || name.contains([',', '"', '\n', '\r']) {
        return Err(Error::Config(format!(
            "invalid characteristic name {name:?}"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharacteristicInfo {
    pub name: String,
    pub dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub subject_id: SubjectId,
    pub characteristic: String,
    pub sample_id: u32,
    pub embedding: Embedding,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingDataset {
    pub characteristics: Vec<CharacteristicInfo>,
    pub records: Vec<EmbeddingRecord>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub value_type: String,
    pub byte_order: String,
    pub characteristics: Vec<CharacteristicInfo>,
    pub records: usize,
}

/// Samples of one subject, per characteristic, in sample id order.
pub type SubjectSamples<'a> = BTreeMap<String, Vec<(u32, &'a Embedding)>>;

impl EmbeddingDataset {
    pub fn manifest(&self) -> Manifest {
        Manifest {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            value_type: "f32".into(),
            byte_order: "little".into(),
            characteristics: self.characteristics.clone(),
            records: self.records.len(),
        }
    }

    pub fn characteristic_names(&self) -> Vec<String> {
        self.characteristics
            .iter()
            .map(|c| c.name.clone())
            .collect()
    }

    pub fn dim(&self, characteristic: &str) -> Option<usize> {
        self.characteristics
            .iter()
            .find(|c| c.name == characteristic)
            .map(|c| c.dim)
    }

    pub fn by_subject(&self) -> BTreeMap<SubjectId, SubjectSamples<'_>> {
        let mut out: BTreeMap<SubjectId, SubjectSamples<'_>> = BTreeMap::new();
        for r in &self.records {
            out.entry(r.subject_id)
                .or_default()
                .entry(r.characteristic.clone())
                .or_default()
                .push((r.sample_id, &r.embedding));
        }
        for per in out.values_mut() {
            for samples in per.values_mut() {
                samples.sort_by_key(|(s, _)| *s);
            }
        }
        out
    }

    /// Dimensions match, and every subject has two or more samples of every characteristic.
    pub fn validate(&self) -> Result<()> {
        let dims: BTreeMap<&str, usize> = self
            .characteristics
            .iter()
            .map(|c| (c.name.as_str(), c.dim))
            .collect();
        if dims.len() != self.characteristics.len() {
            return Err(Error::Config("duplicate characteristic in manifest".into()));
        }
        let mut seen = BTreeSet::new();
        for r in &self.records {
            let dim = dims.get(r.characteristic.as_str()).ok_or_else(|| {
                Error::Config(format!("unknown characteristic {:?}", r.characteristic))
            })?;
            if r.embedding.dim() != *dim {
                return Err(Error::Dimension(format!(
                    "subject {} {} sample {}: dimension {} != {dim}",
                    r.subject_id,
                    r.characteristic,
                    r.sample_id,
                    r.embedding.dim()
                )));
            }
            if !seen.insert((r.subject_id, &r.characteristic, r.sample_id)) {
                return Err(Error::Config(format!(
                    "duplicate sample {} of subject {} {}",
                    r.sample_id, r.subject_id, r.characteristic
                )));
            }
        }
        for (id, per) in self.by_subject() {
            for name in dims.keys() {
                let n = per.get(*name).map_or(0, Vec::len);
                if n < 2 {
                    return Err(Error::Config(format!(
                        "subject {id} has {n} {name} samples, need at least 2"
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn generate(spec: &SynthSpec) -> Result<EmbeddingDataset> {
    spec.validate()?;
    let per_identity: Vec<Vec<EmbeddingRecord>> = (0..spec.n_identities)
        .into_par_iter()
        .map(|i| {
            let mut out = Vec::new();
            for c in &spec.characteristics {
                let mut g = GaussianStream::new(
                    derive_seed(spec.seed, &format!("embeddings/{}", c.name)),
                    i as u64,
                );
                let mut mean = vec![0.0; c.dim];
                g.fill_gaussian(&mut mean);
                for s in 0..c.samples {
                    let values = mean
                        .iter()
                        .map(|m| (m + c.sigma * g.next_gaussian()) as f32)
                        .collect();
                    out.push(EmbeddingRecord {
                        subject_id: SubjectId(i as u64),
                        characteristic: c.name.clone(),
                        sample_id: s as u32,
                        embedding: Embedding::new(values)?,
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(EmbeddingDataset {
        characteristics: spec
            .characteristics
            .iter()
            .map(|c| CharacteristicInfo {
                name: c.name.clone(),
                dim: c.dim,
            })
            .collect(),
        records: per_identity.into_iter().flatten().collect(),
    })
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let write = || -> std::io::Result<()> {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    };
    write().map_err(|e| Error::io(path, e))
}

pub fn to_csv(ds: &EmbeddingDataset) -> Result<Vec<u8>> {
    let width = ds.characteristics.iter().map(|c| c.dim).max().unwrap_or(0);
    let mut w = csv::WriterBuilder::new()
        .flexible(true)
        .from_writer(Vec::new());
    let mut header = vec![
        "subject_id".to_string(),
        "characteristic".to_string(),
        "sample_id".to_string(),
    ];
    header.extend((0..width).map(|i| format!("v{i}")));
    let to_err = |e: csv::Error| Error::Argument(format!("csv write: {e}"));
    w.write_record(&header).map_err(to_err)?;
    for r in &ds.records {
        let mut row = vec![
            r.subject_id.to_string(),
            r.characteristic.clone(),
            r.sample_id.to_string(),
        ];
        row.extend(r.embedding.values().iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(to_err)?;
    }
    w.into_inner()
        .map_err(|e| Error::Argument(format!("csv write: {e}")))
}

pub fn store_csv(path: &Path, ds: &EmbeddingDataset) -> Result<()> {
    write_atomic(path, &to_csv(ds)?)
}

pub fn load_csv(path: &Path) -> Result<EmbeddingDataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rd = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(true)
        .from_reader(file);
    let header = rd
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .clone();
    if header.len() < 4
        || &header[0] != "subject_id"
        || &header[1] != "characteristic"
        || &header[2] != "sample_id"
        || header
            .iter()
            .skip(3)
            .enumerate()
            .any(|(i, h)| h != format!("v{i}"))
    {
        return Err(Error::parse(path, 1, "malformed header"));
    }
    let width = header.len() - 3;
    let mut characteristics: Vec<CharacteristicInfo> = Vec::new();
    let mut records = Vec::new();
    for row in rd.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::parse(path, line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |msg: String| Error::parse(path, line, msg);
        if row.len() < 4 || row.len() - 3 > width {
            return Err(bad(format!("row has {} fields", row.len())));
        }
        let subject_id = row[0]
            .parse::<u64>()
            .map_err(|e| bad(format!("subject_id: {e}")))?;
        let characteristic = row[1].to_string();
        check_name(&characteristic).map_err(|e| bad(e.to_string()))?;
        let sample_id = row[2]
            .parse::<u32>()
            .map_err(|e| bad(format!("sample_id: {e}")))?;
        let values = row
            .iter()
            .skip(3)
            .map(|v| {
                v.parse::<f32>()
                    .map_err(|e| bad(format!("value {v:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let dim = values.len();
        match characteristics.iter().find(|c| c.name == characteristic) {
            Some(c) if c.dim != dim => {
                return Err(bad(format!(
                    "{characteristic} row has {dim} values, earlier rows had {}",
                    c.dim
                )))
            }
            Some(_) => {}
            None => characteristics.push(CharacteristicInfo {
                name: characteristic.clone(),
                dim,
            }),
        }
        records.push(EmbeddingRecord {
            subject_id: SubjectId(subject_id),
            characteristic,
            sample_id,
            embedding: Embedding::new(values).map_err(|e| bad(e.to_string()))?,
        });
    }
    Ok(EmbeddingDataset {
        characteristics,
        records,
    })
}

pub fn manifest_path(bin_path: &Path) -> PathBuf {
    bin_path.with_extension("json")
}

pub fn to_binary(ds: &EmbeddingDataset) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for r in &ds.records {
        let idx = ds
            .characteristics
            .iter()
            .position(|c| c.name == r.characteristic)
            .ok_or_else(|| {
                Error::Config(format!("unknown characteristic {:?}", r.characteristic))
            })?;
        out.extend_from_slice(&r.subject_id.0.to_le_bytes());
        out.extend_from_slice(&(idx as u32).to_le_bytes());
        out.extend_from_slice(&r.sample_id.to_le_bytes());
        for v in r.embedding.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn store_binary(path: &Path, ds: &EmbeddingDataset) -> Result<()> {
    let manifest = serde_json::to_vec_pretty(&ds.manifest())?;
    write_atomic(path, &to_binary(ds)?)?;
    write_atomic(&manifest_path(path), &manifest)
}

pub fn load_binary(path: &Path) -> Result<EmbeddingDataset> {
    let mpath = manifest_path(path);
    let mtext = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: Manifest = serde_json::from_str(&mtext)
        .map_err(|e| Error::parse(&mpath, e.line() as u64, e.to_string()))?;
    if manifest.format != MANIFEST_FORMAT
        || manifest.version != MANIFEST_VERSION
        || manifest.value_type != "f32"
        || manifest.byte_order != "little"
    {
        return Err(Error::parse(&mpath, 1, "unsupported manifest"));
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::with_capacity(manifest.records);
    let mut at = 0usize;
    for n in 0..manifest.records {
        let recno = n as u64 + 1;
        let take = |at: &mut usize, len: usize| -> Result<&[u8]> {
            let s = bytes
                .get(*at..*at + len)
                .ok_or_else(|| Error::parse(path, recno, "truncated record"))?;
            *at += len;
            Ok(s)
        };
        let subject = u64::from_le_bytes(take(&mut at, 8)?.try_into().unwrap());
        let idx = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize;
        let sample_id = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap());
        let info = manifest
            .characteristics
            .get(idx)
            .ok_or_else(|| Error::parse(path, recno, format!("characteristic index {idx}")))?;
        let values = take(&mut at, 4 * info.dim)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        records.push(EmbeddingRecord {
            subject_id: SubjectId(subject),
            characteristic: info.name.clone(),
            sample_id,
            embedding: Embedding::new(values)
                .map_err(|e| Error::parse(path, recno, e.to_string()))?,
        });
    }
    if at != bytes.len() {
        return Err(Error::parse(
            path,
            manifest.records as u64 + 1,
            format!("{} trailing bytes", bytes.len() - at),
        ));
    }
    Ok(EmbeddingDataset {
        characteristics: manifest.characteristics,
        records,
    })
}

/// Loads either format, chosen by extension (`.bin` or anything else as CSV).
pub fn load(path: &Path) -> Result<EmbeddingDataset> {
    let ds = match path.extension().and_then(|e| e.to_str()) {
        Some("bin") => load_binary(path)?,
        _ => load_csv(path)?,
    };
    ds.validate()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(sigma: f64, seed: u64) -> SynthSpec {
        SynthSpec {
            n_identities: 20,
            characteristics: vec![
                CharacteristicSpec {
                    name: "a".into(),
                    dim: 16,
                    sigma,
                    samples: 2,
                },
                CharacteristicSpec {
                    name: "b".into(),
                    dim: 8,
                    sigma,
                    samples: 3,
                },
            ],
            seed,
        }
    }

    fn cosine(a: &Embedding, b: &Embedding) -> f64 {
        let dot: f64 = a
            .values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| *x as f64 * *y as f64)
            .sum();
        let na: f64 = a
            .values()
            .iter()
            .map(|x| (*x as f64).powi(2))
            .sum::<f64>()
            .sqrt();
        let nb: f64 = b
            .values()
            .iter()
            .map(|x| (*x as f64).powi(2))
            .sum::<f64>()
            .sqrt();
        dot / (na * nb)
    }

    #[test]
    fn noiseless_samples_are_identical() {
        let ds = generate(&small(0.0, 1)).unwrap();
        for per in ds.by_subject().values() {
            for samples in per.values() {
                assert!(samples.windows(2).all(|w| w[0].1 == w[1].1));
            }
        }
        ds.validate().unwrap();
        assert_eq!(ds.records.len(), 20 * (2 + 3));
    }

    #[test]
    fn seeds_change_class_means() {
        let a = generate(&small(0.1, 1)).unwrap();
        let b = generate(&small(0.1, 2)).unwrap();
        assert_ne!(a.records[0].embedding, b.records[0].embedding);
        assert_eq!(a, generate(&small(0.1, 1)).unwrap());
    }

    #[test]
    fn characteristics_are_generated_independently() {
        let full = generate(&small(0.2, 3)).unwrap();
        let mut only_b = small(0.2, 3);
        only_b.characteristics.remove(0);
        let part = generate(&only_b).unwrap();
        let from_full: Vec<_> = full
            .records
            .iter()
            .filter(|r| r.characteristic == "b")
            .collect();
        let from_part: Vec<_> = part.records.iter().collect();
        assert_eq!(from_full, from_part);
    }

    #[test]
    fn class_separation_shrinks_with_noise() {
        let mut gaps = Vec::new();
        for sigma in [0.2, 0.5, 1.0, 2.0] {
            let spec = SynthSpec {
                n_identities: 100,
                characteristics: vec![CharacteristicSpec {
                    name: "a".into(),
                    dim: 64,
                    sigma,
                    samples: 2,
                }],
                seed: 5,
            };
            let ds = generate(&spec).unwrap();
            let subjects = ds.by_subject();
            let firsts: Vec<(&Embedding, &Embedding)> = subjects
                .values()
                .map(|per| (per["a"][0].1, per["a"][1].1))
                .collect();
            let within: f64 = firsts.iter().map(|(a, b)| cosine(a, b)).sum::<f64>() / 100.0;
            let mut between = 0.0;
            for i in 0..100 {
                between += cosine(firsts[i].0, firsts[(i + 1) % 100].1);
            }
            gaps.push(within - between / 100.0);
        }
        assert!(gaps.windows(2).all(|w| w[0] > w[1]), "{gaps:?}");
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = small(0.1, 1);
        s.characteristics[0].sigma = -0.5;
        assert!(matches!(generate(&s), Err(Error::Config(_))));
        let mut s = small(0.1, 1);
        s.characteristics[1].samples = 1;
        assert!(s.validate().is_err());
        let mut s = small(0.1, 1);
        s.characteristics[1].name = "a".into();
        assert!(s.validate().is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.csv");
        let ds = generate(&small(0.4, 7)).unwrap();
        store_csv(&path, &ds).unwrap();
        let back = load(&path).unwrap();
        assert_eq!(back, ds);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count() - 1, ds.manifest().records);
    }

    #[test]
    fn binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.bin");
        let ds = generate(&small(0.4, 8)).unwrap();
        store_binary(&path, &ds).unwrap();
        assert_eq!(load(&path).unwrap(), ds);
    }

    #[test]
    fn truncated_files_fail_with_position() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate(&small(0.4, 9)).unwrap();

        let csv_path = dir.path().join("ds.csv");
        store_csv(&csv_path, &ds).unwrap();
        let text = std::fs::read_to_string(&csv_path).unwrap();
        let cut = text.len() - 40;
        std::fs::write(&csv_path, &text[..cut]).unwrap();
        match load(&csv_path) {
            Err(Error::Parse { line, .. }) => {
                assert_eq!(line as usize, text[..cut].lines().count())
            }
            other => panic!("expected parse error, got {other:?}"),
        }

        let bin_path = dir.path().join("ds.bin");
        store_binary(&bin_path, &ds).unwrap();
        let bytes = std::fs::read(&bin_path).unwrap();
        std::fs::write(&bin_path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load(&bin_path), Err(Error::Parse { .. })));
    }

    #[test]
    fn malformed_rows_report_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(
            &path,
            "subject_id,characteristic,sample_id,v0,v1\n1,a,0,0.5,1\n1,a,1,zz,1\n",
        )
        .unwrap();
        match load(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        std::fs::write(&path, "id,characteristic,sample_id,v0\n").unwrap();
        assert!(matches!(load(&path), Err(Error::Parse { line: 1, .. })));
    }
}
