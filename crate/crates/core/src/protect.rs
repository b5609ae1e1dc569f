//! Cancelable template protection.
//!
//! Three schemes turn a real-valued embedding into a protected template:
//!
//! * `SignBaseline`: unprotected reference, one bit per dimension (`v >= 0`).
//! * `BioHashing`: projection onto `l` seeded Gaussian directions that are
//!   orthonormalized with modified Gram–Schmidt, each projection thresholded
//!   at zero.
//! * `IomGrp`: Index-of-Maximum hashing with Gaussian random projection.
//!   Each of `m` slots draws `q` Gaussian vectors and stores the index of the
//!   largest dot product. For indexing, every index is written in
//!   `log2 q` bits (big-endian), so `q = 16, m = 512` gives 2048 bits.
//!   Scoring always uses the integer form and counts collisions.
//!
//! Keys follow the stolen-token setting: one key per characteristic, shared
//! by every enrolled subject and every probe.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::BinaryTemplate;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, GaussianStream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f32>", into = "Vec<f32>")]
pub struct Embedding(Vec<f32>);

impl Embedding {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Argument("empty embedding".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Argument(format!(
                "embedding value {i} is not finite"
            )));
        }
        Ok(Embedding(values))
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    fn dot(&self, row: &[f64]) -> f64 {
        self.0.iter().zip(row).map(|(&x, &w)| x as f64 * w).sum()
    }
}

impl TryFrom<Vec<f32>> for Embedding {
    type Error = Error;
    fn try_from(v: Vec<f32>) -> Result<Self> {
        Embedding::new(v)
    }
}

impl From<Embedding> for Vec<f32> {
    fn from(e: Embedding) -> Self {
        e.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[serde(alias = "sign")]
    SignBaseline,
    #[serde(alias = "biohash")]
    BioHashing,
    #[serde(alias = "iom")]
    IomGrp,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::SignBaseline, Scheme::BioHashing, Scheme::IomGrp];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::SignBaseline => "sign-baseline",
            Scheme::BioHashing => "bio-hashing",
            Scheme::IomGrp => "iom-grp",
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sign" | "sign-baseline" | "baseline" => Ok(Scheme::SignBaseline),
            "biohash" | "biohashing" | "bio-hashing" => Ok(Scheme::BioHashing),
            "iom" | "iom-grp" => Ok(Scheme::IomGrp),
            other => Err(Error::Config(format!("unknown scheme {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemeKey {
    pub scheme: Scheme,
    pub seed: u64,
    pub characteristic: String,
}

/// Scheme choice plus its size parameters.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    /// Base seed; each characteristic's key seed is derived from it and the characteristic name.
    #[serde(default)]
    pub seed: u64,
    /// BioHashing output length `l`.
    #[serde(default = "default_length")]
    pub length: usize,
    /// IoM slots `m`.
    #[serde(default = "default_slots")]
    pub slots: usize,
    /// IoM projections per slot `q`.
    #[serde(default = "default_projections")]
    pub projections: usize,
}

fn default_length() -> usize {
    512
}
fn default_slots() -> usize {
    512
}
fn default_projections() -> usize {
    16
}

impl SchemeConfig {
    pub fn new(scheme: Scheme, seed: u64) -> Self {
        SchemeConfig {
            scheme,
            seed,
            length: default_length(),
            slots: default_slots(),
            projections: default_projections(),
        }
    }

    pub fn key_for(&self, characteristic: &str) -> SchemeKey {
        SchemeKey {
            scheme: self.scheme,
            seed: derive_seed(self.seed, &format!("key/{characteristic}")),
            characteristic: characteristic.to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.scheme {
            Scheme::SignBaseline => Ok(()),
            Scheme::BioHashing if self.length == 0 => {
                Err(Error::Config("biohashing length must be positive".into()))
            }
            Scheme::BioHashing => Ok(()),
            Scheme::IomGrp => {
                if self.slots == 0 {
                    return Err(Error::Config("iom slots must be positive".into()));
                }
                check_power_of_two(self.projections)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "IntegerRepr")]
pub struct IntegerTemplate {
    ints: Vec<u32>,
    q: u32,
}

#[derive(Deserialize)]
struct IntegerRepr {
    ints: Vec<u32>,
    q: u32,
}

impl TryFrom<IntegerRepr> for IntegerTemplate {
    type Error = Error;

    fn try_from(r: IntegerRepr) -> Result<Self> {
        IntegerTemplate::new(r.ints, r.q)
    }
}

impl IntegerTemplate {
    pub fn new(ints: Vec<u32>, q: u32) -> Result<Self> {
        if q < 2 {
            return Err(Error::Argument("q must be at least 2".into()));
        }
        if ints.is_empty() {
            return Err(Error::Argument("empty integer template".into()));
        }
        if let Some(v) = ints.iter().find(|&&v| v >= q) {
            return Err(Error::Argument(format!("integer {v} not below q = {q}")));
        }
        Ok(IntegerTemplate { ints, q })
    }

    pub fn ints(&self) -> &[u32] {
        &self.ints
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn len(&self) -> usize {
        self.ints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ints.is_empty()
    }
}

/// What gets stored and compared for one characteristic of one sample.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ProtectedRepr")]
pub struct ProtectedTemplate {
    pub binary: BinaryTemplate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ints: Option<IntegerTemplate>,
}

#[derive(Deserialize)]
struct ProtectedRepr {
    binary: BinaryTemplate,
    #[serde(default)]
    ints: Option<IntegerTemplate>,
}

impl TryFrom<ProtectedRepr> for ProtectedTemplate {
    type Error = Error;

    fn try_from(r: ProtectedRepr) -> Result<Self> {
        match r.ints {
            None => Ok(ProtectedTemplate::binary(r.binary)),
            Some(ints) => {
                let t = ProtectedTemplate::from_ints(ints)?;
                if t.binary != r.binary {
                    return Err(Error::Dimension(
                        "binary form does not encode the integer template".into(),
                    ));
                }
                Ok(t)
            }
        }
    }
}

impl ProtectedTemplate {
    pub fn binary(binary: BinaryTemplate) -> Self {
        ProtectedTemplate { binary, ints: None }
    }

    pub fn from_ints(ints: IntegerTemplate) -> Result<Self> {
        Ok(ProtectedTemplate {
            binary: iom_encode(&ints)?,
            ints: Some(ints),
        })
    }
}

pub fn sign_binarize(e: &Embedding) -> BinaryTemplate {
    BinaryTemplate::from_bits(e.values().iter().map(|&v| v >= 0.0))
        .expect("embeddings are never empty")
}

/// BioHashing projection matrix: `l` orthonormal rows of dimension `d`.
#[derive(Clone, Debug)]
pub struct BioHasher {
    rows: Vec<Vec<f64>>,
    dim: usize,
}

impl BioHasher {
    pub fn from_key(key: &SchemeKey, dim: usize, l: usize) -> Result<Self> {
        if l == 0 || l > dim {
            return Err(Error::Argument(format!(
                "biohashing needs 1 <= l <= d, got l = {l}, d = {dim}"
            )));
        }
        let mut g = GaussianStream::new(key.seed, 0);
        let mut rows = vec![vec![0.0; dim]; l];
        for row in &mut rows {
            g.fill_gaussian(row);
        }
        gram_schmidt(&mut rows)?;
        Ok(BioHasher { rows, dim })
    }

    /// Uses the given rows as-is (no orthonormalization).
    pub fn from_matrix(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if dim == 0 || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Dimension(
                "projection rows must be non-empty and equal length".into(),
            ));
        }
        Ok(BioHasher { rows, dim })
    }

    pub fn output_len(&self) -> usize {
        self.rows.len()
    }

    pub fn hash(&self, e: &Embedding) -> Result<BinaryTemplate> {
        check_dim(e, self.dim)?;
        BinaryTemplate::from_bits(self.rows.iter().map(|r| e.dot(r) >= 0.0))
    }
}

/// Modified Gram–Schmidt, in place.
fn gram_schmidt(rows: &mut [Vec<f64>]) -> Result<()> {
    for i in 0..rows.len() {
        let (done, rest) = rows.split_at_mut(i);
        let v = &mut rest[0];
        for u in done.iter() {
            let proj: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= proj * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm < 1e-9 {
            return Err(Error::State(format!(
                "projection row {i} is linearly dependent"
            )));
        }
        v.iter_mut().for_each(|a| *a /= norm);
    }
    Ok(())
}

pub fn biohash(e: &Embedding, key: &SchemeKey, l: usize) -> Result<BinaryTemplate> {
    BioHasher::from_key(key, e.dim(), l)?.hash(e)
}

/// IoM-GRP projections: `m` slots of `q` Gaussian vectors each.
#[derive(Clone, Debug)]
pub struct IomHasher {
    // slot-major, then projection, then dimension
    weights: Vec<f64>,
    dim: usize,
    slots: usize,
    q: usize,
}

impl IomHasher {
    /// Slot `j` draws its vectors from stream `j` of the key seed.
    pub fn from_key(key: &SchemeKey, dim: usize, slots: usize, q: usize) -> Result<Self> {
        if slots == 0 || q < 2 || dim == 0 {
            return Err(Error::Argument(format!(
                "iom needs slots >= 1, q >= 2, d >= 1 (got {slots}, {q}, {dim})"
            )));
        }
        let weights = (0..slots)
            .into_par_iter()
            .flat_map_iter(|j| {
                let mut g = GaussianStream::new(key.seed, j as u64);
                let mut w = vec![0.0; q * dim];
                g.fill_gaussian(&mut w);
                w
            })
            .collect();
        Ok(IomHasher {
            weights,
            dim,
            slots,
            q,
        })
    }

    /// `vectors[j][p]` is projection `p` of slot `j`.
    pub fn from_vectors(vectors: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let slots = vectors.len();
        let q = vectors.first().map(Vec::len).unwrap_or(0);
        let dim = vectors
            .first()
            .and_then(|s| s.first())
            .map(Vec::len)
            .unwrap_or(0);
        if slots == 0 || q < 2 || dim == 0 {
            return Err(Error::Argument(
                "need at least one slot of two non-empty vectors".into(),
            ));
        }
        if vectors
            .iter()
            .any(|s| s.len() != q || s.iter().any(|v| v.len() != dim))
        {
            return Err(Error::Dimension("ragged projection vectors".into()));
        }
        Ok(IomHasher {
            weights: vectors.into_iter().flatten().flatten().collect(),
            dim,
            slots,
            q,
        })
    }

    pub fn hash(&self, e: &Embedding) -> Result<IntegerTemplate> {
        check_dim(e, self.dim)?;
        let ints = self
            .weights
            .chunks_exact(self.q * self.dim)
            .map(|slot| {
                let mut best = 0u32;
                let mut best_val = f64::NEG_INFINITY;
                for (p, w) in slot.chunks_exact(self.dim).enumerate() {
                    let v = e.dot(w);
                    // first maximum wins
                    if v > best_val {
                        best_val = v;
                        best = p as u32;
                    }
                }
                best
            })
            .collect();
        debug_assert_eq!(self.slots, self.weights.len() / (self.q * self.dim));
        IntegerTemplate::new(ints, self.q as u32)
    }
}

pub fn iom_grp(e: &Embedding, key: &SchemeKey, slots: usize, q: usize) -> Result<IntegerTemplate> {
    IomHasher::from_key(key, e.dim(), slots, q)?.hash(e)
}

fn check_power_of_two(q: usize) -> Result<()> {
    if q < 2 || !q.is_power_of_two() {
        return Err(Error::Config(format!("q = {q} is not a power of two >= 2")));
    }
    Ok(())
}

/// Writes each integer in `log2 q` bits, most significant first.
pub fn iom_encode(t: &IntegerTemplate) -> Result<BinaryTemplate> {
    check_power_of_two(t.q as usize)?;
    let width = t.q.trailing_zeros();
    BinaryTemplate::from_bits(
        t.ints
            .iter()
            .flat_map(|&v| (0..width).rev().map(move |s| v >> s & 1 == 1)),
    )
}

pub fn iom_decode(b: &BinaryTemplate, q: u32) -> Result<IntegerTemplate> {
    check_power_of_two(q as usize)?;
    let width = q.trailing_zeros() as usize;
    if !b.len().is_multiple_of(width) {
        return Err(Error::Dimension(format!(
            "{} bits is not a multiple of {width}",
            b.len()
        )));
    }
    let bits: Vec<bool> = b.iter().collect();
    let ints = bits
        .chunks_exact(width)
        .map(|c| c.iter().fold(0u32, |acc, &x| (acc << 1) | x as u32))
        .collect();
    IntegerTemplate::new(ints, q)
}

/// Native comparator of each scheme, in `[0, 1]`.
pub fn similarity(a: &ProtectedTemplate, b: &ProtectedTemplate, scheme: Scheme) -> Result<f64> {
    match scheme {
        Scheme::SignBaseline | Scheme::BioHashing => {
            let hd = a.binary.hamming_distance(&b.binary)?;
            Ok(1.0 - hd as f64 / a.binary.len() as f64)
        }
        Scheme::IomGrp => {
            let (Some(x), Some(y)) = (&a.ints, &b.ints) else {
                return Err(Error::Dimension(
                    "iom similarity needs integer templates".into(),
                ));
            };
            if x.len() != y.len() || x.q != y.q {
                return Err(Error::Dimension(format!(
                    "iom templates of {} and {} slots",
                    x.len(),
                    y.len()
                )));
            }
            let hits = x.ints.iter().zip(&y.ints).filter(|(p, q)| p == q).count();
            Ok(hits as f64 / x.len() as f64)
        }
    }
}

fn check_dim(e: &Embedding, dim: usize) -> Result<()> {
    if e.dim() != dim {
        return Err(Error::Dimension(format!(
            "embedding of dimension {} for a projection of dimension {dim}",
            e.dim()
        )));
    }
    Ok(())
}

/// A keyed transform for one characteristic, with its projections materialized.
#[derive(Clone, Debug)]
pub enum Protector {
    Sign { dim: usize },
    BioHash(BioHasher),
    Iom(IomHasher),
}

impl Protector {
    pub fn new(config: &SchemeConfig, characteristic: &str, dim: usize) -> Result<Self> {
        config.validate()?;
        let key = config.key_for(characteristic);
        Ok(match config.scheme {
            Scheme::SignBaseline => Protector::Sign { dim },
            Scheme::BioHashing => {
                Protector::BioHash(BioHasher::from_key(&key, dim, config.length)?)
            }
            Scheme::IomGrp => Protector::Iom(IomHasher::from_key(
                &key,
                dim,
                config.slots,
                config.projections,
            )?),
        })
    }

    pub fn protect(&self, e: &Embedding) -> Result<ProtectedTemplate> {
        match self {
            Protector::Sign { dim } => {
                check_dim(e, *dim)?;
                Ok(ProtectedTemplate::binary(sign_binarize(e)))
            }
            Protector::BioHash(h) => h.hash(e).map(ProtectedTemplate::binary),
            Protector::Iom(h) => ProtectedTemplate::from_ints(h.hash(e)?),
        }
    }

    pub fn protect_all(&self, es: &[&Embedding]) -> Result<Vec<ProtectedTemplate>> {
        es.par_iter().map(|e| self.protect(e)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(v: &[f32]) -> Embedding {
        Embedding::new(v.to_vec()).unwrap()
    }

    fn random_embedding(g: &mut GaussianStream, d: usize) -> Embedding {
        emb(&(0..d).map(|_| g.next_gaussian() as f32).collect::<Vec<_>>())
    }

    fn key(seed: u64) -> SchemeKey {
        SchemeKey {
            scheme: Scheme::BioHashing,
            seed,
            characteristic: "face".into(),
        }
    }

    #[test]
    fn embedding_rejects_non_finite() {
        assert!(Embedding::new(vec![1.0, f32::NAN]).is_err());
        assert!(Embedding::new(vec![f32::INFINITY]).is_err());
        assert!(Embedding::new(vec![]).is_err());
    }

    #[test]
    fn sign_examples() {
        assert_eq!(sign_binarize(&emb(&[0.5, -0.2, 0.0])).to_string(), "101");
        assert_eq!(sign_binarize(&emb(&[-1.0; 16])).count_ones(), 0);
        let mut g = GaussianStream::new(5, 0);
        let e = random_embedding(&mut g, 512);
        let t = sign_binarize(&e);
        for (i, v) in e.values().iter().enumerate() {
            assert_eq!(t.get(i), *v >= 0.0);
        }
    }

    #[test]
    fn biohash_is_deterministic() {
        let mut g = GaussianStream::new(6, 0);
        let e = random_embedding(&mut g, 64);
        assert_eq!(
            biohash(&e, &key(1), 32).unwrap(),
            biohash(&e, &key(1), 32).unwrap()
        );
    }

    #[test]
    fn biohash_rows_are_orthonormal() {
        let h = BioHasher::from_key(&key(3), 32, 32).unwrap();
        for (i, a) in h.rows.iter().enumerate() {
            for (j, b) in h.rows.iter().enumerate() {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-9, "rows {i},{j}: {dot}");
            }
        }
    }

    #[test]
    fn biohash_different_seeds_look_independent() {
        let l = 256usize;
        let mut g = GaussianStream::new(7, 0);
        let e = random_embedding(&mut g, l);
        let expected = l as f64 / 2.0;
        let tolerance = 4.0 * (l as f64).sqrt() / 2.0;
        for s in 0..100u64 {
            let a = biohash(&e, &key(2 * s), l).unwrap();
            let b = biohash(&e, &key(2 * s + 1), l).unwrap();
            let hd = a.hamming_distance(&b).unwrap() as f64;
            assert!(hd >= 1.0);
            assert!((hd - expected).abs() <= tolerance, "seed pair {s}: {hd}");
        }
    }

    #[test]
    fn biohash_with_injected_matrix() {
        let h = BioHasher::from_matrix(vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0]])
            .unwrap();
        let t = h.hash(&emb(&[0.3, -0.7, 0.1, 0.9])).unwrap();
        assert_eq!(t.to_string(), "10");
    }

    #[test]
    fn biohash_rejects_l_above_d() {
        let e = emb(&[1.0; 8]);
        assert!(matches!(biohash(&e, &key(1), 9), Err(Error::Argument(_))));
    }

    #[test]
    fn biohash_bits_are_balanced() {
        let d = 64;
        let h = BioHasher::from_key(&key(8), d, d).unwrap();
        let mut g = GaussianStream::new(9, 0);
        let mut ones = vec![0usize; d];
        for _ in 0..1000 {
            let t = h.hash(&random_embedding(&mut g, d)).unwrap();
            for (i, b) in t.iter().enumerate() {
                ones[i] += b as usize;
            }
        }
        for (i, &c) in ones.iter().enumerate() {
            let mean = c as f64 / 1000.0;
            assert!((0.45..=0.55).contains(&mean), "position {i}: {mean}");
        }
    }

    #[test]
    fn iom_is_deterministic() {
        let mut g = GaussianStream::new(10, 0);
        let e = random_embedding(&mut g, 32);
        let k = key(4);
        assert_eq!(
            iom_grp(&e, &k, 16, 8).unwrap(),
            iom_grp(&e, &k, 16, 8).unwrap()
        );
    }

    #[test]
    fn iom_with_injected_vectors() {
        let e = [0.4, -1.2, 0.7];
        let neg: Vec<f64> = e.iter().map(|v| -v).collect();
        let h = IomHasher::from_vectors(vec![vec![e.to_vec(), neg]]).unwrap();
        let t = h.hash(&emb(&[0.4, -1.2, 0.7])).unwrap();
        assert_eq!(t.ints(), &[0]);
    }

    #[test]
    fn iom_matches_naive_argmax() {
        let (d, slots, q) = (24usize, 8usize, 4usize);
        let k = key(12);
        let mut g = GaussianStream::new(13, 0);
        let e = random_embedding(&mut g, d);
        let got = iom_grp(&e, &k, slots, q).unwrap();
        for j in 0..slots {
            // regenerate slot j's vectors straight from the stream
            let mut s = GaussianStream::new(k.seed, j as u64);
            let mut best = (0usize, f64::NEG_INFINITY);
            for p in 0..q {
                let v: Vec<f64> = (0..d).map(|_| s.next_gaussian()).collect();
                let dot: f64 = (0..d).map(|i| e.values()[i] as f64 * v[i]).sum();
                if dot > best.1 {
                    best = (p, dot);
                }
            }
            assert_eq!(got.ints()[j] as usize, best.0, "slot {j}");
        }
    }

    #[test]
    fn iom_encoding() {
        let t = IntegerTemplate::new(vec![5], 16).unwrap();
        assert_eq!(iom_encode(&t).unwrap().to_string(), "0101");

        let mut g = GaussianStream::new(14, 0);
        let ints: Vec<u32> = (0..512).map(|_| (g.uniform() * 16.0) as u32).collect();
        let t = IntegerTemplate::new(ints, 16).unwrap();
        let b = iom_encode(&t).unwrap();
        assert_eq!(b.len(), 2048);
        assert_eq!(iom_decode(&b, 16).unwrap(), t);

        let odd = IntegerTemplate::new(vec![1, 2], 12).unwrap();
        assert!(matches!(iom_encode(&odd), Err(Error::Config(_))));
    }

    #[test]
    fn iom_template_length_from_embedding() {
        let mut g = GaussianStream::new(15, 0);
        let e = random_embedding(&mut g, 16);
        let cfg = SchemeConfig {
            slots: 40,
            projections: 8,
            ..SchemeConfig::new(Scheme::IomGrp, 3)
        };
        let t = Protector::new(&cfg, "iris", 16)
            .unwrap()
            .protect(&e)
            .unwrap();
        assert_eq!(t.binary.len(), 40 * 3);
    }

    #[test]
    fn similarity_examples() {
        let a = ProtectedTemplate::binary(BinaryTemplate::parse_bits("0000").unwrap());
        let b = ProtectedTemplate::binary(BinaryTemplate::parse_bits("0101").unwrap());
        assert_eq!(similarity(&a, &a, Scheme::BioHashing).unwrap(), 1.0);
        assert_eq!(similarity(&a, &b, Scheme::BioHashing).unwrap(), 0.5);
        assert_eq!(similarity(&b, &a, Scheme::SignBaseline).unwrap(), 0.5);

        let x = ProtectedTemplate::from_ints(IntegerTemplate::new(vec![1, 2, 3, 4], 16).unwrap())
            .unwrap();
        let y = ProtectedTemplate::from_ints(IntegerTemplate::new(vec![1, 2, 0, 0], 16).unwrap())
            .unwrap();
        assert_eq!(similarity(&x, &y, Scheme::IomGrp).unwrap(), 0.5);
        assert_eq!(similarity(&y, &x, Scheme::IomGrp).unwrap(), 0.5);
        assert_eq!(similarity(&x, &x, Scheme::IomGrp).unwrap(), 1.0);
        assert!(matches!(
            similarity(&a, &x, Scheme::IomGrp),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn keys_are_per_characteristic() {
        let cfg = SchemeConfig::new(Scheme::BioHashing, 77);
        assert_eq!(cfg.key_for("face"), cfg.key_for("face"));
        assert_ne!(cfg.key_for("face").seed, cfg.key_for("iris").seed);
    }

    #[test]
    fn stored_templates_are_validated() {
        let t = ProtectedTemplate::from_ints(IntegerTemplate::new(vec![3, 0, 15], 16).unwrap())
            .unwrap();
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(serde_json::from_str::<ProtectedTemplate>(&json).unwrap(), t);
        let out_of_range = json.replace("[3,0,15]", "[3,0,16]");
        assert!(serde_json::from_str::<ProtectedTemplate>(&out_of_range).is_err());
        let tampered = json.replace("[3,0,15]", "[3,1,15]");
        assert!(serde_json::from_str::<ProtectedTemplate>(&tampered).is_err());
    }
}
