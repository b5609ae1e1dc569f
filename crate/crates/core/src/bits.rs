//! Fixed-length bit strings and short k-bit patterns.
//!
//! Templates pack bits MSB-first into `u64` words: bit `i` lives in word
//! `i / 64` at shift `63 - i % 64`. Padding bits past `n` are always zero,
//! which keeps equality and popcount-based distances word-wise.
//!
//! The textual form is a lowercase hex string of `ceil(n / 8)` bytes, first
//! bit in the most significant position, always carried next to `n`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Longest supported pattern width.
pub const MAX_PATTERN_LEN: u32 = 16;

#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "TemplateRepr", into = "TemplateRepr")]
pub struct BinaryTemplate {
    words: Vec<u64>,
    n: usize,
}

#[derive(Serialize, Deserialize)]
struct TemplateRepr {
    n: usize,
    hex: String,
}

impl From<BinaryTemplate> for TemplateRepr {
    fn from(t: BinaryTemplate) -> Self {
        TemplateRepr {
            n: t.n,
            hex: t.to_hex(),
        }
    }
}

impl TryFrom<TemplateRepr> for BinaryTemplate {
    type Error = Error;

    fn try_from(r: TemplateRepr) -> Result<Self> {
        BinaryTemplate::from_hex(&r.hex, r.n)
    }
}

impl BinaryTemplate {
    pub fn zeros(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Argument("template length must be positive".into()));
        }
        Ok(BinaryTemplate {
            words: vec![0; n.div_ceil(64)],
            n,
        })
    }

    pub fn from_bits<I>(bits: I) -> Result<Self>
    where
        I: IntoIterator<Item = bool>,
    {
        let mut words = Vec::new();
        let mut n = 0usize;
        for bit in bits {
            if n.is_multiple_of(64) {
                words.push(0);
            }
            if bit {
                *words.last_mut().unwrap() |= 1u64 << (63 - n % 64);
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::Argument("template length must be positive".into()));
        }
        Ok(BinaryTemplate { words, n })
    }

    /// Parses a string of `'0'`/`'1'` characters. Mostly useful in tests.
    pub fn parse_bits(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Argument(format!("invalid bit character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_bits(bits)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(
            i < self.n,
            "bit index {i} out of range for length {}",
            self.n
        );
        self.words[i / 64] >> (63 - i % 64) & 1 == 1
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.n).map(move |i| self.get(i))
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn hamming_distance(&self, other: &BinaryTemplate) -> Result<usize> {
        if self.n != other.n {
            return Err(Error::Dimension(format!(
                "hamming distance between lengths {} and {}",
                self.n, other.n
            )));
        }
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum())
    }

    /// Integer values of every stride-1 window of `k` bits, in scan order.
    ///
    /// Yields `n - k + 1` values; the caller validates `k`.
    pub(crate) fn windows(&self, k: u32) -> impl Iterator<Item = u32> + '_ {
        let k = k as usize;
        let mask = if k == 32 { u32::MAX } else { (1u32 << k) - 1 };
        let mut acc = 0u32;
        (0..self.n).filter_map(move |i| {
            acc = ((acc << 1) | self.get(i) as u32) & mask;
            (i + 1 >= k).then_some(acc)
        })
    }

    pub fn to_hex(&self) -> String {
        let bytes: Vec<u8> = self
            .words
            .iter()
            .flat_map(|w| w.to_be_bytes())
            .take(self.n.div_ceil(8))
            .collect();
        hex::encode(bytes)
    }

    pub fn from_hex(s: &str, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Argument("template length must be positive".into()));
        }
        let bytes =
            hex::decode(s).map_err(|e| Error::Argument(format!("bad template hex: {e}")))?;
        if bytes.len() != n.div_ceil(8) {
            return Err(Error::Dimension(format!(
                "hex carries {} bytes, expected {} for n = {n}",
                bytes.len(),
                n.div_ceil(8)
            )));
        }
        let mut words = vec![0u64; n.div_ceil(64)];
        for (i, b) in bytes.iter().enumerate() {
            words[i / 8] |= (*b as u64) << (56 - 8 * (i % 8));
        }
        let t = BinaryTemplate { words, n };
        if t.has_padding_bits() {
            return Err(Error::Argument(format!(
                "hex has non-zero bits beyond n = {n}"
            )));
        }
        Ok(t)
    }

    fn has_padding_bits(&self) -> bool {
        let used = self.n % 64;
        used != 0 && self.words.last().unwrap() & (u64::MAX >> used) != 0
    }
}

impl fmt::Debug for BinaryTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.n <= 64 {
            write!(f, "BinaryTemplate({self})")
        } else {
            write!(f, "BinaryTemplate(n={}, {})", self.n, self.to_hex())
        }
    }
}

impl fmt::Display for BinaryTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

pub fn hamming_distance(a: &BinaryTemplate, b: &BinaryTemplate) -> Result<usize> {
    a.hamming_distance(b)
}

/// Joins templates left to right.
pub fn concat<'a, I>(parts: I) -> Result<BinaryTemplate>
where
    I: IntoIterator<Item = &'a BinaryTemplate>,
{
    let mut parts = parts.into_iter().peekable();
    if parts.peek().is_none() {
        return Err(Error::Argument("cannot concatenate an empty list".into()));
    }
    BinaryTemplate::from_bits(parts.flat_map(|p| p.iter()))
}

/// A `k`-bit pattern. The first bit scanned is the most significant bit of `value`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pattern {
    value: u32,
    k: u32,
}

impl Pattern {
    pub fn new(value: u32, k: u32) -> Result<Self> {
        check_pattern_len(k)?;
        if value >> k != 0 {
            return Err(Error::Argument(format!(
                "pattern value {value} does not fit in {k} bits"
            )));
        }
        Ok(Pattern { value, k })
    }

    pub(crate) fn new_unchecked(value: u32, k: u32) -> Self {
        debug_assert!((1..=MAX_PATTERN_LEN).contains(&k) && value >> k == 0);
        Pattern { value, k }
    }

    pub fn zero(k: u32) -> Result<Self> {
        Self::new(0, k)
    }

    pub fn value(self) -> u32 {
        self.value
    }

    pub fn k(self) -> u32 {
        self.k
    }

    pub fn from_bits(bits: &[bool]) -> Result<Self> {
        let k = bits.len() as u32;
        check_pattern_len(k)?;
        let value = bits.iter().fold(0u32, |acc, &b| (acc << 1) | b as u32);
        Ok(Pattern { value, k })
    }

    pub fn to_bits(self) -> Vec<bool> {
        (0..self.k)
            .rev()
            .map(|s| self.value >> s & 1 == 1)
            .collect()
    }

    pub fn parse_bits(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Argument(format!("invalid bit character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_bits(&bits)
    }

    pub fn xor(self, other: Pattern) -> Result<Pattern> {
        if self.k != other.k {
            return Err(Error::Dimension(format!(
                "xor of {}-bit and {}-bit patterns",
                self.k, other.k
            )));
        }
        Ok(Pattern {
            value: self.value ^ other.value,
            k: self.k,
        })
    }
}

impl fmt::Debug for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Pattern({self})")
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:0width$b}", self.value, width = self.k as usize)
    }
}

pub fn xor(a: Pattern, b: Pattern) -> Result<Pattern> {
    a.xor(b)
}

pub(crate) fn check_pattern_len(k: u32) -> Result<()> {
    if k == 0 || k > MAX_PATTERN_LEN {
        return Err(Error::Argument(format!(
            "pattern length {k} outside 1..={MAX_PATTERN_LEN}"
        )));
    }
    Ok(())
}
