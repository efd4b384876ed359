//! Packed bit strings and sets of channel positions.
//!
//! Bits are packed most-significant-bit first: logical bit `i` lives in byte
//! `i / 8` at bit position `7 - i % 8`. Unused trailing bits of the last byte
//! are always zero, so derived equality and hashing are on logical content.

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::de::{self, Deserializer};
use serde::ser::{SerializeStruct, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct BitString {
    len: usize,
    bytes: Vec<u8>,
}

fn byte_len(bits: usize) -> usize {
    bits.div_ceil(8)
}

impl BitString {
    pub fn zeros(len: usize) -> Self {
        BitString {
            len,
            bytes: vec![0; byte_len(len)],
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut s = BitString {
            len,
            bytes: vec![0xff; byte_len(len)],
        };
        s.clear_tail();
        s
    }

    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut s = BitString::default();
        for b in bits {
            s.push(b);
        }
        s
    }

    /// Takes the low `len` bits of `value`, most significant first.
    pub fn from_u64(value: u64, len: usize) -> Self {
        assert!(len <= 64);
        BitString::from_bits((0..len).rev().map(|i| (value >> i) & 1 == 1))
    }

    /// Builds a string from packed bytes; bits past `len` are ignored.
    pub fn from_bytes(bytes: &[u8], len: usize) -> Result<Self> {
        if bytes.len() < byte_len(len) {
            return Err(Error::LengthMismatch {
                left: bytes.len() * 8,
                right: len,
            });
        }
        let mut s = BitString {
            len,
            bytes: bytes[..byte_len(len)].to_vec(),
        };
        s.clear_tail();
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    /// Bit at 0-based offset `i`.
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range for length {}", self.len);
        (self.bytes[i / 8] >> (7 - i % 8)) & 1 == 1
    }

    pub fn set(&mut self, i: usize, bit: bool) {
        assert!(i < self.len, "bit {i} out of range for length {}", self.len);
        let mask = 1u8 << (7 - i % 8);
        if bit {
            self.bytes[i / 8] |= mask;
        } else {
            self.bytes[i / 8] &= !mask;
        }
    }

    pub fn push(&mut self, bit: bool) {
        if self.len.is_multiple_of(8) {
            self.bytes.push(0);
        }
        self.len += 1;
        self.set(self.len - 1, bit);
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn count_ones(&self) -> usize {
        self.bytes.iter().map(|b| b.count_ones() as usize).sum()
    }

    /// Elementwise addition modulo two.
    pub fn xor(&self, other: &BitString) -> Result<BitString> {
        if self.len != other.len {
            return Err(Error::LengthMismatch {
                left: self.len,
                right: other.len,
            });
        }
        let bytes = self.bytes.iter().zip(&other.bytes).map(|(a, b)| a ^ b).collect();
        Ok(BitString { len: self.len, bytes })
    }

    /// Bits at the (1-based) positions of `set`, in increasing position order.
    pub fn subselect(&self, set: &IndexSet) -> Result<BitString> {
        let mut out = BitString::zeros(set.len());
        for (k, &pos) in set.iter().enumerate() {
            if pos == 0 || pos > self.len {
                return Err(Error::IndexOutOfRange {
                    index: pos,
                    len: self.len,
                });
            }
            out.set(k, self.get(pos - 1));
        }
        Ok(out)
    }

    pub fn concat(parts: &[BitString]) -> BitString {
        BitString::from_bits(parts.iter().flat_map(|p| p.iter()))
    }

    /// Splits into `count` consecutive parts of equal length.
    pub fn split(&self, count: usize) -> Result<Vec<BitString>> {
        if count == 0 || !self.len.is_multiple_of(count) {
            return Err(Error::config(format!(
                "cannot split {} bits into {count} equal parts",
                self.len
            )));
        }
        let part = self.len / count;
        Ok((0..count)
            .map(|k| BitString::from_bits((k * part..(k + 1) * part).map(|i| self.get(i))))
            .collect())
    }

    /// Lowercase hex of the packed bytes (most significant bit first).
    pub fn to_hex(&self) -> String {
        self.bytes.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_hex(hex: &str, len: usize) -> Result<Self> {
        if hex.len() != 2 * byte_len(len) {
            return Err(Error::InvalidHex(format!(
                "{} hex digits cannot hold exactly {len} bits",
                hex.len()
            )));
        }
        let bytes = (0..hex.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(&hex[i..i + 2], 16))
            .collect::<std::result::Result<Vec<u8>, _>>()
            .map_err(|e| Error::InvalidHex(e.to_string()))?;
        let s = BitString::from_bytes(&bytes, len)?;
        if s.bytes != bytes {
            return Err(Error::InvalidHex("non-zero padding bits".into()));
        }
        Ok(s)
    }

    fn clear_tail(&mut self) {
        let rem = self.len % 8;
        if rem != 0 {
            if let Some(last) = self.bytes.last_mut() {
                *last &= 0xffu8 << (8 - rem);
            }
        }
    }
}

/// Draws `len` independent uniform bits from `rng`.
pub fn sample_uniform<R: RngCore + ?Sized>(len: usize, rng: &mut R) -> BitString {
    let mut bytes = vec![0u8; byte_len(len)];
    rng.fill_bytes(&mut bytes);
    let mut s = BitString { len, bytes };
    s.clear_tail();
    s
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.len <= 64 {
            write!(f, "BitString({self})")
        } else {
            write!(f, "BitString(len={}, hex={})", self.len, self.to_hex())
        }
    }
}

/// Parses a literal such as `"1011"`.
impl FromStr for BitString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::config(format!("not a bit: {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(BitString::from_bits)
    }
}

impl Serialize for BitString {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = serializer.serialize_struct("BitString", 2)?;
        st.serialize_field("len", &self.len)?;
        st.serialize_field("hex", &self.to_hex())?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for BitString {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            len: usize,
            hex: String,
        }
        let raw = Raw::deserialize(deserializer)?;
        BitString::from_hex(&raw.hex, raw.len).map_err(de::Error::custom)
    }
}

/// A strictly increasing set of 1-based channel positions.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct IndexSet(Vec<usize>);

impl IndexSet {
    pub fn new(positions: impl IntoIterator<Item = usize>) -> Self {
        let mut v: Vec<usize> = positions.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        IndexSet(v)
    }

    /// Positions `1..=n`.
    pub fn full(n: usize) -> Self {
        IndexSet((1..=n).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, usize> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn contains(&self, pos: usize) -> bool {
        self.0.binary_search(&pos).is_ok()
    }

    pub fn is_disjoint(&self, other: &IndexSet) -> bool {
        self.iter().all(|p| !other.contains(*p))
    }

    pub fn is_subset(&self, other: &IndexSet) -> bool {
        self.iter().all(|p| other.contains(*p))
    }

    pub fn union(&self, other: &IndexSet) -> IndexSet {
        IndexSet::new(self.iter().chain(other.iter()).copied())
    }
}

impl<'de> Deserialize<'de> for IndexSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<usize>::deserialize(deserializer)?;
        if v.contains(&0) || v.windows(2).any(|w| w[0] >= w[1]) {
            return Err(de::Error::custom("index set must be strictly increasing and 1-based"));
        }
        Ok(IndexSet(v))
    }
}

impl FromIterator<usize> for IndexSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        IndexSet::new(iter)
    }
}

impl<'a> IntoIterator for &'a IndexSet {
    type Item = &'a usize;
    type IntoIter = std::slice::Iter<'a, usize>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}
