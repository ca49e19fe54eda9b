//! Packed bit strings.
//!
//! Bits are stored little-endian inside `u64` words (bit `i` lives in word
//! `i / 64` at position `i % 64`). Unused high bits of the last word are kept
//! zero so that equality and hashing can work on the raw words.
//!
//! The external text form is hexadecimal with index 0 as the most
//! significant bit of the first byte, zero padded on the right.

use crate::error::{Error, Result};
use crate::sets::IndexSet;
use serde::{Deserialize, Serialize};

#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BitString {
    len: usize,
    words: Vec<u64>,
}

fn words_for(len: usize) -> usize {
    len.div_ceil(64)
}

impl BitString {
    pub fn zeros(len: usize) -> Self {
        Self { len, words: vec![0; words_for(len)] }
    }

    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut out = Self::zeros(0);
        for b in bits {
            out.push(b);
        }
        out
    }

    /// Low `len` bits of `value`, bit `i` of the integer becoming index `i`.
    pub fn from_u64(value: u64, len: usize) -> Self {
        assert!(len <= 64, "from_u64 supports at most 64 bits");
        let mut s = Self::zeros(len);
        if len > 0 {
            s.words[0] = if len == 64 { value } else { value & ((1u64 << len) - 1) };
        }
        s
    }

    /// Inverse of [`BitString::from_u64`]; `None` when longer than 64 bits.
    pub fn to_u64(&self) -> Option<u64> {
        match self.len {
            0 => Some(0),
            1..=64 => Some(self.words[0]),
            _ => None,
        }
    }

    pub fn random<R: rand::Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        let mut s = Self::zeros(len);
        for w in s.words.iter_mut() {
            *w = rng.random();
        }
        s.clear_tail();
        s
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn set(&mut self, i: usize, bit: bool) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        let mask = 1u64 << (i % 64);
        if bit {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn push(&mut self, bit: bool) {
        if self.len.is_multiple_of(64) {
            self.words.push(0);
        }
        self.len += 1;
        self.set(self.len - 1, bit);
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn xor(&self, other: &BitString) -> Result<BitString> {
        if self.len != other.len {
            return Err(Error::Size(format!("xor of {} and {} bits", self.len, other.len)));
        }
        let words = self.words.iter().zip(&other.words).map(|(a, b)| a ^ b).collect();
        Ok(BitString { len: self.len, words })
    }

    /// The restriction `self|_S`: bits at the indices of `set`, ascending.
    pub fn select(&self, set: &IndexSet) -> Result<BitString> {
        if let Some(&last) = set.as_slice().last() {
            if last >= self.len {
                return Err(Error::Size(format!("index {last} outside {} bits", self.len)));
            }
        }
        Ok(BitString::from_bits(set.iter().map(|i| self.get(i))))
    }

    /// `len` bits starting at `start`, packed from word 0.
    pub(crate) fn window_words(&self, start: usize, len: usize) -> Vec<u64> {
        debug_assert!(start + len <= self.len);
        let mut out = vec![0u64; words_for(len)];
        let shift = start % 64;
        let base = start / 64;
        for (k, w) in out.iter_mut().enumerate() {
            let lo = self.words.get(base + k).copied().unwrap_or(0) >> shift;
            let hi = if shift == 0 {
                0
            } else {
                self.words.get(base + k + 1).copied().unwrap_or(0) << (64 - shift)
            };
            *w = lo | hi;
        }
        let rem = len % 64;
        if rem != 0 {
            *out.last_mut().unwrap() &= (1u64 << rem) - 1;
        }
        out
    }

    pub fn reversed(&self) -> BitString {
        BitString::from_bits((0..self.len).rev().map(|i| self.get(i)))
    }

    pub fn to_hex(&self) -> String {
        let mut bytes = vec![0u8; self.len.div_ceil(8)];
        for i in 0..self.len {
            if self.get(i) {
                bytes[i / 8] |= 0x80 >> (i % 8);
            }
        }
        hex::encode(bytes)
    }

    pub fn from_hex(len: usize, text: &str) -> Result<BitString> {
        let bytes = hex::decode(text).map_err(|e| Error::Size(format!("bad hex: {e}")))?;
        if bytes.len() != len.div_ceil(8) {
            return Err(Error::Size(format!("{} hex bytes for {len} bits", bytes.len())));
        }
        let mut out = BitString::zeros(len);
        for i in 0..len {
            out.set(i, bytes[i / 8] & (0x80 >> (i % 8)) != 0);
        }
        // padding bits must be zero so the encoding is canonical
        if out.to_hex() != text.to_ascii_lowercase() {
            return Err(Error::Size("nonzero padding bits".into()));
        }
        Ok(out)
    }

    fn clear_tail(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }
}

impl std::fmt::Debug for BitString {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BitString(")?;
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        write!(f, ")")
    }
}

#[derive(Serialize, Deserialize)]
struct HexRepr {
    len: usize,
    hex: String,
}

impl Serialize for BitString {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        HexRepr { len: self.len, hex: self.to_hex() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for BitString {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = HexRepr::deserialize(d)?;
        BitString::from_hex(repr.len, &repr.hex).map_err(serde::de::Error::custom)
    }
}
