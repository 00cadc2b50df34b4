//! Packed bit buffer used by the extractor and the statistical tests.
//!
//! Bit `i` lives at word `i / 64`, position `i % 64` (LSB-first). The byte
//! serialization is the little-endian byte view of the words, truncated to
//! `ceil(len / 8)` bytes, which makes byte `j` hold bits `8j..8j+8` LSB-first.

use std::io::{Read, Write};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitBuffer {
    words: Vec<u64>,
    len: usize,
}

impl BitBuffer {
    pub fn new() -> Self {
        Self { words: Vec::new(), len: 0 }
    }

    pub fn with_capacity(bits: usize) -> Self {
        Self { words: Vec::with_capacity(bits.div_ceil(64)), len: 0 }
    }

    /// All-zero buffer of the given length.
    pub fn zeros(bits: usize) -> Self {
        Self { words: vec![0; bits.div_ceil(64)], len: bits }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut buf = Self::with_capacity(bits.len());
        for &b in bits {
            buf.push(b);
        }
        buf
    }

    /// Parse an ASCII string of '0'/'1' characters (whitespace ignored).
    pub fn from_ascii(s: &str) -> Result<Self> {
        let mut buf = Self::with_capacity(s.len());
        for c in s.chars() {
            match c {
                '0' => buf.push(false),
                '1' => buf.push(true),
                c if c.is_whitespace() => {}
                c => return Err(Error::Format(format!("unexpected character {c:?} in bit string"))),
            }
        }
        Ok(buf)
    }

    /// Reinterpret packed little-endian bytes as `len` bits.
    pub fn from_bytes(bytes: &[u8], len: usize) -> Result<Self> {
        if bytes.len() < len.div_ceil(8) {
            return Err(Error::Format(format!(
                "need {} bytes for {} bits, got {}",
                len.div_ceil(8),
                len,
                bytes.len()
            )));
        }
        let mut words = vec![0u64; len.div_ceil(64)];
        for (i, chunk) in bytes[..len.div_ceil(8)].chunks(8).enumerate() {
            let mut w = [0u8; 8];
            w[..chunk.len()].copy_from_slice(chunk);
            words[i] = u64::from_le_bytes(w);
        }
        let mut buf = Self { words, len };
        buf.mask_tail();
        Ok(buf)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    #[inline]
    pub fn push(&mut self, bit: bool) {
        if self.len % 64 == 0 {
            self.words.push(0);
        }
        if bit {
            *self.words.last_mut().unwrap() |= 1 << (self.len % 64);
        }
        self.len += 1;
    }

    /// Append the low `nbits` of `value`, LSB first.
    pub fn push_bits(&mut self, value: u64, nbits: u32) {
        debug_assert!(nbits <= 64);
        let masked = if nbits == 64 { value } else { value & ((1u64 << nbits) - 1) };
        let pos = self.len % 64;
        if pos == 0 {
            self.words.push(masked);
        } else {
            *self.words.last_mut().unwrap() |= masked << pos;
            if pos + nbits as usize > 64 {
                self.words.push(masked >> (64 - pos));
            }
        }
        self.len += nbits as usize;
    }

    /// Append whole bytes, LSB-first each.
    pub fn push_bytes(&mut self, bytes: &[u8]) {
        let mut chunks = bytes.chunks_exact(8);
        for chunk in &mut chunks {
            self.push_bits(u64::from_le_bytes(chunk.try_into().unwrap()), 64);
        }
        for &b in chunks.remainder() {
            self.push_bits(b as u64, 8);
        }
    }

    /// Append all bits of another buffer.
    pub fn extend(&mut self, other: &Self) {
        let mut remaining = other.len;
        for &w in &other.words {
            let take = remaining.min(64) as u32;
            self.push_bits(w, take);
            remaining -= take as usize;
            if remaining == 0 {
                break;
            }
        }
    }

    /// Backing words; bits past `len` are zero.
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn count_ones(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.len.div_ceil(8));
        for &w in &self.words {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out.truncate(self.len.div_ceil(8));
        out
    }

    /// Copy of the bit range [start, start + len), word-shift based.
    pub fn slice_bits(&self, start: usize, len: usize) -> Self {
        assert!(start + len <= self.len, "slice out of range");
        let word_shift = start / 64;
        let bit_shift = start % 64;
        let out_words = len.div_ceil(64);
        let mut words = Vec::with_capacity(out_words);
        for w in 0..out_words {
            let lo = self.words.get(w + word_shift).copied().unwrap_or(0);
            let hi = self.words.get(w + word_shift + 1).copied().unwrap_or(0);
            words.push(if bit_shift == 0 {
                lo
            } else {
                (lo >> bit_shift) | (hi << (64 - bit_shift))
            });
        }
        let mut out = Self { words, len };
        out.mask_tail();
        out
    }

    /// Remove the first `n` bits.
    pub fn drain_front(&mut self, n: usize) {
        assert!(n <= self.len);
        *self = self.slice_bits(n, self.len - n);
    }

    /// Truncate to the first `len` bits.
    pub fn truncate(&mut self, len: usize) {
        if len < self.len {
            self.len = len;
            self.words.truncate(len.div_ceil(64));
            self.mask_tail();
        }
    }

    pub fn xor_assign(&mut self, other: &Self) {
        assert_eq!(self.len, other.len, "xor of unequal-length bit buffers");
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    /// Write as ASCII '0'/'1' characters, the input format of the reference
    /// SP800-22 tool.
    pub fn write_ascii<W: Write>(&self, mut w: W) -> Result<u64> {
        let mut written = 0u64;
        let mut line = Vec::with_capacity(65);
        for chunk_start in (0..self.len).step_by(64) {
            line.clear();
            for i in chunk_start..(chunk_start + 64).min(self.len) {
                line.push(if self.get(i) { b'1' } else { b'0' });
            }
            line.push(b'\n');
            w.write_all(&line)?;
            written += line.len() as u64;
        }
        Ok(written)
    }

    pub fn read_ascii<R: Read>(mut r: R) -> Result<Self> {
        let mut s = String::new();
        r.read_to_string(&mut s)?;
        Self::from_ascii(&s)
    }

    fn mask_tail(&mut self) {
        let tail = self.len % 64;
        if tail != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << tail) - 1;
            }
        }
    }
}

impl Default for BitBuffer {
    fn default() -> Self {
        Self::new()
    }
}
