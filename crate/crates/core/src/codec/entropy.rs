//! Zigzag run-level symbols and canonical Huffman coding.
//!
//! A nonzero level becomes the symbol `(run << 6) | category`, where
//! `category` is the bit length of `|level|` (1..=63), followed by a sign bit
//! (1 = negative) and the `category - 1` low bits of `|level|`. The
//! end-of-block symbol is `0`. Every block ends with one.

use std::collections::BinaryHeap;
use std::cmp::Reverse;
use std::io::Cursor;

use bitstream_io::{BigEndian, BitRead, BitReader, BitWrite, BitWriter};

use crate::codec::quant::ZIGZAG;
use crate::error::{Error, Result};

pub const ALPHABET: usize = 64 * 64;
pub const EOB: u16 = 0;
/// Longest code the table may contain.
pub const MAX_CODE_LEN: u8 = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunLevel {
    Pair { run: u8, level: i64 },
    Eob,
}

pub fn zigzag_runlevel(levels: &[i64; 64]) -> Vec<RunLevel> {
    let mut out = Vec::new();
    let mut run = 0u8;
    for &i in &ZIGZAG {
        let l = levels[i];
        if l == 0 {
            run += 1;
        } else {
            out.push(RunLevel::Pair { run, level: l });
            run = 0;
        }
    }
    out.push(RunLevel::Eob);
    out
}

/// Inverse of [`zigzag_runlevel`]; the sequence must end with its only EOB.
pub fn runlevel_to_levels(symbols: &[RunLevel]) -> Result<[i64; 64]> {
    let mut levels = [0i64; 64];
    let mut pos = 0usize;
    for (k, s) in symbols.iter().enumerate() {
        match *s {
            RunLevel::Eob if k + 1 == symbols.len() => return Ok(levels),
            RunLevel::Eob => return Err(Error::MalformedSequence("symbols after end of block".into())),
            RunLevel::Pair { run, level } => {
                pos += run as usize;
                if pos >= 64 || level == 0 {
                    return Err(Error::MalformedSequence("run past end of block".into()));
                }
                levels[ZIGZAG[pos]] = level;
                pos += 1;
            }
        }
    }
    Err(Error::MalformedSequence("missing end of block".into()))
}

#[inline]
fn category(level: i64) -> u32 {
    64 - level.unsigned_abs().leading_zeros()
}

#[inline]
pub fn symbol_of(rl: &RunLevel) -> u16 {
    match *rl {
        RunLevel::Eob => EOB,
        RunLevel::Pair { run, level } => ((run as u16) << 6) | category(level) as u16,
    }
}

/// Canonical prefix code over the run-level alphabet.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HuffmanCode {
    /// `(symbol, length)` sorted by symbol.
    lengths: Vec<(u16, u8)>,
    /// Code and length per symbol; length 0 marks an unused symbol.
    table: Vec<(u32, u8)>,
    /// Symbols in canonical order.
    sorted: Vec<u16>,
    /// Per length: first code, index of its first symbol in `sorted`, count.
    first: [(u32, usize, usize); MAX_CODE_LEN as usize + 1],
}

impl HuffmanCode {
    /// Builds a length-limited code from symbol counts. A single used symbol
    /// gets a one-bit code.
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let mut counts: Vec<u64> = counts.to_vec();
        if counts.iter().all(|&c| c == 0) {
            return Err(Error::MalformedSequence("empty symbol stream".into()));
        }
        loop {
            let lengths = huffman_lengths(&counts);
            if lengths.iter().all(|&(_, l)| l <= MAX_CODE_LEN) {
                return Self::from_lengths(lengths);
            }
            // Flatten the distribution and retry.
            for c in counts.iter_mut().filter(|c| **c > 0) {
                *c = c.div_ceil(2);
            }
        }
    }

    pub fn from_lengths(mut lengths: Vec<(u16, u8)>) -> Result<Self> {
        lengths.sort_unstable();
        if lengths.is_empty() || lengths.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::MalformedSequence("invalid code length table".into()));
        }
        let mut kraft = 0u64;
        for &(s, l) in &lengths {
            if s as usize >= ALPHABET || l == 0 || l > MAX_CODE_LEN {
                return Err(Error::MalformedSequence(format!("bad code length {l} for symbol {s}")));
            }
            kraft += 1u64 << (MAX_CODE_LEN - l);
        }
        if kraft > 1u64 << MAX_CODE_LEN {
            return Err(Error::MalformedSequence("code lengths violate the Kraft inequality".into()));
        }
        let mut canon: Vec<(u8, u16)> = lengths.iter().map(|&(s, l)| (l, s)).collect();
        canon.sort_unstable();
        let mut table = vec![(0u32, 0u8); ALPHABET];
        let mut first = [(0u32, 0usize, 0usize); MAX_CODE_LEN as usize + 1];
        let mut code = 0u32;
        let mut prev_len = canon[0].0;
        for (k, &(l, s)) in canon.iter().enumerate() {
            code <<= l - prev_len;
            prev_len = l;
            let f = &mut first[l as usize];
            if f.2 == 0 {
                *f = (code, k, 0);
            }
            f.2 += 1;
            table[s as usize] = (code, l);
            code += 1;
        }
        Ok(Self {
            sorted: canon.iter().map(|&(_, s)| s).collect(),
            lengths,
            table,
            first,
        })
    }

    pub fn lengths(&self) -> &[(u16, u8)] {
        &self.lengths
    }

    pub fn code(&self, symbol: u16) -> Option<(u32, u8)> {
        self.table.get(symbol as usize).copied().filter(|&(_, l)| l > 0)
    }

    pub fn write_symbol<W: BitWrite>(&self, w: &mut W, symbol: u16) -> Result<()> {
        let (code, len) = self
            .code(symbol)
            .ok_or_else(|| Error::MalformedSequence(format!("symbol {symbol} has no code")))?;
        w.write_var::<u32>(len as u32, code)?;
        Ok(())
    }

    pub fn read_symbol<R: BitRead>(&self, r: &mut R) -> Result<u16> {
        let mut code = 0u32;
        for len in 1..=MAX_CODE_LEN as usize {
            code = (code << 1) | r.read_bit().map_err(truncated)? as u32;
            let (first, index, count) = self.first[len];
            if count > 0 && code >= first && code - first < count as u32 {
                return Ok(self.sorted[index + (code - first) as usize]);
            }
        }
        Err(Error::MalformedSequence("invalid Huffman code".into()))
    }

    /// Table layout: `u16` entry count, then `u16` symbol and `u8` length per
    /// entry, little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(2 + 3 * self.lengths.len());
        out.extend_from_slice(&(self.lengths.len() as u16).to_le_bytes());
        for &(s, l) in &self.lengths {
            out.extend_from_slice(&s.to_le_bytes());
            out.push(l);
        }
        out
    }

    /// Parses a table and returns it with the number of bytes consumed.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, usize)> {
        let short = || Error::MalformedSequence("truncated Huffman table".into());
        let n = u16::from_le_bytes(bytes.get(..2).ok_or_else(short)?.try_into().unwrap()) as usize;
        let body = bytes.get(2..2 + 3 * n).ok_or_else(short)?;
        let lengths = body
            .chunks_exact(3)
            .map(|c| (u16::from_le_bytes([c[0], c[1]]), c[2]))
            .collect();
        Ok((Self::from_lengths(lengths)?, 2 + 3 * n))
    }
}

fn truncated(_: std::io::Error) -> Error {
    Error::MalformedSequence("coded data ends early".into())
}

/// Huffman code lengths of the used symbols. Ties are broken by creation
/// order, so the result is deterministic.
fn huffman_lengths(counts: &[u64]) -> Vec<(u16, u8)> {
    let used: Vec<usize> = (0..counts.len()).filter(|&s| counts[s] > 0).collect();
    if used.len() == 1 {
        return vec![(used[0] as u16, 1)];
    }
    let mut parent: Vec<usize> = vec![usize::MAX; used.len()];
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> =
        used.iter().enumerate().map(|(k, &s)| Reverse((counts[s], k))).collect();
    while heap.len() > 1 {
        let Reverse((wa, a)) = heap.pop().unwrap();
        let Reverse((wb, b)) = heap.pop().unwrap();
        let node = parent.len();
        parent.push(usize::MAX);
        parent[a] = node;
        parent[b] = node;
        heap.push(Reverse((wa + wb, node)));
    }
    used.iter()
        .enumerate()
        .map(|(k, &s)| {
            let mut depth = 0u32;
            let mut n = k;
            while parent[n] != usize::MAX {
                n = parent[n];
                depth += 1;
            }
            (s as u16, depth.min(255) as u8)
        })
        .collect()
}

/// Entropy codes the run-level blocks with a code built from their own
/// histogram. Returns the code and the byte-aligned payload.
pub fn encode_blocks(blocks: &[Vec<RunLevel>]) -> Result<(HuffmanCode, Vec<u8>)> {
    let mut counts = vec![0u64; ALPHABET];
    for rl in blocks.iter().flatten() {
        counts[symbol_of(rl) as usize] += 1;
    }
    let code = HuffmanCode::from_counts(&counts)?;
    let mut w = BitWriter::endian(Vec::new(), BigEndian);
    for rl in blocks.iter().flatten() {
        code.write_symbol(&mut w, symbol_of(rl))?;
        if let RunLevel::Pair { level, .. } = *rl {
            let cat = category(level);
            w.write_bit(level < 0)?;
            if cat > 1 {
                let mag = level.unsigned_abs() & ((1u64 << (cat - 1)) - 1);
                w.write_var::<u64>(cat - 1, mag)?;
            }
        }
    }
    w.byte_align()?;
    Ok((code, w.into_writer()))
}

/// Decodes `n_blocks` blocks of levels (row-major).
pub fn decode_blocks(code: &HuffmanCode, data: &[u8], n_blocks: usize) -> Result<Vec<[i64; 64]>> {
    let mut r = BitReader::endian(Cursor::new(data), BigEndian);
    let mut out = Vec::with_capacity(n_blocks);
    let mut symbols = Vec::with_capacity(65);
    for _ in 0..n_blocks {
        symbols.clear();
        loop {
            if symbols.len() > 64 {
                return Err(Error::MalformedSequence("block without end of block".into()));
            }
            let s = code.read_symbol(&mut r)?;
            if s == EOB {
                symbols.push(RunLevel::Eob);
                break;
            }
            let run = (s >> 6) as u8;
            let cat = (s & 63) as u32;
            if cat == 0 {
                return Err(Error::MalformedSequence("zero category".into()));
            }
            let negative = r.read_bit().map_err(truncated)?;
            let low = if cat > 1 { r.read_var::<u64>(cat - 1).map_err(truncated)? } else { 0 };
            let mag = (1u64 << (cat - 1)) | low;
            let level = if negative { -(mag as i64) } else { mag as i64 };
            symbols.push(RunLevel::Pair { run, level });
        }
        out.push(runlevel_to_levels(&symbols)?);
    }
    Ok(out)
}
