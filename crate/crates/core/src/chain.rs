//! CHAIN delta compression of sorted integer streams in 64-byte lines, and a
//! base-plus-delta-immediate (B∆I) line compressor used as a baseline.
//!
//! Serialized CHAIN line, little-endian:
//!
//! ```text
//! u16 header   bits 0..=4  delta width - 1  (widths 1..=32)
//!              bits 5..=14 number of deltas
//!              bit  15     reserved, zero
//! first        entry-width bytes (4 or 8)
//! deltas       count * width bits, packed LSB first, padded to a byte
//! ```
//!
//! A stream is `u8 entry width, u32 line count, u64 total values` followed by
//! the lines back to back.

use thiserror::Error;

use crate::exma::{ExmaTable, KmerId, OccRanker};

pub const LINE_BYTES: usize = 64;
const HEADER_BYTES: usize = 2;
const MAX_DELTA_WIDTH: u8 = 32;
const MAX_DELTAS: usize = (1 << 10) - 1;
const STREAM_HEADER_BYTES: usize = 1 + 4 + 8;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChainError {
    #[error("input not sorted at index {index}")]
    NotSorted { index: usize },
    #[error("value {value} does not fit in a {width}-byte entry")]
    ValueTooWide { value: u64, width: usize },
    #[error("corrupt line: {0}")]
    CorruptLine(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainLine {
    pub first: u64,
    pub delta_width: u8,
    pub deltas: Vec<u32>,
}

fn bits_needed(d: u64) -> u8 {
    (64 - d.leading_zeros()).max(1) as u8
}

fn line_bytes(entry_width: usize, deltas: usize, width: u8) -> usize {
    HEADER_BYTES + entry_width + (deltas * width as usize).div_ceil(8)
}

impl ChainLine {
    /// Number of values the line encodes.
    pub fn count(&self) -> usize {
        self.deltas.len() + 1
    }

    pub fn serialized_len(&self, entry_width: usize) -> usize {
        line_bytes(entry_width, self.deltas.len(), self.delta_width)
    }

    pub fn validate(&self, entry_width: usize) -> Result<(), ChainError> {
        if self.delta_width == 0 || self.delta_width > MAX_DELTA_WIDTH {
            return Err(ChainError::CorruptLine(format!(
                "delta width {}",
                self.delta_width
            )));
        }
        if self.deltas.len() > MAX_DELTAS || self.serialized_len(entry_width) > LINE_BYTES {
            return Err(ChainError::CorruptLine(format!(
                "{} deltas exceed the line budget",
                self.deltas.len()
            )));
        }
        if self.delta_width < 32 && self.deltas.iter().any(|&d| d >> self.delta_width != 0) {
            return Err(ChainError::CorruptLine("delta wider than header".into()));
        }
        Ok(())
    }

    pub fn values(&self) -> impl Iterator<Item = u64> + '_ {
        std::iter::once(self.first).chain(self.deltas.iter().scan(self.first, |acc, &d| {
            *acc += d as u64;
            Some(*acc)
        }))
    }

    pub fn write(&self, entry_width: usize, out: &mut Vec<u8>) {
        let header = (self.delta_width as u16 - 1) | ((self.deltas.len() as u16) << 5);
        out.extend_from_slice(&header.to_le_bytes());
        out.extend_from_slice(&self.first.to_le_bytes()[..entry_width]);
        let mut acc: u64 = 0;
        let mut filled = 0u32;
        for &d in &self.deltas {
            acc |= (d as u64) << filled;
            filled += self.delta_width as u32;
            while filled >= 8 {
                out.push(acc as u8);
                acc >>= 8;
                filled -= 8;
            }
        }
        if filled > 0 {
            out.push(acc as u8);
        }
    }

    /// Parses one line, returning it and the bytes consumed.
    pub fn read(bytes: &[u8], entry_width: usize) -> Result<(Self, usize), ChainError> {
        let short = || ChainError::CorruptLine("truncated line".into());
        let header = u16::from_le_bytes(bytes.get(..2).ok_or_else(short)?.try_into().unwrap());
        if header & 0x8000 != 0 {
            return Err(ChainError::CorruptLine("reserved header bit set".into()));
        }
        let delta_width = (header & 0x1f) as u8 + 1;
        let count = (header >> 5) as usize;
        let len = line_bytes(entry_width, count, delta_width);
        if len > LINE_BYTES {
            return Err(ChainError::CorruptLine(format!("line of {len} bytes")));
        }
        let body = bytes.get(..len).ok_or_else(short)?;
        let mut first_bytes = [0u8; 8];
        first_bytes[..entry_width].copy_from_slice(&body[2..2 + entry_width]);
        let first = u64::from_le_bytes(first_bytes);
        let packed = &body[2 + entry_width..];
        let mask = if delta_width == 32 {
            u32::MAX as u64
        } else {
            (1u64 << delta_width) - 1
        };
        let mut deltas = Vec::with_capacity(count);
        let mut acc: u64 = 0;
        let mut filled = 0u32;
        let mut next = packed.iter();
        for _ in 0..count {
            while filled < delta_width as u32 {
                acc |= (*next.next().ok_or_else(short)? as u64) << filled;
                filled += 8;
            }
            deltas.push((acc & mask) as u32);
            acc >>= delta_width;
            filled -= delta_width as u32;
        }
        Ok((
            ChainLine {
                first,
                delta_width,
                deltas,
            },
            len,
        ))
    }
}

/// Greedy packing of a non-decreasing sequence into lines. Each line holds
/// its first value at full width and as many deltas as fit in 64 bytes at the
/// smallest width covering them.
pub fn chain_compress(values: &[u64]) -> Result<Vec<ChainLine>, ChainError> {
    chain_compress_with_width(values, 4)
}

pub fn chain_compress_with_width(
    values: &[u64],
    entry_width: usize,
) -> Result<Vec<ChainLine>, ChainError> {
    let mut lines = Vec::new();
    compress_into(values, entry_width, 0, &mut lines)?;
    Ok(lines)
}

fn compress_into(
    values: &[u64],
    entry_width: usize,
    index_base: usize,
    lines: &mut Vec<ChainLine>,
) -> Result<(), ChainError> {
    let limit = if entry_width >= 8 {
        u64::MAX
    } else {
        (1u64 << (8 * entry_width)) - 1
    };
    if let Some(&value) = values.iter().find(|&&v| v > limit) {
        return Err(ChainError::ValueTooWide {
            value,
            width: entry_width,
        });
    }
    if let Some(i) = values.windows(2).position(|w| w[1] < w[0]) {
        return Err(ChainError::NotSorted {
            index: index_base + i + 1,
        });
    }
    let mut i = 0;
    while i < values.len() {
        let mut line = ChainLine {
            first: values[i],
            delta_width: 1,
            deltas: Vec::new(),
        };
        let mut j = i + 1;
        while j < values.len() && line.deltas.len() < MAX_DELTAS {
            let d = values[j] - values[j - 1];
            if d > u32::MAX as u64 {
                break;
            }
            let width = line.delta_width.max(bits_needed(d));
            if line_bytes(entry_width, line.deltas.len() + 1, width) > LINE_BYTES {
                break;
            }
            line.delta_width = width;
            line.deltas.push(d as u32);
            j += 1;
        }
        lines.push(line);
        i = j;
    }
    Ok(())
}

pub fn chain_decompress(lines: &[ChainLine]) -> Result<Vec<u64>, ChainError> {
    let mut out = Vec::with_capacity(lines.iter().map(ChainLine::count).sum());
    for line in lines {
        line.validate(4)?;
        out.extend(line.values());
    }
    Ok(out)
}

/// Values below `pos` in the line, and whether a value `>= pos` was met.
pub fn chain_rank_in_line(line: &ChainLine, pos: u64) -> (usize, bool) {
    let mut count = 0;
    for v in line.values() {
        if v >= pos {
            return (count, true);
        }
        count += 1;
    }
    (count, false)
}

/// Lines plus the entry width they were packed with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainStream {
    pub entry_width: usize,
    pub lines: Vec<ChainLine>,
}

impl ChainStream {
    /// Compresses consecutive segments without letting a line straddle two
    /// of them. Each segment must be non-decreasing on its own.
    pub fn from_segments<'a, I>(segments: I, entry_width: usize) -> Result<Self, ChainError>
    where
        I: IntoIterator<Item = &'a [u64]>,
    {
        let mut lines = Vec::new();
        let mut seen = 0;
        for seg in segments {
            compress_into(seg, entry_width, seen, &mut lines)?;
            seen += seg.len();
        }
        Ok(Self { entry_width, lines })
    }

    pub fn total_values(&self) -> usize {
        self.lines.iter().map(ChainLine::count).sum()
    }

    pub fn decompress(&self) -> Result<Vec<u64>, ChainError> {
        for line in &self.lines {
            line.validate(self.entry_width)?;
        }
        chain_decompress(&self.lines)
    }

    /// Serialized size of the lines alone.
    pub fn payload_len(&self) -> usize {
        self.lines
            .iter()
            .map(|l| l.serialized_len(self.entry_width))
            .sum()
    }

    pub fn byte_len(&self) -> usize {
        STREAM_HEADER_BYTES + self.payload_len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.byte_len());
        out.push(self.entry_width as u8);
        out.extend_from_slice(&(self.lines.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.total_values() as u64).to_le_bytes());
        for line in &self.lines {
            line.write(self.entry_width, &mut out);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ChainError> {
        if bytes.len() < STREAM_HEADER_BYTES {
            return Err(ChainError::CorruptLine("truncated stream header".into()));
        }
        let entry_width = bytes[0] as usize;
        if entry_width != 4 && entry_width != 8 {
            return Err(ChainError::CorruptLine(format!(
                "entry width {entry_width}"
            )));
        }
        let line_count = u32::from_le_bytes(bytes[1..5].try_into().unwrap()) as usize;
        let total = u64::from_le_bytes(bytes[5..13].try_into().unwrap()) as usize;
        let mut at = STREAM_HEADER_BYTES;
        let mut lines = Vec::with_capacity(line_count);
        for _ in 0..line_count {
            let (line, used) = ChainLine::read(&bytes[at..], entry_width)?;
            line.validate(entry_width)?;
            lines.push(line);
            at += used;
        }
        if at != bytes.len() {
            return Err(ChainError::CorruptLine(
                "trailing bytes after stream".into(),
            ));
        }
        let stream = Self { entry_width, lines };
        if stream.total_values() != total {
            return Err(ChainError::CorruptLine("value count mismatch".into()));
        }
        Ok(stream)
    }
}

/// Increments of a table kept in CHAIN form, one run of lines per k-mer.
/// Ranking walks a k-mer's lines with [`chain_rank_in_line`] and never
/// materializes the increments.
#[derive(Debug, Clone)]
pub struct ChainedIncrements {
    stream: ChainStream,
    /// `first_line[d]..first_line[d + 1]` are the lines of dense k-mer `d`.
    first_line: Vec<usize>,
}

impl ChainedIncrements {
    pub fn from_table(t: &ExmaTable, entry_width: usize) -> Result<Self, ChainError> {
        let values: Vec<u64> = t.all_increments().iter().map(|&v| v as u64).collect();
        let segments = t
            .offsets()
            .iter()
            .zip(t.frequencies())
            .map(|(&o, &f)| &values[o..o + f]);
        let stream = ChainStream::from_segments(segments, entry_width)?;
        Self::from_stream(stream, t.frequencies())
    }

    /// Attaches per-k-mer line ranges to a stream produced by
    /// [`ChainedIncrements::from_table`].
    pub fn from_stream(stream: ChainStream, freq: &[usize]) -> Result<Self, ChainError> {
        let mut first_line = Vec::with_capacity(freq.len() + 1);
        let mut line = 0;
        for &f in freq {
            first_line.push(line);
            let mut left = f;
            while left > 0 {
                let c = stream
                    .lines
                    .get(line)
                    .ok_or_else(|| ChainError::CorruptLine("stream shorter than table".into()))?
                    .count();
                if c > left {
                    return Err(ChainError::CorruptLine("line straddles k-mers".into()));
                }
                left -= c;
                line += 1;
            }
        }
        first_line.push(line);
        if line != stream.lines.len() {
            return Err(ChainError::CorruptLine("stream longer than table".into()));
        }
        Ok(Self { stream, first_line })
    }

    pub fn stream(&self) -> &ChainStream {
        &self.stream
    }

    pub fn lines_of(&self, kmer: KmerId) -> &[ChainLine] {
        let d = kmer.index();
        match (self.first_line.get(d), self.first_line.get(d + 1)) {
            (Some(&a), Some(&b)) => &self.stream.lines[a..b],
            _ => &[],
        }
    }
}

impl OccRanker for ChainedIncrements {
    fn rank(&self, _table: &ExmaTable, kmer: KmerId, pos: usize) -> usize {
        let mut total = 0;
        for line in self.lines_of(kmer) {
            let (c, found) = chain_rank_in_line(line, pos as u64);
            total += c;
            if found {
                break;
            }
        }
        total
    }
}

/// B∆I encoding of one 64-byte line seen as eight little-endian u64 sections.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BdiLine {
    /// `delta_bytes == 0` means every section equals the base.
    Compressed {
        base: u64,
        delta_bytes: u8,
        signed: bool,
        deltas: [i128; 8],
    },
    Raw([u8; LINE_BYTES]),
}

impl BdiLine {
    pub fn size_bytes(&self) -> usize {
        match self {
            BdiLine::Compressed { delta_bytes, .. } => 8 + 8 * *delta_bytes as usize,
            BdiLine::Raw(_) => LINE_BYTES,
        }
    }

    pub fn decompress(&self) -> [u8; LINE_BYTES] {
        match self {
            BdiLine::Raw(raw) => *raw,
            BdiLine::Compressed { base, deltas, .. } => {
                let mut out = [0u8; LINE_BYTES];
                for (i, d) in deltas.iter().enumerate() {
                    let v = (*base as i128 + d) as u64;
                    out[i * 8..i * 8 + 8].copy_from_slice(&v.to_le_bytes());
                }
                out
            }
        }
    }
}

pub fn bdi_compress_line(line: &[u8; LINE_BYTES]) -> BdiLine {
    let sections: Vec<u64> = line
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let base = sections[0];
    let mut deltas = [0i128; 8];
    for (d, &s) in deltas.iter_mut().zip(&sections) {
        *d = s as i128 - base as i128;
    }
    let signed = deltas.iter().any(|&d| d < 0);
    for delta_bytes in [0u8, 1, 2, 4] {
        let bits = 8 * delta_bytes as u32;
        let fits = |d: i128| match (delta_bytes, signed) {
            (0, _) => d == 0,
            (_, false) => d < (1i128 << bits),
            (_, true) => d >= -(1i128 << (bits - 1)) && d < (1i128 << (bits - 1)),
        };
        if deltas.iter().all(|&d| fits(d)) {
            return BdiLine::Compressed {
                base,
                delta_bytes,
                signed,
                deltas,
            };
        }
    }
    BdiLine::Raw(*line)
}

/// B∆I size of a byte stream. Memory is allocated in whole lines, so a
/// trailing partial line is zero-padded and compressed like the others.
pub fn bdi_stream_size(bytes: &[u8]) -> usize {
    bytes
        .chunks(LINE_BYTES)
        .map(|c| {
            let mut line = [0u8; LINE_BYTES];
            line[..c.len()].copy_from_slice(c);
            bdi_compress_line(&line).size_bytes()
        })
        .sum()
}

fn le_stream(values: &[u64], entry_width: usize) -> Vec<u8> {
    values
        .iter()
        .flat_map(|v| v.to_le_bytes().into_iter().take(entry_width))
        .collect()
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct StreamReport {
    pub name: &'static str,
    pub original_bytes: u64,
    pub chain_bytes: u64,
    pub bdi_bytes: u64,
}

impl StreamReport {
    pub fn chain_ratio(&self) -> f64 {
        self.chain_bytes as f64 / self.original_bytes.max(1) as f64
    }

    pub fn bdi_ratio(&self) -> f64 {
        self.bdi_bytes as f64 / self.original_bytes.max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressionReport {
    pub streams: Vec<StreamReport>,
    pub original_bytes: u64,
    pub chain_bytes: u64,
    pub bdi_bytes: u64,
}

impl CompressionReport {
    pub fn chain_ratio(&self) -> f64 {
        self.chain_bytes as f64 / self.original_bytes.max(1) as f64
    }

    pub fn bdi_ratio(&self) -> f64 {
        self.bdi_bytes as f64 / self.original_bytes.max(1) as f64
    }

    pub fn stream(&self, name: &str) -> Option<&StreamReport> {
        self.streams.iter().find(|s| s.name == name)
    }
}

/// CHAIN vs B∆I on the increments and bases of a table. Bases are encoded
/// as slice offsets, which are non-decreasing; absent k-mers are recovered
/// from zero frequencies. Neither codec is charged for stream framing.
pub fn compression_report(t: &ExmaTable) -> CompressionReport {
    let width = crate::exma::entry_width_for(t.len() as u64);
    let increments: Vec<u64> = t.all_increments().iter().map(|&v| v as u64).collect();
    let offsets: Vec<u64> = t.offsets().iter().map(|&v| v as u64).collect();

    let incr_chain = ChainStream::from_segments(
        t.offsets()
            .iter()
            .zip(t.frequencies())
            .map(|(&o, &f)| &increments[o..o + f]),
        width,
    )
    .expect("per-k-mer increments are sorted");
    let base_chain =
        ChainStream::from_segments([offsets.as_slice()], width).expect("offsets are sorted");

    let streams = vec![
        StreamReport {
            name: "increments",
            original_bytes: (increments.len() * width) as u64,
            chain_bytes: incr_chain.payload_len() as u64,
            bdi_bytes: bdi_stream_size(&le_stream(&increments, width)) as u64,
        },
        StreamReport {
            name: "bases",
            original_bytes: (offsets.len() * width) as u64,
            chain_bytes: base_chain.payload_len() as u64,
            bdi_bytes: bdi_stream_size(&le_stream(&offsets, width)) as u64,
        },
    ];
    CompressionReport {
        original_bytes: streams.iter().map(|s| s.original_bytes).sum(),
        chain_bytes: streams.iter().map(|s| s.chain_bytes).sum(),
        bdi_bytes: streams.iter().map(|s| s.bdi_bytes).sum(),
        streams,
    }
}
