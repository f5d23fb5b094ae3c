//! Versioned on-disk index.
//!
//! ```text
//! magic      "EXMA1\0"
//! version    u16
//! flags      u16   bit 0: increments CHAIN-compressed, bit 1: model present
//! header     k u32, N u64, entry width u8
//! directory  count u16, then (id u16, offset u64, length u64) per section
//! sections   back to back, in directory order
//! ```
//!
//! All integers are little-endian. Table entries use the header's entry
//! width. Section ids: 1 bases, 2 freq, 3 cum_count, 4 aux, 5 increments,
//! 6 suffix array, 7 model blob, 8 records.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::chain::{ChainError, ChainStream, ChainedIncrements};
use crate::exma::{
    entry_width_for, exma_backward_search, AuxEntry, BinarySearch, ExmaError, ExmaTable, KmerId,
};
use crate::fm::{locate, Interval};
use crate::genome::{within_records, Record, SuffixArray};
use crate::mtl::{ModelRanker, MtlError};
use crate::MtlIndex32;

pub const MAGIC: &[u8; 6] = b"EXMA1\0";
pub const FORMAT_VERSION: u16 = 1;
pub const FLAG_COMPRESSED: u16 = 1;
pub const FLAG_MODEL: u16 = 2;

#[derive(Debug, Error)]
pub enum IndexFileError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not an index file")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("malformed index: {0}")]
    Format(String),
    #[error(transparent)]
    Table(#[from] ExmaError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Model(#[from] MtlError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[repr(u16)]
pub enum SectionId {
    Bases = 1,
    Freq = 2,
    CumCount = 3,
    Aux = 4,
    Increments = 5,
    SuffixArray = 6,
    Model = 7,
    Records = 8,
}

impl SectionId {
    const ALL: [SectionId; 8] = [
        SectionId::Bases,
        SectionId::Freq,
        SectionId::CumCount,
        SectionId::Aux,
        SectionId::Increments,
        SectionId::SuffixArray,
        SectionId::Model,
        SectionId::Records,
    ];

    fn from_u16(v: u16) -> Option<Self> {
        Self::ALL.into_iter().find(|s| *s as u16 == v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SectionEntry {
    pub id: SectionId,
    pub offset: u64,
    pub length: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexFile {
    pub table: ExmaTable,
    pub suffix_array: SuffixArray,
    pub records: Vec<Record>,
    pub compressed: bool,
    pub model: Option<MtlIndex32>,
}

struct Writer {
    out: Vec<u8>,
    width: usize,
}

impl Writer {
    fn entry(&mut self, v: usize) {
        self.out
            .extend_from_slice(&(v as u64).to_le_bytes()[..self.width]);
    }
    fn u32(&mut self, v: u32) {
        self.out.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
    width: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IndexFileError> {
        let s = self
            .bytes
            .get(self.at..self.at + n)
            .ok_or_else(|| IndexFileError::Format("truncated section".into()))?;
        self.at += n;
        Ok(s)
    }
    fn uint(&mut self, n: usize) -> Result<u64, IndexFileError> {
        let mut buf = [0u8; 8];
        buf[..n].copy_from_slice(self.take(n)?);
        Ok(u64::from_le_bytes(buf))
    }
    fn entry(&mut self) -> Result<usize, IndexFileError> {
        self.uint(self.width).map(|v| v as usize)
    }
    fn entries(&mut self, n: usize) -> Result<Vec<usize>, IndexFileError> {
        (0..n).map(|_| self.entry()).collect()
    }
    fn done(&self) -> Result<(), IndexFileError> {
        if self.at == self.bytes.len() {
            Ok(())
        } else {
            Err(IndexFileError::Format("trailing bytes in section".into()))
        }
    }
}

impl IndexFile {
    pub fn new(table: ExmaTable, suffix_array: SuffixArray, records: Vec<Record>) -> Self {
        Self {
            table,
            suffix_array,
            records,
            compressed: false,
            model: None,
        }
    }

    pub fn entry_width(&self) -> usize {
        entry_width_for(self.table.len() as u64)
    }

    fn section(&self, id: SectionId) -> Result<Vec<u8>, IndexFileError> {
        let t = &self.table;
        let mut w = Writer {
            out: Vec::new(),
            width: self.entry_width(),
        };
        match id {
            SectionId::Bases => t.bases().into_iter().for_each(|v| w.entry(v)),
            SectionId::Freq => t.frequencies().iter().for_each(|&v| w.entry(v)),
            SectionId::CumCount => t.cum_counts().iter().for_each(|&v| w.entry(v)),
            SectionId::Aux => {
                w.u32(t.aux().len() as u32);
                for e in t.aux() {
                    w.u64(e.code as u64);
                    w.u32(e.increments.len() as u32);
                    e.increments.iter().for_each(|&v| w.entry(v));
                }
            }
            SectionId::Increments if self.compressed => {
                w.out = ChainedIncrements::from_table(t, w.width)?
                    .stream()
                    .to_bytes();
            }
            SectionId::Increments => t.all_increments().iter().for_each(|&v| w.entry(v)),
            SectionId::SuffixArray => self
                .suffix_array
                .as_slice()
                .iter()
                .for_each(|&v| w.entry(v)),
            SectionId::Model => {
                if let Some(m) = &self.model {
                    w.out = m.to_blob();
                }
            }
            SectionId::Records => {
                w.u32(self.records.len() as u32);
                for r in &self.records {
                    w.u32(r.name.len() as u32);
                    w.out.extend_from_slice(r.name.as_bytes());
                    w.u64(r.start as u64);
                    w.u64(r.len as u64);
                }
            }
        }
        Ok(w.out)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, IndexFileError> {
        let sections: Vec<(SectionId, Vec<u8>)> = SectionId::ALL
            .into_iter()
            .filter(|&id| id != SectionId::Model || self.model.is_some())
            .map(|id| self.section(id).map(|b| (id, b)))
            .collect::<Result<_, _>>()?;
        let mut flags = 0;
        if self.compressed {
            flags |= FLAG_COMPRESSED;
        }
        if self.model.is_some() {
            flags |= FLAG_MODEL;
        }
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&flags.to_le_bytes());
        out.extend_from_slice(&(self.table.step() as u32).to_le_bytes());
        out.extend_from_slice(&(self.table.len() as u64).to_le_bytes());
        out.push(self.entry_width() as u8);
        out.extend_from_slice(&(sections.len() as u16).to_le_bytes());
        let mut offset = (out.len() + sections.len() * 18) as u64;
        for (id, body) in &sections {
            out.extend_from_slice(&(*id as u16).to_le_bytes());
            out.extend_from_slice(&offset.to_le_bytes());
            out.extend_from_slice(&(body.len() as u64).to_le_bytes());
            offset += body.len() as u64;
        }
        for (_, body) in sections {
            out.extend_from_slice(&body);
        }
        Ok(out)
    }

    /// Parses the fixed header and section directory.
    pub fn directory(
        bytes: &[u8],
    ) -> Result<(u16, u32, u64, u8, Vec<SectionEntry>), IndexFileError> {
        if bytes.get(..6) != Some(MAGIC.as_slice()) {
            return Err(IndexFileError::BadMagic);
        }
        let mut r = Reader {
            bytes,
            at: 6,
            width: 8,
        };
        let version = r.uint(2)? as u16;
        if version != FORMAT_VERSION {
            return Err(IndexFileError::UnsupportedVersion(version));
        }
        let flags = r.uint(2)? as u16;
        let k = r.uint(4)? as u32;
        let n = r.uint(8)?;
        let width = r.uint(1)? as u8;
        let count = r.uint(2)? as usize;
        let mut entries = Vec::with_capacity(count);
        let mut end = (r.at + count * 18) as u64;
        for _ in 0..count {
            let raw = r.uint(2)? as u16;
            let id = SectionId::from_u16(raw)
                .ok_or_else(|| IndexFileError::Format(format!("unknown section {raw}")))?;
            let offset = r.uint(8)?;
            let length = r.uint(8)?;
            if offset != end || entries.iter().any(|e: &SectionEntry| e.id == id) {
                return Err(IndexFileError::Format("section directory".into()));
            }
            end = offset
                .checked_add(length)
                .ok_or_else(|| IndexFileError::Format("section length".into()))?;
            entries.push(SectionEntry { id, offset, length });
        }
        if end != bytes.len() as u64 {
            return Err(IndexFileError::Format(
                "sections do not cover the file".into(),
            ));
        }
        Ok((flags, k, n, width, entries))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IndexFileError> {
        let (flags, k, n, width, entries) = Self::directory(bytes)?;
        let (k, n, width) = (k as usize, n as usize, width as usize);
        if width != entry_width_for(n as u64) {
            return Err(IndexFileError::Format(format!("entry width {width}")));
        }
        if !(1..=crate::exma::DEFAULT_MAX_STEP).contains(&k) {
            return Err(IndexFileError::Format(format!("step {k}")));
        }
        let section = |id: SectionId| -> Result<Reader<'_>, IndexFileError> {
            let e = entries
                .iter()
                .find(|e| e.id == id)
                .ok_or_else(|| IndexFileError::Format(format!("missing section {id:?}")))?;
            Ok(Reader {
                bytes: &bytes[e.offset as usize..(e.offset + e.length) as usize],
                at: 0,
                width,
            })
        };
        let dense = 1usize << (2 * k);

        let mut r = section(SectionId::Freq)?;
        let freq = r.entries(dense)?;
        r.done()?;

        let mut r = section(SectionId::Aux)?;
        let mut aux = Vec::new();
        for _ in 0..r.uint(4)? {
            let code = r.uint(8)? as usize;
            let len = r.uint(4)? as usize;
            aux.push(AuxEntry {
                code,
                increments: r.entries(len)?,
            });
        }
        r.done()?;

        let compressed = flags & FLAG_COMPRESSED != 0;
        let mut r = section(SectionId::Increments)?;
        let increments = if compressed {
            let stream = ChainStream::from_bytes(r.bytes)?;
            ChainedIncrements::from_stream(stream.clone(), &freq)?;
            stream
                .decompress()?
                .into_iter()
                .map(|v| v as usize)
                .collect()
        } else {
            let total = freq.iter().sum();
            let v = r.entries(total)?;
            r.done()?;
            v
        };
        let table = ExmaTable::from_parts(k, n, freq, increments, aux)?;

        let mut r = section(SectionId::Bases)?;
        if r.entries(dense)? != table.bases() {
            return Err(IndexFileError::Format(
                "bases disagree with frequencies".into(),
            ));
        }
        r.done()?;
        let mut r = section(SectionId::CumCount)?;
        if r.entries(dense)? != table.cum_counts() {
            return Err(IndexFileError::Format("cumulative counts disagree".into()));
        }
        r.done()?;

        let mut r = section(SectionId::SuffixArray)?;
        let sa = r.entries(n)?;
        r.done()?;

        let mut r = section(SectionId::Records)?;
        let mut records = Vec::new();
        for _ in 0..r.uint(4)? {
            let len = r.uint(4)? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| IndexFileError::Format("record name".into()))?;
            records.push(Record {
                name,
                start: r.uint(8)? as usize,
                len: r.uint(8)? as usize,
            });
        }
        r.done()?;

        let model = if flags & FLAG_MODEL != 0 {
            Some(MtlIndex32::from_blob(section(SectionId::Model)?.bytes)?)
        } else {
            None
        };
        Ok(Self {
            table,
            suffix_array: SuffixArray::from_vec(sa),
            records,
            compressed,
            model,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IndexFileError> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IndexFileError> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Backward search; with `use_model` and a stored model the ranks come
    /// from the learned index, otherwise from binary search.
    pub fn search(&self, query: &[u8], use_model: bool) -> Interval {
        match (&self.model, use_model) {
            (Some(m), true) => exma_backward_search(&self.table, query, &ModelRanker::new(m)),
            _ => exma_backward_search(&self.table, query, &BinarySearch),
        }
    }

    /// Sorted match positions that lie entirely inside one record.
    pub fn locate(&self, interval: Interval, query_len: usize) -> Vec<usize> {
        let mut hits = locate(interval, &self.suffix_array);
        if !self.records.is_empty() {
            hits.retain(|&p| within_records(&self.records, p, query_len));
        }
        hits
    }

    /// Record name and offset within it of a text position.
    pub fn coordinate(&self, pos: usize) -> Option<(&str, usize)> {
        let i = self
            .records
            .partition_point(|r| r.start <= pos)
            .checked_sub(1)?;
        let r = &self.records[i];
        Some((r.name.as_str(), pos - r.start))
    }

    pub fn kmer_count(&self, kmer: KmerId) -> usize {
        self.table.freq(kmer)
    }
}
