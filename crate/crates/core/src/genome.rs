//! Reference ingestion, symbol encoding, suffix array and BWT construction.
//!
//! Symbols are coded over the ordered alphabet `$ < A < C < G < T` as
//! `0..=4`. Every [`EncodedGenome`] ends with exactly one sentinel, which makes
//! the order of cyclic rotations identical to the order of suffixes.

use std::io::BufRead;

use thiserror::Error;

pub const SENTINEL: u8 = 0;
pub const ALPHABET_SIZE: usize = 5;
/// Number of non-sentinel symbols.
pub const DNA_SIZE: usize = 4;

#[derive(Debug, Error)]
pub enum GenomeError {
    #[error("non-ACGT symbol {symbol:?} at position {position}{}", record_suffix(.record))]
    NonAcgtSymbol {
        symbol: char,
        position: usize,
        record: Option<String>,
    },
    #[error("no symbols remain after filtering")]
    EmptyAfterFilter,
    #[error("sentinel or invalid symbol {symbol:?} in query at offset {position}")]
    InvalidQuery { symbol: char, position: usize },
    #[error("malformed FASTA: {0}")]
    Fasta(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn record_suffix(record: &Option<String>) -> String {
    match record {
        Some(name) => format!(" in record {name:?}"),
        None => String::new(),
    }
}

/// What to do with characters outside `ACGT` (after upcasing).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NonAcgtPolicy {
    #[default]
    Reject,
    /// Replace every ambiguous symbol by `A`.
    MapToA,
    /// Drop ambiguous symbols.
    Skip,
}

#[inline]
pub fn symbol_code(c: u8) -> Option<u8> {
    match c {
        b'A' | b'a' => Some(1),
        b'C' | b'c' => Some(2),
        b'G' | b'g' => Some(3),
        b'T' | b't' => Some(4),
        _ => None,
    }
}

#[inline]
pub fn symbol_char(code: u8) -> char {
    match code {
        0 => '$',
        1 => 'A',
        2 => 'C',
        3 => 'G',
        4 => 'T',
        _ => '?',
    }
}

pub fn decode_symbols(codes: &[u8]) -> String {
    codes.iter().map(|&c| symbol_char(c)).collect()
}

/// Encodes a query string into sentinel-free symbol codes.
pub fn encode_query(text: &str) -> Result<Vec<u8>, GenomeError> {
    text.bytes()
        .enumerate()
        .map(|(position, b)| {
            symbol_code(b).ok_or(GenomeError::InvalidQuery {
                symbol: b as char,
                position,
            })
        })
        .collect()
}

/// A named stretch of the concatenated reference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedGenome {
    symbols: Vec<u8>,
    records: Vec<Record>,
}

impl EncodedGenome {
    /// Builds a genome from sentinel-free codes, appending the sentinel.
    pub fn from_codes(mut codes: Vec<u8>) -> Self {
        debug_assert!(codes.iter().all(|&c| (1..=4).contains(&c)));
        let len = codes.len();
        codes.push(SENTINEL);
        Self {
            symbols: codes,
            records: vec![Record {
                name: String::new(),
                start: 0,
                len,
            }],
        }
    }

    /// Full symbol sequence including the trailing sentinel.
    pub fn symbols(&self) -> &[u8] {
        &self.symbols
    }

    /// Symbols without the sentinel.
    pub fn text(&self) -> &[u8] {
        &self.symbols[..self.symbols.len() - 1]
    }

    /// N, including the sentinel.
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.len() == 1
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn set_records(&mut self, records: Vec<Record>) {
        self.records = records;
    }

    /// Record index containing `pos`, if any.
    pub fn record_of(&self, pos: usize) -> Option<usize> {
        let idx = self.records.partition_point(|r| r.start <= pos);
        let r = self.records.get(idx.checked_sub(1)?)?;
        (pos < r.start + r.len).then_some(idx - 1)
    }

    /// True when `[pos, pos+len)` lies inside a single record.
    pub fn within_record(&self, pos: usize, len: usize) -> bool {
        within_records(&self.records, pos, len)
    }
}

pub fn within_records(records: &[Record], pos: usize, len: usize) -> bool {
    let idx = records.partition_point(|r| r.start <= pos);
    match idx.checked_sub(1).and_then(|i| records.get(i)) {
        Some(r) => pos + len <= r.start + r.len,
        None => false,
    }
}

/// Encodes a single reference sequence.
pub fn encode_reference(text: &str, policy: NonAcgtPolicy) -> Result<EncodedGenome, GenomeError> {
    let mut codes = Vec::with_capacity(text.len());
    encode_into(text.as_bytes(), 0, None, policy, &mut codes)?;
    if codes.is_empty() && !text.is_empty() {
        return Err(GenomeError::EmptyAfterFilter);
    }
    Ok(EncodedGenome::from_codes(codes))
}

fn encode_into(
    bytes: &[u8],
    offset: usize,
    record: Option<&str>,
    policy: NonAcgtPolicy,
    out: &mut Vec<u8>,
) -> Result<(), GenomeError> {
    for (i, &b) in bytes.iter().enumerate() {
        if b.is_ascii_whitespace() {
            continue;
        }
        match symbol_code(b) {
            Some(c) => out.push(c),
            None => match policy {
                NonAcgtPolicy::Reject => {
                    return Err(GenomeError::NonAcgtSymbol {
                        symbol: b as char,
                        position: offset + i,
                        record: record.map(str::to_owned),
                    })
                }
                NonAcgtPolicy::MapToA => out.push(1),
                NonAcgtPolicy::Skip => {}
            },
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FastaRecord {
    pub name: String,
    pub sequence: String,
}

/// Reads FASTA records. Lines before the first header are treated as an
/// anonymous record, so plain sequence files are accepted too.
pub fn read_fasta<R: BufRead>(reader: R) -> Result<Vec<FastaRecord>, GenomeError> {
    let mut records: Vec<FastaRecord> = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let line = line.trim_end();
        if let Some(header) = line.strip_prefix('>') {
            let name = header.split_whitespace().next().unwrap_or("").to_string();
            records.push(FastaRecord {
                name,
                sequence: String::new(),
            });
        } else if !line.is_empty() {
            match records.last_mut() {
                Some(r) => r.sequence.push_str(line),
                None => records.push(FastaRecord {
                    name: String::new(),
                    sequence: line.to_string(),
                }),
            }
        }
    }
    if records.is_empty() {
        return Err(GenomeError::Fasta("no records".into()));
    }
    Ok(records)
}

/// Concatenates FASTA records into one genome, remembering record boundaries.
pub fn encode_records(
    records: &[FastaRecord],
    policy: NonAcgtPolicy,
) -> Result<EncodedGenome, GenomeError> {
    let mut codes = Vec::new();
    let mut bounds = Vec::with_capacity(records.len());
    let mut raw_len = 0;
    for rec in records {
        let start = codes.len();
        encode_into(
            rec.sequence.as_bytes(),
            0,
            Some(&rec.name),
            policy,
            &mut codes,
        )?;
        raw_len += rec.sequence.len();
        bounds.push(Record {
            name: rec.name.clone(),
            start,
            len: codes.len() - start,
        });
    }
    if codes.is_empty() && raw_len > 0 {
        return Err(GenomeError::EmptyAfterFilter);
    }
    let mut genome = EncodedGenome::from_codes(codes);
    genome.set_records(bounds);
    Ok(genome)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuffixArray(Vec<usize>);

impl SuffixArray {
    pub fn from_vec(sa: Vec<usize>) -> Self {
        Self(sa)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Index<usize> for SuffixArray {
    type Output = usize;
    fn index(&self, i: usize) -> &usize {
        &self.0[i]
    }
}

/// Cyclic prefix doubling with counting sorts, O(N log N).
pub fn build_suffix_array(g: &EncodedGenome) -> SuffixArray {
    let s = g.symbols();
    let n = s.len();
    if n == 1 {
        return SuffixArray(vec![0]);
    }

    let mut order = vec![0usize; n];
    let mut class = vec![0usize; n];
    let mut buckets = vec![0usize; ALPHABET_SIZE.max(n)];

    for &c in s {
        buckets[c as usize] += 1;
    }
    for c in 1..ALPHABET_SIZE {
        buckets[c] += buckets[c - 1];
    }
    for i in (0..n).rev() {
        let c = s[i] as usize;
        buckets[c] -= 1;
        order[buckets[c]] = i;
    }
    let mut classes = 1;
    class[order[0]] = 0;
    for i in 1..n {
        if s[order[i]] != s[order[i - 1]] {
            classes += 1;
        }
        class[order[i]] = classes - 1;
    }

    let mut shifted = vec![0usize; n];
    let mut next_class = vec![0usize; n];
    let mut h = 1;
    while h < n && classes < n {
        for i in 0..n {
            shifted[i] = (order[i] + n - h) % n;
        }
        buckets[..classes].fill(0);
        for &i in &shifted {
            buckets[class[i]] += 1;
        }
        for c in 1..classes {
            buckets[c] += buckets[c - 1];
        }
        for &i in shifted.iter().rev() {
            let c = class[i];
            buckets[c] -= 1;
            order[buckets[c]] = i;
        }
        next_class[order[0]] = 0;
        classes = 1;
        for i in 1..n {
            let cur = (class[order[i]], class[(order[i] + h) % n]);
            let prev = (class[order[i - 1]], class[(order[i - 1] + h) % n]);
            if cur != prev {
                classes += 1;
            }
            next_class[order[i]] = classes - 1;
        }
        std::mem::swap(&mut class, &mut next_class);
        h <<= 1;
    }
    SuffixArray(order)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BwtString(Vec<u8>);

impl BwtString {
    pub fn codes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::fmt::Display for BwtString {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&decode_symbols(&self.0))
    }
}

pub fn build_bwt(g: &EncodedGenome, sa: &SuffixArray) -> BwtString {
    let s = g.symbols();
    let n = s.len();
    BwtString(sa.0.iter().map(|&p| s[(p + n - 1) % n]).collect())
}

/// All start positions of `query` in the reference text (sentinel excluded).
/// Test oracle only; O(N·|query|).
pub fn naive_find_all(g: &EncodedGenome, query: &[u8]) -> Vec<usize> {
    let text = g.text();
    if query.is_empty() || query.len() > text.len() {
        return Vec::new();
    }
    text.windows(query.len())
        .enumerate()
        .filter_map(|(i, w)| (w == query).then_some(i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn catataga() -> EncodedGenome {
        encode_reference("CATAGA", NonAcgtPolicy::Reject).unwrap()
    }

    fn rotation_oracle(g: &EncodedGenome) -> Vec<usize> {
        let s = g.symbols();
        let n = s.len();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| {
            let ra = s[a..].iter().chain(&s[..a]);
            let rb = s[b..].iter().chain(&s[..b]);
            ra.cmp(rb)
        });
        idx
    }

    #[test]
    fn encodes_worked_reference() {
        let g = catataga();
        assert_eq!(g.symbols(), &[2, 1, 4, 1, 3, 1, 0]);
        assert_eq!(g.len(), 7);
    }

    #[test]
    fn empty_text_is_sentinel_only() {
        let g = encode_reference("", NonAcgtPolicy::Reject).unwrap();
        assert_eq!(g.symbols(), &[0]);
        assert_eq!(build_suffix_array(&g).as_slice(), &[0]);
    }

    #[test]
    fn rejects_ambiguous_symbols_with_position() {
        let err = encode_reference("ACN", NonAcgtPolicy::Reject).unwrap_err();
        assert!(matches!(
            err,
            GenomeError::NonAcgtSymbol {
                symbol: 'N',
                position: 2,
                ..
            }
        ));
        let g = encode_reference("ACN", NonAcgtPolicy::MapToA).unwrap();
        assert_eq!(g.symbols(), &[1, 2, 1, 0]);
        assert!(matches!(
            encode_reference("NNN", NonAcgtPolicy::Skip).unwrap_err(),
            GenomeError::EmptyAfterFilter
        ));
    }

    #[test]
    fn lowercase_is_upcased() {
        let g = encode_reference("cAtg", NonAcgtPolicy::Reject).unwrap();
        assert_eq!(decode_symbols(g.symbols()), "CATG$");
    }

    #[test]
    fn worked_suffix_array_and_bwt() {
        let g = catataga();
        let sa = build_suffix_array(&g);
        assert_eq!(sa.as_slice(), &[6, 5, 3, 1, 0, 4, 2]);
        assert_eq!(build_bwt(&g, &sa).to_string(), "AGTC$AA");

        let g = encode_reference("A", NonAcgtPolicy::Reject).unwrap();
        let sa = build_suffix_array(&g);
        assert_eq!(sa.as_slice(), &[1, 0]);
        assert_eq!(build_bwt(&g, &sa).to_string(), "A$");
    }

    #[test]
    fn naive_scan_examples() {
        let g = catataga();
        assert_eq!(naive_find_all(&g, &encode_query("TAG").unwrap()), vec![2]);
        assert_eq!(
            naive_find_all(&g, &encode_query("A").unwrap()),
            vec![1, 3, 5]
        );
        assert!(naive_find_all(&g, &encode_query("GG").unwrap()).is_empty());
    }

    #[test]
    fn fasta_records_are_concatenated() {
        let data = b">chr1 first\nACGT\nAC\n>chr2\ngg\n" as &[u8];
        let recs = read_fasta(data).unwrap();
        assert_eq!(recs.len(), 2);
        let g = encode_records(&recs, NonAcgtPolicy::Reject).unwrap();
        assert_eq!(decode_symbols(g.symbols()), "ACGTACGG$");
        assert_eq!(g.records()[1].start, 6);
        assert_eq!(g.record_of(5), Some(0));
        assert_eq!(g.record_of(6), Some(1));
        assert!(g.within_record(4, 2));
        assert!(!g.within_record(5, 2));
    }

    #[test]
    fn fasta_error_names_record() {
        let data = b">r1\nAC\n>r2\nAXG\n" as &[u8];
        let recs = read_fasta(data).unwrap();
        let err = encode_records(&recs, NonAcgtPolicy::Reject).unwrap_err();
        match err {
            GenomeError::NonAcgtSymbol {
                symbol,
                position,
                record,
            } => {
                assert_eq!((symbol, position, record.as_deref()), ('X', 1, Some("r2")));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn pairwise_rotation_order_small() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for len in [1usize, 2, 3, 17, 200, 1000] {
            let codes: Vec<u8> = (0..len).map(|_| rng.gen_range(1..=4)).collect();
            let g = EncodedGenome::from_codes(codes);
            let sa = build_suffix_array(&g);
            assert_eq!(sa.as_slice(), rotation_oracle(&g).as_slice());
            let s = g.symbols();
            for w in sa.as_slice().windows(2) {
                assert!(s[w[0]..] < s[w[1]..]);
            }
        }
    }

    proptest! {
        #[test]
        fn suffix_array_matches_rotation_sort(codes in proptest::collection::vec(1u8..=4, 0..400)) {
            let g = EncodedGenome::from_codes(codes);
            let sa = build_suffix_array(&g);
            let oracle = rotation_oracle(&g);
            prop_assert_eq!(sa.as_slice(), oracle.as_slice());

            let bwt = build_bwt(&g, &sa);
            let s = g.symbols();
            let n = s.len();
            let last_column: Vec<u8> = oracle.iter().map(|&r| s[(r + n - 1) % n]).collect();
            prop_assert_eq!(bwt.codes(), last_column.as_slice());

            let mut a = bwt.codes().to_vec();
            let mut b = s.to_vec();
            a.sort_unstable();
            b.sort_unstable();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn naive_matches_sliding_count(codes in proptest::collection::vec(1u8..=4, 1..300),
                                       q in proptest::collection::vec(1u8..=4, 1..5)) {
            let g = EncodedGenome::from_codes(codes.clone());
            let mut count = 0;
            for i in 0..codes.len() {
                if codes[i..].starts_with(&q) {
                    count += 1;
                }
            }
            prop_assert_eq!(naive_find_all(&g, &q).len(), count);
        }
    }
}
