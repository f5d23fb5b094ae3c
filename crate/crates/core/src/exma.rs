//! Increment tables: for every k-mer, the sorted k-step BWT rows where its
//! Occ value increases, plus per-k-mer bases, frequencies and cumulative
//! counts. Backward search over the table replaces Occ lookups by a rank
//! query inside one k-mer's increments.
//!
//! The dense tables cover the `4^k` ACGT-only k-mers. The at most `k`
//! k-mers that contain the sentinel live in a small sorted side list; their
//! frequencies still take part in the cumulative counts so `Count` is exact
//! over the merged lexicographic order.

use thiserror::Error;

use crate::fm::{kmer_code, kmer_space, kstep_bwt_codes, Interval};
use crate::genome::{EncodedGenome, SuffixArray, ALPHABET_SIZE, DNA_SIZE};

pub const DEFAULT_MAX_STEP: usize = 13;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExmaError {
    #[error("step {k} exceeds the limit of {max}")]
    StepTooLarge { k: usize, max: usize },
    #[error("inconsistent table: {0}")]
    Inconsistent(String),
}

/// Dense index of an ACGT-only k-mer (`A=0 .. T=3`, first symbol most
/// significant).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct KmerId(pub u64);

impl KmerId {
    /// From symbol codes in `1..=4`.
    pub fn from_symbols(symbols: &[u8]) -> Self {
        KmerId(
            symbols
                .iter()
                .fold(0u64, |acc, &s| acc * DNA_SIZE as u64 + (s as u64 - 1)),
        )
    }

    pub fn parse(text: &str) -> Option<Self> {
        let codes = crate::genome::encode_query(text).ok()?;
        (!codes.is_empty()).then(|| Self::from_symbols(&codes))
    }

    pub fn symbols(self, k: usize) -> Vec<u8> {
        let mut out = vec![0u8; k];
        let mut v = self.0;
        for slot in out.iter_mut().rev() {
            *slot = (v % DNA_SIZE as u64) as u8 + 1;
            v /= DNA_SIZE as u64;
        }
        out
    }

    /// Base-5 code in the merged alphabet that includes the sentinel.
    pub fn code5(self, k: usize) -> usize {
        kmer_code(&self.symbols(k))
    }

    pub fn to_string(self, k: usize) -> String {
        crate::genome::decode_symbols(&self.symbols(k))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A k-mer holding the sentinel together with its increments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuxEntry {
    pub code: usize,
    pub increments: Vec<usize>,
}

/// `[k-mer, pos]` request issued for one side of a search iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SearchRequest {
    pub kmer: KmerId,
    pub pos: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExmaTable {
    k: usize,
    n: usize,
    /// Concatenated increment lists, dense k-mers in lexicographic order.
    increments: Vec<usize>,
    freq: Vec<usize>,
    /// Offset of each dense k-mer's slice in `increments` (defined even when
    /// the k-mer is absent).
    offset: Vec<usize>,
    cum_count: Vec<usize>,
    aux: Vec<AuxEntry>,
}

pub fn build_exma(g: &EncodedGenome, sa: &SuffixArray, k: usize) -> Result<ExmaTable, ExmaError> {
    build_exma_guarded(g, sa, k, DEFAULT_MAX_STEP)
}

pub fn build_exma_guarded(
    g: &EncodedGenome,
    sa: &SuffixArray,
    k: usize,
    max_k: usize,
) -> Result<ExmaTable, ExmaError> {
    if k == 0 || k > max_k {
        return Err(ExmaError::StepTooLarge { k, max: max_k });
    }
    ExmaTable::from_kstep_bwt(k, &kstep_bwt_codes(g, sa, k))
}

fn dense_space(k: usize) -> usize {
    DNA_SIZE.pow(k as u32)
}

/// Dense index of a base-5 code, or `None` when it contains the sentinel.
fn dense_of_code(mut code: usize, k: usize) -> Option<usize> {
    let mut dense = 0;
    let mut scale = 1;
    for _ in 0..k {
        let digit = code % ALPHABET_SIZE;
        if digit == 0 {
            return None;
        }
        dense += (digit - 1) * scale;
        scale *= DNA_SIZE;
        code /= ALPHABET_SIZE;
    }
    Some(dense)
}

fn code_of_dense(mut dense: usize, k: usize) -> usize {
    let mut code = 0;
    let mut scale = 1;
    for _ in 0..k {
        code += (dense % DNA_SIZE + 1) * scale;
        scale *= ALPHABET_SIZE;
        dense /= DNA_SIZE;
    }
    code
}

impl ExmaTable {
    /// Builds the table from a k-step BWT given as base-5 k-mer codes.
    pub fn from_kstep_bwt(k: usize, codes: &[usize]) -> Result<Self, ExmaError> {
        let space = kmer_space(k);
        let dense_len = dense_space(k);
        let mut freq = vec![0usize; dense_len];
        let mut aux: Vec<AuxEntry> = Vec::new();
        for (i, &c) in codes.iter().enumerate() {
            if c >= space {
                return Err(ExmaError::Inconsistent(format!(
                    "k-mer code {c} out of range"
                )));
            }
            match dense_of_code(c, k) {
                Some(d) => freq[d] += 1,
                None => match aux.iter_mut().find(|e| e.code == c) {
                    Some(e) => e.increments.push(i),
                    None => aux.push(AuxEntry {
                        code: c,
                        increments: vec![i],
                    }),
                },
            }
        }
        aux.sort_by_key(|e| e.code);
        let offset = prefix_offsets(&freq);
        let mut cursor = offset.clone();
        let mut increments =
            vec![0usize; codes.len() - aux.iter().map(|e| e.increments.len()).sum::<usize>()];
        for (i, &c) in codes.iter().enumerate() {
            if let Some(d) = dense_of_code(c, k) {
                increments[cursor[d]] = i;
                cursor[d] += 1;
            }
        }
        let mut table = Self {
            k,
            n: codes.len(),
            increments,
            freq,
            offset,
            cum_count: Vec::new(),
            aux,
        };
        table.cum_count = table.compute_cum_count();
        Ok(table)
    }

    /// Reassembles a table from its stored parts, checking consistency.
    pub fn from_parts(
        k: usize,
        n: usize,
        freq: Vec<usize>,
        increments: Vec<usize>,
        aux: Vec<AuxEntry>,
    ) -> Result<Self, ExmaError> {
        if freq.len() != dense_space(k) {
            return Err(ExmaError::Inconsistent("frequency table size".into()));
        }
        let aux_total: usize = aux.iter().map(|e| e.increments.len()).sum();
        if freq.iter().sum::<usize>() != increments.len() || increments.len() + aux_total != n {
            return Err(ExmaError::Inconsistent(
                "frequencies do not sum to N".into(),
            ));
        }
        if aux.len() > k || aux.windows(2).any(|w| w[0].code >= w[1].code) {
            return Err(ExmaError::Inconsistent("auxiliary list".into()));
        }
        let offset = prefix_offsets(&freq);
        for (d, &f) in freq.iter().enumerate() {
            let slice = &increments[offset[d]..offset[d] + f];
            if slice.windows(2).any(|w| w[0] >= w[1]) || slice.iter().any(|&v| v >= n) {
                return Err(ExmaError::Inconsistent(format!("increments of k-mer {d}")));
            }
        }
        let mut table = Self {
            k,
            n,
            increments,
            freq,
            offset,
            cum_count: Vec::new(),
            aux,
        };
        table.cum_count = table.compute_cum_count();
        Ok(table)
    }

    fn compute_cum_count(&self) -> Vec<usize> {
        (0..self.freq.len())
            .map(|d| self.count_below(code_of_dense(d, self.k)))
            .collect()
    }

    pub fn step(&self) -> usize {
        self.k
    }

    /// Length of the k-step BWT.
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Number of dense k-mers, `4^k`.
    pub fn dense_len(&self) -> usize {
        self.freq.len()
    }

    /// Marker for absent k-mers.
    pub fn max_marker(&self) -> usize {
        self.n + 1
    }

    pub fn freq(&self, kmer: KmerId) -> usize {
        self.freq.get(kmer.index()).copied().unwrap_or(0)
    }

    pub fn base(&self, kmer: KmerId) -> usize {
        match self.freq(kmer) {
            0 => self.max_marker(),
            _ => self.offset[kmer.index()],
        }
    }

    /// Slice offset, defined for absent k-mers too.
    pub fn offset(&self, kmer: KmerId) -> usize {
        self.offset[kmer.index()]
    }

    pub fn increments(&self, kmer: KmerId) -> &[usize] {
        let d = kmer.index();
        match self.freq.get(d) {
            Some(&f) => &self.increments[self.offset[d]..self.offset[d] + f],
            None => &[],
        }
    }

    pub fn all_increments(&self) -> &[usize] {
        &self.increments
    }

    pub fn frequencies(&self) -> &[usize] {
        &self.freq
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offset
    }

    pub fn cum_counts(&self) -> &[usize] {
        &self.cum_count
    }

    pub fn bases(&self) -> Vec<usize> {
        (0..self.freq.len())
            .map(|d| self.base(KmerId(d as u64)))
            .collect()
    }

    pub fn aux(&self) -> &[AuxEntry] {
        &self.aux
    }

    /// Count over the k-step alphabet.
    pub fn count_of(&self, kmer: KmerId) -> usize {
        self.cum_count[kmer.index()]
    }

    /// Number of k-step BWT entries whose base-5 code is below `code`, for
    /// any `code` in `0..=5^k`.
    pub fn count_below(&self, code: usize) -> usize {
        let space = kmer_space(self.k);
        let rank = if code >= space {
            self.freq.len()
        } else {
            // ACGT-only k-mers below `code`: stop at the first sentinel digit.
            let mut rank = 0;
            let (mut scale, mut dense_scale) = (space, self.freq.len());
            for _ in 0..self.k {
                scale /= ALPHABET_SIZE;
                dense_scale /= DNA_SIZE;
                let digit = (code / scale) % ALPHABET_SIZE;
                if digit == 0 {
                    break;
                }
                rank += (digit - 1) * dense_scale;
            }
            rank
        };
        let dense_below = match self.offset.get(rank) {
            Some(&o) => o,
            None => self.increments.len(),
        };
        let aux_below: usize = self
            .aux
            .iter()
            .take_while(|e| e.code < code)
            .map(|e| e.increments.len())
            .sum();
        dense_below + aux_below
    }

    /// Rows of the BW-matrix whose suffix starts with `m_mer` (1 <= m <= k).
    /// The low end pads with sentinels, the high end is the next code after
    /// every k-mer sharing the prefix.
    pub fn prefix_interval(&self, m_mer: &[u8]) -> Interval {
        let m = m_mer.len();
        debug_assert!((1..=self.k).contains(&m));
        let pad = kmer_space(self.k - m);
        let code = kmer_code(m_mer);
        Interval::new(
            self.count_below(code * pad),
            self.count_below((code + 1) * pad),
        )
    }

    /// Increments strictly below `pos`, by linear scan from the base.
    pub fn occ_rank(&self, kmer: KmerId, pos: usize) -> usize {
        self.increments(kmer)
            .iter()
            .take_while(|&&v| v < pos)
            .count()
    }

    pub fn occ_rank_binary(&self, kmer: KmerId, pos: usize) -> usize {
        self.increments(kmer).partition_point(|&v| v < pos)
    }
}

fn prefix_offsets(freq: &[usize]) -> Vec<usize> {
    let mut acc = 0;
    freq.iter()
        .map(|&f| {
            let o = acc;
            acc += f;
            o
        })
        .collect()
}

/// Computes `Occ(kmer, pos)` over a table. Implementations must return the
/// exact rank; they may differ only in how they find it.
pub trait OccRanker {
    fn rank(&self, table: &ExmaTable, kmer: KmerId, pos: usize) -> usize;
}

impl<R: OccRanker + ?Sized> OccRanker for &R {
    fn rank(&self, table: &ExmaTable, kmer: KmerId, pos: usize) -> usize {
        (**self).rank(table, kmer, pos)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LinearScan;

impl OccRanker for LinearScan {
    fn rank(&self, table: &ExmaTable, kmer: KmerId, pos: usize) -> usize {
        table.occ_rank(kmer, pos)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BinarySearch;

impl OccRanker for BinarySearch {
    fn rank(&self, table: &ExmaTable, kmer: KmerId, pos: usize) -> usize {
        table.occ_rank_binary(kmer, pos)
    }
}

/// Splits a query into its first processed chunk (the last `|Q| mod k`
/// symbols, or the last `k`) and the remaining full chunks, in processing
/// order.
fn split_query(query: &[u8], k: usize) -> (&[u8], std::slice::RChunksExact<'_, u8>) {
    let head = match query.len() % k {
        0 => k.min(query.len()),
        r => r,
    };
    let (rest, first) = query.split_at(query.len() - head);
    (first, rest.rchunks_exact(k))
}

pub fn exma_backward_search<R: OccRanker>(t: &ExmaTable, query: &[u8], ranker: &R) -> Interval {
    exma_backward_search_trace(t, query, ranker)
        .last()
        .copied()
        .unwrap_or(Interval::new(0, t.len()))
}

/// Interval after each processed chunk.
pub fn exma_backward_search_trace<R: OccRanker>(
    t: &ExmaTable,
    query: &[u8],
    ranker: &R,
) -> Vec<Interval> {
    if query.is_empty() {
        return Vec::new();
    }
    let (first, rest) = split_query(query, t.k);
    let mut iv = t.prefix_interval(first);
    let mut trace = vec![iv];
    for chunk in rest {
        if iv.is_empty() {
            break;
        }
        let kmer = KmerId::from_symbols(chunk);
        let base = t.count_of(kmer);
        iv = Interval::new(
            base + ranker.rank(t, kmer, iv.low),
            base + ranker.rank(t, kmer, iv.high),
        );
        trace.push(iv);
    }
    trace
}

/// The `[k-mer, pos]` requests a search issues, low side first.
pub fn search_requests(t: &ExmaTable, query: &[u8]) -> Vec<SearchRequest> {
    let mut out = Vec::new();
    if query.is_empty() {
        return out;
    }
    let (first, rest) = split_query(query, t.k);
    let mut iv = t.prefix_interval(first);
    for chunk in rest {
        if iv.is_empty() {
            break;
        }
        let kmer = KmerId::from_symbols(chunk);
        out.push(SearchRequest { kmer, pos: iv.low });
        out.push(SearchRequest { kmer, pos: iv.high });
        let base = t.count_of(kmer);
        iv = Interval::new(
            base + t.occ_rank_binary(kmer, iv.low),
            base + t.occ_rank_binary(kmer, iv.high),
        );
    }
    out
}

/// Byte sizes of each stored component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct TableSizeReport {
    pub entry_width: usize,
    pub increments: u64,
    pub bases: u64,
    pub freq: u64,
    pub cum_count: u64,
    pub aux: u64,
    pub total: u64,
}

/// 4-byte entries while `N + 1` fits in 32 bits, 8 bytes beyond.
pub fn entry_width_for(n: u64) -> usize {
    if n < u32::MAX as u64 {
        4
    } else {
        8
    }
}

impl TableSizeReport {
    pub fn increments_bytes(entries: u64, entry_width: usize) -> u64 {
        entries * entry_width as u64
    }
}

pub fn table_size_report(t: &ExmaTable) -> TableSizeReport {
    let w = entry_width_for(t.len() as u64);
    let wb = w as u64;
    let dense = t.dense_len() as u64;
    let increments = TableSizeReport::increments_bytes(t.all_increments().len() as u64, w);
    let aux: u64 = t
        .aux()
        .iter()
        .map(|e| 8 + wb + e.increments.len() as u64 * wb)
        .sum();
    let (bases, freq, cum_count) = (dense * wb, dense * wb, dense * wb);
    TableSizeReport {
        entry_width: w,
        increments,
        bases,
        freq,
        cum_count,
        aux,
        total: increments + bases + freq + cum_count + aux,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fm::{build_fm, build_kstep, locate};
    use crate::genome::{
        build_suffix_array, encode_query, encode_reference, naive_find_all, NonAcgtPolicy,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn worked(k: usize) -> (EncodedGenome, SuffixArray, ExmaTable) {
        let g = encode_reference("CATAGA", NonAcgtPolicy::Reject).unwrap();
        let sa = build_suffix_array(&g);
        let t = build_exma(&g, &sa, k).unwrap();
        (g, sa, t)
    }

    fn kmer(s: &str) -> KmerId {
        KmerId::parse(s).unwrap()
    }

    #[test]
    fn worked_two_step_table() {
        let (_, _, t) = worked(2);
        for (name, incr) in [
            ("GA", vec![0]),
            ("AG", vec![1]),
            ("AT", vec![2]),
            ("TA", vec![5]),
            ("CA", vec![6]),
        ] {
            assert_eq!(t.increments(kmer(name)), incr.as_slice(), "{name}");
        }
        let aux: Vec<(String, Vec<usize>)> = t
            .aux()
            .iter()
            .map(|e| {
                (
                    crate::genome::decode_symbols(&crate::fm::kmer_symbols(e.code, 2)),
                    e.increments.clone(),
                )
            })
            .collect();
        assert_eq!(
            aux,
            vec![("$C".to_string(), vec![3]), ("A$".to_string(), vec![4])]
        );
        assert_eq!(t.freq(kmer("AA")), 0);
        assert_eq!(t.base(kmer("AA")), 8);
        assert_eq!(t.base(kmer("TC")), 8);
        assert_eq!(t.frequencies().iter().sum::<usize>() + 2, t.len());
    }

    #[test]
    fn worked_rank_examples() {
        let t = ExmaTable::from_parts(
            1,
            10,
            vec![4, 0, 0, 6],
            vec![2, 3, 6, 9, 0, 1, 4, 5, 7, 8],
            vec![],
        )
        .unwrap();
        let aa = KmerId(0);
        assert_eq!(t.occ_rank(aa, 4), 2);
        assert_eq!(t.occ_rank(aa, 0), 0);
        assert_eq!(t.occ_rank(aa, 3), 1);
        assert_eq!(t.occ_rank_binary(aa, 3), 1);
        assert_eq!(t.occ_rank(KmerId(1), 7), 0);
    }

    #[test]
    fn count_of_matches_fm_count() {
        let (g, sa, t) = worked(2);
        let fm = build_kstep(&g, &sa, 2, 4).unwrap();
        for d in 0..16u64 {
            let id = KmerId(d);
            assert_eq!(t.count_of(id), fm.count(id.code5(2)), "{}", id.to_string(2));
        }
        assert_eq!(t.count_below(0), 0);
        let tt = kmer("TT");
        assert_eq!(t.count_of(tt), t.len() - t.freq(tt));
    }

    #[test]
    fn worked_prefix_interval_and_search() {
        let (_, sa, t) = worked(2);
        assert_eq!(
            t.prefix_interval(&encode_query("G").unwrap()),
            Interval::new(5, 6)
        );
        let ca = kmer("CA");
        assert_eq!(
            t.prefix_interval(&encode_query("CA").unwrap()),
            Interval::new(t.count_of(ca), t.count_of(ca) + t.freq(ca))
        );
        let trace = exma_backward_search_trace(&t, &encode_query("TAG").unwrap(), &LinearScan);
        assert_eq!(trace, vec![Interval::new(5, 6), Interval::new(6, 7)]);
        assert_eq!(locate(trace[1], &sa), vec![2]);
        let whole = exma_backward_search(&t, &encode_query("CATAGA").unwrap(), &LinearScan);
        assert_eq!(whole.width(), 1);
    }

    #[test]
    fn size_report() {
        let (_, _, t) = worked(2);
        let r = table_size_report(&t);
        assert_eq!(r.entry_width, 4);
        assert_eq!(r.increments, 5 * 4);
        let entries =
            t.all_increments().len() + t.aux().iter().map(|e| e.increments.len()).sum::<usize>();
        assert_eq!(entries * r.entry_width, 28);
        assert_eq!(r.bases, 16 * 4);
        assert_eq!(
            TableSizeReport::increments_bytes(3_000_000_000, entry_width_for(3_000_000_000)),
            12_000_000_000
        );
    }

    #[test]
    fn guard() {
        let g = encode_reference("ACGT", NonAcgtPolicy::Reject).unwrap();
        let sa = build_suffix_array(&g);
        assert_eq!(
            build_exma(&g, &sa, 14).unwrap_err(),
            ExmaError::StepTooLarge { k: 14, max: 13 }
        );
    }

    #[test]
    fn random_equivalence() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..8 {
            let len = rng.gen_range(1..300);
            let g = EncodedGenome::from_codes((0..len).map(|_| rng.gen_range(1..=4)).collect());
            let sa = build_suffix_array(&g);
            let one = build_fm(&g, &sa, 8).unwrap();
            for k in 1..=4 {
                let t = build_exma(&g, &sa, k).unwrap();
                let fm = build_kstep(&g, &sa, k, 8).unwrap();

                // Concatenated slices rebuild the k-step BWT.
                let mut rebuilt = vec![usize::MAX; t.len()];
                for d in 0..t.dense_len() {
                    let id = KmerId(d as u64);
                    for &i in t.increments(id) {
                        rebuilt[i] = id.code5(k);
                    }
                }
                for e in t.aux() {
                    for &i in &e.increments {
                        rebuilt[i] = e.code;
                    }
                }
                assert_eq!(rebuilt, fm.bwt());
                assert!(t.aux().len() <= k);

                for d in 0..t.dense_len() {
                    let id = KmerId(d as u64);
                    for pos in 0..=t.len() {
                        let want = fm.occ(id.code5(k), pos).unwrap();
                        assert_eq!(t.occ_rank(id, pos), want);
                        assert_eq!(t.occ_rank_binary(id, pos), want);
                    }
                }

                for m in 1..=k {
                    for code in 0..4usize.pow(m as u32) {
                        let mmer = KmerId(code as u64).symbols(m);
                        let iv = t.prefix_interval(&mmer);
                        let base = one.backward_search(&mmer).unwrap();
                        assert!(iv == base || (iv.is_empty() && base.is_empty()));
                        let direct = sa
                            .as_slice()
                            .iter()
                            .filter(|&&p| g.symbols()[p..].starts_with(&mmer))
                            .count();
                        assert_eq!(iv.width(), direct);
                    }
                }

                for _ in 0..60 {
                    let m = rng.gen_range(1..12);
                    let q: Vec<u8> = if rng.gen_bool(0.6) && m <= len {
                        let st = rng.gen_range(0..=len - m);
                        g.text()[st..st + m].to_vec()
                    } else {
                        (0..m).map(|_| rng.gen_range(1..=4)).collect()
                    };
                    let naive = naive_find_all(&g, &q);
                    let iv = exma_backward_search(&t, &q, &LinearScan);
                    assert_eq!(iv.width(), naive.len());
                    assert_eq!(locate(iv, &sa), naive);
                    assert_eq!(iv, exma_backward_search(&t, &q, &BinarySearch));
                }
            }
        }
    }

    #[test]
    fn table_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = EncodedGenome::from_codes((0..500).map(|_| rng.gen_range(1..=4)).collect());
        let sa = build_suffix_array(&g);
        let t = build_exma(&g, &sa, 3).unwrap();
        let mut last_base = None;
        for d in 0..t.dense_len() {
            let id = KmerId(d as u64);
            if d + 1 < t.dense_len() {
                let next = KmerId(d as u64 + 1);
                let aux_between: usize = t
                    .aux()
                    .iter()
                    .filter(|e| e.code > id.code5(3) && e.code < next.code5(3))
                    .map(|e| e.increments.len())
                    .sum();
                assert_eq!(t.count_of(next) - t.count_of(id), t.freq(id) + aux_between);
            }
            if t.freq(id) > 0 {
                if let Some(prev) = last_base {
                    assert!(t.base(id) > prev);
                }
                last_base = Some(t.base(id));
            }
        }
        let rebuilt = ExmaTable::from_parts(
            3,
            t.len(),
            t.frequencies().to_vec(),
            t.all_increments().to_vec(),
            t.aux().to_vec(),
        )
        .unwrap();
        assert_eq!(rebuilt, t);
    }

    #[test]
    fn search_requests_pair_low_high() {
        let (_, _, t) = worked(2);
        let reqs = search_requests(&t, &encode_query("TAG").unwrap());
        assert_eq!(
            reqs,
            vec![
                SearchRequest {
                    kmer: kmer("TA"),
                    pos: 5
                },
                SearchRequest {
                    kmer: kmer("TA"),
                    pos: 6
                }
            ]
        );
    }
}
