//! Baseline 1-step and k-step FM-Index with bucketed Occ storage.
//!
//! k-mers over `{$,A,C,G,T}` are identified by their base-5 value with the
//! first symbol most significant, so numeric order equals lexicographic order
//! and sentinel-containing k-mers sort below the ones that hold `A` in the
//! same slot.

use thiserror::Error;

use crate::genome::{EncodedGenome, SuffixArray, ALPHABET_SIZE, DNA_SIZE};

/// Largest step accepted by the dense baseline index.
pub const MAX_BASELINE_STEP: usize = 8;
pub const DEFAULT_BUCKET_WIDTH: usize = 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FmError {
    #[error("position {pos} out of range 0..={len}")]
    PositionOutOfRange { pos: usize, len: usize },
    #[error("step {k} exceeds the limit of {max}")]
    StepTooLarge { k: usize, max: usize },
    #[error("query length {len} is not a multiple of the step {k}")]
    LengthNotMultipleOfStep { len: usize, k: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
}

/// Half-open range of BW-matrix rows `[low, high)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Interval {
    pub low: usize,
    pub high: usize,
}

impl Interval {
    pub const EMPTY: Interval = Interval { low: 0, high: 0 };

    pub fn new(low: usize, high: usize) -> Self {
        Self { low, high }
    }

    pub fn width(&self) -> usize {
        self.high.saturating_sub(self.low)
    }

    pub fn is_empty(&self) -> bool {
        self.low >= self.high
    }
}

/// `5^k`, the enlarged alphabet size including sentinel-bearing k-mers.
pub fn kmer_space(k: usize) -> usize {
    ALPHABET_SIZE.pow(k as u32)
}

/// Base-5 code of `k` symbols.
pub fn kmer_code(symbols: &[u8]) -> usize {
    symbols
        .iter()
        .fold(0usize, |acc, &s| acc * ALPHABET_SIZE + s as usize)
}

pub fn kmer_symbols(mut code: usize, k: usize) -> Vec<u8> {
    let mut out = vec![0u8; k];
    for slot in out.iter_mut().rev() {
        *slot = (code % ALPHABET_SIZE) as u8;
        code /= ALPHABET_SIZE;
    }
    out
}

/// k-step BWT: entry `i` is the code of the `k` symbols circularly preceding
/// suffix `sa[i]`.
pub fn kstep_bwt_codes(g: &EncodedGenome, sa: &SuffixArray, k: usize) -> Vec<usize> {
    let s = g.symbols();
    let n = s.len();
    sa.as_slice()
        .iter()
        .map(|&p| {
            (0..k).fold(0usize, |acc, j| {
                acc * ALPHABET_SIZE + s[(p + n * k - k + j) % n] as usize
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountTable {
    count: Vec<usize>,
}

impl CountTable {
    /// `count[s] = |{i : bwt[i] < s}|` over an alphabet of `sigma` symbols.
    pub fn build(bwt: &[usize], sigma: usize) -> Self {
        let mut count = vec![0usize; sigma + 1];
        for &c in bwt {
            count[c + 1] += 1;
        }
        for s in 1..=sigma {
            count[s] += count[s - 1];
        }
        count.truncate(sigma);
        Self { count }
    }

    pub fn get(&self, symbol: usize) -> usize {
        self.count[symbol]
    }

    pub fn sigma(&self) -> usize {
        self.count.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BucketedOcc {
    width: usize,
    sigma: usize,
    /// `markers[b * sigma + s] = Occ(s, b * width)`.
    markers: Vec<u32>,
    payload: Vec<u32>,
}

impl BucketedOcc {
    pub fn build(bwt: &[usize], sigma: usize, width: usize) -> Result<Self, FmError> {
        if width == 0 {
            return Err(FmError::InvalidArgument("bucket width must be positive"));
        }
        if bwt.len() >= u32::MAX as usize {
            return Err(FmError::InvalidArgument("BWT too long for 32-bit markers"));
        }
        let buckets = bwt.len() / width + 1;
        let mut markers = vec![0u32; buckets * sigma];
        let mut running = vec![0u32; sigma];
        for b in 0..buckets {
            markers[b * sigma..(b + 1) * sigma].copy_from_slice(&running);
            let end = ((b + 1) * width).min(bwt.len());
            for &c in &bwt[(b * width).min(bwt.len())..end] {
                running[c] += 1;
            }
        }
        Ok(Self {
            width,
            sigma,
            markers,
            payload: bwt.iter().map(|&c| c as u32).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.payload.len()
    }

    pub fn is_empty(&self) -> bool {
        self.payload.is_empty()
    }

    pub fn bucket_width(&self) -> usize {
        self.width
    }

    pub fn marker(&self, bucket: usize, symbol: usize) -> usize {
        self.markers[bucket * self.sigma + symbol] as usize
    }

    /// Occurrences of `symbol` in positions `0..i`.
    pub fn occ(&self, symbol: usize, i: usize) -> Result<usize, FmError> {
        if i > self.payload.len() {
            return Err(FmError::PositionOutOfRange {
                pos: i,
                len: self.payload.len(),
            });
        }
        Ok(self.occ_unchecked(symbol, i))
    }

    #[inline]
    fn occ_unchecked(&self, symbol: usize, i: usize) -> usize {
        if symbol >= self.sigma {
            return 0;
        }
        let b = i / self.width;
        let s = symbol as u32;
        let residual = self.payload[b * self.width..i]
            .iter()
            .filter(|&&c| c == s)
            .count();
        self.markers[b * self.sigma + symbol] as usize + residual
    }
}

/// FM-Index over the alphabet of k-mers. With `k = 1` this is the classic
/// 1-step index.
#[derive(Debug, Clone)]
pub struct KStepFmIndex {
    k: usize,
    bwt: Vec<usize>,
    count: CountTable,
    occ: BucketedOcc,
}

pub type FmIndex = KStepFmIndex;

pub fn build_fm(g: &EncodedGenome, sa: &SuffixArray, d: usize) -> Result<FmIndex, FmError> {
    build_kstep(g, sa, 1, d)
}

pub fn build_kstep(
    g: &EncodedGenome,
    sa: &SuffixArray,
    k: usize,
    d: usize,
) -> Result<KStepFmIndex, FmError> {
    if k == 0 {
        return Err(FmError::InvalidArgument("step must be at least 1"));
    }
    if k > MAX_BASELINE_STEP {
        return Err(FmError::StepTooLarge {
            k,
            max: MAX_BASELINE_STEP,
        });
    }
    let sigma = kmer_space(k);
    let bwt = kstep_bwt_codes(g, sa, k);
    let count = CountTable::build(&bwt, sigma);
    let occ = BucketedOcc::build(&bwt, sigma, d)?;
    Ok(KStepFmIndex { k, bwt, count, occ })
}

impl KStepFmIndex {
    pub fn step(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.bwt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bwt.is_empty()
    }

    /// k-mer codes of the enlarged-alphabet BWT.
    pub fn bwt(&self) -> &[usize] {
        &self.bwt
    }

    pub fn count(&self, symbol: usize) -> usize {
        self.count.get(symbol)
    }

    pub fn count_table(&self) -> &CountTable {
        &self.count
    }

    pub fn occ(&self, symbol: usize, i: usize) -> Result<usize, FmError> {
        self.occ.occ(symbol, i)
    }

    pub fn occ_table(&self) -> &BucketedOcc {
        &self.occ
    }

    /// Backward search processing `k` symbols per iteration. The query length
    /// must be a multiple of `k`.
    pub fn backward_search(&self, query: &[u8]) -> Result<Interval, FmError> {
        Ok(self
            .backward_search_trace(query)?
            .last()
            .copied()
            .unwrap_or(Interval::new(0, self.len())))
    }

    /// Interval after each iteration, last chunk first.
    pub fn backward_search_trace(&self, query: &[u8]) -> Result<Vec<Interval>, FmError> {
        if !query.len().is_multiple_of(self.k) {
            return Err(FmError::LengthNotMultipleOfStep {
                len: query.len(),
                k: self.k,
            });
        }
        let mut trace = Vec::with_capacity(query.len() / self.k);
        let mut iv = Interval::new(0, self.len());
        for chunk in query.rchunks_exact(self.k) {
            let code = kmer_code(chunk);
            let base = self.count.get(code);
            iv = Interval::new(
                base + self.occ.occ_unchecked(code, iv.low),
                base + self.occ.occ_unchecked(code, iv.high),
            );
            trace.push(iv);
            if iv.is_empty() {
                break;
            }
        }
        Ok(trace)
    }
}

/// Same as [`KStepFmIndex::backward_search`]; kept as a named entry point for
/// the k-step baseline.
pub fn kstep_backward_search(idx: &KStepFmIndex, query: &[u8]) -> Result<Interval, FmError> {
    idx.backward_search(query)
}

/// Reference positions of the rows in `interval`, sorted.
pub fn locate(interval: Interval, sa: &SuffixArray) -> Vec<usize> {
    if interval.is_empty() {
        return Vec::new();
    }
    let mut out = sa.as_slice()[interval.low..interval.high].to_vec();
    out.sort_unstable();
    out
}

pub(crate) fn ceil_log2(x: u64) -> u32 {
    if x <= 1 {
        0
    } else {
        64 - (x - 1).leading_zeros()
    }
}

/// Estimated k-step FM-Index size in bytes:
/// markers `ceil(log2 G) * G * 4^k / (8d)` plus payload `G * ceil(log2(4^k + 1)) / 8`.
pub fn estimate_kstep_size(genome_len: u64, k: u32, d: u64) -> f64 {
    let g = genome_len as f64;
    let sigma_k = (DNA_SIZE as f64).powi(k as i32);
    let markers = ceil_log2(genome_len) as f64 * g * sigma_k / (8.0 * d as f64);
    let payload_bits = ceil_log2(4u64.saturating_pow(k).saturating_add(1)) as f64;
    markers + g * payload_bits / 8.0
}
