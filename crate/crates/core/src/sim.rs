//! Event-cost simulator of the search accelerator memory system: scheduling
//! queue, base and index caches, and a DRAM model with row buffers.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use num_traits::Float;
use serde::Serialize;
use thiserror::Error;

use crate::exma::{entry_width_for, ExmaTable, KmerId, SearchRequest};
use crate::mtl::{rank_with_index, MtlIndex, NodeKey};

pub const LINE_BYTES: u64 = 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("{len} requests exceed the queue capacity of {capacity}")]
    QueueOverflow { len: usize, capacity: usize },
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("config line {line}: {message}")]
    ConfigParse { line: usize, message: String },
    #[error("address {addr:#x} is outside the DRAM")]
    UnmappedAddress { addr: u64 },
    #[error("offset {offset} is outside a region of {len} bytes")]
    OffsetOutOfRange { offset: u64, len: u64 },
    #[error("utilization is undefined for zero cycles")]
    DivisionByZeroCycles,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PagePolicy {
    Close,
    Open,
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheduler {
    FrFcfs,
    TwoStage,
}

/// Entry granularity of the index cache.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexCacheUnit {
    Node,
    Line,
}

macro_rules! keyword_enum {
    ($ty:ty { $($name:literal => $variant:expr),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($name => Ok($variant),)+
                    _ => Err(format!("unknown value `{s}`")),
                }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                $(if *self == $variant { return f.write_str($name); })+
                unreachable!()
            }
        }
    };
}

keyword_enum!(PagePolicy { "close" => PagePolicy::Close, "open" => PagePolicy::Open, "dynamic" => PagePolicy::Dynamic });
keyword_enum!(Scheduler { "fr-fcfs" => Scheduler::FrFcfs, "two-stage" => Scheduler::TwoStage });
keyword_enum!(IndexCacheUnit { "node" => IndexCacheUnit::Node, "line" => IndexCacheUnit::Line });

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimConfig {
    pub base_cache_bytes: u64,
    pub base_cache_ways: usize,
    /// Entries, counted in nodes or in 64-byte lines depending on the unit.
    pub index_cache_entries: usize,
    pub index_cache_ways: usize,
    pub index_cache_unit: IndexCacheUnit,
    pub queue_capacity: usize,
    pub channels: u64,
    pub ranks: u64,
    pub banks: u64,
    pub rows: u64,
    pub row_bytes: u64,
    pub t_rcd: u64,
    pub t_cas: u64,
    pub t_rp: u64,
    pub burst_cycles: u64,
    pub page_policy: PagePolicy,
    pub scheduler: Scheduler,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            base_cache_bytes: 1 << 20,
            base_cache_ways: 8,
            index_cache_entries: 512,
            index_cache_ways: 16,
            index_cache_unit: IndexCacheUnit::Node,
            queue_capacity: 512,
            channels: 1,
            ranks: 1,
            banks: 16,
            rows: 32768,
            row_bytes: 2048,
            t_rcd: 16,
            t_cas: 16,
            t_rp: 16,
            burst_cycles: 4,
            page_policy: PagePolicy::Dynamic,
            scheduler: Scheduler::TwoStage,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::ConfigInvalid(m.into()));
        let lines = self.base_cache_bytes / LINE_BYTES;
        if lines == 0 || !self.base_cache_bytes.is_multiple_of(LINE_BYTES) {
            return bad("base cache must hold whole 64-byte lines");
        }
        if self.base_cache_ways == 0 || !lines.is_multiple_of(self.base_cache_ways as u64) {
            return bad("base cache associativity must divide its line count");
        }
        if self.index_cache_entries == 0
            || self.index_cache_ways == 0
            || !self
                .index_cache_entries
                .is_multiple_of(self.index_cache_ways)
        {
            return bad("index cache associativity must divide its entry count");
        }
        if self.queue_capacity == 0 {
            return bad("queue capacity must be positive");
        }
        for (name, v) in [
            ("channels", self.channels),
            ("ranks", self.ranks),
            ("banks", self.banks),
            ("rows", self.rows),
            ("row_bytes", self.row_bytes),
        ] {
            if !v.is_power_of_two() {
                return Err(SimError::ConfigInvalid(format!(
                    "{name} must be a power of two"
                )));
            }
        }
        if self.row_bytes < LINE_BYTES {
            return bad("rows must hold at least one line");
        }
        if self.burst_cycles == 0 {
            return bad("burst must take at least one cycle");
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment. Unset keys keep
    /// their defaults.
    pub fn parse(text: &str) -> Result<Self, SimError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| SimError::ConfigParse {
                line: i + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err("expected `key = value`".into()))?;
            cfg.set(key.trim(), value.trim()).map_err(err)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: FromStr>(v: &str) -> Result<T, String> {
            v.parse()
                .map_err(|_| format!("`{v}` is not a valid number"))
        }
        match key {
            "base_cache_bytes" => self.base_cache_bytes = num(value)?,
            "base_cache_ways" => self.base_cache_ways = num(value)?,
            "index_cache_entries" => self.index_cache_entries = num(value)?,
            "index_cache_ways" => self.index_cache_ways = num(value)?,
            "index_cache_unit" => self.index_cache_unit = value.parse()?,
            "queue_capacity" => self.queue_capacity = num(value)?,
            "channels" => self.channels = num(value)?,
            "ranks" => self.ranks = num(value)?,
            "banks" => self.banks = num(value)?,
            "rows" => self.rows = num(value)?,
            "row_bytes" => self.row_bytes = num(value)?,
            "t_rcd" => self.t_rcd = num(value)?,
            "t_cas" => self.t_cas = num(value)?,
            "t_rp" => self.t_rp = num(value)?,
            "burst_cycles" => self.burst_cycles = num(value)?,
            "page_policy" => self.page_policy = value.parse()?,
            "scheduler" => self.scheduler = value.parse()?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        format!(
            "base_cache_bytes = {}\nbase_cache_ways = {}\nindex_cache_entries = {}\n\
             index_cache_ways = {}\nindex_cache_unit = {}\nqueue_capacity = {}\n\
             channels = {}\nranks = {}\nbanks = {}\nrows = {}\nrow_bytes = {}\n\
             t_rcd = {}\nt_cas = {}\nt_rp = {}\nburst_cycles = {}\npage_policy = {}\n\
             scheduler = {}\n",
            self.base_cache_bytes,
            self.base_cache_ways,
            self.index_cache_entries,
            self.index_cache_ways,
            self.index_cache_unit,
            self.queue_capacity,
            self.channels,
            self.ranks,
            self.banks,
            self.rows,
            self.row_bytes,
            self.t_rcd,
            self.t_cas,
            self.t_rp,
            self.burst_cycles,
            self.page_policy,
            self.scheduler,
        )
    }

    fn bank_span(&self) -> u64 {
        self.rows * self.row_bytes
    }

    fn capacity(&self) -> u64 {
        self.bank_span() * self.banks * self.ranks * self.channels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DramCoord {
    pub channel: u64,
    pub rank: u64,
    pub bank: u64,
    pub row: u64,
    pub column: u64,
}

/// Default slicing from the low bits up: column, row, bank, rank, channel.
/// A contiguous range therefore fills whole rows of one bank before moving
/// on, which keeps one k-mer's increments in as few rows as possible.
pub fn address_map(addr: u64, cfg: &SimConfig) -> Result<DramCoord, SimError> {
    if addr >= cfg.capacity() {
        return Err(SimError::UnmappedAddress { addr });
    }
    let mut rest = addr;
    let mut take = |n: u64| {
        let v = rest % n;
        rest /= n;
        v
    };
    Ok(DramCoord {
        column: take(cfg.row_bytes),
        row: take(cfg.rows),
        bank: take(cfg.banks),
        rank: take(cfg.ranks),
        channel: take(cfg.channels),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Model,
    Bases,
    Increments,
}

/// Placement of the three data regions, each starting at a bank boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryLayout {
    starts: [u64; 3],
    lens: [u64; 3],
}

impl MemoryLayout {
    pub fn new(model: u64, bases: u64, increments: u64, cfg: &SimConfig) -> Result<Self, SimError> {
        let span = cfg.bank_span();
        let lens = [model, bases, increments];
        let mut starts = [0; 3];
        let mut at = 0;
        for (s, &len) in starts.iter_mut().zip(&lens) {
            *s = at;
            at += len.max(1).div_ceil(span) * span;
        }
        if at > cfg.capacity() {
            return Err(SimError::UnmappedAddress { addr: at - 1 });
        }
        Ok(Self { starts, lens })
    }

    pub fn address(&self, region: Region, offset: u64) -> Result<u64, SimError> {
        let i = region as usize;
        if offset >= self.lens[i] {
            return Err(SimError::OffsetOutOfRange {
                offset,
                len: self.lens[i],
            });
        }
        Ok(self.starts[i] + offset)
    }
}

/// Set-associative cache with LRU replacement within each set.
#[derive(Debug, Clone)]
pub struct SetAssocCache {
    ways: usize,
    sets: Vec<Vec<u64>>,
}

impl SetAssocCache {
    pub fn new(entries: usize, ways: usize) -> Self {
        let sets = (entries / ways).max(1);
        Self {
            ways,
            sets: vec![Vec::with_capacity(ways); sets],
        }
    }

    /// Looks up `key`, inserting it on a miss. Returns whether it hit.
    pub fn access(&mut self, key: u64) -> bool {
        let n = self.sets.len() as u64;
        let set = &mut self.sets[(key % n) as usize];
        if let Some(i) = set.iter().position(|&k| k == key) {
            let k = set.remove(i);
            set.push(k);
            return true;
        }
        if set.len() == self.ways {
            set.remove(0);
        }
        set.push(key);
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowOutcome {
    Closed,
    Hit,
    Conflict,
}

/// Row-buffer state of every bank and the busy time of every channel.
#[derive(Debug, Clone)]
pub struct Dram {
    cfg: SimConfig,
    open: Vec<Option<u64>>,
    busy: Vec<u64>,
    pub row_hits: u64,
    pub row_misses: u64,
    pub accesses: u64,
    pub latency: u64,
}

impl Dram {
    pub fn new(cfg: &SimConfig) -> Self {
        Self {
            cfg: cfg.clone(),
            open: vec![None; (cfg.channels * cfg.ranks * cfg.banks) as usize],
            busy: vec![0; cfg.channels as usize],
            row_hits: 0,
            row_misses: 0,
            accesses: 0,
            latency: 0,
        }
    }

    /// Latency of an access by row state; see [`Dram::access`].
    pub fn latency_of(&self, outcome: RowOutcome) -> u64 {
        let c = &self.cfg;
        match outcome {
            RowOutcome::Hit => c.t_cas + c.burst_cycles,
            RowOutcome::Closed => c.t_rcd + c.t_cas + c.burst_cycles,
            RowOutcome::Conflict => c.t_rp + c.t_rcd + c.t_cas + c.burst_cycles,
        }
    }

    /// One 64-byte transfer. Returns its latency. The channel is occupied for
    /// the full latency when a row is activated, for the burst alone on a
    /// row hit, and for `t_RP` more when the row is closed afterwards.
    /// `keep_open` is the dynamic policy's "same k-mer pending" signal.
    pub fn access(&mut self, addr: u64, keep_open: bool) -> Result<u64, SimError> {
        let at = address_map(addr, &self.cfg)?;
        let bank = ((at.channel * self.cfg.ranks + at.rank) * self.cfg.banks + at.bank) as usize;
        let outcome = match self.open[bank] {
            None => RowOutcome::Closed,
            Some(r) if r == at.row => RowOutcome::Hit,
            Some(_) => RowOutcome::Conflict,
        };
        let latency = self.latency_of(outcome);
        let mut occupancy = if outcome == RowOutcome::Hit {
            self.row_hits += 1;
            self.cfg.burst_cycles
        } else {
            self.row_misses += 1;
            latency
        };
        let stay = match self.cfg.page_policy {
            PagePolicy::Close => false,
            PagePolicy::Open => true,
            PagePolicy::Dynamic => keep_open,
        };
        if stay {
            self.open[bank] = Some(at.row);
        } else {
            self.open[bank] = None;
            occupancy += self.cfg.t_rp;
        }
        self.busy[at.channel as usize] += occupancy;
        self.accesses += 1;
        self.latency += latency;
        Ok(latency)
    }

    pub fn cycles(&self) -> u64 {
        self.busy.iter().copied().max().unwrap_or(0)
    }
}

/// Latency of one access against a single bank in the given row state.
pub fn dram_access(dram: &mut Dram, addr: u64, same_kmer_pending: bool) -> Result<u64, SimError> {
    dram.access(addr, same_kmer_pending)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct SimStats {
    pub requests: u64,
    pub cycles: u64,
    pub base_hits: u64,
    pub base_misses: u64,
    /// Index-cache outcomes per request: a request hits when its whole node
    /// path is cached.
    pub index_hits: u64,
    pub index_misses: u64,
    pub index_node_hits: u64,
    pub index_node_misses: u64,
    pub row_hits: u64,
    pub row_misses: u64,
    pub dram_accesses: u64,
    pub bytes_transferred: u64,
    pub latency_cycles: u64,
    pub bandwidth_utilization: f64,
    pub fallback_scanned: u64,
}

impl SimStats {
    pub fn row_hit_rate(&self) -> f64 {
        let total = self.row_hits + self.row_misses;
        if total == 0 {
            0.0
        } else {
            self.row_hits as f64 / total as f64
        }
    }

    pub fn base_hit_rate(&self) -> f64 {
        let total = self.base_hits + self.base_misses;
        if total == 0 {
            0.0
        } else {
            self.base_hits as f64 / total as f64
        }
    }
}

/// Fraction of peak transfer capacity used: bytes moved over
/// `channels * 64 / burst` bytes per cycle for the elapsed cycles.
pub fn bandwidth_utilization(stats: &SimStats, cfg: &SimConfig) -> Result<f64, SimError> {
    if stats.cycles == 0 {
        return Err(SimError::DivisionByZeroCycles);
    }
    let peak = cfg.channels as f64 * LINE_BYTES as f64 / cfg.burst_cycles as f64;
    Ok(stats.bytes_transferred as f64 / (peak * stats.cycles as f64))
}

pub fn write_stats_csv<W: std::io::Write>(out: W, rows: &[SimStats]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn schedule_fr_fcfs(queue: &[SearchRequest]) -> Vec<usize> {
    (0..queue.len()).collect()
}

/// Stage 1 groups requests by k-mer (ties by pos) for base lookups; stage 2
/// orders all of them by pos (ties by k-mer) for index inference.
pub fn schedule_two_stage(
    queue: &[SearchRequest],
    capacity: usize,
) -> Result<(Vec<usize>, Vec<usize>), SimError> {
    if queue.len() > capacity {
        return Err(SimError::QueueOverflow {
            len: queue.len(),
            capacity,
        });
    }
    let mut stage1: Vec<usize> = (0..queue.len()).collect();
    stage1.sort_by_key(|&i| (queue[i].kmer.0, queue[i].pos));
    let mut stage2: Vec<usize> = (0..queue.len()).collect();
    stage2.sort_by_key(|&i| (queue[i].pos, queue[i].kmer.0));
    Ok((stage1, stage2))
}

/// An index node as seen by the memory system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeRef {
    pub id: u64,
    pub offset: u64,
    pub bytes: u32,
}

/// Memory traffic of one request after its base is known.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Probe {
    pub nodes: Vec<NodeRef>,
    /// Byte offsets of increment lines read, in order.
    pub increment_lines: Vec<u64>,
    pub scanned: u64,
}

/// Supplies addresses and traffic for requests.
pub trait Workload {
    fn layout(&self, cfg: &SimConfig) -> Result<MemoryLayout, SimError>;
    fn base_offset(&self, kmer: KmerId) -> u64;
    fn probe(&self, req: &SearchRequest) -> Probe;
}

fn lines_of_entries(first: usize, last: usize, width: u64, base: u64, out: &mut Vec<u64>) {
    let lo = (base + first as u64 * width) / LINE_BYTES;
    let hi = (base + last as u64 * width) / LINE_BYTES;
    for line in lo..=hi {
        if out.last() != Some(&(line * LINE_BYTES)) {
            out.push(line * LINE_BYTES);
        }
    }
}

/// Traffic derived from a real table and an optional trained index.
/// Modeled k-mers walk their node path, read the verification pair and any
/// fallback scan; the rest binary search their increments.
pub struct TableWorkload<'a, T> {
    table: &'a ExmaTable,
    model: Option<&'a MtlIndex<T>>,
    width: u64,
    nodes: BTreeMap<NodeKey, (u64, u32)>,
    ids: BTreeMap<NodeKey, u64>,
    model_bytes: u64,
}

impl<'a, T: Float> TableWorkload<'a, T> {
    pub fn new(table: &'a ExmaTable, model: Option<&'a MtlIndex<T>>) -> Self {
        let nodes = model.map(|m| m.node_layout()).unwrap_or_default();
        let ids = nodes
            .keys()
            .enumerate()
            .map(|(i, &k)| (k, i as u64))
            .collect();
        let model_bytes = model.map_or(0, |m| m.to_blob().len() as u64);
        Self {
            table,
            model,
            width: entry_width_for(table.len() as u64) as u64,
            nodes,
            ids,
            model_bytes,
        }
    }
}

impl<T: Float> Workload for TableWorkload<'_, T> {
    fn layout(&self, cfg: &SimConfig) -> Result<MemoryLayout, SimError> {
        MemoryLayout::new(
            self.model_bytes,
            self.table.dense_len() as u64 * self.width,
            self.table.all_increments().len() as u64 * self.width,
            cfg,
        )
    }

    fn base_offset(&self, kmer: KmerId) -> u64 {
        kmer.index() as u64 * self.width
    }

    fn probe(&self, req: &SearchRequest) -> Probe {
        let t = self.table;
        let f = t.freq(req.kmer);
        let mut probe = Probe::default();
        if f == 0 {
            return probe;
        }
        let base = t.offset(req.kmer) as u64 * self.width;
        let pos = req.pos;
        let model = self
            .model
            .and_then(|m| m.node_path(t, req.kmer, pos).map(|p| (m, p)));
        match model {
            Some((m, path)) => {
                probe.nodes = path
                    .iter()
                    .map(|k| {
                        let (offset, bytes) = self.nodes[k];
                        NodeRef {
                            id: self.ids[k],
                            offset,
                            bytes,
                        }
                    })
                    .collect();
                let out = rank_with_index(m, t, req.kmer, pos, false);
                let p = out.predicted.unwrap_or(out.rank);
                let lines = &mut probe.increment_lines;
                lines_of_entries(p.saturating_sub(1), p.min(f - 1), self.width, base, lines);
                if out.rank != p {
                    let (lo, hi) = if out.rank < p {
                        (out.rank.saturating_sub(1), p.saturating_sub(1))
                    } else {
                        (p, out.rank.min(f - 1))
                    };
                    let mut scan = Vec::new();
                    lines_of_entries(lo, hi, self.width, base, &mut scan);
                    if out.rank < p {
                        scan.reverse();
                    }
                    for l in scan {
                        if !lines.contains(&l) {
                            lines.push(l);
                        }
                    }
                }
                probe.scanned = out.scanned as u64;
            }
            None => {
                let incr = t.increments(req.kmer);
                let (mut lo, mut hi) = (0, f);
                while lo < hi {
                    let mid = lo + (hi - lo) / 2;
                    lines_of_entries(mid, mid, self.width, base, &mut probe.increment_lines);
                    if incr[mid] < pos {
                        lo = mid + 1;
                    } else {
                        hi = mid;
                    }
                }
            }
        }
        probe
    }
}

/// Workload with an explicit node path per request position and dense
/// 4-byte bases, used to replay hand-built scenarios.
#[derive(Debug, Clone, Default)]
pub struct SyntheticWorkload {
    pub paths: BTreeMap<usize, Vec<NodeRef>>,
}

impl Workload for SyntheticWorkload {
    fn layout(&self, cfg: &SimConfig) -> Result<MemoryLayout, SimError> {
        let model = self
            .paths
            .values()
            .flatten()
            .map(|n| n.offset + n.bytes as u64)
            .max()
            .unwrap_or(0);
        MemoryLayout::new(model, cfg.bank_span(), cfg.bank_span(), cfg)
    }

    fn base_offset(&self, kmer: KmerId) -> u64 {
        kmer.index() as u64 * 4
    }

    fn probe(&self, req: &SearchRequest) -> Probe {
        Probe {
            nodes: self.paths.get(&req.pos).cloned().unwrap_or_default(),
            ..Probe::default()
        }
    }
}

/// The four-request example: bases of AAAA/AAAC share a line, as do those of
/// TTTG/TTTT; positions 1 and 29 route through nodes m0, m1, m3 and
/// positions 99 and 998 through m0, m2, m18. The base cache holds one line
/// and the index cache three nodes.
pub fn golden_scenario(scheduler: Scheduler) -> (Vec<SearchRequest>, SyntheticWorkload, SimConfig) {
    let req = |s: &str, pos| SearchRequest {
        kmer: KmerId::parse(s).expect("valid k-mer"),
        pos,
    };
    let requests = vec![
        req("TTTT", 998),
        req("AAAA", 29),
        req("TTTG", 1),
        req("AAAC", 99),
    ];
    let node = |id: u64| NodeRef {
        id,
        offset: id * LINE_BYTES,
        bytes: LINE_BYTES as u32,
    };
    let left = vec![node(0), node(1), node(3)];
    let right = vec![node(0), node(2), node(18)];
    let paths = BTreeMap::from([
        (1, left.clone()),
        (29, left),
        (99, right.clone()),
        (998, right),
    ]);
    let cfg = SimConfig {
        base_cache_bytes: LINE_BYTES,
        base_cache_ways: 1,
        index_cache_entries: 3,
        index_cache_ways: 3,
        scheduler,
        ..SimConfig::default()
    };
    (requests, SyntheticWorkload { paths }, cfg)
}

/// For each position of `order`, whether a later request shares its k-mer.
fn same_kmer_later(order: &[usize], requests: &[SearchRequest]) -> Vec<bool> {
    let mut seen = HashSet::new();
    let mut out = vec![false; order.len()];
    for (i, &r) in order.iter().enumerate().rev() {
        out[i] = !seen.insert(requests[r].kmer);
    }
    out
}

/// Runs a batch through the pipeline: the queue fills up to capacity, base
/// lookups run in stage-1 order, then node-path inference and increment
/// reads run in stage-2 order.
pub fn simulate_batch<W: Workload>(
    requests: &[SearchRequest],
    workload: &W,
    cfg: &SimConfig,
) -> Result<SimStats, SimError> {
    cfg.validate()?;
    let layout = workload.layout(cfg)?;
    let mut base_cache = SetAssocCache::new(
        (cfg.base_cache_bytes / LINE_BYTES) as usize,
        cfg.base_cache_ways,
    );
    let mut index_cache = SetAssocCache::new(cfg.index_cache_entries, cfg.index_cache_ways);
    let mut dram = Dram::new(cfg);
    let mut stats = SimStats {
        requests: requests.len() as u64,
        ..SimStats::default()
    };

    for queue in requests.chunks(cfg.queue_capacity) {
        let (stage1, stage2) = match cfg.scheduler {
            Scheduler::FrFcfs => (schedule_fr_fcfs(queue), schedule_fr_fcfs(queue)),
            Scheduler::TwoStage => schedule_two_stage(queue, cfg.queue_capacity)?,
        };

        let pending = same_kmer_later(&stage1, queue);
        for (i, &r) in stage1.iter().enumerate() {
            let offset = workload.base_offset(queue[r].kmer);
            let line = layout.address(Region::Bases, offset)? / LINE_BYTES;
            if base_cache.access(line) {
                stats.base_hits += 1;
            } else {
                stats.base_misses += 1;
                dram.access(line * LINE_BYTES, pending[i])?;
            }
        }

        let pending = same_kmer_later(&stage2, queue);
        for (i, &r) in stage2.iter().enumerate() {
            let probe = workload.probe(&queue[r]);
            let mut all_hit = true;
            for node in &probe.nodes {
                let first = node.offset / LINE_BYTES;
                let last = (node.offset + node.bytes.max(1) as u64 - 1) / LINE_BYTES;
                let hit = match cfg.index_cache_unit {
                    IndexCacheUnit::Node => index_cache.access(node.id),
                    IndexCacheUnit::Line => (first..=last)
                        .map(|l| index_cache.access(l))
                        .fold(true, |a, b| a & b),
                };
                if hit {
                    stats.index_node_hits += 1;
                    continue;
                }
                all_hit = false;
                stats.index_node_misses += 1;
                for line in first..=last {
                    let addr = layout.address(Region::Model, line * LINE_BYTES)?;
                    dram.access(addr, true)?;
                }
            }
            if !probe.nodes.is_empty() {
                if all_hit {
                    stats.index_hits += 1;
                } else {
                    stats.index_misses += 1;
                }
            }
            let n = probe.increment_lines.len();
            for (j, &offset) in probe.increment_lines.iter().enumerate() {
                let addr = layout.address(Region::Increments, offset)?;
                dram.access(addr, j + 1 < n || pending[i])?;
            }
            stats.fallback_scanned += probe.scanned;
        }
    }

    stats.cycles = dram.cycles();
    stats.row_hits = dram.row_hits;
    stats.row_misses = dram.row_misses;
    stats.dram_accesses = dram.accesses;
    stats.bytes_transferred = dram.accesses * LINE_BYTES;
    stats.latency_cycles = dram.latency;
    stats.bandwidth_utilization = bandwidth_utilization(&stats, cfg).unwrap_or(0.0);
    Ok(stats)
}
