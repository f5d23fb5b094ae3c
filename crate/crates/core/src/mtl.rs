//! Multi-task learned index over increment lists.
//!
//! Modeled k-mers share one hierarchy. Routing nodes are small sigmoid MLPs
//! over `(k-mer id, pos)` that estimate the normalized rank and pick a child
//! RMI style; leaves are linear in `pos`. A k-mer of depth class `d` walks
//! routing levels `0..d` and ends at a depth-`d` leaf, so shallower classes
//! reuse the trunk of deeper ones.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::exma::{ExmaTable, KmerId, OccRanker};

pub const ROUTING_HIDDEN: usize = 10;
pub const ROUTING_PARAMS: usize = 4 * ROUTING_HIDDEN + 1;
pub const LEAF_PARAMS: usize = 2;
pub const DEFAULT_THRESHOLD: usize = 256;
pub const DEFAULT_BRANCHING: usize = 16;
pub const BLOB_VERSION: u8 = 1;

const TAG_ROUTING: u8 = 0;
const TAG_LEAF: u8 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum MtlError {
    #[error("error statistics need a nonempty sample")]
    EmptySample,
    #[error("partition at level {level} slot {slot} is empty")]
    DegenerateGroup { level: u8, slot: u32 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed model blob: {0}")]
    Blob(String),
}

/// Increment-count thresholds that decide whether and how deep a k-mer is
/// modeled. `bounds[i]` is the largest frequency of depth class `i + 1`; any
/// frequency above the last bound gets the deepest class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepthTable {
    pub threshold: usize,
    pub bounds: Vec<usize>,
}

impl Default for DepthTable {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            bounds: vec![1 << 16, 1 << 20],
        }
    }
}

impl DepthTable {
    pub fn max_depth(&self) -> u8 {
        self.bounds.len() as u8 + 1
    }

    pub fn depth_of(&self, freq: usize) -> Option<u8> {
        (freq > self.threshold).then(|| 1 + self.bounds.iter().filter(|&&b| freq > b).count() as u8)
    }

    fn validate(&self) -> Result<(), MtlError> {
        if self.bounds.windows(2).any(|w| w[0] >= w[1])
            || self.bounds.first().is_some_and(|&b| b < self.threshold)
        {
            return Err(MtlError::InvalidConfig("depth bounds must increase".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GroupClass {
    Unmodeled,
    Depth(u8),
}

impl fmt::Display for GroupClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupClass::Unmodeled => write!(f, "unmodeled"),
            GroupClass::Depth(d) => write!(f, "depth-{d}"),
        }
    }
}

/// Depth class of every dense k-mer of a table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grouping {
    depths: Vec<u8>,
}

pub fn group_kmers(t: &ExmaTable, table: &DepthTable) -> Grouping {
    Grouping {
        depths: t
            .frequencies()
            .iter()
            .map(|&f| table.depth_of(f).unwrap_or(0))
            .collect(),
    }
}

impl Grouping {
    pub fn class(&self, kmer: KmerId) -> GroupClass {
        match self.depths.get(kmer.index()).copied().unwrap_or(0) {
            0 => GroupClass::Unmodeled,
            d => GroupClass::Depth(d),
        }
    }

    pub fn modeled(&self) -> impl Iterator<Item = (KmerId, u8)> + '_ {
        self.depths
            .iter()
            .enumerate()
            .filter(|(_, &d)| d > 0)
            .map(|(i, &d)| (KmerId(i as u64), d))
    }

    pub fn class_sizes(&self) -> BTreeMap<GroupClass, usize> {
        let mut out = BTreeMap::new();
        for i in 0..self.depths.len() {
            *out.entry(self.class(KmerId(i as u64))).or_insert(0) += 1;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MtlConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub fine_tune_rounds: usize,
    pub fine_tune_epochs: usize,
    pub branching: usize,
    /// When set, overrides `branching` so that a depth-1 hierarchy holds
    /// roughly this many parameters per modeled increment.
    pub params_per_increment: Option<f64>,
    pub depth_table: DepthTable,
    pub seed: u64,
    /// Task weights indexed by dense k-mer id; missing entries weigh 1.
    pub beta: Vec<f64>,
    pub max_samples_per_node: usize,
}

impl Default for MtlConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            epochs: 400,
            fine_tune_rounds: 1,
            fine_tune_epochs: 100,
            branching: DEFAULT_BRANCHING,
            params_per_increment: None,
            depth_table: DepthTable::default(),
            seed: 0,
            beta: Vec::new(),
            max_samples_per_node: 8192,
        }
    }
}

impl MtlConfig {
    pub fn resolve_branching(&self, modeled_increments: usize) -> usize {
        match self.params_per_increment {
            Some(ratio) => {
                let budget = ratio * modeled_increments as f64 - ROUTING_PARAMS as f64;
                ((budget / LEAF_PARAMS as f64).round() as usize).max(2)
            }
            None => self.branching,
        }
    }
}

fn sigmoid<T: Float>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

fn cast<T: Float>(v: f64) -> T {
    T::from(v).expect("finite value")
}

/// One hidden layer of sigmoid units over two inputs, sigmoid output.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingNode<T> {
    /// `w1` (hidden x 2, row major), `b1`, `w2`, `b2`.
    pub params: [T; ROUTING_PARAMS],
}

const B1: usize = 2 * ROUTING_HIDDEN;
const W2: usize = 3 * ROUTING_HIDDEN;
const B2: usize = 4 * ROUTING_HIDDEN;

impl<T: Float> RoutingNode<T> {
    fn init(rng: &mut ChaCha8Rng) -> Self {
        let mut params = [T::zero(); ROUTING_PARAMS];
        let l1 = (6.0f64 / (2 + ROUTING_HIDDEN) as f64).sqrt();
        let l2 = (6.0f64 / (ROUTING_HIDDEN + 1) as f64).sqrt();
        for p in &mut params[..B1] {
            *p = cast(rng.gen_range(-l1..l1));
        }
        for p in &mut params[W2..B2] {
            *p = cast(rng.gen_range(-l2..l2));
        }
        Self { params }
    }

    fn hidden(&self, x0: T, x1: T) -> [T; ROUTING_HIDDEN] {
        let p = &self.params;
        std::array::from_fn(|k| sigmoid(p[2 * k] * x0 + p[2 * k + 1] * x1 + p[B1 + k]))
    }

    pub fn forward(&self, x0: T, x1: T) -> T {
        let h = self.hidden(x0, x1);
        let z = h
            .iter()
            .zip(&self.params[W2..B2])
            .fold(self.params[B2], |acc, (&h, &w)| acc + h * w);
        sigmoid(z)
    }

    /// Full-batch Adam on weighted binary cross-entropy against soft targets.
    fn fit(&mut self, samples: &[&Sample], epochs: usize, lr: f64) {
        let total: f64 = samples.iter().map(|s| s.weight).sum();
        if samples.is_empty() || total <= 0.0 {
            return;
        }
        let data: Vec<(T, T, T, T)> = samples
            .iter()
            .map(|s| (cast(s.kmer), cast(s.pos), cast(s.y), cast(s.weight / total)))
            .collect();
        let (beta1, beta2, eps) = (0.9f64, 0.999f64, 1e-8f64);
        let mut m = [T::zero(); ROUTING_PARAMS];
        let mut v = [T::zero(); ROUTING_PARAMS];
        let lr_t: T = cast(lr);
        for epoch in 1..=epochs {
            let mut grad = [T::zero(); ROUTING_PARAMS];
            for &(x0, x1, y, w) in &data {
                let h = self.hidden(x0, x1);
                let z = h
                    .iter()
                    .zip(&self.params[W2..B2])
                    .fold(self.params[B2], |acc, (&h, &w)| acc + h * w);
                let g = w * (sigmoid(z) - y);
                grad[B2] = grad[B2] + g;
                for k in 0..ROUTING_HIDDEN {
                    grad[W2 + k] = grad[W2 + k] + g * h[k];
                    let d = g * self.params[W2 + k] * h[k] * (T::one() - h[k]);
                    grad[2 * k] = grad[2 * k] + d * x0;
                    grad[2 * k + 1] = grad[2 * k + 1] + d * x1;
                    grad[B1 + k] = grad[B1 + k] + d;
                }
            }
            let c1: T = cast(1.0 - beta1.powi(epoch as i32));
            let c2: T = cast(1.0 - beta2.powi(epoch as i32));
            for i in 0..ROUTING_PARAMS {
                m[i] = cast::<T>(beta1) * m[i] + cast::<T>(1.0 - beta1) * grad[i];
                v[i] = cast::<T>(beta2) * v[i] + cast::<T>(1.0 - beta2) * grad[i] * grad[i];
                let step = lr_t * (m[i] / c1) / ((v[i] / c2).sqrt() + cast(eps));
                self.params[i] = self.params[i] - step;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leaf<T> {
    pub w: T,
    pub b: T,
}

impl<T: Float> Leaf<T> {
    pub fn eval(&self, pos: T) -> T {
        (self.w * pos + self.b).max(T::zero()).min(T::one())
    }
}

#[derive(Default)]
struct LeastSquares {
    sw: f64,
    sx: f64,
    sy: f64,
    sxx: f64,
    sxy: f64,
}

impl LeastSquares {
    fn add(&mut self, x: f64, y: f64, w: f64) {
        self.sw += w;
        self.sx += w * x;
        self.sy += w * y;
        self.sxx += w * x * x;
        self.sxy += w * x * y;
    }

    fn solve(&self) -> (f64, f64) {
        if self.sw <= 0.0 {
            return (0.0, 0.0);
        }
        let var = self.sxx * self.sw - self.sx * self.sx;
        if var.abs() <= 1e-18 * self.sw * self.sw {
            return (0.0, self.sy / self.sw);
        }
        let w = (self.sxy * self.sw - self.sx * self.sy) / var;
        (w, (self.sy - w * self.sx) / self.sw)
    }
}

/// Training point: one increment of one modeled k-mer.
struct Sample {
    kmer: f64,
    pos: f64,
    y: f64,
    weight: f64,
    depth: u8,
}

fn normalizers(t: &ExmaTable) -> (f64, f64) {
    let ids = ((1u64 << (2 * t.step())) - 1).max(1) as f64;
    (ids, t.len().max(1) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MtlIndex<T> {
    branching: usize,
    depth_table: DepthTable,
    nodes: BTreeMap<(u8, u32), RoutingNode<T>>,
    leaves: BTreeMap<(u8, u32), Leaf<T>>,
}

type Key = (u8, u32);

fn nearest<V>(map: &BTreeMap<Key, V>, level: u8, slot: u32) -> Option<(&Key, &V)> {
    let after = map.range((level, slot)..=(level, u32::MAX)).next();
    let before = map.range((level, 0)..(level, slot)).next_back();
    match (before, after) {
        (Some(b), Some(a)) if a.0 .1 - slot < slot - b.0 .1 => Some(a),
        (Some(b), _) => Some(b),
        (None, a) => a,
    }
}

/// A stored node of the hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeKey {
    Routing { level: u8, slot: u32 },
    Leaf { depth: u8, slot: u32 },
}

const NODE_HEADER_BYTES: usize = 11;

impl<T: Float> MtlIndex<T> {
    pub fn branching(&self) -> usize {
        self.branching
    }

    pub fn depth_table(&self) -> &DepthTable {
        &self.depth_table
    }

    pub fn routing_nodes(&self) -> &BTreeMap<(u8, u32), RoutingNode<T>> {
        &self.nodes
    }

    pub fn leaves(&self) -> &BTreeMap<(u8, u32), Leaf<T>> {
        &self.leaves
    }

    pub fn param_count(&self) -> usize {
        self.nodes.len() * ROUTING_PARAMS + self.leaves.len() * LEAF_PARAMS
    }

    fn node(&self, level: u8, slot: u32) -> Option<(&Key, &RoutingNode<T>)> {
        self.nodes.get_key_value(&(level, slot)).or_else(|| {
            log::debug!("no routing node at level {level} slot {slot}, using nearest");
            nearest(&self.nodes, level, slot)
        })
    }

    fn leaf(&self, depth: u8, slot: u32) -> Option<(&Key, &Leaf<T>)> {
        self.leaves
            .get_key_value(&(depth, slot))
            .or_else(|| nearest(&self.leaves, depth, slot))
    }

    /// Child slot chosen by the node at `(level, slot)`.
    fn route_step(&self, level: u8, slot: u32, x0: T, x1: T) -> u32 {
        let b = self.branching as u64;
        let o = self
            .node(level, slot)
            .map_or(0.5, |(_, n)| n.forward(x0, x1).to_f64().unwrap_or(0.5));
        let width = b.pow(level as u32 + 1);
        let lo = slot as u64 * b;
        let s = ((o * width as f64).floor().max(0.0) as u64).clamp(lo, lo + b - 1);
        s as u32
    }

    /// Leaf slot reached by a sample of the given depth.
    fn route(&self, depth: u8, x0: T, x1: T) -> u32 {
        (0..depth).fold(0, |slot, level| self.route_step(level, slot, x0, x1))
    }

    /// Normalized rank estimate, or `None` for unmodeled k-mers.
    pub fn cdf_estimate(&self, t: &ExmaTable, kmer: KmerId, pos: usize) -> Option<f64> {
        let depth = self.depth_table.depth_of(t.freq(kmer))?;
        let (ids, n) = normalizers(t);
        let x0: T = cast(kmer.0 as f64 / ids);
        let x1: T = cast(pos as f64 / n);
        let slot = self.route(depth, x0, x1);
        self.leaf(depth, slot)?.1.eval(x1).to_f64()
    }

    /// Stored nodes evaluated for a query, root first and leaf last.
    pub fn node_path(&self, t: &ExmaTable, kmer: KmerId, pos: usize) -> Option<Vec<NodeKey>> {
        let depth = self.depth_table.depth_of(t.freq(kmer))?;
        let (ids, n) = normalizers(t);
        let x0: T = cast(kmer.0 as f64 / ids);
        let x1: T = cast(pos as f64 / n);
        let mut path = Vec::with_capacity(depth as usize + 1);
        let mut slot = 0;
        for level in 0..depth {
            if let Some((&(level, slot), _)) = self.node(level, slot) {
                path.push(NodeKey::Routing { level, slot });
            }
            slot = self.route_step(level, slot, x0, x1);
        }
        let (&(depth, slot), _) = self.leaf(depth, slot)?;
        path.push(NodeKey::Leaf { depth, slot });
        Some(path)
    }

    /// Byte offset and length of every node record inside [`Self::to_blob`].
    pub fn node_layout(&self) -> BTreeMap<NodeKey, (u64, u32)> {
        let mut at = (1 + 4 + 8 + 1 + 8 * self.depth_table.bounds.len() + 4) as u64;
        let mut out = BTreeMap::new();
        let records = self
            .nodes
            .keys()
            .map(|&(level, slot)| (NodeKey::Routing { level, slot }, ROUTING_PARAMS))
            .chain(
                self.leaves
                    .keys()
                    .map(|&(depth, slot)| (NodeKey::Leaf { depth, slot }, LEAF_PARAMS)),
            );
        for (key, params) in records {
            let len = (NODE_HEADER_BYTES + 4 * params) as u32;
            out.insert(key, (at, len));
            at += len as u64;
        }
        out
    }

    /// `p = clamp(round(F * f), 0, f)` for modeled k-mers.
    pub fn predict(&self, t: &ExmaTable, kmer: KmerId, pos: usize) -> Option<usize> {
        self.cdf_estimate(t, kmer, pos)
            .map(|f| scale_prediction(f, t.freq(kmer)))
    }

    /// Parameters the same coverage would need if every modeled k-mer owned a
    /// private copy of the nodes and leaves it actually uses.
    pub fn independent_equivalent_params(&self, t: &ExmaTable) -> usize {
        let grouping = group_kmers(t, &self.depth_table);
        let (ids, n) = normalizers(t);
        let mut total = 0;
        for (kmer, depth) in grouping.modeled() {
            let x0: T = cast(kmer.0 as f64 / ids);
            let mut nodes = std::collections::BTreeSet::new();
            let mut leaves = std::collections::BTreeSet::new();
            for &pos in t.increments(kmer) {
                let x1: T = cast(pos as f64 / n);
                let mut slot = 0;
                for level in 0..depth {
                    nodes.insert((level, slot));
                    slot = self.route_step(level, slot, x0, x1);
                }
                leaves.insert(slot);
            }
            total += nodes.len() * ROUTING_PARAMS + leaves.len() * LEAF_PARAMS;
        }
        total
    }

    /// Serializes with parameters as little-endian f32.
    pub fn to_blob(&self) -> Vec<u8> {
        let mut out = vec![BLOB_VERSION];
        out.extend_from_slice(&(self.branching as u32).to_le_bytes());
        out.extend_from_slice(&(self.depth_table.threshold as u64).to_le_bytes());
        out.push(self.depth_table.bounds.len() as u8);
        for &b in &self.depth_table.bounds {
            out.extend_from_slice(&(b as u64).to_le_bytes());
        }
        out.extend_from_slice(&((self.nodes.len() + self.leaves.len()) as u32).to_le_bytes());
        let mut put = |tag: u8, level: u8, slot: u32, width: u8, params: &[T]| {
            out.extend_from_slice(&[tag, level]);
            out.extend_from_slice(&slot.to_le_bytes());
            out.push(width);
            out.extend_from_slice(&(params.len() as u32).to_le_bytes());
            for p in params {
                out.extend_from_slice(&p.to_f32().unwrap_or(f32::NAN).to_le_bytes());
            }
        };
        for (&(level, slot), node) in &self.nodes {
            put(TAG_ROUTING, level, slot, 2, &node.params);
        }
        for (&(depth, slot), leaf) in &self.leaves {
            put(TAG_LEAF, depth, slot, 1, &[leaf.w, leaf.b]);
        }
        out
    }

    pub fn from_blob(bytes: &[u8]) -> Result<Self, MtlError> {
        let mut r = Reader { bytes, at: 0 };
        let version = r.u8()?;
        if version != BLOB_VERSION {
            return Err(MtlError::Blob(format!("version {version}")));
        }
        let branching = r.u32()? as usize;
        let threshold = r.u64()? as usize;
        let bounds = (0..r.u8()?)
            .map(|_| r.u64().map(|v| v as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let depth_table = DepthTable { threshold, bounds };
        let count = r.u32()?;
        let mut nodes = BTreeMap::new();
        let mut leaves = BTreeMap::new();
        for _ in 0..count {
            let (tag, level, slot, width, len) = (r.u8()?, r.u8()?, r.u32()?, r.u8()?, r.u32()?);
            let params = (0..len)
                .map(|_| r.f32().map(|v| cast::<T>(v as f64)))
                .collect::<Result<Vec<T>, _>>()?;
            match (tag, width, params.len()) {
                (TAG_ROUTING, 2, ROUTING_PARAMS) => {
                    let params = params
                        .try_into()
                        .map_err(|_| MtlError::Blob("node".into()))?;
                    nodes.insert((level, slot), RoutingNode { params });
                }
                (TAG_LEAF, 1, LEAF_PARAMS) => {
                    leaves.insert(
                        (level, slot),
                        Leaf {
                            w: params[0],
                            b: params[1],
                        },
                    );
                }
                _ => return Err(MtlError::Blob(format!("node tag {tag} width {width}"))),
            }
        }
        if r.at != bytes.len() {
            return Err(MtlError::Blob("trailing bytes".into()));
        }
        if branching < 2 {
            return Err(MtlError::Blob("branching below 2".into()));
        }
        Ok(Self {
            branching,
            depth_table,
            nodes,
            leaves,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take<const W: usize>(&mut self) -> Result<[u8; W], MtlError> {
        let s = self
            .bytes
            .get(self.at..self.at + W)
            .ok_or_else(|| MtlError::Blob("truncated".into()))?;
        self.at += W;
        Ok(s.try_into().unwrap())
    }
    fn u8(&mut self) -> Result<u8, MtlError> {
        Ok(self.take::<1>()?[0])
    }
    fn u32(&mut self) -> Result<u32, MtlError> {
        Ok(u32::from_le_bytes(self.take()?))
    }
    fn u64(&mut self) -> Result<u64, MtlError> {
        Ok(u64::from_le_bytes(self.take()?))
    }
    fn f32(&mut self) -> Result<f32, MtlError> {
        Ok(f32::from_le_bytes(self.take()?))
    }
}

fn node_rng(seed: u64, level: u8, slot: u32) -> ChaCha8Rng {
    let key = ((level as u64) << 32) | slot as u64;
    ChaCha8Rng::seed_from_u64(seed ^ key.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

fn strided<'a>(samples: &[&'a Sample], cap: usize) -> Vec<&'a Sample> {
    let step = samples.len().div_ceil(cap.max(1)).max(1);
    samples.iter().step_by(step).copied().collect()
}

pub fn train_mtl<T: Float>(t: &ExmaTable, config: &MtlConfig) -> Result<MtlIndex<T>, MtlError> {
    config.depth_table.validate()?;
    let grouping = group_kmers(t, &config.depth_table);
    let modeled_increments: usize = grouping.modeled().map(|(k, _)| t.freq(k)).sum();
    let branching = config.resolve_branching(modeled_increments);
    if branching < 2 {
        return Err(MtlError::InvalidConfig("branching below 2".into()));
    }
    if (branching as u128).pow(config.depth_table.max_depth() as u32) > u32::MAX as u128 {
        return Err(MtlError::InvalidConfig(
            "leaf slots overflow 32 bits".into(),
        ));
    }

    let (ids, n) = normalizers(t);
    let mut samples = Vec::with_capacity(modeled_increments);
    for (kmer, depth) in grouping.modeled() {
        let f = t.freq(kmer);
        let beta = config.beta.get(kmer.index()).copied().unwrap_or(1.0);
        for (j, &pos) in t.increments(kmer).iter().enumerate() {
            samples.push(Sample {
                kmer: kmer.0 as f64 / ids,
                pos: pos as f64 / n,
                y: j as f64 / f as f64,
                weight: beta / f as f64,
                depth,
            });
        }
    }

    let mut index = MtlIndex {
        branching,
        depth_table: config.depth_table.clone(),
        nodes: BTreeMap::new(),
        leaves: BTreeMap::new(),
    };
    let max_depth = samples.iter().map(|s| s.depth).max().unwrap_or(0);

    // Level-by-level routing, each node trained on the samples routed to it.
    let mut slots = vec![0u32; samples.len()];
    for level in 0..max_depth {
        let mut parts: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, s) in samples.iter().enumerate() {
            if s.depth > level {
                parts.entry(slots[i]).or_default().push(i);
            }
        }
        for (&slot, members) in &parts {
            let refs: Vec<&Sample> = members.iter().map(|&i| &samples[i]).collect();
            let mut node = RoutingNode::init(&mut node_rng(config.seed, level, slot));
            node.fit(
                &strided(&refs, config.max_samples_per_node),
                config.epochs,
                config.learning_rate,
            );
            index.nodes.insert((level, slot), node);
        }
        for (i, s) in samples.iter().enumerate() {
            if s.depth > level {
                slots[i] = index.route_step(level, slots[i], cast(s.kmer), cast(s.pos));
            }
        }
    }
    fit_leaves(&mut index, &samples);

    for _ in 0..config.fine_tune_rounds {
        let mut parts: BTreeMap<(u8, u32), Vec<&Sample>> = BTreeMap::new();
        for s in &samples {
            let (x0, x1) = (cast(s.kmer), cast(s.pos));
            let mut slot = 0;
            for level in 0..s.depth {
                parts.entry((level, slot)).or_default().push(s);
                slot = index.route_step(level, slot, x0, x1);
            }
        }
        for (key, members) in parts {
            match index.nodes.get_mut(&key) {
                Some(node) => node.fit(
                    &strided(&members, config.max_samples_per_node),
                    config.fine_tune_epochs,
                    config.learning_rate,
                ),
                None => log::debug!(
                    "{}",
                    MtlError::DegenerateGroup {
                        level: key.0,
                        slot: key.1
                    }
                ),
            }
        }
        fit_leaves(&mut index, &samples);
    }
    Ok(index)
}

fn fit_leaves<T: Float>(index: &mut MtlIndex<T>, samples: &[Sample]) {
    let mut fits: BTreeMap<(u8, u32), LeastSquares> = BTreeMap::new();
    for s in samples {
        let slot = index.route(s.depth, cast(s.kmer), cast(s.pos));
        fits.entry((s.depth, slot))
            .or_default()
            .add(s.pos, s.y, s.weight);
    }
    index.leaves = fits
        .into_iter()
        .map(|(key, ls)| {
            let (w, b) = ls.solve();
            (
                key,
                Leaf {
                    w: cast(w),
                    b: cast(b),
                },
            )
        })
        .collect();
}

/// A source of normalized rank estimates for positions within a k-mer.
pub trait PositionModel {
    /// Estimate of `rank / freq` in `[0, 1]`, or `None` if the k-mer is not
    /// modeled.
    fn cdf(&self, t: &ExmaTable, kmer: KmerId, pos: usize) -> Option<f64>;
}

impl<T: Float> PositionModel for MtlIndex<T> {
    fn cdf(&self, t: &ExmaTable, kmer: KmerId, pos: usize) -> Option<f64> {
        self.cdf_estimate(t, kmer, pos)
    }
}

impl<M: PositionModel + ?Sized> PositionModel for &M {
    fn cdf(&self, t: &ExmaTable, kmer: KmerId, pos: usize) -> Option<f64> {
        (**self).cdf(t, kmer, pos)
    }
}

/// Predicts the same fraction for every k-mer and position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantPredictor(pub f64);

impl PositionModel for ConstantPredictor {
    fn cdf(&self, _t: &ExmaTable, _kmer: KmerId, _pos: usize) -> Option<f64> {
        Some(self.0)
    }
}

pub fn scale_prediction(cdf: f64, freq: usize) -> usize {
    let p = (cdf * freq as f64).round();
    if p.is_nan() || p <= 0.0 {
        0
    } else {
        (p as usize).min(freq)
    }
}

pub fn predict<M: PositionModel>(m: &M, t: &ExmaTable, kmer: KmerId, pos: usize) -> Option<usize> {
    m.cdf(t, kmer, pos)
        .map(|f| scale_prediction(f, t.freq(kmer)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankOutcome {
    pub rank: usize,
    /// `None` when the k-mer fell back to binary search.
    pub predicted: Option<usize>,
    pub error: usize,
    /// Increments read after the verification pair.
    pub scanned: usize,
}

fn is_rank(incr: &[usize], r: usize, pos: usize) -> bool {
    (r == 0 || incr[r - 1] < pos) && (r == incr.len() || incr[r] >= pos)
}

/// Exact rank of `pos` among `kmer`'s increments, starting from the model's
/// guess and correcting it by scanning toward the true rank.
pub fn rank_with_index<M: PositionModel>(
    m: &M,
    t: &ExmaTable,
    kmer: KmerId,
    pos: usize,
    galloping: bool,
) -> RankOutcome {
    let incr = t.increments(kmer);
    let Some(p) = predict(m, t, kmer, pos).filter(|_| !incr.is_empty()) else {
        return RankOutcome {
            rank: incr.partition_point(|&v| v < pos),
            predicted: None,
            error: 0,
            scanned: 0,
        };
    };
    if is_rank(incr, p, pos) {
        return RankOutcome {
            rank: p,
            predicted: Some(p),
            error: 0,
            scanned: 0,
        };
    }
    let down = p > 0 && incr[p - 1] >= pos;
    let (rank, scanned) = if galloping {
        gallop(incr, p, pos, down)
    } else if down {
        let mut r = p - 1;
        while !is_rank(incr, r, pos) {
            r -= 1;
        }
        (r, p - r)
    } else {
        let mut r = p + 1;
        while !is_rank(incr, r, pos) {
            r += 1;
        }
        (r, r - p)
    };
    RankOutcome {
        rank,
        predicted: Some(p),
        error: rank.abs_diff(p),
        scanned,
    }
}

/// Exponential probing away from `p`, then binary search in the bracket.
fn gallop(incr: &[usize], p: usize, pos: usize, down: bool) -> (usize, usize) {
    let mut step = 1;
    let mut probes = 0;
    let (lo, hi) = if down {
        let mut hi = p;
        loop {
            let lo = p.saturating_sub(step);
            probes += 1;
            if lo == 0 || incr[lo - 1] < pos {
                break (lo, hi);
            }
            hi = lo;
            step *= 2;
        }
    } else {
        let mut lo = p + 1;
        loop {
            let hi = (p + step).min(incr.len());
            probes += 1;
            if hi == incr.len() || incr[hi] >= pos {
                break (lo, hi);
            }
            lo = hi + 1;
            step *= 2;
        }
    };
    let r = lo + incr[lo..hi].partition_point(|&v| v < pos);
    let searched = (hi - lo + 1).next_power_of_two().trailing_zeros() as usize;
    (r, probes + searched)
}

/// [`OccRanker`] backed by a position model with verify-and-fallback.
#[derive(Debug, Clone, Copy)]
pub struct ModelRanker<M> {
    pub model: M,
    pub galloping: bool,
}

impl<M> ModelRanker<M> {
    pub fn new(model: M) -> Self {
        Self {
            model,
            galloping: false,
        }
    }
}

impl<M: PositionModel> OccRanker for ModelRanker<M> {
    fn rank(&self, table: &ExmaTable, kmer: KmerId, pos: usize) -> usize {
        rank_with_index(&self.model, table, kmer, pos, self.galloping).rank
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ErrorStats {
    pub count: usize,
    pub max: f64,
    pub min: f64,
    pub mean: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
}

impl ErrorStats {
    /// Percentiles interpolate linearly between order statistics.
    pub fn from_errors(errors: &[usize]) -> Result<Self, MtlError> {
        if errors.is_empty() {
            return Err(MtlError::EmptySample);
        }
        let mut sorted = errors.to_vec();
        sorted.sort_unstable();
        let q = |p: f64| {
            let at = p * (sorted.len() - 1) as f64;
            let (i, frac) = (at.floor() as usize, at.fract());
            let lo = sorted[i] as f64;
            let hi = sorted[(i + 1).min(sorted.len() - 1)] as f64;
            lo + (hi - lo) * frac
        };
        Ok(Self {
            count: sorted.len(),
            max: *sorted.last().unwrap() as f64,
            min: sorted[0] as f64,
            mean: sorted.iter().map(|&e| e as f64).sum::<f64>() / sorted.len() as f64,
            p25: q(0.25),
            p50: q(0.5),
            p75: q(0.75),
        })
    }
}

/// Prediction error statistics per depth class over the sampled queries the
/// model makes a prediction for.
pub fn error_stats<M: PositionModel>(
    m: &M,
    t: &ExmaTable,
    depth_table: &DepthTable,
    sample: &[(KmerId, usize)],
) -> Result<BTreeMap<GroupClass, ErrorStats>, MtlError> {
    if sample.is_empty() {
        return Err(MtlError::EmptySample);
    }
    let grouping = group_kmers(t, depth_table);
    let mut errors: BTreeMap<GroupClass, Vec<usize>> = BTreeMap::new();
    for &(kmer, pos) in sample {
        let outcome = rank_with_index(m, t, kmer, pos, false);
        if outcome.predicted.is_some() {
            errors
                .entry(grouping.class(kmer))
                .or_default()
                .push(outcome.error);
        }
    }
    if errors.is_empty() {
        return Err(MtlError::EmptySample);
    }
    errors
        .into_iter()
        .map(|(class, e)| ErrorStats::from_errors(&e).map(|s| (class, s)))
        .collect()
}

/// Per-k-mer two-level RMI trained with no sharing: a linear root over pos
/// picks one of `leaves_per_kmer` linear leaves.
#[derive(Debug, Clone, PartialEq)]
pub struct IndependentRmi {
    leaves_per_kmer: usize,
    models: BTreeMap<u64, (Leaf<f64>, Vec<Leaf<f64>>)>,
}

impl IndependentRmi {
    pub fn train(t: &ExmaTable, kmers: &[KmerId], leaves_per_kmer: usize) -> Self {
        let leaves_per_kmer = leaves_per_kmer.max(1);
        let (_, n) = normalizers(t);
        let mut models = BTreeMap::new();
        for &kmer in kmers {
            let incr = t.increments(kmer);
            if incr.is_empty() {
                continue;
            }
            let f = incr.len() as f64;
            let points: Vec<(f64, f64)> = incr
                .iter()
                .enumerate()
                .map(|(j, &p)| (p as f64 / n, j as f64 / f))
                .collect();
            let mut root_fit = LeastSquares::default();
            for &(x, y) in &points {
                root_fit.add(x, y, 1.0);
            }
            let (w, b) = root_fit.solve();
            let root = Leaf { w, b };
            let mut fits: Vec<Option<LeastSquares>> = (0..leaves_per_kmer).map(|_| None).collect();
            for &(x, y) in &points {
                let s = Self::slot(&root, x, leaves_per_kmer);
                fits[s]
                    .get_or_insert_with(LeastSquares::default)
                    .add(x, y, 1.0);
            }
            let fitted: Vec<Option<Leaf<f64>>> = fits
                .iter()
                .map(|f| {
                    f.as_ref().map(|ls| {
                        let (w, b) = ls.solve();
                        Leaf { w, b }
                    })
                })
                .collect();
            let leaves = (0..leaves_per_kmer)
                .map(|s| {
                    (0..leaves_per_kmer)
                        .flat_map(|d| [s.checked_sub(d), Some(s + d)])
                        .flatten()
                        .find_map(|i| fitted.get(i).copied().flatten())
                        .expect("at least one leaf has points")
                })
                .collect();
            models.insert(kmer.0, (root, leaves));
        }
        Self {
            leaves_per_kmer,
            models,
        }
    }

    fn slot(root: &Leaf<f64>, x: f64, leaves: usize) -> usize {
        ((root.eval(x) * leaves as f64).floor() as usize).min(leaves - 1)
    }

    pub fn param_count(&self) -> usize {
        self.models.len() * LEAF_PARAMS * (1 + self.leaves_per_kmer)
    }
}

impl PositionModel for IndependentRmi {
    fn cdf(&self, t: &ExmaTable, kmer: KmerId, pos: usize) -> Option<f64> {
        let (root, leaves) = self.models.get(&kmer.0)?;
        let x = pos as f64 / normalizers(t).1;
        Some(leaves[Self::slot(root, x, leaves.len())].eval(x))
    }
}
