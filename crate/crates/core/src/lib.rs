//! Exact-match DNA search with k-step FM-indexes, increment tables, a shared
//! learned rank model, CHAIN compression and a memory-system simulator.
//!
//! ```
//! use exma::{build_exma, build_suffix_array, encode_query, encode_reference, locate};
//! use exma::{exma_backward_search, BinarySearch, NonAcgtPolicy};
//!
//! let g = encode_reference("CATAGA", NonAcgtPolicy::Reject).unwrap();
//! let sa = build_suffix_array(&g);
//! let table = build_exma(&g, &sa, 2).unwrap();
//! let hits = exma_backward_search(&table, &encode_query("TAG").unwrap(), &BinarySearch);
//! assert_eq!(locate(hits, &sa), vec![2]);
//! ```

pub mod chain;
pub mod exma;
pub mod fm;
pub mod genome;
pub mod index_file;
pub mod mtl;
pub mod sim;

pub use chain::{
    bdi_compress_line, chain_compress, chain_decompress, chain_rank_in_line, compression_report,
    ChainLine, ChainStream, ChainedIncrements, CompressionReport,
};
pub use exma::{
    build_exma, exma_backward_search, search_requests, table_size_report, BinarySearch, ExmaTable,
    KmerId, LinearScan, OccRanker, SearchRequest,
};
pub use fm::{build_fm, build_kstep, estimate_kstep_size, locate, FmIndex, Interval, KStepFmIndex};
pub use genome::{
    build_bwt, build_suffix_array, encode_query, encode_reference, read_fasta, EncodedGenome,
    NonAcgtPolicy, SuffixArray,
};
pub use index_file::IndexFile;
pub use mtl::{
    error_stats, group_kmers, rank_with_index, train_mtl, ErrorStats, ModelRanker, MtlConfig,
    PositionModel,
};
pub use sim::{simulate_batch, SimConfig, SimStats};

/// Learned index with single-precision parameters, the stored form.
pub type MtlIndex32 = mtl::MtlIndex<f32>;
/// Learned index with double-precision parameters.
pub type MtlIndex64 = mtl::MtlIndex<f64>;
