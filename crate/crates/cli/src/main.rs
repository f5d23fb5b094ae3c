use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use exma::chain::compression_report;
use exma::exma::{build_exma_guarded, search_requests, table_size_report, DEFAULT_MAX_STEP};
use exma::fm::estimate_kstep_size;
use exma::genome::NonAcgtPolicy;
use exma::genome::{build_suffix_array, encode_query, encode_records, read_fasta, GenomeError};
use exma::index_file::{IndexFile, IndexFileError};
use exma::mtl::{error_stats, train_mtl, DepthTable, MtlConfig};
use exma::sim::{golden_scenario, simulate_batch, write_stats_csv, PagePolicy, Scheduler};
use exma::sim::{SimConfig, SimStats, TableWorkload};
use exma::MtlIndex32;

#[derive(Parser)]
#[command(name = "exma", version, about = "Exact-match DNA search indexes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an index from a FASTA reference.
    Build(BuildArgs),
    /// Count or locate queries against an index.
    Search(SearchArgs),
    /// Simulate the memory system for a query batch.
    Sim(SimArgs),
    /// Report table sizes and compression ratios.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Reject,
    MapToA,
    Skip,
}

#[derive(clap::Args)]
struct BuildArgs {
    reference: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(short, long, default_value_t = 4)]
    k: usize,
    /// Store increments CHAIN-compressed.
    #[arg(long)]
    compress: bool,
    /// Train and store the learned rank model.
    #[arg(long)]
    train_model: bool,
    #[arg(long, env = "EXMA_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "reject")]
    non_acgt: Policy,
    #[arg(long, default_value_t = MtlConfig::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = MtlConfig::default().learning_rate)]
    learning_rate: f64,
    #[arg(long, default_value_t = MtlConfig::default().branching)]
    branching: usize,
    /// K-mers with at most this many increments are not modeled.
    #[arg(long, default_value_t = DepthTable::default().threshold)]
    threshold: usize,
    #[arg(long)]
    params_per_increment: Option<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Count,
    Locate,
}

#[derive(clap::Args)]
struct SearchArgs {
    index: PathBuf,
    /// One query per line, or FASTA/FASTQ.
    queries: PathBuf,
    #[arg(long, value_enum, default_value = "count")]
    mode: Mode,
    /// Rank with the stored model instead of binary search.
    #[arg(long)]
    use_model: bool,
    /// Skip invalid queries with a warning instead of failing.
    #[arg(long)]
    lenient: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchedulerArg {
    FrFcfs,
    TwoStage,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Close,
    Open,
    Dynamic,
}

#[derive(clap::Args)]
struct SimArgs {
    #[arg(long, required_unless_present = "golden_fig11")]
    index: Option<PathBuf>,
    #[arg(long, required_unless_present = "golden_fig11")]
    queries: Option<PathBuf>,
    /// `key = value` simulator configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run the built-in four-request scenario with its own configuration.
    #[arg(long)]
    golden_fig11: bool,
    #[arg(long, value_enum)]
    scheduler: Option<SchedulerArg>,
    #[arg(long, value_enum)]
    page_policy: Option<PolicyArg>,
    #[arg(long)]
    use_model: bool,
}

#[derive(clap::Args)]
struct ReportArgs {
    #[arg(required_unless_present = "estimate_only")]
    index: Option<PathBuf>,
    /// Print only the k-step FM-index size estimate.
    #[arg(long, requires_all = ["genome_len", "k"])]
    estimate_only: bool,
    #[arg(long)]
    genome_len: Option<u64>,
    #[arg(short, long)]
    k: Option<u32>,
    /// Occ bucket width of the estimated FM-index.
    #[arg(long, default_value_t = 128)]
    bucket: u64,
}

enum Failure {
    Io(anyhow::Error),
    Invalid(anyhow::Error),
}

type Result<T> = std::result::Result<T, Failure>;

fn io_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Io(e.into())
}

fn invalid(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Invalid(e.into())
}

fn index_err(e: IndexFileError) -> Failure {
    match e {
        IndexFileError::Io(e) => io_err(e),
        other => invalid(other),
    }
}

fn genome_err(e: GenomeError) -> Failure {
    match e {
        GenomeError::Io(e) => io_err(e),
        other => invalid(other),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .with_context(|| format!("cannot open {}", path.display()))
        .map_err(Failure::Io)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let result = match cli.command {
        Command::Build(a) => build(a, &mut out),
        Command::Search(a) => search(a, &mut out),
        Command::Sim(a) => sim(a, &mut out),
        Command::Report(a) => report(a, &mut out),
    };
    let result = result.and_then(|_| out.flush().map_err(io_err));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Io(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn build(a: BuildArgs, out: &mut impl Write) -> Result<()> {
    let records = read_fasta(open(&a.reference)?).map_err(genome_err)?;
    let policy = match a.non_acgt {
        Policy::Reject => NonAcgtPolicy::Reject,
        Policy::MapToA => NonAcgtPolicy::MapToA,
        Policy::Skip => NonAcgtPolicy::Skip,
    };
    let genome = encode_records(&records, policy).map_err(genome_err)?;
    let sa = build_suffix_array(&genome);
    let table = build_exma_guarded(&genome, &sa, a.k, DEFAULT_MAX_STEP).map_err(invalid)?;
    let mut index = IndexFile::new(table, sa, genome.records().to_vec());
    index.compressed = a.compress;

    let mut rows: Vec<(String, String)> = Vec::new();
    let sizes = table_size_report(&index.table);
    for (name, v) in [
        ("entry_width", sizes.entry_width as u64),
        ("increments_bytes", sizes.increments),
        ("bases_bytes", sizes.bases),
        ("freq_bytes", sizes.freq),
        ("cum_count_bytes", sizes.cum_count),
        ("aux_bytes", sizes.aux),
        ("total_bytes", sizes.total),
    ] {
        rows.push((name.into(), v.to_string()));
    }

    if a.train_model {
        let config = MtlConfig {
            learning_rate: a.learning_rate,
            epochs: a.epochs,
            branching: a.branching,
            params_per_increment: a.params_per_increment,
            depth_table: DepthTable {
                threshold: a.threshold,
                ..DepthTable::default()
            },
            seed: a.seed,
            ..MtlConfig::default()
        };
        let model: MtlIndex32 = train_mtl(&index.table, &config).map_err(invalid)?;
        rows.push(("model_params".into(), model.param_count().to_string()));
        let t = &index.table;
        let sample: Vec<_> = (0..t.dense_len() as u64)
            .map(exma::exma::KmerId)
            .flat_map(|k| t.increments(k).iter().map(move |&p| (k, p)))
            .collect();
        if let Ok(stats) = error_stats(&model, t, model.depth_table(), &sample) {
            for (class, s) in stats {
                for (name, v) in [
                    ("mean", s.mean),
                    ("min", s.min),
                    ("p25", s.p25),
                    ("p50", s.p50),
                    ("p75", s.p75),
                    ("max", s.max),
                ] {
                    rows.push((format!("error_{class}_{name}"), format!("{v}")));
                }
            }
        }
        index.model = Some(model);
    }

    let bytes = index.to_bytes().map_err(index_err)?;
    std::fs::write(&a.output, &bytes)
        .with_context(|| format!("cannot write {}", a.output.display()))
        .map_err(Failure::Io)?;
    rows.push(("file_bytes".into(), bytes.len().to_string()));
    write_rows(out, &rows)
}

fn write_rows(out: &mut impl Write, rows: &[(String, String)]) -> Result<()> {
    writeln!(out, "metric,value").map_err(io_err)?;
    for (k, v) in rows {
        writeln!(out, "{k},{v}").map_err(io_err)?;
    }
    Ok(())
}

struct Query {
    id: String,
    text: String,
}

/// Plain lines, or FASTA/FASTQ records, detected from the first non-empty line.
fn read_queries(reader: impl BufRead) -> Result<Vec<Query>> {
    let lines: Vec<String> = reader
        .lines()
        .collect::<io::Result<Vec<String>>>()
        .map_err(io_err)?
        .into_iter()
        .map(|l| l.trim().to_string())
        .collect();
    let mut nonempty = lines.iter().filter(|l| !l.is_empty()).peekable();
    let mut out = Vec::new();
    match nonempty.peek().and_then(|l| l.chars().next()) {
        Some('>') => {
            for l in nonempty {
                match l.strip_prefix('>') {
                    Some(h) => out.push(Query {
                        id: h.split_whitespace().next().unwrap_or("").to_string(),
                        text: String::new(),
                    }),
                    None => out.last_mut().expect("header seen").text.push_str(l),
                }
            }
        }
        Some('@') => {
            let v: Vec<&String> = nonempty.collect();
            for rec in v.chunks(4) {
                let [h, s, ..] = rec else {
                    return Err(invalid(anyhow!("truncated FASTQ record")));
                };
                out.push(Query {
                    id: h[1..].split_whitespace().next().unwrap_or("").to_string(),
                    text: s.to_string(),
                });
            }
        }
        _ => {
            for l in nonempty {
                out.push(Query {
                    id: l.clone(),
                    text: l.clone(),
                });
            }
        }
    }
    Ok(out)
}

/// Encodes queries, failing on the first invalid one unless `lenient`.
fn encode_all(queries: Vec<Query>, lenient: bool) -> Result<Vec<(Query, Vec<u8>)>> {
    let mut out = Vec::with_capacity(queries.len());
    for q in queries {
        match encode_query(&q.text) {
            Ok(codes) if !codes.is_empty() => out.push((q, codes)),
            Ok(_) if lenient => log::warn!("skipping empty query {}", q.id),
            Ok(_) => return Err(invalid(anyhow!("empty query {}", q.id))),
            Err(e) if lenient => log::warn!("skipping query {}: {e}", q.id),
            Err(e) => return Err(invalid(anyhow!("query {}: {e}", q.id))),
        }
    }
    Ok(out)
}

fn search(a: SearchArgs, out: &mut impl Write) -> Result<()> {
    let index = IndexFile::load(&a.index).map_err(index_err)?;
    let queries = encode_all(read_queries(open(&a.queries)?)?, a.lenient)?;
    let multi = index.records.len() > 1;
    let lines: Vec<String> = queries
        .par_iter()
        .map(|(q, codes)| {
            let iv = index.search(codes, a.use_model);
            if a.mode == Mode::Count && !multi {
                return format!("{},{}", q.id, iv.width());
            }
            let hits = index.locate(iv, codes.len());
            if a.mode == Mode::Count {
                return format!("{},{}", q.id, hits.len());
            }
            let positions: Vec<String> = hits
                .iter()
                .map(|&p| match index.coordinate(p) {
                    Some((name, off)) if multi => format!("{name}:{off}"),
                    _ => p.to_string(),
                })
                .collect();
            if positions.is_empty() {
                format!("{},0", q.id)
            } else {
                format!("{},{},{}", q.id, hits.len(), positions.join(";"))
            }
        })
        .collect();
    for l in lines {
        writeln!(out, "{l}").map_err(io_err)?;
    }
    Ok(())
}

fn sim(a: SimArgs, out: &mut impl Write) -> Result<()> {
    let scheduler = a.scheduler.map(|s| match s {
        SchedulerArg::FrFcfs => Scheduler::FrFcfs,
        SchedulerArg::TwoStage => Scheduler::TwoStage,
    });
    let policy = a.page_policy.map(|p| match p {
        PolicyArg::Close => PagePolicy::Close,
        PolicyArg::Open => PagePolicy::Open,
        PolicyArg::Dynamic => PagePolicy::Dynamic,
    });
    let mut cfg = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))
                .map_err(Failure::Io)?;
            SimConfig::parse(&text).map_err(invalid)?
        }
        None => SimConfig::default(),
    };
    let stats: SimStats = if a.golden_fig11 {
        let (reqs, workload, golden) = golden_scenario(scheduler.unwrap_or(Scheduler::TwoStage));
        cfg = golden;
        if let Some(p) = policy {
            cfg.page_policy = p;
        }
        simulate_batch(&reqs, &workload, &cfg).map_err(invalid)?
    } else {
        if let Some(s) = scheduler {
            cfg.scheduler = s;
        }
        if let Some(p) = policy {
            cfg.page_policy = p;
        }
        let index_path = a.index.as_ref().expect("required by clap");
        let index = IndexFile::load(index_path).map_err(index_err)?;
        let queries_path = a.queries.as_ref().expect("required by clap");
        let queries = encode_all(read_queries(open(queries_path)?)?, false)?;
        let reqs: Vec<_> = queries
            .iter()
            .flat_map(|(_, codes)| search_requests(&index.table, codes))
            .collect();
        let model = index.model.as_ref().filter(|_| a.use_model);
        let workload = TableWorkload::new(&index.table, model);
        simulate_batch(&reqs, &workload, &cfg).map_err(invalid)?
    };
    write_stats_csv(out, &[stats]).map_err(io_err)
}

fn report(a: ReportArgs, out: &mut impl Write) -> Result<()> {
    let mut rows: Vec<(String, String)> = Vec::new();
    if a.estimate_only {
        let (g, k) = (a.genome_len.expect("required"), a.k.expect("required"));
        rows.push(("genome_len".into(), g.to_string()));
        rows.push(("k".into(), k.to_string()));
        rows.push(("bucket".into(), a.bucket.to_string()));
        rows.push((
            "kstep_fm_estimate_bytes".into(),
            format!("{:.0}", estimate_kstep_size(g, k, a.bucket)),
        ));
        return write_rows(out, &rows);
    }
    let path = a.index.expect("required by clap");
    let bytes = std::fs::read(&path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(Failure::Io)?;
    let index = IndexFile::from_bytes(&bytes).map_err(index_err)?;
    let t = &index.table;
    let sizes = table_size_report(t);
    for (name, v) in [
        ("k", t.step() as u64),
        ("n", t.len() as u64),
        ("entry_width", sizes.entry_width as u64),
        ("increments_bytes", sizes.increments),
        ("bases_bytes", sizes.bases),
        ("freq_bytes", sizes.freq),
        ("cum_count_bytes", sizes.cum_count),
        ("aux_bytes", sizes.aux),
        ("total_bytes", sizes.total),
        ("file_bytes", bytes.len() as u64),
    ] {
        rows.push((name.into(), v.to_string()));
    }
    let c = compression_report(t);
    for s in &c.streams {
        rows.push((format!("{}_chain_bytes", s.name), s.chain_bytes.to_string()));
        rows.push((format!("{}_bdi_bytes", s.name), s.bdi_bytes.to_string()));
        rows.push((
            format!("{}_chain_ratio", s.name),
            format!("{:.6}", s.chain_ratio()),
        ));
        rows.push((
            format!("{}_bdi_ratio", s.name),
            format!("{:.6}", s.bdi_ratio()),
        ));
    }
    let genome_len = t.len().saturating_sub(1) as u64;
    rows.push((
        "kstep_fm_estimate_bytes".into(),
        format!(
            "{:.0}",
            estimate_kstep_size(genome_len, t.step() as u32, a.bucket)
        ),
    ));
    write_rows(out, &rows)
}
