//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion does.

mod common;

use std::time::{Duration, Instant};

use exma::chain::{chain_compress_with_width, chain_decompress, compression_report};
use exma::exma::{
    build_exma, exma_backward_search, search_requests, BinarySearch, ExmaTable, KmerId, LinearScan,
    OccRanker, SearchRequest,
};
use exma::fm::{build_fm, build_kstep, estimate_kstep_size, locate, Interval};
use exma::genome::{
    build_bwt, build_suffix_array, encode_query, encode_reference, naive_find_all, EncodedGenome,
    NonAcgtPolicy,
};
use exma::index_file::IndexFile;
use exma::mtl::{
    rank_with_index, train_mtl, ConstantPredictor, DepthTable, IndependentRmi, ModelRanker,
    MtlConfig, LEAF_PARAMS, ROUTING_PARAMS,
};
use exma::sim::{
    golden_scenario, schedule_fr_fcfs, schedule_two_stage, simulate_batch, write_stats_csv,
    PagePolicy, Scheduler, SimConfig, SimStats, TableWorkload,
};
use exma::{ChainedIncrements, MtlIndex32};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, what: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.into())
    }
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let g = encode_reference("CATAGA", NonAcgtPolicy::Reject).map_err(|e| e.to_string())?;
    let sa = build_suffix_array(&g);
    check(sa.as_slice() == [6, 5, 3, 1, 0, 4, 2], "suffix array")?;
    let bwt = build_bwt(&g, &sa);
    check(bwt.codes() == [1, 3, 4, 2, 0, 1, 1], "BWT is AGTC$AA")?;
    let fm = build_fm(&g, &sa, 4).map_err(|e| e.to_string())?;
    check(fm.occ(2, 5) == Ok(1), "Occ(C,5) = 1")?;
    check(fm.count(4) == 6, "Count(T) = 6")?;
    let q = encode_query("TAG").unwrap();
    let trace = fm.backward_search_trace(&q).map_err(|e| e.to_string())?;
    check(trace[0] == Interval::new(5, 6), "interval after G")?;
    let iv = *trace.last().unwrap();
    check(iv == Interval::new(6, 7), "final interval")?;
    check(locate(iv, &sa) == vec![2], "locate")?;
    let t = build_exma(&g, &sa, 2).map_err(|e| e.to_string())?;
    check(
        exma_backward_search(&t, &q, &BinarySearch) == iv,
        "increment table agrees",
    )?;
    let took = start.elapsed();
    check(took < Duration::from_secs(1), "took over 1s")?;
    Ok(format!(
        "SA, BWT, Occ, Count, trace and locate exact in {}",
        secs(took)
    ))
}

fn reference_suite() -> Vec<EncodedGenome> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce);
    (0..50)
        .map(|i| {
            let len = (1000.0 * 100f64.powf(rng.gen::<f64>())) as usize;
            let len = match i {
                0 => 1000,
                1 => 100_000,
                _ => len,
            };
            if i % 3 == 0 {
                common::repetitive_genome(&mut rng, len)
            } else {
                common::random_genome(&mut rng, len)
            }
        })
        .collect()
}

fn criterion_2(refs: &[EncodedGenome]) -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut compared = 0usize;
    for (r, g) in refs.iter().enumerate() {
        let sa = build_suffix_array(g);
        let fm = build_fm(g, &sa, 64).map_err(|e| e.to_string())?;
        let tables: Vec<ExmaTable> = (1..=4)
            .map(|k| build_exma(g, &sa, k).expect("small step"))
            .collect();
        let ksteps: Vec<_> = (1..=4)
            .map(|k| build_kstep(g, &sa, k, 64).expect("small step"))
            .collect();
        for _ in 0..1000 {
            let q = common::random_query(&mut rng, g, 24);
            let naive = naive_find_all(g, &q);
            let one = fm.backward_search(&q).unwrap();
            if locate(one, &sa) != naive {
                return Err(format!("1-step FM differs from naive on reference {r}"));
            }
            for k in 1..=4 {
                let iv = exma_backward_search(&tables[k - 1], &q, &BinarySearch);
                if iv.width() != naive.len() || locate(iv, &sa) != naive {
                    return Err(format!("increment table k={k} differs on reference {r}"));
                }
                let cut = &q[..q.len() - q.len() % k];
                if cut.is_empty() {
                    continue;
                }
                let iv = ksteps[k - 1].backward_search(cut).unwrap();
                if locate(iv, &sa) != naive_find_all(g, cut) {
                    return Err(format!("k-step FM k={k} differs on reference {r}"));
                }
                compared += 1;
            }
        }
    }
    let took = start.elapsed();
    check(took < Duration::from_secs(300), "took over 5 min")?;
    Ok(format!(
        "{} references x 1000 queries, {compared} k-step comparisons, 0 discrepancies in {}",
        refs.len(),
        secs(took)
    ))
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0usize;
    for (len, k) in [(9_999, 1), (9_999, 2), (5_000, 3), (9_999, 4), (2_000, 5)] {
        let g = common::repetitive_genome(&mut rng, len);
        let t = build_exma(&g, &build_suffix_array(&g), k).map_err(|e| e.to_string())?;
        check(t.len() <= 10_000, "table too large")?;
        for d in 0..t.dense_len() as u64 {
            let kmer = KmerId(d);
            for pos in 0..=t.len() {
                let want = t.occ_rank(kmer, pos);
                for galloping in [false, true] {
                    let got = rank_with_index(&ConstantPredictor(0.0), &t, kmer, pos, galloping);
                    if got.rank != want {
                        return Err(format!("k={k} kmer {d} pos {pos}: {} != {want}", got.rank));
                    }
                }
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} (kmer, pos) pairs, 0 discrepancies"))
}

fn criterion_4() -> Outcome {
    let (reqs, w, cfg) = golden_scenario(Scheduler::FrFcfs);
    let fr = simulate_batch(&reqs, &w, &cfg).map_err(|e| e.to_string())?;
    let (reqs, w, cfg) = golden_scenario(Scheduler::TwoStage);
    let two = simulate_batch(&reqs, &w, &cfg).map_err(|e| e.to_string())?;
    check(
        fr.base_misses == 4,
        format!("FR-FCFS base misses {}", fr.base_misses),
    )?;
    check(
        fr.index_misses == 3,
        format!("FR-FCFS index misses {}", fr.index_misses),
    )?;
    let misses = two.base_misses + two.index_misses;
    let hits = two.base_hits + two.index_hits;
    check(
        misses == 4 && hits == 4,
        format!("two-stage {misses} misses / {hits} hits"),
    )?;
    Ok(format!(
        "FR-FCFS base misses {}, index misses {}; two-stage {misses} misses / {hits} hits",
        fr.base_misses, fr.index_misses
    ))
}

fn criterion_5() -> Outcome {
    let five = estimate_kstep_size(3_000_000_000, 5, 128);
    let six = estimate_kstep_size(3_000_000_000, 6, 128);
    let gb = |b: f64| b / 1e9;
    check(
        (gb(five) - 105.0).abs() <= 0.15 * 105.0,
        format!("k=5 {:.1} GB", gb(five)),
    )?;
    check(
        (gb(six) - 374.0).abs() <= 0.15 * 374.0,
        format!("k=6 {:.1} GB", gb(six)),
    )?;
    check(estimate_kstep_size(7, 1, 4) == 5.25, "(7,1,4) != 5.25")?;
    check(estimate_kstep_size(16, 2, 4) == 42.0, "(16,2,4) != 42")?;
    Ok(format!(
        "k=5 {:.1} GB (105), k=6 {:.1} GB (374); small cases exact",
        gb(five),
        gb(six)
    ))
}

fn chain_suite(rng: &mut ChaCha8Rng, kind: usize, n: usize) -> Vec<u64> {
    let mut v = Vec::with_capacity(n);
    let mut x: u64 = rng.gen_range(0..1 << 20);
    for i in 0..n {
        v.push(x);
        x += match kind {
            0 => rng.gen_range(0..4),
            1 => rng.gen_range(0..1 << 12),
            2 if i % 1000 == 0 => rng.gen_range(0..1 << 31),
            2 => rng.gen_range(0..16),
            _ => 1 << rng.gen_range(0..20),
        };
    }
    v
}

fn criterion_6(refs: &[EncodedGenome]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut suites = 0;
    for kind in 0..4 {
        for width in [4usize, 8] {
            let mut v = chain_suite(&mut rng, kind, 1_000_000);
            if width == 4 {
                let top = *v.last().unwrap();
                if top > u32::MAX as u64 {
                    v.iter_mut()
                        .for_each(|x| *x = (*x as u128 * u32::MAX as u128 / top as u128) as u64);
                }
            }
            let lines = chain_compress_with_width(&v, width).map_err(|e| e.to_string())?;
            let back = chain_decompress(&lines).map_err(|e| e.to_string());
            check(
                back.as_deref() == Ok(v.as_slice()),
                format!("round trip suite {kind}"),
            )?;
            suites += 1;
        }
    }

    let mut streams = 0;
    let mut worst: f64 = 0.0;
    for (r, g) in refs.iter().enumerate() {
        let sa = build_suffix_array(g);
        for k in 1..=4 {
            let t = build_exma(g, &sa, k).map_err(|e| e.to_string())?;
            let s = compression_report(&t);
            let s = s.stream("increments").expect("increments stream");
            if s.chain_ratio() >= s.bdi_ratio() {
                return Err(format!(
                    "reference {r} k={k}: CHAIN {:.3} >= BDI {:.3}",
                    s.chain_ratio(),
                    s.bdi_ratio()
                ));
            }
            worst = worst.max(s.chain_ratio() / s.bdi_ratio());
            streams += 1;
        }
    }

    let unit: Vec<u64> = (0..1_000_000).collect();
    let lines = chain_compress_with_width(&unit, 4).map_err(|e| e.to_string())?;
    let bytes: usize = lines.iter().map(|l| l.serialized_len(4)).sum();
    let ratio = bytes as f64 / (unit.len() * 4) as f64;
    check(ratio <= 0.15, format!("unit-delta ratio {ratio:.4}"))?;
    Ok(format!(
        "{suites} suites of 1e6 round-trip; CHAIN < BDI on {streams} streams (worst CHAIN/BDI {worst:.3}); unit-delta ratio {ratio:.4}"
    ))
}

fn sign_test_p(wins: usize, n: usize) -> f64 {
    let choose =
        |n: usize, k: usize| (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64);
    (wins..=n).map(|i| choose(n, i)).sum::<f64>() / 2f64.powi(n as i32)
}

fn criterion_7() -> Outcome {
    let seeds = 10;
    let mut wins = 0;
    let mut detail = Vec::new();
    for seed in 0..seeds {
        let (t, family) = common::family_table(seed, 1 << 19);
        check(family.len() >= 64, "fewer than 64 k-mers")?;
        let ind = IndependentRmi::train(&t, &family, 2);
        let cfg = MtlConfig {
            branching: (ind.param_count() - ROUTING_PARAMS) / LEAF_PARAMS,
            seed,
            ..MtlConfig::default()
        };
        let m: MtlIndex32 = train_mtl(&t, &cfg).map_err(|e| e.to_string())?;
        check(
            m.param_count() <= ind.param_count(),
            format!("budget {} > {}", m.param_count(), ind.param_count()),
        )?;
        let mtl = common::mean_error(&m, &t, &family);
        let independent = common::mean_error(&ind, &t, &family);
        if mtl <= independent {
            wins += 1;
        }
        detail.push(format!("{mtl:.1}/{independent:.1}"));
    }
    let p = sign_test_p(wins, seeds as usize);
    check(
        p < 0.05,
        format!("{wins}/{seeds} wins, p = {p:.4}: {}", detail.join(" ")),
    )?;
    Ok(format!(
        "MTL <= independent on {wins}/{seeds} seeds, sign test p = {p:.4}; mean errors MTL/ind {}",
        detail.join(" ")
    ))
}

fn paired_batch(seed: u64) -> (ExmaTable, Vec<SearchRequest>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = common::random_genome(&mut rng, 1 << 15);
    let t = build_exma(&g, &build_suffix_array(&g), 4).unwrap();
    let mut reqs = Vec::new();
    while reqs.len() < 2000 {
        let start = rng.gen_range(0..g.len() - 24);
        reqs.extend(search_requests(&t, &g.text()[start..start + 24]));
    }
    (t, reqs)
}

fn csv_bytes(s: &SimStats) -> Vec<u8> {
    let mut out = Vec::new();
    write_stats_csv(&mut out, std::slice::from_ref(s)).unwrap();
    out
}

fn criterion_8() -> Outcome {
    let (t, reqs) = paired_batch(8);
    let w = TableWorkload::<f32>::new(&t, None);
    let run = |policy| {
        let cfg = SimConfig {
            page_policy: policy,
            scheduler: Scheduler::FrFcfs,
            ..SimConfig::default()
        };
        simulate_batch(&reqs, &w, &cfg).map_err(|e| e.to_string())
    };
    let dynamic = run(PagePolicy::Dynamic)?;
    let close = run(PagePolicy::Close)?;
    let again = run(PagePolicy::Dynamic)?;
    check(
        dynamic.row_hit_rate() >= 0.45,
        format!("dynamic row hit rate {:.3}", dynamic.row_hit_rate()),
    )?;
    check(close.row_hit_rate() == 0.0, "close-page row hits")?;
    let speedup = dynamic.bandwidth_utilization / close.bandwidth_utilization;
    check(speedup >= 1.5, format!("utilization ratio {speedup:.2}"))?;
    check(
        csv_bytes(&dynamic) == csv_bytes(&again),
        "stats differ between runs",
    )?;
    Ok(format!(
        "row hit rate dynamic {:.3} vs close {:.3}; utilization {:.3} vs {:.3} ({speedup:.2}x); repeat run bit-identical",
        dynamic.row_hit_rate(),
        close.row_hit_rate(),
        dynamic.bandwidth_utilization,
        close.bandwidth_utilization
    ))
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let g = common::repetitive_genome(&mut rng, 20_000);
    let sa = build_suffix_array(&g);
    let t = build_exma(&g, &sa, 3).map_err(|e| e.to_string())?;
    let cfg = MtlConfig {
        depth_table: DepthTable {
            threshold: 64,
            bounds: vec![256, 1024],
        },
        epochs: 60,
        ..MtlConfig::default()
    };
    let model: MtlIndex32 = train_mtl(&t, &cfg).map_err(|e| e.to_string())?;
    let queries: Vec<Vec<u8>> = (0..500)
        .map(|_| common::random_query(&mut rng, &g, 30))
        .collect();

    let dir = std::env::temp_dir().join(format!("exma-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let mut variants = Vec::new();
    for (compressed, with_model) in [(false, false), (true, false), (false, true), (true, true)] {
        let mut f = IndexFile::new(t.clone(), sa.clone(), g.records().to_vec());
        f.compressed = compressed;
        f.model = with_model.then(|| model.clone());
        let path = dir.join(format!("{compressed}-{with_model}.idx"));
        f.save(&path).map_err(|e| e.to_string())?;
        let loaded = IndexFile::load(&path).map_err(|e| e.to_string())?;
        let bytes = f.to_bytes().map_err(|e| e.to_string())?;
        check(
            loaded.to_bytes().map_err(|e| e.to_string())? == bytes,
            "save/load not bit-identical",
        )?;
        check(
            std::fs::read(&path).map_err(|e| e.to_string())? == bytes,
            "file differs from serialized form",
        )?;
        variants.push(loaded);
    }
    std::fs::remove_dir_all(&dir).ok();

    let chained =
        ChainedIncrements::from_table(&t, variants[1].entry_width()).map_err(|e| e.to_string())?;
    let model_ranker = ModelRanker::new(&model);
    for q in &queries {
        let want = locate(exma_backward_search(&t, q, &BinarySearch), &sa);
        for v in &variants {
            for use_model in [false, true] {
                let iv = v.search(q, use_model);
                check(
                    v.locate(iv, q.len()) == want,
                    "stored variant changed results",
                )?;
            }
        }
        for ranker in [&chained as &dyn OccRanker, &model_ranker, &LinearScan] {
            let iv = exma_backward_search(&t, q, &ranker);
            check(locate(iv, &sa) == want, "ranker changed results")?;
        }
    }

    let reqs: Vec<SearchRequest> = queries
        .iter()
        .flat_map(|q| search_requests(&t, q))
        .collect();
    let answer = |order: &[usize], queue: &[SearchRequest]| {
        let mut out = vec![0; queue.len()];
        for &i in order {
            out[i] = t.occ_rank(queue[i].kmer, queue[i].pos);
        }
        out
    };
    let capacity = SimConfig::default().queue_capacity;
    for queue in reqs.chunks(capacity) {
        let direct: Vec<usize> = queue.iter().map(|r| t.occ_rank(r.kmer, r.pos)).collect();
        let (s1, s2) = schedule_two_stage(queue, capacity).map_err(|e| e.to_string())?;
        for order in [schedule_fr_fcfs(queue), s1, s2] {
            let mut sorted = order.clone();
            sorted.sort_unstable();
            check(
                sorted == (0..queue.len()).collect::<Vec<_>>(),
                "schedule drops requests",
            )?;
            check(answer(&order, queue) == direct, "scheduler changed answers")?;
        }
    }
    let w = TableWorkload::new(&t, Some(&model));
    let mut served = Vec::new();
    for scheduler in [Scheduler::FrFcfs, Scheduler::TwoStage] {
        let cfg = SimConfig {
            scheduler,
            ..SimConfig::default()
        };
        let s = simulate_batch(&reqs, &w, &cfg).map_err(|e| e.to_string())?;
        served.push((s.requests, s.base_hits + s.base_misses));
    }
    check(
        served[0] == served[1],
        "schedulers served different batches",
    )?;
    Ok(format!(
        "4 stored variants bit-identical after save/load; {} queries agree across compression, model, rankers and {} scheduled requests",
        queries.len(),
        reqs.len()
    ))
}

#[test]
fn acceptance() {
    let refs = reference_suite();
    let results: Vec<(usize, &str, Outcome)> = vec![
        (1, "golden small example", criterion_1()),
        (2, "oracle equivalence", criterion_2(&refs)),
        (
            3,
            "rank exactness under a constant-zero model",
            criterion_3(),
        ),
        (4, "golden scheduling scenario", criterion_4()),
        (5, "k-step size estimator", criterion_5()),
        (6, "CHAIN compression", criterion_6(&refs)),
        (7, "shared model benefit", criterion_7()),
        (8, "simulator properties", criterion_8()),
        (9, "persistence and invariance", criterion_9()),
    ];
    let mut failed = Vec::new();
    for (n, name, r) in &results {
        match r {
            Ok(detail) => println!("PASS criterion {n} ({name}): {detail}"),
            Err(why) => {
                println!("FAIL criterion {n} ({name}): {why}");
                failed.push(*n);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
