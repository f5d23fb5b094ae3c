#![allow(dead_code)]

use exma::exma::{ExmaTable, KmerId};
use exma::genome::EncodedGenome;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_genome(rng: &mut ChaCha8Rng, len: usize) -> EncodedGenome {
    EncodedGenome::from_codes((0..len).map(|_| rng.gen_range(1..=4u8)).collect())
}

/// Reference with planted repeats so that longer queries still match.
pub fn repetitive_genome(rng: &mut ChaCha8Rng, len: usize) -> EncodedGenome {
    let motif: Vec<u8> = (0..rng.gen_range(8..40))
        .map(|_| rng.gen_range(1..=4u8))
        .collect();
    let mut codes = Vec::with_capacity(len);
    while codes.len() < len {
        if rng.gen_bool(0.3) {
            codes.extend_from_slice(&motif);
        } else {
            codes.push(rng.gen_range(1..=4u8));
        }
    }
    codes.truncate(len);
    EncodedGenome::from_codes(codes)
}

/// Mix of substrings of the reference and random strings.
pub fn random_query(rng: &mut ChaCha8Rng, g: &EncodedGenome, max_len: usize) -> Vec<u8> {
    let len = rng.gen_range(1..=max_len);
    let text = g.text();
    if rng.gen_bool(0.7) && text.len() > len {
        let start = rng.gen_range(0..text.len() - len);
        text[start..start + len].to_vec()
    } else {
        (0..len).map(|_| rng.gen_range(1..=4u8)).collect()
    }
}

pub const FAMILY_STEP: usize = 6;
pub const FAMILY_SIZE: usize = 64;

/// Table whose first-column positions are split between 64 "family" k-mers
/// that all follow the same bumpy density over positions, and many filler
/// k-mers that stay below the modeling threshold.
pub fn family_table(seed: u64, n: usize) -> (ExmaTable, Vec<KmerId>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dense = 1usize << (2 * FAMILY_STEP);
    let stride = dense / FAMILY_SIZE;
    let family: Vec<KmerId> = (0..FAMILY_SIZE)
        .map(|i| KmerId((i * stride) as u64))
        .collect();
    let fillers: Vec<KmerId> = (0..dense)
        .filter(|d| d % stride != 0)
        .map(|d| KmerId(d as u64))
        .collect();
    let bumps: Vec<f64> = (0..8).map(|_| rng.gen_range(0.05..0.95)).collect();
    let sigma = 0.01;
    let codes: Vec<usize> = (0..n)
        .map(|t| {
            let x = t as f64 / n as f64;
            let q: f64 = bumps
                .iter()
                .map(|c| (-(x - c).powi(2) / (2.0 * sigma * sigma)).exp())
                .sum();
            let p = (0.05 + 0.9 * q).min(0.95);
            let kmer = if rng.gen_bool(p) {
                family[rng.gen_range(0..family.len())]
            } else {
                fillers[rng.gen_range(0..fillers.len())]
            };
            kmer.code5(FAMILY_STEP)
        })
        .collect();
    (
        ExmaTable::from_kstep_bwt(FAMILY_STEP, &codes).unwrap(),
        family,
    )
}

/// Mean `|predicted - true rank|` over every increment of the given k-mers.
pub fn mean_error<M: exma::mtl::PositionModel>(m: &M, t: &ExmaTable, kmers: &[KmerId]) -> f64 {
    let mut total = 0usize;
    let mut count = 0usize;
    for &kmer in kmers {
        for (j, &pos) in t.increments(kmer).iter().enumerate() {
            let p = exma::mtl::predict(m, t, kmer, pos).expect("k-mer is modeled");
            total += p.abs_diff(j);
            count += 1;
        }
    }
    total as f64 / count as f64
}
