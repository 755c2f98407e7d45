#![allow(dead_code)]

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use softctc::{ConfusionNetwork, ConfusionSet, Labeling, PosteriorMatrix, Symbol};

pub const BLANK: Symbol = Symbol(0);

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Rows with every entry bounded away from zero.
pub fn random_posteriors(rng: &mut impl Rng, frames: usize, width: usize) -> PosteriorMatrix<f64> {
    let mut rows = Vec::with_capacity(frames);
    for _ in 0..frames {
        let raw: Vec<f64> = (0..width).map(|_| rng.gen_range(0.05..1.0)).collect();
        let sum: f64 = raw.iter().sum();
        rows.push(raw.iter().map(|v| v / sum).collect());
    }
    PosteriorMatrix::from_rows(&rows).unwrap()
}

/// Labeling over letters `1..width` (blank is 0).
pub fn random_labeling(rng: &mut impl Rng, max_len: usize, width: usize) -> Labeling {
    let len = rng.gen_range(0..=max_len);
    Labeling((0..len).map(|_| Symbol(rng.gen_range(1..width as u32))).collect())
}

/// Normalized network of 1..=`max_sets` sets, each with 1..=`max_choices`
/// entries counting null, over letters `1..width`.
pub fn random_cn(rng: &mut impl Rng, max_sets: usize, max_choices: usize, width: usize) -> ConfusionNetwork {
    let sets = (0..rng.gen_range(1..=max_sets))
        .map(|_| {
            let letters = width - 1;
            let choices = rng.gen_range(1..=max_choices.min(letters + 1));
            let with_null = choices > 1 && (choices > letters || rng.gen_bool(0.5));
            let n_sym = choices - usize::from(with_null);
            let mut pool: Vec<u32> = (1..width as u32).collect();
            pool.shuffle(rng);
            let weights: Vec<f64> = (0..choices).map(|_| rng.gen_range(0.1..1.0)).collect();
            let total: f64 = weights.iter().sum();
            let alts = pool[..n_sym]
                .iter()
                .zip(&weights)
                .map(|(&s, &w)| (Symbol(s), w / total))
                .collect();
            let null = if with_null { weights[choices - 1] / total } else { 0.0 };
            ConfusionSet::new(alts, null).unwrap()
        })
        .collect::<Vec<_>>();
    ConfusionNetwork::normalized(sets).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Largest per-entry `|a - b| / max(|a|, |b|, 1e-3)`.
pub fn grad_rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-3))
        .fold(0.0, f64::max)
}
