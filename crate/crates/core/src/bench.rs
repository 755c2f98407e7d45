//! Synthetic timing comparison of CTC, MultiCTC and SoftCTC.
//!
//! Lines mimic recognizer output: peaky posteriors where most frames are
//! near one-hot, with short ambiguity bursts inside letter runs. Each line
//! gets a partial-line confusion network (pruned at 0.01), from which the
//! SoftCTC target and the MultiCTC variants are drawn. Every kernel runs
//! single-threaded; warmup repetitions are discarded.

use std::fmt::Write as _;
use std::time::Instant;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::cn::{prune, ConfusionNetwork, DEFAULT_CUTOFF};
use crate::compile::{compile_cn, CompiledTarget};
use crate::ctc::linear_target;
use crate::decoder::{decode_to_cn, DecodeConfig, Strategy};
use crate::error::Result;
use crate::fb::ForwardBackwardWorkspace;
use crate::types::{Labeling, PosteriorMatrix, Symbol};

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub batch_sizes: Vec<usize>,
    pub beam: usize,
    pub frames: usize,
    pub vocab: usize,
    pub repeats: usize,
    pub warmup: usize,
    /// Target share of frames with a > 0.99 symbol.
    pub confident_fraction: f64,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            batch_sizes: vec![16],
            beam: 16,
            frames: 250,
            vocab: 100,
            repeats: 30,
            warmup: 3,
            confident_fraction: 0.85,
            seed: 0x5eed_c7c,
        }
    }
}

/// One synthetic line with everything each method needs precomputed.
#[derive(Clone, Debug)]
pub struct SyntheticLine {
    pub posteriors: PosteriorMatrix<f64>,
    pub transcript: Labeling,
    pub cn: ConfusionNetwork,
}

/// Posteriors for one line plus its ground-truth labeling.
pub fn synthetic_posteriors(rng: &mut impl Rng, frames: usize, vocab: usize, confident_fraction: f64) -> (PosteriorMatrix<f64>, Labeling) {
    let blank = 0usize;
    // frame-level path: letter runs of 1-2 frames separated by 1-3 blanks
    let mut path = Vec::with_capacity(frames);
    while path.len() < frames {
        for _ in 0..rng.gen_range(1..=3) {
            path.push(blank);
        }
        let letter = rng.gen_range(1..vocab);
        for _ in 0..rng.gen_range(1..=2) {
            path.push(letter);
        }
    }
    path.truncate(frames);

    // ambiguity bursts of 2-5 frames until the target share is reached
    let mut ambiguous = vec![false; frames];
    let wanted = ((1.0 - confident_fraction) * frames as f64).round() as usize;
    let mut count = 0;
    while count < wanted {
        let start = rng.gen_range(0..frames);
        let len = rng.gen_range(2..=5).min(frames - start);
        for a in &mut ambiguous[start..start + len] {
            if !*a && count < wanted {
                *a = true;
                count += 1;
            }
        }
    }

    let mut data = Vec::with_capacity(frames * vocab);
    let mut row = vec![0.0; vocab];
    for t in 0..frames {
        let truth = path[t];
        if ambiguous[t] {
            let rival = loop {
                let r = rng.gen_range(1..vocab);
                if r != truth {
                    break r;
                }
            };
            let top: f64 = rng.gen_range(0.4..0.7);
            let rest = 1.0 - top;
            row.fill(0.1 * rest / (vocab - 3).max(1) as f64);
            row[truth] = top;
            row[rival] = 0.6 * rest;
            row[if truth == blank { rng.gen_range(1..vocab) } else { blank }] += 0.3 * rest;
        } else {
            let residual = 0.003;
            row.fill(residual / (vocab - 1) as f64);
            row[truth] = 1.0 - residual;
        }
        let sum: f64 = row.iter().sum();
        data.extend(row.iter().map(|v| v / sum));
    }

    let mut transcript = Vec::new();
    let mut prev = None;
    for &k in &path {
        if Some(k) != prev && k != blank {
            transcript.push(Symbol::from(k));
        }
        prev = Some(k);
    }
    (
        PosteriorMatrix::from_flat(frames, vocab, data).expect("consistent shape"),
        Labeling(transcript),
    )
}

/// Generates `count` lines and their pruned partial-line networks.
pub fn synthetic_lines(cfg: &BenchConfig, count: usize) -> Result<Vec<SyntheticLine>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let decode = DecodeConfig::new(cfg.beam, 0.99, Strategy::PartialLine)?;
    (0..count)
        .map(|_| {
            let (posteriors, transcript) = synthetic_posteriors(&mut rng, cfg.frames, cfg.vocab, cfg.confident_fraction);
            let cn = prune(&decode_to_cn(&posteriors, Symbol(0), &decode)?, DEFAULT_CUTOFF)?;
            Ok(SyntheticLine {
                posteriors,
                transcript,
                cn,
            })
        })
        .collect()
}

/// Draws one string from a network, choosing each set independently.
pub fn sample_variant(cn: &ConfusionNetwork, rng: &mut impl Rng) -> Labeling {
    let mut out = Vec::new();
    for set in cn.sets() {
        let mut choices: Vec<(Option<Symbol>, f64)> = set.alternatives().iter().map(|&(s, p)| (Some(s), p)).collect();
        choices.push((None, set.null_prob()));
        let pick = WeightedIndex::new(choices.iter().map(|c| c.1)).expect("set has positive mass");
        out.extend(choices[pick.sample(rng)].0);
    }
    Labeling(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Ctc,
    MultiCtc,
    SoftCtc,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ctc => "ctc",
            Method::MultiCtc => "multictc",
            Method::SoftCtc => "softctc",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub method: Method,
    pub batch: usize,
    pub beam: usize,
    /// Wall time per batch in milliseconds.
    pub mean_ms: f64,
    pub std_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub rows: Vec<BenchRow>,
    /// Mean share of frames holding a > 0.99 symbol.
    pub confident_share: f64,
    /// Mean number of confusion sets with more than one entry per line.
    pub ambiguous_sets: f64,
    /// Mean automaton size of the SoftCTC targets and the CTC targets.
    pub softctc_states: f64,
    pub ctc_states: f64,
    /// One-off target compilation time per batch (not part of the rows).
    pub compile_ms: f64,
    pub elapsed_s: f64,
}

impl BenchReport {
    pub fn row(&self, method: Method, batch: usize) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.method == method && r.batch == batch)
    }

    fn ratio(&self, num: Method, den: Method, batch: usize) -> Option<f64> {
        Some(self.row(num, batch)?.mean_ms / self.row(den, batch)?.mean_ms)
    }

    /// MultiCTC time over CTC time; close to the beam size by construction.
    pub fn multictc_over_ctc(&self, batch: usize) -> Option<f64> {
        self.ratio(Method::MultiCtc, Method::Ctc, batch)
    }

    pub fn softctc_over_multictc(&self, batch: usize) -> Option<f64> {
        self.ratio(Method::SoftCtc, Method::MultiCtc, batch)
    }

    pub fn softctc_over_ctc(&self, batch: usize) -> Option<f64> {
        self.ratio(Method::SoftCtc, Method::Ctc, batch)
    }

    pub fn to_table(&self) -> String {
        let c = &self.config;
        let mut out = String::new();
        writeln!(
            out,
            "# synthetic lines: T={} |V|={} seed={:#x} confident frames={:.1}% ambiguous sets/line={:.1}",
            c.frames,
            c.vocab,
            c.seed,
            100.0 * self.confident_share,
            self.ambiguous_sets
        )
        .unwrap();
        writeln!(
            out,
            "# states/line: ctc={:.1} softctc={:.1}; repeats={} warmup={}",
            self.ctc_states, self.softctc_states, c.repeats, c.warmup
        )
        .unwrap();
        writeln!(out, "{:<9} {:>6} {:>5} {:>12} {:>10}", "method", "batch", "beam", "mean [ms]", "std [ms]").unwrap();
        for r in &self.rows {
            writeln!(
                out,
                "{:<9} {:>6} {:>5} {:>12.3} {:>10.3}",
                r.method.name(),
                r.batch,
                r.beam,
                r.mean_ms,
                r.std_ms
            )
            .unwrap();
        }
        for &b in &c.batch_sizes {
            writeln!(
                out,
                "batch {b}: multictc/ctc = {:.2}, softctc/multictc = {:.3}, softctc/ctc = {:.2}",
                self.multictc_over_ctc(b).unwrap_or(f64::NAN),
                self.softctc_over_multictc(b).unwrap_or(f64::NAN),
                self.softctc_over_ctc(b).unwrap_or(f64::NAN)
            )
            .unwrap();
        }
        out
    }

    /// `key=value` records, one per line.
    pub fn to_machine(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            writeln!(
                out,
                "bench method={} batch={} beam={} mean_ms={:.6} std_ms={:.6} repeats={}",
                r.method.name(),
                r.batch,
                r.beam,
                r.mean_ms,
                r.std_ms,
                self.config.repeats
            )
            .unwrap();
        }
        for &b in &self.config.batch_sizes {
            writeln!(
                out,
                "ratio batch={b} multictc_over_ctc={:.6} softctc_over_multictc={:.6} softctc_over_ctc={:.6}",
                self.multictc_over_ctc(b).unwrap_or(f64::NAN),
                self.softctc_over_multictc(b).unwrap_or(f64::NAN),
                self.softctc_over_ctc(b).unwrap_or(f64::NAN)
            )
            .unwrap();
        }
        out
    }
}

fn mean_std(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

/// Times `work` once per repetition after `warmup` discarded runs.
fn time_ms(warmup: usize, repeats: usize, mut work: impl FnMut() -> f64) -> (f64, f64) {
    let mut sink = 0.0;
    for _ in 0..warmup {
        sink += work();
    }
    let mut samples = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        sink += work();
        samples.push(start.elapsed().as_secs_f64() * 1e3);
    }
    std::hint::black_box(sink);
    mean_std(&samples)
}

/// Runs the comparison for every configured batch size.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    let started = Instant::now();
    let max_batch = cfg.batch_sizes.iter().copied().max().unwrap_or(0);
    let lines = synthetic_lines(cfg, max_batch)?;

    let compile_start = Instant::now();
    let soft_targets: Vec<CompiledTarget<f64>> = lines
        .iter()
        .map(|l| compile_cn(&l.cn, Symbol(0)))
        .collect::<Result<_>>()?;
    let compile_ms = compile_start.elapsed().as_secs_f64() * 1e3 * 16.0 / max_batch.max(1) as f64;
    let ctc_targets: Vec<CompiledTarget<f64>> = lines.iter().map(|l| linear_target(&l.transcript, Symbol(0))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9);
    let variant_targets: Vec<Vec<CompiledTarget<f64>>> = lines
        .iter()
        .map(|l| {
            (0..cfg.beam)
                .map(|_| linear_target(&sample_variant(&l.cn, &mut rng), Symbol(0)))
                .collect()
        })
        .collect();

    let mut ws = ForwardBackwardWorkspace::new();
    let mut rows = Vec::new();
    for &batch in &cfg.batch_sizes {
        let mut eval = |y: &PosteriorMatrix<f64>, t: &CompiledTarget<f64>| match ws.evaluate(y, t) {
            Ok(r) => r.loss + r.grad[0],
            Err(_) => 0.0,
        };
        let (m, s) = time_ms(cfg.warmup, cfg.repeats, || {
            (0..batch).map(|i| eval(&lines[i].posteriors, &ctc_targets[i])).sum()
        });
        rows.push(BenchRow {
            method: Method::Ctc,
            batch,
            beam: cfg.beam,
            mean_ms: m,
            std_ms: s,
        });
        let (m, s) = time_ms(cfg.warmup, cfg.repeats, || {
            (0..batch)
                .map(|i| variant_targets[i].iter().map(|t| eval(&lines[i].posteriors, t)).sum::<f64>())
                .sum()
        });
        rows.push(BenchRow {
            method: Method::MultiCtc,
            batch,
            beam: cfg.beam,
            mean_ms: m,
            std_ms: s,
        });
        let (m, s) = time_ms(cfg.warmup, cfg.repeats, || {
            (0..batch).map(|i| eval(&lines[i].posteriors, &soft_targets[i])).sum()
        });
        rows.push(BenchRow {
            method: Method::SoftCtc,
            batch,
            beam: cfg.beam,
            mean_ms: m,
            std_ms: s,
        });
    }

    let n = lines.len().max(1) as f64;
    let confident_share = lines
        .iter()
        .map(|l| {
            let c = l.posteriors.rows().filter(|r| r.iter().any(|&v| v > 0.99)).count();
            c as f64 / l.posteriors.frames() as f64
        })
        .sum::<f64>()
        / n;
    let ambiguous_sets = lines
        .iter()
        .map(|l| l.cn.sets().iter().filter(|s| s.size() > 1).count() as f64)
        .sum::<f64>()
        / n;
    Ok(BenchReport {
        config: cfg.clone(),
        rows,
        confident_share,
        ambiguous_sets,
        softctc_states: soft_targets.iter().map(|t| t.num_states() as f64).sum::<f64>() / n,
        ctc_states: ctc_targets.iter().map(|t| t.num_states() as f64).sum::<f64>() / n,
        compile_ms,
        elapsed_s: started.elapsed().as_secs_f64(),
    })
}
