//! `softctc` command-line tool.
//!
//! Exit codes: 0 success, 1 validation error, 2 infeasible target,
//! 3 I/O error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use softctc::bench::{run_bench, BenchConfig};
use softctc::cn::{merge_cns, outlier_metric, prune, smooth};
use softctc::compile::compile_nbest;
use softctc::decoder::{decode_segments, SegmentKind};
use softctc::io::{read_nbest, read_posteriors, write_matrix, write_nbest, write_target, CnDocument, CnMetadata};
use softctc::{
    compile_cn, ctc_forward_backward, multi_ctc, soft_ctc, CompiledTarget, ConfusionNetwork, ConfusionSet,
    DecodeConfig, Error, LossResult, Strategy, Vocabulary,
};

#[derive(Parser)]
#[command(name = "softctc", version, about = "CTC / SoftCTC losses and confusion-network tooling")]
struct Cli {
    /// Worker threads for corpus commands (0 = all cores).
    #[arg(long, global = true, env = "SOFTCTC_JOBS", default_value_t = 0)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decode a posterior file into a confusion network.
    Decode(DecodeArgs),
    /// Evaluate CTC, SoftCTC or MultiCTC loss against a target.
    Loss(LossArgs),
    /// Merge, prune and smooth confusion networks (in that order).
    Transform(TransformArgs),
    /// Drop the confusion networks with the largest outlier metric.
    Filter(FilterArgs),
    /// Time CTC, MultiCTC and SoftCTC on synthetic lines.
    Bench(BenchArgs),
    /// Brute-force reference computations for small inputs.
    #[command(subcommand)]
    Oracle(OracleCommand),
    /// Print the compiled automaton of a confusion network or n-best list.
    Target(TargetArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Full,
    Partial,
}

#[derive(Args)]
struct DecodeArgs {
    posteriors: PathBuf,
    #[arg(long, default_value_t = 16)]
    beam: usize,
    #[arg(long, value_enum, default_value = "partial")]
    strategy: StrategyArg,
    #[arg(long, default_value_t = 0.99)]
    confidence: f64,
    /// Where to write the confusion network (stdout if omitted).
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Where to write the per-segment n-best lists.
    #[arg(long)]
    nbest: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetKind {
    /// `.json` file → network, other existing file → n-best, else transcript.
    Auto,
    Transcript,
    Cn,
    Nbest,
}

#[derive(Args)]
struct LossArgs {
    posteriors: PathBuf,
    /// Transcript text, confusion-network file or n-best file.
    target: String,
    #[arg(long, value_enum, default_value = "auto")]
    kind: TargetKind,
    /// Score n-best targets with MultiCTC instead of a compiled SoftCTC target.
    #[arg(long)]
    naive: bool,
    /// Write the gradient with respect to the posteriors to this file.
    #[arg(long)]
    grad: Option<PathBuf>,
}

#[derive(Args)]
struct TransformArgs {
    cn: PathBuf,
    /// Further networks to merge with the first.
    #[arg(long, num_args = 1..)]
    merge: Vec<PathBuf>,
    /// Remove symbol alternatives at or below this probability.
    #[arg(long, num_args = 0..=1, default_missing_value = "0.01")]
    prune: Option<f64>,
    /// Take the n-th root of every probability; `inf` makes sets uniform.
    #[arg(long)]
    smooth: Option<String>,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FilterArgs {
    #[arg(required = true)]
    files: Vec<PathBuf>,
    /// Fraction of networks to drop, largest outlier metric first.
    #[arg(long, default_value_t = 0.1)]
    drop_frac: f64,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "16")]
    batch: Vec<usize>,
    #[arg(long, default_value_t = 16)]
    beam: usize,
    #[arg(long, default_value_t = 250)]
    frames: usize,
    #[arg(long, default_value_t = 100)]
    vocab: usize,
    #[arg(long, default_value_t = 30)]
    repeats: usize,
    #[arg(long, default_value_t = 3)]
    warmup: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Print only the machine-readable records.
    #[arg(long)]
    machine: bool,
}

#[derive(Subcommand)]
enum OracleCommand {
    /// CTC probability of a transcript by path enumeration.
    Ctc { posteriors: PathBuf, transcript: String },
    /// All strings encoded by a confusion network.
    Strings { cn: PathBuf },
    /// SoftCTC probability by enumerating variants, next to the fast value.
    Softctc { posteriors: PathBuf, cn: PathBuf },
}

#[derive(Args)]
struct TargetArgs {
    /// Confusion-network (`.json`) or n-best file.
    file: PathBuf,
    /// Posterior file supplying the vocabulary of an n-best file.
    #[arg(long)]
    posteriors: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_posteriors(path: &Path) -> Result<(Vocabulary, softctc::PosteriorMatrix<f64>)> {
    read_posteriors(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn load_cn(path: &Path) -> Result<CnDocument> {
    CnDocument::from_json(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

/// Re-expresses a network's symbols in another vocabulary, by name.
fn remap(doc: &CnDocument, to: &Vocabulary) -> Result<ConfusionNetwork> {
    let sets = doc
        .cn
        .sets()
        .iter()
        .map(|set| {
            let alts = set
                .alternatives()
                .iter()
                .map(|&(s, p)| {
                    let name = doc.vocabulary.name(s);
                    to.lookup(name).map(|t| (t, p)).ok_or_else(|| Error::UnknownSymbol(name.into()))
                })
                .collect::<Result<Vec<_>, _>>()?;
            ConfusionSet::new(alts, set.null_prob())
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(if doc.cn.is_normalized() {
        ConfusionNetwork::normalized(sets)?
    } else {
        ConfusionNetwork::raw(sets, doc.cn.mass())
    })
}

fn parse_smoothing(s: &str) -> Result<f64> {
    if s.eq_ignore_ascii_case("inf") {
        return Ok(f64::INFINITY);
    }
    s.parse().with_context(|| format!("smoothing degree {s:?} is not a number"))
}

fn cmd_decode(args: DecodeArgs) -> Result<()> {
    let (vocab, y) = load_posteriors(&args.posteriors)?;
    let strategy = match args.strategy {
        StrategyArg::Full => Strategy::FullLine,
        StrategyArg::Partial => Strategy::PartialLine,
    };
    let cfg = DecodeConfig::new(args.beam, args.confidence, strategy)?;
    let parts = decode_segments(&y, vocab.blank(), &cfg)?;

    let mut listing = String::new();
    let mut cn = ConfusionNetwork::from_labeling(&softctc::Labeling::empty(), 1.0);
    for part in parts {
        let kind = match part.segment.kind {
            SegmentKind::Confident => "confident",
            SegmentKind::Unconfident => "unconfident",
        };
        listing.push_str(&format!("# segment {} {} {kind}\n", part.segment.start, part.segment.end));
        if let Some(nb) = &part.nbest {
            listing.push_str(&write_nbest(&vocab, nb));
        }
        cn = cn.concat(part.cn);
    }
    let meta = CnMetadata {
        strategy: Some(
            match strategy {
                Strategy::FullLine => "full",
                Strategy::PartialLine => "partial",
            }
            .into(),
        ),
        beam: Some(args.beam),
        ..Default::default()
    };
    write_or_print(args.out.as_deref(), &CnDocument::new(vocab, cn, meta).to_json())?;
    if let Some(path) = &args.nbest {
        fs::write(path, listing).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn cmd_loss(args: LossArgs) -> Result<()> {
    let (vocab, y) = load_posteriors(&args.posteriors)?;
    let path = Path::new(&args.target);
    let kind = match args.kind {
        TargetKind::Auto if path.is_file() => {
            if path.extension().is_some_and(|e| e == "json") {
                TargetKind::Cn
            } else {
                TargetKind::Nbest
            }
        }
        TargetKind::Auto => TargetKind::Transcript,
        k => k,
    };
    let (method, result): (&str, softctc::Result<LossResult<f64>>) = match kind {
        TargetKind::Transcript => {
            let l = vocab.parse_transcript(&args.target)?;
            ("ctc", ctc_forward_backward(&y, &l, &vocab))
        }
        TargetKind::Cn => {
            let cn = remap(&load_cn(path)?, &vocab)?;
            let target: CompiledTarget = compile_cn(&cn, vocab.blank())?;
            ("softctc", soft_ctc(&y, &target))
        }
        TargetKind::Nbest => {
            let nb = read_nbest(&read(path)?, &vocab).with_context(|| format!("parsing {}", path.display()))?;
            if args.naive {
                ("multictc", multi_ctc(&y, &nb, &vocab))
            } else {
                let target: CompiledTarget = compile_nbest(&nb, vocab.blank())?;
                ("softctc", soft_ctc(&y, &target))
            }
        }
        TargetKind::Auto => unreachable!(),
    };
    let r = result?;
    println!("{method} loss {}", r.loss);
    if let Some(g) = &args.grad {
        let grad = softctc::PosteriorMatrix::from_flat(r.frames, r.width, r.grad)?;
        fs::write(g, write_matrix(&vocab, &grad)).with_context(|| format!("writing {}", g.display()))?;
    }
    Ok(())
}

fn cmd_transform(args: TransformArgs) -> Result<()> {
    let first = load_cn(&args.cn)?;
    let vocab = first.vocabulary.clone();
    let mut meta = first.metadata.clone();
    let mut cn = first.cn.clone();
    if !args.merge.is_empty() {
        let mut all = vec![remap(&first, &vocab)?];
        for path in &args.merge {
            all.push(remap(&load_cn(path)?, &vocab)?);
        }
        meta.merged = Some(all.len());
        cn = merge_cns(all)?;
    }
    if !cn.is_normalized() {
        cn = cn.normalize();
    }
    if let Some(cutoff) = args.prune {
        cn = prune(&cn, cutoff)?;
        meta.cutoff = Some(cutoff);
    }
    if let Some(s) = &args.smooth {
        cn = smooth(&cn, parse_smoothing(s)?)?;
        meta.smoothing = Some(s.clone());
    }
    write_or_print(args.out.as_deref(), &CnDocument::new(vocab, cn, meta).to_json())
}

fn cmd_filter(args: FilterArgs) -> Result<()> {
    if !(0.0..1.0).contains(&args.drop_frac) {
        bail!(Error::InvalidArgument(format!(
            "drop fraction {} must lie in [0, 1)",
            args.drop_frac
        )));
    }
    let mut scored: Vec<(f64, PathBuf)> = args
        .files
        .par_iter()
        .map(|p| Ok((outlier_metric(&load_cn(p)?.cn), p.clone())))
        .collect::<Result<_>>()?;
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    let dropped = (args.drop_frac * scored.len() as f64 + 1e-9).floor() as usize;
    let keep = scored.len() - dropped;
    for (i, (m, p)) in scored.iter().enumerate() {
        println!("{}\t{m}\t{}", if i < keep { "keep" } else { "drop" }, p.display());
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let mut cfg = BenchConfig {
        batch_sizes: args.batch,
        beam: args.beam,
        frames: args.frames,
        vocab: args.vocab,
        repeats: args.repeats,
        warmup: args.warmup,
        ..Default::default()
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if cfg.vocab < 4 || cfg.frames == 0 || cfg.beam == 0 || cfg.repeats < 2 || cfg.batch_sizes.contains(&0) {
        bail!(Error::InvalidArgument(
            "bench needs vocab >= 4, frames >= 1, beam >= 1, repeats >= 2 and positive batch sizes".into()
        ));
    }
    // kernels are timed single-threaded
    let report = run_bench(&cfg)?;
    if !args.machine {
        print!("{}", report.to_table());
    }
    print!("{}", report.to_machine());
    Ok(())
}

fn cmd_oracle(cmd: OracleCommand) -> Result<()> {
    use softctc::oracle::{enumerate_cn_strings, enumerate_ctc, oracle_softctc};
    match cmd {
        OracleCommand::Ctc { posteriors, transcript } => {
            let (vocab, y) = load_posteriors(&posteriors)?;
            let l = vocab.parse_transcript(&transcript)?;
            println!("{}", enumerate_ctc(&y, &l, vocab.blank())?);
        }
        OracleCommand::Strings { cn } => {
            let doc = load_cn(&cn)?;
            let strings = enumerate_cn_strings(&doc.cn)?;
            println!("# {} paths, {} distinct strings", strings.paths.len(), strings.merged.len());
            for (l, w) in &strings.merged {
                println!("{w}\t{}", doc.vocabulary.render(l));
            }
        }
        OracleCommand::Softctc { posteriors, cn } => {
            let (vocab, y) = load_posteriors(&posteriors)?;
            let cn = remap(&load_cn(&cn)?, &vocab)?;
            let oracle = oracle_softctc(&y, &cn, vocab.blank())?;
            let target: CompiledTarget = compile_cn(&cn, vocab.blank())?;
            let fast = match soft_ctc(&y, &target) {
                Ok(r) => r.probability(),
                Err(Error::Infeasible) => 0.0,
                Err(e) => return Err(e.into()),
            };
            println!("oracle {oracle}\nsoftctc {fast}");
        }
    }
    Ok(())
}

fn cmd_target(args: TargetArgs) -> Result<()> {
    if args.file.extension().is_some_and(|e| e == "json") {
        let doc = load_cn(&args.file)?;
        let target: CompiledTarget = compile_cn(&doc.cn, doc.vocabulary.blank())?;
        print!("{}", write_target(&doc.vocabulary, &target));
    } else {
        let Some(p) = &args.posteriors else {
            bail!(Error::InvalidArgument("n-best targets need --posteriors for the vocabulary".into()));
        };
        let (vocab, _) = load_posteriors(p)?;
        let nb = read_nbest(&read(&args.file)?, &vocab)?;
        let target: CompiledTarget = compile_nbest(&nb, vocab.blank())?;
        print!("{}", write_target(&vocab, &target));
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return if *e == Error::Infeasible { 2 } else { 1 };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    if cli.jobs > 0 {
        // only fails if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global();
    }
    let result = match cli.command {
        Command::Decode(a) => cmd_decode(a),
        Command::Loss(a) => cmd_loss(a),
        Command::Transform(a) => cmd_transform(a),
        Command::Filter(a) => cmd_filter(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Oracle(c) => cmd_oracle(c),
        Command::Target(a) => cmd_target(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
