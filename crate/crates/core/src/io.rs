//! Text formats: posterior matrices, confusion networks, n-best lists and
//! compiled-target dumps.
//!
//! Posterior (and gradient) files are whitespace-separated tables: a header
//! row naming the vocabulary symbols in column order, with the blank written
//! as `<blank>` and a space symbol as `<space>`, then one row per frame.
//! Blank lines and lines starting with `#` are ignored.
//!
//! Confusion networks are JSON documents: the vocabulary, a metadata block
//! and the ordered sets, each a list of single-entry `{symbol: probability}`
//! objects with `<null>` for the null alternative.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cn::{ConfusionNetwork, ConfusionSet};
use crate::compile::{CompiledTarget, StateRole};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::types::{validate_posteriors, NBestList, PosteriorMatrix, Vocabulary, BLANK_NAME};

pub const NULL_NAME: &str = "<null>";
pub const SPACE_NAME: &str = "<space>";

fn escape(name: &str) -> &str {
    if name == " " {
        SPACE_NAME
    } else {
        name
    }
}

fn unescape(token: &str) -> &str {
    if token == SPACE_NAME {
        " "
    } else {
        token
    }
}

/// Header tokens for `vocab`, blank always spelled `<blank>`.
fn header_names(vocab: &Vocabulary) -> Vec<String> {
    vocab
        .names()
        .iter()
        .enumerate()
        .map(|(i, n)| {
            if i == vocab.blank().index() {
                BLANK_NAME.to_string()
            } else {
                escape(n).to_string()
            }
        })
        .collect()
}

fn vocabulary_from_header(tokens: &[&str], line: usize) -> Result<Vocabulary> {
    let blanks: Vec<usize> = tokens
        .iter()
        .enumerate()
        .filter(|(_, &t)| t == BLANK_NAME)
        .map(|(i, _)| i)
        .collect();
    if blanks.len() != 1 {
        return Err(Error::parse(line, format!("header needs exactly one {BLANK_NAME} column")));
    }
    let names: Vec<String> = tokens.iter().map(|t| unescape(t).to_string()).collect();
    Vocabulary::new(names, blanks[0])
}

/// Serializes a matrix under a vocabulary header. Values are written with
/// shortest round-trip formatting.
pub fn write_matrix<F: Scalar>(vocab: &Vocabulary, m: &PosteriorMatrix<F>) -> String {
    let mut out = header_names(vocab).join(" ");
    out.push('\n');
    for row in m.rows() {
        let mut first = true;
        for v in row {
            if !first {
                out.push(' ');
            }
            first = false;
            write!(out, "{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Parses a header + rows table without checking that rows are
/// distributions (gradient dumps use the same layout).
pub fn read_matrix(text: &str) -> Result<(Vocabulary, PosteriorMatrix<f64>)> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (hline, header) = lines.next().ok_or_else(|| Error::parse(1, "missing header row"))?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    let vocab = vocabulary_from_header(&tokens, hline)?;
    let width = vocab.len();
    let mut data = Vec::new();
    let mut frames = 0;
    for (n, line) in lines {
        let before = data.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::parse(n, format!("{tok:?} is not a number")))?;
            data.push(v);
        }
        if data.len() - before != width {
            return Err(Error::parse(
                n,
                format!("expected {width} values, found {}", data.len() - before),
            ));
        }
        frames += 1;
    }
    Ok((vocab, PosteriorMatrix::from_flat(frames, width, data)?))
}

/// Parses a posterior file and validates every row.
pub fn read_posteriors(text: &str) -> Result<(Vocabulary, PosteriorMatrix<f64>)> {
    let (vocab, y) = read_matrix(text)?;
    validate_posteriors(&y, &vocab)?;
    Ok((vocab, y))
}

/// Provenance recorded alongside a confusion network.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CnMetadata {
    pub normalized: bool,
    pub strategy: Option<String>,
    pub beam: Option<usize>,
    /// Smoothing degree as given on the command line (`"2"`, `"inf"`).
    pub smoothing: Option<String>,
    pub cutoff: Option<f64>,
    /// Number of networks merged into this one.
    pub merged: Option<usize>,
}

/// A confusion network with the vocabulary that names its symbols.
#[derive(Clone, Debug, PartialEq)]
pub struct CnDocument {
    pub vocabulary: Vocabulary,
    pub cn: ConfusionNetwork,
    pub metadata: CnMetadata,
}

#[derive(Serialize, Deserialize)]
struct CnRepr {
    vocabulary: Vec<String>,
    metadata: CnMetadata,
    sets: Vec<Vec<BTreeMap<String, f64>>>,
}

impl CnDocument {
    pub fn new(vocabulary: Vocabulary, cn: ConfusionNetwork, mut metadata: CnMetadata) -> Self {
        metadata.normalized = cn.is_normalized();
        CnDocument {
            vocabulary,
            cn,
            metadata,
        }
    }

    /// Pretty-printed JSON; identical inputs give byte-identical output.
    pub fn to_json(&self) -> String {
        let v = &self.vocabulary;
        let sets = self
            .cn
            .sets()
            .iter()
            .map(|set| {
                let mut entries: Vec<BTreeMap<String, f64>> = set
                    .alternatives()
                    .iter()
                    .map(|&(s, p)| BTreeMap::from([(v.name(s).to_string(), p)]))
                    .collect();
                if set.has_null() {
                    entries.push(BTreeMap::from([(NULL_NAME.to_string(), set.null_prob())]));
                }
                entries
            })
            .collect();
        let repr = CnRepr {
            vocabulary: header_names(v).into_iter().map(|n| unescape(&n).to_string()).collect(),
            metadata: self.metadata.clone(),
            sets,
        };
        let mut out = serde_json::to_string_pretty(&repr).expect("confusion network serializes");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let repr: CnRepr = serde_json::from_str(text).map_err(|e| Error::parse(e.line(), e.to_string()))?;
        let blank = repr
            .vocabulary
            .iter()
            .position(|n| n == BLANK_NAME)
            .ok_or_else(|| Error::InvalidVocabulary(format!("no {BLANK_NAME} entry")))?;
        let vocabulary = Vocabulary::new(repr.vocabulary, blank)?;
        let mut sets = Vec::with_capacity(repr.sets.len());
        for (i, entries) in repr.sets.into_iter().enumerate() {
            let mut alternatives = Vec::new();
            let mut null = 0.0;
            for entry in entries {
                if entry.len() != 1 {
                    return Err(Error::InvalidConfusionNetwork(format!(
                        "set {i}: every entry must map one symbol to its probability"
                    )));
                }
                let (name, p) = entry.into_iter().next().unwrap();
                if name == NULL_NAME {
                    null += p;
                } else {
                    let s = vocabulary.lookup(&name).ok_or(Error::UnknownSymbol(name))?;
                    alternatives.push((s, p));
                }
            }
            sets.push(ConfusionSet::new(alternatives, null)?);
        }
        let cn = if repr.metadata.normalized {
            ConfusionNetwork::normalized(sets)?
        } else {
            let mass = sets.first().map_or(1.0, |s| s.total());
            ConfusionNetwork::raw(sets, mass)
        };
        Ok(CnDocument {
            vocabulary,
            cn,
            metadata: repr.metadata,
        })
    }
}

/// One `weight<TAB>transcript` line per hypothesis.
pub fn write_nbest(vocab: &Vocabulary, nbest: &NBestList) -> String {
    let mut out = String::new();
    for (l, w) in nbest.entries() {
        writeln!(out, "{w}\t{}", vocab.render(l)).unwrap();
    }
    out
}

pub fn read_nbest(text: &str, vocab: &Vocabulary) -> Result<NBestList> {
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (w, transcript) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(i + 1, "expected weight<TAB>transcript"))?;
        let w: f64 = w
            .trim()
            .parse()
            .map_err(|_| Error::parse(i + 1, format!("{w:?} is not a number")))?;
        entries.push((vocab.parse_transcript(transcript)?, w));
    }
    NBestList::new(entries)
}

/// Human-readable listing of a compiled target: states with their start and
/// end weights, then every nonzero transition.
pub fn write_target<F: Scalar>(vocab: &Vocabulary, target: &CompiledTarget<F>) -> String {
    let mut out = String::new();
    writeln!(out, "states {}", target.num_states()).unwrap();
    writeln!(out, "# state group role symbol alpha_hat beta_hat").unwrap();
    for (i, info) in target.states.iter().enumerate() {
        let role = match info.role {
            StateRole::Blank => "blank",
            StateRole::Letter => "letter",
        };
        let sym = target.state_symbols[i];
        let name = if sym == vocab.blank() {
            BLANK_NAME
        } else {
            escape(vocab.name(sym))
        };
        writeln!(
            out,
            "{i} {} {role} {name} {} {}",
            info.group, target.alpha_hat[i], target.beta_hat[i]
        )
        .unwrap();
    }
    writeln!(out, "transitions {}", target.transition.nnz()).unwrap();
    for (r, c, v) in target.transition.entries() {
        writeln!(out, "{r} {c} {v}").unwrap();
    }
    out
}
