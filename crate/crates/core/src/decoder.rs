//! Turning posterior matrices into n-best lists and confusion networks.
//!
//! Two strategies are supported. *Full line* runs prefix beam search over
//! the whole line. *Partial line* only beam-decodes unconfident stretches
//! (runs between confidently predicted blanks that contain at least one
//! frame with no confident symbol) and greedy-decodes the rest.

use std::collections::HashMap;

use crate::cn::{build_cn, ConfusionNetwork};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::types::{Labeling, NBestList, PosteriorMatrix, Symbol};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    FullLine,
    PartialLine,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecodeConfig {
    pub beam_size: usize,
    pub confidence_threshold: f64,
    pub strategy: Strategy,
}

impl DecodeConfig {
    pub fn new(beam_size: usize, confidence_threshold: f64, strategy: Strategy) -> Result<Self> {
        if beam_size == 0 {
            return Err(Error::InvalidArgument("beam size must be at least 1".into()));
        }
        if !(confidence_threshold > 0.5 && confidence_threshold < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "confidence threshold {confidence_threshold} must lie in (0.5, 1)"
            )));
        }
        Ok(DecodeConfig {
            beam_size,
            confidence_threshold,
            strategy,
        })
    }

    /// Beam 128 over whole lines.
    pub fn full_line() -> Self {
        DecodeConfig {
            beam_size: 128,
            confidence_threshold: 0.99,
            strategy: Strategy::FullLine,
        }
    }

    /// Beam 16 over unconfident stretches only.
    pub fn partial_line() -> Self {
        DecodeConfig {
            beam_size: 16,
            confidence_threshold: 0.99,
            strategy: Strategy::PartialLine,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SegmentKind {
    Confident,
    Unconfident,
}

/// Half-open frame range `start..end` (0-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub kind: SegmentKind,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

fn argmax<F: Scalar>(row: &[F]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = k;
        }
    }
    best
}

/// Best path decoding: per-frame argmax, repeats merged, blanks removed.
pub fn greedy_decode<F: Scalar>(y: &PosteriorMatrix<F>, blank: Symbol) -> Labeling {
    let mut out = Vec::new();
    let mut prev = None;
    for row in y.rows() {
        let k = Symbol::from(argmax(row));
        if Some(k) != prev && k != blank {
            out.push(k);
        }
        prev = Some(k);
    }
    Labeling(out)
}

/// Probability of the single best path, `Π_t max_k y_t(k)`.
fn greedy_path_probability<F: Scalar>(y: &PosteriorMatrix<F>) -> f64 {
    y.rows().map(|row| row[argmax(row)].widen()).product()
}

#[derive(Clone, Copy, Default)]
struct Mass {
    blank: f64,
    non_blank: f64,
}

impl Mass {
    fn total(self) -> f64 {
        self.blank + self.non_blank
    }
}

/// Prefixes stored as a trie so extending a beam entry is O(1).
struct PrefixTrie {
    nodes: Vec<(usize, Symbol)>,
    children: HashMap<(usize, Symbol), usize>,
}

impl PrefixTrie {
    const ROOT: usize = 0;

    fn new() -> Self {
        PrefixTrie {
            nodes: vec![(0, Symbol(u32::MAX))],
            children: HashMap::new(),
        }
    }

    fn child(&mut self, node: usize, symbol: Symbol) -> usize {
        let next = self.nodes.len();
        let id = *self.children.entry((node, symbol)).or_insert(next);
        if id == next {
            self.nodes.push((node, symbol));
        }
        id
    }

    fn last(&self, node: usize) -> Option<Symbol> {
        (node != Self::ROOT).then(|| self.nodes[node].1)
    }

    fn labeling(&self, mut node: usize) -> Labeling {
        let mut out = Vec::new();
        while node != Self::ROOT {
            out.push(self.nodes[node].1);
            node = self.nodes[node].0;
        }
        out.reverse();
        Labeling(out)
    }
}

/// CTC prefix beam search.
///
/// Each prefix tracks the mass of paths ending in blank and in its last
/// symbol; after every frame only the `beam` prefixes with the largest total
/// survive. Scores are the surviving path mass of each prefix, so they never
/// exceed the prefix's true posterior. Output is sorted by descending score.
pub fn prefix_beam_search<F: Scalar>(y: &PosteriorMatrix<F>, blank: Symbol, beam: usize) -> Result<NBestList> {
    if beam == 0 {
        return Err(Error::InvalidArgument("beam size must be at least 1".into()));
    }
    let mut trie = PrefixTrie::new();
    let mut beams: Vec<(usize, Mass)> = vec![(
        PrefixTrie::ROOT,
        Mass {
            blank: 1.0,
            non_blank: 0.0,
        },
    )];
    // masses are renormalized by the best total each frame; the log of the
    // factors restores absolute scores at the end
    let mut log_offset = 0.0;
    let mut next: HashMap<usize, Mass> = HashMap::new();

    for row in y.rows() {
        next.clear();
        let p_blank = row[blank.index()].widen();
        for &(node, mass) in &beams {
            let total = mass.total();
            if p_blank > 0.0 {
                next.entry(node).or_default().blank += total * p_blank;
            }
            let last = trie.last(node);
            if let Some(last) = last {
                let p = row[last.index()].widen();
                if p > 0.0 {
                    next.entry(node).or_default().non_blank += mass.non_blank * p;
                }
            }
            for (k, &p) in row.iter().enumerate() {
                let p = p.widen();
                let symbol = Symbol::from(k);
                if symbol == blank || p <= 0.0 {
                    continue;
                }
                let child = trie.child(node, symbol);
                let carried = if last == Some(symbol) { mass.blank } else { total };
                next.entry(child).or_default().non_blank += carried * p;
            }
        }
        beams = next.iter().map(|(&n, &m)| (n, m)).filter(|(_, m)| m.total() > 0.0).collect();
        beams.sort_by(|a, b| b.1.total().total_cmp(&a.1.total()).then(a.0.cmp(&b.0)));
        beams.truncate(beam);
        let top = beams.first().map_or(0.0, |b| b.1.total());
        if top > 0.0 {
            for (_, m) in &mut beams {
                m.blank /= top;
                m.non_blank /= top;
            }
            log_offset += top.ln();
        }
    }

    let scale = log_offset.exp();
    let relative = !(scale > 0.0);
    let entries = beams
        .iter()
        .map(|&(node, m)| {
            let score = if relative { m.total() } else { m.total() * scale };
            (trie.labeling(node), score)
        })
        .filter(|(_, s)| *s > 0.0)
        .collect();
    NBestList::new(entries)
}

/// Splits a line into confident and unconfident segments.
///
/// A frame holds a confident symbol when some entry (blank included) exceeds
/// `threshold`, and a confident blank when the blank does. Unconfident
/// segments are maximal runs between confident blanks (line edges count as
/// such) containing a frame with no confident symbol; everything else forms
/// confident segments. The result partitions `0..frames` in order.
pub fn segment_line<F: Scalar>(y: &PosteriorMatrix<F>, blank: Symbol, threshold: f64) -> Vec<Segment> {
    let th = F::of(threshold);
    let frames = y.frames();
    let confident_blank: Vec<bool> = y.rows().map(|r| r[blank.index()] > th).collect();
    let confident: Vec<bool> = y.rows().map(|r| r.iter().any(|&v| v > th)).collect();

    let mut unconfident = Vec::new();
    let mut t = 0;
    while t < frames {
        if confident_blank[t] {
            t += 1;
            continue;
        }
        let start = t;
        while t < frames && !confident_blank[t] {
            t += 1;
        }
        if confident[start..t].iter().any(|&c| !c) {
            unconfident.push((start, t));
        }
    }

    let mut segments = Vec::with_capacity(2 * unconfident.len() + 1);
    let mut cursor = 0;
    for (start, end) in unconfident {
        if start > cursor {
            segments.push(Segment {
                start: cursor,
                end: start,
                kind: SegmentKind::Confident,
            });
        }
        segments.push(Segment {
            start,
            end,
            kind: SegmentKind::Unconfident,
        });
        cursor = end;
    }
    if cursor < frames {
        segments.push(Segment {
            start: cursor,
            end: frames,
            kind: SegmentKind::Confident,
        });
    }
    segments
}

/// Decoding result for one stretch of a line.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodedSegment {
    pub segment: Segment,
    /// Beam-search hypotheses, absent for greedy-decoded stretches.
    pub nbest: Option<NBestList>,
    pub cn: ConfusionNetwork,
}

/// Beam-decodes `y` and builds a network from the hypotheses. The greedy
/// labeling is added with its best-path probability if the beam dropped it,
/// so it always remains a path through the network.
fn beam_region<F: Scalar>(y: &PosteriorMatrix<F>, blank: Symbol, beam: usize) -> Result<(NBestList, ConfusionNetwork)> {
    let mut nbest = prefix_beam_search(y, blank, beam)?;
    let greedy = greedy_decode(y, blank);
    if !nbest.entries().iter().any(|(l, _)| *l == greedy) {
        let weight = greedy_path_probability(y).max(f64::MIN_POSITIVE);
        let mut entries = nbest.entries().to_vec();
        entries.push((greedy, weight));
        nbest = NBestList::new(entries)?;
    }
    let cn = build_cn(&nbest)?;
    Ok((nbest, cn))
}

/// Per-segment decoding according to `cfg`.
pub fn decode_segments<F: Scalar>(y: &PosteriorMatrix<F>, blank: Symbol, cfg: &DecodeConfig) -> Result<Vec<DecodedSegment>> {
    match cfg.strategy {
        Strategy::FullLine => {
            let any_unconfident = segment_line(y, blank, cfg.confidence_threshold)
                .iter()
                .any(|s| s.kind == SegmentKind::Unconfident);
            let segment = Segment {
                start: 0,
                end: y.frames(),
                kind: if any_unconfident {
                    SegmentKind::Unconfident
                } else {
                    SegmentKind::Confident
                },
            };
            let (nbest, cn) = beam_region(y, blank, cfg.beam_size)?;
            Ok(vec![DecodedSegment {
                segment,
                nbest: Some(nbest),
                cn,
            }])
        }
        Strategy::PartialLine => segment_line(y, blank, cfg.confidence_threshold)
            .into_iter()
            .map(|segment| {
                let part = y.slice_frames(segment.start, segment.end);
                match segment.kind {
                    SegmentKind::Confident => Ok(DecodedSegment {
                        segment,
                        nbest: None,
                        cn: ConfusionNetwork::from_labeling(&greedy_decode(&part, blank), 1.0),
                    }),
                    SegmentKind::Unconfident => {
                        let (nbest, cn) = beam_region(&part, blank, cfg.beam_size)?;
                        Ok(DecodedSegment {
                            segment,
                            nbest: Some(nbest),
                            cn,
                        })
                    }
                }
            })
            .collect(),
    }
}

/// Confusion network for a whole line: the per-segment networks of
/// [`decode_segments`] concatenated in frame order.
pub fn decode_to_cn<F: Scalar>(y: &PosteriorMatrix<F>, blank: Symbol, cfg: &DecodeConfig) -> Result<ConfusionNetwork> {
    let empty = ConfusionNetwork::from_labeling(&Labeling::empty(), 1.0);
    Ok(decode_segments(y, blank, cfg)?
        .into_iter()
        .fold(empty, |acc, part| acc.concat(part.cn)))
}
