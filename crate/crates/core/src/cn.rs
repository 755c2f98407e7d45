//! Confusion networks: construction from n-best lists, merging, smoothing,
//! pruning and the outlier metric.
//!
//! A network is an ordered list of confusion sets. Each set holds scores for
//! a few alternative symbols plus an optional *null* alternative meaning the
//! set contributes no character. Networks come in two flavours: *raw*, where
//! scores are accumulated hypothesis weights and every set carries the same
//! total mass, and *normalized*, where each set is a probability distribution.

use num_bigint::BigUint;

use crate::error::{Error, Result};
use crate::types::{Labeling, NBestList, Symbol};

/// Tolerance on the per-set sum of a normalized confusion set.
pub const SET_SUM_TOLERANCE: f64 = 1e-9;

/// Default cutoff for [`prune`].
pub const DEFAULT_CUTOFF: f64 = 0.01;

/// One position of a confusion network.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfusionSet {
    alternatives: Vec<(Symbol, f64)>,
    null: f64,
}

impl ConfusionSet {
    pub fn new(alternatives: Vec<(Symbol, f64)>, null: f64) -> Result<Self> {
        if alternatives.is_empty() {
            return Err(Error::InvalidConfusionNetwork(
                "a confusion set needs at least one symbol alternative".into(),
            ));
        }
        for (i, &(s, p)) in alternatives.iter().enumerate() {
            if !(p.is_finite() && p >= 0.0) {
                return Err(Error::InvalidConfusionNetwork(format!("score {p} is not a valid weight")));
            }
            if alternatives[..i].iter().any(|&(o, _)| o == s) {
                return Err(Error::InvalidConfusionNetwork(format!("symbol {} listed twice", s.0)));
            }
        }
        if !(null.is_finite() && null >= 0.0) {
            return Err(Error::InvalidConfusionNetwork(format!("null score {null} is not a valid weight")));
        }
        Ok(ConfusionSet { alternatives, null })
    }

    pub fn singleton(symbol: Symbol, score: f64) -> Self {
        ConfusionSet {
            alternatives: vec![(symbol, score)],
            null: 0.0,
        }
    }

    /// Symbol alternatives in insertion order.
    pub fn alternatives(&self) -> &[(Symbol, f64)] {
        &self.alternatives
    }

    pub fn null_prob(&self) -> f64 {
        self.null
    }

    pub fn has_null(&self) -> bool {
        self.null > 0.0
    }

    pub fn prob(&self, symbol: Symbol) -> f64 {
        self.alternatives
            .iter()
            .find(|&&(s, _)| s == symbol)
            .map_or(0.0, |&(_, p)| p)
    }

    /// Sum of all scores, null included. Added smallest first so the result
    /// does not depend on the order alternatives were inserted in.
    pub fn total(&self) -> f64 {
        let mut scores: Vec<f64> = self.alternatives.iter().map(|&(_, p)| p).collect();
        scores.push(self.null);
        scores.sort_by(f64::total_cmp);
        scores.iter().sum()
    }

    /// Number of alternatives, counting null when present.
    pub fn size(&self) -> usize {
        self.alternatives.len() + usize::from(self.has_null())
    }

    /// Highest-scoring alternative, `None` when null outscores every symbol.
    /// Ties go to the earliest symbol; a symbol beats null on a tie.
    pub fn best(&self) -> Option<Symbol> {
        let mut best: Option<(Symbol, f64)> = None;
        for &(s, p) in &self.alternatives {
            if best.map_or(true, |(_, bp)| p > bp) {
                best = Some((s, p));
            }
        }
        match best {
            Some((_, p)) if self.null > p => None,
            Some((s, _)) => Some(s),
            None => None,
        }
    }

    fn add(&mut self, symbol: Symbol, score: f64) {
        match self.alternatives.iter_mut().find(|(s, _)| *s == symbol) {
            Some((_, p)) => *p += score,
            None => self.alternatives.push((symbol, score)),
        }
    }

    fn absorb(&mut self, other: &ConfusionSet) {
        for &(s, p) in &other.alternatives {
            self.add(s, p);
        }
        self.null += other.null;
    }

    /// Divides by the total and drops zero alternatives. Returns `false` when
    /// nothing but null survives, meaning the set should be removed.
    fn normalize(&mut self) -> bool {
        let total = self.total();
        self.alternatives.retain(|&(_, p)| p > 0.0);
        if total <= 0.0 || self.alternatives.is_empty() {
            return false;
        }
        for (_, p) in &mut self.alternatives {
            *p /= total;
        }
        self.null /= total;
        true
    }
}

/// Ordered sequence of confusion sets.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfusionNetwork {
    sets: Vec<ConfusionSet>,
    normalized: bool,
    /// Accumulated hypothesis weight every set carries; 1 once normalized.
    /// Kept separately so a network with no sets still knows its weight.
    mass: f64,
}

impl ConfusionNetwork {
    /// Wraps normalized sets, checking that each one sums to one.
    pub fn normalized(sets: Vec<ConfusionSet>) -> Result<Self> {
        for (i, set) in sets.iter().enumerate() {
            if (set.total() - 1.0).abs() > SET_SUM_TOLERANCE {
                return Err(Error::InvalidConfusionNetwork(format!(
                    "set {i} sums to {} instead of 1",
                    set.total()
                )));
            }
        }
        Ok(ConfusionNetwork {
            sets,
            normalized: true,
            mass: 1.0,
        })
    }

    /// Wraps raw accumulated scores carrying `mass` per set.
    pub fn raw(sets: Vec<ConfusionSet>, mass: f64) -> Self {
        ConfusionNetwork {
            sets,
            normalized: false,
            mass,
        }
    }

    /// Network with one singleton set per symbol of `labeling`.
    pub fn from_labeling(labeling: &Labeling, score: f64) -> Self {
        let sets = labeling
            .symbols()
            .iter()
            .map(|&s| ConfusionSet::singleton(s, score))
            .collect();
        ConfusionNetwork {
            sets,
            normalized: score == 1.0,
            mass: score,
        }
    }

    pub fn sets(&self) -> &[ConfusionSet] {
        &self.sets
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Per-set normalization. Sets left with only null are removed.
    pub fn normalize(mut self) -> Self {
        self.sets.retain_mut(ConfusionSet::normalize);
        self.normalized = true;
        self.mass = 1.0;
        self
    }

    /// Appends the sets of `other`. Both must be normalized.
    pub fn concat(mut self, other: ConfusionNetwork) -> Self {
        debug_assert!(self.normalized && other.normalized);
        self.sets.extend(other.sets);
        self
    }

    fn require_normalized(&self, op: &str) -> Result<()> {
        if self.normalized {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("{op} needs a normalized confusion network")))
        }
    }
}

/// One step of an alignment between a pivot sequence and a hypothesis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EditOp {
    Match { pivot: usize, hyp: usize },
    Substitute { pivot: usize, hyp: usize },
    /// Pivot symbol absent from the hypothesis.
    Delete { pivot: usize },
    /// Hypothesis symbol absent from the pivot.
    Insert { hyp: usize },
}

/// Minimum edit distance alignment of `hyp` against `pivot`.
///
/// Ties between equally cheap alignments are broken left to right,
/// preferring match, then substitution, then deletion, then insertion.
pub fn levenshtein_align(pivot: &[Symbol], hyp: &[Symbol]) -> Vec<EditOp> {
    let a: Vec<Option<Symbol>> = pivot.iter().copied().map(Some).collect();
    let b: Vec<Option<Symbol>> = hyp.iter().copied().map(Some).collect();
    align_tokens(&a, &b)
}

/// Edit distance implied by an alignment from [`levenshtein_align`].
pub fn edit_distance(ops: &[EditOp]) -> usize {
    ops.iter().filter(|op| !matches!(op, EditOp::Match { .. })).count()
}

/// Aligns two token sequences where `None` stands for a set whose best
/// alternative is null. Inserting or deleting a `None` token is free, so the
/// cost equals the Levenshtein distance of the underlying best paths, while
/// the tie-breaking order lets hypothesis symbols land in null-best sets that
/// sit where they would otherwise be inserted.
fn align_tokens(a: &[Option<Symbol>], b: &[Option<Symbol>]) -> Vec<EditOp> {
    let (n, m) = (a.len(), b.len());
    let indel = |t: &Option<Symbol>| u32::from(t.is_some());
    let w = m + 1;
    // dist[i * w + j] = cost of aligning a[i..] with b[j..]
    let mut dist = vec![0u32; (n + 1) * w];
    for i in (0..n).rev() {
        dist[i * w + m] = dist[(i + 1) * w + m] + indel(&a[i]);
    }
    for j in (0..m).rev() {
        dist[n * w + j] = dist[n * w + j + 1] + indel(&b[j]);
    }
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            let diag = dist[(i + 1) * w + j + 1] + u32::from(a[i] != b[j]);
            let del = dist[(i + 1) * w + j] + indel(&a[i]);
            let ins = dist[i * w + j + 1] + indel(&b[j]);
            dist[i * w + j] = diag.min(del).min(ins);
        }
    }

    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (0, 0);
    while i < n || j < m {
        let here = dist[i * w + j];
        if i < n && j < m {
            let same = a[i] == b[j];
            if here == dist[(i + 1) * w + j + 1] + u32::from(!same) {
                ops.push(if same {
                    EditOp::Match { pivot: i, hyp: j }
                } else {
                    EditOp::Substitute { pivot: i, hyp: j }
                });
                i += 1;
                j += 1;
                continue;
            }
        }
        if i < n && here == dist[(i + 1) * w + j] + indel(&a[i]) {
            ops.push(EditOp::Delete { pivot: i });
            i += 1;
        } else {
            ops.push(EditOp::Insert { hyp: j });
            j += 1;
        }
    }
    ops
}

/// Labeling formed by the best alternative of every set; sets won by null
/// contribute nothing.
pub fn best_path(cn: &ConfusionNetwork) -> Labeling {
    Labeling(cn.sets.iter().filter_map(ConfusionSet::best).collect())
}

/// Folds `other` into `acc`: the best paths of both are aligned and aligned
/// sets summed. A set present on one side only gains the other side's mass
/// as null, so every set keeps carrying the combined mass.
fn merge_into(acc: &mut ConfusionNetwork, other: ConfusionNetwork) {
    let left: Vec<Option<Symbol>> = acc.sets.iter().map(ConfusionSet::best).collect();
    let right: Vec<Option<Symbol>> = other.sets.iter().map(ConfusionSet::best).collect();
    let ops = align_tokens(&left, &right);

    let mut old = std::mem::take(&mut acc.sets).into_iter().map(Some).collect::<Vec<_>>();
    let mut incoming = other.sets.into_iter().map(Some).collect::<Vec<_>>();
    let mut merged = Vec::with_capacity(ops.len());
    for op in ops {
        let set = match op {
            EditOp::Match { pivot, hyp } | EditOp::Substitute { pivot, hyp } => {
                let mut set = old[pivot].take().unwrap();
                set.absorb(incoming[hyp].as_ref().unwrap());
                set
            }
            EditOp::Delete { pivot } => {
                let mut set = old[pivot].take().unwrap();
                set.null += other.mass;
                set
            }
            EditOp::Insert { hyp } => {
                let mut set = incoming[hyp].take().unwrap();
                set.null += acc.mass;
                set
            }
        };
        merged.push(set);
    }
    acc.sets = merged;
    acc.mass += other.mass;
    acc.normalized = false;
}

/// Raw network built from an n-best list: hypotheses are folded in by
/// descending weight, each aligned to the current best path.
///
/// Scores stay unnormalized so the result can be merged with other networks.
pub fn build_cn_raw(nbest: &NBestList) -> Result<ConfusionNetwork> {
    let sorted = nbest.sorted_desc();
    let Some(((top, top_weight), rest)) = sorted.split_first() else {
        return Err(Error::InvalidNBest("cannot build a confusion network from an empty list".into()));
    };
    let mut cn = ConfusionNetwork::from_labeling(top, *top_weight);
    cn.normalized = false;
    for (hyp, weight) in rest {
        let mut path = ConfusionNetwork::from_labeling(hyp, *weight);
        path.normalized = false;
        merge_into(&mut cn, path);
    }
    Ok(cn)
}

/// Normalized confusion network built from an n-best list.
pub fn build_cn(nbest: &NBestList) -> Result<ConfusionNetwork> {
    Ok(build_cn_raw(nbest)?.normalize())
}

/// Merges raw networks (for example from augmented copies of one line) and
/// normalizes once at the end, so each input is weighted by its total mass.
pub fn merge_cns(cns: Vec<ConfusionNetwork>) -> Result<ConfusionNetwork> {
    let mut iter = cns.into_iter();
    let Some(mut acc) = iter.next() else {
        return Err(Error::InvalidArgument("merge needs at least one confusion network".into()));
    };
    for cn in iter {
        merge_into(&mut acc, cn);
    }
    Ok(acc.normalize())
}

/// Replaces every probability, null included, by its `n`-th root and
/// renormalizes. `n = ∞` makes each set uniform over its alternatives.
pub fn smooth(cn: &ConfusionNetwork, n: f64) -> Result<ConfusionNetwork> {
    cn.require_normalized("smoothing")?;
    if !(n >= 1.0) {
        return Err(Error::InvalidArgument(format!("smoothing degree {n} must be >= 1")));
    }
    let root = |p: f64| {
        if n.is_infinite() {
            if p > 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            p.powf(1.0 / n)
        }
    };
    let mut out = cn.clone();
    for set in &mut out.sets {
        for (_, p) in &mut set.alternatives {
            *p = root(*p);
        }
        set.null = root(set.null);
    }
    out.normalized = false;
    Ok(out.normalize())
}

/// Removes symbol alternatives with probability at or below `cutoff` and
/// renormalizes. Null is never pruned; a set that would lose every symbol
/// keeps its best one.
pub fn prune(cn: &ConfusionNetwork, cutoff: f64) -> Result<ConfusionNetwork> {
    cn.require_normalized("pruning")?;
    if !(0.0..1.0).contains(&cutoff) {
        return Err(Error::InvalidArgument(format!("cutoff {cutoff} must lie in [0, 1)")));
    }
    let mut out = cn.clone();
    for set in &mut out.sets {
        let top = set
            .alternatives
            .iter()
            .copied()
            .reduce(|best, alt| if alt.1 > best.1 { alt } else { best });
        set.alternatives.retain(|&(_, p)| p > cutoff);
        if set.alternatives.is_empty() {
            set.alternatives.extend(top);
        }
    }
    out.normalized = false;
    Ok(out.normalize())
}

/// Prune-then-smooth pipeline used when preparing soft pseudo-labels.
pub fn prepare_target(cn: &ConfusionNetwork, cutoff: Option<f64>, smoothing: Option<f64>) -> Result<ConfusionNetwork> {
    let mut out = cn.clone();
    if !out.normalized {
        out = out.normalize();
    }
    if let Some(cutoff) = cutoff {
        out = prune(&out, cutoff)?;
    }
    if let Some(n) = smoothing {
        out = smooth(&out, n)?;
    }
    Ok(out)
}

/// Product of set sizes (null counted) divided by the number of sets.
/// Large values flag lines with many competing transcriptions.
pub fn outlier_metric(cn: &ConfusionNetwork) -> f64 {
    if cn.sets.is_empty() {
        return 0.0;
    }
    let product: f64 = cn.sets.iter().map(|s| s.size() as f64).product();
    product / cn.sets.len() as f64
}

/// Number of per-set choice combinations, null counted as a choice.
pub fn count_variant_paths(cn: &ConfusionNetwork) -> BigUint {
    cn.sets
        .iter()
        .fold(BigUint::from(1u32), |acc, s| acc * BigUint::from(s.size()))
}
