//! Compilation of confusion networks and n-best lists into the sparse
//! automaton the forward-backward kernel runs on.
//!
//! A confusion network first becomes a *transcription confusion model*: one
//! character confusion group per confusion set (a blank state, one state per
//! letter, and an ε-transition that bypasses the group with the set's null
//! probability) plus a terminal blank-only group. The model is then lowered
//! to an upper-triangular weight matrix `A` and the start/end weight vectors.

use crate::cn::ConfusionNetwork;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sparse::CsrMatrix;
use crate::types::{NBestList, Symbol};

/// Null probabilities at or above `1 - DEGENERATE_EPSILON` are rejected.
pub const DEGENERATE_EPSILON: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StateRole {
    Blank,
    Letter,
}

/// Where a state came from: its group (confusion group, or n-best chain)
/// and whether it emits blank or a letter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StateInfo {
    pub group: usize,
    pub role: StateRole,
}

/// Executable form of a training target.
///
/// `q_t(i) = y_t(state_symbols[i])`; the forward recursion is
/// `α_t = (α_{t-1} A) ⊙ q_t` seeded with `α_1 = alpha_hat ⊙ q_1`, and the
/// backward one is `β_t = (β_{t+1} Aᵀ) ⊙ q_t` seeded with `β_T = beta_hat ⊙ q_T`.
/// Entries of `A` are weights, not probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct CompiledTarget<F = f64> {
    pub transition: CsrMatrix<F>,
    pub state_symbols: Vec<Symbol>,
    pub alpha_hat: Vec<F>,
    pub beta_hat: Vec<F>,
    pub states: Vec<StateInfo>,
}

impl<F: Scalar> CompiledTarget<F> {
    pub fn num_states(&self) -> usize {
        self.state_symbols.len()
    }

    pub fn cast<G: Scalar>(&self) -> CompiledTarget<G> {
        CompiledTarget {
            transition: self.transition.cast(),
            state_symbols: self.state_symbols.clone(),
            alpha_hat: self.alpha_hat.iter().map(|&v| G::of(v.widen())).collect(),
            beta_hat: self.beta_hat.iter().map(|&v| G::of(v.widen())).collect(),
            states: self.states.clone(),
        }
    }

    /// Checks that every state symbol indexes a column of a `width`-wide
    /// posterior matrix.
    pub fn check_width(&self, width: usize) -> Result<()> {
        match self.state_symbols.iter().find(|s| s.index() >= width) {
            Some(s) => Err(Error::ShapeMismatch {
                expected: format!("symbols below {width}"),
                found: format!("state symbol {}", s.0),
            }),
            None => Ok(()),
        }
    }

    /// Structural checks: upper triangular, unit diagonal, entries in (0, 1].
    pub fn check_structure(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidArgument(m));
        let n = self.num_states();
        if self.transition.size() != n || self.alpha_hat.len() != n || self.beta_hat.len() != n || self.states.len() != n {
            return fail("inconsistent state counts".into());
        }
        if !self.transition.is_upper_triangular() {
            return fail("transition matrix is not upper triangular".into());
        }
        for i in 0..n {
            if self.transition.get(i, i) != F::one() {
                return fail(format!("state {i} lacks a unit self-loop"));
            }
        }
        let one = F::one() + F::of(1e-12);
        if let Some((r, c, v)) = self.transition.entries().find(|&(_, _, v)| !(v > F::zero() && v <= one)) {
            return fail(format!("entry ({r}, {c}) = {v} outside (0, 1]"));
        }
        Ok(())
    }
}

/// One confusion set lowered to automaton form.
#[derive(Clone, Debug, PartialEq)]
pub struct CharacterConfusionGroup {
    /// Entry weight of the blank state, `1 - epsilon`.
    pub blank_weight: f64,
    pub letter_weights: Vec<(Symbol, f64)>,
    /// Weight of the ε-transition bypassing the group.
    pub epsilon: f64,
}

impl CharacterConfusionGroup {
    fn terminal() -> Self {
        CharacterConfusionGroup {
            blank_weight: 1.0,
            letter_weights: Vec::new(),
            epsilon: 0.0,
        }
    }

    /// Entry weight of the `k`-th state: 0 is the blank, `k ≥ 1` letters.
    fn entry_weight(&self, k: usize) -> f64 {
        if k == 0 {
            self.blank_weight
        } else {
            self.letter_weights[k - 1].1
        }
    }

    fn state_count(&self) -> usize {
        1 + self.letter_weights.len()
    }
}

/// Ordered character confusion groups; the last one is the terminal blank
/// group that lets an alignment end on trailing blanks.
#[derive(Clone, Debug, PartialEq)]
pub struct TranscriptionConfusionModel {
    pub groups: Vec<CharacterConfusionGroup>,
    pub blank: Symbol,
}

impl TranscriptionConfusionModel {
    /// Number of groups including the terminal one.
    pub fn group_count(&self) -> usize {
        self.groups.len()
    }
}

/// Builds the transcription confusion model of a normalized network.
pub fn build_tcm(cn: &ConfusionNetwork, blank: Symbol) -> Result<TranscriptionConfusionModel> {
    if !cn.is_normalized() {
        return Err(Error::InvalidArgument("target compilation needs a normalized confusion network".into()));
    }
    let mut groups = Vec::with_capacity(cn.len() + 1);
    for (i, set) in cn.sets().iter().enumerate() {
        let epsilon = set.null_prob();
        if epsilon >= 1.0 - DEGENERATE_EPSILON {
            return Err(Error::DegenerateSet(i));
        }
        if set.alternatives().iter().any(|&(s, _)| s == blank) {
            return Err(Error::InvalidConfusionNetwork(format!("set {i} contains the blank symbol")));
        }
        groups.push(CharacterConfusionGroup {
            blank_weight: 1.0 - epsilon,
            letter_weights: set.alternatives().to_vec(),
            epsilon,
        });
    }
    groups.push(CharacterConfusionGroup::terminal());
    Ok(TranscriptionConfusionModel { groups, blank })
}

/// State layout shared by [`compile`] and [`initial_vectors`]: groups left
/// to right, blank first within each group.
fn layout(tcm: &TranscriptionConfusionModel) -> (Vec<usize>, Vec<Symbol>, Vec<StateInfo>) {
    let mut offsets = Vec::with_capacity(tcm.groups.len());
    let mut symbols = Vec::new();
    let mut states = Vec::new();
    for (g, group) in tcm.groups.iter().enumerate() {
        offsets.push(symbols.len());
        symbols.push(tcm.blank);
        states.push(StateInfo {
            group: g,
            role: StateRole::Blank,
        });
        for &(s, _) in &group.letter_weights {
            symbols.push(s);
            states.push(StateInfo {
                group: g,
                role: StateRole::Letter,
            });
        }
    }
    (offsets, symbols, states)
}

/// Start and end weight vectors of the compiled model.
///
/// A state may start an alignment with weight equal to the product of the
/// ε-weights of all earlier groups times its own entry weight. Letter states
/// may end it with the product of ε-weights of all later non-terminal
/// groups; the terminal blank always may.
pub fn initial_vectors(tcm: &TranscriptionConfusionModel) -> (Vec<f64>, Vec<f64>) {
    let (offsets, symbols, _) = layout(tcm);
    let n = symbols.len();
    let last = tcm.groups.len() - 1;
    let mut alpha_hat = vec![0.0; n];
    let mut beta_hat = vec![0.0; n];

    let mut skip_before = 1.0;
    for (g, group) in tcm.groups.iter().enumerate() {
        for k in 0..group.state_count() {
            alpha_hat[offsets[g] + k] = skip_before * group.entry_weight(k);
        }
        skip_before *= group.epsilon;
    }

    let mut skip_after = 1.0;
    for g in (0..last).rev() {
        let group = &tcm.groups[g];
        for k in 1..group.state_count() {
            beta_hat[offsets[g] + k] = skip_after;
        }
        skip_after *= group.epsilon;
    }
    beta_hat[offsets[last]] = 1.0;
    (alpha_hat, beta_hat)
}

/// Lowers a transcription confusion model to a compiled target.
///
/// Nonzero entries of `A`:
/// * unit self-loops;
/// * blank → letter of the same group, weight `p(X) / (1 - ε)`;
/// * letter → any state of a later group with a different symbol, weight
///   equal to the product of ε-weights of the groups skipped in between
///   times the entry weight of the destination. Chains stop at the first
///   group that cannot be skipped.
pub fn compile<F: Scalar>(tcm: &TranscriptionConfusionModel) -> CompiledTarget<F> {
    let (offsets, symbols, states) = layout(tcm);
    let n = symbols.len();
    let mut triplets = Vec::with_capacity(3 * n);
    for i in 0..n {
        triplets.push((i, i, 1.0));
    }
    for (g, group) in tcm.groups.iter().enumerate() {
        let blank_state = offsets[g];
        for k in 1..group.state_count() {
            triplets.push((blank_state, blank_state + k, group.entry_weight(k) / group.blank_weight));
        }
        for k in 1..group.state_count() {
            let from = offsets[g] + k;
            let mut skipped = 1.0;
            for (h, target) in tcm.groups.iter().enumerate().skip(g + 1) {
                for j in 0..target.state_count() {
                    let to = offsets[h] + j;
                    if symbols[to] != symbols[from] {
                        triplets.push((from, to, skipped * target.entry_weight(j)));
                    }
                }
                skipped *= target.epsilon;
                if skipped == 0.0 {
                    break;
                }
            }
        }
    }
    let (alpha_hat, beta_hat) = initial_vectors(tcm);
    CompiledTarget {
        transition: CsrMatrix::from_triplets(n, triplets),
        state_symbols: symbols,
        alpha_hat,
        beta_hat,
        states,
    }
    .cast()
}

/// Convenience: [`build_tcm`] followed by [`compile`].
pub fn compile_cn<F: Scalar>(cn: &ConfusionNetwork, blank: Symbol) -> Result<CompiledTarget<F>> {
    Ok(compile(&build_tcm(cn, blank)?))
}

/// Encodes an n-best list as parallel linear chains sharing one initial and
/// one final blank state. Weights are normalized to sum to one first.
///
/// Variant weights sit on the edges leaving the shared initial blank and on
/// the start weights of the first letters. Any chain may end on its last
/// letter or on the shared final blank at no cost. An empty variant ends in
/// the initial blank with its weight.
pub fn compile_nbest<F: Scalar>(nbest: &NBestList, blank: Symbol) -> Result<CompiledTarget<F>> {
    if nbest.is_empty() {
        return Err(Error::InvalidNBest("cannot compile an empty list".into()));
    }
    let nbest = nbest.normalized();
    let mut symbols = vec![blank];
    let mut states = vec![StateInfo {
        group: 0,
        role: StateRole::Blank,
    }];
    let mut alpha_hat = vec![1.0];
    let mut beta_hat = vec![0.0];
    let mut triplets = vec![(0, 0, 1.0)];
    let mut chain_ends = Vec::new();

    for (v, (labeling, weight)) in nbest.entries().iter().enumerate() {
        if labeling.is_empty() {
            beta_hat[0] += weight;
            continue;
        }
        let group = v + 1;
        let mut prev_letter: Option<(usize, Symbol)> = None;
        for (pos, &sym) in labeling.symbols().iter().enumerate() {
            if pos > 0 {
                let b = symbols.len();
                symbols.push(blank);
                states.push(StateInfo {
                    group,
                    role: StateRole::Blank,
                });
                alpha_hat.push(0.0);
                beta_hat.push(0.0);
                triplets.push((b, b, 1.0));
                triplets.push((prev_letter.unwrap().0, b, 1.0));
            }
            let l = symbols.len();
            symbols.push(sym);
            states.push(StateInfo {
                group,
                role: StateRole::Letter,
            });
            alpha_hat.push(if pos == 0 { *weight } else { 0.0 });
            beta_hat.push(0.0);
            triplets.push((l, l, 1.0));
            match prev_letter {
                None => triplets.push((0, l, *weight)),
                Some((p, psym)) => {
                    triplets.push((l - 1, l, 1.0));
                    if psym != sym {
                        triplets.push((p, l, 1.0));
                    }
                }
            }
            prev_letter = Some((l, sym));
        }
        let last = prev_letter.unwrap().0;
        beta_hat[last] = 1.0;
        chain_ends.push(last);
    }

    if !chain_ends.is_empty() {
        let fin = symbols.len();
        symbols.push(blank);
        states.push(StateInfo {
            group: nbest.len() + 1,
            role: StateRole::Blank,
        });
        alpha_hat.push(0.0);
        beta_hat.push(1.0);
        triplets.push((fin, fin, 1.0));
        triplets.extend(chain_ends.iter().map(|&e| (e, fin, 1.0)));
    }

    let n = symbols.len();
    Ok(CompiledTarget {
        transition: CsrMatrix::from_triplets(n, triplets),
        state_symbols: symbols,
        alpha_hat,
        beta_hat,
        states,
    }
    .cast())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cn::{ConfusionNetwork, ConfusionSet};
    use crate::types::Labeling;

    const BLANK: Symbol = Symbol(0);
    const A: Symbol = Symbol(1);
    const B: Symbol = Symbol(2);
    const C: Symbol = Symbol(3);
    const T: Symbol = Symbol(4);
    const U: Symbol = Symbol(5);

    fn cn(sets: Vec<(Vec<(Symbol, f64)>, f64)>) -> ConfusionNetwork {
        ConfusionNetwork::normalized(sets.into_iter().map(|(a, n)| ConfusionSet::new(a, n).unwrap()).collect())
            .unwrap()
    }

    fn dense(t: &CompiledTarget<f64>) -> Vec<Vec<f64>> {
        let n = t.num_states();
        (0..n).map(|r| (0..n).map(|c| t.transition.get(r, c)).collect()).collect()
    }

    #[test]
    fn single_trivial_set() {
        let tcm = build_tcm(&cn(vec![(vec![(A, 1.0)], 0.0)]), BLANK).unwrap();
        assert_eq!(tcm.group_count(), 2);
        assert_eq!(tcm.groups[0].blank_weight, 1.0);
        assert_eq!(tcm.groups[0].letter_weights, vec![(A, 1.0)]);
        assert_eq!(tcm.groups[0].epsilon, 0.0);
        assert_eq!(tcm.groups[1], CharacterConfusionGroup::terminal());
    }

    #[test]
    fn null_becomes_epsilon() {
        let tcm = build_tcm(&cn(vec![(vec![(A, 0.9)], 0.1)]), BLANK).unwrap();
        let g = &tcm.groups[0];
        assert!((g.epsilon - 0.1).abs() < 1e-15);
        assert!((g.blank_weight - 0.9).abs() < 1e-15);
        assert_eq!(g.letter_weights, vec![(A, 0.9)]);
    }

    #[test]
    fn degenerate_and_blank_sets_are_rejected() {
        let tiny = cn(vec![(vec![(A, 1e-10)], 1.0 - 1e-10)]);
        assert_eq!(build_tcm(&tiny, BLANK), Err(Error::DegenerateSet(0)));
        assert!(build_tcm(&cn(vec![(vec![(BLANK, 1.0)], 0.0)]), BLANK).is_err());
    }

    #[test]
    fn trivial_cat_matches_linear_ctc_structure() {
        let t: CompiledTarget = compile_cn(&ConfusionNetwork::from_labeling(&Labeling(vec![C, A, T]), 1.0), BLANK)
            .unwrap();
        assert_eq!(t.state_symbols, vec![BLANK, C, BLANK, A, BLANK, T, BLANK]);
        let mut expected = vec![vec![0.0; 7]; 7];
        for i in 0..7 {
            expected[i][i] = 1.0;
            if i + 1 < 7 {
                expected[i][i + 1] = 1.0;
            }
        }
        expected[1][3] = 1.0;
        expected[3][5] = 1.0;
        assert_eq!(dense(&t), expected);
        assert_eq!(t.alpha_hat, vec![1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(t.beta_hat, vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
        t.check_structure().unwrap();
    }

    #[test]
    fn repeated_symbol_across_groups_has_no_direct_edge() {
        let t: CompiledTarget = compile_cn(&ConfusionNetwork::from_labeling(&Labeling(vec![T, T]), 1.0), BLANK)
            .unwrap();
        assert_eq!(t.transition.get(1, 3), 0.0);
        assert_eq!(t.transition.get(1, 2), 1.0);
        assert_eq!(t.transition.get(2, 3), 1.0);
    }

    #[test]
    fn skippable_group_edges() {
        // groups [{a:0.9, ε:0.1}, {b:1.0}]
        let t: CompiledTarget = compile_cn(&cn(vec![(vec![(A, 0.9)], 0.1), (vec![(B, 1.0)], 0.0)]), BLANK).unwrap();
        // states: 0 #, 1 a, 2 #, 3 b, 4 # (terminal)
        assert!((t.transition.get(0, 1) - 1.0).abs() < 1e-15);
        assert_eq!(t.transition.get(1, 2), 1.0);
        assert_eq!(t.transition.get(1, 3), 1.0);
        assert_eq!(t.transition.get(1, 4), 0.0);
        assert_eq!(t.transition.get(3, 4), 1.0);
        assert!((t.alpha_hat[0] - 0.9).abs() < 1e-15);
        assert!((t.alpha_hat[1] - 0.9).abs() < 1e-15);
        assert!((t.alpha_hat[2] - 0.1).abs() < 1e-15);
        assert!((t.alpha_hat[3] - 0.1).abs() < 1e-15);
        assert_eq!(t.beta_hat, vec![0.0, 0.0, 0.0, 1.0, 1.0]);
        t.check_structure().unwrap();
    }

    #[test]
    fn alignment_may_start_past_a_skippable_group() {
        let tcm = build_tcm(&cn(vec![(vec![(A, 0.5)], 0.5), (vec![(B, 1.0)], 0.0)]), BLANK).unwrap();
        let (alpha_hat, beta_hat) = initial_vectors(&tcm);
        assert_eq!(alpha_hat, vec![0.5, 0.5, 0.5, 0.5, 0.0]);
        assert_eq!(beta_hat, vec![0.0, 0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn epsilon_chains_reach_later_groups() {
        // [{a}, {b:0.5, ε:0.5}, {u:0.4, ε:0.6}, {a}]
        let t: CompiledTarget = compile_cn(
            &cn(vec![
                (vec![(A, 1.0)], 0.0),
                (vec![(B, 0.5)], 0.5),
                (vec![(U, 0.4)], 0.6),
                (vec![(A, 1.0)], 0.0),
            ]),
            BLANK,
        )
        .unwrap();
        // states: 0 #,1 a | 2 #,3 b | 4 #,5 u | 6 #,7 a | 8 #
        assert!((t.transition.get(1, 4) - 0.5 * 0.4).abs() < 1e-15);
        assert!((t.transition.get(1, 5) - 0.5 * 0.4).abs() < 1e-15);
        assert!((t.transition.get(1, 6) - 0.5 * 0.6).abs() < 1e-15);
        // a → a across the skipped groups must pass through the blank
        assert_eq!(t.transition.get(1, 7), 0.0);
        assert!((t.transition.get(3, 7) - 0.6).abs() < 1e-15);
        // chain stops at the unskippable last letter group
        assert_eq!(t.transition.get(1, 8), 0.0);
        assert!((t.beta_hat[3] - 0.0).abs() < 1e-15);
        assert_eq!(t.beta_hat[7], 1.0);
        t.check_structure().unwrap();
    }

    #[test]
    fn all_deterministic_groups_have_local_support() {
        let tcm = build_tcm(&cn(vec![(vec![(A, 0.5), (B, 0.5)], 0.0), (vec![(U, 1.0)], 0.0)]), BLANK).unwrap();
        let (alpha_hat, beta_hat) = initial_vectors(&tcm);
        // 0 #, 1 a, 2 b | 3 #, 4 u | 5 #
        assert_eq!(alpha_hat, vec![1.0, 0.5, 0.5, 0.0, 0.0, 0.0]);
        assert_eq!(beta_hat, vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn nbest_cat_cut_layout() {
        let nb = NBestList::new(vec![(Labeling(vec![C, A, T]), 0.6), (Labeling(vec![C, U, T]), 0.4)]).unwrap();
        let t: CompiledTarget = compile_nbest(&nb, BLANK).unwrap();
        // 0 # | 1 C,2 #,3 A,4 #,5 T | 6 C,7 #,8 U,9 #,10 T | 11 #
        assert_eq!(t.num_states(), 12);
        assert_eq!(t.state_symbols, vec![BLANK, C, BLANK, A, BLANK, T, C, BLANK, U, BLANK, T, BLANK]);
        assert_eq!(t.transition.get(0, 1), 0.6);
        assert_eq!(t.transition.get(0, 6), 0.4);
        assert_eq!(t.alpha_hat[1], 0.6);
        assert_eq!(t.alpha_hat[6], 0.4);
        assert_eq!(t.transition.get(5, 11), 1.0);
        assert_eq!(t.transition.get(10, 11), 1.0);
        assert_eq!(t.transition.get(1, 3), 1.0);
        assert_eq!(t.beta_hat[5], 1.0);
        assert_eq!(t.beta_hat[10], 1.0);
        assert_eq!(t.beta_hat[11], 1.0);
        t.check_structure().unwrap();
    }
}
