//! Vanilla CTC in transition-matrix form, and the naive MultiCTC baseline
//! that scores every n-best variant separately.

use crate::compile::{CompiledTarget, StateInfo, StateRole};
use crate::error::{Error, Result};
use crate::fb::ForwardBackwardWorkspace;
use crate::scalar::Scalar;
use crate::softctc::LossResult;
use crate::sparse::CsrMatrix;
use crate::types::{Labeling, NBestList, PosteriorMatrix, Symbol, Vocabulary};

/// Linear CTC automaton over the blank-interleaved labeling
/// `# l1 # l2 … # ln #`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearTopology {
    pub transition: CsrMatrix<f64>,
    pub state_symbols: Vec<Symbol>,
    pub initial: Vec<bool>,
    pub terminal: Vec<bool>,
}

/// Builds the `(2|l|+1)`-state CTC transition matrix: self-loops, moves to
/// the next state, and blank skips between differing letters.
pub fn build_linear_transition_matrix(l: &Labeling, blank: Symbol) -> LinearTopology {
    let n = 2 * l.len() + 1;
    let mut state_symbols = Vec::with_capacity(n);
    for &s in l.symbols() {
        state_symbols.push(blank);
        state_symbols.push(s);
    }
    state_symbols.push(blank);

    let mut triplets = Vec::with_capacity(3 * n);
    for i in 0..n {
        triplets.push((i, i, 1.0));
        if i + 1 < n {
            triplets.push((i, i + 1, 1.0));
        }
        if i % 2 == 1 && i + 2 < n && state_symbols[i] != state_symbols[i + 2] {
            triplets.push((i, i + 2, 1.0));
        }
    }
    let mut initial = vec![false; n];
    let mut terminal = vec![false; n];
    initial[0] = true;
    terminal[n - 1] = true;
    if n > 1 {
        initial[1] = true;
        terminal[n - 2] = true;
    }
    LinearTopology {
        transition: CsrMatrix::from_triplets(n, triplets),
        state_symbols,
        initial,
        terminal,
    }
}

/// The linear topology as a [`CompiledTarget`] with 0/1 start and end weights.
pub fn linear_target<F: Scalar>(l: &Labeling, blank: Symbol) -> CompiledTarget<F> {
    let topo = build_linear_transition_matrix(l, blank);
    let indicator = |v: &[bool]| v.iter().map(|&b| if b { F::one() } else { F::zero() }).collect();
    let states = topo
        .state_symbols
        .iter()
        .enumerate()
        .map(|(i, _)| StateInfo {
            group: i / 2,
            role: if i % 2 == 0 { StateRole::Blank } else { StateRole::Letter },
        })
        .collect();
    CompiledTarget {
        transition: topo.transition.cast(),
        alpha_hat: indicator(&topo.initial),
        beta_hat: indicator(&topo.terminal),
        state_symbols: topo.state_symbols,
        states,
    }
}

/// CTC negative log-likelihood of `l` and its gradient.
pub fn ctc_forward_backward<F: Scalar>(
    y: &PosteriorMatrix<F>,
    l: &Labeling,
    vocab: &Vocabulary,
) -> Result<LossResult<F>> {
    check_inputs(y, vocab)?;
    l.validate(vocab)?;
    ForwardBackwardWorkspace::new().evaluate(y, &linear_target(l, vocab.blank()))
}

fn check_inputs<F: Scalar>(y: &PosteriorMatrix<F>, vocab: &Vocabulary) -> Result<()> {
    if y.width() != vocab.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} columns", vocab.len()),
            found: format!("{} columns", y.width()),
        });
    }
    Ok(())
}

/// `-ln Σ_i w_i p(l_i | y)`, each term computed by a separate CTC pass.
///
/// Weights are used as given. The gradient is the per-variant gradient
/// mixed by each variant's share of the total probability. Variants with
/// no alignment contribute nothing.
pub fn multi_ctc<F: Scalar>(y: &PosteriorMatrix<F>, nbest: &NBestList, vocab: &Vocabulary) -> Result<LossResult<F>> {
    check_inputs(y, vocab)?;
    nbest.validate(vocab)?;
    if nbest.is_empty() {
        return Err(Error::InvalidNBest("MultiCTC needs at least one variant".into()));
    }
    let mut ws = ForwardBackwardWorkspace::new();
    let mut terms: Vec<(f64, Vec<F>)> = Vec::with_capacity(nbest.len());
    for (labeling, weight) in nbest.entries() {
        let target = linear_target(labeling, vocab.blank());
        match ws.run(y, &target) {
            Ok(ll) => terms.push((weight.ln() + ll, ws.gradient(y, &target))),
            Err(Error::Infeasible) => continue,
            Err(e) => return Err(e),
        }
    }
    if terms.is_empty() {
        return Err(Error::Infeasible);
    }
    let max = terms.iter().map(|t| t.0).fold(f64::NEG_INFINITY, f64::max);
    let shares: Vec<f64> = terms.iter().map(|t| (t.0 - max).exp()).collect();
    let total: f64 = shares.iter().sum();
    let log_likelihood = max + total.ln();

    let mut grad = vec![F::zero(); y.frames() * y.width()];
    for ((_, g), share) in terms.iter().zip(&shares) {
        let r = F::of(share / total);
        for (acc, &v) in grad.iter_mut().zip(g) {
            *acc += r * v;
        }
    }
    Ok(LossResult::new(F::of(log_likelihood), grad, y.frames(), y.width()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::BLANK_NAME;

    fn vocab_a() -> Vocabulary {
        Vocabulary::new(vec!["a", BLANK_NAME], 1).unwrap()
    }

    #[test]
    fn single_frame_single_letter() {
        let y = PosteriorMatrix::<f64>::from_rows(&[vec![0.7, 0.3]]).unwrap();
        let l = vocab_a().parse_transcript("a").unwrap();
        let r = ctc_forward_backward(&y, &l, &vocab_a()).unwrap();
        assert!((r.loss + 0.7f64.ln()).abs() < 1e-15);
        // d(-ln y0(a))/d y0(a) = -1/0.7; blank unused
        assert!((r.grad[0] + 1.0 / 0.7).abs() < 1e-12);
        assert_eq!(r.grad[1], 0.0);
    }

    #[test]
    fn two_frames_sum_three_paths() {
        // paths aa, a#, #a
        let y = PosteriorMatrix::<f64>::from_rows(&[vec![0.6, 0.4], vec![0.5, 0.5]]).unwrap();
        let l = vocab_a().parse_transcript("a").unwrap();
        let r = ctc_forward_backward(&y, &l, &vocab_a()).unwrap();
        assert!((r.probability() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn cat_has_seven_states_two_starts_two_ends() {
        let v = Vocabulary::from_chars("act").unwrap();
        let topo = build_linear_transition_matrix(&v.parse_transcript("cat").unwrap(), v.blank());
        assert_eq!(topo.state_symbols.len(), 7);
        assert_eq!(topo.initial.iter().filter(|&&b| b).count(), 2);
        assert_eq!(topo.terminal.iter().filter(|&&b| b).count(), 2);
        assert!(topo.initial[0] && topo.initial[1]);
        assert!(topo.terminal[5] && topo.terminal[6]);
        // skip edges c→a and a→t
        assert_eq!(topo.transition.get(1, 3), 1.0);
        assert_eq!(topo.transition.get(3, 5), 1.0);
        assert!(topo.transition.is_upper_triangular());
    }

    #[test]
    fn repeated_letter_has_no_skip() {
        let v = Vocabulary::from_chars("a").unwrap();
        let topo = build_linear_transition_matrix(&v.parse_transcript("aa").unwrap(), v.blank());
        assert_eq!(topo.transition.get(1, 3), 0.0);
        assert_eq!(topo.transition.nnz(), 5 + 4);
    }

    #[test]
    fn empty_labeling_is_one_blank_state() {
        let topo = build_linear_transition_matrix(&Labeling::empty(), Symbol(0));
        assert_eq!(topo.state_symbols, vec![Symbol(0)]);
        assert_eq!(topo.transition.get(0, 0), 1.0);
        assert_eq!(topo.transition.nnz(), 1);
        assert_eq!(topo.initial, vec![true]);
        assert_eq!(topo.terminal, vec![true]);
    }

    #[test]
    fn too_short_input_is_infeasible() {
        let v = Vocabulary::from_chars("a").unwrap();
        let y = PosteriorMatrix::<f64>::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let l = v.parse_transcript("aa").unwrap();
        assert_eq!(ctc_forward_backward(&y, &l, &v), Err(Error::Infeasible));
    }

    #[test]
    fn multi_ctc_single_variant_equals_ctc() {
        let v = vocab_a();
        let y = PosteriorMatrix::<f64>::from_rows(&[vec![0.6, 0.4], vec![0.5, 0.5], vec![0.1, 0.9]]).unwrap();
        let l = v.parse_transcript("a").unwrap();
        let single = ctc_forward_backward(&y, &l, &v).unwrap();
        let multi = multi_ctc(&y, &NBestList::new(vec![(l, 1.0)]).unwrap(), &v).unwrap();
        assert!((single.loss - multi.loss).abs() < 1e-12);
        for (a, b) in single.grad.iter().zip(&multi.grad) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn multi_ctc_weighted_sum() {
        let v = Vocabulary::new(vec!["a", "b", BLANK_NAME], 2).unwrap();
        let y = PosteriorMatrix::<f64>::from_rows(&[vec![0.5, 0.3, 0.2]]).unwrap();
        let nb = NBestList::new(vec![
            (v.parse_transcript("a").unwrap(), 0.6),
            (v.parse_transcript("b").unwrap(), 0.4),
        ])
        .unwrap();
        let r = multi_ctc(&y, &nb, &v).unwrap();
        assert!((r.probability() - 0.42).abs() < 1e-15);
    }

    #[test]
    fn multi_ctc_skips_infeasible_variants() {
        let v = Vocabulary::new(vec!["a", "b", BLANK_NAME], 2).unwrap();
        let y = PosteriorMatrix::<f64>::from_rows(&[vec![0.5, 0.3, 0.2]]).unwrap();
        let nb = NBestList::new(vec![
            (v.parse_transcript("a").unwrap(), 0.5),
            (v.parse_transcript("ab").unwrap(), 0.5),
        ])
        .unwrap();
        let r = multi_ctc(&y, &nb, &v).unwrap();
        assert!((r.probability() - 0.25).abs() < 1e-15);
        let only_bad = NBestList::new(vec![(v.parse_transcript("ab").unwrap(), 1.0)]).unwrap();
        assert_eq!(multi_ctc(&y, &only_bad, &v), Err(Error::Infeasible));
    }
}
