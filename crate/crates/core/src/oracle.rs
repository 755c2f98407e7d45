//! Brute-force references for the fast paths.
//!
//! Everything here enumerates explicitly: all `|V|^T` frame paths for CTC,
//! all per-set choices for confusion networks. Nothing is shared with the
//! automaton code, so agreement between the two is meaningful evidence.

use std::collections::HashMap;

use crate::cn::ConfusionNetwork;
use crate::error::{Error, Result};
use crate::types::{Labeling, PosteriorMatrix, Symbol};

/// Maximum number of frame paths [`enumerate_ctc`] will visit.
pub const MAX_CTC_PATHS: f64 = 1e7;
/// Maximum number of choice combinations [`enumerate_cn_strings`] will visit.
pub const MAX_CN_PATHS: f64 = 1e6;

/// Compensated summation.
#[derive(Clone, Copy, Debug, Default)]
struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }
}

/// Merges repeated symbols, then drops blanks.
pub fn collapse(path: &[Symbol], blank: Symbol) -> Labeling {
    let mut out = Vec::new();
    let mut prev = None;
    for &s in path {
        if Some(s) != prev && s != blank {
            out.push(s);
        }
        prev = Some(s);
    }
    Labeling(out)
}

/// `p(l | y)` as the sum over every frame path that collapses to `l`.
pub fn enumerate_ctc(y: &PosteriorMatrix<f64>, l: &Labeling, blank: Symbol) -> Result<f64> {
    let (frames, width) = (y.frames(), y.width());
    let size = (width as f64).powi(frames as i32);
    if size > MAX_CTC_PATHS {
        return Err(Error::TooLarge {
            size,
            limit: MAX_CTC_PATHS,
        });
    }
    let mut digits = vec![0usize; frames];
    let mut path = vec![Symbol(0); frames];
    let mut total = Kahan::default();
    loop {
        for (p, &d) in path.iter_mut().zip(&digits) {
            *p = Symbol::from(d);
        }
        if collapse(&path, blank) == *l {
            total.add((0..frames).map(|t| y.get(t, digits[t])).product());
        }
        // odometer increment
        let mut t = 0;
        loop {
            if t == frames {
                return Ok(total.sum);
            }
            digits[t] += 1;
            if digits[t] < width {
                break;
            }
            digits[t] = 0;
            t += 1;
        }
    }
}

/// Every string a confusion network encodes.
#[derive(Clone, Debug, PartialEq)]
pub struct CnStrings {
    /// One entry per combination of per-set choices; identical strings may
    /// repeat.
    pub paths: Vec<(Labeling, f64)>,
    /// Distinct strings with summed weights, in order of first appearance.
    pub merged: Vec<(Labeling, f64)>,
}

/// Enumerates all per-set choices (null meaning "skip the set") with the
/// product of the chosen probabilities. Zero-probability entries are not
/// choices.
pub fn enumerate_cn_strings(cn: &ConfusionNetwork) -> Result<CnStrings> {
    let choices: Vec<Vec<(Option<Symbol>, f64)>> = cn
        .sets()
        .iter()
        .map(|set| {
            let mut c: Vec<(Option<Symbol>, f64)> = set
                .alternatives()
                .iter()
                .filter(|(_, p)| *p > 0.0)
                .map(|&(s, p)| (Some(s), p))
                .collect();
            if set.null_prob() > 0.0 {
                c.push((None, set.null_prob()));
            }
            c
        })
        .collect();
    let size: f64 = choices.iter().map(|c| c.len() as f64).product();
    if size > MAX_CN_PATHS {
        return Err(Error::TooLarge {
            size,
            limit: MAX_CN_PATHS,
        });
    }

    let mut paths = Vec::new();
    if choices.iter().all(|c| !c.is_empty()) {
        let mut digits = vec![0usize; choices.len()];
        'outer: loop {
            let mut symbols = Vec::new();
            let mut weight = 1.0;
            for (set, &d) in choices.iter().zip(&digits) {
                let (s, p) = set[d];
                symbols.extend(s);
                weight *= p;
            }
            paths.push((Labeling(symbols), weight));
            let mut i = 0;
            loop {
                if i == digits.len() {
                    break 'outer;
                }
                digits[i] += 1;
                if digits[i] < choices[i].len() {
                    break;
                }
                digits[i] = 0;
                i += 1;
            }
        }
    }

    let mut position: HashMap<&Labeling, usize> = HashMap::new();
    let mut merged: Vec<(Labeling, Kahan)> = Vec::new();
    for (l, w) in &paths {
        let i = *position.entry(l).or_insert_with(|| {
            merged.push((l.clone(), Kahan::default()));
            merged.len() - 1
        });
        merged[i].1.add(*w);
    }
    let merged = merged.into_iter().map(|(l, k)| (l, k.sum)).collect();
    Ok(CnStrings { paths, merged })
}

/// `Σ_variants w · p_ctc(variant | y)` over the unmerged choice paths.
pub fn oracle_softctc(y: &PosteriorMatrix<f64>, cn: &ConfusionNetwork, blank: Symbol) -> Result<f64> {
    let strings = enumerate_cn_strings(cn)?;
    let mut total = Kahan::default();
    for (l, w) in &strings.paths {
        total.add(w * enumerate_ctc(y, l, blank)?);
    }
    Ok(total.sum)
}

/// Central finite differences of `f` at every entry of `y`, row-major.
///
/// Entries are perturbed without renormalizing rows, so `f` must accept
/// matrices whose rows are slightly off one.
pub fn finite_difference_grad<G>(mut f: G, y: &PosteriorMatrix<f64>, step: f64) -> Result<Vec<f64>>
where
    G: FnMut(&PosteriorMatrix<f64>) -> f64,
{
    if !(1e-8..=1e-4).contains(&step) {
        return Err(Error::InvalidArgument(format!("step {step} outside [1e-8, 1e-4]")));
    }
    let mut probe = y.clone();
    let mut grad = Vec::with_capacity(y.frames() * y.width());
    for t in 0..y.frames() {
        for k in 0..y.width() {
            let v = y.get(t, k);
            probe.set(t, k, v + step);
            let up = f(&probe);
            probe.set(t, k, v - step);
            let down = f(&probe);
            probe.set(t, k, v);
            grad.push((up - down) / (2.0 * step));
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cn::ConfusionSet;

    #[test]
    fn two_frame_single_letter() {
        let y = PosteriorMatrix::from_rows(&[vec![0.6, 0.4], vec![0.5, 0.5]]).unwrap();
        let p = enumerate_ctc(&y, &Labeling(vec![Symbol(0)]), Symbol(1)).unwrap();
        assert!((p - 0.8).abs() < 1e-15);
    }

    #[test]
    fn too_long_labeling_has_zero_probability() {
        let y = PosteriorMatrix::from_rows(&[vec![0.6, 0.4], vec![0.5, 0.5]]).unwrap();
        let l = Labeling(vec![Symbol(0), Symbol(0)]);
        assert_eq!(enumerate_ctc(&y, &l, Symbol(1)).unwrap(), 0.0);
    }

    #[test]
    fn empty_labeling_takes_the_blank_path() {
        let y = PosteriorMatrix::from_rows(&[vec![0.5, 0.5]]).unwrap();
        assert_eq!(enumerate_ctc(&y, &Labeling::empty(), Symbol(1)).unwrap(), 0.5);
    }

    #[test]
    fn guards_trip() {
        let y = PosteriorMatrix::from_rows(&vec![vec![0.25; 4]; 12]).unwrap();
        assert!(matches!(
            enumerate_ctc(&y, &Labeling::empty(), Symbol(0)),
            Err(Error::TooLarge { .. })
        ));
        let set = ConfusionSet::new((1..=9).map(|i| (Symbol(i), 0.1)).collect(), 0.1).unwrap();
        let cn = ConfusionNetwork::normalized(vec![set; 7]).unwrap();
        assert!(matches!(enumerate_cn_strings(&cn), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn singleton_network_has_one_string() {
        let l = Labeling(vec![Symbol(1), Symbol(2), Symbol(1)]);
        let s = enumerate_cn_strings(&ConfusionNetwork::from_labeling(&l, 1.0)).unwrap();
        assert_eq!(s.merged, vec![(l, 1.0)]);
    }

    #[test]
    fn merging_sums_duplicate_strings() {
        // {a, ε} {a, ε}: "a" is reachable twice
        let set = ConfusionSet::new(vec![(Symbol(1), 0.5)], 0.5).unwrap();
        let cn = ConfusionNetwork::normalized(vec![set.clone(), set]).unwrap();
        let s = enumerate_cn_strings(&cn).unwrap();
        assert_eq!(s.paths.len(), 4);
        assert_eq!(s.merged.len(), 3);
        let a = s.merged.iter().find(|(l, _)| l.len() == 1).unwrap();
        assert_eq!(a.1, 0.5);
        let total: f64 = s.merged.iter().map(|(_, w)| w).sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn weighted_sum_of_two_letters() {
        let y = PosteriorMatrix::from_rows(&[vec![0.5, 0.3, 0.2]]).unwrap();
        let set = ConfusionSet::new(vec![(Symbol(0), 0.6), (Symbol(1), 0.4)], 0.0).unwrap();
        let cn = ConfusionNetwork::normalized(vec![set]).unwrap();
        let p = oracle_softctc(&y, &cn, Symbol(2)).unwrap();
        assert!((p - 0.42).abs() < 1e-15);
    }

    #[test]
    fn finite_differences_of_a_quadratic() {
        let y = PosteriorMatrix::from_rows(&[vec![0.3, 0.7], vec![0.9, 0.1]]).unwrap();
        let f = |m: &PosteriorMatrix<f64>| m.as_slice().iter().map(|v| v * v).sum::<f64>();
        let g = finite_difference_grad(f, &y, 1e-6).unwrap();
        for (gi, vi) in g.iter().zip(y.as_slice()) {
            assert!((gi - 2.0 * vi).abs() < 1e-8);
        }
        assert!(finite_difference_grad(f, &y, 1e-3).is_err());
    }
}
