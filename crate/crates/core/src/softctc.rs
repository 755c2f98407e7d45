//! SoftCTC: forward-backward against a compiled multi-variant target.

use rayon::prelude::*;

use crate::compile::CompiledTarget;
use crate::error::Result;
use crate::fb::ForwardBackwardWorkspace;
use crate::scalar::Scalar;
use crate::types::PosteriorMatrix;

/// Negative log-likelihood of a target and its gradient with respect to the
/// posterior entries (not logits).
#[derive(Clone, Debug, PartialEq)]
pub struct LossResult<F = f64> {
    /// `-ln p`, in nats.
    pub loss: F,
    pub log_likelihood: F,
    /// Row-major `frames × width`.
    pub grad: Vec<F>,
    pub frames: usize,
    pub width: usize,
}

impl<F: Scalar> LossResult<F> {
    pub fn new(log_likelihood: F, grad: Vec<F>, frames: usize, width: usize) -> Self {
        debug_assert_eq!(grad.len(), frames * width);
        LossResult {
            loss: -log_likelihood,
            log_likelihood,
            grad,
            frames,
            width,
        }
    }

    pub fn grad_row(&self, t: usize) -> &[F] {
        &self.grad[t * self.width..(t + 1) * self.width]
    }

    pub fn probability(&self) -> F {
        self.log_likelihood.exp()
    }
}

/// SoftCTC loss and gradient of `y` against `target`.
pub fn soft_ctc<F: Scalar>(y: &PosteriorMatrix<F>, target: &CompiledTarget<F>) -> Result<LossResult<F>> {
    ForwardBackwardWorkspace::new().evaluate(y, target)
}

/// `ln Σ_s α_t(s) β_t(s) / q_t(s)` at 0-based frame `t`. The value is the
/// same at every frame; this is a consistency diagnostic.
pub fn soft_ctc_log_value_at<F: Scalar>(y: &PosteriorMatrix<F>, target: &CompiledTarget<F>, t: usize) -> Result<f64> {
    let mut ws = ForwardBackwardWorkspace::new();
    ws.run(y, target)?;
    Ok(ws.log_value_at(y, target, t))
}

/// Probability-domain version of [`soft_ctc_log_value_at`]. Infeasible
/// targets give 0 at every frame.
pub fn soft_ctc_value_at<F: Scalar>(y: &PosteriorMatrix<F>, target: &CompiledTarget<F>, t: usize) -> Result<f64> {
    match soft_ctc_log_value_at(y, target, t) {
        Ok(v) => Ok(v.exp()),
        Err(crate::Error::Infeasible) => Ok(0.0),
        Err(e) => Err(e),
    }
}

/// Evaluates each `(posteriors, target)` pair independently, reusing one
/// workspace.
pub fn soft_ctc_batch<F: Scalar>(items: &[(PosteriorMatrix<F>, CompiledTarget<F>)]) -> Vec<Result<LossResult<F>>> {
    let mut ws = ForwardBackwardWorkspace::new();
    items.iter().map(|(y, target)| ws.evaluate(y, target)).collect()
}

/// Parallel [`soft_ctc_batch`] on the current rayon pool.
pub fn soft_ctc_batch_par<F: Scalar>(
    items: &[(PosteriorMatrix<F>, CompiledTarget<F>)],
) -> Vec<Result<LossResult<F>>> {
    items
        .par_iter()
        .map_init(ForwardBackwardWorkspace::new, |ws, (y, target)| ws.evaluate(y, target))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cn::{ConfusionNetwork, ConfusionSet};
    use crate::compile::{compile_cn, compile_nbest};
    use crate::types::{Labeling, NBestList, Symbol};
    use crate::Error;

    const BLANK: Symbol = Symbol(2);
    const A: Symbol = Symbol(0);
    const B: Symbol = Symbol(1);

    #[test]
    fn nbest_of_two_single_letters() {
        let y = PosteriorMatrix::<f64>::from_rows(&[vec![0.5, 0.3, 0.2]]).unwrap();
        let nb = NBestList::new(vec![(Labeling(vec![A]), 0.6), (Labeling(vec![B]), 0.4)]).unwrap();
        let target = compile_nbest(&nb, BLANK).unwrap();
        let r = soft_ctc(&y, &target).unwrap();
        assert!((r.probability() - 0.42).abs() < 1e-15);
        assert!((r.loss + 0.42f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn value_is_frame_invariant() {
        let y = PosteriorMatrix::<f64>::from_rows(&[
            vec![0.2, 0.5, 0.3],
            vec![0.6, 0.1, 0.3],
            vec![0.3, 0.3, 0.4],
            vec![0.1, 0.7, 0.2],
        ])
        .unwrap();
        let cn = ConfusionNetwork::normalized(vec![
            ConfusionSet::new(vec![(A, 0.7), (B, 0.2)], 0.1).unwrap(),
            ConfusionSet::new(vec![(B, 0.5)], 0.5).unwrap(),
        ])
        .unwrap();
        let target = compile_cn(&cn, BLANK).unwrap();
        let r = soft_ctc(&y, &target).unwrap();
        for t in 0..4 {
            let v = soft_ctc_log_value_at(&y, &target, t).unwrap();
            assert!((v - r.log_likelihood).abs() < 1e-12, "frame {t}: {v} vs {}", r.log_likelihood);
        }
    }

    #[test]
    fn infeasible_target_is_reported() {
        let y = PosteriorMatrix::<f64>::from_rows(&[vec![0.5, 0.3, 0.2]]).unwrap();
        let target = compile_cn(&ConfusionNetwork::from_labeling(&Labeling(vec![A, B]), 1.0), BLANK).unwrap();
        assert_eq!(soft_ctc(&y, &target), Err(Error::Infeasible));
        assert_eq!(soft_ctc_value_at(&y, &target, 0), Ok(0.0));
    }

    #[test]
    fn long_lines_need_rescaling() {
        let rows: Vec<Vec<f64>> = (0..3000).map(|_| vec![0.3, 0.3, 0.4]).collect();
        let y = PosteriorMatrix::<f64>::from_rows(&rows).unwrap();
        let target = compile_cn(&ConfusionNetwork::from_labeling(&Labeling(vec![A, B]), 1.0), BLANK).unwrap();
        let r = soft_ctc(&y, &target).unwrap();
        assert!(r.loss.is_finite() && r.loss > 0.0);
        let mut raw = ForwardBackwardWorkspace::without_rescaling();
        assert_eq!(raw.run(&y, &target), Err(Error::Underflow));
    }

    #[test]
    fn batch_matches_single_evaluations() {
        let y = PosteriorMatrix::<f64>::from_rows(&[vec![0.5, 0.3, 0.2], vec![0.1, 0.3, 0.6]]).unwrap();
        let t1 = compile_cn(&ConfusionNetwork::from_labeling(&Labeling(vec![A]), 1.0), BLANK).unwrap();
        let t2 = compile_cn(&ConfusionNetwork::from_labeling(&Labeling(vec![A, B]), 1.0), BLANK).unwrap();
        let items = vec![(y.clone(), t1.clone()), (y.clone(), t2.clone())];
        let seq = soft_ctc_batch(&items);
        let par = soft_ctc_batch_par(&items);
        assert_eq!(seq, par);
        assert_eq!(seq[0], soft_ctc(&y, &t1));
        assert_eq!(seq[1], soft_ctc(&y, &t2));
    }

    #[test]
    fn single_precision_tracks_double() {
        let y = PosteriorMatrix::<f64>::from_rows(&[vec![0.5, 0.3, 0.2], vec![0.1, 0.3, 0.6], vec![0.4, 0.4, 0.2]]).unwrap();
        let target = compile_cn(&ConfusionNetwork::from_labeling(&Labeling(vec![A, B]), 1.0), BLANK).unwrap();
        let r64 = soft_ctc(&y, &target).unwrap();
        let r32 = soft_ctc(&y.cast::<f32>(), &target.cast::<f32>()).unwrap();
        assert!((r32.loss as f64 - r64.loss).abs() < 1e-5);
    }
}
