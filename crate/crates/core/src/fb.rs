//! Rescaled forward-backward over a [`CompiledTarget`].
//!
//! Forward and backward variables are kept in linear space and divided by
//! their per-frame sums; the logs of those sums are accumulated so the
//! likelihood never underflows, even for lines hundreds of frames long.
//!
//! The workspace stores the *pre-emission* variables
//! `a_t = α_{t-1} A` (with `a_1 = α̂`) and `b_t = β_{t+1} Aᵀ` (with
//! `b_T = β̂`). Then `α_t = a_t ⊙ q_t`, `β_t = b_t ⊙ q_t`, and for every frame
//! `Σ_s α_t(s) β_t(s) / q_t(s) = Σ_s a_t(s) q_t(s) b_t(s)`, which needs no
//! division by `q_t` and so has no 0/0 case. The same product gives the exact
//! derivative `∂p/∂y_t(k) = Σ_{s: X_s = k} a_t(s) b_t(s)`.

use crate::compile::CompiledTarget;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::softctc::LossResult;
use crate::types::PosteriorMatrix;

/// Reusable buffers for one forward-backward evaluation at a time.
#[derive(Clone, Debug, Default)]
pub struct ForwardBackwardWorkspace<F> {
    frames: usize,
    states: usize,
    /// `frames × states` pre-emission forward variables, row `t` scaled by
    /// the product of forward scale factors of frames before `t`.
    alphas: Vec<F>,
    /// `frames × states` pre-emission backward variables, row `t` scaled by
    /// the product of backward scale factors of frames after `t`.
    betas: Vec<F>,
    fwd_scale: Vec<F>,
    bwd_scale: Vec<F>,
    /// `Σ_{u<t} ln fwd_scale[u]`, length `frames + 1`.
    log_fwd_prefix: Vec<f64>,
    /// `Σ_{u>t} ln bwd_scale[u]`, length `frames`.
    log_bwd_suffix: Vec<f64>,
    log_likelihood: f64,
    scratch: Vec<F>,
    carry: Vec<F>,
    rescale: bool,
}

impl<F: Scalar> ForwardBackwardWorkspace<F> {
    pub fn new() -> Self {
        ForwardBackwardWorkspace {
            rescale: true,
            ..Default::default()
        }
    }

    /// Workspace running in raw linear space. Long inputs underflow; this
    /// exists to demonstrate why rescaling is on by default.
    pub fn without_rescaling() -> Self {
        ForwardBackwardWorkspace {
            rescale: false,
            ..Default::default()
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn states(&self) -> usize {
        self.states
    }

    /// Per-frame forward scale factors (row sums of `α_t` before rescaling).
    pub fn forward_scales(&self) -> &[F] {
        &self.fwd_scale
    }

    pub fn backward_scales(&self) -> &[F] {
        &self.bwd_scale
    }

    pub fn alphas(&self, t: usize) -> &[F] {
        &self.alphas[t * self.states..(t + 1) * self.states]
    }

    pub fn betas(&self, t: usize) -> &[F] {
        &self.betas[t * self.states..(t + 1) * self.states]
    }

    /// Log-likelihood of the last successful [`run`](Self::run).
    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    /// Runs both passes and returns `ln p(target | y)`.
    pub fn run(&mut self, y: &PosteriorMatrix<F>, target: &CompiledTarget<F>) -> Result<f64> {
        target.check_width(y.width())?;
        if y.frames() == 0 {
            return Err(Error::EmptyPosteriors);
        }
        let (frames, states) = (y.frames(), target.num_states());
        self.frames = frames;
        self.states = states;
        self.alphas.resize(frames * states, F::zero());
        self.betas.resize(frames * states, F::zero());
        self.fwd_scale.resize(frames, F::one());
        self.bwd_scale.resize(frames, F::one());
        self.scratch.resize(states, F::zero());
        self.carry.resize(states, F::zero());

        let symbols = &target.state_symbols;

        // forward
        for t in 0..frames {
            let row = &mut self.alphas[t * states..(t + 1) * states];
            if t == 0 {
                row.copy_from_slice(&target.alpha_hat);
            } else {
                target.transition.left_mul(&self.carry, row);
            }
            let q = y.row(t);
            let mut sum = F::zero();
            for ((c, &a), s) in self.carry.iter_mut().zip(row.iter()).zip(symbols) {
                *c = a * q[s.index()];
                sum += *c;
            }
            if self.rescale {
                if !(sum > F::zero()) {
                    return Err(Error::Infeasible);
                }
                let inv = F::one() / sum;
                self.carry.iter_mut().for_each(|c| *c *= inv);
                self.fwd_scale[t] = sum;
            } else {
                self.fwd_scale[t] = F::one();
            }
        }
        let tail: F = self.carry.iter().zip(&target.beta_hat).map(|(&a, &b)| a * b).sum();
        if !(tail > F::zero()) {
            return Err(self.zero_mass_error(y, target));
        }
        let log_scales: f64 = self.fwd_scale.iter().map(|c| c.widen().ln()).sum();
        self.log_likelihood = log_scales + tail.widen().ln();

        // backward
        for t in (0..frames).rev() {
            let row = &mut self.betas[t * states..(t + 1) * states];
            if t == frames - 1 {
                row.copy_from_slice(&target.beta_hat);
            } else {
                target.transition.right_mul(&self.carry, row);
            }
            let q = y.row(t);
            let mut sum = F::zero();
            for ((c, &b), s) in self.carry.iter_mut().zip(row.iter()).zip(symbols) {
                *c = b * q[s.index()];
                sum += *c;
            }
            if self.rescale {
                if !(sum > F::zero()) {
                    return Err(Error::Infeasible);
                }
                let inv = F::one() / sum;
                self.carry.iter_mut().for_each(|c| *c *= inv);
                self.bwd_scale[t] = sum;
            } else {
                self.bwd_scale[t] = F::one();
            }
        }

        self.log_fwd_prefix.clear();
        self.log_fwd_prefix.push(0.0);
        for t in 0..frames {
            let next = self.log_fwd_prefix[t] + self.fwd_scale[t].widen().ln();
            self.log_fwd_prefix.push(next);
        }
        self.log_bwd_suffix.resize(frames, 0.0);
        self.log_bwd_suffix[frames - 1] = 0.0;
        for t in (0..frames - 1).rev() {
            self.log_bwd_suffix[t] = self.log_bwd_suffix[t + 1] + self.bwd_scale[t + 1].widen().ln();
        }
        Ok(self.log_likelihood)
    }

    fn zero_mass_error(&self, y: &PosteriorMatrix<F>, target: &CompiledTarget<F>) -> Error {
        if !self.rescale && is_feasible(y, target) {
            Error::Underflow
        } else {
            Error::Infeasible
        }
    }

    /// `Σ_s a_t(s) q_t(s) b_t(s)` in the workspace's scaled units.
    fn frame_mass(&self, y: &PosteriorMatrix<F>, target: &CompiledTarget<F>, t: usize) -> F {
        let q = y.row(t);
        self.alphas(t)
            .iter()
            .zip(self.betas(t))
            .zip(&target.state_symbols)
            .map(|((&a, &b), s)| a * q[s.index()] * b)
            .sum()
    }

    /// `ln Σ_s α_t(s) β_t(s) / q_t(s)` for frame `t` (0-based), assembled from
    /// the log scale accumulators. Equal to the log-likelihood at every frame.
    /// Requires a preceding successful [`run`](Self::run) on the same inputs.
    pub fn log_value_at(&self, y: &PosteriorMatrix<F>, target: &CompiledTarget<F>, t: usize) -> f64 {
        let mass = self.frame_mass(y, target, t).widen();
        self.log_fwd_prefix[t] + self.log_bwd_suffix[t] + mass.ln()
    }

    /// Gradient of `-ln p` with respect to every posterior entry, row-major
    /// `frames × width`.
    pub fn gradient(&self, y: &PosteriorMatrix<F>, target: &CompiledTarget<F>) -> Vec<F> {
        let width = y.width();
        let mut grad = vec![F::zero(); self.frames * width];
        for t in 0..self.frames {
            let inv = F::one() / self.frame_mass(y, target, t);
            let g = &mut grad[t * width..(t + 1) * width];
            for ((&a, &b), s) in self.alphas(t).iter().zip(self.betas(t)).zip(&target.state_symbols) {
                g[s.index()] -= a * b * inv;
            }
        }
        grad
    }

    /// Loss and gradient in one call.
    pub fn evaluate(&mut self, y: &PosteriorMatrix<F>, target: &CompiledTarget<F>) -> Result<LossResult<F>> {
        let log_likelihood = self.run(y, target)?;
        let grad = self.gradient(y, target);
        Ok(LossResult::new(F::of(log_likelihood), grad, y.frames(), y.width()))
    }
}

/// Whether any alignment with nonzero weight exists, tracking only the
/// support of the forward variables.
pub fn is_feasible<F: Scalar>(y: &PosteriorMatrix<F>, target: &CompiledTarget<F>) -> bool {
    let n = target.num_states();
    let emits = |t: usize, s: usize| y.get(t, target.state_symbols[s].index()) > F::zero();
    let mut live: Vec<bool> = (0..n).map(|s| target.alpha_hat[s] > F::zero() && emits(0, s)).collect();
    for t in 1..y.frames() {
        let mut next = vec![false; n];
        for (from, _) in live.iter().enumerate().filter(|(_, &l)| l) {
            for (to, w) in target.transition.row(from) {
                if w > F::zero() {
                    next[to] = true;
                }
            }
        }
        for (s, v) in next.iter_mut().enumerate() {
            *v = *v && emits(t, s);
        }
        live = next;
    }
    live.iter().zip(&target.beta_hat).any(|(&l, &b)| l && b > F::zero())
}
