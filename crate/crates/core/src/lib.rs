//! Soft connectionist temporal classification.
//!
//! Trains against a *distribution* of transcriptions instead of a single
//! string: confusion networks (or n-best lists) are compiled into a sparse
//! CTC-style automaton and scored with one rescaled forward-backward pass.
//!
//! Layout:
//! * [`types`], [`cn`] — vocabularies, posteriors, labelings, confusion networks;
//! * [`ctc`] — vanilla CTC and the naive MultiCTC baseline;
//! * [`compile`], [`softctc`] — target compilation and the SoftCTC loss;
//! * [`decoder`] — greedy / prefix-beam decoding into confusion networks;
//! * [`io`], [`bench`] — text formats and the timing harness;
//! * `oracle` — brute-force references (feature `oracle`).

pub mod bench;
pub mod cn;
pub mod compile;
pub mod ctc;
pub mod decoder;
mod error;
pub mod fb;
pub mod io;
#[cfg(feature = "oracle")]
pub mod oracle;
mod scalar;
pub mod softctc;
pub mod sparse;
pub mod types;

pub use cn::{build_cn, merge_cns, prune, smooth, ConfusionNetwork, ConfusionSet};
pub use compile::{compile_cn, compile_nbest, CompiledTarget};
pub use ctc::{ctc_forward_backward, multi_ctc};
pub use decoder::{decode_to_cn, segment_line, DecodeConfig, Strategy};
pub use error::{Error, Result};
pub use scalar::Scalar;
pub use softctc::{soft_ctc, soft_ctc_batch, soft_ctc_value_at, LossResult};
pub use types::{Labeling, NBestList, PosteriorMatrix, Symbol, Vocabulary};

pub type PosteriorMatrixF64 = PosteriorMatrix<f64>;
pub type PosteriorMatrixF32 = PosteriorMatrix<f32>;
pub type CompiledTargetF64 = CompiledTarget<f64>;
pub type CompiledTargetF32 = CompiledTarget<f32>;
pub type LossResultF64 = LossResult<f64>;
pub type LossResultF32 = LossResult<f32>;
