//! Confidence scores for generated text that weight each token's
//! log-probability by how much a model's own attention focuses on it, plus
//! the baselines and evaluation machinery needed to compare them.
//!
//! The pieces:
//!
//! - [`record`]: the capture file format and judge-label merging.
//! - [`scoring`]: per-record confidence scores (SL, SL(norm), CSL,
//!   CSL-Next, TokenSAR, Deg, P(true)).
//! - [`heads`]: ranking attention heads by validation AUROC and picking the
//!   top `k`.
//! - [`metrics`]: AUROC, accuracy-rejection curves, calibration and the
//!   small statistics kernels behind them.
//! - [`entropy`]: semantic entropy over sampled generations.
//! - [`synth`]: synthetic captures with planted head signal, and
//!   brute-force metric oracles.
//! - [`eval`]: the split protocol and the evaluate / k-sweep / transfer
//!   pipelines.
//!
//! ```
//! use csl_core::record::{AttentionMatrix, AttentionSource, GenerationRecord};
//! use csl_core::scoring::{csl_score, seq_loglik_norm};
//!
//! let mut r = GenerationRecord::new(
//!     "q1",
//!     vec!["On".into(), "July".into(), "20".into()],
//!     vec![-1.0, -2.0, -3.0],
//! );
//! r.attn_prompt = Some(AttentionMatrix::from_rows(vec![vec![0.02, 0.03, 0.05]]).unwrap());
//!
//! let csl = csl_score(&r, &[0], AttentionSource::Prompt).unwrap();
//! assert!((csl.value - -2.3).abs() < 1e-12);
//! assert_eq!(seq_loglik_norm(&r).unwrap().value, -2.0);
//! ```

pub mod entropy;
pub mod error;
pub mod eval;
pub mod heads;
pub mod metrics;
pub mod record;
pub mod scoring;
pub mod synth;

pub use error::{Error, Result};
