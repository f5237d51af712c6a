//! Sentence-level hallucination scoring for LLM responses.
//!
//! The core idea: draw N stochastic re-samples of the same query and
//! measure how consistently each sentence of the main response is
//! supported by them. Content the model actually knows tends to
//! reappear across samples; fabricated content does not. Scores run
//! from 0.0 (well supported) to 1.0 (contradicted or absent), except
//! for the n-gram scores, which are unbounded above.
//!
//! The crate provides:
//!
//! - [`core`] — passages, evidence sets, annotation labels, sentence
//!   segmentation, and JSONL dataset ingestion;
//! - [`backends`] — capability contracts (generation, token scoring,
//!   similarity, NLI, QA) with deterministic stubs, an HTTP client,
//!   and a disk cache;
//! - [`greybox`] — token probability/entropy metrics for when the
//!   generator's (or a proxy's) token distributions are available;
//! - [`ngram`] — a smoothed n-gram model over the samples scoring each
//!   sentence by how surprising its tokens are;
//! - [`qa`] — multiple-choice question agreement combined with a
//!   Bayesian match/mismatch posterior and soft counting;
//! - [`consistency`] — similarity, NLI-contradiction, and prompt-judge
//!   scorers over the evidence set;
//! - [`eval`] — average-precision detection tasks, passage-level
//!   correlations, agreement statistics, and sample-count sweeps;
//! - [`synth`] — a deterministic synthetic corpus generator with known
//!   ground truth for end-to-end validation.
//!
//! ```
//! use selfcheck::backends::stub::StubNli;
//! use selfcheck::consistency::nli_score;
//! use selfcheck::core::EvidenceSet;
//!
//! let evidence = EvidenceSet::sampled(vec![
//!     "The spire was finished in 1889.".into(),
//!     "It was completed in 1889 after two years.".into(),
//! ])?;
//! let score = nli_score(&StubNli, "The spire was finished in 1889.", &evidence)?;
//! assert!(score < 0.5); // supported by the samples
//! # Ok::<(), selfcheck::error::Error>(())
//! ```

pub mod backends;
pub mod consistency;
pub mod core;
pub mod error;
pub mod eval;
pub mod greybox;
pub mod ngram;
pub mod qa;
pub mod synth;
pub(crate) mod text;

pub use error::{Error, Result};
