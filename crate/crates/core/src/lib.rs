//! Tactic prediction and proof search learned from recorded
//! (proof state, tactic) pairs.
//!
//! Proof states are characterized by shingle features of their term ASTs
//! ([`term`]), stored in an append-only [`db`], and ranked against new states
//! by set-similarity k-NN ([`predict`]) or an approximate MinHash LSH Forest
//! ([`lsh`]). [`search`] turns a predictor into a prover with diagonal
//! best-first search over a [`env::ProofEnv`], and [`eval`] reproduces the
//! offline-prediction and proof-search experiments over a [`corpus`].
//!
//! Similarity scores are generic over the float type; the aliases below fix
//! the common choices.

pub mod corpus;
pub mod db;
pub mod env;
pub mod eval;
pub mod lsh;
pub mod predict;
pub mod recorder;
pub mod script;
pub mod search;
pub mod term;

pub use corpus::{Corpus, CorpusError};
pub use db::{DbView, TacticDatabase, Window};
pub use env::{GoalStack, ProofEnv, ProofOutcome, ReplayKernel, RuleKernel};
pub use lsh::{ForestConfig, ForestIndex};
pub use predict::{Metric, Prediction};
pub use script::{instrument, parse_script, ScriptAst};
pub use search::{diagonal_search, replay, SearchBudget, SearchOutcome, SearchResult};
pub use term::{parse_term, shingles, state_features, FeatureSet, ProofState, Term};

/// Default score type.
pub type Score = f64;
pub type Prediction64 = Prediction<f64>;
pub type Prediction32 = Prediction<f32>;
