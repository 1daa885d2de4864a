//! Lattice-to-sequence neural translation.
//!
//! Word lattices from an upstream recognizer are encoded with a LatticeLSTM
//! that integrates lattice scores in three places: a weighted child-sum of
//! predecessor states, a biased forget gate per predecessor, and a bias on
//! the attention logits. Each integration has a peakiness exponent that can
//! be fixed or learned.

pub mod autodiff;
pub mod checkpoint;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod lattice;
pub mod math;
pub mod model;
pub mod scores;
pub mod synth;
pub mod training;
pub mod vocab;

pub use error::{Error, Result};
pub use lattice::{EdgeLabeledLattice, Lattice, ScoreCheck};
pub use scores::NodeScores;
pub use vocab::{Vocabulary, WordId};
