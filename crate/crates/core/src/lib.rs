//! Measure how attached contexts change a masked language model's cloze
//! predictions.
//!
//! The pipeline loads relational probe facts ([`probe`]), builds contexts
//! for them ([`context`]) with the help of a hashed TF-IDF paragraph index
//! ([`index`]), lays out query and context for a scorer ([`featurize`]),
//! scores them with a pluggable [`scorer::Scorer`] and aggregates the
//! outcome ([`eval`]). [`run`] ties the steps together with resumable,
//! deterministic output.

pub mod context;
pub mod error;
pub mod eval;
pub mod featurize;
pub mod fixtures;
pub mod index;
pub mod probe;
pub mod run;
pub mod scorer;
pub mod text;
pub mod vocab;

pub use error::{Error, Result};
