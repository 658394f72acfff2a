//! Cuneiform language and dialect identification.
//!
//! Two systems share the corpus, feature and evaluation layers:
//!
//! - a meta-classifier that trains one linear SVM per character n-gram or
//!   skip-gram feature class and stacks their decision values into a
//!   random forest ([`meta`]);
//! - a compositional character-to-word-to-sentence GRU classifier
//!   ([`neural`]).

pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod forest;
pub mod label;
pub mod meta;
pub mod neural;
pub mod persist;
pub mod seeds;
pub mod svm;
pub mod synthetic;

pub use error::{Error, Result};
pub use label::{LabelCode, NUM_LABELS};
