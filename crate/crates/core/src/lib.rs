//! Extraction, verification, explainable traversal and re-alignment of the
//! concept hierarchy induced by an embedding space over a set of classes.

pub mod align;
pub mod assignment;
pub mod error;
pub mod hierarchy;
pub mod inference;
pub mod io;
pub mod ontology;
pub mod synth;
pub mod ted;
pub mod tree;
pub mod vectors;

pub use error::{Error, Result};
