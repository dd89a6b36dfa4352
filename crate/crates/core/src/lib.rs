//! Gazetteer-fused named entity recognition.
//!
//! A neural tagger over tokens and a context-aware gazetteer tagger over
//! dictionary-match codes are trained jointly and fused either before a
//! shared tagger (early fusion) or by an element-wise max over their logits
//! (late fusion). Gazetteer contents can be edited after training; a
//! late-fusion model picks up the change on the next prediction.

pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod gazetteer;
pub mod harness;
pub mod kv;
pub mod model;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
