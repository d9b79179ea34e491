//! Linked open knowledge extraction.
//!
//! Sentences go through an engineered prompt to a completions backend, the
//! returned JSON rows become [`RawTriple`]s, each slot is linked against a
//! label index of entities or properties, and the result is written as
//! N-Triples or scored against benchmark gold tuples.
//!
//! Batch operations run on rayon when the `parallel` feature is enabled
//! (the default) and fall back to sequential loops otherwise; see [`par`].

pub mod backend;
pub mod dataset;
pub mod error;
pub mod evaluator;
pub mod extractor;
pub mod index;
pub mod linker;
pub mod model;
pub mod par;
pub mod rdf;

pub use error::{Error, Result};
pub use model::{
    normalize, tokenize, EntityRecord, KbId, KbRecord, LinkCandidate, LinkedStatement, PropertyRecord,
    RawTriple, RecordKind,
};
pub use par::ExecMode;
