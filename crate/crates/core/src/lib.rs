//! Dataset provenance extraction from published research software.
//!
//! The crate follows a package from its repository record to a knowledge
//! graph description: harvest and unpack ([`ingest`]), mine metadata and
//! linked articles ([`metadata`]), trace which datasets each script loads and
//! what it does with them ([`dataflow`]), keep only what the linked article
//! mentions ([`matcher`]), re-run the scripts and confirm their printed
//! numbers ([`recompute`]), and emit template-conformant triples ([`kg`]).
//! [`validation`] scores extraction against annotated ground truth, and
//! [`pipeline`] chains the stages over resumable on-disk artifacts.

pub mod config;
pub mod dataflow;
pub mod doi;
pub mod error;
#[cfg(feature = "fixtures")]
pub mod fixtures;
pub mod ingest;
pub mod kg;
pub mod matcher;
pub mod metadata;
pub mod pipeline;
pub mod recompute;
pub mod validation;

pub use doi::Doi;
pub use error::{Error, Result};
