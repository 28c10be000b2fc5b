//! Hybrid situation recognition for smart environments.
//!
//! The crate keeps a repository of expert-authored situation templates
//! (AND/OR condition trees over sensor readings) and periodically merges
//! them with a decision tree trained on labeled sensor images. Both sides
//! are normalized to disjunctive normal form, paths are matched by a
//! similarity score, and reliable learned paths are used to add, remove,
//! or update template paths. A small smart-office simulator and an
//! incremental-learning evaluation harness exercise the whole loop.

pub mod data;
pub mod dnf;
pub mod dtree;
pub mod enhancer;
pub mod error;
pub mod eval;
pub mod model;
pub mod recognizer;
pub mod sim;
pub mod xml;

pub use error::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
