//! Evaluation and data-preparation toolkit for repository-scale
//! natural-language-to-DSL generation.
//!
//! A multi-file project tree is represented as a single linearized document
//! (nested JSON: folders are objects, files are string leaves). On top of that
//! representation the crate provides:
//!
//! - [`repofs`] — conversion between on-disk trees and linearized documents,
//!   flattening, and canonical serialization,
//! - [`diffcore`] — line-level diffing and token-level edit distance,
//! - [`metrics`] — exact match, document validity, BLEU, change similarity,
//!   and structural fidelity, plus per-example evaluation and aggregation,
//! - [`dataset`] — (instruction, context, target) triples, minimal-context
//!   variants, leakage-safe grouped splits, and SFT record export,
//! - [`toydsl`] — a small entity DSL with a cross-file rule checker and stub
//!   generator used for toolchain-acceptance checks,
//! - [`runner`] — prompt construction and generation collection against a
//!   chat/completions-style endpoint, with a deterministic replay mode.
//!
//! The `dslbench` command-line tool wraps all of the above; the book under
//! `book/` walks through the concepts chapter by chapter.

pub mod dataset;
pub mod diffcore;
pub mod metrics;
pub mod repofs;
pub mod runner;
pub mod toydsl;
