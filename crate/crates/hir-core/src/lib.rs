//! Core algorithms for hierarchical item-space ranking.
//!
//! This crate holds the numerical heart of the `hir` recommender: sparse
//! row-stochastic matrices, the rating-data model (item co-occurrence,
//! adjusted-cosine similarity, per-user preference vectors), the NCD block
//! decomposition of the item space with its low-rank proximity factors, the
//! (batch) power-iteration ranker, and the ranking-quality metrics (DOA,
//! Kendall's tau, the MaxF popularity floor).
//!
//! Everything here is pure computation over in-memory data. File formats,
//! CLI, timing, and parallel orchestration live in the companion `hir`
//! crate; this one is `no_std` (with `alloc`) so the kernels stay free of
//! incidental platform dependencies.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod dataset;
pub mod error;
pub mod eval;
pub mod itemspace;
pub mod model;
pub mod ranker;
pub mod sparse;

pub use error::Error;
