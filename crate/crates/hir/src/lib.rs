//! IO, experiments, and CLI plumbing around [`hir_core`].
//!
//! * [`movielens`] — MovieLens 100K file formats (ratings, predefined
//!   splits, genre flags) plus a generic tab-separated block format.
//! * [`matfile`] — plain-text coordinate cache for sparse matrices.
//! * [`batch`] — rayon-parallel batch ranking, bit-identical to the
//!   single-threaded path.
//! * [`experiments`] — cross-validation, sparsity and new-item protocols,
//!   the phi sweep, and the batch-vs-sequential benchmark, all emitting
//!   reproducible CSV.
//! * [`cli`] — the `hir` command-line surface.

pub mod batch;
pub mod cli;
pub mod experiments;
pub mod matfile;
pub mod movielens;

pub use hir_core as core;
