//! The direct-association matrices and the assembled ranking model.
//!
//! Two row-stochastic matrices capture direct item relations:
//!
//! * the co-occurrence matrix: entry (i, j) counts the users whose
//!   training profile contains both items, row-normalized;
//! * the adjusted-cosine matrix: mean-centered rating similarity over the
//!   co-raters of each pair, negatives clamped to zero, row-normalized.
//!
//! Rows without any association stay empty; the ranker redirects their
//! probability mass to the user's preference vector, which is
//! algebraically the same as patching the rows with that vector but costs
//! no storage. The assembled [`HirModel`] blends the two direct matrices
//! (weight `phi`), the NCD proximity factors (weights `beta`), and the
//! preference teleport (weight `1 - alpha - beta_total`); none of the
//! blended matrices is ever materialized.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::RatingsDataset;
use crate::error::{Error, Result};
use crate::itemspace::{Decomposition, NcdFactors};
use crate::sparse::SparseRowMatrix;

/// Per-item lists of (user, value) built from the training triples.
fn raters_by_item(ds: &RatingsDataset, value: impl Fn(usize, u8) -> f64) -> Vec<Vec<(u32, f64)>> {
    let mut by_item: Vec<Vec<(u32, f64)>> = vec![Vec::new(); ds.m];
    for t in &ds.train {
        by_item[t.item as usize].push((t.user, value(t.user as usize, t.rating)));
    }
    by_item
}

/// Row-normalized co-occurrence matrix. Entry (i, j), i != j, counts the
/// training users who rated both items; rows with no co-raters stay empty.
pub fn cooccurrence(ds: &RatingsDataset) -> SparseRowMatrix {
    let by_item = raters_by_item(ds, |_, _| 0.0);
    let mut counts = vec![0u32; ds.m];
    let mut touched: Vec<u32> = Vec::new();
    let mut rows: Vec<Vec<(u32, f64)>> = Vec::with_capacity(ds.m);
    for i in 0..ds.m {
        for &(u, _) in &by_item[i] {
            for &j in &ds.user_train_items[u as usize] {
                if j as usize != i {
                    if counts[j as usize] == 0 {
                        touched.push(j);
                    }
                    counts[j as usize] += 1;
                }
            }
        }
        touched.sort_unstable();
        rows.push(
            touched
                .iter()
                .map(|&j| (j, counts[j as usize] as f64))
                .collect(),
        );
        for &j in &touched {
            counts[j as usize] = 0;
        }
        touched.clear();
    }
    let mut m = SparseRowMatrix::from_rows(ds.m, rows).expect("co-occurrence rows are canonical");
    m.normalize_rows();
    m
}

/// Row-normalized adjusted-cosine similarity.
///
/// For a pair (i, j) the sums run over the users who rated both items,
/// each rating centered on that user's mean over all their training
/// ratings. Pairs with a negative or undefined (0/0) similarity are
/// dropped before normalization, keeping every stored value positive.
pub fn adjusted_cosine(ds: &RatingsDataset) -> SparseRowMatrix {
    let mut sums = vec![0.0f64; ds.n];
    let mut cnts = vec![0u32; ds.n];
    for t in &ds.train {
        sums[t.user as usize] += t.rating as f64;
        cnts[t.user as usize] += 1;
    }
    let means: Vec<f64> = sums
        .iter()
        .zip(&cnts)
        .map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();

    // Per-user and per-item views of the centered ratings.
    let mut dev_by_user: Vec<Vec<(u32, f64)>> = vec![Vec::new(); ds.n];
    for t in &ds.train {
        dev_by_user[t.user as usize].push((t.item, t.rating as f64 - means[t.user as usize]));
    }
    let dev_by_item = raters_by_item(ds, |u, r| r as f64 - means[u]);

    let mut num = vec![0.0f64; ds.m];
    let mut den_i = vec![0.0f64; ds.m];
    let mut den_j = vec![0.0f64; ds.m];
    let mut seen = vec![false; ds.m];
    let mut touched: Vec<u32> = Vec::new();
    let mut rows: Vec<Vec<(u32, f64)>> = Vec::with_capacity(ds.m);
    for i in 0..ds.m {
        for &(u, dev_i) in &dev_by_item[i] {
            for &(j, dev_j) in &dev_by_user[u as usize] {
                if j as usize != i {
                    if !seen[j as usize] {
                        seen[j as usize] = true;
                        touched.push(j);
                    }
                    num[j as usize] += dev_i * dev_j;
                    den_i[j as usize] += dev_i * dev_i;
                    den_j[j as usize] += dev_j * dev_j;
                }
            }
        }
        touched.sort_unstable();
        let mut row = Vec::new();
        for &j in &touched {
            let g = num[j as usize]
                / (libm::sqrt(den_i[j as usize]) * libm::sqrt(den_j[j as usize]));
            if g > 0.0 {
                row.push((j, g));
            }
            num[j as usize] = 0.0;
            den_i[j as usize] = 0.0;
            den_j[j as usize] = 0.0;
            seen[j as usize] = false;
        }
        touched.clear();
        rows.push(row);
    }
    let mut m = SparseRowMatrix::from_rows(ds.m, rows).expect("adjusted-cosine rows are canonical");
    m.normalize_rows();
    m
}

/// The user's training ratings normalized to a probability distribution
/// over all items. Users with an empty training profile fall back to the
/// uniform distribution.
pub fn preference_vector(ds: &RatingsDataset, user: usize) -> Vec<f64> {
    let mut omega = vec![0.0; ds.m];
    let mut total = 0.0;
    for t in &ds.train {
        if t.user as usize == user {
            omega[t.item as usize] = t.rating as f64;
            total += t.rating as f64;
        }
    }
    if total > 0.0 {
        for w in &mut omega {
            *w /= total;
        }
    } else {
        omega.fill(1.0 / ds.m as f64);
    }
    omega
}

/// Dense item × user matrix whose column u is user u's preference vector.
/// Stored item-major so the batch ranker streams contiguous user panels.
#[derive(Debug, Clone)]
pub struct PreferenceMatrix {
    pub m: usize,
    pub n: usize,
    data: Vec<f64>,
}

impl PreferenceMatrix {
    pub fn from_columns(m: usize, columns: Vec<Vec<f64>>) -> Result<Self> {
        let n = columns.len();
        let mut data = vec![0.0; m * n];
        for (u, col) in columns.iter().enumerate() {
            if col.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    got: col.len(),
                });
            }
            for (i, &v) in col.iter().enumerate() {
                data[i * n + u] = v;
            }
        }
        Ok(Self { m, n, data })
    }

    pub fn value(&self, item: usize, user: usize) -> f64 {
        self.data[item * self.n + user]
    }

    /// Row slice over users for one item.
    pub fn item_row(&self, item: usize) -> &[f64] {
        &self.data[item * self.n..(item + 1) * self.n]
    }

    pub fn column(&self, user: usize) -> Vec<f64> {
        (0..self.m).map(|i| self.value(i, user)).collect()
    }
}

/// Preference vectors of every user, assembled in one pass.
pub fn preference_matrix(ds: &RatingsDataset) -> PreferenceMatrix {
    let n = ds.n;
    let mut data = vec![0.0; ds.m * n];
    let mut totals = vec![0.0f64; n];
    for t in &ds.train {
        data[t.item as usize * n + t.user as usize] = t.rating as f64;
        totals[t.user as usize] += t.rating as f64;
    }
    for i in 0..ds.m {
        for u in 0..n {
            if totals[u] > 0.0 {
                data[i * n + u] /= totals[u];
            } else {
                data[i * n + u] = 1.0 / ds.m as f64;
            }
        }
    }
    PreferenceMatrix { m: ds.m, n, data }
}

/// The immutable assembled model: direct factors, NCD factors, and mixing
/// parameters. `alpha` weighs the direct component (split `phi` to
/// co-occurrence, `1 - phi` to adjusted cosine), each NCD decomposition
/// carries its own `beta`, and the remaining `1 - alpha - beta_total`
/// teleports to the user preference vector.
#[derive(Debug, Clone)]
pub struct HirModel {
    pub u_hat: SparseRowMatrix,
    pub g_hat: SparseRowMatrix,
    pub ncd: Vec<(NcdFactors, f64)>,
    pub alpha: f64,
    pub phi: f64,
}

impl HirModel {
    /// Assemble a model from prebuilt matrices, validating the parameter
    /// ranges and dimensions.
    pub fn new(
        u_hat: SparseRowMatrix,
        g_hat: SparseRowMatrix,
        ncd: Vec<(NcdFactors, f64)>,
        alpha: f64,
        phi: f64,
    ) -> Result<Self> {
        let beta_total: f64 = ncd.iter().map(|(_, b)| b).sum();
        if !(alpha >= 0.0) {
            return Err(Error::InvalidArgument(format!("alpha must be >= 0, got {alpha}")));
        }
        if ncd.iter().any(|(_, b)| !(*b >= 0.0)) {
            return Err(Error::InvalidArgument("every beta must be >= 0".into()));
        }
        if !(alpha + beta_total < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha + beta must be < 1, got {}",
                alpha + beta_total
            )));
        }
        if !(0.0..=1.0).contains(&phi) {
            return Err(Error::InvalidArgument(format!(
                "phi must lie in [0, 1], got {phi}"
            )));
        }
        let m = u_hat.rows();
        for (mat, name) in [(&u_hat, "co-occurrence"), (&g_hat, "adjusted cosine")] {
            if mat.rows() != m || mat.cols() != m {
                return Err(Error::InvalidArgument(format!(
                    "{name} matrix must be {m}x{m}"
                )));
            }
        }
        for (factors, _) in &ncd {
            if factors.item_count() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    got: factors.item_count(),
                });
            }
        }
        Ok(Self {
            u_hat,
            g_hat,
            ncd,
            alpha,
            phi,
        })
    }

    pub fn item_count(&self) -> usize {
        self.u_hat.rows()
    }

    pub fn beta_total(&self) -> f64 {
        self.ncd.iter().map(|(_, b)| b).sum()
    }
}

/// Validate parameters and assemble the model from a training set.
pub fn build_model(
    ds: &RatingsDataset,
    decompositions: &[(Decomposition, f64)],
    alpha: f64,
    phi: f64,
) -> Result<HirModel> {
    for (dec, _) in decompositions {
        if dec.item_count() != ds.m {
            return Err(Error::DimensionMismatch {
                expected: ds.m,
                got: dec.item_count(),
            });
        }
    }
    HirModel::new(
        cooccurrence(ds),
        adjusted_cosine(ds),
        decompositions
            .iter()
            .map(|(dec, beta)| (dec.ncd_factors(), *beta))
            .collect(),
        alpha,
        phi,
    )
}
