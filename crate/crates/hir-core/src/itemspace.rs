//! Block decomposition of the item space and its low-rank proximity
//! factors.
//!
//! Items are grouped into (possibly overlapping) blocks — movie genres in
//! the MovieLens experiments. The block structure induces a row-stochastic
//! proximity matrix D that spreads an item's mass uniformly over its
//! blocks and then uniformly over each block's members:
//!
//! ```text
//! D[i][j] = sum over blocks k containing both i and j of 1 / (N_i * |B_k|)
//! ```
//!
//! where `N_i` is the number of blocks containing item i. D factorizes as
//! `X * Y` with X (items × blocks) and Y (blocks × items) the row-normalized
//! membership matrix and its transpose, which is what the ranker applies;
//! D itself is never materialized outside of small tests.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::sparse::SparseRowMatrix;

/// A family of item blocks covering the whole catalogue.
#[derive(Debug, Clone)]
pub struct Decomposition {
    m: usize,
    /// Sorted member lists, one per block.
    pub block_members: Vec<Vec<u32>>,
    /// Sorted block lists, one per item (never empty).
    pub item_blocks: Vec<Vec<u32>>,
    /// Display names, one per block.
    pub labels: Vec<String>,
}

impl Decomposition {
    /// Validate and index a block family. Every item in `0..item_count`
    /// must appear in at least one block, blocks must be nonempty, and no
    /// block may list the same item twice.
    pub fn new(item_count: usize, blocks: Vec<Vec<u32>>, labels: Vec<String>) -> Result<Self> {
        if labels.len() != blocks.len() {
            return Err(Error::DimensionMismatch {
                expected: blocks.len(),
                got: labels.len(),
            });
        }
        let mut item_blocks: Vec<Vec<u32>> = vec![Vec::new(); item_count];
        let mut block_members = Vec::with_capacity(blocks.len());
        for (k, mut members) in blocks.into_iter().enumerate() {
            if members.is_empty() {
                return Err(Error::Validation(format!("block {k} ({}) is empty", labels[k])));
            }
            members.sort_unstable();
            for w in members.windows(2) {
                if w[0] == w[1] {
                    return Err(Error::Validation(format!(
                        "block {k} ({}) lists item {} twice",
                        labels[k],
                        w[0] + 1
                    )));
                }
            }
            for &v in &members {
                if v as usize >= item_count {
                    return Err(Error::Validation(format!(
                        "block {k} ({}) references item index {v} >= {item_count}",
                        labels[k]
                    )));
                }
                item_blocks[v as usize].push(k as u32);
            }
            block_members.push(members);
        }
        if let Some(v) = item_blocks.iter().position(Vec::is_empty) {
            return Err(Error::Validation(format!(
                "item {} belongs to no block; the decomposition must cover the catalogue",
                v + 1
            )));
        }
        Ok(Self {
            m: item_count,
            block_members,
            item_blocks,
            labels,
        })
    }

    pub fn item_count(&self) -> usize {
        self.m
    }

    pub fn block_count(&self) -> usize {
        self.block_members.len()
    }

    /// Number of blocks containing `item` (N_v, always >= 1).
    pub fn membership_count(&self, item: usize) -> usize {
        self.item_blocks[item].len()
    }

    /// The proximal set of `item`: the union of all blocks containing it,
    /// sorted ascending. Always contains `item` itself.
    pub fn proximal_set(&self, item: usize) -> Result<Vec<u32>> {
        if item >= self.m {
            return Err(Error::InvalidArgument(format!(
                "item index {item} out of range (m = {})",
                self.m
            )));
        }
        let mut set: Vec<u32> = self.item_blocks[item]
            .iter()
            .flat_map(|&k| self.block_members[k as usize].iter().copied())
            .collect();
        set.sort_unstable();
        set.dedup();
        Ok(set)
    }

    /// Row-normalized membership factors X (m × K) and Y (K × m).
    pub fn ncd_factors(&self) -> NcdFactors {
        let k = self.block_count();
        let x_rows = self
            .item_blocks
            .iter()
            .map(|blocks| {
                let w = 1.0 / blocks.len() as f64;
                blocks.iter().map(|&b| (b, w)).collect()
            })
            .collect();
        let y_rows = self
            .block_members
            .iter()
            .map(|members| {
                let w = 1.0 / members.len() as f64;
                members.iter().map(|&v| (v, w)).collect()
            })
            .collect();
        let x = SparseRowMatrix::from_rows(k, x_rows).expect("X rows are sorted and positive");
        let y = SparseRowMatrix::from_rows(self.m, y_rows).expect("Y rows are sorted and positive");
        NcdFactors { x, y }
    }
}

/// The factors of the proximity matrix D = X·Y. Both are row-stochastic:
/// row v of X holds 1/N_v at v's blocks, row k of Y holds 1/|B_k| at the
/// block's members.
#[derive(Debug, Clone)]
pub struct NcdFactors {
    pub x: SparseRowMatrix,
    pub y: SparseRowMatrix,
}

impl NcdFactors {
    pub fn item_count(&self) -> usize {
        self.x.rows()
    }

    pub fn block_count(&self) -> usize {
        self.x.cols()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    /// The 6-item, 3-block family used throughout the module docs:
    /// B1 = {v1, v2, v4, v6}, B2 = {v2, v4, v5}, B3 = {v3, v6}.
    pub(crate) fn six_item() -> Decomposition {
        Decomposition::new(
            6,
            vec![vec![0, 1, 3, 5], vec![1, 3, 4], vec![2, 5]],
            vec!["b1".to_string(), "b2".to_string(), "b3".to_string()],
        )
        .unwrap()
    }

    #[test]
    fn six_item_factors_match_hand_computation() {
        let dec = six_item();
        assert_eq!(dec.block_count(), 3);
        let f = dec.ncd_factors();

        let x = f.x.to_dense();
        assert_eq!(&x[0..3], &[1.0, 0.0, 0.0]); // v1 in B1 only
        assert_eq!(&x[1 * 3..2 * 3], &[0.5, 0.5, 0.0]); // v2 in B1, B2
        assert_eq!(&x[2 * 3..3 * 3], &[0.0, 0.0, 1.0]);
        assert_eq!(&x[3 * 3..4 * 3], &[0.5, 0.5, 0.0]);
        assert_eq!(&x[4 * 3..5 * 3], &[0.0, 1.0, 0.0]);
        assert_eq!(&x[5 * 3..6 * 3], &[0.5, 0.0, 0.5]);

        let y = f.y.to_dense();
        assert_eq!(&y[0..6], &[0.25, 0.25, 0.0, 0.25, 0.0, 0.25]);
        assert_eq!(&y[6..12], &[0.0, 1.0 / 3.0, 0.0, 1.0 / 3.0, 1.0 / 3.0, 0.0]);
        assert_eq!(&y[12..18], &[0.0, 0.0, 0.5, 0.0, 0.0, 0.5]);

        // d_{2,5} = (1/2) * (1/3) = 1/6.
        let d25: f64 = (0..3).map(|k| x[1 * 3 + k] * y[k * 6 + 4]).sum();
        assert!((d25 - 1.0 / 6.0).abs() <= 1e-15);
    }

    #[test]
    fn product_rows_are_stochastic_with_proximal_support() {
        let dec = six_item();
        let f = dec.ncd_factors();
        let (x, y) = (f.x.to_dense(), f.y.to_dense());
        for v in 0..6 {
            let row: Vec<f64> = (0..6)
                .map(|j| (0..3).map(|k| x[v * 3 + k] * y[k * 6 + j]).sum())
                .collect();
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "row {v} sums to {sum}");
            let support: Vec<u32> = (0..6u32).filter(|&j| row[j as usize] > 0.0).collect();
            assert_eq!(support, dec.proximal_set(v).unwrap(), "support of row {v}");
        }
    }

    #[test]
    fn proximal_set_of_v2_includes_v4() {
        // Union of B1 and B2 is {v1, v2, v4, v5, v6}.
        let dec = six_item();
        assert_eq!(dec.proximal_set(1).unwrap(), vec![0, 1, 3, 4, 5]);
    }

    #[test]
    fn singleton_block_proximal_set() {
        let dec = Decomposition::new(
            2,
            vec![vec![0], vec![1]],
            vec!["a".to_string(), "b".to_string()],
        )
        .unwrap();
        assert_eq!(dec.proximal_set(0).unwrap(), vec![0]);
        assert_eq!(dec.membership_count(0), 1);
    }

    #[test]
    fn proximal_set_range_check() {
        let dec = six_item();
        assert!(dec.proximal_set(6).is_err());
    }

    #[test]
    fn coverage_and_shape_validation() {
        let uncovered = Decomposition::new(3, vec![vec![0, 1]], vec!["a".to_string()]);
        assert!(matches!(uncovered, Err(Error::Validation(_))));

        let empty_block = Decomposition::new(
            1,
            vec![vec![0], vec![]],
            vec!["a".to_string(), "b".to_string()],
        );
        assert!(empty_block.is_err());

        let dup = Decomposition::new(1, vec![vec![0, 0]], vec!["a".to_string()]);
        assert!(dup.is_err());

        let out_of_range = Decomposition::new(1, vec![vec![0, 1]], vec!["a".to_string()]);
        assert!(out_of_range.is_err());
    }

    #[test]
    fn nnz_identities() {
        let dec = six_item();
        let f = dec.ncd_factors();
        let total_memberships: usize = (0..6).map(|v| dec.membership_count(v)).sum();
        assert_eq!(f.x.nnz(), total_memberships);
        assert_eq!(f.y.nnz(), total_memberships);
    }
}
