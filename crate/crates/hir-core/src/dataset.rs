//! Rating data: train/test splits and the artificial sparsification used
//! by the robustness experiments.
//!
//! Identifiers are densified once at construction: users become 0..n-1 in
//! ascending order of their original ids, items become `original_id - 1`
//! over the full catalogue of `item_count` items (so items that were never
//! rated still receive rank scores). All randomized operations are pure
//! functions of their inputs and an explicit `u64` seed, driven by a
//! ChaCha12 stream so that experiment outputs reproduce across machines.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};

/// One rating event. Before densification `user` and `item` carry the
/// dataset's original ids; inside a [`RatingsDataset`] they are dense
/// 0-based indices. The timestamp is carried through untouched.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RatingTriple {
    pub user: u32,
    pub item: u32,
    pub rating: u8,
    pub timestamp: i64,
}

/// A train/test partition of ratings over a fixed user and item universe.
#[derive(Debug, Clone)]
pub struct RatingsDataset {
    /// Number of users.
    pub n: usize,
    /// Number of items (the full catalogue, not just rated items).
    pub m: usize,
    /// Training ratings, dense indices.
    pub train: Vec<RatingTriple>,
    /// Test ratings, dense indices.
    pub test: Vec<RatingTriple>,
    /// Per-user sorted training item lists (L_i).
    pub user_train_items: Vec<Vec<u32>>,
    /// Per-user sorted test item lists (T_i).
    pub user_test_items: Vec<Vec<u32>>,
    /// Dense user index -> original user id.
    pub user_ids: Vec<u32>,
    /// Dense item index -> original item id (original ids are 1..=m).
    pub item_ids: Vec<u32>,
}

fn check_triples(triples: &[RatingTriple], split: &str, item_count: usize) -> Result<()> {
    for t in triples {
        if !(1..=5).contains(&t.rating) {
            return Err(Error::Validation(format!(
                "{split}: rating {} for (user {}, item {}) outside 1..=5",
                t.rating, t.user, t.item
            )));
        }
        if t.item == 0 || t.item as usize > item_count {
            return Err(Error::Validation(format!(
                "{split}: item id {} outside catalogue 1..={item_count}",
                t.item
            )));
        }
    }
    Ok(())
}

impl RatingsDataset {
    /// Densify and validate a train/test pair given with original ids.
    ///
    /// Item ids must lie in `1..=item_count` (the MovieLens convention);
    /// user ids are arbitrary and are densified in ascending order.
    /// Duplicate (user, item) pairs within a split and overlaps across the
    /// two splits are rejected rather than resolved.
    pub fn from_triples(
        train: Vec<RatingTriple>,
        test: Vec<RatingTriple>,
        item_count: usize,
    ) -> Result<Self> {
        check_triples(&train, "train", item_count)?;
        check_triples(&test, "test", item_count)?;

        let mut user_ids: Vec<u32> = train.iter().chain(&test).map(|t| t.user).collect();
        user_ids.sort_unstable();
        user_ids.dedup();
        let n = user_ids.len();
        let m = item_count;

        let dense_user = |orig: u32| user_ids.binary_search(&orig).expect("id seen above") as u32;
        let densify = |ts: Vec<RatingTriple>| -> Vec<RatingTriple> {
            ts.into_iter()
                .map(|t| RatingTriple {
                    user: dense_user(t.user),
                    item: t.item - 1,
                    ..t
                })
                .collect()
        };
        let train = densify(train);
        let test = densify(test);

        // Duplicates within a split and overlaps across splits are both
        // symptoms of corrupt input; surface them instead of last-wins.
        let mut pairs: Vec<(u32, u32, bool)> = train
            .iter()
            .map(|t| (t.user, t.item, false))
            .chain(test.iter().map(|t| (t.user, t.item, true)))
            .collect();
        pairs.sort_unstable();
        for w in pairs.windows(2) {
            let (u, i, in_test_a) = w[0];
            let (u2, i2, in_test_b) = w[1];
            if u == u2 && i == i2 {
                let who = (user_ids[u as usize], i + 1);
                let msg: String = if in_test_a == in_test_b {
                    let split = if in_test_a { "test" } else { "train" };
                    format!("duplicate (user {}, item {}) in {split} split", who.0, who.1)
                } else {
                    format!(
                        "(user {}, item {}) appears in both train and test",
                        who.0, who.1
                    )
                };
                return Err(Error::Validation(msg));
            }
        }

        let mut ds = Self {
            n,
            m,
            train,
            test,
            user_train_items: Vec::new(),
            user_test_items: Vec::new(),
            user_ids,
            item_ids: (1..=m as u32).collect(),
        };
        ds.rebuild_user_items();
        Ok(ds)
    }

    fn rebuild_user_items(&mut self) {
        let mut train_items = vec![Vec::new(); self.n];
        for t in &self.train {
            train_items[t.user as usize].push(t.item);
        }
        let mut test_items = vec![Vec::new(); self.n];
        for t in &self.test {
            test_items[t.user as usize].push(t.item);
        }
        for l in train_items.iter_mut().chain(test_items.iter_mut()) {
            l.sort_unstable();
        }
        self.user_train_items = train_items;
        self.user_test_items = test_items;
    }

    /// Dense index of an original user id, if present.
    pub fn user_index(&self, original: u32) -> Option<usize> {
        self.user_ids.binary_search(&original).ok()
    }

    /// Items the user rated in neither split (the complement of W_i).
    pub fn unseen_items(&self, user: usize) -> Vec<u32> {
        let mut seen = vec![false; self.m];
        for &i in &self.user_train_items[user] {
            seen[i as usize] = true;
        }
        for &i in &self.user_test_items[user] {
            seen[i as usize] = true;
        }
        (0..self.m as u32).filter(|&i| !seen[i as usize]).collect()
    }

    /// Keep a uniformly random fraction of the training ratings (chosen
    /// without replacement, round-half-up cardinality); the test set is
    /// untouched. Deterministic in `seed`.
    pub fn subsample(&self, fraction: f64, seed: u64) -> Result<RatingsDataset> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "subsample fraction must lie in (0, 1], got {fraction}"
            )));
        }
        // The nudge absorbs binary representation error of decimal
        // fractions (0.4 * 80000 must give exactly 32000).
        let keep = libm::floor(fraction * self.train.len() as f64 + 0.5 + 1e-9) as usize;
        let keep = keep.min(self.train.len());

        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut picked = rand::seq::index::sample(&mut rng, self.train.len(), keep).into_vec();
        picked.sort_unstable();
        let train = picked.iter().map(|&k| self.train[k]).collect();

        let mut out = Self {
            train,
            ..self.clone()
        };
        out.rebuild_user_items();
        Ok(out)
    }

    /// Simulate newly added items: pick `count` items having at least
    /// `min_ratings` training ratings and retain only
    /// `ceil(keep_fraction * r)` of each one's ratings. Returns the
    /// degraded dataset and the affected items (ascending). Deterministic
    /// in `seed`; ratings of unselected items are untouched.
    pub fn degrade_items(
        &self,
        count: usize,
        min_ratings: usize,
        keep_fraction: f64,
        seed: u64,
    ) -> Result<(RatingsDataset, Vec<u32>)> {
        if !(0.0..=1.0).contains(&keep_fraction) {
            return Err(Error::InvalidArgument(format!(
                "keep_fraction must lie in [0, 1], got {keep_fraction}"
            )));
        }
        let mut per_item: Vec<Vec<usize>> = vec![Vec::new(); self.m];
        for (k, t) in self.train.iter().enumerate() {
            per_item[t.item as usize].push(k);
        }
        let eligible: Vec<u32> = (0..self.m as u32)
            .filter(|&i| per_item[i as usize].len() >= min_ratings)
            .collect();
        if eligible.len() < count {
            return Err(Error::InvalidArgument(format!(
                "requested {count} items with >= {min_ratings} training ratings, \
                 only {} eligible",
                eligible.len()
            )));
        }

        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut affected: Vec<u32> = rand::seq::index::sample(&mut rng, eligible.len(), count)
            .into_iter()
            .map(|k| eligible[k])
            .collect();
        affected.sort_unstable();

        let mut drop = vec![false; self.train.len()];
        for &item in &affected {
            let positions = &per_item[item as usize];
            let r = positions.len();
            // ceil with the same decimal-fraction nudge as subsample;
            // ceil (not round) so at least one rating survives.
            let keep = libm::ceil(keep_fraction * r as f64 - 1e-9).max(0.0) as usize;
            let keep = keep.min(r);
            let mut kept = vec![false; r];
            for k in rand::seq::index::sample(&mut rng, r, keep) {
                kept[k] = true;
            }
            for (pos, &keep_it) in positions.iter().zip(&kept) {
                if !keep_it {
                    drop[*pos] = true;
                }
            }
        }
        let train = self
            .train
            .iter()
            .enumerate()
            .filter(|(k, _)| !drop[*k])
            .map(|(_, t)| *t)
            .collect();
        let mut out = Self {
            train,
            ..self.clone()
        };
        out.rebuild_user_items();
        Ok((out, affected))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(user: u32, item: u32, rating: u8) -> RatingTriple {
        RatingTriple {
            user,
            item,
            rating,
            timestamp: 0,
        }
    }

    fn small() -> RatingsDataset {
        // Users 10, 20, 30 over a 5-item catalogue.
        RatingsDataset::from_triples(
            vec![t(10, 1, 4), t(10, 2, 1), t(20, 2, 5), t(20, 3, 3), t(30, 1, 2)],
            vec![t(10, 3, 5), t(30, 4, 1)],
            5,
        )
        .unwrap()
    }

    #[test]
    fn densifies_ids() {
        let ds = small();
        assert_eq!(ds.n, 3);
        assert_eq!(ds.m, 5);
        assert_eq!(ds.user_ids, vec![10, 20, 30]);
        assert_eq!(ds.user_index(20), Some(1));
        assert_eq!(ds.user_index(99), None);
        assert_eq!(ds.user_train_items[0], vec![0, 1]);
        assert_eq!(ds.user_test_items[0], vec![2]);
        // Item 5 exists even though nobody rated it.
        assert_eq!(ds.unseen_items(0), vec![3, 4]);
    }

    #[test]
    fn rejects_duplicates_and_overlap() {
        let dup = RatingsDataset::from_triples(vec![t(1, 1, 3), t(1, 1, 4)], vec![], 2);
        assert!(matches!(dup, Err(Error::Validation(_))));

        let overlap = RatingsDataset::from_triples(vec![t(1, 1, 3)], vec![t(1, 1, 4)], 2);
        assert!(matches!(overlap, Err(Error::Validation(_))));
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RatingsDataset::from_triples(vec![t(1, 1, 6)], vec![], 2).is_err());
        assert!(RatingsDataset::from_triples(vec![t(1, 3, 4)], vec![], 2).is_err());
        assert!(RatingsDataset::from_triples(vec![t(1, 0, 4)], vec![], 2).is_err());
    }

    #[test]
    fn empty_test_split_is_fine() {
        let ds = RatingsDataset::from_triples(vec![t(1, 1, 3)], vec![], 2).unwrap();
        assert!(ds.test.is_empty());
        assert!(ds.user_test_items[0].is_empty());
    }

    #[test]
    fn user_only_in_test_has_empty_profile() {
        let ds = RatingsDataset::from_triples(vec![t(1, 1, 3)], vec![t(2, 2, 4)], 2).unwrap();
        let u = ds.user_index(2).unwrap();
        assert!(ds.user_train_items[u].is_empty());
    }

    #[test]
    fn subsample_identity_and_determinism() {
        let ds = small();
        let full = ds.subsample(1.0, 7).unwrap();
        assert_eq!(full.train, ds.train);

        let a = ds.subsample(0.6, 42).unwrap();
        let b = ds.subsample(0.6, 42).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.train.len(), 3); // round(0.6 * 5)
        assert_eq!(a.test, ds.test);
    }

    #[test]
    fn subsample_rejects_bad_fraction() {
        let ds = small();
        assert!(ds.subsample(0.0, 1).is_err());
        assert!(ds.subsample(1.5, 1).is_err());
    }

    #[test]
    fn subsample_monotone_in_fraction() {
        let ds = small();
        let mut last = 0;
        for f in [0.2, 0.4, 0.6, 0.8, 1.0] {
            let len = ds.subsample(f, 5).unwrap().train.len();
            assert!(len >= last, "fraction {f}: {len} < {last}");
            last = len;
        }
    }

    #[test]
    fn round_half_up_cardinality() {
        // 0.5 of 5 ratings rounds up to 3.
        let ds = small();
        assert_eq!(ds.subsample(0.5, 3).unwrap().train.len(), 3);
    }

    #[test]
    fn degrade_keeps_ceil_and_complement() {
        // Item 1 rated by 10 users, everything else untouched.
        let mut train: Vec<_> = (1..=10).map(|u| t(u, 1, 3)).collect();
        train.push(t(1, 2, 5));
        let ds = RatingsDataset::from_triples(train, vec![], 3).unwrap();

        let (deg, affected) = ds.degrade_items(1, 10, 0.1, 9).unwrap();
        assert_eq!(affected, vec![0]);
        let item0 = deg.train.iter().filter(|t| t.item == 0).count();
        assert_eq!(item0, 1); // ceil(0.1 * 10)
        // Non-selected items keep their ratings exactly.
        let others: Vec<_> = deg.train.iter().filter(|t| t.item != 0).collect();
        assert_eq!(others.len(), 1);
        assert_eq!(others[0].item, 1);
        assert_eq!(deg.test, ds.test);

        // Exactly 30 ratings at 0.1 retains 3, not ceil(3.0000000000000004).
        let train30: Vec<_> = (1..=30).map(|u| t(u, 1, 3)).collect();
        let ds30 = RatingsDataset::from_triples(train30, vec![], 1).unwrap();
        let (deg30, _) = ds30.degrade_items(1, 30, 0.1, 1).unwrap();
        assert_eq!(deg30.train.len(), 3);
    }

    #[test]
    fn degrade_identity_at_full_keep() {
        let ds = small();
        let (deg, _) = ds.degrade_items(1, 2, 1.0, 4).unwrap();
        assert_eq!(deg.train, ds.train);
    }

    #[test]
    fn degrade_names_eligible_count() {
        let ds = small();
        let err = ds.degrade_items(3, 2, 0.5, 4).unwrap_err();
        match err {
            Error::InvalidArgument(msg) => assert!(msg.contains("only 2 eligible"), "{msg}"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn degrade_deterministic() {
        let mut train: Vec<_> = (1..=20).map(|u| t(u, 1, 3)).collect();
        train.extend((1..=20).map(|u| t(u, 2, 4)));
        let ds = RatingsDataset::from_triples(train, vec![], 2).unwrap();
        let (a, ia) = ds.degrade_items(1, 20, 0.25, 77).unwrap();
        let (b, ib) = ds.degrade_items(1, 20, 0.25, 77).unwrap();
        assert_eq!(ia, ib);
        assert_eq!(a.train, b.train);
    }
}
