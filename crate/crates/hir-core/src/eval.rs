//! Ranking-quality metrics.
//!
//! DOA (degree of agreement) counts, per user, how many (test item,
//! never-rated item) pairs the ranking orders correctly; ties count as
//! incorrect. macro-DOA averages the per-user fractions, micro-DOA pools
//! the pair counts. A random ranking scores 0.5, a perfect one 1.0.
//!
//! Kendall's tau compares two score vectors over all index pairs:
//! concordant minus discordant over the full pair count, with tied pairs
//! (in either vector) excluded from the numerator only. Computed by a
//! merge-sort inversion count in O(m log m); integer arithmetic keeps it
//! exactly equal to the quadratic definition.

use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::RatingsDataset;
use crate::error::{Error, Result};

/// One user's DOA outcome.
#[derive(Debug, Clone, Copy)]
pub struct UserDoa {
    pub user: usize,
    pub doa: f64,
    pub correct: u64,
    pub pairs: u64,
}

/// Aggregated DOA over a user population.
#[derive(Debug, Clone)]
pub struct DoaReport {
    pub per_user: Vec<UserDoa>,
    /// Unweighted mean of the per-user DOA values.
    pub macro_doa: f64,
    /// Pooled correct pairs over pooled total pairs.
    pub micro_doa: f64,
    /// Users left out because their test set is empty.
    pub skipped_users: usize,
}

/// Correct and total pair counts for one user: pairs are (test item,
/// unseen item); correct means the test item's score is strictly greater.
///
/// Sorting the unseen scores once makes this O((|T| + |W|) log |W|); the
/// result is exactly the brute-force double loop.
pub fn doa_counts(scores: &[f64], test_items: &[u32], unseen_items: &[u32]) -> Result<(u64, u64)> {
    if test_items.is_empty() {
        return Err(Error::InvalidArgument(
            "DOA is undefined for an empty test set; skip the user".into(),
        ));
    }
    if unseen_items.is_empty() {
        return Err(Error::InvalidArgument(
            "DOA is undefined when the user has rated every item".into(),
        ));
    }
    let mut unseen_scores: Vec<f64> = unseen_items
        .iter()
        .map(|&i| scores[i as usize])
        .collect();
    unseen_scores.sort_unstable_by(|a, b| a.partial_cmp(b).expect("scores are finite"));
    let mut correct = 0u64;
    for &t in test_items {
        let s = scores[t as usize];
        correct += unseen_scores.partition_point(|&x| x < s) as u64;
    }
    Ok((correct, test_items.len() as u64 * unseen_items.len() as u64))
}

/// Per-user DOA: fraction of correctly ordered pairs and the pair count.
pub fn doa_user(scores: &[f64], test_items: &[u32], unseen_items: &[u32]) -> Result<(f64, u64)> {
    let (correct, pairs) = doa_counts(scores, test_items, unseen_items)?;
    Ok((correct as f64 / pairs as f64, pairs))
}

/// Combine per-user results into macro and micro averages. `skipped` is
/// the number of users excluded for having an empty test set.
pub fn doa_aggregate(per_user: Vec<UserDoa>, skipped: usize) -> Result<DoaReport> {
    if per_user.is_empty() {
        return Err(Error::InvalidArgument(
            "DOA aggregation needs at least one user with a nonempty test set".into(),
        ));
    }
    let macro_doa = per_user.iter().map(|u| u.doa).sum::<f64>() / per_user.len() as f64;
    let correct: u64 = per_user.iter().map(|u| u.correct).sum();
    let pairs: u64 = per_user.iter().map(|u| u.pairs).sum();
    Ok(DoaReport {
        macro_doa,
        micro_doa: correct as f64 / pairs as f64,
        per_user,
        skipped_users: skipped,
    })
}

/// Kendall's tau between two score vectors over all m(m-1)/2 index pairs.
/// Pairs ordered strictly the same way are concordant, strictly opposite
/// discordant, anything involving a tie neither; tau = (C - D) / total.
pub fn kendall_tau(scores_a: &[f64], scores_b: &[f64]) -> Result<f64> {
    if scores_a.len() != scores_b.len() {
        return Err(Error::DimensionMismatch {
            expected: scores_a.len(),
            got: scores_b.len(),
        });
    }
    let m = scores_a.len();
    if m < 2 {
        return Err(Error::InvalidArgument(
            "kendall tau needs at least two entries".into(),
        ));
    }
    let total = (m as u64 * (m as u64 - 1)) / 2;

    let mut order: Vec<u32> = (0..m as u32).collect();
    order.sort_unstable_by(|&p, &q| {
        let (p, q) = (p as usize, q as usize);
        scores_a[p]
            .partial_cmp(&scores_a[q])
            .expect("scores are finite")
            .then(scores_b[p].partial_cmp(&scores_b[q]).expect("scores are finite"))
    });

    fn run_pairs(seq: &[u32], mut same: impl FnMut(u32, u32) -> bool) -> u64 {
        let mut pairs = 0u64;
        let mut run = 1u64;
        for w in seq.windows(2) {
            if same(w[0], w[1]) {
                run += 1;
            } else {
                pairs += run * (run - 1) / 2;
                run = 1;
            }
        }
        pairs + run * (run - 1) / 2
    }
    let tied_a = run_pairs(&order, |p, q| {
        scores_a[p as usize] == scores_a[q as usize]
    });
    let tied_ab = run_pairs(&order, |p, q| {
        scores_a[p as usize] == scores_a[q as usize]
            && scores_b[p as usize] == scores_b[q as usize]
    });
    let mut b_order = order.clone();
    b_order.sort_unstable_by(|&p, &q| {
        scores_b[p as usize]
            .partial_cmp(&scores_b[q as usize])
            .expect("scores are finite")
    });
    let tied_b = run_pairs(&b_order, |p, q| {
        scores_b[p as usize] == scores_b[q as usize]
    });

    // With ties in a sorted ascending by b, every strict inversion of the
    // b-sequence is exactly one discordant pair.
    let mut b_seq: Vec<f64> = order.iter().map(|&p| scores_b[p as usize]).collect();
    let mut buf = vec![0.0; m];
    let discordant = count_inversions(&mut b_seq, &mut buf);

    let neither = tied_a + tied_b - tied_ab;
    let concordant = total - neither - discordant;
    Ok((concordant as f64 - discordant as f64) / total as f64)
}

/// Strict inversions (left > right) by bottom-up merge sort.
fn count_inversions(seq: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = seq.len();
    let mut inversions = 0u64;
    let mut width = 1;
    while width < n {
        let mut start = 0;
        while start + width < n {
            let mid = start + width;
            let end = (start + 2 * width).min(n);
            let (left, right) = (&seq[start..mid], &seq[mid..end]);
            let out = &mut buf[start..end];
            let (mut i, mut j, mut k) = (0, 0, 0);
            while i < left.len() && j < right.len() {
                if left[i] <= right[j] {
                    out[k] = left[i];
                    i += 1;
                } else {
                    inversions += (left.len() - i) as u64;
                    out[k] = right[j];
                    j += 1;
                }
                k += 1;
            }
            out[k..k + left.len() - i].copy_from_slice(&left[i..]);
            let k = k + left.len() - i;
            out[k..k + right.len() - j].copy_from_slice(&right[j..]);
            seq[start..end].copy_from_slice(&buf[start..end]);
            start = end;
        }
        width *= 2;
    }
    inversions
}

/// Popularity baseline: every user gets the same vector, items scored by
/// training rating count and normalized to sum one (uniform when the
/// training set is empty).
pub fn maxf_scores(ds: &RatingsDataset) -> Vec<f64> {
    let mut counts = vec![0.0f64; ds.m];
    for t in &ds.train {
        counts[t.item as usize] += 1.0;
    }
    let total: f64 = counts.iter().sum();
    if total > 0.0 {
        for c in &mut counts {
            *c /= total;
        }
    } else {
        counts.fill(1.0 / ds.m as f64);
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::RatingTriple;

    #[test]
    fn doa_perfect_and_tied() {
        let scores = [0.9, 0.8, 0.1, 0.2];
        // Test items 0, 1 above unseen 2, 3: perfect.
        let (doa, pairs) = doa_user(&scores, &[0, 1], &[2, 3]).unwrap();
        assert_eq!((doa, pairs), (1.0, 4));

        // All-equal scores fail every strict comparison.
        let flat = [0.25; 4];
        let (doa, _) = doa_user(&flat, &[0, 1], &[2, 3]).unwrap();
        assert_eq!(doa, 0.0);
    }

    #[test]
    fn doa_half_case() {
        // T = {a}, unseen = {b, c}; a beats c but not b.
        let scores = [0.5, 0.6, 0.1];
        let (doa, pairs) = doa_user(&scores, &[0], &[1, 2]).unwrap();
        assert_eq!((doa, pairs), (0.5, 2));
    }

    #[test]
    fn doa_rejects_empty_sets() {
        let scores = [0.5, 0.5];
        assert!(doa_user(&scores, &[], &[1]).is_err());
        assert!(doa_user(&scores, &[0], &[]).is_err());
    }

    #[test]
    fn doa_matches_brute_force_with_ties() {
        let scores = [0.3, 0.3, 0.1, 0.5, 0.3, 0.0];
        let test = [0u32, 3];
        let unseen = [1u32, 2, 4, 5];
        let (correct, pairs) = doa_counts(&scores, &test, &unseen).unwrap();
        let mut brute = 0u64;
        for &t in &test {
            for &w in &unseen {
                if scores[t as usize] > scores[w as usize] {
                    brute += 1;
                }
            }
        }
        assert_eq!(correct, brute);
        assert_eq!(pairs, 8);
    }

    #[test]
    fn aggregate_macro_micro() {
        let users = vec![
            UserDoa {
                user: 0,
                doa: 1.0,
                correct: 1,
                pairs: 1,
            },
            UserDoa {
                user: 1,
                doa: 0.0,
                correct: 0,
                pairs: 9,
            },
        ];
        let report = doa_aggregate(users, 3).unwrap();
        assert_eq!(report.macro_doa, 0.5);
        assert_eq!(report.micro_doa, 0.1);
        assert_eq!(report.skipped_users, 3);

        assert!(doa_aggregate(vec![], 0).is_err());
    }

    #[test]
    fn aggregate_single_user_collapses() {
        let report = doa_aggregate(
            vec![UserDoa {
                user: 0,
                doa: 0.75,
                correct: 3,
                pairs: 4,
            }],
            0,
        )
        .unwrap();
        assert_eq!(report.macro_doa, 0.75);
        assert_eq!(report.micro_doa, 0.75);
    }

    #[test]
    fn tau_reference_cases() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(kendall_tau(&a, &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(kendall_tau(&a, &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        // Orders (1,2,3) vs (1,3,2): 2 concordant, 1 discordant.
        let tau = kendall_tau(&a, &[1.0, 3.0, 2.0]).unwrap();
        assert!((tau - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn tau_tie_rule() {
        // x against itself with ties: (pairs - tied) / pairs.
        let x = [1.0, 1.0, 2.0, 3.0];
        let tau = kendall_tau(&x, &x).unwrap();
        assert_eq!(tau, (6.0 - 1.0) / 6.0);

        // Constant vectors: every pair tied, tau = 0.
        assert_eq!(kendall_tau(&[1.0, 1.0], &[2.0, 2.0]).unwrap(), 0.0);
    }

    #[test]
    fn tau_is_symmetric() {
        let a = [0.3, 0.1, 0.4, 0.1, 0.5];
        let b = [0.2, 0.2, 0.9, 0.7, 0.1];
        assert_eq!(kendall_tau(&a, &b).unwrap(), kendall_tau(&b, &a).unwrap());
    }

    #[test]
    fn tau_argument_checks() {
        assert!(kendall_tau(&[1.0], &[1.0]).is_err());
        assert!(kendall_tau(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn maxf_counts_and_fallbacks() {
        let t = |user: u32, item: u32| RatingTriple {
            user,
            item,
            rating: 3,
            timestamp: 0,
        };
        let ds = RatingsDataset::from_triples(
            vec![t(1, 1), t(2, 1), t(3, 1), t(1, 2)],
            vec![],
            3,
        )
        .unwrap();
        assert_eq!(maxf_scores(&ds), vec![0.75, 0.25, 0.0]);

        let empty = RatingsDataset::from_triples(vec![], vec![t(1, 1)], 3).unwrap();
        assert_eq!(maxf_scores(&empty), vec![1.0 / 3.0; 3]);
    }
}
