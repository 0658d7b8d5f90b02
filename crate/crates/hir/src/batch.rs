//! Parallel batch ranking.
//!
//! User columns are independent: each panel of the preference matrix runs
//! its own self-contained power iteration, so panels can be distributed
//! across threads and stitched back together with results bit-identical
//! to the serial path, whatever the worker count.

use hir_core::model::PreferenceMatrix;
use hir_core::ranker::{ConvergenceParams, RankEngine, RankMatrix, PANEL_WIDTH};
use rayon::prelude::*;

/// Rank every user column using the current rayon thread pool.
pub fn rank_all_parallel(
    engine: &RankEngine,
    prefs: &PreferenceMatrix,
    conv: ConvergenceParams,
) -> hir_core::error::Result<RankMatrix> {
    let ranges: Vec<std::ops::Range<usize>> = (0..prefs.n)
        .step_by(PANEL_WIDTH)
        .map(|start| start..(start + PANEL_WIDTH).min(prefs.n))
        .collect();
    let panels = ranges
        .into_par_iter()
        .map(|cols| {
            engine
                .run_panel(prefs, cols.clone(), conv)
                .map(|run| (cols, run))
        })
        .collect::<hir_core::error::Result<Vec<_>>>()?;
    Ok(RankMatrix::from_panels(engine.item_count(), prefs.n, panels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use hir_core::dataset::{RatingTriple, RatingsDataset};
    use hir_core::itemspace::Decomposition;
    use hir_core::model::{build_model, preference_matrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn parallel_equals_serial_bitwise() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let m = 40u32;
        let mut train = Vec::new();
        for u in 1..=300u32 {
            for i in 1..=m {
                if rng.random_range(0.0..1.0) < 0.15 {
                    train.push(RatingTriple {
                        user: u,
                        item: i,
                        rating: rng.random_range(1..=5),
                        timestamp: 0,
                    });
                }
            }
        }
        let ds = RatingsDataset::from_triples(train, vec![], m as usize).unwrap();
        let dec = Decomposition::new(
            m as usize,
            vec![(0..m / 2).collect(), (m / 4..m).collect()],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let model = build_model(&ds, &[(dec, 0.1)], 0.8, 0.5).unwrap();
        let engine = RankEngine::new(&model);
        let prefs = preference_matrix(&ds);
        let conv = ConvergenceParams::default();

        let serial = engine.rank_all(&prefs, conv).unwrap();
        let parallel = rank_all_parallel(&engine, &prefs, conv).unwrap();
        for u in 0..ds.n {
            assert_eq!(serial.user_scores(u), parallel.user_scores(u), "user {u}");
        }
        assert_eq!(serial.iterations, parallel.iterations);
    }
}
