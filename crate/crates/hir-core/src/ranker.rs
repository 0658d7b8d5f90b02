//! Stationary ranking vectors by (batch) power iteration.
//!
//! Each user's ranking vector is the stationary distribution of a Markov
//! chain whose transition matrix blends the direct-association matrices,
//! the NCD proximity factors, and a rank-1 teleport to the user's
//! preference vector. One update step computes
//!
//! ```text
//! t    = alpha*phi * Ûᵀpi + alpha*(1-phi) * Ĝᵀpi + sum_l beta_l * Yᵀ_l (Xᵀ_l pi)
//! pi'  = t + (1 - ||t||_1) * omega
//! ```
//!
//! The L1 deficit of `t` collects both the teleport weight and the mass
//! that landed on dangling matrix rows, so the update equals a
//! multiplication with the fully patched transition matrix without ever
//! materializing it.
//!
//! [`RankEngine`] prepares merged, transposed copies of the model matrices
//! once and then ranks one user or a whole preference matrix. The batch
//! path walks user panels and freezes every column the moment its own
//! residual drops below tolerance, so a user's trajectory is bit-identical
//! whether computed alone, in a batch, or under any partitioning of the
//! batch — only throughput differs.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{Error, Result};
use crate::model::{HirModel, PreferenceMatrix};
use crate::sparse::SparseRowMatrix;

/// Stopping rule for the power iteration.
#[derive(Debug, Clone, Copy)]
pub struct ConvergenceParams {
    /// L1 residual below which a user's vector counts as converged.
    pub tol: f64,
    /// Hard cap on iterations.
    pub maxit: usize,
}

impl Default for ConvergenceParams {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            maxit: 100,
        }
    }
}

impl ConvergenceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tol must be > 0, got {}",
                self.tol
            )));
        }
        if self.maxit < 1 {
            return Err(Error::InvalidArgument("maxit must be >= 1".into()));
        }
        Ok(())
    }
}

/// One user's stationary ranking vector with convergence metadata.
#[derive(Debug, Clone)]
pub struct RankVector {
    pub scores: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Ranking vectors for a whole user population; column u is user u's
/// vector, stored item-major.
#[derive(Debug, Clone)]
pub struct RankMatrix {
    pub m: usize,
    pub n: usize,
    data: Vec<f64>,
    /// Worst per-user iteration count.
    pub iterations: usize,
    /// Worst per-user final residual.
    pub residual: f64,
    pub converged: bool,
}

impl RankMatrix {
    pub fn score(&self, item: usize, user: usize) -> f64 {
        self.data[item * self.n + user]
    }

    pub fn user_scores(&self, user: usize) -> Vec<f64> {
        (0..self.m).map(|i| self.score(i, user)).collect()
    }

    /// Stitch panel runs (ordered, contiguous) back into one matrix.
    pub fn from_panels(m: usize, n: usize, panels: Vec<(Range<usize>, PanelRun)>) -> Self {
        let mut data = vec![0.0; m * n];
        let mut iterations = 0;
        let mut residual = 0.0f64;
        let mut converged = true;
        for (cols, run) in &panels {
            let w = cols.len();
            for i in 0..m {
                data[i * n + cols.start..i * n + cols.end]
                    .copy_from_slice(&run.scores[i * w..(i + 1) * w]);
            }
            for c in 0..w {
                iterations = iterations.max(run.iterations[c]);
                residual = residual.max(run.residuals[c]);
                converged &= run.converged[c];
            }
        }
        Self {
            m,
            n,
            data,
            iterations,
            residual,
            converged,
        }
    }
}

/// Result of ranking one contiguous panel of users. Scores are item-major
/// with the panel's width as stride.
#[derive(Debug, Clone)]
pub struct PanelRun {
    pub scores: Vec<f64>,
    pub iterations: Vec<usize>,
    pub residuals: Vec<f64>,
    pub converged: Vec<bool>,
}

/// Reference implementation of one update step, straight off the model
/// matrices. The engine below computes the same quantity from merged
/// transposed copies; tests check both against a dense oracle.
pub fn iterate_once(model: &HirModel, pi: &[f64], omega: &[f64]) -> Vec<f64> {
    let m = model.item_count();
    debug_assert_eq!(pi.len(), m);
    debug_assert_eq!(omega.len(), m);
    let mut t = vec![0.0; m];
    model
        .u_hat
        .add_scaled_tr_mul_vec(pi, model.alpha * model.phi, &mut t);
    model
        .g_hat
        .add_scaled_tr_mul_vec(pi, model.alpha * (1.0 - model.phi), &mut t);
    let mut z = Vec::new();
    for (factors, beta) in &model.ncd {
        if *beta == 0.0 {
            continue;
        }
        z.clear();
        z.resize(factors.block_count(), 0.0);
        factors.x.add_scaled_tr_mul_vec(pi, 1.0, &mut z);
        factors.y.add_scaled_tr_mul_vec(&z, *beta, &mut t);
    }
    let mass: f64 = t.iter().sum();
    // Guard against a roundoff-negative deficit; the exact value is
    // (1 - alpha - beta_total) plus the dangling mass, all nonnegative.
    let deficit = (1.0 - mass).max(0.0);
    for (tj, wj) in t.iter_mut().zip(omega) {
        *tj += deficit * wj;
    }
    t
}

/// Prepared ranking kernel: transition structure transposed for gather
/// products and the two direct matrices merged with their weights folded
/// in, so one sparse pass per iteration serves every user in a panel.
pub struct RankEngine {
    m: usize,
    /// (alpha*phi*Û + alpha*(1-phi)*Ĝ) transposed, weights folded in.
    direct_t: SparseRowMatrix,
    /// Per decomposition: Xᵀ and beta·Yᵀ.
    ncd_t: Vec<(SparseRowMatrix, SparseRowMatrix)>,
}

impl RankEngine {
    pub fn new(model: &HirModel) -> Self {
        let m = model.item_count();
        let wu = model.alpha * model.phi;
        let wg = model.alpha * (1.0 - model.phi);
        let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); m];
        for (i, row) in rows.iter_mut().enumerate() {
            let (uc, uv) = model.u_hat.row(i);
            let (gc, gv) = model.g_hat.row(i);
            let (mut a, mut b) = (0, 0);
            while a < uc.len() || b < gc.len() {
                let next_u = uc.get(a).copied().unwrap_or(u32::MAX);
                let next_g = gc.get(b).copied().unwrap_or(u32::MAX);
                let (col, val) = if next_u < next_g {
                    a += 1;
                    (next_u, wu * uv[a - 1])
                } else if next_g < next_u {
                    b += 1;
                    (next_g, wg * gv[b - 1])
                } else {
                    a += 1;
                    b += 1;
                    (next_u, wu * uv[a - 1] + wg * gv[b - 1])
                };
                if val > 0.0 {
                    row.push((col, val));
                }
            }
        }
        let direct = SparseRowMatrix::from_rows(m, rows).expect("merged rows are canonical");
        let ncd_t = model
            .ncd
            .iter()
            .filter(|(_, beta)| *beta > 0.0)
            .map(|(factors, beta)| {
                let xt = factors.x.transpose();
                let mut yt_rows: Vec<Vec<(u32, f64)>> = Vec::with_capacity(m);
                let yt = factors.y.transpose();
                for k in 0..m {
                    let (cols, vals) = yt.row(k);
                    yt_rows.push(
                        cols.iter()
                            .zip(vals)
                            .map(|(&c, &v)| (c, beta * v))
                            .collect(),
                    );
                }
                let yt_scaled = SparseRowMatrix::from_rows(factors.block_count(), yt_rows)
                    .expect("scaled Yᵀ rows are canonical");
                (xt, yt_scaled)
            })
            .collect();
        Self {
            m,
            direct_t: direct.transpose(),
            ncd_t,
        }
    }

    pub fn item_count(&self) -> usize {
        self.m
    }

    /// Rank the users in `cols` of the preference matrix. Per-column
    /// arithmetic is self-contained: the result for a user does not depend
    /// on which panel it was computed in.
    pub fn run_panel(
        &self,
        prefs: &PreferenceMatrix,
        cols: Range<usize>,
        conv: ConvergenceParams,
    ) -> Result<PanelRun> {
        conv.validate()?;
        if prefs.m != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                got: prefs.m,
            });
        }
        if cols.end > prefs.n {
            return Err(Error::InvalidArgument(format!(
                "column range {}..{} exceeds user count {}",
                cols.start, cols.end, prefs.n
            )));
        }
        let m = self.m;
        let w = cols.len();
        let mut omega = vec![0.0; m * w];
        for i in 0..m {
            omega[i * w..(i + 1) * w].copy_from_slice(&prefs.item_row(i)[cols.clone()]);
        }
        for c in 0..w {
            let sum: f64 = (0..m).map(|i| omega[i * w + c]).sum();
            if libm::fabs(sum - 1.0) > 1e-6 || (0..m).any(|i| omega[i * w + c] < 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "preference column {} is not a distribution (sum {sum})",
                    cols.start + c
                )));
            }
        }

        let mut pi = omega.clone();
        let mut pi_new = vec![0.0; m * w];
        let mut col_sum = vec![0.0; w];
        let mut done = vec![false; w];
        let mut iterations = vec![0usize; w];
        let mut residuals = vec![0.0f64; w];
        let max_blocks = self.ncd_t.iter().map(|(xt, _)| xt.rows()).max();
        let mut z = vec![0.0; max_blocks.unwrap_or(0) * w];

        for iter in 1..=conv.maxit {
            // pi_new = direct_tᵀ... gather: row j accumulates its sources.
            for j in 0..m {
                let out = &mut pi_new[j * w..(j + 1) * w];
                out.fill(0.0);
                let (srcs, vals) = self.direct_t.row(j);
                for (&i, &v) in srcs.iter().zip(vals) {
                    let src = &pi[i as usize * w..(i as usize + 1) * w];
                    for c in 0..w {
                        out[c] += v * src[c];
                    }
                }
            }
            for (xt, yt_scaled) in &self.ncd_t {
                let blocks = xt.rows();
                for k in 0..blocks {
                    let out = &mut z[k * w..(k + 1) * w];
                    out.fill(0.0);
                    let (srcs, vals) = xt.row(k);
                    for (&i, &v) in srcs.iter().zip(vals) {
                        let src = &pi[i as usize * w..(i as usize + 1) * w];
                        for c in 0..w {
                            out[c] += v * src[c];
                        }
                    }
                }
                for j in 0..m {
                    let out = &mut pi_new[j * w..(j + 1) * w];
                    let (srcs, vals) = yt_scaled.row(j);
                    for (&k, &v) in srcs.iter().zip(vals) {
                        let src = &z[k as usize * w..(k as usize + 1) * w];
                        for c in 0..w {
                            out[c] += v * src[c];
                        }
                    }
                }
            }

            // Teleport the deficit mass to omega, column by column.
            col_sum.fill(0.0);
            for j in 0..m {
                let row = &pi_new[j * w..(j + 1) * w];
                for c in 0..w {
                    col_sum[c] += row[c];
                }
            }
            for s in &mut col_sum {
                *s = (1.0 - *s).max(0.0);
            }
            for j in 0..m {
                let out = &mut pi_new[j * w..(j + 1) * w];
                let om = &omega[j * w..(j + 1) * w];
                for c in 0..w {
                    out[c] += col_sum[c] * om[c];
                }
            }

            // Renormalize; analytically redundant but it pins the L1 norm
            // against floating-point drift.
            col_sum.fill(0.0);
            for j in 0..m {
                let row = &pi_new[j * w..(j + 1) * w];
                for c in 0..w {
                    col_sum[c] += row[c];
                }
            }
            for j in 0..m {
                let out = &mut pi_new[j * w..(j + 1) * w];
                for c in 0..w {
                    out[c] /= col_sum[c];
                }
            }

            // Converged columns stay frozen at their recorded vector.
            for c in 0..w {
                if done[c] {
                    for j in 0..m {
                        pi_new[j * w + c] = pi[j * w + c];
                    }
                }
            }
            col_sum.fill(0.0);
            for j in 0..m {
                let new_row = &pi_new[j * w..(j + 1) * w];
                let old_row = &pi[j * w..(j + 1) * w];
                for c in 0..w {
                    col_sum[c] += libm::fabs(new_row[c] - old_row[c]);
                }
            }
            for c in 0..w {
                if !done[c] {
                    residuals[c] = col_sum[c];
                    iterations[c] = iter;
                    if col_sum[c] < conv.tol {
                        done[c] = true;
                    }
                }
            }
            core::mem::swap(&mut pi, &mut pi_new);
            if done.iter().all(|&d| d) {
                break;
            }
        }

        Ok(PanelRun {
            scores: pi,
            iterations,
            residuals,
            converged: done,
        })
    }

    /// Power iteration for a single user, starting from the preference
    /// vector itself.
    pub fn rank_user(&self, omega: &[f64], conv: ConvergenceParams) -> Result<RankVector> {
        if omega.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                got: omega.len(),
            });
        }
        let prefs = PreferenceMatrix::from_columns(self.m, vec![omega.to_vec()])?;
        let run = self.run_panel(&prefs, 0..1, conv)?;
        Ok(RankVector {
            scores: run.scores,
            iterations: run.iterations[0],
            residual: run.residuals[0],
            converged: run.converged[0],
        })
    }

    /// Batch power iteration over every user column, one panel at a time.
    pub fn rank_all(&self, prefs: &PreferenceMatrix, conv: ConvergenceParams) -> Result<RankMatrix> {
        let mut panels = Vec::new();
        let mut start = 0;
        while start < prefs.n {
            let end = (start + PANEL_WIDTH).min(prefs.n);
            panels.push((start..end, self.run_panel(prefs, start..end, conv)?));
            start = end;
        }
        Ok(RankMatrix::from_panels(self.m, prefs.n, panels))
    }
}

/// Panel width for batch runs. Results are identical for any width; this
/// only sizes the working set (two m × width panels) to stay cache-friendly.
pub const PANEL_WIDTH: usize = 128;

/// Convenience wrapper: build the engine and rank one user.
pub fn rank_user(model: &HirModel, omega: &[f64], conv: ConvergenceParams) -> Result<RankVector> {
    RankEngine::new(model).rank_user(omega, conv)
}

/// Convenience wrapper: build the engine and rank every user.
pub fn rank_all(
    model: &HirModel,
    prefs: &PreferenceMatrix,
    conv: ConvergenceParams,
) -> Result<RankMatrix> {
    RankEngine::new(model).rank_all(prefs, conv)
}

/// The `n` highest-scored items outside `exclude`, descending score, ties
/// broken by ascending item index. Returns fewer than `n` when the
/// candidate pool is smaller.
pub fn top_n(scores: &[f64], exclude: &[u32], n: usize) -> Vec<u32> {
    let mut excluded = vec![false; scores.len()];
    for &i in exclude {
        if (i as usize) < scores.len() {
            excluded[i as usize] = true;
        }
    }
    let mut candidates: Vec<u32> = (0..scores.len() as u32)
        .filter(|&i| !excluded[i as usize])
        .collect();
    candidates.sort_unstable_by(|&a, &b| {
        scores[b as usize]
            .partial_cmp(&scores[a as usize])
            .expect("rank scores are finite")
            .then(a.cmp(&b))
    });
    candidates.truncate(n);
    candidates
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{RatingTriple, RatingsDataset};
    use crate::itemspace::Decomposition;
    use crate::model::{build_model, preference_matrix, preference_vector};
    use alloc::string::ToString;

    fn t(user: u32, item: u32, rating: u8) -> RatingTriple {
        RatingTriple {
            user,
            item,
            rating,
            timestamp: 0,
        }
    }

    fn small_model(alpha: f64, beta: f64, phi: f64) -> (RatingsDataset, HirModel) {
        let train = vec![
            t(1, 1, 5),
            t(1, 2, 3),
            t(2, 2, 4),
            t(2, 3, 1),
            t(3, 1, 2),
            t(3, 3, 5),
        ];
        let ds = RatingsDataset::from_triples(train, vec![], 3).unwrap();
        let dec = Decomposition::new(
            3,
            vec![vec![0, 1], vec![1, 2]],
            vec!["a".to_string(), "b".to_string()],
        )
        .unwrap();
        let model = build_model(&ds, &[(dec, beta)], alpha, phi).unwrap();
        (ds, model)
    }

    #[test]
    fn pure_teleport_returns_omega() {
        let (ds, model) = small_model(0.0, 0.0, 0.5);
        let omega = preference_vector(&ds, 0);
        let pi = iterate_once(&model, &[1.0, 0.0, 0.0], &omega);
        assert_eq!(pi, omega);

        let rv = rank_user(&model, &omega, ConvergenceParams::default()).unwrap();
        assert_eq!(rv.iterations, 1);
        assert!(rv.converged);
        for (a, b) in rv.scores.iter().zip(&omega) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn deficit_equals_teleport_weight_without_dangling_rows() {
        // phi = 1 keeps the adjusted-cosine matrix (whose rows clamp away
        // on this tiny instance) out of the walk.
        let (ds, model) = small_model(0.6, 0.3, 1.0);
        assert!((0..3).all(|i| !model.u_hat.row_is_empty(i)));
        let omega = preference_vector(&ds, 0);
        let t = {
            // Reconstruct t before the teleport add-back.
            let pi_hat = iterate_once(&model, &omega, &omega);
            let mass: f64 = pi_hat.iter().sum();
            assert!((mass - 1.0).abs() < 1e-12);
            let mut t = pi_hat;
            // remove deficit * omega to recover ||t||_1
            let deficit = 1.0 - (0.6 + 0.3);
            for (tj, wj) in t.iter_mut().zip(&omega) {
                *tj -= deficit * wj;
            }
            t
        };
        let mass: f64 = t.iter().sum();
        assert!((mass - 0.9).abs() < 1e-12, "||t||_1 = {mass}");
    }

    #[test]
    fn huge_tolerance_stops_after_one_iteration() {
        let (ds, model) = small_model(0.8, 0.1, 0.5);
        let omega = preference_vector(&ds, 0);
        let rv = rank_user(&model, &omega, ConvergenceParams { tol: 2.0, maxit: 50 }).unwrap();
        assert_eq!(rv.iterations, 1);
    }

    #[test]
    fn fixed_point_and_invariants() {
        let (ds, model) = small_model(0.8, 0.1, 0.5);
        let conv = ConvergenceParams::default();
        let omega = preference_vector(&ds, 1);
        let rv = rank_user(&model, &omega, conv).unwrap();
        assert!(rv.converged);
        let sum: f64 = rv.scores.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(rv.scores.iter().all(|&x| x >= 0.0));

        // ||iterate(pi*) - pi*||_1 <= tol at the returned vector.
        let next = iterate_once(&model, &rv.scores, &omega);
        let drift: f64 = next
            .iter()
            .zip(&rv.scores)
            .map(|(a, b)| (a - b).abs())
            .sum();
        assert!(drift <= conv.tol * 1.1, "fixed-point drift {drift}");
    }

    #[test]
    fn batch_matches_sequential_exactly() {
        let (ds, model) = small_model(0.7, 0.2, 0.3);
        let engine = RankEngine::new(&model);
        let prefs = preference_matrix(&ds);
        let conv = ConvergenceParams::default();
        let all = engine.rank_all(&prefs, conv).unwrap();
        for u in 0..ds.n {
            let solo = engine.rank_user(&preference_vector(&ds, u), conv).unwrap();
            assert_eq!(all.user_scores(u), solo.scores, "user {u}");
        }
        assert!(all.converged);
        assert!(all.iterations >= 1);
    }

    #[test]
    fn single_column_batch_is_rank_user() {
        let (ds, model) = small_model(0.5, 0.2, 1.0);
        let engine = RankEngine::new(&model);
        let omega = preference_vector(&ds, 2);
        let prefs = PreferenceMatrix::from_columns(ds.m, vec![omega.clone()]).unwrap();
        let all = engine.rank_all(&prefs, ConvergenceParams::default()).unwrap();
        let solo = engine
            .rank_user(&omega, ConvergenceParams::default())
            .unwrap();
        assert_eq!(all.user_scores(0), solo.scores);
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let (_, model) = small_model(0.5, 0.2, 0.5);
        let engine = RankEngine::new(&model);
        assert!(engine
            .rank_user(&[0.5, 0.5], ConvergenceParams::default())
            .is_err());
        let bad = PreferenceMatrix::from_columns(2, vec![vec![0.5, 0.5]]).unwrap();
        assert!(engine.rank_all(&bad, ConvergenceParams::default()).is_err());
    }

    #[test]
    fn rejects_bad_convergence_params() {
        let (ds, model) = small_model(0.5, 0.2, 0.5);
        let omega = preference_vector(&ds, 0);
        assert!(rank_user(&model, &omega, ConvergenceParams { tol: 0.0, maxit: 10 }).is_err());
        assert!(rank_user(&model, &omega, ConvergenceParams { tol: 1e-8, maxit: 0 }).is_err());
    }

    #[test]
    fn non_convergence_is_flagged_not_failed() {
        let (ds, model) = small_model(0.8, 0.1, 0.5);
        let omega = preference_vector(&ds, 0);
        let rv = rank_user(&model, &omega, ConvergenceParams { tol: 1e-300, maxit: 3 }).unwrap();
        assert!(!rv.converged);
        assert_eq!(rv.iterations, 3);
        assert!(rv.residual > 0.0);
    }

    #[test]
    fn top_n_examples() {
        let scores = [0.1, 0.5, 0.4];
        assert_eq!(top_n(&scores, &[1], 2), vec![2, 0]);
        assert_eq!(top_n(&scores, &[0, 1, 2], 2), Vec::<u32>::new());
        // Ties resolve to the lower index.
        assert_eq!(top_n(&[0.3, 0.3, 0.1], &[], 2), vec![0, 1]);
        // Fewer candidates than requested is fine.
        assert_eq!(top_n(&scores, &[1], 10), vec![2, 0]);
    }
}
