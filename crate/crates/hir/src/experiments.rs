//! The experiment harness: cross-validated DOA, the phi sweep, global and
//! local sparsity protocols, and the batch-vs-sequential benchmark.
//!
//! Every experiment is a pure function of the data directory, the config,
//! and the seed; rerunning one writes byte-identical CSV. Sub-seeds are
//! derived per (experiment, fold, ...) tag so protocols stay independent
//! of each other and of execution order.

use std::io::{self, Write};
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context};

use hir_core::dataset::RatingsDataset;
use hir_core::eval::{doa_aggregate, doa_counts, kendall_tau, maxf_scores, DoaReport, UserDoa};
use hir_core::itemspace::Decomposition;
use hir_core::model::{adjusted_cosine, cooccurrence, preference_matrix, HirModel};
use hir_core::ranker::{ConvergenceParams, RankEngine, RankMatrix};

use crate::batch::rank_all_parallel;
use crate::movielens::DataDir;

pub const FOLDS: std::ops::RangeInclusive<u32> = 1..=5;

/// Mixing weights of one model variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HirParams {
    pub alpha: f64,
    pub beta: f64,
    pub phi: f64,
}

impl Default for HirParams {
    fn default() -> Self {
        Self {
            alpha: 0.8,
            beta: 0.1,
            phi: 0.5,
        }
    }
}

/// Everything the experiments need to know, in one place.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub data_dir: PathBuf,
    pub params: HirParams,
    /// alpha + beta held fixed along the local-sparsity beta grid.
    pub grid_damping: f64,
    pub beta_grid: Vec<f64>,
    pub fractions: Vec<f64>,
    pub new_item_counts: Vec<usize>,
    pub new_item_min_ratings: usize,
    pub new_item_keep_fraction: f64,
    pub seed: u64,
    pub conv: ConvergenceParams,
}

impl ExperimentConfig {
    pub fn new(data_dir: impl Into<PathBuf>, seed: u64) -> Self {
        Self {
            data_dir: data_dir.into(),
            params: HirParams::default(),
            grid_damping: 0.9,
            beta_grid: vec![0.0, 0.05, 0.1, 0.2, 0.3, 0.4],
            fractions: vec![0.8, 0.6, 0.4],
            new_item_counts: vec![100, 200, 300],
            new_item_min_ratings: 30,
            new_item_keep_fraction: 0.1,
            seed,
            conv: ConvergenceParams::default(),
        }
    }
}

/// FNV-1a over (base seed, tag): stable sub-seeds for every randomized
/// step, independent of execution order.
pub fn derive_seed(base: u64, tag: &str) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for b in base.to_le_bytes().into_iter().chain(tag.bytes()) {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// The expensive per-dataset matrices, built once and shared across every
/// parameter combination evaluated on the same training set.
pub struct MatrixSet {
    pub u_hat: hir_core::sparse::SparseRowMatrix,
    pub g_hat: hir_core::sparse::SparseRowMatrix,
    pub factors: hir_core::itemspace::NcdFactors,
}

impl MatrixSet {
    pub fn build(ds: &RatingsDataset, dec: &Decomposition) -> Self {
        Self {
            u_hat: cooccurrence(ds),
            g_hat: adjusted_cosine(ds),
            factors: dec.ncd_factors(),
        }
    }

    pub fn model(&self, p: HirParams) -> anyhow::Result<HirModel> {
        Ok(HirModel::new(
            self.u_hat.clone(),
            self.g_hat.clone(),
            vec![(self.factors.clone(), p.beta)],
            p.alpha,
            p.phi,
        )?)
    }
}

/// Rank every user of `ds` under `model` on the current thread pool.
pub fn rank_dataset(
    model: &HirModel,
    ds: &RatingsDataset,
    conv: ConvergenceParams,
) -> anyhow::Result<RankMatrix> {
    let engine = RankEngine::new(model);
    let prefs = preference_matrix(ds);
    Ok(rank_all_parallel(&engine, &prefs, conv)?)
}

/// DOA of a per-user rank matrix against the dataset's test split.
pub fn evaluate_rank_matrix(ds: &RatingsDataset, ranks: &RankMatrix) -> anyhow::Result<DoaReport> {
    evaluate_with(ds, |u| ranks.user_scores(u))
}

/// DOA of one score vector shared by all users (the MaxF baseline).
pub fn evaluate_shared_scores(ds: &RatingsDataset, scores: &[f64]) -> anyhow::Result<DoaReport> {
    evaluate_with(ds, |_| scores.to_vec())
}

fn evaluate_with(
    ds: &RatingsDataset,
    scores_of: impl Fn(usize) -> Vec<f64>,
) -> anyhow::Result<DoaReport> {
    let mut per_user = Vec::new();
    let mut skipped = 0;
    for u in 0..ds.n {
        let test = &ds.user_test_items[u];
        if test.is_empty() {
            skipped += 1;
            continue;
        }
        let unseen = ds.unseen_items(u);
        let scores = scores_of(u);
        let (correct, pairs) = doa_counts(&scores, test, &unseen)?;
        per_user.push(UserDoa {
            user: u,
            doa: correct as f64 / pairs as f64,
            correct,
            pairs,
        });
    }
    Ok(doa_aggregate(per_user, skipped)?)
}

/// Sample mean and (n-1) standard deviation.
fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug)]
pub struct FoldOutcome {
    pub fold: u32,
    pub report: DoaReport,
    /// Dense index -> original user id, for per-user detail output.
    pub user_ids: Vec<u32>,
}

#[derive(Debug)]
pub struct CrossValidation {
    pub variant: String,
    pub params: HirParams,
    pub folds: Vec<FoldOutcome>,
    pub macro_mean: f64,
    pub macro_std: f64,
    pub micro_mean: f64,
    pub micro_std: f64,
}

impl CrossValidation {
    fn from_folds(variant: &str, params: HirParams, folds: Vec<FoldOutcome>) -> Self {
        let macros: Vec<f64> = folds.iter().map(|f| f.report.macro_doa).collect();
        let micros: Vec<f64> = folds.iter().map(|f| f.report.micro_doa).collect();
        let (macro_mean, macro_std) = mean_std(&macros);
        let (micro_mean, micro_std) = mean_std(&micros);
        Self {
            variant: variant.to_string(),
            params,
            folds,
            macro_mean,
            macro_std,
            micro_mean,
            micro_std,
        }
    }

    /// `fold,variant,alpha,beta,phi,macro_doa,micro_doa` with DOA in
    /// percent at 4 decimals.
    pub fn write_csv(&self, w: &mut dyn Write, config: &ExperimentConfig) -> io::Result<()> {
        csv_meta(w, config)?;
        writeln!(w, "fold,variant,alpha,beta,phi,macro_doa,micro_doa")?;
        for f in &self.folds {
            writeln!(
                w,
                "{},{},{},{},{},{:.4},{:.4}",
                f.fold,
                self.variant,
                self.params.alpha,
                self.params.beta,
                self.params.phi,
                100.0 * f.report.macro_doa,
                100.0 * f.report.micro_doa,
            )?;
        }
        Ok(())
    }

    /// `fold,user_id,doa,correct_pairs,total_pairs` per evaluated user.
    pub fn write_detail_csv(&self, w: &mut dyn Write, config: &ExperimentConfig) -> io::Result<()> {
        csv_meta(w, config)?;
        writeln!(w, "fold,user_id,doa,correct_pairs,total_pairs")?;
        for f in &self.folds {
            for u in &f.report.per_user {
                writeln!(
                    w,
                    "{},{},{:.6},{},{}",
                    f.fold, f.user_ids[u.user], u.doa, u.correct, u.pairs
                )?;
            }
        }
        Ok(())
    }
}

fn load_fold(config: &ExperimentConfig, dec: &Decomposition, fold: u32) -> anyhow::Result<RatingsDataset> {
    let dir = DataDir::new(&config.data_dir);
    dir.load_fold(fold, dec.item_count())
        .with_context(|| format!("loading fold {fold} from {}", config.data_dir.display()))
}

fn load_decomposition(config: &ExperimentConfig) -> anyhow::Result<Decomposition> {
    DataDir::new(&config.data_dir)
        .decomposition()
        .with_context(|| format!("loading item blocks from {}", config.data_dir.display()))
}

/// 5-fold cross-validated DOA for one parameter setting.
pub fn cross_validate(config: &ExperimentConfig, params: HirParams) -> anyhow::Result<CrossValidation> {
    let dec = load_decomposition(config)?;
    let mut folds = Vec::new();
    for fold in FOLDS {
        let ds = load_fold(config, &dec, fold)?;
        let model = MatrixSet::build(&ds, &dec).model(params)?;
        let ranks = rank_dataset(&model, &ds, config.conv)?;
        folds.push(FoldOutcome {
            fold,
            report: evaluate_rank_matrix(&ds, &ranks)?,
            user_ids: ds.user_ids.clone(),
        });
    }
    Ok(CrossValidation::from_folds("hir", params, folds))
}

/// 5-fold DOA of the popularity baseline.
pub fn cross_validate_maxf(config: &ExperimentConfig) -> anyhow::Result<CrossValidation> {
    let dec = load_decomposition(config)?;
    let mut folds = Vec::new();
    for fold in FOLDS {
        let ds = load_fold(config, &dec, fold)?;
        let scores = maxf_scores(&ds);
        folds.push(FoldOutcome {
            fold,
            report: evaluate_shared_scores(&ds, &scores)?,
            user_ids: ds.user_ids.clone(),
        });
    }
    let params = HirParams {
        alpha: 0.0,
        beta: 0.0,
        phi: 0.0,
    };
    let mut cv = CrossValidation::from_folds("maxf", params, folds);
    cv.variant = "maxf".to_string();
    Ok(cv)
}

#[derive(Debug, Clone, Copy)]
pub struct PhiRow {
    pub phi: f64,
    pub macro_mean: f64,
    pub macro_std: f64,
    pub micro_mean: f64,
    pub micro_std: f64,
}

#[derive(Debug)]
pub struct PhiSweep {
    pub alpha: f64,
    pub beta: f64,
    pub rows: Vec<PhiRow>,
}

impl PhiSweep {
    pub fn write_csv(&self, w: &mut dyn Write, config: &ExperimentConfig) -> io::Result<()> {
        csv_meta(w, config)?;
        writeln!(w, "phi,macro_doa,micro_doa")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{:.4},{:.4}",
                r.phi,
                100.0 * r.macro_mean,
                100.0 * r.micro_mean
            )?;
        }
        Ok(())
    }
}

/// Cross-validate at every phi in `grid` with alpha and beta fixed. The
/// model matrices are built once per fold and shared across the grid.
pub fn phi_sweep(
    config: &ExperimentConfig,
    alpha: f64,
    beta: f64,
    grid: &[f64],
) -> anyhow::Result<PhiSweep> {
    if grid.iter().any(|p| !(0.0..=1.0).contains(p)) {
        bail!("phi grid values must lie in [0, 1]");
    }
    let dec = load_decomposition(config)?;
    let mut macros = vec![Vec::new(); grid.len()];
    let mut micros = vec![Vec::new(); grid.len()];
    for fold in FOLDS {
        let ds = load_fold(config, &dec, fold)?;
        let set = MatrixSet::build(&ds, &dec);
        let prefs = preference_matrix(&ds);
        for (k, &phi) in grid.iter().enumerate() {
            let model = set.model(HirParams { alpha, beta, phi })?;
            let engine = RankEngine::new(&model);
            let ranks = rank_all_parallel(&engine, &prefs, config.conv)?;
            let report = evaluate_rank_matrix(&ds, &ranks)?;
            macros[k].push(report.macro_doa);
            micros[k].push(report.micro_doa);
        }
    }
    let rows = grid
        .iter()
        .enumerate()
        .map(|(k, &phi)| {
            let (macro_mean, macro_std) = mean_std(&macros[k]);
            let (micro_mean, micro_std) = mean_std(&micros[k]);
            PhiRow {
                phi,
                macro_mean,
                macro_std,
                micro_mean,
                micro_std,
            }
        })
        .collect();
    Ok(PhiSweep { alpha, beta, rows })
}

#[derive(Debug, Clone)]
pub struct SparsityRow {
    pub fraction: f64,
    pub variant: String,
    pub fold: u32,
    pub macro_doa: f64,
    pub micro_doa: f64,
}

#[derive(Debug)]
pub struct Sparsity {
    pub rows: Vec<SparsityRow>,
}

impl Sparsity {
    pub fn write_csv(&self, w: &mut dyn Write, config: &ExperimentConfig) -> io::Result<()> {
        csv_meta(w, config)?;
        writeln!(w, "fraction,variant,fold,macro_doa,micro_doa")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{:.4},{:.4}",
                r.fraction,
                r.variant,
                r.fold,
                100.0 * r.macro_doa,
                100.0 * r.micro_doa
            )?;
        }
        Ok(())
    }
}

/// Global-sparsity protocol: per fold and fraction, subsample the training
/// set (seeded) and run the full model plus its two direct sub-components,
/// evaluating DOA against the untouched test split.
///
/// The sub-components keep the full model's total damping (their alpha is
/// alpha + beta with beta = 0): the co-occurrence-only walk at phi = 1 and
/// the adjusted-cosine-only walk at phi = 0.
pub fn sparsity_experiment(config: &ExperimentConfig) -> anyhow::Result<Sparsity> {
    let p = config.params;
    let damping = p.alpha + p.beta;
    let variants: [(&str, HirParams); 3] = [
        ("hir", p),
        (
            "itemrank",
            HirParams {
                alpha: damping,
                beta: 0.0,
                phi: 1.0,
            },
        ),
        (
            "simrank",
            HirParams {
                alpha: damping,
                beta: 0.0,
                phi: 0.0,
            },
        ),
    ];
    let dec = load_decomposition(config)?;
    let mut rows = Vec::new();
    for fold in FOLDS {
        let ds = load_fold(config, &dec, fold)?;
        for &fraction in &config.fractions {
            let seed = derive_seed(config.seed, &format!("sparsity/fold{fold}/frac{fraction}"));
            let sub = ds.subsample(fraction, seed)?;
            let set = MatrixSet::build(&sub, &dec);
            let prefs = preference_matrix(&sub);
            for (name, params) in &variants {
                let engine = RankEngine::new(&set.model(*params)?);
                let ranks = rank_all_parallel(&engine, &prefs, config.conv)?;
                let report = evaluate_rank_matrix(&sub, &ranks)?;
                rows.push(SparsityRow {
                    fraction,
                    variant: name.to_string(),
                    fold,
                    macro_doa: report.macro_doa,
                    micro_doa: report.micro_doa,
                });
            }
        }
    }
    Ok(Sparsity { rows })
}

#[derive(Debug, Clone, Copy)]
pub struct LocalRow {
    pub count: usize,
    pub beta: f64,
    pub fold: u32,
    pub mean_tau: f64,
}

#[derive(Debug)]
pub struct LocalSparsity {
    pub beta_grid: Vec<f64>,
    pub counts: Vec<usize>,
    pub rows: Vec<LocalRow>,
    /// Fold-averaged tau, `grid[count_idx][beta_idx]`.
    pub grid: Vec<Vec<f64>>,
    /// (fold, count, smaller beta, larger beta) pairs where tau decreased.
    pub monotonicity_violations: Vec<(u32, usize, f64, f64)>,
}

impl LocalSparsity {
    pub fn write_csv(&self, w: &mut dyn Write, config: &ExperimentConfig) -> io::Result<()> {
        csv_meta(w, config)?;
        writeln!(w, "count,beta,fold,mean_kendall_tau")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{:.4}", r.count, r.beta, r.fold, r.mean_tau)?;
        }
        Ok(())
    }

    /// Fold-averaged tau as a count × beta table.
    pub fn write_grid_csv(&self, w: &mut dyn Write, config: &ExperimentConfig) -> io::Result<()> {
        csv_meta(w, config)?;
        write!(w, "count")?;
        for beta in &self.beta_grid {
            write!(w, ",beta_{beta}")?;
        }
        writeln!(w)?;
        for (c, &count) in self.counts.iter().enumerate() {
            write!(w, "{count}")?;
            for tau in &self.grid[c] {
                write!(w, ",{tau:.4}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Local-sparsity (new-item) protocol. Per fold and count: degrade that
/// many well-rated items to 10% of their ratings (seeded), then for every
/// beta on the grid (alpha = grid_damping - beta) rank all users on the
/// original and the degraded data and compare the two full score vectors
/// per user with Kendall's tau, averaged over users.
pub fn local_sparsity_experiment(config: &ExperimentConfig) -> anyhow::Result<LocalSparsity> {
    let mut beta_grid = config.beta_grid.clone();
    beta_grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for &beta in &beta_grid {
        if beta > config.grid_damping || config.grid_damping >= 1.0 {
            bail!(
                "beta grid point {beta} incompatible with grid damping {}",
                config.grid_damping
            );
        }
    }
    let dec = load_decomposition(config)?;
    let mut rows = Vec::new();
    for fold in FOLDS {
        let ds = load_fold(config, &dec, fold)?;
        let set = MatrixSet::build(&ds, &dec);
        let prefs = preference_matrix(&ds);
        let mut originals = Vec::new();
        for &beta in &beta_grid {
            let params = HirParams {
                alpha: config.grid_damping - beta,
                beta,
                phi: config.params.phi,
            };
            let engine = RankEngine::new(&set.model(params)?);
            originals.push(rank_all_parallel(&engine, &prefs, config.conv)?);
        }
        for &count in &config.new_item_counts {
            let seed = derive_seed(config.seed, &format!("local/fold{fold}/count{count}"));
            let (degraded, _affected) = ds.degrade_items(
                count,
                config.new_item_min_ratings,
                config.new_item_keep_fraction,
                seed,
            )?;
            let deg_set = MatrixSet::build(&degraded, &dec);
            let deg_prefs = preference_matrix(&degraded);
            for (k, &beta) in beta_grid.iter().enumerate() {
                let params = HirParams {
                    alpha: config.grid_damping - beta,
                    beta,
                    phi: config.params.phi,
                };
                let engine = RankEngine::new(&deg_set.model(params)?);
                let deg_ranks = rank_all_parallel(&engine, &deg_prefs, config.conv)?;
                let mut tau_sum = 0.0;
                for u in 0..ds.n {
                    tau_sum +=
                        kendall_tau(&originals[k].user_scores(u), &deg_ranks.user_scores(u))?;
                }
                rows.push(LocalRow {
                    count,
                    beta,
                    fold,
                    mean_tau: tau_sum / ds.n as f64,
                });
            }
        }
    }

    let counts = config.new_item_counts.clone();
    let mut grid = vec![vec![0.0; beta_grid.len()]; counts.len()];
    for (c, &count) in counts.iter().enumerate() {
        for (k, &beta) in beta_grid.iter().enumerate() {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| r.count == count && r.beta == beta)
                .map(|r| r.mean_tau)
                .collect();
            grid[c][k] = vals.iter().sum::<f64>() / vals.len() as f64;
        }
    }
    let mut violations = Vec::new();
    for fold in FOLDS {
        for &count in &counts {
            let series: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.fold == fold && r.count == count)
                .map(|r| (r.beta, r.mean_tau))
                .collect();
            for w in series.windows(2) {
                if w[1].1 < w[0].1 {
                    violations.push((fold, count, w[0].0, w[1].0));
                }
            }
        }
    }
    Ok(LocalSparsity {
        beta_grid,
        counts,
        rows,
        grid,
        monotonicity_violations: violations,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct Benchmark {
    pub batch_mean_secs: f64,
    pub sequential_mean_secs: f64,
    pub ratio: f64,
    pub cross_check_max_diff: f64,
    pub users: usize,
}

/// Time the batch power method against per-user sequential runs on one
/// fold, both single-threaded on the same prepared engine and tolerance.
/// A correctness cross-check runs once before any timing.
pub fn benchmark(config: &ExperimentConfig, fold: u32, repetitions: usize) -> anyhow::Result<Benchmark> {
    if repetitions < 1 {
        bail!("repetitions must be >= 1");
    }
    let dec = load_decomposition(config)?;
    let ds = load_fold(config, &dec, fold)?;
    let model = MatrixSet::build(&ds, &dec).model(config.params)?;
    let engine = RankEngine::new(&model);
    let prefs = preference_matrix(&ds);

    let batch = engine.rank_all(&prefs, config.conv)?;
    let mut max_diff = 0.0f64;
    for u in 0..ds.n {
        let solo = engine.rank_user(&prefs.column(u), config.conv)?;
        for (a, b) in batch.user_scores(u).iter().zip(&solo.scores) {
            max_diff = max_diff.max((a - b).abs());
        }
    }
    if max_diff >= 1e-10 {
        bail!("batch/sequential cross-check failed: max abs diff {max_diff:e}");
    }

    let mut batch_secs = 0.0;
    for _ in 0..repetitions {
        let t0 = Instant::now();
        let out = engine.rank_all(&prefs, config.conv)?;
        batch_secs += t0.elapsed().as_secs_f64();
        std::hint::black_box(out);
    }
    let mut seq_secs = 0.0;
    for _ in 0..repetitions {
        let t0 = Instant::now();
        for u in 0..ds.n {
            let out = engine.rank_user(&prefs.column(u), config.conv)?;
            std::hint::black_box(out);
        }
        seq_secs += t0.elapsed().as_secs_f64();
    }
    let batch_mean = batch_secs / repetitions as f64;
    let seq_mean = seq_secs / repetitions as f64;
    Ok(Benchmark {
        batch_mean_secs: batch_mean,
        sequential_mean_secs: seq_mean,
        ratio: seq_mean / batch_mean,
        cross_check_max_diff: max_diff,
        users: ds.n,
    })
}

/// `#`-prefixed provenance lines shared by every CSV artifact.
fn csv_meta(w: &mut dyn Write, config: &ExperimentConfig) -> io::Result<()> {
    writeln!(w, "# tool: hir {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(w, "# seed: {}", config.seed)?;
    writeln!(
        w,
        "# params: alpha={} beta={} phi={} tol={:e} maxit={}",
        config.params.alpha,
        config.params.beta,
        config.params.phi,
        config.conv.tol,
        config.conv.maxit
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_seed_is_stable_and_tag_sensitive() {
        let a = derive_seed(42, "sparsity/fold1/frac0.8");
        assert_eq!(a, derive_seed(42, "sparsity/fold1/frac0.8"));
        assert_ne!(a, derive_seed(42, "sparsity/fold1/frac0.6"));
        assert_ne!(a, derive_seed(43, "sparsity/fold1/frac0.8"));
    }

    #[test]
    fn mean_std_uses_sample_denominator() {
        let (mean, std) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(mean, 2.5);
        assert!((std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[7.0]).1, 0.0);
    }
}
