//! The `hir` command-line surface.
//!
//! Subcommands: `ingest`, `rank`, `eval`, `cv`, `experiment sparsity`,
//! `experiment local`, `sweep phi`, `bench`. CSV artifacts go to `--out`
//! files, human summaries to stdout. Exit codes: 0 on success, 1 on
//! runtime failure, 2 on usage errors (including parameter-range checks).

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use hir_core::model::{preference_vector, HirModel};
use hir_core::ranker::{top_n, ConvergenceParams, RankEngine};

use crate::experiments::{
    self, benchmark, cross_validate, cross_validate_maxf, local_sparsity_experiment, phi_sweep,
    sparsity_experiment, CrossValidation, ExperimentConfig, HirParams,
};
use crate::matfile;
use crate::movielens::DataDir;

#[derive(Parser, Debug)]
#[command(
    name = "hir",
    version,
    about = "Hierarchical item-space ranking recommender over MovieLens 100K data"
)]
pub struct Cli {
    /// Worker threads for batch ranking (0 = machine parallelism).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,

    #[command(subcommand)]
    pub command: Command,
}

/// Model and convergence flags shared by the ranking subcommands.
#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Unpacked MovieLens 100K directory (u.item, u1.base, u1.test, ...).
    #[arg(long)]
    pub data: PathBuf,
    /// Weight of the direct-association component.
    #[arg(long, default_value_t = 0.8)]
    pub alpha: f64,
    /// Weight of the NCD (genre-block) proximity component.
    #[arg(long, default_value_t = 0.1)]
    pub beta: f64,
    /// Split of the direct component: phi to co-occurrence, 1-phi to
    /// adjusted cosine.
    #[arg(long, default_value_t = 0.5)]
    pub phi: f64,
    /// L1 convergence tolerance of the power iteration.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Iteration cap of the power iteration.
    #[arg(long, default_value_t = 100)]
    pub maxit: usize,
}

impl ModelArgs {
    fn params(&self) -> HirParams {
        HirParams {
            alpha: self.alpha,
            beta: self.beta,
            phi: self.phi,
        }
    }

    fn conv(&self) -> ConvergenceParams {
        ConvergenceParams {
            tol: self.tol,
            maxit: self.maxit,
        }
    }

    fn config(&self, seed: u64) -> ExperimentConfig {
        let mut config = ExperimentConfig::new(&self.data, seed);
        config.params = self.params();
        config.conv = self.conv();
        config
    }

    fn validate(&self) -> Result<(), String> {
        if self.alpha < 0.0 || self.beta < 0.0 {
            return Err("alpha and beta must be >= 0".into());
        }
        if self.alpha + self.beta >= 1.0 {
            return Err("alpha + beta must be < 1".into());
        }
        if !(0.0..=1.0).contains(&self.phi) {
            return Err("phi must lie in [0, 1]".into());
        }
        if !(self.tol > 0.0) {
            return Err("tol must be > 0".into());
        }
        if self.maxit < 1 {
            return Err("maxit must be >= 1".into());
        }
        Ok(())
    }
}

fn validate_fold(fold: u32) -> Result<(), String> {
    if !(1..=5).contains(&fold) {
        return Err(format!("fold must lie in 1..=5, got {fold}"));
    }
    Ok(())
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Validate a MovieLens 100K directory and print its counts.
    Ingest {
        /// Unpacked MovieLens 100K directory.
        #[arg(long)]
        data: PathBuf,
    },
    /// Rank items for one user and print the top-N as CSV
    /// (user_id,item_id,score,rank), training items excluded.
    Rank {
        #[command(flatten)]
        model: ModelArgs,
        /// Predefined split to train on (1..=5).
        #[arg(long)]
        fold: u32,
        /// Original user id from the ratings files.
        #[arg(long)]
        user: u32,
        /// List length.
        #[arg(long, default_value_t = 10)]
        top: usize,
        /// Write the CSV rows here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train on one fold and print macro/micro DOA against its test split.
    Eval {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        fold: u32,
        /// Metric CSV output path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-user DOA detail CSV output path.
        #[arg(long)]
        detail_out: Option<PathBuf>,
        /// Directory for the on-disk matrix cache (u_hat.coo, g_hat.coo).
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// 5-fold cross-validated DOA (mean and sample standard deviation).
    Cv {
        #[command(flatten)]
        model: ModelArgs,
        /// Evaluate the MaxF popularity baseline instead of the model.
        #[arg(long)]
        maxf: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        detail_out: Option<PathBuf>,
    },
    /// Sparsity robustness experiments.
    Experiment {
        #[command(subcommand)]
        kind: ExperimentKind,
    },
    /// Parameter sweeps.
    Sweep {
        #[command(subcommand)]
        kind: SweepKind,
    },
    /// Time batch ranking against sequential per-user ranking.
    Bench {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        fold: u32,
        /// Timing repetitions per side.
        #[arg(long, default_value_t = 1)]
        reps: usize,
    },
}

#[derive(Subcommand, Debug)]
pub enum ExperimentKind {
    /// Global sparsity: subsample the training set and compare the model
    /// against its two direct sub-components.
    Sparsity {
        #[command(flatten)]
        model: ModelArgs,
        /// Seed for the subsampling draws.
        #[arg(long)]
        seed: u64,
        /// Training fractions to test.
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.8, 0.6, 0.4])]
        fractions: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Local sparsity (new items): degrade well-rated items and compare
    /// rankings before/after with Kendall's tau over a beta grid.
    Local {
        #[command(flatten)]
        model: ModelArgs,
        /// Seed for the degradation draws.
        #[arg(long)]
        seed: u64,
        /// Numbers of items to degrade.
        #[arg(long, value_delimiter = ',', default_values_t = vec![100, 200, 300])]
        counts: Vec<usize>,
        /// Beta grid; alpha is grid-damping minus beta at each point.
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.05, 0.1, 0.2, 0.3, 0.4])]
        beta_grid: Vec<f64>,
        /// Total damping alpha + beta along the grid.
        #[arg(long, default_value_t = 0.9)]
        grid_damping: f64,
        /// Minimum training ratings an item needs to be degradable.
        #[arg(long, default_value_t = 30)]
        min_ratings: usize,
        /// Fraction of a degraded item's ratings that survives.
        #[arg(long, default_value_t = 0.1)]
        keep_fraction: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Fold-averaged count × beta table output path.
        #[arg(long)]
        grid_out: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
pub enum SweepKind {
    /// Cross-validate at every phi on a grid with alpha, beta fixed.
    Phi {
        #[command(flatten)]
        model: ModelArgs,
        /// Phi grid.
        #[arg(long, value_delimiter = ',',
              default_values_t = vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0])]
        grid: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn run() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = validate_usage(&cli.command) {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if cli.jobs > 0 {
        pool = pool.num_threads(cli.jobs);
    }
    if let Err(e) = pool.build_global() {
        eprintln!("error: failed to set up thread pool: {e}");
        return ExitCode::from(1);
    }
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn validate_usage(cmd: &Command) -> Result<(), String> {
    match cmd {
        Command::Ingest { .. } => Ok(()),
        Command::Rank { model, fold, top, .. } => {
            model.validate()?;
            validate_fold(*fold)?;
            if *top < 1 {
                return Err("top must be >= 1".into());
            }
            Ok(())
        }
        Command::Eval { model, fold, .. } => {
            model.validate()?;
            validate_fold(*fold)
        }
        Command::Cv { model, .. } => model.validate(),
        Command::Experiment { kind } => match kind {
            ExperimentKind::Sparsity { model, fractions, .. } => {
                model.validate()?;
                if fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
                    return Err("fractions must lie in (0, 1]".into());
                }
                Ok(())
            }
            ExperimentKind::Local {
                model,
                beta_grid,
                grid_damping,
                keep_fraction,
                ..
            } => {
                model.validate()?;
                if !(*grid_damping > 0.0 && *grid_damping < 1.0) {
                    return Err("grid-damping must lie in (0, 1)".into());
                }
                if beta_grid.iter().any(|b| *b < 0.0 || b > grid_damping) {
                    return Err("beta grid values must lie in [0, grid-damping]".into());
                }
                if !(0.0..=1.0).contains(keep_fraction) {
                    return Err("keep-fraction must lie in [0, 1]".into());
                }
                Ok(())
            }
        },
        Command::Sweep { kind } => match kind {
            SweepKind::Phi { model, grid, .. } => {
                model.validate()?;
                if grid.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err("phi grid values must lie in [0, 1]".into());
                }
                Ok(())
            }
        },
        Command::Bench { model, fold, reps } => {
            model.validate()?;
            validate_fold(*fold)?;
            if *reps < 1 {
                return Err("reps must be >= 1".into());
            }
            Ok(())
        }
    }
}

/// Open `--out` or fall back to stdout.
fn out_writer(out: &Option<PathBuf>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_artifact<F>(out: &Option<PathBuf>, write: F) -> anyhow::Result<()>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    let mut w = out_writer(out)?;
    write(&mut w)?;
    w.flush()?;
    Ok(())
}

fn print_cv_summary(cv: &CrossValidation) {
    for f in &cv.folds {
        println!(
            "fold {}: macro_doa={:.4} micro_doa={:.4} (users {}, skipped {})",
            f.fold,
            100.0 * f.report.macro_doa,
            100.0 * f.report.micro_doa,
            f.report.per_user.len(),
            f.report.skipped_users
        );
    }
    println!(
        "{}: macro_doa={:.4} ± {:.4}  micro_doa={:.4} ± {:.4}",
        cv.variant,
        100.0 * cv.macro_mean,
        100.0 * cv.macro_std,
        100.0 * cv.micro_mean,
        100.0 * cv.micro_std
    );
}

fn execute(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::Ingest { data } => ingest(data),
        Command::Rank {
            model,
            fold,
            user,
            top,
            out,
        } => rank(model, fold, user, top, out),
        Command::Eval {
            model,
            fold,
            out,
            detail_out,
            cache,
        } => eval(model, fold, out, detail_out, cache),
        Command::Cv {
            model,
            maxf,
            out,
            detail_out,
        } => {
            let config = model.config(0);
            let cv = if maxf {
                cross_validate_maxf(&config)?
            } else {
                cross_validate(&config, config.params)?
            };
            print_cv_summary(&cv);
            if out.is_some() {
                write_artifact(&out, |w| cv.write_csv(w, &config))?;
            }
            if detail_out.is_some() {
                write_artifact(&detail_out, |w| cv.write_detail_csv(w, &config))?;
            }
            Ok(())
        }
        Command::Experiment { kind } => match kind {
            ExperimentKind::Sparsity {
                model,
                seed,
                fractions,
                out,
            } => {
                let mut config = model.config(seed);
                config.fractions = fractions;
                let result = sparsity_experiment(&config)?;
                write_artifact(&out, |w| result.write_csv(w, &config))?;
                if out.is_some() {
                    println!("wrote {} rows", result.rows.len());
                }
                Ok(())
            }
            ExperimentKind::Local {
                model,
                seed,
                counts,
                beta_grid,
                grid_damping,
                out,
                grid_out,
            } => {
                let mut config = model.config(seed);
                config.new_item_counts = counts;
                config.beta_grid = beta_grid;
                config.grid_damping = grid_damping;
                let result = local_sparsity_experiment(&config)?;
                write_artifact(&out, |w| result.write_csv(w, &config))?;
                if grid_out.is_some() {
                    write_artifact(&grid_out, |w| result.write_grid_csv(w, &config))?;
                }
                for (fold, count, b0, b1) in &result.monotonicity_violations {
                    eprintln!(
                        "warning: fold {fold}, count {count}: mean tau decreased \
                         from beta={b0} to beta={b1}"
                    );
                }
                if out.is_some() {
                    println!("wrote {} rows", result.rows.len());
                }
                Ok(())
            }
        },
        Command::Sweep { kind } => match kind {
            SweepKind::Phi { model, grid, out } => {
                let config = model.config(0);
                let sweep = phi_sweep(&config, model.alpha, model.beta, &grid)?;
                write_artifact(&out, |w| sweep.write_csv(w, &config))?;
                if out.is_some() {
                    for r in &sweep.rows {
                        println!(
                            "phi={}: macro_doa={:.4} micro_doa={:.4}",
                            r.phi,
                            100.0 * r.macro_mean,
                            100.0 * r.micro_mean
                        );
                    }
                }
                Ok(())
            }
        },
        Command::Bench { model, fold, reps } => {
            let config = model.config(0);
            let b = benchmark(&config, fold, reps)?;
            println!(
                "batch_mean={:.3}s sequential_mean={:.3}s ratio={:.2} users={} cross_check={:.2e}",
                b.batch_mean_secs, b.sequential_mean_secs, b.ratio, b.users, b.cross_check_max_diff
            );
            Ok(())
        }
    }
}

fn ingest(data: PathBuf) -> anyhow::Result<()> {
    let dir = DataDir::new(&data);
    let dec = dir.decomposition()?;
    let m = dec.item_count();
    println!("items: {m}, genre blocks: {}", dec.block_count());

    let ratings_file = dir.ratings_file();
    if ratings_file.exists() {
        let all = crate::movielens::parse_ratings(&ratings_file)?;
        let mut users: Vec<u32> = all.iter().map(|t| t.user).collect();
        users.sort_unstable();
        users.dedup();
        let mut per_user = std::collections::BTreeMap::new();
        for t in &all {
            *per_user.entry(t.user).or_insert(0usize) += 1;
        }
        let min_ratings = per_user.values().copied().min().unwrap_or(0);
        println!(
            "u.data: {} ratings, {} users, min ratings per user {}",
            all.len(),
            users.len(),
            min_ratings
        );
    } else {
        println!("u.data: not present (folds only)");
    }

    for fold in experiments::FOLDS {
        let ds = dir.load_fold(fold, m)?;
        let total = ds.train.len() + ds.test.len();
        println!(
            "fold u{fold}: train {} / test {} ({:.1}% train), users {}",
            ds.train.len(),
            ds.test.len(),
            100.0 * ds.train.len() as f64 / total as f64,
            ds.n
        );
    }
    println!("ok");
    Ok(())
}

fn rank(
    model_args: ModelArgs,
    fold: u32,
    user: u32,
    top: usize,
    out: Option<PathBuf>,
) -> anyhow::Result<()> {
    let dir = DataDir::new(&model_args.data);
    let dec = dir.decomposition()?;
    let ds = dir.load_fold(fold, dec.item_count())?;
    let Some(user_idx) = ds.user_index(user) else {
        anyhow::bail!("user {user} does not appear in fold {fold}");
    };
    let model = hir_core::model::build_model(
        &ds,
        &[(dec, model_args.beta)],
        model_args.alpha,
        model_args.phi,
    )?;
    let engine = RankEngine::new(&model);
    let omega = preference_vector(&ds, user_idx);
    let rv = engine.rank_user(&omega, model_args.conv())?;
    let items = top_n(&rv.scores, &ds.user_train_items[user_idx], top);

    write_artifact(&out, |w| {
        for (rank, &item) in items.iter().enumerate() {
            writeln!(
                w,
                "{},{},{:.6e},{}",
                user,
                ds.item_ids[item as usize],
                rv.scores[item as usize],
                rank + 1
            )?;
        }
        Ok(())
    })?;
    if out.is_some() {
        println!("wrote {} recommendations for user {user}", items.len());
    }
    Ok(())
}

fn eval(
    model_args: ModelArgs,
    fold: u32,
    out: Option<PathBuf>,
    detail_out: Option<PathBuf>,
    cache: Option<PathBuf>,
) -> anyhow::Result<()> {
    let config = model_args.config(0);
    let dir = DataDir::new(&model_args.data);
    let dec = dir.decomposition()?;
    let ds = dir.load_fold(fold, dec.item_count())?;

    let model = match &cache {
        Some(cache_dir) => cached_model(&ds, &dec, &model_args, cache_dir, fold)?,
        None => hir_core::model::build_model(
            &ds,
            &[(dec.clone(), model_args.beta)],
            model_args.alpha,
            model_args.phi,
        )?,
    };
    let ranks = experiments::rank_dataset(&model, &ds, model_args.conv())?;
    let report = experiments::evaluate_rank_matrix(&ds, &ranks)?;
    println!(
        "macro_doa={:.4} micro_doa={:.4}",
        100.0 * report.macro_doa,
        100.0 * report.micro_doa
    );

    let outcome = CrossValidation {
        variant: "hir".to_string(),
        params: config.params,
        folds: vec![experiments::FoldOutcome {
            fold,
            report,
            user_ids: ds.user_ids.clone(),
        }],
        macro_mean: 0.0,
        macro_std: 0.0,
        micro_mean: 0.0,
        micro_std: 0.0,
    };
    if out.is_some() {
        write_artifact(&out, |w| outcome.write_csv(w, &config))?;
    }
    if detail_out.is_some() {
        write_artifact(&detail_out, |w| outcome.write_detail_csv(w, &config))?;
    }
    Ok(())
}

/// Load the direct matrices from `cache_dir` or compute and store them.
fn cached_model(
    ds: &hir_core::dataset::RatingsDataset,
    dec: &hir_core::itemspace::Decomposition,
    model_args: &ModelArgs,
    cache_dir: &PathBuf,
    fold: u32,
) -> anyhow::Result<HirModel> {
    std::fs::create_dir_all(cache_dir)
        .with_context(|| format!("creating cache dir {}", cache_dir.display()))?;
    let u_path = cache_dir.join(format!("u{fold}_cooccurrence.coo"));
    let g_path = cache_dir.join(format!("u{fold}_adjusted_cosine.coo"));
    let (u_hat, g_hat) = if u_path.exists() && g_path.exists() {
        let u = matfile::read_matrix(&u_path)?;
        let g = matfile::read_matrix(&g_path)?;
        if u.rows() != ds.m || g.rows() != ds.m {
            anyhow::bail!(
                "cached matrices in {} do not match the dataset ({} items)",
                cache_dir.display(),
                ds.m
            );
        }
        (u, g)
    } else {
        let u = hir_core::model::cooccurrence(ds);
        let g = hir_core::model::adjusted_cosine(ds);
        matfile::write_matrix(&u_path, &u)?;
        matfile::write_matrix(&g_path, &g)?;
        (u, g)
    };
    Ok(HirModel::new(
        u_hat,
        g_hat,
        vec![(dec.ncd_factors(), model_args.beta)],
        model_args.alpha,
        model_args.phi,
    )?)
}
