//! K-fold cross-validation over rating entries with RMSE/MAE/NMAE reports.
//!
//! Held-out units are rated (user, song) pairs. For every fold the whole
//! rating pipeline is recomputed from the corpus events restricted to
//! training pairs, so no test pair's rating can influence session counts,
//! frequencies, UPC values, or similarities used to predict it.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::characterize::{characterize_corpus, UserProfiles};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::knn::{self, Metric, SimilarityConfig};
use crate::mf::{self, MfHyperParams};
use crate::ratings::{
    compute_frequency, compute_playcount_ratings, compute_ratings, RatingMatrix,
};
use crate::sessions::{count_session_positions, sessionize, DEFAULT_GAP_SECS};
use crate::stage_seed;

/// NMAE divides MAE by the rating range width.
pub const NMAE_NORMALIZER: f64 = 4.0;

/// The compared prediction methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    KnnUpc,
    KnnCosine,
    KnnPearson,
    Mf,
    Bmf,
}

impl Method {
    pub fn all() -> [Method; 5] {
        [
            Method::KnnUpc,
            Method::KnnCosine,
            Method::KnnPearson,
            Method::Mf,
            Method::Bmf,
        ]
    }

    pub fn id(&self) -> &'static str {
        match self {
            Method::KnnUpc => "knn_upc",
            Method::KnnCosine => "knn_cosine",
            Method::KnnPearson => "knn_pearson",
            Method::Mf => "mf",
            Method::Bmf => "bmf",
        }
    }

    pub fn parse_name(name: &str) -> Option<Method> {
        Method::all().into_iter().find(|m| m.id() == name)
    }

    pub fn display_name(&self) -> &'static str {
        match self {
            Method::KnnUpc => "User attribute K-NN UPC",
            Method::KnnCosine => "User K-NN cosine",
            Method::KnnPearson => "User K-NN Pearson",
            Method::Mf => "Matrix factorization",
            Method::Bmf => "Biased matrix factorization",
        }
    }
}

/// How implicit ratings are derived from the corpus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RatingVariant {
    PlayCount,
    Session { alpha: f64 },
}

impl RatingVariant {
    pub fn label(&self) -> String {
        match self {
            RatingVariant::PlayCount => "playcount".into(),
            RatingVariant::Session { alpha } => format!("session@{alpha:.2}"),
        }
    }

    pub fn display_name(&self) -> String {
        match self {
            RatingVariant::PlayCount => "play count".into(),
            RatingVariant::Session { alpha } => format!("session (alpha={alpha:.2})"),
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match self {
            RatingVariant::PlayCount => None,
            RatingVariant::Session { alpha } => Some(*alpha),
        }
    }
}

/// Compute the rating matrix for one variant over the full corpus.
pub fn variant_ratings(
    corpus: &Corpus,
    variant: RatingVariant,
    gap_secs: i64,
) -> Result<RatingMatrix> {
    match variant {
        RatingVariant::PlayCount => Ok(compute_playcount_ratings(
            &crate::characterize::build_play_matrix(corpus),
        )),
        RatingVariant::Session { alpha } => {
            let sessions = sessionize(corpus, gap_secs)?;
            let counts =
                count_session_positions(&sessions, corpus.n_users(), corpus.n_songs());
            Ok(compute_ratings(&compute_frequency(&counts, alpha)?))
        }
    }
}

/// Assignment of every rated pair to a fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    /// (user, song, fold), sorted by (user, song).
    assignment: Vec<(usize, usize, usize)>,
}

impl FoldPlan {
    pub fn assignment(&self) -> &[(usize, usize, usize)] {
        &self.assignment
    }

    pub fn pairs_in_fold(&self, fold: usize) -> Vec<(usize, usize)> {
        self.assignment
            .iter()
            .filter(|&&(_, _, f)| f == fold)
            .map(|&(u, s, _)| (u, s))
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.k];
        for &(_, _, f) in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Deal rated pairs into k folds, stratified per user: each user's pairs
/// are shuffled with the seeded generator and dealt round-robin onto a
/// global fold cursor, so fold sizes differ by at most one and a user with
/// q <= k pairs lands in q distinct folds.
pub fn kfold_split(ratings: &RatingMatrix, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!(
            "fold count must be >= 2, got {k}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = Vec::with_capacity(ratings.n_ratings());
    let mut cursor = 0usize;
    for user in 0..ratings.n_users() {
        let mut songs: Vec<usize> = ratings.user_ratings(user).iter().map(|&(s, _)| s).collect();
        songs.shuffle(&mut rng);
        for song in songs {
            assignment.push((user, song, cursor % k));
            cursor += 1;
        }
    }
    assignment.sort_unstable();
    Ok(FoldPlan { k, seed, assignment })
}

/// Error metrics over one test fold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSet {
    pub rmse: f64,
    pub mae: f64,
    pub nmae: f64,
}

/// RMSE, MAE and NMAE (= MAE / 4) from signed prediction errors.
pub fn metrics_from_errors(errors: &[f64]) -> MetricSet {
    let n = errors.len() as f64;
    let mse = errors.iter().map(|e| e * e).sum::<f64>() / n;
    let mae = errors.iter().map(|e| e.abs()).sum::<f64>() / n;
    MetricSet {
        rmse: mse.sqrt(),
        mae,
        nmae: mae / NMAE_NORMALIZER,
    }
}

/// Mean and sample standard deviation of each metric across folds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregatedMetrics {
    pub rmse: f64,
    pub rmse_sd: f64,
    pub mae: f64,
    pub mae_sd: f64,
    pub nmae: f64,
    pub nmae_sd: f64,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

fn aggregate(folds: &[MetricSet]) -> AggregatedMetrics {
    let (rmse, rmse_sd) = mean_sd(&folds.iter().map(|m| m.rmse).collect::<Vec<_>>());
    let (mae, mae_sd) = mean_sd(&folds.iter().map(|m| m.mae).collect::<Vec<_>>());
    let (nmae, nmae_sd) = mean_sd(&folds.iter().map(|m| m.nmae).collect::<Vec<_>>());
    AggregatedMetrics {
        rmse,
        rmse_sd,
        mae,
        mae_sd,
        nmae,
        nmae_sd,
    }
}

/// One (method, variant) cell of the report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: Method,
    pub variant: RatingVariant,
    pub metrics: AggregatedMetrics,
    pub per_fold: Vec<MetricSet>,
}

/// The full method-by-variant comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    pub folds: usize,
    pub seed: u64,
}

impl ExperimentReport {
    pub fn get(&self, method: Method, variant: RatingVariant) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.variant.label() == variant.label())
    }

    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("method,variant,alpha,rmse,rmse_sd,mae,mae_sd,nmae,nmae_sd\n");
        for row in &self.rows {
            let m = &row.metrics;
            let alpha = row
                .variant
                .alpha()
                .map(|a| format!("{a:.2}"))
                .unwrap_or_default();
            let variant = match row.variant {
                RatingVariant::PlayCount => "playcount",
                RatingVariant::Session { .. } => "session",
            };
            let _ = writeln!(
                out,
                "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                row.method.id(),
                variant,
                alpha,
                m.rmse,
                m.rmse_sd,
                m.mae,
                m.mae_sd,
                m.nmae,
                m.nmae_sd
            );
        }
        out
    }

    /// Long-format TSV, one row per (method, variant, metric), for plotting.
    pub fn to_long_tsv(&self) -> String {
        let mut out = String::from("method\tvariant\talpha\tmetric\tmean\tsd\n");
        for row in &self.rows {
            let m = &row.metrics;
            let alpha = row
                .variant
                .alpha()
                .map(|a| format!("{a:.2}"))
                .unwrap_or_default();
            let variant = match row.variant {
                RatingVariant::PlayCount => "playcount",
                RatingVariant::Session { .. } => "session",
            };
            for (name, mean, sd) in [
                ("rmse", m.rmse, m.rmse_sd),
                ("mae", m.mae, m.mae_sd),
                ("nmae", m.nmae, m.nmae_sd),
            ] {
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{:.6}\t{:.6}",
                    row.method.id(),
                    variant,
                    alpha,
                    name,
                    mean,
                    sd
                );
            }
        }
        out
    }

    /// Aligned text table, one block per method.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let mut methods: Vec<Method> = Vec::new();
        for row in &self.rows {
            if !methods.contains(&row.method) {
                methods.push(row.method);
            }
        }
        for method in methods {
            let _ = writeln!(out, "== {} ==", method.display_name());
            let _ = writeln!(
                out,
                "  {:<24} {:<14} {:<14} {:<14}",
                "rating", "RMSE", "MAE", "NMAE"
            );
            for row in self.rows.iter().filter(|r| r.method == method) {
                let m = &row.metrics;
                let _ = writeln!(
                    out,
                    "  {:<24} {:<14} {:<14} {:<14}",
                    row.variant.display_name(),
                    format!("{:.3}±{:.3}", m.rmse, m.rmse_sd),
                    format!("{:.3}±{:.3}", m.mae, m.mae_sd),
                    format!("{:.3}±{:.3}", m.nmae, m.nmae_sd),
                );
            }
        }
        out
    }
}

/// Experiment settings. Defaults: 15-minute gap, play-count plus session
/// ratings at alpha 0.5/0.7/0.9, all five methods, 300 UPC bins, K = 5
/// neighbors, lambda 0.5, ten folds.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub gap_secs: i64,
    pub variants: Vec<RatingVariant>,
    pub methods: Vec<Method>,
    pub bins: usize,
    pub k_neighbors: usize,
    pub lambda: f64,
    pub min_overlap: usize,
    pub cosine_over_corated: bool,
    pub mf: MfHyperParams,
    pub folds: usize,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            gap_secs: DEFAULT_GAP_SECS,
            variants: vec![
                RatingVariant::PlayCount,
                RatingVariant::Session { alpha: 0.5 },
                RatingVariant::Session { alpha: 0.7 },
                RatingVariant::Session { alpha: 0.9 },
            ],
            methods: Method::all().to_vec(),
            bins: crate::characterize::DEFAULT_BINS,
            k_neighbors: 5,
            lambda: 0.5,
            min_overlap: 2,
            cosine_over_corated: false,
            mf: MfHyperParams::default(),
            folds: 10,
            seed: 1,
        }
    }
}

impl ExperimentConfig {
    fn similarity_config(&self, metric: Metric) -> SimilarityConfig {
        SimilarityConfig {
            metric,
            k: self.k_neighbors,
            lambda: self.lambda,
            min_overlap: self.min_overlap,
            cosine_over_corated: self.cosine_over_corated,
        }
    }
}

/// Per-fold training artifacts handed to [`evaluate_fold`].
pub struct FoldContext<'a> {
    pub train: &'a RatingMatrix,
    pub profiles: Option<&'a UserProfiles>,
    pub config: &'a ExperimentConfig,
    /// MF seed for this fold; derived from the experiment seed.
    pub mf_seed: u64,
}

/// Training artifacts for one fold: the rating pipeline and, when needed,
/// the characterization pipeline recomputed from events restricted to
/// training pairs.
pub fn fold_train_artifacts(
    corpus: &Corpus,
    plan: &FoldPlan,
    fold: usize,
    variant: RatingVariant,
    config: &ExperimentConfig,
    with_profiles: bool,
) -> Result<(RatingMatrix, Option<UserProfiles>)> {
    let held: HashSet<(usize, usize)> = plan.pairs_in_fold(fold).into_iter().collect();
    let train_corpus = corpus.filter_events(|e| !held.contains(&(e.user, e.song)));
    let train = variant_ratings(&train_corpus, variant, config.gap_secs)?;
    let profiles = if with_profiles {
        let (_, profiles) = characterize_corpus(&train_corpus, config.bins)?;
        Some(profiles)
    } else {
        None
    };
    Ok((train, profiles))
}

/// Test triples (user, song, truth) for a fold, sorted by (user, song).
pub fn fold_test_set(
    full: &RatingMatrix,
    plan: &FoldPlan,
    fold: usize,
) -> Vec<(usize, usize, f64)> {
    plan.pairs_in_fold(fold)
        .into_iter()
        .map(|(u, s)| (u, s, full.get(u, s).expect("fold pair missing from matrix")))
        .collect()
}

/// Predictions for the test triples under one method. Active users absent
/// from the training matrix fall back to the clamped global training mean.
pub fn fold_predictions(
    method: Method,
    ctx: &FoldContext<'_>,
    test: &[(usize, usize, f64)],
) -> Result<Vec<f64>> {
    match method {
        Method::Mf | Method::Bmf => {
            let hyper = MfHyperParams {
                seed: ctx.mf_seed,
                ..ctx.config.mf
            };
            let model = mf::train(ctx.train, &hyper, method == Method::Bmf)?;
            Ok(test.iter().map(|&(u, s, _)| model.predict(u, s)).collect())
        }
        Method::KnnUpc | Method::KnnCosine | Method::KnnPearson => {
            let metric = match method {
                Method::KnnUpc => Metric::WeightedCosineUpc,
                Method::KnnCosine => Metric::Cosine,
                _ => Metric::Pearson,
            };
            let sim_config = ctx.config.similarity_config(metric);
            let global = ctx.train.global_mean().clamp(0.0, 4.0);
            let mut preds = Vec::with_capacity(test.len());
            let mut i = 0;
            while i < test.len() {
                let user = test[i].0;
                let end = i + test[i..].iter().take_while(|t| t.0 == user).count();
                if ctx.train.user_mean(user).is_none() {
                    preds.extend(std::iter::repeat(global).take(end - i));
                } else {
                    let neighbors =
                        knn::find_neighbors(user, &sim_config, ctx.train, ctx.profiles)?;
                    for &(u, s, _) in &test[i..end] {
                        preds.push(knn::predict_rating(u, s, &neighbors, ctx.train)?.value);
                    }
                }
                i = end;
            }
            Ok(preds)
        }
    }
}

/// Evaluate one method on one fold. The test fold must be non-empty.
pub fn evaluate_fold(
    method: Method,
    ctx: &FoldContext<'_>,
    test: &[(usize, usize, f64)],
) -> Result<MetricSet> {
    if test.is_empty() {
        return Err(Error::EmptyInput("empty test fold".into()));
    }
    let preds = fold_predictions(method, ctx, test)?;
    let errors: Vec<f64> = preds
        .iter()
        .zip(test)
        .map(|(p, &(_, _, truth))| p - truth)
        .collect();
    Ok(metrics_from_errors(&errors))
}

/// Run the full method-by-variant grid under k-fold cross-validation.
///
/// Folds that received no pairs (fewer rated pairs than folds) are
/// skipped; metrics aggregate over the evaluated folds.
pub fn run_experiment(corpus: &Corpus, config: &ExperimentConfig) -> Result<ExperimentReport> {
    if config.variants.is_empty() || config.methods.is_empty() {
        return Err(Error::InvalidParameter(
            "at least one method and one rating variant are required".into(),
        ));
    }
    let needs_profiles = config.methods.contains(&Method::KnnUpc);
    // (method index, variant index) -> per-fold metrics
    let mut cells: BTreeMap<(usize, usize), Vec<MetricSet>> = BTreeMap::new();

    for (vi, &variant) in config.variants.iter().enumerate() {
        let full = variant_ratings(corpus, variant, config.gap_secs)?;
        if full.n_ratings() == 0 {
            return Err(Error::EmptyInput(format!(
                "no ratings under variant {}",
                variant.label()
            )));
        }
        let plan = kfold_split(
            &full,
            config.folds,
            stage_seed(config.seed, &format!("kfold/{}", variant.label())),
        )?;

        let fold_results: Vec<Result<Option<Vec<MetricSet>>>> = (0..config.folds)
            .into_par_iter()
            .map(|fold| {
                let test = fold_test_set(&full, &plan, fold);
                if test.is_empty() {
                    return Ok(None);
                }
                let (train, profiles) =
                    fold_train_artifacts(corpus, &plan, fold, variant, config, needs_profiles)?;
                let mut per_method = Vec::with_capacity(config.methods.len());
                for &method in &config.methods {
                    let ctx = FoldContext {
                        train: &train,
                        profiles: profiles.as_ref(),
                        config,
                        mf_seed: stage_seed(
                            config.seed,
                            &format!("mf/{}/fold{}/{}", variant.label(), fold, method.id()),
                        ),
                    };
                    per_method.push(evaluate_fold(method, &ctx, &test)?);
                }
                Ok(Some(per_method))
            })
            .collect();

        for result in fold_results {
            let Some(per_method) = result? else { continue };
            for (mi, metrics) in per_method.into_iter().enumerate() {
                cells.entry((mi, vi)).or_default().push(metrics);
            }
        }
    }

    let mut rows = Vec::new();
    for (mi, &method) in config.methods.iter().enumerate() {
        for (vi, &variant) in config.variants.iter().enumerate() {
            let per_fold = cells.remove(&(mi, vi)).unwrap_or_default();
            if per_fold.is_empty() {
                return Err(Error::EmptyInput(format!(
                    "no evaluated folds for {} / {}",
                    method.id(),
                    variant.label()
                )));
            }
            rows.push(ReportRow {
                method,
                variant,
                metrics: aggregate(&per_fold),
                per_fold,
            });
        }
    }
    Ok(ExperimentReport {
        rows,
        folds: config.folds,
        seed: config.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_playlog_str, LogFormat};

    const TOL: f64 = 1e-12;

    fn toy_corpus() -> Corpus {
        // 6 users with overlapping tastes; enough pairs for 3 folds
        let mut text = String::new();
        let mut t = 1_300_000_000i64;
        let plays: &[(&str, &[&str])] = &[
            ("u1", &["a", "a", "b", "c"]),
            ("u2", &["a", "b", "b", "d"]),
            ("u3", &["a", "c", "d", "d"]),
            ("u4", &["b", "c", "c", "a"]),
            ("u5", &["d", "a", "b", "c"]),
            ("u6", &["c", "d", "a", "b"]),
        ];
        for (user, songs) in plays {
            for (i, song) in songs.iter().enumerate() {
                // every 2nd play starts a new session
                t += if i % 2 == 0 { 3600 } else { 120 };
                text.push_str(&format!("{user}\t{song}\t{t}\n"));
            }
        }
        parse_playlog_str(&text, LogFormat::SimpleTsv).0
    }

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            folds: 3,
            mf: MfHyperParams {
                epochs: 10,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn metrics_examples() {
        let perfect = metrics_from_errors(&[0.0, 0.0, 0.0]);
        assert_eq!(perfect.rmse, 0.0);
        assert_eq!(perfect.mae, 0.0);
        assert_eq!(perfect.nmae, 0.0);

        let constant = metrics_from_errors(&[1.0, 1.0, 1.0, 1.0]);
        assert!((constant.rmse - 1.0).abs() < TOL);
        assert!((constant.mae - 1.0).abs() < TOL);
        assert!((constant.nmae - 0.25).abs() < TOL);

        let mixed = metrics_from_errors(&[1.0, -3.0]);
        assert!((mixed.mae - 2.0).abs() < TOL);
        assert!((mixed.rmse - 5.0_f64.sqrt()).abs() < TOL);
        assert!((mixed.nmae - 0.5).abs() < TOL);
    }

    #[test]
    fn kfold_one_pair_per_fold_when_counts_match() {
        let rows = (0..1)
            .map(|_| (0..10).map(|s| (s, 4.0)).collect::<Vec<_>>())
            .collect();
        let ratings = RatingMatrix::from_rows(rows, 10);
        let plan = kfold_split(&ratings, 10, 7).unwrap();
        assert_eq!(plan.fold_sizes(), vec![1; 10]);
    }

    #[test]
    fn kfold_is_deterministic_and_balanced() {
        let rows = (0..10)
            .map(|_| (0..10).map(|s| (s, 4.0)).collect::<Vec<_>>())
            .collect::<Vec<_>>();
        let ratings = RatingMatrix::from_rows(rows, 10);
        let a = kfold_split(&ratings, 10, 42).unwrap();
        let b = kfold_split(&ratings, 10, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.fold_sizes(), vec![10; 10]);
        let c = kfold_split(&ratings, 10, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn kfold_spreads_each_users_pairs() {
        let rows = vec![(0..5).map(|s| (s, 4.0)).collect::<Vec<_>>(); 4];
        let ratings = RatingMatrix::from_rows(rows, 5);
        let plan = kfold_split(&ratings, 5, 3).unwrap();
        for user in 0..4 {
            let folds: HashSet<usize> = plan
                .assignment()
                .iter()
                .filter(|&&(u, _, _)| u == user)
                .map(|&(_, _, f)| f)
                .collect();
            assert_eq!(folds.len(), 5);
        }
    }

    #[test]
    fn kfold_rejects_k_below_two() {
        let ratings = RatingMatrix::from_rows(vec![vec![(0, 4.0)]], 1);
        assert!(kfold_split(&ratings, 1, 0).is_err());
    }

    #[test]
    fn evaluate_fold_rejects_empty_test() {
        let corpus = toy_corpus();
        let config = small_config();
        let full = variant_ratings(&corpus, RatingVariant::PlayCount, config.gap_secs).unwrap();
        let plan = kfold_split(&full, 3, 0).unwrap();
        let (train, _) =
            fold_train_artifacts(&corpus, &plan, 0, RatingVariant::PlayCount, &config, false)
                .unwrap();
        let ctx = FoldContext {
            train: &train,
            profiles: None,
            config: &config,
            mf_seed: 0,
        };
        assert!(evaluate_fold(Method::KnnCosine, &ctx, &[]).is_err());
    }

    #[test]
    fn held_out_pairs_never_reach_the_training_matrix() {
        let corpus = toy_corpus();
        let config = small_config();
        for variant in [RatingVariant::PlayCount, RatingVariant::Session { alpha: 0.7 }] {
            let full = variant_ratings(&corpus, variant, config.gap_secs).unwrap();
            let plan = kfold_split(&full, 3, 9).unwrap();
            for fold in 0..3 {
                let (train, _) =
                    fold_train_artifacts(&corpus, &plan, fold, variant, &config, false).unwrap();
                for (u, s) in plan.pairs_in_fold(fold) {
                    assert_eq!(train.get(u, s), None);
                }
            }
        }
    }

    #[test]
    fn leakage_canary_perturbed_test_ratings_leave_predictions_unchanged() {
        let corpus = toy_corpus();
        let config = small_config();
        let variant = RatingVariant::Session { alpha: 0.7 };
        let full = variant_ratings(&corpus, variant, config.gap_secs).unwrap();
        let plan = kfold_split(&full, 3, 5).unwrap();
        let fold = 0;
        let (train, profiles) =
            fold_train_artifacts(&corpus, &plan, fold, variant, &config, true).unwrap();
        let ctx = FoldContext {
            train: &train,
            profiles: profiles.as_ref(),
            config: &config,
            mf_seed: 77,
        };
        let test = fold_test_set(&full, &plan, fold);
        // perturb every test truth; prediction paths must not notice
        let perturbed: Vec<(usize, usize, f64)> =
            test.iter().map(|&(u, s, r)| (u, s, r + 1.0)).collect();
        for method in Method::all() {
            let before = fold_predictions(method, &ctx, &test).unwrap();
            let after = fold_predictions(method, &ctx, &perturbed).unwrap();
            assert_eq!(before, after, "{} predictions read test truths", method.id());
        }
    }

    #[test]
    fn report_covers_the_grid_and_nmae_is_mae_over_four() {
        let corpus = toy_corpus();
        let config = small_config();
        let report = run_experiment(&corpus, &config).unwrap();
        assert_eq!(report.rows.len(), 20);
        for row in &report.rows {
            assert!(row.metrics.rmse.is_finite());
            assert!(row.metrics.rmse + TOL >= row.metrics.mae);
            assert!((row.metrics.nmae - row.metrics.mae / 4.0).abs() < 1e-9);
            for fold in &row.per_fold {
                assert!((fold.nmae - fold.mae / 4.0).abs() < 1e-9);
            }
        }
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 21);
        let long = report.to_long_tsv();
        assert_eq!(long.lines().count(), 61);
        assert!(report.to_table().contains("User attribute K-NN UPC"));
    }

    #[test]
    fn report_is_deterministic_under_a_fixed_seed() {
        let corpus = toy_corpus();
        let config = small_config();
        let a = run_experiment(&corpus, &config).unwrap();
        let b = run_experiment(&corpus, &config).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn single_cell_grid_runs() {
        let corpus = toy_corpus();
        let config = ExperimentConfig {
            variants: vec![RatingVariant::PlayCount],
            methods: vec![Method::KnnCosine],
            folds: 3,
            ..Default::default()
        };
        let report = run_experiment(&corpus, &config).unwrap();
        assert_eq!(report.rows.len(), 1);
    }
}
