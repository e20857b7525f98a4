//! End-to-end pipeline: ingest, sessionize, rate, characterize, evaluate.
//!
//! A single flat key=value configuration drives every stage. Intermediate
//! artifacts (corpus, session summary, rating exports, UPC table) are
//! cached in the output directory under a content hash of the
//! configuration text plus the input file, so identical re-runs skip the
//! pre-evaluation stages.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::characterize::{characterize_corpus, upc_tsv, DEFAULT_BINS};
use crate::corpus::{parse_playlog_str, Corpus, LogFormat, ParseOptions};
use crate::error::{Error, Result};
use crate::eval::{
    run_experiment, variant_ratings, ExperimentConfig, ExperimentReport, Method, RatingVariant,
};
use crate::knn::{self, Metric, SimilarityConfig};
use crate::mf::MfHyperParams;
use crate::sessions::{session_summary_csv, sessionize};

/// Environment variable holding the default output directory.
pub const OUT_DIR_ENV: &str = "SESSIONCF_OUT_DIR";

/// Rating pipelines to include in the variant grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatingMode {
    PlayCount,
    Session,
}

impl RatingMode {
    pub fn parse_name(name: &str) -> Option<RatingMode> {
        match name {
            "playcount" => Some(RatingMode::PlayCount),
            "session" => Some(RatingMode::Session),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RatingMode::PlayCount => "playcount",
            RatingMode::Session => "session",
        }
    }
}

/// Full pipeline configuration; round-trips losslessly through its flat
/// key=value text form.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub format: LogFormat,
    pub gap_minutes: f64,
    pub alphas: Vec<f64>,
    pub rating_modes: Vec<RatingMode>,
    pub bins: usize,
    pub k_neighbors: usize,
    pub lambda: f64,
    pub min_overlap: usize,
    pub cosine_over_corated: bool,
    pub methods: Vec<Method>,
    pub mf_factors: usize,
    pub mf_learning_rate: f64,
    pub mf_regularization: f64,
    pub mf_epochs: usize,
    pub folds: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub max_malformed_fraction: f64,
}

impl PipelineConfig {
    pub fn new(input: impl Into<PathBuf>, format: LogFormat) -> PipelineConfig {
        let out_dir = std::env::var(OUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|_| PathBuf::from("out"));
        PipelineConfig {
            input: input.into(),
            format,
            gap_minutes: 15.0,
            alphas: vec![0.5, 0.7, 0.9],
            rating_modes: vec![RatingMode::PlayCount, RatingMode::Session],
            bins: DEFAULT_BINS,
            k_neighbors: 5,
            lambda: 0.5,
            min_overlap: 2,
            cosine_over_corated: false,
            methods: Method::all().to_vec(),
            mf_factors: 10,
            mf_learning_rate: 0.005,
            mf_regularization: 0.02,
            mf_epochs: 50,
            folds: 10,
            seed: 1,
            out_dir,
            max_malformed_fraction: 0.10,
        }
    }

    pub fn gap_secs(&self) -> i64 {
        (self.gap_minutes * 60.0).round() as i64
    }

    /// The rating variants implied by the configured modes and alphas.
    pub fn variants(&self) -> Vec<RatingVariant> {
        let mut variants = Vec::new();
        for mode in &self.rating_modes {
            match mode {
                RatingMode::PlayCount => variants.push(RatingVariant::PlayCount),
                RatingMode::Session => {
                    variants.extend(self.alphas.iter().map(|&alpha| RatingVariant::Session {
                        alpha,
                    }));
                }
            }
        }
        variants
    }

    pub fn mf_hyper(&self, seed: u64) -> MfHyperParams {
        MfHyperParams {
            factors: self.mf_factors,
            learning_rate: self.mf_learning_rate,
            regularization: self.mf_regularization,
            epochs: self.mf_epochs,
            seed,
        }
    }

    pub fn experiment_config(&self) -> ExperimentConfig {
        ExperimentConfig {
            gap_secs: self.gap_secs(),
            variants: self.variants(),
            methods: self.methods.clone(),
            bins: self.bins,
            k_neighbors: self.k_neighbors,
            lambda: self.lambda,
            min_overlap: self.min_overlap,
            cosine_over_corated: self.cosine_over_corated,
            mf: self.mf_hyper(0),
            folds: self.folds,
            seed: self.seed,
        }
    }

    /// Serialize to the flat key=value text form.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let format = match self.format {
            LogFormat::Lastfm360k => "lastfm360k",
            LogFormat::SimpleTsv => "simple",
        };
        let _ = writeln!(out, "input = {}", self.input.display());
        let _ = writeln!(out, "format = {format}");
        let _ = writeln!(out, "gap_minutes = {}", self.gap_minutes);
        let alphas: Vec<String> = self.alphas.iter().map(|a| a.to_string()).collect();
        let _ = writeln!(out, "alphas = {}", alphas.join(","));
        let modes: Vec<&str> = self.rating_modes.iter().map(|m| m.name()).collect();
        let _ = writeln!(out, "rating_modes = {}", modes.join(","));
        let _ = writeln!(out, "bins = {}", self.bins);
        let _ = writeln!(out, "k = {}", self.k_neighbors);
        let _ = writeln!(out, "lambda = {}", self.lambda);
        let _ = writeln!(out, "min_overlap = {}", self.min_overlap);
        let _ = writeln!(out, "cosine_corated = {}", self.cosine_over_corated);
        let methods: Vec<&str> = self.methods.iter().map(|m| m.id()).collect();
        let _ = writeln!(out, "methods = {}", methods.join(","));
        let _ = writeln!(out, "mf_factors = {}", self.mf_factors);
        let _ = writeln!(out, "mf_lr = {}", self.mf_learning_rate);
        let _ = writeln!(out, "mf_reg = {}", self.mf_regularization);
        let _ = writeln!(out, "mf_epochs = {}", self.mf_epochs);
        let _ = writeln!(out, "folds = {}", self.folds);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "out_dir = {}", self.out_dir.display());
        let _ = writeln!(out, "max_malformed_fraction = {}", self.max_malformed_fraction);
        out
    }

    /// Parse the key=value text form; keys not present keep their defaults.
    pub fn from_text(text: &str) -> Result<PipelineConfig> {
        let mut config = PipelineConfig::new("", LogFormat::SimpleTsv);
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: lineno + 1,
                msg: format!("expected key = value, got '{line}'"),
            })?;
            config
                .apply(key.trim(), value.trim())
                .map_err(|msg| Error::Config {
                    line: lineno + 1,
                    msg,
                })?;
        }
        if config.input.as_os_str().is_empty() {
            return Err(Error::Config {
                line: 0,
                msg: "missing required key 'input'".into(),
            });
        }
        Ok(config)
    }

    /// Apply one key=value override.
    pub fn apply(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
            value
                .parse()
                .map_err(|_| format!("bad value '{value}' for {key}"))
        }
        match key {
            "input" => self.input = PathBuf::from(value),
            "format" => {
                self.format = LogFormat::parse_name(value)
                    .ok_or_else(|| format!("unknown format '{value}'"))?
            }
            "gap_minutes" => self.gap_minutes = parse(key, value)?,
            "alphas" => {
                self.alphas = value
                    .split(',')
                    .map(|v| parse("alpha", v.trim()))
                    .collect::<std::result::Result<_, _>>()?
            }
            "rating_modes" => {
                self.rating_modes = value
                    .split(',')
                    .map(|v| {
                        RatingMode::parse_name(v.trim())
                            .ok_or_else(|| format!("unknown rating mode '{v}'"))
                    })
                    .collect::<std::result::Result<_, _>>()?
            }
            "bins" => self.bins = parse(key, value)?,
            "k" => self.k_neighbors = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "min_overlap" => self.min_overlap = parse(key, value)?,
            "cosine_corated" => self.cosine_over_corated = parse(key, value)?,
            "methods" => {
                self.methods = value
                    .split(',')
                    .map(|v| {
                        Method::parse_name(v.trim())
                            .ok_or_else(|| format!("unknown method '{v}'"))
                    })
                    .collect::<std::result::Result<_, _>>()?
            }
            "mf_factors" => self.mf_factors = parse(key, value)?,
            "mf_lr" => self.mf_learning_rate = parse(key, value)?,
            "mf_reg" => self.mf_regularization = parse(key, value)?,
            "mf_epochs" => self.mf_epochs = parse(key, value)?,
            "folds" => self.folds = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "max_malformed_fraction" => self.max_malformed_fraction = parse(key, value)?,
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        PipelineConfig::from_text(&text)
    }
}

/// Outcome of a pipeline run.
pub struct PipelineRun {
    pub report: ExperimentReport,
    pub cache_hit: bool,
    pub cache_key: String,
    pub out_dir: PathBuf,
}

fn sha256_hex(parts: &[&[u8]]) -> String {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(part);
    }
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Load the corpus from the pipeline cache, or parse the input and write
/// every pre-evaluation artifact. Returns the corpus and whether the cache
/// was hit.
fn load_or_build_corpus(config: &PipelineConfig, cache_key: &str) -> Result<(Corpus, bool)> {
    let corpus_path = config.out_dir.join("corpus.tsv");
    let key_path = config.out_dir.join("cache.key");
    let cached_key = fs::read_to_string(&key_path).unwrap_or_default();
    if cached_key.trim() == cache_key && corpus_path.exists() {
        let text = fs::read_to_string(&corpus_path).map_err(|source| Error::Io {
            path: corpus_path.clone(),
            source,
        })?;
        let (corpus, _) = parse_playlog_str(&text, LogFormat::SimpleTsv);
        return Ok((corpus, true));
    }

    let opts = ParseOptions {
        max_malformed_fraction: config.max_malformed_fraction,
    };
    let (corpus, _stats) = crate::corpus::parse_playlog(&config.input, config.format, &opts)
        .map_err(|e| e.in_stage("ingest"))?;
    write_file(&corpus_path, &corpus.to_simple_tsv())?;

    let sessions = sessionize(&corpus, config.gap_secs()).map_err(|e| e.in_stage("sessionize"))?;
    write_file(
        &config.out_dir.join("sessions_summary.csv"),
        &session_summary_csv(&corpus, &sessions),
    )?;

    for variant in config.variants() {
        let ratings = variant_ratings(&corpus, variant, config.gap_secs())
            .map_err(|e| e.in_stage("rate"))?;
        let name = format!("ratings_{}.tsv", variant.label().replace('@', "_"));
        write_file(&config.out_dir.join(name), &ratings.to_tsv(&corpus))?;
    }

    let (_, profiles) =
        characterize_corpus(&corpus, config.bins).map_err(|e| e.in_stage("characterize"))?;
    write_file(&config.out_dir.join("upc.tsv"), &upc_tsv(&corpus, &profiles))?;

    write_file(&key_path, cache_key)?;
    Ok((corpus, false))
}

/// Run every pipeline stage in dependency order and write the report.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineRun> {
    fs::create_dir_all(&config.out_dir).map_err(|source| Error::Write {
        path: config.out_dir.clone(),
        source,
    })?;
    let input_bytes = fs::read(&config.input).map_err(|source| Error::Io {
        path: config.input.clone(),
        source,
    })?;
    let config_text = config.to_text();
    let cache_key = sha256_hex(&[config_text.as_bytes(), &input_bytes]);

    let (corpus, cache_hit) = load_or_build_corpus(config, &cache_key)?;

    let report = run_experiment(&corpus, &config.experiment_config())
        .map_err(|e| e.in_stage("evaluate"))?;
    write_file(&config.out_dir.join("report.csv"), &report.to_csv())?;
    write_file(&config.out_dir.join("report_long.tsv"), &report.to_long_tsv())?;
    write_file(&config.out_dir.join("report.txt"), &report.to_table())?;
    write_file(&config.out_dir.join("config.resolved.txt"), &config_text)?;

    Ok(PipelineRun {
        report,
        cache_hit,
        cache_key,
        out_dir: config.out_dir.clone(),
    })
}

/// Diagnostic view of one user: sessions, top ratings, UPC, neighbors.
#[derive(Debug, Clone)]
pub struct UserExplanation {
    pub user_id: String,
    pub sessions: usize,
    pub mean_session_length: f64,
    pub upc: f64,
    pub bin: usize,
    /// Top-rated songs, best first: (song id, rating).
    pub top_songs: Vec<(String, f64)>,
    /// Nearest neighbors, best first: (user id, similarity).
    pub neighbors: Vec<(String, f64)>,
    pub metric: Metric,
    pub variant: RatingVariant,
}

impl UserExplanation {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "user {}", self.user_id);
        let _ = writeln!(
            out,
            "  sessions: {} (mean length {:.2})",
            self.sessions, self.mean_session_length
        );
        let _ = writeln!(out, "  upc: {:.6} (bin {})", self.upc, self.bin);
        let _ = writeln!(out, "  ratings ({}):", self.variant.label());
        for (song, rating) in &self.top_songs {
            let _ = writeln!(out, "    {song}\t{rating:.4}");
        }
        let _ = writeln!(out, "  neighbors ({}):", self.metric.name());
        for (user, sim) in &self.neighbors {
            let _ = writeln!(out, "    {user}\t{sim:.4}");
        }
        out
    }
}

/// Explain one user's pipeline outputs. Unknown ids fail with the closest
/// known ids as suggestions.
pub fn explain_user(
    corpus: &Corpus,
    config: &PipelineConfig,
    user_id: &str,
) -> Result<UserExplanation> {
    let Some(user) = corpus.user_index(user_id) else {
        return Err(Error::UnknownUser {
            id: user_id.to_string(),
            suggestions: nearest_ids(user_id, corpus.user_ids(), 5),
        });
    };

    let sessions = sessionize(corpus, config.gap_secs())?;
    let mine: Vec<_> = sessions.iter().filter(|s| s.user == user).collect();
    let total_plays: usize = mine.iter().map(|s| s.plays.len()).sum();
    let mean_session_length = if mine.is_empty() {
        0.0
    } else {
        total_plays as f64 / mine.len() as f64
    };

    let variant = *config
        .variants()
        .iter()
        .find(|v| matches!(v, RatingVariant::Session { .. }))
        .unwrap_or(&RatingVariant::PlayCount);
    let ratings = variant_ratings(corpus, variant, config.gap_secs())?;
    let mut top_songs: Vec<(String, f64)> = ratings
        .user_ratings(user)
        .iter()
        .map(|&(s, r)| (corpus.song_id(s).to_string(), r))
        .collect();
    top_songs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    top_songs.truncate(10);

    let (_, profiles) = characterize_corpus(corpus, config.bins)?;
    let profile = profiles
        .get(user)
        .ok_or_else(|| Error::NoRatingsForUser(user))?;

    let metric = if config.methods.contains(&Method::KnnUpc) {
        Metric::WeightedCosineUpc
    } else if config.methods.contains(&Method::KnnPearson)
        && !config.methods.contains(&Method::KnnCosine)
    {
        Metric::Pearson
    } else {
        Metric::Cosine
    };
    let sim_config = SimilarityConfig {
        metric,
        k: config.k_neighbors,
        lambda: config.lambda,
        min_overlap: config.min_overlap,
        cosine_over_corated: config.cosine_over_corated,
    };
    let neighbor_set = knn::find_neighbors(user, &sim_config, &ratings, Some(&profiles))?;
    let neighbors = neighbor_set
        .neighbors
        .iter()
        .map(|&(u, sim)| (corpus.user_id(u).to_string(), sim))
        .collect();

    Ok(UserExplanation {
        user_id: user_id.to_string(),
        sessions: mine.len(),
        mean_session_length,
        upc: profile.upc,
        bin: profile.bin,
        top_songs,
        neighbors,
        metric,
        variant,
    })
}

/// The `count` known ids closest to `target` by edit distance.
fn nearest_ids(target: &str, known: &[String], count: usize) -> Vec<String> {
    let mut scored: Vec<(usize, &String)> = known
        .iter()
        .map(|id| (edit_distance(target, id), id))
        .collect();
    scored.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(b.1)));
    scored.into_iter().take(count).map(|(_, id)| id.clone()).collect()
}

fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut current = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        current[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let substitution = prev[j] + usize::from(ca != cb);
            current[j + 1] = substitution.min(prev[j + 1] + 1).min(current[j] + 1);
        }
        std::mem::swap(&mut prev, &mut current);
    }
    prev[b.len()]
}
