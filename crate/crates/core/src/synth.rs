//! Synthetic power-law play-log generator.
//!
//! Song popularity follows a truncated Zipf law: song index 0 is the most
//! popular and draws are rank-weighted. A configurable fraction of users
//! are gray sheep whose draws come predominantly from the tail half of the
//! popularity ranking. Plays are organized into sessions: the first play
//! of a session is a deliberate taste draw, while later plays mix taste
//! draws with repeats of the previous song and occasional uniform drift,
//! so raw play counts are a noisier preference signal than session starts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, Zipf};

use crate::corpus::{Corpus, PlayRecord};
use crate::error::{Error, Result};

/// First synthetic timestamp: 2008-01-10T21:20:00Z.
const BASE_TIMESTAMP: i64 = 1_200_000_000;

/// Probability that a non-start play repeats the previous song.
const P_REPEAT: f64 = 0.25;
/// Probability that a non-start play drifts to a uniformly random song.
const P_DRIFT: f64 = 0.08;
/// Probability that a session binges on a single song.
const P_BINGE: f64 = 0.12;
/// Share of a gray-sheep user's taste draws taken from the tail half.
const GRAY_TAIL_AFFINITY: f64 = 0.85;

/// Session shape parameters for the generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionProfile {
    pub mean_sessions_per_user: f64,
    pub mean_session_length: f64,
    /// Uniform range for gaps between plays inside a session, seconds.
    pub within_gap_secs: (i64, i64),
    /// Uniform range for gaps between sessions, seconds. The lower bound
    /// must exceed the within-session upper bound so session boundaries
    /// stay recoverable.
    pub between_gap_secs: (i64, i64),
}

impl Default for SessionProfile {
    fn default() -> Self {
        SessionProfile {
            mean_sessions_per_user: 80.0,
            mean_session_length: 8.0,
            within_gap_secs: (60, 420),
            between_gap_secs: (1800, 21_600),
        }
    }
}

/// Generator settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_songs: usize,
    pub zipf_exponent: f64,
    pub profile: SessionProfile,
    pub gray_sheep_fraction: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn new(n_users: usize, n_songs: usize, zipf_exponent: f64, seed: u64) -> SynthConfig {
        SynthConfig {
            n_users,
            n_songs,
            zipf_exponent,
            profile: SessionProfile::default(),
            gray_sheep_fraction: 0.2,
            seed,
        }
    }

    /// Number of gray-sheep users; they occupy the lowest user indices.
    pub fn gray_user_count(&self) -> usize {
        (self.gray_sheep_fraction * self.n_users as f64).round() as usize
    }
}

fn validate(config: &SynthConfig) -> Result<()> {
    if config.n_users == 0 || config.n_songs == 0 {
        return Err(Error::InvalidParameter(
            "user and song counts must be >= 1".into(),
        ));
    }
    if config.zipf_exponent <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "zipf exponent must be > 0, got {}",
            config.zipf_exponent
        )));
    }
    if !(0.0..=1.0).contains(&config.gray_sheep_fraction) {
        return Err(Error::InvalidParameter(format!(
            "gray sheep fraction must be in [0, 1], got {}",
            config.gray_sheep_fraction
        )));
    }
    let p = &config.profile;
    if p.mean_sessions_per_user < 1.0 || p.mean_session_length < 1.0 {
        return Err(Error::InvalidParameter(
            "session profile means must be >= 1".into(),
        ));
    }
    if p.within_gap_secs.0 < 0
        || p.within_gap_secs.0 > p.within_gap_secs.1
        || p.between_gap_secs.0 > p.between_gap_secs.1
        || p.between_gap_secs.0 <= p.within_gap_secs.1
    {
        return Err(Error::InvalidParameter(
            "gap ranges must be ordered with between-session gaps above within-session gaps"
                .into(),
        ));
    }
    Ok(())
}

/// Generate a deterministic synthetic corpus.
pub fn synthesize_playlog(config: &SynthConfig) -> Result<Corpus> {
    validate(config)?;
    let m = config.n_songs;
    let gray_count = config.gray_user_count();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let head_zipf = Zipf::new(m as f64, config.zipf_exponent)
        .map_err(|e| Error::InvalidParameter(format!("zipf: {e}")))?;
    let tail_start = m / 2;
    let tail_len = m - tail_start;
    let tail_zipf = Zipf::new(tail_len as f64, config.zipf_exponent)
        .map_err(|e| Error::InvalidParameter(format!("zipf: {e}")))?;

    let sessions_dist = Poisson::new(config.profile.mean_sessions_per_user)
        .map_err(|e| Error::InvalidParameter(format!("session count: {e}")))?;
    let extra_len = (config.profile.mean_session_length - 1.0).max(1e-9);
    let length_dist = Poisson::new(extra_len)
        .map_err(|e| Error::InvalidParameter(format!("session length: {e}")))?;

    let user_width = config.n_users.to_string().len().max(4);
    let song_width = m.to_string().len().max(5);

    let mut records = Vec::new();
    for user in 0..config.n_users {
        let gray = user < gray_count;
        let user_id = format!("u{:0user_width$}", user + 1);
        let taste_draw = |rng: &mut ChaCha8Rng| -> usize {
            if gray && rng.random_bool(GRAY_TAIL_AFFINITY) {
                tail_start + (tail_zipf.sample(rng) as usize - 1).min(tail_len - 1)
            } else {
                (head_zipf.sample(rng) as usize - 1).min(m - 1)
            }
        };

        let n_sessions = (sessions_dist.sample(&mut rng) as usize).max(1);
        let mut t = BASE_TIMESTAMP + user as i64 * 13;
        for _ in 0..n_sessions {
            let length = 1 + length_dist.sample(&mut rng) as usize;
            let binge = rng.random_bool(P_BINGE);
            let mut prev = taste_draw(&mut rng);
            records.push(PlayRecord {
                user_id: user_id.clone(),
                song_id: song_id(prev, song_width),
                timestamp: t,
            });
            for _ in 1..length {
                t += rng
                    .random_range(config.profile.within_gap_secs.0..=config.profile.within_gap_secs.1);
                let song = if binge || rng.random_bool(P_REPEAT) {
                    prev
                } else if rng.random_bool(P_DRIFT) {
                    rng.random_range(0..m)
                } else {
                    taste_draw(&mut rng)
                };
                records.push(PlayRecord {
                    user_id: user_id.clone(),
                    song_id: song_id(song, song_width),
                    timestamp: t,
                });
                prev = song;
            }
            t += rng
                .random_range(config.profile.between_gap_secs.0..=config.profile.between_gap_secs.1);
        }
    }
    Ok(Corpus::from_records(records))
}

/// Song ids are zero-padded popularity ranks, most popular first.
fn song_id(rank: usize, width: usize) -> String {
    format!("s{:0width$}", rank + 1)
}

/// Least-squares slope of ln(count) against ln(rank) for the rank-ordered
/// positive play counts of a corpus. For a Zipf-law corpus with exponent s
/// the slope is close to -s.
pub fn rank_frequency_slope(corpus: &Corpus) -> Option<f64> {
    let mut counts = vec![0u64; corpus.n_songs()];
    for e in corpus.events() {
        counts[e.song] += 1;
    }
    let mut counts: Vec<u64> = counts.into_iter().filter(|&c| c > 0).collect();
    counts.sort_unstable_by(|a, b| b.cmp(a));
    if counts.len() < 2 {
        return None;
    }
    let points: Vec<(f64, f64)> = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| (((i + 1) as f64).ln(), (c as f64).ln()))
        .collect();
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    Some((n * sxy - sx * sy) / (n * sxx - sx * sx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::characterize::build_play_matrix;
    use crate::sessions::{sessionize, DEFAULT_GAP_SECS};

    #[test]
    fn degenerate_corpus_references_the_single_song() {
        let config = SynthConfig::new(1, 1, 1.3, 7);
        let corpus = synthesize_playlog(&config).unwrap();
        assert!(!corpus.events().is_empty());
        assert_eq!(corpus.n_songs(), 1);
        assert!(corpus.events().iter().all(|e| e.song == 0));
    }

    #[test]
    fn generation_is_deterministic_for_a_fixed_seed() {
        let config = SynthConfig::new(200, 2000, 1.0, 1);
        let a = synthesize_playlog(&config).unwrap();
        let b = synthesize_playlog(&config).unwrap();
        assert_eq!(a.to_simple_tsv(), b.to_simple_tsv());
        let other = synthesize_playlog(&SynthConfig {
            seed: 2,
            ..config
        })
        .unwrap();
        assert_ne!(a.to_simple_tsv(), other.to_simple_tsv());
    }

    #[test]
    fn rank_frequency_slope_is_near_the_exponent() {
        let config = SynthConfig::new(200, 2000, 1.0, 1);
        let corpus = synthesize_playlog(&config).unwrap();
        let slope = rank_frequency_slope(&corpus).unwrap();
        assert!(
            (slope - (-1.0)).abs() <= 0.15,
            "rank-frequency slope {slope} outside -1.0 +/- 0.15"
        );
    }

    #[test]
    fn sessions_respect_the_default_gap_threshold() {
        let config = SynthConfig::new(20, 200, 1.0, 5);
        let corpus = synthesize_playlog(&config).unwrap();
        let sessions = sessionize(&corpus, DEFAULT_GAP_SECS).unwrap();
        // mean session length should sit near the configured mean
        let total_plays: usize = sessions.iter().map(|s| s.plays.len()).sum();
        let mean = total_plays as f64 / sessions.len() as f64;
        assert!(mean > 4.0 && mean < 12.0, "mean session length {mean}");
    }

    #[test]
    fn gray_sheep_users_play_predominantly_tail_songs() {
        let config = SynthConfig::new(50, 500, 1.0, 9);
        let corpus = synthesize_playlog(&config).unwrap();
        let gray_count = config.gray_user_count();
        let plays = build_play_matrix(&corpus);
        // song ids are popularity ranks; dense indices are not
        let rank = |s: usize| corpus.song_id(s)[1..].parse::<usize>().unwrap() - 1;
        let tail_start = 250;
        let mut gray_tail_share = 0.0;
        let mut normal_tail_share = 0.0;
        for user in 0..50 {
            let total = plays.user_total(user) as f64;
            let tail: u64 = plays
                .plays
                .row(user)
                .filter(|&(s, _)| rank(s) >= tail_start)
                .map(|(_, p)| p)
                .sum();
            let share = tail as f64 / total;
            if user < gray_count {
                gray_tail_share += share;
            } else {
                normal_tail_share += share;
            }
        }
        gray_tail_share /= gray_count as f64;
        normal_tail_share /= (50 - gray_count) as f64;
        assert!(
            gray_tail_share > 0.5,
            "gray users should mostly play the tail, got {gray_tail_share}"
        );
        assert!(gray_tail_share > normal_tail_share + 0.3);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(synthesize_playlog(&SynthConfig::new(0, 10, 1.0, 1)).is_err());
        assert!(synthesize_playlog(&SynthConfig::new(10, 0, 1.0, 1)).is_err());
        assert!(synthesize_playlog(&SynthConfig::new(10, 10, 0.0, 1)).is_err());
        let mut config = SynthConfig::new(10, 10, 1.0, 1);
        config.gray_sheep_fraction = 1.5;
        assert!(synthesize_playlog(&config).is_err());
        let mut config = SynthConfig::new(10, 10, 1.0, 1);
        config.profile.between_gap_secs = (100, 50);
        assert!(synthesize_playlog(&config).is_err());
    }
}
