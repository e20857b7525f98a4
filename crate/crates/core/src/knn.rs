//! User-based K-NN rating prediction.
//!
//! Three similarity modes: Pearson over co-rated songs, cosine over full
//! sparse rating vectors, and a weighted blend of cosine with a UPC-bin
//! attribute similarity. Predictions follow the mean-centered weighted
//! deviation form: the active user's mean plus the similarity-weighted
//! neighbor deviations, normalized by the sum of absolute similarities.

use crate::characterize::UserProfiles;
use crate::error::{Error, Result};
use crate::ratings::RatingMatrix;

/// Similarity metric selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Pearson,
    Cosine,
    WeightedCosineUpc,
}

impl Metric {
    pub fn parse_name(name: &str) -> Option<Metric> {
        match name {
            "pearson" => Some(Metric::Pearson),
            "cosine" => Some(Metric::Cosine),
            "weighted_cosine_upc" | "weighted" | "upc" => Some(Metric::WeightedCosineUpc),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Pearson => "pearson",
            Metric::Cosine => "cosine",
            Metric::WeightedCosineUpc => "weighted_cosine_upc",
        }
    }
}

/// Neighborhood search settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityConfig {
    pub metric: Metric,
    /// Neighborhood size.
    pub k: usize,
    /// Rating-vs-attribute weight for the weighted mode; 1 reduces the
    /// weighted similarity exactly to plain cosine.
    pub lambda: f64,
    /// Minimum co-rated songs for Pearson to be defined.
    pub min_overlap: usize,
    /// Compute cosine over co-rated songs only instead of full vectors.
    pub cosine_over_corated: bool,
}

impl SimilarityConfig {
    pub fn new(metric: Metric) -> SimilarityConfig {
        SimilarityConfig {
            metric,
            k: 5,
            lambda: 0.5,
            min_overlap: 2,
            cosine_over_corated: false,
        }
    }
}

/// The active user's nearest neighbors, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet {
    pub active: usize,
    /// (user, similarity), descending similarity, ties by ascending index,
    /// at most K entries, all with positive similarity.
    pub neighbors: Vec<(usize, f64)>,
}

/// A predicted rating, clamped to [0, 4].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub value: f64,
    /// Set when no neighbor rated the song and the active user's mean was
    /// returned instead.
    pub fallback_used: bool,
}

/// Pearson correlation over the co-rated songs of two users, with means
/// taken over the co-rated subset. Returns 0 when the overlap is below
/// `min_overlap` or either side is constant on the overlap.
pub fn pearson_similarity(
    ratings: &RatingMatrix,
    a: usize,
    b: usize,
    min_overlap: usize,
) -> f64 {
    let row_a = ratings.user_ratings(a);
    let row_b = ratings.user_ratings(b);

    let mut n = 0usize;
    let mut sum_a = 0.0;
    let mut sum_b = 0.0;
    let mut const_a = true;
    let mut const_b = true;
    let mut first_a = 0.0;
    let mut first_b = 0.0;
    merge_corated(row_a, row_b, |ra, rb| {
        if n == 0 {
            first_a = ra;
            first_b = rb;
        } else {
            const_a &= ra == first_a;
            const_b &= rb == first_b;
        }
        n += 1;
        sum_a += ra;
        sum_b += rb;
    });

    if n < min_overlap.max(1) || const_a || const_b {
        return 0.0;
    }

    let mean_a = sum_a / n as f64;
    let mean_b = sum_b / n as f64;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    merge_corated(row_a, row_b, |ra, rb| {
        let da = ra - mean_a;
        let db = rb - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    });

    if var_a <= 0.0 || var_b <= 0.0 {
        return 0.0;
    }
    (cov / (var_a * var_b).sqrt()).clamp(-1.0, 1.0)
}

/// Cosine similarity over full sparse rating vectors; absent ratings are
/// zero, so disjoint rated sets give 0 and the range is [0, 1] for the
/// positive ratings stored here.
pub fn cosine_similarity(ratings: &RatingMatrix, a: usize, b: usize) -> f64 {
    let norm_a = ratings.user_norm(a);
    let norm_b = ratings.user_norm(b);
    if norm_a == 0.0 || norm_b == 0.0 {
        return 0.0;
    }
    let mut dot = 0.0;
    merge_corated(ratings.user_ratings(a), ratings.user_ratings(b), |ra, rb| {
        dot += ra * rb;
    });
    (dot / (norm_a * norm_b)).min(1.0)
}

/// Cosine restricted to co-rated songs, with norms over the overlap.
pub fn cosine_similarity_corated(ratings: &RatingMatrix, a: usize, b: usize) -> f64 {
    let mut dot = 0.0;
    let mut sq_a = 0.0;
    let mut sq_b = 0.0;
    merge_corated(ratings.user_ratings(a), ratings.user_ratings(b), |ra, rb| {
        dot += ra * rb;
        sq_a += ra * ra;
        sq_b += rb * rb;
    });
    if sq_a == 0.0 || sq_b == 0.0 {
        return 0.0;
    }
    (dot / (sq_a * sq_b).sqrt()).min(1.0)
}

/// Weighted similarity: lambda times cosine plus (1 - lambda) times the
/// UPC-bin attribute similarity. At lambda = 1 this reduces bit-for-bit to
/// plain cosine. Users absent from the profiles contribute no attribute
/// term.
pub fn weighted_similarity_upc(
    ratings: &RatingMatrix,
    profiles: &UserProfiles,
    a: usize,
    b: usize,
    lambda: f64,
) -> f64 {
    weighted_similarity_impl(ratings, profiles, a, b, lambda, false)
}

fn weighted_similarity_impl(
    ratings: &RatingMatrix,
    profiles: &UserProfiles,
    a: usize,
    b: usize,
    lambda: f64,
    corated: bool,
) -> f64 {
    let cos = if corated {
        cosine_similarity_corated(ratings, a, b)
    } else {
        cosine_similarity(ratings, a, b)
    };
    let attr = profiles.attribute_similarity(a, b).unwrap_or(0.0);
    lambda * cos + (1.0 - lambda) * attr
}

/// Similarity under the configured metric.
pub fn similarity(
    config: &SimilarityConfig,
    ratings: &RatingMatrix,
    profiles: Option<&UserProfiles>,
    a: usize,
    b: usize,
) -> Result<f64> {
    Ok(match config.metric {
        Metric::Pearson => pearson_similarity(ratings, a, b, config.min_overlap),
        Metric::Cosine => {
            if config.cosine_over_corated {
                cosine_similarity_corated(ratings, a, b)
            } else {
                cosine_similarity(ratings, a, b)
            }
        }
        Metric::WeightedCosineUpc => {
            let profiles = profiles.ok_or_else(|| {
                Error::InvalidParameter(
                    "weighted_cosine_upc requires user profiles".into(),
                )
            })?;
            weighted_similarity_impl(
                ratings,
                profiles,
                a,
                b,
                config.lambda,
                config.cosine_over_corated,
            )
        }
    })
}

/// Top-K most similar users to the active user.
///
/// Candidates are the other users with at least one rating; users with
/// similarity <= 0 never enter the neighborhood. Ties break by ascending
/// user index.
pub fn find_neighbors(
    active: usize,
    config: &SimilarityConfig,
    ratings: &RatingMatrix,
    profiles: Option<&UserProfiles>,
) -> Result<NeighborSet> {
    if ratings.user_mean(active).is_none() {
        return Err(Error::NoRatingsForUser(active));
    }
    let mut scored = Vec::new();
    for other in 0..ratings.n_users() {
        if other == active || ratings.user_mean(other).is_none() {
            continue;
        }
        let sim = similarity(config, ratings, profiles, active, other)?;
        if sim > 0.0 {
            scored.push((other, sim));
        }
    }
    scored.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then(x.0.cmp(&y.0)));
    scored.truncate(config.k);
    Ok(NeighborSet {
        active,
        neighbors: scored,
    })
}

/// Predict the active user's rating for a song from the neighbor set.
///
/// Only neighbors that rated the song contribute; if none did (or the
/// absolute-similarity mass is zero) the active user's mean is returned
/// with the fallback flag set. Output is clamped to [0, 4].
pub fn predict_rating(
    active: usize,
    song: usize,
    neighbors: &NeighborSet,
    ratings: &RatingMatrix,
) -> Result<Prediction> {
    let active_mean = ratings
        .user_mean(active)
        .ok_or(Error::NoRatingsForUser(active))?;
    let mut num = 0.0;
    let mut den = 0.0;
    for &(other, sim) in &neighbors.neighbors {
        if let Some(r) = ratings.get(other, song) {
            let other_mean = ratings.user_mean(other).unwrap_or(0.0);
            num += sim * (r - other_mean);
            den += sim.abs();
        }
    }
    if den == 0.0 {
        return Ok(Prediction {
            value: active_mean.clamp(0.0, 4.0),
            fallback_used: true,
        });
    }
    Ok(Prediction {
        value: (active_mean + num / den).clamp(0.0, 4.0),
        fallback_used: false,
    })
}

/// Top-N unrated songs for the active user by predicted rating, ties by
/// ascending song index.
pub fn recommend(
    active: usize,
    config: &SimilarityConfig,
    ratings: &RatingMatrix,
    profiles: Option<&UserProfiles>,
    top_n: usize,
) -> Result<Vec<(usize, f64)>> {
    let neighbors = find_neighbors(active, config, ratings, profiles)?;
    let mut scored = Vec::new();
    for song in 0..ratings.n_songs() {
        if ratings.get(active, song).is_some() {
            continue;
        }
        let pred = predict_rating(active, song, &neighbors, ratings)?;
        scored.push((song, pred.value));
    }
    scored.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then(x.0.cmp(&y.0)));
    scored.truncate(top_n);
    Ok(scored)
}

/// Visit co-rated (value_a, value_b) pairs of two ascending-sorted rows.
fn merge_corated<F: FnMut(f64, f64)>(a: &[(usize, f64)], b: &[(usize, f64)], mut visit: F) {
    let mut i = 0;
    let mut j = 0;
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                visit(a[i].1, b[j].1);
                i += 1;
                j += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::characterize::UserProfile;

    const TOL: f64 = 1e-12;

    fn matrix(rows: Vec<Vec<(usize, f64)>>) -> RatingMatrix {
        RatingMatrix::from_rows(rows, 8)
    }

    fn profiles_with_bins(bins: &[usize], total_bins: usize) -> UserProfiles {
        let list: Vec<UserProfile> = bins
            .iter()
            .enumerate()
            .map(|(user, &bin)| UserProfile {
                user,
                upc: 0.0,
                bin,
            })
            .collect();
        UserProfiles::new(&list, bins.len(), total_bins)
    }

    #[test]
    fn pearson_detects_exact_linearity() {
        let m = matrix(vec![
            vec![(0, 1.0), (1, 2.0), (2, 3.0)],
            vec![(0, 2.0), (1, 4.0), (2, 6.0)],
            vec![(0, 3.0), (1, 2.0), (2, 1.0)],
        ]);
        assert!((pearson_similarity(&m, 0, 1, 2) - 1.0).abs() < TOL);
        assert!((pearson_similarity(&m, 0, 2, 2) - (-1.0)).abs() < TOL);
    }

    #[test]
    fn pearson_is_undefined_below_min_overlap() {
        let m = matrix(vec![vec![(0, 1.0), (1, 2.0)], vec![(0, 2.0), (5, 1.0)]]);
        assert_eq!(pearson_similarity(&m, 0, 1, 2), 0.0);
    }

    #[test]
    fn pearson_is_undefined_on_constant_side() {
        let m = matrix(vec![
            vec![(0, 4.0), (1, 4.0), (2, 4.0)],
            vec![(0, 1.0), (1, 2.0), (2, 3.0)],
        ]);
        assert_eq!(pearson_similarity(&m, 0, 1, 2), 0.0);
    }

    #[test]
    fn cosine_of_identical_vectors_is_one() {
        let m = matrix(vec![
            vec![(0, 4.0), (1, 2.0)],
            vec![(0, 4.0), (1, 2.0)],
            vec![(5, 3.0)],
        ]);
        assert!((cosine_similarity(&m, 0, 1) - 1.0).abs() < TOL);
        assert_eq!(cosine_similarity(&m, 0, 2), 0.0);
    }

    #[test]
    fn cosine_hand_example() {
        // a = {s1:4}, b = {s1:4, s2:3}: 16 / (4 * 5) = 0.8
        let m = matrix(vec![vec![(1, 4.0)], vec![(1, 4.0), (2, 3.0)]]);
        assert!((cosine_similarity(&m, 0, 1) - 0.8).abs() < TOL);
    }

    #[test]
    fn weighted_reduces_to_cosine_at_lambda_one() {
        let m = matrix(vec![
            vec![(0, 4.0), (1, 1.5), (3, 2.0)],
            vec![(0, 2.0), (3, 3.5)],
        ]);
        let profiles = profiles_with_bins(&[10, 250], 300);
        let cos = cosine_similarity(&m, 0, 1);
        let weighted = weighted_similarity_upc(&m, &profiles, 0, 1, 1.0);
        assert_eq!(weighted.to_bits(), cos.to_bits());
    }

    #[test]
    fn weighted_with_identical_bins_and_lambda_zero_is_one() {
        let m = matrix(vec![vec![(0, 4.0)], vec![(1, 4.0)]]);
        let profiles = profiles_with_bins(&[42, 42], 300);
        assert!((weighted_similarity_upc(&m, &profiles, 0, 1, 0.0) - 1.0).abs() < TOL);
    }

    #[test]
    fn weighted_hand_example_with_extreme_bins() {
        // bins 0 and 299 at B=300, lambda 0.5, cosine 0.8
        let m = matrix(vec![vec![(1, 4.0)], vec![(1, 4.0), (2, 3.0)]]);
        let profiles = profiles_with_bins(&[0, 299], 300);
        let w = weighted_similarity_upc(&m, &profiles, 0, 1, 0.5);
        assert!((w - 0.4).abs() < TOL);
    }

    #[test]
    fn similarity_symmetry() {
        let m = matrix(vec![
            vec![(0, 4.0), (1, 1.5), (3, 2.0), (5, 0.5)],
            vec![(0, 2.0), (3, 3.5), (5, 1.0)],
        ]);
        let profiles = profiles_with_bins(&[10, 250], 300);
        assert_eq!(
            cosine_similarity(&m, 0, 1).to_bits(),
            cosine_similarity(&m, 1, 0).to_bits()
        );
        assert_eq!(
            pearson_similarity(&m, 0, 1, 2).to_bits(),
            pearson_similarity(&m, 1, 0, 2).to_bits()
        );
        assert_eq!(
            weighted_similarity_upc(&m, &profiles, 0, 1, 0.5).to_bits(),
            weighted_similarity_upc(&m, &profiles, 1, 0, 0.5).to_bits()
        );
    }

    #[test]
    fn two_user_corpus_yields_at_most_one_neighbor() {
        let m = matrix(vec![vec![(0, 4.0), (1, 2.0)], vec![(0, 4.0), (1, 2.0)]]);
        let config = SimilarityConfig::new(Metric::Cosine);
        let set = find_neighbors(0, &config, &m, None).unwrap();
        assert_eq!(set.neighbors.len(), 1);
        assert_eq!(set.neighbors[0].0, 1);
    }

    #[test]
    fn k_larger_than_population_returns_all_positive() {
        let m = matrix(vec![
            vec![(0, 4.0), (1, 2.0)],
            vec![(0, 4.0), (1, 2.0)],
            vec![(0, 1.0)],
            vec![(5, 3.0)], // disjoint: similarity 0, excluded
        ]);
        let mut config = SimilarityConfig::new(Metric::Cosine);
        config.k = 50;
        let set = find_neighbors(0, &config, &m, None).unwrap();
        assert_eq!(set.neighbors.len(), 2);
    }

    #[test]
    fn neighbor_ties_break_by_ascending_index() {
        // users 1 and 2 tie at similarity 1.0; user 3 is weaker
        let m = matrix(vec![
            vec![(0, 4.0), (1, 2.0)],
            vec![(0, 4.0), (1, 2.0)],
            vec![(0, 4.0), (1, 2.0)],
            vec![(0, 4.0), (2, 4.0)],
        ]);
        let mut config = SimilarityConfig::new(Metric::Cosine);
        config.k = 2;
        let set = find_neighbors(0, &config, &m, None).unwrap();
        let users: Vec<usize> = set.neighbors.iter().map(|&(u, _)| u).collect();
        assert_eq!(users, vec![1, 2]);
    }

    #[test]
    fn no_positive_candidates_gives_empty_set() {
        let m = matrix(vec![vec![(0, 4.0)], vec![(5, 3.0)]]);
        let config = SimilarityConfig::new(Metric::Cosine);
        let set = find_neighbors(0, &config, &m, None).unwrap();
        assert!(set.neighbors.is_empty());
    }

    #[test]
    fn active_user_without_ratings_is_fatal() {
        let m = matrix(vec![vec![], vec![(0, 4.0)]]);
        let config = SimilarityConfig::new(Metric::Cosine);
        assert!(find_neighbors(0, &config, &m, None).is_err());
    }

    #[test]
    fn prediction_hand_example() {
        // single neighbor: sim 0.8, active mean 2, neighbor rating 3, mean 2.5
        let m = matrix(vec![
            vec![(0, 1.0), (1, 3.0)],
            vec![(2, 3.0), (3, 2.0)],
        ]);
        let neighbors = NeighborSet {
            active: 0,
            neighbors: vec![(1, 0.8)],
        };
        let pred = predict_rating(0, 2, &neighbors, &m).unwrap();
        assert!((pred.value - 2.5).abs() < TOL);
        assert!(!pred.fallback_used);
    }

    #[test]
    fn zero_deviation_neighbors_predict_the_active_mean() {
        // neighbor rates the song exactly at its own mean
        let m = matrix(vec![
            vec![(0, 1.0), (1, 3.0)],
            vec![(2, 2.0), (3, 2.0)],
        ]);
        let neighbors = NeighborSet {
            active: 0,
            neighbors: vec![(1, 0.9)],
        };
        let pred = predict_rating(0, 2, &neighbors, &m).unwrap();
        assert!((pred.value - 2.0).abs() < TOL);
    }

    #[test]
    fn no_contributing_neighbor_falls_back_to_active_mean() {
        let m = matrix(vec![
            vec![(0, 1.0), (1, 3.0)],
            vec![(2, 3.0)],
        ]);
        let neighbors = NeighborSet {
            active: 0,
            neighbors: vec![(1, 0.8)],
        };
        let pred = predict_rating(0, 5, &neighbors, &m).unwrap();
        assert!((pred.value - 2.0).abs() < TOL);
        assert!(pred.fallback_used);
    }

    #[test]
    fn single_neighbor_prediction_is_bounded_by_its_deviation() {
        let m = matrix(vec![
            vec![(0, 1.0), (1, 3.0)],
            vec![(2, 4.0), (3, 1.0)],
        ]);
        let neighbors = NeighborSet {
            active: 0,
            neighbors: vec![(1, 0.3)],
        };
        let mean_1 = m.user_mean(1).unwrap();
        for song in [2usize, 3] {
            let pred = predict_rating(0, song, &neighbors, &m).unwrap();
            let max_dev = (m.get(1, song).unwrap() - mean_1).abs();
            assert!((pred.value - 2.0).abs() <= max_dev + TOL);
        }
    }

    #[test]
    fn recommend_ranks_unrated_songs() {
        let m = matrix(vec![
            vec![(0, 4.0), (1, 2.0)],
            vec![(0, 4.0), (1, 2.0), (2, 4.0), (3, 0.5)],
        ]);
        let config = SimilarityConfig::new(Metric::Cosine);
        let recs = recommend(0, &config, &m, None, 2).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].0, 2);
        assert!(recs[0].1 >= recs[1].1);
    }
}
