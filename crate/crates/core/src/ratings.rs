//! Implicit ratings from session counts or raw play counts.
//!
//! A user's per-song frequencies blend the proportion of sessions the song
//! started with the proportion of non-start plays, weighted by alpha. The
//! frequencies are then mapped to ratings in (0, 4] by a percentile
//! transform: songs are ranked by descending frequency, distinct values
//! share a rank, and the rating for rank k is 4 times one minus the sum of
//! the distinct frequencies above rank k. The top-ranked song is always
//! rated exactly 4, and tied frequencies receive identical ratings.

use std::fmt::Write as _;

use crate::characterize::PlayMatrix;
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::sessions::SessionCounts;
use crate::sparse::SparseMatrix;

/// Blended per-user song frequencies; each rated user's row sums to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyTable {
    pub freq: SparseMatrix<f64>,
    pub alpha: f64,
}

/// Sparse user-by-song implicit ratings, each in (0, 4].
#[derive(Debug, Clone, PartialEq)]
pub struct RatingMatrix {
    rows: Vec<Vec<(usize, f64)>>,
    n_songs: usize,
    means: Vec<f64>,
    norms: Vec<f64>,
}

impl RatingMatrix {
    /// Build from per-user entry lists; rows are sorted by song index and
    /// per-user means and Euclidean norms are precomputed.
    pub fn from_rows(mut rows: Vec<Vec<(usize, f64)>>, n_songs: usize) -> RatingMatrix {
        for row in &mut rows {
            row.sort_by_key(|&(song, _)| song);
        }
        let means = rows
            .iter()
            .map(|row| {
                if row.is_empty() {
                    0.0
                } else {
                    row.iter().map(|&(_, r)| r).sum::<f64>() / row.len() as f64
                }
            })
            .collect();
        let norms = rows
            .iter()
            .map(|row| row.iter().map(|&(_, r)| r * r).sum::<f64>().sqrt())
            .collect();
        RatingMatrix {
            rows,
            n_songs,
            means,
            norms,
        }
    }

    pub fn n_users(&self) -> usize {
        self.rows.len()
    }

    pub fn n_songs(&self) -> usize {
        self.n_songs
    }

    pub fn n_ratings(&self) -> usize {
        self.rows.iter().map(|r| r.len()).sum()
    }

    pub fn get(&self, user: usize, song: usize) -> Option<f64> {
        let row = &self.rows[user];
        row.binary_search_by_key(&song, |&(s, _)| s)
            .ok()
            .map(|i| row[i].1)
    }

    /// One user's ratings, ascending by song index.
    pub fn user_ratings(&self, user: usize) -> &[(usize, f64)] {
        &self.rows[user]
    }

    /// Mean rating of the user, `None` if the user has no ratings.
    pub fn user_mean(&self, user: usize) -> Option<f64> {
        if self.rows[user].is_empty() {
            None
        } else {
            Some(self.means[user])
        }
    }

    pub fn user_norm(&self, user: usize) -> f64 {
        self.norms[user]
    }

    /// Mean over all stored ratings, 0 if the matrix is empty.
    pub fn global_mean(&self) -> f64 {
        let n = self.n_ratings();
        if n == 0 {
            return 0.0;
        }
        self.rows
            .iter()
            .flat_map(|r| r.iter().map(|&(_, v)| v))
            .sum::<f64>()
            / n as f64
    }

    /// All rated (user, song, rating) triples, user-major then song order.
    pub fn rated_pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(u, row)| row.iter().map(move |&(s, r)| (u, s, r)))
    }

    /// Copy of this matrix without the given (user, song) pairs.
    pub fn without_pairs(&self, held_out: &std::collections::HashSet<(usize, usize)>) -> Self {
        let rows = self
            .rows
            .iter()
            .enumerate()
            .map(|(u, row)| {
                row.iter()
                    .copied()
                    .filter(|&(s, _)| !held_out.contains(&(u, s)))
                    .collect()
            })
            .collect();
        RatingMatrix::from_rows(rows, self.n_songs)
    }

    /// Export as sparse TSV: user_id, song_id, rating.
    pub fn to_tsv(&self, corpus: &Corpus) -> String {
        let mut out = String::new();
        for (u, s, r) in self.rated_pairs() {
            let _ = writeln!(out, "{}\t{}\t{:.12}", corpus.user_id(u), corpus.song_id(s), r);
        }
        out
    }
}

/// Blend start and non-start proportions into per-user frequencies.
///
/// When a user's non-start total is zero the whole weight collapses onto
/// the start term (and symmetrically for a zero start total), preserving
/// the per-user sum-to-one property the rating transform depends on. Users
/// with no plays at all get no entries. Only positive frequencies are
/// stored.
pub fn compute_frequency(counts: &SessionCounts, alpha: f64) -> Result<FrequencyTable> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!(
            "alpha must be in [0, 1], got {alpha}"
        )));
    }
    let n_users = counts.n_users();
    let n_songs = counts.n_songs();
    let mut freq = SparseMatrix::new(n_users, n_songs);
    for user in 0..n_users {
        let sum_s: u64 = counts.starts.row(user).map(|(_, v)| v).sum();
        let sum_ns: u64 = counts.non_starts.row(user).map(|(_, v)| v).sum();
        if sum_s == 0 && sum_ns == 0 {
            continue;
        }
        // Effective weights after degenerate-denominator collapse.
        let (w_s, w_ns) = match (sum_s, sum_ns) {
            (_, 0) => (1.0, 0.0),
            (0, _) => (0.0, 1.0),
            _ => (alpha, 1.0 - alpha),
        };
        let mut row: std::collections::BTreeMap<usize, f64> = std::collections::BTreeMap::new();
        if w_s > 0.0 {
            for (song, s) in counts.starts.row(user) {
                *row.entry(song).or_insert(0.0) += w_s * s as f64 / sum_s as f64;
            }
        }
        if w_ns > 0.0 {
            for (song, ns) in counts.non_starts.row(user) {
                *row.entry(song).or_insert(0.0) += w_ns * ns as f64 / sum_ns as f64;
            }
        }
        for (song, f) in row {
            if f > 0.0 {
                freq.insert(user, song, f);
            }
        }
    }
    Ok(FrequencyTable { freq, alpha })
}

/// Percentile-transform a frequency table into ratings.
pub fn compute_ratings(freq: &FrequencyTable) -> RatingMatrix {
    let per_user = (0..freq.freq.n_rows()).map(|u| freq.freq.row(u).collect::<Vec<_>>());
    percentile_ratings(per_user, freq.freq.n_rows(), freq.freq.n_cols())
}

/// Ratings from raw play counts: per-user frequencies are play-count
/// proportions, then the same percentile transform applies.
pub fn compute_playcount_ratings(plays: &PlayMatrix) -> RatingMatrix {
    let per_user = (0..plays.n_users()).map(|u| {
        let total = plays.user_total(u);
        plays
            .plays
            .row(u)
            .map(|(song, p)| (song, p as f64 / total as f64))
            .collect::<Vec<_>>()
    });
    percentile_ratings(per_user, plays.n_users(), plays.n_songs())
}

fn percentile_ratings<I>(per_user_freqs: I, n_users: usize, n_songs: usize) -> RatingMatrix
where
    I: Iterator<Item = Vec<(usize, f64)>>,
{
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_users];
    for (user, mut entries) in per_user_freqs.enumerate() {
        entries.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let row = &mut rows[user];
        let mut prefix = 0.0;
        let mut idx = 0;
        while idx < entries.len() {
            let value = entries[idx].1;
            let rating = 4.0 * (1.0 - prefix);
            // Tied frequencies share a rank; exact float equality is
            // intended, both sides come from identical integer arithmetic.
            while idx < entries.len() && entries[idx].1 == value {
                row.push((entries[idx].0, rating));
                idx += 1;
            }
            prefix += value;
        }
    }
    RatingMatrix::from_rows(rows, n_songs)
}
