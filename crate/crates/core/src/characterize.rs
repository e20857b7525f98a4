//! Per-song listening coefficients and per-user gray-sheep coefficients.
//!
//! Every song gets a listening coefficient combining how many users play
//! it with how intensely they play it relative to their own averages; the
//! min-max normalized coefficient is averaged over each user's played
//! songs to give the User Playing Coefficient (UPC). Users whose plays sit
//! in the unpopular tail score low, so a low UPC marks gray-sheep degree.
//! UPC values are discretized into equal-width bins over [0, 1] before use
//! as a similarity attribute.

use std::fmt::Write as _;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Default UPC bin count.
pub const DEFAULT_BINS: usize = 300;

/// Play counts per (user, song) with per-user totals.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayMatrix {
    pub plays: SparseMatrix<u64>,
    user_totals: Vec<u64>,
    user_song_counts: Vec<usize>,
}

impl PlayMatrix {
    pub fn n_users(&self) -> usize {
        self.plays.n_rows()
    }

    pub fn n_songs(&self) -> usize {
        self.plays.n_cols()
    }

    /// Total plays of the user across all songs.
    pub fn user_total(&self, user: usize) -> u64 {
        self.user_totals[user]
    }

    /// TG_i: number of distinct songs the user has played.
    pub fn distinct_songs(&self, user: usize) -> usize {
        self.user_song_counts[user]
    }

    /// Mean plays per played song, `None` for users with no plays.
    pub fn mean_plays(&self, user: usize) -> Option<f64> {
        let tg = self.user_song_counts[user];
        if tg == 0 {
            None
        } else {
            Some(self.user_totals[user] as f64 / tg as f64)
        }
    }

    pub fn total_plays(&self) -> u64 {
        self.user_totals.iter().sum()
    }
}

/// Count plays per (user, song) over the whole corpus.
pub fn build_play_matrix(corpus: &Corpus) -> PlayMatrix {
    let mut plays = SparseMatrix::new(corpus.n_users(), corpus.n_songs());
    for event in corpus.events() {
        plays.add(event.user, event.song, 1u64);
    }
    let user_totals = (0..corpus.n_users())
        .map(|u| plays.row(u).map(|(_, p)| p).sum())
        .collect();
    let user_song_counts = (0..corpus.n_users()).map(|u| plays.row_len(u)).collect();
    PlayMatrix {
        plays,
        user_totals,
        user_song_counts,
    }
}

/// Per-song popularity coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct SongCoefficients {
    /// l_j, raw listening coefficient.
    pub raw: Vec<f64>,
    /// L_j, min-max normalized to [0, 1].
    pub normalized: Vec<f64>,
    /// TU_j, distinct listeners per song.
    pub listeners: Vec<usize>,
    /// Mean listeners per song.
    pub mean_listeners: f64,
    /// TP_j, total plays per song. Diagnostic only; no formula consumes it.
    pub total_plays: Vec<u64>,
}

/// Compute raw and normalized listening coefficients for every song.
///
/// The raw coefficient scales the song's listener count (relative to the
/// mean listeners per song) by the sum over listeners of the user's plays
/// of the song relative to that user's mean plays per song, normalized by
/// the grand mean of those ratios. When all raw coefficients are equal the
/// min-max normalization is degenerate and every normalized value is 0.
pub fn compute_listening_coefficients(plays: &PlayMatrix) -> Result<SongCoefficients> {
    let n_songs = plays.n_songs();
    if plays.total_plays() == 0 {
        return Err(Error::EmptyInput(
            "play matrix has no plays; listening coefficients undefined".into(),
        ));
    }

    let mut listeners = vec![0usize; n_songs];
    let mut total_plays = vec![0u64; n_songs];
    // z_j = sum over users of p_ij / mean_plays(i)
    let mut intensity = vec![0.0f64; n_songs];
    for user in 0..plays.n_users() {
        let Some(mean) = plays.mean_plays(user) else {
            continue;
        };
        for (song, p) in plays.plays.row(user) {
            listeners[song] += 1;
            total_plays[song] += p;
            intensity[song] += p as f64 / mean;
        }
    }

    let mean_listeners = listeners.iter().sum::<usize>() as f64 / n_songs as f64;
    let grand_intensity: f64 = intensity.iter().sum();
    let intensity_scale = grand_intensity / n_songs as f64;

    let raw: Vec<f64> = (0..n_songs)
        .map(|j| (listeners[j] as f64 / mean_listeners) * (intensity[j] / intensity_scale))
        .collect();

    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let normalized = if max > min {
        raw.iter().map(|l| (l - min) / (max - min)).collect()
    } else {
        vec![0.0; n_songs]
    };

    Ok(SongCoefficients {
        raw,
        normalized,
        listeners,
        mean_listeners,
        total_plays,
    })
}

/// One user's gray-sheep attribute.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserProfile {
    pub user: usize,
    /// Mean normalized listening coefficient over the user's played songs.
    pub upc: f64,
    /// Discretized bin index in [0, bins).
    pub bin: usize,
}

/// Compute UPC for every user with at least one play. The `bin` field is
/// left at 0 until [`discretize_upc`] fills it.
pub fn compute_upc(coeffs: &SongCoefficients, plays: &PlayMatrix) -> Vec<UserProfile> {
    let mut profiles = Vec::new();
    for user in 0..plays.n_users() {
        let tg = plays.distinct_songs(user);
        if tg == 0 {
            continue;
        }
        let sum: f64 = plays
            .plays
            .row(user)
            .map(|(song, _)| coeffs.normalized[song])
            .sum();
        profiles.push(UserProfile {
            user,
            upc: sum / tg as f64,
            bin: 0,
        });
    }
    profiles
}

/// Discretize UPC values into `bins` equal-width bins over [0, 1]:
/// bin = min(floor(upc * bins), bins - 1).
pub fn discretize_upc(profiles: &mut [UserProfile], bins: usize) -> Result<()> {
    if bins == 0 {
        return Err(Error::InvalidParameter("bin count must be >= 1".into()));
    }
    for p in profiles.iter_mut() {
        p.bin = ((p.upc * bins as f64).floor() as usize).min(bins - 1);
    }
    Ok(())
}

/// Profiles indexed by user, with the bin count they were discretized at.
#[derive(Debug, Clone, PartialEq)]
pub struct UserProfiles {
    by_user: Vec<Option<UserProfile>>,
    pub bins: usize,
}

impl UserProfiles {
    pub fn new(profiles: &[UserProfile], n_users: usize, bins: usize) -> UserProfiles {
        let mut by_user = vec![None; n_users];
        for p in profiles {
            by_user[p.user] = Some(*p);
        }
        UserProfiles { by_user, bins }
    }

    pub fn get(&self, user: usize) -> Option<&UserProfile> {
        self.by_user.get(user).and_then(|p| p.as_ref())
    }

    /// Attribute similarity between two users' bins: 1 minus the bin
    /// distance as a fraction of the full scale; a single bin degenerates
    /// to the constant 1.
    pub fn attribute_similarity(&self, a: usize, b: usize) -> Option<f64> {
        let pa = self.get(a)?;
        let pb = self.get(b)?;
        if self.bins <= 1 {
            return Some(1.0);
        }
        let dist = pa.bin.abs_diff(pb.bin) as f64 / (self.bins - 1) as f64;
        Some(1.0 - dist)
    }
}

/// Full characterization of a corpus: coefficients, UPC, discretization.
pub fn characterize_corpus(corpus: &Corpus, bins: usize) -> Result<(SongCoefficients, UserProfiles)> {
    let plays = build_play_matrix(corpus);
    let coeffs = compute_listening_coefficients(&plays)?;
    let mut profiles = compute_upc(&coeffs, &plays);
    discretize_upc(&mut profiles, bins)?;
    Ok((
        coeffs,
        UserProfiles::new(&profiles, corpus.n_users(), bins),
    ))
}

/// Export UPC values as TSV: user_id, upc, bin.
pub fn upc_tsv(corpus: &Corpus, profiles: &UserProfiles) -> String {
    let mut out = String::new();
    for user in 0..corpus.n_users() {
        if let Some(p) = profiles.get(user) {
            let _ = writeln!(out, "{}\t{:.12}\t{}", corpus.user_id(user), p.upc, p.bin);
        }
    }
    out
}
