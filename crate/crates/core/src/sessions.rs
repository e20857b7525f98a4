//! Session segmentation and per-(user, song) start/non-start counting.

use std::fmt::Write as _;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Default inactivity threshold marking a session boundary: 15 minutes.
pub const DEFAULT_GAP_SECS: i64 = 15 * 60;

/// A maximal run of one user's plays with no inter-play gap exceeding the
/// threshold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub user: usize,
    /// Song dense indices in play order; never empty.
    pub plays: Vec<usize>,
    pub start_time: i64,
    pub end_time: i64,
}

/// Start and non-start play counts per (user, song).
#[derive(Debug, Clone, PartialEq)]
pub struct SessionCounts {
    /// s_ij: sessions of user i whose first play is song j.
    pub starts: SparseMatrix<u64>,
    /// ns_ij: plays of song j by user i at any non-first position.
    pub non_starts: SparseMatrix<u64>,
}

impl SessionCounts {
    pub fn n_users(&self) -> usize {
        self.starts.n_rows()
    }

    pub fn n_songs(&self) -> usize {
        self.starts.n_cols()
    }
}

/// Split every user's play stream into sessions.
///
/// A new session begins when the gap between consecutive plays is strictly
/// greater than `gap_secs`; a gap of exactly the threshold keeps the plays
/// in one session. Pass `i64::MAX` for an effectively unbounded gap.
pub fn sessionize(corpus: &Corpus, gap_secs: i64) -> Result<Vec<Session>> {
    if gap_secs < 0 {
        return Err(Error::InvalidParameter(format!(
            "session gap must be >= 0 seconds, got {gap_secs}"
        )));
    }
    let mut sessions = Vec::new();
    for user in 0..corpus.n_users() {
        let events = corpus.user_events(user);
        let mut current: Option<Session> = None;
        for event in events {
            match current.as_mut() {
                Some(session) if event.timestamp - session.end_time <= gap_secs => {
                    session.plays.push(event.song);
                    session.end_time = event.timestamp;
                }
                _ => {
                    if let Some(done) = current.take() {
                        sessions.push(done);
                    }
                    current = Some(Session {
                        user,
                        plays: vec![event.song],
                        start_time: event.timestamp,
                        end_time: event.timestamp,
                    });
                }
            }
        }
        if let Some(done) = current.take() {
            sessions.push(done);
        }
    }
    Ok(sessions)
}

/// Count session-start and non-start plays per (user, song).
///
/// Repeat plays of a song at non-first positions each count once.
pub fn count_session_positions(
    sessions: &[Session],
    n_users: usize,
    n_songs: usize,
) -> SessionCounts {
    let mut starts = SparseMatrix::new(n_users, n_songs);
    let mut non_starts = SparseMatrix::new(n_users, n_songs);
    for session in sessions {
        starts.add(session.user, session.plays[0], 1u64);
        for &song in &session.plays[1..] {
            non_starts.add(session.user, song, 1u64);
        }
    }
    SessionCounts { starts, non_starts }
}

/// Per-user session diagnostics as CSV: user_id, n_sessions, mean_length.
pub fn session_summary_csv(corpus: &Corpus, sessions: &[Session]) -> String {
    let mut count = vec![0usize; corpus.n_users()];
    let mut plays = vec![0usize; corpus.n_users()];
    for s in sessions {
        count[s.user] += 1;
        plays[s.user] += s.plays.len();
    }
    let mut out = String::from("user,n_sessions,mean_length\n");
    for user in 0..corpus.n_users() {
        if count[user] == 0 {
            continue;
        }
        let _ = writeln!(
            out,
            "{},{},{:.4}",
            corpus.user_id(user),
            count[user],
            plays[user] as f64 / count[user] as f64
        );
    }
    out
}
