//! Play-log parsing and the canonical in-memory corpus.
//!
//! A corpus holds one play event per log row, sorted per user by timestamp,
//! with user and song string ids mapped to dense contiguous indices. The
//! dense indices are assigned in order of first appearance in the sorted
//! event stream, so a corpus serialized to `simple_tsv` and re-parsed
//! round-trips exactly, indices included.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Earliest accepted play timestamp: 1990-01-01T00:00:00Z.
pub const MIN_TIMESTAMP: i64 = 631_152_000;
/// Latest accepted play timestamp: 2100-01-01T00:00:00Z.
pub const MAX_TIMESTAMP: i64 = 4_102_444_800;

/// One play of one song by one user, with dense indices into the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlayEvent {
    pub user: usize,
    pub song: usize,
    /// Unix seconds, UTC.
    pub timestamp: i64,
}

/// A raw log row before index assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlayRecord {
    pub user_id: String,
    pub song_id: String,
    pub timestamp: i64,
}

/// Supported play-log layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogFormat {
    /// 6 tab-separated columns: user-id, ISO-8601 timestamp, artist-mbid,
    /// artist-name, track-mbid, track-name. The song key is the track mbid
    /// when present, otherwise artist-name + "\t" + track-name.
    Lastfm360k,
    /// 3 tab-separated columns: user_id, song_id, unix_seconds. This is the
    /// canonical interchange form a corpus serializes to.
    SimpleTsv,
}

impl LogFormat {
    pub fn parse_name(name: &str) -> Option<LogFormat> {
        match name {
            "lastfm360k" | "lastfm" => Some(LogFormat::Lastfm360k),
            "simple" | "simple_tsv" => Some(LogFormat::SimpleTsv),
            _ => None,
        }
    }
}

/// Counters reported by a parse run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestStats {
    pub valid_rows: usize,
    pub malformed_rows: usize,
}

/// Parsing knobs.
#[derive(Debug, Clone, Copy)]
pub struct ParseOptions {
    /// Abort when more than this fraction of non-empty rows is malformed.
    pub max_malformed_fraction: f64,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            max_malformed_fraction: 0.10,
        }
    }
}

/// Immutable event store shared by every downstream stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    events: Vec<PlayEvent>,
    user_ids: Vec<String>,
    song_ids: Vec<String>,
    user_index: HashMap<String, usize>,
    song_index: HashMap<String, usize>,
}

impl Corpus {
    /// Canonicalize raw records: stable-sort by (user_id, timestamp) and
    /// assign dense indices in first-appearance order of the sorted stream.
    /// Rows with equal (user, timestamp) keep their input order.
    pub fn from_records(mut records: Vec<PlayRecord>) -> Corpus {
        records.sort_by(|a, b| {
            a.user_id
                .cmp(&b.user_id)
                .then(a.timestamp.cmp(&b.timestamp))
        });

        let mut user_index = HashMap::new();
        let mut song_index = HashMap::new();
        let mut user_ids = Vec::new();
        let mut song_ids = Vec::new();
        let mut events = Vec::with_capacity(records.len());

        for rec in records {
            let user = *user_index.entry(rec.user_id.clone()).or_insert_with(|| {
                user_ids.push(rec.user_id.clone());
                user_ids.len() - 1
            });
            let song = *song_index.entry(rec.song_id.clone()).or_insert_with(|| {
                song_ids.push(rec.song_id.clone());
                song_ids.len() - 1
            });
            events.push(PlayEvent {
                user,
                song,
                timestamp: rec.timestamp,
            });
        }

        Corpus {
            events,
            user_ids,
            song_ids,
            user_index,
            song_index,
        }
    }

    pub fn events(&self) -> &[PlayEvent] {
        &self.events
    }

    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn n_songs(&self) -> usize {
        self.song_ids.len()
    }

    pub fn user_id(&self, index: usize) -> &str {
        &self.user_ids[index]
    }

    pub fn song_id(&self, index: usize) -> &str {
        &self.song_ids[index]
    }

    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }

    pub fn user_index(&self, id: &str) -> Option<usize> {
        self.user_index.get(id).copied()
    }

    pub fn song_index(&self, id: &str) -> Option<usize> {
        self.song_index.get(id).copied()
    }

    /// Events of one user as a contiguous slice (events are grouped per user).
    pub fn user_events(&self, user: usize) -> &[PlayEvent] {
        let start = self.events.partition_point(|e| e.user < user);
        let end = self.events.partition_point(|e| e.user <= user);
        &self.events[start..end]
    }

    /// A corpus with the same id/index tables but only the events admitted
    /// by `keep`. Used by the evaluation harness to restrict the event
    /// stream to training pairs without disturbing dense indices.
    pub fn filter_events<F: Fn(&PlayEvent) -> bool>(&self, keep: F) -> Corpus {
        Corpus {
            events: self.events.iter().copied().filter(|e| keep(e)).collect(),
            user_ids: self.user_ids.clone(),
            song_ids: self.song_ids.clone(),
            user_index: self.user_index.clone(),
            song_index: self.song_index.clone(),
        }
    }

    /// Serialize to the simple_tsv interchange form, one event per line in
    /// canonical order. `Corpus::from_records(parse(serialize(c))) == c`.
    pub fn to_simple_tsv(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            let _ = writeln!(
                out,
                "{}\t{}\t{}",
                self.user_ids[e.user], self.song_ids[e.song], e.timestamp
            );
        }
        out
    }
}

fn validate_record(rec: &PlayRecord) -> std::result::Result<(), String> {
    if rec.user_id.is_empty() {
        return Err("empty user id".into());
    }
    if rec.song_id.is_empty() {
        return Err("empty song id".into());
    }
    if rec.timestamp < MIN_TIMESTAMP || rec.timestamp > MAX_TIMESTAMP {
        return Err(format!("timestamp {} outside 1990-2100", rec.timestamp));
    }
    Ok(())
}

fn parse_line(line: &str, format: LogFormat) -> std::result::Result<PlayRecord, String> {
    let cols: Vec<&str> = line.split('\t').collect();
    let rec = match format {
        LogFormat::SimpleTsv => {
            if cols.len() != 3 {
                return Err(format!("expected 3 columns, got {}", cols.len()));
            }
            let timestamp: i64 = cols[2]
                .trim()
                .parse()
                .map_err(|_| format!("bad unix timestamp '{}'", cols[2]))?;
            PlayRecord {
                user_id: cols[0].to_string(),
                song_id: cols[1].to_string(),
                timestamp,
            }
        }
        LogFormat::Lastfm360k => {
            if cols.len() != 6 {
                return Err(format!("expected 6 columns, got {}", cols.len()));
            }
            let timestamp = chrono::DateTime::parse_from_rfc3339(cols[1])
                .map_err(|e| format!("bad timestamp '{}': {e}", cols[1]))?
                .timestamp();
            // Track mbids are frequently missing in the public dump; fall
            // back to artist + track name as a stable song key.
            let song_id = if cols[4].is_empty() {
                format!("{}\t{}", cols[3], cols[5])
            } else {
                cols[4].to_string()
            };
            PlayRecord {
                user_id: cols[0].to_string(),
                song_id,
                timestamp,
            }
        }
    };
    validate_record(&rec)?;
    Ok(rec)
}

/// Parse a play-log file into a corpus.
///
/// Malformed rows are skipped and counted; the parse fails only when the
/// malformed fraction exceeds `opts.max_malformed_fraction`. Blank lines
/// are ignored entirely.
pub fn parse_playlog(
    path: &Path,
    format: LogFormat,
    opts: &ParseOptions,
) -> Result<(Corpus, IngestStats)> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let (corpus, stats) = parse_playlog_str(&text, format);
    let total = stats.valid_rows + stats.malformed_rows;
    if total > 0 && stats.malformed_rows as f64 > opts.max_malformed_fraction * total as f64 {
        return Err(Error::TooManyMalformedRows {
            path: path.to_path_buf(),
            malformed: stats.malformed_rows,
            total,
            limit: opts.max_malformed_fraction * 100.0,
        });
    }
    Ok((corpus, stats))
}

/// Parse play-log text; malformed rows are skipped and counted.
pub fn parse_playlog_str(text: &str, format: LogFormat) -> (Corpus, IngestStats) {
    let mut records = Vec::new();
    let mut stats = IngestStats::default();
    for line in text.lines() {
        if line.is_empty() {
            continue;
        }
        match parse_line(line, format) {
            Ok(rec) => {
                records.push(rec);
                stats.valid_rows += 1;
            }
            Err(_) => stats.malformed_rows += 1,
        }
    }
    (Corpus::from_records(records), stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture_corpus() -> Corpus {
        // u1 plays s1 at t0, s2 at t0+60s; u2 plays s1 at t0.
        let t0 = 1_200_000_000;
        let (corpus, stats) = parse_playlog_str(
            &format!("u1\ts1\t{t0}\nu1\ts2\t{}\nu2\ts1\t{t0}\n", t0 + 60),
            LogFormat::SimpleTsv,
        );
        assert_eq!(stats.valid_rows, 3);
        corpus
    }

    #[test]
    fn empty_input_gives_empty_corpus() {
        let (corpus, stats) = parse_playlog_str("", LogFormat::SimpleTsv);
        assert_eq!(corpus.events().len(), 0);
        assert_eq!(corpus.n_users(), 0);
        assert_eq!(corpus.n_songs(), 0);
        assert_eq!(stats, IngestStats::default());
    }

    #[test]
    fn three_line_fixture_has_two_users_two_songs() {
        let corpus = fixture_corpus();
        assert_eq!(corpus.events().len(), 3);
        assert_eq!(corpus.n_users(), 2);
        assert_eq!(corpus.n_songs(), 2);
        assert_eq!(corpus.user_events(0).len(), 2);
        assert_eq!(corpus.user_events(1).len(), 1);
    }

    #[test]
    fn simple_tsv_round_trips_exactly() {
        let corpus = fixture_corpus();
        let (again, _) = parse_playlog_str(&corpus.to_simple_tsv(), LogFormat::SimpleTsv);
        assert_eq!(corpus, again);
    }

    #[test]
    fn indices_are_a_bijection() {
        let corpus = fixture_corpus();
        for i in 0..corpus.n_users() {
            assert_eq!(corpus.user_index(corpus.user_id(i)), Some(i));
        }
        for j in 0..corpus.n_songs() {
            assert_eq!(corpus.song_index(corpus.song_id(j)), Some(j));
        }
    }

    #[test]
    fn malformed_rows_are_skipped_and_counted() {
        let text = "u1\ts1\t1200000000\nnot-a-row\nu1\ts2\t1200000100\n";
        let (corpus, stats) = parse_playlog_str(text, LogFormat::SimpleTsv);
        assert_eq!(stats.valid_rows, 2);
        assert_eq!(stats.malformed_rows, 1);
        assert_eq!(corpus.events().len(), 2);
    }

    #[test]
    fn malformed_fraction_over_limit_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.tsv");
        std::fs::write(&path, "u1\ts1\t1200000000\nbad\nbad\nbad\n").unwrap();
        let err = parse_playlog(&path, LogFormat::SimpleTsv, &ParseOptions::default());
        assert!(matches!(err, Err(Error::TooManyMalformedRows { .. })));
    }

    #[test]
    fn out_of_range_timestamps_are_malformed() {
        let text = "u1\ts1\t100\nu1\ts1\t1200000000\n";
        let (_, stats) = parse_playlog_str(text, LogFormat::SimpleTsv);
        assert_eq!(stats.malformed_rows, 1);
        assert_eq!(stats.valid_rows, 1);
    }

    #[test]
    fn lastfm_rows_use_track_mbid_or_name_fallback() {
        let text = concat!(
            "user_000001\t2009-05-04T23:08:57Z\tamb1\tThe Artist\ttmb1\tSong One\n",
            "user_000001\t2009-05-04T23:12:57Z\tamb1\tThe Artist\t\tSong Two\n",
        );
        let (corpus, stats) = parse_playlog_str(text, LogFormat::Lastfm360k);
        assert_eq!(stats.valid_rows, 2);
        assert_eq!(corpus.n_songs(), 2);
        assert!(corpus.song_index("tmb1").is_some());
        assert!(corpus.song_index("The Artist\tSong Two").is_some());
    }

    #[test]
    fn equal_user_timestamp_rows_keep_file_order() {
        let t0 = 1_200_000_000;
        let text = format!("u1\tsB\t{t0}\nu1\tsA\t{t0}\n");
        let (corpus, _) = parse_playlog_str(&text, LogFormat::SimpleTsv);
        // sB appears first in the file, so it keeps the first dense index.
        assert_eq!(corpus.song_id(corpus.events()[0].song), "sB");
        assert_eq!(corpus.song_id(corpus.events()[1].song), "sA");
    }
}
