//! Event and ratings file parsing, identity linking, and the event-schema
//! writer used for round trips and simulated leagues.
//!
//! Event CSV (UTF-8, header required):
//! `match_id,season,date,home_team,away_team,minute,event_type,side,player_id,player_name`
//! with `event_type` ∈ {starter, goal, own_goal, sub_on, sub_off, red_card,
//! final_whistle} and decimal minutes. Ratings CSV: `player_id,player_name,
//! overall`. Override CSV: `name,player_id`.
//!
//! Name matching is exact on a normalization (lowercase, diacritics
//! stripped, whitespace collapsed) plus user overrides; there is no fuzzy
//! matching, so join failures stay loud and fixable.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_model::{
    Dataset, Event, EventKind, Match, NameTable, PlayerId, RatingsTable, Side,
};
use crate::design::{segmentize, DesignError};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("schema error: missing column '{0}'")]
    Schema(String),
    #[error("parse error at line {line}: {reason}")]
    Parse { line: u64, reason: String },
    #[error("match {match_id}: {detail}")]
    Invariant { match_id: String, detail: String },
    #[error("duplicate player_id '{0}' in ratings file")]
    DuplicatePlayer(PlayerId),
    #[error("ambiguous link for '{name}': ratings candidates {candidates:?} and no override")]
    AmbiguousLink {
        name: String,
        candidates: Vec<PlayerId>,
    },
}

impl From<DesignError> for IngestError {
    fn from(e: DesignError) -> Self {
        match e {
            DesignError::Invariant { match_id, detail } => {
                IngestError::Invariant { match_id, detail }
            }
            DesignError::EmptyDataset => IngestError::Invariant {
                match_id: String::new(),
                detail: "no segments".into(),
            },
        }
    }
}

/// Outcome of joining event identities to ratings identities.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkReport {
    pub matched: usize,
    pub unmatched_players: Vec<PlayerId>,
    pub overrides_used: usize,
}

const EVENT_COLUMNS: [&str; 10] = [
    "match_id",
    "season",
    "date",
    "home_team",
    "away_team",
    "minute",
    "event_type",
    "side",
    "player_id",
    "player_name",
];

fn column_map(headers: &csv::StringRecord, required: &[&str]) -> Result<Vec<usize>, IngestError> {
    required
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h.trim() == *name)
                .ok_or_else(|| IngestError::Schema((*name).to_string()))
        })
        .collect()
}

fn parse_event_kind(s: &str, line: u64) -> Result<EventKind, IngestError> {
    match s {
        "starter" => Ok(EventKind::Starter),
        "goal" => Ok(EventKind::Goal),
        "own_goal" => Ok(EventKind::OwnGoal),
        "sub_on" => Ok(EventKind::SubOn),
        "sub_off" => Ok(EventKind::SubOff),
        "red_card" => Ok(EventKind::RedCard),
        "final_whistle" => Ok(EventKind::FinalWhistle),
        other => Err(IngestError::Parse {
            line,
            reason: format!("unknown event_type '{other}'"),
        }),
    }
}

fn parse_side(s: &str, line: u64) -> Result<Option<Side>, IngestError> {
    match s {
        "" => Ok(None),
        "home" => Ok(Some(Side::Home)),
        "away" => Ok(Some(Side::Away)),
        other => Err(IngestError::Parse {
            line,
            reason: format!("unknown side '{other}'"),
        }),
    }
}

/// Parse an event file into matches (one per match_id, events ordered,
/// invariants checked). Deterministic: matches come out sorted by
/// (date, match_id) and events by (minute, kind, player).
pub fn parse_events(path: impl AsRef<Path>) -> Result<Vec<Match>, IngestError> {
    let file = std::fs::File::open(path)?;
    parse_events_reader(file)
}

pub fn parse_events_reader<R: Read>(reader: R) -> Result<Vec<Match>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols = column_map(&headers, &EVENT_COLUMNS)?;
    let [c_mid, c_season, c_date, c_home, c_away, c_minute, c_type, c_side, c_pid, c_pname] =
        [
            cols[0], cols[1], cols[2], cols[3], cols[4], cols[5], cols[6], cols[7], cols[8],
            cols[9],
        ];

    struct Partial {
        season: String,
        date: NaiveDate,
        home_team: String,
        away_team: String,
        events: Vec<Event>,
    }
    let mut partials: BTreeMap<String, Partial> = BTreeMap::new();

    for record in rdr.records() {
        let record = record?;
        let line = record
            .position()
            .map(|p| p.line())
            .unwrap_or_default();
        let field = |i: usize| record.get(i).unwrap_or("").trim();

        let match_id = field(c_mid).to_string();
        if match_id.is_empty() {
            return Err(IngestError::Parse {
                line,
                reason: "empty match_id".into(),
            });
        }
        let date = NaiveDate::parse_from_str(field(c_date), "%Y-%m-%d").map_err(|e| {
            IngestError::Parse {
                line,
                reason: format!("bad date '{}': {e}", field(c_date)),
            }
        })?;
        let minute: f64 = field(c_minute).parse().map_err(|_| IngestError::Parse {
            line,
            reason: format!("bad minute '{}'", field(c_minute)),
        })?;
        if !minute.is_finite() || minute < 0.0 {
            return Err(IngestError::Parse {
                line,
                reason: format!("minute {minute} out of range"),
            });
        }
        let kind = parse_event_kind(field(c_type), line)?;
        let side = parse_side(field(c_side), line)?;
        if side.is_none() && kind != EventKind::FinalWhistle {
            return Err(IngestError::Parse {
                line,
                reason: format!("{} event requires a side", kind.as_str()),
            });
        }
        let player_id = match field(c_pid) {
            "" => None,
            s => Some(PlayerId::from(s)),
        };
        if player_id.is_none()
            && !matches!(kind, EventKind::FinalWhistle | EventKind::Goal | EventKind::OwnGoal)
        {
            return Err(IngestError::Parse {
                line,
                reason: format!("{} event requires a player_id", kind.as_str()),
            });
        }
        let player_name = match field(c_pname) {
            "" => None,
            s => Some(s.to_string()),
        };

        let entry = partials.entry(match_id.clone()).or_insert_with(|| Partial {
            season: field(c_season).to_string(),
            date,
            home_team: field(c_home).to_string(),
            away_team: field(c_away).to_string(),
            events: Vec::new(),
        });
        if entry.date != date
            || entry.season != field(c_season)
            || entry.home_team != field(c_home)
            || entry.away_team != field(c_away)
        {
            return Err(IngestError::Parse {
                line,
                reason: format!("inconsistent metadata for match {match_id}"),
            });
        }
        entry.events.push(Event {
            minute,
            kind,
            side,
            player_id,
            player_name,
        });
    }

    let mut matches = Vec::with_capacity(partials.len());
    for (match_id, mut p) in partials {
        p.events.sort_by(|a, b| {
            a.sort_key()
                .partial_cmp(&b.sort_key())
                .expect("minutes are finite")
        });
        let m = Match {
            match_id,
            season: p.season,
            date: p.date,
            home_team: p.home_team,
            away_team: p.away_team,
            events: p.events,
        };
        check_match_invariants(&m)?;
        matches.push(m);
    }
    matches.sort_by(|a, b| (a.date, &a.match_id).cmp(&(b.date, &b.match_id)));
    Ok(matches)
}

fn check_match_invariants(m: &Match) -> Result<(), IngestError> {
    let err = |detail: String| IngestError::Invariant {
        match_id: m.match_id.clone(),
        detail,
    };
    for side in [Side::Home, Side::Away] {
        let n = m.starters(side).len();
        if n != 11 {
            return Err(err(format!("{side} side has {n} starters, expected 11")));
        }
    }
    if m.events.last().map(|e| e.kind) != Some(EventKind::FinalWhistle) {
        return Err(err("missing final whistle".into()));
    }
    if m.events.first().map(|e| e.minute) != Some(0.0) {
        return Err(err("first event is not at minute 0".into()));
    }
    Ok(())
}

/// Serialize matches back to the event CSV schema (the inverse of
/// `parse_events`, and the emitter for simulated leagues).
pub fn write_events<W: Write>(matches: &[Match], writer: W) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(EVENT_COLUMNS)?;
    for m in matches {
        for e in &m.events {
            w.write_record([
                m.match_id.as_str(),
                m.season.as_str(),
                &m.date.format("%Y-%m-%d").to_string(),
                m.home_team.as_str(),
                m.away_team.as_str(),
                &format_minute(e.minute),
                e.kind.as_str(),
                e.side.map(|s| s.to_string()).as_deref().unwrap_or(""),
                e.player_id.as_ref().map(|p| p.as_str()).unwrap_or(""),
                e.player_name.as_deref().unwrap_or(""),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn format_minute(minute: f64) -> String {
    // Shortest exact decimal round-trip.
    let mut buf = ryu_format(minute);
    if buf.ends_with(".0") {
        buf.truncate(buf.len() - 2);
    }
    buf
}

fn ryu_format(v: f64) -> String {
    // `{}` on f64 already prints the shortest round-trip representation.
    format!("{v}")
}

/// Parse a ratings CSV into a table plus the display names it carries.
pub fn parse_ratings(
    path: impl AsRef<Path>,
    season: &str,
) -> Result<(RatingsTable, NameTable), IngestError> {
    let file = std::fs::File::open(path)?;
    parse_ratings_reader(file, season)
}

pub fn parse_ratings_reader<R: Read>(
    reader: R,
    season: &str,
) -> Result<(RatingsTable, NameTable), IngestError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols = column_map(&headers, &["player_id", "player_name", "overall"])?;
    let mut entries = BTreeMap::new();
    let mut names = NameTable::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or_default();
        let id = PlayerId::from(record.get(cols[0]).unwrap_or("").trim());
        if id.as_str().is_empty() {
            return Err(IngestError::Parse {
                line,
                reason: "empty player_id".into(),
            });
        }
        let name = record.get(cols[1]).unwrap_or("").trim().to_string();
        let overall: f64 =
            record
                .get(cols[2])
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| IngestError::Parse {
                    line,
                    reason: format!("bad overall '{}'", record.get(cols[2]).unwrap_or("")),
                })?;
        if !overall.is_finite() {
            return Err(IngestError::Parse {
                line,
                reason: format!("overall {overall} is not finite"),
            });
        }
        if entries.insert(id.clone(), overall).is_some() {
            return Err(IngestError::DuplicatePlayer(id));
        }
        if !name.is_empty() {
            names.insert(id, name);
        }
    }
    Ok((
        RatingsTable {
            season: season.to_string(),
            entries,
        },
        names,
    ))
}

/// Parse an override CSV (`name,player_id`) mapping display names to
/// ratings-side player ids.
pub fn parse_overrides(path: impl AsRef<Path>) -> Result<BTreeMap<String, PlayerId>, IngestError> {
    let file = std::fs::File::open(path)?;
    let mut rdr = csv::Reader::from_reader(file);
    let headers = rdr.headers()?.clone();
    let cols = column_map(&headers, &["name", "player_id"])?;
    let mut out = BTreeMap::new();
    for record in rdr.records() {
        let record = record?;
        let name = normalize_name(record.get(cols[0]).unwrap_or(""));
        let id = PlayerId::from(record.get(cols[1]).unwrap_or("").trim());
        out.insert(name, id);
    }
    Ok(out)
}

/// Lowercase, strip diacritics from Latin letters, collapse whitespace.
pub fn normalize_name(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    let mut last_space = true;
    for c in name.chars() {
        if c.is_whitespace() {
            if !last_space {
                out.push(' ');
                last_space = true;
            }
            continue;
        }
        last_space = false;
        match fold_char(c) {
            Some(folded) => {
                for f in folded.chars() {
                    out.extend(f.to_lowercase());
                }
            }
            None => out.extend(c.to_lowercase()),
        }
    }
    while out.ends_with(' ') {
        out.pop();
    }
    out
}

/// Map accented Latin characters to their base letters.
fn fold_char(c: char) -> Option<&'static str> {
    let folded = match c {
        'á' | 'à' | 'â' | 'ä' | 'ã' | 'å' | 'ā' | 'ă' | 'ą' => "a",
        'Á' | 'À' | 'Â' | 'Ä' | 'Ã' | 'Å' | 'Ā' | 'Ă' | 'Ą' => "A",
        'é' | 'è' | 'ê' | 'ë' | 'ē' | 'ė' | 'ę' | 'ě' => "e",
        'É' | 'È' | 'Ê' | 'Ë' | 'Ē' | 'Ė' | 'Ę' | 'Ě' => "E",
        'í' | 'ì' | 'î' | 'ï' | 'ī' | 'į' | 'ı' => "i",
        'Í' | 'Ì' | 'Î' | 'Ï' | 'Ī' | 'Į' | 'İ' => "I",
        'ó' | 'ò' | 'ô' | 'ö' | 'õ' | 'ø' | 'ō' | 'ő' => "o",
        'Ó' | 'Ò' | 'Ô' | 'Ö' | 'Õ' | 'Ø' | 'Ō' | 'Ő' => "O",
        'ú' | 'ù' | 'û' | 'ü' | 'ū' | 'ů' | 'ű' | 'ų' => "u",
        'Ú' | 'Ù' | 'Û' | 'Ü' | 'Ū' | 'Ů' | 'Ű' | 'Ų' => "U",
        'ý' | 'ÿ' => "y",
        'Ý' | 'Ÿ' => "Y",
        'ñ' | 'ń' | 'ň' => "n",
        'Ñ' | 'Ń' | 'Ň' => "N",
        'ç' | 'ć' | 'č' => "c",
        'Ç' | 'Ć' | 'Č' => "C",
        'š' | 'ś' | 'ş' | 'ș' => "s",
        'Š' | 'Ś' | 'Ş' | 'Ș' => "S",
        'ž' | 'ź' | 'ż' => "z",
        'Ž' | 'Ź' | 'Ż' => "Z",
        'ł' => "l",
        'Ł' => "L",
        'đ' | 'ď' => "d",
        'Đ' | 'Ď' => "D",
        'ť' | 'ț' | 'ţ' => "t",
        'Ť' | 'Ț' | 'Ţ' => "T",
        'ř' => "r",
        'Ř' => "R",
        'ğ' => "g",
        'Ğ' => "G",
        'æ' => "ae",
        'Æ' => "Ae",
        'œ' => "oe",
        'Œ' => "Oe",
        'ß' => "ss",
        _ => return None,
    };
    Some(folded)
}

/// Resolve every event player against the ratings table, build the registry
/// and segments, and report the join outcome. Players absent from ratings
/// stay in the dataset (they are later treated as average-rated).
pub fn link_players(
    matches: Vec<Match>,
    ratings: &RatingsTable,
    rating_names: &NameTable,
    overrides: &BTreeMap<String, PlayerId>,
) -> Result<(Dataset, LinkReport), IngestError> {
    // Distinct event players with their display names.
    let mut event_players: BTreeMap<PlayerId, Option<String>> = BTreeMap::new();
    for m in &matches {
        for e in &m.events {
            if let Some(pid) = &e.player_id {
                let slot = event_players.entry(pid.clone()).or_default();
                if slot.is_none() {
                    *slot = e.player_name.clone();
                }
            }
        }
    }

    // Normalized ratings-name index for the fallback join.
    let mut by_name: BTreeMap<String, Vec<PlayerId>> = BTreeMap::new();
    for (pid, name) in rating_names {
        if ratings.entries.contains_key(pid) {
            by_name
                .entry(normalize_name(name))
                .or_default()
                .push(pid.clone());
        }
    }

    let mut linked = BTreeMap::new();
    let mut unmatched = Vec::new();
    let mut matched = 0usize;
    let mut overrides_used = 0usize;

    for (pid, name) in &event_players {
        if let Some(&overall) = ratings.entries.get(pid) {
            linked.insert(pid.clone(), overall);
            matched += 1;
            continue;
        }
        let Some(name) = name else {
            unmatched.push(pid.clone());
            continue;
        };
        let norm = normalize_name(name);
        if let Some(target) = overrides.get(&norm) {
            if let Some(&overall) = ratings.entries.get(target) {
                linked.insert(pid.clone(), overall);
                matched += 1;
                overrides_used += 1;
                continue;
            }
        }
        match by_name.get(&norm).map(Vec::as_slice) {
            Some([single]) => {
                linked.insert(pid.clone(), ratings.entries[single]);
                matched += 1;
            }
            Some(candidates) if candidates.len() > 1 => {
                return Err(IngestError::AmbiguousLink {
                    name: name.clone(),
                    candidates: candidates.to_vec(),
                });
            }
            _ => unmatched.push(pid.clone()),
        }
    }

    let mut segments = Vec::new();
    for m in &matches {
        segments.extend(segmentize(m)?);
    }

    let names: NameTable = event_players
        .iter()
        .filter_map(|(pid, name)| name.clone().map(|n| (pid.clone(), n)))
        .collect();

    let dataset = Dataset::new(
        matches,
        segments,
        RatingsTable {
            season: ratings.season.clone(),
            entries: linked,
        },
        names,
    );
    let report = LinkReport {
        matched,
        unmatched_players: unmatched,
        overrides_used,
    };
    debug_assert_eq!(
        report.matched + report.unmatched_players.len(),
        event_players.len()
    );
    Ok((dataset, report))
}
