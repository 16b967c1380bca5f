//! Canonical domain types shared by every other module.
//!
//! All types here are immutable after construction and safe to share across
//! threads. The unit of observation is the [`Segment`]: a maximal stretch of
//! a match during which no lineup change occurs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

/// Opaque stable player identifier; the join key between events and ratings.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PlayerId(pub String);

impl PlayerId {
    pub fn new(id: impl Into<String>) -> Self {
        PlayerId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PlayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for PlayerId {
    fn from(s: &str) -> Self {
        PlayerId(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Home,
    Away,
}

impl Side {
    pub fn opponent(self) -> Side {
        match self {
            Side::Home => Side::Away,
            Side::Away => Side::Home,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Home => f.write_str("home"),
            Side::Away => f.write_str("away"),
        }
    }
}

/// Event kinds recognized in play-by-play data.
///
/// The ordering defines the stable secondary sort for events at the same
/// minute: goals sort before lineup changes, so a goal stamped at minute `m`
/// always lands in the segment that closes at `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Starter,
    Goal,
    OwnGoal,
    SubOff,
    SubOn,
    RedCard,
    FinalWhistle,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::Starter => "starter",
            EventKind::Goal => "goal",
            EventKind::OwnGoal => "own_goal",
            EventKind::SubOff => "sub_off",
            EventKind::SubOn => "sub_on",
            EventKind::RedCard => "red_card",
            EventKind::FinalWhistle => "final_whistle",
        }
    }

    /// True when the event changes who is on the pitch.
    pub fn changes_lineup(&self) -> bool {
        matches!(
            self,
            EventKind::SubOff | EventKind::SubOn | EventKind::RedCard
        )
    }
}

/// A single timestamped match event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Decimal minutes from kickoff.
    pub minute: f64,
    pub kind: EventKind,
    /// Acting side. `None` only for the final whistle.
    pub side: Option<Side>,
    pub player_id: Option<PlayerId>,
    pub player_name: Option<String>,
}

impl Event {
    /// Sort key: minute, then kind (goals before lineup changes), then player.
    pub fn sort_key(&self) -> (f64, EventKind, Option<&PlayerId>) {
        (self.minute, self.kind, self.player_id.as_ref())
    }
}

/// One match: metadata plus the ordered event list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub match_id: String,
    pub season: String,
    pub date: NaiveDate,
    pub home_team: String,
    pub away_team: String,
    /// Sorted non-decreasing by minute; first at minute 0; last is the final whistle.
    pub events: Vec<Event>,
}

impl Match {
    /// Match length in minutes (the final-whistle stamp).
    pub fn length_minutes(&self) -> Option<f64> {
        self.events
            .iter()
            .rev()
            .find(|e| e.kind == EventKind::FinalWhistle)
            .map(|e| e.minute)
    }

    /// Final goal differential (home − away) implied by the goal events.
    /// Own goals credit the opposing side.
    pub fn final_goal_diff(&self) -> i64 {
        let mut diff = 0i64;
        for e in &self.events {
            let scoring_side = match e.kind {
                EventKind::Goal => e.side,
                EventKind::OwnGoal => e.side.map(Side::opponent),
                _ => None,
            };
            match scoring_side {
                Some(Side::Home) => diff += 1,
                Some(Side::Away) => diff -= 1,
                None => {}
            }
        }
        diff
    }

    pub fn starters(&self, side: Side) -> BTreeSet<PlayerId> {
        self.events
            .iter()
            .filter(|e| e.kind == EventKind::Starter && e.side == Some(side))
            .filter_map(|e| e.player_id.clone())
            .collect()
    }
}

/// A substitution-free stretch of one match; one design-matrix row.
///
/// Goal differentials are integers for real data. Fractional values occur
/// only in synthetic datasets generated with response rounding disabled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub match_id: String,
    pub home_lineup: BTreeSet<PlayerId>,
    pub away_lineup: BTreeSet<PlayerId>,
    /// Minutes, strictly positive.
    pub duration: f64,
    /// Home goals − away goals within the segment.
    pub goal_diff: f64,
    pub start_minute: f64,
}

impl Segment {
    pub fn players(&self) -> impl Iterator<Item = &PlayerId> {
        self.home_lineup.iter().chain(self.away_lineup.iter())
    }
}

/// Per-season map from player to raw overall rating (dimensionless, ~45–99).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RatingsTable {
    pub season: String,
    pub entries: BTreeMap<PlayerId, f64>,
}

impl RatingsTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &PlayerId) -> Option<f64> {
        self.entries.get(id).copied()
    }
}

/// Human-readable display names keyed by player id.
pub type NameTable = BTreeMap<PlayerId, String>;

/// The fully linked corpus handed to design/fit/eval: matches, their
/// segments, the ratings table, and the dense column registry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub matches: Vec<Match>,
    pub segments: Vec<Segment>,
    pub ratings: RatingsTable,
    /// PlayerId → dense column index, 0..P−1 with no gaps, sorted by id.
    pub registry: BTreeMap<PlayerId, usize>,
    /// Display names (may be empty when unknown).
    #[serde(default)]
    pub names: NameTable,
}

impl Dataset {
    /// Assemble a dataset, building the registry over every player that
    /// appears in any segment, sorted by id for determinism.
    pub fn new(
        matches: Vec<Match>,
        segments: Vec<Segment>,
        ratings: RatingsTable,
        names: NameTable,
    ) -> Self {
        let registry = build_registry(&segments);
        Dataset {
            matches,
            segments,
            ratings,
            registry,
            names,
        }
    }

    /// Number of registered players (design-matrix player columns).
    pub fn n_players(&self) -> usize {
        self.registry.len()
    }

    /// Segment row indices grouped per match, in match order.
    pub fn segments_by_match(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut by_match: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, s) in self.segments.iter().enumerate() {
            by_match.entry(s.match_id.as_str()).or_default().push(i);
        }
        by_match
    }

    pub fn match_by_id(&self, id: &str) -> Option<&Match> {
        self.matches.iter().find(|m| m.match_id == id)
    }
}

/// Deterministic registry: players sorted by id, indices 0..P−1.
pub fn build_registry(segments: &[Segment]) -> BTreeMap<PlayerId, usize> {
    let ids: BTreeSet<&PlayerId> = segments.iter().flat_map(|s| s.players()).collect();
    ids.into_iter()
        .cloned()
        .enumerate()
        .map(|(i, id)| (id, i))
        .collect()
}

/// One detected invariant violation. Violations are data, not errors:
/// validation never fails, it reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Violation {
    /// Segment durations of a match do not sum to the match length.
    DurationMismatch {
        match_id: String,
        segment_sum: f64,
        match_length: f64,
    },
    /// Segment goal differentials do not sum to the final margin.
    GoalDiffMismatch {
        match_id: String,
        segment_sum: f64,
        final_diff: f64,
    },
    /// A segment references a player with no registry index.
    UnregisteredPlayer { match_id: String, player: PlayerId },
    /// Registry indices are not a gapless 0..P−1 range.
    RegistryGap { detail: String },
    /// A lineup is outside the 7..=11 size window or the sides overlap.
    BadLineup { match_id: String, detail: String },
    /// A segment has non-positive duration.
    NonPositiveDuration { match_id: String, duration: f64 },
    /// Match event-stream invariant broken (ordering, starters, whistle).
    BadEventStream { match_id: String, detail: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DurationMismatch {
                match_id,
                segment_sum,
                match_length,
            } => write!(
                f,
                "{match_id}: segment durations sum to {segment_sum} but match length is {match_length}"
            ),
            Violation::GoalDiffMismatch {
                match_id,
                segment_sum,
                final_diff,
            } => write!(
                f,
                "{match_id}: segment goal diffs sum to {segment_sum} but final margin is {final_diff}"
            ),
            Violation::UnregisteredPlayer { match_id, player } => {
                write!(f, "{match_id}: player {player} missing from registry")
            }
            Violation::RegistryGap { detail } => write!(f, "registry: {detail}"),
            Violation::BadLineup { match_id, detail } => write!(f, "{match_id}: {detail}"),
            Violation::NonPositiveDuration { match_id, duration } => {
                write!(f, "{match_id}: segment duration {duration} is not positive")
            }
            Violation::BadEventStream { match_id, detail } => {
                write!(f, "{match_id}: {detail}")
            }
        }
    }
}

const MINUTE_EPS: f64 = 1e-6;

/// Check every dataset invariant and return the violations found.
/// An empty list means the dataset is valid. Never mutates.
pub fn validate_dataset(d: &Dataset) -> Vec<Violation> {
    let mut out = Vec::new();

    for m in &d.matches {
        validate_match_events(m, &mut out);
    }

    // Registry must be gapless 0..P−1 and cover every segment player.
    let p = d.registry.len();
    let mut seen = vec![false; p];
    for (id, &idx) in &d.registry {
        if idx >= p {
            out.push(Violation::RegistryGap {
                detail: format!("index {idx} for {id} out of range 0..{p}"),
            });
        } else if seen[idx] {
            out.push(Violation::RegistryGap {
                detail: format!("index {idx} assigned twice"),
            });
        } else {
            seen[idx] = true;
        }
    }

    for s in &d.segments {
        if s.duration <= 0.0 {
            out.push(Violation::NonPositiveDuration {
                match_id: s.match_id.clone(),
                duration: s.duration,
            });
        }
        if !s.home_lineup.is_disjoint(&s.away_lineup) {
            out.push(Violation::BadLineup {
                match_id: s.match_id.clone(),
                detail: "home and away lineups overlap".into(),
            });
        }
        for (side, lineup) in [("home", &s.home_lineup), ("away", &s.away_lineup)] {
            let n = lineup.len();
            if !(7..=11).contains(&n) {
                out.push(Violation::BadLineup {
                    match_id: s.match_id.clone(),
                    detail: format!("{side} lineup has {n} players (expected 7..=11)"),
                });
            }
        }
        for player in s.players() {
            if !d.registry.contains_key(player) {
                out.push(Violation::UnregisteredPlayer {
                    match_id: s.match_id.clone(),
                    player: player.clone(),
                });
            }
        }
    }

    // Per-match reconciliation: durations partition the clock, goal diffs
    // reconstruct the final margin.
    let by_match = d.segments_by_match();
    for m in &d.matches {
        let Some(rows) = by_match.get(m.match_id.as_str()) else {
            continue;
        };
        let dur_sum: f64 = rows.iter().map(|&i| d.segments[i].duration).sum();
        if let Some(len) = m.length_minutes() {
            if (dur_sum - len).abs() > MINUTE_EPS {
                out.push(Violation::DurationMismatch {
                    match_id: m.match_id.clone(),
                    segment_sum: dur_sum,
                    match_length: len,
                });
            }
        }
        let diff_sum: f64 = rows.iter().map(|&i| d.segments[i].goal_diff).sum();
        // Fractional responses come from unrounded simulation; there is no
        // event-level truth to check them against.
        let integral = rows
            .iter()
            .all(|&i| (d.segments[i].goal_diff - d.segments[i].goal_diff.round()).abs() < 1e-9);
        if integral {
            let final_diff = m.final_goal_diff() as f64;
            if (diff_sum - final_diff).abs() > 1e-9 {
                out.push(Violation::GoalDiffMismatch {
                    match_id: m.match_id.clone(),
                    segment_sum: diff_sum,
                    final_diff,
                });
            }
        }
    }

    out
}

fn validate_match_events(m: &Match, out: &mut Vec<Violation>) {
    let push = |out: &mut Vec<Violation>, detail: String| {
        out.push(Violation::BadEventStream {
            match_id: m.match_id.clone(),
            detail,
        })
    };

    if m.events.is_empty() {
        push(out, "no events".into());
        return;
    }
    if m.events[0].minute.abs() > MINUTE_EPS {
        push(
            out,
            format!("first event at minute {}, expected 0", m.events[0].minute),
        );
    }
    if m.events.last().unwrap().kind != EventKind::FinalWhistle {
        push(out, "last event is not the final whistle".into());
    }
    for w in m.events.windows(2) {
        if w[1].minute < w[0].minute - MINUTE_EPS {
            push(
                out,
                format!(
                    "events out of order: minute {} after {}",
                    w[1].minute, w[0].minute
                ),
            );
            break;
        }
    }
    for side in [Side::Home, Side::Away] {
        let n = m
            .events
            .iter()
            .filter(|e| e.kind == EventKind::Starter && e.side == Some(side))
            .count();
        if n != 11 {
            push(out, format!("{side} side has {n} starters, expected 11"));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::fixture_dataset;

    #[test]
    fn well_formed_fixture_has_no_violations() {
        let d = fixture_dataset();
        assert_eq!(validate_dataset(&d), Vec::new());
    }

    #[test]
    fn duration_mismatch_is_reported() {
        let mut d = fixture_dataset();
        // Shrink one segment: durations now sum short of the match length.
        let s = d
            .segments
            .iter_mut()
            .find(|s| s.match_id == "m1")
            .unwrap();
        s.duration -= 10.0;
        let violations = validate_dataset(&d);
        assert_eq!(violations.len(), 1);
        assert!(matches!(violations[0], Violation::DurationMismatch { .. }));
    }

    #[test]
    fn unregistered_player_is_reported() {
        let mut d = fixture_dataset();
        d.registry.remove(&PlayerId::from("h01"));
        let violations = validate_dataset(&d);
        assert!(violations
            .iter()
            .any(|v| matches!(v, Violation::UnregisteredPlayer { .. })));
        // Removing one index also leaves a registry gap.
        assert!(violations
            .iter()
            .any(|v| matches!(v, Violation::RegistryGap { .. })));
    }

    #[test]
    fn registry_is_sorted_by_player_id() {
        let d = fixture_dataset();
        let mut ids: Vec<&PlayerId> = d.registry.keys().collect();
        ids.sort();
        for (i, id) in ids.iter().enumerate() {
            assert_eq!(d.registry[*id], i);
        }
    }

    #[test]
    fn goal_diff_mismatch_is_reported() {
        let mut d = fixture_dataset();
        let s = d
            .segments
            .iter_mut()
            .find(|s| s.match_id == "m1")
            .unwrap();
        s.goal_diff += 1.0;
        let violations = validate_dataset(&d);
        assert!(violations
            .iter()
            .any(|v| matches!(v, Violation::GoalDiffMismatch { .. })));
    }
}
