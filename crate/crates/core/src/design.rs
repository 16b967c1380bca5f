//! From domain objects to regression objects: matches → segments, a dataset
//! → the signed sparse design matrix with responses and durations, and raw
//! ratings → a centered rating vector.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_model::{Dataset, Event, EventKind, Match, PlayerId, Segment, Side};
use crate::linalg::SparseRowMatrix;

#[derive(Debug, Error)]
pub enum DesignError {
    #[error("{match_id}: {detail}")]
    Invariant { match_id: String, detail: String },
    #[error("dataset has no segments")]
    EmptyDataset,
}

const MINUTE_EPS: f64 = 1e-9;

/// Segment-level regression system: sparse signed matrix, responses, and
/// durations in 90-minute units. Rows align 1:1 with the segments they were
/// built from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignSystem {
    pub x: SparseRowMatrix,
    /// Goal differentials per segment.
    pub y: DVector<f64>,
    /// Durations in 90-minute units, all > 0.
    pub t: DVector<f64>,
    pub col_index: BTreeMap<PlayerId, usize>,
    /// Index of the all-ones home-advantage column, when present (always last).
    pub home_col: Option<usize>,
    /// Match id of each row, for game-level aggregation.
    pub row_match: Vec<String>,
}

impl DesignSystem {
    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_players(&self) -> usize {
        self.col_index.len()
    }

    pub fn n_cols(&self) -> usize {
        self.x.ncols()
    }
}

/// Centered FIFA-style ratings aligned with the registry: mean zero over
/// rated players, exactly zero for unrated players.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CenteredRatings {
    pub r: DVector<f64>,
    pub rated_mask: Vec<bool>,
}

impl CenteredRatings {
    pub fn zeros(n: usize) -> Self {
        CenteredRatings {
            r: DVector::zeros(n),
            rated_mask: vec![false; n],
        }
    }

    pub fn n_rated(&self) -> usize {
        self.rated_mask.iter().filter(|&&m| m).count()
    }
}

struct LineupState {
    home: BTreeSet<PlayerId>,
    away: BTreeSet<PlayerId>,
}

impl LineupState {
    fn side_mut(&mut self, side: Side) -> &mut BTreeSet<PlayerId> {
        match side {
            Side::Home => &mut self.home,
            Side::Away => &mut self.away,
        }
    }
}

/// Split a match into substitution-free segments.
///
/// Boundary rule: an event at minute `m` belongs to the segment that ends at
/// `m` (the lineup on the pitch before the change produced it). Zero-duration
/// stretches are merged into the following segment; a zero-duration tail is
/// merged into the previous one.
pub fn segmentize(m: &Match) -> Result<Vec<Segment>, DesignError> {
    let err = |detail: String| DesignError::Invariant {
        match_id: m.match_id.clone(),
        detail,
    };

    let mut events: Vec<&Event> = m.events.iter().collect();
    events.sort_by(|a, b| {
        a.sort_key()
            .partial_cmp(&b.sort_key())
            .expect("event minutes are finite")
    });

    let mut state = LineupState {
        home: m.starters(Side::Home),
        away: m.starters(Side::Away),
    };
    for (side, lineup) in [(Side::Home, &state.home), (Side::Away, &state.away)] {
        if lineup.len() != 11 {
            return Err(err(format!(
                "{side} side has {} starters, expected 11",
                lineup.len()
            )));
        }
    }

    let mut segments: Vec<Segment> = Vec::new();
    let mut cursor = 0.0f64;
    let mut pending_diff = 0.0f64;

    for e in &events {
        match e.kind {
            EventKind::Starter => {}
            EventKind::Goal | EventKind::OwnGoal => {
                let side = e
                    .side
                    .ok_or_else(|| err("goal event without a side".into()))?;
                let scoring = if e.kind == EventKind::OwnGoal {
                    side.opponent()
                } else {
                    side
                };
                pending_diff += match scoring {
                    Side::Home => 1.0,
                    Side::Away => -1.0,
                };
            }
            EventKind::SubOff | EventKind::SubOn | EventKind::RedCard | EventKind::FinalWhistle => {
                let duration = e.minute - cursor;
                if duration > MINUTE_EPS {
                    segments.push(Segment {
                        match_id: m.match_id.clone(),
                        home_lineup: state.home.clone(),
                        away_lineup: state.away.clone(),
                        duration,
                        goal_diff: pending_diff,
                        start_minute: cursor,
                    });
                    cursor = e.minute;
                    pending_diff = 0.0;
                }
                // duration ≈ 0: keep accumulating into the next segment.

                if e.kind == EventKind::FinalWhistle {
                    if pending_diff != 0.0 || e.minute - cursor > MINUTE_EPS {
                        // Zero-duration tail: fold into the previous segment.
                        match segments.last_mut() {
                            Some(last) => last.goal_diff += pending_diff,
                            None => return Err(err("match has zero playing time".into())),
                        }
                    }
                    break;
                }

                let side = e
                    .side
                    .ok_or_else(|| err("lineup event without a side".into()))?;
                let player = e
                    .player_id
                    .clone()
                    .ok_or_else(|| err(format!("{} event without a player", e.kind.as_str())))?;
                let lineup = state.side_mut(side);
                match e.kind {
                    EventKind::SubOff | EventKind::RedCard => {
                        if !lineup.remove(&player) {
                            return Err(err(format!(
                                "player {player} leaves the pitch but was not on it"
                            )));
                        }
                        if lineup.len() < 7 {
                            return Err(err(format!(
                                "{side} lineup dropped below 7 at minute {}",
                                e.minute
                            )));
                        }
                    }
                    EventKind::SubOn => {
                        if !lineup.insert(player.clone()) {
                            return Err(err(format!("player {player} is already on the pitch")));
                        }
                        if lineup.len() > 11 {
                            return Err(err(format!(
                                "{side} lineup exceeded 11 at minute {}",
                                e.minute
                            )));
                        }
                    }
                    _ => unreachable!(),
                }
            }
        }
    }

    Ok(segments)
}

/// Build the regression system over every segment of the dataset.
pub fn build_design(d: &Dataset, include_home_adv: bool) -> Result<DesignSystem, DesignError> {
    let rows: Vec<usize> = (0..d.segments.len()).collect();
    build_design_rows(d, &rows, include_home_adv)
}

/// Build the regression system over a subset of segment rows, keeping the
/// full registry as the column space (so train/test systems align).
pub fn build_design_rows(
    d: &Dataset,
    rows: &[usize],
    include_home_adv: bool,
) -> Result<DesignSystem, DesignError> {
    if rows.is_empty() {
        return Err(DesignError::EmptyDataset);
    }
    let p = d.registry.len();
    let ncols = p + usize::from(include_home_adv);
    let home_col = include_home_adv.then_some(p);

    let mut x = SparseRowMatrix::with_capacity(ncols, rows.len());
    let mut y = DVector::zeros(rows.len());
    let mut t = DVector::zeros(rows.len());
    let mut row_match = Vec::with_capacity(rows.len());

    for (out_i, &seg_i) in rows.iter().enumerate() {
        let s = &d.segments[seg_i];
        let mut entries = Vec::with_capacity(s.home_lineup.len() + s.away_lineup.len() + 1);
        for pid in &s.home_lineup {
            let col = *d.registry.get(pid).ok_or_else(|| DesignError::Invariant {
                match_id: s.match_id.clone(),
                detail: format!("player {pid} missing from registry"),
            })?;
            entries.push((col, 1.0));
        }
        for pid in &s.away_lineup {
            let col = *d.registry.get(pid).ok_or_else(|| DesignError::Invariant {
                match_id: s.match_id.clone(),
                detail: format!("player {pid} missing from registry"),
            })?;
            entries.push((col, -1.0));
        }
        if let Some(hc) = home_col {
            entries.push((hc, 1.0));
        }
        x.push_row(entries);
        y[out_i] = s.goal_diff;
        t[out_i] = s.duration / 90.0;
        row_match.push(s.match_id.clone());
    }

    Ok(DesignSystem {
        x,
        y,
        t,
        col_index: d.registry.clone(),
        home_col,
        row_match,
    })
}

/// Center raw ratings over rated players; unrated players get exactly 0.
pub fn center_ratings(d: &Dataset) -> CenteredRatings {
    let p = d.registry.len();
    let mut r = DVector::zeros(p);
    let mut rated_mask = vec![false; p];
    let mut sum = 0.0;
    let mut n_rated = 0usize;
    for (pid, &idx) in &d.registry {
        if let Some(raw) = d.ratings.get(pid) {
            r[idx] = raw;
            rated_mask[idx] = true;
            sum += raw;
            n_rated += 1;
        }
    }
    if n_rated > 0 {
        let mean = sum / n_rated as f64;
        for idx in 0..p {
            if rated_mask[idx] {
                r[idx] -= mean;
            }
        }
    }
    CenteredRatings { r, rated_mask }
}

/// Write X in coordinate-triplet CSV (`row,col,value`); the `design-dump`
/// debug export.
pub fn write_triplets<W: Write>(ds: &DesignSystem, mut w: W) -> std::io::Result<()> {
    writeln!(w, "row,col,value")?;
    for (i, j, x) in ds.x.triplets() {
        writeln!(w, "{i},{j},{x}")?;
    }
    Ok(())
}
