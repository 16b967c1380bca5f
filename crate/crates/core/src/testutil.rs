//! Small hand-built fixtures shared by unit, integration, and bench code.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use nalgebra::DVector;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data_model::{Dataset, Event, EventKind, Match, PlayerId, RatingsTable, Side};
use crate::design::{segmentize, DesignSystem};
use crate::linalg::SparseRowMatrix;

pub fn goal(side: Side, minute: f64) -> Event {
    let pid = match side {
        Side::Home => "h01",
        Side::Away => "a01",
    };
    Event {
        minute,
        kind: EventKind::Goal,
        side: Some(side),
        player_id: Some(PlayerId::from(pid)),
        player_name: None,
    }
}

pub fn sub_pair(side: Side, minute: f64, off: &str, on: &str) -> (Event, Event) {
    let mk = |kind, pid: &str| Event {
        minute,
        kind,
        side: Some(side),
        player_id: Some(PlayerId::from(pid)),
        player_name: None,
    };
    (mk(EventKind::SubOff, off), mk(EventKind::SubOn, on))
}

/// A 90-minute match with 11 starters per side (`h01..h11`, `a01..a11`),
/// the given goal events, and one home substitution per entry in
/// `sub_minutes` (the k-th sub replaces `h{k:02}` with `h{11+k:02}`).
pub fn fixture_match(match_id: &str, date: &str, goals: &[Event], sub_minutes: &[f64]) -> Match {
    let mut events = Vec::new();
    for (side, prefix) in [(Side::Home, "h"), (Side::Away, "a")] {
        for i in 1..=11 {
            events.push(Event {
                minute: 0.0,
                kind: EventKind::Starter,
                side: Some(side),
                player_id: Some(PlayerId::new(format!("{prefix}{i:02}"))),
                player_name: Some(format!("{prefix} player {i}")),
            });
        }
    }
    events.extend(goals.iter().cloned());
    for (k, &minute) in sub_minutes.iter().enumerate() {
        let off = format!("h{:02}", k + 1);
        let on = format!("h{:02}", 12 + k);
        let (e_off, e_on) = sub_pair(Side::Home, minute, &off, &on);
        events.push(e_off);
        events.push(e_on);
    }
    events.push(Event {
        minute: 90.0,
        kind: EventKind::FinalWhistle,
        side: None,
        player_id: None,
        player_name: None,
    });
    events.sort_by(|a, b| a.sort_key().partial_cmp(&b.sort_key()).unwrap());
    Match {
        match_id: match_id.to_string(),
        season: "2017-18".to_string(),
        date: NaiveDate::parse_from_str(date, "%Y-%m-%d").unwrap(),
        home_team: "Home FC".to_string(),
        away_team: "Away FC".to_string(),
        events,
    }
}

/// Deterministic random regression system for oracle checks: dense-ish
/// sparse rows with Gaussian values, Gaussian responses, durations in
/// (0.01, 1].
pub fn synthetic_system(seed: u64, n: usize, p: usize, include_home: bool) -> DesignSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ncols = p + usize::from(include_home);
    let home_col = include_home.then_some(p);
    let mut x = SparseRowMatrix::with_capacity(ncols, n);
    let mut y = DVector::zeros(n);
    let mut t = DVector::zeros(n);
    let nnz = p.min(6).max(1);
    for i in 0..n {
        let mut cols: Vec<usize> = (0..p).collect();
        cols.shuffle(&mut rng);
        cols.truncate(nnz);
        let mut entries: Vec<(usize, f64)> = cols
            .into_iter()
            .map(|c| (c, rng.sample::<f64, _>(StandardNormal)))
            .collect();
        if let Some(h) = home_col {
            entries.push((h, 1.0));
        }
        x.push_row(entries);
        y[i] = rng.sample::<f64, _>(StandardNormal);
        t[i] = rng.gen_range(0.01..=1.0);
    }
    DesignSystem {
        x,
        y,
        t,
        col_index: (0..p)
            .map(|i| (PlayerId::new(format!("p{i:03}")), i))
            .collect(),
        home_col,
        row_match: (0..n).map(|i| format!("m{i:04}")).collect(),
    }
}

/// Two-match dataset with a few rated players; passes `validate_dataset`.
pub fn fixture_dataset() -> Dataset {
    let m1 = fixture_match(
        "m1",
        "2017-08-12",
        &[goal(Side::Home, 30.0), goal(Side::Away, 70.0), goal(Side::Home, 85.0)],
        &[60.0, 75.0],
    );
    let m2 = fixture_match("m2", "2017-08-19", &[goal(Side::Away, 55.0)], &[]);

    let matches = vec![m1, m2];
    let mut segments = Vec::new();
    for m in &matches {
        segments.extend(segmentize(m).unwrap());
    }

    let mut entries = BTreeMap::new();
    for (pid, overall) in [
        ("h01", 84.0),
        ("h02", 78.0),
        ("h03", 71.0),
        ("a01", 88.0),
        ("a02", 69.0),
    ] {
        entries.insert(PlayerId::from(pid), overall);
    }
    let ratings = RatingsTable {
        season: "2017-18".to_string(),
        entries,
    };

    let mut names = BTreeMap::new();
    for m in &matches {
        for e in &m.events {
            if let (Some(pid), Some(name)) = (&e.player_id, &e.player_name) {
                names.insert(pid.clone(), name.clone());
            }
        }
    }

    Dataset::new(matches, segments, ratings, names)
}
