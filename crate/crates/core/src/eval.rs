//! Game-level evaluation harness: k-fold cross-validation over matches and
//! month-by-month backtesting, each scoring the mean squared error of
//! predicted vs actual match goal differentials.
//!
//! Folds partition matches, never segments: a game's segments stay together,
//! so no within-game information leaks across the split. Held-out players
//! are priced at their prior mean, which the joint posterior does
//! automatically once train and test share the full column registry.

use std::collections::BTreeSet;

use chrono::{Datelike, Months, NaiveDate};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_model::{Dataset, PlayerId};
use crate::design::{build_design_rows, center_ratings, DesignError, DesignSystem};
use crate::models::{fit_spec, predict_segment, Fit, ModelError, ModelSpec};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("empty test window at cutoff {0}")]
    EmptyTestWindow(NaiveDate),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One scored prediction, kept for audit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchPrediction {
    pub match_id: String,
    pub predicted: f64,
    pub actual: f64,
}

/// One (model, split) result row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRow {
    pub model: String,
    pub split: String,
    pub n_train_matches: usize,
    pub n_games: usize,
    /// `None` when the model could not be fitted on this split's training
    /// data (reported as "not_fitted" in CSV).
    pub mse: Option<f64>,
    pub predictions: Vec<MatchPrediction>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    /// Mean MSE per model over splits where it was fitted.
    pub fn per_model_mean_mse(&self) -> Vec<(String, f64)> {
        let models: BTreeSet<&str> = self.rows.iter().map(|r| r.model.as_str()).collect();
        models
            .into_iter()
            .filter_map(|m| {
                let vals: Vec<f64> = self
                    .rows
                    .iter()
                    .filter(|r| r.model == m)
                    .filter_map(|r| r.mse)
                    .collect();
                if vals.is_empty() {
                    None
                } else {
                    Some((m.to_string(), vals.iter().sum::<f64>() / vals.len() as f64))
                }
            })
            .collect()
    }

    /// Backtest aggregation: mean MSE per (model, cutoff month-of-year),
    /// averaged over seasons. Splits must be ISO cutoff dates.
    pub fn monthly_average(&self) -> Vec<(String, u32, f64, usize)> {
        let mut keys: BTreeSet<(String, u32)> = BTreeSet::new();
        for r in &self.rows {
            if let Ok(date) = r.split.parse::<NaiveDate>() {
                keys.insert((r.model.clone(), date.month()));
            }
        }
        keys.into_iter()
            .filter_map(|(model, month)| {
                let rows: Vec<&EvalRow> = self
                    .rows
                    .iter()
                    .filter(|r| {
                        r.model == model
                            && r.split
                                .parse::<NaiveDate>()
                                .map(|d| d.month() == month)
                                .unwrap_or(false)
                    })
                    .collect();
                let vals: Vec<f64> = rows.iter().filter_map(|r| r.mse).collect();
                if vals.is_empty() {
                    return None;
                }
                let n_games: usize = rows
                    .iter()
                    .filter(|r| r.mse.is_some())
                    .map(|r| r.n_games)
                    .sum();
                Some((
                    model,
                    month,
                    vals.iter().sum::<f64>() / vals.len() as f64,
                    n_games,
                ))
            })
            .collect()
    }

    /// `model,split,n_games,mse` rows; `mse` is `not_fitted` for skipped fits.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "model,split,n_games,mse")?;
        for r in &self.rows {
            let mse = r
                .mse
                .map(|v| v.to_string())
                .unwrap_or_else(|| "not_fitted".into());
            writeln!(w, "{},{},{},{}", r.model, r.split, r.n_games, mse)?;
        }
        Ok(())
    }
}

/// Deterministic fold assignment: a function of the sorted match-id list,
/// `k`, and `seed` only. Returns, per fold, the set of held-out match ids.
pub fn assign_folds(match_ids: &[String], k: usize, seed: u64) -> Vec<Vec<String>> {
    let mut ids: Vec<String> = match_ids.to_vec();
    ids.sort();
    ids.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let mut folds = vec![Vec::new(); k];
    for (i, id) in ids.into_iter().enumerate() {
        folds[i % k].push(id);
    }
    folds
}

/// Actual goal differential per match: the sum of its segments' responses.
fn actual_margin(d: &Dataset, rows: &[usize]) -> f64 {
    rows.iter().map(|&i| d.segments[i].goal_diff).sum()
}

struct SplitScore {
    rows: Vec<EvalRow>,
}

/// Fit every spec on the training rows and score every test match.
/// `full` systems (one per home-adv flag) provide the test rows.
fn score_split(
    d: &Dataset,
    specs: &[ModelSpec],
    split: &str,
    train_rows: &[usize],
    test_matches: &[String],
) -> Result<SplitScore, EvalError> {
    let by_match = d.segments_by_match();
    let ratings = center_ratings(d);
    let n_train_matches = {
        let mut ids: BTreeSet<&str> = BTreeSet::new();
        for &i in train_rows {
            ids.insert(d.segments[i].match_id.as_str());
        }
        ids.len()
    };

    // One design per home-advantage flag actually requested.
    let flags: BTreeSet<bool> = specs.iter().map(|s| s.include_home_adv).collect();
    let mut systems: Vec<(bool, Option<DesignSystem>, DesignSystem)> = Vec::new();
    for &flag in &flags {
        let train = if train_rows.is_empty() {
            None
        } else {
            Some(build_design_rows(d, train_rows, flag)?)
        };
        let all_rows: Vec<usize> = (0..d.segments.len()).collect();
        let full = build_design_rows(d, &all_rows, flag)?;
        systems.push((flag, train, full));
    }
    let system_for = |flag: bool| systems.iter().find(|(f, _, _)| *f == flag).unwrap();

    let mut rows = Vec::with_capacity(specs.len());
    for spec in specs {
        let (_, train, full) = system_for(spec.include_home_adv);
        let fit: Option<Fit> = match train {
            Some(train_ds) => match fit_spec(spec, train_ds, &ratings) {
                Ok(f) => Some(f),
                // A constant predictor or empty split is a property of the
                // split, not a fatal run error.
                Err(ModelError::DegenerateDesign(_)) | Err(ModelError::EmptyDataset) => None,
                Err(e) => return Err(e.into()),
            },
            None if !spec.kind.needs_data() => Some(crate::models::fit_zero()),
            None => None,
        };

        let row = match fit {
            Some(fit) => {
                let mut predictions = Vec::with_capacity(test_matches.len());
                let mut sse = 0.0;
                for mid in test_matches {
                    let seg_rows = by_match
                        .get(mid.as_str())
                        .ok_or_else(|| {
                            EvalError::InsufficientData(format!("match {mid} has no segments"))
                        })?;
                    let mut predicted = 0.0;
                    for &i in seg_rows.iter() {
                        predicted += predict_segment(&fit, full.x.row(i), full.t[i])?;
                    }
                    let actual = actual_margin(d, seg_rows);
                    sse += (predicted - actual) * (predicted - actual);
                    predictions.push(MatchPrediction {
                        match_id: mid.clone(),
                        predicted,
                        actual,
                    });
                }
                EvalRow {
                    model: spec.label(),
                    split: split.to_string(),
                    n_train_matches,
                    n_games: test_matches.len(),
                    mse: Some(sse / test_matches.len() as f64),
                    predictions,
                }
            }
            None => EvalRow {
                model: spec.label(),
                split: split.to_string(),
                n_train_matches,
                n_games: test_matches.len(),
                mse: None,
                predictions: Vec::new(),
            },
        };
        rows.push(row);
    }
    Ok(SplitScore { rows })
}

/// Game-level k-fold cross-validation: fit on k−1 folds' segments, score
/// each held-out match. Deterministic per seed.
pub fn kfold_cv(
    d: &Dataset,
    specs: &[ModelSpec],
    k: usize,
    seed: u64,
) -> Result<EvalReport, EvalError> {
    if k < 2 {
        return Err(EvalError::InsufficientData(format!(
            "k must be >= 2, got {k}"
        )));
    }
    let match_ids: Vec<String> = d.matches.iter().map(|m| m.match_id.clone()).collect();
    if match_ids.len() < k {
        return Err(EvalError::InsufficientData(format!(
            "k = {k} folds but only {} matches",
            match_ids.len()
        )));
    }
    let folds = assign_folds(&match_ids, k, seed);

    let results: Vec<Result<SplitScore, EvalError>> = folds
        .par_iter()
        .enumerate()
        .map(|(fold_i, held_out)| {
            let held: BTreeSet<&str> = held_out.iter().map(String::as_str).collect();
            let train_rows: Vec<usize> = d
                .segments
                .iter()
                .enumerate()
                .filter(|(_, s)| !held.contains(s.match_id.as_str()))
                .map(|(i, _)| i)
                .collect();
            if train_rows.is_empty() {
                return Err(EvalError::InsufficientData(format!(
                    "fold {fold_i} has no training segments"
                )));
            }
            let mut test: Vec<String> = held_out.clone();
            test.sort();
            score_split(d, specs, &format!("fold{fold_i:02}"), &train_rows, &test)
        })
        .collect();

    let mut report = EvalReport::default();
    for r in results {
        report.rows.extend(r?.rows);
    }
    Ok(report)
}

/// Training cutoffs for backtesting; test windows span `horizon` months.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BacktestSchedule {
    pub cutoffs: Vec<NaiveDate>,
    pub horizon_months: u32,
}

impl BacktestSchedule {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.cutoffs.is_empty() {
            return Err(EvalError::InvalidSchedule("no cutoffs".into()));
        }
        if self.horizon_months == 0 {
            return Err(EvalError::InvalidSchedule("horizon must be >= 1".into()));
        }
        for w in self.cutoffs.windows(2) {
            if w[1] <= w[0] {
                return Err(EvalError::InvalidSchedule(format!(
                    "cutoffs not strictly increasing: {} then {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(())
    }

    pub fn window(&self, cutoff: NaiveDate) -> (NaiveDate, NaiveDate) {
        let end = cutoff
            .checked_add_months(Months::new(self.horizon_months))
            .expect("date in range");
        (cutoff, end)
    }
}

/// First-of-month boundaries inside the dataset's date span whose test
/// window (of `horizon` months) contains at least one match. Optional
/// month-of-year bounds restrict the sweep (wrapping across New Year).
pub fn monthly_cutoffs(
    d: &Dataset,
    horizon_months: u32,
    start_month: Option<u32>,
    end_month: Option<u32>,
) -> Vec<NaiveDate> {
    let Some(min) = d.matches.iter().map(|m| m.date).min() else {
        return Vec::new();
    };
    let max = d.matches.iter().map(|m| m.date).max().unwrap();

    let in_range = |month: u32| match (start_month, end_month) {
        (Some(s), Some(e)) if s <= e => (s..=e).contains(&month),
        (Some(s), Some(e)) => month >= s || month <= e, // wraps New Year
        (Some(s), None) => month >= s,
        (None, Some(e)) => month <= e,
        (None, None) => true,
    };

    let mut cutoffs = Vec::new();
    let mut cursor = NaiveDate::from_ymd_opt(min.year(), min.month(), 1)
        .unwrap()
        .checked_add_months(Months::new(1))
        .unwrap();
    while cursor <= max {
        if in_range(cursor.month()) {
            let end = cursor.checked_add_months(Months::new(horizon_months)).unwrap();
            let has_test = d.matches.iter().any(|m| m.date >= cursor && m.date < end);
            if has_test {
                cutoffs.push(cursor);
            }
        }
        cursor = cursor.checked_add_months(Months::new(1)).unwrap();
    }
    cutoffs
}

/// Train on all matches strictly before each cutoff, test on the following
/// window. Data-free models still score when the training set is empty;
/// data-driven models report not-fitted.
pub fn backtest(
    d: &Dataset,
    specs: &[ModelSpec],
    schedule: &BacktestSchedule,
) -> Result<EvalReport, EvalError> {
    schedule.validate()?;

    let results: Vec<Result<SplitScore, EvalError>> = schedule
        .cutoffs
        .par_iter()
        .map(|&cutoff| {
            let (start, end) = schedule.window(cutoff);
            let train_ids: BTreeSet<&str> = d
                .matches
                .iter()
                .filter(|m| m.date < cutoff)
                .map(|m| m.match_id.as_str())
                .collect();
            let mut test: Vec<String> = d
                .matches
                .iter()
                .filter(|m| m.date >= start && m.date < end)
                .map(|m| m.match_id.clone())
                .collect();
            test.sort();
            if test.is_empty() {
                return Err(EvalError::EmptyTestWindow(cutoff));
            }
            let train_rows: Vec<usize> = d
                .segments
                .iter()
                .enumerate()
                .filter(|(_, s)| train_ids.contains(s.match_id.as_str()))
                .map(|(i, _)| i)
                .collect();
            score_split(d, specs, &cutoff.to_string(), &train_rows, &test)
        })
        .collect();

    let mut report = EvalReport::default();
    for r in results {
        report.rows.extend(r?.rows);
    }
    Ok(report)
}

/// Players appearing in test segments but in no training segment.
pub fn players_unseen_in_training(
    d: &Dataset,
    train_rows: &[usize],
    test_rows: &[usize],
) -> Vec<PlayerId> {
    let seen: BTreeSet<&PlayerId> = train_rows
        .iter()
        .flat_map(|&i| d.segments[i].players())
        .collect();
    let test_players: BTreeSet<&PlayerId> = test_rows
        .iter()
        .flat_map(|&i| d.segments[i].players())
        .collect();
    test_players
        .into_iter()
        .filter(|p| !seen.contains(*p))
        .cloned()
        .collect()
}
