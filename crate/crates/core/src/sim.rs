//! Synthetic league generator with known ground truth. The generative law
//! mirrors the fitted hierarchy: per-player effects drawn around a scaled
//! centered rating, segment responses Gaussian with duration-scaled mean and
//! variance, then rounded to integer goal differentials (rounding can be
//! disabled to isolate estimator correctness from discreteness).

use std::collections::BTreeMap;

use chrono::{Days, NaiveDate};
use nalgebra::DVector;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_model::{Dataset, Event, EventKind, Match, PlayerId, RatingsTable, Side};
use crate::design::segmentize;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_teams: usize,
    pub squad_size: usize,
    /// Number of double round-robins (each team meets each other twice per
    /// unit).
    pub n_rounds: usize,
    /// Mean substitutions per team per match.
    pub subs_per_match: f64,
    /// True rating-to-effect scale α.
    pub true_alpha: f64,
    /// Standard deviation of raw synthetic ratings around their mean.
    pub rating_noise_sd: f64,
    pub sigma_true: f64,
    pub tau_true: f64,
    pub home_adv_true: f64,
    pub seed: u64,
    /// Round segment responses to integers and emit matching goal events.
    pub round_goals: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_teams: 20,
            squad_size: 16,
            n_rounds: 1,
            subs_per_match: 3.0,
            true_alpha: 0.01,
            rating_noise_sd: 8.0,
            sigma_true: 1.0,
            tau_true: 0.1,
            home_adv_true: 0.25,
            seed: 0,
            round_goals: true,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_teams < 2 {
            return Err(SimError::InvalidConfig(format!(
                "cannot schedule a league with {} team(s)",
                self.n_teams
            )));
        }
        if self.squad_size < 11 {
            return Err(SimError::InvalidConfig(format!(
                "squad_size must be >= 11, got {}",
                self.squad_size
            )));
        }
        if self.n_rounds == 0 {
            return Err(SimError::InvalidConfig("n_rounds must be >= 1".into()));
        }
        for (name, v) in [
            ("subs_per_match", self.subs_per_match),
            ("rating_noise_sd", self.rating_noise_sd),
            ("sigma_true", self.sigma_true),
            ("tau_true", self.tau_true),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SimError::InvalidConfig(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        if !self.true_alpha.is_finite() || !self.home_adv_true.is_finite() {
            return Err(SimError::InvalidConfig(
                "true_alpha and home_adv_true must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// Ground truth exported alongside a simulated league.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeagueTruth {
    pub alpha: f64,
    pub home_adv: f64,
    pub sigma: f64,
    pub tau: f64,
    pub betas: BTreeMap<PlayerId, f64>,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub dataset: Dataset,
    /// True player effects aligned with `dataset.registry`.
    pub beta_true: DVector<f64>,
    pub alpha_true: f64,
    /// Unrounded per-segment responses, aligned with `dataset.segments`.
    /// Equals the segment `goal_diff` when rounding is disabled.
    pub continuous_y: Vec<f64>,
    pub truth: LeagueTruth,
}

struct SimPlayer {
    id: PlayerId,
    name: String,
    raw_rating: f64,
    beta: f64,
}

/// Circle-method round-robin: for each leg, `rounds[r]` is a list of
/// (home team, away team) pairs.
fn round_robin(n_teams: usize) -> Vec<Vec<(usize, usize)>> {
    const BYE: usize = usize::MAX;
    let mut teams: Vec<usize> = (0..n_teams).collect();
    if n_teams % 2 == 1 {
        teams.push(BYE);
    }
    let n = teams.len();
    let mut rounds = Vec::with_capacity(n - 1);
    for r in 0..n - 1 {
        let mut pairs = Vec::with_capacity(n / 2);
        for i in 0..n / 2 {
            let (a, b) = (teams[i], teams[n - 1 - i]);
            if a == BYE || b == BYE {
                continue;
            }
            // Alternate venues so home games spread evenly.
            if (r + i) % 2 == 0 {
                pairs.push((a, b));
            } else {
                pairs.push((b, a));
            }
        }
        rounds.push(pairs);
        // Rotate all but the first element.
        teams[1..].rotate_right(1);
    }
    rounds
}

/// Generate a full synthetic league and its ground truth; a pure function
/// of the config.
pub fn generate_league(cfg: &SimConfig) -> Result<SimOutput, SimError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // Players, ratings, and true effects.
    let mut squads: Vec<Vec<SimPlayer>> = Vec::with_capacity(cfg.n_teams);
    let mut raws = Vec::new();
    for ti in 0..cfg.n_teams {
        let mut squad = Vec::with_capacity(cfg.squad_size);
        for pi in 0..cfg.squad_size {
            let raw = 70.0 + cfg.rating_noise_sd * rng.sample::<f64, _>(StandardNormal);
            raws.push(raw);
            squad.push(SimPlayer {
                id: PlayerId::new(format!("t{ti:02}p{pi:02}")),
                name: format!("Player {ti:02}-{pi:02}"),
                raw_rating: raw,
                beta: 0.0,
            });
        }
        squads.push(squad);
    }
    let rating_mean = raws.iter().sum::<f64>() / raws.len() as f64;
    for squad in &mut squads {
        for p in squad {
            let centered = p.raw_rating - rating_mean;
            p.beta = cfg.true_alpha * centered
                + cfg.tau_true * rng.sample::<f64, _>(StandardNormal);
        }
    }

    // Schedule: n_rounds double round-robins, one round per week.
    let leg = round_robin(cfg.n_teams);
    let mut all_rounds: Vec<Vec<(usize, usize)>> = Vec::new();
    for _ in 0..cfg.n_rounds {
        for pairs in &leg {
            all_rounds.push(pairs.clone());
        }
        for pairs in &leg {
            all_rounds.push(pairs.iter().map(|&(h, a)| (a, h)).collect());
        }
    }
    let season_start = NaiveDate::from_ymd_opt(2020, 8, 15).unwrap();

    let beta_by_id: BTreeMap<PlayerId, f64> = squads
        .iter()
        .flatten()
        .map(|p| (p.id.clone(), p.beta))
        .collect();

    let mut matches = Vec::new();
    let mut all_segments = Vec::new();
    let mut continuous_y = Vec::new();
    let mut match_counter = 0usize;

    for (round_i, pairs) in all_rounds.iter().enumerate() {
        let date = season_start
            .checked_add_days(Days::new(7 * round_i as u64))
            .expect("date in range");
        for &(home, away) in pairs {
            let match_id = format!("m{match_counter:04}");
            match_counter += 1;
            let mut events = Vec::new();

            let mut on_pitch: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
            let mut bench: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
            for (slot, &team) in [home, away].iter().enumerate() {
                let side = if slot == 0 { Side::Home } else { Side::Away };
                let mut order: Vec<usize> = (0..cfg.squad_size).collect();
                order.shuffle(&mut rng);
                for (k, &pi) in order.iter().enumerate() {
                    if k < 11 {
                        on_pitch[slot].push(pi);
                        let p = &squads[team][pi];
                        events.push(Event {
                            minute: 0.0,
                            kind: EventKind::Starter,
                            side: Some(side),
                            player_id: Some(p.id.clone()),
                            player_name: Some(p.name.clone()),
                        });
                    } else {
                        bench[slot].push(pi);
                    }
                }
            }

            // Substitutions: Poisson count per side, times uniform in the
            // second half.
            for (slot, &team) in [home, away].iter().enumerate() {
                let side = if slot == 0 { Side::Home } else { Side::Away };
                let mean = cfg.subs_per_match.max(0.0);
                let drawn = if mean > 0.0 {
                    rng.sample(Poisson::new(mean).expect("positive mean")) as usize
                } else {
                    0
                };
                let n_subs = drawn.min(bench[slot].len());
                // Process in time order so a freshly introduced player can
                // only be withdrawn by a later substitution.
                let mut minutes: Vec<f64> =
                    (0..n_subs).map(|_| rng.gen_range(45.0..90.0)).collect();
                minutes.sort_by(|a, b| a.partial_cmp(b).unwrap());
                for minute in minutes {
                    let off_pos = rng.gen_range(0..on_pitch[slot].len());
                    let off_pi = on_pitch[slot].remove(off_pos);
                    let on_pi = bench[slot].remove(rng.gen_range(0..bench[slot].len()));
                    on_pitch[slot].push(on_pi);
                    for (kind, pi) in [(EventKind::SubOff, off_pi), (EventKind::SubOn, on_pi)] {
                        let p = &squads[team][pi];
                        events.push(Event {
                            minute,
                            kind,
                            side: Some(side),
                            player_id: Some(p.id.clone()),
                            player_name: Some(p.name.clone()),
                        });
                    }
                }
            }

            events.push(Event {
                minute: 90.0,
                kind: EventKind::FinalWhistle,
                side: None,
                player_id: None,
                player_name: None,
            });
            events.sort_by(|a, b| a.sort_key().partial_cmp(&b.sort_key()).unwrap());

            let mut m = Match {
                match_id: match_id.clone(),
                season: "sim".to_string(),
                date,
                home_team: format!("Team {home:02}"),
                away_team: format!("Team {away:02}"),
                events,
            };

            // Segment boundaries from the lineup events, then responses from
            // the generative law y ~ N(t·(xᵀβ + h), t·σ²).
            let mut segments = segmentize(&m).expect("generated match is well-formed");
            let mut goal_events = Vec::new();
            for s in &mut segments {
                let effect: f64 = s.home_lineup.iter().map(|p| beta_by_id[p]).sum::<f64>()
                    - s.away_lineup.iter().map(|p| beta_by_id[p]).sum::<f64>();
                let t = s.duration / 90.0;
                let mean = t * (effect + cfg.home_adv_true);
                let noise: f64 = rng.sample(StandardNormal);
                let y_cont = mean + t.sqrt() * cfg.sigma_true * noise;
                continuous_y.push(y_cont);

                if cfg.round_goals {
                    let y_int = y_cont.round();
                    s.goal_diff = y_int;
                    let (side, lineup) = if y_int >= 0.0 {
                        (Side::Home, &s.home_lineup)
                    } else {
                        (Side::Away, &s.away_lineup)
                    };
                    let scorers: Vec<&PlayerId> = lineup.iter().collect();
                    for _ in 0..y_int.abs() as usize {
                        let minute = s.start_minute + s.duration * rng.gen_range(0.05..0.95);
                        let scorer = scorers[rng.gen_range(0..scorers.len())];
                        goal_events.push(Event {
                            minute,
                            kind: EventKind::Goal,
                            side: Some(side),
                            player_id: Some(scorer.clone()),
                            player_name: None,
                        });
                    }
                } else {
                    s.goal_diff = y_cont;
                }
            }
            if !goal_events.is_empty() {
                // Scorer names come from the squad table.
                for g in &mut goal_events {
                    if let Some(pid) = &g.player_id {
                        g.player_name = squads
                            .iter()
                            .flatten()
                            .find(|p| &p.id == pid)
                            .map(|p| p.name.clone());
                    }
                }
                m.events.extend(goal_events);
                m.events
                    .sort_by(|a, b| a.sort_key().partial_cmp(&b.sort_key()).unwrap());
            }

            matches.push(m);
            all_segments.extend(segments);
        }
    }

    let ratings = RatingsTable {
        season: "sim".to_string(),
        entries: squads
            .iter()
            .flatten()
            .map(|p| (p.id.clone(), p.raw_rating))
            .collect(),
    };
    let names = squads
        .iter()
        .flatten()
        .map(|p| (p.id.clone(), p.name.clone()))
        .collect();

    let dataset = Dataset::new(matches, all_segments, ratings, names);
    let beta_true = DVector::from_iterator(
        dataset.registry.len(),
        dataset.registry.keys().map(|pid| beta_by_id[pid]),
    );
    let truth = LeagueTruth {
        alpha: cfg.true_alpha,
        home_adv: cfg.home_adv_true,
        sigma: cfg.sigma_true,
        tau: cfg.tau_true,
        betas: dataset
            .registry
            .keys()
            .map(|pid| (pid.clone(), beta_by_id[pid]))
            .collect(),
    };

    Ok(SimOutput {
        dataset,
        beta_true,
        alpha_true: cfg.true_alpha,
        continuous_y,
        truth,
    })
}
