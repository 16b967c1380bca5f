//! Uncertainty outputs: exact posterior draws, analytic credible intervals,
//! and rank distributions.
//!
//! Sampling goes through the stored precision factorization: with precision
//! A = LLᵀ, solving Lᵀu = z for z ~ N(0, I) gives u ~ N(0, A⁻¹), so a draw
//! is mean + u without ever forming the dense covariance. Draws are produced
//! in fixed-size blocks whose RNG streams derive from (seed, block index),
//! so parallel and serial execution emit identical output.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::data_model::{NameTable, PlayerId, RatingsTable};
use crate::models::{ModelKind, PosteriorFit};

#[derive(Debug, Error)]
pub enum PosteriorError {
    #[error("draw count must be >= 1")]
    NoDraws,
    #[error("credible level must be in (0, 1), got {0}")]
    InvalidLevel(f64),
    #[error("top-k must be in 1..={p}, got {k}")]
    InvalidTopK { k: usize, p: usize },
    #[error("draws are empty")]
    EmptyDraws,
}

/// Draws per RNG block. Fixed so that results do not depend on how blocks
/// are scheduled across threads.
const DRAW_BLOCK: usize = 1024;

/// Provenance of the fit a set of draws came from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DrawsProvenance {
    pub kind: ModelKind,
    pub weighted: bool,
    pub col_index: BTreeMap<PlayerId, usize>,
    pub home_col: Option<usize>,
    pub alpha_index: Option<usize>,
}

/// Matrix of joint posterior draws, one row per draw.
#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    pub draws: DMatrix<f64>,
    pub seed: u64,
    pub fit_ref: DrawsProvenance,
}

impl PosteriorDraws {
    pub fn n_draws(&self) -> usize {
        self.draws.nrows()
    }

    pub fn dim(&self) -> usize {
        self.draws.ncols()
    }

    /// Number of player coordinates (excludes home-advantage and α columns).
    pub fn n_players(&self) -> usize {
        self.fit_ref.col_index.len()
    }
}

/// Draw `n` exact samples from N(mean, precision⁻¹); deterministic per seed
/// and independent of thread count.
pub fn sample_posterior(
    fit: &PosteriorFit,
    n: usize,
    seed: u64,
) -> Result<PosteriorDraws, PosteriorError> {
    if n == 0 {
        return Err(PosteriorError::NoDraws);
    }
    let dim = fit.dim();
    let upper = fit.chol_l().transpose();
    let n_blocks = n.div_ceil(DRAW_BLOCK);

    let blocks: Vec<DMatrix<f64>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let block_len = DRAW_BLOCK.min(n - b * DRAW_BLOCK);
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(b as u64 + 1);
            let mut out = DMatrix::zeros(block_len, dim);
            let mut z = DVector::zeros(dim);
            for i in 0..block_len {
                for j in 0..dim {
                    z[j] = rng.sample::<f64, _>(StandardNormal);
                }
                let u = upper
                    .solve_upper_triangular(&z)
                    .expect("Cholesky factor has positive diagonal");
                for j in 0..dim {
                    out[(i, j)] = fit.mean[j] + u[j];
                }
            }
            out
        })
        .collect();

    let mut draws = DMatrix::zeros(n, dim);
    let mut row = 0;
    for block in blocks {
        draws.rows_mut(row, block.nrows()).copy_from(&block);
        row += block.nrows();
    }

    Ok(PosteriorDraws {
        draws,
        seed,
        fit_ref: DrawsProvenance {
            kind: fit.kind,
            weighted: fit.weighted,
            col_index: fit.col_index.clone(),
            home_col: fit.home_col,
            alpha_index: fit.alpha_index,
        },
    })
}

/// Analytic Gaussian marginal interval per coordinate: mean ± z(level)·sd.
pub fn credible_intervals(
    fit: &PosteriorFit,
    level: f64,
) -> Result<Vec<(f64, f64)>, PosteriorError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(PosteriorError::InvalidLevel(level));
    }
    let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
    let vars = fit.marginal_variances();
    Ok((0..fit.dim())
        .map(|i| {
            let half = z * vars[i].sqrt();
            (fit.mean[i] - half, fit.mean[i] + half)
        })
        .collect())
}

/// Per-player rank and coefficient summaries computed from joint draws.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlayerRankRow {
    pub player: PlayerId,
    pub col: usize,
    pub post_mean: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
    pub rank_median: usize,
    pub rank_lo: usize,
    pub rank_hi: usize,
    pub p_top_k: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankSummary {
    pub top_k: usize,
    /// Rows in column-index order.
    pub players: Vec<PlayerRankRow>,
}

/// Linear-interpolation quantile of a sorted slice.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Nearest-rank quantile of sorted integer ranks.
fn rank_quantile(sorted: &[usize], q: f64) -> usize {
    let n = sorted.len();
    let idx = ((q * (n - 1) as f64).round() as usize).min(n - 1);
    sorted[idx]
}

/// Compute per-draw ranks by descending β (ties broken by column index) and
/// summarize per player.
pub fn rank_summary(draws: &PosteriorDraws, k: usize) -> Result<RankSummary, PosteriorError> {
    let n = draws.n_draws();
    if n == 0 {
        return Err(PosteriorError::EmptyDraws);
    }
    let p = draws.n_players();
    if !(1..=p).contains(&k) {
        return Err(PosteriorError::InvalidTopK { k, p });
    }

    // ranks[player][draw] = 1-based rank in that draw.
    let mut ranks: Vec<Vec<usize>> = vec![Vec::with_capacity(n); p];
    let mut order: Vec<usize> = (0..p).collect();
    for d in 0..n {
        order.sort_by(|&a, &b| {
            draws.draws[(d, b)]
                .partial_cmp(&draws.draws[(d, a)])
                .expect("draws are finite")
                .then(a.cmp(&b))
        });
        for (rank0, &player) in order.iter().enumerate() {
            ranks[player].push(rank0 + 1);
        }
    }

    let by_col: BTreeMap<usize, &PlayerId> =
        draws.fit_ref.col_index.iter().map(|(id, &c)| (c, id)).collect();

    let mut players = Vec::with_capacity(p);
    let mut values = Vec::with_capacity(n);
    for c in 0..p {
        values.clear();
        values.extend((0..n).map(|d| draws.draws[(d, c)]));
        let mean = values.iter().sum::<f64>() / n as f64;
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut rs = ranks[c].clone();
        rs.sort_unstable();
        let p_top_k = ranks[c].iter().filter(|&&r| r <= k).count() as f64 / n as f64;
        players.push(PlayerRankRow {
            player: (*by_col[&c]).clone(),
            col: c,
            post_mean: mean,
            q05: quantile_sorted(&values, 0.05),
            q50: quantile_sorted(&values, 0.50),
            q95: quantile_sorted(&values, 0.95),
            rank_median: rank_quantile(&rs, 0.50),
            rank_lo: rank_quantile(&rs, 0.05),
            rank_hi: rank_quantile(&rs, 0.95),
            p_top_k,
        });
    }

    Ok(RankSummary { top_k: k, players })
}

/// Export a rank summary as the sortable-table CSV:
/// `player_id,name,team,rating,post_mean,q05,q50,q95,rank_median,rank_lo,rank_hi,p_top_k`.
/// Rows are sorted by posterior mean, descending.
pub fn write_rank_csv<W: std::io::Write>(
    summary: &RankSummary,
    names: &NameTable,
    teams: &BTreeMap<PlayerId, String>,
    ratings: &RatingsTable,
    mut w: W,
) -> std::io::Result<()> {
    writeln!(
        w,
        "player_id,name,team,rating,post_mean,q05,q50,q95,rank_median,rank_lo,rank_hi,p_top_k"
    )?;
    let mut rows: Vec<&PlayerRankRow> = summary.players.iter().collect();
    rows.sort_by(|a, b| {
        b.post_mean
            .partial_cmp(&a.post_mean)
            .unwrap()
            .then(a.col.cmp(&b.col))
    });
    for r in rows {
        let name = names.get(&r.player).map(String::as_str).unwrap_or("");
        let team = teams.get(&r.player).map(String::as_str).unwrap_or("");
        let rating = ratings
            .get(&r.player)
            .map(|v| format!("{v}"))
            .unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.player, name, team, rating, r.post_mean, r.q05, r.q50, r.q95, r.rank_median,
            r.rank_lo, r.rank_hi, r.p_top_k
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{fit_apm_bayes, Hyperparams};
    use crate::testutil::synthetic_system;
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;

    fn prior_only_fit(p: usize) -> PosteriorFit {
        let ds = crate::design::DesignSystem {
            x: crate::linalg::SparseRowMatrix::new(p),
            y: DVector::zeros(0),
            t: DVector::zeros(0),
            col_index: (0..p)
                .map(|i| (PlayerId::new(format!("p{i}")), i))
                .collect(),
            home_col: None,
            row_match: vec![],
        };
        fit_apm_bayes(&ds, &Hyperparams::default(), false).unwrap()
    }

    #[test]
    fn draws_are_deterministic_per_seed() {
        let fit = prior_only_fit(4);
        let a = sample_posterior(&fit, 1, 42).unwrap();
        let b = sample_posterior(&fit, 1, 42).unwrap();
        assert_eq!(a.draws, b.draws);
        let c = sample_posterior(&fit, 1, 43).unwrap();
        assert_ne!(a.draws, c.draws);
    }

    #[test]
    fn draws_are_identical_across_thread_counts() {
        let fit = prior_only_fit(6);
        let pools: Vec<rayon::ThreadPool> = [1usize, 4]
            .iter()
            .map(|&n| {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .unwrap()
            })
            .collect();
        let a = pools[0].install(|| sample_posterior(&fit, 5000, 7).unwrap());
        let b = pools[1].install(|| sample_posterior(&fit, 5000, 7).unwrap());
        assert_eq!(a.draws, b.draws);
    }

    #[test]
    fn prior_only_sample_moments_match_analytic() {
        let fit = prior_only_fit(3);
        let draws = sample_posterior(&fit, 200_000, 1).unwrap();
        let n = draws.n_draws() as f64;
        for c in 0..3 {
            let col = draws.draws.column(c);
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            // τ² = 0.01 within 2%.
            assert!((var - 0.01).abs() < 0.0002, "var[{c}] = {var}");
            // CLT bound: 3·sd/√n around the analytic mean 0.
            assert!(mean.abs() < 3.0 * 0.1 / n.sqrt(), "mean[{c}] = {mean}");
        }
    }

    #[test]
    fn data_fit_sample_mean_within_clt_bound() {
        let ds = synthetic_system(17, 60, 8, false);
        let fit = fit_apm_bayes(&ds, &Hyperparams::default(), false).unwrap();
        let draws = sample_posterior(&fit, 200_000, 3).unwrap();
        let n = draws.n_draws() as f64;
        let sds = fit.marginal_variances().map(|v| v.sqrt());
        for c in 0..fit.dim() {
            let mean = draws.draws.column(c).sum() / n;
            assert!(
                (mean - fit.mean[c]).abs() < 3.0 * sds[c] / n.sqrt(),
                "coordinate {c}"
            );
        }
    }

    #[test]
    fn prior_credible_interval_is_plus_minus_196() {
        let fit = prior_only_fit(2);
        let ivs = credible_intervals(&fit, 0.95).unwrap();
        for (lo, hi) in ivs {
            assert_abs_diff_eq!(lo, -0.196, epsilon = 1e-3);
            assert_abs_diff_eq!(hi, 0.196, epsilon = 1e-3);
        }
    }

    #[test]
    fn interval_width_shrinks_with_level() {
        let fit = prior_only_fit(1);
        let mut prev = f64::INFINITY;
        for level in [0.99, 0.8, 0.5, 0.1, 0.001] {
            let (lo, hi) = credible_intervals(&fit, level).unwrap()[0];
            let width = hi - lo;
            assert!(width < prev);
            prev = width;
        }
        assert!(prev < 1e-3); // width → 0 as level → 0
        assert!(credible_intervals(&fit, 0.0).is_err());
        assert!(credible_intervals(&fit, 1.0).is_err());
    }

    #[test]
    fn intervals_are_nested() {
        let ds = synthetic_system(2, 40, 6, false);
        let fit = fit_apm_bayes(&ds, &Hyperparams::default(), false).unwrap();
        let narrow = credible_intervals(&fit, 0.5).unwrap();
        let wide = credible_intervals(&fit, 0.9).unwrap();
        for (n, w) in narrow.iter().zip(&wide) {
            assert!(w.0 <= n.0 && n.1 <= w.1);
        }
    }

    #[test]
    fn single_observation_conjugate_interval() {
        // X = [[1]], y = [1], σ = 1, τ = 0.1: var = 1/101, mean = 1/101.
        let mut x = crate::linalg::SparseRowMatrix::new(1);
        x.push_row(vec![(0, 1.0)]);
        let ds = crate::design::DesignSystem {
            x,
            y: DVector::from_vec(vec![1.0]),
            t: DVector::from_vec(vec![1.0]),
            col_index: [(PlayerId::from("p0"), 0)].into_iter().collect(),
            home_col: None,
            row_match: vec!["m0".into()],
        };
        let fit = fit_apm_bayes(&ds, &Hyperparams::default(), false).unwrap();
        assert_abs_diff_eq!(fit.mean[0], 1.0 / 101.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.marginal_variances()[0], 1.0 / 101.0, epsilon = 1e-12);
        let (lo, hi) = credible_intervals(&fit, 0.95).unwrap()[0];
        let z = Normal::standard().inverse_cdf(0.975);
        assert_abs_diff_eq!(lo, 1.0 / 101.0 - z / 101f64.sqrt(), epsilon = 1e-10);
        assert_abs_diff_eq!(hi, 1.0 / 101.0 + z / 101f64.sqrt(), epsilon = 1e-10);
    }

    fn fixed_draws(rows: &[[f64; 2]]) -> PosteriorDraws {
        let n = rows.len();
        let mut m = DMatrix::zeros(n, 2);
        for (i, r) in rows.iter().enumerate() {
            m[(i, 0)] = r[0];
            m[(i, 1)] = r[1];
        }
        PosteriorDraws {
            draws: m,
            seed: 0,
            fit_ref: DrawsProvenance {
                kind: ModelKind::Apm,
                weighted: false,
                col_index: [(PlayerId::from("a"), 0), (PlayerId::from("b"), 1)]
                    .into_iter()
                    .collect(),
                home_col: None,
                alpha_index: None,
            },
        }
    }

    #[test]
    fn constant_draws_give_certain_ranks() {
        let draws = fixed_draws(&[[0.2, 0.1]; 10]);
        let s = rank_summary(&draws, 1).unwrap();
        assert_eq!(s.players[0].rank_median, 1);
        assert_eq!(s.players[0].p_top_k, 1.0);
        assert_eq!(s.players[1].rank_median, 2);
        assert_eq!(s.players[1].p_top_k, 0.0);
    }

    #[test]
    fn k_equals_p_makes_everyone_top_k() {
        let draws = fixed_draws(&[[0.2, 0.1], [0.0, 0.5]]);
        let s = rank_summary(&draws, 2).unwrap();
        for row in &s.players {
            assert_eq!(row.p_top_k, 1.0);
        }
    }

    #[test]
    fn exchangeable_players_split_top_one_evenly() {
        let fit = prior_only_fit(4);
        let draws = sample_posterior(&fit, 100_000, 5).unwrap();
        let s = rank_summary(&draws, 1).unwrap();
        let total: f64 = s.players.iter().map(|p| p.p_top_k).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        for row in &s.players {
            assert!((row.p_top_k - 0.25).abs() < 0.02, "{}", row.p_top_k);
        }
    }

    #[test]
    fn ranks_are_invariant_under_positive_affine_transforms() {
        let fit = prior_only_fit(5);
        let base = sample_posterior(&fit, 2000, 9).unwrap();
        let mut scaled = base.clone();
        scaled.draws = scaled.draws.map(|v| 3.5 * v + 2.0);
        let a = rank_summary(&base, 2).unwrap();
        let b = rank_summary(&scaled, 2).unwrap();
        for (ra, rb) in a.players.iter().zip(&b.players) {
            assert_eq!(ra.rank_median, rb.rank_median);
            assert_eq!(ra.rank_lo, rb.rank_lo);
            assert_eq!(ra.rank_hi, rb.rank_hi);
            assert_eq!(ra.p_top_k, rb.p_top_k);
        }
    }

    #[test]
    fn sample_covariance_converges_to_analytic() {
        let ds = synthetic_system(8, 30, 5, false);
        let fit = fit_apm_bayes(&ds, &Hyperparams::default(), false).unwrap();
        let draws = sample_posterior(&fit, 200_000, 11).unwrap();
        let n = draws.n_draws();
        let dim = fit.dim();
        let mut mean = DVector::zeros(dim);
        for c in 0..dim {
            mean[c] = draws.draws.column(c).sum() / n as f64;
        }
        let mut cov = DMatrix::zeros(dim, dim);
        for d in 0..n {
            for i in 0..dim {
                let di = draws.draws[(d, i)] - mean[i];
                for j in 0..dim {
                    cov[(i, j)] += di * (draws.draws[(d, j)] - mean[j]);
                }
            }
        }
        cov /= (n - 1) as f64;
        let analytic = fit.covariance();
        let rel = (&cov - &analytic).norm() / analytic.norm();
        assert!(rel < 0.05, "Frobenius relative error {rel}");
    }
}
