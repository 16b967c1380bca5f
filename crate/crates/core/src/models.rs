//! The five-model ladder: Zero, Intercept, FIFA, APM, and Augmented APM.
//!
//! APM is ridge regression on the signed segment matrix; its Bayesian recast
//! (Gaussian likelihood, zero-mean Gaussian prior) has an exact conjugate
//! posterior, so MAP and posterior mean coincide with the ridge solution at
//! λ = σ²/τ². Augmented APM moves the prior mean to α·rating with a learned
//! scale α, still one joint Gaussian solved exactly. The time-weighted
//! variant scales both the mean and the variance of a segment's response by
//! its duration.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::{CenteredRatings, DesignSystem};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dataset has no segments")]
    EmptyDataset,
    #[error("degenerate design: {0}")]
    DegenerateDesign(String),
    #[error("posterior precision factorization failed: {0}")]
    Factorization(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
}

/// Prior and likelihood scales. σ and τ are per-match scale: durations enter
/// the likelihood in 90-minute units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Likelihood scale σ (goals per full segment).
    pub sigma: f64,
    /// Player prior scale τ.
    pub tau: f64,
    /// Hyperprior mean μ_α for the rating scale.
    pub mu_alpha: f64,
    /// Hyperprior scale σ_α.
    pub sigma_alpha: f64,
    /// Home-advantage column prior scale.
    pub tau_home: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            sigma: 1.0,
            tau: 0.1,
            mu_alpha: 0.0,
            sigma_alpha: 1.0,
            tau_home: 0.1,
        }
    }
}

impl Hyperparams {
    /// Ridge penalty implied by the prior: λ = σ²/τ².
    pub fn lambda(&self) -> f64 {
        (self.sigma / self.tau).powi(2)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, v) in [
            ("sigma", self.sigma),
            ("tau", self.tau),
            ("sigma_alpha", self.sigma_alpha),
            ("tau_home", self.tau_home),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ModelError::InvalidHyperparams(format!(
                    "{name} must be finite and positive, got {v}"
                )));
            }
        }
        if !self.mu_alpha.is_finite() {
            return Err(ModelError::InvalidHyperparams(format!(
                "mu_alpha must be finite, got {}",
                self.mu_alpha
            )));
        }
        if !self.lambda().is_finite() {
            return Err(ModelError::InvalidHyperparams(
                "lambda = sigma^2/tau^2 overflows".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Zero,
    Intercept,
    Fifa,
    Apm,
    Augmented,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Zero,
        ModelKind::Intercept,
        ModelKind::Fifa,
        ModelKind::Apm,
        ModelKind::Augmented,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Zero => "zero",
            ModelKind::Intercept => "intercept",
            ModelKind::Fifa => "fifa",
            ModelKind::Apm => "apm",
            ModelKind::Augmented => "augmented",
        }
    }

    /// Models whose fit depends on training segments (everything but Zero).
    pub fn needs_data(&self) -> bool {
        !matches!(self, ModelKind::Zero)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zero" => Ok(ModelKind::Zero),
            "intercept" => Ok(ModelKind::Intercept),
            "fifa" => Ok(ModelKind::Fifa),
            "apm" => Ok(ModelKind::Apm),
            "augmented" => Ok(ModelKind::Augmented),
            other => Err(format!(
                "unknown model '{other}' (expected zero|intercept|fifa|apm|augmented)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub n_segments: usize,
    pub n_matches: usize,
}

/// Exact Gaussian posterior over (β[, home_adv][, α]).
#[derive(Debug, Clone)]
pub struct PosteriorFit {
    pub kind: ModelKind,
    pub mean: DVector<f64>,
    pub precision: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    pub col_index: BTreeMap<crate::data_model::PlayerId, usize>,
    pub home_col: Option<usize>,
    /// Position of α in `mean`/`precision` (augmented only; always last).
    pub alpha_index: Option<usize>,
    pub weighted: bool,
    pub hyper: Hyperparams,
    pub train_summary: TrainSummary,
}

impl PosteriorFit {
    fn build(
        kind: ModelKind,
        precision: DMatrix<f64>,
        rhs: DVector<f64>,
        ds: &DesignSystem,
        alpha_index: Option<usize>,
        weighted: bool,
        hyper: Hyperparams,
    ) -> Result<Self, ModelError> {
        let chol = Cholesky::new(precision.clone()).ok_or_else(|| {
            ModelError::Factorization("posterior precision is not positive definite".into())
        })?;
        let mean = chol.solve(&rhs);
        let mut match_ids: Vec<&str> = ds.row_match.iter().map(String::as_str).collect();
        match_ids.sort_unstable();
        match_ids.dedup();
        Ok(PosteriorFit {
            kind,
            mean,
            precision,
            chol,
            col_index: ds.col_index.clone(),
            home_col: ds.home_col,
            alpha_index,
            weighted,
            hyper,
            train_summary: TrainSummary {
                n_segments: ds.n_rows(),
                n_matches: match_ids.len(),
            },
        })
    }

    /// Rebuild from serialized mean + precision (refactorizes).
    pub fn from_parts(
        kind: ModelKind,
        mean: DVector<f64>,
        precision: DMatrix<f64>,
        col_index: BTreeMap<crate::data_model::PlayerId, usize>,
        home_col: Option<usize>,
        alpha_index: Option<usize>,
        weighted: bool,
        hyper: Hyperparams,
        train_summary: TrainSummary,
    ) -> Result<Self, ModelError> {
        let chol = Cholesky::new(precision.clone()).ok_or_else(|| {
            ModelError::Factorization("stored precision is not positive definite".into())
        })?;
        if mean.len() != precision.nrows() {
            return Err(ModelError::DimensionMismatch(format!(
                "mean has {} entries but precision is {}x{}",
                mean.len(),
                precision.nrows(),
                precision.ncols()
            )));
        }
        Ok(PosteriorFit {
            kind,
            mean,
            precision,
            chol,
            col_index,
            home_col,
            alpha_index,
            weighted,
            hyper,
            train_summary,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Length of the (β[, home]) block the design rows index into.
    pub fn beta_len(&self) -> usize {
        self.dim() - usize::from(self.alpha_index.is_some())
    }

    /// Lower Cholesky factor L of the precision (precision = L Lᵀ).
    pub fn chol_l(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// Dense posterior covariance (precision⁻¹).
    pub fn covariance(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// Diagonal of the posterior covariance.
    pub fn marginal_variances(&self) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.covariance().diagonal().iter().copied())
    }

    pub fn alpha_mean(&self) -> Option<f64> {
        self.alpha_index.map(|i| self.mean[i])
    }

    pub fn alpha_sd(&self) -> Option<f64> {
        self.alpha_index.map(|i| self.covariance()[(i, i)].sqrt())
    }

    /// Solve precision · x = b against the stored factorization.
    pub fn solve_precision(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }
}

/// A fitted model of any kind in the ladder.
#[derive(Debug, Clone)]
pub enum Fit {
    Zero,
    Intercept {
        home_rate: f64,
    },
    Fifa {
        intercept: f64,
        slope: f64,
        ratings: CenteredRatings,
        home_col: Option<usize>,
        col_index: BTreeMap<crate::data_model::PlayerId, usize>,
    },
    Posterior(PosteriorFit),
}

impl Fit {
    pub fn kind(&self) -> ModelKind {
        match self {
            Fit::Zero => ModelKind::Zero,
            Fit::Intercept { .. } => ModelKind::Intercept,
            Fit::Fifa { .. } => ModelKind::Fifa,
            Fit::Posterior(p) => p.kind,
        }
    }
}

/// The data-free baseline: every segment gets a 0 goal differential.
pub fn fit_zero() -> Fit {
    Fit::Zero
}

/// Average home-advantage rate per 90-minute unit, learned on training data.
pub fn fit_intercept(ds: &DesignSystem) -> Result<Fit, ModelError> {
    if ds.n_rows() == 0 {
        return Err(ModelError::EmptyDataset);
    }
    let total_t: f64 = ds.t.sum();
    let total_y: f64 = ds.y.sum();
    Ok(Fit::Intercept {
        home_rate: total_y / total_t,
    })
}

/// Mean centered rating of the home lineup minus the away lineup's, computed
/// from a signed design row (the home-advantage column is skipped).
pub fn lineup_rating_gap(
    row: &[(usize, f64)],
    r: &DVector<f64>,
    home_col: Option<usize>,
) -> f64 {
    let mut home_sum = 0.0;
    let mut home_n = 0usize;
    let mut away_sum = 0.0;
    let mut away_n = 0usize;
    for &(c, v) in row {
        if Some(c) == home_col {
            continue;
        }
        if v > 0.0 {
            home_sum += r[c];
            home_n += 1;
        } else if v < 0.0 {
            away_sum += r[c];
            away_n += 1;
        }
    }
    let home_mean = if home_n > 0 { home_sum / home_n as f64 } else { 0.0 };
    let away_mean = if away_n > 0 { away_sum / away_n as f64 } else { 0.0 };
    home_mean - away_mean
}

/// FIFA-only baseline: weighted least squares of the per-unit-time response
/// y/t on the lineup rating gap g, with intercept and weights t.
pub fn fit_fifa(ds: &DesignSystem, r: &CenteredRatings) -> Result<Fit, ModelError> {
    if ds.n_rows() == 0 {
        return Err(ModelError::EmptyDataset);
    }
    let n = ds.n_rows();
    let mut s_t = 0.0;
    let mut s_tg = 0.0;
    let mut s_tgg = 0.0;
    let mut s_y = 0.0;
    let mut s_gy = 0.0;
    let mut g_min = f64::INFINITY;
    let mut g_max = f64::NEG_INFINITY;
    for i in 0..n {
        let g = lineup_rating_gap(ds.x.row(i), &r.r, ds.home_col);
        let t = ds.t[i];
        s_t += t;
        s_tg += t * g;
        s_tgg += t * g * g;
        s_y += ds.y[i];
        s_gy += g * ds.y[i];
        g_min = g_min.min(g);
        g_max = g_max.max(g);
    }
    // Weighted variance of g; zero means the predictor is constant.
    let gvar = s_tgg - s_tg * s_tg / s_t;
    let scale = s_tgg.max(s_t).max(1.0);
    if gvar <= 1e-12 * scale {
        return Err(ModelError::DegenerateDesign(format!(
            "rating-gap predictor is constant (range {g_min}..{g_max})"
        )));
    }
    let det = s_t * s_tgg - s_tg * s_tg;
    let intercept = (s_tgg * s_y - s_tg * s_gy) / det;
    let slope = (s_t * s_gy - s_tg * s_y) / det;
    Ok(Fit::Fifa {
        intercept,
        slope,
        ratings: r.clone(),
        home_col: ds.home_col,
        col_index: ds.col_index.clone(),
    })
}

/// Ridge solution: argmin ‖y − Xβ‖² + λ‖β‖², via (XᵀX + λI)β = Xᵀy.
pub fn fit_ridge(ds: &DesignSystem, lambda: f64) -> Result<DVector<f64>, ModelError> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(ModelError::InvalidHyperparams(format!(
            "ridge penalty must be finite and positive, got {lambda}"
        )));
    }
    let ones = vec![1.0; ds.n_rows()];
    let mut a = ds.x.weighted_gram(&ones);
    for i in 0..ds.n_cols() {
        a[(i, i)] += lambda;
    }
    let b = ds.x.weighted_rhs(&ds.y, &ones);
    let chol = Cholesky::new(a)
        .ok_or_else(|| ModelError::Factorization("ridge normal matrix is not SPD".into()))?;
    Ok(chol.solve(&b))
}

/// Weighted ridge with per-row weights w: (XᵀWX + λI)β = XᵀWy.
pub fn fit_ridge_weighted(
    x: &crate::linalg::SparseRowMatrix,
    y: &DVector<f64>,
    weights: &[f64],
    lambda: f64,
) -> Result<DVector<f64>, ModelError> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(ModelError::InvalidHyperparams(format!(
            "ridge penalty must be finite and positive, got {lambda}"
        )));
    }
    let mut a = x.weighted_gram(weights);
    for i in 0..x.ncols() {
        a[(i, i)] += lambda;
    }
    let b = x.weighted_rhs(y, weights);
    let chol = Cholesky::new(a)
        .ok_or_else(|| ModelError::Factorization("ridge normal matrix is not SPD".into()))?;
    Ok(chol.solve(&b))
}

/// Likelihood gram weights: 1/σ² per row, scaled by t in the time-weighted
/// model (y | β ~ N(tXβ, tσ²) contributes t·xxᵀ/σ² to the precision).
fn likelihood_weights(ds: &DesignSystem, h: &Hyperparams, weighted: bool) -> Vec<f64> {
    let inv_s2 = 1.0 / (h.sigma * h.sigma);
    (0..ds.n_rows())
        .map(|i| if weighted { ds.t[i] * inv_s2 } else { inv_s2 })
        .collect()
}

/// Prior precision diagonal for the (β[, home]) block.
fn prior_diag(ds: &DesignSystem, h: &Hyperparams) -> Vec<f64> {
    let inv_tau2 = 1.0 / (h.tau * h.tau);
    let inv_tauh2 = 1.0 / (h.tau_home * h.tau_home);
    (0..ds.n_cols())
        .map(|c| {
            if Some(c) == ds.home_col {
                inv_tauh2
            } else {
                inv_tau2
            }
        })
        .collect()
}

/// Exact Gaussian posterior of the zero-mean APM model.
///
/// Both likelihood variants share the same right-hand side Xᵀy/σ²: the
/// time-weighted likelihood scales mean and variance by t, which cancels.
pub fn fit_apm_bayes(
    ds: &DesignSystem,
    h: &Hyperparams,
    weighted: bool,
) -> Result<PosteriorFit, ModelError> {
    h.validate()?;
    let w = likelihood_weights(ds, h, weighted);
    let mut precision = ds.x.weighted_gram(&w);
    for (c, d) in prior_diag(ds, h).into_iter().enumerate() {
        precision[(c, c)] += d;
    }
    let inv_s2 = 1.0 / (h.sigma * h.sigma);
    let rhs_w = vec![inv_s2; ds.n_rows()];
    let rhs = ds.x.weighted_rhs(&ds.y, &rhs_w);
    PosteriorFit::build(ModelKind::Apm, precision, rhs, ds, None, weighted, *h)
}

/// Exact joint Gaussian posterior over (β[, home], α) for Augmented APM:
/// β | α ~ N(α·r, τ²I), α ~ N(μ_α, σ_α²), home column prior N(0, τ_home²).
pub fn fit_augmented(
    ds: &DesignSystem,
    r: &CenteredRatings,
    h: &Hyperparams,
    weighted: bool,
) -> Result<PosteriorFit, ModelError> {
    h.validate()?;
    let p = ds.n_players();
    if r.r.len() != p {
        return Err(ModelError::DimensionMismatch(format!(
            "ratings vector has {} entries for {} players",
            r.r.len(),
            p
        )));
    }
    let ncols = ds.n_cols();
    let dim = ncols + 1;
    let alpha = ncols;
    let inv_tau2 = 1.0 / (h.tau * h.tau);
    let inv_sa2 = 1.0 / (h.sigma_alpha * h.sigma_alpha);

    let w = likelihood_weights(ds, h, weighted);
    let gram = ds.x.weighted_gram(&w);

    let mut precision = DMatrix::zeros(dim, dim);
    precision.view_mut((0, 0), (ncols, ncols)).copy_from(&gram);
    for (c, d) in prior_diag(ds, h).into_iter().enumerate() {
        precision[(c, c)] += d;
    }
    let mut rtr = 0.0;
    for c in 0..p {
        // Player columns only; the home column has no rating.
        let cross = -r.r[c] * inv_tau2;
        precision[(c, alpha)] = cross;
        precision[(alpha, c)] = cross;
        rtr += r.r[c] * r.r[c];
    }
    precision[(alpha, alpha)] = rtr * inv_tau2 + inv_sa2;

    // Prior precision times prior mean (μ_α·r, 0, μ_α) collapses to a single
    // nonzero entry μ_α/σ_α² in the α slot; the rest is the likelihood term.
    let inv_s2 = 1.0 / (h.sigma * h.sigma);
    let rhs_w = vec![inv_s2; ds.n_rows()];
    let xty = ds.x.weighted_rhs(&ds.y, &rhs_w);
    let mut rhs = DVector::zeros(dim);
    rhs.rows_mut(0, ncols).copy_from(&xty);
    rhs[alpha] = h.mu_alpha * inv_sa2;

    PosteriorFit::build(
        ModelKind::Augmented,
        precision,
        rhs,
        ds,
        Some(alpha),
        weighted,
        *h,
    )
}

/// Expected goal differential of one segment row under any fit.
pub fn predict_segment(fit: &Fit, row: &[(usize, f64)], t: f64) -> Result<f64, ModelError> {
    match fit {
        Fit::Zero => Ok(0.0),
        Fit::Intercept { home_rate } => Ok(home_rate * t),
        Fit::Fifa {
            intercept,
            slope,
            ratings,
            home_col,
            ..
        } => {
            if let Some(&(c, _)) = row.iter().max_by_key(|&&(c, _)| c) {
                let player_cols = ratings.r.len();
                let limit = home_col.map_or(player_cols, |h| h.max(player_cols - 1) + 1);
                if c >= limit {
                    return Err(ModelError::DimensionMismatch(format!(
                        "row column {c} outside fit dimension {limit}"
                    )));
                }
            }
            let g = lineup_rating_gap(row, &ratings.r, *home_col);
            Ok((intercept + slope * g) * t)
        }
        Fit::Posterior(p) => {
            let beta_len = p.beta_len();
            let mut s = 0.0;
            for &(c, v) in row {
                if c >= beta_len {
                    return Err(ModelError::DimensionMismatch(format!(
                        "row column {c} outside fit dimension {beta_len}"
                    )));
                }
                s += v * p.mean[c];
            }
            Ok(if p.weighted { t * s } else { s })
        }
    }
}

/// Expected match goal differential: the sum over the match's segment rows.
pub fn predict_match(fit: &Fit, ds: &DesignSystem, rows: &[usize]) -> Result<f64, ModelError> {
    let mut total = 0.0;
    for &i in rows {
        total += predict_segment(fit, ds.x.row(i), ds.t[i])?;
    }
    Ok(total)
}

/// Fit request: which rung of the ladder, under which configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub weighted: bool,
    pub hyper: Hyperparams,
    pub include_home_adv: bool,
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        ModelSpec {
            kind,
            weighted: false,
            hyper: Hyperparams::default(),
            include_home_adv: true,
        }
    }

    /// Label used in reports: the kind, plus a marker for weighted variants.
    pub fn label(&self) -> String {
        if self.weighted {
            format!("{}_weighted", self.kind)
        } else {
            self.kind.to_string()
        }
    }
}

/// Dispatch a single fit of the requested kind.
pub fn fit_spec(
    spec: &ModelSpec,
    ds: &DesignSystem,
    ratings: &CenteredRatings,
) -> Result<Fit, ModelError> {
    match spec.kind {
        ModelKind::Zero => Ok(fit_zero()),
        ModelKind::Intercept => fit_intercept(ds),
        ModelKind::Fifa => fit_fifa(ds, ratings),
        ModelKind::Apm => Ok(Fit::Posterior(fit_apm_bayes(ds, &spec.hyper, spec.weighted)?)),
        ModelKind::Augmented => Ok(Fit::Posterior(fit_augmented(
            ds,
            ratings,
            &spec.hyper,
            spec.weighted,
        )?)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SparseRowMatrix;
    use crate::testutil::synthetic_system;
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;

    /// One segment, two players: X = [[1, −1]], y = [1], t = [1].
    fn tiny_system() -> DesignSystem {
        let mut x = SparseRowMatrix::new(2);
        x.push_row(vec![(0, 1.0), (1, -1.0)]);
        DesignSystem {
            x,
            y: DVector::from_vec(vec![1.0]),
            t: DVector::from_vec(vec![1.0]),
            col_index: [("p1".into(), 0), ("p2".into(), 1)].into_iter().collect(),
            home_col: None,
            row_match: vec!["m1".into()],
        }
    }

    fn empty_system(p: usize) -> DesignSystem {
        DesignSystem {
            x: SparseRowMatrix::new(p),
            y: DVector::zeros(0),
            t: DVector::zeros(0),
            col_index: (0..p)
                .map(|i| (format!("p{i}").as_str().into(), i))
                .collect(),
            home_col: None,
            row_match: vec![],
        }
    }

    #[test]
    fn ridge_matches_hand_solved_two_by_two() {
        // (XᵀX + 100 I) β = Xᵀy with X = [[1,−1]], y = [1] gives
        // β = (1/102, −1/102).
        let ds = tiny_system();
        let beta = fit_ridge(&ds, 100.0).unwrap();
        assert_abs_diff_eq!(beta[0], 1.0 / 102.0, epsilon = 1e-14);
        assert_abs_diff_eq!(beta[1], -1.0 / 102.0, epsilon = 1e-14);
    }

    #[test]
    fn ridge_zero_response_gives_zero_coefficients() {
        let mut ds = tiny_system();
        ds.y[0] = 0.0;
        let beta = fit_ridge(&ds, 100.0).unwrap();
        assert_eq!(beta[0], 0.0);
        assert_eq!(beta[1], 0.0);
    }

    #[test]
    fn ridge_huge_penalty_shrinks_to_zero() {
        let ds = tiny_system();
        let beta = fit_ridge(&ds, 1e12).unwrap();
        assert!(beta.amax() < 1e-9);
    }

    #[test]
    fn apm_posterior_mean_matches_hand_solve_weighted_or_not() {
        let ds = tiny_system();
        let h = Hyperparams::default();
        for weighted in [false, true] {
            let fit = fit_apm_bayes(&ds, &h, weighted).unwrap();
            assert_abs_diff_eq!(fit.mean[0], 1.0 / 102.0, epsilon = 1e-12);
            assert_abs_diff_eq!(fit.mean[1], -1.0 / 102.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn apm_without_data_returns_the_prior() {
        let ds = empty_system(3);
        let h = Hyperparams::default();
        let fit = fit_apm_bayes(&ds, &h, false).unwrap();
        assert_eq!(fit.mean, DVector::zeros(3));
        let vars = fit.marginal_variances();
        for v in vars.iter() {
            assert_abs_diff_eq!(*v, h.tau * h.tau, epsilon = 1e-14);
        }
    }

    #[test]
    fn apm_mean_equals_ridge_on_random_instances() {
        // Ridge/MAP equivalence against the independent fit_ridge path.
        for seed in 0..50u64 {
            let ds = synthetic_system(seed, 40, 12, false);
            let h = Hyperparams::default();
            let ridge = fit_ridge(&ds, h.lambda()).unwrap();
            let bayes = fit_apm_bayes(&ds, &h, false).unwrap();
            assert!((ridge - bayes.mean).amax() < 1e-8, "seed {seed}");
        }
    }

    #[test]
    fn weighted_apm_equals_sqrt_t_transform_ridge() {
        // Eq. 4 MAP computed directly vs ridge on y/t with weights t.
        for seed in 0..50u64 {
            let ds = synthetic_system(seed, 60, 10, false);
            let h = Hyperparams::default();
            let direct = fit_apm_bayes(&ds, &h, true).unwrap();
            let y_over_t =
                DVector::from_iterator(ds.n_rows(), (0..ds.n_rows()).map(|i| ds.y[i] / ds.t[i]));
            let weights: Vec<f64> = ds.t.iter().copied().collect();
            let transformed =
                fit_ridge_weighted(&ds.x, &y_over_t, &weights, h.lambda()).unwrap();
            assert!((transformed - direct.mean).amax() < 1e-8, "seed {seed}");
        }
    }

    #[test]
    fn augmented_with_zero_ratings_collapses_to_apm() {
        let ds = synthetic_system(3, 50, 8, true);
        let h = Hyperparams::default();
        let r = crate::design::CenteredRatings::zeros(8);
        let apm = fit_apm_bayes(&ds, &h, false).unwrap();
        let aug = fit_augmented(&ds, &r, &h, false).unwrap();
        let beta = aug.mean.rows(0, ds.n_cols()).clone_owned();
        assert!((beta - &apm.mean).amax() < 1e-10);
        // Marginal variances of β match, and α stays at its prior.
        let va = apm.marginal_variances();
        let vg = aug.marginal_variances();
        for c in 0..ds.n_cols() {
            assert_abs_diff_eq!(va[c], vg[c], epsilon = 1e-10);
        }
        assert_abs_diff_eq!(aug.alpha_mean().unwrap(), h.mu_alpha, epsilon = 1e-12);
        assert_abs_diff_eq!(
            aug.alpha_sd().unwrap(),
            h.sigma_alpha,
            epsilon = 1e-10
        );
    }

    #[test]
    fn collinear_twins_are_split_by_ratings() {
        // Players 0 and 1 always play together at home against 4 and 5, so
        // outcomes alone cannot separate them. Players 2 and 3 face each
        // other head to head; the better-rated one keeps winning, which
        // identifies a positive rating-to-effect scale.
        let mut x = SparseRowMatrix::new(6);
        let mut y = Vec::new();
        for _ in 0..6 {
            x.push_row(vec![(0, 1.0), (1, 1.0), (4, -1.0), (5, -1.0)]);
            y.push(1.0);
        }
        for _ in 0..10 {
            x.push_row(vec![(2, 1.0), (3, -1.0)]);
            y.push(2.0);
        }
        let n = x.nrows();
        let ds = DesignSystem {
            x,
            y: DVector::from_vec(y),
            t: DVector::from_element(n, 1.0),
            col_index: (0..6).map(|i| (format!("p{i}").as_str().into(), i)).collect(),
            home_col: None,
            row_match: (0..n).map(|i| format!("m{i}")).collect(),
        };
        let h = Hyperparams::default();
        let apm = fit_apm_bayes(&ds, &h, false).unwrap();
        assert!((apm.mean[0] - apm.mean[1]).abs() < 1e-10);

        let r = crate::design::CenteredRatings {
            r: DVector::from_vec(vec![5.0, -5.0, 10.0, -10.0, 0.0, 0.0]),
            rated_mask: vec![true, true, true, true, false, false],
        };
        let aug = fit_augmented(&ds, &r, &h, false).unwrap();
        assert!(
            aug.alpha_mean().unwrap() > 0.0,
            "head-to-head data should identify a positive scale"
        );
        assert!(
            aug.mean[0] > aug.mean[1],
            "higher-rated twin should take more credit: {} vs {}",
            aug.mean[0],
            aug.mean[1]
        );
    }

    #[test]
    fn home_away_relabeling_negates_the_posterior_mean() {
        let ds = synthetic_system(11, 40, 9, false);
        let mut x = SparseRowMatrix::new(ds.n_cols());
        for i in 0..ds.n_rows() {
            x.push_row(ds.x.row(i).iter().map(|&(c, v)| (c, -v)).collect());
        }
        // Relabeling sides while keeping the stated goal differential
        // negates every effect.
        let mut mirrored = ds.clone();
        mirrored.x = x.clone();
        // Relabeling sides *and* restating the differential from the new
        // home side's perspective is a pure renaming: nothing moves.
        let mut renamed = ds.clone();
        renamed.x = x;
        renamed.y = -ds.y.clone();
        let h = Hyperparams::default();
        for weighted in [false, true] {
            let a = fit_apm_bayes(&ds, &h, weighted).unwrap();
            let b = fit_apm_bayes(&mirrored, &h, weighted).unwrap();
            let c = fit_apm_bayes(&renamed, &h, weighted).unwrap();
            assert!((&a.mean + &b.mean).amax() < 1e-10);
            assert!((&a.mean - &c.mean).amax() < 1e-10);
        }
    }

    #[test]
    fn posterior_variances_never_exceed_prior_variances() {
        let ds = synthetic_system(21, 80, 10, true);
        let h = Hyperparams::default();
        let fit = fit_apm_bayes(&ds, &h, false).unwrap();
        let vars = fit.marginal_variances();
        for (c, v) in vars.iter().enumerate() {
            let prior = if Some(c) == ds.home_col {
                h.tau_home * h.tau_home
            } else {
                h.tau * h.tau
            };
            assert!(*v <= prior + 1e-12, "col {c}: {v} > {prior}");
        }
    }

    #[test]
    fn intercept_rate_is_ratio_of_sums() {
        let mut x = SparseRowMatrix::new(2);
        x.push_row(vec![(0, 1.0), (1, -1.0)]);
        x.push_row(vec![(0, 1.0), (1, -1.0)]);
        let ds = DesignSystem {
            x,
            y: DVector::from_vec(vec![1.0, 0.0]),
            t: DVector::from_vec(vec![0.5, 0.5]),
            col_index: [("p1".into(), 0), ("p2".into(), 1)].into_iter().collect(),
            home_col: None,
            row_match: vec!["m1".into(), "m2".into()],
        };
        let fit = fit_intercept(&ds).unwrap();
        let Fit::Intercept { home_rate } = fit else {
            panic!()
        };
        assert_abs_diff_eq!(home_rate, 1.0);
        // A 45-minute segment predicts half the rate.
        let pred = predict_segment(&Fit::Intercept { home_rate }, &[], 0.5).unwrap();
        assert_abs_diff_eq!(pred, 0.5);
    }

    #[test]
    fn intercept_single_full_segment() {
        let ds = tiny_system();
        let Fit::Intercept { home_rate } = fit_intercept(&ds).unwrap() else {
            panic!()
        };
        assert_abs_diff_eq!(home_rate, 1.0);
    }

    #[test]
    fn intercept_all_zero_matches_zero_model() {
        let mut ds = tiny_system();
        ds.y[0] = 0.0;
        let Fit::Intercept { home_rate } = fit_intercept(&ds).unwrap() else {
            panic!()
        };
        assert_eq!(home_rate, 0.0);
    }

    #[test]
    fn fifa_recovers_noiseless_linear_signal() {
        // y = 0.1·g·t exactly; WLS must recover slope 0.1, intercept 0.
        let mut ds = synthetic_system(5, 60, 6, false);
        let r = crate::design::CenteredRatings {
            r: DVector::from_vec(vec![8.0, -3.0, 5.0, -10.0, 1.0, -1.0]),
            rated_mask: vec![true; 6],
        };
        for i in 0..ds.n_rows() {
            let g = lineup_rating_gap(ds.x.row(i), &r.r, None);
            ds.y[i] = 0.1 * g * ds.t[i];
        }
        let Fit::Fifa {
            intercept, slope, ..
        } = fit_fifa(&ds, &r).unwrap()
        else {
            panic!()
        };
        assert_abs_diff_eq!(slope, 0.1, epsilon = 1e-10);
        assert_abs_diff_eq!(intercept, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn fifa_constant_predictor_is_degenerate() {
        let ds = synthetic_system(5, 20, 6, false);
        let r = crate::design::CenteredRatings::zeros(6);
        match fit_fifa(&ds, &r) {
            Err(ModelError::DegenerateDesign(_)) => {}
            other => panic!("expected DegenerateDesign, got {other:?}"),
        }
    }

    #[test]
    fn prediction_examples() {
        let ds = tiny_system();
        let h = Hyperparams::default();

        let zero = fit_zero();
        assert_eq!(predict_segment(&zero, ds.x.row(0), 1.0).unwrap(), 0.0);

        let apm = Fit::Posterior(fit_apm_bayes(&ds, &h, false).unwrap());
        let pred = predict_segment(&apm, ds.x.row(0), 1.0).unwrap();
        assert_abs_diff_eq!(pred, 2.0 / 102.0, epsilon = 1e-12);

        let wfit = Fit::Posterior(fit_apm_bayes(&ds, &h, true).unwrap());
        let p_full = predict_segment(&wfit, ds.x.row(0), 1.0).unwrap();
        let p_half = predict_segment(&wfit, ds.x.row(0), 0.5).unwrap();
        assert_abs_diff_eq!(p_half, p_full / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn predict_match_sums_segments() {
        let ds = synthetic_system(9, 12, 5, false);
        let h = Hyperparams::default();
        let fit = Fit::Posterior(fit_apm_bayes(&ds, &h, false).unwrap());
        let rows: Vec<usize> = (0..3).collect();
        let total = predict_match(&fit, &ds, &rows).unwrap();
        let by_hand: f64 = rows
            .iter()
            .map(|&i| predict_segment(&fit, ds.x.row(i), ds.t[i]).unwrap())
            .sum();
        assert_abs_diff_eq!(total, by_hand);
    }

    #[test]
    fn out_of_range_row_column_is_a_dimension_error() {
        let ds = tiny_system();
        let h = Hyperparams::default();
        let fit = Fit::Posterior(fit_apm_bayes(&ds, &h, false).unwrap());
        match predict_segment(&fit, &[(5, 1.0)], 1.0) {
            Err(ModelError::DimensionMismatch(_)) => {}
            other => panic!("expected DimensionMismatch, got {other:?}"),
        }
    }

    #[test]
    fn invalid_hyperparams_are_rejected() {
        let mut h = Hyperparams::default();
        h.tau = 0.0;
        assert!(h.validate().is_err());
        h = Hyperparams::default();
        h.sigma = f64::NAN;
        assert!(h.validate().is_err());
        assert!(Hyperparams::default().validate().is_ok());
        assert_abs_diff_eq!(Hyperparams::default().lambda(), 100.0);
    }
}
