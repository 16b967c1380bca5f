//! Plain-JSON on-disk forms of fits and dataset archives. Everything the
//! pipeline writes is text (CSV or JSON) so runs stay diff-able.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_model::{Dataset, PlayerId, Violation};
use crate::design::CenteredRatings;
use crate::ingest::LinkReport;
use crate::models::{Fit, Hyperparams, ModelError, ModelKind, PosteriorFit, TrainSummary};

#[derive(Debug, Error)]
pub enum SerializeError {
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("fit reconstruction failed: {0}")]
    Model(#[from] ModelError),
    #[error("covariance requires P <= {limit}, fit has {got} columns")]
    CovarianceTooLarge { limit: usize, got: usize },
}

/// Largest dimension for which the dense covariance may be embedded.
pub const COVARIANCE_DIM_LIMIT: usize = 2000;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorDocument {
    pub weighted: bool,
    pub hyper: Hyperparams,
    pub col_index: BTreeMap<PlayerId, usize>,
    pub home_col: Option<usize>,
    pub alpha_index: Option<usize>,
    pub mean: DVector<f64>,
    pub precision: DMatrix<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub covariance: Option<DMatrix<f64>>,
    pub train_summary: TrainSummary,
}

/// Serialized form of any fit in the ladder.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FitDocument {
    Zero,
    Intercept {
        home_rate: f64,
    },
    Fifa {
        intercept: f64,
        slope: f64,
        ratings: CenteredRatings,
        home_col: Option<usize>,
        col_index: BTreeMap<PlayerId, usize>,
    },
    Apm(PosteriorDocument),
    Augmented(PosteriorDocument),
}

fn posterior_document(
    p: &PosteriorFit,
    include_covariance: bool,
) -> Result<PosteriorDocument, SerializeError> {
    let covariance = if include_covariance {
        if p.dim() > COVARIANCE_DIM_LIMIT {
            return Err(SerializeError::CovarianceTooLarge {
                limit: COVARIANCE_DIM_LIMIT,
                got: p.dim(),
            });
        }
        Some(p.covariance())
    } else {
        None
    };
    Ok(PosteriorDocument {
        weighted: p.weighted,
        hyper: p.hyper,
        col_index: p.col_index.clone(),
        home_col: p.home_col,
        alpha_index: p.alpha_index,
        mean: p.mean.clone(),
        precision: p.precision.clone(),
        covariance,
        train_summary: p.train_summary,
    })
}

pub fn fit_to_document(fit: &Fit, include_covariance: bool) -> Result<FitDocument, SerializeError> {
    Ok(match fit {
        Fit::Zero => FitDocument::Zero,
        Fit::Intercept { home_rate } => FitDocument::Intercept {
            home_rate: *home_rate,
        },
        Fit::Fifa {
            intercept,
            slope,
            ratings,
            home_col,
            col_index,
        } => FitDocument::Fifa {
            intercept: *intercept,
            slope: *slope,
            ratings: ratings.clone(),
            home_col: *home_col,
            col_index: col_index.clone(),
        },
        Fit::Posterior(p) => {
            let doc = posterior_document(p, include_covariance)?;
            match p.kind {
                ModelKind::Apm => FitDocument::Apm(doc),
                _ => FitDocument::Augmented(doc),
            }
        }
    })
}

pub fn fit_from_document(doc: FitDocument) -> Result<Fit, SerializeError> {
    Ok(match doc {
        FitDocument::Zero => Fit::Zero,
        FitDocument::Intercept { home_rate } => Fit::Intercept { home_rate },
        FitDocument::Fifa {
            intercept,
            slope,
            ratings,
            home_col,
            col_index,
        } => Fit::Fifa {
            intercept,
            slope,
            ratings,
            home_col,
            col_index,
        },
        FitDocument::Apm(d) | FitDocument::Augmented(d) => {
            let kind = if d.alpha_index.is_some() {
                ModelKind::Augmented
            } else {
                ModelKind::Apm
            };
            Fit::Posterior(PosteriorFit::from_parts(
                kind,
                d.mean,
                d.precision,
                d.col_index,
                d.home_col,
                d.alpha_index,
                d.weighted,
                d.hyper,
                d.train_summary,
            )?)
        }
    })
}

pub fn fit_to_json(fit: &Fit, include_covariance: bool) -> Result<String, SerializeError> {
    let doc = fit_to_document(fit, include_covariance)?;
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn fit_from_json(json: &str) -> Result<Fit, SerializeError> {
    fit_from_document(serde_json::from_str(json)?)
}

/// Dataset archive written by `augapm ingest` and read by every later stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetArchive {
    pub dataset: Dataset,
    pub link_report: Option<LinkReport>,
    pub violations: Vec<Violation>,
}

pub fn archive_to_json(a: &DatasetArchive) -> Result<String, SerializeError> {
    Ok(serde_json::to_string_pretty(a)?)
}

pub fn archive_from_json(json: &str) -> Result<DatasetArchive, SerializeError> {
    Ok(serde_json::from_str(json)?)
}
