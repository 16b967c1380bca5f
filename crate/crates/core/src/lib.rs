//! Player-rating pipeline for soccer: segment-level plus-minus regression
//! with Gaussian priors, optionally anchored to external player ratings,
//! plus evaluation (cross-validation, chronological backtests), posterior
//! sampling, and a synthetic-league generator for end-to-end checks.

pub mod data_model;
pub mod design;
pub mod eval;
pub mod ingest;
pub mod linalg;
pub mod models;
pub mod posterior;
pub mod serialize;
pub mod sim;
pub mod testutil;

pub use data_model::{Dataset, Match, PlayerId, RatingsTable, Segment, Side};
pub use design::{build_design, center_ratings, segmentize, DesignSystem};
pub use models::{Fit, Hyperparams, ModelKind, ModelSpec, PosteriorFit};
