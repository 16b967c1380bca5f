//! Resolved per-command run configurations. Each command resolves its
//! parameters from an optional TOML config file plus command-line flags
//! (flags win), then serializes the result next to its outputs so a run can
//! be reproduced from the written file alone.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

/// Write the fully resolved configuration next to the command's outputs.
pub fn write_run_config<T: Serialize>(out_dir: &Path, params: &T) -> Result<()> {
    let text = toml::to_string_pretty(params).context("serializing run config")?;
    let path = out_dir.join("run_config.toml");
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Overwrite `slot` when the command line supplied a value.
pub fn override_with<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestParams {
    pub command: String,
    pub events: PathBuf,
    pub ratings: Option<PathBuf>,
    pub overrides: Option<PathBuf>,
    pub season: String,
    pub out: PathBuf,
}

impl Default for IngestParams {
    fn default() -> Self {
        IngestParams {
            command: "ingest".into(),
            events: PathBuf::new(),
            ratings: None,
            overrides: None,
            season: "unknown".into(),
            out: PathBuf::from("."),
        }
    }
}

/// Shared model hyperparameters, one field per flag.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    pub sigma: f64,
    pub tau: f64,
    pub mu_alpha: f64,
    pub sigma_alpha: f64,
    pub tau_home: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        let h = augapm::Hyperparams::default();
        HyperParams {
            sigma: h.sigma,
            tau: h.tau,
            mu_alpha: h.mu_alpha,
            sigma_alpha: h.sigma_alpha,
            tau_home: h.tau_home,
        }
    }
}

impl HyperParams {
    pub fn to_model(self) -> augapm::Hyperparams {
        augapm::Hyperparams {
            sigma: self.sigma,
            tau: self.tau,
            mu_alpha: self.mu_alpha,
            sigma_alpha: self.sigma_alpha,
            tau_home: self.tau_home,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FitParams {
    pub command: String,
    pub dataset: PathBuf,
    pub model: String,
    pub weighted: bool,
    pub no_home_adv: bool,
    pub covariance: bool,
    #[serde(flatten)]
    pub hyper: HyperParams,
    pub out: PathBuf,
}

impl Default for FitParams {
    fn default() -> Self {
        FitParams {
            command: "fit".into(),
            dataset: PathBuf::new(),
            model: "apm".into(),
            weighted: false,
            no_home_adv: false,
            covariance: false,
            hyper: HyperParams::default(),
            out: PathBuf::from("."),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RankParams {
    pub command: String,
    pub fit: PathBuf,
    pub dataset: PathBuf,
    pub draws: usize,
    pub seed: u64,
    pub level: f64,
    pub top_k: usize,
    pub out: PathBuf,
}

impl Default for RankParams {
    fn default() -> Self {
        RankParams {
            command: "rank".into(),
            fit: PathBuf::new(),
            dataset: PathBuf::new(),
            draws: 10_000,
            seed: 0,
            level: 0.9,
            top_k: 15,
            out: PathBuf::from("."),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CvParams {
    pub command: String,
    pub dataset: PathBuf,
    pub models: Vec<String>,
    pub k: usize,
    pub seed: u64,
    pub weighted: bool,
    pub no_home_adv: bool,
    #[serde(flatten)]
    pub hyper: HyperParams,
    pub out: PathBuf,
}

impl Default for CvParams {
    fn default() -> Self {
        CvParams {
            command: "cv".into(),
            dataset: PathBuf::new(),
            models: vec![
                "zero".into(),
                "intercept".into(),
                "fifa".into(),
                "apm".into(),
                "augmented".into(),
            ],
            k: 10,
            seed: 0,
            weighted: false,
            no_home_adv: false,
            hyper: HyperParams::default(),
            out: PathBuf::from("."),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BacktestParams {
    pub command: String,
    pub dataset: PathBuf,
    pub models: Vec<String>,
    pub horizon: u32,
    pub start_month: Option<u32>,
    pub end_month: Option<u32>,
    pub weighted: bool,
    pub no_home_adv: bool,
    #[serde(flatten)]
    pub hyper: HyperParams,
    pub out: PathBuf,
}

impl Default for BacktestParams {
    fn default() -> Self {
        BacktestParams {
            command: "backtest".into(),
            dataset: PathBuf::new(),
            models: CvParams::default().models,
            horizon: 2,
            start_month: None,
            end_month: None,
            weighted: false,
            no_home_adv: false,
            hyper: HyperParams::default(),
            out: PathBuf::from("."),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateParams {
    pub command: String,
    pub n_teams: usize,
    pub squad_size: usize,
    pub n_rounds: usize,
    pub subs_per_match: f64,
    pub true_alpha: f64,
    pub rating_noise_sd: f64,
    pub sigma_true: f64,
    pub tau_true: f64,
    pub home_adv: f64,
    pub seed: u64,
    pub unrounded: bool,
    pub out: PathBuf,
}

impl Default for SimulateParams {
    fn default() -> Self {
        let c = augapm::sim::SimConfig::default();
        SimulateParams {
            command: "simulate".into(),
            n_teams: c.n_teams,
            squad_size: c.squad_size,
            n_rounds: c.n_rounds,
            subs_per_match: c.subs_per_match,
            true_alpha: c.true_alpha,
            rating_noise_sd: c.rating_noise_sd,
            sigma_true: c.sigma_true,
            tau_true: c.tau_true,
            home_adv: c.home_adv_true,
            seed: c.seed,
            unrounded: !c.round_goals,
            out: PathBuf::from("."),
        }
    }
}

impl SimulateParams {
    pub fn to_sim_config(&self) -> augapm::sim::SimConfig {
        augapm::sim::SimConfig {
            n_teams: self.n_teams,
            squad_size: self.squad_size,
            n_rounds: self.n_rounds,
            subs_per_match: self.subs_per_match,
            true_alpha: self.true_alpha,
            rating_noise_sd: self.rating_noise_sd,
            sigma_true: self.sigma_true,
            tau_true: self.tau_true,
            home_adv_true: self.home_adv,
            seed: self.seed,
            round_goals: !self.unrounded,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignDumpParams {
    pub command: String,
    pub dataset: PathBuf,
    pub no_home_adv: bool,
    pub out: PathBuf,
}

impl Default for DesignDumpParams {
    fn default() -> Self {
        DesignDumpParams {
            command: "design-dump".into(),
            dataset: PathBuf::new(),
            no_home_adv: false,
            out: PathBuf::from("."),
        }
    }
}
