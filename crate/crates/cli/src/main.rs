//! `augapm`: segment-level plus-minus player ratings with Gaussian priors,
//! end to end — ingest event/ratings CSVs, fit the model ladder, rank
//! players with posterior uncertainty, cross-validate, backtest, and
//! generate synthetic leagues with known truth.
//!
//! Every flag can also come from a TOML file passed via `--config`; flags
//! win on conflict. Each command writes the fully resolved configuration to
//! `run_config.toml` in its output directory, and re-running with
//! `--config run_config.toml` reproduces the outputs byte for byte.

mod commands;
mod params;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use params::*;

#[derive(Parser)]
#[command(name = "augapm", version, about = "Soccer player ratings from segment-level plus-minus regression")]
struct Cli {
    /// Worker threads for parallel sections (default: all cores). Output is
    /// identical for any thread count.
    #[arg(long, global = true, env = "AUGAPM_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML file supplying defaults for any flag of this subcommand.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct HyperArgs {
    /// Likelihood noise scale σ.
    #[arg(long)]
    sigma: Option<f64>,
    /// Player-effect prior scale τ.
    #[arg(long)]
    tau: Option<f64>,
    /// Prior mean of the rating-to-effect scale α (augmented model).
    #[arg(long)]
    mu_alpha: Option<f64>,
    /// Prior sd of α (augmented model).
    #[arg(long)]
    sigma_alpha: Option<f64>,
    /// Prior sd of the home-advantage effect.
    #[arg(long)]
    tau_home: Option<f64>,
}

impl HyperArgs {
    fn apply(&self, h: &mut HyperParams) {
        override_with(&mut h.sigma, self.sigma);
        override_with(&mut h.tau, self.tau);
        override_with(&mut h.mu_alpha, self.mu_alpha);
        override_with(&mut h.sigma_alpha, self.sigma_alpha);
        override_with(&mut h.tau_home, self.tau_home);
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse event and ratings CSVs, link players, validate, and archive.
    Ingest {
        #[command(flatten)]
        common: Common,
        /// Event CSV (one row per lineup/goal/whistle event).
        #[arg(long)]
        events: Option<PathBuf>,
        /// Ratings CSV (`player_id,player_name,overall`).
        #[arg(long)]
        ratings: Option<PathBuf>,
        /// Name-override CSV (`name,player_id`) for ambiguous links.
        #[arg(long)]
        overrides: Option<PathBuf>,
        /// Season label stored with the ratings.
        #[arg(long)]
        season: Option<String>,
    },
    /// Fit one model from the ladder and write it as JSON.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Dataset archive produced by `ingest`.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// zero | intercept | fifa | apm | augmented.
        #[arg(long)]
        model: Option<String>,
        /// Use the duration-weighted likelihood.
        #[arg(long)]
        weighted: bool,
        /// Drop the home-advantage column.
        #[arg(long)]
        no_home_adv: bool,
        /// Embed the dense posterior covariance in the fit JSON.
        #[arg(long)]
        covariance: bool,
        #[command(flatten)]
        hyper: HyperArgs,
    },
    /// Sample a fitted posterior and write player rankings with uncertainty.
    Rank {
        #[command(flatten)]
        common: Common,
        /// Fit JSON produced by `fit` (apm or augmented).
        #[arg(long)]
        fit: Option<PathBuf>,
        /// Dataset archive, for names, teams, and raw ratings.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Number of posterior draws.
        #[arg(long)]
        draws: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Credible level for the analytic interval export.
        #[arg(long)]
        level: Option<f64>,
        /// k for the top-k membership probability column.
        #[arg(long)]
        top_k: Option<usize>,
    },
    /// K-fold cross-validation of game-level predictions, by match.
    Cv {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Comma-separated model list.
        #[arg(long, value_delimiter = ',')]
        models: Option<Vec<String>>,
        /// Number of folds.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        weighted: bool,
        #[arg(long)]
        no_home_adv: bool,
        #[command(flatten)]
        hyper: HyperArgs,
    },
    /// Chronological backtest: train before each monthly cutoff, score after.
    Backtest {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        models: Option<Vec<String>>,
        /// Test-window length in months.
        #[arg(long)]
        horizon: Option<u32>,
        /// First cutoff month of year (1-12).
        #[arg(long)]
        start_month: Option<u32>,
        /// Last cutoff month of year (1-12).
        #[arg(long)]
        end_month: Option<u32>,
        #[arg(long)]
        weighted: bool,
        #[arg(long)]
        no_home_adv: bool,
        #[command(flatten)]
        hyper: HyperArgs,
    },
    /// Generate a synthetic league (event CSV + ratings CSV + truth JSON).
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n_teams: Option<usize>,
        #[arg(long)]
        squad_size: Option<usize>,
        /// Number of double round-robins.
        #[arg(long)]
        n_rounds: Option<usize>,
        /// Mean substitutions per team per match.
        #[arg(long)]
        subs_per_match: Option<f64>,
        /// True rating-to-effect scale.
        #[arg(long)]
        true_alpha: Option<f64>,
        /// Spread of raw synthetic ratings.
        #[arg(long)]
        rating_noise_sd: Option<f64>,
        #[arg(long)]
        sigma_true: Option<f64>,
        #[arg(long)]
        tau_true: Option<f64>,
        /// True home-advantage effect per 90 minutes.
        #[arg(long)]
        home_adv: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Keep fractional responses instead of rounding to goals.
        #[arg(long)]
        unrounded: bool,
    },
    /// Export the design matrix as triplet/row/column CSVs.
    DesignDump {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        no_home_adv: bool,
    },
}

fn run(cli: Cli) -> Result<u8> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| anyhow::anyhow!("setting thread pool: {e}"))?;
    }
    match cli.cmd {
        Cmd::Ingest {
            common,
            events,
            ratings,
            overrides,
            season,
        } => {
            let mut p: IngestParams = load_config(common.config.as_deref())?;
            p.command = "ingest".into();
            override_with(&mut p.events, events);
            if ratings.is_some() {
                p.ratings = ratings;
            }
            if overrides.is_some() {
                p.overrides = overrides;
            }
            override_with(&mut p.season, season);
            override_with(&mut p.out, common.out);
            commands::cmd_ingest(&p)
        }
        Cmd::Fit {
            common,
            dataset,
            model,
            weighted,
            no_home_adv,
            covariance,
            hyper,
        } => {
            let mut p: FitParams = load_config(common.config.as_deref())?;
            p.command = "fit".into();
            override_with(&mut p.dataset, dataset);
            override_with(&mut p.model, model);
            p.weighted |= weighted;
            p.no_home_adv |= no_home_adv;
            p.covariance |= covariance;
            hyper.apply(&mut p.hyper);
            override_with(&mut p.out, common.out);
            commands::cmd_fit(&p)
        }
        Cmd::Rank {
            common,
            fit,
            dataset,
            draws,
            seed,
            level,
            top_k,
        } => {
            let mut p: RankParams = load_config(common.config.as_deref())?;
            p.command = "rank".into();
            override_with(&mut p.fit, fit);
            override_with(&mut p.dataset, dataset);
            override_with(&mut p.draws, draws);
            override_with(&mut p.seed, seed);
            override_with(&mut p.level, level);
            override_with(&mut p.top_k, top_k);
            override_with(&mut p.out, common.out);
            commands::cmd_rank(&p)
        }
        Cmd::Cv {
            common,
            dataset,
            models,
            k,
            seed,
            weighted,
            no_home_adv,
            hyper,
        } => {
            let mut p: CvParams = load_config(common.config.as_deref())?;
            p.command = "cv".into();
            override_with(&mut p.dataset, dataset);
            override_with(&mut p.models, models);
            override_with(&mut p.k, k);
            override_with(&mut p.seed, seed);
            p.weighted |= weighted;
            p.no_home_adv |= no_home_adv;
            hyper.apply(&mut p.hyper);
            override_with(&mut p.out, common.out);
            commands::cmd_cv(&p)
        }
        Cmd::Backtest {
            common,
            dataset,
            models,
            horizon,
            start_month,
            end_month,
            weighted,
            no_home_adv,
            hyper,
        } => {
            let mut p: BacktestParams = load_config(common.config.as_deref())?;
            p.command = "backtest".into();
            override_with(&mut p.dataset, dataset);
            override_with(&mut p.models, models);
            override_with(&mut p.horizon, horizon);
            if start_month.is_some() {
                p.start_month = start_month;
            }
            if end_month.is_some() {
                p.end_month = end_month;
            }
            p.weighted |= weighted;
            p.no_home_adv |= no_home_adv;
            hyper.apply(&mut p.hyper);
            override_with(&mut p.out, common.out);
            commands::cmd_backtest(&p)
        }
        Cmd::Simulate {
            common,
            n_teams,
            squad_size,
            n_rounds,
            subs_per_match,
            true_alpha,
            rating_noise_sd,
            sigma_true,
            tau_true,
            home_adv,
            seed,
            unrounded,
        } => {
            let mut p: SimulateParams = load_config(common.config.as_deref())?;
            p.command = "simulate".into();
            override_with(&mut p.n_teams, n_teams);
            override_with(&mut p.squad_size, squad_size);
            override_with(&mut p.n_rounds, n_rounds);
            override_with(&mut p.subs_per_match, subs_per_match);
            override_with(&mut p.true_alpha, true_alpha);
            override_with(&mut p.rating_noise_sd, rating_noise_sd);
            override_with(&mut p.sigma_true, sigma_true);
            override_with(&mut p.tau_true, tau_true);
            override_with(&mut p.home_adv, home_adv);
            override_with(&mut p.seed, seed);
            p.unrounded |= unrounded;
            override_with(&mut p.out, common.out);
            commands::cmd_simulate(&p)
        }
        Cmd::DesignDump {
            common,
            dataset,
            no_home_adv,
        } => {
            let mut p: DesignDumpParams = load_config(common.config.as_deref())?;
            p.command = "design-dump".into();
            override_with(&mut p.dataset, dataset);
            p.no_home_adv |= no_home_adv;
            override_with(&mut p.out, common.out);
            commands::cmd_design_dump(&p)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
