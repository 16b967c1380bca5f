//! Implementations of the subcommands. Each takes fully resolved parameters,
//! writes its artifacts plus `run_config.toml` into the output directory, and
//! returns the process exit code (0 success, 2 validation violations;
//! errors bubble up and exit 1).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use augapm::data_model::{validate_dataset, Dataset, PlayerId, RatingsTable};
use augapm::design::{build_design, center_ratings, write_triplets};
use augapm::eval::{backtest, kfold_cv, monthly_cutoffs, BacktestSchedule};
use augapm::ingest::{
    link_players, parse_events, parse_overrides, parse_ratings, write_events,
};
use augapm::models::{fit_spec, Fit, ModelSpec};
use augapm::posterior::{credible_intervals, rank_summary, sample_posterior, write_rank_csv};
use augapm::serialize::{archive_from_json, archive_to_json, fit_from_json, fit_to_json, DatasetArchive};
use augapm::sim::generate_league;
use augapm::ModelKind;

use crate::params::*;

fn ensure_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_archive(path: &Path) -> Result<DatasetArchive> {
    if path.as_os_str().is_empty() {
        bail!("missing --dataset");
    }
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    archive_from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Last team each player was listed for, from the event stream.
fn player_teams(d: &Dataset) -> BTreeMap<PlayerId, String> {
    let mut teams = BTreeMap::new();
    for m in &d.matches {
        for e in &m.events {
            if let (Some(pid), Some(side)) = (&e.player_id, e.side) {
                let team = match side {
                    augapm::Side::Home => &m.home_team,
                    augapm::Side::Away => &m.away_team,
                };
                teams.insert(pid.clone(), team.clone());
            }
        }
    }
    teams
}

fn model_specs(models: &[String], weighted: bool, no_home_adv: bool, hyper: HyperParams) -> Result<Vec<ModelSpec>> {
    if models.is_empty() {
        bail!("empty model list");
    }
    models
        .iter()
        .map(|name| {
            let kind: ModelKind = name.parse().map_err(anyhow::Error::msg)?;
            Ok(ModelSpec {
                kind,
                weighted,
                hyper: hyper.to_model(),
                include_home_adv: !no_home_adv,
            })
        })
        .collect()
}

pub fn cmd_ingest(p: &IngestParams) -> Result<u8> {
    if p.events.as_os_str().is_empty() {
        bail!("missing --events");
    }
    ensure_out(&p.out)?;
    let matches = parse_events(&p.events)?;
    let (ratings, names) = match &p.ratings {
        Some(path) => parse_ratings(path, &p.season)?,
        None => (
            RatingsTable {
                season: p.season.clone(),
                entries: BTreeMap::new(),
            },
            BTreeMap::new(),
        ),
    };
    let overrides = match &p.overrides {
        Some(path) => parse_overrides(path)?,
        None => BTreeMap::new(),
    };
    let (dataset, report) = link_players(matches, &ratings, &names, &overrides)?;
    let violations = validate_dataset(&dataset);

    let archive = DatasetArchive {
        dataset,
        link_report: Some(report.clone()),
        violations: violations.clone(),
    };
    write_text(&p.out, "dataset.json", &archive_to_json(&archive)?)?;

    let mut text = String::new();
    text.push_str(&format!(
        "matches: {}\nsegments: {}\nplayers: {}\nrated (linked): {}\noverrides used: {}\n",
        archive.dataset.matches.len(),
        archive.dataset.segments.len(),
        archive.dataset.n_players(),
        report.matched,
        report.overrides_used,
    ));
    if report.unmatched_players.is_empty() {
        text.push_str("unmatched players: none\n");
    } else {
        text.push_str("unmatched players:\n");
        for pid in &report.unmatched_players {
            text.push_str(&format!("  {pid}\n"));
        }
    }
    if violations.is_empty() {
        text.push_str("violations: none\n");
    } else {
        text.push_str(&format!("violations: {}\n", violations.len()));
        for v in &violations {
            text.push_str(&format!("  {v}\n"));
        }
    }
    write_text(&p.out, "link_report.txt", &text)?;
    write_run_config(&p.out, p)?;
    print!("{text}");

    Ok(if violations.is_empty() { 0 } else { 2 })
}

pub fn cmd_fit(p: &FitParams) -> Result<u8> {
    ensure_out(&p.out)?;
    let archive = read_archive(&p.dataset)?;
    if !archive.violations.is_empty() {
        eprintln!(
            "warning: dataset carries {} validation violation(s)",
            archive.violations.len()
        );
    }
    let kind: ModelKind = p.model.parse().map_err(anyhow::Error::msg)?;
    let ds = build_design(&archive.dataset, !p.no_home_adv)?;
    let ratings = center_ratings(&archive.dataset);
    if kind == ModelKind::Augmented && ratings.r.amax() == 0.0 {
        eprintln!("warning: all centered ratings are zero; augmented output matches apm");
    }
    let spec = ModelSpec {
        kind,
        weighted: p.weighted,
        hyper: p.hyper.to_model(),
        include_home_adv: !p.no_home_adv,
    };
    let fit = fit_spec(&spec, &ds, &ratings)?;
    if let Fit::Posterior(post) = &fit {
        if let (Some(am), Some(asd)) = (post.alpha_mean(), post.alpha_sd()) {
            println!("alpha posterior: mean {am}, sd {asd}");
        }
    }
    write_text(&p.out, "fit.json", &fit_to_json(&fit, p.covariance)?)?;
    write_run_config(&p.out, p)?;
    println!(
        "fit {} on {} segments / {} matches -> {}",
        spec.label(),
        ds.n_rows(),
        archive.dataset.matches.len(),
        p.out.join("fit.json").display()
    );
    Ok(0)
}

pub fn cmd_rank(p: &RankParams) -> Result<u8> {
    ensure_out(&p.out)?;
    if p.fit.as_os_str().is_empty() {
        bail!("missing --fit");
    }
    let text =
        fs::read_to_string(&p.fit).with_context(|| format!("reading {}", p.fit.display()))?;
    let fit = fit_from_json(&text)?;
    let Fit::Posterior(post) = &fit else {
        bail!("rank requires an apm or augmented fit; got '{}'", fit.kind());
    };
    let archive = read_archive(&p.dataset)?;
    let teams = player_teams(&archive.dataset);

    let draws = sample_posterior(post, p.draws, p.seed)?;
    let summary = rank_summary(&draws, p.top_k)?;
    let mut csv = Vec::new();
    write_rank_csv(
        &summary,
        &archive.dataset.names,
        &teams,
        &archive.dataset.ratings,
        &mut csv,
    )?;
    write_text(&p.out, "rankings.csv", &String::from_utf8(csv)?)?;

    // Analytic marginal intervals at the requested level, player rows only.
    let intervals = credible_intervals(post, p.level)?;
    let mut text = String::from("player_id,post_mean,lo,hi\n");
    for (pid, &col) in &post.col_index {
        if Some(col) == post.home_col {
            continue;
        }
        let (lo, hi) = intervals[col];
        text.push_str(&format!("{pid},{},{lo},{hi}\n", post.mean[col]));
    }
    write_text(&p.out, "intervals.csv", &text)?;
    write_run_config(&p.out, p)?;
    println!(
        "ranked {} players from {} draws -> {}",
        summary.players.len(),
        draws.n_draws(),
        p.out.join("rankings.csv").display()
    );
    Ok(0)
}

fn write_eval_outputs(
    out: &Path,
    rows_name: &str,
    report: &augapm::eval::EvalReport,
) -> Result<()> {
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    write_text(out, rows_name, &String::from_utf8(csv)?)?;
    let mut summary = String::from("model,mean_mse\n");
    for (model, mse) in report.per_model_mean_mse() {
        summary.push_str(&format!("{model},{mse}\n"));
        println!("{model}: mean MSE {mse}");
    }
    write_text(out, "summary.csv", &summary)?;
    Ok(())
}

pub fn cmd_cv(p: &CvParams) -> Result<u8> {
    ensure_out(&p.out)?;
    let archive = read_archive(&p.dataset)?;
    let specs = model_specs(&p.models, p.weighted, p.no_home_adv, p.hyper)?;
    let report = kfold_cv(&archive.dataset, &specs, p.k, p.seed)?;
    write_eval_outputs(&p.out, "cv.csv", &report)?;
    write_run_config(&p.out, p)?;
    Ok(0)
}

pub fn cmd_backtest(p: &BacktestParams) -> Result<u8> {
    ensure_out(&p.out)?;
    let archive = read_archive(&p.dataset)?;
    let specs = model_specs(&p.models, p.weighted, p.no_home_adv, p.hyper)?;
    let cutoffs = monthly_cutoffs(&archive.dataset, p.horizon, p.start_month, p.end_month);
    if cutoffs.is_empty() {
        bail!("no monthly cutoffs fall inside the dataset's date range");
    }
    let schedule = BacktestSchedule {
        cutoffs,
        horizon_months: p.horizon,
    };
    let report = backtest(&archive.dataset, &specs, &schedule)?;
    write_eval_outputs(&p.out, "backtest.csv", &report)?;
    let mut monthly = String::from("model,month,mean_mse,n_games\n");
    for (model, month, mse, n_games) in report.monthly_average() {
        monthly.push_str(&format!("{model},{month},{mse},{n_games}\n"));
    }
    write_text(&p.out, "backtest_monthly.csv", &monthly)?;
    write_run_config(&p.out, p)?;
    Ok(0)
}

pub fn cmd_simulate(p: &SimulateParams) -> Result<u8> {
    ensure_out(&p.out)?;
    let out = generate_league(&p.to_sim_config())?;

    let mut events = Vec::new();
    write_events(&out.dataset.matches, &mut events)?;
    write_text(&p.out, "events.csv", &String::from_utf8(events)?)?;

    let mut ratings = String::from("player_id,player_name,overall\n");
    for (pid, overall) in &out.dataset.ratings.entries {
        let name = out
            .dataset
            .names
            .get(pid)
            .map(String::as_str)
            .unwrap_or("");
        ratings.push_str(&format!("{pid},{name},{overall}\n"));
    }
    write_text(&p.out, "ratings.csv", &ratings)?;

    write_text(
        &p.out,
        "truth.json",
        &serde_json::to_string_pretty(&out.truth)?,
    )?;
    write_run_config(&p.out, p)?;
    println!(
        "simulated {} matches / {} segments / {} players -> {}",
        out.dataset.matches.len(),
        out.dataset.segments.len(),
        out.dataset.n_players(),
        p.out.display()
    );
    Ok(0)
}

pub fn cmd_design_dump(p: &DesignDumpParams) -> Result<u8> {
    ensure_out(&p.out)?;
    let archive = read_archive(&p.dataset)?;
    let ds = build_design(&archive.dataset, !p.no_home_adv)?;

    let mut triplets = Vec::new();
    write_triplets(&ds, &mut triplets)?;
    write_text(&p.out, "design.csv", &String::from_utf8(triplets)?)?;

    let mut rows = String::from("row,match_id,y,t\n");
    for i in 0..ds.n_rows() {
        rows.push_str(&format!("{i},{},{},{}\n", ds.row_match[i], ds.y[i], ds.t[i]));
    }
    write_text(&p.out, "rows.csv", &rows)?;

    let mut cols = String::from("col,label\n");
    let mut labels: Vec<(usize, String)> = ds
        .col_index
        .iter()
        .map(|(pid, &c)| (c, pid.to_string()))
        .collect();
    if let Some(h) = ds.home_col {
        labels.push((h, "home_adv".into()));
    }
    labels.sort();
    for (c, label) in labels {
        cols.push_str(&format!("{c},{label}\n"));
    }
    write_text(&p.out, "columns.csv", &cols)?;
    write_run_config(&p.out, p)?;
    println!(
        "dumped {} rows x {} cols -> {}",
        ds.n_rows(),
        ds.n_cols(),
        p.out.display()
    );
    Ok(0)
}
