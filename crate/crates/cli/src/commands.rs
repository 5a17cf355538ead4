//! Implementations behind the subcommands. Each returns the process exit
//! code on success; errors map to codes in `main`.

use std::fs;
use std::path::Path;
use std::thread;

use pricecast_core::{
    build_bp_mlp, build_paper_cnn, build_report, emit_forecast_csv, evaluate_model,
    generate_synthetic, gradcheck_trial, make_windows, mape, parse_price_csv, parse_timestamp,
    persistence_forecast, rmse, serialize_price_csv, split_train_test, train, Checkpoint, Error,
    MetricsRow, Model, ModelKind, NormStats, Prng, Result, RunConfig, Season, SeasonDataset,
    WindowSample,
};

use crate::Command;

pub fn run(cmd: Command) -> Result<u8> {
    match cmd {
        Command::Synth {
            out,
            start,
            hours,
            seed,
        } => cmd_synth(&out, &start, hours, seed),
        Command::Train {
            data,
            config,
            model,
            season,
            out,
        } => cmd_train(&data, config.as_deref(), &model, &season, &out),
        Command::Evaluate {
            data,
            checkpoints,
            baselines,
            config,
            out,
        } => cmd_evaluate(&data, &checkpoints, &baselines, config.as_deref(), &out),
        Command::Forecast {
            data,
            checkpoint,
            start,
            hours,
            out,
        } => cmd_forecast(&data, &checkpoint, &start, hours, &out),
        Command::Gradcheck { model, seed } => cmd_gradcheck(&model, seed),
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => RunConfig::parse(&fs::read_to_string(p)?),
    }
}

fn load_series(path: &Path) -> Result<pricecast_core::PriceSeries> {
    let text = fs::read_to_string(path)?;
    let (series, stats) = parse_price_csv(&text)?;
    if stats.interpolated > 0 {
        eprintln!(
            "note: interpolated {} missing hours in {}",
            stats.interpolated,
            path.display()
        );
    }
    Ok(series)
}

fn cmd_synth(out: &Path, start: &str, hours: usize, seed: u64) -> Result<u8> {
    let start = parse_timestamp(start)?;
    let text = if hours == 0 {
        "timestamp,price\n".to_string()
    } else {
        serialize_price_csv(&generate_synthetic(start, hours, seed)?)
    };
    fs::write(out, text)?;
    Ok(0)
}

fn kind_name(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::Cnn => "cnn",
        ModelKind::Bp => "bp",
    }
}

fn parse_seasons(s: &str) -> Result<Vec<Season>> {
    if s.eq_ignore_ascii_case("all") {
        Ok(Season::ALL.to_vec())
    } else {
        Ok(vec![s.parse()?])
    }
}

struct SeasonOutcome {
    season: Season,
    checkpoint_text: String,
    history_csv: String,
    final_val_loss: Option<f64>,
}

fn train_one(kind: ModelKind, cfg: &RunConfig, ds: &SeasonDataset) -> Result<SeasonOutcome> {
    let mut rng = Prng::new(cfg.train.seed);
    let mut model = match kind {
        ModelKind::Cnn => build_paper_cnn(&cfg.cnn, &mut rng)?,
        ModelKind::Bp => build_bp_mlp(&cfg.mlp, &mut rng)?,
    };
    model.norm_stats = ds.stats;
    model.meta.season = Some(ds.season);
    model.meta.seed = cfg.train.seed;
    let (trained, history) = train(model, &ds.train, &cfg.train)?;
    let ckpt = Checkpoint {
        model: trained,
        best_epoch: history.best_epoch,
        best_val_loss: history.best_val_loss,
    };
    Ok(SeasonOutcome {
        season: ds.season,
        checkpoint_text: ckpt.to_text()?,
        history_csv: history.to_csv(),
        final_val_loss: history.val_loss.last().copied(),
    })
}

/// Trains the requested seasons, at most PRICECAST_THREADS at a time
/// (default: all requested at once). Results come back in request order, so
/// output is deterministic regardless of scheduling.
fn train_seasons(
    kind: ModelKind,
    cfg: &RunConfig,
    datasets: &pricecast_core::SeasonalDatasets,
    seasons: &[Season],
) -> Result<Vec<SeasonOutcome>> {
    let threads = std::env::var("PRICECAST_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| seasons.len().max(1));

    let mut outcomes = Vec::with_capacity(seasons.len());
    for chunk in seasons.chunks(threads) {
        let mut results: Vec<Result<SeasonOutcome>> = thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&season| scope.spawn(move || train_one(kind, cfg, datasets.get(season))))
                .collect();
            handles
                .into_iter()
                .map(|h| {
                    h.join()
                        .unwrap_or_else(|_| Err(Error::Internal("training thread panicked".into())))
                })
                .collect()
        });
        for r in results.drain(..) {
            outcomes.push(r?);
        }
    }
    Ok(outcomes)
}

fn cmd_train(
    data: &Path,
    config: Option<&Path>,
    model: &str,
    season: &str,
    out: &Path,
) -> Result<u8> {
    let kind: ModelKind = model.parse()?;
    let seasons = parse_seasons(season)?;
    let cfg = load_config(config)?;
    let series = load_series(data)?;
    let input_len = match kind {
        ModelKind::Cnn => cfg.cnn.input_len,
        ModelKind::Bp => cfg.mlp.input_len,
    };
    let datasets = pricecast_core::build_seasonal_datasets(&series, &cfg.split, input_len)?;
    fs::create_dir_all(out)?;

    for outcome in train_seasons(kind, &cfg, &datasets, &seasons)? {
        let stem = format!("{}_{}", kind_name(kind), outcome.season);
        fs::write(out.join(format!("{stem}.ckpt")), &outcome.checkpoint_text)?;
        fs::write(
            out.join(format!("{stem}_history.csv")),
            &outcome.history_csv,
        )?;
        match outcome.final_val_loss {
            Some(v) => println!("{}: final val loss {v:.6e}", outcome.season),
            None => println!("{}: no validation epochs ran", outcome.season),
        }
    }
    Ok(0)
}

#[derive(Default)]
struct Baselines {
    persistence: bool,
    bp: bool,
}

fn parse_baselines(s: &str) -> Result<Baselines> {
    let mut b = Baselines::default();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.to_ascii_lowercase().as_str() {
            "persistence" => b.persistence = true,
            "bp" => b.bp = true,
            other => {
                return Err(Error::Argument(format!(
                    "unknown baseline '{other}' (expected persistence|bp)"
                )))
            }
        }
    }
    Ok(b)
}

struct SeasonEval {
    row: MetricsRow,
    windows: Vec<WindowSample>,
    stats: NormStats,
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path).map_err(|e| {
        Error::Checkpoint(format!("cannot read checkpoint {}: {e}", path.display()))
    })?;
    Checkpoint::from_text(&text).map_err(|e| match e {
        Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Evaluates one model's four seasonal checkpoints from `dir`, returning a
/// row per season plus the windows it was scored on (for baselines).
fn eval_checkpoint_model(
    series: &pricecast_core::PriceSeries,
    cfg: &RunConfig,
    dir: &Path,
    kind: ModelKind,
) -> Result<Vec<SeasonEval>> {
    let mut out = Vec::with_capacity(Season::ALL.len());
    for season in Season::ALL {
        let path = dir.join(format!("{}_{season}.ckpt", kind_name(kind)));
        let ckpt = load_checkpoint(&path)?;
        let model: Model = ckpt.model;
        if model.meta.season != Some(season) {
            return Err(Error::Checkpoint(format!(
                "{} holds a {} model, expected {season}",
                path.display(),
                model
                    .meta
                    .season
                    .map(|s| s.to_string())
                    .unwrap_or_else(|| "season-less".into()),
            )));
        }
        let (_, test_slice) = split_train_test(series, &cfg.split, model.input_len)?;
        let windows = make_windows(&test_slice, season, &model.norm_stats, model.input_len)?;
        let row = evaluate_model(&model, &windows)?;
        let stats = model.norm_stats;
        out.push(SeasonEval {
            row,
            windows,
            stats,
        });
    }
    Ok(out)
}

fn persistence_row(season_eval: &SeasonEval) -> Result<MetricsRow> {
    let preds = persistence_forecast(&season_eval.windows, &season_eval.stats)?;
    let actual: Vec<f64> = season_eval
        .windows
        .iter()
        .map(|w| season_eval.stats.denormalize(w.target))
        .collect::<Result<_>>()?;
    Ok(MetricsRow {
        model_name: "persistence".into(),
        season: season_eval.row.season,
        mape: mape(&actual, &preds)?,
        rmse: rmse(&actual, &preds)?,
        n: season_eval.windows.len(),
    })
}

fn cmd_evaluate(
    data: &Path,
    checkpoints: &Path,
    baselines: &str,
    config: Option<&Path>,
    out: &Path,
) -> Result<u8> {
    let baselines = parse_baselines(baselines)?;
    let cfg = load_config(config)?;
    let series = load_series(data)?;

    let cnn_evals = eval_checkpoint_model(&series, &cfg, checkpoints, ModelKind::Cnn)?;
    let mut rows: Vec<MetricsRow> = cnn_evals.iter().map(|e| e.row.clone()).collect();
    if baselines.bp {
        rows.extend(
            eval_checkpoint_model(&series, &cfg, checkpoints, ModelKind::Bp)?
                .into_iter()
                .map(|e| e.row),
        );
    }
    if baselines.persistence {
        for e in &cnn_evals {
            rows.push(persistence_row(e)?);
        }
    }

    let report = build_report(rows)?;
    let csv = report.to_csv();
    fs::write(out, &csv)?;
    print!("{csv}");
    Ok(0)
}

fn cmd_forecast(
    data: &Path,
    checkpoint: &Path,
    start: &str,
    hours: usize,
    out: &Path,
) -> Result<u8> {
    let series = load_series(data)?;
    let ckpt = load_checkpoint(checkpoint)?;
    let start = parse_timestamp(start)?;
    let csv = emit_forecast_csv(&ckpt.model, &series, start, hours)?;
    fs::write(out, csv)?;
    Ok(0)
}

fn cmd_gradcheck(model: &str, seed: u64) -> Result<u8> {
    let kind: ModelKind = model.parse()?;
    let err = gradcheck_trial(kind, seed)?;
    println!("max relative error {err:e}");
    Ok(if err < 1e-4 { 0 } else { 7 })
}
