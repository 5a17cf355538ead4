//! Evaluation: MAPE/RMSE metrics, the persistence baseline, per-season
//! report assembly with Average and Pooled summary rows, and weekly
//! actual-vs-predicted forecast CSVs.

use chrono::{DateTime, Duration, Utc};

use crate::data::{assign_season, fmt_timestamp, NormStats, PriceSeries, Season, WindowSample};
use crate::error::{Error, Result};
use crate::model::{model_forward, Model};

/// Threshold below which a MAPE denominator is considered zero. Hitting it
/// is a hard error, never a silent skip: silently excluded points would make
/// results incomparable across models.
pub const MAPE_DENOMINATOR_GUARD: f64 = 1e-6;

/// Mean absolute percentage error: (1/N) * sum(|y - yhat| / y) * 100.
pub fn mape(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_lengths(actual, predicted)?;
    let mut sum = 0.0;
    for (i, (&y, &yhat)) in actual.iter().zip(predicted).enumerate() {
        if y.abs() <= MAPE_DENOMINATOR_GUARD {
            return Err(Error::Metric(format!(
                "mape denominator |actual[{i}]| = {} is below the {MAPE_DENOMINATOR_GUARD} guard",
                y.abs()
            )));
        }
        sum += (y - yhat).abs() / y;
    }
    Ok(sum / actual.len() as f64 * 100.0)
}

/// Root mean square error: sqrt((1/N) * sum((y - yhat)^2)).
pub fn rmse(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_lengths(actual, predicted)?;
    let sum: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(&y, &yhat)| (y - yhat) * (y - yhat))
        .sum();
    Ok((sum / actual.len() as f64).sqrt())
}

fn check_lengths(actual: &[f64], predicted: &[f64]) -> Result<()> {
    if actual.len() != predicted.len() {
        return Err(Error::Argument(format!(
            "metric input lengths differ: {} actual vs {} predicted",
            actual.len(),
            predicted.len()
        )));
    }
    if actual.is_empty() {
        return Err(Error::Argument("metric inputs must be non-empty".into()));
    }
    Ok(())
}

/// Naive baseline: predict each target as the (denormalized) final history
/// hour of its window. Output length equals the window count.
pub fn persistence_forecast(windows: &[WindowSample], stats: &NormStats) -> Result<Vec<f64>> {
    windows
        .iter()
        .map(|w| {
            let last = *w
                .input
                .data()
                .last()
                .expect("window inputs are non-empty by construction");
            stats.denormalize(last)
        })
        .collect()
}

/// One (model, season) result line.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub model_name: String,
    pub season: Season,
    pub mape: f64,
    pub rmse: f64,
    pub n: usize,
}

/// Predict every window, denormalize, and score against denormalized targets.
pub fn evaluate_model(model: &Model, windows: &[WindowSample]) -> Result<MetricsRow> {
    if windows.is_empty() {
        return Err(Error::Argument(
            "evaluate_model needs at least one window".into(),
        ));
    }
    let mut actual = Vec::with_capacity(windows.len());
    let mut predicted = Vec::with_capacity(windows.len());
    for w in windows {
        let pred_norm = model_forward(model, &w.input)?;
        predicted.push(model.norm_stats.denormalize(pred_norm)?);
        actual.push(model.norm_stats.denormalize(w.target)?);
    }
    let season = model
        .meta
        .season
        .unwrap_or_else(|| assign_season(windows[0].target_time));
    Ok(MetricsRow {
        model_name: model.name().to_string(),
        season,
        mape: mape(&actual, &predicted)?,
        rmse: rmse(&actual, &predicted)?,
        n: windows.len(),
    })
}

/// Summary flavor: Average is the arithmetic mean of the four seasonal
/// values; Pooled re-weights by sample count, equivalent to computing the
/// metric over all test hours at once.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SummaryKind {
    Average,
    Pooled,
}

impl SummaryKind {
    pub fn label(&self) -> &'static str {
        match self {
            SummaryKind::Average => "Average",
            SummaryKind::Pooled => "Pooled",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub model_name: String,
    pub kind: SummaryKind,
    pub mape: f64,
    pub rmse: f64,
    pub n: usize,
}

/// Seasonal rows plus per-model summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub rows: Vec<MetricsRow>,
    pub summaries: Vec<SummaryRow>,
}

/// Group rows per model (first-appearance order), require all four seasons,
/// and compute Average and Pooled summaries. Full precision is kept here;
/// two-decimal rounding happens only at rendering time.
pub fn build_report(rows: Vec<MetricsRow>) -> Result<Report> {
    let mut model_order: Vec<String> = Vec::new();
    for r in &rows {
        if !model_order.contains(&r.model_name) {
            model_order.push(r.model_name.clone());
        }
    }
    let mut ordered_rows = Vec::with_capacity(rows.len());
    let mut summaries = Vec::with_capacity(model_order.len() * 2);
    for name in &model_order {
        let mut season_rows = Vec::with_capacity(4);
        for season in Season::ALL {
            let matching: Vec<&MetricsRow> = rows
                .iter()
                .filter(|r| &r.model_name == name && r.season == season)
                .collect();
            match matching.len() {
                1 => season_rows.push(matching[0].clone()),
                0 => {
                    return Err(Error::Argument(format!(
                        "report for model '{name}' is missing season {season}"
                    )))
                }
                k => {
                    return Err(Error::Argument(format!(
                        "report for model '{name}' has {k} rows for season {season}"
                    )))
                }
            }
        }
        let n_total: usize = season_rows.iter().map(|r| r.n).sum();
        let avg_mape = season_rows.iter().map(|r| r.mape).sum::<f64>() / 4.0;
        let avg_rmse = season_rows.iter().map(|r| r.rmse).sum::<f64>() / 4.0;
        // Pooled metrics follow from the seasonal ones exactly: MAPE is a
        // mean of per-point terms and RMSE^2 a mean of squared errors, so
        // sample-count weighting reconstructs the all-hours metric.
        let pooled_mape =
            season_rows.iter().map(|r| r.n as f64 * r.mape).sum::<f64>() / n_total as f64;
        let pooled_rmse = (season_rows
            .iter()
            .map(|r| r.n as f64 * r.rmse * r.rmse)
            .sum::<f64>()
            / n_total as f64)
            .sqrt();
        summaries.push(SummaryRow {
            model_name: name.clone(),
            kind: SummaryKind::Average,
            mape: avg_mape,
            rmse: avg_rmse,
            n: n_total,
        });
        summaries.push(SummaryRow {
            model_name: name.clone(),
            kind: SummaryKind::Pooled,
            mape: pooled_mape,
            rmse: pooled_rmse,
            n: n_total,
        });
        ordered_rows.extend(season_rows);
    }
    Ok(Report {
        rows: ordered_rows,
        summaries,
    })
}

impl Report {
    /// CSV rendering: `model,season,mape,rmse,n`, metrics to 2 decimals,
    /// seasonal rows first per model, then its Average and Pooled rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,season,mape,rmse,n\n");
        let mut seen: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !seen.contains(&r.model_name.as_str()) {
                seen.push(&r.model_name);
            }
        }
        for name in seen {
            for r in self.rows.iter().filter(|r| r.model_name == name) {
                out.push_str(&format!(
                    "{},{},{:.2},{:.2},{}\n",
                    r.model_name, r.season, r.mape, r.rmse, r.n
                ));
            }
            for s in self.summaries.iter().filter(|s| s.model_name == name) {
                out.push_str(&format!(
                    "{},{},{:.2},{:.2},{}\n",
                    s.model_name,
                    s.kind.label(),
                    s.mape,
                    s.rmse,
                    s.n
                ));
            }
        }
        out
    }
}

/// One-step-ahead weekly forecast: for each of `hours` hours from `start`,
/// predict from the true preceding history (never from earlier predictions)
/// and emit `timestamp,actual,predicted` rows.
pub fn emit_forecast_csv(
    model: &Model,
    series: &PriceSeries,
    start: DateTime<Utc>,
    hours: usize,
) -> Result<String> {
    let window_len = model.input_len;
    let history_start = start - Duration::hours(window_len as i64);
    let Some(idx0) = series.index_of(history_start) else {
        return Err(Error::Data(format!(
            "insufficient history: series does not cover {} ({} hours before start {})",
            fmt_timestamp(&history_start),
            window_len,
            fmt_timestamp(&start)
        )));
    };
    if hours > 0 && idx0 + window_len + hours > series.len() {
        return Err(Error::Data(format!(
            "series ends before {} forecast hours from {}",
            hours,
            fmt_timestamp(&start)
        )));
    }
    let records = series.records();
    let mut out = String::from("timestamp,actual,predicted\n");
    for h in 0..hours {
        let lo = idx0 + h;
        let target = &records[lo + window_len];
        let mut vals = Vec::with_capacity(window_len);
        for r in &records[lo..lo + window_len] {
            vals.push(model.norm_stats.normalize(r.price)?);
        }
        let window = crate::tensor::Tensor::from_vec(&[window_len], vals)?;
        let pred = model
            .norm_stats
            .denormalize(model_forward(model, &window)?)?;
        out.push_str(&format!(
            "{},{:.6},{:.6}\n",
            fmt_timestamp(&target.timestamp),
            target.price,
            pred
        ));
    }
    Ok(out)
}
