//! Data pipeline: hourly price CSV ingestion with gap repair, season
//! assignment, train/test splitting, sliding-window construction, min-max
//! normalization, and a synthetic generator for desk-scale experiments.

use chrono::{DateTime, Datelike, Duration, NaiveDate, NaiveDateTime, TimeZone, Timelike, Utc};

use crate::error::{Error, Result};
use crate::rng::Prng;
use crate::tensor::Tensor;

/// One observed hour: UTC timestamp on an exact hour boundary, price in $/MWh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceRecord {
    pub timestamp: DateTime<Utc>,
    pub price: f64,
}

/// Gap-free hourly series: strictly increasing timestamps, consecutive
/// records exactly one hour apart. The invariant is enforced at construction
/// and is what makes window contiguity automatic downstream.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    records: Vec<PriceRecord>,
}

impl PriceSeries {
    pub fn new(records: Vec<PriceRecord>) -> Result<Self> {
        for r in &records {
            if !r.price.is_finite() {
                return Err(Error::Data(format!(
                    "non-finite price at {}",
                    fmt_timestamp(&r.timestamp)
                )));
            }
            if r.timestamp.minute() != 0 || r.timestamp.second() != 0 {
                return Err(Error::Data(format!(
                    "timestamp {} is not on an hour boundary",
                    r.timestamp
                )));
            }
        }
        for pair in records.windows(2) {
            let dt = pair[1].timestamp - pair[0].timestamp;
            if dt != Duration::hours(1) {
                return Err(Error::Data(format!(
                    "records at {} and {} are not exactly 1 hour apart",
                    fmt_timestamp(&pair[0].timestamp),
                    fmt_timestamp(&pair[1].timestamp)
                )));
            }
        }
        Ok(PriceSeries { records })
    }

    pub fn records(&self) -> &[PriceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn start(&self) -> Option<DateTime<Utc>> {
        self.records.first().map(|r| r.timestamp)
    }

    /// Index of the record at `ts`, exploiting the gap-free invariant.
    pub fn index_of(&self, ts: DateTime<Utc>) -> Option<usize> {
        let start = self.start()?;
        let hours = (ts - start).num_hours();
        if hours < 0 || ts < start {
            return None;
        }
        let idx = hours as usize;
        if idx < self.records.len() && self.records[idx].timestamp == ts {
            Some(idx)
        } else {
            None
        }
    }

    /// Sub-series covering [from, to); records outside the available range
    /// are silently absent.
    pub fn slice(&self, from: DateTime<Utc>, to: DateTime<Utc>) -> PriceSeries {
        let records = self
            .records
            .iter()
            .filter(|r| r.timestamp >= from && r.timestamp < to)
            .copied()
            .collect();
        PriceSeries { records }
    }
}

/// Counters reported by CSV ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestStats {
    pub records: usize,
    pub interpolated: usize,
}

pub fn fmt_timestamp(ts: &DateTime<Utc>) -> String {
    ts.format("%Y-%m-%dT%H:00:00Z").to_string()
}

fn parse_timestamp_msg(s: &str) -> std::result::Result<DateTime<Utc>, String> {
    let s = s.trim();
    let naive: NaiveDateTime = if s.len() == 10 {
        NaiveDate::parse_from_str(s, "%Y-%m-%d")
            .map_err(|e| format!("invalid date '{s}': {e}"))?
            .and_hms_opt(0, 0, 0)
            .expect("midnight is always valid")
    } else {
        NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%SZ")
            .map_err(|e| format!("invalid timestamp '{s}': {e}"))?
    };
    if naive.minute() != 0 || naive.second() != 0 {
        return Err(format!("timestamp '{s}' is not on an hour boundary"));
    }
    Ok(naive.and_utc())
}

/// Parse `YYYY-MM-DDTHH:00:00Z` (or a bare `YYYY-MM-DD`, meaning midnight).
pub fn parse_timestamp(s: &str) -> Result<DateTime<Utc>> {
    parse_timestamp_msg(s).map_err(Error::Data)
}

/// Parse a price CSV: header `timestamp,price`, rows
/// `YYYY-MM-DDTHH:00:00Z,<float>`, `#` comment lines ignored. Rows are
/// sorted, duplicates rejected, and gaps of up to 6 missing hours repaired by
/// linear interpolation; larger gaps are a hard error.
pub fn parse_price_csv(text: &str) -> Result<(PriceSeries, IngestStats)> {
    let mut rows: Vec<(usize, DateTime<Utc>, f64)> = Vec::new();
    let mut header_seen = false;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !header_seen {
            if line != "timestamp,price" {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("expected header `timestamp,price`, got `{line}`"),
                });
            }
            header_seen = true;
            continue;
        }
        let Some((ts_s, price_s)) = line.split_once(',') else {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected `timestamp,price`, got `{line}`"),
            });
        };
        let ts = parse_timestamp_msg(ts_s).map_err(|msg| Error::Parse { line: line_no, msg })?;
        let price: f64 = price_s.trim().parse().map_err(|e| Error::Parse {
            line: line_no,
            msg: format!("invalid price '{}': {e}", price_s.trim()),
        })?;
        if !price.is_finite() {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("price must be finite, got {price}"),
            });
        }
        rows.push((line_no, ts, price));
    }
    if !header_seen {
        return Err(Error::Parse {
            line: 1,
            msg: "missing header `timestamp,price`".into(),
        });
    }

    rows.sort_by_key(|&(_, ts, _)| ts);
    for pair in rows.windows(2) {
        if pair[0].1 == pair[1].1 {
            return Err(Error::Parse {
                line: pair[0].0.max(pair[1].0),
                msg: format!("duplicate timestamp {}", fmt_timestamp(&pair[0].1)),
            });
        }
    }

    let mut records: Vec<PriceRecord> = Vec::with_capacity(rows.len());
    let mut interpolated = 0usize;
    for &(_, ts, price) in &rows {
        if let Some(prev) = records.last().copied() {
            let gap_hours = (ts - prev.timestamp).num_hours() - 1;
            if gap_hours > 6 {
                return Err(Error::Data(format!(
                    "gap of {gap_hours} missing hours between {} and {} exceeds the 6-hour repair limit",
                    fmt_timestamp(&prev.timestamp),
                    fmt_timestamp(&ts)
                )));
            }
            let span = gap_hours + 1;
            for j in 1..=gap_hours {
                records.push(PriceRecord {
                    timestamp: prev.timestamp + Duration::hours(j),
                    price: prev.price + (price - prev.price) * j as f64 / span as f64,
                });
                interpolated += 1;
            }
        }
        records.push(PriceRecord {
            timestamp: ts,
            price,
        });
    }

    let stats = IngestStats {
        records: records.len(),
        interpolated,
    };
    Ok((PriceSeries::new(records)?, stats))
}

/// Inverse of parse: same header and row format. Prices use the shortest
/// decimal form that round-trips the exact f64, so parse -> serialize ->
/// parse is the identity.
pub fn serialize_price_csv(series: &PriceSeries) -> String {
    let mut out = String::with_capacity(32 * (series.len() + 1));
    out.push_str("timestamp,price\n");
    for r in series.records() {
        out.push_str(&fmt_timestamp(&r.timestamp));
        out.push(',');
        out.push_str(&format!("{}", r.price));
        out.push('\n');
    }
    out
}

/// Meteorological season of the target hour's month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Season {
    Spring,
    Summer,
    Fall,
    Winter,
}

impl Season {
    pub const ALL: [Season; 4] = [Season::Spring, Season::Summer, Season::Fall, Season::Winter];

    pub fn name(&self) -> &'static str {
        match self {
            Season::Spring => "spring",
            Season::Summer => "summer",
            Season::Fall => "fall",
            Season::Winter => "winter",
        }
    }
}

impl std::fmt::Display for Season {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Season {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "spring" => Ok(Season::Spring),
            "summer" => Ok(Season::Summer),
            "fall" => Ok(Season::Fall),
            "winter" => Ok(Season::Winter),
            other => Err(Error::Argument(format!(
                "unknown season '{other}' (expected spring|summer|fall|winter)"
            ))),
        }
    }
}

/// Mar-May spring, Jun-Aug summer, Sep-Nov fall, Dec-Feb winter.
pub fn assign_season(ts: DateTime<Utc>) -> Season {
    match ts.month() {
        3..=5 => Season::Spring,
        6..=8 => Season::Summer,
        9..=11 => Season::Fall,
        _ => Season::Winter,
    }
}

/// One supervised sample: a normalized history window predicting the
/// normalized price at `target_time`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub input: Tensor,
    pub target: f64,
    pub target_time: DateTime<Utc>,
}

/// Min-max statistics from a season's training data only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats {
    pub min: f64,
    pub max: f64,
}

impl NormStats {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !min.is_finite() || !max.is_finite() || max <= min {
            return Err(Error::Data(format!(
                "normalization stats need max > min, got min {min}, max {max}"
            )));
        }
        Ok(NormStats { min, max })
    }

    /// No-op stats ([0, 1] range) for freshly built or hand-assembled models.
    pub fn identity() -> Self {
        NormStats { min: 0.0, max: 1.0 }
    }

    fn check(&self) -> Result<()> {
        if self.max > self.min {
            Ok(())
        } else {
            Err(Error::Data(format!(
                "degenerate normalization stats: min {} >= max {} (constant series)",
                self.min, self.max
            )))
        }
    }

    pub fn normalize(&self, x: f64) -> Result<f64> {
        self.check()?;
        Ok((x - self.min) / (self.max - self.min))
    }

    pub fn denormalize(&self, x: f64) -> Result<f64> {
        self.check()?;
        Ok(x * (self.max - self.min) + self.min)
    }
}

/// Period bounds for the train/test split, end-exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitConfig {
    pub train_start: DateTime<Utc>,
    pub train_end: DateTime<Utc>,
    pub test_start: DateTime<Utc>,
    pub test_end: DateTime<Utc>,
}

impl Default for SplitConfig {
    /// Train on 2015-2017; test on Mar 2018 through Feb 2019 so the winter
    /// test season (Dec 2018 - Feb 2019) is contiguous.
    fn default() -> Self {
        SplitConfig {
            train_start: Utc.with_ymd_and_hms(2015, 1, 1, 0, 0, 0).unwrap(),
            train_end: Utc.with_ymd_and_hms(2018, 1, 1, 0, 0, 0).unwrap(),
            test_start: Utc.with_ymd_and_hms(2018, 3, 1, 0, 0, 0).unwrap(),
            test_end: Utc.with_ymd_and_hms(2019, 3, 1, 0, 0, 0).unwrap(),
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train_start >= self.train_end {
            return Err(Error::Spec("train_start must precede train_end".into()));
        }
        if self.test_start >= self.test_end {
            return Err(Error::Spec("test_start must precede test_end".into()));
        }
        if self.train_end > self.test_start {
            return Err(Error::Spec(
                "train period must end before the test period starts".into(),
            ));
        }
        Ok(())
    }
}

/// Split into a training series (records in [train_start, train_end)) and a
/// test series. The test slice starts `history` hours before test_start so
/// the very first test-period hour already has a full window of true history;
/// every test TARGET still lies in [test_start, test_end).
pub fn split_train_test(
    series: &PriceSeries,
    cfg: &SplitConfig,
    history: usize,
) -> Result<(PriceSeries, PriceSeries)> {
    cfg.validate()?;
    let train = series.slice(cfg.train_start, cfg.train_end);
    let test = series.slice(
        cfg.test_start - Duration::hours(history as i64),
        cfg.test_end,
    );
    if train.is_empty() {
        return Err(Error::Data(format!(
            "no records in the training period [{}, {})",
            fmt_timestamp(&cfg.train_start),
            fmt_timestamp(&cfg.train_end)
        )));
    }
    if test.is_empty() {
        return Err(Error::Data(format!(
            "no records in the test period [{}, {})",
            fmt_timestamp(&cfg.test_start),
            fmt_timestamp(&cfg.test_end)
        )));
    }
    Ok((train, test))
}

/// Build sliding windows over the series: one sample per hour t whose season
/// matches and whose `window_len` preceding hours all exist. The TARGET
/// hour's season classifies the sample; the history may cross a season
/// boundary. Values are min-max normalized with `stats`.
pub fn make_windows(
    series: &PriceSeries,
    season: Season,
    stats: &NormStats,
    window_len: usize,
) -> Result<Vec<WindowSample>> {
    stats.check()?;
    if window_len == 0 {
        return Err(Error::Argument("window_len must be >= 1".into()));
    }
    let records = series.records();
    let mut out = Vec::new();
    for t in window_len..records.len() {
        let target = &records[t];
        if assign_season(target.timestamp) != season {
            continue;
        }
        let mut vals = Vec::with_capacity(window_len);
        for r in &records[t - window_len..t] {
            vals.push(stats.normalize(r.price)?);
        }
        out.push(WindowSample {
            input: Tensor::from_vec(&[window_len], vals)?,
            target: stats.normalize(target.price)?,
            target_time: target.timestamp,
        });
    }
    Ok(out)
}

/// Noise-free component of the synthetic price: daily and weekly sinusoids
/// around $30 with a +$10 winter offset.
pub fn synthetic_base_price(ts: DateTime<Utc>) -> f64 {
    use std::f64::consts::TAU;
    let hod = ts.hour() as f64;
    let how = (ts.weekday().num_days_from_monday() * 24 + ts.hour()) as f64;
    let winter = assign_season(ts) == Season::Winter;
    30.0 + 8.0 * (TAU * hod / 24.0).sin()
        + 4.0 * (TAU * how / 168.0).sin()
        + if winter { 10.0 } else { 0.0 }
}

/// Deterministic synthetic series: base price plus seeded Gaussian noise
/// (sigma = 1.5, tripled in winter to echo winter volatility), floored just
/// above zero so prices stay positive.
pub fn generate_synthetic(start: DateTime<Utc>, hours: usize, seed: u64) -> Result<PriceSeries> {
    if hours == 0 {
        return Err(Error::Argument("hours must be >= 1".into()));
    }
    if start.minute() != 0 || start.second() != 0 {
        return Err(Error::Data(format!(
            "start {start} is not on an hour boundary"
        )));
    }
    let mut rng = Prng::new(seed);
    let mut records = Vec::with_capacity(hours);
    for h in 0..hours {
        let ts = start + Duration::hours(h as i64);
        let noise_scale = if assign_season(ts) == Season::Winter {
            3.0
        } else {
            1.0
        };
        let price = synthetic_base_price(ts) + noise_scale * 1.5 * rng.next_gaussian();
        records.push(PriceRecord {
            timestamp: ts,
            price: price.max(0.01),
        });
    }
    PriceSeries::new(records)
}

/// One season's materialized datasets.
#[derive(Debug, Clone)]
pub struct SeasonDataset {
    pub season: Season,
    pub train: Vec<WindowSample>,
    pub test: Vec<WindowSample>,
    pub stats: NormStats,
}

/// All four seasons' train/test windows and normalization stats.
#[derive(Debug, Clone)]
pub struct SeasonalDatasets {
    pub seasons: Vec<SeasonDataset>,
}

impl SeasonalDatasets {
    pub fn get(&self, season: Season) -> &SeasonDataset {
        self.seasons
            .iter()
            .find(|s| s.season == season)
            .expect("all four seasons are always present")
    }
}

/// Split the series and build per-season windows. NormStats come exclusively
/// from the values a season's TRAIN windows contain (inputs and targets);
/// the no-leakage invariant (max contributing timestamp < first test target)
/// is asserted here, not just assumed.
pub fn build_seasonal_datasets(
    series: &PriceSeries,
    cfg: &SplitConfig,
    window_len: usize,
) -> Result<SeasonalDatasets> {
    let (train_series, test_series) = split_train_test(series, cfg, window_len)?;
    let mut seasons = Vec::with_capacity(4);
    for season in Season::ALL {
        let records = train_series.records();
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut last_contributing: Option<DateTime<Utc>> = None;
        for t in window_len..records.len() {
            if assign_season(records[t].timestamp) != season {
                continue;
            }
            for r in &records[t - window_len..=t] {
                min = min.min(r.price);
                max = max.max(r.price);
            }
            last_contributing = Some(records[t].timestamp);
        }
        if last_contributing.is_none() {
            return Err(Error::Data(format!(
                "no {season} training samples in [{}, {})",
                fmt_timestamp(&cfg.train_start),
                fmt_timestamp(&cfg.train_end)
            )));
        }
        let stats = NormStats::new(min, max).map_err(|_| {
            Error::Data(format!(
                "constant {season} training prices; cannot normalize"
            ))
        })?;

        let train = make_windows(&train_series, season, &stats, window_len)?;
        let test = make_windows(&test_series, season, &stats, window_len)?;
        if test.is_empty() {
            return Err(Error::Data(format!(
                "no {season} test samples in [{}, {})",
                fmt_timestamp(&cfg.test_start),
                fmt_timestamp(&cfg.test_end)
            )));
        }
        if let (Some(last), Some(first_test)) = (last_contributing, test.first()) {
            if last >= first_test.target_time {
                return Err(Error::Internal(format!(
                    "normalization leakage: stats contribution at {} not before first test target {}",
                    fmt_timestamp(&last),
                    fmt_timestamp(&first_test.target_time)
                )));
            }
        }
        seasons.push(SeasonDataset {
            season,
            train,
            test,
            stats,
        });
    }
    Ok(SeasonalDatasets { seasons })
}
