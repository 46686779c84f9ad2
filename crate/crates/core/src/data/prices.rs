//! Daily price histories: CSV ingestion in wide and long layouts, and a seeded synthetic generator.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::upc::csv_io;

pub const HOURS: usize = 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyProfile {
    pub date: NaiveDate,
    pub prices: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PriceHistory {
    pub days: Vec<DailyProfile>,
}

impl PriceHistory {
    pub fn new(mut days: Vec<DailyProfile>) -> Result<Self> {
        days.sort_by_key(|d| d.date);
        for w in days.windows(2) {
            if w[0].date == w[1].date {
                return Err(Error::Validation(format!("duplicate date {}", w[0].date)));
            }
        }
        for d in &days {
            if d.prices.len() != HOURS {
                return Err(Error::Validation(format!("{} has {} hourly prices", d.date, d.prices.len())));
            }
            if d.prices.iter().any(|p| !p.is_finite()) {
                return Err(Error::Validation(format!("{} has a non-finite price", d.date)));
            }
        }
        Ok(PriceHistory { days })
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    /// Wide layout `date,h1..h24`; shortest round-trip decimals.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, csv_io(e)))?;
        let mut header = vec!["date".to_string()];
        header.extend((1..=HOURS).map(|h| format!("h{h}")));
        w.write_record(&header).map_err(|e| Error::io(path, csv_io(e)))?;
        for d in &self.days {
            let mut rec = vec![d.date.to_string()];
            rec.extend(d.prices.iter().map(|p| p.to_string()));
            w.write_record(&rec).map_err(|e| Error::io(path, csv_io(e)))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriceFormat {
    /// One row per day: `date,h1..h24`.
    Wide,
    /// One row per hour: `timestamp,price`.
    Long,
    /// Decided from the header.
    Auto,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), line, msg: msg.into() }
}

fn parse_price(path: &Path, line: usize, s: &str) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| parse_err(path, line, format!("invalid price {s:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("non-finite price {s:?}")));
    }
    Ok(v)
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    const FORMATS: [&str; 4] = ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"];
    let s = s.trim();
    if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(s) {
        return Some(dt.naive_local());
    }
    FORMATS.iter().find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

pub fn load_prices(path: &Path, format: PriceFormat) -> Result<PriceHistory> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::io(path, csv_io(e)))?;
    let headers = r.headers().map_err(|e| Error::io(path, csv_io(e)))?.clone();
    let format = match format {
        PriceFormat::Auto if headers.len() == HOURS + 1 => PriceFormat::Wide,
        PriceFormat::Auto if headers.len() == 2 => PriceFormat::Long,
        PriceFormat::Auto => return Err(parse_err(path, 1, format!("cannot infer layout from {} columns", headers.len()))),
        f => f,
    };
    let mut records = Vec::new();
    for (i, rec) in r.records().enumerate() {
        records.push((i + 2, rec.map_err(|e| parse_err(path, i + 2, e.to_string()))?));
    }
    match format {
        PriceFormat::Wide => {
            if headers.len() != HOURS + 1 {
                return Err(parse_err(path, 1, "expected header date,h1..h24"));
            }
            let mut days = Vec::with_capacity(records.len());
            for (line, rec) in records {
                if rec.len() != HOURS + 1 {
                    return Err(parse_err(path, line, format!("{} fields, expected {}", rec.len(), HOURS + 1)));
                }
                let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d")
                    .map_err(|_| parse_err(path, line, format!("invalid date {:?}", &rec[0])))?;
                let prices = (1..=HOURS).map(|h| parse_price(path, line, &rec[h])).collect::<Result<Vec<_>>>()?;
                days.push(DailyProfile { date, prices });
            }
            PriceHistory::new(days)
        }
        _ => {
            if headers.len() != 2 {
                return Err(parse_err(path, 1, "expected header timestamp,price"));
            }
            let mut by_day: BTreeMap<NaiveDate, Vec<Option<f64>>> = BTreeMap::new();
            for (line, rec) in records {
                if rec.len() != 2 {
                    return Err(parse_err(path, line, format!("{} fields, expected 2", rec.len())));
                }
                let ts = parse_timestamp(&rec[0]).ok_or_else(|| parse_err(path, line, format!("invalid timestamp {:?}", &rec[0])))?;
                let price = parse_price(path, line, &rec[1])?;
                let slot = &mut by_day.entry(ts.date()).or_insert_with(|| vec![None; HOURS])[ts.hour() as usize];
                if slot.is_some() {
                    return Err(parse_err(path, line, format!("duplicate hour {ts}")));
                }
                *slot = Some(price);
            }
            let mut days = Vec::with_capacity(by_day.len());
            for (date, hours) in by_day {
                let missing = hours.iter().filter(|h| h.is_none()).count();
                if missing > 0 {
                    return Err(Error::Validation(format!("{date} is missing {missing} hourly prices")));
                }
                days.push(DailyProfile { date, prices: hours.into_iter().flatten().collect() });
            }
            PriceHistory::new(days)
        }
    }
}

/// Shape of the synthetic day-ahead price generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticPrices {
    pub start: NaiveDate,
    pub days: usize,
    /// Annual mean level, currency/MWh.
    pub base: f64,
    /// Seasonal swing of the daily level.
    pub seasonal: f64,
    pub weekend_discount: f64,
    /// Morning and evening peak heights, drawn uniformly per day.
    pub morning_peak: (f64, f64),
    pub evening_peak: (f64, f64),
    /// Midday solar dip, scaled up in summer.
    pub solar_dip: (f64, f64),
    /// Standard deviation of the daily level shock.
    pub level_sd: f64,
    /// Hourly AR(1) noise.
    pub noise_sd: f64,
    pub noise_ar: f64,
}

impl Default for SyntheticPrices {
    fn default() -> Self {
        SyntheticPrices {
            start: NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date"),
            days: 366,
            base: 75.0,
            seasonal: 15.0,
            weekend_discount: 12.0,
            morning_peak: (15.0, 40.0),
            evening_peak: (25.0, 60.0),
            solar_dip: (5.0, 45.0),
            level_sd: 10.0,
            noise_sd: 6.0,
            noise_ar: 0.6,
        }
    }
}

fn bump(t: f64, centre: f64, width: f64) -> f64 {
    (-(t - centre).powi(2) / (2.0 * width * width)).exp()
}

/// Two daily peaks, a midday dip, seasonal and weekly levels and AR(1) noise.
pub fn synthetic_prices(spec: &SyntheticPrices, seed: u64) -> Result<PriceHistory> {
    if spec.days == 0 {
        return Err(Error::InvalidArgument("synthetic history needs at least one day".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let level = Normal::new(0.0, spec.level_sd).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let noise = Normal::new(0.0, spec.noise_sd).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut eps = 0.0;
    let mut days = Vec::with_capacity(spec.days);
    for d in 0..spec.days {
        let date = spec.start + Duration::days(d as i64);
        let phase = 2.0 * std::f64::consts::PI * (date.ordinal0() as f64 - 15.0) / 366.0;
        let summer = 0.5 * (1.0 - phase.cos());
        let weekend = matches!(date.weekday(), Weekday::Sat | Weekday::Sun);
        let mut base = spec.base + spec.seasonal * phase.cos() + level.sample(&mut rng);
        if weekend {
            base -= spec.weekend_discount;
        }
        let am = rng.random_range(spec.morning_peak.0..=spec.morning_peak.1);
        let pm = rng.random_range(spec.evening_peak.0..=spec.evening_peak.1);
        let dip = rng.random_range(spec.solar_dip.0..=spec.solar_dip.1) * (0.4 + summer);
        let prices = (0..HOURS)
            .map(|t| {
                let t = t as f64;
                eps = spec.noise_ar * eps + noise.sample(&mut rng);
                let night = -10.0 * bump(t, 3.5, 2.0);
                base + am * bump(t, 8.0, 1.5) + pm * bump(t, 19.0, 2.0) - dip * bump(t, 13.0, 2.5) + night + eps
            })
            .collect();
        days.push(DailyProfile { date, prices });
    }
    PriceHistory::new(days)
}
