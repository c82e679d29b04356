//! Daily price tables: CSV ingestion, checksums, and a synthetic generator.

use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};
use rand::Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::rng;

pub const DATE_FORMAT: &str = "%Y-%m-%d";

/// Per-ticker extra features, passed through untouched.
#[derive(Clone, Debug, PartialEq)]
pub struct Indicators {
    /// Indicator names, the same for every ticker.
    pub names: Vec<String>,
    /// `values[(t * N + n) * k + j]`.
    pub values: Vec<f64>,
}

/// `T x N` positive prices on strictly increasing dates.
#[derive(Clone, Debug, PartialEq)]
pub struct PriceSeries {
    tickers: Vec<String>,
    dates: Vec<NaiveDate>,
    prices: Vec<f64>,
    indicators: Option<Indicators>,
}

/// Counts from a CSV load.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct LoadReport {
    pub rows_read: usize,
    pub rows_dropped: usize,
}

impl PriceSeries {
    pub fn new(tickers: Vec<String>, dates: Vec<NaiveDate>, prices: Vec<f64>) -> Result<Self> {
        if tickers.is_empty() || dates.is_empty() {
            return Err(Error::InvalidData("price series needs at least one ticker and one date".into()));
        }
        if prices.len() != tickers.len() * dates.len() {
            return invalid("price table must be dates x tickers");
        }
        for (i, t) in tickers.iter().enumerate() {
            if t.is_empty() || tickers[..i].contains(t) {
                return invalid(format!("ticker names must be nonempty and unique ('{t}')"));
            }
        }
        if let Some(w) = dates.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::InvalidData(format!("dates not strictly increasing at {}", w[1])));
        }
        if let Some(p) = prices.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::InvalidData(format!("price {p} is not positive")));
        }
        Ok(Self { tickers, dates, prices, indicators: None })
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }
    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }
    pub fn n_tickers(&self) -> usize {
        self.tickers.len()
    }
    pub fn len(&self) -> usize {
        self.dates.len()
    }
    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }
    pub fn prices(&self) -> &[f64] {
        &self.prices
    }
    pub fn indicators(&self) -> Option<&Indicators> {
        self.indicators.as_ref()
    }

    /// Prices of every ticker on day `t`.
    pub fn row(&self, t: usize) -> &[f64] {
        let n = self.tickers.len();
        &self.prices[t * n..(t + 1) * n]
    }

    pub fn price(&self, t: usize, n: usize) -> f64 {
        self.prices[t * self.tickers.len() + n]
    }

    pub fn date_string(&self, t: usize) -> String {
        self.dates[t].format(DATE_FORMAT).to_string()
    }

    /// SHA-256 over tickers, dates and the little-endian price bits.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tickers {
            h.update(t.as_bytes());
            h.update([0u8]);
        }
        for d in &self.dates {
            h.update(d.format(DATE_FORMAT).to_string().as_bytes());
        }
        for p in &self.prices {
            h.update(p.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["date".to_string()];
        header.extend(self.tickers.iter().cloned());
        out.write_record(&header)?;
        for t in 0..self.len() {
            let mut rec = vec![self.date_string(t)];
            rec.extend(self.row(t).iter().map(|p| format!("{p:.2}")));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Attaches indicator columns `date,<ticker>:<indicator>,...`. Every date of
    /// the series must be present; extra dates are ignored.
    pub fn with_indicators<R: Read>(mut self, reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.get(0).map(str::trim) != Some("date") {
            return Err(Error::Parse { line: 1, message: "first column must be 'date'".into() });
        }
        let mut cols = Vec::new();
        for field in header.iter().skip(1) {
            let (t, name) = field.split_once(':').ok_or_else(|| Error::Parse {
                line: 1,
                message: format!("column '{field}' is not <ticker>:<indicator>"),
            })?;
            let n = self
                .tickers
                .iter()
                .position(|x| x == t.trim())
                .ok_or_else(|| Error::Parse { line: 1, message: format!("unknown ticker '{t}'") })?;
            cols.push((n, name.trim().to_string()));
        }
        let mut names: Vec<String> = Vec::new();
        for (n, name) in &cols {
            if *n == cols[0].0 {
                names.push(name.clone());
            }
        }
        let k = names.len();
        let nt = self.n_tickers();
        if k == 0 || cols.len() != k * nt {
            return Err(Error::Parse { line: 1, message: "every ticker needs the same indicator columns".into() });
        }
        let slot = |n: usize, name: &str| names.iter().position(|x| x == name).map(|j| n * k + j);
        let mut slots = Vec::with_capacity(cols.len());
        for (n, name) in &cols {
            slots.push(slot(*n, name).ok_or_else(|| Error::Parse {
                line: 1,
                message: format!("indicator '{name}' missing for the first ticker"),
            })?);
        }
        let mut values = vec![f64::NAN; self.len() * nt * k];
        let mut found = vec![false; self.len()];
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            if rec.len() != cols.len() + 1 {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {} fields, found {}", cols.len() + 1, rec.len()),
                });
            }
            let date = parse_date(&rec[0], line)?;
            let Ok(t) = self.dates.binary_search(&date) else {
                continue;
            };
            found[t] = true;
            for (i, &sl) in slots.iter().enumerate() {
                values[t * nt * k + sl] = parse_number(&rec[i + 1], line)?;
            }
        }
        if let Some(t) = found.iter().position(|f| !f) {
            return Err(Error::InvalidData(format!("indicators missing for {}", self.date_string(t))));
        }
        self.indicators = Some(Indicators { names, values });
        Ok(self)
    }
}

fn parse_date(s: &str, line: usize) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), DATE_FORMAT)
        .map_err(|e| Error::Parse { line, message: format!("bad date '{}': {e}", s.trim()) })
}

fn parse_number(s: &str, line: usize) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse { line, message: format!("cannot parse '{}' as a number", s.trim()) })
}

fn is_missing(s: &str) -> bool {
    matches!(s.trim(), "" | "NA" | "NaN" | "nan" | "null")
}

/// Reads `date,<ticker1>,<ticker2>,...`. Rows with a missing price are
/// dropped and counted; anything unparsable is an error naming the line.
pub fn parse_price_csv<R: Read>(reader: R) -> Result<(PriceSeries, LoadReport)> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.get(0).map(str::trim) != Some("date") {
        return Err(Error::Parse { line: 1, message: "first column must be 'date'".into() });
    }
    let tickers: Vec<String> = header.iter().skip(1).map(|t| t.trim().to_string()).collect();
    if tickers.is_empty() {
        return Err(Error::Parse { line: 1, message: "no ticker columns".into() });
    }
    let mut report = LoadReport::default();
    let mut dates = Vec::new();
    let mut prices = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        report.rows_read += 1;
        if rec.len() != tickers.len() + 1 {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", tickers.len() + 1, rec.len()),
            });
        }
        let date = parse_date(&rec[0], line)?;
        if rec.iter().skip(1).any(is_missing) {
            report.rows_dropped += 1;
            continue;
        }
        if dates.last().is_some_and(|d| *d >= date) {
            return Err(Error::Parse { line, message: format!("date {date} is not after the previous row") });
        }
        for field in rec.iter().skip(1) {
            let p = parse_number(field, line)?;
            if !(p.is_finite() && p > 0.0) {
                return Err(Error::Parse { line, message: format!("price {p} is not positive") });
            }
            prices.push(p);
        }
        dates.push(date);
    }
    if dates.is_empty() {
        return Err(Error::InvalidData("no complete price rows".into()));
    }
    Ok((PriceSeries::new(tickers, dates, prices)?, report))
}

pub fn load_price_csv(path: &Path) -> Result<(PriceSeries, LoadReport)> {
    parse_price_csv(std::fs::File::open(path)?)
}

/// First date of generated series.
pub fn fixture_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 2).expect("valid date")
}

/// Weekdays starting at `start`.
pub fn business_days(start: NaiveDate, count: usize) -> Vec<NaiveDate> {
    start.iter_days().filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun)).take(count).collect()
}

/// Seeded geometric Brownian motion, prices rounded to cents.
pub fn generate_gbm(seed: u64, n_tickers: usize, days: usize) -> Result<PriceSeries> {
    if n_tickers == 0 || days == 0 {
        return invalid("need at least one ticker and one day");
    }
    let mut r = rng::stream(seed, rng::streams::FIXTURE);
    let dt = 1.0 / 252.0;
    let params: Vec<(f64, f64, f64)> = (0..n_tickers)
        .map(|_| (r.random_range(-0.05..0.15), r.random_range(0.1..0.4), r.random_range(20.0..200.0)))
        .collect();
    let mut level: Vec<f64> = params.iter().map(|p| p.2).collect();
    let mut prices = Vec::with_capacity(days * n_tickers);
    for t in 0..days {
        for (n, &(mu, sigma, _)) in params.iter().enumerate() {
            if t > 0 {
                let z: f64 = r.sample(StandardNormal);
                level[n] *= ((mu - 0.5 * sigma * sigma) * dt + sigma * dt.sqrt() * z).exp();
            }
            prices.push(((level[n] * 100.0).round() / 100.0).max(0.01));
        }
    }
    let tickers = (0..n_tickers).map(|n| format!("TK{n:02}")).collect();
    PriceSeries::new(tickers, business_days(fixture_start(), days), prices)
}
