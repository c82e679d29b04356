//! Integer-share stock trading with clamped orders and proportional costs.

use std::collections::VecDeque;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::prices::PriceSeries;
use crate::error::{invalid, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TradingConfig {
    /// Per-ticker order bound `M`.
    pub max_trade: i64,
    /// Proportional cost `epsilon` charged on every traded share.
    pub cost: f64,
    /// Reward is `reward_scale` times the change in portfolio value.
    pub reward_scale: f64,
    pub initial_cash: f64,
    /// Price rows visible to a policy.
    pub window: usize,
}

impl Default for TradingConfig {
    fn default() -> Self {
        Self { max_trade: 100, cost: 0.001, reward_scale: 1e-4, initial_cash: 1_000_000.0, window: 9 }
    }
}

impl TradingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_trade < 0 || !(self.cost >= 0.0) || !(self.initial_cash >= 0.0) || self.window == 0 {
            return invalid("trading config needs max_trade >= 0, cost >= 0, cash >= 0 and a nonempty window");
        }
        if !self.reward_scale.is_finite() {
            return invalid("reward scale must be finite");
        }
        Ok(())
    }
}

/// Portfolio at day `t` plus the last `window` (cash, holdings) pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct TradingState {
    pub t: usize,
    pub cash: f64,
    pub holdings: Vec<i64>,
    history: VecDeque<(f64, Vec<i64>)>,
    window: usize,
}

impl TradingState {
    pub fn new(t: usize, cash: f64, holdings: Vec<i64>, window: usize) -> Self {
        let mut history = VecDeque::with_capacity(window);
        history.push_back((cash, holdings.clone()));
        Self { t, cash, holdings, history, window }
    }

    /// `c_t + sum_n h^n p^n_t`.
    pub fn value(&self, series: &PriceSeries) -> f64 {
        self.cash + self.holdings.iter().zip(series.row(self.t)).map(|(h, p)| *h as f64 * p).sum::<f64>()
    }

    /// Price rows `t - window + 1 ..= t` (fewer near the start).
    pub fn price_window<'a>(&self, series: &'a PriceSeries) -> &'a [f64] {
        let n = series.n_tickers();
        let start = (self.t + 1).saturating_sub(self.window);
        &series.prices()[start * n..(self.t + 1) * n]
    }

    /// Most recent (cash, holdings) pairs, oldest first.
    pub fn history(&self) -> impl Iterator<Item = &(f64, Vec<i64>)> {
        self.history.iter()
    }
}

/// Which clamps fired on one ticker's order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct ClampFlags {
    /// Clipped to `[-M, M]`.
    pub max_clip: bool,
    /// Sell reduced to the shares held.
    pub sell_floor: bool,
    /// Buy reduced by the cash cap.
    pub cash_cap: bool,
}

impl ClampFlags {
    pub fn any(self) -> bool {
        self.max_clip || self.sell_floor || self.cash_cap
    }

    pub fn code(self) -> String {
        let mut s = String::new();
        if self.max_clip {
            s.push('M');
        }
        if self.sell_floor {
            s.push('S');
        }
        if self.cash_cap {
            s.push('C');
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub executed: Vec<i64>,
    pub clamps: Vec<ClampFlags>,
    pub reward: f64,
    pub transaction_cost: f64,
}

/// Clamps `action` and advances one day.
///
/// Orders are clipped to `[-M, M]`, then sells are floored at the holding,
/// then buys are capped at `floor(c / (p (2 + eps)))` using the cash left
/// after the earlier tickers. Each traded share costs `p eps` on top of its
/// price, for sells as well as buys.
pub fn trading_step(
    state: &TradingState,
    action: &[i64],
    series: &PriceSeries,
    cfg: &TradingConfig,
) -> Result<(TradingState, StepOutcome)> {
    let n = series.n_tickers();
    if action.len() != n || state.holdings.len() != n {
        return invalid(format!("action and holdings must have {n} entries"));
    }
    if state.t + 1 >= series.len() {
        return invalid(format!("no price row after day {}", state.t));
    }
    let p = series.row(state.t);
    let p_next = series.row(state.t + 1);
    let mut cash = state.cash;
    let mut holdings = state.holdings.clone();
    let mut executed = vec![0i64; n];
    let mut clamps = vec![ClampFlags::default(); n];
    let mut transaction_cost = 0.0;
    for k in 0..n {
        let mut a = action[k].clamp(-cfg.max_trade, cfg.max_trade);
        clamps[k].max_clip = a != action[k];
        if a < -holdings[k] {
            a = -holdings[k];
            clamps[k].sell_floor = true;
        }
        if a > 0 {
            let cap = (cash / (p[k] * (2.0 + cfg.cost))).floor() as i64;
            if a > cap {
                a = cap.max(0);
                clamps[k].cash_cap = true;
            }
        }
        let fee = a.unsigned_abs() as f64 * p[k] * cfg.cost;
        cash -= a as f64 * p[k] + fee;
        transaction_cost += fee;
        holdings[k] += a;
        executed[k] = a;
    }
    let drift: f64 = (0..n).map(|k| p_next[k] * holdings[k] as f64 - p[k] * state.holdings[k] as f64).sum();
    let reward = cfg.reward_scale * ((cash - state.cash) + drift);

    let mut history = state.history.clone();
    history.push_back((cash, holdings.clone()));
    while history.len() > state.window {
        history.pop_front();
    }
    let next = TradingState { t: state.t + 1, cash, holdings, history, window: state.window };
    Ok((next, StepOutcome { executed, clamps, reward, transaction_cost }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRow {
    pub t: usize,
    pub date: String,
    pub cash: f64,
    pub portfolio_value: f64,
    pub reward: f64,
    pub executed: Vec<i64>,
    /// `TICKER:FLAGS` for every clamped ticker, space separated.
    pub clamp_flags: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub tickers: Vec<String>,
    pub rows: Vec<EpisodeRow>,
}

impl EpisodeRecord {
    pub fn portfolio_values(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.portfolio_value).collect()
    }

    pub fn final_value(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.portfolio_value)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = ["t", "date", "cash", "portfolio_value", "reward"].map(String::from).to_vec();
        header.extend(self.tickers.iter().map(|t| format!("a_{t}")));
        header.push("clamp_flags".into());
        out.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.t.to_string(),
                r.date.clone(),
                r.cash.to_string(),
                r.portfolio_value.to_string(),
                r.reward.to_string(),
            ];
            rec.extend(r.executed.iter().map(i64::to_string));
            rec.push(r.clamp_flags.clone());
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::InvalidData(e.to_string()))
    }

    /// Reads back what [`EpisodeRecord::write_csv`] wrote.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers()?.clone();
        let cols: Vec<&str> = header.iter().collect();
        let n = cols.len().saturating_sub(6);
        if cols.len() < 6
            || cols[..5] != ["t", "date", "cash", "portfolio_value", "reward"]
            || cols[cols.len() - 1] != "clamp_flags"
        {
            return Err(Error::Parse { line: 1, message: "not an episode record header".into() });
        }
        let tickers = cols[5..5 + n]
            .iter()
            .map(|c| c.strip_prefix("a_").map(String::from))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::Parse { line: 1, message: "action columns must be named a_<ticker>".into() })?;
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let bad = |what: &str| Error::Parse { line, message: format!("bad {what}") };
            let num = |k: usize, what: &str| rec[k].parse::<f64>().map_err(|_| bad(what));
            let executed =
                (0..n).map(|k| rec[5 + k].parse::<i64>().map_err(|_| bad("action"))).collect::<Result<Vec<_>>>()?;
            rows.push(EpisodeRow {
                t: rec[0].parse().map_err(|_| bad("t"))?,
                date: rec[1].to_string(),
                cash: num(2, "cash")?,
                portfolio_value: num(3, "portfolio_value")?,
                reward: num(4, "reward")?,
                executed,
                clamp_flags: rec[5 + n].to_string(),
            });
        }
        Ok(Self { tickers, rows })
    }
}

fn flag_string(tickers: &[String], clamps: &[ClampFlags]) -> String {
    tickers
        .iter()
        .zip(clamps)
        .filter(|(_, c)| c.any())
        .map(|(t, c)| format!("{t}:{}", c.code()))
        .collect::<Vec<_>>()
        .join(" ")
}

fn start_day(series: &PriceSeries, cfg: &TradingConfig) -> Result<usize> {
    cfg.validate()?;
    if series.len() <= cfg.window {
        return invalid(format!("series has {} days, need more than the {}-day window", series.len(), cfg.window));
    }
    Ok(cfg.window - 1)
}

fn run(
    series: &PriceSeries,
    cfg: &TradingConfig,
    mut state: TradingState,
    first: EpisodeRow,
    policy: &mut dyn FnMut(&TradingState, &PriceSeries) -> Vec<i64>,
) -> Result<EpisodeRecord> {
    let mut rows = vec![first];
    while state.t + 1 < series.len() {
        let action = policy(&state, series);
        let (next, out) = trading_step(&state, &action, series, cfg)?;
        state = next;
        rows.push(EpisodeRow {
            t: rows.len(),
            date: series.date_string(state.t),
            cash: state.cash,
            portfolio_value: state.value(series),
            reward: out.reward,
            executed: out.executed,
            clamp_flags: flag_string(series.tickers(), &out.clamps),
        });
    }
    Ok(EpisodeRecord { tickers: series.tickers().to_vec(), rows })
}

/// Runs `policy` from the first day with a full window to the end of the
/// series, starting from all cash.
pub fn rollout<F>(mut policy: F, series: &PriceSeries, cfg: &TradingConfig) -> Result<EpisodeRecord>
where
    F: FnMut(&TradingState, &PriceSeries) -> Vec<i64>,
{
    let t0 = start_day(series, cfg)?;
    let n = series.n_tickers();
    let state = TradingState::new(t0, cfg.initial_cash, vec![0; n], cfg.window);
    let first = EpisodeRow {
        t: 0,
        date: series.date_string(t0),
        cash: state.cash,
        portfolio_value: state.value(series),
        reward: 0.0,
        executed: vec![0; n],
        clamp_flags: String::new(),
    };
    run(series, cfg, state, first, &mut policy)
}

/// Buys `floor((c_0 / N) / (p (1 + eps)))` shares of each ticker on the first
/// day, outside the order clamps, then holds.
pub fn uniform_baseline(series: &PriceSeries, cfg: &TradingConfig) -> Result<EpisodeRecord> {
    let t0 = start_day(series, cfg)?;
    let n = series.n_tickers();
    let budget = cfg.initial_cash / n as f64;
    let mut cash = cfg.initial_cash;
    let shares: Vec<i64> = series
        .row(t0)
        .iter()
        .map(|p| {
            let q = (budget / (p * (1.0 + cfg.cost))).floor() as i64;
            cash -= q as f64 * p * (1.0 + cfg.cost);
            q
        })
        .collect();
    let state = TradingState::new(t0, cash, shares.clone(), cfg.window);
    let first = EpisodeRow {
        t: 0,
        date: series.date_string(t0),
        cash,
        portfolio_value: state.value(series),
        reward: 0.0,
        executed: shares,
        clamp_flags: String::new(),
    };
    run(series, cfg, state, first, &mut |_, s| vec![0; s.n_tickers()])
}

/// Reads an action script: header of ticker names (matching the series
/// order), then one row of integer orders per step.
pub fn parse_action_csv<R: Read>(reader: R, series: &PriceSeries) -> Result<Vec<Vec<i64>>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header != series.tickers() {
        return Err(Error::Parse { line: 1, message: "action header must list the series tickers in order".into() });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != header.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        let row = rec
            .iter()
            .map(|f| f.trim().parse::<i64>().map_err(|_| Error::Parse { line, message: format!("bad order '{f}'") }))
            .collect::<Result<Vec<_>>>()?;
        out.push(row);
    }
    Ok(out)
}

pub fn load_action_csv(path: &Path, series: &PriceSeries) -> Result<Vec<Vec<i64>>> {
    parse_action_csv(std::fs::File::open(path)?, series)
}

/// Policy that replays `script` row by row, then sends zero orders.
pub fn scripted_policy(script: Vec<Vec<i64>>) -> impl FnMut(&TradingState, &PriceSeries) -> Vec<i64> {
    let mut k = 0;
    move |_, s| {
        let a = script.get(k).cloned().unwrap_or_else(|| vec![0; s.n_tickers()]);
        k += 1;
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::prices::{business_days, fixture_start};

    fn flat(prices: &[f64], days: usize) -> PriceSeries {
        let n = prices.len();
        let tickers = (0..n).map(|k| format!("X{k}")).collect();
        let rows = (0..days).flat_map(|_| prices.iter().copied()).collect();
        PriceSeries::new(tickers, business_days(fixture_start(), days), rows).unwrap()
    }

    #[test]
    fn zero_action_is_pure_drift() {
        let s = PriceSeries::new(vec!["A".into()], business_days(fixture_start(), 2), vec![100.0, 101.0]).unwrap();
        let cfg = TradingConfig::default();
        let st = TradingState::new(0, 500.0, vec![3], 9);
        let (next, out) = trading_step(&st, &[0], &s, &cfg).unwrap();
        assert_eq!((next.cash, next.holdings.clone()), (500.0, vec![3]));
        assert!((out.reward - 1e-4 * 3.0).abs() < 1e-15);
    }

    #[test]
    fn buy_one_share() {
        let s = flat(&[100.0], 2);
        let st = TradingState::new(0, 1_000_000.0, vec![0], 9);
        let (next, _) = trading_step(&st, &[1], &s, &TradingConfig::default()).unwrap();
        assert!((next.cash - 999_899.90).abs() < 1e-9);
    }

    #[test]
    fn large_order_is_clipped_then_capped() {
        let s = flat(&[100.0], 2);
        let cfg = TradingConfig::default();
        let st = TradingState::new(0, 1_000_000.0, vec![0], 9);
        let (_, out) = trading_step(&st, &[200], &s, &cfg).unwrap();
        assert_eq!(out.executed, vec![100]);
        assert_eq!(out.clamps[0].code(), "M");
        let poor = TradingState::new(0, 10_000.0, vec![0], 9);
        let (next, out) = trading_step(&poor, &[200], &s, &cfg).unwrap();
        // floor(10000 / (100 * 2.001)) = 49
        assert_eq!(out.executed, vec![49]);
        assert_eq!(out.clamps[0].code(), "MC");
        assert!(next.cash >= 0.0);
        let (_, out) = trading_step(&TradingState::new(0, 0.0, vec![5], 9), &[-50], &s, &cfg).unwrap();
        assert_eq!(out.executed, vec![-5]);
        assert_eq!(out.clamps[0].code(), "S");
    }

    #[test]
    fn running_cash_across_tickers() {
        let s = flat(&[100.0, 100.0], 2);
        let st = TradingState::new(0, 40_000.0, vec![0, 0], 9);
        let (next, out) = trading_step(&st, &[100, 100], &s, &TradingConfig::default()).unwrap();
        // first cap floor(40000 / 200.1) = 199 -> 100; remaining 29990 -> cap 149 -> 100
        assert_eq!(out.executed, vec![100, 100]);
        assert!((next.cash - (40_000.0 - 2.0 * 10_010.0)).abs() < 1e-9);
    }

    #[test]
    fn zero_policy_keeps_cash() {
        let s = flat(&[10.0, 20.0], 15);
        let rec = rollout(|_, s| vec![0; s.n_tickers()], &s, &TradingConfig::default()).unwrap();
        assert_eq!(rec.final_value(), 1_000_000.0);
        assert_eq!(rec.rows.len(), 15 - 8);
        assert!(rollout(|_, _| vec![0, 0], &flat(&[10.0, 20.0], 9), &TradingConfig::default()).is_err());
    }

    #[test]
    fn uniform_buys_floor_shares() {
        let s = flat(&[100.0], 12);
        let rec = uniform_baseline(&s, &TradingConfig::default()).unwrap();
        assert_eq!(rec.rows[0].executed, vec![9990]);
        assert!(rec.rows[0].cash >= 0.0 && rec.rows[0].cash < 100.0);
        assert!(rec.final_value() < 1_000_000.0 && rec.final_value() > 999_000.0);
    }

    #[test]
    fn window_tracks_history() {
        let s = flat(&[1.0], 20);
        let mut st = TradingState::new(10, 100.0, vec![0], 3);
        for _ in 0..5 {
            st = trading_step(&st, &[1], &s, &TradingConfig::default()).unwrap().0;
        }
        assert_eq!(st.history().count(), 3);
        assert_eq!(st.price_window(&s).len(), 3);
    }
}
