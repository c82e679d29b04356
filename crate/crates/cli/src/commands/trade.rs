use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use equirl::envs::trading::{load_action_csv, scripted_policy};
use equirl::envs::{annualized_return, load_price_csv, rollout, sharpe_ratio, uniform_baseline, TradingConfig};

use crate::report::{create, write_json, Meta};
use crate::{require_file, Failure, GlobalOpts, Phase};

#[derive(Debug, Args)]
pub struct TradeSimArgs {
    /// Price CSV with header `date,<ticker>,...`.
    #[arg(long)]
    pub prices: PathBuf,
    /// Indicator CSV with header `date,<ticker>:<name>,...`.
    #[arg(long)]
    pub indicators: Option<PathBuf>,
    /// `zero`, `uniform` or `file:<actions.csv>`.
    #[arg(long)]
    pub policy: String,
    /// Episode record CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Summary JSON; defaults to the episode path with `.json`.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[arg(long)]
    pub max_trade: Option<i64>,
    #[arg(long)]
    pub cost: Option<f64>,
    #[arg(long)]
    pub reward_scale: Option<f64>,
    #[arg(long)]
    pub initial_cash: Option<f64>,
    #[arg(long)]
    pub window: Option<usize>,
    /// Recorded in the report; the simulator is deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

enum Policy {
    Zero,
    Uniform,
    File(PathBuf),
}

#[derive(Serialize)]
struct HashedConfig<'a> {
    prices_sha256: String,
    policy: &'a str,
    trading: &'a TradingConfig,
}

#[derive(Serialize)]
struct Summary {
    #[serde(flatten)]
    meta: Meta,
    policy: String,
    days: usize,
    rows_dropped: usize,
    initial_value: f64,
    final_value: f64,
    sharpe_ratio: Option<f64>,
    annualized_return: f64,
}

pub fn run(a: &TradeSimArgs, g: &GlobalOpts) -> Result<(), Failure> {
    require_file(&a.prices, "price file")?;
    let policy = match a.policy.as_str() {
        "zero" => Policy::Zero,
        "uniform" => Policy::Uniform,
        other => match other.strip_prefix("file:") {
            Some(p) => {
                let p = PathBuf::from(p);
                require_file(&p, "action file")?;
                Policy::File(p)
            }
            None => return Err(Failure::Validation(format!("unknown policy {other:?}"))),
        },
    };
    let d = TradingConfig::default();
    let cfg = TradingConfig {
        max_trade: a.max_trade.unwrap_or(d.max_trade),
        cost: a.cost.unwrap_or(d.cost),
        reward_scale: a.reward_scale.unwrap_or(d.reward_scale),
        initial_cash: a.initial_cash.unwrap_or(d.initial_cash),
        window: a.window.unwrap_or(d.window),
    };
    cfg.validate().validation()?;
    let (mut series, load) = load_price_csv(&a.prices).validation()?;
    if let Some(p) = &a.indicators {
        require_file(p, "indicator file")?;
        series = series.with_indicators(std::fs::File::open(p).validation()?).validation()?;
    }
    if series.len() <= cfg.window {
        return Err(Failure::Validation(format!(
            "{} price rows do not cover a {}-day window",
            series.len(),
            cfg.window
        )));
    }
    let script = match &policy {
        Policy::File(p) => Some(load_action_csv(p, &series).validation()?),
        _ => None,
    };

    let hashed = HashedConfig { prices_sha256: series.checksum(), policy: &a.policy, trading: &cfg };
    let meta = Meta::new("trade-sim", &hashed, a.seed, g)?;
    let n = series.n_tickers();
    let record = match (policy, script) {
        (Policy::Zero, _) => rollout(|_, _| vec![0; n], &series, &cfg),
        (Policy::Uniform, _) => uniform_baseline(&series, &cfg),
        (Policy::File(_), Some(s)) => rollout(scripted_policy(s), &series, &cfg),
        (Policy::File(_), None) => unreachable!("script loaded above"),
    }
    .runtime()?;
    record.write_csv(create(&a.out)?).runtime()?;

    let values = record.portfolio_values();
    let summary = Summary {
        meta,
        policy: a.policy.clone(),
        days: record.rows.len(),
        rows_dropped: load.rows_dropped,
        initial_value: values[0],
        final_value: record.final_value(),
        sharpe_ratio: sharpe_ratio(&values).ok(),
        annualized_return: annualized_return(&values).runtime()?,
    };
    let path = a.summary.clone().unwrap_or_else(|| a.out.with_extension("json"));
    write_json(&path, &summary)?;
    if !g.quiet {
        println!(
            "final value {:.2}, Sharpe {}, annualized return {:.4}",
            summary.final_value,
            summary.sharpe_ratio.map_or("undefined".into(), |s| format!("{s:.4}")),
            summary.annualized_return
        );
    }
    Ok(())
}
