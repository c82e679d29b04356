//! Environments: symmetry-breakable gridworlds and a stock-trading simulator.

pub mod finance;
pub mod gridworld;
pub mod prices;
pub mod trading;

pub use finance::{annualized_return, sharpe_ratio};
pub use gridworld::{build_gridworld, encode_state_signal, Direction, GridworldConfig, SymmetryBreak};
pub use prices::{generate_gbm, load_price_csv, parse_price_csv, LoadReport, PriceSeries};
pub use trading::{rollout, trading_step, uniform_baseline, EpisodeRecord, TradingConfig, TradingState};
