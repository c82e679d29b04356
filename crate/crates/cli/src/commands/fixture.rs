use std::path::PathBuf;

use clap::Args;

use equirl::envs::generate_gbm;

use crate::report::create;
use crate::{Failure, GlobalOpts, Phase};

#[derive(Debug, Args)]
pub struct MakeFixtureArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub tickers: usize,
    #[arg(long)]
    pub days: usize,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(a: &MakeFixtureArgs, g: &GlobalOpts) -> Result<(), Failure> {
    if a.tickers == 0 || a.days < 2 {
        return Err(Failure::Validation("need at least one ticker and two days".into()));
    }
    let series = generate_gbm(a.seed, a.tickers, a.days).validation()?;
    match &a.out {
        Some(p) => {
            series.write_csv(create(p)?).runtime()?;
            if !g.quiet {
                eprintln!("sha256 {}", series.checksum());
            }
        }
        None => series.write_csv(std::io::stdout().lock()).runtime()?,
    }
    Ok(())
}
