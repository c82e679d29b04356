use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use equirl::fit::{run_fit_experiment, FitExperimentConfig, FitSummary, TrainLog};

use crate::report::{create, write_json, Meta};
use crate::{require_file, Failure, GlobalOpts, Phase, CONFIG_VERSION};

#[derive(Debug, Args)]
pub struct GridworldFitArgs {
    /// TOML experiment config.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Per-run file: the train log plus the group needed to rebuild its layers.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunFile {
    pub group: String,
    pub world: String,
    pub log: TrainLog,
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    #[serde(flatten)]
    meta: Meta,
    config_version: u32,
    config: &'a FitExperimentConfig,
    summary: &'a FitSummary,
}

/// Parses a versioned TOML experiment config.
pub fn parse_config(text: &str) -> Result<FitExperimentConfig, Failure> {
    let mut table: toml::Table = toml::from_str(text).validation()?;
    let version = table
        .remove("config_version")
        .and_then(|v| v.as_integer())
        .ok_or_else(|| Failure::Validation("config_version is missing".into()))?;
    if version != i64::from(CONFIG_VERSION) {
        return Err(Failure::Validation(format!(
            "config_version {version} is not supported (expected {CONFIG_VERSION})"
        )));
    }
    let cfg: FitExperimentConfig = toml::Value::Table(table).try_into().validation()?;
    cfg.validate().validation()?;
    Ok(cfg)
}

fn run_stem(world: &str, kind: &str, seed: u64) -> String {
    format!("{world}_{kind}_seed{seed}")
}

pub fn run(a: &GridworldFitArgs, g: &GlobalOpts) -> Result<(), Failure> {
    require_file(&a.config, "config file")?;
    let cfg = parse_config(&std::fs::read_to_string(&a.config).validation()?)?;
    let meta = Meta::new("gridworld-fit", &cfg, cfg.seed, g)?;
    if !g.quiet {
        let n = cfg.worlds().len() * cfg.kinds.len() * cfg.replicas;
        println!("training {n} networks on {} thread(s)", g.jobs);
    }
    let summary = run_fit_experiment(&cfg, g.jobs).runtime()?;

    let logs = a.out_dir.join("logs");
    let group = "d1".to_string();
    for r in &summary.runs {
        let stem = run_stem(&r.world, r.kind.tag(), r.seed);
        let log = r.log.as_ref().ok_or_else(|| Failure::Runtime("missing train log".into()))?;
        log.write_csv(create(&logs.join(format!("{stem}.csv")))?).runtime()?;
        let file = RunFile { group: group.clone(), world: r.world.clone(), log: log.clone() };
        write_json(&logs.join(format!("{stem}.json")), &file)?;
    }
    write_summary(&a.out_dir.join("summary.json"), meta, &cfg, &summary)?;

    if !g.quiet {
        for s in &summary.stats {
            println!(
                "{:<10} {:<13} loss {:.3e} +- {:.1e}  return {:.4}  spread {}",
                s.world,
                s.kind.tag(),
                s.loss.mean,
                s.loss.half_width,
                s.greedy_return.mean,
                s.max_spread.map_or("-".to_string(), |x| format!("{x:.3e}"))
            );
        }
        for c in &summary.checks {
            println!("[{}] {}: {}", if c.passed { "ok" } else { "FLAGGED" }, c.name, c.detail);
        }
    }
    Ok(())
}

fn write_summary(path: &Path, meta: Meta, cfg: &FitExperimentConfig, summary: &FitSummary) -> Result<(), Failure> {
    write_json(path, &SummaryFile { meta, config_version: CONFIG_VERSION, config: cfg, summary })
}
