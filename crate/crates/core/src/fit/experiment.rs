//! Seeded sweeps over network kinds on a gridworld and its symmetric twin.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::envs::gridworld::{build_gridworld, GridworldConfig, SymmetryBreak};
use crate::error::{invalid, Error, Result};
use crate::mdp::{greedy_policy, value_iteration};

use super::eval::{greedy_policy_return, truncated_policy_return, ReturnEstimate};
use super::qnet::{build_qnet, NetKind, Nonlinearity, QNetSpec};
use super::train::{train_q_regression, QDataset, TrainConfig, TrainLog};

/// Losses below this are treated as zero when comparing relatively.
pub const LOSS_FLOOR: f64 = 1e-12;
/// Largest relaxed-weight spread accepted as "still equivariant".
pub const SYMMETRIC_SPREAD_MAX: f64 = 1e-6;
pub const SPREAD_RATIO_MIN: f64 = 10.0;
pub const SYMMETRIC_AGREEMENT: f64 = 0.2;

fn default_true() -> bool {
    true
}
fn default_kernels() -> usize {
    1
}
fn default_tol() -> f64 {
    1e-12
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub episodes: usize,
    pub horizon: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitExperimentConfig {
    pub gridworld: GridworldConfig,
    /// Also train on the same world with the symmetry break removed.
    #[serde(default = "default_true")]
    pub compare_symmetric: bool,
    pub kinds: Vec<NetKind>,
    pub widths: Vec<usize>,
    #[serde(default = "default_kernels")]
    pub kernels: usize,
    #[serde(default)]
    pub nonlinearity: Nonlinearity,
    /// Replica `r` uses seed `seed + r`.
    pub seed: u64,
    pub replicas: usize,
    pub train: TrainConfig,
    #[serde(default = "default_tol")]
    pub value_tol: f64,
    pub eval: EvalConfig,
}

impl FitExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.gridworld.validate()?;
        self.train.validate()?;
        if self.kinds.is_empty() || self.replicas == 0 {
            return invalid("need at least one kind and one replica");
        }
        if !(self.value_tol > 0.0) {
            return invalid("value tolerance must be positive");
        }
        if self.eval.episodes == 0 {
            return invalid("need at least one evaluation episode");
        }
        self.net_spec(self.kinds[0], self.seed).validate()
    }

    pub fn net_spec(&self, kind: NetKind, seed: u64) -> QNetSpec {
        QNetSpec { kind, widths: self.widths.clone(), kernels: self.kernels, nonlinearity: self.nonlinearity, seed }
    }

    pub fn hash(&self) -> Result<String> {
        let json = serde_json::to_string(self)?;
        Ok(hex::encode(Sha256::digest(json.as_bytes())))
    }

    /// `("configured", cfg)` plus `("symmetric", cfg without break)` when
    /// comparing and the configured world is actually broken.
    pub fn worlds(&self) -> Vec<(&'static str, GridworldConfig)> {
        let mut out = vec![("configured", self.gridworld.clone())];
        if self.compare_symmetric && self.gridworld.symmetry_break != SymmetryBreak::None {
            out.push(("symmetric", GridworldConfig { symmetry_break: SymmetryBreak::None, ..self.gridworld.clone() }));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub world: String,
    pub kind: NetKind,
    pub seed: u64,
    pub final_loss: f64,
    pub final_spread: Option<f64>,
    pub diverged_at: Option<usize>,
    pub greedy_return: ReturnEstimate,
    #[serde(skip)]
    pub log: Option<TrainLog>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    /// Half-width of the two-sided 95% Student-t interval.
    pub half_width: f64,
}

impl MeanCi {
    pub fn lower(&self) -> f64 {
        self.mean - self.half_width
    }
    pub fn upper(&self) -> f64 {
        self.mean + self.half_width
    }
}

/// Two-sided 97.5% quantiles of Student's t for 1..=30 degrees of freedom.
const T975: [f64; 30] = [
    12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179, 2.160, 2.145, 2.131, 2.120,
    2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042,
];

pub fn mean_ci95(xs: &[f64]) -> MeanCi {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n.max(1) as f64;
    if n < 2 {
        return MeanCi { mean, half_width: f64::INFINITY };
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = T975.get(n - 2).copied().unwrap_or(1.96);
    MeanCi { mean, half_width: t * (var / n as f64).sqrt() }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KindStats {
    pub world: String,
    pub kind: NetKind,
    pub loss: MeanCi,
    pub greedy_return: MeanCi,
    pub max_spread: Option<f64>,
    pub min_spread: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub config_hash: String,
    pub seed: u64,
    pub replicas: usize,
    /// Exact truncated return of the optimal policy, per world.
    pub optimal_return: Vec<(String, f64)>,
    pub stats: Vec<KindStats>,
    pub checks: Vec<Check>,
    pub runs: Vec<RunResult>,
}

impl FitSummary {
    pub fn stats_for(&self, world: &str, kind: NetKind) -> Option<&KindStats> {
        self.stats.iter().find(|s| s.world == world && s.kind == kind)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn run_one(
    cfg: &FitExperimentConfig,
    world: &str,
    gw: &GridworldConfig,
    kind: NetKind,
    seed: u64,
) -> Result<RunResult> {
    let (m, sym) = build_gridworld::<f64>(gw)?;
    let data = QDataset::from_mdp(&m, &sym, cfg.value_tol)?;
    let mut net = build_qnet::<f64>(&cfg.net_spec(kind, seed), &sym)?;
    let log = train_q_regression(&mut net, &data, &cfg.train)?;
    let greedy_return = greedy_policy_return(&net, &m, cfg.eval.episodes, cfg.eval.horizon, seed)?;
    Ok(RunResult {
        world: world.to_string(),
        kind,
        seed,
        final_loss: log.final_loss,
        final_spread: log.final_spread(),
        diverged_at: log.diverged_at,
        greedy_return,
        log: Some(log),
    })
}

/// Runs every `(world, kind, replica)` combination on up to `jobs` threads.
/// Results are ordered by world, kind, then seed regardless of scheduling.
pub fn run_fit_experiment(cfg: &FitExperimentConfig, jobs: usize) -> Result<FitSummary> {
    cfg.validate()?;
    let worlds = cfg.worlds();
    let mut tasks = Vec::new();
    for (w, gw) in &worlds {
        for &kind in &cfg.kinds {
            for r in 0..cfg.replicas {
                tasks.push((*w, gw, kind, cfg.seed + r as u64));
            }
        }
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<RunResult>>>> = Mutex::new((0..tasks.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, tasks.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(w, gw, kind, seed)) = tasks.get(i) else {
                    break;
                };
                let res = run_one(cfg, w, gw, kind, seed);
                slots.lock().expect("result lock")[i] = Some(res);
            });
        }
    });
    let runs = slots
        .into_inner()
        .expect("result lock")
        .into_iter()
        .map(|r| r.unwrap_or_else(|| Err(Error::InvalidData("run did not complete".into()))))
        .collect::<Result<Vec<_>>>()?;

    let mut optimal_return = Vec::new();
    for (w, gw) in &worlds {
        let (m, _) = build_gridworld::<f64>(gw)?;
        let sol = value_iteration(&m, cfg.value_tol)?;
        let pi = greedy_policy(&sol.q, m.n_actions());
        optimal_return.push((w.to_string(), truncated_policy_return(&m, &pi, cfg.eval.horizon)?));
    }

    let mut stats = Vec::new();
    for (w, _) in &worlds {
        for &kind in &cfg.kinds {
            let rs: Vec<&RunResult> = runs.iter().filter(|r| r.world == *w && r.kind == kind).collect();
            let losses: Vec<f64> = rs.iter().map(|r| r.final_loss).collect();
            let rets: Vec<f64> = rs.iter().map(|r| r.greedy_return.mean).collect();
            let spreads: Vec<f64> = rs.iter().filter_map(|r| r.final_spread).collect();
            stats.push(KindStats {
                world: w.to_string(),
                kind,
                loss: mean_ci95(&losses),
                greedy_return: mean_ci95(&rets),
                max_spread: spreads.iter().copied().reduce(f64::max),
                min_spread: spreads.iter().copied().reduce(f64::min),
            });
        }
    }

    let mut summary = FitSummary {
        config_hash: cfg.hash()?,
        seed: cfg.seed,
        replicas: cfg.replicas,
        optimal_return,
        stats,
        checks: Vec::new(),
        runs,
    };
    summary.checks = directional_checks(&summary);
    Ok(summary)
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check { name: name.to_string(), passed, detail }
}

/// The directional comparisons between kinds and worlds that the summary
/// supports. Checks whose inputs were not run are omitted.
pub fn directional_checks(s: &FitSummary) -> Vec<Check> {
    let mut out = Vec::new();
    let get = |w: &str, k| s.stats_for(w, k);
    if let Some(sym) = get("symmetric", NetKind::Relaxed) {
        let sym_max = sym.max_spread.unwrap_or(0.0);
        out.push(check(
            "symmetric_spread",
            sym_max <= SYMMETRIC_SPREAD_MAX,
            format!("max relaxed spread on the symmetric world {sym_max:.3e} (limit {SYMMETRIC_SPREAD_MAX:e})"),
        ));
        if let Some(brk) = get("configured", NetKind::Relaxed) {
            let lo = brk.min_spread.unwrap_or(0.0);
            out.push(check(
                "spread_ratio",
                lo > SPREAD_RATIO_MIN * sym_max,
                format!("smallest broken-world spread {lo:.3e} vs {SPREAD_RATIO_MIN}x symmetric max {sym_max:.3e}"),
            ));
        }
    }
    let brk_r = get("configured", NetKind::Relaxed);
    for other in [NetKind::Exact, NetKind::Unconstrained] {
        if let (Some(r), Some(o)) = (brk_r, get("configured", other)) {
            out.push(check(
                &format!("loss_relaxed_below_{}", other.tag()),
                r.loss.upper() < o.loss.lower(),
                format!(
                    "relaxed {:.3e} [{:.3e}, {:.3e}] vs {} {:.3e} [{:.3e}, {:.3e}]",
                    r.loss.mean,
                    r.loss.lower(),
                    r.loss.upper(),
                    other.tag(),
                    o.loss.mean,
                    o.loss.lower(),
                    o.loss.upper()
                ),
            ));
        }
    }
    if let (Some(r), Some(e)) = (get("symmetric", NetKind::Relaxed), get("symmetric", NetKind::Exact)) {
        let rel = (r.loss.mean - e.loss.mean).abs() / r.loss.mean.max(e.loss.mean).max(LOSS_FLOOR);
        out.push(check(
            "symmetric_loss_agreement",
            rel <= SYMMETRIC_AGREEMENT,
            format!("relaxed {:.3e} vs exact {:.3e}, relative gap {rel:.3}", r.loss.mean, e.loss.mean),
        ));
    }
    if let (Some(r), Some(e)) = (brk_r, get("configured", NetKind::Exact)) {
        out.push(check(
            "return_relaxed_vs_exact",
            r.greedy_return.mean >= e.greedy_return.mean - e.greedy_return.half_width,
            format!(
                "relaxed return {:.4} vs exact {:.4} +- {:.4}",
                r.greedy_return.mean, e.greedy_return.mean, e.greedy_return.half_width
            ),
        ));
    }
    out
}
