use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use equirl::mdp::{verify_invariance_bound_with, BoundOptions, IpmKind, IpmSpec, MdpFile, DEFAULT_HORIZON};

use crate::report::{create, hash_json, write_json, write_key_values, Meta};
use crate::{require_file, Failure, GlobalOpts, Phase};

#[derive(Debug, Args)]
pub struct VerifyBoundArgs {
    /// MDP file (JSON).
    #[arg(long)]
    pub mdp: PathBuf,
    /// `tv` or `kantorovich`.
    #[arg(long, default_value = "tv")]
    pub ipm: String,
    /// Output `key,value` CSV.
    #[arg(long)]
    pub report: PathBuf,
    /// Same report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Value-iteration tolerance.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    /// Horizon of the finite-horizon check.
    #[arg(long, default_value_t = DEFAULT_HORIZON)]
    pub horizon: usize,
    /// Recorded in the report; the check itself is deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Serialize)]
struct HashedConfig<'a> {
    mdp_sha256: String,
    ipm: &'a str,
    tol: f64,
    horizon: usize,
}

pub fn run(a: &VerifyBoundArgs, g: &GlobalOpts) -> Result<(), Failure> {
    require_file(&a.mdp, "MDP file")?;
    let kind = IpmKind::from_tag(&a.ipm).validation()?;
    if !(a.tol > 0.0) {
        return Err(Failure::Validation("--tol must be positive".into()));
    }
    let text = std::fs::read_to_string(&a.mdp).validation()?;
    let (m, sym) = MdpFile::from_json_str(&text).and_then(MdpFile::into_parts).validation()?;
    let ipm = IpmSpec::for_mdp(kind, &m).validation()?;

    let cfg = HashedConfig { mdp_sha256: hash_json(&text)?, ipm: kind.tag(), tol: a.tol, horizon: a.horizon };
    let meta = Meta::new("verify-bound", &cfg, a.seed, g)?;
    let r = verify_invariance_bound_with(&m, &sym, &ipm, BoundOptions { tol: a.tol, horizon: a.horizon }).runtime()?;

    let w = r.q_gap_witness;
    let mut kv = meta.key_values();
    let mut put = |k: &str, v: String| kv.push((k.to_string(), v));
    put("mdp", a.mdp.display().to_string());
    put("group", sym.group().tag());
    put("n_states", m.n_states().to_string());
    put("n_actions", m.n_actions().to_string());
    put("ipm", kind.tag().into());
    put("gamma", r.gamma.to_string());
    put("epsilon_r", r.epsilon_r().to_string());
    put("epsilon_p", r.epsilon_p().to_string());
    put("rho", r.rho.to_string());
    put("rho_permuted_max", r.rho_permuted_max.to_string());
    put("alpha", r.alpha.to_string());
    put("max_q_gap", r.max_q_gap.to_string());
    put("max_v_gap", r.max_v_gap.to_string());
    put("q_gap_state", w.s.to_string());
    put("q_gap_action", w.a.to_string());
    put("q_gap_element", sym.group().name(w.g).to_string());
    put("holds", r.holds.to_string());
    put("finite_horizon", a.horizon.to_string());
    put("finite_horizon_excess", r.finite_horizon_excess.to_string());
    put("finite_horizon_holds", r.finite_horizon_holds.to_string());
    put("iterations", r.iterations.to_string());
    put("tol", r.tol.to_string());
    for (t, x) in r.alpha_t_series.iter().enumerate() {
        put(&format!("alpha_t.{t}"), x.to_string());
    }

    write_key_values(create(&a.report)?, &kv).runtime()?;
    if let Some(p) = &a.json {
        let map: serde_json::Map<String, serde_json::Value> =
            kv.iter().map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone()))).collect();
        write_json(p, &map)?;
    }
    if !g.quiet {
        println!(
            "eps_R = {:.3e}, eps_P = {:.3e}, alpha = {:.6e}, max Q gap = {:.6e}, holds = {}",
            r.epsilon_r(),
            r.epsilon_p(),
            r.alpha,
            r.max_q_gap,
            r.holds
        );
    }
    Ok(())
}
