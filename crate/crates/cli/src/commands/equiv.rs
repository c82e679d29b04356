use std::path::PathBuf;
use std::sync::Arc;

use clap::Args;
use rand::Rng;
use serde::Serialize;

use equirl::metrics::{equivariance_report, relaxed_weight_spread, RegularAction};
use equirl::rng::{self, streams};
use equirl::signalconv::{relaxed_group_convolve, ExactKernel, GroupSignal, RelaxedKernel};
use equirl::FiniteGroup;

use super::fit::RunFile;
use crate::report::{create, write_json, write_rows, ErrorRow, Meta, WeightRow};
use crate::{require_file, Failure, GlobalOpts, Phase};

#[derive(Debug, Args)]
pub struct EquivReportArgs {
    /// Group tag for a random layer: c2, c4, d1, d2 or d4.
    #[arg(long, default_value = "d2")]
    pub group: String,
    /// Report on the relaxed layers of a `gridworld-fit` run file instead.
    #[arg(long)]
    pub train_log: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub c_in: usize,
    #[arg(long, default_value_t = 2)]
    pub c_out: usize,
    #[arg(long, default_value_t = 1)]
    pub kernels: usize,
    /// Half-width of the uniform noise added to the random layer's weights.
    #[arg(long, default_value_t = 0.0)]
    pub perturb: f64,
    #[arg(long, default_value_t = 16)]
    pub samples: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Receives weights.csv, errors.csv and report.json.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Serialize)]
struct HashedConfig<'a> {
    group: &'a str,
    train_log_sha256: Option<String>,
    c_in: usize,
    c_out: usize,
    kernels: usize,
    perturb: f64,
    samples: usize,
    epsilon: f64,
}

#[derive(Serialize)]
struct LayerSummary {
    layer: usize,
    max_ee: f64,
    mean_ee: f64,
    stabilizer: Vec<String>,
    approximately_equivariant: bool,
}

#[derive(Serialize)]
struct Report {
    #[serde(flatten)]
    meta: Meta,
    group: String,
    epsilon: f64,
    samples: usize,
    layers: Vec<LayerSummary>,
}

fn random_layer(
    group: &Arc<FiniteGroup>,
    a: &EquivReportArgs,
    r: &mut rng::Rng,
) -> Result<RelaxedKernel<f64>, Failure> {
    let ks = (0..a.kernels).map(|_| ExactKernel::random(group.clone(), a.c_out, a.c_in, r)).collect();
    let mut rk = RelaxedKernel::uniform(ks).validation()?;
    if a.perturb > 0.0 {
        for l in 0..a.kernels {
            for h in group.elements() {
                let w = rk.weight(l, h) + r.random_range(-a.perturb..=a.perturb);
                rk.set_weight(l, h, w);
            }
        }
    }
    Ok(rk)
}

fn layers_from_log(group: &Arc<FiniteGroup>, file: &RunFile) -> Result<Vec<RelaxedKernel<f64>>, Failure> {
    let params = &file.log.final_params;
    let mut out = Vec::new();
    for li in 0.. {
        let Some(w) = params.iter().find(|p| p.name == format!("layer{li}.w")) else { break };
        let ks = params
            .iter()
            .filter(|p| p.name.starts_with(&format!("layer{li}.psi")))
            .map(|p| match p.shape[..] {
                [_, co, ci] => ExactKernel::new(group.clone(), co, ci, p.values.clone()),
                _ => Err(equirl::Error::InvalidData(format!("{} is not a group kernel", p.name))),
            })
            .collect::<Result<Vec<_>, _>>()
            .validation()?;
        out.push(RelaxedKernel::new(ks, w.values.clone()).validation()?);
    }
    if out.is_empty() {
        return Err(Failure::Validation("the run has no relaxed layers".into()));
    }
    Ok(out)
}

pub fn run(a: &EquivReportArgs, g: &GlobalOpts) -> Result<(), Failure> {
    if a.samples == 0 || a.kernels == 0 || a.c_in == 0 || a.c_out == 0 {
        return Err(Failure::Validation("samples, kernels and channel counts must be positive".into()));
    }
    if !(a.epsilon >= 0.0) || !(a.perturb >= 0.0) {
        return Err(Failure::Validation("epsilon and perturb must be nonnegative".into()));
    }
    let mut r = rng::stream(a.seed, streams::EQUIV_REPORT);
    let (group, layers, log_hash) = match &a.train_log {
        Some(p) => {
            require_file(p, "train log")?;
            let text = std::fs::read_to_string(p).validation()?;
            let file: RunFile = serde_json::from_str(&text).validation()?;
            let group = Arc::new(FiniteGroup::from_tag(&file.group).validation()?);
            let layers = layers_from_log(&group, &file)?;
            (group, layers, Some(crate::report::hash_json(&text)?))
        }
        None => {
            let group = Arc::new(FiniteGroup::from_tag(&a.group).validation()?);
            let layer = random_layer(&group, a, &mut r)?;
            (group, vec![layer], None)
        }
    };
    let tag = group.tag();
    let hashed = HashedConfig {
        group: &tag,
        train_log_sha256: log_hash,
        c_in: a.c_in,
        c_out: a.c_out,
        kernels: a.kernels,
        perturb: a.perturb,
        samples: a.samples,
        epsilon: a.epsilon,
    };
    let meta = Meta::new("equiv-report", &hashed, a.seed, g)?;

    let act = RegularAction::<f64>::new(&group);
    let mut weights = Vec::new();
    let mut errors = Vec::new();
    let mut summaries = Vec::new();
    for (li, rk) in layers.iter().enumerate() {
        let spreads = relaxed_weight_spread(rk);
        for s in &spreads {
            for h in group.elements() {
                weights.push(WeightRow {
                    layer: li,
                    l: s.l,
                    element_name: group.name(h).to_string(),
                    weight: rk.weight(s.l, h),
                    spread: s.spread,
                    variance: s.variance,
                });
            }
        }
        let c_in = rk.kernels()[0].c_in();
        let samples: Vec<GroupSignal<f64>> =
            (0..a.samples).map(|_| GroupSignal::random(group.clone(), c_in, &mut r)).collect();
        let f = |x: &GroupSignal<f64>| relaxed_group_convolve(x, rk);
        let rep = equivariance_report(&f, &act, &act, &samples, a.epsilon).runtime()?;
        for h in group.elements() {
            errors.push(ErrorRow {
                layer: li,
                element_name: group.name(h).to_string(),
                max_ee: rep.per_element_max[h],
                mean_ee: rep.per_element_mean[h],
            });
        }
        summaries.push(LayerSummary {
            layer: li,
            max_ee: rep.max,
            mean_ee: rep.mean,
            stabilizer: rep.stabilizer.iter().map(|&h| group.name(h).to_string()).collect(),
            approximately_equivariant: rep.is_approximately_equivariant(),
        });
    }

    write_rows(create(&a.out_dir.join("weights.csv"))?, &weights).runtime()?;
    write_rows(create(&a.out_dir.join("errors.csv"))?, &errors).runtime()?;
    if !g.quiet {
        for s in &summaries {
            println!("layer {}: max ee {:.3e}, stabilizer {{{}}}", s.layer, s.max_ee, s.stabilizer.join(", "));
        }
    }
    let report = Report { meta, group: tag, epsilon: a.epsilon, samples: a.samples, layers: summaries };
    write_json(&a.out_dir.join("report.json"), &report)
}
