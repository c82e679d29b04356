//! Full-batch gradient descent on the mean squared error to tabular Q*.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autograd::Tape;
use crate::envs::gridworld::encode_state_signal;
use crate::error::{invalid, Error, Result};
use crate::mdp::{value_iteration, FiniteMdp, MdpSymmetry};
use crate::scalar::Scalar;

use super::qnet::{NetKind, Param, QNet, QNetSpec};

/// Loss above which a run is aborted.
pub const DIVERGENCE_LOSS: f64 = 1e12;

/// Regression pairs stacked into `[batch, |G| S]` inputs and `[batch, A]`
/// targets.
#[derive(Clone, Debug, PartialEq)]
pub struct QDataset<T> {
    pub inputs: Vec<T>,
    pub targets: Vec<T>,
    pub batch: usize,
    pub input_dim: usize,
    pub n_actions: usize,
}

impl<T: Scalar> QDataset<T> {
    pub fn new(inputs: Vec<T>, targets: Vec<T>, batch: usize, n_actions: usize) -> Result<Self> {
        if batch == 0 || n_actions == 0 {
            return invalid("dataset must be nonempty");
        }
        if inputs.len() % batch != 0 || targets.len() != batch * n_actions {
            return invalid("dataset shapes are inconsistent");
        }
        let input_dim = inputs.len() / batch;
        Ok(Self { inputs, targets, batch, input_dim, n_actions })
    }

    /// Every state paired with its row of `Q*` from value iteration at `tol`.
    pub fn from_mdp(m: &FiniteMdp<T>, sym: &MdpSymmetry, tol: T) -> Result<Self> {
        sym.check_matches(m)?;
        let sol = value_iteration(m, tol)?;
        let mut inputs = Vec::new();
        for s in 0..m.n_states() {
            inputs.extend_from_slice(encode_state_signal::<T>(sym, s)?.values());
        }
        Self::new(inputs, sol.q, m.n_states(), m.n_actions())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub learning_rate: f64,
    /// Spread snapshot interval; step 0 and the last step are always logged.
    pub log_every: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return invalid("learning rate must be positive");
        }
        if self.log_every == 0 {
            return invalid("log_every must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpreadSnapshot {
    pub step: usize,
    /// Largest max-min spread of relaxed weights over all layers.
    pub spread: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub kind: NetKind,
    pub seed: u64,
    pub config_hash: String,
    /// Loss before the update of each step.
    pub losses: Vec<f64>,
    /// Empty for kinds without relaxed weights.
    pub spreads: Vec<SpreadSnapshot>,
    /// Loss after the last update.
    pub final_loss: f64,
    pub final_params: Vec<Param<f64>>,
    /// Step at which the loss exceeded the divergence threshold.
    pub diverged_at: Option<usize>,
}

impl TrainLog {
    pub fn final_spread(&self) -> Option<f64> {
        self.spreads.last().map(|s| s.spread)
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> Result<String> {
        let json = serde_json::to_string(self)?;
        Ok(hex::encode(Sha256::digest(json.as_bytes())))
    }

    /// `step,loss,spread` rows, one per step plus a closing row with the loss
    /// after the last update. `spread` is empty on steps without a snapshot.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["step", "loss", "spread"])?;
        let mut snaps = self.spreads.iter().peekable();
        for (step, loss) in self.losses.iter().chain(std::iter::once(&self.final_loss)).enumerate() {
            let spread = match snaps.peek() {
                Some(s) if s.step == step => {
                    format!("{}", snaps.next().map(|s| s.spread).unwrap_or_default())
                }
                _ => String::new(),
            };
            out.write_record([step.to_string(), format!("{loss}"), spread])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads the `(losses, spreads)` written by [`TrainLog::write_csv`]; the
    /// last loss is the final one.
    pub fn read_csv<R: std::io::Read>(r: R) -> Result<(Vec<f64>, Vec<SpreadSnapshot>)> {
        let mut rdr = csv::Reader::from_reader(r);
        if rdr.headers()?.iter().collect::<Vec<_>>() != ["step", "loss", "spread"] {
            return Err(Error::Parse { line: 1, message: "expected step,loss,spread".into() });
        }
        let (mut losses, mut spreads) = (Vec::new(), Vec::new());
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| Error::Parse { line: i + 2, message: format!("bad {what}") };
            let step: usize = rec[0].parse().map_err(|_| bad("step"))?;
            if step != losses.len() {
                return Err(bad("step order"));
            }
            losses.push(rec[1].parse().map_err(|_| bad("loss"))?);
            if !rec[2].is_empty() {
                spreads.push(SpreadSnapshot { step, spread: rec[2].parse().map_err(|_| bad("spread"))? });
            }
        }
        Ok((losses, spreads))
    }
}

/// Hex SHA-256 over the network spec and training config.
pub fn config_hash(spec: &QNetSpec, cfg: &TrainConfig) -> Result<String> {
    let json = serde_json::to_string(&(spec, cfg))?;
    Ok(hex::encode(Sha256::digest(json.as_bytes())))
}

/// Loss and per-parameter gradients at the current parameters.
pub fn loss_and_grad<T: Scalar>(net: &QNet<T>, data: &QDataset<T>) -> Result<(T, Vec<Vec<T>>)> {
    if data.input_dim != net.input_dim() || data.n_actions != net.n_actions() {
        return invalid("dataset does not fit the network");
    }
    let mut tape = Tape::new();
    let nodes = net.register(&mut tape)?;
    let x = tape.constant(data.inputs.clone(), &[data.batch, data.input_dim])?;
    let y = tape.constant(data.targets.clone(), &[data.batch, data.n_actions])?;
    let pred = net.forward(&mut tape, &nodes, x)?;
    let loss = tape.mse_loss(pred, y)?;
    tape.backward(loss)?;
    let grads = nodes.iter().map(|&n| tape.grad(n).to_vec()).collect();
    Ok((tape.scalar(loss), grads))
}

pub fn loss<T: Scalar>(net: &QNet<T>, data: &QDataset<T>) -> Result<T> {
    let pred = net.predict(&data.inputs, data.batch)?;
    let n = T::from_usize_lossy(pred.len());
    Ok(pred.iter().zip(&data.targets).map(|(p, t)| (*p - *t) * (*p - *t)).sum::<T>() / n)
}

/// One plain gradient-descent step; returns the loss before the update.
pub fn gradient_step<T: Scalar>(net: &mut QNet<T>, data: &QDataset<T>, lr: T) -> Result<T> {
    let (l, grads) = loss_and_grad(net, data)?;
    for (p, g) in net.params_mut().iter_mut().zip(grads) {
        for (v, d) in p.values.iter_mut().zip(g) {
            *v -= lr * d;
        }
    }
    Ok(l)
}

/// Trains `net` in place. A loss above [`DIVERGENCE_LOSS`] (or non-finite)
/// stops the run and is recorded in `diverged_at`; the log up to that point
/// is still returned.
pub fn train_q_regression<T: Scalar>(net: &mut QNet<T>, data: &QDataset<T>, cfg: &TrainConfig) -> Result<TrainLog> {
    cfg.validate()?;
    let lr = T::lit(cfg.learning_rate);
    let mut losses = Vec::with_capacity(cfg.steps);
    let mut spreads = Vec::new();
    let mut diverged_at = None;
    let snapshot = |net: &QNet<T>, step: usize, spreads: &mut Vec<SpreadSnapshot>| -> Result<()> {
        if let Some(s) = net.max_weight_spread()? {
            spreads.push(SpreadSnapshot { step, spread: s.to_f64_lossy() });
        }
        Ok(())
    };
    for step in 0..cfg.steps {
        if step % cfg.log_every == 0 {
            snapshot(net, step, &mut spreads)?;
        }
        let l = gradient_step(net, data, lr)?.to_f64_lossy();
        if !l.is_finite() || l > DIVERGENCE_LOSS {
            if l.is_finite() {
                losses.push(l);
            }
            diverged_at = Some(step);
            break;
        }
        losses.push(l);
    }
    let final_loss = loss(net, data)?.to_f64_lossy();
    if diverged_at.is_none() {
        snapshot(net, cfg.steps, &mut spreads)?;
    }
    let final_params = net
        .params()
        .iter()
        .map(|p| Param {
            name: p.name.clone(),
            shape: p.shape.clone(),
            values: p.values.iter().map(|v| v.to_f64_lossy()).collect(),
        })
        .collect();
    Ok(TrainLog {
        kind: net.kind(),
        seed: net.spec().seed,
        config_hash: config_hash(net.spec(), cfg)?,
        losses,
        spreads,
        final_loss: if final_loss.is_finite() { final_loss } else { f64::MAX },
        final_params,
        diverged_at,
    })
}
