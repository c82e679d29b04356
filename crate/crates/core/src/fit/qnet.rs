//! Q-networks over group signals.
//!
//! Group layers are evaluated as one matrix product per layer: the kernel
//! `psi[g^{-1} h][o][i]` is gathered into a `(|G| C_in) x (|G| C_out)` matrix,
//! so the tape only needs `gather`, `matmul` and elementwise ops. A relaxed
//! layer multiplies each gathered kernel by its weight `w^l(h)` (gathered
//! along the input element) and sums over `l`.
//!
//! The head of the group kinds maps final features `F(h) in R^A` to
//! `Q(a) = (1/|G|) sum_h F(h)[h^{-1} . a]`, so `Q(g.x)(g.a) = Q(x)(a)` for the
//! exact kind.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autograd::{NodeId, Tape};
use crate::envs::gridworld::encode_state_signal;
use crate::error::{invalid, Result};
use crate::groups::FiniteGroup;
use crate::mdp::MdpSymmetry;
use crate::metrics::relaxed_weight_spread;
use crate::rng::{self, streams};
use crate::scalar::Scalar;
use crate::signalconv::{ExactKernel, GroupSignal, RelaxedKernel};

/// Tolerance on matching the unconstrained parameter count.
pub const PARAM_MATCH_TOLERANCE: f64 = 0.10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetKind {
    Exact,
    Relaxed,
    Unconstrained,
}

impl NetKind {
    pub const ALL: [NetKind; 3] = [NetKind::Exact, NetKind::Relaxed, NetKind::Unconstrained];

    pub fn tag(self) -> &'static str {
        match self {
            NetKind::Exact => "exact",
            NetKind::Relaxed => "relaxed",
            NetKind::Unconstrained => "unconstrained",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    #[default]
    Tanh,
    Relu,
}

fn default_kernels() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QNetSpec {
    pub kind: NetKind,
    /// Hidden channels per group layer. Dense widths for the unconstrained
    /// kind are derived from these.
    pub widths: Vec<usize>,
    /// Exact kernels per relaxed layer.
    #[serde(default = "default_kernels")]
    pub kernels: usize,
    #[serde(default)]
    pub nonlinearity: Nonlinearity,
    pub seed: u64,
}

impl QNetSpec {
    pub fn new(kind: NetKind, widths: Vec<usize>, seed: u64) -> Self {
        Self { kind, widths, kernels: 1, nonlinearity: Nonlinearity::Tanh, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.iter().any(|&w| w == 0) {
            return invalid("layer widths must be positive");
        }
        if self.kernels == 0 {
            return invalid("relaxed layers need at least one kernel");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<T>,
}

impl<T> Param<T> {
    fn new(name: String, shape: Vec<usize>, values: Vec<T>) -> Self {
        Self { name, shape, values }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Layer {
    /// Indices of kernel params (one per `l`), weight param, bias param.
    Group {
        c_in: usize,
        c_out: usize,
        kernels: usize,
        weights: Option<usize>,
        bias: usize,
        first: usize,
    },
    Dense {
        d_in: usize,
        d_out: usize,
        weight: usize,
        bias: usize,
    },
}

/// A differentiable map from group signals to per-action Q-values.
#[derive(Clone, Debug)]
pub struct QNet<T> {
    spec: QNetSpec,
    sym: MdpSymmetry,
    layers: Vec<Layer>,
    params: Vec<Param<T>>,
    dense_widths: Vec<usize>,
}

fn normal_values<T: Scalar, R: Rng + ?Sized>(rng: &mut R, n: usize, scale: f64) -> Vec<T> {
    (0..n).map(|_| T::lit(rng.sample::<f64, _>(StandardNormal) * scale)).collect()
}

fn group_param_count(order: usize, dims: &[usize], kernels: usize, relaxed: bool) -> usize {
    dims.windows(2)
        .map(|w| {
            let k = if relaxed { kernels } else { 1 };
            k * order * w[0] * w[1] + w[1] + if relaxed { kernels * order } else { 0 }
        })
        .sum()
}

fn dense_param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Hidden widths for the unconstrained kind: the group widths scaled by a
/// common factor, chosen so the parameter count is closest to `target`.
pub fn matched_dense_widths(d_in: usize, d_out: usize, group_widths: &[usize], target: usize) -> Result<Vec<usize>> {
    let count = |w: &[usize]| {
        let dims: Vec<usize> = std::iter::once(d_in).chain(w.iter().copied()).chain(std::iter::once(d_out)).collect();
        dense_param_count(&dims)
    };
    let mut best: Option<(usize, Vec<usize>)> = None;
    let mut s = 0.01;
    loop {
        let widths: Vec<usize> = group_widths.iter().map(|&c| ((c as f64 * s).round() as usize).max(1)).collect();
        let n = count(&widths);
        let diff = n.abs_diff(target);
        if best.as_ref().map_or(true, |(d, _)| diff < *d) {
            best = Some((diff, widths));
        }
        if n > 2 * target || s > 1e4 {
            break;
        }
        s += 0.01;
    }
    let (diff, widths) = best.expect("at least one candidate");
    if diff as f64 > PARAM_MATCH_TOLERANCE * target as f64 {
        return invalid(format!("no dense widths within 10% of {target} parameters"));
    }
    Ok(widths)
}

/// Builds a network for `sym`: input signals have one channel per state,
/// outputs one Q-value per action.
pub fn build_qnet<T: Scalar>(spec: &QNetSpec, sym: &MdpSymmetry) -> Result<QNet<T>> {
    spec.validate()?;
    let group = sym.group();
    let n = group.order();
    let c_in = sym.n_states();
    let n_actions = sym.n_actions();
    let mut rng = rng::stream(spec.seed, streams::INIT);
    let mut params = Vec::new();
    let mut layers = Vec::new();
    let group_dims: Vec<usize> =
        std::iter::once(c_in).chain(spec.widths.iter().copied()).chain(std::iter::once(n_actions)).collect();
    let mut dense_widths = Vec::new();

    match spec.kind {
        NetKind::Exact | NetKind::Relaxed => {
            let relaxed = spec.kind == NetKind::Relaxed;
            let kernels = if relaxed { spec.kernels } else { 1 };
            for (li, w) in group_dims.windows(2).enumerate() {
                let (ci, co) = (w[0], w[1]);
                let scale = 1.0 / ((n * ci) as f64).sqrt();
                let first = params.len();
                for l in 0..kernels {
                    params.push(Param::new(
                        format!("layer{li}.psi{l}"),
                        vec![n, co, ci],
                        normal_values(&mut rng, n * co * ci, scale),
                    ));
                }
                let weights = relaxed.then(|| {
                    let w0 = T::one() / T::from_usize_lossy(kernels);
                    params.push(Param::new(format!("layer{li}.w"), vec![kernels, n], vec![w0; kernels * n]));
                    params.len() - 1
                });
                params.push(Param::new(format!("layer{li}.bias"), vec![co], vec![T::zero(); co]));
                layers.push(Layer::Group { c_in: ci, c_out: co, kernels, weights, bias: params.len() - 1, first });
            }
        }
        NetKind::Unconstrained => {
            let target = group_param_count(n, &group_dims, spec.kernels, true);
            dense_widths = matched_dense_widths(n * c_in, n_actions, &spec.widths, target)?;
            let dims: Vec<usize> = std::iter::once(n * c_in)
                .chain(dense_widths.iter().copied())
                .chain(std::iter::once(n_actions))
                .collect();
            for (li, w) in dims.windows(2).enumerate() {
                let (di, dout) = (w[0], w[1]);
                let scale = 1.0 / (di as f64).sqrt();
                params.push(Param::new(
                    format!("layer{li}.weight"),
                    vec![di, dout],
                    normal_values(&mut rng, di * dout, scale),
                ));
                params.push(Param::new(format!("layer{li}.bias"), vec![dout], vec![T::zero(); dout]));
                let weight = params.len() - 2;
                layers.push(Layer::Dense { d_in: di, d_out: dout, weight, bias: weight + 1 });
            }
        }
    }
    Ok(QNet { spec: spec.clone(), sym: sym.clone(), layers, params, dense_widths })
}

impl<T: Scalar> QNet<T> {
    pub fn spec(&self) -> &QNetSpec {
        &self.spec
    }

    pub fn kind(&self) -> NetKind {
        self.spec.kind
    }

    pub fn symmetry(&self) -> &MdpSymmetry {
        &self.sym
    }

    pub fn group(&self) -> &Arc<FiniteGroup> {
        self.sym.group()
    }

    pub fn n_actions(&self) -> usize {
        self.sym.n_actions()
    }

    /// Flattened input size `|G| * S`.
    pub fn input_dim(&self) -> usize {
        self.group().order() * self.sym.n_states()
    }

    /// Hidden widths of the unconstrained kind (empty for group kinds).
    pub fn dense_widths(&self) -> &[usize] {
        &self.dense_widths
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.values.len()).sum()
    }

    pub fn flat_params(&self) -> Vec<T> {
        self.params.iter().flat_map(|p| p.values.iter().copied()).collect()
    }

    pub fn set_flat_params(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.param_count() {
            return invalid(format!("expected {} parameters, got {}", self.param_count(), flat.len()));
        }
        let mut k = 0;
        for p in &mut self.params {
            let n = p.values.len();
            p.values.copy_from_slice(&flat[k..k + n]);
            k += n;
        }
        Ok(())
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    /// Relaxed layers as [`RelaxedKernel`]s, in layer order.
    pub fn relaxed_kernels(&self) -> Result<Vec<RelaxedKernel<T>>> {
        let group = self.group().clone();
        let mut out = Vec::new();
        for layer in &self.layers {
            if let Layer::Group { c_in, c_out, kernels, weights: Some(w), first, .. } = *layer {
                let ks = (0..kernels)
                    .map(|l| ExactKernel::new(group.clone(), c_out, c_in, self.params[first + l].values.clone()))
                    .collect::<Result<Vec<_>>>()?;
                out.push(RelaxedKernel::new(ks, self.params[w].values.clone())?);
            }
        }
        Ok(out)
    }

    /// Largest relaxed-weight spread over layers and kernels, `None` for
    /// kinds without relaxed weights.
    pub fn max_weight_spread(&self) -> Result<Option<T>> {
        let ks = self.relaxed_kernels()?;
        if ks.is_empty() {
            return Ok(None);
        }
        let m = ks
            .iter()
            .flat_map(|k| relaxed_weight_spread(k).into_iter().map(|s| s.spread))
            .fold(T::zero(), |a, b| a.max(b));
        Ok(Some(m))
    }

    /// Puts every parameter on `tape` as a trainable leaf.
    pub fn register(&self, tape: &mut Tape<T>) -> Result<Vec<NodeId>> {
        self.params.iter().map(|p| tape.param(p.values.clone(), &p.shape)).collect()
    }

    fn activate(&self, tape: &mut Tape<T>, x: NodeId) -> NodeId {
        match self.spec.nonlinearity {
            Nonlinearity::Tanh => tape.tanh(x),
            Nonlinearity::Relu => tape.relu(x),
        }
    }

    fn add_bias(tape: &mut Tape<T>, x: NodeId, bias: NodeId, batch: usize, width: usize, c: usize) -> Result<NodeId> {
        let index = (0..batch * width).map(|k| k % c).collect();
        let b = tape.gather(bias, index, &[batch, width])?;
        tape.tensor_add(x, b)
    }

    /// Builds the forward graph for a `[batch, |G| S]` input node and returns
    /// the `[batch, A]` output node.
    pub fn forward(&self, tape: &mut Tape<T>, nodes: &[NodeId], x: NodeId) -> Result<NodeId> {
        let shape = tape.shape(x).to_vec();
        if shape.len() != 2 || shape[1] != self.input_dim() {
            return invalid(format!("input shape {shape:?} does not match [batch, {}]", self.input_dim()));
        }
        if nodes.len() != self.params.len() {
            return invalid("parameter node count does not match the network");
        }
        let batch = shape[0];
        let group = self.group().clone();
        let n = group.order();
        let last = self.layers.len() - 1;
        let mut h = x;
        for (li, layer) in self.layers.iter().enumerate() {
            match *layer {
                Layer::Group { c_in, c_out, kernels, weights, bias, first } => {
                    let (rows, cols) = (n * c_in, n * c_out);
                    let mut kidx = Vec::with_capacity(rows * cols);
                    let mut widx = Vec::with_capacity(rows * cols);
                    for hh in 0..n {
                        for i in 0..c_in {
                            for g in 0..n {
                                let k = group.op(group.inv(g), hh);
                                for o in 0..c_out {
                                    kidx.push((k * c_out + o) * c_in + i);
                                    widx.push(hh);
                                }
                            }
                        }
                    }
                    let mut mat: Option<NodeId> = None;
                    for l in 0..kernels {
                        let mut m = tape.gather(nodes[first + l], kidx.clone(), &[rows, cols])?;
                        if let Some(w) = weights {
                            let index = widx.iter().map(|&hh| l * n + hh).collect();
                            let wm = tape.gather(nodes[w], index, &[rows, cols])?;
                            m = tape.tensor_mul(m, wm)?;
                        }
                        mat = Some(match mat {
                            None => m,
                            Some(acc) => tape.tensor_add(acc, m)?,
                        });
                    }
                    let y = tape.matmul(h, mat.expect("kernels >= 1"))?;
                    h = Self::add_bias(tape, y, nodes[bias], batch, cols, c_out)?;
                }
                Layer::Dense { d_in: _, d_out, weight, bias } => {
                    let y = tape.matmul(h, nodes[weight])?;
                    h = Self::add_bias(tape, y, nodes[bias], batch, d_out, d_out)?;
                }
            }
            if li < last {
                h = self.activate(tape, h);
            }
        }
        if matches!(self.layers[last], Layer::Group { .. }) {
            let a_n = self.n_actions();
            let mut head = vec![T::zero(); n * a_n * a_n];
            let share = T::one() / T::from_usize_lossy(n);
            for hh in 0..n {
                let h_inv = group.inv(hh);
                for a in 0..a_n {
                    head[(hh * a_n + self.sym.action(h_inv, a)) * a_n + a] += share;
                }
            }
            let head = tape.constant(head, &[n * a_n, a_n])?;
            h = tape.matmul(h, head)?;
        }
        Ok(h)
    }

    /// Q-values for a batch of flattened signals (`[batch, |G| S]`).
    pub fn predict(&self, inputs: &[T], batch: usize) -> Result<Vec<T>> {
        let mut tape = Tape::new();
        let nodes = self.register(&mut tape)?;
        let x = tape.constant(inputs.to_vec(), &[batch, self.input_dim()])?;
        let out = self.forward(&mut tape, &nodes, x)?;
        Ok(tape.value(out).to_vec())
    }

    pub fn q_signal(&self, z: &GroupSignal<T>) -> Result<Vec<T>> {
        if !Arc::ptr_eq(z.group(), self.group()) && z.group().tag() != self.group().tag() {
            return invalid("signal lives on a different group");
        }
        self.predict(z.values(), 1)
    }

    /// Q-values of state `s` through its signal encoding.
    pub fn q_state(&self, s: usize) -> Result<Vec<T>> {
        self.q_signal(&encode_state_signal(&self.sym, s)?)
    }

    /// `Q[s * A + a]` for every state.
    pub fn q_table(&self) -> Result<Vec<T>> {
        let ns = self.sym.n_states();
        let mut inputs = Vec::with_capacity(ns * self.input_dim());
        for s in 0..ns {
            inputs.extend_from_slice(encode_state_signal::<T>(&self.sym, s)?.values());
        }
        self.predict(&inputs, ns)
    }
}
