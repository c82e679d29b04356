//! Equivariance-error instrumentation and relaxed-weight diagnostics.
//!
//! The stabilizer of a map is computed over a finite, caller-supplied sample
//! set: `g` belongs to it when the worst error over all samples is at most
//! `epsilon`. Errors use the Euclidean norm over every tensor entry.

use std::sync::Arc;

use crate::error::{invalid, Result};
use crate::groups::{FiniteGroup, Representation};
use crate::scalar::Scalar;
use crate::signalconv::{act_on_signal, GroupSignal, RelaxedKernel};

/// A group action on [`GroupSignal`]s.
pub trait SignalAction<T: Scalar> {
    fn group(&self) -> &Arc<FiniteGroup>;
    fn act(&self, g: usize, x: &GroupSignal<T>) -> Result<GroupSignal<T>>;
}

/// Regular action along the group axis: `(g . z)(h) = z(g^{-1} h)`.
#[derive(Clone, Debug)]
pub struct RegularAction<T> {
    rep: Representation<T>,
}

impl<T: Scalar> RegularAction<T> {
    pub fn new(group: &Arc<FiniteGroup>) -> Self {
        Self { rep: crate::groups::regular_representation(group) }
    }
}

impl<T: Scalar> SignalAction<T> for RegularAction<T> {
    fn group(&self) -> &Arc<FiniteGroup> {
        self.rep.group()
    }

    fn act(&self, g: usize, x: &GroupSignal<T>) -> Result<GroupSignal<T>> {
        act_on_signal(&self.rep, g, x)
    }
}

/// Acts on the channel vector at every group position by `rho(g)`, leaving
/// the group axis alone. With the sign representation this is the action on
/// reflection-odd outputs such as torques.
#[derive(Clone, Debug)]
pub struct FiberAction<T> {
    rep: Representation<T>,
}

impl<T: Scalar> FiberAction<T> {
    pub fn new(rep: Representation<T>) -> Self {
        Self { rep }
    }
}

impl<T: Scalar> SignalAction<T> for FiberAction<T> {
    fn group(&self) -> &Arc<FiniteGroup> {
        self.rep.group()
    }

    fn act(&self, g: usize, x: &GroupSignal<T>) -> Result<GroupSignal<T>> {
        if x.channels() != self.rep.dim() {
            return invalid(format!("fiber action of dim {} on {} channels", self.rep.dim(), x.channels()));
        }
        self.rep.group().check_element(g)?;
        let values: Vec<T> = x.group().elements().flat_map(|h| self.rep.apply(g, x.fiber(h))).collect();
        GroupSignal::new(x.group().clone(), x.channels(), values)
    }
}

/// `ee(f, g, x) = || f(g . x) - g . f(x) ||`.
pub fn equivariance_error<T, F, A, B>(f: &F, act_in: &A, act_out: &B, g: usize, x: &GroupSignal<T>) -> Result<T>
where
    T: Scalar,
    F: Fn(&GroupSignal<T>) -> Result<GroupSignal<T>> + ?Sized,
    A: SignalAction<T> + ?Sized,
    B: SignalAction<T> + ?Sized,
{
    let lhs = f(&act_in.act(g, x)?)?;
    let rhs = act_out.act(g, &f(x)?)?;
    if lhs.channels() != rhs.channels() || lhs.values().len() != rhs.values().len() {
        return invalid("output shapes differ between f(g.x) and g.f(x)");
    }
    lhs.distance(&rhs)
}

#[derive(Clone, Debug)]
pub struct EquivarianceReport<T> {
    /// `errors[g][sample]`.
    pub errors: Vec<Vec<T>>,
    pub max: T,
    pub mean: T,
    pub per_element_max: Vec<T>,
    pub per_element_mean: Vec<T>,
    pub epsilon: T,
    pub stabilizer: Vec<usize>,
    pub num_samples: usize,
}

impl<T: Scalar> EquivarianceReport<T> {
    pub fn is_approximately_equivariant(&self) -> bool {
        self.stabilizer.len() == self.errors.len()
    }
}

/// Evaluates `ee` on every `(g, sample)` pair in a fixed order.
pub fn equivariance_report<T, F, A, B>(
    f: &F,
    act_in: &A,
    act_out: &B,
    samples: &[GroupSignal<T>],
    epsilon: T,
) -> Result<EquivarianceReport<T>>
where
    T: Scalar,
    F: Fn(&GroupSignal<T>) -> Result<GroupSignal<T>> + ?Sized,
    A: SignalAction<T> + ?Sized,
    B: SignalAction<T> + ?Sized,
{
    if samples.is_empty() {
        return invalid("stabilizer needs a nonempty sample set");
    }
    if !(epsilon >= T::zero()) {
        return invalid("epsilon must be nonnegative");
    }
    let group = act_in.group().clone();
    let mut errors = Vec::with_capacity(group.order());
    for g in group.elements() {
        let row = samples.iter().map(|x| equivariance_error(f, act_in, act_out, g, x)).collect::<Result<Vec<T>>>()?;
        errors.push(row);
    }
    let n = T::from_usize_lossy(samples.len());
    let per_element_max: Vec<T> = errors.iter().map(|r| r.iter().fold(T::zero(), |m, &v| m.max(v))).collect();
    let per_element_mean: Vec<T> = errors.iter().map(|r| r.iter().copied().sum::<T>() / n).collect();
    let max = per_element_max.iter().fold(T::zero(), |m, &v| m.max(v));
    let mean = per_element_mean.iter().copied().sum::<T>() / T::from_usize_lossy(group.order());
    let stabilizer = group.elements().filter(|&g| per_element_max[g] <= epsilon).collect();
    Ok(EquivarianceReport {
        errors,
        max,
        mean,
        per_element_max,
        per_element_mean,
        epsilon,
        stabilizer,
        num_samples: samples.len(),
    })
}

pub fn epsilon_stabilizer<T, F, A, B>(
    f: &F,
    act_in: &A,
    act_out: &B,
    samples: &[GroupSignal<T>],
    epsilon: T,
) -> Result<Vec<usize>>
where
    T: Scalar,
    F: Fn(&GroupSignal<T>) -> Result<GroupSignal<T>> + ?Sized,
    A: SignalAction<T> + ?Sized,
    B: SignalAction<T> + ?Sized,
{
    Ok(equivariance_report(f, act_in, act_out, samples, epsilon)?.stabilizer)
}

pub fn is_approximately_equivariant<T, F, A, B>(
    f: &F,
    act_in: &A,
    act_out: &B,
    samples: &[GroupSignal<T>],
    epsilon: T,
) -> Result<bool>
where
    T: Scalar,
    F: Fn(&GroupSignal<T>) -> Result<GroupSignal<T>> + ?Sized,
    A: SignalAction<T> + ?Sized,
    B: SignalAction<T> + ?Sized,
{
    Ok(equivariance_report(f, act_in, act_out, samples, epsilon)?.is_approximately_equivariant())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightSpread<T> {
    pub l: usize,
    /// max - min over group elements.
    pub spread: T,
    /// Population variance over group elements.
    pub variance: T,
}

/// Spread statistics for an `L x |G|` row-major weight table.
pub fn weight_spread<T: Scalar>(weights: &[T], group_order: usize) -> Vec<WeightSpread<T>> {
    if group_order == 0 {
        return Vec::new();
    }
    weights
        .chunks(group_order)
        .enumerate()
        .map(|(l, w)| {
            let n = T::from_usize_lossy(w.len());
            let mean = w.iter().copied().sum::<T>() / n;
            let variance = w.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / n;
            let hi = w.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
            let lo = w.iter().fold(T::infinity(), |m, &x| m.min(x));
            WeightSpread { l, spread: hi - lo, variance }
        })
        .collect()
}

pub fn relaxed_weight_spread<T: Scalar>(rk: &RelaxedKernel<T>) -> Vec<WeightSpread<T>> {
    weight_spread(rk.weights(), rk.group().order())
}
