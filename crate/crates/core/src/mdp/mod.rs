//! Finite MDPs with a group acting by state and action permutations.
//!
//! This module measures how far an MDP is from invariance (`epsilon_R`,
//! `epsilon_P` under an integral probability metric). It solves the MDP
//! exactly by dynamic programming and checks the resulting `Q*`/`V*` gaps
//! against the `alpha` bound.

mod bound;
mod flow;
mod gaps;
mod io;
mod ipm;
pub mod random;
mod solve;

use std::sync::Arc;

pub use bound::{
    alpha_bound, alpha_recursion, sandwich_check, verify_invariance_bound, verify_invariance_bound_with, BoundOptions,
    BoundReport, BOUND_SLACK, DEFAULT_HORIZON,
};
pub use gaps::{gap_report, reward_gap, reward_gap_at, transition_gap, transition_gap_at, GapReport, GapWitness};
pub use io::{MdpFile, SymmetryFile};
pub use ipm::{kantorovich_distance, minkowski_functional, tv_distance, IpmKind, IpmSpec, METRIC_CHECK_LIMIT};
pub use solve::{
    finite_horizon_values, greedy_policy, policy_evaluation, value_iteration, FiniteHorizon, ValueSolution,
};

use crate::error::{invalid, Error, Result};
use crate::groups::FiniteGroup;
use crate::scalar::Scalar;

/// Row-sum tolerance for transition distributions.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// Tabular MDP `(S, A, P, R, gamma)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteMdp<T> {
    n_states: usize,
    n_actions: usize,
    /// `reward[s * A + a]`.
    reward: Vec<T>,
    /// `transition[(s * A + a) * S + s']`.
    transition: Vec<T>,
    gamma: T,
    state_coords: Option<Vec<Vec<T>>>,
}

pub(crate) fn row_tolerance<T: Scalar>(n: usize) -> T {
    T::lit(ROW_SUM_TOLERANCE).max(T::epsilon() * T::from_usize_lossy(8 * n.max(1)))
}

impl<T: Scalar> FiniteMdp<T> {
    pub fn new(n_states: usize, n_actions: usize, reward: Vec<T>, transition: Vec<T>, gamma: T) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return invalid("MDP needs at least one state and one action");
        }
        if reward.len() != n_states * n_actions {
            return invalid("reward table must be S x A");
        }
        if transition.len() != n_states * n_actions * n_states {
            return invalid("transition table must be S x A x S");
        }
        if !(gamma > T::zero() && gamma < T::one()) {
            return invalid(format!("discount must lie in (0, 1), got {gamma}"));
        }
        if reward.iter().any(|r| !r.is_finite()) {
            return invalid("rewards must be finite");
        }
        let tol = row_tolerance::<T>(n_states);
        for (i, row) in transition.chunks(n_states).enumerate() {
            if row.iter().any(|p| !(*p >= T::zero())) {
                return invalid(format!("transition row {i} has a negative or non-finite entry"));
            }
            let sum: T = row.iter().copied().sum();
            if (sum - T::one()).abs() > tol {
                return invalid(format!("transition row (s={}, a={}) sums to {sum}", i / n_actions, i % n_actions));
            }
        }
        Ok(Self { n_states, n_actions, reward, transition, gamma, state_coords: None })
    }

    /// Attaches a coordinate embedding used to build Euclidean state metrics.
    pub fn with_state_coords(mut self, coords: Vec<Vec<T>>) -> Result<Self> {
        if coords.len() != self.n_states {
            return invalid("need one coordinate vector per state");
        }
        let k = coords[0].len();
        if coords.iter().any(|c| c.len() != k || c.iter().any(|x| !x.is_finite())) {
            return invalid("state coordinates must share one finite dimension");
        }
        self.state_coords = Some(coords);
        Ok(self)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }
    pub fn n_actions(&self) -> usize {
        self.n_actions
    }
    pub fn gamma(&self) -> T {
        self.gamma
    }
    pub fn state_coords(&self) -> Option<&[Vec<T>]> {
        self.state_coords.as_deref()
    }
    pub fn rewards(&self) -> &[T] {
        &self.reward
    }
    pub fn transitions(&self) -> &[T] {
        &self.transition
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> T {
        self.reward[s * self.n_actions + a]
    }

    /// `P(. | s, a)`.
    #[inline]
    pub fn next_dist(&self, s: usize, a: usize) -> &[T] {
        let i = (s * self.n_actions + a) * self.n_states;
        &self.transition[i..i + self.n_states]
    }

    pub fn reward_range(&self) -> (T, T) {
        let lo = self.reward.iter().fold(T::infinity(), |m, &r| m.min(r));
        let hi = self.reward.iter().fold(T::neg_infinity(), |m, &r| m.max(r));
        (lo, hi)
    }

    /// `R(s, a) + gamma * sum_s' P(s'|s,a) v(s')`.
    #[inline]
    pub fn backup(&self, s: usize, a: usize, v: &[T]) -> T {
        let ev: T = self.next_dist(s, a).iter().zip(v).map(|(p, x)| *p * *x).sum();
        self.reward(s, a) + self.gamma * ev
    }
}

/// A finite group acting on states and actions by permutations:
/// `state_perm[g][s] = g.s`, `action_perm[g][a] = g.a`.
#[derive(Clone, Debug, PartialEq)]
pub struct MdpSymmetry {
    group: Arc<FiniteGroup>,
    state_perm: Vec<Vec<usize>>,
    action_perm: Vec<Vec<usize>>,
}

fn check_perm_action(group: &FiniteGroup, perms: &[Vec<usize>], what: &str) -> Result<()> {
    if perms.len() != group.order() {
        return invalid(format!("need one {what} permutation per group element"));
    }
    let n = perms[0].len();
    for (g, p) in perms.iter().enumerate() {
        if p.len() != n {
            return invalid(format!("{what} permutations differ in length"));
        }
        let mut seen = vec![false; n];
        for &x in p {
            if x >= n || seen[x] {
                return invalid(format!("{what} map for element {} is not a bijection", group.name(g)));
            }
            seen[x] = true;
        }
    }
    if perms[group.identity()].iter().enumerate().any(|(i, &x)| i != x) {
        return invalid(format!("identity element must act trivially on {what}s"));
    }
    for g in group.elements() {
        for h in group.elements() {
            let gh = group.op(g, h);
            if (0..n).any(|i| perms[gh][i] != perms[g][perms[h][i]]) {
                return Err(Error::InvalidArgument(format!(
                    "{what} action is not a homomorphism at ({}, {})",
                    group.name(g),
                    group.name(h)
                )));
            }
        }
    }
    Ok(())
}

impl MdpSymmetry {
    pub fn new(group: Arc<FiniteGroup>, state_perm: Vec<Vec<usize>>, action_perm: Vec<Vec<usize>>) -> Result<Self> {
        check_perm_action(&group, &state_perm, "state")?;
        check_perm_action(&group, &action_perm, "action")?;
        Ok(Self { group, state_perm, action_perm })
    }

    /// Group acting trivially on `n_states` states and `n_actions` actions.
    pub fn trivial(group: Arc<FiniteGroup>, n_states: usize, n_actions: usize) -> Self {
        let n = group.order();
        Self { group, state_perm: vec![(0..n_states).collect(); n], action_perm: vec![(0..n_actions).collect(); n] }
    }

    pub fn group(&self) -> &Arc<FiniteGroup> {
        &self.group
    }
    pub fn n_states(&self) -> usize {
        self.state_perm[0].len()
    }
    pub fn n_actions(&self) -> usize {
        self.action_perm[0].len()
    }

    #[inline]
    pub fn state(&self, g: usize, s: usize) -> usize {
        self.state_perm[g][s]
    }

    #[inline]
    pub fn action(&self, g: usize, a: usize) -> usize {
        self.action_perm[g][a]
    }

    pub fn state_perm(&self, g: usize) -> &[usize] {
        &self.state_perm[g]
    }
    pub fn action_perm(&self, g: usize) -> &[usize] {
        &self.action_perm[g]
    }

    pub fn check_matches<T: Scalar>(&self, m: &FiniteMdp<T>) -> Result<()> {
        if self.n_states() != m.n_states() || self.n_actions() != m.n_actions() {
            return invalid(format!(
                "symmetry acts on {} states / {} actions, MDP has {} / {}",
                self.n_states(),
                self.n_actions(),
                m.n_states(),
                m.n_actions()
            ));
        }
        Ok(())
    }
}
