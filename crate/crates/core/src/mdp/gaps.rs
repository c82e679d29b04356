//! Invariance gaps `epsilon_R` and `epsilon_P` of an MDP under a symmetry.

use super::{FiniteMdp, IpmSpec, MdpSymmetry};
use crate::error::Result;
use crate::scalar::Scalar;

/// `(s, a, g)` attaining a gap.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct GapWitness {
    pub s: usize,
    pub a: usize,
    pub g: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GapReport<T> {
    pub epsilon_r: T,
    pub epsilon_p: T,
    pub ipm: IpmSpec<T>,
    pub reward_witness: GapWitness,
    pub transition_witness: GapWitness,
}

/// `|R(gs, ga) - R(s, a)|`.
pub fn reward_gap_at<T: Scalar>(m: &FiniteMdp<T>, sym: &MdpSymmetry, w: GapWitness) -> T {
    (m.reward(sym.state(w.g, w.s), sym.action(w.g, w.a)) - m.reward(w.s, w.a)).abs()
}

/// IPM distance between `s' -> P(g s' | gs, ga)` and `s' -> P(s' | s, a)`.
pub fn transition_gap_at<T: Scalar>(m: &FiniteMdp<T>, sym: &MdpSymmetry, ipm: &IpmSpec<T>, w: GapWitness) -> T {
    let moved = m.next_dist(sym.state(w.g, w.s), sym.action(w.g, w.a));
    let pulled: Vec<T> = (0..m.n_states()).map(|t| moved[sym.state(w.g, t)]).collect();
    ipm.distance_unchecked(&pulled, m.next_dist(w.s, w.a))
}

fn argmax_over_grid<T: Scalar>(m: &FiniteMdp<T>, sym: &MdpSymmetry, f: impl Fn(GapWitness) -> T) -> (T, GapWitness) {
    let group = sym.group();
    let mut best = (T::zero(), GapWitness { s: 0, a: 0, g: group.identity() });
    for g in group.elements().filter(|&g| g != group.identity()) {
        for s in 0..m.n_states() {
            for a in 0..m.n_actions() {
                let w = GapWitness { s, a, g };
                let x = f(w);
                if x > best.0 {
                    best = (x, w);
                }
            }
        }
    }
    best
}

/// Tightest `epsilon_R`.
pub fn reward_gap<T: Scalar>(m: &FiniteMdp<T>, sym: &MdpSymmetry) -> Result<T> {
    sym.check_matches(m)?;
    Ok(argmax_over_grid(m, sym, |w| reward_gap_at(m, sym, w)).0)
}

/// Tightest `epsilon_P` under `ipm`.
pub fn transition_gap<T: Scalar>(m: &FiniteMdp<T>, sym: &MdpSymmetry, ipm: &IpmSpec<T>) -> Result<T> {
    sym.check_matches(m)?;
    ipm.check_size(m.n_states())?;
    Ok(argmax_over_grid(m, sym, |w| transition_gap_at(m, sym, ipm, w)).0)
}

pub fn gap_report<T: Scalar>(m: &FiniteMdp<T>, sym: &MdpSymmetry, ipm: &IpmSpec<T>) -> Result<GapReport<T>> {
    sym.check_matches(m)?;
    ipm.check_size(m.n_states())?;
    let (epsilon_r, reward_witness) = argmax_over_grid(m, sym, |w| reward_gap_at(m, sym, w));
    let (epsilon_p, transition_witness) = argmax_over_grid(m, sym, |w| transition_gap_at(m, sym, ipm, w));
    Ok(GapReport { epsilon_r, epsilon_p, ipm: ipm.clone(), reward_witness, transition_witness })
}
