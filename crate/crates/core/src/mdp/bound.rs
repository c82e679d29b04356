//! The `alpha` bound on optimal-value gaps and its finite-horizon recursion.

use super::gaps::{gap_report, GapReport, GapWitness};
use super::ipm::minkowski_functional;
use super::solve::{finite_horizon_values, value_iteration};
use super::{FiniteMdp, IpmSpec, MdpSymmetry};
use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// Absolute slack allowed when comparing observed gaps with `alpha`.
pub const BOUND_SLACK: f64 = 1e-9;

/// Default horizon for the finite-horizon check.
pub const DEFAULT_HORIZON: usize = 50;

/// How `Q*` on the transformed domain is read off.
pub const TRANSFORMED_Q_NOTE: &str =
    "Q* on the transformed domain is Q* of the same MDP at (g.s, g.a); the action is a bijection";

/// `(eps_R + gamma * rho * eps_P) / (1 - gamma)`.
pub fn alpha_bound<T: Scalar>(eps_r: T, eps_p: T, gamma: T, rho: T) -> Result<T> {
    if !(gamma > T::zero() && gamma < T::one()) {
        return invalid(format!("discount must lie in (0, 1), got {gamma}"));
    }
    if !(eps_r >= T::zero() && eps_p >= T::zero() && rho >= T::zero()) {
        return invalid("gaps and rho must be nonnegative");
    }
    Ok((eps_r + gamma * rho * eps_p) / (T::one() - gamma))
}

/// Backward recursion `alpha_t = eps_R + gamma (rho_t eps_P + alpha_{t+1})`
/// with `alpha_T = 0`.
///
/// `rho_next[t]` is the Minkowski functional of `V_{t+1}` for `t = 0..T`.
/// The terminal layer is indexed `T` (where `V_T = 0`) rather than `T + 1`,
/// so the series has `T + 1` entries `alpha_0 ..= alpha_T`.
pub fn alpha_recursion<T: Scalar>(eps_r: T, eps_p: T, gamma: T, rho_next: &[T], horizon: usize) -> Result<Vec<T>> {
    if horizon == 0 {
        return invalid("horizon must be at least 1");
    }
    if rho_next.len() != horizon {
        return invalid(format!("need {horizon} rho values, got {}", rho_next.len()));
    }
    alpha_bound(eps_r, eps_p, gamma, T::zero())?;
    let mut alpha = vec![T::zero(); horizon + 1];
    for t in (0..horizon).rev() {
        alpha[t] = eps_r + gamma * (rho_next[t] * eps_p + alpha[t + 1]);
    }
    Ok(alpha)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundOptions<T> {
    /// Value-iteration tolerance.
    pub tol: T,
    /// Horizon of the finite-horizon check.
    pub horizon: usize,
}

impl<T: Scalar> BoundOptions<T> {
    pub fn new(tol: T) -> Self {
        Self { tol, horizon: DEFAULT_HORIZON }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport<T> {
    pub gaps: GapReport<T>,
    pub gamma: T,
    pub alpha: T,
    /// `rho(V*)`.
    pub rho: T,
    /// `max_g rho(s -> V*(g s))`.
    pub rho_permuted_max: T,
    pub max_q_gap: T,
    pub max_v_gap: T,
    pub q_gap_witness: GapWitness,
    /// `alpha_0 ..= alpha_T` from the finite-horizon recursion.
    pub alpha_t_series: Vec<T>,
    /// Largest `|Q_t(s,a) - Q*(gs,ga)| - (alpha_t + tail_t)` over `(t, g, s, a)`.
    pub finite_horizon_excess: T,
    pub finite_horizon_holds: bool,
    pub iterations: usize,
    pub tol: T,
    pub holds: bool,
    pub note: &'static str,
}

impl<T: Scalar> BoundReport<T> {
    pub fn epsilon_r(&self) -> T {
        self.gaps.epsilon_r
    }
    pub fn epsilon_p(&self) -> T {
        self.gaps.epsilon_p
    }
}

pub fn verify_invariance_bound<T: Scalar>(
    m: &FiniteMdp<T>,
    sym: &MdpSymmetry,
    ipm: &IpmSpec<T>,
    tol: T,
) -> Result<BoundReport<T>> {
    verify_invariance_bound_with(m, sym, ipm, BoundOptions::new(tol))
}

/// Measures the gaps, solves for `Q*`, and checks the observed `Q*`/`V*`
/// gaps against `alpha`. It also checks every finite-horizon `Q_t` against
/// `Q*` at transformed arguments, allowing `alpha_t` plus the horizon tail.
pub fn verify_invariance_bound_with<T: Scalar>(
    m: &FiniteMdp<T>,
    sym: &MdpSymmetry,
    ipm: &IpmSpec<T>,
    opts: BoundOptions<T>,
) -> Result<BoundReport<T>> {
    let gaps = gap_report(m, sym, ipm)?;
    let sol = value_iteration(m, opts.tol)?;
    let gamma = m.gamma();
    let rho = minkowski_functional(&sol.v, ipm)?;
    let alpha = alpha_bound(gaps.epsilon_r, gaps.epsilon_p, gamma, rho)?;
    let group = sym.group();
    let na = m.n_actions();

    let mut rho_permuted_max = T::zero();
    for g in group.elements() {
        let pv: Vec<T> = (0..m.n_states()).map(|s| sol.v[sym.state(g, s)]).collect();
        rho_permuted_max = rho_permuted_max.max(minkowski_functional(&pv, ipm)?);
    }

    let mut max_q_gap = T::zero();
    let mut max_v_gap = T::zero();
    let mut q_gap_witness = GapWitness { s: 0, a: 0, g: group.identity() };
    for g in group.elements() {
        for s in 0..m.n_states() {
            let gs = sym.state(g, s);
            max_v_gap = max_v_gap.max((sol.v[s] - sol.v[gs]).abs());
            for a in 0..na {
                let d = (sol.q[s * na + a] - sol.q[gs * na + sym.action(g, a)]).abs();
                if d > max_q_gap {
                    max_q_gap = d;
                    q_gap_witness = GapWitness { s, a, g };
                }
            }
        }
    }

    let fh = finite_horizon_values(m, opts.horizon)?;
    let rho_next = fh.v[1..].iter().map(|v| minkowski_functional(v, ipm)).collect::<Result<Vec<_>>>()?;
    let alpha_t_series = alpha_recursion(gaps.epsilon_r, gaps.epsilon_p, gamma, &rho_next, opts.horizon)?;
    let (rmin, rmax) = m.reward_range();
    let rabs = rmin.abs().max(rmax.abs());
    let one = T::one();
    let mut excess = T::neg_infinity();
    for (t, qt) in fh.q.iter().enumerate() {
        let tail = gamma.powi((opts.horizon - t) as i32) * rabs / (one - gamma);
        for g in group.elements() {
            for s in 0..m.n_states() {
                let gs = sym.state(g, s);
                for a in 0..na {
                    let d = (qt[s * na + a] - sol.q[gs * na + sym.action(g, a)]).abs();
                    excess = excess.max(d - alpha_t_series[t] - tail);
                }
            }
        }
    }
    let slack = T::lit(BOUND_SLACK);
    // Q* from value iteration is within gamma * tol / (1 - gamma) of the fixed point.
    let vi_err = opts.tol / (one - gamma);
    let holds = max_q_gap <= alpha + slack && max_v_gap <= alpha + slack;

    Ok(BoundReport {
        gaps,
        gamma,
        alpha,
        rho,
        rho_permuted_max,
        max_q_gap,
        max_v_gap,
        q_gap_witness,
        alpha_t_series,
        finite_horizon_excess: excess,
        finite_horizon_holds: excess <= slack + vi_err,
        iterations: sol.iterations,
        tol: opts.tol,
        holds,
        note: TRANSFORMED_Q_NOTE,
    })
}

/// Largest violation of
/// `Q_t + gamma^{T-t} R_min / (1-gamma) <= Q* <= Q_t + gamma^{T-t} R_max / (1-gamma)`
/// over all `(t, s, a)`, with `Q*` from value iteration at tolerance `1e-12`.
pub fn sandwich_check<T: Scalar>(m: &FiniteMdp<T>, horizon: usize) -> Result<T> {
    let fh = finite_horizon_values(m, horizon)?;
    let sol = value_iteration(m, T::lit(1e-12))?;
    let (rmin, rmax) = m.reward_range();
    let gamma = m.gamma();
    let mut worst = T::zero();
    for (t, qt) in fh.q.iter().enumerate() {
        let w = gamma.powi((horizon - t) as i32) / (T::one() - gamma);
        for (q_t, q_star) in qt.iter().zip(&sol.q) {
            worst = worst.max(*q_t + w * rmin - *q_star).max(*q_star - *q_t - w * rmax);
        }
    }
    Ok(worst)
}
