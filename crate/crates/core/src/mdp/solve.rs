//! Exact dynamic programming on tabular MDPs.

use super::FiniteMdp;
use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;

/// Hard cap on value-iteration sweeps.
pub const MAX_SWEEPS: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct ValueSolution<T> {
    /// `V*(s) = max_a Q*(s, a)`.
    pub v: Vec<T>,
    /// `Q*[s * A + a]`.
    pub q: Vec<T>,
    pub iterations: usize,
    /// `||B V_k - V_k||_inf` for every sweep.
    pub residuals: Vec<T>,
    pub converged: bool,
}

impl<T: Scalar> ValueSolution<T> {
    pub fn q(&self, n_actions: usize, s: usize, a: usize) -> T {
        self.q[s * n_actions + a]
    }
}

fn bellman_q<T: Scalar>(m: &FiniteMdp<T>, v: &[T], q: &mut [T]) {
    let na = m.n_actions();
    for s in 0..m.n_states() {
        for a in 0..na {
            q[s * na + a] = m.backup(s, a, v);
        }
    }
}

fn row_max<T: Scalar>(q: &[T], n_actions: usize, out: &mut [T]) {
    for (s, row) in q.chunks(n_actions).enumerate() {
        out[s] = row.iter().copied().fold(T::neg_infinity(), T::max);
    }
}

/// Value iteration from `V = 0` until `||B V - V||_inf <= tol`.
///
/// The returned `q` is `R + gamma P V_k` for the last iterate `V_k` and
/// `v = max_a q`, so `V* = max_a Q*` holds exactly and the returned `v` has
/// residual at most `gamma * tol`.
pub fn value_iteration<T: Scalar>(m: &FiniteMdp<T>, tol: T) -> Result<ValueSolution<T>> {
    if !(tol > T::zero()) {
        return invalid("value-iteration tolerance must be positive");
    }
    let (ns, na) = (m.n_states(), m.n_actions());
    let mut v = vec![T::zero(); ns];
    let mut q = vec![T::zero(); ns * na];
    let mut next = vec![T::zero(); ns];
    let mut residuals = Vec::new();
    let mut converged = false;
    while residuals.len() < MAX_SWEEPS {
        bellman_q(m, &v, &mut q);
        row_max(&q, na, &mut next);
        let r = v.iter().zip(&next).fold(T::zero(), |acc, (a, b)| acc.max((*a - *b).abs()));
        residuals.push(r);
        std::mem::swap(&mut v, &mut next);
        if r <= tol {
            converged = true;
            break;
        }
    }
    Ok(ValueSolution { v, q, iterations: residuals.len(), residuals, converged })
}

/// Greedy policy with ties broken by the lowest action index.
pub fn greedy_policy<T: Scalar>(q: &[T], n_actions: usize) -> Vec<usize> {
    q.chunks(n_actions).map(|row| (1..row.len()).fold(0, |best, a| if row[a] > row[best] { a } else { best })).collect()
}

/// Solves `(I - gamma P_pi) V = R_pi` by Gaussian elimination.
pub fn policy_evaluation<T: Scalar>(m: &FiniteMdp<T>, policy: &[usize]) -> Result<Vec<T>> {
    let n = m.n_states();
    if policy.len() != n || policy.iter().any(|&a| a >= m.n_actions()) {
        return invalid("policy must pick one valid action per state");
    }
    let mut a = vec![T::zero(); n * n];
    let mut b = vec![T::zero(); n];
    for s in 0..n {
        let p = m.next_dist(s, policy[s]);
        for t in 0..n {
            a[s * n + t] = -m.gamma() * p[t];
        }
        a[s * n + s] += T::one();
        b[s] = m.reward(s, policy[s]);
    }
    solve_linear(n, &mut a, &mut b)?;
    Ok(b)
}

/// Gaussian elimination with partial pivoting; the solution replaces `b`.
pub(crate) fn solve_linear<T: Scalar>(n: usize, a: &mut [T], b: &mut [T]) -> Result<()> {
    for col in 0..n {
        let piv = (col..n).fold(col, |best, r| if a[r * n + col].abs() > a[best * n + col].abs() { r } else { best });
        if a[piv * n + col].abs() <= T::epsilon() {
            return Err(Error::UndefinedResult("singular linear system".into()));
        }
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            b.swap(col, piv);
        }
        for r in col + 1..n {
            let f = a[r * n + col] / a[col * n + col];
            if f != T::zero() {
                for k in col..n {
                    let x = a[col * n + k];
                    a[r * n + k] -= f * x;
                }
                let x = b[col];
                b[r] -= f * x;
            }
        }
    }
    for r in (0..n).rev() {
        let mut acc = b[r];
        for k in r + 1..n {
            acc -= a[r * n + k] * b[k];
        }
        b[r] = acc / a[r * n + r];
    }
    Ok(())
}

/// Backward-recursion values for horizon `T`.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteHorizon<T> {
    /// `v[t]` for `t = 0..=T`, with `v[T] = 0`.
    pub v: Vec<Vec<T>>,
    /// `q[t]` for `t = 0..T`, row-major `S x A`.
    pub q: Vec<Vec<T>>,
}

impl<T> FiniteHorizon<T> {
    pub fn horizon(&self) -> usize {
        self.q.len()
    }
}

/// `V_T = 0`, `Q_t = R + gamma P V_{t+1}`, `V_t = max_a Q_t`.
pub fn finite_horizon_values<T: Scalar>(m: &FiniteMdp<T>, horizon: usize) -> Result<FiniteHorizon<T>> {
    if horizon == 0 {
        return invalid("horizon must be at least 1");
    }
    let (ns, na) = (m.n_states(), m.n_actions());
    let mut v = vec![vec![T::zero(); ns]; horizon + 1];
    let mut q = vec![vec![T::zero(); ns * na]; horizon];
    for t in (0..horizon).rev() {
        let (head, tail) = v.split_at_mut(t + 1);
        bellman_q(m, &tail[0], &mut q[t]);
        row_max(&q[t], na, &mut head[t]);
    }
    Ok(FiniteHorizon { v, q })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_series() {
        let m = FiniteMdp::new(1, 1, vec![1.0_f64], vec![1.0], 0.5).unwrap();
        let sol = value_iteration(&m, 1e-12).unwrap();
        assert!(sol.converged);
        assert!((sol.v[0] - 2.0).abs() < 1e-11);
    }

    #[test]
    fn zero_reward_zero_value() {
        let m = FiniteMdp::new(2, 1, vec![0.0, 0.0], vec![0.5, 0.5, 0.0, 1.0], 0.9).unwrap();
        let sol = value_iteration(&m, 1e-10).unwrap();
        assert_eq!(sol.v, vec![0.0, 0.0]);
        assert!(value_iteration(&m, 0.0).is_err());
    }

    #[test]
    fn horizon_one_is_reward() {
        let m =
            FiniteMdp::new(2, 2, vec![1.0, 2.0, 3.0, 4.0], vec![1.0, 0.0, 0.0, 1.0, 0.5, 0.5, 0.0, 1.0], 0.9).unwrap();
        let fh = finite_horizon_values(&m, 1).unwrap();
        assert_eq!(fh.q[0], m.rewards());
        assert_eq!(fh.v[1], vec![0.0, 0.0]);
        assert!(finite_horizon_values(&m, 0).is_err());
    }

    #[test]
    fn greedy_ties_pick_lowest() {
        assert_eq!(greedy_policy(&[1.0, 1.0, 0.0, 2.0, 2.0, 1.0], 3), vec![0, 0]);
    }

    #[test]
    fn linear_solve_matches_hand() {
        let mut a = vec![2.0_f64, 1.0, 1.0, 3.0];
        let mut b = vec![3.0, 5.0];
        solve_linear(2, &mut a, &mut b).unwrap();
        assert!((b[0] - 0.8).abs() < 1e-14 && (b[1] - 1.4).abs() < 1e-14);
    }
}
