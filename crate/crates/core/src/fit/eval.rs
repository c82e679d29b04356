//! Monte-Carlo return of the greedy policy of a Q-function.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::mdp::{greedy_policy, FiniteMdp};
use crate::rng::{self, streams};
use crate::scalar::Scalar;

use super::qnet::QNet;

/// Anything that yields a full `Q[s * A + a]` table.
pub trait QFunction<T> {
    fn q_table(&self) -> Result<Vec<T>>;
}

impl<T: Scalar> QFunction<T> for QNet<T> {
    fn q_table(&self) -> Result<Vec<T>> {
        QNet::q_table(self)
    }
}

/// A tabular Q-function.
#[derive(Clone, Debug, PartialEq)]
pub struct QTable<T>(pub Vec<T>);

impl<T: Scalar> QFunction<T> for QTable<T> {
    fn q_table(&self) -> Result<Vec<T>> {
        Ok(self.0.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnEstimate {
    pub mean: f64,
    /// Standard error of the mean.
    pub std_error: f64,
    pub episodes: usize,
}

/// Mean discounted return of the greedy policy (lowest-index ties) over
/// `episodes` rollouts of `horizon` steps from uniformly drawn start states.
pub fn greedy_policy_return<T: Scalar, Q: QFunction<T> + ?Sized>(
    q: &Q,
    m: &FiniteMdp<T>,
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<ReturnEstimate> {
    if episodes == 0 {
        return invalid("need at least one episode");
    }
    let table = q.q_table()?;
    let (ns, na) = (m.n_states(), m.n_actions());
    if table.len() != ns * na {
        return invalid("Q table does not match the MDP");
    }
    let policy = greedy_policy(&table, na);
    let gamma = m.gamma().to_f64_lossy();
    let mut rng = rng::stream(seed, streams::ROLLOUT);
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut s = rng.random_range(0..ns);
        let (mut ret, mut disc) = (0.0, 1.0);
        for _ in 0..horizon {
            let a = policy[s];
            ret += disc * m.reward(s, a).to_f64_lossy();
            disc *= gamma;
            let u: f64 = rng.random();
            let row = m.next_dist(s, a);
            let mut acc = 0.0;
            let mut next = ns - 1;
            for (k, p) in row.iter().enumerate() {
                acc += p.to_f64_lossy();
                if u < acc {
                    next = k;
                    break;
                }
            }
            s = next;
        }
        returns.push(ret);
    }
    let n = episodes as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let std_error = if episodes > 1 {
        (returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    Ok(ReturnEstimate { mean, std_error, episodes })
}

/// Exact expected `horizon`-step discounted return of `policy` from a
/// uniform start state.
pub fn truncated_policy_return<T: Scalar>(m: &FiniteMdp<T>, policy: &[usize], horizon: usize) -> Result<f64> {
    let ns = m.n_states();
    if policy.len() != ns || policy.iter().any(|&a| a >= m.n_actions()) {
        return invalid("policy must pick one valid action per state");
    }
    let gamma = m.gamma().to_f64_lossy();
    let mut v = vec![0.0; ns];
    for _ in 0..horizon {
        v = (0..ns)
            .map(|s| {
                let a = policy[s];
                let ev: f64 = m.next_dist(s, a).iter().zip(&v).map(|(p, x)| p.to_f64_lossy() * x).sum();
                m.reward(s, a).to_f64_lossy() + gamma * ev
            })
            .collect();
    }
    Ok(v.iter().sum::<f64>() / ns as f64)
}
