//! Random MDPs with a prescribed group action and controlled symmetry breaking.
//!
//! States and actions are disjoint unions of coset spaces `G/H`, randomly
//! relabeled. Rewards and transitions start from a group average (exactly
//! invariant) and are then perturbed.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{FiniteMdp, MdpSymmetry};
use crate::error::Result;
use crate::groups::FiniteGroup;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct RandomMdpConfig {
    pub min_states: usize,
    pub max_states: usize,
    pub max_actions: usize,
    pub gammas: Vec<f64>,
    /// Largest reward perturbation amplitude.
    pub reward_noise: f64,
    /// Largest mixing weight toward an unrelated transition kernel.
    pub transition_noise: f64,
    /// Probability that states get random planar coordinates.
    pub coords_probability: f64,
}

impl Default for RandomMdpConfig {
    fn default() -> Self {
        Self {
            min_states: 2,
            max_states: 12,
            max_actions: 4,
            gammas: vec![0.5, 0.9, 0.95],
            reward_noise: 0.5,
            transition_noise: 0.5,
            coords_probability: 0.5,
        }
    }
}

/// All subgroups of `group` (bitmask enumeration; orders up to 16).
pub fn subgroups(group: &FiniteGroup) -> Vec<Vec<usize>> {
    let n = group.order();
    assert!(n <= 16, "subgroup enumeration is limited to order 16");
    let e = group.identity();
    let mut out = Vec::new();
    for mask in 0u32..(1 << n) {
        if mask & (1 << e) == 0 {
            continue;
        }
        let members: Vec<usize> = (0..n).filter(|&g| mask & (1 << g) != 0).collect();
        let closed = members.iter().all(|&a| members.iter().all(|&b| mask & (1 << group.op(a, b)) != 0));
        if closed {
            out.push(members);
        }
    }
    out
}

/// Left action of `group` on the cosets `gH`: `perm[g][i]` is the index of
/// `g (coset i)`.
pub fn coset_action(group: &FiniteGroup, h: &[usize]) -> Vec<Vec<usize>> {
    let mut cosets: Vec<u32> = Vec::new();
    let mask_of = |g: usize| h.iter().fold(0u32, |m, &x| m | 1 << group.op(g, x));
    for g in group.elements() {
        let c = mask_of(g);
        if !cosets.contains(&c) {
            cosets.push(c);
        }
    }
    group
        .elements()
        .map(|g| {
            cosets
                .iter()
                .map(|&c| {
                    let rep = c.trailing_zeros() as usize;
                    let image = mask_of(group.op(g, rep));
                    cosets.iter().position(|&d| d == image).expect("coset image")
                })
                .collect()
        })
        .collect()
}

/// Random permutation action on roughly `target` points built from orbits.
fn random_gset<R: Rng + ?Sized>(
    group: &FiniteGroup,
    target: usize,
    subs: &[Vec<usize>],
    rng: &mut R,
) -> Vec<Vec<usize>> {
    let n = group.order();
    let mut perms: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut size = 0;
    while size < target {
        let fitting: Vec<&Vec<usize>> = subs.iter().filter(|h| size + n / h.len() <= target).collect();
        let h = fitting[rng.random_range(0..fitting.len())];
        let orbit = coset_action(group, h);
        for g in 0..n {
            perms[g].extend(orbit[g].iter().map(|&i| i + size));
        }
        size += n / h.len();
    }
    let mut relabel: Vec<usize> = (0..size).collect();
    relabel.shuffle(rng);
    let mut out = vec![vec![0; size]; n];
    for g in 0..n {
        for i in 0..size {
            out[g][relabel[i]] = relabel[perms[g][i]];
        }
    }
    out
}

fn random_dist<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut p: Vec<f64> =
        (0..n).map(|_| if rng.random::<f64>() < 0.3 { 0.0 } else { -rng.random::<f64>().max(1e-300).ln() }).collect();
    if p.iter().all(|&x| x == 0.0) {
        p[rng.random_range(0..n)] = 1.0;
    }
    normalize(&mut p);
    p
}

fn normalize(p: &mut [f64]) {
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= s);
}

/// Draws one instance. The symmetry is exact before perturbation; each of
/// the reward and transition perturbations is switched off with
/// probability 1/4 so the exactly-invariant corners are exercised.
pub fn random_instance<T: Scalar, R: Rng + ?Sized>(
    group: &Arc<FiniteGroup>,
    cfg: &RandomMdpConfig,
    rng: &mut R,
) -> Result<(FiniteMdp<T>, MdpSymmetry)> {
    let subs = subgroups(group);
    let ns_target = rng.random_range(cfg.min_states.max(1)..=cfg.max_states.max(cfg.min_states.max(1)));
    let na_target = rng.random_range(1..=cfg.max_actions.max(1));
    let sp = random_gset(group, ns_target, &subs, rng);
    let ap = random_gset(group, na_target, &subs, rng);
    let (ns, na) = (sp[0].len(), ap[0].len());
    let order = group.order() as f64;

    let r0: Vec<f64> = (0..ns * na).map(|_| rng.random_range(-1.0..1.0)).collect();
    let p0: Vec<Vec<f64>> = (0..ns * na).map(|_| random_dist(ns, rng)).collect();
    let mut reward = vec![0.0; ns * na];
    let mut trans = vec![0.0; ns * na * ns];
    for s in 0..ns {
        for a in 0..na {
            let row = s * na + a;
            for g in group.elements() {
                let grow = sp[g][s] * na + ap[g][a];
                reward[row] += r0[grow] / order;
                for t in 0..ns {
                    trans[row * ns + t] += p0[grow][sp[g][t]] / order;
                }
            }
        }
    }

    let r_amp = if rng.random::<f64>() < 0.25 { 0.0 } else { rng.random::<f64>() * cfg.reward_noise };
    let p_mix = if rng.random::<f64>() < 0.25 { 0.0 } else { rng.random::<f64>() * cfg.transition_noise };
    for r in reward.iter_mut() {
        *r += r_amp * rng.random_range(-1.0..1.0);
    }
    for row in trans.chunks_mut(ns) {
        let noise = random_dist(ns, rng);
        for (p, q) in row.iter_mut().zip(noise) {
            *p = (1.0 - p_mix) * *p + p_mix * q;
        }
        normalize(row);
    }

    let gamma = cfg.gammas[rng.random_range(0..cfg.gammas.len())];
    let mut m = FiniteMdp::new(
        ns,
        na,
        reward.into_iter().map(T::lit).collect(),
        trans.into_iter().map(T::lit).collect(),
        T::lit(gamma),
    )?;
    if rng.random::<f64>() < cfg.coords_probability {
        let coords = (0..ns).map(|_| vec![T::lit(rng.random::<f64>()), T::lit(rng.random::<f64>())]).collect();
        m = m.with_state_coords(coords)?;
    }
    let sym = MdpSymmetry::new(group.clone(), sp, ap)?;
    Ok((m, sym))
}
