//! Independent exact optimal transport by brute force, shared by test targets.

use rand::seq::SliceRandom;
use rand::Rng;

pub fn random_dist<R: Rng>(n: usize, support: usize, rng: &mut R) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut p = vec![0.0; n];
    for &i in &idx[..support] {
        p[i] = rng.random::<f64>() + 0.01;
    }
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= s);
    p
}

pub fn random_metric<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.random(), rng.random())).collect();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            // L1 distance in the plane, a metric that is not tree-like
            d[i * n + j] = (pts[i].0 - pts[j].0).abs() + (pts[i].1 - pts[j].1).abs();
        }
    }
    d
}

/// Gaussian elimination on a square system; `None` when singular.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs()))?;
        if a[p][c].abs() < 1e-12 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in 0..n {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in 0..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Exact optimal transport by enumerating every basic feasible solution of
/// the transportation polytope restricted to the supports.
pub fn transport_by_vertex_enumeration(mu: &[f64], nu: &[f64], d: &[f64]) -> f64 {
    let n = mu.len();
    let rows: Vec<usize> = (0..n).filter(|&i| mu[i] > 0.0).collect();
    let cols: Vec<usize> = (0..n).filter(|&j| nu[j] > 0.0).collect();
    let vars: Vec<(usize, usize)> = rows.iter().flat_map(|&i| cols.iter().map(move |&j| (i, j))).collect();
    // one marginal constraint is redundant; drop the last column constraint
    let k = rows.len() + cols.len() - 1;
    let mut best = f64::INFINITY;
    let nv = vars.len();
    for mask in 0u32..(1 << nv) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let basis: Vec<usize> = (0..nv).filter(|&v| mask & (1 << v) != 0).collect();
        let mut a = vec![vec![0.0; k]; k];
        let mut b = vec![0.0; k];
        for (r, &i) in rows.iter().enumerate() {
            for (c, &v) in basis.iter().enumerate() {
                if vars[v].0 == i {
                    a[r][c] = 1.0;
                }
            }
            b[r] = mu[i];
        }
        for (r, &j) in cols.iter().take(cols.len() - 1).enumerate() {
            for (c, &v) in basis.iter().enumerate() {
                if vars[v].1 == j {
                    a[rows.len() + r][c] = 1.0;
                }
            }
            b[rows.len() + r] = nu[j];
        }
        if let Some(x) = solve(a, b) {
            if x.iter().all(|&v| v >= -1e-12) {
                let cost: f64 = basis.iter().zip(&x).map(|(&v, &f)| f * d[vars[v].0 * n + vars[v].1]).sum();
                best = best.min(cost);
            }
        }
    }
    best
}
