//! Exact transportation problem by successive shortest paths.

use crate::scalar::Scalar;

/// Integer mass resolution: masses are rounded to multiples of `1 / MASS_SCALE`.
pub(crate) const MASS_SCALE: f64 = 1e12;

/// Scales `mass` to integers summing exactly to `MASS_SCALE`; the rounding
/// residual goes to the heaviest entry.
pub(crate) fn integer_masses<T: Scalar>(mass: &[T]) -> Vec<i64> {
    let total = MASS_SCALE as i64;
    let mut out: Vec<i64> = mass.iter().map(|m| (m.to_f64_lossy() * MASS_SCALE).round() as i64).collect();
    let sum: i64 = out.iter().sum();
    let heaviest = (0..out.len()).fold(0, |best, i| if out[i] > out[best] { i } else { best });
    out[heaviest] += total - sum;
    out
}

/// Minimum cost of moving `supply` onto `demand` (equal totals) when a unit
/// from `i` to `j` costs `cost(i, j)`. Costs must be a metric: shared mass is
/// left in place before the flow solve.
pub(crate) fn metric_transport<T: Scalar>(supply: &[i64], demand: &[i64], cost: impl Fn(usize, usize) -> T) -> T {
    debug_assert_eq!(supply.iter().sum::<i64>(), demand.iter().sum::<i64>());
    let mut src = Vec::new();
    let mut dst = Vec::new();
    for i in 0..supply.len() {
        let keep = supply[i].min(demand[i]);
        if supply[i] > keep {
            src.push((i, supply[i] - keep));
        }
        if demand[i] > keep {
            dst.push((i, demand[i] - keep));
        }
    }
    if src.is_empty() {
        return T::zero();
    }
    let c: Vec<Vec<T>> = src.iter().map(|&(i, _)| dst.iter().map(|&(j, _)| cost(i, j)).collect()).collect();
    let flow =
        min_cost_flow(&src.iter().map(|x| x.1).collect::<Vec<_>>(), &dst.iter().map(|x| x.1).collect::<Vec<_>>(), &c);
    let scale = T::lit(MASS_SCALE);
    let mut total = T::zero();
    for (i, row) in flow.iter().enumerate() {
        for (j, &f) in row.iter().enumerate() {
            if f > 0 {
                total += T::lit(f as f64) / scale * c[i][j];
            }
        }
    }
    total
}

/// Dense bipartite min-cost flow. Node layout: source, `n` supplies, `m`
/// demands, sink. Dijkstra runs on reduced costs with Johnson potentials.
fn min_cost_flow<T: Scalar>(supply: &[i64], demand: &[i64], c: &[Vec<T>]) -> Vec<Vec<i64>> {
    let n = supply.len();
    let m = demand.len();
    let v = n + m + 2;
    let source = 0;
    let sink = n + m + 1;
    let mut rs = supply.to_vec();
    let mut rd = demand.to_vec();
    let mut flow = vec![vec![0i64; m]; n];
    let mut pot = vec![T::zero(); v];
    let inf = T::infinity();

    loop {
        if rs.iter().all(|&x| x == 0) {
            break;
        }
        let mut dist = vec![inf; v];
        let mut prev = vec![usize::MAX; v];
        let mut done = vec![false; v];
        dist[source] = T::zero();
        loop {
            let mut u = usize::MAX;
            for x in 0..v {
                if !done[x] && dist[x] < inf && (u == usize::MAX || dist[x] < dist[u]) {
                    u = x;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            let relax = |to: usize, w: T, dist: &mut Vec<T>, prev: &mut Vec<usize>| {
                let rc = (w + pot[u] - pot[to]).max(T::zero());
                let nd = dist[u] + rc;
                if nd < dist[to] {
                    dist[to] = nd;
                    prev[to] = u;
                }
            };
            if u == source {
                for i in 0..n {
                    if rs[i] > 0 {
                        relax(1 + i, T::zero(), &mut dist, &mut prev);
                    }
                }
            } else if u <= n {
                let i = u - 1;
                for j in 0..m {
                    relax(1 + n + j, c[i][j], &mut dist, &mut prev);
                }
            } else if u != sink {
                let j = u - 1 - n;
                for i in 0..n {
                    if flow[i][j] > 0 {
                        relax(1 + i, -c[i][j], &mut dist, &mut prev);
                    }
                }
                if rd[j] > 0 {
                    relax(sink, T::zero(), &mut dist, &mut prev);
                }
            }
        }
        if prev[sink] == usize::MAX {
            break;
        }
        let ds = dist[sink];
        for x in 0..v {
            pot[x] += dist[x].min(ds);
        }

        let mut path = vec![sink];
        while *path.last().unwrap() != source {
            path.push(prev[*path.last().unwrap()]);
        }
        path.reverse();
        let mut push = i64::MAX;
        for w in path.windows(2) {
            let (a, b) = (w[0], w[1]);
            let cap = if a == source {
                rs[b - 1]
            } else if b == sink {
                rd[a - 1 - n]
            } else if a <= n {
                i64::MAX
            } else {
                flow[b - 1][a - 1 - n]
            };
            push = push.min(cap);
        }
        for w in path.windows(2) {
            let (a, b) = (w[0], w[1]);
            if a == source {
                rs[b - 1] -= push;
            } else if b == sink {
                rd[a - 1 - n] -= push;
            } else if a <= n {
                flow[a - 1][b - 1 - n] += push;
            } else {
                flow[b - 1][a - 1 - n] -= push;
            }
        }
    }
    flow
}
