//! Integral probability metrics over finite state spaces.

use super::flow::{integer_masses, metric_transport};
use super::row_tolerance;
use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// Metric axioms are checked exhaustively up to this many states; above it
/// only nonnegativity, symmetry and the diagonal are checked.
pub const METRIC_CHECK_LIMIT: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum IpmKind {
    TotalVariation,
    Kantorovich,
}

impl IpmKind {
    pub fn tag(self) -> &'static str {
        match self {
            IpmKind::TotalVariation => "tv",
            IpmKind::Kantorovich => "kantorovich",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "tv" => Ok(IpmKind::TotalVariation),
            "kantorovich" => Ok(IpmKind::Kantorovich),
            _ => invalid(format!("unknown IPM '{tag}' (expected tv or kantorovich)")),
        }
    }
}

/// Which IPM to measure transition gaps with. The Kantorovich variant carries
/// a validated `S x S` state metric.
#[derive(Clone, Debug, PartialEq)]
pub enum IpmSpec<T> {
    TotalVariation,
    Kantorovich { n: usize, metric: Vec<T> },
}

impl<T: Scalar> IpmSpec<T> {
    pub fn total_variation() -> Self {
        IpmSpec::TotalVariation
    }

    /// Kantorovich IPM over the row-major metric `metric[i * n + j]`.
    pub fn kantorovich(n: usize, metric: Vec<T>) -> Result<Self> {
        check_metric(n, &metric)?;
        Ok(IpmSpec::Kantorovich { n, metric })
    }

    /// Kantorovich IPM with `d(s, s') = 1` for `s != s'`.
    pub fn discrete(n: usize) -> Self {
        let metric = (0..n * n).map(|k| if k / n == k % n { T::zero() } else { T::one() }).collect();
        IpmSpec::Kantorovich { n, metric }
    }

    /// Kantorovich IPM with Euclidean distances between `coords`.
    pub fn euclidean(coords: &[Vec<T>]) -> Result<Self> {
        let n = coords.len();
        let mut metric = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                let d2: T = coords[i].iter().zip(&coords[j]).map(|(a, b)| (*a - *b) * (*a - *b)).sum();
                metric[i * n + j] = d2.sqrt();
            }
        }
        Self::kantorovich(n, metric)
    }

    /// Default IPM of `kind` for an MDP: the discrete metric, or the Euclidean
    /// metric on state coordinates when those are present.
    pub fn for_mdp(kind: IpmKind, m: &super::FiniteMdp<T>) -> Result<Self> {
        match kind {
            IpmKind::TotalVariation => Ok(IpmSpec::TotalVariation),
            IpmKind::Kantorovich => match m.state_coords() {
                Some(c) => Self::euclidean(c),
                None => Ok(Self::discrete(m.n_states())),
            },
        }
    }

    pub fn kind(&self) -> IpmKind {
        match self {
            IpmSpec::TotalVariation => IpmKind::TotalVariation,
            IpmSpec::Kantorovich { .. } => IpmKind::Kantorovich,
        }
    }

    pub fn metric(&self) -> Option<&[T]> {
        match self {
            IpmSpec::TotalVariation => None,
            IpmSpec::Kantorovich { metric, .. } => Some(metric),
        }
    }

    pub(crate) fn check_size(&self, n_states: usize) -> Result<()> {
        match self {
            IpmSpec::Kantorovich { n, .. } if *n != n_states => {
                invalid(format!("metric covers {n} states, MDP has {n_states}"))
            }
            _ => Ok(()),
        }
    }

    /// IPM distance between two distributions, without input validation.
    pub(crate) fn distance_unchecked(&self, mu: &[T], nu: &[T]) -> T {
        match self {
            IpmSpec::TotalVariation => half_l1(mu, nu),
            IpmSpec::Kantorovich { n, metric } => {
                metric_transport(&integer_masses(mu), &integer_masses(nu), |i, j| metric[i * n + j])
            }
        }
    }

    pub fn distance(&self, mu: &[T], nu: &[T]) -> Result<T> {
        check_pair(mu, nu)?;
        if let IpmSpec::Kantorovich { n, .. } = self {
            if *n != mu.len() {
                return invalid("distribution length does not match the metric");
            }
        }
        Ok(self.distance_unchecked(mu, nu))
    }
}

fn check_metric<T: Scalar>(n: usize, d: &[T]) -> Result<()> {
    if n == 0 || d.len() != n * n {
        return invalid("metric must be a nonempty S x S table");
    }
    let mut scale = T::zero();
    for i in 0..n {
        if d[i * n + i] != T::zero() {
            return invalid(format!("metric diagonal at {i} is not zero"));
        }
        for j in 0..n {
            let x = d[i * n + j];
            if !(x >= T::zero()) || !x.is_finite() {
                return invalid(format!("metric entry ({i}, {j}) is negative or not finite"));
            }
            if x != d[j * n + i] {
                return invalid(format!("metric is not symmetric at ({i}, {j})"));
            }
            if i != j && x == T::zero() {
                return invalid(format!("distinct states {i} and {j} are at distance zero"));
            }
            scale = scale.max(x);
        }
    }
    if n <= METRIC_CHECK_LIMIT {
        let slack = scale * T::lit(1e-12);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if d[i * n + k] > d[i * n + j] + d[j * n + k] + slack {
                        return invalid(format!("triangle inequality fails at ({i}, {j}, {k})"));
                    }
                }
            }
        }
    }
    Ok(())
}

fn check_distribution<T: Scalar>(p: &[T]) -> Result<()> {
    if p.is_empty() {
        return invalid("empty distribution");
    }
    if p.iter().any(|x| !(*x >= T::zero()) || !x.is_finite()) {
        return invalid("distribution has a negative or non-finite entry");
    }
    let s: T = p.iter().copied().sum();
    if (s - T::one()).abs() > row_tolerance::<T>(p.len()) {
        return invalid(format!("distribution sums to {s}"));
    }
    Ok(())
}

fn check_pair<T: Scalar>(mu: &[T], nu: &[T]) -> Result<()> {
    if mu.len() != nu.len() {
        return invalid("distributions have different supports");
    }
    check_distribution(mu)?;
    check_distribution(nu)
}

fn half_l1<T: Scalar>(mu: &[T], nu: &[T]) -> T {
    T::lit(0.5) * mu.iter().zip(nu).map(|(a, b)| (*a - *b).abs()).sum::<T>()
}

/// `(1/2) sum |mu - nu|`.
pub fn tv_distance<T: Scalar>(mu: &[T], nu: &[T]) -> Result<T> {
    check_pair(mu, nu)?;
    Ok(half_l1(mu, nu))
}

/// Earth mover's distance between `mu` and `nu` under the metric of `ipm`.
pub fn kantorovich_distance<T: Scalar>(mu: &[T], nu: &[T], ipm: &IpmSpec<T>) -> Result<T> {
    match ipm {
        IpmSpec::TotalVariation => invalid("kantorovich_distance needs a state metric"),
        k => k.distance(mu, nu),
    }
}

/// Smallest `r` with `|E_mu V - E_nu V| <= r * d(mu, nu)` for all `mu, nu`.
///
/// Total variation here is half the L1 distance, so the matching functional
/// is the full oscillation `max V - min V`. Kantorovich gives the Lipschitz
/// constant of `V` under the state metric.
pub fn minkowski_functional<T: Scalar>(v: &[T], ipm: &IpmSpec<T>) -> Result<T> {
    if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
        return invalid("value vector must be nonempty and finite");
    }
    match ipm {
        IpmSpec::TotalVariation => {
            let hi = v.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
            let lo = v.iter().fold(T::infinity(), |m, &x| m.min(x));
            Ok(hi - lo)
        }
        IpmSpec::Kantorovich { n, metric } => {
            if *n != v.len() {
                return invalid("value vector length does not match the metric");
            }
            let mut lip = T::zero();
            for i in 0..*n {
                for j in i + 1..*n {
                    lip = lip.max((v[i] - v[j]).abs() / metric[i * n + j]);
                }
            }
            Ok(lip)
        }
    }
}
