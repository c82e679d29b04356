//! Finite symmetry groups, their Cayley tables, and matrix representations.
//!
//! Only cyclic groups `C_n` and dihedral groups `D_n` are constructible.
//! Element ordering is fixed: rotations first by increasing angle, then
//! reflections. For `D_n` the element at index `s * n + k` is `r^k m^s`.
//! Relaxed weights are indexed by this ordering, so it must not change.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;

/// Absolute tolerance for representation equality checks.
pub const REP_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroupKind {
    Cyclic(usize),
    Dihedral(usize),
}

/// A finite group given by its Cayley table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteGroup {
    kind: GroupKind,
    cayley: Vec<Vec<usize>>,
    inverse: Vec<usize>,
    identity: usize,
    element_names: Vec<String>,
}

impl FiniteGroup {
    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    pub fn order(&self) -> usize {
        self.cayley.len()
    }

    pub fn identity(&self) -> usize {
        self.identity
    }

    pub fn cayley(&self) -> &[Vec<usize>] {
        &self.cayley
    }

    pub fn elements(&self) -> std::ops::Range<usize> {
        0..self.order()
    }

    /// Unchecked product `ab`. Panics on out-of-range indices.
    #[inline]
    pub fn op(&self, a: usize, b: usize) -> usize {
        self.cayley[a][b]
    }

    /// Unchecked inverse.
    #[inline]
    pub fn inv(&self, g: usize) -> usize {
        self.inverse[g]
    }

    pub fn inverse_table(&self) -> &[usize] {
        &self.inverse
    }

    pub fn element_names(&self) -> &[String] {
        &self.element_names
    }

    pub fn name(&self, g: usize) -> &str {
        &self.element_names[g]
    }

    pub fn element_by_name(&self, name: &str) -> Option<usize> {
        self.element_names.iter().position(|n| n == name)
    }

    /// Config tag (`"c2"`, `"d4"`, ...).
    pub fn tag(&self) -> String {
        match self.kind {
            GroupKind::Cyclic(n) => format!("c{n}"),
            GroupKind::Dihedral(n) => format!("d{n}"),
        }
    }

    /// True for rotations (including the identity), false for reflections.
    pub fn is_rotation(&self, g: usize) -> bool {
        match self.kind {
            GroupKind::Cyclic(_) => true,
            GroupKind::Dihedral(n) => g < n,
        }
    }

    /// Checked product, the `group_product` operation.
    pub fn product(&self, a: usize, b: usize) -> Result<usize> {
        self.check_element(a)?;
        self.check_element(b)?;
        Ok(self.cayley[a][b])
    }

    pub fn check_element(&self, g: usize) -> Result<()> {
        if g >= self.order() {
            return invalid(format!("element index {g} out of range for group of order {}", self.order()));
        }
        Ok(())
    }

    /// Exhaustively verifies identity, inverse, associativity and the
    /// Latin-square property of the Cayley table.
    pub fn check_axioms(&self) -> Result<()> {
        let n = self.order();
        let e = self.identity;
        for g in 0..n {
            if self.cayley[e][g] != g || self.cayley[g][e] != g {
                return Err(Error::InvalidData(format!("identity law fails at {g}")));
            }
            if self.cayley[g][self.inverse[g]] != e || self.cayley[self.inverse[g]][g] != e {
                return Err(Error::InvalidData(format!("inverse law fails at {g}")));
            }
        }
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    if self.cayley[self.cayley[a][b]][c] != self.cayley[a][self.cayley[b][c]] {
                        return Err(Error::InvalidData(format!("associativity fails at ({a},{b},{c})")));
                    }
                }
            }
        }
        for i in 0..n {
            let mut row = vec![false; n];
            let mut col = vec![false; n];
            for j in 0..n {
                row[self.cayley[i][j]] = true;
                col[self.cayley[j][i]] = true;
            }
            if !row.iter().all(|&x| x) || !col.iter().all(|&x| x) {
                return Err(Error::InvalidData(format!("row/column {i} is not a permutation")));
            }
        }
        Ok(())
    }

    /// Group from a config tag: `c<n>` or `d<n>`.
    pub fn from_tag(tag: &str) -> Result<Self> {
        let tag = tag.trim().to_ascii_lowercase();
        let parse =
            |s: &str| s.parse::<usize>().map_err(|_| Error::InvalidArgument(format!("unknown group tag {tag:?}")));
        if let Some(n) = tag.strip_prefix('c') {
            build_cyclic(parse(n)?)
        } else if let Some(n) = tag.strip_prefix('d') {
            build_dihedral(parse(n)?)
        } else {
            invalid(format!("unknown group tag {tag:?}"))
        }
    }
}

impl fmt::Display for FiniteGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.tag(), self.element_names.join(", "))
    }
}

fn rotation_names(n: usize) -> Vec<String> {
    match n {
        2 => vec!["e".into(), "rot180".into()],
        _ => (0..n)
            .map(|k| match k {
                0 => "e".to_string(),
                1 => "r".to_string(),
                _ => format!("r{k}"),
            })
            .collect(),
    }
}

pub fn build_cyclic(n: usize) -> Result<FiniteGroup> {
    if n == 0 {
        return invalid("cyclic group order must be at least 1");
    }
    let cayley = (0..n).map(|a| (0..n).map(|b| (a + b) % n).collect()).collect();
    let inverse = (0..n).map(|a| (n - a) % n).collect();
    Ok(FiniteGroup { kind: GroupKind::Cyclic(n), cayley, inverse, identity: 0, element_names: rotation_names(n) })
}

/// Dihedral group of order `2n` with `r^n = m^2 = e` and `m r m = r^{-1}`.
pub fn build_dihedral(n: usize) -> Result<FiniteGroup> {
    if n == 0 {
        return invalid("dihedral group parameter must be at least 1");
    }
    let decode = |g: usize| (g % n, g / n);
    let encode = |k: usize, s: usize| s * n + k;
    let order = 2 * n;
    let mut cayley = vec![vec![0; order]; order];
    for (a, row) in cayley.iter_mut().enumerate() {
        let (k1, s1) = decode(a);
        for (b, slot) in row.iter_mut().enumerate() {
            let (k2, s2) = decode(b);
            // r^k1 m^s1 r^k2 m^s2 = r^(k1 + (-1)^s1 k2) m^(s1 + s2)
            let k = if s1 == 0 { (k1 + k2) % n } else { (k1 + n - k2) % n };
            *slot = encode(k, (s1 + s2) % 2);
        }
    }
    let inverse = (0..order)
        .map(|g| {
            let (k, s) = decode(g);
            if s == 0 {
                encode((n - k) % n, 0)
            } else {
                g
            }
        })
        .collect();
    let element_names = match n {
        1 => vec!["e".into(), "flip".into()],
        2 => vec!["e".into(), "rot180".into(), "flipV".into(), "flipH".into()],
        _ => {
            let mut names = rotation_names(n);
            names.extend((0..n).map(|k| match k {
                0 => "m".to_string(),
                1 => "rm".to_string(),
                _ => format!("r{k}m"),
            }));
            names
        }
    };
    Ok(FiniteGroup { kind: GroupKind::Dihedral(n), cayley, inverse, identity: 0, element_names })
}

/// Real matrix representation `G -> GL(dim)`; matrices are dense row-major.
#[derive(Clone, Debug)]
pub struct Representation<T> {
    group: Arc<FiniteGroup>,
    dim: usize,
    matrices: Vec<Vec<T>>,
}

impl<T: Scalar> Representation<T> {
    /// Builds and validates a representation (identity, invertibility,
    /// homomorphism within [`REP_TOLERANCE`]).
    pub fn new(group: Arc<FiniteGroup>, dim: usize, matrices: Vec<Vec<T>>) -> Result<Self> {
        if dim == 0 {
            return invalid("representation dimension must be positive");
        }
        if matrices.len() != group.order() || matrices.iter().any(|m| m.len() != dim * dim) {
            return invalid("expected one dim x dim matrix per group element");
        }
        let rep = Self { group, dim, matrices };
        rep.check()?;
        Ok(rep)
    }

    pub fn group(&self) -> &Arc<FiniteGroup> {
        &self.group
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self, g: usize) -> &[T] {
        &self.matrices[g]
    }

    pub fn entry(&self, g: usize, row: usize, col: usize) -> T {
        self.matrices[g][row * self.dim + col]
    }

    /// `rho(g) v`.
    pub fn apply(&self, g: usize, v: &[T]) -> Vec<T> {
        let d = self.dim;
        let m = &self.matrices[g];
        (0..d).map(|i| (0..d).map(|j| m[i * d + j] * v[j]).sum()).collect()
    }

    fn check(&self) -> Result<()> {
        let d = self.dim;
        let tol = T::lit(REP_TOLERANCE);
        let e = self.group.identity();
        for i in 0..d {
            for j in 0..d {
                let want = if i == j { T::one() } else { T::zero() };
                if (self.entry(e, i, j) - want).abs() > tol {
                    return Err(Error::InvalidData("identity element is not the identity matrix".into()));
                }
            }
        }
        for g in self.group.elements() {
            if determinant(&self.matrices[g], d).abs() <= T::lit(1e-12) {
                return Err(Error::InvalidData(format!("matrix for element {g} is singular")));
            }
        }
        self.check_homomorphism()
    }

    /// Exhaustive check of `rho(gh) = rho(g) rho(h)` over all pairs.
    pub fn check_homomorphism(&self) -> Result<()> {
        let d = self.dim;
        let tol = T::lit(REP_TOLERANCE);
        for g in self.group.elements() {
            for h in self.group.elements() {
                let gh = self.group.op(g, h);
                let prod = matmul(&self.matrices[g], &self.matrices[h], d);
                let off = prod.iter().zip(&self.matrices[gh]).any(|(a, b)| (*a - *b).abs() > tol);
                if off {
                    return Err(Error::InvalidData(format!(
                        "homomorphism fails for ({}, {})",
                        self.group.name(g),
                        self.group.name(h)
                    )));
                }
            }
        }
        Ok(())
    }
}

fn matmul<T: Scalar>(a: &[T], b: &[T], d: usize) -> Vec<T> {
    let mut out = vec![T::zero(); d * d];
    for i in 0..d {
        for k in 0..d {
            let aik = a[i * d + k];
            for j in 0..d {
                out[i * d + j] += aik * b[k * d + j];
            }
        }
    }
    out
}

fn determinant<T: Scalar>(m: &[T], d: usize) -> T {
    let mut a = m.to_vec();
    let mut det = T::one();
    for col in 0..d {
        let pivot = (col..d).max_by(|&x, &y| a[x * d + col].abs().partial_cmp(&a[y * d + col].abs()).unwrap()).unwrap();
        if a[pivot * d + col] == T::zero() {
            return T::zero();
        }
        if pivot != col {
            for j in 0..d {
                a.swap(pivot * d + j, col * d + j);
            }
            det = -det;
        }
        let p = a[col * d + col];
        det *= p;
        for r in col + 1..d {
            let f = a[r * d + col] / p;
            for j in col..d {
                let v = a[col * d + j];
                a[r * d + j] -= f * v;
            }
        }
    }
    det
}

/// Representation by permutation matrices: `perms[g][i]` is the image of basis
/// index `i` under `g`, so `rho(g) e_i = e_{perms[g][i]}`.
pub fn permutation_representation<T: Scalar>(
    group: Arc<FiniteGroup>,
    perms: &[Vec<usize>],
) -> Result<Representation<T>> {
    let dim = perms.first().map(Vec::len).unwrap_or(0);
    let mut matrices = Vec::with_capacity(perms.len());
    for p in perms {
        if p.len() != dim {
            return invalid("permutations must share one length");
        }
        let mut m = vec![T::zero(); dim * dim];
        for (i, &pi) in p.iter().enumerate() {
            if pi >= dim {
                return invalid("permutation image out of range");
            }
            m[pi * dim + i] = T::one();
        }
        matrices.push(m);
    }
    Representation::new(group, dim, matrices)
}

/// `rho_reg(h) e_g = e_{hg}`.
pub fn regular_representation<T: Scalar>(group: &Arc<FiniteGroup>) -> Representation<T> {
    let perms: Vec<Vec<usize>> = group.elements().map(|h| group.elements().map(|g| group.op(h, g)).collect()).collect();
    permutation_representation(group.clone(), &perms).expect("regular representation is valid")
}

/// One-dimensional sign representation of a dihedral group: rotations act by
/// `+1`, reflections by `-1`.
pub fn sign_representation<T: Scalar>(group: &Arc<FiniteGroup>) -> Result<Representation<T>> {
    if !matches!(group.kind(), GroupKind::Dihedral(_)) {
        return Err(Error::Unsupported(format!("sign representation needs a dihedral group, got {}", group.tag())));
    }
    let matrices = group.elements().map(|g| vec![if group.is_rotation(g) { T::one() } else { -T::one() }]).collect();
    Representation::new(group.clone(), 1, matrices)
}

pub fn trivial_representation<T: Scalar>(group: &Arc<FiniteGroup>, dim: usize) -> Result<Representation<T>> {
    if dim == 0 {
        return invalid("representation dimension must be positive");
    }
    let mut eye = vec![T::zero(); dim * dim];
    for i in 0..dim {
        eye[i * dim + i] = T::one();
    }
    Representation::new(group.clone(), dim, vec![eye; group.order()])
}

/// Two-joint torque representation of `D_2`: rotations act trivially,
/// reflections negate both torques.
pub fn reacher_action_representation<T: Scalar>(group: &Arc<FiniteGroup>) -> Result<Representation<T>> {
    if group.kind() != GroupKind::Dihedral(2) {
        return Err(Error::Unsupported(format!("reacher action representation needs d2, got {}", group.tag())));
    }
    let matrices = group
        .elements()
        .map(|g| {
            let s = if group.is_rotation(g) { T::one() } else { -T::one() };
            vec![s, T::zero(), T::zero(), s]
        })
        .collect();
    Representation::new(group.clone(), 2, matrices)
}

/// Action of a group on the pixels of an `height x width` grid by flips and
/// half-turns about the grid centre.
#[derive(Clone, Debug)]
pub struct GridAction {
    group: Arc<FiniteGroup>,
    height: usize,
    width: usize,
    /// Per element, diagonal sign of the linear part: (row sign, col sign).
    signs: Vec<(i64, i64)>,
    pixel_perm: Vec<Vec<usize>>,
}

impl GridAction {
    pub fn group(&self) -> &Arc<FiniteGroup> {
        &self.group
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `pixel_perm[g][p]` is the pixel that `p` is sent to by `g`.
    pub fn pixel_perm(&self, g: usize) -> &[usize] {
        &self.pixel_perm[g]
    }

    /// Applies the linear part of `g` to a kernel offset `(dy, dx)`.
    pub fn transform_offset(&self, g: usize, dy: i64, dx: i64) -> (i64, i64) {
        let (sr, sc) = self.signs[g];
        (sr * dy, sc * dx)
    }

    /// Same action on a grid of another shape (e.g. a kernel footprint).
    pub fn with_shape(&self, height: usize, width: usize) -> Result<Self> {
        build_grid_action(&self.group, height, width)
    }

    /// The permutation-matrix representation this action defines.
    pub fn as_representation<T: Scalar>(&self) -> Result<Representation<T>> {
        permutation_representation(self.group.clone(), &self.pixel_perm)
    }
}

/// Grid action for `d1` (vertical-axis mirror), `c2` (half-turn) or `d2`.
pub fn build_grid_action(group: &Arc<FiniteGroup>, height: usize, width: usize) -> Result<GridAction> {
    if height == 0 || width == 0 {
        return invalid("grid dimensions must be positive");
    }
    // (row sign, col sign) per element
    let signs: Vec<(i64, i64)> = match group.kind() {
        GroupKind::Dihedral(1) => vec![(1, 1), (1, -1)],
        GroupKind::Cyclic(2) => vec![(1, 1), (-1, -1)],
        GroupKind::Dihedral(2) => vec![(1, 1), (-1, -1), (1, -1), (-1, 1)],
        _ => return Err(Error::Unsupported(format!("grid action defined for d1, c2, d2 only, got {}", group.tag()))),
    };
    let pixel_perm = signs
        .iter()
        .map(|&(sr, sc)| {
            (0..height * width)
                .map(|p| {
                    let (r, c) = (p / width, p % width);
                    let r2 = if sr < 0 { height - 1 - r } else { r };
                    let c2 = if sc < 0 { width - 1 - c } else { c };
                    r2 * width + c2
                })
                .collect()
        })
        .collect();
    let action = GridAction { group: group.clone(), height, width, signs, pixel_perm };
    action.as_representation::<f64>()?;
    Ok(action)
}
