//! Signals over pixel grids and finite groups, and the convolutions between
//! them: lifting, exact group convolution, and relaxed group convolution.
//!
//! Grid convolutions use stride 1 and zero padding, so spatial size is kept.
//! Channel contraction is `out[c_o] = sum_i psi[.][c_o][c_i] * f[.][c_i]`.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::groups::{FiniteGroup, GridAction, Representation};
use crate::scalar::Scalar;

fn check_finite<T: Scalar>(values: &[T], what: &str) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return invalid(format!("{what} contains non-finite values"));
    }
    Ok(())
}

fn uniform<T: Scalar, R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<T> {
    (0..n).map(|_| T::lit(rng.random_range(-1.0..1.0))).collect()
}

/// `C x H x W` feature map.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSignal<T> {
    channels: usize,
    height: usize,
    width: usize,
    values: Vec<T>,
}

impl<T: Scalar> GridSignal<T> {
    pub fn new(channels: usize, height: usize, width: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != channels * height * width {
            return invalid("grid signal value count does not match shape");
        }
        check_finite(&values, "grid signal")?;
        Ok(Self { channels, height, width, values })
    }

    pub fn random<R: Rng + ?Sized>(channels: usize, height: usize, width: usize, rng: &mut R) -> Self {
        Self { channels, height, width, values: uniform(rng, channels * height * width) }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn at(&self, c: usize, row: usize, col: usize) -> T {
        self.values[(c * self.height + row) * self.width + col]
    }

    /// `(g . f)(x) = f(g^{-1} x)`, pixel positions moved by the grid action.
    pub fn act(&self, action: &GridAction, g: usize) -> Result<Self> {
        if action.height() != self.height || action.width() != self.width {
            return invalid("grid action shape does not match signal");
        }
        let perm = action.pixel_perm(g);
        let hw = self.height * self.width;
        let mut values = vec![T::zero(); self.values.len()];
        for c in 0..self.channels {
            for p in 0..hw {
                values[c * hw + perm[p]] = self.values[c * hw + p];
            }
        }
        Ok(Self { values, ..*self })
    }
}

/// Spatial kernel `C_out x C_in x k x k`, `k` odd, centred.
#[derive(Clone, Debug, PartialEq)]
pub struct GridKernel<T> {
    c_out: usize,
    c_in: usize,
    size: usize,
    values: Vec<T>,
}

impl<T: Scalar> GridKernel<T> {
    pub fn new(c_out: usize, c_in: usize, size: usize, values: Vec<T>) -> Result<Self> {
        if size % 2 == 0 {
            return invalid(format!("kernel size must be odd, got {size}"));
        }
        if values.len() != c_out * c_in * size * size {
            return invalid("grid kernel value count does not match shape");
        }
        check_finite(&values, "grid kernel")?;
        Ok(Self { c_out, c_in, size, values })
    }

    pub fn random<R: Rng + ?Sized>(c_out: usize, c_in: usize, size: usize, rng: &mut R) -> Result<Self> {
        Self::new(c_out, c_in, size, uniform(rng, c_out * c_in * size * size))
    }

    pub fn c_out(&self) -> usize {
        self.c_out
    }
    pub fn c_in(&self) -> usize {
        self.c_in
    }
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn at(&self, o: usize, i: usize, ky: usize, kx: usize) -> T {
        self.values[((o * self.c_in + i) * self.size + ky) * self.size + kx]
    }
}

/// Output of a lifting convolution: one `C x H x W` plane stack per group
/// element, laid out `[h][c][row][col]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LiftedSignal<T> {
    group: Arc<FiniteGroup>,
    channels: usize,
    height: usize,
    width: usize,
    values: Vec<T>,
}

impl<T: Scalar> LiftedSignal<T> {
    pub fn group(&self) -> &Arc<FiniteGroup> {
        &self.group
    }
    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn at(&self, h: usize, c: usize, row: usize, col: usize) -> T {
        self.values[((h * self.channels + c) * self.height + row) * self.width + col]
    }

    /// One group element's `C x H x W` planes.
    pub fn plane(&self, h: usize) -> &[T] {
        let n = self.channels * self.height * self.width;
        &self.values[h * n..(h + 1) * n]
    }

    /// Semidirect-product action: `(k . F)(x, h) = F(k^{-1} x, k^{-1} h)`.
    pub fn act(&self, action: &GridAction, k: usize) -> Result<Self> {
        if action.height() != self.height || action.width() != self.width {
            return invalid("grid action shape does not match signal");
        }
        let perm = action.pixel_perm(k);
        let hw = self.height * self.width;
        let n = self.channels * hw;
        let mut values = vec![T::zero(); self.values.len()];
        for h in self.group.elements() {
            let dst_h = self.group.op(k, h);
            for c in 0..self.channels {
                for p in 0..hw {
                    values[dst_h * n + c * hw + perm[p]] = self.values[h * n + c * hw + p];
                }
            }
        }
        Ok(Self { group: self.group.clone(), values, ..*self })
    }
}

/// Lifting convolution `(f0 * psi)(x, h) = sum_y f0(y) psi(h^{-1}(y - x))`,
/// zero padded, one output plane per group element.
pub fn lift_convolve<T: Scalar>(
    f0: &GridSignal<T>,
    psi: &GridKernel<T>,
    action: &GridAction,
) -> Result<LiftedSignal<T>> {
    if psi.size % 2 == 0 {
        return invalid("kernel size must be odd");
    }
    if psi.c_in != f0.channels {
        return invalid(format!("kernel expects {} input channels, signal has {}", psi.c_in, f0.channels));
    }
    if action.height() != f0.height || action.width() != f0.width {
        return invalid("grid action shape does not match signal");
    }
    let group = action.group().clone();
    let (hgt, wid) = (f0.height as i64, f0.width as i64);
    let r = (psi.size / 2) as i64;
    let hw = f0.height * f0.width;
    let plane = psi.c_out * hw;
    let mut values = vec![T::zero(); group.order() * plane];
    for h in group.elements() {
        let h_inv = group.inv(h);
        for dy in -r..=r {
            for dx in -r..=r {
                let (ty, tx) = action.transform_offset(h_inv, dy, dx);
                let (ky, kx) = ((ty + r) as usize, (tx + r) as usize);
                for row in 0..hgt {
                    let y = row + dy;
                    if y < 0 || y >= hgt {
                        continue;
                    }
                    for col in 0..wid {
                        let x = col + dx;
                        if x < 0 || x >= wid {
                            continue;
                        }
                        let pix = (row * wid + col) as usize;
                        for o in 0..psi.c_out {
                            let mut acc = T::zero();
                            for i in 0..psi.c_in {
                                acc += f0.at(i, y as usize, x as usize) * psi.at(o, i, ky, kx);
                            }
                            values[h * plane + o * hw + pix] += acc;
                        }
                    }
                }
            }
        }
    }
    Ok(LiftedSignal { group, channels: psi.c_out, height: f0.height, width: f0.width, values })
}

/// A function `f: G -> R^C`, stored `[g][c]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupSignal<T> {
    group: Arc<FiniteGroup>,
    channels: usize,
    values: Vec<T>,
}

impl<T: Scalar> GroupSignal<T> {
    pub fn new(group: Arc<FiniteGroup>, channels: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != group.order() * channels {
            return invalid("group signal value count does not match |G| x C");
        }
        check_finite(&values, "group signal")?;
        Ok(Self { group, channels, values })
    }

    pub fn zeros(group: Arc<FiniteGroup>, channels: usize) -> Self {
        let values = vec![T::zero(); group.order() * channels];
        Self { group, channels, values }
    }

    pub fn random<R: Rng + ?Sized>(group: Arc<FiniteGroup>, channels: usize, rng: &mut R) -> Self {
        let values = uniform(rng, group.order() * channels);
        Self { group, channels, values }
    }

    /// Scalar delta at one element.
    pub fn delta(group: Arc<FiniteGroup>, at: usize) -> Self {
        let mut s = Self::zeros(group, 1);
        s.values[at] = T::one();
        s
    }

    pub fn group(&self) -> &Arc<FiniteGroup> {
        &self.group
    }
    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn values(&self) -> &[T] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    #[inline]
    pub fn at(&self, g: usize, c: usize) -> T {
        self.values[g * self.channels + c]
    }

    pub fn fiber(&self, g: usize) -> &[T] {
        &self.values[g * self.channels..(g + 1) * self.channels]
    }

    /// Euclidean distance over all entries.
    pub fn distance(&self, other: &Self) -> Result<T> {
        if self.values.len() != other.values.len() {
            return invalid("signal shapes differ");
        }
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| (*a - *b) * (*a - *b)).sum::<T>().sqrt())
    }

    /// Permutation fast path of [`act_on_signal`]: `(g . z)(h) = z(g^{-1} h)`.
    pub fn translate(&self, g: usize) -> Self {
        let c = self.channels;
        let mut values = vec![T::zero(); self.values.len()];
        for h in self.group.elements() {
            let gh = self.group.op(g, h);
            values[gh * c..(gh + 1) * c].copy_from_slice(self.fiber(h));
        }
        Self { group: self.group.clone(), channels: c, values }
    }

    pub fn linear_combination(&self, a: T, other: &Self, b: T) -> Result<Self> {
        same_group(&self.group, &other.group)?;
        if self.channels != other.channels {
            return invalid("channel counts differ");
        }
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * *x + b * *y).collect();
        Ok(Self { group: self.group.clone(), channels: self.channels, values })
    }
}

fn same_group(a: &FiniteGroup, b: &FiniteGroup) -> Result<()> {
    if a.kind() != b.kind() {
        return invalid(format!("group mismatch: {} vs {}", a.tag(), b.tag()));
    }
    Ok(())
}

/// Group kernel `psi: G -> R^{C_out x C_in}`, stored `[g][o][i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactKernel<T> {
    group: Arc<FiniteGroup>,
    c_out: usize,
    c_in: usize,
    values: Vec<T>,
}

impl<T: Scalar> ExactKernel<T> {
    pub fn new(group: Arc<FiniteGroup>, c_out: usize, c_in: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != group.order() * c_out * c_in {
            return invalid("kernel value count does not match |G| x C_out x C_in");
        }
        check_finite(&values, "kernel")?;
        Ok(Self { group, c_out, c_in, values })
    }

    pub fn random<R: Rng + ?Sized>(group: Arc<FiniteGroup>, c_out: usize, c_in: usize, rng: &mut R) -> Self {
        let values = uniform(rng, group.order() * c_out * c_in);
        Self { group, c_out, c_in, values }
    }

    pub fn group(&self) -> &Arc<FiniteGroup> {
        &self.group
    }
    pub fn c_out(&self) -> usize {
        self.c_out
    }
    pub fn c_in(&self) -> usize {
        self.c_in
    }
    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn at(&self, g: usize, o: usize, i: usize) -> T {
        self.values[(g * self.c_out + o) * self.c_in + i]
    }

    pub fn scaled(&self, s: T) -> Self {
        Self { group: self.group.clone(), values: self.values.iter().map(|v| *v * s).collect(), ..*self }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        same_group(&self.group, &other.group)?;
        if (self.c_out, self.c_in) != (other.c_out, other.c_in) {
            return invalid("kernel shapes differ");
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| *a + *b).collect();
        Ok(Self { group: self.group.clone(), values, ..*self })
    }
}

/// `L` exact kernels mixed by element-dependent weights `w[l][h]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RelaxedKernel<T> {
    kernels: Vec<ExactKernel<T>>,
    weights: Vec<T>,
}

impl<T: Scalar> RelaxedKernel<T> {
    /// `weights` is `L x |G|` row-major.
    pub fn new(kernels: Vec<ExactKernel<T>>, weights: Vec<T>) -> Result<Self> {
        let first = kernels.first().ok_or_else(|| Error::InvalidArgument("relaxed kernel needs L >= 1".into()))?;
        for k in &kernels[1..] {
            same_group(&first.group, &k.group)?;
            if (k.c_out, k.c_in) != (first.c_out, first.c_in) {
                return invalid("relaxed kernels must share channel shapes");
            }
        }
        if weights.len() != kernels.len() * first.group.order() {
            return invalid("relaxed weights must be L x |G|");
        }
        check_finite(&weights, "relaxed weights")?;
        Ok(Self { kernels, weights })
    }

    /// Weights initialised to `1/L` everywhere, so the layer starts exactly
    /// equivariant.
    pub fn uniform(kernels: Vec<ExactKernel<T>>) -> Result<Self> {
        let l = kernels.len().max(1);
        let n = kernels.first().map(|k| k.group.order()).unwrap_or(0);
        let w = T::one() / T::from_usize_lossy(l);
        Self::new(kernels, vec![w; l * n])
    }

    pub fn num_kernels(&self) -> usize {
        self.kernels.len()
    }
    pub fn kernels(&self) -> &[ExactKernel<T>] {
        &self.kernels
    }
    pub fn weights(&self) -> &[T] {
        &self.weights
    }
    pub fn group(&self) -> &Arc<FiniteGroup> {
        &self.kernels[0].group
    }

    pub fn weight(&self, l: usize, h: usize) -> T {
        self.weights[l * self.group().order() + h]
    }

    pub fn weights_for(&self, l: usize) -> &[T] {
        let n = self.group().order();
        &self.weights[l * n..(l + 1) * n]
    }

    pub fn set_weight(&mut self, l: usize, h: usize, w: T) {
        let n = self.group().order();
        self.weights[l * n + h] = w;
    }
}

/// Exact group convolution `out(g) = sum_h psi(g^{-1} h) f(h)`.
pub fn group_convolve<T: Scalar>(f: &GroupSignal<T>, psi: &ExactKernel<T>) -> Result<GroupSignal<T>> {
    same_group(&f.group, &psi.group)?;
    if f.channels != psi.c_in {
        return invalid(format!("kernel expects {} input channels, signal has {}", psi.c_in, f.channels));
    }
    let g_ = &f.group;
    let mut out = GroupSignal::zeros(g_.clone(), psi.c_out);
    for g in g_.elements() {
        let g_inv = g_.inv(g);
        for h in g_.elements() {
            let k = g_.op(g_inv, h);
            let fh = f.fiber(h);
            for o in 0..psi.c_out {
                let mut acc = T::zero();
                for (i, &fv) in fh.iter().enumerate() {
                    acc += psi.at(k, o, i) * fv;
                }
                out.values[g * psi.c_out + o] += acc;
            }
        }
    }
    Ok(out)
}

/// Relaxed group convolution
/// `out(g) = sum_h f(h) sum_l w^l(h) psi^l(g^{-1} h)`.
pub fn relaxed_group_convolve<T: Scalar>(f: &GroupSignal<T>, rk: &RelaxedKernel<T>) -> Result<GroupSignal<T>> {
    let first = &rk.kernels[0];
    same_group(&f.group, &first.group)?;
    if f.channels != first.c_in {
        return invalid(format!("kernel expects {} input channels, signal has {}", first.c_in, f.channels));
    }
    let g_ = &f.group;
    let c_out = first.c_out;
    let mut out = GroupSignal::zeros(g_.clone(), c_out);
    for g in g_.elements() {
        let g_inv = g_.inv(g);
        for h in g_.elements() {
            let k = g_.op(g_inv, h);
            let fh = f.fiber(h);
            for o in 0..c_out {
                let mut acc = T::zero();
                for (l, psi) in rk.kernels.iter().enumerate() {
                    let mut inner = T::zero();
                    for (i, &fv) in fh.iter().enumerate() {
                        inner += psi.at(k, o, i) * fv;
                    }
                    acc += rk.weight(l, h) * inner;
                }
                out.values[g * c_out + o] += acc;
            }
        }
    }
    Ok(out)
}

/// Acts on a regular-representation feature: `(g . z)(h) = z(g^{-1} h)`,
/// computed as `rho_reg(g)` applied along the group axis of every channel.
pub fn act_on_signal<T: Scalar>(
    rep_regular: &Representation<T>,
    g: usize,
    z: &GroupSignal<T>,
) -> Result<GroupSignal<T>> {
    same_group(rep_regular.group(), &z.group)?;
    let n = z.group.order();
    if rep_regular.dim() != n {
        return invalid("act_on_signal needs the regular representation of the signal's group");
    }
    z.group.check_element(g)?;
    let c = z.channels;
    let mut values = vec![T::zero(); z.values.len()];
    for k in 0..n {
        for j in 0..n {
            let m = rep_regular.entry(g, k, j);
            if m == T::zero() {
                continue;
            }
            for ch in 0..c {
                values[k * c + ch] += m * z.values[j * c + ch];
            }
        }
    }
    Ok(GroupSignal { group: z.group.clone(), channels: c, values })
}

/// Flat debug form of a signal or kernel: group tag, shape, row-major values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DebugTensor {
    pub kind: String,
    pub group: Option<String>,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl DebugTensor {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    fn expect(&self, kind: &str, rank: usize) -> Result<()> {
        if self.kind != kind || self.shape.len() != rank {
            return Err(Error::InvalidData(format!(
                "expected a {kind} of rank {rank}, got {} {:?}",
                self.kind, self.shape
            )));
        }
        Ok(())
    }

    fn group(&self) -> Result<Arc<FiniteGroup>> {
        let tag = self.group.as_deref().ok_or_else(|| Error::InvalidData("missing group tag".into()))?;
        Ok(Arc::new(FiniteGroup::from_tag(tag)?))
    }

    fn cast<T: Scalar>(&self) -> Vec<T> {
        self.values.iter().map(|&v| T::lit(v)).collect()
    }
}

impl<T: Scalar> GroupSignal<T> {
    pub fn to_debug(&self) -> DebugTensor {
        DebugTensor {
            kind: "group_signal".into(),
            group: Some(self.group.tag()),
            shape: vec![self.group.order(), self.channels],
            values: self.values.iter().map(|v| v.to_f64_lossy()).collect(),
        }
    }

    pub fn from_debug(t: &DebugTensor) -> Result<Self> {
        t.expect("group_signal", 2)?;
        let group = t.group()?;
        if group.order() != t.shape[0] {
            return Err(Error::InvalidData("group order does not match shape".into()));
        }
        Self::new(group, t.shape[1], t.cast())
    }
}

impl<T: Scalar> ExactKernel<T> {
    pub fn to_debug(&self) -> DebugTensor {
        DebugTensor {
            kind: "exact_kernel".into(),
            group: Some(self.group.tag()),
            shape: vec![self.group.order(), self.c_out, self.c_in],
            values: self.values.iter().map(|v| v.to_f64_lossy()).collect(),
        }
    }

    pub fn from_debug(t: &DebugTensor) -> Result<Self> {
        t.expect("exact_kernel", 3)?;
        let group = t.group()?;
        if group.order() != t.shape[0] {
            return Err(Error::InvalidData("group order does not match shape".into()));
        }
        Self::new(group, t.shape[1], t.shape[2], t.cast())
    }
}

impl<T: Scalar> GridSignal<T> {
    pub fn to_debug(&self) -> DebugTensor {
        DebugTensor {
            kind: "grid_signal".into(),
            group: None,
            shape: vec![self.channels, self.height, self.width],
            values: self.values.iter().map(|v| v.to_f64_lossy()).collect(),
        }
    }

    pub fn from_debug(t: &DebugTensor) -> Result<Self> {
        t.expect("grid_signal", 3)?;
        Self::new(t.shape[0], t.shape[1], t.shape[2], t.cast())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::{build_cyclic, build_dihedral, build_grid_action, regular_representation};
    use crate::rng;

    fn grp(tag: &str) -> Arc<FiniteGroup> {
        Arc::new(FiniteGroup::from_tag(tag).unwrap())
    }

    // Direct-summation oracle written against the formula, independent of
    // the loop structure above.
    fn brute_group_conv(f: &GroupSignal<f64>, psi: &ExactKernel<f64>) -> Vec<f64> {
        let g_ = f.group();
        let mut out = Vec::new();
        for g in g_.elements() {
            for o in 0..psi.c_out() {
                let mut s = 0.0_f64;
                for h in g_.elements() {
                    for i in 0..psi.c_in() {
                        s += psi.at(g_.op(g_.inv(g), h), o, i) * f.at(h, i);
                    }
                }
                out.push(s);
            }
        }
        out
    }

    #[test]
    fn delta_convolved_with_delta() {
        let d2 = grp("d2");
        let f = GroupSignal::<f64>::delta(d2.clone(), 0);
        let psi = ExactKernel::new(d2.clone(), 1, 1, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let out = group_convolve(&f, &psi).unwrap();
        assert_eq!(out.values(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn constant_signal_gives_constant_output() {
        let c4 = grp("c4");
        let f = GroupSignal::<f64>::new(c4.clone(), 1, vec![2.5; 4]).unwrap();
        let psi = ExactKernel::new(c4, 1, 1, vec![0.5, -1.0, 3.0, 0.25]).unwrap();
        let out = group_convolve(&f, &psi).unwrap();
        for v in out.values() {
            assert!((v - 2.5 * 2.75).abs() < 1e-12);
        }
    }

    #[test]
    fn group_convolve_matches_brute_force() {
        let mut r = rng::stream(11, 0);
        let d2 = grp("d2");
        for _ in 0..20 {
            let f = GroupSignal::random(d2.clone(), 3, &mut r);
            let psi = ExactKernel::random(d2.clone(), 2, 3, &mut r);
            let out = group_convolve(&f, &psi).unwrap();
            for (a, b) in out.values().iter().zip(brute_group_conv(&f, &psi)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn group_mismatch_rejected() {
        let f = GroupSignal::<f64>::zeros(grp("d1"), 1);
        let psi = ExactKernel::new(grp("c2"), 1, 1, vec![1.0, 0.0]).unwrap();
        assert!(matches!(group_convolve(&f, &psi), Err(Error::InvalidArgument(_))));
        let psi = ExactKernel::new(grp("d1"), 1, 2, vec![0.0; 4]).unwrap();
        assert!(group_convolve(&f, &psi).is_err());
    }

    #[test]
    fn relaxed_examples() {
        let mut r = rng::stream(12, 0);
        let d2 = grp("d2");
        let f = GroupSignal::random(d2.clone(), 2, &mut r);
        let p1 = ExactKernel::random(d2.clone(), 3, 2, &mut r);
        let p2 = ExactKernel::random(d2.clone(), 3, 2, &mut r);

        let rk = RelaxedKernel::new(vec![p1.clone()], vec![1.0; 4]).unwrap();
        let a = relaxed_group_convolve(&f, &rk).unwrap();
        let b = group_convolve(&f, &p1).unwrap();
        assert!(a.distance(&b).unwrap() <= 1e-12);

        let c = 0.7;
        let rk = RelaxedKernel::new(vec![p1.clone(), p2.clone()], vec![c; 8]).unwrap();
        let a = relaxed_group_convolve(&f, &rk).unwrap();
        let b = group_convolve(&f, &p1.add(&p2).unwrap().scaled(c)).unwrap();
        assert!(a.distance(&b).unwrap() <= 1e-12);
    }

    #[test]
    fn relaxed_matches_triple_loop_d1() {
        let mut r = rng::stream(13, 0);
        let d1 = grp("d1");
        let f = GroupSignal::<f64>::random(d1.clone(), 2, &mut r);
        let ks = vec![ExactKernel::random(d1.clone(), 2, 2, &mut r), ExactKernel::random(d1.clone(), 2, 2, &mut r)];
        let w = vec![0.3, -1.2, 2.0, 0.5];
        let rk = RelaxedKernel::new(ks.clone(), w.clone()).unwrap();
        let out = relaxed_group_convolve(&f, &rk).unwrap();
        for g in 0..2 {
            for o in 0..2 {
                let mut s = 0.0_f64;
                for h in 0..2 {
                    for l in 0..2 {
                        for i in 0..2 {
                            s += f.at(h, i) * w[l * 2 + h] * ks[l].at(d1.op(d1.inv(g), h), o, i);
                        }
                    }
                }
                assert!((out.at(g, o) - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn act_on_signal_examples() {
        let d1 = grp("d1");
        let reg = regular_representation::<f64>(&d1);
        let z = GroupSignal::new(d1.clone(), 1, vec![3.0, 5.0]).unwrap();
        assert_eq!(act_on_signal(&reg, 0, &z).unwrap(), z);
        assert_eq!(act_on_signal(&reg, 1, &z).unwrap().values(), &[5.0, 3.0]);

        let d4 = Arc::new(build_dihedral(4).unwrap());
        let reg = regular_representation::<f64>(&d4);
        let mut r = rng::stream(14, 0);
        let z = GroupSignal::random(d4.clone(), 2, &mut r);
        for g in d4.elements() {
            let gz = act_on_signal(&reg, g, &z).unwrap();
            assert_eq!(gz, z.translate(g));
            assert_eq!(act_on_signal(&reg, d4.inv(g), &gz).unwrap(), z);
        }
        let wrong = regular_representation::<f64>(&Arc::new(build_cyclic(8).unwrap()));
        assert!(act_on_signal(&wrong, 1, &z).is_err());
    }

    fn brute_lift(f0: &GridSignal<f64>, psi: &GridKernel<f64>, action: &GridAction) -> Vec<f64> {
        // sum over all pixels y of f0(y) psi(h^{-1}(y - x)), kernel zero outside its footprint
        let g = action.group();
        let r = (psi.size() / 2) as i64;
        let (hh, ww) = (f0.height() as i64, f0.width() as i64);
        let mut out = Vec::new();
        for h in g.elements() {
            for o in 0..psi.c_out() {
                for xr in 0..hh {
                    for xc in 0..ww {
                        let mut s = 0.0_f64;
                        for yr in 0..hh {
                            for yc in 0..ww {
                                let (ty, tx) = action.transform_offset(g.inv(h), yr - xr, yc - xc);
                                if ty.abs() > r || tx.abs() > r {
                                    continue;
                                }
                                for i in 0..psi.c_in() {
                                    s += f0.at(i, yr as usize, yc as usize)
                                        * psi.at(o, i, (ty + r) as usize, (tx + r) as usize);
                                }
                            }
                        }
                        out.push(s);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn lift_examples() {
        let d1 = grp("d1");
        let action = build_grid_action(&d1, 4, 5).unwrap();
        let f0 = GridSignal::new(1, 4, 5, vec![1.0; 20]).unwrap();
        let mut delta = vec![0.0; 9];
        delta[4] = 1.0;
        let psi = GridKernel::new(1, 1, 3, delta).unwrap();
        let out = lift_convolve(&f0, &psi, &action).unwrap();
        assert!(out.values().iter().all(|&v| v == 1.0));

        let mut r = rng::stream(15, 0);
        let f0 = GridSignal::random(1, 5, 5, &mut r);
        // symmetric under the column mirror
        let sym = GridKernel::new(1, 1, 3, vec![1.0, 2.0, 1.0, 0.5, 3.0, 0.5, -1.0, 4.0, -1.0]).unwrap();
        let action = build_grid_action(&d1, 5, 5).unwrap();
        let out = lift_convolve(&f0, &sym, &action).unwrap();
        assert_eq!(out.plane(0), out.plane(1));

        let psi = GridKernel::random(1, 1, 3, &mut r).unwrap();
        let out = lift_convolve(&f0, &psi, &action).unwrap();
        for (a, b) in out.values().iter().zip(brute_lift(&f0, &psi, &action)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn lift_rejects_even_kernels_and_channel_mismatch() {
        let action = build_grid_action(&grp("d1"), 3, 3).unwrap();
        assert!(GridKernel::<f64>::new(1, 1, 2, vec![0.0; 4]).is_err());
        let f0 = GridSignal::new(2, 3, 3, vec![0.0; 18]).unwrap();
        let psi = GridKernel::new(1, 1, 3, vec![0.0; 9]).unwrap();
        assert!(matches!(lift_convolve(&f0, &psi, &action), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn lifting_is_equivariant() {
        let mut r = rng::stream(16, 0);
        for tag in ["d1", "c2", "d2"] {
            let g = grp(tag);
            for (h, w) in [(4, 5), (5, 5), (3, 6)] {
                let action = build_grid_action(&g, h, w).unwrap();
                let f0 = GridSignal::<f64>::random(2, h, w, &mut r);
                let psi = GridKernel::random(3, 2, 3, &mut r).unwrap();
                let base = lift_convolve(&f0, &psi, &action).unwrap();
                for k in g.elements() {
                    let lhs = lift_convolve(&f0.act(&action, k).unwrap(), &psi, &action).unwrap();
                    let rhs = base.act(&action, k).unwrap();
                    for (a, b) in lhs.values().iter().zip(rhs.values()) {
                        assert!((a - b).abs() < 1e-12, "{tag} {h}x{w} k={k}");
                    }
                }
            }
        }
    }

    #[test]
    fn debug_format_round_trips() {
        let mut r = rng::stream(17, 0);
        let z = GroupSignal::<f64>::random(grp("d2"), 3, &mut r);
        let json = z.to_debug().to_json().unwrap();
        let back = GroupSignal::<f64>::from_debug(&DebugTensor::from_json(&json).unwrap()).unwrap();
        assert_eq!(back, z);
        let k = ExactKernel::<f64>::random(grp("c4"), 2, 3, &mut r);
        assert_eq!(ExactKernel::from_debug(&k.to_debug()).unwrap(), k);
        assert!(GroupSignal::<f64>::from_debug(&k.to_debug()).is_err());
    }

    #[test]
    fn non_finite_rejected() {
        assert!(GroupSignal::new(grp("c2"), 1, vec![0.0, f64::NAN]).is_err());
    }
}
