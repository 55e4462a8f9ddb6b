//! Minimal dense tensor arithmetic.
//!
//! [`Tensor4`] is the universal feature carrier: a dense, row-major,
//! double-precision array of shape `[n, c, h, w]`. [`Matrix`] covers the
//! 2-D cases (point features, logit batches). [`LinearMap`] is a plain
//! affine map used for every learned projection in the crate.
//!
//! All operations are pure functions over value-semantic data; backward
//! passes are hand-written next to their forwards and checked against the
//! central-difference oracle in [`gradcheck`].

pub mod activation;
pub mod entropy;
pub mod gradcheck;
pub mod linear;
pub mod norm;
pub mod sample;

use crate::error::{Error, Result};

/// Dense rank-4 tensor `[n, c, h, w]`, row-major (`w` fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Tensor4 { n, c, h, w, data: vec![0.0; n * c * h * w] }
    }

    /// Builds a tensor from an existing buffer, checking the length.
    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * c * h * w {
            return Err(Error::shape(format!(
                "buffer of length {} cannot fill shape [{n}, {c}, {h}, {w}]",
                data.len()
            )));
        }
        Ok(Tensor4 { n, c, h, w, data })
    }

    /// Builds a tensor by evaluating `f(n, c, i, j)` at every index.
    pub fn from_fn(
        n: usize,
        c: usize,
        h: usize,
        w: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> f64,
    ) -> Self {
        let mut t = Tensor4::zeros(n, c, h, w);
        for b in 0..n {
            for ch in 0..c {
                for i in 0..h {
                    for j in 0..w {
                        let at = t.idx(b, ch, i, j);
                        t.data[at] = f(b, ch, i, j);
                    }
                }
            }
        }
        t
    }

    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.n, self.c, self.h, self.w)
    }

    pub fn zeros_like(&self) -> Self {
        Tensor4::zeros(self.n, self.c, self.h, self.w)
    }

    #[inline]
    pub fn idx(&self, n: usize, c: usize, i: usize, j: usize) -> usize {
        ((n * self.c + c) * self.h + i) * self.w + j
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, i: usize, j: usize) -> f64 {
        self.data[self.idx(n, c, i, j)]
    }

    #[inline]
    pub fn at_mut(&mut self, n: usize, c: usize, i: usize, j: usize) -> &mut f64 {
        let at = self.idx(n, c, i, j);
        &mut self.data[at]
    }

    /// Elementwise sum; shapes must match.
    pub fn add(&self, other: &Tensor4) -> Result<Tensor4> {
        if self.shape() != other.shape() {
            return Err(Error::shape(format!(
                "cannot add {:?} to {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Tensor4 { data, ..*self })
    }

    /// In-place elementwise accumulation; shapes must match.
    pub fn add_assign(&mut self, other: &Tensor4) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(format!(
                "cannot accumulate {:?} into {:?}",
                other.shape(),
                self.shape()
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&self, s: f64) -> Tensor4 {
        Tensor4 { data: self.data.iter().map(|v| v * s).collect(), ..*self }
    }

    /// Sum of all elements (a convenient scalar target for gradient checks).
    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Errors if any element is NaN or infinite.
    pub fn check_finite(&self, what: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::shape(format!("{what} contains non-finite values")))
        }
    }
}

/// Dense row-major matrix, used for point features and logit batches.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "buffer of length {} cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn zeros_like(&self) -> Self {
        Matrix::zeros(self.rows, self.cols)
    }
}

/// A learned affine map `y = xW + b`.
///
/// `weight` is stored row-major as `[in_dim, out_dim]`, i.e.
/// `weight[i * out_dim + o]` multiplies input coordinate `i` into output
/// coordinate `o`. The bias is always present; an all-zero bias is the
/// "no bias" case.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LinearMap {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        LinearMap { in_dim, out_dim, weight: vec![0.0; in_dim * out_dim], bias: vec![0.0; out_dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = LinearMap::zeros(dim, dim);
        for i in 0..dim {
            m.weight[i * dim + i] = 1.0;
        }
        m
    }

    /// Fan-in uniform initialization: every weight and bias drawn from
    /// `[-sqrt(1/in_dim), +sqrt(1/in_dim)]`.
    pub fn init(in_dim: usize, out_dim: usize, rng: &mut impl FnMut() -> f64) -> Self {
        let bound = (1.0 / in_dim as f64).sqrt();
        let mut draw = || (2.0 * rng() - 1.0) * bound;
        LinearMap {
            in_dim,
            out_dim,
            weight: (0..in_dim * out_dim).map(|_| draw()).collect(),
            bias: (0..out_dim).map(|_| draw()).collect(),
        }
    }

    #[inline]
    pub fn w(&self, i: usize, o: usize) -> f64 {
        self.weight[i * self.out_dim + o]
    }

    /// Applies the map to a single vector, writing into `out`.
    pub fn apply_vec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.in_dim);
        debug_assert_eq!(out.len(), self.out_dim);
        out.copy_from_slice(&self.bias);
        for (i, &xi) in x.iter().enumerate() {
            let row = &self.weight[i * self.out_dim..(i + 1) * self.out_dim];
            for (o, &wio) in row.iter().enumerate() {
                out[o] += xi * wio;
            }
        }
    }

    /// Multiply-accumulate count of one `apply_vec` call.
    pub fn macs_per_vec(&self) -> u64 {
        (self.in_dim * self.out_dim) as u64
    }
}

/// Anything holding a flat-enumerable set of learnable scalars.
///
/// This is the only reflection mechanism in the crate: optimizers, gradient
/// checks, and checkpoints all walk parameters through these two methods.
/// Implementations must visit parameters in a fixed order, and
/// `for_each_param` / `for_each_param_mut` must agree on that order.
pub trait ParamGroup {
    fn for_each_param(&self, f: &mut dyn FnMut(f64));
    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut f64));

    fn param_count(&self) -> usize {
        let mut count = 0;
        self.for_each_param(&mut |_| count += 1);
        count
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.for_each_param(&mut |v| out.push(v));
        out
    }

    /// Overwrites parameters from a flat buffer produced by [`flatten`].
    ///
    /// [`flatten`]: ParamGroup::flatten
    fn load_flat(&mut self, vals: &[f64]) -> Result<()> {
        let mut it = vals.iter();
        let mut short = false;
        self.for_each_param_mut(&mut |p| match it.next() {
            Some(v) => *p = *v,
            None => short = true,
        });
        if short || it.next().is_some() {
            return Err(Error::shape(format!(
                "flat buffer of length {} does not match parameter count",
                vals.len()
            )));
        }
        Ok(())
    }
}

impl ParamGroup for LinearMap {
    fn for_each_param(&self, f: &mut dyn FnMut(f64)) {
        self.weight.iter().for_each(|&v| f(v));
        self.bias.iter().for_each(|&v| f(v));
    }

    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut f64)) {
        self.weight.iter_mut().for_each(|v| f(v));
        self.bias.iter_mut().for_each(|v| f(v));
    }
}

impl ParamGroup for Vec<f64> {
    fn for_each_param(&self, f: &mut dyn FnMut(f64)) {
        self.iter().for_each(|&v| f(v));
    }

    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut f64)) {
        self.iter_mut().for_each(|v| f(v));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_bad_length() {
        let err = Tensor4::from_vec(1, 2, 2, 2, vec![0.0; 7]);
        assert!(matches!(err, Err(Error::Shape(_))), "expected shape error, got {err:?}");
    }

    #[test]
    fn indexing_is_row_major() {
        let t = Tensor4::from_fn(2, 3, 4, 5, |n, c, i, j| (n * 1000 + c * 100 + i * 10 + j) as f64);
        assert_eq!(t.at(1, 2, 3, 4), 1234.0);
        assert_eq!(t.data[t.idx(0, 0, 0, 1)], 1.0);
        assert_eq!(t.data[t.idx(0, 0, 1, 0)], 10.0);
        assert_eq!(t.data[t.idx(0, 1, 0, 0)], 100.0);
    }

    #[test]
    fn add_checks_shapes() {
        let a = Tensor4::zeros(1, 2, 3, 4);
        let b = Tensor4::zeros(1, 2, 4, 3);
        assert!(a.add(&b).is_err());
        let c = a.add(&a).expect("same shapes must add");
        assert_eq!(c.shape(), a.shape());
    }

    #[test]
    fn linear_map_identity_is_identity() {
        let m = LinearMap::identity(3);
        let mut out = [0.0; 3];
        m.apply_vec(&[1.0, -2.0, 0.5], &mut out);
        assert_eq!(out, [1.0, -2.0, 0.5]);
    }

    #[test]
    fn flatten_load_round_trip() {
        let mut m = LinearMap::identity(2);
        let flat = m.flatten();
        assert_eq!(flat.len(), 6, "2x2 weight + bias 2");
        let doubled: Vec<f64> = flat.iter().map(|v| v * 2.0).collect();
        m.load_flat(&doubled).expect("matching length");
        assert_eq!(m.w(0, 0), 2.0);
        assert!(m.load_flat(&[1.0]).is_err(), "short buffer must be rejected");
    }
}
