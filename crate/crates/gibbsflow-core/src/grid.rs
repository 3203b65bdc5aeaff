//! Per-element collocation grids and complex functions sampled on them.

use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::OperatorError;
use crate::system::MarkovSystem;

/// Number of random node pairs used by [`GridFunction::hoelder_seminorm`].
pub const HOELDER_RANDOM_PAIRS: usize = 10_000;
const HOELDER_SEED: u64 = 0x5eed_4011;

/// `per_element` equally spaced nodes on each partition element, endpoints
/// included. Nodes of neighbouring elements at a shared breakpoint are
/// distinct, so functions may jump there.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    breakpoints: Vec<f64>,
    per_element: usize,
}

impl Grid {
    pub fn new(breakpoints: Vec<f64>, per_element: usize) -> Result<Self, OperatorError> {
        if per_element < 2 {
            return Err(OperatorError::GridTooSmall { min: 2, got: per_element });
        }
        Ok(Grid { breakpoints, per_element })
    }

    pub fn for_system(sys: &MarkovSystem, per_element: usize) -> Result<Self, OperatorError> {
        Grid::new(sys.breakpoints().to_vec(), per_element)
    }

    pub fn elements(&self) -> usize {
        self.breakpoints.len() - 1
    }

    pub fn per_element(&self) -> usize {
        self.per_element
    }

    pub fn len(&self) -> usize {
        self.elements() * self.per_element
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn spacing(&self, elem: usize) -> f64 {
        (self.breakpoints[elem + 1] - self.breakpoints[elem]) / (self.per_element - 1) as f64
    }

    #[inline]
    pub fn element_of_index(&self, idx: usize) -> usize {
        idx / self.per_element
    }

    #[inline]
    pub fn node(&self, idx: usize) -> f64 {
        let e = idx / self.per_element;
        let k = idx % self.per_element;
        if k == self.per_element - 1 {
            self.breakpoints[e + 1]
        } else {
            self.breakpoints[e] + self.spacing(e) * k as f64
        }
    }

    /// Index range of the nodes of `elem`.
    pub fn range(&self, elem: usize) -> core::ops::Range<usize> {
        elem * self.per_element..(elem + 1) * self.per_element
    }

    /// Element containing `x`, left-closed, with 1 in the last element.
    pub fn element_of(&self, x: f64) -> usize {
        let idx = self.breakpoints.partition_point(|&a| a <= x);
        idx.saturating_sub(1).min(self.elements() - 1)
    }

    /// Flat index `i` of the left node and weight `t` in `[0, 1]` such that
    /// `x` sits at `(1 - t) node(i) + t node(i + 1)` inside `elem`.
    #[inline]
    pub fn locate(&self, elem: usize, x: f64) -> (usize, f64) {
        let a = self.breakpoints[elem];
        let h = self.spacing(elem);
        let s = ((x - a) / h).max(0.0);
        let last = (self.per_element - 2) as f64;
        let k = s.floor().min(last);
        let t = (s - k).min(1.0);
        (elem * self.per_element + k as usize, t)
    }

    /// Trapezoid weights for Lebesgue measure on [0, 1].
    pub fn lebesgue_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.len()];
        for e in 0..self.elements() {
            let h = self.spacing(e);
            for (k, slot) in w[self.range(e)].iter_mut().enumerate() {
                *slot = if k == 0 || k == self.per_element - 1 { 0.5 * h } else { h };
            }
        }
        w
    }
}

/// Complex values at the nodes of a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<Complex64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<Complex64>) -> Self {
        assert_eq!(grid.len(), values.len(), "one value per node");
        GridFunction { grid, values }
    }

    pub fn constant(grid: &Grid, c: Complex64) -> Self {
        GridFunction { grid: grid.clone(), values: vec![c; grid.len()] }
    }

    /// Sample `f(elem, x)` at every node.
    pub fn from_fn<F: FnMut(usize, f64) -> Complex64>(grid: &Grid, mut f: F) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.element_of_index(i), grid.node(i))).collect();
        GridFunction { grid: grid.clone(), values }
    }

    pub fn from_real<F: FnMut(usize, f64) -> f64>(grid: &Grid, mut f: F) -> Self {
        GridFunction::from_fn(grid, |e, x| Complex64::new(f(e, x), 0.0))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn re(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.re).collect()
    }

    pub fn map<F: FnMut(Complex64) -> Complex64>(&self, f: F) -> GridFunction {
        GridFunction { grid: self.grid.clone(), values: self.values.iter().copied().map(f).collect() }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Monotone cubic (Fritsch-Carlson) interpolation of real and imaginary
    /// parts inside the element containing `x`.
    pub fn eval(&self, x: f64) -> Complex64 {
        self.eval_in(self.grid.element_of(x), x)
    }

    /// As [`eval`](Self::eval), treating `x` as a point of the closure of `elem`.
    pub fn eval_in(&self, elem: usize, x: f64) -> Complex64 {
        let (i, t) = self.grid.locate(elem, x);
        let lo = self.grid.range(elem).start;
        let hi = self.grid.range(elem).end;
        let re = pchip(&self.values[lo..hi], i - lo, t, |z| z.re);
        let im = pchip(&self.values[lo..hi], i - lo, t, |z| z.im);
        Complex64::new(re, im)
    }

    /// Piecewise linear interpolation inside `elem`.
    #[inline]
    pub fn eval_linear(&self, elem: usize, x: f64) -> Complex64 {
        let (i, t) = self.grid.locate(elem, x);
        self.values[i] * (1.0 - t) + self.values[i + 1] * t
    }

    /// Hoelder seminorm over node pairs inside each element: every adjacent
    /// pair plus [`HOELDER_RANDOM_PAIRS`] random pairs from a fixed seed.
    pub fn hoelder_seminorm(&self, alpha: f64) -> f64 {
        hoelder_seminorm_by(&self.grid, alpha, |i, j| (self.values[i] - self.values[j]).norm())
    }

    /// `(1 + |b|^alpha)^{-1} |v|_alpha + sup |v|`.
    pub fn norm_b(&self, alpha: f64, b: f64) -> f64 {
        self.hoelder_seminorm(alpha) / (1.0 + b.abs().powf(alpha)) + self.sup_norm()
    }

    /// Integral against node weights.
    pub fn integrate(&self, weights: &[f64]) -> Complex64 {
        self.values.iter().zip(weights).map(|(v, w)| v * w).sum()
    }
}

/// Hoelder quotient maximised over the standard pair set, with the pair
/// difference supplied by `diff(i, j)`.
pub fn hoelder_seminorm_by<F: Fn(usize, usize) -> f64>(grid: &Grid, alpha: f64, diff: F) -> f64 {
    let n = grid.per_element();
    let mut best: f64 = 0.0;
    let mut quotient = |i: usize, j: usize| {
        let d = (grid.node(i) - grid.node(j)).abs();
        if d > 0.0 {
            let q = diff(i, j) / d.powf(alpha);
            if q > best {
                best = q;
            }
        }
    };
    for e in 0..grid.elements() {
        for i in grid.range(e).start..grid.range(e).end - 1 {
            quotient(i, i + 1);
        }
    }
    let mut rng = ChaCha20Rng::seed_from_u64(HOELDER_SEED);
    for _ in 0..HOELDER_RANDOM_PAIRS {
        let e = rng.random_range(0..grid.elements());
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        quotient(e * n + i, e * n + j);
    }
    best
}

fn pchip<F: Fn(&Complex64) -> f64>(ys: &[Complex64], k: usize, t: f64, part: F) -> f64 {
    let n = ys.len();
    let y = |i: usize| part(&ys[i]);
    if n == 2 {
        return y(0) * (1.0 - t) + y(1) * t;
    }
    // slopes in units of the (uniform) spacing
    let delta = |i: usize| y(i + 1) - y(i);
    let slope = |i: usize| -> f64 {
        if i == 0 {
            end_slope(delta(0), delta(1))
        } else if i == n - 1 {
            end_slope(delta(n - 2), delta(n - 3))
        } else {
            let (d0, d1) = (delta(i - 1), delta(i));
            if d0 * d1 <= 0.0 {
                0.0
            } else {
                2.0 * d0 * d1 / (d0 + d1)
            }
        }
    };
    let (y0, y1) = (y(k), y(k + 1));
    let (m0, m1) = (slope(k), slope(k + 1));
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * y0 + h10 * m0 + h01 * y1 + h11 * m1
}

fn end_slope(d0: f64, d1: f64) -> f64 {
    let d = 0.5 * (3.0 * d0 - d1);
    if d * d0 <= 0.0 {
        0.0
    } else if d0 * d1 <= 0.0 && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}
