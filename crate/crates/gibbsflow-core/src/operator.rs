//! Collocation discretization of the twisted transfer operators
//!
//! `P_s v(x) = sum_{Ty = x} exp(phi(y) - s r(y)) v(y)` and its normalized
//! form `L_s v = P_s(f v) / (lambda f)`, with `(lambda, f, nu, mu)` the
//! leading eigendata of the real operator `P_sigma`.
//!
//! Preimages of each node are computed exactly; values at off-grid
//! preimages are linearly interpolated, which keeps the discrete operator
//! positive and makes `L_sigma` an exact Markov matrix.

use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::error::OperatorError;
use crate::grid::{Grid, GridFunction};
use crate::system::MarkovSystem;

/// Default nodes per partition element.
pub const DEFAULT_NODES: usize = 1024;
/// Smallest grid accepted by [`Discretization::eigendata`].
pub const MIN_EIGEN_NODES: usize = 64;
const EIGEN_TOL: f64 = 1e-12;
const EIGEN_MAX_ITER: usize = 100_000;
const PAR_THRESHOLD: usize = 1 << 14;

/// One-step preimage table on a grid.
#[derive(Debug, Clone)]
pub struct Discretization {
    sys: MarkovSystem,
    grid: Grid,
    offsets: Vec<usize>,
    src: Vec<usize>,
    t: Vec<f64>,
    phi: Vec<f64>,
    roof: Vec<f64>,
}

/// Sparse operator `v -> sum_e w0_e v[src_e] + w1_e v[src_e + 1]`.
#[derive(Debug, Clone)]
pub struct TransferOperator {
    grid: Grid,
    offsets: Vec<usize>,
    src: Vec<usize>,
    w0: Vec<Complex64>,
    w1: Vec<Complex64>,
}

#[derive(Debug, Clone)]
pub struct EigenData {
    pub sigma: f64,
    pub lambda: f64,
    /// Positive eigenfunction, normalized so that `sum nu f = 1`.
    pub f: GridFunction,
    /// Left eigenvector of the discrete `P_sigma`, a probability vector.
    pub nu: Vec<f64>,
    /// `nu * f`, the discrete invariant measure.
    pub mu: Vec<f64>,
    pub iterations: usize,
}

impl EigenData {
    /// `int v dmu`.
    pub fn integrate(&self, v: &GridFunction) -> Complex64 {
        v.integrate(&self.mu)
    }

    pub fn f_sup(&self) -> f64 {
        self.f.values().iter().map(|z| z.re).fold(0.0, f64::max)
    }

    pub fn f_inf(&self) -> f64 {
        self.f.values().iter().map(|z| z.re).fold(f64::INFINITY, f64::min)
    }

    /// `(int |v|^p dmu)^{1/p}`.
    pub fn lp_norm(&self, v: &GridFunction, p: f64) -> f64 {
        let s: f64 = v.values().iter().zip(&self.mu).map(|(z, w)| z.norm().powf(p) * w).sum();
        s.powf(1.0 / p)
    }
}

impl Discretization {
    pub fn new(sys: &MarkovSystem, per_element: usize) -> Result<Self, OperatorError> {
        let grid = Grid::for_system(sys, per_element)?;
        let len = grid.len();
        let mut offsets = Vec::with_capacity(len + 1);
        let mut src = Vec::new();
        let mut t = Vec::new();
        let mut phi = Vec::new();
        let mut roof = Vec::new();
        offsets.push(0);
        for i in 0..len {
            let e = grid.element_of_index(i);
            let x = grid.node(i);
            for j in 0..sys.elements() {
                if !sys.admits(j, e) {
                    continue;
                }
                let y = sys.inverse(j, x);
                let (k, w) = grid.locate(j, y);
                src.push(k);
                t.push(w);
                phi.push(sys.potential().eval(j, y));
                roof.push(sys.roof().eval(j, y));
            }
            offsets.push(src.len());
        }
        Ok(Discretization { sys: sys.clone(), grid, offsets, src, t, phi, roof })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn system(&self) -> &MarkovSystem {
        &self.sys
    }

    /// Number of preimage entries at node `i`.
    pub fn preimage_count(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    /// The unnormalized operator `P_s`.
    pub fn transfer(&self, s: Complex64) -> TransferOperator {
        let n = self.src.len();
        let mut w0 = Vec::with_capacity(n);
        let mut w1 = Vec::with_capacity(n);
        for e in 0..n {
            let w = (Complex64::new(self.phi[e], 0.0) - s * self.roof[e]).exp();
            w0.push(w * (1.0 - self.t[e]));
            w1.push(w * self.t[e]);
        }
        self.operator(w0, w1)
    }

    /// The normalized operator `L_s`, `s = eig.sigma + i b`.
    pub fn normalized(&self, eig: &EigenData, b: f64) -> TransferOperator {
        let s = Complex64::new(eig.sigma, b);
        let f = eig.f.values();
        let n = self.src.len();
        let mut w0 = Vec::with_capacity(n);
        let mut w1 = Vec::with_capacity(n);
        for i in 0..self.grid.len() {
            let scale = 1.0 / (eig.lambda * f[i].re);
            for e in self.offsets[i]..self.offsets[i + 1] {
                let w = (Complex64::new(self.phi[e], 0.0) - s * self.roof[e]).exp() * scale;
                let k = self.src[e];
                w0.push(w * (1.0 - self.t[e]) * f[k].re);
                w1.push(w * self.t[e] * f[k + 1].re);
            }
        }
        self.operator(w0, w1)
    }

    fn operator(&self, w0: Vec<Complex64>, w1: Vec<Complex64>) -> TransferOperator {
        TransferOperator { grid: self.grid.clone(), offsets: self.offsets.clone(), src: self.src.clone(), w0, w1 }
    }

    pub fn apply_p(&self, s: Complex64, v: &GridFunction) -> GridFunction {
        self.transfer(s).apply(v)
    }

    pub fn apply_l(&self, eig: &EigenData, b: f64, v: &GridFunction, n: usize) -> GridFunction {
        self.normalized(eig, b).apply_n(v, n)
    }

    /// Leading eigendata of `P_sigma` by power iteration, stopped when the
    /// Collatz-Wielandt bounds agree to 1e-12.
    pub fn eigendata(&self, sigma: f64) -> Result<EigenData, OperatorError> {
        if self.grid.per_element() < MIN_EIGEN_NODES {
            return Err(OperatorError::GridTooSmall { min: MIN_EIGEN_NODES, got: self.grid.per_element() });
        }
        let len = self.grid.len();
        let w: Vec<f64> = (0..self.src.len()).map(|e| (self.phi[e] - sigma * self.roof[e]).exp()).collect();
        let forward = |v: &[f64], out: &mut [f64]| {
            for i in 0..len {
                let mut acc = 0.0;
                for e in self.offsets[i]..self.offsets[i + 1] {
                    let k = self.src[e];
                    acc += w[e] * ((1.0 - self.t[e]) * v[k] + self.t[e] * v[k + 1]);
                }
                out[i] = acc;
            }
        };
        let adjoint = |v: &[f64], out: &mut [f64]| {
            out.iter_mut().for_each(|o| *o = 0.0);
            for i in 0..len {
                for e in self.offsets[i]..self.offsets[i + 1] {
                    let k = self.src[e];
                    out[k] += v[i] * w[e] * (1.0 - self.t[e]);
                    out[k + 1] += v[i] * w[e] * self.t[e];
                }
            }
        };

        let (lambda, f, it_f) = power_iteration(len, forward, false)?;
        let (_, nu, it_nu) = power_iteration(len, adjoint, true)?;
        let norm: f64 = nu.iter().zip(&f).map(|(a, b)| a * b).sum();
        let f: Vec<f64> = f.iter().map(|v| v / norm).collect();
        let mu: Vec<f64> = nu.iter().zip(&f).map(|(a, b)| a * b).collect();
        let f = GridFunction::new(self.grid.clone(), f.into_iter().map(|v| Complex64::new(v, 0.0)).collect());
        Ok(EigenData { sigma, lambda, f, nu, mu, iterations: it_f.max(it_nu) })
    }

    /// `e^{|phi - sigma r|_alpha / (1 - lambda^{-alpha})} sup f / inf f`,
    /// a bound for `sup |L_s^n v| / sup |v|` over all `n` and `b`.
    pub fn c6(&self, eig: &EigenData) -> f64 {
        let sys = &self.sys;
        let g = GridFunction::from_real(&self.grid, |e, x| sys.potential().eval(e, x) - eig.sigma * sys.roof().eval(e, x));
        let lambda = sys.measure(256).lambda;
        let a = sys.alpha();
        let dist = g.hoelder_seminorm(a) / (1.0 - lambda.powf(-a));
        dist.exp() * eig.f_sup() / eig.f_inf()
    }

    /// Empirical Lasota-Yorke constants `C8(n)`, `n = 1..=max_n`, for
    /// `L_s`, `s = sigma + i b`, over random trigonometric test functions.
    pub fn lasota_yorke<R: Rng>(&self, eig: &EigenData, b: f64, trials: usize, max_n: usize, rng: &mut R) -> LasotaYorkeReport {
        let op = self.normalized(eig, b);
        let alpha = self.sys.alpha();
        let lambda = self.sys.measure(256).lambda;
        let mut per_n = vec![0.0f64; max_n];
        let max_freq = (b.abs() / (2.0 * core::f64::consts::PI)).max(4.0);
        for trial in 0..trials.max(1) {
            let v = if trial == 0 {
                GridFunction::constant(&self.grid, Complex64::new(1.0, 0.0))
            } else {
                random_trig(&self.grid, rng, max_freq, 6)
            };
            let nb = v.norm_b(alpha, b);
            let sup = v.sup_norm();
            let mut w = v.clone();
            for (n, slot) in per_n.iter_mut().enumerate() {
                w = op.apply(&w);
                let bound = lambda.powf(-alpha * (n + 1) as f64) * nb + sup;
                *slot = slot.max(w.norm_b(alpha, b) / bound);
            }
        }
        let max = per_n.iter().copied().fold(0.0, f64::max);
        let consistent = per_n.last().copied().unwrap_or(0.0) <= 10.0 * per_n[0];
        LasotaYorkeReport { b, per_n, max, consistent }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LasotaYorkeReport {
    pub b: f64,
    /// `C8(n)` for `n = 1, 2, ...`.
    pub per_n: Vec<f64>,
    pub max: f64,
    /// False when `C8(max_n) > 10 C8(1)`, which points at discretization
    /// breakdown.
    pub consistent: bool,
}

fn power_iteration<F: Fn(&[f64], &mut [f64])>(len: usize, op: F, probability: bool) -> Result<(f64, Vec<f64>, usize), OperatorError> {
    let mut v = vec![1.0; len];
    let mut w = vec![0.0; len];
    let mut spread = f64::INFINITY;
    for it in 1..=EIGEN_MAX_ITER {
        op(&v, &mut w);
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for (a, b) in w.iter().zip(&v) {
            if *b > 0.0 {
                let r = a / b;
                lo = lo.min(r);
                hi = hi.max(r);
            }
        }
        spread = (hi - lo) / hi;
        let scale = if probability { w.iter().sum::<f64>() } else { w.iter().copied().fold(0.0, f64::max) };
        for (a, b) in v.iter_mut().zip(&w) {
            *a = b / scale;
        }
        if spread < EIGEN_TOL {
            return Ok((0.5 * (lo + hi), v, it));
        }
    }
    Err(OperatorError::NoConvergence { iterations: EIGEN_MAX_ITER, spread })
}

impl TransferOperator {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn apply(&self, v: &GridFunction) -> GridFunction {
        GridFunction::new(self.grid.clone(), self.apply_slice(v.values()))
    }

    pub fn apply_n(&self, v: &GridFunction, n: usize) -> GridFunction {
        let mut out = v.values().to_vec();
        for _ in 0..n {
            out = self.apply_slice(&out);
        }
        GridFunction::new(self.grid.clone(), out)
    }

    #[inline]
    fn row(&self, v: &[Complex64], i: usize) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for e in self.offsets[i]..self.offsets[i + 1] {
            let k = self.src[e];
            acc += self.w0[e] * v[k] + self.w1[e] * v[k + 1];
        }
        acc
    }

    pub fn apply_slice(&self, v: &[Complex64]) -> Vec<Complex64> {
        let len = self.grid.len();
        if len >= PAR_THRESHOLD {
            crate::par_map(len, |i| self.row(v, i))
        } else {
            (0..len).map(|i| self.row(v, i)).collect()
        }
    }

    /// Apply the real part of the weights to a real vector. Exact for
    /// operators built at `b = 0`.
    pub fn apply_real(&self, v: &[f64]) -> Vec<f64> {
        (0..self.grid.len())
            .map(|i| {
                let mut acc = 0.0;
                for e in self.offsets[i]..self.offsets[i + 1] {
                    let k = self.src[e];
                    acc += self.w0[e].re * v[k] + self.w1[e].re * v[k + 1];
                }
                acc
            })
            .collect()
    }

    /// The operator with every weight replaced by its modulus.
    pub fn modulus(&self) -> TransferOperator {
        let abs = |w: &Vec<Complex64>| w.iter().map(|z| Complex64::new(z.norm(), 0.0)).collect();
        TransferOperator {
            grid: self.grid.clone(),
            offsets: self.offsets.clone(),
            src: self.src.clone(),
            w0: abs(&self.w0),
            w1: abs(&self.w1),
        }
    }
}

/// Random trigonometric polynomial with `modes` terms of frequency at most
/// `max_freq` (cycles per unit length) and unit sup norm.
pub fn random_trig<R: Rng>(grid: &Grid, rng: &mut R, max_freq: f64, modes: usize) -> GridFunction {
    let terms: Vec<(f64, f64, Complex64)> = (0..modes)
        .map(|_| {
            let k = rng.random_range(0.0..=max_freq).round();
            let phase = rng.random_range(0.0..core::f64::consts::TAU);
            let amp = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            (k, phase, amp)
        })
        .collect();
    let mut v = GridFunction::from_fn(grid, |_, x| {
        terms.iter().map(|(k, ph, a)| a * Complex64::from_polar(1.0, core::f64::consts::TAU * k * x + ph)).sum()
    });
    let s = v.sup_norm();
    if s > 0.0 {
        v.values_mut().iter_mut().for_each(|z| *z /= s);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn one(grid: &Grid) -> GridFunction {
        GridFunction::constant(grid, Complex64::new(1.0, 0.0))
    }

    #[test]
    fn apply_p_examples() {
        let d = Discretization::new(&presets::sys_a(), 256).unwrap();
        let p0 = d.apply_p(Complex64::new(0.0, 0.0), &one(d.grid()));
        assert!(p0.values().iter().all(|z| (z - 2.0).norm() < 1e-14));
        let p1 = d.apply_p(Complex64::new(1.0, 0.0), &one(d.grid()));
        let e = 2.0 * (-1.0f64).exp();
        assert!(p1.values().iter().all(|z| (z - e).norm() < 1e-14));

        let c = Discretization::new(&presets::sys_c(), 256).unwrap();
        let pc = c.apply_p(Complex64::new(0.0, 0.0), &one(c.grid()));
        assert!((pc.eval(0.9).re - 2.0).abs() < 1e-12);
        assert!((pc.eval(0.1).re - 2.0).abs() < 1e-12);
        assert!((pc.eval(0.5).re - 3.0).abs() < 1e-12);
    }

    #[test]
    fn eigendata_doubling() {
        let d = Discretization::new(&presets::sys_a(), DEFAULT_NODES).unwrap();
        let e0 = d.eigendata(0.0).unwrap();
        assert!((e0.lambda - 2.0).abs() < 1e-9);
        assert!(e0.f.values().iter().all(|z| (z.re - 1.0).abs() < 1e-8));
        let mu: f64 = e0.mu.iter().sum();
        assert!((mu - 1.0).abs() < 1e-12);
        let e1 = d.eigendata(1.0).unwrap();
        assert!((e1.lambda - 2.0 * (-1.0f64).exp()).abs() < 1e-9);
        let l1 = d.apply_l(&e0, 0.0, &one(d.grid()), 7);
        assert!(l1.values().iter().all(|z| (z - 1.0).norm() < 1e-8));
    }

    #[test]
    fn constant_roof_phase_cancels() {
        let d = Discretization::new(&presets::sys_a(), 128).unwrap();
        let e0 = d.eigendata(0.0).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let v = random_trig(d.grid(), &mut rng, 5.0, 4);
        let a = d.apply_l(&e0, 2.0 * core::f64::consts::PI, &v, 3);
        let b = d.apply_l(&e0, 0.0, &v, 3);
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn too_small_grid() {
        let d = Discretization::new(&presets::sys_a(), 16).unwrap();
        assert!(matches!(d.eigendata(0.0), Err(OperatorError::GridTooSmall { .. })));
    }

    #[test]
    fn lasota_yorke_doubling() {
        let d = Discretization::new(&presets::sys_a(), 256).unwrap();
        let e0 = d.eigendata(0.0).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let r = d.lasota_yorke(&e0, 0.0, 8, 8, &mut rng);
        assert!(r.max.is_finite() && r.max > 0.0);
        assert!(r.consistent);
        assert!(r.per_n[0] >= 1.0 / (0.5 + 1.0) - 1e-12);
    }
}
