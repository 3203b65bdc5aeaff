//! Branch-pair displacement functions, uniform non-integrability, cone
//! transversality, the sequences `a(n)` and `b(n)`, and the coboundary test.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{SystemError, UniError};
use crate::operator::EigenData;
use crate::system::{MarkovSystem, ValidationReport};

/// Default number of uniform points in the `y` grid of `a(n)` and `b(n)`.
pub const DEFAULT_Y_GRID: usize = 512;

/// Two admissible words with the same last symbol.
pub type WordPair = (Vec<usize>, Vec<usize>);

/// `max{2 C4 rho / (1 - 1/lambda), (1 - 1/lambda) C4}`.
pub fn c7(report: &ValidationReport) -> f64 {
    let k = 1.0 - 1.0 / report.lambda;
    (2.0 * report.c4 * report.rho / k).max(k * report.c4)
}

/// Closed slope interval `[lo, hi]` of the sector `{(a, c) : c/a in [lo, hi]}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeInterval {
    pub lo: f64,
    pub hi: f64,
}

impl ConeInterval {
    pub fn intersects(&self, other: &ConeInterval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    pub fn contains(&self, slope: f64) -> bool {
        self.lo <= slope && slope <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn within(&self, lo: f64, hi: f64) -> bool {
        lo <= self.lo && self.hi <= hi
    }

    /// Image of `[-c7, c7]` under the cocycle at a point with `D T^n = dt`
    /// and `D S_n r = dsr`.
    pub fn from_derivatives(c7: f64, dt: f64, dsr: f64) -> Self {
        let a = (-c7 - dsr) / dt;
        let b = (c7 - dsr) / dt;
        ConeInterval { lo: a.min(b), hi: a.max(b) }
    }
}

/// Image of the base cone under the depth-`n` cocycle at `x`.
pub fn cone_image(sys: &MarkovSystem, c7: f64, x: f64, n: usize) -> ConeInterval {
    let p = sys.forward(x, n);
    ConeInterval::from_derivatives(c7, p.dt, p.droof_sum)
}

/// True when the depth-`n` cone images at `x1` and `x2` are disjoint.
pub fn transversal(sys: &MarkovSystem, c7: f64, x1: f64, x2: f64, n: usize) -> Result<bool, UniError> {
    let (p1, p2) = (sys.forward(x1, n), sys.forward(x2, n));
    let gap = (p1.end - p2.end).abs();
    if !(gap <= 1e-9) {
        return Err(UniError::NotSiblings { gap });
    }
    let a = ConeInterval::from_derivatives(c7, p1.dt, p1.droof_sum);
    let b = ConeInterval::from_derivatives(c7, p2.dt, p2.droof_sum);
    Ok(!a.intersects(&b))
}

/// Cone interval at the preimage reached by an inverse branch: centre
/// `-D(S_n r o h)(y)`, half-width `c7 |Dh(y)|`.
#[inline]
fn preimage_cone(c7: f64, dh: f64, droof_sum: f64) -> ConeInterval {
    let half = c7 * dh.abs();
    ConeInterval { lo: -droof_sum - half, hi: -droof_sum + half }
}

/// `psi(y) = S_n r(h_first y) - S_n r(h_second y)` on the common domain.
#[derive(Debug, Clone)]
pub struct Psi<'a> {
    sys: &'a MarkovSystem,
    pub first: Vec<usize>,
    pub second: Vec<usize>,
    /// Half-open element range.
    pub domain: (usize, usize),
}

pub fn psi<'a>(sys: &'a MarkovSystem, first: &[usize], second: &[usize]) -> Result<Psi<'a>, UniError> {
    if first.len() != second.len() || first.is_empty() {
        return Err(UniError::Parameter(format!("words of lengths {} and {}", first.len(), second.len())));
    }
    let a = sys.inverse_branch(first)?.domain;
    let b = sys.inverse_branch(second)?.domain;
    let domain = (a.0.max(b.0), a.1.min(b.1));
    if domain.0 >= domain.1 {
        return Err(UniError::EmptyDomain);
    }
    Ok(Psi { sys, first: first.to_vec(), second: second.to_vec(), domain })
}

impl Psi<'_> {
    pub fn bounds(&self) -> (f64, f64) {
        (self.sys.breakpoints()[self.domain.0], self.sys.breakpoints()[self.domain.1])
    }

    pub fn eval(&self, y: f64) -> f64 {
        self.sys.eval_branch(&self.first, y).roof_sum - self.sys.eval_branch(&self.second, y).roof_sum
    }

    pub fn deriv(&self, y: f64) -> f64 {
        self.sys.eval_branch(&self.first, y).droof_sum - self.sys.eval_branch(&self.second, y).droof_sum
    }
}

/// Result of [`check_uni`].
#[derive(Debug, Clone, PartialEq)]
pub struct UniReport {
    pub depth: usize,
    pub radius: f64,
    /// Best `inf |D psi|` over pairs of full-domain branches; 0 if none.
    pub d_full: f64,
    /// `min_y max_pairs inf_{B(y,R) & Dom} |D psi|`.
    pub d_point: f64,
    /// Per grid point: `(y, best value, witnessing pair)`.
    pub witnesses: Vec<(f64, f64, Option<WordPair>)>,
}

/// Per-word table of `D(S_n r o h_w)` on `per_element` points of each
/// element of the word's domain.
struct DerivTable {
    words: Vec<Vec<usize>>,
    domains: Vec<(usize, usize)>,
    /// `values[w][e * per_element + k]`, NaN outside the domain.
    values: Vec<Vec<f64>>,
    points: Vec<f64>,
    elements: Vec<usize>,
}

impl DerivTable {
    fn new(sys: &MarkovSystem, n: usize, per_element: usize, cap: u64) -> Result<Self, SystemError> {
        let count = sys.word_count(n);
        if count > cap {
            return Err(SystemError::CapExceeded { count, cap });
        }
        let m = sys.elements();
        let mut points = Vec::with_capacity(m * per_element);
        let mut elements = Vec::with_capacity(m * per_element);
        for e in 0..m {
            let (a, b) = sys.bounds(e);
            for k in 0..per_element {
                points.push(a + (b - a) * k as f64 / (per_element - 1) as f64);
                elements.push(e);
            }
        }
        let mut words = Vec::new();
        sys.collect_words(n, &mut Vec::new(), &mut |w| words.push(w.to_vec()));
        let domains: Vec<(usize, usize)> = words.iter().map(|w| sys.image(*w.last().unwrap())).collect();
        let values = crate::par_map(words.len(), |i| {
            let (lo, hi) = domains[i];
            points
                .iter()
                .zip(&elements)
                .map(|(&y, &e)| if e >= lo && e < hi { sys.eval_branch(&words[i], y).droof_sum } else { f64::NAN })
                .collect()
        });
        Ok(DerivTable { words, domains, values, points, elements })
    }
}

/// Full-branch and pointwise UNI constants at depth `n` with ball radius
/// `radius`, on `per_element` points per element.
pub fn check_uni(sys: &MarkovSystem, n: usize, radius: f64, per_element: usize, cap: u64) -> Result<UniReport, UniError> {
    let table = DerivTable::new(sys, n, per_element.max(2), cap)?;
    let m = sys.elements();
    let nw = table.words.len();
    let npts = table.points.len();
    let mut d_full: f64 = 0.0;
    for i in 0..nw {
        if table.domains[i] != (0, m) {
            continue;
        }
        for j in i + 1..nw {
            if table.domains[j] != (0, m) {
                continue;
            }
            let inf = (0..npts).map(|k| (table.values[i][k] - table.values[j][k]).abs()).fold(f64::INFINITY, f64::min);
            d_full = d_full.max(inf);
        }
    }
    let witnesses = crate::par_map(npts, |k| {
        let y = table.points[k];
        let ey = table.elements[k];
        let ball: Vec<usize> = (0..npts).filter(|&q| (table.points[q] - y).abs() <= radius).collect();
        let mut best = 0.0f64;
        let mut pair = None;
        for i in 0..nw {
            let di = table.domains[i];
            if !(di.0 <= ey && ey < di.1) {
                continue;
            }
            for j in i + 1..nw {
                let dj = table.domains[j];
                if !(dj.0 <= ey && ey < dj.1) {
                    continue;
                }
                let mut inf = f64::INFINITY;
                for &q in &ball {
                    let (a, b) = (table.values[i][q], table.values[j][q]);
                    if a.is_nan() || b.is_nan() {
                        continue;
                    }
                    inf = inf.min((a - b).abs());
                }
                if inf.is_finite() && inf > best {
                    best = inf;
                    pair = Some((table.words[i].clone(), table.words[j].clone()));
                }
            }
        }
        (y, best, pair)
    });
    let d_point = witnesses.iter().map(|w| w.1).fold(f64::INFINITY, f64::min);
    Ok(UniReport { depth: n, radius, d_full, d_point, witnesses })
}

/// `a(n)` and `b(n)` for `n = 1..=n_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrichotomySequences {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Number of `y` points used at each depth.
    pub points: Vec<usize>,
}

/// Sup over `y` of the non-transversal preimage mass `a(n, y)` and of the
/// best line-stabbing mass `b(n, y)`. Weights
/// `lambda^{-n} e^{S_n phi(x)} f(x) / f(y)` are normalized to sum to one at
/// each `y`. The `y` grid is `grid` uniform points plus the midpoints of
/// depth-`n` cylinders.
pub fn ab_sequences(
    sys: &MarkovSystem,
    eig0: &EigenData,
    c7: f64,
    n_max: usize,
    grid: usize,
    cap: u64,
) -> Result<TrichotomySequences, UniError> {
    let mut a = Vec::with_capacity(n_max);
    let mut b = Vec::with_capacity(n_max);
    let mut points = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let mut ys: Vec<f64> = (0..grid).map(|k| (k as f64 + 0.5) / grid as f64).collect();
        ys.extend(sys.cylinders(n, cap)?.iter().map(|c| c.midpoint()));
        let vals = crate::par_map(ys.len(), |k| ab_at(sys, eig0, c7, n, ys[k]));
        a.push(vals.iter().map(|v| v.0).fold(0.0, f64::max));
        b.push(vals.iter().map(|v| v.1).fold(0.0, f64::max));
        points.push(ys.len());
    }
    Ok(TrichotomySequences { a, b, points })
}

/// `(a(n, y), b(n, y))`.
pub fn ab_at(sys: &MarkovSystem, eig0: &EigenData, c7: f64, n: usize, y: f64) -> (f64, f64) {
    let (cones, weights) = preimage_cones(sys, eig0, c7, n, y);
    (non_transversal_mass(&cones, &weights), stabbing_mass(&cones, &weights))
}

fn preimage_cones(sys: &MarkovSystem, eig0: &EigenData, c7: f64, n: usize, y: f64) -> (Vec<ConeInterval>, Vec<f64>) {
    let ey = sys.element_of(y);
    let mut cones = Vec::new();
    let mut weights = Vec::new();
    sys.for_each_preimage(y, ey, n, |p| {
        cones.push(preimage_cone(c7, p.dh, p.droof_sum));
        weights.push(p.potential_sum.exp() * eig0.f.eval_in(p.word[0], p.x).re);
    });
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    (cones, weights)
}

/// `max_{x0} sum_{x : I_x meets I_x0} w_x` via sorted prefix sums.
fn non_transversal_mass(cones: &[ConeInterval], weights: &[f64]) -> f64 {
    let k = cones.len();
    let mut by_lo: Vec<usize> = (0..k).collect();
    by_lo.sort_by(|&i, &j| cones[i].lo.total_cmp(&cones[j].lo));
    let mut by_hi: Vec<usize> = (0..k).collect();
    by_hi.sort_by(|&i, &j| cones[i].hi.total_cmp(&cones[j].hi));
    let prefix = |order: &[usize]| {
        let mut acc = vec![0.0; k + 1];
        for (i, &idx) in order.iter().enumerate() {
            acc[i + 1] = acc[i] + weights[idx];
        }
        acc
    };
    let lo_sum = prefix(&by_lo);
    let hi_sum = prefix(&by_hi);
    let los: Vec<f64> = by_lo.iter().map(|&i| cones[i].lo).collect();
    let his: Vec<f64> = by_hi.iter().map(|&i| cones[i].hi).collect();
    let mut best: f64 = 0.0;
    for c in cones {
        // intervals with lo <= c.hi, minus those with hi < c.lo
        let started = los.partition_point(|&v| v <= c.hi);
        let ended = his.partition_point(|&v| v < c.lo);
        best = best.max(lo_sum[started] - hi_sum[ended]);
    }
    best
}

/// `max_p sum_{x : p in I_x} w_x` by an endpoint sweep; openings sort
/// before closings at equal positions.
fn stabbing_mass(cones: &[ConeInterval], weights: &[f64]) -> f64 {
    let mut events: Vec<(f64, u8, f64)> = Vec::with_capacity(2 * cones.len());
    for (c, &w) in cones.iter().zip(weights) {
        events.push((c.lo, 0, w));
        events.push((c.hi, 1, -w));
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut cur = 0.0;
    let mut best: f64 = 0.0;
    for (_, _, w) in events {
        cur += w;
        best = best.max(cur);
    }
    best
}

/// A transversal pair of depth-`n` preimages of `y`, as words, if any.
pub fn transversal_pair(sys: &MarkovSystem, c7: f64, n: usize, y: f64) -> Option<WordPair> {
    let mut found: Vec<(Vec<usize>, ConeInterval)> = Vec::new();
    sys.for_each_preimage(y, sys.element_of(y), n, |p| {
        found.push((p.word.to_vec(), preimage_cone(c7, p.dh, p.droof_sum)));
    });
    // the extreme cones are the best candidates
    let lowest = found.iter().min_by(|a, b| a.1.hi.total_cmp(&b.1.hi))?;
    let highest = found.iter().max_by(|a, b| a.1.lo.total_cmp(&b.1.lo))?;
    if lowest.1.intersects(&highest.1) {
        None
    } else {
        Some((lowest.0.clone(), highest.0.clone()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoboundaryReport {
    pub truncation: usize,
    /// `C4 lambda^{-J} / (1 - 1/lambda)`.
    pub tail_bound: f64,
    /// `max_i osc_{P_i} (r - theta o T + theta)`.
    pub residual: f64,
    pub cohomologous: bool,
    /// Per-element means of `r - theta o T + theta`.
    pub constants: Vec<f64>,
    /// `max_i osc_{P_i}(theta_low - theta_high)` between the lowest-index
    /// and highest-index chains.
    pub chain_difference: f64,
}

/// Telescoping transfer function along a fixed backward chain.
struct Theta<'a> {
    sys: &'a MarkovSystem,
    /// `next[i]`: branch taken from element `i`.
    next: Vec<usize>,
    truncation: usize,
    reference: Vec<f64>,
    offset: Vec<f64>,
}

impl<'a> Theta<'a> {
    fn new(sys: &'a MarkovSystem, truncation: usize, lowest: bool) -> Self {
        let m = sys.elements();
        let next: Vec<usize> = (0..m)
            .map(|i| {
                let mut admissible = (0..m).filter(|&j| sys.admits(j, i));
                if lowest {
                    admissible.next().expect("covering")
                } else {
                    admissible.next_back().expect("covering")
                }
            })
            .collect();
        let reference: Vec<f64> = (0..m)
            .map(|i| {
                let (a, b) = sys.bounds(i);
                0.5 * (a + b)
            })
            .collect();
        let mut theta = Theta { sys, next, truncation, reference, offset: vec![0.0; m] };
        theta.align();
        theta
    }

    fn raw(&self, elem: usize, y: f64) -> f64 {
        let r = self.sys.roof();
        let (mut p, mut q) = (y, self.reference[elem]);
        let mut e = elem;
        let mut acc = 0.0;
        for _ in 0..self.truncation {
            let j = self.next[e];
            p = self.sys.inverse(j, p);
            q = self.sys.inverse(j, q);
            acc += r.eval(j, p) - r.eval(j, q);
            e = j;
        }
        acc
    }

    fn eval(&self, elem: usize, y: f64) -> f64 {
        self.raw(elem, y) + self.offset[elem]
    }

    /// Make theta continuous at breakpoints interior to some branch image.
    fn align(&mut self) {
        let m = self.sys.elements();
        let bp = self.sys.breakpoints();
        for k in 1..m {
            let interior = (0..m).any(|j| {
                let (lo, hi) = self.sys.image(j);
                lo < k && k < hi
            });
            if interior {
                let left = self.eval(k - 1, bp[k]);
                let right = self.raw(k, bp[k]);
                self.offset[k] = left - right;
            }
        }
    }
}

/// Build `theta` by truncated telescoping sums along the lowest-index
/// backward chain and test whether `r - theta o T + theta` is constant on
/// each element, using `grid` interior points per element.
pub fn coboundary_test(
    sys: &MarkovSystem,
    report: &ValidationReport,
    truncation: usize,
    tol: f64,
    grid: usize,
) -> Result<CoboundaryReport, UniError> {
    if truncation == 0 {
        return Err(UniError::Parameter("truncation must be at least 1".into()));
    }
    let low = Theta::new(sys, truncation, true);
    let high = Theta::new(sys, truncation, false);
    let m = sys.elements();
    let mut residual: f64 = 0.0;
    let mut constants = Vec::with_capacity(m);
    let mut chain_difference: f64 = 0.0;
    for j in 0..m {
        let (a, b) = sys.bounds(j);
        let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        let (mut dlo, mut dhi) = (f64::INFINITY, f64::NEG_INFINITY);
        for k in 0..grid {
            let x = a + (b - a) * (k as f64 + 0.5) / grid as f64;
            let tx = sys.map(j, x).clamp(0.0, 1.0);
            let et = sys.element_of(tx);
            let v = sys.roof().eval(j, x) - low.eval(et, tx) + low.eval(j, x);
            lo = lo.min(v);
            hi = hi.max(v);
            sum += v;
            let d = low.eval(j, x) - high.eval(j, x);
            dlo = dlo.min(d);
            dhi = dhi.max(d);
        }
        residual = residual.max(hi - lo);
        constants.push(sum / grid as f64);
        chain_difference = chain_difference.max(dhi - dlo);
    }
    let lambda = report.lambda;
    let tail_bound = report.c4 * lambda.powi(-(truncation as i32)) / (1.0 - 1.0 / lambda);
    Ok(CoboundaryReport { truncation, tail_bound, residual, cohomologous: residual < tol, constants, chain_difference })
}

/// Parameters derived for the transversality-to-UNI check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WuniParameters {
    pub delta: f64,
    pub b: f64,
    pub head: usize,
    pub tail: usize,
    /// `4 pi / (C7 delta)`.
    pub scale: f64,
    /// `(C7/2) rho^{-tail}`.
    pub bound: f64,
}

impl WuniParameters {
    pub fn new(c7: f64, rho: f64, delta: f64, b: f64, beta: f64, min_tail: usize) -> Result<Self, UniError> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(UniError::Parameter(format!("delta {} outside (0, 1)", delta)));
        }
        if !(c7 > 0.0) {
            return Err(UniError::Parameter("C7 vanishes; the roof has no derivative".into()));
        }
        let tail = ((1.0 / delta).ln() / rho.ln()).floor() as usize;
        if tail < min_tail.max(1) {
            return Err(UniError::Parameter(format!("tail depth {} below the required {}", tail, min_tail.max(1))));
        }
        let head = (beta * b.abs().ln()).floor().max(0.0) as usize;
        Ok(WuniParameters {
            delta,
            b,
            head,
            tail,
            scale: 4.0 * core::f64::consts::PI / (c7 * delta),
            bound: 0.5 * c7 * rho.powi(-(tail as i32)),
        })
    }

    pub fn depth(&self) -> usize {
        self.head + self.tail
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WuniReport {
    pub params: WuniParameters,
    /// Points with a transversal tail pair.
    pub covered: usize,
    /// Points without one.
    pub missing: Vec<f64>,
    /// Fraction of covered points where `|D psi| >= D` on the whole ball.
    pub pass_rate: f64,
    /// `min (|D psi| - D)` over covered points and their balls.
    pub worst_margin: f64,
}

/// At each of `points` values of `y`, look for transversal depth-`tail`
/// siblings, extend them by the lowest admissible heads, and check
/// `|D psi| >= D` on `ball_points` points of `B(y, scale/|b|) & Dom`.
pub fn uni_from_transversality(sys: &MarkovSystem, c7: f64, params: WuniParameters, points: usize, ball_points: usize) -> WuniReport {
    let radius = params.scale / params.b.abs();
    let results = crate::par_map(points, |k| {
        let y = (k as f64 + 0.5) / points as f64;
        let (t1, t2) = transversal_pair(sys, c7, params.tail, y)?;
        let w1 = with_head(sys, &t1, params.head);
        let w2 = with_head(sys, &t2, params.head);
        let pair = psi(sys, &w1, &w2).ok()?;
        let (lo, hi) = pair.bounds();
        let (a, b) = ((y - radius).max(lo), (y + radius).min(hi));
        let mut worst = f64::INFINITY;
        for q in 0..ball_points {
            let z = a + (b - a) * q as f64 / (ball_points - 1).max(1) as f64;
            worst = worst.min(pair.deriv(z).abs() - params.bound);
        }
        Some(worst)
    });
    let mut missing = Vec::new();
    let mut covered = 0;
    let mut passed = 0;
    let mut worst_margin = f64::INFINITY;
    for (k, r) in results.iter().enumerate() {
        match r {
            None => missing.push((k as f64 + 0.5) / points as f64),
            Some(m) => {
                covered += 1;
                if *m >= 0.0 {
                    passed += 1;
                }
                worst_margin = worst_margin.min(*m);
            }
        }
    }
    let pass_rate = if covered == 0 { 0.0 } else { passed as f64 / covered as f64 };
    WuniReport { params, covered, missing, pass_rate, worst_margin }
}

/// Prefix `tail` (a backward word) with the lowest-index admissible head of
/// length `head`.
pub fn with_head(sys: &MarkovSystem, tail: &[usize], head: usize) -> Vec<usize> {
    let mut prefix = Vec::with_capacity(head);
    let mut first = tail[0];
    for _ in 0..head {
        let j = (0..sys.elements()).find(|&j| sys.admits(j, first)).expect("covering");
        prefix.push(j);
        first = j;
    }
    prefix.reverse();
    prefix.extend_from_slice(tail);
    prefix
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::Discretization;
    use crate::presets;
    use crate::system::DEFAULT_CAP;
    use core::f64::consts::PI;

    #[test]
    fn c7_values() {
        assert_eq!(c7(&presets::sys_a().validate(2048).unwrap()), 0.0);
        let b = c7(&presets::sys_b().validate(2048).unwrap());
        assert!((b - 8.0 * PI / 3.0).abs() < 1e-5);
    }

    #[test]
    fn psi_examples() {
        let a = presets::sys_a();
        let p = psi(&a, &[0, 1], &[1, 0]).unwrap();
        assert_eq!(p.eval(0.3), 0.0);
        let same = psi(&a, &[0, 1], &[0, 1]).unwrap();
        assert_eq!(same.deriv(0.7), 0.0);

        let b = presets::sys_b();
        let p = psi(&b, &[0], &[1]).unwrap();
        assert!(p.eval(0.5).abs() < 1e-15);
        let h = 1e-5;
        let fd = (p.eval(0.5 + h) - p.eval(0.5 - h)) / (2.0 * h);
        assert!((p.deriv(0.5) - fd).abs() < 1e-6 * (1.0 + fd.abs()));
        let q = psi(&b, &[1], &[0]).unwrap();
        assert_eq!(p.eval(0.2), -q.eval(0.2));

        let c = presets::sys_c();
        // [2] has domain [0, 2/3), [1] has [1/3, 1)
        let p = psi(&c, &[2], &[1]).unwrap();
        assert_eq!(p.domain, (1, 2));
    }

    #[test]
    fn cones_for_constant_roof_are_lines() {
        let a = presets::sys_a();
        let c = cone_image(&a, 0.0, 0.3, 5);
        assert_eq!((c.lo, c.hi), (0.0, 0.0));
        assert!(!transversal(&a, 0.0, 0.1, 0.6, 1).unwrap());
        assert!(matches!(transversal(&a, 0.0, 0.1, 0.2, 1), Err(UniError::NotSiblings { .. })));
    }

    #[test]
    fn interval_masses() {
        let cones = [ConeInterval { lo: 0.0, hi: 1.0 }, ConeInterval { lo: 1.0, hi: 2.0 }, ConeInterval { lo: 3.0, hi: 4.0 }];
        let w = [0.25, 0.25, 0.5];
        assert_eq!(non_transversal_mass(&cones, &w), 0.5);
        assert_eq!(stabbing_mass(&cones, &w), 0.5);
        let w = [0.4, 0.4, 0.2];
        assert_eq!(non_transversal_mass(&cones, &w), 0.8);
        assert_eq!(stabbing_mass(&cones, &w), 0.8);
    }

    #[test]
    fn rigid_systems_have_unit_sequences() {
        for sys in [presets::sys_a(), presets::doubling_linear_roof()] {
            let rep = sys.validate(2048).unwrap();
            let k = c7(&rep);
            let e = Discretization::new(&sys, 256).unwrap().eigendata(0.0).unwrap();
            let s = ab_sequences(&sys, &e, k, 5, 64, DEFAULT_CAP).unwrap();
            for (a, b) in s.a.iter().zip(&s.b) {
                assert!((a - 1.0).abs() < 1e-9 && (b - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn coboundary_linear_roof() {
        let sys = presets::doubling_linear_roof();
        let rep = sys.validate(2048).unwrap();
        let c = coboundary_test(&sys, &rep, 40, 1e-6, 128).unwrap();
        assert!(c.cohomologous, "{:?}", c);
        // chi differs by 1/2 between the two elements; the common level is free
        assert!((c.constants[0] - c.constants[1] - 0.5).abs() < 1e-9);

        let a = presets::sys_a();
        let c = coboundary_test(&a, &a.validate(256).unwrap(), 20, 1e-6, 64).unwrap();
        assert!(c.cohomologous && c.residual == 0.0);
        assert!(c.constants.iter().all(|&v| v == 1.0));

        let b = presets::sys_b();
        let c = coboundary_test(&b, &b.validate(2048).unwrap(), 20, 1e-6, 64).unwrap();
        assert!(!c.cohomologous && c.residual > 1e-5);
    }
}
