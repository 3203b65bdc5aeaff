//! Oscillatory cancellation: the cone of pairs `(u, v)`, bump functions,
//! the iterated cone contraction, and the `L^1` and `(b)`-norm contraction
//! sweeps.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::DolgopyatError;
use crate::gibbs::{adapted_partition, AdaptedPartition};
use crate::grid::{hoelder_seminorm_by, Grid, GridFunction};
use crate::operator::{random_trig, Discretization, EigenData};
use crate::system::{MarkovSystem, ValidationReport};
use crate::uni::{transversal_pair, with_head, WuniParameters};

/// `(sqrt 7 - 1)/2`.
pub const ETA0: f64 = 0.822_875_655_532_295_3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum C0Variant {
    /// `4 |1/f|_inf |f|_a + 2(|phi|_a + |r|_a)(1 - lambda^{-a})`.
    #[default]
    Printed,
    /// Same with the last factor dividing instead of multiplying.
    Divided,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct C0Report {
    pub printed: f64,
    pub divided: f64,
    pub variant: C0Variant,
    pub floor: f64,
    /// `max(chosen variant, floor)`.
    pub value: f64,
    pub floored: bool,
}

/// Cone constant from the eigenfunction `f` at `sigma = 0`, the potential
/// and the roof.
pub fn c0(disc: &Discretization, eig0: &EigenData, lambda: f64, variant: C0Variant, floor: f64) -> C0Report {
    let sys = disc.system();
    let a = sys.alpha();
    let grid = disc.grid();
    let f_semi = eig0.f.hoelder_seminorm(a);
    let inv_f_sup = 1.0 / eig0.f_inf();
    let phi = GridFunction::from_real(grid, |e, x| sys.potential().eval(e, x)).hoelder_seminorm(a);
    let r = GridFunction::from_real(grid, |e, x| sys.roof().eval(e, x)).hoelder_seminorm(a);
    let k = 1.0 - lambda.powf(-a);
    let base = 4.0 * inv_f_sup * f_semi;
    let printed = base + 2.0 * (phi + r) * k;
    let divided = base + 2.0 * (phi + r) / k;
    let chosen = match variant {
        C0Variant::Printed => printed,
        C0Variant::Divided => divided,
    };
    C0Report { printed, divided, variant, floor, value: chosen.max(floor), floored: chosen < floor }
}

/// Refuse `delta` unless `C0 delta^a < 1/6`, `(2/3) e^{C0 delta^a} < eta0`
/// and `C7 delta < pi/6`.
pub fn check_gates(c0: f64, c7: f64, alpha: f64, delta: f64) -> Result<(), DolgopyatError> {
    let d = c0 * delta.powf(alpha);
    if !(d < 1.0 / 6.0) {
        return Err(DolgopyatError::Gate(format!("C0 delta^alpha = {} is not below 1/6", d)));
    }
    if !(2.0 / 3.0 * d.exp() < ETA0) {
        return Err(DolgopyatError::Gate(format!("(2/3) exp(C0 delta^alpha) = {} is not below eta0", 2.0 / 3.0 * d.exp())));
    }
    if !(c7 * delta < core::f64::consts::PI / 6.0) {
        return Err(DolgopyatError::Gate(format!("C7 delta = {} is not below pi/6", c7 * delta)));
    }
    Ok(())
}

/// Refuse `b` unless `lambda^{a floor(beta log b)/16} <= C0 |b|^a`.
pub fn check_beta(lambda: f64, alpha: f64, beta: f64, c0: f64, b: f64) -> Result<(), DolgopyatError> {
    let k = (beta * b.abs().ln()).floor();
    let lhs = lambda.powf(alpha * k / 16.0);
    let rhs = c0 * b.abs().powf(alpha);
    if lhs <= rhs {
        Ok(())
    } else {
        Err(DolgopyatError::Gate(format!("lambda^(alpha k/16) = {} exceeds C0 |b|^alpha = {} at b = {}", lhs, rhs, b)))
    }
}

/// Worst relative margins of the cone conditions; non-negative means inside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeMargins {
    pub min_u: f64,
    /// `min (u - |v|)/u`.
    pub modulus: f64,
    /// `1 - |log u|_a / (C0 |b|^a)`.
    pub log_u: f64,
    /// `1 - max |v(x) - v(y)| / (C0 |b|^a min(u(x), u(y)) d^a) `.
    pub v_hoelder: f64,
}

impl ConeMargins {
    pub fn holds(&self, tol: f64) -> bool {
        self.min_u > 0.0 && self.worst() >= -tol
    }

    pub fn worst(&self) -> f64 {
        self.modulus.min(self.log_u).min(self.v_hoelder)
    }
}

/// Check `(u, v)` against the cone with constant `c0` at frequency `b`.
pub fn cone_margins(grid: &Grid, u: &[f64], v: &[Complex64], alpha: f64, c0: f64, b: f64) -> ConeMargins {
    let bound = c0 * b.abs().powf(alpha);
    let min_u = u.iter().copied().fold(f64::INFINITY, f64::min);
    let modulus = u.iter().zip(v).map(|(a, z)| (a - z.norm()) / a).fold(f64::INFINITY, f64::min);
    let log_semi = if min_u > 0.0 { hoelder_seminorm_by(grid, alpha, |i, j| (u[i].ln() - u[j].ln()).abs()) } else { f64::INFINITY };
    let v_semi = hoelder_seminorm_by(grid, alpha, |i, j| (v[i] - v[j]).norm() / u[i].min(u[j]));
    ConeMargins { min_u, modulus, log_u: 1.0 - log_semi / bound, v_hoelder: 1.0 - v_semi / bound }
}

/// `min(u - |v|)`: the slack in `|L^n_s v| <= L^n_sigma(chi u)` once both
/// sides are computed.
pub fn cancellation_margin(u: &[f64], v: &[Complex64]) -> f64 {
    u.iter().zip(v).map(|(a, z)| a - z.norm()).fold(f64::INFINITY, f64::min)
}

/// One factor of the bump function, in the coordinates of the branch domain:
/// equal to `eta` on `B(center, inner)`, 1 off `B(center, outer)`, with a
/// smoothstep in between. On the image of the winning branch the bump is
/// `chi(y) = factor(T^n y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bump {
    pub word: Vec<usize>,
    pub center: f64,
    pub inner: f64,
    pub outer: f64,
    pub eta: f64,
}

impl Bump {
    pub fn factor(&self, x: f64) -> f64 {
        1.0 - (1.0 - self.eta) * self.profile(x)
    }

    fn profile(&self, x: f64) -> f64 {
        let d = (x - self.center).abs();
        if d <= self.inner {
            1.0
        } else if d >= self.outer {
            0.0
        } else {
            let t = (self.outer - d) / (self.outer - self.inner);
            t * t * (3.0 - 2.0 * t)
        }
    }

    fn profile_slope(&self, x: f64) -> f64 {
        let d = (x - self.center).abs();
        if d <= self.inner || d >= self.outer {
            0.0
        } else {
            let w = self.outer - self.inner;
            let t = (self.outer - d) / w;
            6.0 * t * (1.0 - t) / w
        }
    }

    /// `(min chi, max |chi'|)` on `points` points of the support in the
    /// variable `y = h_word(x)`.
    pub fn audit(&self, sys: &MarkovSystem, points: usize) -> (f64, f64) {
        let mut min_chi: f64 = 1.0;
        let mut max_slope: f64 = 0.0;
        for k in 0..points {
            let x = self.center - self.outer + 2.0 * self.outer * k as f64 / (points - 1) as f64;
            let p = sys.eval_branch(&self.word, x.clamp(0.0, 1.0));
            min_chi = min_chi.min(self.factor(x));
            // chi'(y) = factor'(x) / Dh(x)
            max_slope = max_slope.max((1.0 - self.eta) * self.profile_slope(x) / p.dt.abs());
        }
        (min_chi, max_slope)
    }
}

/// Which of the two branches of a witness pair carries the reduction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    /// The first branch wins: `|..| <= eta0 A u + A' u'`.
    First,
    /// The second branch wins.
    Second,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub cell: usize,
    pub first: Vec<usize>,
    pub second: Vec<usize>,
    pub center: f64,
    pub case: Case,
    /// Relative slack of the winning case on `B(center, delta/|b|)`.
    pub margin: f64,
}

/// Parameters of the cancellation construction at one frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct CancellationParams {
    pub sigma: f64,
    pub b: f64,
    pub delta: f64,
    pub c0: f64,
    pub c7: f64,
    pub wuni: WuniParameters,
    /// `rho^{-n}`.
    pub contraction: f64,
    /// `1 - delta M / 4.5`, so that `|chi'| <= |b|`.
    pub eta: f64,
    pub partition: AdaptedPartition,
    /// Nodes per element of the fine grid.
    pub nodes: usize,
}

impl CancellationParams {
    /// `beta` sets the head depth `floor(beta log |b|)`; `grid_factor` sets
    /// the fine grid to `grid_factor |b| |P_i| / delta` nodes per element.
    pub fn new(
        sys: &MarkovSystem,
        report: &ValidationReport,
        sigma: f64,
        b: f64,
        delta: f64,
        beta: f64,
        c0: f64,
        c7: f64,
        min_tail: usize,
        grid_factor: f64,
    ) -> Result<Self, DolgopyatError> {
        if c7 == 0.0 {
            // constant roof: no pair of branches can ever be transversal
            let (left, right) = (sys.breakpoints()[0], *sys.breakpoints().last().unwrap());
            return Err(DolgopyatError::NoCancellationWitness { element: 0, left, right });
        }
        check_gates(c0, c7, sys.alpha(), delta)?;
        let wuni = WuniParameters::new(c7, report.rho, delta, b, beta, min_tail)?;
        let contraction = report.rho.powi(-(wuni.depth() as i32));
        let eta = 1.0 - delta * contraction / 4.5;
        if eta < ETA0 {
            return Err(DolgopyatError::Gate(format!("eta = {} below eta0", eta)));
        }
        let partition = adapted_partition(sys, b, wuni.scale)?;
        let widest = (0..sys.elements()).map(|i| sys.bounds(i)).map(|(a, c)| c - a).fold(0.0, f64::max);
        let nodes = ((grid_factor * b.abs() * widest / delta).ceil() as usize).max(64);
        Ok(CancellationParams { sigma, b, delta, c0, c7, wuni, contraction, eta, partition, nodes })
    }

    pub fn depth(&self) -> usize {
        self.wuni.depth()
    }
}
/// `L^n_s` on a grid, assembled once by enumerating the depth-`n` preimages
/// of every node. Weights are normalized to sum to one in every row so that
/// the discrete operator is exactly Markov at `b = 0`.
pub struct DepthOperator<'a> {
    sys: &'a MarkovSystem,
    eig: &'a EigenData,
    grid: Grid,
    b: f64,
    /// Row `i` occupies `offsets[i]..offsets[i + 1]` of `leaves`.
    offsets: Vec<usize>,
    leaves: Vec<Leaf>,
}

const CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy)]
struct Leaf {
    src: u32,
    /// Branch word in base `elements`, first symbol least significant.
    word: u64,
    t: f64,
    weight: f64,
    /// `weight e^{-i b S_n r}`.
    twisted: Complex64,
}

fn word_code(word: &[usize], base: usize) -> u64 {
    word.iter().rev().fold(0u64, |acc, &j| acc * base as u64 + j as u64)
}

impl<'a> DepthOperator<'a> {
    pub fn new(sys: &'a MarkovSystem, eig: &'a EigenData, depth: usize, b: f64, nodes: usize) -> Result<Self, DolgopyatError> {
        let grid = Grid::for_system(sys, nodes)?;
        let len = grid.len();
        let base = sys.elements();
        let sigma = eig.sigma;
        let rows = crate::par_map(len.div_ceil(CHUNK), |c| {
            let mut out: Vec<Vec<Leaf>> = Vec::with_capacity(CHUNK);
            for i in c * CHUNK..((c + 1) * CHUNK).min(len) {
                let x = grid.node(i);
                let e = grid.element_of_index(i);
                let mut row = Vec::new();
                let mut total = 0.0;
                sys.for_each_preimage(x, e, depth, |p| {
                    let j = p.word[0];
                    let (src, t) = grid.locate(j, p.x);
                    let w = (p.potential_sum - sigma * p.roof_sum).exp() * eig.f.eval_linear(j, p.x).re;
                    total += w;
                    row.push(Leaf {
                        src: src as u32,
                        word: word_code(p.word, base),
                        t,
                        weight: w,
                        twisted: Complex64::from_polar(1.0, -b * p.roof_sum),
                    });
                });
                for leaf in &mut row {
                    leaf.weight /= total;
                    leaf.twisted *= leaf.weight;
                }
                out.push(row);
            }
            out
        });
        let mut offsets = Vec::with_capacity(len + 1);
        let mut leaves = Vec::new();
        offsets.push(0);
        for row in rows.into_iter().flatten() {
            leaves.extend(row);
            offsets.push(leaves.len());
        }
        Ok(DepthOperator { sys, eig, grid, b, offsets, leaves })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn row(&self, i: usize) -> &[Leaf] {
        &self.leaves[self.offsets[i]..self.offsets[i + 1]]
    }

    /// `(L^n_sigma(chi u), L^n_s v)` with `chi` given by `bumps`.
    pub fn apply(&self, u: &[f64], v: &[Complex64], bumps: &[Bump]) -> (Vec<f64>, Vec<Complex64>) {
        let len = self.grid.len();
        let base = self.sys.elements();
        let codes: Vec<u64> = bumps.iter().map(|bp| word_code(&bp.word, base)).collect();
        let parts = crate::par_map(len.div_ceil(CHUNK), |c| {
            let range = c * CHUNK..((c + 1) * CHUNK).min(len);
            let mut us = Vec::with_capacity(range.len());
            let mut vs = Vec::with_capacity(range.len());
            for i in range {
                let x = self.grid.node(i);
                let near: Vec<usize> = (0..bumps.len()).filter(|&k| (x - bumps[k].center).abs() < bumps[k].outer).collect();
                let mut acc_u = 0.0;
                let mut acc_v = Complex64::new(0.0, 0.0);
                for l in self.row(i) {
                    let s = l.src as usize;
                    let uu = (1.0 - l.t) * u[s] + l.t * u[s + 1];
                    let vv = v[s] * (1.0 - l.t) + v[s + 1] * l.t;
                    let chi = near.iter().find(|&&k| codes[k] == l.word).map_or(1.0, |&k| bumps[k].factor(x));
                    acc_u += l.weight * chi * uu;
                    acc_v += l.twisted * vv;
                }
                us.push(acc_u);
                vs.push(acc_v);
            }
            (us, vs)
        });
        let mut u_out = Vec::with_capacity(len);
        let mut v_out = Vec::with_capacity(len);
        for (a, b) in parts {
            u_out.extend(a);
            v_out.extend(b);
        }
        (u_out, v_out)
    }

    /// Stationary probability vector of the row-normalized real operator.
    pub fn stationary(&self, max_iter: usize, tol: f64) -> Vec<f64> {
        let len = self.grid.len();
        let mut mu = vec![1.0 / len as f64; len];
        for _ in 0..max_iter {
            let mut next = vec![0.0; len];
            for (i, &m) in mu.iter().enumerate() {
                for l in self.row(i) {
                    let s = l.src as usize;
                    next[s] += m * l.weight * (1.0 - l.t);
                    next[s + 1] += m * l.weight * l.t;
                }
            }
            let total: f64 = next.iter().sum();
            next.iter_mut().for_each(|x| *x /= total);
            let change: f64 = next.iter().zip(&mu).map(|(a, b)| (a - b).abs()).sum();
            mu = next;
            if change < tol {
                break;
            }
        }
        mu
    }

    /// Weight, phase-carrying roof sum and interpolated `(u, v)` at the
    /// preimage of `z` along `word`, with the weight left unnormalized.
    fn branch_term(&self, word: &[usize], z: f64, u: &[f64], v: &[Complex64]) -> (Complex64, f64) {
        let p = self.sys.eval_branch(word, z);
        let j = word[0];
        let a = (p.potential_sum - self.eig.sigma * p.roof_sum).exp() * self.eig.f.eval_linear(j, p.end).re;
        let (src, t) = self.grid.locate(j, p.end);
        let uu = (1.0 - t) * u[src] + t * u[src + 1];
        let vv = v[src] * (1.0 - t) + v[src + 1] * t;
        (Complex64::from_polar(a, -self.b * p.roof_sum) * vv, a * uu)
    }

    /// Slack of the two cancellation cases on the fine-grid nodes of
    /// `B(center, radius)` inside `[lo, hi]`.
    fn case_margins(
        &self,
        pair: (&[usize], &[usize]),
        center: f64,
        radius: f64,
        (lo, hi): (f64, f64),
        u: &[f64],
        v: &[Complex64],
    ) -> (f64, f64) {
        let elem = self.sys.element_of(center.max(lo).min(hi));
        let h = self.grid.spacing(elem);
        let a = (center - radius).max(lo);
        let b = (center + radius).min(hi);
        let steps = (((b - a) / h).ceil() as usize).max(8);
        let (mut m1, mut m2) = (f64::INFINITY, f64::INFINITY);
        for q in 0..=steps {
            let z = a + (b - a) * q as f64 / steps as f64;
            let (v1, u1) = self.branch_term(pair.0, z, u, v);
            let (v2, u2) = self.branch_term(pair.1, z, u, v);
            let lhs = (v1 + v2).norm();
            let r1 = ETA0 * u1 + u2;
            let r2 = u1 + ETA0 * u2;
            m1 = m1.min((r1 - lhs) / r1);
            m2 = m2.min((r2 - lhs) / r2);
        }
        (m1, m2)
    }
}

/// Search a cancellation witness in every partition cell for the pair
/// `(u, v)` and assemble the bump factors.
pub fn build_bump(
    op: &DepthOperator<'_>,
    params: &CancellationParams,
    u: &[f64],
    v: &[Complex64],
    scan: usize,
) -> Result<(Vec<Bump>, Vec<Witness>), DolgopyatError> {
    let sys = op.sys;
    let b = params.b.abs();
    let reach = params.wuni.scale / b - params.delta / (2.0 * b);
    let cells = &params.partition.cells;
    let results = crate::par_map(cells.len(), |j| {
        let q = &cells[j];
        let x0 = q.midpoint();
        let none = DolgopyatError::NoCancellationWitness { element: j, left: q.left, right: q.right };
        let Some((t1, t2)) = transversal_pair(sys, params.c7, params.wuni.tail, x0) else {
            return Err(none);
        };
        let w1 = with_head(sys, &t1, params.wuni.head);
        let w2 = with_head(sys, &t2, params.wuni.head);
        let d1 = sys.image(*w1.last().unwrap());
        let d2 = sys.image(*w2.last().unwrap());
        let (dlo, dhi) = (d1.0.max(d2.0), d1.1.min(d2.1));
        let dom = (sys.breakpoints()[dlo], sys.breakpoints()[dhi]);
        let mut best: Option<Witness> = None;
        for k in 0..scan {
            let x1 = x0 - reach + 2.0 * reach * k as f64 / (scan - 1).max(1) as f64;
            if x1 < dom.0 || x1 > dom.1 {
                continue;
            }
            let (m1, m2) = op.case_margins((&w1, &w2), x1, params.delta / b, dom, u, v);
            let (case, margin) = if m1 >= m2 { (Case::First, m1) } else { (Case::Second, m2) };
            if best.as_ref().is_none_or(|w| margin > w.margin) {
                best = Some(Witness { cell: j, first: w1.clone(), second: w2.clone(), center: x1, case, margin });
            }
        }
        match best {
            Some(w) if w.margin >= 0.0 => Ok(w),
            _ => Err(none),
        }
    });
    let mut witnesses = Vec::with_capacity(results.len());
    for r in results {
        witnesses.push(r?);
    }
    let bumps = witnesses
        .iter()
        .map(|w| Bump {
            word: if w.case == Case::First { w.first.clone() } else { w.second.clone() },
            center: w.center,
            inner: params.delta / (6.0 * b),
            outer: params.delta / (2.0 * b),
            eta: params.eta,
        })
        .collect();
    Ok((bumps, witnesses))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    /// `int u_m^2 dmu_n`.
    pub l2: f64,
    /// `int u_{m+1}^2 / int u_m^2`.
    pub ratio: f64,
    pub margins: ConeMargins,
    /// `min(L^n(chi u) - |L^n_s v|)` after the step.
    pub cancellation: f64,
    pub witnesses: usize,
    pub min_witness_margin: f64,
    pub first_cases: usize,
    pub min_chi: f64,
    pub max_chi_slope: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    pub params: CancellationParams,
    pub steps: Vec<StepRecord>,
    /// Cone margins of the last pair.
    pub final_margins: ConeMargins,
}

/// Iterate `u <- L^n_sigma(chi u)`, `v <- L^n_s v` from `(1, v0)` for
/// `steps` rounds, rebuilding the bump every round.
pub fn cone_iteration(
    sys: &MarkovSystem,
    eig: &EigenData,
    params: &CancellationParams,
    v0: Option<&dyn Fn(f64) -> Complex64>,
    steps: usize,
    scan: usize,
) -> Result<IterationTrace, DolgopyatError> {
    let op = DepthOperator::new(sys, eig, params.depth(), params.b, params.nodes)?;
    let grid = op.grid().clone();
    let mu = op.stationary(300, 1e-13);
    let mut u = vec![1.0; grid.len()];
    let mut v: Vec<Complex64> = match v0 {
        Some(g) => (0..grid.len()).map(|i| g(grid.node(i))).collect(),
        None => vec![Complex64::new(1.0, 0.0); grid.len()],
    };
    let sup = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if sup > 0.0 {
        v.iter_mut().for_each(|z| *z /= sup);
    }
    let alpha = sys.alpha();
    let l2 = |u: &[f64]| u.iter().zip(&mu).map(|(a, m)| a * a * m).sum::<f64>();
    let mut records = Vec::with_capacity(steps);
    let mut current = l2(&u);
    for step in 0..steps {
        let margins = cone_margins(&grid, &u, &v, alpha, params.c0, params.b);
        let (bumps, witnesses) = build_bump(&op, params, &u, &v, scan)?;
        let (mut min_chi, mut max_slope) = (1.0f64, 0.0f64);
        for bp in &bumps {
            let (c, s) = bp.audit(sys, 8192);
            min_chi = min_chi.min(c);
            max_slope = max_slope.max(s);
        }
        let (nu, nv) = op.apply(&u, &v, &bumps);
        let next = l2(&nu);
        records.push(StepRecord {
            step,
            l2: current,
            ratio: next / current,
            margins,
            cancellation: cancellation_margin(&nu, &nv),
            witnesses: witnesses.len(),
            min_witness_margin: witnesses.iter().map(|w| w.margin).fold(f64::INFINITY, f64::min),
            first_cases: witnesses.iter().filter(|w| w.case == Case::First).count(),
            min_chi,
            max_chi_slope: max_slope,
        });
        u = nu;
        v = nv;
        current = next;
    }
    let final_margins = cone_margins(&grid, &u, &v, alpha, params.c0, params.b);
    Ok(IterationTrace { params: params.clone(), steps: records, final_margins })
}

/// Nodes per element for the one-step operator at frequency `b`.
pub fn sweep_nodes(b: f64) -> usize {
    (16.0 * b.abs()).ceil().max(1024.0) as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionRow {
    pub b: f64,
    pub k: usize,
    /// `max ||L^k_s v||_{L^1} / ||v||_inf` over the family.
    pub ratio: f64,
    pub family: usize,
    /// Members of the family that passed `||v||_(b) < lambda^{a k/16} ||v||_inf`.
    pub admitted: usize,
    pub c6: f64,
    /// `L^1 <= L^2 <= L^inf` held for every member.
    pub envelope: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionReport {
    pub sigma: f64,
    pub beta: f64,
    pub rows: Vec<ContractionRow>,
    /// Least-squares `xi` in `ratio ~ lambda^{-xi k}`.
    pub xi_hat: f64,
}

fn family(grid: &Grid, rng: &mut ChaCha20Rng, size: usize, alpha: f64, b: f64, bound: f64) -> (Vec<GridFunction>, usize) {
    let mut out = vec![GridFunction::constant(grid, Complex64::new(1.0, 0.0))];
    let mut tried = 1;
    let mut freq = b.abs() / (2.0 * core::f64::consts::PI);
    while out.len() < size + 1 && tried < 20 * (size + 1) {
        tried += 1;
        let v = random_trig(grid, rng, freq, 4);
        if v.norm_b(alpha, b) < bound * v.sup_norm() {
            out.push(v);
        } else {
            freq *= 0.8;
        }
    }
    (out, tried)
}

/// `max ||L^k_s v||_{L^1(mu)} / ||v||_inf`, `k = floor(beta log |b|)`, over
/// a random family satisfying the norm hypothesis, for each `b`.
pub fn l1_contraction(
    sys: &MarkovSystem,
    lambda: f64,
    sigma: f64,
    b_list: &[f64],
    beta: f64,
    size: usize,
    seed: u64,
) -> Result<ContractionReport, DolgopyatError> {
    let alpha = sys.alpha();
    let mut rows = Vec::with_capacity(b_list.len());
    for (idx, &b) in b_list.iter().enumerate() {
        let disc = Discretization::new(sys, sweep_nodes(b))?;
        let eig = disc.eigendata(sigma)?;
        let op = disc.normalized(&eig, b);
        let k = (beta * b.abs().ln()).floor().max(1.0) as usize;
        let bound = lambda.powf(alpha * k as f64 / 16.0);
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ (idx as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let (members, tried) = family(disc.grid(), &mut rng, size, alpha, b, bound);
        let mut ratio: f64 = 0.0;
        let mut envelope = true;
        for v in &members {
            let w = op.apply_n(v, k);
            let l1 = eig.lp_norm(&w, 1.0);
            let l2 = eig.lp_norm(&w, 2.0);
            envelope &= l1 <= l2 * (1.0 + 1e-12) && l2 <= w.sup_norm() * (1.0 + 1e-12);
            ratio = ratio.max(l1 / v.sup_norm());
        }
        rows.push(ContractionRow { b, k, ratio, family: tried, admitted: members.len(), c6: disc.c6(&eig), envelope });
    }
    let (num, den) = rows.iter().fold((0.0, 0.0), |(n, d), r| {
        let k = r.k as f64;
        (n + k * (-r.ratio.ln() / lambda.ln()), d + k * k)
    });
    Ok(ContractionReport { sigma, beta, rows, xi_hat: num / den })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub b: f64,
    pub ell: usize,
    /// Best `||L^l_s v||_(b) / ||v||_(b)` found.
    pub ratio: f64,
    pub zeta_hat: f64,
    /// `(C6 + C8)^{1/l}` from the Lasota-Yorke constants.
    pub envelope: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub sigma: f64,
    pub scale: f64,
    pub rows: Vec<SweepRow>,
    pub zeta_max: f64,
}

/// Lower estimate of `||L^l_s||_(b)` with `l = ceil(scale log |b|)`: random
/// test functions followed by power-iteration refinement of the best one.
pub fn norm_contraction_sweep(
    sys: &MarkovSystem,
    sigma: f64,
    b_list: &[f64],
    scale: f64,
    size: usize,
    refine: usize,
    seed: u64,
) -> Result<SweepReport, DolgopyatError> {
    let alpha = sys.alpha();
    let mut rows = Vec::with_capacity(b_list.len());
    for (idx, &b) in b_list.iter().enumerate() {
        let disc = Discretization::new(sys, sweep_nodes(b))?;
        let eig = disc.eigendata(sigma)?;
        let op = disc.normalized(&eig, b);
        let ell = (scale * b.abs().ln()).ceil().max(1.0) as usize;
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ (idx as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let mut best = (0.0f64, GridFunction::constant(disc.grid(), Complex64::new(1.0, 0.0)));
        for t in 0..=size {
            let v = if t == 0 {
                GridFunction::constant(disc.grid(), Complex64::new(1.0, 0.0))
            } else {
                random_trig(disc.grid(), &mut rng, b.abs() / (2.0 * core::f64::consts::PI), 4)
            };
            let w = op.apply_n(&v, ell);
            let r = w.norm_b(alpha, b) / v.norm_b(alpha, b);
            if r > best.0 {
                best = (r, v);
            }
        }
        let mut v = best.1.clone();
        for _ in 0..refine {
            let w = op.apply_n(&v, ell);
            let r = w.norm_b(alpha, b) / v.norm_b(alpha, b);
            best.0 = best.0.max(r);
            let n = w.norm_b(alpha, b);
            if !(n > 0.0) {
                break;
            }
            v = w.map(|z| z / n);
        }
        let ly = disc.lasota_yorke(&eig, b, 8, 8, &mut rng);
        let envelope = (disc.c6(&eig) + ly.max).powf(1.0 / ell as f64);
        rows.push(SweepRow { b, ell, ratio: best.0, zeta_hat: best.0.powf(1.0 / ell as f64), envelope });
    }
    let zeta_max = rows.iter().map(|r| r.zeta_hat).fold(0.0, f64::max);
    Ok(SweepReport { sigma, scale, rows, zeta_max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use crate::uni::c7;

    #[test]
    fn eta0_value() {
        assert!((ETA0 - (7f64.sqrt() - 1.0) / 2.0).abs() < 1e-15);
        const { assert!(ETA0 > 2.0 / 3.0 && ETA0 < 1.0) };
    }

    #[test]
    fn c0_on_presets() {
        let a = presets::sys_a();
        let d = Discretization::new(&a, 256).unwrap();
        let e = d.eigendata(0.0).unwrap();
        let r = c0(&d, &e, 2.0, C0Variant::Printed, 0.1);
        assert!(r.printed.abs() < 1e-9 && r.floored && r.value == 0.1);

        let b = presets::sys_b();
        let d = Discretization::new(&b, 1024).unwrap();
        let e = d.eigendata(0.0).unwrap();
        let r = c0(&d, &e, 2.0, C0Variant::Printed, 0.1);
        assert!((r.printed - 2.0 * core::f64::consts::PI / 3.0).abs() < 1e-3, "{:?}", r);
        assert!(r.divided > r.printed);

        let loud = b.with_roof(b.roof().minus_scaled(1.0, b.roof()).minus_scaled(-2.0, b.roof()));
        let d2 = Discretization::new(&loud, 1024).unwrap();
        let r2 = c0(&d2, &d2.eigendata(0.0).unwrap(), 2.0, C0Variant::Printed, 0.1);
        assert!(r2.printed >= r.printed);
    }

    #[test]
    fn gates() {
        let b = presets::sys_b();
        let k = c7(&b.validate(2048).unwrap());
        assert!(check_gates(2.0 * core::f64::consts::PI / 3.0, k, 1.0, 0.05).is_ok());
        assert!(matches!(check_gates(2.1, k, 1.0, 0.2), Err(DolgopyatError::Gate(_))));
        assert!(check_beta(2.0, 1.0, 1.0, 2.0, 4096.0).is_ok());
    }

    #[test]
    fn cone_membership() {
        let g = Grid::new(vec![0.0, 0.5, 1.0], 256).unwrap();
        let one = vec![1.0; g.len()];
        let zero = vec![Complex64::new(0.0, 0.0); g.len()];
        let ones = vec![Complex64::new(1.0, 0.0); g.len()];
        assert!(cone_margins(&g, &one, &zero, 1.0, 0.1, 8.0).holds(0.0));
        assert!(cone_margins(&g, &one, &ones, 1.0, 0.1, 8.0).holds(0.0));
        let two_x: Vec<Complex64> = (0..g.len()).map(|i| Complex64::new(2.0 * g.node(i), 0.0)).collect();
        assert!(!cone_margins(&g, &one, &two_x, 1.0, 0.1, 2.0).holds(0.0));
    }

    #[test]
    fn cancellation_checker_sign() {
        let u = [1.0, 1.0, 1.0];
        let v = [Complex64::new(1.0, 0.0); 3];
        assert_eq!(cancellation_margin(&u, &v), 0.0);
        let reduced = [1.0, 0.9, 1.0];
        assert!(cancellation_margin(&reduced, &v) < 0.0);
    }

    #[test]
    fn bump_shape() {
        let bp = Bump { word: vec![0, 1], center: 0.3, inner: 0.01, outer: 0.03, eta: 0.9 };
        assert_eq!(bp.factor(0.3), 0.9);
        assert_eq!(bp.factor(0.305), 0.9);
        assert_eq!(bp.factor(0.4), 1.0);
        let mid = bp.factor(0.32);
        assert!(mid > 0.9 && mid < 1.0);
    }

    #[test]
    fn constant_roof_has_no_witness() {
        let a = presets::sys_a();
        assert!(transversal_pair(&a, 0.0, 4, 0.3).is_none());
        let rep = a.validate(256).unwrap();
        let err = CancellationParams::new(&a, &rep, 0.0, 256.0, 0.05, 0.2, 0.1, c7(&rep), 1, 6.0).unwrap_err();
        assert!(matches!(err, DolgopyatError::NoCancellationWitness { .. }));
    }
}
