//! Piecewise expanding Markov interval maps with a roof and a potential.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::SystemError;
use crate::expr::{self, Expr, Program};

/// Default cap on the number of admissible words enumerated at one depth.
pub const DEFAULT_CAP: u64 = 2_000_000;

const INVERSE_TOL: f64 = 1e-13;
const MARKOV_TOL: f64 = 1e-12;

/// One expression per partition element, compiled together with its
/// derivative.
#[derive(Debug, Clone)]
pub struct Piecewise {
    exprs: Vec<Expr>,
    progs: Vec<Program>,
    dprogs: Vec<Program>,
}

impl Piecewise {
    pub fn new(exprs: Vec<Expr>) -> Self {
        let progs = exprs.iter().map(Expr::compile).collect();
        let dprogs = exprs.iter().map(|e| e.differentiate().compile()).collect();
        Piecewise { exprs, progs, dprogs }
    }

    pub fn constant(c: f64, elements: usize) -> Self {
        Piecewise::new(vec![Expr::num(c); elements])
    }

    pub fn exprs(&self) -> &[Expr] {
        &self.exprs
    }

    pub fn len(&self) -> usize {
        self.exprs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exprs.is_empty()
    }

    #[inline]
    pub fn eval(&self, elem: usize, x: f64) -> f64 {
        self.progs[elem].eval(x)
    }

    #[inline]
    pub fn deriv(&self, elem: usize, x: f64) -> f64 {
        self.dprogs[elem].eval(x)
    }

    /// Constant value on every element, if the expressions are literals.
    pub fn as_constant(&self) -> Option<Vec<f64>> {
        self.progs.iter().map(Program::as_constant).collect()
    }

    /// `self - c * other`, elementwise.
    pub fn minus_scaled(&self, c: f64, other: &Piecewise) -> Piecewise {
        let exprs = self.exprs.iter().zip(&other.exprs).map(|(a, b)| Expr::sub(a.clone(), Expr::mul(Expr::num(c), b.clone()))).collect();
        Piecewise::new(exprs)
    }
}

/// Textual description of a system, as read from configuration files.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub partition: Vec<f64>,
    pub branches: Vec<BranchSource>,
    /// One expression per element, or a single expression for all.
    pub roof: Vec<String>,
    pub potential: Vec<String>,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchSource {
    pub expr: String,
    /// Half-open range of element indices covered by the image.
    pub image: [usize; 2],
}

impl SystemSpec {
    pub fn build(&self) -> Result<MarkovSystem, SystemError> {
        let m = self.branches.len();
        let parse_field = |field: String, src: &str| expr::parse(src).map_err(|source| SystemError::Expr { field, source });
        let mut maps = Vec::with_capacity(m);
        let mut images = Vec::with_capacity(m);
        for (i, b) in self.branches.iter().enumerate() {
            maps.push(parse_field(format!("branches[{}].expr", i), &b.expr)?);
            images.push((b.image[0], b.image[1]));
        }
        let expand = |name: &str, list: &[String]| -> Result<Vec<Expr>, SystemError> {
            match list.len() {
                1 => {
                    let e = parse_field(format!("{}[0]", name), &list[0])?;
                    Ok(vec![e; m])
                }
                k if k == m => list.iter().enumerate().map(|(i, s)| parse_field(format!("{}[{}]", name, i), s)).collect(),
                k => Err(SystemError::Shape(format!("{} has {} entries for {} elements", name, k, m))),
            }
        };
        let roof = expand("roof", &self.roof)?;
        let potential = expand("potential", &self.potential)?;
        MarkovSystem::new(self.partition.clone(), maps, images, roof, potential, self.alpha)
    }
}

#[derive(Debug, Clone)]
struct Branch {
    map: Program,
    dmap: Program,
    d2map: Program,
    image: (usize, usize),
    increasing: bool,
    /// `(x0, slope)` when the branch is affine: `T(x) = T(x0) + slope (x - x0)`
    /// with `T(x0)` stored in `value_at_left`.
    affine: Option<f64>,
    value_at_left: f64,
    value_at_right: f64,
}

/// The triple (T, r, phi) on a partition of [0, 1].
#[derive(Debug, Clone)]
pub struct MarkovSystem {
    breakpoints: Vec<f64>,
    map_exprs: Vec<Expr>,
    branches: Vec<Branch>,
    roof: Piecewise,
    potential: Piecewise,
    alpha: f64,
}

/// A preimage `x = h_w(y)` reached by an admissible backward word, with
/// the branch derivative and Birkhoff sums along the way.
#[derive(Debug, Clone, Copy)]
pub struct Preimage<'a> {
    pub x: f64,
    /// Itinerary of `x`: `word[0]` is the element containing `x`.
    pub word: &'a [usize],
    /// `D h_w (y)`.
    pub dh: f64,
    /// `S_n r (x)`.
    pub roof_sum: f64,
    /// `D (S_n r o h_w)(y)`.
    pub droof_sum: f64,
    /// `S_n phi (x)`.
    pub potential_sum: f64,
}

/// Forward orbit data `T^n x`, `D T^n (x)` and Birkhoff sums.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardPoint {
    pub end: f64,
    pub dt: f64,
    pub roof_sum: f64,
    /// `D (S_n r)(x)`.
    pub droof_sum: f64,
    pub potential_sum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cylinder {
    pub word: Vec<usize>,
    pub left: f64,
    pub right: f64,
}

impl Cylinder {
    pub fn depth(&self) -> usize {
        self.word.len()
    }

    pub fn diam(&self) -> f64 {
        self.right - self.left
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.left + self.right)
    }
}

/// Inverse branch of `T^n` attached to an admissible word.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseBranch {
    pub word: Vec<usize>,
    /// Half-open element range of the domain `T^n(w)`.
    pub domain: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub lambda: f64,
    pub rho: f64,
    pub c4: f64,
    pub c2: f64,
    pub covering: bool,
    pub primitive_power: Option<usize>,
    pub markov_residuals: Vec<f64>,
    pub roof_min: f64,
    pub roof_max: f64,
    pub grid_points: usize,
}

impl MarkovSystem {
    pub fn new(
        breakpoints: Vec<f64>,
        maps: Vec<Expr>,
        images: Vec<(usize, usize)>,
        roof: Vec<Expr>,
        potential: Vec<Expr>,
        alpha: f64,
    ) -> Result<Self, SystemError> {
        let m = maps.len();
        if m == 0 || breakpoints.len() != m + 1 {
            return Err(SystemError::Shape(format!("{} breakpoints for {} branches", breakpoints.len(), m)));
        }
        if breakpoints[0] != 0.0 || breakpoints[m] != 1.0 {
            return Err(SystemError::Shape("partition must start at 0 and end at 1".to_string()));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(SystemError::Shape("breakpoints must increase".to_string()));
        }
        if images.len() != m || roof.len() != m || potential.len() != m {
            return Err(SystemError::Shape("one image, roof and potential per element".to_string()));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(SystemError::Shape(format!("alpha = {} outside (0, 1]", alpha)));
        }
        for e in maps.iter().chain(&roof).chain(&potential) {
            if e.mentions(expr::Var::U) {
                return Err(SystemError::Shape("system expressions may only use x".to_string()));
            }
        }
        let mut branches = Vec::with_capacity(m);
        for (i, (map, &image)) in maps.iter().zip(&images).enumerate() {
            if image.0 >= image.1 || image.1 > m {
                return Err(SystemError::Shape(format!("branch {} image [{}, {}) is not a valid element range", i, image.0, image.1)));
            }
            let d = map.differentiate();
            let d2 = d.differentiate();
            let (a, b) = (breakpoints[i], breakpoints[i + 1]);
            let prog = map.compile();
            let dprog = d.compile();
            let d2prog = d2.compile();
            let ta = prog.eval(a);
            let tb = prog.eval(b);
            if !ta.is_finite() || !tb.is_finite() {
                return Err(SystemError::Shape(format!("branch {} is not finite at its endpoints", i)));
            }
            let samples = 64;
            let mut affine = true;
            let slope = (tb - ta) / (b - a);
            for k in 0..=samples {
                let x = a + (b - a) * k as f64 / samples as f64;
                let dd = d2prog.eval(x);
                if !(dd.abs() <= 1e-12 * (1.0 + slope.abs())) {
                    affine = false;
                    break;
                }
            }
            branches.push(Branch {
                map: prog,
                dmap: dprog,
                d2map: d2prog,
                image,
                increasing: tb > ta,
                affine: if affine { Some(slope) } else { None },
                value_at_left: ta,
                value_at_right: tb,
            });
        }
        Ok(MarkovSystem { breakpoints, map_exprs: maps, branches, roof: Piecewise::new(roof), potential: Piecewise::new(potential), alpha })
    }

    /// Same map and roof with a different potential.
    pub fn with_potential(&self, potential: Piecewise) -> Self {
        let mut out = self.clone();
        out.potential = potential;
        out
    }

    /// Same map and potential with a different roof.
    pub fn with_roof(&self, roof: Piecewise) -> Self {
        let mut out = self.clone();
        out.roof = roof;
        out
    }

    pub fn elements(&self) -> usize {
        self.branches.len()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn bounds(&self, elem: usize) -> (f64, f64) {
        (self.breakpoints[elem], self.breakpoints[elem + 1])
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn map_exprs(&self) -> &[Expr] {
        &self.map_exprs
    }

    pub fn roof(&self) -> &Piecewise {
        &self.roof
    }

    pub fn potential(&self) -> &Piecewise {
        &self.potential
    }

    pub fn image(&self, elem: usize) -> (usize, usize) {
        self.branches[elem].image
    }

    /// Interval `T(P_elem)`.
    pub fn image_bounds(&self, elem: usize) -> (f64, f64) {
        let (lo, hi) = self.branches[elem].image;
        (self.breakpoints[lo], self.breakpoints[hi])
    }

    /// True when the image of branch `from` covers element `to`.
    #[inline]
    pub fn admits(&self, from: usize, to: usize) -> bool {
        let (lo, hi) = self.branches[from].image;
        lo <= to && to < hi
    }

    pub fn is_full_branch(&self) -> bool {
        let m = self.elements();
        self.branches.iter().all(|b| b.image == (0, m))
    }

    pub fn is_affine(&self) -> bool {
        self.branches.iter().all(|b| b.affine.is_some())
    }

    /// Element containing `x`; elements are left-closed and `x = 1` belongs
    /// to the last one.
    pub fn element_of(&self, x: f64) -> usize {
        let m = self.elements();
        let idx = self.breakpoints.partition_point(|&a| a <= x);
        idx.saturating_sub(1).min(m - 1)
    }

    #[inline]
    pub fn map(&self, elem: usize, x: f64) -> f64 {
        self.branches[elem].map.eval(x)
    }

    #[inline]
    pub fn dmap(&self, elem: usize, x: f64) -> f64 {
        match self.branches[elem].affine {
            Some(s) => s,
            None => self.branches[elem].dmap.eval(x),
        }
    }

    /// `T x` using the element that contains `x`.
    pub fn apply(&self, x: f64) -> f64 {
        let e = self.element_of(x);
        self.map(e, x)
    }

    /// Inverse of branch `elem` at `y` in the closure of its image.
    pub fn inverse(&self, elem: usize, y: f64) -> f64 {
        let br = &self.branches[elem];
        let (a, b) = (self.breakpoints[elem], self.breakpoints[elem + 1]);
        if let Some(s) = br.affine {
            let x = a + (y - br.value_at_left) / s;
            return x.max(a).min(b);
        }
        let (lo_val, hi_val) = if br.increasing { (br.value_at_left, br.value_at_right) } else { (br.value_at_right, br.value_at_left) };
        if y <= lo_val {
            return if br.increasing { a } else { b };
        }
        if y >= hi_val {
            return if br.increasing { b } else { a };
        }
        // Bracket [lo, hi] with g(lo) < 0 < g(hi) in the increasing sense.
        let g = |x: f64| {
            let v = br.map.eval(x) - y;
            if br.increasing {
                v
            } else {
                -v
            }
        };
        let (mut lo, mut hi) = (a, b);
        let mut x = a + (b - a) * (y - br.value_at_left) / (br.value_at_right - br.value_at_left);
        x = x.max(a).min(b);
        for _ in 0..200 {
            let gx = g(x);
            if gx == 0.0 {
                return x;
            }
            if gx < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            if hi - lo <= INVERSE_TOL {
                break;
            }
            let d = br.dmap.eval(x);
            let d = if br.increasing { d } else { -d };
            let newton = x - gx / d;
            let step_ok = d > 0.0 && newton > lo && newton < hi;
            let next = if step_ok { newton } else { 0.5 * (lo + hi) };
            if (next - x).abs() <= INVERSE_TOL * 0.1 {
                return next;
            }
            x = next;
        }
        x
    }

    /// Enumerate every admissible preimage of `y` under `T^n`, treating `y`
    /// as a point of the closure of element `elem`.
    pub fn for_each_preimage<F: FnMut(&Preimage<'_>)>(&self, y: f64, elem: usize, n: usize, mut f: F) {
        let mut word = vec![0usize; n];
        self.descend(y, elem, n, 1.0, 0.0, 0.0, 0.0, &mut word, &mut f);
    }

    /// Preimages of `y` using the element that contains it.
    pub fn preimages(&self, y: f64, n: usize) -> Vec<(Vec<usize>, f64)> {
        let mut out = Vec::new();
        self.for_each_preimage(y, self.element_of(y), n, |p| out.push((p.word.to_vec(), p.x)));
        out
    }

    fn descend<F: FnMut(&Preimage<'_>)>(
        &self,
        p: f64,
        elem: usize,
        remaining: usize,
        dh: f64,
        sr: f64,
        dsr: f64,
        sphi: f64,
        word: &mut Vec<usize>,
        f: &mut F,
    ) {
        if remaining == 0 {
            f(&Preimage { x: p, word, dh, roof_sum: sr, droof_sum: dsr, potential_sum: sphi });
            return;
        }
        for j in 0..self.elements() {
            if !self.admits(j, elem) {
                continue;
            }
            let q = self.inverse(j, p);
            let ndh = dh / self.dmap(j, q);
            word[remaining - 1] = j;
            self.descend(
                q,
                j,
                remaining - 1,
                ndh,
                sr + self.roof.eval(j, q),
                dsr + self.roof.deriv(j, q) * ndh,
                sphi + self.potential.eval(j, q),
                word,
                f,
            );
        }
    }

    pub fn is_admissible(&self, word: &[usize]) -> bool {
        word.iter().all(|&s| s < self.elements()) && word.windows(2).all(|w| self.admits(w[0], w[1]))
    }

    pub fn inverse_branch(&self, word: &[usize]) -> Result<InverseBranch, SystemError> {
        if word.is_empty() || !self.is_admissible(word) {
            return Err(SystemError::NotAdmissible(word.to_vec()));
        }
        Ok(InverseBranch { word: word.to_vec(), domain: self.image(*word.last().unwrap()) })
    }

    /// Evaluate `h_w` at `y` (assumed in the closure of the domain).
    pub fn eval_branch(&self, word: &[usize], y: f64) -> ForwardPoint {
        let mut p = y;
        let mut dh = 1.0;
        let mut sr = 0.0;
        let mut dsr = 0.0;
        let mut sphi = 0.0;
        for &j in word.iter().rev() {
            let q = self.inverse(j, p);
            dh /= self.dmap(j, q);
            sr += self.roof.eval(j, q);
            dsr += self.roof.deriv(j, q) * dh;
            sphi += self.potential.eval(j, q);
            p = q;
        }
        // reuse ForwardPoint: `end` is the preimage, `dt` is D h_w(y)
        ForwardPoint { end: p, dt: dh, roof_sum: sr, droof_sum: dsr, potential_sum: sphi }
    }

    /// Forward orbit of `x` for `n` steps. Points landing exactly on an
    /// interior breakpoint are nudged by 1e-13.
    pub fn forward(&self, x: f64, n: usize) -> ForwardPoint {
        let mut p = x;
        let mut dt = 1.0;
        let mut sr = 0.0;
        let mut dsr = 0.0;
        let mut sphi = 0.0;
        for _ in 0..n {
            let p0 = self.nudge(p);
            let e = self.element_of(p0);
            let d = self.dmap(e, p0);
            sr += self.roof.eval(e, p0);
            dsr += self.roof.deriv(e, p0) * dt;
            sphi += self.potential.eval(e, p0);
            dt *= d;
            p = self.map(e, p0).clamp(0.0, 1.0);
        }
        ForwardPoint { end: p, dt, roof_sum: sr, droof_sum: dsr, potential_sum: sphi }
    }

    fn nudge(&self, x: f64) -> f64 {
        let m = self.elements();
        if self.breakpoints[1..m].contains(&x) {
            x + 1e-13
        } else {
            x
        }
    }

    /// `sum_{j<n} g(T^j x)`.
    pub fn birkhoff_sum(&self, g: &Piecewise, x: f64, n: usize) -> f64 {
        let mut p = x;
        let mut acc = 0.0;
        for _ in 0..n {
            let p0 = self.nudge(p);
            let e = self.element_of(p0);
            acc += g.eval(e, p0);
            p = self.map(e, p0).clamp(0.0, 1.0);
        }
        acc
    }

    /// 0-1 transition matrix, `a[i][j] = 1` iff `T(P_i)` covers `P_j`.
    pub fn transition_matrix(&self) -> Vec<Vec<bool>> {
        let m = self.elements();
        (0..m).map(|i| (0..m).map(|j| self.admits(i, j)).collect()).collect()
    }

    /// Number of admissible words of length `n`, saturating at `u64::MAX`.
    pub fn word_count(&self, n: usize) -> u64 {
        let m = self.elements();
        if n == 0 {
            return 1;
        }
        let mut counts = vec![1u64; m];
        for _ in 1..n {
            let mut next = vec![0u64; m];
            for (i, slot) in next.iter_mut().enumerate() {
                for j in 0..m {
                    if self.admits(i, j) {
                        *slot = slot.saturating_add(counts[j]);
                    }
                }
            }
            counts = next;
        }
        counts.iter().fold(0u64, |a, &c| a.saturating_add(c))
    }

    /// Closure of the cylinder `[w]` as an interval.
    pub fn cylinder_interval(&self, word: &[usize]) -> (f64, f64) {
        let last = *word.last().expect("non-empty word");
        let (mut lo, mut hi) = self.bounds(last);
        for &j in word[..word.len() - 1].iter().rev() {
            lo = self.inverse(j, lo);
            hi = self.inverse(j, hi);
        }
        if lo > hi {
            core::mem::swap(&mut lo, &mut hi);
        }
        (lo, hi)
    }

    /// All depth-`n` cylinders sorted by left endpoint.
    pub fn cylinders(&self, n: usize, cap: u64) -> Result<Vec<Cylinder>, SystemError> {
        if n == 0 {
            return Err(SystemError::Shape("cylinder depth must be at least 1".to_string()));
        }
        let count = self.word_count(n);
        if count > cap {
            return Err(SystemError::CapExceeded { count, cap });
        }
        let mut out = Vec::with_capacity(count as usize);
        let mut word = Vec::with_capacity(n);
        self.collect_words(n, &mut word, &mut |w| {
            let (left, right) = self.cylinder_interval(w);
            out.push(Cylinder { word: w.to_vec(), left, right });
        });
        out.sort_by(|a, b| a.left.partial_cmp(&b.left).unwrap_or(core::cmp::Ordering::Equal));
        Ok(out)
    }

    /// Visit every admissible word of length `n` in lexicographic order.
    pub fn collect_words<F: FnMut(&[usize])>(&self, n: usize, word: &mut Vec<usize>, f: &mut F) {
        if word.len() == n {
            f(word);
            return;
        }
        for j in 0..self.elements() {
            if word.last().is_none_or(|&l| self.admits(l, j)) {
                word.push(j);
                self.collect_words(n, word, f);
                word.pop();
            }
        }
    }

    /// Check the standing hypotheses on grids of `grid` points per element.
    pub fn validate(&self, grid: usize) -> Result<ValidationReport, SystemError> {
        let report = self.measure(grid.max(16));
        for (i, &res) in report.markov_residuals.iter().enumerate() {
            if !(res <= MARKOV_TOL) {
                return Err(SystemError::NotMarkov { element: i, residual: res });
            }
        }
        if !(report.lambda > 1.0) {
            return Err(SystemError::NotExpanding { lambda: report.lambda });
        }
        if !report.covering {
            return Err(SystemError::NotCovering);
        }
        if !(report.roof_min > 0.0 && report.roof_max <= 1.0 + MARKOV_TOL) {
            return Err(SystemError::RoofOutOfRange { min: report.roof_min, max: report.roof_max });
        }
        Ok(report)
    }

    /// The quantities checked by [`validate`](Self::validate), without the checks.
    pub fn measure(&self, grid: usize) -> ValidationReport {
        let m = self.elements();
        let mut lambda = f64::INFINITY;
        let mut rho: f64 = 0.0;
        let mut c4: f64 = 0.0;
        let mut roof_min = f64::INFINITY;
        let mut roof_max = f64::NEG_INFINITY;
        let mut markov_residuals = Vec::with_capacity(m);
        for i in 0..m {
            let (a, b) = self.bounds(i);
            let br = &self.branches[i];
            let (lo, hi) = self.image_bounds(i);
            let (v0, v1) = if br.increasing { (br.value_at_left, br.value_at_right) } else { (br.value_at_right, br.value_at_left) };
            markov_residuals.push((v0 - lo).abs().max((v1 - hi).abs()));
            for k in 0..grid {
                let x = a + (b - a) * k as f64 / (grid - 1) as f64;
                let d = br.dmap.eval(x);
                let ad = d.abs();
                if !ad.is_finite() || ad < lambda {
                    lambda = if ad.is_finite() { ad } else { 0.0 };
                }
                rho = rho.max(ad);
                c4 = c4.max((self.roof.deriv(i, x) / d).abs());
                let r = self.roof.eval(i, x);
                roof_min = roof_min.min(r);
                roof_max = roof_max.max(r);
            }
        }
        let (covering, primitive_power) = self.covering();
        ValidationReport {
            lambda,
            rho,
            c4,
            c2: self.distortion_estimate(3, grid.min(512)),
            covering,
            primitive_power,
            markov_residuals,
            roof_min,
            roof_max,
            grid_points: grid,
        }
    }

    /// Whether every element reaches every other, and the first power of the
    /// transition matrix that is strictly positive.
    pub fn covering(&self) -> (bool, Option<usize>) {
        let m = self.elements();
        let a = self.transition_matrix();
        let mut power = a.clone();
        let mut reach = a.clone();
        let mut primitive = None;
        for k in 1..=(m * m) {
            if primitive.is_none() && power.iter().all(|row| row.iter().all(|&v| v)) {
                primitive = Some(k);
            }
            if k == m * m {
                break;
            }
            let mut next = vec![vec![false; m]; m];
            for i in 0..m {
                for j in 0..m {
                    next[i][j] = (0..m).any(|l| power[i][l] && a[l][j]);
                }
            }
            power = next;
            for i in 0..m {
                for j in 0..m {
                    reach[i][j] |= power[i][j];
                }
            }
        }
        let connected = reach.iter().all(|row| row.iter().all(|&v| v));
        (connected && primitive.is_some(), primitive)
    }

    /// Empirical constant in `|Dh(x) - Dh(y)| <= C |Dh(x)| d(x,y)^alpha` over
    /// inverse branches up to `depth`, on adjacent grid pairs.
    pub fn distortion_estimate(&self, depth: usize, grid: usize) -> f64 {
        let mut best: f64 = 0.0;
        for n in 1..=depth {
            if self.word_count(n) > 4096 {
                break;
            }
            let mut word = Vec::new();
            self.collect_words(n, &mut word, &mut |w| {
                let (lo, hi) = self.image_bounds(*w.last().unwrap());
                let mut prev: Option<(f64, f64)> = None;
                for k in 0..grid {
                    let y = lo + (hi - lo) * k as f64 / (grid - 1) as f64;
                    let d = self.eval_branch(w, y).dt;
                    if let Some((py, pd)) = prev {
                        let q = (d - pd).abs() / (pd.abs() * (y - py).powf(self.alpha));
                        if q.is_finite() {
                            best = best.max(q);
                        }
                    }
                    prev = Some((y, d));
                }
            });
        }
        best
    }

    /// `sup |T''|` on a grid; zero for affine maps.
    pub fn max_curvature(&self, grid: usize) -> f64 {
        let mut best: f64 = 0.0;
        for i in 0..self.elements() {
            let (a, b) = self.bounds(i);
            for k in 0..grid {
                let x = a + (b - a) * k as f64 / (grid - 1) as f64;
                best = best.max(self.branches[i].d2map.eval(x).abs());
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn presets_validate() {
        let a = presets::sys_a().validate(2048).unwrap();
        assert_eq!(a.lambda, 2.0);
        assert_eq!(a.rho, 2.0);
        assert_eq!(a.c4, 0.0);
        let b = presets::sys_b().validate(2048).unwrap();
        assert!((b.c4 - core::f64::consts::PI / 3.0).abs() < 1e-5);
        let c = presets::sys_c().validate(2048).unwrap();
        assert_eq!(c.lambda, 2.0);
        assert_eq!(c.rho, 3.0);
        assert!(c.covering);
        assert_eq!(c.primitive_power, Some(2));
    }

    #[test]
    fn validation_errors() {
        let spec = |branch: &str, roof: &str| SystemSpec {
            partition: vec![0.0, 0.5, 1.0],
            branches: vec![
                BranchSource { expr: branch.to_string(), image: [0, 2] },
                BranchSource { expr: "2*x-1".to_string(), image: [0, 2] },
            ],
            roof: vec![roof.to_string()],
            potential: vec!["0".to_string()],
            alpha: 1.0,
        };
        assert!(matches!(spec("1.5*x", "1").build().unwrap().validate(256), Err(SystemError::NotMarkov { .. })));
        assert!(matches!(spec("2*x", "2").build().unwrap().validate(256), Err(SystemError::RoofOutOfRange { .. })));
        let slow = SystemSpec {
            partition: vec![0.0, 1.0],
            branches: vec![BranchSource { expr: "x".to_string(), image: [0, 1] }],
            roof: vec!["1".to_string()],
            potential: vec!["0".to_string()],
            alpha: 1.0,
        };
        assert!(matches!(slow.build().unwrap().validate(256), Err(SystemError::NotExpanding { .. })));
        let stuck = SystemSpec {
            partition: vec![0.0, 0.5, 1.0],
            branches: vec![
                BranchSource { expr: "2*x".to_string(), image: [0, 1] },
                BranchSource { expr: "2*x-1".to_string(), image: [1, 2] },
            ],
            roof: vec!["1".to_string()],
            potential: vec!["0".to_string()],
            alpha: 1.0,
        };
        // images do not match the declared ranges, so Markov fails first
        assert!(stuck.build().unwrap().validate(256).is_err());
    }

    #[test]
    fn not_covering() {
        // two disjoint full doubling copies on [0,1/2) and [1/2,1)
        let spec = SystemSpec {
            partition: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            branches: vec![
                BranchSource { expr: "2*x".to_string(), image: [0, 2] },
                BranchSource { expr: "2*x-0.5".to_string(), image: [0, 2] },
                BranchSource { expr: "2*x-0.5".to_string(), image: [2, 4] },
                BranchSource { expr: "2*x-1".to_string(), image: [2, 4] },
            ],
            roof: vec!["1".to_string()],
            potential: vec!["0".to_string()],
            alpha: 1.0,
        };
        assert_eq!(spec.build().unwrap().validate(256), Err(SystemError::NotCovering));
    }

    #[test]
    fn cylinders_and_caps() {
        let a = presets::sys_a();
        let cyl = a.cylinders(2, DEFAULT_CAP).unwrap();
        assert_eq!(cyl.len(), 4);
        for c in &cyl {
            assert!((c.diam() - 0.25).abs() < 1e-15);
        }
        let c = presets::sys_c();
        let words: Vec<Vec<usize>> = c.cylinders(2, DEFAULT_CAP).unwrap().into_iter().map(|c| c.word).collect();
        assert_eq!(words.len(), 7);
        for w in [[0, 0], [0, 1], [0, 2], [1, 1], [1, 2], [2, 0], [2, 1]] {
            assert!(words.contains(&w.to_vec()));
        }
        assert!(matches!(a.cylinders(40, 1_000_000), Err(SystemError::CapExceeded { .. })));
    }

    #[test]
    fn birkhoff_sums() {
        let a = presets::sys_a();
        assert_eq!(a.birkhoff_sum(a.roof(), 0.3, 5), 5.0);
        let id = Piecewise::new(vec![Expr::x(), Expr::x()]);
        assert!((a.birkhoff_sum(&id, 0.2, 4) - 2.0).abs() < 1e-12);
        assert_eq!(a.birkhoff_sum(&id, 0.2, 0), 0.0);
    }

    #[test]
    fn element_membership_is_left_closed() {
        let a = presets::sys_a();
        assert_eq!(a.element_of(0.0), 0);
        assert_eq!(a.element_of(0.5), 1);
        assert_eq!(a.element_of(1.0), 1);
        assert_eq!(a.element_of(0.4999), 0);
    }

    #[test]
    fn nonlinear_inverse() {
        let spec = SystemSpec {
            partition: vec![0.0, 0.5, 1.0],
            branches: vec![
                BranchSource { expr: "2*x+0.3*sin(2*pi*x)/pi".to_string(), image: [0, 2] },
                BranchSource { expr: "2*x-1".to_string(), image: [0, 2] },
            ],
            roof: vec!["1".to_string()],
            potential: vec!["0".to_string()],
            alpha: 1.0,
        };
        let s = spec.build().unwrap();
        for k in 0..=100 {
            let y = k as f64 / 100.0;
            let x = s.inverse(0, y);
            assert!((s.map(0, x) - y).abs() < 1e-12);
        }
    }

    #[test]
    fn preimage_counts_match_words() {
        let c = presets::sys_c();
        for n in 1..=5 {
            let mut total = 0usize;
            for e in 0..3 {
                let (a, b) = c.bounds(e);
                let mut k = 0;
                c.for_each_preimage(0.5 * (a + b), e, n, |p| {
                    assert!(c.is_admissible(p.word));
                    k += 1;
                });
                total += k;
            }
            // a depth-n preimage of a point in P_e extends to a word of length n + 1
            assert_eq!(total as u64, c.word_count(n + 1));
        }
    }
}
