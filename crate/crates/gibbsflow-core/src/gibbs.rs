//! Cylinder masses of the equilibrium state, the Gibbs audit, a sampler for
//! the invariant measure, adapted partitions and the sub-cylinder Federer
//! surrogate.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::GibbsError;
use crate::operator::{Discretization, EigenData};
use crate::system::{Cylinder, MarkovSystem};

/// Masses of all cylinders of one depth.
#[derive(Debug, Clone, PartialEq)]
pub struct CylinderMasses {
    pub depth: usize,
    /// `log lambda_sigma`.
    pub pressure: f64,
    pub entries: Vec<(Vec<usize>, f64)>,
}

impl CylinderMasses {
    pub fn total(&self) -> f64 {
        self.entries.iter().map(|(_, m)| m).sum()
    }

    pub fn get(&self, word: &[usize]) -> Option<f64> {
        self.entries.iter().find(|(w, _)| w.as_slice() == word).map(|(_, m)| *m)
    }
}

/// Masses of every admissible cylinder of depth `1..=max_depth`, grouped by
/// depth. Uses `mu[w] = int L(1_{P_{w_{n-1}}} ... L(1_{P_{w_0}})) dmu`,
/// which is additive over children exactly.
pub fn cylinder_masses_upto(disc: &Discretization, eig: &EigenData, max_depth: usize, cap: u64) -> Result<Vec<CylinderMasses>, GibbsError> {
    let sys = disc.system();
    let count = sys.word_count(max_depth);
    if count > cap {
        return Err(GibbsError::System(crate::error::SystemError::CapExceeded { count, cap }));
    }
    let op = disc.normalized(eig, 0.0);
    let grid = disc.grid();
    let pressure = eig.lambda.ln();
    let mut out: Vec<CylinderMasses> = (1..=max_depth).map(|d| CylinderMasses { depth: d, pressure, entries: Vec::new() }).collect();
    let masked = |f: &[f64], elem: usize| {
        let mut g = vec![0.0; f.len()];
        for i in grid.range(elem) {
            g[i] = f[i];
        }
        g
    };
    // depth-first; `f` is the density factor carried by the prefix
    fn rec<M: Fn(&[f64], usize) -> Vec<f64>>(
        sys: &MarkovSystem,
        op: &crate::operator::TransferOperator,
        eig: &EigenData,
        grid: &crate::grid::Grid,
        masked: &M,
        word: &mut Vec<usize>,
        f: &[f64],
        max_depth: usize,
        out: &mut [CylinderMasses],
    ) {
        for j in 0..sys.elements() {
            if word.last().is_some_and(|&l| !sys.admits(l, j)) {
                continue;
            }
            word.push(j);
            let mass: f64 = grid.range(j).map(|i| f[i] * eig.mu[i]).sum();
            out[word.len() - 1].entries.push((word.clone(), mass));
            if word.len() < max_depth {
                let g = op.apply_real(&masked(f, j));
                rec(sys, op, eig, grid, masked, word, &g, max_depth, out);
            }
            word.pop();
        }
    }
    let one = vec![1.0; grid.len()];
    rec(sys, &op, eig, grid, &masked, &mut Vec::new(), &one, max_depth, &mut out);
    Ok(out)
}

pub fn cylinder_masses(disc: &Discretization, eig: &EigenData, depth: usize, cap: u64) -> Result<CylinderMasses, GibbsError> {
    if depth == 0 {
        return Err(GibbsError::Parameter("depth must be at least 1".into()));
    }
    Ok(cylinder_masses_upto(disc, eig, depth, cap)?.pop().expect("depth >= 1"))
}

/// Ratios `mu[w] / exp(-P n + S_n(phi - sigma r)(y))` at cylinder midpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsAudit {
    /// `(depth, min ratio, max ratio)`.
    pub per_depth: Vec<(usize, f64, f64)>,
    pub lower: f64,
    pub upper: f64,
}

impl GibbsAudit {
    /// Two-sided constant `max(upper, 1/lower)`.
    pub fn c5(&self) -> f64 {
        self.upper.max(1.0 / self.lower)
    }
}

pub fn gibbs_audit(disc: &Discretization, eig: &EigenData, max_depth: usize, cap: u64) -> Result<GibbsAudit, GibbsError> {
    let sys = disc.system();
    let tables = cylinder_masses_upto(disc, eig, max_depth, cap)?;
    let mut per_depth = Vec::with_capacity(max_depth);
    for table in &tables {
        let n = table.depth;
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for (word, mass) in &table.entries {
            let (a, b) = sys.cylinder_interval(word);
            let y = 0.5 * (a + b);
            let s = along_word(sys, word, y, eig.sigma);
            let ratio = mass / (-(n as f64) * table.pressure + s).exp();
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
        per_depth.push((n, lo, hi));
    }
    let lower = per_depth.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let upper = per_depth.iter().map(|p| p.2).fold(0.0, f64::max);
    Ok(GibbsAudit { per_depth, lower, upper })
}

/// `S_n(phi - sigma r)(y)` following the itinerary `word`.
fn along_word(sys: &MarkovSystem, word: &[usize], y: f64, sigma: f64) -> f64 {
    let mut p = y;
    let mut acc = 0.0;
    for &j in word {
        acc += sys.potential().eval(j, p) - sigma * sys.roof().eval(j, p);
        p = sys.map(j, p);
    }
    acc
}

/// `T^n z` along the itinerary `word`.
pub fn push_forward(sys: &MarkovSystem, word: &[usize], z: f64) -> f64 {
    word.iter().fold(z, |p, &j| sys.map(j, p))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub burn_in: usize,
    pub thin: usize,
    /// Independent chains; also the batches for standard errors.
    pub streams: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { burn_in: 1000, thin: 10, streams: 32 }
    }
}

/// Backward chain whose transition is `L_sigma`: from `x` move to the
/// preimage `y` with probability `exp((phi - sigma r)(y)) f(y) / (lambda f(x))`.
#[derive(Debug, Clone)]
pub struct MuChain<'a> {
    sys: &'a MarkovSystem,
    eig: &'a EigenData,
    rng: ChaCha20Rng,
    x: f64,
    elem: usize,
    history: VecDeque<usize>,
    thin: usize,
}

const HISTORY: usize = 16;

impl<'a> MuChain<'a> {
    pub fn new(sys: &'a MarkovSystem, eig: &'a EigenData, seed: u64, stream: u64, cfg: &SamplerConfig) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let mut chain = MuChain {
            sys,
            eig,
            rng,
            x: 0.5,
            elem: sys.element_of(0.5),
            history: VecDeque::with_capacity(HISTORY + 1),
            thin: cfg.thin.max(1),
        };
        for _ in 0..cfg.burn_in {
            chain.step();
        }
        chain
    }

    /// Preimages of the current state and their transition probabilities.
    pub fn transitions(&self) -> Vec<(usize, f64, f64)> {
        transition_weights(self.sys, self.eig, self.x, self.elem)
    }

    pub fn step(&mut self) {
        let u: f64 = self.rng.random();
        let (j, y) = choose(self.sys, self.eig, self.x, self.elem, u);
        self.x = y;
        self.elem = j;
        self.history.push_front(j);
        if self.history.len() > HISTORY {
            self.history.pop_back();
        }
    }

    /// Next thinned state.
    pub fn next_sample(&mut self) -> f64 {
        for _ in 0..self.thin {
            self.step();
        }
        self.x
    }

    /// Itinerary of the current state, up to 16 symbols; exact because the
    /// chain moves backwards along branches.
    pub fn itinerary(&self, depth: usize) -> Vec<usize> {
        self.history.iter().take(depth).copied().collect()
    }

    pub fn rng(&mut self) -> &mut ChaCha20Rng {
        &mut self.rng
    }
}

/// `(branch, preimage, probability)` for one chain step from `x` in the
/// closure of `elem`. Probabilities are normalized by their sum.
pub fn transition_weights(sys: &MarkovSystem, eig: &EigenData, x: f64, elem: usize) -> Vec<(usize, f64, f64)> {
    let mut out = Vec::with_capacity(sys.elements());
    let mut total = 0.0;
    for j in 0..sys.elements() {
        if !sys.admits(j, elem) {
            continue;
        }
        let y = sys.inverse(j, x);
        let w = (sys.potential().eval(j, y) - eig.sigma * sys.roof().eval(j, y)).exp() * eig.f.eval_linear(j, y).re;
        total += w;
        out.push((j, y, w));
    }
    for item in &mut out {
        item.2 /= total;
    }
    out
}

fn choose(sys: &MarkovSystem, eig: &EigenData, x: f64, elem: usize, u: f64) -> (usize, f64) {
    let options = transition_weights(sys, eig, x, elem);
    let mut acc = 0.0;
    for &(j, y, p) in &options {
        acc += p;
        if u < acc {
            return (j, y);
        }
    }
    let &(j, y, _) = options.last().expect("covering system has preimages");
    (j, y)
}

/// `count` samples of `mu_sigma`, split over `cfg.streams` chains. Output is
/// grouped by stream, so consecutive blocks are batches.
pub fn sample_mu(disc: &Discretization, eig: &EigenData, count: usize, seed: u64, cfg: &SamplerConfig) -> Vec<f64> {
    sample_with(disc.system(), eig, count, seed, cfg, |chain| chain.next_sample())
}

/// Like [`sample_mu`] but records the depth-`depth` itinerary of each sample.
pub fn sample_words(sys: &MarkovSystem, eig: &EigenData, count: usize, depth: usize, seed: u64, cfg: &SamplerConfig) -> Vec<Vec<usize>> {
    sample_with(sys, eig, count, seed, cfg, |chain| {
        chain.next_sample();
        chain.itinerary(depth)
    })
}

pub(crate) fn sample_with<T: Send, F: Fn(&mut MuChain<'_>) -> T + Sync + Send>(
    sys: &MarkovSystem,
    eig: &EigenData,
    count: usize,
    seed: u64,
    cfg: &SamplerConfig,
    draw: F,
) -> Vec<T> {
    let streams = cfg.streams.max(1);
    let shards = crate::par_map(streams, |s| {
        let n = count / streams + usize::from(s < count % streams);
        let mut chain = MuChain::new(sys, eig, seed, s as u64, cfg);
        (0..n).map(|_| draw(&mut chain)).collect::<Vec<T>>()
    });
    shards.into_iter().flatten().collect()
}

/// Cylinders `Q` with `2 Delta/|b| <= diam Q`, obtained by refining a
/// cylinder while all of its children stay at least that large.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedPartition {
    pub b: f64,
    pub scale: f64,
    pub cells: Vec<Cylinder>,
}

impl AdaptedPartition {
    pub fn lower(&self) -> f64 {
        2.0 * self.scale / self.b.abs()
    }
}

pub fn adapted_partition(sys: &MarkovSystem, b: f64, scale: f64) -> Result<AdaptedPartition, GibbsError> {
    if !(scale > 0.0) {
        return Err(GibbsError::Parameter(format!("scale {} must be positive", scale)));
    }
    let rho = sys.measure(2048).rho;
    let min_diam = (0..sys.elements()).map(|i| sys.bounds(i)).map(|(a, c)| c - a).fold(f64::INFINITY, f64::min);
    let required = 2.0 * scale * rho / min_diam;
    if !(b.abs() > required) {
        return Err(GibbsError::FrequencyTooSmall { b, required });
    }
    let threshold = 2.0 * scale / b.abs();
    let mut cells = Vec::new();
    let mut stack: Vec<Cylinder> = (0..sys.elements())
        .rev()
        .map(|i| {
            let (left, right) = sys.bounds(i);
            Cylinder { word: vec![i], left, right }
        })
        .collect();
    while let Some(q) = stack.pop() {
        let children = children(sys, &q);
        if children.iter().all(|c| c.diam() >= threshold) {
            stack.extend(children.into_iter().rev());
        } else {
            cells.push(q);
        }
    }
    cells.sort_by(|a, c| a.left.total_cmp(&c.left));
    Ok(AdaptedPartition { b, scale, cells })
}

fn children(sys: &MarkovSystem, q: &Cylinder) -> Vec<Cylinder> {
    let last = *q.word.last().expect("non-empty");
    let mut out: Vec<Cylinder> = (0..sys.elements())
        .filter(|&j| sys.admits(last, j))
        .map(|j| {
            let mut word = q.word.clone();
            word.push(j);
            let (left, right) = sys.cylinder_interval(&word);
            Cylinder { word, left, right }
        })
        .collect();
    out.sort_by(|a, c| a.left.total_cmp(&c.left));
    out
}

/// `mu(J) / mu(Q)` for sub-intervals `J` of adapted cells.
#[derive(Debug, Clone, PartialEq)]
pub struct FedererReport {
    /// `min mu(J)/mu(Q)` with `J` centred in `Q`.
    pub gamma: f64,
    /// Same with `J` at the left edge of `Q`.
    pub gamma_left: f64,
    /// `gamma exp(-K (2 Delta rho)^alpha)`.
    pub delta_prime: f64,
    /// `(left, right, centred ratio, left-edge ratio)` per cell.
    pub cells: Vec<(f64, f64, f64, f64)>,
}

/// Audit `mu(J_i) >= gamma mu(Q_i)` for `J_i` of length `2 delta/|b|`.
/// `budget` is the Hoelder budget `K` of the log-density.
pub fn federer_audit(
    disc: &Discretization,
    eig: &EigenData,
    part: &AdaptedPartition,
    delta: f64,
    budget: f64,
) -> Result<FedererReport, GibbsError> {
    if !(delta > 0.0 && delta < part.scale) {
        return Err(GibbsError::Parameter(format!("delta {} must lie in (0, {})", delta, part.scale)));
    }
    let sys = disc.system();
    let half = delta / part.b.abs();
    let measure = IntervalMeasure::new(disc, eig);
    let cells: Vec<(f64, f64, f64, f64)> = crate::par_map(part.cells.len(), |idx| {
        let q = &part.cells[idx];
        let whole = measure.mass(sys, &q.word, q.left, q.right);
        let c = q.midpoint();
        let (lo, hi) = ((c - half).max(q.left), (c + half).min(q.right));
        let mid = measure.mass(sys, &q.word, lo, hi) / whole;
        let edge = measure.mass(sys, &q.word, q.left, (q.left + 2.0 * half).min(q.right)) / whole;
        (q.left, q.right, mid, edge)
    });
    let gamma = cells.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
    let gamma_left = cells.iter().map(|c| c.3).fold(f64::INFINITY, f64::min);
    let rho = sys.measure(2048).rho;
    let delta_prime = gamma * (-budget * (2.0 * part.scale * rho).powf(sys.alpha())).exp();
    Ok(FedererReport { gamma, gamma_left, delta_prime, cells })
}

/// `mu` of sub-intervals of a cylinder, pulled forward to macroscopic scale
/// by the cylinder's branch: `mu([a,b]) = int_{T^n[a,b]} g dmu` where
/// `g = lambda^{-n} e^{S_n(phi - sigma r)} f o h / f`.
struct IntervalMeasure<'a> {
    disc: &'a Discretization,
    eig: &'a EigenData,
}

impl<'a> IntervalMeasure<'a> {
    fn new(disc: &'a Discretization, eig: &'a EigenData) -> Self {
        IntervalMeasure { disc, eig }
    }

    fn mass(&self, sys: &MarkovSystem, word: &[usize], a: f64, b: f64) -> f64 {
        let n = word.len();
        let (mut x0, mut x1) = (push_forward(sys, word, a), push_forward(sys, word, b));
        if x0 > x1 {
            core::mem::swap(&mut x0, &mut x1);
        }
        let grid = self.disc.grid();
        let last = *word.last().expect("non-empty");
        let (lo_e, hi_e) = sys.image(last);
        let lambda_n = self.eig.lambda.powi(n as i32);
        let mut total = 0.0;
        for e in lo_e..hi_e {
            let h = grid.spacing(e);
            let (ea, eb) = sys.bounds(e);
            for i in grid.range(e) {
                let x = grid.node(i);
                let cell_lo = (x - 0.5 * h).max(ea);
                let cell_hi = (x + 0.5 * h).min(eb);
                let overlap = (cell_hi.min(x1) - cell_lo.max(x0)).max(0.0);
                if overlap <= 0.0 {
                    continue;
                }
                let frac = overlap / (cell_hi - cell_lo);
                let p = sys.eval_branch(word, x);
                let y = p.end;
                let fy = self.eig.f.eval_in(word[0], y).re;
                let g = (p.potential_sum - self.eig.sigma * p.roof_sum).exp() * fy / (lambda_n * self.eig.f.values()[i].re);
                total += frac * g * self.eig.mu[i];
            }
        }
        total
    }
}

/// Pressure `P*` with `log lambda_0(phi - P* r) = 0`, and the system with
/// potential `phi - P* r`.
pub fn normalize_flow_potential(sys: &MarkovSystem, nodes: usize) -> Result<(f64, MarkovSystem), GibbsError> {
    let log_lambda = |p: f64| -> Result<f64, GibbsError> {
        let shifted = sys.with_potential(sys.potential().minus_scaled(p, sys.roof()));
        let disc = Discretization::new(&shifted, nodes)?;
        Ok(disc.eigendata(0.0)?.lambda.ln())
    };
    let (mut lo, mut hi) = (-50.0f64, 50.0f64);
    let (g_lo, g_hi) = (log_lambda(lo)?, log_lambda(hi)?);
    if !(g_lo > 0.0 && g_hi < 0.0) {
        return Err(GibbsError::BracketFailure { lo, hi });
    }
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if log_lambda(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let p = 0.5 * (lo + hi);
    Ok((p, sys.with_potential(sys.potential().minus_scaled(p, sys.roof()))))
}
