//! Suspension semiflow over a Markov map: evolution, sampling of the
//! invariant measure and Monte-Carlo correlation functions.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::error::FlowError;
use crate::expr::{Expr, Program};
use crate::gibbs::{MuChain, SamplerConfig};
use crate::operator::EigenData;
use crate::system::MarkovSystem;

/// A point `(x, u)` of the suspension, `0 <= u < r(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowPoint {
    pub x: f64,
    pub u: f64,
}

/// `X_t(x, u)`: climb to height `u + t`, subtracting the roof and applying
/// the map each time it is crossed.
pub fn evolve(sys: &MarkovSystem, p: FlowPoint, t: f64) -> FlowPoint {
    let mut x = p.x;
    let mut s = p.u + t;
    loop {
        let e = sys.element_of(x);
        let r = sys.roof().eval(e, x);
        if s < r {
            return FlowPoint { x, u: s };
        }
        s -= r;
        x = sys.map(e, x).clamp(0.0, 1.0);
    }
}

/// `(inf r, sup r)` over an 8192-point grid; the sup carries a 1.001 factor.
pub fn roof_range(sys: &MarkovSystem) -> (f64, f64) {
    const POINTS: usize = 8192;
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for e in 0..sys.elements() {
        let (a, b) = sys.bounds(e);
        for k in 0..=POINTS {
            let x = a + (b - a) * k as f64 / POINTS as f64;
            let r = sys.roof().eval(e, x);
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    (lo, hi * 1.001)
}

/// A sample of the flow measure together with the forward orbit of its base
/// point, taken from the backward chain so that no forward iteration (and no
/// loss of precision) is needed.
#[derive(Debug, Clone, PartialEq)]
struct Tracked {
    point: FlowPoint,
    orbit: Vec<f64>,
}

struct FlowSampler<'a> {
    chain: MuChain<'a>,
    sys: &'a MarkovSystem,
    sup: f64,
    window: VecDeque<f64>,
    span: usize,
}

impl<'a> FlowSampler<'a> {
    fn new(sys: &'a MarkovSystem, eig: &'a EigenData, seed: u64, stream: u64, cfg: &SamplerConfig, span: usize) -> Self {
        let one = SamplerConfig { thin: 1, ..*cfg };
        let chain = MuChain::new(sys, eig, seed, stream, &one);
        let (_, sup) = roof_range(sys);
        FlowSampler { chain, sys, sup, window: VecDeque::with_capacity(span + 1), span }
    }

    fn push(&mut self) -> f64 {
        let x = self.chain.next_sample();
        self.window.push_front(x);
        if self.window.len() > self.span {
            self.window.pop_back();
        }
        x
    }

    fn draw(&mut self) -> Tracked {
        for _ in 0..self.span {
            self.push();
        }
        loop {
            let x = self.window[0];
            let r = self.sys.roof().eval(self.sys.element_of(x), x);
            let accept: f64 = self.chain.rng().random();
            if accept * self.sup < r {
                let u = self.chain.rng().random::<f64>() * r;
                let orbit = self.window.iter().copied().collect();
                return Tracked { point: FlowPoint { x, u }, orbit };
            }
            self.push();
        }
    }
}

/// Samples of `mu^r = mu x Leb / int r dmu`: base points from the chain are
/// accepted with probability `r(x)/sup r`, heights are uniform on `[0, r(x))`.
/// Output is grouped by stream.
pub fn sample_flow_measure(sys: &MarkovSystem, eig: &EigenData, count: usize, seed: u64, cfg: &SamplerConfig) -> Vec<FlowPoint> {
    let streams = cfg.streams.max(1);
    let shards = crate::par_map(streams, |s| {
        let n = count / streams + usize::from(s < count % streams);
        let mut sampler = FlowSampler::new(sys, eig, seed, s as u64, cfg, cfg.thin.max(1));
        (0..n).map(|_| sampler.draw().point).collect::<Vec<_>>()
    });
    shards.into_iter().flatten().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    /// `|C| > 3 SE` at this time, so it entered the rate fit.
    pub used: Vec<bool>,
    /// Decay rate `c` in `|C(t)| ~ A e^{-ct}`.
    pub rate: f64,
    pub prefactor: f64,
    /// First time from which every later `|C|` is below 5 SE.
    pub t_star: Option<f64>,
    pub samples: usize,
}

impl CorrelationSeries {
    pub fn usable(&self) -> usize {
        self.used.iter().filter(|&&u| u).count()
    }
}

/// Per-batch sums `(sum v, sum w_t, sum v w_t)` for every time.
struct Batch {
    n: usize,
    v: f64,
    w: Vec<f64>,
    vw: Vec<f64>,
}

fn run_batch(
    sys: &MarkovSystem,
    eig: &EigenData,
    v: &Program,
    w: &Program,
    times: &[f64],
    n: usize,
    seed: u64,
    stream: u64,
    cfg: &SamplerConfig,
    span: usize,
) -> Batch {
    let mut sampler = FlowSampler::new(sys, eig, seed, stream, cfg, span);
    let mut out = Batch { n, v: 0.0, w: vec![0.0; times.len()], vw: vec![0.0; times.len()] };
    for _ in 0..n {
        let tr = sampler.draw();
        let vv = v.eval2(tr.point.x, tr.point.u);
        out.v += vv;
        // incremental evolution along the stored orbit
        let mut k = 0;
        let mut s = tr.point.u;
        let mut last = 0.0;
        for (i, &t) in times.iter().enumerate() {
            s += t - last;
            last = t;
            loop {
                let x = tr.orbit[k];
                let r = sys.roof().eval(sys.element_of(x), x);
                if s < r || k + 1 == tr.orbit.len() {
                    break;
                }
                s -= r;
                k += 1;
            }
            let ww = w.eval2(tr.orbit[k], s);
            out.w[i] += ww;
            out.vw[i] += vv * ww;
        }
    }
    out
}

/// `C(t) = E[v w(X_t)] - E[v] E[w(X_t)]` under `mu^r`, with batch-means
/// standard errors (one batch per stream) and a weighted log-linear fit over
/// the times where `|C| > 3 SE`.
pub fn correlation(
    sys: &MarkovSystem,
    eig: &EigenData,
    v: &Expr,
    w: &Expr,
    times: &[f64],
    samples: usize,
    seed: u64,
    cfg: &SamplerConfig,
) -> Result<CorrelationSeries, FlowError> {
    if times.is_empty() || times[0] < 0.0 || times.windows(2).any(|p| p[1] <= p[0]) {
        return Err(FlowError::Parameter("time grid must be non-negative and increasing".into()));
    }
    let streams = cfg.streams.max(2);
    if samples < streams {
        return Err(FlowError::Parameter("need at least one sample per batch".into()));
    }
    let (lo, hi) = roof_range(sys);
    let t_max = *times.last().unwrap();
    let span = ((t_max + hi) / lo).ceil() as usize + 2;
    let (vp, wp) = (v.compile(), w.compile());
    let batches = crate::par_map(streams, |s| {
        let n = samples / streams + usize::from(s < samples % streams);
        run_batch(sys, eig, &vp, &wp, times, n, seed, s as u64, cfg, span)
    });
    let total = samples as f64;
    let mean_v = batches.iter().map(|b| b.v).sum::<f64>() / total;
    let mut values = Vec::with_capacity(times.len());
    let mut stderr = Vec::with_capacity(times.len());
    for i in 0..times.len() {
        let mean_w = batches.iter().map(|b| b.w[i]).sum::<f64>() / total;
        let mean_vw = batches.iter().map(|b| b.vw[i]).sum::<f64>() / total;
        let c = mean_vw - mean_v * mean_w;
        let per: Vec<f64> = batches
            .iter()
            .map(|b| {
                let n = b.n as f64;
                b.vw[i] / n - (b.v / n) * (b.w[i] / n)
            })
            .collect();
        let m = per.iter().sum::<f64>() / per.len() as f64;
        let var = per.iter().map(|p| (p - m) * (p - m)).sum::<f64>() / (per.len() - 1) as f64;
        values.push(c);
        stderr.push((var / per.len() as f64).sqrt());
    }
    let used: Vec<bool> = values.iter().zip(&stderr).map(|(c, s)| c.abs() > 3.0 * s).collect();
    let usable = used.iter().filter(|&&u| u).count();
    if usable < 4 {
        return Err(FlowError::InsufficientSignal { usable });
    }
    // weighted least squares of log|C| on t, weight (|C|/SE)^2
    let (mut sw, mut st, mut sy, mut stt, mut sty) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in (0..times.len()).filter(|&i| used[i]) {
        let wt = (values[i] / stderr[i].max(f64::MIN_POSITIVE)).powi(2);
        let y = values[i].abs().ln();
        sw += wt;
        st += wt * times[i];
        sy += wt * y;
        stt += wt * times[i] * times[i];
        sty += wt * times[i] * y;
    }
    let slope = (sw * sty - st * sy) / (sw * stt - st * st);
    let intercept = (sy - slope * st) / sw;
    let mut t_star = None;
    for i in (0..times.len()).rev() {
        if values[i].abs() < 5.0 * stderr[i] {
            t_star = Some(times[i]);
        } else {
            break;
        }
    }
    Ok(CorrelationSeries { times: times.to_vec(), values, stderr, used, rate: -slope, prefactor: intercept.exp(), t_star, samples })
}
