use std::collections::BTreeMap;

use gibbsflow_core::dolgopyat::{self, c0, cone_iteration, l1_contraction, norm_contraction_sweep, C0Report, CancellationParams};
use gibbsflow_core::expr::parse_observable;
use gibbsflow_core::flow::correlation;
use gibbsflow_core::gibbs::{adapted_partition, cylinder_masses, federer_audit, gibbs_audit, sample_words, SamplerConfig};
use gibbsflow_core::system::ValidationReport;
use gibbsflow_core::uni::{ab_sequences, c7, check_uni, coboundary_test, transversal_pair, uni_from_transversality, WuniParameters};
use gibbsflow_core::{Complex64, Discretization, EigenData, GridFunction, MarkovSystem};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Experiment, Params};
use crate::error::CliError;
use crate::report::{Outputs, REPORT};

/// Relative slack allowed when checking asserted inequalities.
const AUDIT_TOL: f64 = 1e-8;
/// Allowed change of lambda when the operator grid is refined twofold.
const LAMBDA_SHIFT_TOL: f64 = 1e-9;

pub const NO_CONTRACTION: &str = "no_contraction: constant_roof_detected";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub failures: Vec<String>,
    pub flags: Vec<String>,
}

pub struct Context<'a> {
    pub system: &'a MarkovSystem,
    pub params: &'a Params,
    pub seed: u64,
}

impl Context<'_> {
    fn validation(&self) -> Result<ValidationReport, CliError> {
        Ok(self.system.validate(self.params.validation_grid)?)
    }

    fn eigen(&self, sigma: f64) -> Result<(Discretization, EigenData), CliError> {
        let disc = Discretization::new(self.system, self.params.nodes)?;
        let eig = disc.eigendata(sigma)?;
        Ok((disc, eig))
    }

    fn c0(&self, report: &ValidationReport) -> Result<C0Report, CliError> {
        let (disc, eig0) = self.eigen(0.0)?;
        Ok(c0(&disc, &eig0, report.lambda, self.params.c0_variant.into(), self.params.c0_floor))
    }
}

pub fn run(exp: Experiment, ctx: &Context<'_>, out: &mut Outputs) -> Result<Outcome, CliError> {
    match exp {
        Experiment::Validate => validate(ctx, out),
        Experiment::Eigen => eigen(ctx, out),
        Experiment::GibbsAudit => gibbs(ctx, out),
        Experiment::Partition => partition(ctx, out),
        Experiment::Uni => uni(ctx, out),
        Experiment::Transversality => transversality(ctx, out),
        Experiment::Cohomology => cohomology(ctx, out),
        Experiment::Cancellation => cancellation(ctx, out),
        Experiment::Contraction => contraction(ctx, out),
        Experiment::Correlate => correlate(ctx, out),
    }
}

fn validate(ctx: &Context<'_>, out: &mut Outputs) -> Result<Outcome, CliError> {
    let r = ctx.validation()?;
    out.json(
        REPORT,
        &json!({
            "lambda": r.lambda,
            "rho": r.rho,
            "c4": r.c4,
            "c2": r.c2,
            "c7": c7(&r),
            "covering": r.covering,
            "primitive_power": r.primitive_power,
            "markov_residuals": r.markov_residuals,
            "roof_min": r.roof_min,
            "roof_max": r.roof_max,
            "grid_points": r.grid_points,
        }),
    )?;
    Ok(Outcome::default())
}

#[derive(Serialize)]
struct EigenRow {
    element: usize,
    x: f64,
    f: f64,
    nu: f64,
    mu: f64,
}

fn eigen(ctx: &Context<'_>, out: &mut Outputs) -> Result<Outcome, CliError> {
    let (disc, eig) = ctx.eigen(ctx.params.sigma)?;
    let grid = disc.grid();
    let one = GridFunction::constant(grid, Complex64::new(1.0, 0.0));
    let l1 = disc.normalized(&eig, 0.0).apply(&one);
    let residual = l1.values().iter().map(|z| (z - 1.0).norm()).fold(0.0, f64::max);
    let mass: f64 = eig.mu.iter().sum();
    let rows: Vec<EigenRow> = (0..grid.len())
        .map(|i| EigenRow { element: grid.element_of_index(i), x: grid.node(i), f: eig.f.values()[i].re, nu: eig.nu[i], mu: eig.mu[i] })
        .collect();
    out.csv("eigen.csv", &rows)?;
    let mut outcome = Outcome::default();
    if residual > AUDIT_TOL {
        outcome.failures.push(format!("normalized operator moves constants by {:e}", residual));
    }
    if eig.f_inf() <= 0.0 {
        outcome.failures.push("eigenfunction is not positive".to_string());
    }
    let fine = Discretization::new(ctx.system, 2 * ctx.params.nodes)?.eigendata(ctx.params.sigma)?;
    let shift = (fine.lambda - eig.lambda).abs();
    if shift > LAMBDA_SHIFT_TOL {
        outcome.flags.push(format!("unconverged: lambda moves by {:e} when nodes double", shift));
    }
    out.json(
        REPORT,
        &json!({
            "sigma": eig.sigma,
            "lambda": eig.lambda,
            "pressure": eig.lambda.ln(),
            "iterations": eig.iterations,
            "f_min": eig.f_inf(),
            "f_max": eig.f_sup(),
            "mu_total": mass,
            "normalized_one_residual": residual,
            "lambda_shift_doubled": shift,
            "c6": disc.c6(&eig),
        }),
    )?;
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossRow {
    pub word: String,
    pub mass: f64,
    pub frequency: f64,
    pub stderr: f64,
    pub z: f64,
}

fn word_label(w: &[usize]) -> String {
    w.iter().map(|j| j.to_string()).collect::<Vec<_>>().join(".")
}

/// Sampled depth-`depth` cylinder frequencies against exact masses, with
/// batch-means standard errors (one batch per sampler stream).
pub fn crosscheck(
    disc: &Discretization,
    eig: &EigenData,
    depth: usize,
    samples: usize,
    seed: u64,
    cfg: &SamplerConfig,
    cap: u64,
) -> Result<Vec<CrossRow>, CliError> {
    let sys = disc.system();
    let masses = cylinder_masses(disc, eig, depth, cap)?;
    let words = sample_words(sys, eig, samples, depth, seed, cfg);
    let streams = cfg.streams.max(1);
    let mut batches: Vec<BTreeMap<Vec<usize>, usize>> = Vec::with_capacity(streams);
    let mut sizes = Vec::with_capacity(streams);
    let mut start = 0;
    for s in 0..streams {
        let n = samples / streams + usize::from(s < samples % streams);
        let mut counts = BTreeMap::new();
        for w in &words[start..start + n] {
            *counts.entry(w.clone()).or_insert(0) += 1;
        }
        batches.push(counts);
        sizes.push(n);
        start += n;
    }
    let rows = masses
        .entries
        .iter()
        .map(|(word, mass)| {
            let per: Vec<f64> = batches.iter().zip(&sizes).map(|(c, &n)| *c.get(word).unwrap_or(&0) as f64 / n as f64).collect();
            let total: usize = batches.iter().map(|c| *c.get(word).unwrap_or(&0)).sum();
            let frequency = total as f64 / samples as f64;
            let m = per.iter().sum::<f64>() / per.len() as f64;
            let var = per.iter().map(|p| (p - m) * (p - m)).sum::<f64>() / (per.len() - 1).max(1) as f64;
            let stderr = (var / per.len() as f64).sqrt();
            let z = if stderr > 0.0 {
                (frequency - mass) / stderr
            } else if frequency == *mass {
                0.0
            } else {
                f64::INFINITY
            };
            CrossRow { word: word_label(word), mass: *mass, frequency, stderr, z }
        })
        .collect();
    Ok(rows)
}

#[derive(Serialize)]
struct GibbsRow {
    depth: usize,
    min_ratio: f64,
    max_ratio: f64,
}

fn gibbs(ctx: &Context<'_>, out: &mut Outputs) -> Result<Outcome, CliError> {
    let p = ctx.params;
    let (disc, eig) = ctx.eigen(p.sigma)?;
    let audit = gibbs_audit(&disc, &eig, p.depth, p.cap)?;
    let rows: Vec<GibbsRow> = audit.per_depth.iter().map(|&(depth, lo, hi)| GibbsRow { depth, min_ratio: lo, max_ratio: hi }).collect();
    out.csv("gibbs.csv", &rows)?;
    let depth = p.depth.min(3);
    let cross = crosscheck(&disc, &eig, depth, p.samples, ctx.seed, &p.sampler(), p.cap)?;
    out.csv("crosscheck.csv", &cross)?;
    let worst_z = cross.iter().map(|r| r.z.abs()).fold(0.0, f64::max);
    let mut outcome = Outcome::default();
    if !(audit.lower > 0.0 && audit.upper.is_finite()) {
        outcome.failures.push("cylinder masses are not comparable to Birkhoff weights".to_string());
    }
    if worst_z > 3.0 {
        outcome.failures.push(format!("sampled cylinder frequency off by {:.2} SE", worst_z));
    }
    out.json(
        REPORT,
        &json!({
            "sigma": eig.sigma,
            "pressure": eig.lambda.ln(),
            "c5": audit.c5(),
            "lower": audit.lower,
            "upper": audit.upper,
            "crosscheck_depth": depth,
            "crosscheck_samples": p.samples,
            "crosscheck_max_abs_z": worst_z,
        }),
    )?;
    Ok(outcome)
}

#[derive(Serialize)]
struct PartitionRow {
    b: f64,
    cells: usize,
    min_diam: f64,
    max_diam: f64,
    lower: f64,
    upper: f64,
    count_bound: f64,
    gamma: f64,
    delta_prime: f64,
}

fn partition(ctx: &Context<'_>, out: &mut Outputs) -> Result<Outcome, CliError> {
    let p = ctx.params;
    let report = ctx.validation()?;
    let scale = p.scale.unwrap_or(1.0);
    let (disc, eig) = ctx.eigen(p.sigma)?;
    let budget = match p.federer_budget {
        Some(k) => k,
        None => ctx.c0(&report)?.value,
    };
    let mut rows = Vec::new();
    let mut outcome = Outcome::default();
    for b in p.b_list(Experiment::Partition) {
        let part = adapted_partition(ctx.system, b, scale)?;
        let diams: Vec<f64> = part.cells.iter().map(|c| c.diam()).collect();
        let min_diam = diams.iter().copied().fold(f64::INFINITY, f64::min);
        let max_diam = diams.iter().copied().fold(0.0, f64::max);
        let lower = 2.0 * scale / b.abs();
        let upper = lower * report.rho;
        let count_bound = b.abs() / (2.0 * scale);
        if min_diam < lower * (1.0 - 1e-12) || max_diam > upper * (1.0 + 1e-12) || part.cells.len() as f64 > count_bound {
            outcome.failures.push(format!("partition at b = {} leaves the band [{}, {}]", b, lower, upper));
        }
        let fed = federer_audit(&disc, &eig, &part, p.delta.min(scale / 2.0), budget)?;
        rows.push(PartitionRow {
            b,
            cells: part.cells.len(),
            min_diam,
            max_diam,
            lower,
            upper,
            count_bound,
            gamma: fed.gamma,
            delta_prime: fed.delta_prime,
        });
    }
    out.csv("partition.csv", &rows)?;
    out.json(REPORT, &json!({ "scale": scale, "rho": report.rho, "federer_budget": budget, "rows": rows.len() }))?;
    Ok(outcome)
}

#[derive(Serialize)]
struct UniRow {
    b: f64,
    head: usize,
    tail: usize,
    scale: f64,
    bound: f64,
    covered: usize,
    missing: usize,
    pass_rate: f64,
    worst_margin: f64,
}

fn uni(ctx: &Context<'_>, out: &mut Outputs) -> Result<Outcome, CliError> {
    let p = ctx.params;
    let report = ctx.validation()?;
    let k = c7(&report);
    let check = check_uni(ctx.system, p.uni_depth, p.uni_radius, 128, p.cap)?;
    let mut outcome = Outcome::default();
    let mut rows = Vec::new();
    if k == 0.0 {
        outcome.flags.push("no_uni: roof derivative vanishes".to_string());
    } else {
        for b in p.b_list(Experiment::Uni) {
            let params = WuniParameters::new(k, report.rho, p.delta, b, p.beta.unwrap_or(0.2), p.min_tail)?;
            let r = uni_from_transversality(ctx.system, k, params, 256, 64);
            if r.covered > 0 && r.worst_margin < 0.0 {
                outcome.failures.push(format!("|D psi| below its bound at b = {}", b));
            }
            rows.push(UniRow {
                b,
                head: params.head,
                tail: params.tail,
                scale: params.scale,
                bound: params.bound,
                covered: r.covered,
                missing: r.missing.len(),
                pass_rate: r.pass_rate,
                worst_margin: r.worst_margin,
            });
        }
    }
    out.csv("uni.csv", &rows)?;
    out.json(REPORT, &json!({ "c7": k, "depth": check.depth, "radius": check.radius, "d_full": check.d_full, "d_point": check.d_point }))?;
    Ok(outcome)
}

#[derive(Serialize)]
struct AbRow {
    n: usize,
    a: f64,
    b: f64,
    points: usize,
}

/// `"constant"` when every entry is 1 within 1e-6, `"decreasing"` otherwise.
pub fn trend(values: &[f64]) -> &'static str {
    if values.iter().all(|v| (v - 1.0).abs() <= 1e-6) {
        "constant"
    } else {
        "decreasing"
    }
}

/// Largest violation of `b(n + m) <= b(n) b(m)`.
pub fn submultiplicative_excess(b: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for n in 1..=b.len() {
        for m in 1..=b.len() {
            if n + m <= b.len() {
                worst = worst.max(b[n + m - 1] - b[n - 1] * b[m - 1]);
            }
        }
    }
    worst
}

fn transversality(ctx: &Context<'_>, out: &mut Outputs) -> Result<Outcome, CliError> {
    let p = ctx.params;
    let report = ctx.validation()?;
    let k = c7(&report);
    let (_, eig0) = ctx.eigen(0.0)?;
    let seq = ab_sequences(ctx.system, &eig0, k, p.n_max, p.ab_grid, p.cap)?;
    let rows: Vec<AbRow> = (0..seq.a.len()).map(|i| AbRow { n: i + 1, a: seq.a[i], b: seq.b[i], points: seq.points[i] }).collect();
    out.csv("ab.csv", &rows)?;
    let pair = (1..=p.n_max).find_map(|n| transversal_pair(ctx.system, k, n, 0.3).map(|pr| (n, pr)));
    let mut outcome = Outcome::default();
    if seq.a.iter().chain(&seq.b).any(|&v| v > 1.0 + AUDIT_TOL) {
        outcome.failures.push("a(n) or b(n) exceeds 1".to_string());
    }
    let excess = submultiplicative_excess(&seq.b);
    if excess > 1e-6 {
        outcome.failures.push(format!("b(n) is not submultiplicative (excess {:e})", excess));
    }
    out.json(
        REPORT,
        &json!({
            "c7": k,
            "a": seq.a,
            "b": seq.b,
            "a_trend": trend(&seq.a),
            "b_submultiplicative_excess": excess,
            "transversal_pair": pair.map(|(n, (w1, w2))| json!({ "depth": n, "y": 0.3, "first": w1, "second": w2 })),
        }),
    )?;
    Ok(outcome)
}

fn coboundary_json(ctx: &Context<'_>, report: &ValidationReport) -> Result<(bool, Value), CliError> {
    let p = ctx.params;
    let c = coboundary_test(ctx.system, report, p.truncation, p.coboundary_tol, 128)?;
    Ok((
        c.cohomologous,
        json!({
            "cohomologous": c.cohomologous,
            "residual": c.residual,
            "tail_bound": c.tail_bound,
            "truncation": c.truncation,
            "constants": c.constants,
            "chain_difference": c.chain_difference,
        }),
    ))
}

fn cohomology(ctx: &Context<'_>, out: &mut Outputs) -> Result<Outcome, CliError> {
    let report = ctx.validation()?;
    let (_, value) = coboundary_json(ctx, &report)?;
    out.json(REPORT, &value)?;
    Ok(Outcome::default())
}

#[derive(Serialize)]
struct StepRow {
    b: f64,
    step: usize,
    l2: f64,
    ratio: f64,
    modulus_margin: f64,
    log_u_margin: f64,
    v_hoelder_margin: f64,
    cancellation_margin: f64,
    witnesses: usize,
    min_witness_margin: f64,
    first_cases: usize,
    min_chi: f64,
    max_chi_slope: f64,
}

fn c0_json(c: &C0Report) -> Value {
    json!({ "printed": c.printed, "divided": c.divided, "value": c.value, "floor": c.floor, "floored": c.floored })
}

fn cancellation(ctx: &Context<'_>, out: &mut Outputs) -> Result<Outcome, CliError> {
    let p = ctx.params;
    let report = ctx.validation()?;
    let k = c7(&report);
    let c0r = ctx.c0(&report)?;
    let b_list = p.b_list(Experiment::Cancellation);
    // all gates before any iteration
    let setups = b_list
        .iter()
        .map(|&b| {
            CancellationParams::new(
                ctx.system,
                &report,
                p.sigma,
                b,
                p.delta,
                p.beta.unwrap_or(0.2),
                c0r.value,
                k,
                p.min_tail,
                p.grid_factor,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (_, eig) = ctx.eigen(p.sigma)?;
    let mut rows = Vec::new();
    let mut per_b = Vec::new();
    let mut outcome = Outcome::default();
    for params in &setups {
        let trace = cone_iteration(ctx.system, &eig, params, None, p.steps, p.scan)?;
        for s in &trace.steps {
            let worst = s.margins.worst();
            if worst < -AUDIT_TOL || s.margins.min_u <= 0.0 {
                outcome.failures.push(format!("b = {}: cone left at step {} (margin {:e})", params.b, s.step, worst));
            }
            if s.cancellation < -1e-9 {
                outcome.failures.push(format!("b = {}: cancellation inequality fails at step {}", params.b, s.step));
            }
            if !(s.ratio < 1.0) {
                outcome.failures.push(format!("b = {}: L2 ratio {} at step {}", params.b, s.ratio, s.step));
            }
            if s.min_chi < params.eta - 1e-12 || s.max_chi_slope > params.b.abs() * (1.0 + 1e-9) {
                outcome.failures.push(format!("b = {}: bump leaves its range at step {}", params.b, s.step));
            }
            rows.push(StepRow {
                b: params.b,
                step: s.step,
                l2: s.l2,
                ratio: s.ratio,
                modulus_margin: s.margins.modulus,
                log_u_margin: s.margins.log_u,
                v_hoelder_margin: s.margins.v_hoelder,
                cancellation_margin: s.cancellation,
                witnesses: s.witnesses,
                min_witness_margin: s.min_witness_margin,
                first_cases: s.first_cases,
                min_chi: s.min_chi,
                max_chi_slope: s.max_chi_slope,
            });
        }
        let fm = trace.final_margins;
        if fm.worst() < -AUDIT_TOL {
            outcome.failures.push(format!("b = {}: final pair outside the cone", params.b));
        }
        per_b.push(json!({
            "b": params.b,
            "head": params.wuni.head,
            "tail": params.wuni.tail,
            "scale": params.wuni.scale,
            "uni_bound": params.wuni.bound,
            "contraction": params.contraction,
            "eta": params.eta,
            "cells": params.partition.cells.len(),
            "nodes": params.nodes,
            "tau_hat": trace.steps.iter().map(|s| s.ratio).fold(0.0, f64::max),
            "final_margin": fm.worst(),
        }));
    }
    out.csv("cancellation.csv", &rows)?;
    out.json(REPORT, &json!({ "c0": c0_json(&c0r), "c7": k, "delta": p.delta, "eta0": dolgopyat::ETA0, "runs": per_b }))?;
    Ok(outcome)
}

#[derive(Serialize)]
struct ContractionCsv {
    b: f64,
    k: usize,
    l1_ratio: f64,
    admitted: usize,
    c6: f64,
    ell: usize,
    norm_ratio: f64,
    zeta_hat: f64,
    envelope: f64,
    xi_hat: f64,
}

fn contraction(ctx: &Context<'_>, out: &mut Outputs) -> Result<Outcome, CliError> {
    let p = ctx.params;
    let report = ctx.validation()?;
    let (cohomologous, cob) = coboundary_json(ctx, &report)?;
    let mut outcome = Outcome::default();
    if cohomologous {
        outcome.flags.push(NO_CONTRACTION.to_string());
        out.csv::<ContractionCsv>("contraction.csv", &[])?;
        out.json(REPORT, &json!({ "cohomologous": true, "coboundary": cob, "contraction": "none" }))?;
        return Ok(outcome);
    }
    let c0r = ctx.c0(&report)?;
    let beta = p.beta.unwrap_or(1.0);
    let b_list = p.b_list(Experiment::Contraction);
    for &b in &b_list {
        dolgopyat::check_beta(report.lambda, ctx.system.alpha(), beta, c0r.value, b)?;
    }
    let l1 = l1_contraction(ctx.system, report.lambda, p.sigma, &b_list, beta, p.family, ctx.seed)?;
    let sweep = norm_contraction_sweep(ctx.system, p.sigma, &b_list, p.sweep_scale, p.family, p.refine, ctx.seed)?;
    let mut rows = Vec::new();
    for (r, s) in l1.rows.iter().zip(&sweep.rows) {
        if r.ratio > r.c6 * (1.0 + AUDIT_TOL) {
            outcome.failures.push(format!("b = {}: L1 ratio {} exceeds C6 {}", r.b, r.ratio, r.c6));
        }
        if !r.envelope {
            outcome.failures.push(format!("b = {}: L1 <= L2 <= Linf fails", r.b));
        }
        if !(r.ratio < 1.0) {
            outcome.failures.push(format!("b = {}: no L1 contraction (ratio {})", r.b, r.ratio));
        }
        if !(s.zeta_hat < 1.0) {
            outcome.failures.push(format!("b = {}: no norm contraction (zeta {})", s.b, s.zeta_hat));
        }
        rows.push(ContractionCsv {
            b: r.b,
            k: r.k,
            l1_ratio: r.ratio,
            admitted: r.admitted,
            c6: r.c6,
            ell: s.ell,
            norm_ratio: s.ratio,
            zeta_hat: s.zeta_hat,
            envelope: s.envelope,
            xi_hat: l1.xi_hat,
        });
    }
    if !(l1.xi_hat > 0.0) {
        outcome.failures.push(format!("fitted xi {} is not positive", l1.xi_hat));
    }
    out.csv("contraction.csv", &rows)?;
    out.json(
        REPORT,
        &json!({
            "cohomologous": false,
            "coboundary": cob,
            "c0": c0_json(&c0r),
            "beta": beta,
            "sweep_scale": p.sweep_scale,
            "xi_hat": l1.xi_hat,
            "zeta_max": sweep.zeta_max,
            "contraction": "exponential",
        }),
    )?;
    Ok(outcome)
}

#[derive(Serialize)]
struct CorrelationRow {
    t: f64,
    c_hat: f64,
    stderr: f64,
    used_in_fit: bool,
}

fn correlate(ctx: &Context<'_>, out: &mut Outputs) -> Result<Outcome, CliError> {
    let p = ctx.params;
    let v = parse_observable(&p.v).map_err(|e| crate::error::ConfigError::invalid("/params/v", e.to_string()))?;
    let w = parse_observable(&p.w).map_err(|e| crate::error::ConfigError::invalid("/params/w", e.to_string()))?;
    let (_, eig) = ctx.eigen(p.sigma)?;
    let series = correlation(ctx.system, &eig, &v, &w, &p.time_grid(), p.samples, ctx.seed, &p.sampler())?;
    let rows: Vec<CorrelationRow> = (0..series.times.len())
        .map(|i| CorrelationRow { t: series.times[i], c_hat: series.values[i], stderr: series.stderr[i], used_in_fit: series.used[i] })
        .collect();
    out.csv("correlation.csv", &rows)?;
    let used: Vec<f64> = (0..series.times.len()).filter(|&i| series.used[i]).map(|i| series.times[i]).collect();
    out.json(
        REPORT,
        &json!({
            "v": p.v,
            "w": p.w,
            "samples": series.samples,
            "rate": series.rate,
            "prefactor": series.prefactor,
            "t_star": series.t_star,
            "usable": series.usable(),
            "window": [used.first(), used.last()],
        }),
    )?;
    Ok(Outcome::default())
}
