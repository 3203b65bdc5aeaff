//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::path::Path;
use std::time::{Duration, Instant};

use gibbsflow::config::{Experiment, ExperimentConfig, Params};
use gibbsflow::experiments::{crosscheck, submultiplicative_excess};
use gibbsflow::Request;
use gibbsflow_core::dolgopyat::{c0, cone_iteration, l1_contraction, C0Variant, CancellationParams};
use gibbsflow_core::expr::parse_observable;
use gibbsflow_core::flow::correlation;
use gibbsflow_core::gibbs::{adapted_partition, cylinder_masses, gibbs_audit, SamplerConfig};
use gibbsflow_core::presets;
use gibbsflow_core::system::DEFAULT_CAP;
use gibbsflow_core::uni::{ab_sequences, c7, coboundary_test, cone_image, psi, transversal_pair};
use gibbsflow_core::{Complex64, Discretization, GridFunction, MarkovSystem};

type Verdict = Result<String, String>;
type Criterion = (&'static str, u64, fn() -> Verdict);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn system(name: &str) -> MarkovSystem {
    presets::spec(name).unwrap().build().unwrap()
}

fn rpf_exactness() -> Verdict {
    let a = presets::sys_a();
    let disc = Discretization::new(&a, 1024).map_err(|e| e.to_string())?;
    let eig = disc.eigendata(0.0).map_err(|e| e.to_string())?;
    let f_dev = eig.f.values().iter().map(|z| (z - 1.0).norm()).fold(0.0, f64::max);
    let one = GridFunction::constant(disc.grid(), Complex64::new(1.0, 0.0));
    let l1 = disc.normalized(&eig, 0.0).apply(&one);
    let l_dev = l1.values().iter().map(|z| (z - 1.0).norm()).fold(0.0, f64::max);
    ensure((eig.lambda - 2.0).abs() <= 1e-9, || format!("lambda = {}", eig.lambda))?;
    ensure(f_dev <= 1e-8, || format!("|f - 1| = {:e}", f_dev))?;
    ensure(l_dev <= 1e-8, || format!("|L1 - 1| = {:e}", l_dev))?;
    Ok(format!("lambda - 2 = {:e}, |f - 1| = {:e}, |L1 - 1| = {:e}", eig.lambda - 2.0, f_dev, l_dev))
}

fn gibbs_constants() -> Verdict {
    let a = presets::sys_a();
    let disc = Discretization::new(&a, 1024).map_err(|e| e.to_string())?;
    let eig = disc.eigendata(0.0).map_err(|e| e.to_string())?;
    let audit = gibbs_audit(&disc, &eig, 12, DEFAULT_CAP).map_err(|e| e.to_string())?;
    ensure(audit.lower >= 1.0 - 1e-6 && audit.upper <= 1.0 + 1e-6, || format!("C5 ratios in [{}, {}]", audit.lower, audit.upper))?;
    let bern = presets::bernoulli();
    let disc = Discretization::new(&bern, 1024).map_err(|e| e.to_string())?;
    let eig = disc.eigendata(0.0).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for depth in 1..=10 {
        let m = cylinder_masses(&disc, &eig, depth, DEFAULT_CAP).map_err(|e| e.to_string())?;
        for (w, mass) in &m.entries {
            let product: f64 = w.iter().map(|&j| if j == 0 { 0.3 } else { 0.7 }).product();
            worst = worst.max((mass - product).abs());
        }
    }
    ensure(worst <= 1e-8, || format!("Bernoulli masses off by {:e}", worst))?;
    Ok(format!("C5 = {:.9}, Bernoulli mass error {:e}", audit.c5(), worst))
}

fn adapted_partitions() -> Verdict {
    let mut total = 0;
    for name in ["SYS-A", "SYS-B", "SYS-C"] {
        let sys = system(name);
        let rho = sys.validate(2048).map_err(|e| e.to_string())?.rho;
        for k in 7..=12 {
            let b = 2f64.powi(k);
            let part = adapted_partition(&sys, b, 1.0).map_err(|e| e.to_string())?;
            let (lo, hi) = (2.0 / b, 2.0 * rho / b);
            for c in &part.cells {
                let d = c.diam();
                ensure(lo <= d * (1.0 + 1e-12) && d <= hi * (1.0 + 1e-12), || {
                    format!("{} b = {}: cell {:?} has diam {} outside [{}, {}]", name, b, c.word, d, lo, hi)
                })?;
            }
            ensure(part.cells.len() as f64 <= b / 2.0, || format!("{} b = {}: {} cells", name, b, part.cells.len()))?;
            total += part.cells.len();
        }
    }
    Ok(format!("{} cells checked", total))
}

fn trichotomy() -> Verdict {
    let mut notes = Vec::new();
    for name in ["SYS-A", "DOUBLING-LINEAR"] {
        let sys = system(name);
        let rep = sys.validate(2048).map_err(|e| e.to_string())?;
        let cob = coboundary_test(&sys, &rep, 40, 1e-6, 128).map_err(|e| e.to_string())?;
        ensure(cob.cohomologous && cob.residual < 1e-6, || format!("{}: residual {:e}", name, cob.residual))?;
        let eig0 = Discretization::new(&sys, 512).and_then(|d| d.eigendata(0.0)).map_err(|e| e.to_string())?;
        let seq = ab_sequences(&sys, &eig0, c7(&rep), 8, 512, DEFAULT_CAP).map_err(|e| e.to_string())?;
        let dev = seq.a.iter().chain(&seq.b).map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
        ensure(dev <= 1e-6, || format!("{}: a/b deviate from 1 by {:e}", name, dev))?;
        notes.push(format!("{} residual {:.1e}", name, cob.residual));
    }
    for name in ["SYS-B", "SYS-C-NL"] {
        let sys = system(name);
        let rep = sys.validate(2048).map_err(|e| e.to_string())?;
        let k = c7(&rep);
        let cob = coboundary_test(&sys, &rep, 40, 1e-6, 128).map_err(|e| e.to_string())?;
        ensure(!cob.cohomologous && cob.residual > 1e-5, || format!("{}: residual {:e}", name, cob.residual))?;
        let eig0 = Discretization::new(&sys, 512).and_then(|d| d.eigendata(0.0)).map_err(|e| e.to_string())?;
        let seq = ab_sequences(&sys, &eig0, k, 10, 512, DEFAULT_CAP).map_err(|e| e.to_string())?;
        let first = seq.a.iter().position(|&v| v < 1.0 - 1e-9);
        ensure(first.is_some(), || format!("{}: a(n) = 1 up to n = 10", name))?;
        let pair = (1..=10).find(|&n| transversal_pair(&sys, k, n, 0.3).is_some());
        ensure(pair.is_some(), || format!("{}: no transversal pair", name))?;
        notes.push(format!("{} residual {:.2}, a < 1 from n = {}, pair at n = {}", name, cob.residual, first.unwrap() + 1, pair.unwrap()));
    }
    Ok(notes.join("; "))
}

fn structural_bounds() -> Verdict {
    let mut notes = Vec::new();
    for name in ["SYS-B", "SYS-C", "SYS-C-NL"] {
        let sys = system(name);
        let rep = sys.validate(2048).map_err(|e| e.to_string())?;
        let k = c7(&rep);
        let eig0 = Discretization::new(&sys, 512).and_then(|d| d.eigendata(0.0)).map_err(|e| e.to_string())?;
        let seq = ab_sequences(&sys, &eig0, k, 8, 256, DEFAULT_CAP).map_err(|e| e.to_string())?;
        let top = seq.a.iter().chain(&seq.b).copied().fold(0.0, f64::max);
        ensure(top <= 1.0 + 1e-9, || format!("{}: max a/b = {}", name, top))?;
        let excess = submultiplicative_excess(&seq.b);
        ensure(excess <= 1e-6, || format!("{}: b submultiplicative excess {:e}", name, excess))?;
        let (mut worst_psi, mut worst_half, mut cones): (f64, f64, usize) = (0.0, 0.0, 0);
        for n in 1..=8 {
            let words: Vec<Vec<usize>> = sys.cylinders(n, DEFAULT_CAP).map_err(|e| e.to_string())?.into_iter().map(|c| c.word).collect();
            for (i, w) in words.iter().enumerate() {
                let (lo, hi) = sys.inverse_branch(w).map(|b| b.domain).map_err(|e| e.to_string())?;
                let (y0, y1) = (sys.breakpoints()[lo], sys.breakpoints()[hi]);
                let other = &words[(i * 7919 + 13) % words.len()];
                let pair = psi(&sys, w, other).ok();
                for q in 0..16 {
                    let y = y0 + (y1 - y0) * (q as f64 + 0.5) / 16.0;
                    worst_half = worst_half.max(sys.eval_branch(w, y).droof_sum.abs());
                    if let Some(p) = &pair {
                        let (a, b) = p.bounds();
                        if y >= a && y <= b {
                            worst_psi = worst_psi.max(p.deriv(y).abs());
                        }
                    }
                }
            }
            for q in 0..64 {
                let x = (q as f64 + 0.5) / 64.0;
                let img = cone_image(&sys, k, x, n);
                ensure(img.within(-k * (1.0 + 1e-12), k * (1.0 + 1e-12)), || {
                    format!("{}: cone image at x = {}, n = {} is {:?}", name, x, n, img)
                })?;
                cones += 1;
            }
        }
        ensure(worst_half <= 0.5 * k + 1e-12, || format!("{}: |D(S_n r o h)| = {} > C7/2 = {}", name, worst_half, 0.5 * k))?;
        ensure(worst_psi <= k + 1e-12, || format!("{}: |D psi| = {} > C7 = {}", name, worst_psi, k))?;
        notes.push(format!("{} |Dpsi|/C7 = {:.3} ({} cones)", name, if k > 0.0 { worst_psi / k } else { 0.0 }, cones));
    }
    Ok(notes.join("; "))
}

fn cancellation() -> Verdict {
    let sys = presets::sys_b();
    let rep = sys.validate(2048).map_err(|e| e.to_string())?;
    let k = c7(&rep);
    let disc = Discretization::new(&sys, 1024).map_err(|e| e.to_string())?;
    let eig = disc.eigendata(0.0).map_err(|e| e.to_string())?;
    let c0r = c0(&disc, &eig, rep.lambda, C0Variant::Printed, 0.1);
    let mut notes = Vec::new();
    for b in [256.0, 1024.0] {
        let start = Instant::now();
        let params = CancellationParams::new(&sys, &rep, 0.0, b, 0.05, 0.2, c0r.value, k, 1, 6.0).map_err(|e| e.to_string())?;
        let trace = cone_iteration(&sys, &eig, &params, None, 10, 64).map_err(|e| format!("b = {}: {}", b, e))?;
        ensure(trace.steps.len() == 10, || "short trace".to_string())?;
        for s in &trace.steps {
            ensure(s.witnesses == params.partition.cells.len(), || format!("b = {}: {} witnesses", b, s.witnesses))?;
            ensure(s.cancellation >= -1e-9, || format!("b = {}: cancellation margin {:e}", b, s.cancellation))?;
            ensure(s.margins.worst() >= -1e-8 && s.margins.min_u > 0.0, || {
                format!("b = {}: cone margin {:e} at step {}", b, s.margins.worst(), s.step)
            })?;
            ensure(s.ratio < 1.0, || format!("b = {}: ratio {} at step {}", b, s.ratio, s.step))?;
        }
        ensure(trace.final_margins.worst() >= -1e-8, || format!("b = {}: final cone margin {:e}", b, trace.final_margins.worst()))?;
        let elapsed = start.elapsed();
        ensure(elapsed < Duration::from_secs(300), || format!("b = {} took {:?}", b, elapsed))?;
        let tau = trace.steps.iter().map(|s| s.ratio).fold(0.0, f64::max);
        notes.push(format!(
            "b = {}: {} cells, tau = 1 - {:.2e}, {:.1}s",
            b,
            params.partition.cells.len(),
            1.0 - tau,
            elapsed.as_secs_f64()
        ));
    }
    Ok(notes.join("; "))
}

fn contraction() -> Verdict {
    let sys = presets::sys_b();
    let rep = sys.validate(2048).map_err(|e| e.to_string())?;
    let b_list: Vec<f64> = (8..=12).map(|k| 2f64.powi(k)).collect();
    let r = l1_contraction(&sys, rep.lambda, 0.0, &b_list, 1.0, 200, 7).map_err(|e| e.to_string())?;
    for row in &r.rows {
        ensure(row.ratio < 1.0, || format!("b = {}: ratio {}", row.b, row.ratio))?;
        ensure(row.ratio <= row.c6 * (1.0 + 1e-9), || format!("b = {}: ratio above C6", row.b))?;
    }
    ensure(r.xi_hat > 0.0, || format!("xi = {}", r.xi_hat))?;
    let a = presets::sys_a();
    let ctl = l1_contraction(&a, 2.0, 0.0, &[2.0 * PI], 1.0, 20, 7).map_err(|e| e.to_string())?;
    let ratio = ctl.rows[0].ratio;
    ensure((ratio - 1.0).abs() <= 1e-6, || format!("SYS-A control ratio {}", ratio))?;
    let worst = r.rows.iter().map(|x| x.ratio).fold(0.0, f64::max);
    Ok(format!("max ratio {:.4}, xi = {:.3}, control {:.9}", worst, r.xi_hat, ratio))
}

fn mixing() -> Verdict {
    let cfg = SamplerConfig::default();
    let a = presets::sys_a();
    let ea = Discretization::new(&a, 512).and_then(|d| d.eigendata(0.0)).map_err(|e| e.to_string())?;
    let v = parse_observable("cos(2*pi*u)").map_err(|e| e.to_string())?;
    let ints: Vec<f64> = (0..=20).map(|k| k as f64).collect();
    let sa = correlation(&a, &ea, &v, &v, &ints, 200_000, 11, &cfg).map_err(|e| e.to_string())?;
    for (t, c) in sa.times.iter().zip(&sa.values) {
        ensure(c.abs() >= sa.values[0].abs() / 2.0, || format!("SYS-A decays at t = {}: {}", t, c))?;
    }
    let b = presets::sys_b();
    let eb = Discretization::new(&b, 1024).and_then(|d| d.eigendata(0.0)).map_err(|e| e.to_string())?;
    let v = parse_observable("cos(2*pi*u)+x").map_err(|e| e.to_string())?;
    let times: Vec<f64> = (0..=60).map(|k| k as f64 * 0.5).collect();
    let sb = correlation(&b, &eb, &v, &v, &times, 1_000_000, 11, &cfg).map_err(|e| e.to_string())?;
    ensure(sb.rate > 0.0, || format!("SYS-B rate {}", sb.rate))?;
    let t_star = sb.t_star.ok_or_else(|| "SYS-B correlation never drops below 5 SE".to_string())?;
    for i in 0..sb.times.len() {
        if sb.times[i] >= t_star {
            ensure(sb.values[i].abs() < 5.0 * sb.stderr[i], || format!("|C({})| above 5 SE", sb.times[i]))?;
        }
    }
    Ok(format!("SYS-A C(k)/C(0) = 1, SYS-B rate {:.3}, t* = {}", sb.rate, t_star))
}

fn sampler_crosscheck() -> Verdict {
    let mut worst: (f64, String) = (0.0, String::new());
    for name in presets::NAMES {
        let sys = system(name);
        let disc = Discretization::new(&sys, 1024).map_err(|e| e.to_string())?;
        let eig = disc.eigendata(0.0).map_err(|e| e.to_string())?;
        let rows = crosscheck(&disc, &eig, 3, 200_000, 2024, &SamplerConfig::default(), DEFAULT_CAP).map_err(|e| e.to_string())?;
        for r in rows {
            if r.z.abs() > worst.0 {
                worst = (r.z.abs(), format!("{} {}", name, r.word));
            }
        }
    }
    ensure(worst.0 <= 3.0, || format!("{} is {:.2} SE off", worst.1, worst.0))?;
    Ok(format!("max |z| = {:.2} ({})", worst.0, worst.1))
}

fn csv_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn determinism() -> Verdict {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = 0;
    for (exp, params) in [
        (Experiment::GibbsAudit, Params { samples: 50_000, ..Params::default() }),
        (Experiment::Correlate, Params { samples: 20_000, times: vec![0.0, 0.5, 1.0, 1.5, 2.0], ..Params::default() }),
        (Experiment::Contraction, Params { b: vec![256.0], family: 20, ..Params::default() }),
    ] {
        let cfg = ExperimentConfig { experiment: Some(exp), preset: Some("SYS-B".into()), seed: 5, params, ..Default::default() };
        let path = tmp.path().join(format!("{}.json", exp.name()));
        std::fs::write(&path, serde_json::to_vec(&cfg).unwrap()).map_err(|e| e.to_string())?;
        let mut runs = Vec::new();
        for k in 0..2 {
            let out = tmp.path().join(format!("{}-{}", exp.name(), k));
            let req = Request { config: Some(path.clone()), out: Some(out.clone()), ..Default::default() };
            let done = gibbsflow::run(&req).map_err(|e| e.to_string())?;
            runs.push((csv_bytes(&out), done.manifest.config_sha256));
        }
        ensure(!runs[0].0.is_empty(), || format!("{}: no CSV written", exp.name()))?;
        ensure(runs[0] == runs[1], || format!("{}: outputs differ between runs", exp.name()))?;
        files += runs[0].0.len();
    }
    Ok(format!("{} CSV files byte-identical", files))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("RPF exactness", 5, rpf_exactness),
        ("Gibbs audit", 30, gibbs_constants),
        ("adapted partition", 10, adapted_partitions),
        ("trichotomy", 180, trichotomy),
        ("structural bounds", 120, structural_bounds),
        ("cancellation and cone iteration", 600, cancellation),
        ("L1 contraction", 900, contraction),
        ("mixing vs rigidity", 600, mixing),
        ("sampler cross-oracle", 120, sampler_crosscheck),
        ("determinism", 600, determinism),
    ];
    let mut failed = 0;
    for (i, (name, limit, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let verdict = check();
        let secs = start.elapsed().as_secs_f64();
        let verdict = match verdict {
            Ok(d) if secs > *limit as f64 => Err(format!("{} but took {:.1}s (limit {}s)", d, secs, limit)),
            v => v,
        };
        match verdict {
            Ok(detail) => println!("PASS {:>2} {} [{:.1}s]: {}", i + 1, name, secs, detail),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {} [{:.1}s]: {}", i + 1, name, secs, why)
            }
        }
    }
    println!("{}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
