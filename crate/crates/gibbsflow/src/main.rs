use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, ValueEnum};
use gibbsflow::config::Experiment;
use gibbsflow::{bundle, seed_from_env, Request};

#[derive(Debug, Clone, Copy)]
enum Task {
    Run(Experiment),
    Bundle,
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "bundle" {
            return Ok(Task::Bundle);
        }
        Experiment::from_str(s, false).map(Task::Run)
    }
}

/// Audits for suspension semiflows over Markov interval maps.
#[derive(Debug, Parser)]
#[command(name = "gibbsflow", version)]
struct Cli {
    /// validate, eigen, gibbs-audit, partition, uni, transversality,
    /// cohomology, cancellation, contraction, correlate, or bundle
    task: Task,
    /// Run directories to merge (bundle only).
    dirs: Vec<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// SYS-A, SYS-B, SYS-C, SYS-C-NL, DOUBLING-LINEAR or BERNOULLI.
    #[arg(long)]
    preset: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match cli.task {
        Task::Bundle => {
            let out = cli.out.unwrap_or_else(|| PathBuf::from("bundle"));
            match bundle::bundle(&cli.dirs, &out) {
                Ok(rows) => {
                    for r in rows {
                        println!("{}", serde_json::to_string(&r).unwrap_or_default());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
        Task::Run(exp) => {
            let seed = match seed_from_env() {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(1);
                }
            };
            let req = Request { experiment: Some(exp), config: cli.config, preset: cli.preset, out: cli.out, seed };
            match gibbsflow::run(&req) {
                Ok(done) => {
                    println!("{} {} -> {}", done.manifest.experiment, done.manifest.status, done.dir.display());
                    for f in &done.manifest.flags {
                        println!("flag: {f}");
                    }
                    for f in &done.manifest.audit_failures {
                        eprintln!("audit: {f}");
                    }
                    ExitCode::from(done.exit_code() as u8)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
    }
}
