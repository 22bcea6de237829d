//! `kinetic-lab --config study.toml [--out DIR] [--seed N] [--parallel N]`
//!
//! Exit codes: 0 every assertion passed, 1 an assertion failed, 2 the
//! configuration was rejected (nothing written), 3 a solver aborted (the
//! rows gathered before the abort are still written).

mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::Parser;
use kinetic_lab::study::{run_epsilon, summarize, EpsilonRun, RunConfig, StudySetup};

#[derive(Parser, Debug)]
#[command(name = "kinetic-lab", version, about = "Paired kinetic/fluid ε studies with entropy budgets")]
struct Args {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for the random initial profiles; overrides `seed` in the file.
    #[arg(long)]
    seed: Option<u64>,
    /// ε values run concurrently.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
}

const EXIT_ASSERTION: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_ABORT: u8 = 3;

fn load(args: &Args) -> Result<(RunConfig, PathBuf), String> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| format!("{}: {e}", args.config.display()))?;
    let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| format!("{}: {e}", args.config.display()))?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .ok_or("no output directory: pass --out or set output_dir")?;
    if args.parallel == 0 {
        return Err("--parallel must be at least 1".into());
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok((cfg, out))
}

/// Runs every ε on `slots` workers; results keep the order of `epsilon_list`.
fn sweep(cfg: &RunConfig, setup: &StudySetup, slots: usize) -> Vec<EpsilonRun> {
    let eps = &cfg.epsilon_list;
    let results: Vec<Mutex<Option<EpsilonRun>>> = eps.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..slots.min(eps.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&e) = eps.get(i) else { break };
                let run = run_epsilon(cfg, setup, e)
                    .unwrap_or_else(|err| EpsilonRun { epsilon: e, reports: Vec::new(), abort: Some(err) });
                eprintln!("ε = {e}: {} rows{}", run.reports.len(), run.abort.as_ref().map_or(String::new(), |a| format!(", aborted: {a}")));
                *results[i].lock().expect("no worker panics while holding the slot") = Some(run);
            });
        }
    });
    results.into_iter().map(|m| m.into_inner().expect("slot lock").expect("every ε was run")).collect()
}

fn main() -> ExitCode {
    let args = Args::parse();
    let (cfg, out) = match load(&args) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let setup = match StudySetup::new(&cfg) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let runs = sweep(&cfg, &setup, args.parallel);
    let summary = summarize(&cfg, &runs);
    if let Err(e) = output::write_all(&out, &runs, &summary) {
        eprintln!("cannot write results to {}: {e}", out.display());
        return ExitCode::from(EXIT_CONFIG);
    }
    for a in &summary.assertions {
        println!("{} {}: {}", if a.pass { "PASS" } else { "FAIL" }, a.name, a.detail);
    }
    if !summary.aborted.is_empty() {
        ExitCode::from(EXIT_ABORT)
    } else if !summary.passed() {
        ExitCode::from(EXIT_ASSERTION)
    } else {
        ExitCode::SUCCESS
    }
}
