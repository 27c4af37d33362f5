use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use anyhow::{bail, Context};
use mgtree::{exit_code, run, RawConfig, RunConfig};
use mgtree_core::solver::Status;

const USAGE: &str = "usage: mgtree solve <config>... [--key value ...] [--jobs N]";
const EXIT_USAGE: u8 = 64;
const EXIT_FAILURE: u8 = 1;

struct Invocation {
    configs: Vec<PathBuf>,
    overrides: Vec<(String, String)>,
    jobs: usize,
}

fn parse_args(args: &[String]) -> anyhow::Result<Invocation> {
    let mut it = args.iter();
    match it.next().map(String::as_str) {
        Some("solve") => {}
        Some(other) => bail!("unknown command `{other}`"),
        None => bail!("missing command"),
    }
    let mut inv = Invocation { configs: Vec::new(), overrides: Vec::new(), jobs: 1 };
    while let Some(arg) = it.next() {
        if let Some(key) = arg.strip_prefix("--") {
            let value = it.next().with_context(|| format!("`--{key}` needs a value"))?;
            if key == "jobs" {
                inv.jobs = value.parse().ok().filter(|&n| n > 0).context("`--jobs` needs a positive integer")?;
            } else {
                inv.overrides.push((key.to_string(), value.clone()));
            }
        } else {
            inv.configs.push(PathBuf::from(arg));
        }
    }
    if inv.configs.is_empty() {
        bail!("no configuration given");
    }
    Ok(inv)
}

fn load(path: &PathBuf, overrides: &[(String, String)]) -> anyhow::Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut raw = RawConfig::parse(&text).with_context(|| format!("{}", path.display()))?;
    for (k, v) in overrides {
        raw.set(k, v).with_context(|| format!("override --{k}"))?;
    }
    RunConfig::from_raw(&raw).with_context(|| format!("{}", path.display()))
}

/// Worst outcome over all runs: usage problems, then failures, then
/// divergence, then exhausted budgets.
fn combine(codes: &[u8]) -> u8 {
    let rank = |c: u8| match c {
        EXIT_USAGE => 4,
        EXIT_FAILURE => 3,
        3 => 2,
        2 => 1,
        _ => 0,
    };
    codes.iter().copied().max_by_key(|&c| rank(c)).unwrap_or(0)
}

fn describe(status: Status) -> &'static str {
    match status {
        Status::Converged => "converged",
        Status::BudgetExhausted => "sweep budget exhausted",
        Status::Diverged => "diverged",
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--help" || a == "-h") {
        println!("{USAGE}");
        return ExitCode::SUCCESS;
    }
    let inv = match parse_args(&args) {
        Ok(inv) => inv,
        Err(e) => {
            eprintln!("error: {e:#}\n{USAGE}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let mut configs = Vec::new();
    for path in &inv.configs {
        match load(path, &inv.overrides) {
            Ok(cfg) => configs.push(cfg),
            Err(e) => {
                eprintln!("error: {e:#}");
                return ExitCode::from(EXIT_USAGE);
            }
        }
    }

    let results: Mutex<Vec<Option<String>>> = Mutex::new(vec![None; configs.len()]);
    let codes: Mutex<Vec<u8>> = Mutex::new(vec![0; configs.len()]);
    let next = AtomicUsize::new(0);
    thread::scope(|s| {
        for _ in 0..inv.jobs.min(configs.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cfg) = configs.get(i) else { break };
                let (line, code) = match run(cfg) {
                    Ok(out) => (
                        format!(
                            "{}: {} after {} sweeps, {:.3} work units, relative residual {:.3e}",
                            inv.configs[i].display(),
                            describe(out.status),
                            out.history.len(),
                            out.history.last().map_or(0.0, |r| r.work_units),
                            out.relative_residual(cfg)
                        ),
                        exit_code(out.status) as u8,
                    ),
                    Err(e) => (format!("{}: error: {e}", inv.configs[i].display()), EXIT_FAILURE),
                };
                results.lock().unwrap()[i] = Some(line);
                codes.lock().unwrap()[i] = code;
            });
        }
    });
    for line in results.into_inner().unwrap().into_iter().flatten() {
        println!("{line}");
    }
    ExitCode::from(combine(&codes.into_inner().unwrap()))
}
