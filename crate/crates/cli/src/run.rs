//! Executes one configured run and streams its artifacts.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use mgtree_core::amr::AmrConfig;
use mgtree_core::solver::{regular_vertex_count, Solver, SolverConfig, Status, SweepRecord};
use mgtree_core::spacetree::Spacetree;
use mgtree_core::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::{GridSpec, RunConfig};
use crate::output;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("solver: {0}")]
    Solver(#[from] mgtree_core::Error),
    #[error("writing {path}: {source}")]
    Io { path: String, source: io::Error },
}

/// Process exit code for a terminal status.
pub fn exit_code(status: Status) -> i32 {
    match status {
        Status::Converged => 0,
        Status::BudgetExhausted => 2,
        Status::Diverged => 3,
    }
}

pub struct RunOutcome {
    pub status: Status,
    pub history: Vec<SweepRecord>,
    pub tree: Spacetree,
}

impl RunOutcome {
    /// Final residual in the selected norm relative to the first sweep.
    pub fn relative_residual(&self, cfg: &RunConfig) -> f64 {
        match (self.history.first(), self.history.last()) {
            (Some(a), Some(b)) => cfg.norm.pick(&b.combined) / cfg.norm.pick(&a.combined),
            _ => 1.0,
        }
    }
}

/// Sinks receiving artifacts while the run progresses.
#[derive(Default)]
pub struct Sinks<'a> {
    pub csv: Option<&'a mut dyn Write>,
    pub log: Option<&'a mut dyn Write>,
}

pub fn solver_config(cfg: &RunConfig) -> Result<(Spacetree, SolverConfig), RunError> {
    let p = cfg.problem.dim;
    let reference = regular_vertex_count(p, cfg.finest_level());
    let mut scfg = SolverConfig::new(cfg.kind, cfg.settings, reference);
    scfg.max_sweeps = cfg.max_sweeps;
    scfg.target_drop = cfg.target_drop;
    scfg.norm = cfg.norm;
    scfg.divergence_factor = cfg.divergence;
    let start = match cfg.grid {
        GridSpec::Fixed(level) => level,
        GridSpec::Adaptive { h_max, h_min } => {
            let mut amr = AmrConfig::new(h_max, h_min)?;
            amr.coarsest = cfg.settings.coarsest;
            scfg.amr = Some(amr);
            amr.start_level()
        }
    };
    let mut tree = Spacetree::build_regular(cfg.problem.clone(), start)?;
    if let Some(seed) = cfg.seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        tree.set_solution(|_, _, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    }
    Ok((tree, scfg))
}

/// Runs the configured solve, streaming one CSV row and one log line per
/// sweep.
pub fn run_with_sinks(cfg: &RunConfig, mut sinks: Sinks<'_>) -> Result<RunOutcome, RunError> {
    let (tree, scfg) = solver_config(cfg)?;
    let channels = tree.channels();
    let mut solver = Solver::new(tree, scfg)?;
    if let Some(csv) = sinks.csv.as_deref_mut() {
        output::csv_header(csv, channels).map_err(io_err("csv"))?;
    }
    if let Some(log) = sinks.log.as_deref_mut() {
        writeln!(log, "problem {:?}", cfg.problem).map_err(io_err("log"))?;
        writeln!(log, "cycle {:?}  policy {:?}  grid {:?}", cfg.kind, cfg.settings.policy, cfg.grid).map_err(io_err("log"))?;
    }
    let mut failure: Option<RunError> = None;
    let status = solver.run_with(|_, record| {
        if failure.is_some() {
            return;
        }
        if let Some(csv) = sinks.csv.as_deref_mut() {
            if let Err(e) = output::csv_row(csv, record) {
                failure = Some(io_err("csv")(e));
            }
        }
        if let Some(log) = sinks.log.as_deref_mut() {
            if let Err(e) = output::log_sweep(log, record) {
                failure = Some(io_err("log")(e));
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    if let Some(log) = sinks.log.as_deref_mut() {
        writeln!(log, "status {status:?} after {} sweeps", solver.history().len()).map_err(io_err("log"))?;
    }
    let history = solver.history().to_vec();
    Ok(RunOutcome { status, history, tree: solver.into_tree() })
}

fn io_err(what: &'static str) -> impl Fn(io::Error) -> RunError {
    move |source| RunError::Io { path: what.to_string(), source }
}

fn create(path: &Path) -> Result<BufWriter<File>, RunError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| RunError::Io { path: path.display().to_string(), source })
}

/// Runs with the output files named in the configuration.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome, RunError> {
    let mut csv = cfg.csv.as_deref().map(create).transpose()?;
    let mut log = cfg.log.as_deref().map(create).transpose()?;
    let sinks = Sinks {
        csv: csv.as_mut().map(|w| w as &mut dyn Write),
        log: log.as_mut().map(|w| w as &mut dyn Write),
    };
    let outcome = run_with_sinks(cfg, sinks)?;
    for (w, path) in [(csv.as_mut(), &cfg.csv), (log.as_mut(), &cfg.log)] {
        if let (Some(w), Some(path)) = (w, path) {
            w.flush().map_err(|source| RunError::Io { path: path.display().to_string(), source })?;
        }
    }
    if let Some(path) = &cfg.grid_dump {
        let mut w = create(path)?;
        let err = |source| RunError::Io { path: path.display().to_string(), source };
        output::grid_dump(&mut w, &outcome.tree).map_err(err)?;
        w.flush().map_err(err)?;
    }
    Ok(outcome)
}
