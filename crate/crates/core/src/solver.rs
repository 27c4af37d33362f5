//! Sweep loop: runs a cycle kind until the residual target, the sweep
//! budget, or divergence, optionally unfolding the grid adaptively.

use alloc::vec::Vec;

use crate::amr::{apply_marks, compute_features, mark, AmrConfig, AmrStats};
use crate::cycles::{bu_fas, residual_sweep, td_add, td_bpx, textbook_add, CycleKind, CycleSettings, TraversalReport};
use crate::norms::{work_units, ResidualNorms};
use crate::spacetree::Spacetree;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    Max,
    Euclid,
    H,
}

impl NormKind {
    pub fn pick(self, n: &ResidualNorms) -> f64 {
        match self {
            NormKind::Max => n.max,
            NormKind::Euclid => n.euclid,
            NormKind::H => n.h_norm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub kind: CycleKind,
    pub settings: CycleSettings,
    pub amr: Option<AmrConfig>,
    pub max_sweeps: usize,
    /// Stop once the selected norm drops below this fraction of the first
    /// sweep's value.
    pub target_drop: f64,
    pub norm: NormKind,
    /// Growth over the smallest residual seen that counts as divergence.
    pub divergence_factor: f64,
    /// Fine vertex count of one reference sweep.
    pub reference_vertices: usize,
}

impl SolverConfig {
    pub fn new(kind: CycleKind, settings: CycleSettings, reference_vertices: usize) -> Self {
        Self {
            kind,
            settings,
            amr: None,
            max_sweeps: 100,
            target_drop: 1e-6,
            norm: NormKind::H,
            divergence_factor: 1e6,
            reference_vertices,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    BudgetExhausted,
    Diverged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub sweep: usize,
    pub work_units: f64,
    pub fine_vertices: usize,
    pub combined: ResidualNorms,
    pub channels: Vec<ResidualNorms>,
    pub injection_defect: f64,
    pub c_point_staged: f64,
    pub amr: Option<AmrStats>,
}

pub struct Solver {
    tree: Spacetree,
    config: SolverConfig,
    n: u64,
    work: f64,
    first: Option<f64>,
    best: f64,
    history: Vec<SweepRecord>,
}

/// Fine non-boundary vertex count of a regular grid of width `3^-level`.
pub fn regular_vertex_count(p: usize, level: u8) -> usize {
    (3usize.pow(level as u32) - 1).pow(p as u32)
}

impl Solver {
    pub fn new(tree: Spacetree, config: SolverConfig) -> Result<Self> {
        if config.max_sweeps == 0 {
            return Err(Error::Config("need at least one sweep"));
        }
        if config.reference_vertices == 0 {
            return Err(Error::Config("reference sweep cost must be positive"));
        }
        if config.kind == CycleKind::TdBpx && !config.settings.policy.bpx {
            return Err(Error::Config("the BPX cycle requires a bpx policy"));
        }
        if config.kind == CycleKind::TextbookAdd && config.amr.is_some() {
            return Err(Error::Unsupported("textbook additive cycle needs a regular grid"));
        }
        if let Some(amr) = &config.amr {
            amr.validate()?;
        }
        Ok(Self { tree, config, n: 0, work: 0.0, first: None, best: f64::INFINITY, history: Vec::new() })
    }

    pub fn tree(&self) -> &Spacetree {
        &self.tree
    }

    pub fn tree_mut(&mut self) -> &mut Spacetree {
        &mut self.tree
    }

    pub fn into_tree(self) -> Spacetree {
        self.tree
    }

    pub fn history(&self) -> &[SweepRecord] {
        &self.history
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    /// One sweep; the record holds the residual of the iterate the sweep
    /// started from.
    pub fn sweep(&mut self) -> Result<SweepRecord> {
        self.n += 1;
        let n = self.n;
        let s = &self.config.settings;
        let report: TraversalReport = match self.config.kind {
            CycleKind::TdAdd => td_add(&mut self.tree, s, n)?,
            CycleKind::TdBpx => td_bpx(&mut self.tree, s, n)?,
            CycleKind::BuFas => {
                let r = residual_sweep(&mut self.tree, s)?;
                bu_fas(&mut self.tree, s, n)?;
                r
            }
            CycleKind::TextbookAdd => {
                let r = residual_sweep(&mut self.tree, s)?;
                textbook_add(&mut self.tree, s.policy.base(n), s.omega_cg, s.coarsest)?;
                r
            }
        };
        self.work += work_units(report.fine_vertices as f64, self.config.reference_vertices as f64);
        let amr = match &self.config.amr {
            Some(cfg) => {
                compute_features(&mut self.tree);
                let marks = mark(&self.tree, cfg);
                Some(apply_marks(&mut self.tree, &marks, cfg)?)
            }
            None => None,
        };
        let record = SweepRecord {
            sweep: n as usize,
            work_units: self.work,
            fine_vertices: report.fine_vertices,
            combined: report.combined,
            channels: report.channels,
            injection_defect: report.injection_defect,
            c_point_staged: report.c_point_staged,
            amr,
        };
        self.history.push(record.clone());
        Ok(record)
    }

    /// Residual in the selected norm relative to the first sweep.
    pub fn relative(&self, record: &SweepRecord) -> f64 {
        let v = self.config.norm.pick(&record.combined);
        match self.first {
            Some(f) if f > 0.0 => v / f,
            _ => 1.0,
        }
    }

    fn status_after(&mut self, record: &SweepRecord) -> Option<Status> {
        let v = self.config.norm.pick(&record.combined);
        if !v.is_finite() {
            return Some(Status::Diverged);
        }
        let first = *self.first.get_or_insert(v);
        self.best = self.best.min(v);
        if v > self.best * self.config.divergence_factor {
            return Some(Status::Diverged);
        }
        if v <= first * self.config.target_drop {
            return Some(Status::Converged);
        }
        None
    }

    /// Runs sweeps until a terminal status. `on_sweep` sees every record.
    pub fn run_with(&mut self, mut on_sweep: impl FnMut(&Solver, &SweepRecord)) -> Result<Status> {
        for _ in 0..self.config.max_sweeps {
            let record = self.sweep()?;
            let status = self.status_after(&record);
            on_sweep(self, &record);
            if let Some(s) = status {
                return Ok(s);
            }
        }
        Ok(Status::BudgetExhausted)
    }

    pub fn run(&mut self) -> Result<Status> {
        self.run_with(|_, _| {})
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cycles::{OmegaKind, OmegaPolicy};
    use crate::problems::ProblemSpec;

    fn solver(kind: CycleKind, policy: OmegaPolicy, level: u8) -> Solver {
        let tree = Spacetree::build_regular(ProblemSpec::poisson_sin(2), level).unwrap();
        let cfg = SolverConfig::new(kind, CycleSettings::new(policy), regular_vertex_count(2, level));
        Solver::new(tree, cfg).unwrap()
    }

    #[test]
    fn regular_counts() {
        assert_eq!(regular_vertex_count(2, 4), 6400);
        assert_eq!(regular_vertex_count(1, 2), 8);
    }

    #[test]
    fn poisson_converges_with_exponential_damping() {
        let mut s = solver(CycleKind::TdAdd, OmegaPolicy::new(OmegaKind::Exponential, 0.8), 3);
        assert_eq!(s.run().unwrap(), Status::Converged);
        let h = s.history();
        assert!((h[2].work_units - 3.0).abs() < 1e-12);
        assert_eq!(h[0].fine_vertices, 676);
    }

    #[test]
    fn budget_is_reported() {
        let mut s = solver(CycleKind::TdAdd, OmegaPolicy::new(OmegaKind::Exponential, 0.8), 2);
        s.config.max_sweeps = 1;
        assert_eq!(s.run().unwrap(), Status::BudgetExhausted);
    }

    #[test]
    fn invalid_configurations() {
        let tree = Spacetree::build_regular(ProblemSpec::poisson_sin(2), 2).unwrap();
        let bad = SolverConfig::new(CycleKind::TdBpx, CycleSettings::new(OmegaPolicy::new(OmegaKind::UndampedCg, 0.8)), 64);
        assert!(Solver::new(tree, bad).is_err());
    }
}
