//! Feature-based dynamic refinement and coarsening.
//!
//! After each sweep every fine-grid vertex gets a feature value
//! `s = max_d |u(v - e_d) - 2 u(v) + u(v + e_d)|`. The span of feature
//! values is split into equal-width bins; the top bins are refined and the
//! bottom bins erased such that the marked shares come as close as possible
//! to their targets.

use alloc::vec;
use alloc::vec::Vec;
use hashbrown::HashSet;

use crate::spacetree::{width, CellId, Spacetree, VertexId};
use crate::{Error, Result, C64, MAX_DIM};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmrConfig {
    pub h_max: f64,
    pub h_min: f64,
    pub refine_fraction: f64,
    pub erase_fraction: f64,
    pub bin_count: usize,
    /// Vertices with `|r / diag| / h^p` above this are still moving and never
    /// marked. The residual is taken in the strong scaling the solver reports.
    pub convergence_veto: f64,
    /// Levels below this stay fully refined.
    pub coarsest: u8,
}

impl AmrConfig {
    pub fn new(h_max: f64, h_min: f64) -> Result<Self> {
        let cfg = Self {
            h_max,
            h_min,
            refine_fraction: 0.10,
            erase_fraction: 0.02,
            bin_count: 20,
            convergence_veto: 1e-2,
            coarsest: 1,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h_min > 0.0 && self.h_min <= self.h_max) {
            return Err(Error::Config("need 0 < h_min <= h_max"));
        }
        let frac = |f: f64| f > 0.0 && f < 1.0;
        if !frac(self.refine_fraction) || !frac(self.erase_fraction) {
            return Err(Error::Config("marking fractions must lie in (0, 1)"));
        }
        if self.bin_count < 2 {
            return Err(Error::Config("need at least two bins"));
        }
        Ok(())
    }

    /// Level of the regular start grid: the coarsest with width `<= h_max`.
    pub fn start_level(&self) -> u8 {
        let mut level = 0u8;
        while width(level) > self.h_max * (1.0 + 1e-9) {
            level += 1;
        }
        level.max(self.coarsest)
    }
}

/// `max_d |u⁻ - 2u + u⁺|` over axes with both neighbours present.
pub fn feature(u: C64, neighbours: &[(Option<C64>, Option<C64>)]) -> f64 {
    neighbours
        .iter()
        .filter_map(|&(lo, hi)| Some((lo? - u * 2.0 + hi?).norm()))
        .fold(0.0, f64::max)
}

/// Stores feature values on all non-hanging vertices (max over channels).
pub fn compute_features(tree: &mut Spacetree) {
    tree.ensure_classified();
    let p = tree.dim();
    let ids: Vec<VertexId> = tree.vertex_ids().collect();
    let mut neighbours = [(None, None); MAX_DIM];
    for v in ids {
        let vx = tree.vertex(v);
        if vx.flags.hanging {
            continue;
        }
        let mut s = 0.0f64;
        for ch in 0..vx.payload.len() {
            for (d, slot) in neighbours.iter_mut().enumerate().take(p) {
                let mut lo = vx.index;
                let mut hi = vx.index;
                hi[d] += 1;
                let lo_u = if lo[d] == 0 {
                    None
                } else {
                    lo[d] -= 1;
                    tree.lookup_vertex(vx.level, &lo).map(|w| tree.vertex(w).payload[ch].u)
                };
                let hi_u = tree.lookup_vertex(vx.level, &hi).map(|w| tree.vertex(w).payload[ch].u);
                *slot = (lo_u, hi_u);
            }
            s = s.max(feature(vx.payload[ch].u, &neighbours[..p]));
        }
        tree.vertex_mut(v).feature = s;
    }
}

/// Number of vertices to take from one end of the binned feature range so
/// that the share comes closest to `fraction`; ties go to fewer bins.
/// Returns `(bins, count)`.
fn closest_share(bin_counts: &[usize], total: usize, fraction: f64) -> (usize, usize) {
    let mut best = (0, 0, fraction);
    let mut cum = 0;
    for (k, &c) in bin_counts.iter().enumerate() {
        cum += c;
        let err = (cum as f64 / total as f64 - fraction).abs();
        if err < best.2 - 1e-15 {
            best = (k + 1, cum, err);
        }
    }
    (best.0, best.1)
}

/// Bin indices of `values` over `[min, max]`; `None` when the span is
/// degenerate.
pub fn bin_values(values: &[f64], bins: usize) -> Option<Vec<usize>> {
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if values.is_empty() || !(hi > lo) || !(hi - lo).is_finite() {
        return None;
    }
    let w = (hi - lo) / bins as f64;
    Some(values.iter().map(|&v| (((v - lo) / w) as usize).min(bins - 1)).collect())
}

/// Indices selected from the top (`top = true`) or bottom of the feature
/// range for a target share.
pub fn select(values: &[f64], bins: usize, fraction: f64, top: bool) -> Vec<usize> {
    let Some(idx) = bin_values(values, bins) else { return Vec::new() };
    let mut counts = vec![0usize; bins];
    for &b in &idx {
        counts[b] += 1;
    }
    if top {
        counts.reverse();
    }
    let (k, _) = closest_share(&counts, values.len(), fraction);
    idx.iter()
        .enumerate()
        .filter(|&(_, &b)| if top { b >= bins - k } else { b < k })
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Marks {
    pub refine: Vec<VertexId>,
    pub erase: Vec<VertexId>,
    pub veto_width: usize,
    pub veto_convergence: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AmrStats {
    pub refined_cells: usize,
    pub erased_cells: usize,
    pub veto_width: usize,
    pub veto_convergence: usize,
}

fn adjacent_cells(tree: &Spacetree, v: VertexId) -> Vec<CellId> {
    let p = tree.dim();
    let vx = tree.vertex(v);
    (0..1usize << p)
        .filter_map(|k| {
            let mut idx = vx.index;
            for d in 0..p {
                if (k >> d) & 1 == 1 {
                    if idx[d] == 0 {
                        return None;
                    }
                    idx[d] -= 1;
                }
            }
            tree.lookup_cell(vx.level, &idx)
        })
        .collect()
}

/// Marks fine-grid vertices using the stored feature values.
pub fn mark(tree: &Spacetree, config: &AmrConfig) -> Marks {
    let candidates: Vec<VertexId> = tree
        .vertex_ids()
        .filter(|&v| {
            let vx = tree.vertex(v);
            vx.is_fine() && !vx.flags.on_boundary
        })
        .collect();
    let values: Vec<f64> = candidates.iter().map(|&v| tree.vertex(v).feature).collect();
    let mut marks = Marks::default();
    let moving = |v: VertexId| {
        let vx = tree.vertex(v);
        let vol = libm::pow(width(vx.level), tree.dim() as f64);
        vx.payload.iter().any(|pl| pl.diag.norm() > 0.0 && (pl.r / pl.diag).norm() / vol > config.convergence_veto)
    };
    let refine_sel = select(&values, config.bin_count, config.refine_fraction, true);
    let mut refine_set = HashSet::new();
    for i in refine_sel {
        let v = candidates[i];
        if moving(v) {
            marks.veto_convergence += 1;
            continue;
        }
        let refinable = adjacent_cells(tree, v)
            .into_iter()
            .any(|c| !tree.cell(c).is_refined() && width(tree.cell(c).level + 1) >= config.h_min * (1.0 - 1e-9));
        if !refinable {
            marks.veto_width += 1;
            continue;
        }
        refine_set.insert(v);
        marks.refine.push(v);
    }
    for i in select(&values, config.bin_count, config.erase_fraction, false) {
        let v = candidates[i];
        if refine_set.contains(&v) {
            continue;
        }
        let vx = tree.vertex(v);
        if vx.level == 0 || width(vx.level - 1) > config.h_max * (1.0 + 1e-9) || vx.level <= config.coarsest {
            marks.veto_width += 1;
            continue;
        }
        if moving(v) {
            marks.veto_convergence += 1;
            continue;
        }
        marks.erase.push(v);
    }
    marks
}

/// Applies marks: erasures first, then refinement of every unrefined cell
/// adjacent to a refine-marked vertex. A cell is erased only when all its
/// children are leaves, every vertex strictly inside it is erase-marked and
/// none of its children's vertices is refine-marked.
pub fn apply_marks(tree: &mut Spacetree, marks: &Marks, config: &AmrConfig) -> Result<AmrStats> {
    let mut stats = AmrStats { veto_width: marks.veto_width, veto_convergence: marks.veto_convergence, ..Default::default() };
    let p = tree.dim();
    let refine_marked: HashSet<VertexId> = marks.refine.iter().copied().collect();
    let erase_marked: HashSet<VertexId> = marks.erase.iter().copied().collect();

    let mut parents: Vec<CellId> = Vec::new();
    let mut seen = HashSet::new();
    for &v in &marks.erase {
        for c in adjacent_cells(tree, v) {
            if let Some(pc) = tree.cell(c).parent {
                if seen.insert(pc) {
                    parents.push(pc);
                }
            }
        }
    }
    for pc in parents {
        let cell = tree.cell(pc);
        if !cell.is_refined() || cell.level < config.coarsest || width(cell.level) > config.h_max * (1.0 + 1e-9) {
            continue;
        }
        let children = cell.children.clone();
        if children.iter().any(|&ch| tree.cell(ch).is_refined()) {
            continue;
        }
        let touches_refine = children.iter().any(|&ch| tree.cell(ch).vertices(p).iter().any(|w| refine_marked.contains(w)));
        if touches_refine {
            continue;
        }
        let base = cell.index;
        let level = cell.level + 1;
        let interior_marked = (0..1usize << p).all(|k| {
            let mut idx = [0u32; MAX_DIM];
            for d in 0..p {
                idx[d] = 3 * base[d] + 1 + ((k >> d) & 1) as u32;
            }
            tree.lookup_vertex(level, &idx).is_some_and(|w| erase_marked.contains(&w))
        });
        if interior_marked {
            tree.erase_subtree(pc)?;
            stats.erased_cells += children.len();
        }
    }

    let mut targets: Vec<CellId> = Vec::new();
    let mut seen = HashSet::new();
    for &v in &marks.refine {
        if !tree.contains_vertex(v) {
            continue;
        }
        for c in adjacent_cells(tree, v) {
            if !tree.cell(c).is_refined() && seen.insert(c) {
                targets.push(c);
            }
        }
    }
    tree.h_min = config.h_min;
    for c in targets {
        if tree.refine_cell(c)? {
            stats.refined_cells += 1;
        }
    }
    tree.ensure_classified();
    Ok(stats)
}
