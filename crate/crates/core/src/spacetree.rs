//! The 3-partitioned spacetree.
//!
//! Cells and vertices live in two arenas and are addressed by id; a hash
//! index maps `(level, index)` keys onto ids. A vertex is unique by its level
//! and lattice index, so several vertices may share one spatial position.
//! Every vertex carries one [`VertexPayload`] per channel.
//!
//! [`Spacetree::traverse`] runs a depth-first, parent-before-child sweep and
//! fires the [`TraversalEvents`] hooks. Children are visited in lexicographic
//! index order (axis 0 fastest).

use alloc::vec;
use alloc::vec::Vec;
use hashbrown::HashMap;

use crate::elemops::{complex_width, OperatorWeights, ReferenceMatrices};
use crate::problems::{cell_theta, ProblemSpec};
use crate::transfer::{RelPos, TransferWeights};
use crate::{Error, Index, Result, C64, MAX_DIM};

pub type CellId = u32;
pub type VertexId = u32;

const NONE: u32 = u32::MAX;
const ZERO: C64 = C64::new(0.0, 0.0);

/// Default cap on the number of live vertices.
pub const DEFAULT_VERTEX_CAP: usize = 20_000_000;

/// Per-channel solver state of one vertex.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VertexPayload {
    pub u: C64,
    /// Sampled right-hand side `χ` at the vertex position.
    pub chi: C64,
    /// Right-hand side accumulator: element loads plus restricted
    /// hierarchical residuals from the next finer level.
    pub b: C64,
    pub r: C64,
    pub r_hat: C64,
    pub u_hat: C64,
    pub diag: C64,
    pub sc: C64,
    pub sf: C64,
    pub si: C64,
    /// `si` written by the finer level during the current traversal; it
    /// becomes `si` once every reader of the old value has been served.
    pub si_pending: C64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VertexFlags {
    pub hanging: bool,
    pub refined: bool,
    pub on_boundary: bool,
    pub c_point: bool,
}

#[derive(Debug, Clone)]
pub struct Vertex {
    pub level: u8,
    pub index: Index,
    pub flags: VertexFlags,
    pub succ: u32,
    pub payload: Vec<VertexPayload>,
    /// Feature value `s` of the refinement criterion.
    pub feature: f64,
    adjacent: u8,
    expected: u8,
    refined_adjacent: u8,
    entered: u8,
    left: u8,
    alive: bool,
}

impl Vertex {
    /// Carries an unknown: neither hanging nor on the Dirichlet boundary.
    #[inline]
    pub fn is_unknown(&self) -> bool {
        !self.flags.hanging && !self.flags.on_boundary
    }

    /// Non-hanging vertex without a non-hanging vertex below it.
    #[inline]
    pub fn is_fine(&self) -> bool {
        !self.flags.hanging && !self.flags.refined
    }

    pub fn adjacent_cells(&self) -> usize {
        self.adjacent as usize
    }
}

#[derive(Debug, Clone)]
pub struct Cell {
    pub level: u8,
    pub index: Index,
    pub parent: Option<CellId>,
    pub children: Vec<CellId>,
    vertices: [VertexId; 1 << MAX_DIM],
    /// Complex rotation angle of this cell.
    pub theta: f64,
    /// Operator weights per channel.
    pub weights: Vec<OperatorWeights>,
    alive: bool,
}

impl Cell {
    #[inline]
    pub fn is_refined(&self) -> bool {
        !self.children.is_empty()
    }

    #[inline]
    pub fn vertex(&self, k: usize) -> VertexId {
        self.vertices[k]
    }

    pub fn vertices(&self, p: usize) -> &[VertexId] {
        &self.vertices[..1 << p]
    }
}

/// Hooks fired by [`Spacetree::traverse`]. All default to no-ops.
///
/// Vertex hooks receive the cell through which the vertex is reached and
/// the vertex' local corner number inside that cell.
#[allow(unused_variables)]
pub trait TraversalEvents {
    fn touch_vertex_first_time(&mut self, tree: &mut Spacetree, v: VertexId, cell: CellId, k: usize) -> Result<()> {
        Ok(())
    }
    fn touch_vertex_last_time(&mut self, tree: &mut Spacetree, v: VertexId, cell: CellId, k: usize) -> Result<()> {
        Ok(())
    }
    fn create_hanging_vertex(&mut self, tree: &mut Spacetree, v: VertexId, cell: CellId, k: usize) -> Result<()> {
        Ok(())
    }
    fn destroy_hanging_vertex(&mut self, tree: &mut Spacetree, v: VertexId, cell: CellId, k: usize) -> Result<()> {
        Ok(())
    }
    fn enter_cell(&mut self, tree: &mut Spacetree, cell: CellId) -> Result<()> {
        Ok(())
    }
    fn leave_cell(&mut self, tree: &mut Spacetree, cell: CellId) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Spacetree {
    dim: usize,
    problem: ProblemSpec,
    refs: ReferenceMatrices,
    transfer: TransferWeights,
    cells: Vec<Cell>,
    vertices: Vec<Vertex>,
    free_cells: Vec<CellId>,
    free_vertices: Vec<VertexId>,
    vertex_map: HashMap<(u8, Index), VertexId>,
    cell_map: HashMap<(u8, Index), CellId>,
    root: CellId,
    live_vertices: usize,
    live_cells: usize,
    /// Cells whose children would be narrower than `h_min` are never refined.
    pub h_min: f64,
    pub vertex_cap: usize,
    dirty: bool,
}

#[inline]
pub fn width(level: u8) -> f64 {
    libm::pow(3.0, -(level as f64))
}

#[inline]
fn lattice_size(level: u8) -> u32 {
    3u32.pow(level as u32)
}

impl Spacetree {
    /// A tree holding only the level-0 unit cell.
    pub fn new(problem: ProblemSpec) -> Result<Self> {
        problem.validate()?;
        let p = problem.dim;
        let mut tree = Self {
            dim: p,
            refs: ReferenceMatrices::new(p)?,
            transfer: TransferWeights::new(p)?,
            problem,
            cells: Vec::new(),
            vertices: Vec::new(),
            free_cells: Vec::new(),
            free_vertices: Vec::new(),
            vertex_map: HashMap::new(),
            cell_map: HashMap::new(),
            root: 0,
            live_vertices: 0,
            live_cells: 0,
            h_min: 0.0,
            vertex_cap: DEFAULT_VERTEX_CAP,
            dirty: true,
        };
        tree.root = tree.create_cell(0, [0; MAX_DIM], None).0;
        tree.classify();
        Ok(tree)
    }

    /// Fully refined tree of depth `levels` (finest width `3^-levels`).
    pub fn build_regular(problem: ProblemSpec, levels: u8) -> Result<Self> {
        Self::build_regular_capped(problem, levels, DEFAULT_VERTEX_CAP)
    }

    pub fn build_regular_capped(problem: ProblemSpec, levels: u8, cap: usize) -> Result<Self> {
        if levels < 1 {
            return Err(Error::Contract("regular tree needs at least one level"));
        }
        let p = problem.dim as u32;
        let estimate: f64 = (0..=levels).map(|l| libm::pow(libm::pow(3.0, l as f64) + 1.0, p as f64)).sum();
        if estimate > cap as f64 {
            return Err(Error::Capacity { requested: estimate as usize, cap });
        }
        let mut tree = Self::new(problem)?;
        tree.vertex_cap = cap;
        let mut frontier = vec![tree.root];
        for _ in 0..levels {
            let mut next = Vec::new();
            for c in frontier {
                tree.refine_cell(c)?;
                next.extend_from_slice(&tree.cells[c as usize].children);
            }
            frontier = next;
        }
        tree.classify();
        Ok(tree)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn problem(&self) -> &ProblemSpec {
        &self.problem
    }

    pub fn channels(&self) -> usize {
        self.problem.channels.len()
    }

    pub fn refs(&self) -> &ReferenceMatrices {
        &self.refs
    }

    pub fn transfer(&self) -> &TransferWeights {
        &self.transfer
    }

    pub fn root(&self) -> CellId {
        self.root
    }

    #[inline]
    pub fn cell(&self, id: CellId) -> &Cell {
        &self.cells[id as usize]
    }

    #[inline]
    pub fn vertex(&self, id: VertexId) -> &Vertex {
        &self.vertices[id as usize]
    }

    #[inline]
    pub fn vertex_mut(&mut self, id: VertexId) -> &mut Vertex {
        &mut self.vertices[id as usize]
    }

    /// Split borrow for kernels that read cells while writing vertices.
    pub fn parts_mut(&mut self) -> (&[Cell], &mut [Vertex], &ReferenceMatrices, &TransferWeights) {
        (&self.cells, &mut self.vertices, &self.refs, &self.transfer)
    }

    /// Arena length; vertex ids are below this bound.
    pub fn vertex_capacity(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.live_vertices
    }

    pub fn num_cells(&self) -> usize {
        self.live_cells
    }

    pub fn contains_vertex(&self, v: VertexId) -> bool {
        self.vertices.get(v as usize).is_some_and(|vx| vx.alive)
    }

    pub fn lookup_vertex(&self, level: u8, index: &Index) -> Option<VertexId> {
        self.vertex_map.get(&(level, *index)).copied()
    }

    pub fn lookup_cell(&self, level: u8, index: &Index) -> Option<CellId> {
        self.cell_map.get(&(level, *index)).copied()
    }

    pub fn vertex_ids(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.vertices.iter().enumerate().filter(|(_, v)| v.alive).map(|(i, _)| i as VertexId)
    }

    pub fn cell_ids(&self) -> impl Iterator<Item = CellId> + '_ {
        self.cells.iter().enumerate().filter(|(_, c)| c.alive).map(|(i, _)| i as CellId)
    }

    pub fn leaf_ids(&self) -> impl Iterator<Item = CellId> + '_ {
        self.cell_ids().filter(|&c| !self.cells[c as usize].is_refined())
    }

    pub fn max_level(&self) -> u8 {
        self.cells.iter().filter(|c| c.alive).map(|c| c.level).max().unwrap_or(0)
    }

    /// Cell ids grouped by level.
    pub fn cells_by_level(&self) -> Vec<Vec<CellId>> {
        let mut out = vec![Vec::new(); self.max_level() as usize + 1];
        for c in self.cell_ids() {
            out[self.cells[c as usize].level as usize].push(c);
        }
        out
    }

    /// Vertex ids grouped by level.
    pub fn vertices_by_level(&self) -> Vec<Vec<VertexId>> {
        let mut out = vec![Vec::new(); self.max_level() as usize + 1];
        for v in self.vertex_ids() {
            out[self.vertices[v as usize].level as usize].push(v);
        }
        out
    }

    /// True when every cell above the finest level is refined.
    pub fn is_regular(&self) -> bool {
        let lmax = self.max_level();
        self.cells.iter().filter(|c| c.alive).all(|c| c.is_refined() == (c.level < lmax))
    }

    pub fn position(&self, v: VertexId) -> [f64; MAX_DIM] {
        let vx = &self.vertices[v as usize];
        let w = width(vx.level);
        let mut x = [0.0; MAX_DIM];
        for d in 0..self.dim {
            x[d] = vx.index[d] as f64 * w;
        }
        x
    }

    pub fn cell_centre(&self, level: u8, index: &Index) -> [f64; MAX_DIM] {
        let w = width(level);
        let mut x = [0.0; MAX_DIM];
        for d in 0..self.dim {
            x[d] = (index[d] as f64 + 0.5) * w;
        }
        x
    }

    fn in_domain_positions(&self, level: u8, index: &Index) -> u8 {
        let n = lattice_size(level);
        (0..self.dim).map(|d| if index[d] == 0 || index[d] == n { 1u8 } else { 2 }).product()
    }

    fn get_or_create_vertex(&mut self, level: u8, index: Index) -> (VertexId, bool) {
        if let Some(&id) = self.vertex_map.get(&(level, index)) {
            return (id, false);
        }
        let p = self.dim;
        let n = lattice_size(level);
        let on_boundary = (0..p).any(|d| index[d] == 0 || index[d] == n);
        let c_point = level > 0 && (0..p).all(|d| index[d] % 3 == 0);
        let mut x = [0.0; MAX_DIM];
        let w = width(level);
        for d in 0..p {
            x[d] = index[d] as f64 * w;
        }
        let payload = self
            .problem
            .channels
            .iter()
            .map(|ch| VertexPayload {
                // the evaluators were validated with the problem
                chi: C64::new(ch.chi_at(&x[..p]).unwrap_or(0.0), 0.0),
                ..Default::default()
            })
            .collect();
        let vertex = Vertex {
            level,
            index,
            flags: VertexFlags { hanging: true, refined: false, on_boundary, c_point },
            succ: 0,
            payload,
            feature: 0.0,
            adjacent: 0,
            expected: self.in_domain_positions(level, &index),
            refined_adjacent: 0,
            entered: 0,
            left: 0,
            alive: true,
        };
        let id = if let Some(id) = self.free_vertices.pop() {
            self.vertices[id as usize] = vertex;
            id
        } else {
            self.vertices.push(vertex);
            (self.vertices.len() - 1) as VertexId
        };
        self.vertex_map.insert((level, index), id);
        self.live_vertices += 1;
        (id, true)
    }

    fn cell_weights(&self, level: u8, index: &Index) -> (f64, Vec<OperatorWeights>) {
        let p = self.dim;
        let centre = self.cell_centre(level, index);
        let theta = cell_theta(&centre[..p], &self.problem);
        let h_elem = complex_width(width(level), theta);
        let weights = self
            .problem
            .channels
            .iter()
            .map(|ch| OperatorWeights::new(p, h_elem, ch.phi_at(&centre[..p]).unwrap_or(ZERO)))
            .collect();
        (theta, weights)
    }

    /// Creates a cell and its vertices; returns the cell and the vertices
    /// that were new or hanging before.
    fn create_cell(&mut self, level: u8, index: Index, parent: Option<CellId>) -> (CellId, Vec<VertexId>) {
        let p = self.dim;
        let mut vertices = [NONE; 1 << MAX_DIM];
        let mut fresh = Vec::new();
        for (k, slot) in vertices.iter_mut().enumerate().take(1 << p) {
            let mut vi = index;
            for d in 0..p {
                vi[d] += ((k >> d) & 1) as u32;
            }
            let (id, created) = self.get_or_create_vertex(level, vi);
            let v = &mut self.vertices[id as usize];
            if created || v.adjacent < v.expected {
                fresh.push(id);
            }
            v.adjacent += 1;
            *slot = id;
        }
        let (theta, weights) = self.cell_weights(level, &index);
        let cell = Cell { level, index, parent, children: Vec::new(), vertices, theta, weights, alive: true };
        let id = if let Some(id) = self.free_cells.pop() {
            self.cells[id as usize] = cell;
            id
        } else {
            self.cells.push(cell);
            (self.cells.len() - 1) as CellId
        };
        self.cell_map.insert((level, index), id);
        self.live_cells += 1;
        (id, fresh)
    }

    /// Refines an unrefined cell into `3^p` children. New vertices (and
    /// vertices that stop hanging) take the p-linear interpolant of the
    /// parent corners including their pending fine-grid updates, with zero
    /// surplus and zero helper values. Returns `Ok(false)` when the children
    /// would be narrower than `h_min`.
    pub fn refine_cell(&mut self, cell: CellId) -> Result<bool> {
        let c = self.cells.get(cell as usize).filter(|c| c.alive).ok_or(Error::Contract("no such cell"))?;
        if c.is_refined() {
            return Err(Error::Contract("cell is already refined"));
        }
        let (level, index) = (c.level, c.index);
        if width(level + 1) < self.h_min * (1.0 - 1e-9) {
            return Ok(false);
        }
        let p = self.dim;
        if self.live_vertices + 4usize.pow(p as u32) > self.vertex_cap {
            return Err(Error::Capacity { requested: self.live_vertices + 4usize.pow(p as u32), cap: self.vertex_cap });
        }
        let corners: Vec<VertexId> = self.cells[cell as usize].vertices(p).to_vec();
        let channels = self.channels();
        let parent_vals: Vec<C64> = corners
            .iter()
            .flat_map(|&v| self.vertices[v as usize].payload.iter().map(|pl| pl.u + pl.sf))
            .collect();

        let mut children = Vec::with_capacity(3usize.pow(p as u32));
        let mut fresh_all = Vec::new();
        for ci in 0..3usize.pow(p as u32) {
            let mut idx = [0u32; MAX_DIM];
            let mut rem = ci;
            for d in 0..p {
                idx[d] = 3 * index[d] + (rem % 3) as u32;
                rem /= 3;
            }
            let (child, fresh) = self.create_cell(level + 1, idx, Some(cell));
            children.push(child);
            fresh_all.extend(fresh);
        }
        for &v in &corners {
            self.vertices[v as usize].refined_adjacent += 1;
        }
        self.cells[cell as usize].children = children;

        let mut corner_vals = vec![ZERO; 1 << p];
        for v in fresh_all {
            let vx = &self.vertices[v as usize];
            let boundary = vx.flags.on_boundary;
            let mut rel: RelPos = [0; MAX_DIM];
            for d in 0..p {
                rel[d] = (vx.index[d] - 3 * index[d]) as u8;
            }
            for ch in 0..channels {
                for k in 0..1 << p {
                    corner_vals[k] = parent_vals[k * channels + ch];
                }
                let u = if boundary { ZERO } else { self.transfer.prolong(&corner_vals, &rel) };
                let pl = &mut self.vertices[v as usize].payload[ch];
                *pl = VertexPayload { u, chi: pl.chi, ..Default::default() };
            }
        }
        self.dirty = true;
        Ok(true)
    }

    /// Removes all descendants of a refined cell. Coarse payloads are left
    /// untouched.
    pub fn erase_subtree(&mut self, cell: CellId) -> Result<()> {
        let c = self.cells.get(cell as usize).filter(|c| c.alive).ok_or(Error::Contract("no such cell"))?;
        if !c.is_refined() {
            return Err(Error::Contract("erase requires a refined cell"));
        }
        let p = self.dim;
        let children = core::mem::take(&mut self.cells[cell as usize].children);
        for child in children {
            if self.cells[child as usize].is_refined() {
                self.erase_subtree(child)?;
            }
            self.destroy_cell(child);
        }
        let corners: Vec<VertexId> = self.cells[cell as usize].vertices(p).to_vec();
        for v in corners {
            self.vertices[v as usize].refined_adjacent -= 1;
        }
        self.dirty = true;
        Ok(())
    }

    fn destroy_cell(&mut self, cell: CellId) {
        let p = self.dim;
        let c = &mut self.cells[cell as usize];
        c.alive = false;
        let key = (c.level, c.index);
        let verts: Vec<VertexId> = c.vertices(p).to_vec();
        self.cell_map.remove(&key);
        self.free_cells.push(cell);
        self.live_cells -= 1;
        for v in verts {
            let vx = &mut self.vertices[v as usize];
            vx.adjacent -= 1;
            if vx.adjacent == 0 {
                vx.alive = false;
                let key = (vx.level, vx.index);
                self.vertex_map.remove(&key);
                self.free_vertices.push(v);
                self.live_vertices -= 1;
            }
        }
    }

    /// Recomputes hanging/refined flags and `succ` for all vertices.
    pub fn classify(&mut self) {
        let p = self.dim;
        for v in self.vertices.iter_mut().filter(|v| v.alive) {
            v.flags.hanging = v.adjacent < v.expected;
            v.flags.refined = !v.flags.hanging && v.refined_adjacent == v.adjacent;
            v.succ = 0;
        }
        // succ bottom-up: refined vertices take 1 + min over their
        // non-hanging children in the closed support.
        let by_level = self.vertices_by_level();
        for level in (0..by_level.len()).rev() {
            for &v in &by_level[level] {
                let vx = &self.vertices[v as usize];
                if !vx.flags.refined {
                    continue;
                }
                let centre = vx.index;
                let mut best = u32::MAX;
                let span = 7usize.pow(p as u32);
                for s in 0..span {
                    let mut idx = [0u32; MAX_DIM];
                    let mut rem = s;
                    let mut ok = true;
                    for d in 0..p {
                        let off = (rem % 7) as i64 - 3;
                        rem /= 7;
                        let j = 3 * centre[d] as i64 + off;
                        if j < 0 {
                            ok = false;
                            break;
                        }
                        idx[d] = j as u32;
                    }
                    if !ok {
                        continue;
                    }
                    if let Some(&w) = self.vertex_map.get(&(level as u8 + 1, idx)) {
                        let wx = &self.vertices[w as usize];
                        if !wx.flags.hanging {
                            best = best.min(wx.succ);
                        }
                    }
                }
                let succ = if best == u32::MAX { 0 } else { best + 1 };
                self.vertices[v as usize].succ = succ;
            }
        }
        self.dirty = false;
    }

    pub fn ensure_classified(&mut self) {
        if self.dirty {
            self.classify();
        }
    }

    /// Parent cell of `cell` and the relative position of its local corner
    /// `k` within that parent.
    pub fn parent_frame(&self, cell: CellId, k: usize) -> Option<(CellId, RelPos)> {
        let c = &self.cells[cell as usize];
        let parent = c.parent?;
        let pidx = self.cells[parent as usize].index;
        let vx = &self.vertices[c.vertices[k] as usize];
        let mut rel = [0u8; MAX_DIM];
        for d in 0..self.dim {
            rel[d] = (vx.index[d] - 3 * pidx[d]) as u8;
        }
        Some((parent, rel))
    }

    /// Some existing parent-level cell containing vertex `v`, with the
    /// vertex' relative position inside it.
    pub fn vertex_parent_frame(&self, v: VertexId) -> Option<(CellId, RelPos)> {
        let vx = &self.vertices[v as usize];
        if vx.level == 0 {
            return None;
        }
        let p = self.dim;
        let top = lattice_size(vx.level - 1);
        for choice in 0..1usize << p {
            let mut pidx = [0u32; MAX_DIM];
            let mut ok = true;
            for d in 0..p {
                let i = vx.index[d];
                let base = i / 3;
                let cand = if i % 3 == 0 && (choice >> d) & 1 == 1 { base.wrapping_sub(1) } else { base };
                if cand >= top {
                    ok = false;
                    break;
                }
                pidx[d] = cand;
            }
            if !ok {
                continue;
            }
            if let Some(c) = self.lookup_cell(vx.level - 1, &pidx) {
                let mut rel = [0u8; MAX_DIM];
                for d in 0..p {
                    rel[d] = (vx.index[d] - 3 * pidx[d]) as u8;
                }
                return Some((c, rel));
            }
        }
        None
    }

    /// The next-coarser vertex at the same position, for c-points.
    pub fn coinciding_coarse(&self, v: VertexId) -> Option<VertexId> {
        let vx = &self.vertices[v as usize];
        if !vx.flags.c_point {
            return None;
        }
        let mut idx = vx.index;
        for d in 0..self.dim {
            idx[d] /= 3;
        }
        self.lookup_vertex(vx.level - 1, &idx)
    }

    /// The next-finer vertex at the same position.
    pub fn coinciding_fine(&self, v: VertexId) -> Option<VertexId> {
        let vx = &self.vertices[v as usize];
        let mut idx = vx.index;
        for d in 0..self.dim {
            idx[d] *= 3;
        }
        self.lookup_vertex(vx.level + 1, &idx)
    }

    /// Depth-first traversal firing `events`.
    pub fn traverse<E: TraversalEvents + ?Sized>(&mut self, events: &mut E) -> Result<()> {
        self.ensure_classified();
        let root = self.root;
        let result = self.visit(events, root);
        if result.is_err() {
            for v in self.vertices.iter_mut() {
                v.entered = 0;
                v.left = 0;
            }
        }
        result
    }

    fn visit<E: TraversalEvents + ?Sized>(&mut self, events: &mut E, cell: CellId) -> Result<()> {
        let p = self.dim;
        let n = 1usize << p;
        let verts = self.cells[cell as usize].vertices;
        for (k, &v) in verts.iter().enumerate().take(n) {
            let vx = &mut self.vertices[v as usize];
            vx.entered += 1;
            if vx.entered == 1 {
                if vx.flags.hanging {
                    events.create_hanging_vertex(self, v, cell, k)?;
                } else {
                    events.touch_vertex_first_time(self, v, cell, k)?;
                }
            }
        }
        events.enter_cell(self, cell)?;
        if self.cells[cell as usize].is_refined() {
            let mut buf = [0u32; 81];
            let children = &self.cells[cell as usize].children;
            let m = children.len();
            buf[..m].copy_from_slice(children);
            for &child in &buf[..m] {
                self.visit(events, child)?;
            }
        }
        events.leave_cell(self, cell)?;
        for (k, &v) in verts.iter().enumerate().take(n) {
            let vx = &mut self.vertices[v as usize];
            vx.left += 1;
            if vx.left == vx.adjacent {
                vx.left = 0;
                vx.entered = 0;
                if vx.flags.hanging {
                    events.destroy_hanging_vertex(self, v, cell, k)?;
                } else {
                    events.touch_vertex_last_time(self, v, cell, k)?;
                }
            }
        }
        Ok(())
    }

    /// Sets `u` on all non-hanging vertices from `f(position)` (zero on the
    /// boundary), then enforces `u_{l-1} = I u_l` on refined vertices and
    /// clears the pipeline helpers.
    pub fn set_solution(&mut self, mut f: impl FnMut(VertexId, &[f64], usize) -> C64) {
        self.ensure_classified();
        let p = self.dim;
        let ids: Vec<VertexId> = self.vertex_ids().collect();
        for v in ids {
            let x = self.position(v);
            let vx = &self.vertices[v as usize];
            let boundary = vx.flags.on_boundary;
            for ch in 0..self.channels() {
                let u = if boundary { ZERO } else { f(v, &x[..p], ch) };
                let pl = &mut self.vertices[v as usize].payload[ch];
                pl.u = u;
                pl.sc = ZERO;
                pl.sf = ZERO;
                pl.si = ZERO;
                pl.si_pending = ZERO;
                pl.u_hat = ZERO;
            }
        }
        self.inject_all();
    }

    /// Bottom-up injection `u_{l-1} = I u_l` at every refined vertex.
    pub fn inject_all(&mut self) {
        self.ensure_classified();
        let by_level = self.vertices_by_level();
        for level in (0..by_level.len()).rev() {
            for &v in &by_level[level] {
                if !self.vertices[v as usize].flags.refined {
                    continue;
                }
                if let Some(w) = self.coinciding_fine(v) {
                    if !self.vertices[w as usize].flags.hanging {
                        for ch in 0..self.channels() {
                            let u = self.vertices[w as usize].payload[ch].u;
                            self.vertices[v as usize].payload[ch].u = u;
                        }
                    }
                }
            }
        }
    }

    /// Sum of leaf-cell volumes; 1 for a valid tree.
    pub fn leaf_volume(&self) -> f64 {
        self.leaf_ids().map(|c| libm::pow(width(self.cells[c as usize].level), self.dim as f64)).sum()
    }

    /// Structural self-check: arena/index agreement and adjacency counts.
    pub fn check_integrity(&self) -> Result<()> {
        let p = self.dim;
        let mut counts: HashMap<VertexId, (u8, u8)> = HashMap::new();
        for c in self.cell_ids() {
            let cell = &self.cells[c as usize];
            if self.cell_map.get(&(cell.level, cell.index)) != Some(&c) {
                return Err(Error::Contract("cell index out of sync"));
            }
            for &v in cell.vertices(p) {
                let vx = self.vertices.get(v as usize).ok_or(Error::Contract("dangling vertex id"))?;
                if !vx.alive || vx.level != cell.level {
                    return Err(Error::Contract("cell references a dead vertex"));
                }
                let e = counts.entry(v).or_insert((0, 0));
                e.0 += 1;
                if cell.is_refined() {
                    e.1 += 1;
                }
            }
            for &ch in &cell.children {
                let child = &self.cells[ch as usize];
                if !child.alive || child.parent != Some(c) || child.level != cell.level + 1 {
                    return Err(Error::Contract("broken parent/child link"));
                }
            }
        }
        for v in self.vertex_ids() {
            let vx = &self.vertices[v as usize];
            if counts.get(&v) != Some(&(vx.adjacent, vx.refined_adjacent)) {
                return Err(Error::Contract("vertex adjacency out of sync"));
            }
            if self.vertex_map.get(&(vx.level, vx.index)) != Some(&v) {
                return Err(Error::Contract("vertex index out of sync"));
            }
        }
        if counts.len() != self.live_vertices {
            return Err(Error::Contract("orphaned vertices"));
        }
        Ok(())
    }
}
