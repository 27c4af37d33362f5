//! Cycle drivers and relaxation policies.
//!
//! * [`td_add`] / [`td_bpx`]: one multiscale traversal per cycle. Updates
//!   computed in traversal `n` are applied as a prelude of traversal `n+1`.
//! * [`bu_fas`]: the same additive FAS scheme written level by level,
//!   fine to coarse.
//! * [`textbook_add`]: the plain correction-scheme additive cycle, regular
//!   grids only.
//!
//! All drivers keep coarse levels `< coarsest` frozen: they are neither
//! smoothed nor receive restricted residuals.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::ComplexFloat;

use crate::kernels::{apply_mass, apply_weighted, finish_vertex, jacobi_at, zero_accumulators, MAX_CORNERS};
use crate::norms::{NormAccumulator, ResidualNorms};
use crate::spacetree::{width, CellId, Spacetree, TraversalEvents, Vertex, VertexId};
use crate::transfer::{coinciding_corner, RelPos};
use crate::{Error, Result, C64};

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OmegaKind {
    /// Smooth the fine grid only.
    JacobiOnly,
    UndampedCg,
    /// Undamped on the finest `L + 1` levels below each vertex, frozen above.
    LGrid(u32),
    Exponential,
    Transition,
}

/// Where the base relaxation factor comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OmegaSource {
    Fixed(C64),
    /// Alternating complex pair, see [`two_phase_schedule`].
    TwoPhase,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmegaPolicy {
    pub kind: OmegaKind,
    pub omega_s: OmegaSource,
    /// Zero relaxation on c-points (hierarchical basis style).
    pub hb_mask: bool,
    pub bpx: bool,
}

impl OmegaPolicy {
    pub fn new(kind: OmegaKind, omega_s: f64) -> Self {
        Self { kind, omega_s: OmegaSource::Fixed(C64::new(omega_s, 0.0)), hb_mask: false, bpx: false }
    }

    pub fn with_source(mut self, source: OmegaSource) -> Self {
        self.omega_s = source;
        self
    }

    pub fn with_hb_mask(mut self) -> Self {
        self.hb_mask = true;
        self
    }

    pub fn with_bpx(mut self) -> Self {
        self.bpx = true;
        self
    }

    /// Base factor in iteration `n`.
    pub fn base(&self, n: u64) -> C64 {
        match self.omega_s {
            OmegaSource::Fixed(w) => w,
            OmegaSource::TwoPhase => two_phase_schedule(n),
        }
    }
}

/// `ω₁ = 0.01(√3 − i)` on odd iterations, `ω₂ = −conj(ω₁)` on even ones.
pub fn two_phase_schedule(n: u64) -> C64 {
    let w1 = C64::new(0.01 * libm::sqrt(3.0), -0.01);
    if n % 2 == 1 {
        w1
    } else {
        -w1.conj()
    }
}

fn complex_pow(z: C64, e: f64) -> C64 {
    if e == 0.0 {
        ONE
    } else if z == ZERO {
        ZERO
    } else {
        (z.ln() * e).exp()
    }
}

/// Relaxation factor of a vertex with the given `succ` in iteration `n`.
/// The c-point mask is applied last.
pub fn omega_of(policy: &OmegaPolicy, succ: u32, c_point: bool, n: u64) -> C64 {
    if policy.hb_mask && c_point {
        return ZERO;
    }
    let ws = policy.base(n);
    match policy.kind {
        OmegaKind::JacobiOnly => {
            if succ == 0 {
                ws
            } else {
                ZERO
            }
        }
        OmegaKind::UndampedCg => ws,
        OmegaKind::LGrid(l) => {
            if succ <= l {
                ws
            } else {
                ZERO
            }
        }
        OmegaKind::Exponential => ws.powu(succ + 1),
        OmegaKind::Transition => {
            let n = n.max(1) as f64;
            complex_pow(ws, (1.0 - 1.0 / n) * (succ as f64 + 1.0))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CycleKind {
    TextbookAdd,
    BuFas,
    TdAdd,
    TdBpx,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleSettings {
    pub policy: OmegaPolicy,
    /// Coarsest level that is smoothed.
    pub coarsest: u8,
    /// Coarse-grid damping of [`textbook_add`].
    pub omega_cg: C64,
    /// Record `|u_{l-1} - I u_l|` whenever residuals are accumulated.
    pub check_injection: bool,
}

impl CycleSettings {
    pub fn new(policy: OmegaPolicy) -> Self {
        Self { policy, coarsest: 1, omega_cg: ONE, check_injection: false }
    }
}

/// Per-traversal summary over fine-grid vertices. Residual entries are
/// scaled by `h^-p` (strong form).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraversalReport {
    pub channels: Vec<ResidualNorms>,
    pub combined: ResidualNorms,
    pub fine_vertices: usize,
    /// Largest injection defect seen at residual evaluation.
    pub injection_defect: f64,
    /// Largest staged `|sc|` on masked c-points.
    pub c_point_staged: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sweep {
    Add,
    Bpx,
    ResidualOnly,
}

struct TopDown<'a> {
    sweep: Sweep,
    settings: &'a CycleSettings,
    n: u64,
    coupling: Vec<C64>,
    norms: NormAccumulator,
    injection_defect: f64,
    c_point_staged: f64,
}

impl TopDown<'_> {
    #[inline]
    fn c_point_eff(&self, vx: &Vertex) -> bool {
        vx.flags.c_point && vx.level > self.settings.coarsest
    }

    /// `(P u, P sc, P si)` of the parent corners at `rel`.
    fn prolonged(tree: &Spacetree, frame: Option<(CellId, RelPos)>, ch: usize) -> (C64, C64, C64) {
        let Some((pc, rel)) = frame else { return (ZERO, ZERO, ZERO) };
        let parent = tree.cell(pc);
        let mut out = (ZERO, ZERO, ZERO);
        for &(k, w) in tree.transfer().at(&rel) {
            let pl = &tree.vertex(parent.vertex(k)).payload[ch];
            out.0 += pl.u * w;
            out.1 += pl.sc * w;
            out.2 += pl.si * w;
        }
        out
    }

    fn restrict_to_parent(tree: &mut Spacetree, frame: (CellId, RelPos), ch: usize, value: C64) {
        let (cells, verts, _, transfer) = tree.parts_mut();
        let parent = &cells[frame.0 as usize];
        for &(k, w) in transfer.at(&frame.1) {
            verts[parent.vertex(k) as usize].payload[ch].b += value * w;
        }
    }

    fn check_injection(&mut self, tree: &Spacetree, cell: CellId) {
        let p = tree.dim();
        for &w in tree.cell(cell).vertices(p) {
            let wx = tree.vertex(w);
            if wx.flags.hanging || !wx.flags.c_point || wx.flags.on_boundary {
                continue;
            }
            if let Some(v) = tree.coinciding_coarse(w) {
                let vx = tree.vertex(v);
                for ch in 0..wx.payload.len() {
                    let d = (wx.payload[ch].u - vx.payload[ch].u).norm();
                    self.injection_defect = self.injection_defect.max(d);
                }
            }
        }
    }
}

impl TraversalEvents for TopDown<'_> {
    fn touch_vertex_first_time(&mut self, tree: &mut Spacetree, v: VertexId, cell: CellId, k: usize) -> Result<()> {
        let frame = tree.parent_frame(cell, k);
        let vx = tree.vertex(v);
        let boundary = vx.flags.on_boundary;
        let subtract_si = self.sweep == Sweep::Bpx && !self.c_point_eff(vx);
        let update = self.sweep != Sweep::ResidualOnly;
        let nch = vx.payload.len();
        zero_accumulators(&mut tree.vertex_mut(v).payload);
        for ch in 0..nch {
            let (pu, psc, psi) = Self::prolonged(tree, frame, ch);
            let pl = &mut tree.vertex_mut(v).payload[ch];
            if boundary {
                pl.u = ZERO;
                pl.u_hat = ZERO;
                pl.sc = ZERO;
                pl.sf = ZERO;
                continue;
            }
            if update {
                pl.sc += psc;
                if subtract_si {
                    pl.sc -= psi;
                }
                pl.u += pl.sc + pl.sf;
                pl.sf = ZERO;
            }
            pl.u_hat = pl.u - pu;
        }
        Ok(())
    }

    fn create_hanging_vertex(&mut self, tree: &mut Spacetree, v: VertexId, cell: CellId, k: usize) -> Result<()> {
        let frame = tree.parent_frame(cell, k);
        let vx = tree.vertex(v);
        let boundary = vx.flags.on_boundary;
        let subtract_si = self.sweep == Sweep::Bpx && !self.c_point_eff(vx);
        let update = self.sweep != Sweep::ResidualOnly;
        let nch = vx.payload.len();
        zero_accumulators(&mut tree.vertex_mut(v).payload);
        for ch in 0..nch {
            let (pu, psc, psi) = Self::prolonged(tree, frame, ch);
            let pl = &mut tree.vertex_mut(v).payload[ch];
            pl.u_hat = ZERO;
            pl.sf = ZERO;
            pl.si = ZERO;
            pl.si_pending = ZERO;
            if boundary {
                pl.u = ZERO;
                pl.sc = ZERO;
                continue;
            }
            pl.u = pu;
            if update {
                pl.sc = if subtract_si { psc - psi } else { psc };
            }
        }
        Ok(())
    }

    fn enter_cell(&mut self, tree: &mut Spacetree, cell: CellId) -> Result<()> {
        if self.settings.check_injection {
            self.check_injection(tree, cell);
        }
        let coupled = !self.coupling.is_empty();
        let (cells, verts, refs, _) = tree.parts_mut();
        let c = &cells[cell as usize];
        let n = refs.corners();
        let leaf = !c.is_refined();
        let nch = c.weights.len();
        let mut x = [ZERO; MAX_CORNERS];
        let mut y = [ZERO; MAX_CORNERS];
        for ch in 0..nch {
            let w = &c.weights[ch];
            for k in 0..n {
                x[k] = verts[c.vertex(k) as usize].payload[ch].u;
            }
            apply_weighted(refs, w, &x, &mut y);
            for k in 0..n {
                let pl = &mut verts[c.vertex(k) as usize].payload[ch];
                pl.r -= y[k];
                pl.diag += w.diagonal(refs, k);
                x[k] = pl.u_hat;
            }
            apply_weighted(refs, w, &x, &mut y);
            for k in 0..n {
                verts[c.vertex(k) as usize].payload[ch].r_hat -= y[k];
            }
            if leaf {
                for k in 0..n {
                    x[k] = verts[c.vertex(k) as usize].payload[ch].chi;
                }
                apply_mass(refs, w.volume, &x, &mut y);
                for k in 0..n {
                    verts[c.vertex(k) as usize].payload[ch].b += y[k];
                }
            }
        }
        if coupled {
            for i in 0..nch {
                for j in (0..nch).filter(|&j| j != i) {
                    let a = self.coupling[i * nch + j];
                    if a == ZERO {
                        continue;
                    }
                    let vol = c.weights[i].volume * a;
                    for k in 0..n {
                        x[k] = verts[c.vertex(k) as usize].payload[j].u;
                    }
                    apply_mass(refs, vol, &x, &mut y);
                    for k in 0..n {
                        verts[c.vertex(k) as usize].payload[i].r -= y[k];
                        x[k] = verts[c.vertex(k) as usize].payload[j].u_hat;
                    }
                    apply_mass(refs, vol, &x, &mut y);
                    for k in 0..n {
                        verts[c.vertex(k) as usize].payload[i].r_hat -= y[k];
                    }
                }
            }
        }
        Ok(())
    }

    fn touch_vertex_last_time(&mut self, tree: &mut Spacetree, v: VertexId, cell: CellId, k: usize) -> Result<()> {
        let frame = tree.parent_frame(cell, k);
        let coarsest = self.settings.coarsest;
        let p = tree.dim();
        let vx = tree.vertex(v);
        let (level, index, succ, flags) = (vx.level, vx.index, vx.succ, vx.flags);
        let cpe = self.c_point_eff(vx);
        let nch = vx.payload.len();
        let volume = libm::pow(width(level), p as f64);

        let vm = tree.vertex_mut(v);
        for pl in vm.payload.iter_mut() {
            finish_vertex(pl, flags.on_boundary);
        }
        if flags.on_boundary {
            for pl in vm.payload.iter_mut() {
                pl.sc = ZERO;
                pl.sf = ZERO;
                pl.si = ZERO;
                pl.si_pending = ZERO;
            }
            return Ok(());
        }
        for pl in vm.payload.iter_mut() {
            pl.si = pl.si_pending;
            pl.si_pending = ZERO;
        }
        if !flags.refined {
            self.norms.vertices += 1;
            for (ch, pl) in vm.payload.iter().enumerate() {
                self.norms.push(ch, pl.r / volume, volume);
            }
        }

        let bpx = self.sweep == Sweep::Bpx;
        let mut injected = [ZERO; 2];
        let inject_into = match (self.sweep, frame) {
            (Sweep::ResidualOnly, _) => None,
            (_, Some((pc, rel))) if level > coarsest && flags.c_point => {
                coinciding_corner(p, &rel).map(|kc| tree.cell(pc).vertex(kc))
            }
            _ => None,
        };
        for ch in 0..nch {
            if self.sweep != Sweep::ResidualOnly {
                let pl = tree.vertex(v).payload[ch];
                let (sc, si) = if level < coarsest {
                    (ZERO, ZERO)
                } else if bpx {
                    let w = omega_of(&self.settings.policy, succ, false, self.n);
                    let s = jacobi_at(pl.r, pl.diag, w, level, &index)?;
                    (if cpe { ZERO } else { s }, s)
                } else {
                    let w = omega_of(&self.settings.policy, succ, cpe, self.n);
                    (jacobi_at(pl.r, pl.diag, w, level, &index)?, ZERO)
                };
                if cpe && (bpx || self.settings.policy.hb_mask) {
                    self.c_point_staged = self.c_point_staged.max(sc.norm());
                }
                let pl = &mut tree.vertex_mut(v).payload[ch];
                pl.sc = sc;
                injected = [pl.sf + sc, si];
            }
            if let Some(vc) = inject_into {
                let pl = &mut tree.vertex_mut(vc).payload[ch];
                pl.sf = injected[0];
                if bpx {
                    pl.si_pending = injected[1];
                }
            }
            if level > coarsest {
                if let Some(f) = frame {
                    let r_hat = tree.vertex(v).payload[ch].r_hat;
                    Self::restrict_to_parent(tree, f, ch, r_hat);
                }
            }
        }
        Ok(())
    }

    fn destroy_hanging_vertex(&mut self, tree: &mut Spacetree, v: VertexId, cell: CellId, k: usize) -> Result<()> {
        let vx = tree.vertex(v);
        if vx.flags.on_boundary || vx.level <= self.settings.coarsest {
            return Ok(());
        }
        if let Some(f) = tree.parent_frame(cell, k) {
            for ch in 0..vx.payload.len() {
                let pl = tree.vertex(v).payload[ch];
                Self::restrict_to_parent(tree, f, ch, pl.b + pl.r_hat);
            }
        }
        Ok(())
    }
}

fn coupling_of(tree: &Spacetree) -> Vec<C64> {
    let spec = tree.problem();
    if !spec.is_coupled() {
        return Vec::new();
    }
    let c = spec.num_channels();
    (0..c * c).map(|ij| spec.coupling_coeff(ij / c, ij % c)).collect()
}

fn run_top_down(tree: &mut Spacetree, sweep: Sweep, settings: &CycleSettings, n: u64) -> Result<TraversalReport> {
    let mut events = TopDown {
        sweep,
        settings,
        n,
        coupling: coupling_of(tree),
        norms: NormAccumulator::new(tree.channels()),
        injection_defect: 0.0,
        c_point_staged: 0.0,
    };
    tree.traverse(&mut events)?;
    Ok(TraversalReport {
        channels: events.norms.per_channel(),
        combined: events.norms.combined(),
        fine_vertices: events.norms.vertices,
        injection_defect: events.injection_defect,
        c_point_staged: events.c_point_staged,
    })
}

/// One traversal of the single-sweep additive FAS cycle. The report
/// holds the residual of the iterate reached in this traversal's prelude.
pub fn td_add(tree: &mut Spacetree, settings: &CycleSettings, n: u64) -> Result<TraversalReport> {
    run_top_down(tree, Sweep::Add, settings, n)
}

/// One traversal of the single-sweep BPX-type FAS cycle.
pub fn td_bpx(tree: &mut Spacetree, settings: &CycleSettings, n: u64) -> Result<TraversalReport> {
    if !settings.policy.bpx {
        return Err(Error::Config("the BPX cycle requires a bpx policy"));
    }
    run_top_down(tree, Sweep::Bpx, settings, n)
}

/// Residual evaluation only: accumulates `r`, `r̂` and `b` without touching
/// `u` or the pipeline helpers.
pub fn residual_sweep(tree: &mut Spacetree, settings: &CycleSettings) -> Result<TraversalReport> {
    run_top_down(tree, Sweep::ResidualOnly, settings, 1)
}

/// Level-wise view used by the bottom-up and textbook cycles. Fields are
/// flat `vertex * channels + channel` arrays.
struct Levels {
    cells: Vec<Vec<CellId>>,
    verts: Vec<Vec<VertexId>>,
    frames: Vec<Option<(CellId, RelPos)>>,
    nch: usize,
    coupling: Vec<C64>,
}

impl Levels {
    fn new(tree: &mut Spacetree) -> Self {
        tree.ensure_classified();
        let mut frames = vec![None; tree.vertex_capacity()];
        for v in tree.vertex_ids() {
            frames[v as usize] = tree.vertex_parent_frame(v);
        }
        Self {
            cells: tree.cells_by_level(),
            verts: tree.vertices_by_level(),
            frames,
            nch: tree.channels(),
            coupling: coupling_of(tree),
        }
    }

    fn field(&self, tree: &Spacetree) -> Vec<C64> {
        vec![ZERO; tree.vertex_capacity() * self.nch]
    }

    /// `P f` at vertex `v`.
    fn prolong(&self, tree: &Spacetree, f: &[C64], v: VertexId, ch: usize) -> C64 {
        let Some((pc, rel)) = self.frames[v as usize] else { return ZERO };
        let parent = tree.cell(pc);
        tree.transfer().at(&rel).iter().map(|&(k, w)| f[parent.vertex(k) as usize * self.nch + ch] * w).sum()
    }

    fn restrict(&self, tree: &Spacetree, f: &mut [C64], v: VertexId, ch: usize, value: C64) {
        if let Some((pc, rel)) = self.frames[v as usize] {
            let parent = tree.cell(pc);
            for &(k, w) in tree.transfer().at(&rel) {
                f[parent.vertex(k) as usize * self.nch + ch] += value * w;
            }
        }
    }

    /// `ax = H_l x` and `diag = diag(H_l)` on every vertex of level `l`.
    fn apply(&self, tree: &Spacetree, l: usize, x: &[C64], ax: &mut [C64], diag: &mut [C64]) {
        let nch = self.nch;
        for &v in &self.verts[l] {
            for ch in 0..nch {
                ax[v as usize * nch + ch] = ZERO;
                diag[v as usize * nch + ch] = ZERO;
            }
        }
        let refs = tree.refs();
        let n = refs.corners();
        let mut xl = [ZERO; MAX_CORNERS];
        let mut yl = [ZERO; MAX_CORNERS];
        for &cid in &self.cells[l] {
            let c = tree.cell(cid);
            for ch in 0..nch {
                for k in 0..n {
                    xl[k] = x[c.vertex(k) as usize * nch + ch];
                }
                apply_weighted(refs, &c.weights[ch], &xl, &mut yl);
                for k in 0..n {
                    let i = c.vertex(k) as usize * nch + ch;
                    ax[i] += yl[k];
                    diag[i] += c.weights[ch].diagonal(refs, k);
                }
                if self.coupling.is_empty() {
                    continue;
                }
                for j in (0..nch).filter(|&j| j != ch) {
                    let a = self.coupling[ch * nch + j];
                    for k in 0..n {
                        xl[k] = x[c.vertex(k) as usize * nch + j];
                    }
                    apply_mass(refs, c.weights[ch].volume * a, &xl, &mut yl);
                    for k in 0..n {
                        ax[c.vertex(k) as usize * nch + ch] += yl[k];
                    }
                }
            }
        }
    }

    /// Consistent loads of all leaf cells.
    fn loads(&self, tree: &Spacetree, b: &mut [C64]) {
        let refs = tree.refs();
        let n = refs.corners();
        let mut xl = [ZERO; MAX_CORNERS];
        let mut yl = [ZERO; MAX_CORNERS];
        for cells in &self.cells {
            for &cid in cells {
                let c = tree.cell(cid);
                if c.is_refined() {
                    continue;
                }
                for ch in 0..self.nch {
                    for k in 0..n {
                        xl[k] = tree.vertex(c.vertex(k)).payload[ch].chi;
                    }
                    apply_mass(refs, c.weights[ch].volume, &xl, &mut yl);
                    for k in 0..n {
                        b[c.vertex(k) as usize * self.nch + ch] += yl[k];
                    }
                }
            }
        }
    }

    fn u_field(&self, tree: &Spacetree) -> Vec<C64> {
        let mut u = self.field(tree);
        for v in tree.vertex_ids() {
            for ch in 0..self.nch {
                u[v as usize * self.nch + ch] = tree.vertex(v).payload[ch].u;
            }
        }
        u
    }

    /// Hanging values of level `l` as the interpolant of level `l - 1`.
    fn fill_hanging(&self, tree: &Spacetree, l: usize, u: &mut [C64]) {
        for &v in &self.verts[l] {
            let vx = tree.vertex(v);
            if vx.flags.hanging {
                for ch in 0..self.nch {
                    u[v as usize * self.nch + ch] = if vx.flags.on_boundary { ZERO } else { self.prolong(tree, u, v, ch) };
                }
            }
        }
    }
}

/// One bottom-up additive FAS cycle. With a bpx policy the coarse
/// correction excludes the injected smoother update, which keeps
/// `u_{l-1} = I u_l` intact after the cycle.
pub fn bu_fas(tree: &mut Spacetree, settings: &CycleSettings, n: u64) -> Result<()> {
    let lv = Levels::new(tree);
    let nch = lv.nch;
    let coarsest = settings.coarsest as usize;
    let lmax = lv.cells.len() - 1;
    if lmax < coarsest {
        return Err(Error::Config("tree is coarser than the coarsest smoothing level"));
    }
    let policy = &settings.policy;
    let mut u = lv.u_field(tree);
    let mut b = lv.field(tree);
    lv.loads(tree, &mut b);
    let mut du = lv.field(tree);
    let mut old = lv.field(tree);
    let mut ax = lv.field(tree);
    let mut diag = lv.field(tree);
    let mut hat = lv.field(tree);

    for l in (coarsest..=lmax).rev() {
        lv.fill_hanging(tree, l, &mut u);
        lv.apply(tree, l, &u, &mut ax, &mut diag);
        for &v in &lv.verts[l] {
            let vx = tree.vertex(v);
            if !vx.is_unknown() {
                continue;
            }
            let cpe = vx.flags.c_point && vx.level as usize > coarsest;
            let w = omega_of(policy, vx.succ, cpe && !policy.bpx, n);
            for ch in 0..nch {
                let i = v as usize * nch + ch;
                du[i] = jacobi_at(b[i] - ax[i], diag[i], w, vx.level, &vx.index)?;
            }
        }
        if l == coarsest {
            break;
        }
        for &v in &lv.verts[l] {
            let vx = tree.vertex(v);
            if vx.flags.hanging || vx.flags.on_boundary || !vx.flags.c_point {
                continue;
            }
            if let Some(vc) = tree.coinciding_coarse(v) {
                for ch in 0..nch {
                    u[vc as usize * nch + ch] = u[v as usize * nch + ch];
                }
            }
        }
        for &v in &lv.verts[l - 1] {
            for ch in 0..nch {
                old[v as usize * nch + ch] = u[v as usize * nch + ch];
            }
        }
        lv.fill_hanging(tree, l, &mut u);
        for &v in &lv.verts[l] {
            let vx = tree.vertex(v);
            for ch in 0..nch {
                let i = v as usize * nch + ch;
                hat[i] = if vx.is_unknown() { u[i] - lv.prolong(tree, &u, v, ch) } else { ZERO };
            }
        }
        lv.apply(tree, l, &hat, &mut ax, &mut diag);
        for &v in &lv.verts[l] {
            if tree.vertex(v).flags.on_boundary {
                continue;
            }
            for ch in 0..nch {
                let i = v as usize * nch + ch;
                let r_hat = b[i] - ax[i];
                lv.restrict(tree, &mut b, v, ch, r_hat);
            }
        }
    }

    // Coarse corrections, coarse to fine. `corr` holds `u_new - u_old` on
    // the level below (minus the injected smoother update for BPX).
    let mut corr = lv.field(tree);
    for l in coarsest..=lmax {
        for &v in &lv.verts[l] {
            let vx = tree.vertex(v);
            if !vx.is_unknown() {
                continue;
            }
            for ch in 0..nch {
                let i = v as usize * nch + ch;
                let coarse = if l > coarsest { lv.prolong(tree, &corr, v, ch) } else { ZERO };
                u[i] += du[i] + coarse;
            }
        }
        if l == lmax {
            break;
        }
        for &v in &lv.verts[l] {
            let vx = tree.vertex(v);
            for ch in 0..nch {
                let i = v as usize * nch + ch;
                corr[i] = if vx.flags.on_boundary {
                    ZERO
                } else if vx.flags.hanging {
                    if l > coarsest {
                        lv.prolong(tree, &corr, v, ch)
                    } else {
                        ZERO
                    }
                } else {
                    let mut c = u[i] - old[i];
                    if policy.bpx && vx.flags.refined {
                        if let Some(w) = tree.coinciding_fine(v) {
                            c -= du[w as usize * nch + ch];
                        }
                    }
                    c
                };
            }
        }
    }

    for v in tree.vertex_ids().collect::<Vec<_>>() {
        let vx = tree.vertex_mut(v);
        if vx.flags.hanging {
            continue;
        }
        for ch in 0..nch {
            vx.payload[ch].u = u[v as usize * nch + ch];
        }
    }
    Ok(())
}

/// One textbook additive correction-scheme cycle with smoothing factor
/// `omega_s` and coarse-grid damping `omega_cg`. Coarse levels hold
/// corrections that live only for the duration of the cycle.
pub fn textbook_add(tree: &mut Spacetree, omega_s: C64, omega_cg: C64, coarsest: u8) -> Result<()> {
    if !tree.is_regular() {
        return Err(Error::Unsupported("textbook additive cycle needs a regular grid"));
    }
    let lv = Levels::new(tree);
    let nch = lv.nch;
    let coarsest = coarsest as usize;
    let lmax = lv.cells.len() - 1;
    if lmax < coarsest {
        return Err(Error::Config("tree is coarser than the coarsest smoothing level"));
    }
    let mut x = lv.field(tree);
    for &v in &lv.verts[lmax] {
        for ch in 0..nch {
            x[v as usize * nch + ch] = tree.vertex(v).payload[ch].u;
        }
    }
    let mut rhs = lv.field(tree);
    lv.loads(tree, &mut rhs);
    let mut ax = lv.field(tree);
    let mut diag = lv.field(tree);
    let mut r = lv.field(tree);

    for l in (coarsest..=lmax).rev() {
        lv.apply(tree, l, &x, &mut ax, &mut diag);
        for &v in &lv.verts[l] {
            let vx = tree.vertex(v);
            if vx.flags.on_boundary {
                continue;
            }
            for ch in 0..nch {
                let i = v as usize * nch + ch;
                r[i] = rhs[i] - ax[i];
                x[i] += jacobi_at(r[i], diag[i], omega_s, vx.level, &vx.index)?;
            }
        }
        if l > coarsest {
            for &v in &lv.verts[l - 1] {
                for ch in 0..nch {
                    rhs[v as usize * nch + ch] = ZERO;
                    x[v as usize * nch + ch] = ZERO;
                }
            }
            for &v in &lv.verts[l] {
                if tree.vertex(v).flags.on_boundary {
                    continue;
                }
                for ch in 0..nch {
                    lv.restrict(tree, &mut rhs, v, ch, r[v as usize * nch + ch]);
                }
            }
        }
    }
    for l in coarsest + 1..=lmax {
        for &v in &lv.verts[l] {
            if tree.vertex(v).flags.on_boundary {
                continue;
            }
            for ch in 0..nch {
                let c = lv.prolong(tree, &x, v, ch);
                x[v as usize * nch + ch] += omega_cg * c;
            }
        }
    }
    for &v in &lv.verts[lmax] {
        for ch in 0..nch {
            tree.vertex_mut(v).payload[ch].u = x[v as usize * nch + ch];
        }
    }
    Ok(())
}
