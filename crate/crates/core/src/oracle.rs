//! Dense reference implementations on small regular grids.
//!
//! Everything here is assembled into explicit matrices over the interior
//! vertices of each level and serves as the trusted side of equivalence
//! tests: global assembly, a direct solver, and matrix transcriptions of
//! the four cycle variants. Only the element matrices are shared with the
//! matrix-free code.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::ComplexFloat;

use crate::cycles::{CycleKind, OmegaKind, OmegaPolicy};
use crate::elemops::{cell_operator, ReferenceMatrices};
use crate::problems::{cell_theta, ProblemSpec};
use crate::{Error, Index, Result, C64, MAX_DIM};

const ZERO: C64 = C64::new(0.0, 0.0);

/// Largest dense system the oracle builds.
pub const ORACLE_CAP: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    /// Row-major.
    pub data: Vec<C64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = C64::new(1.0, 0.0);
        }
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: C64) {
        self.data[i * self.cols + j] += v;
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        (0..self.rows)
            .map(|i| self.data[i * self.cols..(i + 1) * self.cols].iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.get(i, j);
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Self {
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == ZERO {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }
}

/// Interior vertices of a regular level in lexicographic order (axis 0
/// fastest), each carrying `channels` consecutive unknowns.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSystem {
    pub dim: usize,
    pub level: u8,
    pub channels: usize,
    pub matrix: DenseMatrix,
    /// Consistent load `Σ_cells h_e^p M χ`.
    pub load: Vec<C64>,
    pub vertices: Vec<Index>,
}

impl DenseSystem {
    /// Unknown number of interior lattice index `idx`, channel `ch`.
    pub fn unknown(&self, idx: &Index, ch: usize) -> Option<usize> {
        interior_number(self.dim, self.level, idx).map(|v| v * self.channels + ch)
    }
}

fn interior_per_axis(level: u8) -> usize {
    3usize.pow(level as u32) - 1
}

fn interior_number(p: usize, level: u8, idx: &Index) -> Option<usize> {
    let m = interior_per_axis(level);
    let mut id = 0;
    let mut stride = 1;
    for d in 0..p {
        let i = idx[d] as usize;
        if i == 0 || i > m {
            return None;
        }
        id += (i - 1) * stride;
        stride *= m;
    }
    Some(id)
}

fn interior_vertices(p: usize, level: u8) -> Vec<Index> {
    let m = interior_per_axis(level);
    let total = m.pow(p as u32);
    (0..total)
        .map(|mut s| {
            let mut idx = [0u32; MAX_DIM];
            for d in 0..p {
                idx[d] = (s % m + 1) as u32;
                s /= m;
            }
            idx
        })
        .collect()
}

/// Global system of a regular grid of the given level with homogeneous
/// Dirichlet rows and columns eliminated.
pub fn dense_assemble(problem: &ProblemSpec, level: u8) -> Result<DenseSystem> {
    problem.validate()?;
    let p = problem.dim;
    let nch = problem.num_channels();
    let vertices = interior_vertices(p, level);
    let n = vertices.len() * nch;
    if n > ORACLE_CAP {
        return Err(Error::Capacity { requested: n, cap: ORACLE_CAP });
    }
    let refs = ReferenceMatrices::new(p)?;
    let corners = refs.corners();
    let cells_per_axis = 3usize.pow(level as u32);
    let h = 1.0 / cells_per_axis as f64;
    let mut matrix = DenseMatrix::zeros(n, n);
    let mut load = vec![ZERO; n];
    let total_cells = cells_per_axis.pow(p as u32);
    let mut ids = vec![None; corners];
    let mut pos = vec![[0.0f64; MAX_DIM]; corners];
    for s in 0..total_cells {
        let mut cidx = [0u32; MAX_DIM];
        let mut rem = s;
        let mut centre = [0.0; MAX_DIM];
        for d in 0..p {
            cidx[d] = (rem % cells_per_axis) as u32;
            rem /= cells_per_axis;
            centre[d] = (cidx[d] as f64 + 0.5) * h;
        }
        for k in 0..corners {
            let mut vi = cidx;
            for d in 0..p {
                vi[d] += ((k >> d) & 1) as u32;
                pos[k][d] = vi[d] as f64 * h;
            }
            ids[k] = interior_number(p, level, &vi);
        }
        let theta = cell_theta(&centre[..p], problem);
        let ops: Vec<_> = problem
            .channels
            .iter()
            .map(|ch| ch.phi_at(&centre[..p]).map(|phi| cell_operator(&refs, h, theta, phi)))
            .collect::<Result<_>>()?;
        for (c, ch) in problem.channels.iter().enumerate() {
            let op = &ops[c];
            let volume = op.h_elem.powi(p as i32);
            let chi: Vec<f64> = pos.iter().map(|x| ch.chi_at(&x[..p])).collect::<Result<_>>()?;
            for i in 0..corners {
                let Some(vi) = ids[i] else { continue };
                let row = vi * nch + c;
                for j in 0..corners {
                    load[row] += volume * refs.mass[i * corners + j] * chi[j];
                    let Some(vj) = ids[j] else { continue };
                    matrix.add(row, vj * nch + c, op.entry(i, j));
                    for c2 in (0..nch).filter(|&c2| c2 != c) {
                        let a = problem.coupling_coeff(c, c2);
                        if a != ZERO {
                            matrix.add(row, vj * nch + c2, a * volume * refs.mass[i * corners + j]);
                        }
                    }
                }
            }
        }
    }
    Ok(DenseSystem { dim: p, level, channels: nch, matrix, load, vertices })
}

/// Gaussian elimination with partial pivoting.
pub fn direct_solve(matrix: &DenseMatrix, rhs: &[C64]) -> Result<Vec<C64>> {
    let n = matrix.rows;
    if matrix.cols != n || rhs.len() != n {
        return Err(Error::Contract("square system expected"));
    }
    let mut a = matrix.data.clone();
    let mut x = rhs.to_vec();
    for col in 0..n {
        let (piv, best) = (col..n)
            .map(|r| (r, a[r * n + col].norm()))
            .fold((col, -1.0), |acc, e| if e.1 > acc.1 { e } else { acc });
        if best < 1e-300 {
            return Err(Error::SingularMatrix { column: col });
        }
        if piv != col {
            for j in 0..n {
                a.swap(piv * n + j, col * n + j);
            }
            x.swap(piv, col);
        }
        let d = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / d;
            if f == ZERO {
                continue;
            }
            for j in col..n {
                let v = a[col * n + j];
                a[r * n + j] -= f * v;
            }
            let v = x[col];
            x[r] -= f * v;
        }
    }
    for col in (0..n).rev() {
        let mut s = x[col];
        for j in col + 1..n {
            s -= a[col * n + j] * x[j];
        }
        x[col] = s / a[col * n + col];
    }
    Ok(x)
}

/// `‖b - A x‖₂ / ‖b‖₂`.
pub fn relative_residual(matrix: &DenseMatrix, x: &[C64], rhs: &[C64]) -> f64 {
    let ax = matrix.matvec(x);
    let num: f64 = ax.iter().zip(rhs).map(|(a, b)| (b - a).norm_sqr()).sum();
    let den: f64 = rhs.iter().map(|b| b.norm_sqr()).sum();
    libm::sqrt(num / den.max(f64::MIN_POSITIVE))
}

fn hat_1d(fine: u32, coarse: u32) -> f64 {
    let d = (fine as i64 - 3 * coarse as i64).abs();
    if d >= 3 {
        0.0
    } else {
        1.0 - d as f64 / 3.0
    }
}

/// Prolongation from interior unknowns of `level - 1` to those of `level`.
pub fn dense_prolongation(p: usize, level: u8, channels: usize) -> DenseMatrix {
    let fine = interior_vertices(p, level);
    let coarse = interior_vertices(p, level - 1);
    let mut m = DenseMatrix::zeros(fine.len() * channels, coarse.len() * channels);
    for (i, fi) in fine.iter().enumerate() {
        for (j, cj) in coarse.iter().enumerate() {
            let w: f64 = (0..p).map(|d| hat_1d(fi[d], cj[d])).product();
            if w != 0.0 {
                for c in 0..channels {
                    m.add(i * channels + c, j * channels + c, C64::new(w, 0.0));
                }
            }
        }
    }
    m
}

/// For each coarse unknown the coinciding fine unknown.
pub fn dense_injection(p: usize, level: u8, channels: usize) -> Vec<usize> {
    let coarse = interior_vertices(p, level - 1);
    let mut out = Vec::with_capacity(coarse.len() * channels);
    for cj in &coarse {
        let mut fi = *cj;
        for d in 0..p {
            fi[d] *= 3;
        }
        let base = interior_number(p, level, &fi).unwrap_or(0);
        for c in 0..channels {
            out.push(base * channels + c);
        }
    }
    out
}

/// `max |R H_l P - H_{l-1}|` between two assembled levels.
pub fn galerkin_defect(fine: &DenseSystem, coarse: &DenseSystem) -> f64 {
    let pm = dense_prolongation(fine.dim, fine.level, fine.channels);
    let rap = pm.transpose().matmul(&fine.matrix).matmul(&pm);
    rap.data.iter().zip(&coarse.matrix.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
}

/// One regular level of a [`DenseHierarchy`].
#[derive(Debug, Clone)]
pub struct DenseLevel {
    pub system: DenseSystem,
    /// From the next coarser level; `None` on the coarsest.
    pub prolongation: Option<DenseMatrix>,
    pub restriction: Option<DenseMatrix>,
    pub injection: Vec<usize>,
    /// Masked positions: interior c-points above the coarsest level.
    pub c_point: Vec<bool>,
    /// Distance to the finest level.
    pub succ: u32,
}

/// Levels `coarsest..=finest` of a regular grid.
#[derive(Debug, Clone)]
pub struct DenseHierarchy {
    pub levels: Vec<DenseLevel>,
}

impl DenseHierarchy {
    pub fn new(problem: &ProblemSpec, coarsest: u8, finest: u8) -> Result<Self> {
        if coarsest == 0 || coarsest > finest {
            return Err(Error::Config("need 1 <= coarsest <= finest"));
        }
        let p = problem.dim;
        let mut levels = Vec::new();
        for level in coarsest..=finest {
            let system = dense_assemble(problem, level)?;
            let nch = system.channels;
            let (prolongation, restriction, injection) = if level > coarsest {
                let pm = dense_prolongation(p, level, nch);
                let rm = pm.transpose();
                (Some(pm), Some(rm), dense_injection(p, level, nch))
            } else {
                (None, None, Vec::new())
            };
            let c_point = system
                .vertices
                .iter()
                .flat_map(|v| {
                    let cp = level > coarsest && (0..p).all(|d| v[d] % 3 == 0);
                    core::iter::repeat_n(cp, nch)
                })
                .collect();
            levels.push(DenseLevel { system, prolongation, restriction, injection, c_point, succ: (finest - level) as u32 });
        }
        Ok(Self { levels })
    }

    pub fn finest(&self) -> &DenseLevel {
        self.levels.last().expect("hierarchy is never empty")
    }

    /// Solution of the finest-level system.
    pub fn solve_finest(&self) -> Result<Vec<C64>> {
        let f = &self.finest().system;
        direct_solve(&f.matrix, &f.load)
    }

    fn inject(&self, li: usize, fine: &[C64]) -> Vec<C64> {
        self.levels[li].injection.iter().map(|&i| fine[i]).collect()
    }

    fn prolong(&self, li: usize, coarse: &[C64]) -> Vec<C64> {
        match &self.levels[li].prolongation {
            Some(pm) => pm.matvec(coarse),
            None => vec![ZERO; self.levels[li].system.load.len()],
        }
    }

    fn restrict(&self, li: usize, fine: &[C64]) -> Vec<C64> {
        self.levels[li].restriction.as_ref().map(|rm| rm.matvec(fine)).unwrap_or_default()
    }

    fn residual(&self, li: usize, b: &[C64], u: &[C64]) -> Vec<C64> {
        let hu = self.levels[li].system.matrix.matvec(u);
        b.iter().zip(hu).map(|(b, h)| b - h).collect()
    }

    fn jacobi(&self, li: usize, r: &[C64]) -> Result<Vec<C64>> {
        let d = self.levels[li].system.matrix.diagonal();
        r.iter()
            .zip(d)
            .enumerate()
            .map(|(col, (r, d))| if d.norm() < 1e-300 { Err(Error::SingularMatrix { column: col }) } else { Ok(r / d) })
            .collect()
    }
}

/// Relaxation factor from the policy table, written out independently of
/// the matrix-free drivers. `succ` is the distance to the finest level.
pub fn reference_omega(policy: &OmegaPolicy, succ: u32, c_point: bool, n: u64) -> C64 {
    let ws = policy.base(n);
    let w = match policy.kind {
        OmegaKind::JacobiOnly if succ > 0 => ZERO,
        OmegaKind::LGrid(l) if succ > l => ZERO,
        OmegaKind::JacobiOnly | OmegaKind::LGrid(_) | OmegaKind::UndampedCg => ws,
        OmegaKind::Exponential => (0..=succ).fold(C64::new(1.0, 0.0), |acc, _| acc * ws),
        OmegaKind::Transition => {
            let e = (1.0 - 1.0 / n.max(1) as f64) * (succ + 1) as f64;
            if e == 0.0 {
                C64::new(1.0, 0.0)
            } else {
                C64::from_polar(libm::pow(ws.norm(), e), ws.arg() * e)
            }
        }
    };
    if policy.hb_mask && c_point {
        ZERO
    } else {
        w
    }
}

/// Per-level vectors of the FAS cycles.
#[derive(Debug, Clone)]
pub struct DenseState {
    pub u: Vec<Vec<C64>>,
    pub sc: Vec<Vec<C64>>,
    pub sf: Vec<Vec<C64>>,
    pub si: Vec<Vec<C64>>,
    pub b: Vec<Vec<C64>>,
}

impl DenseState {
    /// Fine iterate `u` with coarse levels filled by injection and zero
    /// pipeline helpers.
    pub fn from_fine(h: &DenseHierarchy, fine: &[C64]) -> Self {
        let nl = h.levels.len();
        let zeros: Vec<Vec<C64>> = h.levels.iter().map(|l| vec![ZERO; l.system.load.len()]).collect();
        let mut u = zeros.clone();
        u[nl - 1] = fine.to_vec();
        for li in (1..nl).rev() {
            u[li - 1] = h.inject(li, &u[li]);
        }
        Self { u, sc: zeros.clone(), sf: zeros.clone(), si: zeros.clone(), b: zeros }
    }

    pub fn fine(&self) -> &[C64] {
        self.u.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

fn scale(w: &[C64], x: &[C64]) -> Vec<C64> {
    w.iter().zip(x).map(|(a, b)| a * b).collect()
}

fn omegas(h: &DenseHierarchy, li: usize, policy: &OmegaPolicy, n: u64, agnostic: bool) -> Vec<C64> {
    let l = &h.levels[li];
    l.c_point.iter().map(|&cp| reference_omega(policy, l.succ, cp && !agnostic, n)).collect()
}

/// Textbook additive correction scheme on the fine iterate.
pub fn textbook_add(h: &DenseHierarchy, u: &mut [C64], omega_s: C64, omega_cg: C64) -> Result<()> {
    fn add(h: &DenseHierarchy, li: usize, u: &mut [C64], chi: &[C64], ws: C64, wcg: C64) -> Result<()> {
        let r = h.residual(li, chi, u);
        let s = h.jacobi(li, &r)?;
        for (ui, si) in u.iter_mut().zip(s) {
            *ui += ws * si;
        }
        if li > 0 {
            let mut coarse = vec![ZERO; h.levels[li - 1].system.load.len()];
            let chi_c = h.restrict(li, &r);
            add(h, li - 1, &mut coarse, &chi_c, ws, wcg)?;
            for (ui, pc) in u.iter_mut().zip(h.prolong(li, &coarse)) {
                *ui += wcg * pc;
            }
        }
        Ok(())
    }
    let li = h.levels.len() - 1;
    let mut v = u.to_vec();
    add(h, li, &mut v, &h.finest().system.load, omega_s, omega_cg)?;
    u.copy_from_slice(&v);
    Ok(())
}

/// Bottom-up additive FAS cycle.
pub fn bu_fas(h: &DenseHierarchy, state: &mut DenseState, policy: &OmegaPolicy, n: u64) -> Result<()> {
    fn rec(h: &DenseHierarchy, li: usize, st: &mut DenseState, policy: &OmegaPolicy, n: u64) -> Result<()> {
        let r = h.residual(li, &st.b[li], &st.u[li]);
        let du = scale(&omegas(h, li, policy, n, policy.bpx), &h.jacobi(li, &r)?);
        if li == 0 {
            for (u, d) in st.u[li].iter_mut().zip(&du) {
                *u += d;
            }
            return Ok(());
        }
        st.u[li - 1] = h.inject(li, &st.u[li]);
        let pu = h.prolong(li, &st.u[li - 1]);
        let u_hat: Vec<C64> = st.u[li].iter().zip(pu).map(|(a, b)| a - b).collect();
        let r_hat = h.residual(li, &st.b[li], &u_hat);
        st.b[li - 1] = h.restrict(li, &r_hat);
        let old = st.u[li - 1].clone();
        rec(h, li - 1, st, policy, n)?;
        let mut corr: Vec<C64> = st.u[li - 1].iter().zip(&old).map(|(a, b)| a - b).collect();
        if policy.bpx {
            for (c, idu) in corr.iter_mut().zip(h.inject(li, &du)) {
                *c -= idu;
            }
        }
        let pc = h.prolong(li, &corr);
        for ((u, d), c) in st.u[li].iter_mut().zip(&du).zip(pc) {
            *u += d + c;
        }
        Ok(())
    }
    let li = h.levels.len() - 1;
    state.b[li] = h.finest().system.load.clone();
    rec(h, li, state, policy, n)
}

/// One traversal of the top-down pipelined cycle, additive or BPX.
pub fn top_down(h: &DenseHierarchy, st: &mut DenseState, policy: &OmegaPolicy, n: u64, bpx: bool) -> Result<()> {
    let nl = h.levels.len();
    let mut u_hat = Vec::with_capacity(nl);
    for li in 0..nl {
        let (psc, psi, pu) = if li > 0 {
            (h.prolong(li, &st.sc[li - 1]), h.prolong(li, &st.si[li - 1]), h.prolong(li, &st.u[li - 1]))
        } else {
            let z = vec![ZERO; st.u[li].len()];
            (z.clone(), z.clone(), z)
        };
        let cp = &h.levels[li].c_point;
        for i in 0..st.u[li].len() {
            st.sc[li][i] += psc[i];
            if bpx && !cp[i] {
                st.sc[li][i] -= psi[i];
            }
            st.u[li][i] += st.sc[li][i] + st.sf[li][i];
            st.sf[li][i] = ZERO;
        }
        u_hat.push(st.u[li].iter().zip(&pu).map(|(a, b)| a - b).collect::<Vec<_>>());
    }
    st.b[nl - 1] = h.finest().system.load.clone();
    for li in (0..nl).rev() {
        let r = h.residual(li, &st.b[li], &st.u[li]);
        let r_hat = h.residual(li, &st.b[li], &u_hat[li]);
        let s = h.jacobi(li, &r)?;
        let ws = scale(&omegas(h, li, policy, n, bpx), &s);
        let cp = &h.levels[li].c_point;
        st.sc[li] = if bpx { ws.iter().zip(cp).map(|(&w, &c)| if c { ZERO } else { w }).collect() } else { ws.clone() };
        if li > 0 {
            st.b[li - 1] = h.restrict(li, &r_hat);
            let carried: Vec<C64> = st.sf[li].iter().zip(&st.sc[li]).map(|(a, b)| a + b).collect();
            st.sf[li - 1] = h.inject(li, &carried);
            if bpx {
                st.si[li - 1] = h.inject(li, &ws);
            }
        }
    }
    Ok(())
}

/// Fine iterates of `cycles` cycles of the given kind starting from `u0`.
/// Top-down kinds report one iterate per traversal.
pub fn reference_cycles(
    kind: CycleKind,
    h: &DenseHierarchy,
    policy: &OmegaPolicy,
    omega_cg: C64,
    u0: &[C64],
    cycles: usize,
) -> Result<Vec<Vec<C64>>> {
    let mut out = Vec::with_capacity(cycles);
    match kind {
        CycleKind::TextbookAdd => {
            let mut u = u0.to_vec();
            for n in 1..=cycles as u64 {
                textbook_add(h, &mut u, policy.base(n), omega_cg)?;
                out.push(u.clone());
            }
        }
        CycleKind::BuFas => {
            let mut st = DenseState::from_fine(h, u0);
            for n in 1..=cycles as u64 {
                bu_fas(h, &mut st, policy, n)?;
                out.push(st.fine().to_vec());
            }
        }
        CycleKind::TdAdd | CycleKind::TdBpx => {
            if kind == CycleKind::TdBpx && !policy.bpx {
                return Err(Error::Config("the BPX cycle requires a bpx policy"));
            }
            let mut st = DenseState::from_fine(h, u0);
            for n in 1..=cycles as u64 {
                top_down(h, &mut st, policy, n, kind == CycleKind::TdBpx)?;
                out.push(st.fine().to_vec());
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{ChannelSpec, ChiField, PhiField};
    use core::f64::consts::PI;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn one_dimensional_poisson_matrix() {
        let s = dense_assemble(&ProblemSpec::single(1, ChannelSpec::new(PhiField::Constant(ZERO), ChiField::Zero), 0.0), 1).unwrap();
        let expected = [6.0, -3.0, -3.0, 6.0];
        for (a, e) in s.matrix.data.iter().zip(expected) {
            assert!((a - c(e)).norm() < 1e-13);
        }
    }

    #[test]
    fn complex_symmetric_and_real_without_rotation() {
        let spec = |theta| ProblemSpec::single(2, ChannelSpec::new(PhiField::Constant(c(30.0)), ChiField::SinProduct), theta);
        let s = dense_assemble(&spec(0.5), 2).unwrap();
        let n = s.matrix.rows;
        for i in 0..n {
            for j in 0..n {
                assert!((s.matrix.get(i, j) - s.matrix.get(j, i)).norm() < 1e-13);
            }
        }
        let s0 = dense_assemble(&spec(0.0), 2).unwrap();
        assert!(s0.matrix.data.iter().all(|a| a.im == 0.0));
    }

    #[test]
    fn identity_solve() {
        let rhs = [C64::new(1.0, 2.0), c(-3.0), C64::new(0.0, 0.5)];
        assert_eq!(direct_solve(&DenseMatrix::identity(3), &rhs).unwrap(), rhs.to_vec());
        assert!(matches!(direct_solve(&DenseMatrix::zeros(2, 2), &rhs[..2]), Err(Error::SingularMatrix { column: 0 })));
    }

    #[test]
    fn one_dimensional_poisson_solution_is_second_order() {
        let spec = ProblemSpec::poisson_sin(1);
        let s = dense_assemble(&spec, 3).unwrap();
        let x = direct_solve(&s.matrix, &s.load).unwrap();
        assert!(relative_residual(&s.matrix, &x, &s.load) < 1e-10);
        let h = 1.0 / 27.0;
        let err = s.vertices.iter().zip(&x).map(|(v, u)| (u - c(libm::sin(PI * v[0] as f64 * h))).norm()).fold(0.0, f64::max);
        assert!(err < 2.0 * h * h * PI * PI, "error {err}");
    }

    #[test]
    fn rotated_helmholtz_is_solvable() {
        let spec = ProblemSpec::single(1, ChannelSpec::new(PhiField::Constant(c(2025.0)), ChiField::SinProduct), 35f64.to_radians());
        let s = dense_assemble(&spec, 4).unwrap();
        let x = direct_solve(&s.matrix, &s.load).unwrap();
        assert!(x.iter().all(|v| v.re.is_finite() && v.im.is_finite()));
        assert!(relative_residual(&s.matrix, &x, &s.load) < 1e-10);
    }

    #[test]
    fn capacity_is_enforced() {
        assert!(matches!(dense_assemble(&ProblemSpec::poisson_sin(3), 4), Err(Error::Capacity { .. })));
    }

    #[test]
    fn galerkin_property_holds() {
        let spec = ProblemSpec::single(2, ChannelSpec::new(PhiField::Constant(c(50.0)), ChiField::SinProduct), 0.3);
        let f = dense_assemble(&spec, 2).unwrap();
        let g = dense_assemble(&spec, 1).unwrap();
        assert!(galerkin_defect(&f, &g) < 1e-12);
    }

    #[test]
    fn single_level_textbook_is_damped_jacobi() {
        let spec = ProblemSpec::poisson_sin(1);
        let h = DenseHierarchy::new(&spec, 2, 2).unwrap();
        let s = &h.finest().system;
        let u0: Vec<C64> = (0..s.load.len()).map(|i| c(i as f64 * 0.1)).collect();
        let mut u = u0.clone();
        textbook_add(&h, &mut u, c(0.6), c(1.0)).unwrap();
        let au = s.matrix.matvec(&u0);
        for i in 0..u.len() {
            let expected = u0[i] + c(0.6) * (s.load[i] - au[i]) / s.matrix.get(i, i);
            assert!((u[i] - expected).norm() < 1e-14);
        }
    }

    #[test]
    fn reference_omega_table() {
        let p = OmegaPolicy::new(OmegaKind::Exponential, 0.8);
        assert!((reference_omega(&p, 2, false, 1) - c(0.512)).norm() < 1e-15);
        let p = OmegaPolicy::new(OmegaKind::Transition, 0.8);
        assert_eq!(reference_omega(&p, 3, false, 1), c(1.0));
    }
}
