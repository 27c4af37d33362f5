//! Per-vertex and per-cell numerical kernels used inside traversals.
//!
//! Cells scatter `-H u`, `-H û` and the operator diagonal into their
//! vertices; vertices turn the accumulators into residuals once all
//! adjacent cells are done.

use crate::elemops::{CellOperator, OperatorWeights, ReferenceMatrices};
use crate::spacetree::VertexPayload;
use crate::{Error, Index, Result, C64, MAX_DIM};

const ZERO: C64 = C64::new(0.0, 0.0);
/// Largest local vector: `2^MAX_DIM` corners.
pub const MAX_CORNERS: usize = 1 << MAX_DIM;

/// Clears `r`, `r̂`, `diag` and `b`. Solution and pipeline helpers stay.
#[inline]
pub fn zero_accumulators(payload: &mut [VertexPayload]) {
    for pl in payload {
        pl.r = ZERO;
        pl.r_hat = ZERO;
        pl.diag = ZERO;
        pl.b = ZERO;
    }
}

/// Local contributions of one cell, for a single channel.
#[derive(Debug, Clone, PartialEq)]
pub struct CellContribution {
    pub d_r: [C64; MAX_CORNERS],
    pub d_r_hat: [C64; MAX_CORNERS],
    pub d_diag: [C64; MAX_CORNERS],
}

/// `dR = -A u`, `dR̂ = -A û`, `dDiag = diag(A)` for a dense cell operator.
pub fn accumulate_cell(op: &CellOperator, adj_u: &[C64], adj_u_hat: &[C64]) -> CellContribution {
    let n = 1 << op.dim;
    let mut out = CellContribution { d_r: [ZERO; MAX_CORNERS], d_r_hat: [ZERO; MAX_CORNERS], d_diag: [ZERO; MAX_CORNERS] };
    for i in 0..n {
        let row = &op.matrix[i * n..(i + 1) * n];
        let mut a = ZERO;
        let mut b = ZERO;
        for j in 0..n {
            a += row[j] * adj_u[j];
            b += row[j] * adj_u_hat[j];
        }
        out.d_r[i] = -a;
        out.d_r_hat[i] = -b;
        out.d_diag[i] = row[i];
    }
    out
}

/// `out = (stiffness L - shift M) x` without forming the local matrix.
#[inline]
pub fn apply_weighted(refs: &ReferenceMatrices, w: &OperatorWeights, x: &[C64], out: &mut [C64]) {
    let n = refs.corners();
    for i in 0..n {
        let l = &refs.laplace[i * n..(i + 1) * n];
        let m = &refs.mass[i * n..(i + 1) * n];
        let mut lx = ZERO;
        let mut mx = ZERO;
        for j in 0..n {
            lx += x[j] * l[j];
            mx += x[j] * m[j];
        }
        out[i] = w.stiffness * lx - w.shift * mx;
    }
}

/// `out = volume M x`, the consistent mass action used for loads and
/// channel couplings.
#[inline]
pub fn apply_mass(refs: &ReferenceMatrices, volume: C64, x: &[C64], out: &mut [C64]) {
    let n = refs.corners();
    for i in 0..n {
        let m = &refs.mass[i * n..(i + 1) * n];
        let mut mx = ZERO;
        for j in 0..n {
            mx += x[j] * m[j];
        }
        out[i] = volume * mx;
    }
}

/// Turns accumulators into residuals: `r = b - H u`, `r̂ = b - H û`.
/// Dirichlet vertices are pinned: `u = r = r̂ = 0`.
#[inline]
pub fn finish_vertex(payload: &mut VertexPayload, on_boundary: bool) {
    if on_boundary {
        payload.u = ZERO;
        payload.r = ZERO;
        payload.r_hat = ZERO;
    } else {
        payload.r += payload.b;
        payload.r_hat += payload.b;
    }
}

/// Damped Jacobi update `ω r / diag`.
#[inline]
pub fn jacobi(r: C64, diag: C64, omega: C64) -> Result<C64> {
    if diag.norm() < 1e-300 {
        return Err(Error::SingularDiagonal { level: 0, index: [0; MAX_DIM] });
    }
    Ok(omega * r / diag)
}

/// [`jacobi`] with the vertex identity attached to a failure.
#[inline]
pub fn jacobi_at(r: C64, diag: C64, omega: C64, level: u8, index: &Index) -> Result<C64> {
    jacobi(r, diag, omega).map_err(|_| Error::SingularDiagonal { level, index: *index })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elemops::{assembled_interior_stencil, cell_operator, ReferenceMatrices};

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn zeroing_keeps_state() {
        let mut pl = [VertexPayload { u: c(1.0), r: c(2.0), r_hat: c(3.0), diag: c(4.0), sc: c(5.0), sf: c(6.0), si: c(7.0), chi: c(8.0), ..Default::default() }];
        zero_accumulators(&mut pl);
        assert_eq!((pl[0].r, pl[0].r_hat, pl[0].diag), (c(0.0), c(0.0), c(0.0)));
        assert_eq!((pl[0].u, pl[0].sc, pl[0].sf, pl[0].si, pl[0].chi), (c(1.0), c(5.0), c(6.0), c(7.0), c(8.0)));
    }

    #[test]
    fn zero_input_gives_local_diagonal() {
        let refs = ReferenceMatrices::new(2).unwrap();
        let op = cell_operator(&refs, 1.0 / 9.0, 0.3, c(20.0));
        let out = accumulate_cell(&op, &[c(0.0); 4], &[c(0.0); 4]);
        for k in 0..4 {
            assert_eq!(out.d_r[k], c(0.0));
            assert_eq!(out.d_diag[k], op.entry(k, k));
        }
    }

    #[test]
    fn constant_field_is_in_laplace_kernel() {
        let refs = ReferenceMatrices::new(2).unwrap();
        let op = cell_operator(&refs, 1.0 / 3.0, 0.0, c(0.0));
        let out = accumulate_cell(&op, &[c(1.0); 4], &[c(1.0); 4]);
        assert!(out.d_r.iter().all(|v| v.norm() < 1e-15));
    }

    #[test]
    fn delta_at_interior_vertex_gives_stencil_centre() {
        let refs = ReferenceMatrices::new(2).unwrap();
        let op = cell_operator(&refs, 1.0 / 3.0, 0.0, c(0.0));
        // the vertex plays corner k in the four adjacent cells
        let mut r = c(0.0);
        for k in 0..4 {
            let mut u = [c(0.0); 4];
            u[k] = c(1.0);
            r += accumulate_cell(&op, &u, &u).d_r[k];
        }
        assert!((r - c(-8.0 / 3.0)).norm() < 1e-14);
        let stencil = assembled_interior_stencil(&refs, 1.0 / 3.0, 0.0, c(0.0));
        assert!((r + stencil[4]).norm() < 1e-14);
    }

    #[test]
    fn weighted_apply_matches_dense_operator() {
        let refs = ReferenceMatrices::new(3).unwrap();
        let (h, th, phi) = (1.0 / 27.0, 0.4, C64::new(30.0, 2.0));
        let op = cell_operator(&refs, h, th, phi);
        let w = OperatorWeights::new(3, op.h_elem, phi);
        let x: [C64; 8] = core::array::from_fn(|i| C64::new(i as f64 - 2.0, 0.5 * i as f64));
        let mut a = [c(0.0); 8];
        let mut b = [c(0.0); 8];
        op.apply(&x, &mut a);
        apply_weighted(&refs, &w, &x, &mut b);
        for i in 0..8 {
            assert!((a[i] - b[i]).norm() < 1e-14 * (1.0 + a[i].norm()));
        }
    }

    #[test]
    fn finishing() {
        let mut pl = VertexPayload::default();
        finish_vertex(&mut pl, false);
        assert_eq!(pl.r, c(0.0));
        let mut pl = VertexPayload { u: c(3.0), b: c(1.0), r: c(-0.25), r_hat: c(0.5), ..Default::default() };
        finish_vertex(&mut pl, false);
        assert_eq!((pl.r, pl.r_hat), (c(0.75), c(1.5)));
        finish_vertex(&mut pl, true);
        assert_eq!((pl.u, pl.r, pl.r_hat), (c(0.0), c(0.0), c(0.0)));
    }

    #[test]
    fn jacobi_examples() {
        assert!((jacobi(c(2.0), c(2.0), c(0.8)).unwrap() - c(0.8)).norm() < 1e-15);
        assert_eq!(jacobi(c(2.0), c(3.0), c(0.0)).unwrap(), c(0.0));
        let w1 = C64::new(0.01 * 3f64.sqrt(), -0.01);
        assert!((jacobi(c(5.0), c(5.0), w1).unwrap() - w1).norm() < 1e-17);
        assert!(matches!(jacobi(c(1.0), c(0.0), c(1.0)), Err(Error::SingularDiagonal { .. })));
        assert!(matches!(
            jacobi_at(c(1.0), c(1e-301), c(1.0), 3, &[1, 2, 0, 0]),
            Err(Error::SingularDiagonal { level: 3, index: [1, 2, 0, 0] })
        ));
    }
}
