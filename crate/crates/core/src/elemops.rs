//! Reference element matrices and the per-cell complex-scaled Helmholtz
//! operator.
//!
//! Local vertex numbering inside a cell is tensor-product with axis 0
//! fastest: local vertex `k` sits at offset `(k >> d) & 1` along axis `d`.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result, C64, MAX_DIM};

const LAPLACE_1D: [[f64; 2]; 2] = [[1.0, -1.0], [-1.0, 1.0]];
const MASS_1D: [[f64; 2]; 2] = [[1.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 1.0 / 3.0]];

fn check_dim(p: usize) -> Result<()> {
    if (1..=MAX_DIM).contains(&p) {
        Ok(())
    } else {
        Err(Error::Dimension(p))
    }
}

#[inline]
fn bit(k: usize, d: usize) -> usize {
    (k >> d) & 1
}

/// Element stiffness matrix of p-linear shape functions on the unit
/// hypercube, row-major `2^p x 2^p`.
pub fn reference_laplace(p: usize) -> Result<Vec<f64>> {
    check_dim(p)?;
    let n = 1 << p;
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut sum = 0.0;
            for grad_axis in 0..p {
                let mut term = 1.0;
                for d in 0..p {
                    let m = if d == grad_axis { &LAPLACE_1D } else { &MASS_1D };
                    term *= m[bit(i, d)][bit(j, d)];
                }
                sum += term;
            }
            out[i * n + j] = sum;
        }
    }
    Ok(out)
}

/// Element mass matrix on the unit hypercube, same layout as
/// [`reference_laplace`].
pub fn reference_mass(p: usize) -> Result<Vec<f64>> {
    check_dim(p)?;
    let n = 1 << p;
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = (0..p).map(|d| MASS_1D[bit(i, d)][bit(j, d)]).product();
        }
    }
    Ok(out)
}

/// Reference matrices for one dimension, computed once and shared.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceMatrices {
    pub dim: usize,
    pub laplace: Vec<f64>,
    pub mass: Vec<f64>,
}

impl ReferenceMatrices {
    pub fn new(p: usize) -> Result<Self> {
        Ok(Self { dim: p, laplace: reference_laplace(p)?, mass: reference_mass(p)? })
    }

    /// Number of vertices per cell, `2^p`.
    #[inline]
    pub fn corners(&self) -> usize {
        1 << self.dim
    }
}

/// Complex mesh width `h * e^{i theta}`.
#[inline]
pub fn complex_width(h: f64, theta: f64) -> C64 {
    C64::new(h * libm::cos(theta), h * libm::sin(theta))
}

/// Scalar weights of the two reference operators for one cell and channel:
/// the local operator is `stiffness * laplace - shift * mass`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorWeights {
    pub stiffness: C64,
    pub shift: C64,
    /// `h_elem^p`, the complex cell volume; scales mass-type terms.
    pub volume: C64,
}

impl OperatorWeights {
    pub fn new(p: usize, h_elem: C64, phi: C64) -> Self {
        let volume = h_elem.powi(p as i32);
        Self { stiffness: h_elem.powi(p as i32 - 2), shift: phi * volume, volume }
    }

    /// Diagonal entry of the local operator at local vertex `k`.
    #[inline]
    pub fn diagonal(&self, refs: &ReferenceMatrices, k: usize) -> C64 {
        let n = refs.corners();
        self.stiffness * refs.laplace[k * n + k] - self.shift * refs.mass[k * n + k]
    }
}

/// Dense local Helmholtz operator of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellOperator {
    pub dim: usize,
    pub h_elem: C64,
    pub phi: C64,
    /// Row-major `2^p x 2^p`.
    pub matrix: Vec<C64>,
}

impl CellOperator {
    pub fn entry(&self, i: usize, j: usize) -> C64 {
        self.matrix[i * (1 << self.dim) + j]
    }

    /// `out = matrix * x`.
    pub fn apply(&self, x: &[C64], out: &mut [C64]) {
        let n = 1 << self.dim;
        for i in 0..n {
            let row = &self.matrix[i * n..(i + 1) * n];
            out[i] = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }
}

/// Local operator `h_e^{p-2} L - phi h_e^p M` with `h_e = h e^{i theta}`.
pub fn cell_operator(refs: &ReferenceMatrices, h: f64, theta: f64, phi: C64) -> CellOperator {
    let h_elem = complex_width(h, theta);
    let w = OperatorWeights::new(refs.dim, h_elem, phi);
    let matrix = refs
        .laplace
        .iter()
        .zip(&refs.mass)
        .map(|(&l, &m)| w.stiffness * l - w.shift * m)
        .collect();
    CellOperator { dim: refs.dim, h_elem, phi, matrix }
}

/// The `3^p` stencil at an interior vertex of a regular grid, reassembled
/// from the `2^p` adjacent cells. Offsets run over `{-1, 0, 1}^p` with axis
/// 0 fastest. Verification only.
pub fn assembled_interior_stencil(
    refs: &ReferenceMatrices,
    h: f64,
    theta: f64,
    phi: C64,
) -> Vec<C64> {
    let p = refs.dim;
    let n = refs.corners();
    let op = cell_operator(refs, h, theta, phi);
    let mut stencil = vec![C64::new(0.0, 0.0); 3usize.pow(p as u32)];
    // The vertex plays local role `k` in exactly one adjacent cell per k.
    for k in 0..n {
        for j in 0..n {
            let mut pos = 0usize;
            let mut stride = 1usize;
            for d in 0..p {
                let offset = bit(j, d) as isize - bit(k, d) as isize;
                pos += ((offset + 1) as usize) * stride;
                stride *= 3;
            }
            stencil[pos] += op.entry(k, j);
        }
    }
    stencil
}
