//! Geometric inter-grid transfer: p-linear prolongation `P`, restriction
//! `R = P^T`, injection `I` and the hierarchical surplus.
//!
//! A child-level position inside a parent cell is given in thirds: each
//! component of a [`RelPos`] lies in `0..=3`, i.e. `{0, 1/3, 2/3, 1}`.

use alloc::vec::Vec;

use crate::{Error, Result, C64, MAX_DIM};

/// Position of a child-level vertex relative to its parent cell, in thirds.
pub type RelPos = [u8; MAX_DIM];

/// Weight of parent corner `k` at `rel`, as an exact multiple of `3^-p`.
#[inline]
pub fn weight_numerator(p: usize, k: usize, rel: &RelPos) -> u32 {
    (0..p)
        .map(|d| {
            let r = rel[d] as u32;
            if (k >> d) & 1 == 1 { r } else { 3 - r }
        })
        .product()
}

#[inline]
pub fn weight(p: usize, k: usize, rel: &RelPos) -> f64 {
    weight_numerator(p, k, rel) as f64 / 3u32.pow(p as u32) as f64
}

/// Tabulated nonzero prolongation weights for every relative position.
#[derive(Debug, Clone)]
pub struct TransferWeights {
    dim: usize,
    /// Indexed by [`TransferWeights::slot`]; `(corner, weight)` pairs.
    table: Vec<Vec<(usize, f64)>>,
}

impl TransferWeights {
    pub fn new(p: usize) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&p) {
            return Err(Error::Dimension(p));
        }
        let slots = 4usize.pow(p as u32);
        let mut table = Vec::with_capacity(slots);
        for s in 0..slots {
            let mut rel = [0u8; MAX_DIM];
            for (d, r) in rel.iter_mut().enumerate().take(p) {
                *r = ((s >> (2 * d)) & 3) as u8;
            }
            let entries = (0..1usize << p)
                .filter_map(|k| {
                    let w = weight_numerator(p, k, &rel);
                    (w != 0).then(|| (k, w as f64 / 3u32.pow(p as u32) as f64))
                })
                .collect();
            table.push(entries);
        }
        Ok(Self { dim: p, table })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn slot(&self, rel: &RelPos) -> usize {
        (0..self.dim).map(|d| (rel[d] as usize) << (2 * d)).sum()
    }

    /// Nonzero `(corner, weight)` pairs at `rel`.
    #[inline]
    pub fn at(&self, rel: &RelPos) -> &[(usize, f64)] {
        &self.table[self.slot(rel)]
    }

    #[inline]
    pub fn prolong(&self, corners: &[C64], rel: &RelPos) -> C64 {
        self.at(rel).iter().map(|&(k, w)| corners[k] * w).sum()
    }

    #[inline]
    pub fn restrict_accumulate(&self, acc: &mut [C64], rel: &RelPos, value: C64) {
        for &(k, w) in self.at(rel) {
            acc[k] += value * w;
        }
    }
}

/// Tensor-product linear interpolation of the `2^p` parent corner values.
pub fn prolong(p: usize, corners: &[C64], rel: &RelPos) -> C64 {
    (0..1usize << p).map(|k| corners[k] * weight(p, k, rel)).sum()
}

/// `acc[k] += w_k(rel) * value` for every parent corner `k`.
pub fn restrict_accumulate(p: usize, acc: &mut [C64], rel: &RelPos, value: C64) {
    for (k, a) in acc.iter_mut().enumerate().take(1 << p) {
        let w = weight_numerator(p, k, rel);
        if w != 0 {
            *a += value * (w as f64 / 3u32.pow(p as u32) as f64);
        }
    }
}

/// Plain copy of a fine value onto the coinciding coarse vertex.
pub fn inject(fine: C64, coincides: bool) -> Result<C64> {
    if coincides {
        Ok(fine)
    } else {
        Err(Error::Contract("injection target does not coincide with a coarse vertex"))
    }
}

/// `u - P(parent)` at one vertex.
pub fn hierarchical_surplus(p: usize, u: C64, corners: &[C64], rel: &RelPos) -> C64 {
    u - prolong(p, corners, rel)
}

/// Local corner index whose position coincides with `rel`, if any.
pub fn coinciding_corner(p: usize, rel: &RelPos) -> Option<usize> {
    let mut k = 0;
    for (d, &r) in rel.iter().enumerate().take(p) {
        match r {
            0 => {}
            3 => k |= 1 << d,
            _ => return None,
        }
    }
    Some(k)
}
