//! Residual norms over fine-grid vertices and work accounting.

use alloc::vec;
use alloc::vec::Vec;

use crate::C64;

/// Norms of one vector of fine-grid values.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ResidualNorms {
    pub max: f64,
    pub euclid: f64,
    /// `sqrt(Σ h_i^p |x_i|^2)`, the discrete L2 norm.
    pub h_norm: f64,
}

/// Streaming accumulation of [`ResidualNorms`], one slot per channel.
#[derive(Debug, Clone, Default)]
pub struct NormAccumulator {
    max: Vec<f64>,
    sq: Vec<f64>,
    hsq: Vec<f64>,
    /// Number of distinct vertices pushed.
    pub vertices: usize,
}

impl NormAccumulator {
    pub fn new(channels: usize) -> Self {
        Self { max: vec![0.0; channels], sq: vec![0.0; channels], hsq: vec![0.0; channels], vertices: 0 }
    }

    #[inline]
    pub fn push(&mut self, channel: usize, value: C64, volume: f64) {
        let a = value.norm_sqr();
        let m = libm::sqrt(a);
        if m > self.max[channel] || m.is_nan() {
            self.max[channel] = m;
        }
        self.sq[channel] += a;
        self.hsq[channel] += volume * a;
    }

    pub fn channel(&self, c: usize) -> ResidualNorms {
        ResidualNorms { max: self.max[c], euclid: libm::sqrt(self.sq[c]), h_norm: libm::sqrt(self.hsq[c]) }
    }

    pub fn per_channel(&self) -> Vec<ResidualNorms> {
        (0..self.max.len()).map(|c| self.channel(c)).collect()
    }

    /// All channels treated as one stacked vector.
    pub fn combined(&self) -> ResidualNorms {
        let max = self.max.iter().copied().fold(0.0, |a: f64, b| if b.is_nan() { b } else { a.max(b) });
        ResidualNorms {
            max,
            euclid: libm::sqrt(self.sq.iter().sum()),
            h_norm: libm::sqrt(self.hsq.iter().sum()),
        }
    }
}

/// `sqrt(Σ |h_i|^p |x_i|^2)`.
pub fn norm_h(values: &[C64], widths: &[f64], p: usize) -> f64 {
    let s: f64 = values.iter().zip(widths).map(|(x, &h)| libm::pow(h, p as f64) * x.norm_sqr()).sum();
    libm::sqrt(s)
}

/// Cost of a sweep measured in sweeps of the regular reference grid.
pub fn work_units(sweep_cost: f64, reference_cost: f64) -> f64 {
    sweep_cost / reference_cost
}
