//! Benchmark problems: right-hand sides, Helmholtz shift fields, complex
//! rotation geometry and multichannel setups.
//!
//! The PDE per channel is `-Δu - φu = χ` on the unit hypercube with
//! homogeneous Dirichlet conditions; `φ = k² > 0` is the indefinite case.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::{Error, Result, C64, MAX_DIM};

/// `χ = p π² Π sin(π x_i)`, whose continuous solution for `φ = 0` is
/// `Π sin(π x_i)`.
pub fn chi_sin(x: &[f64]) -> f64 {
    let p = x.len() as f64;
    p * PI * PI * x.iter().map(|&xi| libm::sin(PI * xi)).product::<f64>()
}

/// Indicator of the ball of radius 0.1 around the domain centre.
pub fn chi_ball(x: &[f64]) -> f64 {
    let r2: f64 = x.iter().map(|&xi| (xi - 0.5) * (xi - 0.5)).sum();
    if r2 < 0.01 { 1.0 } else { 0.0 }
}

/// Two-dimensional channel scenario: Gaussian source at the origin and a
/// shift field peaking along both axes. Returns `(χ, φ)`.
pub fn gaussian_scenario(x: &[f64]) -> Result<(f64, f64)> {
    if x.len() != 2 {
        return Err(Error::Config("gaussian scenario is two-dimensional"));
    }
    let (a, b) = (x[0], x[1]);
    let chi = libm::exp(-(125.0 * a) * (125.0 * a) - (125.0 * b) * (125.0 * b));
    let phi = 45.0 * 45.0
        + 135.0 * 135.0 * (libm::exp(-(15.0 * a) * (15.0 * a)) + libm::exp(-(15.0 * b) * (15.0 * b)));
    Ok((chi, phi))
}

/// Wave number that keeps `k h = 5/9`.
pub fn wave_number_for_width(h: f64) -> f64 {
    5.0 / (9.0 * h)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhiField {
    Constant(C64),
    GaussianScenario,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChiField {
    Zero,
    SinProduct,
    Ball,
    GaussianScenario,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSpec {
    pub phi: PhiField,
    pub chi: ChiField,
}

impl ChannelSpec {
    pub fn new(phi: PhiField, chi: ChiField) -> Self {
        Self { phi, chi }
    }

    pub fn poisson_sin() -> Self {
        Self::new(PhiField::Constant(C64::new(0.0, 0.0)), ChiField::SinProduct)
    }

    pub fn phi_at(&self, x: &[f64]) -> Result<C64> {
        match self.phi {
            PhiField::Constant(c) => Ok(c),
            PhiField::GaussianScenario => Ok(C64::new(gaussian_scenario(x)?.1, 0.0)),
        }
    }

    pub fn chi_at(&self, x: &[f64]) -> Result<f64> {
        match self.chi {
            ChiField::Zero => Ok(0.0),
            ChiField::SinProduct => Ok(chi_sin(x)),
            ChiField::Ball => Ok(chi_ball(x)),
            ChiField::GaussianScenario => Ok(gaussian_scenario(x)?.0),
        }
    }
}

/// One face of the unit hypercube.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Face {
    pub axis: usize,
    /// `true` for the face `x_axis = 1`.
    pub upper: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbsorbingLayer {
    /// Layer depth as a fraction of the domain.
    pub fraction: f64,
    /// Rotation angle inside the layer (radians).
    pub angle: f64,
    pub faces: Vec<Face>,
}

impl AbsorbingLayer {
    /// Layer on the upper faces of the first two axes, a third deep, 30°.
    pub fn top_right() -> Self {
        Self {
            fraction: 1.0 / 3.0,
            angle: 30f64.to_radians(),
            faces: vec![Face { axis: 0, upper: true }, Face { axis: 1, upper: true }],
        }
    }

    fn contains(&self, centre: &[f64]) -> bool {
        self.faces.iter().any(|f| {
            let x = centre[f.axis];
            let dist = if f.upper { 1.0 - x } else { x };
            dist < self.fraction
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Coupling {
    Independent,
    /// Row-major `ĉ x ĉ` coefficients `A_ij`; each multiplies the mass
    /// operator. Diagonal entries are ignored.
    CoupledBlock(Vec<C64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub dim: usize,
    pub channels: Vec<ChannelSpec>,
    /// Uniform complex rotation outside any absorbing layer (radians).
    pub theta: f64,
    pub absorbing: Option<AbsorbingLayer>,
    pub coupling: Coupling,
}

impl ProblemSpec {
    pub fn single(dim: usize, channel: ChannelSpec, theta: f64) -> Self {
        Self { dim, channels: vec![channel], theta, absorbing: None, coupling: Coupling::Independent }
    }

    pub fn poisson_sin(dim: usize) -> Self {
        Self::single(dim, ChannelSpec::poisson_sin(), 0.0)
    }

    /// The two-dimensional Gaussian channel scenario with its absorbing layer.
    pub fn gaussian(theta: f64) -> Self {
        Self {
            dim: 2,
            channels: vec![ChannelSpec::new(PhiField::GaussianScenario, ChiField::GaussianScenario)],
            theta,
            absorbing: Some(AbsorbingLayer::top_right()),
            coupling: Coupling::Independent,
        }
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_DIM).contains(&self.dim) {
            return Err(Error::Dimension(self.dim));
        }
        if self.channels.is_empty() {
            return Err(Error::Config("at least one channel required"));
        }
        if !(0.0..=PI / 4.0 + 1e-12).contains(&self.theta) {
            return Err(Error::Config("rotation angle must lie in [0, 45°]"));
        }
        if let Coupling::CoupledBlock(a) = &self.coupling {
            let c = self.channels.len();
            if c < 2 {
                return Err(Error::Config("coupled block needs at least two channels"));
            }
            if a.len() != c * c {
                return Err(Error::Config("coupling matrix must be ĉ x ĉ"));
            }
        }
        let gaussian = self.channels.iter().any(|ch| {
            ch.phi == PhiField::GaussianScenario || ch.chi == ChiField::GaussianScenario
        });
        if gaussian && self.dim != 2 {
            return Err(Error::Config("gaussian scenario is two-dimensional"));
        }
        if let Some(layer) = &self.absorbing {
            if layer.faces.iter().any(|f| f.axis >= self.dim) {
                return Err(Error::Config("absorbing face axis outside dimension"));
            }
        }
        Ok(())
    }

    /// Coupling coefficient `A_ij`, zero for independent channels.
    #[inline]
    pub fn coupling_coeff(&self, i: usize, j: usize) -> C64 {
        match &self.coupling {
            Coupling::CoupledBlock(a) if i != j => a[i * self.channels.len() + j],
            _ => C64::new(0.0, 0.0),
        }
    }

    pub fn is_coupled(&self) -> bool {
        matches!(self.coupling, Coupling::CoupledBlock(_))
    }
}

/// Rotation angle of a cell given its centre.
pub fn cell_theta(centre: &[f64], spec: &ProblemSpec) -> f64 {
    match &spec.absorbing {
        Some(layer) if layer.contains(centre) => layer.angle,
        _ => spec.theta,
    }
}

/// Fuse single-channel setups sharing one geometry into one multichannel
/// problem solved on one grid.
pub fn fuse_channels(specs: &[ProblemSpec]) -> Result<ProblemSpec> {
    let first = specs.first().ok_or(Error::Config("nothing to fuse"))?;
    for s in specs {
        if s.dim != first.dim || s.theta != first.theta || s.absorbing != first.absorbing {
            return Err(Error::Config("fused channels must share dimension and rotation geometry"));
        }
        if s.is_coupled() {
            return Err(Error::Config("cannot fuse coupled setups"));
        }
    }
    let channels = specs.iter().flat_map(|s| s.channels.iter().copied()).collect();
    Ok(ProblemSpec {
        dim: first.dim,
        channels,
        theta: first.theta,
        absorbing: first.absorbing.clone(),
        coupling: Coupling::Independent,
    })
}

/// Action of one block row on a channel tuple: `out_i = h_i u_i + Σ_{j≠i}
/// A_ij u_j`, where `h_i` is the (scalar) diagonal-block action.
pub fn coupled_block_apply(h_diag: &[C64], coupling: &[C64], u: &[C64]) -> Vec<C64> {
    let c = u.len();
    (0..c)
        .map(|i| {
            let mut v = h_diag[i] * u[i];
            for j in (0..c).filter(|&j| j != i) {
                v += coupling[i * c + j] * u[j];
            }
            v
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sin_rhs_values() {
        assert!((chi_sin(&[0.5, 0.5]) - 2.0 * PI * PI).abs() < 1e-12);
        assert_eq!(chi_sin(&[0.0, 0.3]), 0.0);
        assert!((chi_sin(&[0.5, 0.5, 1.0 / 6.0]) - 1.5 * PI * PI).abs() < 1e-12);
    }

    #[test]
    fn ball_indicator() {
        assert_eq!(chi_ball(&[0.5, 0.5]), 1.0);
        assert_eq!(chi_ball(&[0.61, 0.5]), 0.0);
        assert_eq!(chi_ball(&[0.75, 0.5]), 0.0);
        // exactly on the sphere: 0.5 + 0.1 is not exactly representable, use
        // a point whose squared distance is exactly 0.01 in binary arithmetic
        let x = [0.5 + 0.1, 0.5];
        let r2 = (x[0] - 0.5) * (x[0] - 0.5);
        assert_eq!(chi_ball(&x), if r2 < 0.01 { 1.0 } else { 0.0 });
    }

    #[test]
    fn gaussian_values() {
        let (chi, phi) = gaussian_scenario(&[0.0, 0.0]).unwrap();
        assert_eq!(chi, 1.0);
        assert_eq!(phi, 38475.0);
        let (chi, phi) = gaussian_scenario(&[1.0, 1.0]).unwrap();
        assert!(chi < 1e-300);
        assert!((phi - 2025.0).abs() < 1e-10);
        let (_, phi) = gaussian_scenario(&[0.2, 0.0]).unwrap();
        let expected = 2025.0 + 18225.0 * ((-9.0f64).exp() + 1.0);
        assert!((phi - expected).abs() < 1e-9);
        assert!((phi - 20252.25).abs() < 0.01);
        assert!(gaussian_scenario(&[0.1, 0.1, 0.1]).is_err());
    }

    #[test]
    fn rotation_geometry() {
        let plain = ProblemSpec::poisson_sin(2);
        assert_eq!(cell_theta(&[0.9, 0.1], &plain), 0.0);
        let g = ProblemSpec::gaussian(0.2);
        assert_eq!(cell_theta(&[0.9, 0.1], &g), 30f64.to_radians());
        assert_eq!(cell_theta(&[0.1, 0.9], &g), 30f64.to_radians());
        assert_eq!(cell_theta(&[0.5, 0.5], &g), 0.2);
    }

    #[test]
    fn kh_family() {
        assert!((wave_number_for_width(1.0 / 81.0) - 45.0).abs() < 1e-12);
        assert!((wave_number_for_width(1.0 / 27.0) - 15.0).abs() < 1e-12);
        assert!((wave_number_for_width(1.0 / 243.0) - 135.0).abs() < 1e-10);
    }

    #[test]
    fn validation() {
        let mut s = ProblemSpec::poisson_sin(2);
        assert!(s.validate().is_ok());
        s.coupling = Coupling::CoupledBlock(vec![C64::new(0.0, 0.0)]);
        assert!(s.validate().is_err());
        let mut g = ProblemSpec::gaussian(0.0);
        g.dim = 3;
        assert!(g.validate().is_err());
        let mut r = ProblemSpec::poisson_sin(2);
        r.theta = 1.0;
        assert!(r.validate().is_err());
    }

    #[test]
    fn fusion() {
        let a = ProblemSpec::poisson_sin(2);
        let fused = fuse_channels(&[a.clone(), a.clone()]).unwrap();
        assert_eq!(fused.num_channels(), 2);
        let mut b = a.clone();
        b.theta = 0.3;
        assert!(fuse_channels(&[a, b]).is_err());
    }

    #[test]
    fn block_apply() {
        let h = [C64::new(2.0, 0.0), C64::new(3.0, 0.0)];
        let u = [C64::new(1.0, 0.0), C64::new(0.0, 1.0)];
        assert_eq!(coupled_block_apply(&h, &[C64::new(0.0, 0.0); 4], &u), vec![h[0] * u[0], h[1] * u[1]]);
        let a = [C64::new(9.0, 0.0), C64::new(0.5, 0.0), C64::new(-1.0, 0.0), C64::new(9.0, 0.0)];
        let out = coupled_block_apply(&h, &a, &u);
        assert_eq!(out[0], C64::new(2.0, 0.5));
        assert_eq!(out[1], C64::new(-1.0, 3.0));
    }
}
