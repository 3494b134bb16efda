//! Quadrature grids: Gauss-Legendre in the radial wavenumber and uniform
//! samples in the azimuthal angle difference.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::setup::OpticalSetup;

/// Gauss-Legendre nodes and weights on [a, b].
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut t = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, t);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * t * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (t * p1 - p0) / (t * t - 1.0);
            let dt = p1 / dp;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        let wi = 2.0 / ((1.0 - t * t) * dp * dp);
        x[i] = mid - half * t;
        x[n - 1 - i] = mid + half * t;
        w[i] = half * wi;
        w[n - 1 - i] = half * wi;
    }
    (x, w)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub q_max: f64,
    pub q_eps: f64,
}

impl RadialGrid {
    /// Gauss-Legendre grid on [q_max·1e−6, q_max].
    pub fn new(n: usize, q_max: f64) -> Result<Self> {
        if n < 2 || !(q_max > 0.0 && q_max.is_finite()) {
            return Err(Error::Config(format!("invalid radial grid: N = {n}, q_max = {q_max}")));
        }
        let q_eps = q_max * 1e-6;
        let (nodes, weights) = gauss_legendre(n, q_eps, q_max);
        Ok(Self { nodes, weights, q_max, q_eps })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AngularGrid {
    pub n_phi: usize,
}

impl AngularGrid {
    pub fn new(n_phi: usize) -> Result<Self> {
        if !n_phi.is_power_of_two() || n_phi < 8 {
            return Err(Error::Config(format!("N_phi must be a power of two ≥ 8, got {n_phi}")));
        }
        Ok(Self { n_phi })
    }

    /// Smallest admissible count for harmonics up to |n_extreme| with pump charge l_p.
    pub fn required(n_extreme: i64, l_p: i32) -> usize {
        let need = 8 * (n_extreme.unsigned_abs() as usize + l_p.unsigned_abs() as usize + 1);
        need.next_power_of_two()
    }

    pub fn phi(&self, k: usize) -> f64 {
        2.0 * PI * k as f64 / self.n_phi as f64
    }
}

/// Discretization parameters for a decomposition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_radial: usize,
    pub n_phi: usize,
    /// Radial cutoff as a fraction of k_s_air (the external angle in rad).
    pub q_max_rel: f64,
    /// OAM half-width around l_p/2.
    pub n_half_width: i64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            n_radial: 256,
            n_phi: 1024,
            q_max_rel: 0.08,
            n_half_width: 40,
        }
    }
}

impl GridSpec {
    pub fn n_range(&self, l_p: i32) -> (i64, i64) {
        let l = l_p as i64;
        (l.div_euclid(2) - self.n_half_width, (l + 1).div_euclid(2) + self.n_half_width)
    }

    pub fn radial(&self, setup: &OpticalSetup) -> Result<RadialGrid> {
        RadialGrid::new(self.n_radial, self.q_max_rel * setup.dispersion.k_s_air)
    }

    /// Angular grid honouring both the requested count and the harmonic range.
    pub fn angular(&self, l_p: i32) -> Result<AngularGrid> {
        let (lo, hi) = self.n_range(l_p);
        let need = AngularGrid::required(lo.abs().max(hi.abs()), l_p);
        AngularGrid::new(self.n_phi.max(need))
    }
}
