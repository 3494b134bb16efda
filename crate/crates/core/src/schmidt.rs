//! Schmidt decomposition of the Fourier blocks and the gain-dependent
//! quantities derived from it.

use std::f64::consts::PI;

use ndarray::{s, Array2};
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::RadialGrid;
use crate::kernels::ChiBlockSet;
use crate::linalg;

/// Singular values below this fraction of the block maximum are discarded.
pub const SINGULAR_CUTOFF: f64 = 1e-10;

/// Schmidt modes of one OAM block.
#[derive(Clone, Debug)]
pub struct SchmidtBlock {
    pub n: i64,
    /// λ_{mn} in non-increasing order of m.
    pub lambdas: Vec<f64>,
    /// u_{mn}(q_i): rows index the radial node, columns the mode m.
    pub u: Array2<C64>,
    /// v_{mn}(q_j), same layout.
    pub v: Array2<C64>,
}

impl SchmidtBlock {
    pub fn modes(&self) -> usize {
        self.lambdas.len()
    }
}

#[derive(Clone, Debug)]
pub struct SchmidtSpectrum {
    pub radial: RadialGrid,
    pub l_p: i32,
    pub n_min: i64,
    pub blocks: Vec<SchmidtBlock>,
}

pub fn decompose(chi: &ChiBlockSet) -> Result<SchmidtSpectrum> {
    let radial = &chi.radial;
    let scale: Vec<f64> = radial.nodes.iter().zip(&radial.weights).map(|(q, w)| (q * w).sqrt()).collect();
    let inv_sqrt_w: Vec<f64> = radial.weights.iter().map(|w| 1.0 / w.sqrt()).collect();
    let blocks = chi
        .blocks
        .par_iter()
        .enumerate()
        .map(|(b, chi_n)| {
            let n = chi.n_min + b as i64;
            let m = Array2::from_shape_fn(chi_n.dim(), |(i, j)| chi_n[[i, j]] * (scale[i] * scale[j]));
            let d = linalg::svd(&m).ok_or(Error::SvdFailure(n))?;
            if d.s.iter().any(|x| !x.is_finite()) {
                return Err(Error::SvdFailure(n));
            }
            let smax = d.s.first().copied().unwrap_or(0.0);
            let keep = d.s.iter().take_while(|&&x| smax > 0.0 && x > SINGULAR_CUTOFF * smax).count();
            let rows = chi_n.nrows();
            let mut u = Array2::zeros((rows, keep));
            let mut v = Array2::zeros((rows, keep));
            for k in 0..keep {
                let peak = (0..rows)
                    .max_by(|&a, &b| d.u[[a, k]].norm_sqr().total_cmp(&d.u[[b, k]].norm_sqr()))
                    .unwrap_or(0);
                let p = d.u[[peak, k]];
                let rot = if p.norm() > 0.0 { p.conj() / p.norm() } else { C64::new(1.0, 0.0) };
                for i in 0..rows {
                    u[[i, k]] = d.u[[i, k]] * rot * inv_sqrt_w[i];
                    v[[i, k]] = (d.v[[i, k]] * rot).conj() * inv_sqrt_w[i];
                }
            }
            Ok(SchmidtBlock {
                n,
                lambdas: d.s[..keep].iter().map(|x| x * x).collect(),
                u,
                v,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SchmidtSpectrum {
        radial: radial.clone(),
        l_p: chi.setup.pump.l_p,
        n_min: chi.n_min,
        blocks,
    })
}

impl SchmidtSpectrum {
    pub fn n_max(&self) -> i64 {
        self.n_min + self.blocks.len() as i64 - 1
    }

    pub fn block(&self, n: i64) -> Option<&SchmidtBlock> {
        if n < self.n_min {
            return None;
        }
        self.blocks.get((n - self.n_min) as usize)
    }

    /// λ_{mn}, zero for modes that were not retained.
    pub fn lambda(&self, m: usize, n: i64) -> f64 {
        self.block(n).and_then(|b| b.lambdas.get(m).copied()).unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.blocks.iter().flat_map(|b| b.lambdas.iter()).sum()
    }

    pub fn max_lambda(&self) -> f64 {
        self.blocks.iter().flat_map(|b| b.lambdas.iter().copied()).fold(0.0, f64::max)
    }

    /// Orbital eigenvalues Λ_n = Σ_m λ_{mn} for n = n_min..=n_max.
    pub fn orbital_eigenvalues(&self) -> Vec<(i64, f64)> {
        self.blocks.iter().map(|b| (b.n, b.lambdas.iter().sum())).collect()
    }

    /// Σ_m √λ_{mn} u_{mn}(q_s) v_{mn}(q_i)/√(q_s q_i).
    pub fn reconstruct_block(&self, n: i64) -> Option<Array2<C64>> {
        let b = self.block(n)?;
        let q = &self.radial.nodes;
        let rows = q.len();
        let mut out = Array2::zeros((rows, rows));
        for (k, lam) in b.lambdas.iter().enumerate() {
            let sigma = lam.sqrt();
            for i in 0..rows {
                let ui = b.u[[i, k]] * sigma / q[i].sqrt();
                for j in 0..rows {
                    out[[i, j]] += ui * b.v[[j, k]] / q[j].sqrt();
                }
            }
        }
        Some(out)
    }

    /// Gain-dependent spectra for theoretical gain G ≥ 0.
    pub fn weight(&self, g: f64) -> Result<WeightedSpectrum> {
        if !(g >= 0.0 && g.is_finite()) {
            return Err(Error::Config(format!("gain must be finite and non-negative, got {g}")));
        }
        let big: Vec<Vec<f64>> =
            self.blocks.iter().map(|b| b.lambdas.iter().map(|l| (g * l.sqrt()).sinh().powi(2)).collect()).collect();
        let tilde: Vec<Vec<f64>> =
            self.blocks.iter().map(|b| b.lambdas.iter().map(|l| (g * l.sqrt()).cosh().powi(2)).collect()).collect();
        let sum: f64 = big.iter().flatten().sum();
        let prime: Vec<Vec<f64>> = if sum > 0.0 {
            big.iter().map(|r| r.iter().map(|x| x / sum).collect()).collect()
        } else {
            let total = self.total();
            self.blocks.iter().map(|b| b.lambdas.iter().map(|l| l / total).collect()).collect()
        };
        let k = 1.0 / prime.iter().flatten().map(|p| p * p).sum::<f64>();
        Ok(WeightedSpectrum {
            g,
            n_min: self.n_min,
            big_lambda: big,
            lambda_tilde: tilde,
            lambda_prime: prime,
            schmidt_number: k,
        })
    }

    /// Mean photon number ⟨N(q)⟩ on the radial nodes.
    pub fn intensity_spectrum(&self, w: &WeightedSpectrum) -> IntensityCurve {
        let q = &self.radial.nodes;
        let values = (0..q.len())
            .map(|i| {
                let mut acc = 0.0;
                for (b, big) in self.blocks.iter().zip(&w.big_lambda) {
                    for (k, l) in big.iter().enumerate() {
                        acc += b.u[[i, k]].norm_sqr() * l;
                    }
                }
                acc / (2.0 * PI * q[i])
            })
            .collect();
        IntensityCurve { q: q.clone(), n_mean: values }
    }

    /// ∫d²q ⟨N(q)⟩ by radial quadrature of the intensity spectrum.
    pub fn integral_intensity_quadrature(&self, w: &WeightedSpectrum) -> f64 {
        let curve = self.intensity_spectrum(w);
        let r = &self.radial;
        2.0 * PI * (0..r.len()).map(|i| r.weights[i] * r.nodes[i] * curve.n_mean[i]).sum::<f64>()
    }

    /// Radial profiles |u_{mn}(q)|²/q for the requested (m, n) pairs.
    pub fn export_mode_profiles(&self, indices: &[(usize, i64)]) -> Result<ModeProfiles> {
        let mut profiles = Vec::with_capacity(indices.len());
        for &(m, n) in indices {
            let b = self.block(n).ok_or_else(|| {
                Error::Index(format!("OAM index n = {n} outside [{}, {}]", self.n_min, self.n_max()))
            })?;
            if m >= b.modes() {
                return Err(Error::Index(format!("radial index m = {m} but block n = {n} holds {} modes", b.modes())));
            }
            let values =
                self.radial.nodes.iter().enumerate().map(|(i, q)| b.u[[i, m]].norm_sqr() / q).collect();
            profiles.push(ModeProfile { m, n, values });
        }
        Ok(ModeProfiles { q: self.radial.nodes.clone(), profiles })
    }

    /// u_{mn}(q)/√q at an arbitrary q ≥ 0, by the Nyström extension of the block's singular pair.
    pub fn mode_over_sqrt_q_at(&self, chi: &ChiBlockSet, m: usize, n: i64, q: f64) -> Result<C64> {
        let row = chi.row_at(q);
        self.mode_over_sqrt_q_from_row(chi, &row, m, n)
    }

    /// As [`Self::mode_over_sqrt_q_at`] with a precomputed row from [`ChiBlockSet::row_at`].
    pub fn mode_over_sqrt_q_from_row(&self, chi: &ChiBlockSet, row: &Array2<C64>, m: usize, n: i64) -> Result<C64> {
        let b = self.block(n).ok_or_else(|| Error::Index(format!("OAM index n = {n} out of range")))?;
        if m >= b.modes() {
            return Err(Error::Index(format!("radial index m = {m} out of range for n = {n}")));
        }
        let r = (n - chi.n_min) as usize;
        let rw = &self.radial;
        let acc: C64 = (0..rw.len())
            .map(|j| row[[r, j]] * (rw.weights[j] * rw.nodes[j].sqrt()) * b.v[[j, m]].conj())
            .sum();
        Ok(acc / b.lambdas[m].sqrt())
    }
}

#[derive(Clone, Debug)]
pub struct WeightedSpectrum {
    pub g: f64,
    pub n_min: i64,
    /// Λ_{mn} = sinh²(G√λ_{mn}), indexed [n − n_min][m].
    pub big_lambda: Vec<Vec<f64>>,
    /// Λ̃_{mn} = cosh²(G√λ_{mn}).
    pub lambda_tilde: Vec<Vec<f64>>,
    /// Λ′_{mn} = Λ_{mn}/ΣΛ, equal to λ_{mn} at G = 0.
    pub lambda_prime: Vec<Vec<f64>>,
    pub schmidt_number: f64,
}

impl WeightedSpectrum {
    pub fn n_max(&self) -> i64 {
        self.n_min + self.big_lambda.len() as i64 - 1
    }

    /// Σ Λ_{mn}, the mean photon number in one arm.
    pub fn integral_intensity(&self) -> f64 {
        self.big_lambda.iter().flatten().sum()
    }

    /// 𝒜 = Σ Λ(Λ + 1).
    pub fn script_a(&self) -> f64 {
        self.big_lambda.iter().flatten().map(|l| l * (l + 1.0)).sum()
    }

    /// ℬ = Σ [Λ(Λ + 1)]².
    pub fn script_b(&self) -> f64 {
        self.big_lambda.iter().flatten().map(|l| (l * (l + 1.0)).powi(2)).sum()
    }

    /// Σ Λ², accumulated directly to avoid cancellation in 𝒜 − ΣΛ.
    pub fn sum_sq(&self) -> f64 {
        self.big_lambda.iter().flatten().map(|l| l * l).sum()
    }

    pub fn prime(&self, m: usize, n: i64) -> f64 {
        if n < self.n_min {
            return 0.0;
        }
        self.lambda_prime
            .get((n - self.n_min) as usize)
            .and_then(|r| r.get(m).copied())
            .unwrap_or(0.0)
    }

    /// argmax over n of Λ′_{m_cut, n}; values equal to 1e−9 relative count as ties, resolved toward larger n.
    pub fn most_populated_oam(&self, m_cut: usize) -> i64 {
        let mut best_n = self.n_min;
        let mut best = -1.0;
        for b in 0..self.lambda_prime.len() {
            let n = self.n_min + b as i64;
            let v = self.prime(m_cut, n);
            if v > best * (1.0 + 1e-9) || (v >= best * (1.0 - 1e-9) && best > 0.0) {
                if v > best {
                    best = v;
                }
                best_n = n;
            }
        }
        best_n
    }

    /// Λ′ summed over m for each n.
    pub fn orbital_prime(&self) -> Vec<(i64, f64)> {
        self.lambda_prime.iter().enumerate().map(|(b, r)| (self.n_min + b as i64, r.iter().sum())).collect()
    }
}

#[derive(Clone, Debug)]
pub struct IntensityCurve {
    pub q: Vec<f64>,
    pub n_mean: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ModeProfile {
    pub m: usize,
    pub n: i64,
    /// |u_{mn}(q)|²/q on the radial nodes.
    pub values: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ModeProfiles {
    pub q: Vec<f64>,
    pub profiles: Vec<ModeProfile>,
}

impl ModeProfiles {
    /// Polar raster of the mode intensity |u|²/(2πq) on the radial nodes × `n_phi` azimuths.
    ///
    /// Each entry is (q, φ, intensity, phase) with phase = −nφ mod 2π. The
    /// vortex core is resolved by the q^{2|n|} behaviour of the profile itself;
    /// the phase column is reported even where the intensity vanishes.
    pub fn polar_raster(&self, which: usize, n_phi: usize) -> Vec<(f64, f64, f64, f64)> {
        let p = &self.profiles[which];
        let mut out = Vec::with_capacity(self.q.len() * n_phi);
        for (i, &q) in self.q.iter().enumerate() {
            for k in 0..n_phi {
                let phi = 2.0 * PI * k as f64 / n_phi as f64;
                let phase = (-(p.n as f64) * phi).rem_euclid(2.0 * PI);
                out.push((q, phi, p.values[i] / (2.0 * PI), phase));
            }
        }
        out
    }
}

/// Frobenius-relative distance between two blocks.
pub fn relative_frobenius(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
    let num: f64 = (a - b).iter().map(|v| v.norm_sqr()).sum();
    let den: f64 = a.iter().map(|v| v.norm_sqr()).sum();
    (num / den.max(1e-300)).sqrt()
}

/// Largest |⟨u_k, u_l⟩ − δ_kl| over the modes of every block, with quadrature weights.
pub fn orthonormality_defect(spec: &SchmidtSpectrum) -> f64 {
    let w = &spec.radial.weights;
    let mut worst: f64 = 0.0;
    for b in &spec.blocks {
        for tab in [&b.u, &b.v] {
            let m = tab.ncols();
            for k in 0..m {
                for l in k..m {
                    let col_k = tab.slice(s![.., k]);
                    let col_l = tab.slice(s![.., l]);
                    let ip: C64 = col_k.iter().zip(col_l.iter()).zip(w).map(|((a, b), w)| a.conj() * b * w).sum();
                    let target = if k == l { 1.0 } else { 0.0 };
                    worst = worst.max((ip - target).norm());
                }
            }
        }
    }
    worst
}
