//! Two-photon amplitude ingredients and the OAM-resolved Fourier blocks χ_n.
//!
//! The amplitude factorizes as F = C·g_xy·g_z. Its dependence on the two
//! azimuths reduces to R(q_s, q_i, φ) with φ = φ_s − φ_i through
//! F = R·e^{−i l_p φ_i}, and χ_n(q_s, q_i) = ∫ R e^{inφ} dφ.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{AngularGrid, GridSpec, RadialGrid};
use crate::setup::{Envelope, GeometryKind, OpticalSetup, PumpBeam};
use crate::specfun::{assoc_laguerre, sinc};

/// Pump transverse wavenumber |q_s + q_i|.
pub fn xi(q_s: f64, q_i: f64, phi: f64) -> f64 {
    (q_s * q_s + q_i * q_i + 2.0 * q_s * q_i * phi.cos()).max(0.0).sqrt()
}

/// Squared transverse mismatch |q_s − q_i|².
pub fn mismatch(q_s: f64, q_i: f64, phi: f64) -> f64 {
    (q_s * q_s + q_i * q_i - 2.0 * q_s * q_i * phi.cos()).max(0.0)
}

fn sign_power(l_p: i32) -> f64 {
    // sgn(l_p)^{|l_p|} with sgn(0)^0 = 1.
    if l_p < 0 && l_p % 2 != 0 {
        -1.0
    } else {
        1.0
    }
}

fn parity(k: i64) -> f64 {
    if k.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Transverse pump factor g_xy including the phase e^{i l_p ψ}.
pub fn g_xy(q_s: f64, q_i: f64, phi_s: f64, phi_i: f64, pump: &PumpBeam) -> C64 {
    let cx = q_s * phi_s.cos() + q_i * phi_i.cos();
    let sy = q_s * phi_s.sin() + q_i * phi_i.sin();
    let xi = (cx * cx + sy * sy).sqrt();
    let psi = cx.atan2(sy);
    let l = pump.l_p;
    let la = l.unsigned_abs();
    let h = 0.5 * pump.w0;
    let t = h * xi;
    let amp = 2.0 * PI
        * sign_power(l)
        * parity(l as i64 + pump.m_p as i64)
        * h
        * (-t * t).exp()
        * t.powi(la as i32)
        * assoc_laguerre(pump.m_p, la, 2.0 * t * t);
    C64::from_polar(amp, l as f64 * psi)
}

/// Longitudinal factor as a function of the squared mismatch Δ.
#[derive(Clone, Copy, Debug)]
pub struct LongitudinalKernel {
    length: f64,
    x_coef: f64,
    alpha2: Option<f64>,
    two: Option<(f64, f64)>,
}

impl LongitudinalKernel {
    pub fn new(setup: &OpticalSetup) -> Self {
        Self::for_gap(setup, match setup.geometry.kind {
            GeometryKind::TwoCrystalGap { d } => Some(d),
            _ => None,
        })
    }

    /// Kernel for a single crystal (`None`) or two crystals separated by `d`.
    pub fn for_gap(setup: &OpticalSetup, d: Option<f64>) -> Self {
        let disp = &setup.dispersion;
        let length = setup.geometry.length;
        let alpha2 = match setup.envelope {
            Envelope::Sinc => None,
            Envelope::DoubleGauss { alpha } => Some(alpha * alpha),
        };
        Self {
            length,
            x_coef: length / (4.0 * disp.k_p),
            alpha2,
            two: d.map(|d| (setup.gap_phase(d), disp.n_s_crystal * d / (4.0 * disp.k_p))),
        }
    }

    fn envelope(&self, x: f64) -> f64 {
        match self.alpha2 {
            None => sinc(x),
            Some(a2) => (-a2 * x).exp(),
        }
    }

    pub fn eval(&self, delta: f64) -> C64 {
        let x = self.x_coef * delta;
        let env = self.envelope(x);
        match self.two {
            None => C64::from_polar(self.length * env, x),
            Some((mu, g)) => {
                let arg = x + mu + g * delta;
                C64::from_polar(2.0 * self.length * env * arg.cos(), x + arg)
            }
        }
    }

    /// |g_z|², cheaper than squaring [`Self::eval`].
    pub fn norm_sqr(&self, delta: f64) -> f64 {
        let x = self.x_coef * delta;
        let env = self.envelope(x);
        match self.two {
            None => (self.length * env).powi(2),
            Some((mu, g)) => (2.0 * self.length * env * (x + mu + g * delta).cos()).powi(2),
        }
    }

    /// Rate of change of the interference phase with Δ, zero for one crystal.
    pub fn phase_rate(&self) -> f64 {
        match self.two {
            None => self.x_coef,
            Some((_, g)) => self.x_coef + g,
        }
    }
}

pub fn g_z_single(q_s: f64, q_i: f64, phi: f64, setup: &OpticalSetup) -> C64 {
    LongitudinalKernel::for_gap(&setup.with_envelope(Envelope::Sinc), None).eval(mismatch(q_s, q_i, phi))
}

pub fn g_z_two_crystal(q_s: f64, q_i: f64, phi: f64, d: f64, setup: &OpticalSetup) -> C64 {
    LongitudinalKernel::for_gap(&setup.with_envelope(Envelope::Sinc), Some(d)).eval(mismatch(q_s, q_i, phi))
}

pub fn g_z_double_gauss(q_s: f64, q_i: f64, phi: f64, d: f64, alpha: f64, setup: &OpticalSetup) -> C64 {
    LongitudinalKernel::for_gap(&setup.with_envelope(Envelope::DoubleGauss { alpha }), Some(d))
        .eval(mismatch(q_s, q_i, phi))
}

/// Precomputed constants for fast evaluation of R.
#[derive(Clone, Copy, Debug)]
pub struct RKernel {
    l_p: i32,
    l_abs: u32,
    m_p: u32,
    half_w0: f64,
    prefactor: C64,
    gz: LongitudinalKernel,
}

impl RKernel {
    pub fn new(setup: &OpticalSetup) -> Self {
        let pump = &setup.pump;
        let l_abs = pump.l_p.unsigned_abs();
        let half_w0 = 0.5 * pump.w0;
        let i_pow = C64::new(0.0, 1.0).powu(l_abs);
        let prefactor = i_pow * (2.0 * PI * parity(pump.l_p as i64 + pump.m_p as i64) * half_w0);
        Self {
            l_p: pump.l_p,
            l_abs,
            m_p: pump.m_p,
            half_w0,
            prefactor,
            gz: LongitudinalKernel::new(setup),
        }
    }

    /// Pump envelope in ξ², without the W bracket: L^{|l|}_m((w0ξ)²/2)·e^{−(w0ξ/2)²}.
    #[inline]
    pub fn pump_envelope(&self, xi2: f64) -> f64 {
        let t2 = self.half_w0 * self.half_w0 * xi2;
        assoc_laguerre(self.m_p, self.l_abs, 2.0 * t2) * (-t2).exp()
    }

    /// (w0/2)^{|l|}·[q_s e^{−i sgn(l) φ} + q_i]^{|l|} given e^{−iφ}.
    #[inline]
    fn bracket(&self, q_s: f64, q_i: f64, e_minus: C64) -> C64 {
        if self.l_abs == 0 {
            return C64::new(1.0, 0.0);
        }
        let e = if self.l_p > 0 { e_minus } else { e_minus.conj() };
        ((e * q_s + q_i) * self.half_w0).powu(self.l_abs)
    }

    /// R(q_s, q_i, φ) with unit normalization constant.
    pub fn eval(&self, q_s: f64, q_i: f64, phi: f64) -> C64 {
        let c = phi.cos();
        let xi2 = (q_s * q_s + q_i * q_i + 2.0 * q_s * q_i * c).max(0.0);
        let delta = (q_s * q_s + q_i * q_i - 2.0 * q_s * q_i * c).max(0.0);
        let e_minus = C64::new(c, -phi.sin());
        self.prefactor * self.pump_envelope(xi2) * self.bracket(q_s, q_i, e_minus) * self.gz.eval(delta)
    }

    /// Largest ξ for which |envelope|·(w0ξ/2)^{|l|} exceeds `rel_tol` of its maximum.
    pub fn xi_cutoff(&self, rel_tol: f64) -> f64 {
        let t_max = 4.0 * self.m_p as f64 + 2.0 * self.l_abs as f64 + 200.0;
        let steps = 20_000;
        let mag = |t2: f64| {
            let env = assoc_laguerre(self.m_p, self.l_abs, 2.0 * t2).abs() * (-t2).exp();
            env * t2.powf(0.5 * self.l_abs as f64)
        };
        let vals: Vec<(f64, f64)> = (0..=steps)
            .map(|k| {
                let t2 = t_max * k as f64 / steps as f64;
                (t2, mag(t2))
            })
            .collect();
        let peak = vals.iter().map(|v| v.1).fold(0.0, f64::max);
        let last = vals.iter().rev().find(|v| v.1 >= rel_tol * peak).map(|v| v.0).unwrap_or(t_max);
        let t2 = (last + t_max / steps as f64).min(t_max);
        t2.sqrt() / self.half_w0
    }

    pub fn longitudinal(&self) -> &LongitudinalKernel {
        &self.gz
    }
}

/// R(q_s, q_i, φ) for the geometry of `setup`, with unit normalization constant.
pub fn r_fn(q_s: f64, q_i: f64, phi: f64, setup: &OpticalSetup) -> C64 {
    RKernel::new(setup).eval(q_s, q_i, phi)
}

/// Full amplitude C·g_xy·g_z evaluated directly from the azimuths.
pub fn tpa_direct(q_s: f64, q_i: f64, phi_s: f64, phi_i: f64, c_norm: f64, setup: &OpticalSetup) -> C64 {
    let gz = LongitudinalKernel::new(setup).eval(mismatch(q_s, q_i, phi_s - phi_i));
    g_xy(q_s, q_i, phi_s, phi_i, &setup.pump) * gz * c_norm
}

/// Full amplitude assembled from R: C·R(q_s, q_i, φ_s − φ_i)·e^{−i l_p φ_i}.
pub fn tpa_from_r(q_s: f64, q_i: f64, phi_s: f64, phi_i: f64, c_norm: f64, setup: &OpticalSetup) -> C64 {
    r_fn(q_s, q_i, phi_s - phi_i, setup) * C64::from_polar(c_norm, -(setup.pump.l_p as f64) * phi_i)
}

/// Relative amplitude below which the pump envelope is treated as zero.
pub const ENVELOPE_FLOOR: f64 = 1e-17;

/// Largest gap whose interference phase is resolved on the given grids.
///
/// The phase (L + n_s d)Δ/(4k_p) may advance by at most π/2 between
/// neighbouring radial nodes at the far edge of the anti-collinear diagonal
/// and between neighbouring azimuth samples at q_s = q_i = q_max.
pub fn max_safe_gap(setup: &OpticalSetup, radial: &RadialGrid, angular: &AngularGrid) -> f64 {
    let disp = &setup.dispersion;
    let q = &radial.nodes;
    let qm = radial.q_max;
    let radial_inc = q
        .windows(2)
        .map(|p| (qm + p[1]).powi(2) - (qm + p[0]).powi(2))
        .fold(0.0, f64::max);
    let angular_inc = 2.0 * qm * qm * (2.0 * PI / angular.n_phi as f64);
    let inc = radial_inc.max(angular_inc);
    let total = (PI / 2.0) * 4.0 * disp.k_p / inc;
    ((total - setup.geometry.length) / disp.n_s_crystal).max(0.0)
}

/// Fourier blocks χ_n on a radial grid.
#[derive(Clone, Debug)]
pub struct ChiBlockSet {
    pub setup: OpticalSetup,
    pub radial: RadialGrid,
    pub angular: AngularGrid,
    pub n_min: i64,
    /// χ_n for n = n_min, n_min+1, …; rows index q_s and columns q_i.
    pub blocks: Vec<Array2<C64>>,
    /// Normalization constant applied to R.
    pub c_norm: f64,
    /// Σ_n ∬ q_s q_i |χ_n|² over the retained range before normalization.
    pub raw_norm: f64,
    /// Fraction of the total weight outside the retained OAM range.
    pub leakage: f64,
    /// |Σ_n ∬ q_s q_i |χ_n|² − 1| after normalization.
    pub normalization_residual: f64,
}

impl ChiBlockSet {
    pub fn n_max(&self) -> i64 {
        self.n_min + self.blocks.len() as i64 - 1
    }

    pub fn block(&self, n: i64) -> Option<&Array2<C64>> {
        if n < self.n_min {
            return None;
        }
        self.blocks.get((n - self.n_min) as usize)
    }

    /// ∬ q_s q_i |χ_n|² per retained block.
    pub fn orbital_weights(&self) -> Vec<f64> {
        let s: Vec<f64> = self.radial.nodes.iter().zip(&self.radial.weights).map(|(q, w)| q * w).collect();
        self.blocks.iter().map(|b| weighted_energy(b, &s)).collect()
    }

    /// χ_n(q, q_j) for every retained n and every node q_j, at an arbitrary q ≥ 0.
    pub fn row_at(&self, q: f64) -> Array2<C64> {
        let ctx = RowContext::new(&self.setup, &self.radial, &self.angular);
        let row = ctx.row(q);
        let nb = self.blocks.len();
        let n_nodes = self.radial.len();
        let mut out = Array2::zeros((nb, n_nodes));
        for j in 0..n_nodes {
            if let Some(spec) = &row[j] {
                for b in 0..nb {
                    out[[b, j]] = spec[harmonic_index(self.n_min + b as i64, self.angular.n_phi)] * self.c_norm;
                }
            }
        }
        out
    }
}

fn weighted_energy(b: &Array2<C64>, s: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (i, row) in b.outer_iter().enumerate() {
        let mut r = 0.0;
        for (j, v) in row.iter().enumerate() {
            r += s[j] * v.norm_sqr();
        }
        acc += s[i] * r;
    }
    acc
}

#[inline]
fn harmonic_index(n: i64, n_phi: usize) -> usize {
    n.rem_euclid(n_phi as i64) as usize
}

struct RowContext<'a> {
    kernel: RKernel,
    radial: &'a RadialGrid,
    n_phi: usize,
    cos: Vec<f64>,
    e_minus: Vec<C64>,
    xi_cut2: f64,
    fft: Arc<dyn Fft<f64>>,
}

impl<'a> RowContext<'a> {
    fn new(setup: &OpticalSetup, radial: &'a RadialGrid, angular: &AngularGrid) -> Self {
        let kernel = RKernel::new(setup);
        let n_phi = angular.n_phi;
        let cos = (0..n_phi).map(|k| angular.phi(k).cos()).collect();
        let e_minus = (0..n_phi).map(|k| C64::from_polar(1.0, -angular.phi(k))).collect();
        let xi_cut = kernel.xi_cutoff(ENVELOPE_FLOOR);
        let fft = FftPlanner::new().plan_fft_inverse(n_phi);
        Self {
            kernel,
            radial,
            n_phi,
            cos,
            e_minus,
            xi_cut2: xi_cut * xi_cut,
            fft,
        }
    }

    /// All N_φ harmonics of R(q_s, q_j, ·) for each node q_j, `None` where the pump envelope vanishes.
    fn row(&self, q_s: f64) -> Vec<Option<Vec<C64>>> {
        let n = self.n_phi;
        let h = 2.0 * PI / n as f64;
        let mut scratch = vec![C64::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut env = vec![C64::new(0.0, 0.0); n / 2 + 1];
        self.radial
            .nodes
            .iter()
            .map(|&q_i| {
                if (q_s - q_i).powi(2) > self.xi_cut2 {
                    return None;
                }
                let a = q_s * q_s + q_i * q_i;
                let b = 2.0 * q_s * q_i;
                // The envelope and g_z depend on φ through cos φ only.
                for (k, e) in env.iter_mut().enumerate() {
                    let xi2 = (a + b * self.cos[k]).max(0.0);
                    *e = if xi2 > self.xi_cut2 {
                        C64::new(0.0, 0.0)
                    } else {
                        let delta = (a - b * self.cos[k]).max(0.0);
                        self.kernel.gz.eval(delta) * self.kernel.pump_envelope(xi2)
                    };
                }
                let mut buf: Vec<C64> = (0..n)
                    .map(|k| {
                        let e = env[if k <= n / 2 { k } else { n - k }];
                        if e.re == 0.0 && e.im == 0.0 {
                            e
                        } else {
                            e * self.kernel.bracket(q_s, q_i, self.e_minus[k]) * self.kernel.prefactor * h
                        }
                    })
                    .collect();
                self.fft.process_with_scratch(&mut buf, &mut scratch);
                Some(buf)
            })
            .collect()
    }
}

/// Fourier blocks for the harmonic range implied by `spec`.
pub fn compute_chi_blocks(setup: &OpticalSetup, spec: &GridSpec) -> Result<ChiBlockSet> {
    let radial = spec.radial(setup)?;
    let angular = spec.angular(setup.pump.l_p)?;
    if let GeometryKind::TwoCrystalGap { d } = setup.geometry.kind {
        let safe = max_safe_gap(setup, &radial, &angular);
        if d > safe {
            return Err(Error::Resolution { d_cm: d * 100.0, max_safe_cm: safe * 100.0 });
        }
    }
    let (n_min, n_max) = spec.n_range(setup.pump.l_p);
    chi_blocks_on_grid(setup, radial, angular, n_min, n_max)
}

/// As [`compute_chi_blocks`], widening the harmonic range until the leakage bound holds.
pub fn compute_chi_blocks_auto(setup: &OpticalSetup, spec: &GridSpec) -> Result<ChiBlockSet> {
    let mut spec = *spec;
    for _ in 0..4 {
        match compute_chi_blocks(setup, &spec) {
            Err(Error::Truncation { suggest_min, suggest_max, .. }) => {
                let l = setup.pump.l_p as i64;
                let hw = (l.div_euclid(2) - suggest_min).max(suggest_max - (l + 1).div_euclid(2));
                spec.n_half_width = hw.max(spec.n_half_width + 1);
            }
            other => return other,
        }
    }
    compute_chi_blocks(setup, &spec)
}

/// Maximum tolerated leakage outside the retained harmonic range.
pub const LEAKAGE_TOL: f64 = 1e-6;

pub fn chi_blocks_on_grid(
    setup: &OpticalSetup,
    radial: RadialGrid,
    angular: AngularGrid,
    n_min: i64,
    n_max: i64,
) -> Result<ChiBlockSet> {
    if n_max < n_min {
        return Err(Error::Config(format!("empty OAM range [{n_min}, {n_max}]")));
    }
    let n_phi = angular.n_phi;
    if ((n_max - n_min + 1) as usize) > n_phi {
        return Err(Error::Config("OAM range wider than the angular grid".into()));
    }
    let ctx = RowContext::new(setup, &radial, &angular);
    let n_nodes = radial.len();
    let s: Vec<f64> = radial.nodes.iter().zip(&radial.weights).map(|(q, w)| q * w).collect();
    let nb = (n_max - n_min + 1) as usize;

    struct RowOut {
        values: Vec<Vec<C64>>,
        harmonic_energy: Vec<f64>,
    }
    let rows: Vec<RowOut> = radial
        .nodes
        .par_iter()
        .enumerate()
        .map(|(i, &q_s)| {
            let spectra = ctx.row(q_s);
            let mut values = vec![vec![C64::new(0.0, 0.0); n_nodes]; nb];
            let mut harmonic_energy = vec![0.0; n_phi];
            for (j, spec) in spectra.iter().enumerate() {
                if let Some(spec) = spec {
                    let wgt = s[i] * s[j];
                    for (k, v) in spec.iter().enumerate() {
                        harmonic_energy[k] += wgt * v.norm_sqr();
                    }
                    for (b, vals) in values.iter_mut().enumerate() {
                        vals[j] = spec[harmonic_index(n_min + b as i64, n_phi)];
                    }
                }
            }
            RowOut { values, harmonic_energy }
        })
        .collect();

    let mut harmonic_energy = vec![0.0; n_phi];
    for r in &rows {
        for (acc, e) in harmonic_energy.iter_mut().zip(&r.harmonic_energy) {
            *acc += e;
        }
    }
    let total: f64 = harmonic_energy.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::DegenerateNormalization(format!("two-photon amplitude has norm {total}")));
    }
    let retained: f64 = (n_min..=n_max).map(|n| harmonic_energy[harmonic_index(n, n_phi)]).sum();
    let leakage = ((total - retained) / total).max(0.0);
    if leakage > LEAKAGE_TOL {
        let (lo, hi) = suggest_range(&harmonic_energy, total, setup.pump.l_p as i64, n_phi);
        return Err(Error::Truncation {
            n_min,
            n_max,
            leakage,
            suggest_min: lo,
            suggest_max: hi,
        });
    }

    let c_norm = 1.0 / retained.sqrt();
    let mut blocks: Vec<Array2<C64>> = (0..nb).map(|_| Array2::zeros((n_nodes, n_nodes))).collect();
    for (i, r) in rows.into_iter().enumerate() {
        for (b, vals) in r.values.into_iter().enumerate() {
            for (j, v) in vals.into_iter().enumerate() {
                blocks[b][[i, j]] = v * c_norm;
            }
        }
    }
    let check: f64 = blocks.iter().map(|b| weighted_energy(b, &s)).sum();
    Ok(ChiBlockSet {
        setup: *setup,
        radial,
        angular,
        n_min,
        blocks,
        c_norm,
        raw_norm: retained,
        leakage,
        normalization_residual: (check - 1.0).abs(),
    })
}

fn suggest_range(energy: &[f64], total: f64, l_p: i64, n_phi: usize) -> (i64, i64) {
    let half = n_phi as i64 / 2;
    for hw in 0..half {
        let (lo, hi) = (l_p.div_euclid(2) - hw, (l_p + 1).div_euclid(2) + hw);
        if hi - lo + 1 > n_phi as i64 {
            break;
        }
        let kept: f64 = (lo..=hi).map(|n| energy[harmonic_index(n, n_phi)]).sum();
        if (total - kept) / total < 0.1 * LEAKAGE_TOL {
            return (lo, hi);
        }
    }
    (l_p.div_euclid(2) - half / 2, (l_p + 1).div_euclid(2) + half / 2)
}
