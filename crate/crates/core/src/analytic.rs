//! Closed-form orbital eigenvalues of the two-crystal source in the
//! double-Gaussian model, where sinc(X) is replaced by exp(−α²X).
//!
//! With a Laguerre-Gaussian pump of radial index zero the azimuthal integral
//! reduces to Bessel functions of q_s q_i times one of two complex constants,
//! leaving a two-dimensional radial quadrature per OAM value.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{gauss_legendre, GridSpec};
use crate::kernels::compute_chi_blocks_auto;
use crate::setup::{Envelope, GeometryKind, OpticalSetup, DOUBLE_GAUSS_ALPHA};
use crate::specfun::{bessel_from_table, binomial, BesselTable, BESSEL_SERIES_RADIUS};

/// Radial quadrature order per axis.
pub const ANALYTIC_NODES: usize = 200;

/// Constants of the double-Gaussian model for a given gap.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DgConstants {
    pub alpha: f64,
    /// Gaussian decay in q_s² + q_i².
    pub a: f64,
    /// Phase rate in q_s² + q_i² separating the two interference terms.
    pub e: f64,
    /// Gap phase.
    pub mu: f64,
    /// Bessel argument per unit q_s q_i for the term carrying both crystals' phase.
    pub v: C64,
    /// Bessel argument per unit q_s q_i for the single-crystal term.
    pub u: C64,
}

/// Relative phase i^{−ν} between the binomial terms of the pump expansion.
///
/// `Full` keeps it, `Dropped` sets it to one. Only `Full` agrees with the
/// numerical decomposition of the same kernel; `Dropped` is kept for
/// comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinomialPhase {
    Full,
    Dropped,
}

pub fn dg_constants(setup: &OpticalSetup, d: f64, alpha: f64) -> Result<DgConstants> {
    if setup.pump.m_p != 0 {
        return Err(Error::Unsupported(format!(
            "closed-form orbital eigenvalues need m_p = 0, got {}",
            setup.pump.m_p
        )));
    }
    if !(d >= 0.0 && d.is_finite()) || !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Config(format!("invalid gap {d} or alpha {alpha}")));
    }
    let disp = &setup.dispersion;
    let l = setup.geometry.length;
    let k_p = disp.k_p;
    let n_s = disp.n_s_crystal;
    let w2 = setup.pump.w0 * setup.pump.w0;
    let damp = l * alpha * alpha / (2.0 * k_p);
    Ok(DgConstants {
        alpha,
        a: w2 / 2.0 + damp,
        e: l / (2.0 * k_p) + n_s * d / (2.0 * k_p),
        mu: setup.gap_phase(d),
        v: C64::new(-3.0 * l / (2.0 * k_p) - n_s * d / k_p, w2 / 2.0 - damp),
        u: C64::new(-l / (2.0 * k_p), w2 / 2.0 - damp),
    })
}

/// How the azimuthal integral of each radial node pair is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AngularRoute {
    /// Binomial sum over ν of Bessel functions J_{n−ν}. The terms cancel
    /// strongly for large |l_p|, roughly by ((q_s + q_i)/|q_s − q_i|)^{|l_p|}.
    BesselSum,
    /// The same integral (1/2π)∫ e^{i w sin τ − i n τ} (q_i − i q_s e^{iτ})^{|l_p|} dτ
    /// summed by FFT, which does not cancel.
    Fourier,
}

/// Bessel-sum results whose rounding bound exceeds this are recomputed on the Fourier route.
pub const ROUTE_SWITCH_TOL: f64 = 1e-6;

/// Orbital eigenvalues with a rounding-error bound.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrbitalEigs {
    pub n_min: i64,
    /// Λ_n normalized to unit sum.
    pub lambda: Vec<f64>,
    pub route: AngularRoute,
    /// Bound on the absolute rounding error of any normalized Λ_n.
    pub error_bound: f64,
}

impl OrbitalEigs {
    pub fn n_max(&self) -> i64 {
        self.n_min + self.lambda.len() as i64 - 1
    }
}

/// Normalized orbital eigenvalues Λ_n for n in `n_min..=n_max`.
///
/// The Bessel sum is tried first and the Fourier route is used when its
/// rounding bound exceeds [`ROUTE_SWITCH_TOL`].
pub fn analytic_orbital_eigs(
    setup: &OpticalSetup,
    n_min: i64,
    n_max: i64,
    q_max: f64,
    phase: BinomialPhase,
) -> Result<OrbitalEigs> {
    let first = analytic_orbital_eigs_via(setup, n_min, n_max, q_max, phase, AngularRoute::BesselSum)?;
    if first.error_bound <= ROUTE_SWITCH_TOL {
        return Ok(first);
    }
    analytic_orbital_eigs_via(setup, n_min, n_max, q_max, phase, AngularRoute::Fourier)
}

/// Unit roundoff multiple applied to FFT and Bessel-table outputs.
const FFT_EPS: f64 = 64.0 * f64::EPSILON;

/// [`analytic_orbital_eigs`] on a fixed route.
///
/// The setup must be a two-crystal gap geometry with m_p = 0. The quadrature
/// runs over [0, q_max] in both radial variables.
pub fn analytic_orbital_eigs_via(
    setup: &OpticalSetup,
    n_min: i64,
    n_max: i64,
    q_max: f64,
    phase: BinomialPhase,
    route: AngularRoute,
) -> Result<OrbitalEigs> {
    let d = match setup.geometry.kind {
        GeometryKind::TwoCrystalGap { d } => d,
        _ => return Err(Error::Unsupported("closed-form orbital eigenvalues need the two-crystal gap geometry".into())),
    };
    if n_max < n_min {
        return Err(Error::Config(format!("empty OAM range [{n_min}, {n_max}]")));
    }
    let alpha = match setup.envelope {
        Envelope::DoubleGauss { alpha } => alpha,
        Envelope::Sinc => DOUBLE_GAUSS_ALPHA,
    };
    let c = dg_constants(setup, d, alpha)?;
    let l_p = setup.pump.l_p;
    let la = l_p.unsigned_abs();
    // Λ_n(l_p) = Λ_{−n}(−l_p); evaluate with l ≥ 0.
    let (lo, hi) = if l_p >= 0 { (n_min, n_max) } else { (-n_max, -n_min) };
    let k_max = (lo.abs().max(hi.abs()) + la as i64) as u32;
    let z_max = q_max * q_max * c.v.norm().max(c.u.norm());
    if z_max > BESSEL_SERIES_RADIUS {
        return Err(Error::SeriesOverflow { order: k_max as i64, abs_z: z_max });
    }

    let (q, w) = gauss_legendre(ANALYTIC_NODES, 0.0, q_max);
    let x: Vec<f64> = q.iter().map(|v| v / q_max).collect();
    let rot = match phase {
        BinomialPhase::Full => C64::new(0.0, -1.0),
        BinomialPhase::Dropped => C64::new(1.0, 0.0),
    };
    let binom: Vec<C64> = (0..=la).map(|nu| rot.powu(nu) * binomial(la, nu as i64)).collect();
    let width = (hi - lo + 1) as usize;
    let bessel = match route {
        AngularRoute::BesselSum => Some(BesselTable::new(z_max, k_max)),
        AngularRoute::Fourier => None,
    };
    let fourier_size = |abs_z: f64| ((1.3 * abs_z) as usize + 2 * k_max as usize + 64).next_power_of_two();
    let plans: Vec<Arc<dyn Fft<f64>>> = {
        let mut planner = FftPlanner::new();
        (0..=fourier_size(z_max).trailing_zeros()).map(|p| planner.plan_fft_forward(1 << p)).collect()
    };

    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..q.len())
        .into_par_iter()
        .map(|i| -> Result<(Vec<f64>, Vec<f64>)> {
            let mut acc = vec![0.0; width];
            let mut err = vec![0.0; width];
            for j in 0..q.len() {
                let (qs, qi) = (q[i], q[j]);
                let p = qs * qi;
                let qq = qs * qs + qi * qi;
                let zv = c.v * p;
                let zu = c.u * p;
                let scale = zv.im.abs();
                let weight = w[i] * w[j] * qs * qi * (-c.a * qq + 2.0 * scale).exp();
                let pv = C64::from_polar(1.0, 0.5 * c.e * qq + c.mu);
                let pu = pv.conj();
                let (amps, amp_err) = match &bessel {
                    Some(table) => {
                        let tv = table.scaled_orders(k_max, zv)?;
                        let tu = table.scaled_orders(k_max, zu)?;
                        let pows: Vec<f64> =
                            (0..=la).map(|nu| x[i].powi(nu as i32) * x[j].powi((la - nu) as i32)).collect();
                        let amps: Vec<C64> = (lo..=hi)
                            .map(|n| {
                                (0..=la as usize)
                                    .map(|nu| {
                                        let m = n - nu as i64;
                                        binom[nu] * pows[nu] * (pv * bessel_from_table(&tv, m) + pu * bessel_from_table(&tu, m))
                                    })
                                    .sum()
                            })
                            .collect();
                        (amps, 2.0 * FFT_EPS * (x[i] + x[j]).powi(la as i32))
                    }
                    None => {
                        let m = fourier_size(zv.norm().max(zu.norm()));
                        let (ivz, iuz) = (C64::new(0.0, 1.0) * zv, C64::new(0.0, 1.0) * zu);
                        let mut buf: Vec<C64> = (0..m)
                            .map(|k| {
                                let tau = 2.0 * PI * k as f64 / m as f64;
                                let sin = tau.sin();
                                let poly = (x[j] + rot * x[i] * C64::from_polar(1.0, tau)).powu(la);
                                poly * (pv * (ivz * sin - scale).exp() + pu * (iuz * sin - scale).exp())
                            })
                            .collect();
                        let peak = buf.iter().map(|v| v.norm()).fold(0.0, f64::max);
                        plans[m.trailing_zeros() as usize].process(&mut buf);
                        let inv = 1.0 / m as f64;
                        let amps = (lo..=hi).map(|n| buf[n.rem_euclid(m as i64) as usize] * inv).collect();
                        (amps, FFT_EPS * peak)
                    }
                };
                for (k, a) in amps.iter().enumerate() {
                    acc[k] += weight * a.norm_sqr();
                    err[k] += weight * (2.0 * a.norm() + amp_err) * amp_err;
                }
            }
            Ok((acc, err))
        })
        .collect::<Result<_>>()?;

    let mut lam = vec![0.0; width];
    let mut err = vec![0.0; width];
    for (r, e) in &rows {
        for k in 0..width {
            lam[k] += r[k];
            err[k] += e[k];
        }
    }
    let total: f64 = lam.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::DegenerateNormalization("closed-form orbital eigenvalues sum to zero".into()));
    }
    lam.iter_mut().for_each(|v| *v /= total);
    if l_p < 0 {
        lam.reverse();
    }
    let error_bound = err.iter().fold(0.0, |m: f64, e| m.max(e / total));
    Ok(OrbitalEigs { n_min, lambda: lam, route, error_bound })
}

/// Closed-form and numerical orbital eigenvalues at one gap.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnalyticComparison {
    pub d: f64,
    pub n_min: i64,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub correlation: f64,
}

impl AnalyticComparison {
    pub fn n_max(&self) -> i64 {
        self.n_min + self.analytic.len() as i64 - 1
    }

    pub fn peak_analytic(&self) -> i64 {
        self.n_min + argmax(&self.analytic) as i64
    }

    pub fn peak_numeric(&self) -> i64 {
        self.n_min + argmax(&self.numeric) as i64
    }
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
        .0
}

/// Pearson correlation coefficient.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len()) as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

/// Compares the closed form against the orbital weights of the numerical
/// decomposition at each gap in `gaps`.
///
/// The numerical side uses whatever envelope `setup` carries, so passing a
/// double-Gaussian setup checks the quadrature and passing the sinc setup
/// measures the model error.
pub fn compare_numeric_analytic(
    setup: &OpticalSetup,
    gaps: &[f64],
    spec: &GridSpec,
    phase: BinomialPhase,
) -> Result<Vec<AnalyticComparison>> {
    gaps.iter()
        .map(|&d| {
            let s = setup.with_geometry(GeometryKind::TwoCrystalGap { d })?;
            let chi = compute_chi_blocks_auto(&s, spec)?;
            let mut numeric = chi.orbital_weights();
            let total: f64 = numeric.iter().sum();
            numeric.iter_mut().for_each(|v| *v /= total);
            let analytic = analytic_orbital_eigs(&s, chi.n_min, chi.n_max(), chi.radial.q_max, phase)?.lambda;
            let correlation = pearson(&analytic, &numeric);
            Ok(AnalyticComparison { d, n_min: chi.n_min, analytic, numeric, correlation })
        })
        .collect()
}
