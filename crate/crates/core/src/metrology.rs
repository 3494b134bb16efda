//! Gain calibration and angular-displacement sensitivity of the Dove-prism
//! interferometer.

use std::f64::consts::PI;

use rayon::prelude::*;
use roots::{find_root_brent, Convergency, SimpleConvergency};

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::kernels::{compute_chi_blocks_auto, ChiBlockSet};
use crate::schmidt::{decompose, SchmidtSpectrum, WeightedSpectrum};
use crate::setup::{GeometryKind, OpticalSetup};

/// Scaling constant 𝒟 in G = 2𝒟γ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GainScaling {
    Unit,
    InverseNorm,
}

impl GainScaling {
    pub fn value(self, c_norm: f64) -> f64 {
        match self {
            GainScaling::Unit => 1.0,
            GainScaling::InverseNorm => 1.0 / c_norm,
        }
    }
}

/// Collinear content of the n = 0 modes: (λ_{m0}, |u_{m0}(q)/√q|² at q = 0).
#[derive(Clone, Debug)]
pub struct CollinearModes {
    pub lambdas: Vec<f64>,
    pub weights: Vec<f64>,
    pub c_norm: f64,
}

impl CollinearModes {
    pub fn from_spectrum(chi: &ChiBlockSet, spectrum: &SchmidtSpectrum) -> Result<Self> {
        let block = spectrum
            .block(0)
            .ok_or_else(|| Error::Index("the n = 0 block is outside the retained OAM range".into()))?;
        let row = chi.row_at(0.0);
        let weights = (0..block.modes())
            .map(|m| Ok(spectrum.mode_over_sqrt_q_from_row(chi, &row, m, 0)?.norm_sqr()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { lambdas: block.lambdas.clone(), weights, c_norm: chi.c_norm })
    }

    /// ⟨N(0)⟩ up to the constant dq dφ/(2π), at theoretical gain G.
    pub fn intensity(&self, g: f64) -> f64 {
        self.lambdas.iter().zip(&self.weights).map(|(l, c)| c * (g * l.sqrt()).sinh().powi(2)).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sinh2Fit {
    pub a_tilde: f64,
    pub b: f64,
    pub residual: f64,
}

/// Stops on the bracket width alone; the gradient magnitude carries no absolute scale.
struct StepConvergency {
    eps: f64,
}

impl Convergency<f64> for StepConvergency {
    fn is_root_found(&mut self, y: f64) -> bool {
        y == 0.0
    }
    fn is_converged(&mut self, x1: f64, x2: f64) -> bool {
        (x1 - x2).abs() < self.eps
    }
    fn is_iteration_limit_reached(&mut self, iter: usize) -> bool {
        iter >= 500
    }
}

/// x·sinh(2x) − 2sinh²(x), the part of d sinh²(x)/d ln x not proportional to sinh²(x).
///
/// The residual of the projected fit is orthogonal to sinh², so only this part
/// carries information; evaluating it directly avoids an O(x⁻⁴) loss of digits.
fn shape_derivative(x: f64) -> f64 {
    if x.abs() > 0.5 {
        return x * (2.0 * x).sinh() - 2.0 * x.sinh().powi(2);
    }
    // Σ_j 2^{2j−1}(2j−2)/(2j)! x^{2j}
    let x2 = x * x;
    let mut term = 2.0 * x2;
    let mut sum = 0.0;
    for j in 2..20 {
        let jf = j as f64;
        term *= 4.0 * x2 / ((2.0 * jf) * (2.0 * jf - 1.0));
        let t = term * (2.0 * jf - 2.0) / 2.0;
        sum += t;
        if t.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// Least-squares fit of y = B·sinh²(Ãγ), B eliminated by projection and Ã
/// taken from the sign change of the reduced gradient closest to `a_guess`.
pub fn fit_sinh2(gamma: &[f64], y: &[f64], a_guess: f64) -> Result<Sinh2Fit> {
    if gamma.len() != y.len() || gamma.len() < 3 {
        return Err(Error::Fit("need at least three matching samples".into()));
    }
    if !(a_guess > 0.0 && a_guess.is_finite()) {
        return Err(Error::Fit(format!("invalid initial Ã = {a_guess}")));
    }
    let project = |a: f64| {
        let s: Vec<f64> = gamma.iter().map(|g| (a * g).sinh().powi(2)).collect();
        let b = y.iter().zip(&s).map(|(y, s)| y * s).sum::<f64>() / s.iter().map(|s| s * s).sum::<f64>();
        (s, b)
    };
    let residual = |a: f64| {
        let (s, b) = project(a);
        y.iter().zip(&s).map(|(y, s)| (y - b * s).powi(2)).sum::<f64>()
    };
    // Derivative of the projected residual in ln Ã, up to the factor −2B, scaled to O(1).
    let grad = |la: f64| {
        let a = la.exp();
        let (s, b) = project(a);
        let mut num = 0.0;
        let mut den = 0.0;
        for ((g, y), s) in gamma.iter().zip(y).zip(&s) {
            let x = a * g;
            let ds = x * (2.0 * x).sinh();
            num += (y - b * s) * shape_derivative(x);
            den += (y * ds).abs();
        }
        num / den
    };
    let l0 = a_guess.ln();
    let steps = 160;
    let span = 4.0;
    let grid: Vec<f64> = (0..=steps).map(|k| l0 - span + 2.0 * span * k as f64 / steps as f64).collect();
    let values: Vec<f64> = grid.iter().map(|&l| grad(l)).collect();
    let mut best: Option<(f64, f64)> = None;
    for k in 0..steps {
        if values[k] > 0.0 && values[k + 1] <= 0.0 {
            let mut conv = StepConvergency { eps: 1e-14 };
            let la = if values[k + 1] == 0.0 {
                grid[k + 1]
            } else {
                find_root_brent(grid[k], grid[k + 1], grad, &mut conv)
                    .map_err(|e| Error::Fit(format!("root search failed: {e:?}")))?
            };
            let r = residual(la.exp());
            if best.is_none_or(|(_, rb)| r < rb) {
                best = Some((la, r));
            }
        }
    }
    let (la, r) = best.ok_or_else(|| Error::Fit("no minimum of the projected residual near the initial Ã".into()))?;
    let a = la.exp();
    Ok(Sinh2Fit { a_tilde: a, b: project(a).1, residual: r })
}

#[derive(Clone, Debug)]
pub struct GainCalibration {
    /// A = Ã/(C𝒟).
    pub a: f64,
    pub a_tilde: f64,
    pub b_fit: f64,
    pub c_norm: f64,
    pub scaling: GainScaling,
    pub target_g_exp: f64,
    /// A obtained with the other choice of 𝒟.
    pub a_cross_check: f64,
    /// γ window of the final fit.
    pub gamma_window: (f64, f64),
    pub rounds: usize,
}

impl GainCalibration {
    /// Theoretical gain for an experimental gain: G = 2G_exp/(AC).
    pub fn gain_from_exp(&self, g_exp: f64) -> f64 {
        2.0 * g_exp / (self.a * self.c_norm)
    }
}

const WINDOW_SAMPLES: usize = 41;
const MAX_ROUNDS: usize = 10;
const WINDOW_SETTLE: f64 = 1e-10;

fn fit_window(modes: &CollinearModes, target: f64, d: f64, a_centre: f64) -> Result<(Sinh2Fit, (f64, f64))> {
    let centre = target / a_centre;
    let (lo, hi) = (0.5 * centre, 2.0 * centre);
    let gamma: Vec<f64> =
        (0..WINDOW_SAMPLES).map(|k| lo * (hi / lo).powf(k as f64 / (WINDOW_SAMPLES - 1) as f64)).collect();
    let y: Vec<f64> = gamma.iter().map(|g| modes.intensity(2.0 * d * g)).collect();
    Ok((fit_sinh2(&gamma, &y, a_centre)?, (lo, hi)))
}

/// Recentres the γ window on the fitted Ã until the implied G_exp range is [G/2, 2G];
/// the self-consistency condition is solved by secant steps in ln Ã.
fn calibrate_with(modes: &CollinearModes, target: f64, scaling: GainScaling) -> Result<(Sinh2Fit, (f64, f64), usize)> {
    let d = scaling.value(modes.c_norm);
    let lmax = modes.lambdas.first().copied().unwrap_or(0.0);
    if lmax <= 0.0 {
        return Err(Error::Fit("no collinear mode content".into()));
    }
    let mut x0 = (2.0 * d * lmax.sqrt()).ln();
    let (fit, win) = fit_window(modes, target, d, x0.exp())?;
    let mut f0 = fit.a_tilde.ln() - x0;
    let mut x1 = fit.a_tilde.ln();
    let mut best = (fit, win);
    for round in 1..=MAX_ROUNDS {
        let (fit, win) = fit_window(modes, target, d, x1.exp())?;
        let f1 = fit.a_tilde.ln() - x1;
        best = (fit, win);
        if f1.abs() < WINDOW_SETTLE {
            return Ok((best.0, best.1, round));
        }
        let step = if f1 != f0 { -f1 * (x1 - x0) / (f1 - f0) } else { f1 };
        x0 = x1;
        f0 = f1;
        x1 += step.clamp(-1.0, 1.0);
    }
    let _ = best;
    Err(Error::Fit(format!("γ window did not settle around G_exp = {target} within {MAX_ROUNDS} rounds")))
}

/// Fit constant A for a target experimental gain from precomputed collinear modes.
pub fn calibrate_modes(modes: &CollinearModes, target_g_exp: f64) -> Result<GainCalibration> {
    if !(target_g_exp > 0.0 && target_g_exp.is_finite()) {
        return Err(Error::Config(format!("target G_exp must be positive, got {target_g_exp}")));
    }
    let c = modes.c_norm;
    let (fit, window, rounds) = calibrate_with(modes, target_g_exp, GainScaling::Unit)?;
    let (alt, _, _) = calibrate_with(modes, target_g_exp, GainScaling::InverseNorm)?;
    let a = fit.a_tilde / c;
    let a_alt = alt.a_tilde / (c * GainScaling::InverseNorm.value(c));
    Ok(GainCalibration {
        a,
        a_tilde: fit.a_tilde,
        b_fit: fit.b,
        c_norm: c,
        scaling: GainScaling::Unit,
        target_g_exp,
        a_cross_check: a_alt,
        gamma_window: window,
        rounds,
    })
}

pub fn calibrate_gain(setup: &OpticalSetup, spec: &GridSpec, target_g_exp: f64) -> Result<GainCalibration> {
    let (chi, spectrum) = single_crystal_spectrum(setup, spec)?;
    calibrate_modes(&CollinearModes::from_spectrum(&chi, &spectrum)?, target_g_exp)
}

/// Decomposition of a single-crystal setup; other geometries are rejected.
pub fn single_crystal_spectrum(setup: &OpticalSetup, spec: &GridSpec) -> Result<(ChiBlockSet, SchmidtSpectrum)> {
    if setup.geometry.kind != GeometryKind::SingleCrystal {
        return Err(Error::Config("gain calibration is defined on a single crystal".into()));
    }
    let chi = compute_chi_blocks_auto(setup, spec)?;
    let spectrum = decompose(&chi)?;
    Ok((chi, spectrum))
}

/// Low- and high-gain calibrations with their average.
#[derive(Clone, Debug)]
pub struct AveragedCalibration {
    pub low: GainCalibration,
    pub high: GainCalibration,
    pub a_avg: f64,
    pub c_norm: f64,
}

impl AveragedCalibration {
    pub fn new(modes: &CollinearModes, low_target: f64, high_target: f64) -> Result<Self> {
        let low = calibrate_modes(modes, low_target)?;
        let high = calibrate_modes(modes, high_target)?;
        let a_avg = 0.5 * (low.a + high.a);
        Ok(Self { a_avg, c_norm: modes.c_norm, low, high })
    }

    pub fn ratio(&self) -> f64 {
        self.high.a / self.low.a
    }

    pub fn gain_from_exp(&self, g_exp: f64) -> f64 {
        2.0 * g_exp / (self.a_avg * self.c_norm)
    }
}

fn require_lp(l_p: i32) -> Result<f64> {
    if l_p == 0 {
        Err(Error::UndefinedSensitivity)
    } else {
        Ok(l_p.unsigned_abs() as f64)
    }
}

fn photons(w: &WeightedSpectrum) -> Result<f64> {
    let n = w.integral_intensity();
    if n > 0.0 {
        Ok(n)
    } else {
        Err(Error::DegenerateNormalization("the first crystal emits no photons at G = 0".into()))
    }
}

/// Δθ_TF from the first-crystal spectrum; +∞ where sin(l_pθ/2) = 0.
pub fn delta_theta_tf(w: &WeightedSpectrum, l_p: i32, theta: f64) -> Result<f64> {
    let l = require_lp(l_p)?;
    let (a, b) = (w.script_a(), w.script_b());
    let half = l_p as f64 * theta / 2.0;
    let s = half.sin().abs();
    if s == 0.0 || a == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(0.5f64.sqrt() * (a + 4.0 * b * half.cos().powi(2)).sqrt() / (a * l * s))
}

fn sinhc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 + x * x / 6.0
    } else {
        x.sinh() / x
    }
}

/// Δθ_SMT from the Schmidt eigenvalues at gain G; +∞ where sin(l_pθ/2) = 0.
pub fn delta_theta_smt(spectrum: &SchmidtSpectrum, g: f64, l_p: i32, theta: f64) -> Result<f64> {
    let l = require_lp(l_p)?;
    if !(g > 0.0 && g.is_finite()) {
        return Err(Error::DegenerateNormalization(format!("Δθ_SMT needs G > 0, got {g}")));
    }
    let half = l_p as f64 * theta / 2.0;
    let s = half.sin().abs();
    if s == 0.0 {
        return Ok(f64::INFINITY);
    }
    let c = half.cos().abs();
    // sinh(4G√λ|c|) = 4G|c|·√λ·sinhc(·); the common factor 4G|c| cancels.
    let (mut num, mut den) = (0.0, 0.0);
    for lam in spectrum.blocks.iter().flat_map(|b| b.lambdas.iter()) {
        let r = lam.sqrt();
        let h = r * sinhc(4.0 * g * r * c);
        num += h * h;
        den += r * h;
    }
    Ok(0.5f64.sqrt() * num.sqrt() / (g * l * s * den))
}

/// Δθ_SNL = 1/√(2ΣΛ).
pub fn snl(w: &WeightedSpectrum) -> Result<f64> {
    Ok(1.0 / (2.0 * photons(w)?).sqrt())
}

pub fn f_tf(w: &WeightedSpectrum, l_p: i32, theta: f64) -> Result<f64> {
    Ok(delta_theta_tf(w, l_p, theta)? / snl(w)?)
}

pub fn f_smt(spectrum: &SchmidtSpectrum, w: &WeightedSpectrum, l_p: i32, theta: f64) -> Result<f64> {
    Ok(delta_theta_smt(spectrum, w.g, l_p, theta)? / snl(w)?)
}

/// (1/|l_p|)√(N_s/𝒜).
pub fn f_tf_min(w: &WeightedSpectrum, l_p: i32) -> Result<f64> {
    let l = require_lp(l_p)?;
    let n = photons(w)?;
    Ok((n / w.script_a()).sqrt() / l)
}

/// (1/|l_p|)/√(1 + N_s/K), the same quantity through the Schmidt number.
pub fn f_tf_min_from_k(w: &WeightedSpectrum, l_p: i32) -> Result<f64> {
    let l = require_lp(l_p)?;
    let n = photons(w)?;
    Ok(1.0 / (l * (1.0 + n / w.schmidt_number).sqrt()))
}

/// Limit of f_SMT at θ = π(2n+1)/l_p: √N_s/(G|l_p|√Σλ).
pub fn f_smt_min(spectrum: &SchmidtSpectrum, w: &WeightedSpectrum, l_p: i32) -> Result<f64> {
    let l = require_lp(l_p)?;
    let n = photons(w)?;
    Ok(n.sqrt() / (w.g * l * spectrum.total().sqrt()))
}

/// Width Δ_TF of the region around θ = π/l_p where f_TF < 1; zero if it does not exist.
pub fn supersensitivity_width(w: &WeightedSpectrum, l_p: i32) -> Result<f64> {
    let l = require_lp(l_p)?;
    let n = photons(w)?;
    let a = w.script_a();
    let ratio_b = w.script_b() / a;
    let den = (l * l - 1.0) + l * l * w.sum_sq() / n;
    if den <= 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * PI / l - 4.0 / l * ((1.0 + 4.0 * ratio_b) / den).sqrt().atan())
}

/// Δ_TF by solving f_TF(θ) = 1 on (π/|l_p|, 2π/|l_p|).
pub fn supersensitivity_width_numeric(w: &WeightedSpectrum, l_p: i32) -> Result<f64> {
    let l = require_lp(l_p)?;
    let lp = l_p.abs();
    let centre = PI / l;
    let g = |t: f64| f_tf(w, lp, t).map(|f| f - 1.0).unwrap_or(f64::INFINITY);
    if g(centre) >= 0.0 {
        return Ok(0.0);
    }
    let edge = 2.0 * PI / l * (1.0 - 1e-15);
    let mut conv = SimpleConvergency { eps: 1e-14, max_iter: 500 };
    let root = find_root_brent(centre, edge, g, &mut conv)
        .map_err(|e| Error::Fit(format!("f_TF = 1 root search failed: {e:?}")))?;
    Ok(2.0 * (root - centre))
}

/// Default θ grid: `points` samples over one period 2π/|l_p|, keeping `guard` away from divergences.
pub fn theta_grid(l_p: i32, points: usize, guard: f64) -> Result<Vec<f64>> {
    let l = require_lp(l_p)?;
    let period = 2.0 * PI / l;
    let span = period - 2.0 * guard;
    Ok((0..points).map(|k| guard + span * k as f64 / (points - 1) as f64).collect())
}

pub const THETA_POINTS: usize = 2048;
pub const THETA_GUARD: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct SensitivityCurve {
    pub theta: Vec<f64>,
    pub delta_theta_tf: Vec<f64>,
    pub delta_theta_smt: Vec<f64>,
    pub delta_theta_snl: f64,
    pub f_tf: Vec<f64>,
    pub f_smt: Vec<f64>,
    pub script_a: f64,
    pub script_b: f64,
    pub width_tf: f64,
    pub f_tf_min: f64,
    pub f_smt_min: f64,
}

pub fn sensitivity_curve(
    spectrum: &SchmidtSpectrum,
    w: &WeightedSpectrum,
    l_p: i32,
    theta: &[f64],
) -> Result<SensitivityCurve> {
    let snl_value = snl(w)?;
    let rows = theta
        .par_iter()
        .map(|&t| Ok((delta_theta_tf(w, l_p, t)?, delta_theta_smt(spectrum, w.g, l_p, t)?)))
        .collect::<Result<Vec<_>>>()?;
    let (tf, smt): (Vec<f64>, Vec<f64>) = rows.into_iter().unzip();
    Ok(SensitivityCurve {
        theta: theta.to_vec(),
        f_tf: tf.iter().map(|d| d / snl_value).collect(),
        f_smt: smt.iter().map(|d| d / snl_value).collect(),
        delta_theta_tf: tf,
        delta_theta_smt: smt,
        delta_theta_snl: snl_value,
        script_a: w.script_a(),
        script_b: w.script_b(),
        width_tf: supersensitivity_width(w, l_p)?,
        f_tf_min: f_tf_min(w, l_p)?,
        f_smt_min: f_smt_min(spectrum, w, l_p)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::RadialGrid;
    use crate::schmidt::SchmidtBlock;
    use crate::setup::GeometryKind::*;
    use approx::assert_relative_eq;
    use ndarray::Array2;
    use proptest::prelude::*;

    fn synthetic(lambdas: &[f64]) -> SchmidtSpectrum {
        let radial = RadialGrid::new(4, 1.0).unwrap();
        SchmidtSpectrum {
            radial,
            l_p: 2,
            n_min: 0,
            blocks: lambdas
                .iter()
                .enumerate()
                .map(|(k, &l)| SchmidtBlock {
                    n: k as i64,
                    lambdas: vec![l],
                    u: Array2::zeros((4, 1)),
                    v: Array2::zeros((4, 1)),
                })
                .collect(),
        }
    }

    fn spec() -> GridSpec {
        GridSpec { n_radial: 48, n_phi: 512, q_max_rel: 0.08, n_half_width: 110 }
    }

    #[test]
    fn fit_recovers_generating_constant() {
        for (a, b) in [(3.7, 2.5), (0.02, 1e6), (120.0, 1e-3)] {
            let gamma: Vec<f64> = (1..40).map(|k| k as f64 * 1.5 / (40.0 * a)).collect();
            let y: Vec<f64> = gamma.iter().map(|g| b * (a * g as &f64).sinh().powi(2)).collect();
            let fit = fit_sinh2(&gamma, &y, a * 1.7).unwrap();
            assert_relative_eq!(fit.a_tilde, a, max_relative = 1e-8);
            assert_relative_eq!(fit.b, b, max_relative = 1e-8);
        }
        assert!(fit_sinh2(&[1.0, 2.0], &[1.0, 2.0], 1.0).is_err());
    }

    #[test]
    fn shape_derivative_series_matches_direct() {
        for x in [1e-3, 0.05, 0.2, 0.49, 0.5, 0.51] {
            let direct = x * (2.0 * x as f64).sinh() - 2.0 * (x as f64).sinh().powi(2);
            let tol = if x < 0.04 { 1e-6 } else { 1e-11 };
            assert_relative_eq!(shape_derivative(x), direct, max_relative = tol);
        }
        assert_relative_eq!(shape_derivative(1e-3), 2.0 / 3.0 * 1e-12, max_relative = 1e-6);
    }

    #[test]
    fn single_mode_calibration() {
        let modes = CollinearModes { lambdas: vec![0.25], weights: vec![3.0], c_norm: 7.0 };
        for target in [0.01, 4.0] {
            let cal = calibrate_modes(&modes, target).unwrap();
            // y = 3 sinh²(2γ·0.5) ⇒ Ã = 1 with 𝒟 = 1, A = Ã/C.
            assert_relative_eq!(cal.a_tilde, 1.0, max_relative = 1e-8);
            assert_relative_eq!(cal.a, 1.0 / 7.0, max_relative = 1e-8);
            assert_relative_eq!(cal.a, cal.a_cross_check, max_relative = 1e-10);
            assert_relative_eq!(cal.gain_from_exp(target) * 0.5, target, max_relative = 1e-8);
        }
    }

    #[test]
    fn multimode_low_gain_limit() {
        // sinh²x = x² + x⁴/3 + … gives Ã² = 4Σcλ²/Σcλ at vanishing gain.
        let modes = CollinearModes { lambdas: vec![0.5, 0.2, 0.05], weights: vec![1.0, 2.0, 4.0], c_norm: 1.0 };
        let cal = calibrate_modes(&modes, 1e-3).unwrap();
        let (s1, s2): (f64, f64) = modes
            .lambdas
            .iter()
            .zip(&modes.weights)
            .fold((0.0, 0.0), |(a, b), (l, c)| (a + c * l, b + c * l * l));
        assert_relative_eq!(cal.a_tilde, 2.0 * (s2 / s1).sqrt(), max_relative = 1e-5);
        assert_relative_eq!(cal.a, cal.a_cross_check, max_relative = 1e-10);
        let high = calibrate_modes(&modes, 4.0).unwrap();
        assert!(high.a > cal.a);
    }

    #[test]
    fn calibration_rejects_two_crystals() {
        let s = OpticalSetup::reference(0, 0, TwoCrystalGap { d: 1e-3 });
        assert!(matches!(calibrate_gain(&s, &spec(), 0.01), Err(Error::Config(_))));
    }

    #[test]
    fn closed_form_examples() {
        let sp = synthetic(&[1.0]);
        let w = sp.weight(1.0).unwrap();
        let sh1 = (1f64.exp() - (-1f64).exp()) / 2.0;
        assert_relative_eq!(snl(&w).unwrap(), 1.0 / (2.0 * sh1 * sh1).sqrt(), max_relative = 1e-14);
        let g = 1e-4;
        assert_relative_eq!(snl(&sp.weight(g).unwrap()).unwrap(), 1.0 / (2f64.sqrt() * g), max_relative = 1e-8);
        assert!(snl(&sp.weight(0.0).unwrap()).is_err());
        for l in [1i32, 2, 7, -3] {
            let theta = PI / l as f64;
            let want = 0.5f64.sqrt() / (w.script_a().sqrt() * l.unsigned_abs() as f64);
            assert_relative_eq!(delta_theta_tf(&w, l, theta).unwrap(), want, max_relative = 1e-12);
            assert_eq!(delta_theta_tf(&w, l, 0.0).unwrap(), f64::INFINITY);
        }
        assert!(matches!(delta_theta_tf(&w, 0, 0.3), Err(Error::UndefinedSensitivity)));
        assert!(matches!(delta_theta_smt(&sp, 1.0, 0, 0.3), Err(Error::UndefinedSensitivity)));
    }

    #[test]
    fn low_gain_single_mode_matches_leading_order() {
        let sp = synthetic(&[1.0]);
        let g = 1e-5;
        let w = sp.weight(g).unwrap();
        for (l, theta) in [(2, 0.4), (3, 1.7), (7, 0.2)] {
            let s = (l as f64 * theta / 2.0).sin().abs();
            let want = 0.5f64.sqrt() / (g * l as f64 * s);
            assert_relative_eq!(delta_theta_tf(&w, l, theta).unwrap(), want, max_relative = 1e-8);
            assert_relative_eq!(delta_theta_smt(&sp, g, l, theta).unwrap(), want, max_relative = 1e-8);
        }
    }

    #[test]
    fn k_identity_and_ordering() {
        let sp = synthetic(&[0.4, 0.3, 0.2, 0.1]);
        for g in [1e-3, 0.1, 1.0, 3.0, 6.0] {
            let w = sp.weight(g).unwrap();
            for l in [1, 2, 7] {
                let a = f_tf_min(&w, l).unwrap();
                assert_relative_eq!(a, f_tf_min_from_k(&w, l).unwrap(), max_relative = 1e-10);
                assert!(a < f_smt_min(&sp, &w, l).unwrap());
            }
            let n = w.integral_intensity();
            assert!(g < n.sqrt() && n.sqrt() < w.script_a().sqrt());
        }
    }

    #[test]
    fn width_low_gain_limits() {
        let sp = synthetic(&[0.4, 0.3, 0.2, 0.1]);
        let w = sp.weight(1e-4).unwrap();
        assert_relative_eq!(supersensitivity_width(&w, 2).unwrap(), 2.0 * PI / 3.0, max_relative = 1e-6);
        assert!(supersensitivity_width(&w, 1).unwrap() < 1e-3);
        assert!(supersensitivity_width(&w, -1).unwrap() < 1e-3);
    }

    #[test]
    fn width_matches_root_finding() {
        let sp = synthetic(&[0.4, 0.3, 0.2, 0.1]);
        for g in [1e-2, 0.5, 2.0, 5.0] {
            let w = sp.weight(g).unwrap();
            for l in [1, 2, 7, -4] {
                let closed = supersensitivity_width(&w, l).unwrap();
                let numeric = supersensitivity_width_numeric(&w, l).unwrap();
                assert!((closed - numeric).abs() < 1e-8, "g={g} l={l}: {closed} vs {numeric}");
            }
        }
    }

    #[test]
    fn smt_bound_and_extremum() {
        let sp = synthetic(&[0.4, 0.3, 0.2, 0.1]);
        for g in [0.3, 2.0] {
            let w = sp.weight(g).unwrap();
            let l = 7;
            let fmin = f_smt_min(&sp, &w, l).unwrap();
            for t in theta_grid(l, THETA_POINTS, THETA_GUARD).unwrap() {
                assert!(f_smt(&sp, &w, l, t).unwrap() >= fmin * (1.0 - 1e-12));
            }
            let c = PI / l as f64;
            assert_relative_eq!(f_smt(&sp, &w, l, c).unwrap(), fmin, max_relative = 1e-10);
            let h = 1e-4;
            let f2 = |t: f64| f_smt(&sp, &w, l, t).unwrap().powi(2);
            assert!(((f2(c + h) - f2(c - h)) / (2.0 * h)).abs() < 1e-6);
        }
    }

    #[test]
    fn tf_minimum_location() {
        let sp = synthetic(&[0.4, 0.3, 0.2, 0.1]);
        let w = sp.weight(1.5).unwrap();
        for l in [2, 5] {
            let grid = theta_grid(l, THETA_POINTS, THETA_GUARD).unwrap();
            let (k, _) = grid
                .iter()
                .map(|&t| f_tf(&w, l, t).unwrap())
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            assert!((grid[k] - PI / l as f64).abs() <= grid[1] - grid[0]);
            assert_relative_eq!(f_tf(&w, l, PI / l as f64).unwrap(), f_tf_min(&w, l).unwrap(), max_relative = 1e-12);
        }
    }

    #[test]
    fn divergence_near_dark_angles() {
        let sp = synthetic(&[0.6, 0.4]);
        let w = sp.weight(0.8).unwrap();
        for l in [1, 3] {
            let t = 2.0 * PI / l as f64 + 1e-8;
            assert!(delta_theta_tf(&w, l, t).unwrap() > 1e6);
            assert!(delta_theta_smt(&sp, 0.8, l, t).unwrap() > 1e6);
        }
    }

    proptest! {
        #[test]
        fn periodicity(theta in 0.05f64..0.8, g in 0.01f64..4.0, l in 1i32..9) {
            let sp = synthetic(&[0.5, 0.3, 0.2]);
            let w = sp.weight(g).unwrap();
            let period = 2.0 * PI / l as f64;
            let t = theta * period;
            let a = f_tf(&w, l, t).unwrap();
            let b = f_tf(&w, l, t + period).unwrap();
            prop_assert!((a - b).abs() <= 1e-10 * a);
            let a = f_smt(&sp, &w, l, t).unwrap();
            let b = f_smt(&sp, &w, l, t + period).unwrap();
            prop_assert!((a - b).abs() <= 1e-10 * a);
        }

        #[test]
        fn low_gain_tf_smt_agree(theta in 0.1f64..0.9, l in 1i32..9) {
            let sp = synthetic(&[0.5, 0.3, 0.2]);
            let w = sp.weight(1e-3).unwrap();
            let t = theta * 2.0 * PI / l as f64;
            let a = f_tf(&w, l, t).unwrap();
            let b = f_smt(&sp, &w, l, t).unwrap();
            prop_assert!((a - b).abs() < 1e-4 * a);
        }
    }

    #[test]
    fn calibration_on_decomposed_spectrum() {
        let s = OpticalSetup::reference(0, 0, SingleCrystal);
        let (chi, sp) = single_crystal_spectrum(&s, &spec()).unwrap();
        let modes = CollinearModes::from_spectrum(&chi, &sp).unwrap();
        assert!(modes.weights[0] > 0.0);
        let avg = AveragedCalibration::new(&modes, 0.01, 4.0).unwrap();
        assert!(avg.ratio() > 1.0);
        assert_relative_eq!(avg.low.a, avg.low.a_cross_check, max_relative = 1e-10);
        assert_relative_eq!(avg.high.a, avg.high.a_cross_check, max_relative = 1e-10);
    }
}
