//! Two-crystal interferometer: fringe scans over the air gap and the
//! Dove-prism configuration through Bogoliubov transfer blocks.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{gauss_legendre, GridSpec, RadialGrid};
use crate::kernels::{compute_chi_blocks_auto, ChiBlockSet, LongitudinalKernel};
use crate::linalg;
use crate::schmidt::{decompose, SchmidtSpectrum, WeightedSpectrum};
use crate::setup::{GeometryKind, OpticalSetup};

/// Default gap scan: 0 to 3.2 cm in 0.02 cm steps.
pub fn default_gap_grid() -> Vec<f64> {
    (0..=160).map(|k| k as f64 * 2e-4).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FringeMethod {
    /// Leading-order gain: I(d) = G²·S(d)/S(0 gap, one crystal), with S the
    /// squared norm of the unnormalized amplitude evaluated as a 1D integral
    /// over the squared transverse mismatch.
    Separable,
    /// Full decomposition at every d; the amplitude norm sets the effective gain.
    Decomposed(GridSpec),
}

#[derive(Clone, Debug)]
pub struct FringeScan {
    /// Gap lengths [m], strictly increasing.
    pub d: Vec<f64>,
    pub intensity: Vec<f64>,
    pub dark: Option<f64>,
    pub bright: Option<f64>,
}

/// ∫₀^∞ |g_z(Δ)|² dΔ for the longitudinal kernel of `setup` with gap `d`.
pub fn mismatch_norm(setup: &OpticalSetup, d: Option<f64>) -> f64 {
    let kernel = LongitudinalKernel::for_gap(setup, d);
    let c = LongitudinalKernel::for_gap(setup, None).phase_rate();
    let rate = kernel.phase_rate() / c;
    let panel = std::f64::consts::PI / (2.0 * (rate + 1.0));
    let x_max = 4000.0;
    let panels = (x_max / panel).ceil() as usize;
    let (nodes, weights) = gauss_legendre(8, 0.0, panel);
    let f = |x: f64| kernel.norm_sqr(x / c);
    let body: f64 = (0..panels)
        .map(|p| {
            let a = p as f64 * panel;
            nodes.iter().zip(&weights).map(|(t, w)| w * f(a + t)).sum::<f64>()
        })
        .sum();
    let end = panels as f64 * panel;
    // Beyond `end` the integrand behaves as ⟨f·X²⟩/X²; the mean is taken over the last stretch.
    let window = 400;
    let mean: f64 = (panels - window..panels)
        .map(|p| {
            let a = p as f64 * panel;
            nodes.iter().zip(&weights).map(|(t, w)| w * f(a + t) * (a + t).powi(2)).sum::<f64>()
        })
        .sum::<f64>()
        / (window as f64 * panel);
    (body + mean / end) / c
}

fn gap_setup(setup: &OpticalSetup, d: f64) -> Result<OpticalSetup> {
    setup.with_geometry(GeometryKind::TwoCrystalGap { d })
}

fn check_scan(d_list: &[f64], g: f64) -> Result<()> {
    if d_list.is_empty() {
        return Err(Error::Config("empty gap list".into()));
    }
    if d_list.windows(2).any(|p| p[1] <= p[0]) || d_list[0] < 0.0 {
        return Err(Error::Config("gap list must be non-negative and strictly increasing".into()));
    }
    if !(g >= 0.0 && g.is_finite()) {
        return Err(Error::Config(format!("gain must be finite and non-negative, got {g}")));
    }
    Ok(())
}

/// Integral output intensity of the two-crystal system over a list of gaps.
pub fn fringe_scan(setup: &OpticalSetup, d_list: &[f64], g: f64, method: FringeMethod) -> Result<FringeScan> {
    check_scan(d_list, g)?;
    let intensity = match method {
        FringeMethod::Separable => {
            let single = mismatch_norm(setup, None);
            d_list.par_iter().map(|&d| g * g * mismatch_norm(setup, Some(d)) / single).collect()
        }
        FringeMethod::Decomposed(spec) => decomposed_intensity(setup, d_list, g, &spec, compute_chi_blocks_auto)?,
    };
    let (dark, bright) = locate_extrema(d_list, &intensity);
    Ok(FringeScan { d: d_list.to_vec(), intensity, dark, bright })
}

/// As [`fringe_scan`] with [`FringeMethod::Decomposed`], taking the blocks from `source`
/// (for instance a cache) instead of computing them.
pub fn fringe_scan_decomposed_with<F>(
    setup: &OpticalSetup,
    d_list: &[f64],
    g: f64,
    spec: &GridSpec,
    source: F,
) -> Result<FringeScan>
where
    F: FnMut(&OpticalSetup, &GridSpec) -> Result<ChiBlockSet>,
{
    check_scan(d_list, g)?;
    let intensity = decomposed_intensity(setup, d_list, g, spec, source)?;
    let (dark, bright) = locate_extrema(d_list, &intensity);
    Ok(FringeScan { d: d_list.to_vec(), intensity, dark, bright })
}

fn decomposed_intensity<F>(setup: &OpticalSetup, d_list: &[f64], g: f64, spec: &GridSpec, mut source: F) -> Result<Vec<f64>>
where
    F: FnMut(&OpticalSetup, &GridSpec) -> Result<ChiBlockSet>,
{
    let single = source(&setup.with_geometry(GeometryKind::SingleCrystal)?, spec)?.raw_norm;
    let mut out = Vec::with_capacity(d_list.len());
    for &d in d_list {
        let chi = source(&gap_setup(setup, d)?, spec)?;
        let g_eff = g * (chi.raw_norm / single).sqrt();
        out.push(decompose(&chi)?.weight(g_eff)?.integral_intensity());
    }
    Ok(out)
}

/// Vertex of the parabola through three points.
pub fn parabolic_vertex(x: [f64; 3], y: [f64; 3]) -> f64 {
    let d1 = (y[1] - y[0]) / (x[1] - x[0]);
    let d2 = (y[2] - y[1]) / (x[2] - x[1]);
    let a = (d2 - d1) / (x[2] - x[0]);
    if a == 0.0 {
        return x[1];
    }
    let v = 0.5 * (x[0] + x[1]) - d1 / (2.0 * a);
    v.clamp(x[0], x[2])
}

/// First interior minimum and the first interior maximum after it, refined parabolically.
pub fn locate_extrema(x: &[f64], y: &[f64]) -> (Option<f64>, Option<f64>) {
    let refine = |i: usize| parabolic_vertex([x[i - 1], x[i], x[i + 1]], [y[i - 1], y[i], y[i + 1]]);
    let mut dark = None;
    let mut bright = None;
    let mut start = 1;
    for i in 1..y.len().saturating_sub(1) {
        if y[i] < y[i - 1] && y[i] <= y[i + 1] {
            dark = Some(refine(i));
            start = i + 1;
            break;
        }
    }
    if dark.is_some() {
        for i in start..y.len().saturating_sub(1) {
            if y[i] > y[i - 1] && y[i] >= y[i + 1] {
                bright = Some(refine(i));
                break;
            }
        }
    }
    (dark, bright)
}

/// Bogoliubov transfer kernels of one crystal in the weighted basis ũ = √w·u.
#[derive(Clone, Debug)]
pub struct TransferBlocks {
    pub radial: RadialGrid,
    pub n_min: i64,
    pub g: f64,
    /// Ũ_n = 1 + Σ_m (cosh(G√λ) − 1) ũ ũ^†.
    pub u_tilde: Vec<Array2<C64>>,
    /// B_n = Σ_m sinh(G√λ) ũ ṽᵀ.
    pub b: Vec<Array2<C64>>,
}

impl TransferBlocks {
    pub fn n_max(&self) -> i64 {
        self.n_min + self.b.len() as i64 - 1
    }

    fn index(&self, n: i64) -> Option<usize> {
        (n >= self.n_min && n <= self.n_max()).then(|| (n - self.n_min) as usize)
    }
}

pub fn build_transfer_blocks(spectrum: &SchmidtSpectrum, g: f64) -> Result<TransferBlocks> {
    if !(g >= 0.0 && g.is_finite()) {
        return Err(Error::Config(format!("gain must be finite and non-negative, got {g}")));
    }
    let sw: Vec<f64> = spectrum.radial.weights.iter().map(|w| w.sqrt()).collect();
    let rows = sw.len();
    let (u_tilde, b) = spectrum
        .blocks
        .par_iter()
        .map(|blk| {
            let mut ut = Array2::<C64>::eye(rows);
            let mut bb = Array2::<C64>::zeros((rows, rows));
            for (k, lam) in blk.lambdas.iter().enumerate() {
                let x = g * lam.sqrt();
                let (ch, sh) = (x.cosh() - 1.0, x.sinh());
                let uk: Vec<C64> = (0..rows).map(|i| blk.u[[i, k]] * sw[i]).collect();
                let vk: Vec<C64> = (0..rows).map(|i| blk.v[[i, k]] * sw[i]).collect();
                for i in 0..rows {
                    for j in 0..rows {
                        ut[[i, j]] += uk[i] * uk[j].conj() * ch;
                        bb[[i, j]] += uk[i] * vk[j] * sh;
                    }
                }
            }
            (ut, bb)
        })
        .unzip();
    Ok(TransferBlocks { radial: spectrum.radial.clone(), n_min: spectrum.n_min, g, u_tilde, b })
}

#[derive(Clone, Debug)]
pub struct ComposedInterferometer {
    pub n_min: i64,
    pub u_tilde: Vec<Array2<C64>>,
    pub b: Vec<Array2<C64>>,
    /// Λ^{(SU)}_{mn}: squared singular values of the composed B_n, non-increasing in m.
    pub lambda_su: Vec<Vec<f64>>,
}

/// Two identical crystals with a Dove prism rotated by θ between them.
///
/// The second crystal sees the first crystal's kernels with B acquiring
/// e^{−i l_p θ}; partners n ↔ l_p − n must both lie in the retained range.
pub fn compose_su11_dove(
    first: &TransferBlocks,
    second: &TransferBlocks,
    l_p: i32,
    theta: f64,
) -> Result<ComposedInterferometer> {
    if first.radial != second.radial || first.n_min != second.n_min || first.b.len() != second.b.len() {
        return Err(Error::GridMismatch("transfer blocks were built on different grids or OAM ranges".into()));
    }
    let l = l_p as i64;
    if first.n_min + first.n_max() != l {
        return Err(Error::GridMismatch(format!(
            "OAM range [{}, {}] is not symmetric about l_p/2 = {}",
            first.n_min,
            first.n_max(),
            l as f64 / 2.0
        )));
    }
    let dove = C64::from_polar(1.0, -(l as f64) * theta);
    let out: Vec<(Array2<C64>, Array2<C64>, Vec<f64>)> = (0..first.b.len())
        .into_par_iter()
        .map(|k| {
            let n = first.n_min + k as i64;
            let p = first.index(l - n).expect("symmetric range");
            let u1p = first.u_tilde[p].mapv(|z| z.conj());
            let b1p = first.b[p].mapv(|z| z.conj());
            let b2 = second.b[k].mapv(|z| z * dove);
            let b_su = linalg::matmul(&second.u_tilde[k], &first.b[k]) + linalg::matmul(&b2, &u1p);
            let u_su = linalg::matmul(&second.u_tilde[k], &first.u_tilde[k]) + linalg::matmul(&b2, &b1p);
            let sv = linalg::singular_values(&b_su).ok_or(Error::SvdFailure(n))?;
            Ok((u_su, b_su, sv.iter().map(|s| s * s).collect()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut u_tilde = Vec::with_capacity(out.len());
    let mut b = Vec::with_capacity(out.len());
    let mut lambda_su = Vec::with_capacity(out.len());
    for (u, bb, l) in out {
        u_tilde.push(u);
        b.push(bb);
        lambda_su.push(l);
    }
    Ok(ComposedInterferometer { n_min: first.n_min, u_tilde, b, lambda_su })
}

/// Closed-form Λ^{(SU)} = 4Λ(Λ+1)cos²(l_pθ/2) from the first-crystal spectrum.
pub fn closed_form_su_eigs(weighted: &WeightedSpectrum, l_p: i32, theta: f64) -> Vec<Vec<f64>> {
    let c2 = (l_p as f64 * theta / 2.0).cos().powi(2);
    weighted.big_lambda.iter().map(|r| r.iter().map(|l| 4.0 * l * (l + 1.0) * c2).collect()).collect()
}

/// Λ^{(SU)}_{mn} = sinh²(2G√λ_{mn} cos(l_pθ/2)) from the Schmidt modes alone.
pub fn smt_su_eigs(spectrum: &SchmidtSpectrum, g: f64, l_p: i32, theta: f64) -> Vec<Vec<f64>> {
    let c = (l_p as f64 * theta / 2.0).cos();
    spectrum
        .blocks
        .iter()
        .map(|b| b.lambdas.iter().map(|l| (2.0 * g * l.sqrt() * c).sinh().powi(2)).collect())
        .collect()
}

/// argmax over n of Λ′_{m_cut, n}, ties resolved toward larger n.
pub fn most_populated_oam(weighted: &WeightedSpectrum, m_cut: usize) -> i64 {
    weighted.most_populated_oam(m_cut)
}
