use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;
use std::rc::Rc;

use clap::{Args, ValueEnum};

use oampdc::analytic::{compare_numeric_analytic, BinomialPhase};
use oampdc::cache::ChiCache;
use oampdc::export::{self, Report};
use oampdc::grid::GridSpec;
use oampdc::interferometer::{build_transfer_blocks, compose_su11_dove, fringe_scan, FringeMethod};
use oampdc::kernels::{compute_chi_blocks_auto, max_safe_gap, ChiBlockSet};
use oampdc::metrology::{
    sensitivity_curve, theta_grid, AveragedCalibration, CollinearModes, THETA_GUARD, THETA_POINTS,
};
use oampdc::schmidt::{decompose, SchmidtSpectrum};
use oampdc::setup::{GeometryKind, OpticalSetup};
use oampdc::Error;

use crate::config::{si, Resolved, SetupArgs};
use crate::error::CliError;
use crate::manifest::RunManifest;

/// Output directory, block cache and the manifest of the current run.
pub struct Run {
    dir: PathBuf,
    cache: Option<ChiCache>,
    decomposed: Vec<(OpticalSetup, Rc<(ChiBlockSet, SchmidtSpectrum)>)>,
    pub manifest: RunManifest,
}

impl Run {
    pub fn new(command: &str, out: PathBuf, resolved: &Resolved) -> Result<Self, CliError> {
        fs::create_dir_all(&out)?;
        let cache = ChiCache::from_env();
        let mut manifest = RunManifest::new(command, &resolved.setup, &resolved.grid);
        manifest.cache_dir = cache.as_ref().map(|c| c.dir().to_path_buf());
        Ok(Self { dir: out, cache, decomposed: Vec::new(), manifest })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        let file = format!("{}_{name}", self.manifest.command);
        let w = BufWriter::new(File::create(self.dir.join(&file))?);
        self.manifest.outputs.push(file);
        Ok(w)
    }

    fn report(&mut self, report: &Report) -> Result<(), CliError> {
        let w = self.create("report.csv")?;
        report.write(w)?;
        Ok(())
    }

    fn result(&mut self, key: &str, value: f64) {
        self.manifest.results.insert(key.into(), value);
    }

    /// Fourier blocks from the cache when `OAMPDC_CACHE_DIR` is set.
    pub fn chi(&mut self, setup: &OpticalSetup, grid: &GridSpec) -> oampdc::Result<ChiBlockSet> {
        match &self.cache {
            Some(cache) => {
                let (chi, hit) = cache.get_or_compute(setup, grid)?;
                if hit {
                    self.manifest.cache_hits += 1;
                } else {
                    self.manifest.cache_misses += 1;
                }
                Ok(chi)
            }
            None => compute_chi_blocks_auto(setup, grid),
        }
    }

    /// Blocks and their decomposition, computed once per setup within a run.
    pub fn spectrum(&mut self, setup: &OpticalSetup, grid: &GridSpec) -> oampdc::Result<Rc<(ChiBlockSet, SchmidtSpectrum)>> {
        if let Some((_, d)) = self.decomposed.iter().find(|(s, _)| s == setup) {
            return Ok(d.clone());
        }
        let chi = self.chi(setup, grid)?;
        let spectrum = decompose(&chi)?;
        let d = Rc::new((chi, spectrum));
        self.decomposed.push((*setup, d.clone()));
        Ok(d)
    }

    pub fn finish(mut self, wall_time_s: f64) -> Result<PathBuf, CliError> {
        self.manifest.wall_time_s = wall_time_s;
        self.manifest.write(&self.dir)
    }
}

#[derive(Args, Clone, Debug)]
pub struct GainArgs {
    /// Theoretical gain G.
    #[arg(long, conflicts_with = "g_exp")]
    pub gain: Option<f64>,
    /// Experimental gain, converted to G with the calibration constant averaged over --cal-low and --cal-high.
    #[arg(long)]
    pub g_exp: Option<f64>,
    #[arg(long, default_value_t = 0.01)]
    pub cal_low: f64,
    #[arg(long, default_value_t = 4.0)]
    pub cal_high: f64,
}

fn single(setup: &OpticalSetup) -> oampdc::Result<OpticalSetup> {
    setup.with_geometry(GeometryKind::SingleCrystal)
}

fn averaged_calibration(
    run: &mut Run,
    setup: &OpticalSetup,
    grid: &GridSpec,
    low: f64,
    high: f64,
) -> Result<AveragedCalibration, CliError> {
    let d = run.spectrum(&single(setup)?, grid)?;
    let modes = CollinearModes::from_spectrum(&d.0, &d.1)?;
    Ok(AveragedCalibration::new(&modes, low, high)?)
}

impl GainArgs {
    /// Theoretical gain, zero when neither flag is given.
    fn resolve(&self, run: &mut Run, setup: &OpticalSetup, grid: &GridSpec, report: &mut Report) -> Result<f64, CliError> {
        let g = match (self.gain, self.g_exp) {
            (Some(g), _) => g,
            (None, Some(g_exp)) => {
                let cal = averaged_calibration(run, setup, grid, self.cal_low, self.cal_high)?;
                report.float("g_exp", g_exp, "1").float("a_avg", cal.a_avg, "1");
                cal.gain_from_exp(g_exp)
            }
            (None, None) => 0.0,
        };
        if !(g >= 0.0 && g.is_finite()) {
            return Err(CliError::Usage(format!("gain must be finite and non-negative, got {g}")));
        }
        report.float("gain", g, "1");
        Ok(g)
    }
}

#[derive(Args, Debug)]
pub struct DecomposeArgs {
    #[command(flatten)]
    pub setup: SetupArgs,
    #[command(flatten)]
    pub gain: GainArgs,
    /// Radial index whose OAM distribution selects the most populated mode.
    #[arg(long, default_value_t = 0)]
    pub m_cut: usize,
}

/// Eigenvalues λ, Λ, Λ′ and Schmidt number; the dove geometry adds the composed spectrum.
pub fn decompose_cmd(run: &mut Run, args: &DecomposeArgs, r: &Resolved) -> Result<(), CliError> {
    let mut report = Report::new();
    let g = args.gain.resolve(run, &r.setup, &r.grid, &mut report)?;
    let first = match r.setup.geometry.kind {
        GeometryKind::CompensatedDove { .. } => single(&r.setup)?,
        _ => r.setup,
    };
    let d = run.spectrum(&first, &r.grid)?;
    let (chi, spectrum) = (&d.0, &d.1);
    let w = spectrum.weight(g)?;
    export::eigenvalues(run.create("eigenvalues.csv")?, spectrum, &w)?;
    let n_star = w.most_populated_oam(args.m_cut);
    let k = w.schmidt_number;
    report
        .int("n_min", spectrum.n_min, "1")
        .int("n_max", spectrum.n_max(), "1")
        .float("c_norm", chi.c_norm, "1")
        .float("leakage", chi.leakage, "1")
        .float("sum_lambda", spectrum.total(), "1")
        .float("schmidt_number", k, "1")
        .int("most_populated_n", n_star, "1");
    if let GeometryKind::CompensatedDove { theta } = r.setup.geometry.kind {
        let blocks = build_transfer_blocks(spectrum, g)?;
        let composed = compose_su11_dove(&blocks, &blocks, r.setup.pump.l_p, theta)?;
        export::composed_eigenvalues(run.create("composed.csv")?, &composed)?;
    }
    run.report(&report)?;
    run.result("schmidt_number", k);
    run.result("most_populated_n", n_star as f64);
    Ok(())
}

#[derive(Args, Debug)]
pub struct IntensityArgs {
    #[command(flatten)]
    pub setup: SetupArgs,
    #[command(flatten)]
    pub gain: GainArgs,
}

/// Radial intensity spectrum ⟨N(q)⟩ and its integral.
pub fn intensity_cmd(run: &mut Run, args: &IntensityArgs, r: &Resolved) -> Result<(), CliError> {
    let mut report = Report::new();
    let g = args.gain.resolve(run, &r.setup, &r.grid, &mut report)?;
    let d = run.spectrum(&r.setup, &r.grid)?;
    let spectrum = &d.1;
    let w = spectrum.weight(g)?;
    let curve = spectrum.intensity_spectrum(&w);
    export::intensity(run.create("intensity.csv")?, &curve, &r.setup)?;
    let total = w.integral_intensity();
    report.float("integral_intensity", total, "1").float("schmidt_number", w.schmidt_number, "1");
    run.report(&report)?;
    run.result("integral_intensity", total);
    Ok(())
}

#[derive(Args, Debug)]
pub struct ModesArgs {
    #[command(flatten)]
    pub setup: SetupArgs,
    /// Mode as m:n (radial index, OAM index); repeatable.
    #[arg(long = "mode", value_parser = parse_mode, required = true)]
    pub modes: Vec<(usize, i64)>,
}

fn parse_mode(s: &str) -> Result<(usize, i64), String> {
    let (m, n) = s.split_once(':').ok_or_else(|| format!("expected m:n, got {s:?}"))?;
    let m = m.trim().parse().map_err(|e| format!("radial index {m:?}: {e}"))?;
    let n = n.trim().parse().map_err(|e| format!("OAM index {n:?}: {e}"))?;
    Ok((m, n))
}

/// Radial profiles |u_mn(q)|²/q of the requested Schmidt modes.
pub fn modes_cmd(run: &mut Run, args: &ModesArgs, r: &Resolved) -> Result<(), CliError> {
    let d = run.spectrum(&r.setup, &r.grid)?;
    let spectrum = &d.1;
    let profiles = spectrum.export_mode_profiles(&args.modes)?;
    export::mode_profiles(run.create("profiles.csv")?, &profiles)?;
    let mut report = Report::new();
    for &(m, n) in &args.modes {
        report.float(&format!("lambda_m{m}_n{n}"), spectrum.lambda(m, n), "1");
    }
    run.report(&report)?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodName {
    /// Low-gain one-dimensional integral, no grid.
    Separable,
    /// Full decomposition at every gap.
    Decomposed,
}

#[derive(Args, Debug)]
pub struct FringeArgs {
    #[command(flatten)]
    pub setup: SetupArgs,
    #[arg(long, default_value_t = 0.0)]
    pub d_start_cm: f64,
    #[arg(long, default_value_t = 3.2)]
    pub d_end_cm: f64,
    #[arg(long, default_value_t = 0.02)]
    pub d_step_cm: f64,
    #[arg(long, value_enum, default_value_t = MethodName::Separable)]
    pub method: MethodName,
    /// Theoretical gain; the separable intensity is relative to one crystal at this gain.
    #[arg(long, default_value_t = 1.0)]
    pub gain: f64,
}

/// Gap list start, start + step, ... up to end inclusive.
pub fn gap_range(start_cm: f64, end_cm: f64, step_cm: f64) -> Result<Vec<f64>, CliError> {
    if !(start_cm.is_finite() && end_cm.is_finite() && step_cm.is_finite()) {
        return Err(CliError::Usage("gap range must be finite".into()));
    }
    if step_cm <= 0.0 {
        return Err(CliError::Usage(format!("--d-step-cm must be positive, got {step_cm}")));
    }
    if start_cm < 0.0 || end_cm < start_cm {
        return Err(CliError::Usage(format!("empty gap range [{start_cm}, {end_cm}] cm")));
    }
    let count = ((end_cm - start_cm) / step_cm + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| si(start_cm + k as f64 * step_cm, -2)).collect())
}

/// Integral intensity against the gap and the located dark and bright fringes.
pub fn fringe_cmd(run: &mut Run, args: &FringeArgs, r: &Resolved) -> Result<(), CliError> {
    if r.geometry_explicit && !matches!(r.setup.geometry.kind, GeometryKind::TwoCrystalGap { .. }) {
        return Err(CliError::Usage("the fringe scan runs on the gap geometry".into()));
    }
    let d = gap_range(args.d_start_cm, args.d_end_cm, args.d_step_cm)?;
    let setup = r.setup.with_geometry(GeometryKind::TwoCrystalGap { d: 0.0 })?;
    let scan = match args.method {
        MethodName::Separable => fringe_scan(&setup, &d, args.gain, FringeMethod::Separable)?,
        MethodName::Decomposed => {
            let safe = max_safe_gap(&setup, &r.grid.radial(&setup)?, &r.grid.angular(setup.pump.l_p)?);
            let last = *d.last().expect("non-empty range");
            if last > safe {
                return Err(Error::Resolution { d_cm: last * 100.0, max_safe_cm: safe * 100.0 }.into());
            }
            oampdc::interferometer::fringe_scan_decomposed_with(&setup, &d, args.gain, &r.grid, |s, g| run.chi(s, g))?
        }
    };
    export::fringe(run.create("scan.csv")?, &scan)?;
    let (lo, hi) = scan.intensity.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let visibility = if hi + lo > 0.0 { (hi - lo) / (hi + lo) } else { 0.0 };
    let mut report = Report::new();
    report.float("gain", args.gain, "1").float("visibility", visibility, "1");
    run.result("visibility", visibility);
    if let Some(x) = scan.dark {
        report.float("d_dark", x * 100.0, "cm");
        run.result("d_dark_cm", x * 100.0);
    }
    if let Some(x) = scan.bright {
        report.float("d_bright", x * 100.0, "cm");
        run.result("d_bright_cm", x * 100.0);
    }
    run.report(&report)?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct SensitivityArgs {
    #[command(flatten)]
    pub setup: SetupArgs,
    #[command(flatten)]
    pub gain: GainArgs,
    /// Samples over one period 2π/|l_p| of the prism angle.
    #[arg(long, default_value_t = THETA_POINTS)]
    pub theta_points: usize,
}

fn single_crystal_only(r: &Resolved, what: &str) -> Result<(), CliError> {
    if let GeometryKind::TwoCrystalGap { .. } = r.setup.geometry.kind {
        return Err(CliError::Usage(format!("{what} uses the single-crystal spectrum; use geometry single or dove")));
    }
    Ok(())
}

/// Phase sensitivity of the Dove-prism interferometer over the prism angle.
pub fn sensitivity_cmd(run: &mut Run, args: &SensitivityArgs, r: &Resolved) -> Result<(), CliError> {
    single_crystal_only(r, "the sensitivity")?;
    let l_p = r.setup.pump.l_p;
    if l_p == 0 {
        return Err(Error::UndefinedSensitivity.into());
    }
    if args.theta_points < 3 {
        return Err(CliError::Usage("--theta-points must be at least 3".into()));
    }
    if args.gain.gain.is_none() && args.gain.g_exp.is_none() {
        return Err(CliError::Usage("give --g-exp or --gain".into()));
    }
    let mut report = Report::new();
    let g = args.gain.resolve(run, &r.setup, &r.grid, &mut report)?;
    let d = run.spectrum(&single(&r.setup)?, &r.grid)?;
    let spectrum = &d.1;
    let w = spectrum.weight(g)?;
    let theta = theta_grid(l_p, args.theta_points, THETA_GUARD)?;
    let curve = sensitivity_curve(spectrum, &w, l_p, &theta)?;
    export::sensitivity(run.create("curve.csv")?, &curve)?;
    report
        .float("delta_theta_snl", curve.delta_theta_snl, "rad")
        .float("f_tf_min", curve.f_tf_min, "1")
        .float("f_smt_min", curve.f_smt_min, "1")
        .float("delta_tf", curve.width_tf, "rad")
        .float("script_a", curve.script_a, "1")
        .float("script_b", curve.script_b, "1");
    run.report(&report)?;
    run.result("f_tf_min", curve.f_tf_min);
    run.result("f_smt_min", curve.f_smt_min);
    run.result("delta_tf_rad", curve.width_tf);
    Ok(())
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub setup: SetupArgs,
    #[arg(long, default_value_t = 0.01)]
    pub low: f64,
    #[arg(long, default_value_t = 4.0)]
    pub high: f64,
}

/// Fit constants A at a low and a high experimental gain and their ratio.
pub fn calibrate_cmd(run: &mut Run, args: &CalibrateArgs, r: &Resolved) -> Result<(), CliError> {
    single_crystal_only(r, "the calibration")?;
    let cal = averaged_calibration(run, &r.setup, &r.grid, args.low, args.high)?;
    let mut report = Report::new();
    for (tag, c) in [("low", &cal.low), ("high", &cal.high)] {
        report
            .float(&format!("g_exp_{tag}"), c.target_g_exp, "1")
            .float(&format!("a_{tag}"), c.a, "1")
            .float(&format!("a_tilde_{tag}"), c.a_tilde, "1")
            .float(&format!("b_{tag}"), c.b_fit, "1")
            .float(&format!("a_cross_check_{tag}"), c.a_cross_check, "1")
            .float(&format!("gamma_lo_{tag}"), c.gamma_window.0, "1")
            .float(&format!("gamma_hi_{tag}"), c.gamma_window.1, "1");
    }
    report.float("c_norm", cal.c_norm, "1").float("a_avg", cal.a_avg, "1").float("ratio", cal.ratio(), "1");
    run.report(&report)?;
    run.result("ratio", cal.ratio());
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PhaseName {
    /// Keep the (−i)^ν factor of every binomial term.
    Full,
    /// Drop it.
    Dropped,
}

#[derive(Args, Debug)]
pub struct AnalyticArgs {
    #[command(flatten)]
    pub setup: SetupArgs,
    /// Gaps [cm], comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0,0.42")]
    pub gaps_cm: Vec<f64>,
    #[arg(long, value_enum, default_value_t = PhaseName::Full)]
    pub phase: PhaseName,
}

/// Closed-form double-Gaussian orbital eigenvalues against the numerical decomposition.
pub fn analytic_cmd(run: &mut Run, args: &AnalyticArgs, r: &Resolved) -> Result<(), CliError> {
    if args.gaps_cm.is_empty() || args.gaps_cm.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
        return Err(CliError::Usage("--gaps-cm needs non-negative gaps".into()));
    }
    let gaps: Vec<f64> = args.gaps_cm.iter().map(|&d| si(d, -2)).collect();
    let phase = match args.phase {
        PhaseName::Full => BinomialPhase::Full,
        PhaseName::Dropped => BinomialPhase::Dropped,
    };
    let comparisons = compare_numeric_analytic(&r.setup, &gaps, &r.grid, phase)?;
    export::analytic(run.create("eigenvalues.csv")?, &comparisons)?;
    let mut report = Report::new();
    for c in &comparisons {
        let tag = format!("{}cm", c.d * 100.0);
        report
            .float(&format!("correlation_{tag}"), c.correlation, "1")
            .int(&format!("peak_analytic_{tag}"), c.peak_analytic(), "1")
            .int(&format!("peak_numeric_{tag}"), c.peak_numeric(), "1");
        run.result(&format!("correlation_{tag}"), c.correlation);
    }
    run.report(&report)?;
    Ok(())
}
