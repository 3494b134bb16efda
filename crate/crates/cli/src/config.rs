//! Run configuration.
//!
//! A TOML file holds a `[setup]` table and an optional `[grid]` table; every
//! key can be overridden by the flag of the same name (underscores become
//! dashes). Keys, units and defaults:
//!
//! | key | unit | default |
//! |---|---|---|
//! | `setup.lp` | 1 | 0 |
//! | `setup.mp` | 1 | 0 |
//! | `setup.w0_um` | µm | 50 |
//! | `setup.lambda_p_nm` | nm | 354.7 |
//! | `setup.crystal_mm` | mm | 2 |
//! | `setup.geometry` | `single`, `gap` or `dove` | `single` |
//! | `setup.d_cm` | cm, gap geometry only | 0 |
//! | `setup.theta` | rad, dove geometry only | 0 |
//! | `setup.dispersion` | `bbo-air`, `vacuum` or `manual` | `bbo-air` |
//! | `setup.delta_n` | 1, manual dispersion only | |
//! | `setup.envelope` | `sinc` or `double-gauss` | `sinc` |
//! | `setup.alpha` | 1, double-gauss only | 0.65 |
//! | `grid.n_radial` | 1 | 256 |
//! | `grid.n_phi` | 1 | 1024 |
//! | `grid.q_max_rel` | fraction of the signal wavenumber in air | 0.08 |
//! | `grid.n_half_width` | 1 | 40 |

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Deserialize;
use toml::Spanned;

use oampdc::grid::GridSpec;
use oampdc::setup::{
    DispersionModel, Envelope, Geometry, GeometryKind, OpticalSetup, PumpBeam, DOUBLE_GAUSS_ALPHA,
};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum GeometryName {
    Single,
    Gap,
    Dove,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DispersionName {
    BboAir,
    Vacuum,
    Manual,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum EnvelopeName {
    Sinc,
    DoubleGauss,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    setup: SetupTable,
    #[serde(default)]
    grid: GridTable,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SetupTable {
    lp: Option<Spanned<i32>>,
    mp: Option<Spanned<u32>>,
    w0_um: Option<Spanned<f64>>,
    lambda_p_nm: Option<Spanned<f64>>,
    crystal_mm: Option<Spanned<f64>>,
    geometry: Option<Spanned<GeometryName>>,
    d_cm: Option<Spanned<f64>>,
    theta: Option<Spanned<f64>>,
    dispersion: Option<Spanned<DispersionName>>,
    delta_n: Option<Spanned<f64>>,
    envelope: Option<Spanned<EnvelopeName>>,
    alpha: Option<Spanned<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridTable {
    n_radial: Option<Spanned<usize>>,
    n_phi: Option<Spanned<usize>>,
    q_max_rel: Option<Spanned<f64>>,
    n_half_width: Option<Spanned<i64>>,
}

/// Where a value came from, for error messages.
#[derive(Clone, Debug)]
pub enum Origin {
    Default,
    Flag(&'static str),
    Line { path: PathBuf, line: usize, column: usize },
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Default => write!(f, "default"),
            Origin::Flag(name) => write!(f, "flag --{name}"),
            Origin::Line { path, line, column } => write!(f, "{}:{line}:{column}", path.display()),
        }
    }
}

#[derive(Args, Clone, Debug, Default)]
pub struct SetupArgs {
    /// TOML configuration file with [setup] and [grid] tables.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Pump OAM charge l_p.
    #[arg(long, allow_hyphen_values = true)]
    pub lp: Option<i32>,
    /// Pump radial index m_p.
    #[arg(long)]
    pub mp: Option<u32>,
    /// Pump waist [µm].
    #[arg(long)]
    pub w0_um: Option<f64>,
    /// Pump vacuum wavelength [nm].
    #[arg(long)]
    pub lambda_p_nm: Option<f64>,
    /// Length of each crystal [mm].
    #[arg(long)]
    pub crystal_mm: Option<f64>,
    #[arg(long, value_enum)]
    pub geometry: Option<GeometryName>,
    /// Air gap between the crystals [cm].
    #[arg(long)]
    pub d_cm: Option<f64>,
    /// Dove prism rotation [rad].
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<f64>,
    #[arg(long, value_enum)]
    pub dispersion: Option<DispersionName>,
    /// Index difference n_p − n_s in air for the manual dispersion model.
    #[arg(long, allow_hyphen_values = true)]
    pub delta_n: Option<f64>,
    #[arg(long, value_enum)]
    pub envelope: Option<EnvelopeName>,
    /// Width factor of the double-Gaussian envelope.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Radial Gauss-Legendre nodes.
    #[arg(long)]
    pub n_radial: Option<usize>,
    /// Azimuthal samples.
    #[arg(long)]
    pub n_phi: Option<usize>,
    /// Radial cutoff as a fraction of the signal wavenumber in air.
    #[arg(long)]
    pub q_max_rel: Option<f64>,
    /// Initial OAM half-width around l_p/2; widened automatically when the tail leaks.
    #[arg(long)]
    pub n_half_width: Option<i64>,
}

#[derive(Clone, Debug)]
struct Value<T> {
    v: T,
    origin: Origin,
    explicit: bool,
}

struct Source<'a> {
    path: Option<&'a Path>,
    text: &'a str,
}

impl Source<'_> {
    fn origin(&self, span: std::ops::Range<usize>) -> Origin {
        let before = &self.text[..span.start.min(self.text.len())];
        let line = before.matches('\n').count() + 1;
        let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        Origin::Line { path: self.path.map(Path::to_path_buf).unwrap_or_default(), line, column }
    }

    fn pick<T: Clone>(&self, flag: Option<T>, name: &'static str, file: Option<Spanned<T>>, default: T) -> Value<T> {
        match (flag, file) {
            (Some(v), _) => Value { v, origin: Origin::Flag(name), explicit: true },
            (None, Some(s)) => Value { origin: self.origin(s.span()), v: s.into_inner(), explicit: true },
            (None, None) => Value { v: default, origin: Origin::Default, explicit: false },
        }
    }
}

fn invalid(origin: &Origin, msg: impl Into<String>) -> CliError {
    CliError::Invalid { origin: origin.to_string(), msg: msg.into() }
}

fn positive(value: &Value<f64>, what: &str) -> Result<f64, CliError> {
    if value.v > 0.0 && value.v.is_finite() {
        Ok(value.v)
    } else {
        Err(invalid(&value.origin, format!("{what} must be positive and finite, got {}", value.v)))
    }
}

/// Setup and grid after merging defaults, the config file and flags.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub setup: OpticalSetup,
    pub grid: GridSpec,
    /// Whether the geometry was given explicitly.
    pub geometry_explicit: bool,
}

impl SetupArgs {
    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let (text, file) = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|source| CliError::Read { path: path.clone(), source })?;
                let file: ConfigFile = toml::from_str(&text)
                    .map_err(|e| CliError::Parse { path: path.clone(), message: e.to_string() })?;
                (text, file)
            }
            None => (String::new(), ConfigFile::default()),
        };
        let src = Source { path: self.config.as_deref(), text: &text };
        let s = file.setup;
        let g = file.grid;

        let lp = src.pick(self.lp, "lp", s.lp, 0);
        let mp = src.pick(self.mp, "mp", s.mp, 0);
        let w0 = src.pick(self.w0_um, "w0-um", s.w0_um, 50.0);
        let lambda_p = src.pick(self.lambda_p_nm, "lambda-p-nm", s.lambda_p_nm, 354.7);
        let crystal = src.pick(self.crystal_mm, "crystal-mm", s.crystal_mm, 2.0);
        let geometry = src.pick(self.geometry, "geometry", s.geometry, GeometryName::Single);
        let d_cm = src.pick(self.d_cm, "d-cm", s.d_cm, 0.0);
        let theta = src.pick(self.theta, "theta", s.theta, 0.0);
        let dispersion = src.pick(self.dispersion, "dispersion", s.dispersion, DispersionName::BboAir);
        let delta_n = src.pick(self.delta_n.map(Some), "delta-n", s.delta_n.map(|v| lift(v)), None);
        let envelope = src.pick(self.envelope, "envelope", s.envelope, EnvelopeName::Sinc);
        let alpha = src.pick(self.alpha, "alpha", s.alpha, DOUBLE_GAUSS_ALPHA);
        let defaults = GridSpec::default();
        let n_radial = src.pick(self.n_radial, "n-radial", g.n_radial, defaults.n_radial);
        let n_phi = src.pick(self.n_phi, "n-phi", g.n_phi, defaults.n_phi);
        let q_max_rel = src.pick(self.q_max_rel, "q-max-rel", g.q_max_rel, defaults.q_max_rel);
        let n_half_width = src.pick(self.n_half_width, "n-half-width", g.n_half_width, defaults.n_half_width);

        let kind = match geometry.v {
            GeometryName::Single => GeometryKind::SingleCrystal,
            GeometryName::Gap => {
                if !(d_cm.v >= 0.0 && d_cm.v.is_finite()) {
                    return Err(invalid(&d_cm.origin, format!("d_cm must be non-negative, got {}", d_cm.v)));
                }
                GeometryKind::TwoCrystalGap { d: si(d_cm.v, -2) }
            }
            GeometryName::Dove => {
                if !theta.v.is_finite() {
                    return Err(invalid(&theta.origin, "theta must be finite"));
                }
                GeometryKind::CompensatedDove { theta: theta.v }
            }
        };
        if d_cm.explicit && geometry.v != GeometryName::Gap {
            return Err(invalid(&d_cm.origin, "d_cm applies to the gap geometry only"));
        }
        if theta.explicit && geometry.v != GeometryName::Dove {
            return Err(invalid(&theta.origin, "theta applies to the dove geometry only"));
        }
        let model = match (dispersion.v, delta_n.v) {
            (DispersionName::Manual, Some(dn)) if dn.is_finite() => DispersionModel::Manual { delta_n: dn },
            (DispersionName::Manual, Some(dn)) => {
                return Err(invalid(&delta_n.origin, format!("delta_n must be finite, got {dn}")))
            }
            (DispersionName::Manual, None) => {
                return Err(invalid(&dispersion.origin, "manual dispersion needs delta_n"))
            }
            (_, Some(_)) => return Err(invalid(&delta_n.origin, "delta_n applies to the manual dispersion model only")),
            (DispersionName::BboAir, None) => DispersionModel::BboAir,
            (DispersionName::Vacuum, None) => DispersionModel::Vacuum,
        };
        let envelope_v = match envelope.v {
            EnvelopeName::Sinc => {
                if alpha.explicit {
                    return Err(invalid(&alpha.origin, "alpha applies to the double-gauss envelope only"));
                }
                Envelope::Sinc
            }
            EnvelopeName::DoubleGauss => Envelope::DoubleGauss { alpha: positive(&alpha, "alpha")? },
        };

        let pump = PumpBeam::new(lp.v, mp.v, si(positive(&w0, "w0_um")?, -6), si(positive(&lambda_p, "lambda_p_nm")?, -9))?;
        let geom = Geometry::new(kind, si(positive(&crystal, "crystal_mm")?, -3))?;
        let setup = OpticalSetup::new(pump, geom, model)
            .map_err(|e| invalid(&lambda_p.origin, e.to_string()))?
            .with_envelope(envelope_v);

        if n_radial.v < 2 {
            return Err(invalid(&n_radial.origin, format!("n_radial must be at least 2, got {}", n_radial.v)));
        }
        if n_phi.v < 8 {
            return Err(invalid(&n_phi.origin, format!("n_phi must be at least 8, got {}", n_phi.v)));
        }
        if !(q_max_rel.v > 0.0 && q_max_rel.v < 1.0) {
            return Err(invalid(&q_max_rel.origin, format!("q_max_rel must lie in (0, 1), got {}", q_max_rel.v)));
        }
        if n_half_width.v < 0 {
            return Err(invalid(&n_half_width.origin, format!("n_half_width must be non-negative, got {}", n_half_width.v)));
        }
        let grid = GridSpec { n_radial: n_radial.v, n_phi: n_phi.v, q_max_rel: q_max_rel.v, n_half_width: n_half_width.v };
        Ok(Resolved { setup, grid, geometry_explicit: geometry.explicit })
    }
}

/// `v`·10^exp rounded as the decimal literal would be, so that 354.7 nm equals 354.7e-9 m.
pub fn si(v: f64, exp: i32) -> f64 {
    format!("{v}e{exp}").parse().expect("finite float")
}

fn lift(v: Spanned<f64>) -> Spanned<Option<f64>> {
    Spanned::new(v.span(), Some(*v.get_ref()))
}
