//! Physical parameters of the pump, the crystals and the dispersion model.
//!
//! All lengths are in metres and all wavenumbers in 1/m. The degenerate
//! type-I configuration is assumed throughout, so the signal and idler
//! wavelength is always twice the pump wavelength.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Laguerre-Gaussian pump profile.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PumpBeam {
    pub l_p: i32,
    pub m_p: u32,
    /// Beam waist [m].
    pub w0: f64,
    /// Vacuum wavelength [m].
    pub lambda_p: f64,
}

impl PumpBeam {
    pub fn new(l_p: i32, m_p: u32, w0: f64, lambda_p: f64) -> Result<Self> {
        if !(w0 > 0.0 && w0.is_finite()) {
            return Err(Error::Config(format!("w0 must be positive, got {w0}")));
        }
        if !(lambda_p > 0.0 && lambda_p.is_finite()) {
            return Err(Error::Config(format!("lambda_p must be positive, got {lambda_p}")));
        }
        Ok(Self { l_p, m_p, w0, lambda_p })
    }

    /// Signal (and idler) vacuum wavelength.
    pub fn lambda_s(&self) -> f64 {
        2.0 * self.lambda_p
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum GeometryKind {
    SingleCrystal,
    /// Two identical crystals separated by an air gap `d` [m].
    TwoCrystalGap { d: f64 },
    /// Compensated two-crystal interferometer with a Dove prism rotated by `theta` [rad].
    CompensatedDove { theta: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub kind: GeometryKind,
    /// Length of each crystal [m].
    pub length: f64,
}

impl Geometry {
    pub fn new(kind: GeometryKind, length: f64) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::Config(format!("crystal length must be positive, got {length}")));
        }
        match kind {
            GeometryKind::TwoCrystalGap { d } if !(d >= 0.0 && d.is_finite()) => {
                Err(Error::Config(format!("gap d must be non-negative, got {d}")))
            }
            GeometryKind::CompensatedDove { theta } if !theta.is_finite() => {
                Err(Error::Config("theta must be finite".into()))
            }
            _ => Ok(Self { kind, length }),
        }
    }

    pub fn gap(&self) -> f64 {
        match self.kind {
            GeometryKind::TwoCrystalGap { d } => d,
            _ => 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum DispersionModel {
    /// BBO ordinary index in the crystal, Edlén standard air outside.
    BboAir,
    /// BBO in the crystal, vacuum outside.
    Vacuum,
    /// BBO in the crystal, Edlén air outside, with Δn replaced by the given value.
    Manual { delta_n: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispersionTable {
    pub n_s_crystal: f64,
    pub n_p_air: f64,
    pub n_s_air: f64,
    pub n_i_air: f64,
    /// n_p_air − n_s_air.
    pub delta_n: f64,
    pub k_p: f64,
    /// Signal wavenumber inside the crystal.
    pub k_s: f64,
    pub k_s_air: f64,
    pub lambda_s: f64,
}

/// BBO ordinary-ray index (Kato 1986 Sellmeier fit), λ in metres.
///
/// n_o² = 2.7405 + 0.0184/(λ² − 0.0179) − 0.0155 λ², λ in µm, valid 0.19–3.5 µm.
pub fn bbo_ordinary_index(lambda: f64) -> Result<f64> {
    let um = lambda * 1e6;
    if !(0.19..=3.5).contains(&um) {
        return Err(Error::ModelRange {
            model: "BBO Sellmeier",
            lambda_nm: lambda * 1e9,
            lo_nm: 190.0,
            hi_nm: 3500.0,
        });
    }
    let l2 = um * um;
    Ok((2.7405 + 0.0184 / (l2 - 0.0179) - 0.0155 * l2).sqrt())
}

/// Refractive index of dry standard air (15 °C, 101.325 kPa) from Edlén's 1966 dispersion formula.
///
/// (n − 1)·10⁸ = 8342.13 + 2406030/(130 − σ²) + 15997/(38.9 − σ²), σ = 1/λ in µm⁻¹, valid 0.2–2 µm.
pub fn edlen_air_index(lambda: f64) -> Result<f64> {
    let um = lambda * 1e6;
    if !(0.2..=2.0).contains(&um) {
        return Err(Error::ModelRange {
            model: "Edlén air",
            lambda_nm: lambda * 1e9,
            lo_nm: 200.0,
            hi_nm: 2000.0,
        });
    }
    let s2 = 1.0 / (um * um);
    Ok(1.0 + (8342.13 + 2_406_030.0 / (130.0 - s2) + 15_997.0 / (38.9 - s2)) * 1e-8)
}

pub fn build_dispersion(pump: &PumpBeam, model: DispersionModel) -> Result<DispersionTable> {
    let lp = pump.lambda_p;
    if !(0.2e-6..=2.5e-6).contains(&lp) {
        return Err(Error::ModelRange {
            model: "BBO transparency",
            lambda_nm: lp * 1e9,
            lo_nm: 200.0,
            hi_nm: 2500.0,
        });
    }
    let lambda_s = pump.lambda_s();
    let n_s_crystal = bbo_ordinary_index(lambda_s)?;
    let (n_p_air, n_s_air, delta_n) = match model {
        DispersionModel::Vacuum => (1.0, 1.0, 0.0),
        DispersionModel::BboAir => {
            let np = edlen_air_index(lp)?;
            let ns = edlen_air_index(lambda_s)?;
            (np, ns, np - ns)
        }
        DispersionModel::Manual { delta_n } => {
            if !delta_n.is_finite() {
                return Err(Error::Config("delta_n_manual must be finite".into()));
            }
            let ns = edlen_air_index(lambda_s)?;
            (ns + delta_n, ns, delta_n)
        }
    };
    let k_s = 2.0 * PI * n_s_crystal / lambda_s;
    Ok(DispersionTable {
        n_s_crystal,
        n_p_air,
        n_s_air,
        n_i_air: n_s_air,
        delta_n,
        k_p: 2.0 * k_s,
        k_s,
        k_s_air: 2.0 * PI * n_s_air / lambda_s,
        lambda_s,
    })
}

/// Longitudinal envelope used in g_z.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Envelope {
    Sinc,
    /// sinc(X) replaced by exp(−α² X).
    DoubleGauss { alpha: f64 },
}

pub const DOUBLE_GAUSS_ALPHA: f64 = 0.65;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpticalSetup {
    pub pump: PumpBeam,
    pub geometry: Geometry,
    pub model: DispersionModel,
    pub dispersion: DispersionTable,
    pub envelope: Envelope,
}

impl OpticalSetup {
    pub fn new(pump: PumpBeam, geometry: Geometry, model: DispersionModel) -> Result<Self> {
        let dispersion = build_dispersion(&pump, model)?;
        Ok(Self {
            pump,
            geometry,
            model,
            dispersion,
            envelope: Envelope::Sinc,
        })
    }

    /// The configuration used throughout the reference calculations:
    /// λ_p = 354.7 nm, w0 = 50 µm, two 2 mm BBO crystals, standard air.
    pub fn reference(l_p: i32, m_p: u32, kind: GeometryKind) -> Self {
        let pump = PumpBeam::new(l_p, m_p, 50e-6, 354.7e-9).expect("reference pump");
        let geometry = Geometry::new(kind, 2e-3).expect("reference geometry");
        Self::new(pump, geometry, DispersionModel::BboAir).expect("reference dispersion")
    }

    pub fn with_geometry(&self, kind: GeometryKind) -> Result<Self> {
        Ok(Self {
            geometry: Geometry::new(kind, self.geometry.length)?,
            ..*self
        })
    }

    pub fn with_envelope(&self, envelope: Envelope) -> Self {
        Self { envelope, ..*self }
    }

    pub fn with_pump_modes(&self, l_p: i32, m_p: u32) -> Self {
        Self {
            pump: PumpBeam { l_p, m_p, ..self.pump },
            ..*self
        }
    }

    /// Phase acquired in the air gap, Δn k_s d / n_s = 2π Δn d / λ_s.
    pub fn gap_phase(&self, d: f64) -> f64 {
        2.0 * PI * self.dispersion.delta_n * d / self.dispersion.lambda_s
    }

    /// Paraxial external angle Θ = q / k_s_air.
    pub fn external_angle(&self, q: f64) -> f64 {
        q / self.dispersion.k_s_air
    }

    pub fn wavenumber_from_angle(&self, theta: f64) -> f64 {
        theta * self.dispersion.k_s_air
    }
}
