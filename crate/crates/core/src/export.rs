//! CSV output.
//!
//! Every table starts with two header records: column names, then units.
//! Floats are written with 17 significant digits; divergent values appear as
//! `inf`.

use std::io::Write;

use crate::analytic::AnalyticComparison;
use crate::error::{Error, Result};
use crate::interferometer::{ComposedInterferometer, FringeScan};
use crate::metrology::SensitivityCurve;
use crate::schmidt::{IntensityCurve, ModeProfiles, SchmidtSpectrum, WeightedSpectrum};
use crate::setup::OpticalSetup;

#[derive(Clone, Copy, Debug)]
pub enum Field {
    Int(i64),
    Float(f64),
}

impl Field {
    fn render(self) -> String {
        match self {
            Field::Int(v) => v.to_string(),
            Field::Float(v) => format!("{v:.16e}"),
        }
    }
}

/// Writes a table with a name header and a unit header.
pub fn write_table<W: Write>(w: W, columns: &[(&str, &str)], rows: impl IntoIterator<Item = Vec<Field>>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(columns.iter().map(|c| c.0))?;
    out.write_record(columns.iter().map(|c| c.1))?;
    for row in rows {
        if row.len() != columns.len() {
            return Err(Error::Config(format!("row of {} fields for {} columns", row.len(), columns.len())));
        }
        out.write_record(row.into_iter().map(Field::render))?;
    }
    out.flush()?;
    Ok(())
}

use Field::{Float, Int};

/// Columns m, n, lambda, Lambda, Lambda_prime over every retained mode.
pub fn eigenvalues<W: Write>(w: W, spectrum: &SchmidtSpectrum, weighted: &WeightedSpectrum) -> Result<()> {
    if spectrum.n_min != weighted.n_min || spectrum.blocks.len() != weighted.big_lambda.len() {
        return Err(Error::GridMismatch("spectrum and weights cover different OAM ranges".into()));
    }
    let rows = spectrum.blocks.iter().enumerate().flat_map(|(k, b)| {
        b.lambdas.iter().enumerate().map(move |(m, &l)| {
            vec![
                Int(m as i64),
                Int(b.n),
                Float(l),
                Float(weighted.big_lambda[k][m]),
                Float(weighted.lambda_prime[k][m]),
            ]
        })
    });
    write_table(w, &[("m", "1"), ("n", "1"), ("lambda", "1"), ("Lambda", "1"), ("Lambda_prime", "1")], rows)
}

/// Columns q, Theta_rad, N_mean.
pub fn intensity<W: Write>(w: W, curve: &IntensityCurve, setup: &OpticalSetup) -> Result<()> {
    let rows = curve
        .q
        .iter()
        .zip(&curve.n_mean)
        .map(|(&q, &n)| vec![Float(q), Float(setup.external_angle(q)), Float(n)]);
    write_table(w, &[("q", "1/m"), ("Theta_rad", "rad"), ("N_mean", "m^2")], rows)
}

/// Column q, then |u_{mn}(q)|²/q per requested mode.
pub fn mode_profiles<W: Write>(w: W, profiles: &ModeProfiles) -> Result<()> {
    let names: Vec<String> = profiles.profiles.iter().map(|p| format!("m{}_n{}", p.m, p.n)).collect();
    let mut columns = vec![("q", "1/m")];
    columns.extend(names.iter().map(|n| (n.as_str(), "m^2")));
    let rows = (0..profiles.q.len()).map(|i| {
        let mut r = vec![Float(profiles.q[i])];
        r.extend(profiles.profiles.iter().map(|p| Float(p.values[i])));
        r
    });
    write_table(w, &columns, rows)
}

/// Columns d_cm, integral_intensity.
pub fn fringe<W: Write>(w: W, scan: &FringeScan) -> Result<()> {
    let rows = scan.d.iter().zip(&scan.intensity).map(|(&d, &i)| vec![Float(d * 100.0), Float(i)]);
    write_table(w, &[("d_cm", "cm"), ("integral_intensity", "1")], rows)
}

/// Columns m, n, Lambda_SU.
pub fn composed_eigenvalues<W: Write>(w: W, composed: &ComposedInterferometer) -> Result<()> {
    let rows = composed.lambda_su.iter().enumerate().flat_map(|(k, ls)| {
        let n = composed.n_min + k as i64;
        ls.iter().enumerate().map(move |(m, &l)| vec![Int(m as i64), Int(n), Float(l)])
    });
    write_table(w, &[("m", "1"), ("n", "1"), ("Lambda_SU", "1")], rows)
}

/// Columns theta_rad, delta_theta_tf, delta_theta_smt, f_tf, f_smt.
pub fn sensitivity<W: Write>(w: W, curve: &SensitivityCurve) -> Result<()> {
    let rows = (0..curve.theta.len()).map(|i| {
        vec![
            Float(curve.theta[i]),
            Float(curve.delta_theta_tf[i]),
            Float(curve.delta_theta_smt[i]),
            Float(curve.f_tf[i]),
            Float(curve.f_smt[i]),
        ]
    });
    write_table(
        w,
        &[
            ("theta_rad", "rad"),
            ("delta_theta_tf", "rad"),
            ("delta_theta_smt", "rad"),
            ("f_tf", "1"),
            ("f_smt", "1"),
        ],
        rows,
    )
}

/// Columns d_cm, n, Lambda_n_analytic, Lambda_n_numeric.
pub fn analytic<W: Write>(w: W, comparisons: &[AnalyticComparison]) -> Result<()> {
    let rows = comparisons.iter().flat_map(|c| {
        (0..c.analytic.len()).map(move |k| {
            vec![Float(c.d * 100.0), Int(c.n_min + k as i64), Float(c.analytic[k]), Float(c.numeric[k])]
        })
    });
    write_table(
        w,
        &[("d_cm", "cm"), ("n", "1"), ("Lambda_n_analytic", "1"), ("Lambda_n_numeric", "1")],
        rows,
    )
}

/// Scalar results as (key, value, unit) records.
#[derive(Clone, Debug, Default)]
pub struct Report {
    entries: Vec<(String, Field, String)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn float(&mut self, key: &str, value: f64, unit: &str) -> &mut Self {
        self.entries.push((key.into(), Float(value), unit.into()));
        self
    }

    pub fn int(&mut self, key: &str, value: i64, unit: &str) -> &mut Self {
        self.entries.push((key.into(), Int(value), unit.into()));
        self
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.0 == key).map(|e| match e.1 {
            Int(v) => v as f64,
            Float(v) => v,
        })
    }

    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["key", "value", "unit"])?;
        for (k, v, u) in &self.entries {
            out.write_record([k.as_str(), v.render().as_str(), u.as_str()])?;
        }
        out.flush()?;
        Ok(())
    }
}
