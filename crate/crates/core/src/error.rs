use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("wavelength {lambda_nm:.3} nm outside the {model} model range [{lo_nm}, {hi_nm}] nm")]
    ModelRange {
        model: &'static str,
        lambda_nm: f64,
        lo_nm: f64,
        hi_nm: f64,
    },

    #[error("Bessel series for order {order} at |z| = {abs_z:.3e} exceeds the validity radius; shrink the radial grid extent")]
    SeriesOverflow { order: i64, abs_z: f64 },

    #[error("OAM range [{n_min}, {n_max}] leaks {leakage:.3e} of the total weight; try [{suggest_min}, {suggest_max}]")]
    Truncation {
        n_min: i64,
        n_max: i64,
        leakage: f64,
        suggest_min: i64,
        suggest_max: i64,
    },

    #[error("SVD failed to converge for block n = {0}")]
    SvdFailure(i64),

    #[error("degenerate normalization: {0}")]
    DegenerateNormalization(String),

    #[error("angular sensitivity is undefined for l_p = 0: a rotation of an OAM-free pump leaves the output invariant")]
    UndefinedSensitivity,

    #[error("gap d = {d_cm:.4} cm exceeds the resolved range of this grid (max safe d = {max_safe_cm:.4} cm)")]
    Resolution { d_cm: f64, max_safe_cm: f64 },

    #[error("gain fit failed: {0}")]
    Fit(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("cache: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
