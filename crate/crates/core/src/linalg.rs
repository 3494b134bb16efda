//! Thin adapter between ndarray storage and faer decompositions.

use faer::Mat;
use ndarray::Array2;
use num_complex::Complex64 as C64;

pub struct Svd {
    pub u: Array2<C64>,
    pub s: Vec<f64>,
    pub v: Array2<C64>,
}

fn to_faer(m: &Array2<C64>) -> Mat<C64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]])
}

fn from_faer(m: faer::MatRef<'_, C64>) -> Array2<C64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Thin SVD M = U·diag(s)·V^†, singular values in non-increasing order.
pub fn svd(m: &Array2<C64>) -> Option<Svd> {
    let a = to_faer(m);
    let d = a.thin_svd().ok()?;
    let s = d.S().column_vector().iter().map(|x| x.re).collect();
    Some(Svd {
        u: from_faer(d.U()),
        s,
        v: from_faer(d.V()),
    })
}

pub fn singular_values(m: &Array2<C64>) -> Option<Vec<f64>> {
    to_faer(m).singular_values().ok()
}

/// Matrix product a·b.
pub fn matmul(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let p = to_faer(a) * to_faer(b);
    from_faer(p.as_ref())
}
