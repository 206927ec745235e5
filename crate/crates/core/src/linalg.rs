//! Small dense complex linear-algebra kit shared by the estimators.
//!
//! Everything is built on `nalgebra::DMatrix<Complex<f64>>`. The Hermitian
//! factorization is hand-rolled so that pivot magnitudes can be inspected;
//! near-singular pivots are treated as failures and escalated to the caller.

use nalgebra::{DMatrix, SymmetricEigen, SVD};
use num_complex::Complex;

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// `Y Y^H` computed through real matrix products.
///
/// `Re = Yr Yr^T + Yi Yi^T` and `Im = C - C^T` with `C = Yi Yr^T`, which is
/// exactly Hermitian by construction and far faster than a generic complex
/// product for long frames.
pub fn gram(y: &CMat) -> CMat {
    let re = y.map(|z| z.re);
    let im = y.map(|z| z.im);
    let real = &re * re.transpose() + &im * im.transpose();
    let cross = &im * re.transpose();
    let n = y.nrows();
    CMat::from_fn(n, n, |i, j| C64::new(real[(i, j)], cross[(i, j)] - cross[(j, i)]))
}

/// Complex product through four real products; same result as `a * b` up to
/// rounding, much faster for large operands.
pub fn matmul(a: &CMat, b: &CMat) -> CMat {
    let (ar, ai) = (a.map(|z| z.re), a.map(|z| z.im));
    let (br, bi) = (b.map(|z| z.re), b.map(|z| z.im));
    let re = &ar * &br - &ai * &bi;
    let im = &ar * &bi + &ai * &br;
    CMat::from_fn(re.nrows(), re.ncols(), |i, j| C64::new(re[(i, j)], im[(i, j)]))
}

/// `A^H B` without materializing the adjoint separately.
pub fn adjoint_mul(a: &CMat, b: &CMat) -> CMat {
    a.ad_mul(b)
}

pub fn hermitian_defect(r: &CMat) -> f64 {
    let n = r.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((r[(i, j)] - r[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Replace `r` by `(r + r^H) / 2`.
pub fn hermitize(r: &mut CMat) {
    let n = r.nrows();
    for i in 0..n {
        r[(i, i)] = C64::new(r[(i, i)].re, 0.0);
        for j in (i + 1)..n {
            let avg = (r[(i, j)] + r[(j, i)].conj()) * 0.5;
            r[(i, j)] = avg;
            r[(j, i)] = avg.conj();
        }
    }
}

pub fn trace_re(r: &CMat) -> f64 {
    (0..r.nrows().min(r.ncols())).map(|i| r[(i, i)].re).sum()
}

/// `||a - b||_F / ||b||_F`, falling back to the absolute error when `b = 0`.
pub fn rel_frobenius(a: &CMat, b: &CMat) -> f64 {
    let diff = (a - b).norm();
    let scale = b.norm();
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Clip negative eigenvalues of a Hermitian matrix to zero.
pub fn psd_floor(r: &CMat) -> CMat {
    let mut sym = r.clone();
    hermitize(&mut sym);
    // Already PSD: Cholesky of a slightly shifted copy succeeds.
    let shift = 1e-12 * trace_re(&sym).abs().max(f64::MIN_POSITIVE) / sym.nrows().max(1) as f64;
    let mut shifted = sym.clone();
    for i in 0..shifted.nrows() {
        shifted[(i, i)] += shift;
    }
    if HermitianFactor::new(&shifted, 0.0).is_some() {
        return sym;
    }
    let eig = SymmetricEigen::new(sym);
    let vals = eig.eigenvalues.map(|v| C64::new(v.max(0.0), 0.0));
    let v = &eig.eigenvectors;
    let mut out = v * CMat::from_diagonal(&vals) * v.adjoint();
    hermitize(&mut out);
    out
}

/// `L L^H` factorization of a Hermitian positive definite matrix.
#[derive(Clone, Debug)]
pub struct HermitianFactor {
    lower: CMat,
}

impl HermitianFactor {
    /// Fails when a pivot drops to or below `rel_pivot_tol * max_i a_ii`.
    pub fn new(a: &CMat, rel_pivot_tol: f64) -> Option<Self> {
        let n = a.nrows();
        if n != a.ncols() {
            return None;
        }
        let max_diag = (0..n).map(|i| a[(i, i)].re).fold(0.0f64, f64::max);
        let floor = rel_pivot_tol * max_diag;
        let mut l = CMat::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)].re;
            for p in 0..j {
                d -= l[(j, p)].norm_sqr();
            }
            if !(d > floor) || !d.is_finite() {
                return None;
            }
            let pivot = d.sqrt();
            l[(j, j)] = C64::new(pivot, 0.0);
            for i in (j + 1)..n {
                let mut acc = a[(i, j)];
                for p in 0..j {
                    acc -= l[(i, p)] * l[(j, p)].conj();
                }
                l[(i, j)] = acc / pivot;
            }
        }
        Some(Self { lower: l })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    /// Ratio of the largest to the smallest squared pivot.
    pub fn pivot_condition(&self) -> f64 {
        let d = self.lower.diagonal();
        let (lo, hi) = d.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), z| {
            (lo.min(z.re), hi.max(z.re))
        });
        if self.dim() == 0 {
            1.0
        } else {
            (hi / lo).powi(2)
        }
    }

    pub fn solve(&self, b: &CMat) -> CMat {
        let n = self.dim();
        let l = &self.lower;
        let mut x = b.clone();
        for c in 0..x.ncols() {
            // L z = b
            for i in 0..n {
                let mut acc = x[(i, c)];
                for p in 0..i {
                    acc -= l[(i, p)] * x[(p, c)];
                }
                x[(i, c)] = acc / l[(i, i)].re;
            }
            // L^H x = z
            for i in (0..n).rev() {
                let mut acc = x[(i, c)];
                for p in (i + 1)..n {
                    acc -= l[(p, i)].conj() * x[(p, c)];
                }
                x[(i, c)] = acc / l[(i, i)].re;
            }
        }
        x
    }
}

/// Orthonormal basis of the numerical column space of `a`.
pub fn column_basis(a: &CMat, rel_tol: f64) -> CMat {
    let svd = SVD::new(a.clone(), true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let keep: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s > rel_tol * smax)
        .map(|(i, _)| i)
        .collect();
    CMat::from_fn(a.nrows(), keep.len(), |i, j| u[(i, keep[j])])
}

/// Largest principal angle (radians) between `col(a)` and its projection on
/// `col(b)`. Zero iff `col(a)` is contained in `col(b)`.
///
/// Computed from sines, which stay accurate for tiny angles where the cosine
/// route saturates at 1.
pub fn max_principal_angle(a: &CMat, b: &CMat) -> f64 {
    let qa = column_basis(a, 1e-12);
    let qb = column_basis(b, 1e-12);
    let residual = &qa - &qb * qb.ad_mul(&qa);
    let svd = SVD::new(residual, false, false);
    let s = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    s.min(1.0).asin()
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}
