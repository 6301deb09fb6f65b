//! Dense complex linear-algebra helpers shared by the manifold, objective and
//! channel code.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Real trace inner product `Re Tr(Aᴴ B)`.
pub fn re_inner(a: &CMat, b: &CMat) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.re * y.re + x.im * y.im)
        .sum()
}

pub fn fro_norm_sq(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

pub fn fro_norm(a: &CMat) -> f64 {
    fro_norm_sq(a).sqrt()
}

/// Entrywise maximum modulus.
pub fn max_abs(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn ensure_shape(what: &str, a: &CMat, shape: (usize, usize)) -> Result<()> {
    if a.shape() != shape {
        return Err(Error::Shape(format!(
            "{what}: expected {}x{}, got {}x{}",
            shape.0,
            shape.1,
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

pub fn ensure_same_shape(what: &str, a: &CMat, b: &CMat) -> Result<()> {
    ensure_shape(what, b, a.shape())
}

pub fn all_finite(a: &CMat) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// `(A + Aᵀ)/2` with the plain (non-conjugating) transpose.
pub fn sym(a: &CMat) -> CMat {
    (a + a.transpose()) * C64::new(0.5, 0.0)
}

/// `(A + Aᴴ)/2`.
pub fn herm(a: &CMat) -> CMat {
    (a + a.adjoint()) * C64::new(0.5, 0.0)
}

/// `‖A − Aᵀ‖_F`.
pub fn symmetry_residual(a: &CMat) -> f64 {
    fro_norm(&(a - a.transpose()))
}

/// `‖A Aᴴ − I‖_F`.
pub fn unitarity_residual(a: &CMat) -> f64 {
    let n = a.nrows();
    fro_norm(&(a * a.adjoint() - identity(n)))
}

/// Products at least this large in every dimension go through the blocked
/// GEMM kernel; smaller ones use the plain nalgebra loops.
const GEMM_MIN_DIM: usize = 16;

/// `A B`, using a cache-blocked complex GEMM for large operands.
pub fn matmul(a: &CMat, b: &CMat) -> CMat {
    assert_eq!(a.ncols(), b.nrows(), "matmul: inner dimensions differ");
    let (m, k, n) = (a.nrows(), a.ncols(), b.ncols());
    if m.min(k).min(n) < GEMM_MIN_DIM {
        return a * b;
    }
    let mut c = CMat::zeros(m, n);
    // SAFETY: `Complex<f64>` is `repr(C)` with fields (re, im), so it has the
    // layout of `[f64; 2]`. nalgebra stores dense matrices contiguously in
    // column-major order, so element (i, j) sits at offset i + j * nrows.
    unsafe {
        matrixmultiply::zgemm(
            matrixmultiply::CGemmOption::Standard,
            matrixmultiply::CGemmOption::Standard,
            m,
            k,
            n,
            [1.0, 0.0],
            a.as_ptr().cast(),
            1,
            m as isize,
            b.as_ptr().cast(),
            1,
            k as isize,
            [0.0, 0.0],
            c.as_mut_ptr().cast(),
            1,
            m as isize,
        );
    }
    c
}

/// `Aᴴ B`.
pub fn adjoint_mul(a: &CMat, b: &CMat) -> CMat {
    matmul(&a.adjoint(), b)
}

/// Inverse of a nonsingular lower-triangular matrix by 2×2 block recursion,
/// so the bulk of the work runs through GEMM.
fn lower_triangular_inverse(l: &CMat) -> Option<CMat> {
    let n = l.nrows();
    if n <= 2 * GEMM_MIN_DIM {
        return l.solve_lower_triangular(&identity(n));
    }
    let h = n / 2;
    let a_inv = lower_triangular_inverse(&l.view((0, 0), (h, h)).into_owned())?;
    let c_inv = lower_triangular_inverse(&l.view((h, h), (n - h, n - h)).into_owned())?;
    let b = l.view((h, 0), (n - h, h)).into_owned();
    let off = -matmul(&matmul(&c_inv, &b), &a_inv);
    let mut inv = CMat::zeros(n, n);
    inv.view_mut((0, 0), (h, h)).copy_from(&a_inv);
    inv.view_mut((h, h), (n - h, n - h)).copy_from(&c_inv);
    inv.view_mut((h, 0), (n - h, h)).copy_from(&off);
    Some(inv)
}

/// One Cholesky-QR pass `Q = A L⁻ᴴ` with `AᴴA = L Lᴴ`, together with the
/// condition number of `L`. Declines when the Gram matrix is not numerically
/// positive definite.
fn cholesky_qr_pass(a: &CMat) -> Option<(CMat, f64)> {
    let l = cholesky(&adjoint_mul(a, a)).ok()?.unpack();
    let (lo, hi) = (0..l.nrows())
        .map(|i| l[(i, i)].re)
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(d), hi.max(d)));
    if !(lo > 0.0) || !hi.is_finite() {
        return None;
    }
    let l_inv = lower_triangular_inverse(&l)?;
    Some((matmul(a, &l_inv.adjoint()), hi / lo))
}

/// Householder Q factor with column phases making diag(R) positive real.
fn householder_qf(a: &CMat) -> CMat {
    let qr = a.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..r.nrows().min(r.ncols()) {
        let d = r[(j, j)];
        let m = d.norm();
        if m > 0.0 {
            let phase = d / m;
            for i in 0..q.nrows() {
                q[(i, j)] *= phase;
            }
        }
    }
    q
}

/// Q factor of a thin QR factorization, with column phases chosen so that the
/// triangular factor has a positive real diagonal. Large inputs use
/// Cholesky-QR (same factor, GEMM-bound): one pass when `A` is nearly
/// orthonormal, a second pass to restore orthogonality when it is moderately
/// conditioned, and Householder otherwise.
pub fn qf(a: &CMat) -> CMat {
    if a.ncols() >= GEMM_MIN_DIM && a.nrows() >= a.ncols() {
        match cholesky_qr_pass(a) {
            Some((q, k)) if k <= 1.5 => return q,
            Some((q, k)) if k <= 1e3 => {
                if let Some((q2, _)) = cholesky_qr_pass(&q) {
                    return q2;
                }
            }
            _ => {}
        }
    }
    householder_qf(a)
}

/// Cholesky factor of a Hermitian positive-definite matrix. The input is
/// symmetrized first so round-off asymmetry does not trip the factorization.
fn cholesky(a: &CMat) -> Result<nalgebra::Cholesky<C64, nalgebra::Dyn>> {
    let not_pd = || Error::Numeric("matrix is not Hermitian positive definite".into());
    let chol = herm(a).cholesky().ok_or_else(not_pd)?;
    // The complex factorization takes square roots of non-positive pivots
    // instead of failing, so check the pivots explicitly.
    let l = chol.l_dirty();
    let pd = (0..a.nrows()).all(|i| {
        let d = l[(i, i)];
        d.re > 0.0 && d.re.is_finite() && d.im.abs() <= 1e-12 * d.re
    });
    if pd {
        Ok(chol)
    } else {
        Err(not_pd())
    }
}

/// Natural log-determinant of a Hermitian positive-definite matrix.
pub fn hpd_logdet(a: &CMat) -> Result<f64> {
    let l = cholesky(a)?;
    let l = l.l_dirty();
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        acc += l[(i, i)].re.ln();
    }
    Ok(2.0 * acc)
}

/// Determinant and inverse of a Hermitian positive-definite matrix.
pub fn hpd_det_inv(a: &CMat) -> Result<(f64, CMat)> {
    let chol = cholesky(a)?;
    let mut logdet = 0.0;
    {
        let l = chol.l_dirty();
        for i in 0..a.nrows() {
            logdet += l[(i, i)].re.ln();
        }
    }
    let inv = chol.inverse();
    Ok(((2.0 * logdet).exp(), herm(&inv)))
}

/// Matrix of i.i.d. circularly-symmetric complex Gaussians with unit variance.
pub fn complex_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(s * re, s * im)
    })
}

/// Block-diagonal assembly of square blocks.
pub fn block_diag(blocks: &[CMat]) -> CMat {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMat::zeros(n, n);
    let mut off = 0;
    for b in blocks {
        let k = b.nrows();
        out.view_mut((off, off), (k, k)).copy_from(b);
        off += k;
    }
    out
}
