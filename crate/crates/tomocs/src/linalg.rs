//! Dense complex linear algebra helpers shared across the crate.
//!
//! Conventions used everywhere:
//! - matrices are `ndarray::Array2<Complex64>` in row-major layout;
//! - `vec_col` stacks columns, so a `d×d` matrix entry `(i, j)` lands at
//!   flat index `i + j·d`;
//! - [`herm_to_coords`] maps an `n×n` Hermitian matrix isometrically onto
//!   `n²` real coordinates (diagonal first, then `√2·Re` / `√2·Im` of the
//!   upper triangle row-major), preserving Frobenius inner products.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64;

use crate::error::{Result, TomocsError};

pub type C64 = Complex64;
pub type CMat = Array2<Complex64>;
pub type CVec = Array1<Complex64>;

pub const ONE: C64 = Complex64::new(1.0, 0.0);
pub const ZERO: C64 = Complex64::new(0.0, 0.0);
pub const I: C64 = Complex64::new(0.0, 1.0);

/// `d×d` complex identity.
pub fn eye(d: usize) -> CMat {
    Array2::eye(d)
}

/// Conjugate transpose.
pub fn dagger(a: &ArrayView2<C64>) -> CMat {
    a.t().mapv(|z| z.conj())
}

pub fn trace(a: &ArrayView2<C64>) -> C64 {
    a.diag().sum()
}

/// Frobenius inner product `Tr(a† b)`.
pub fn frob_inner(a: &ArrayView2<C64>, b: &ArrayView2<C64>) -> C64 {
    debug_assert_eq!(a.dim(), b.dim());
    let mut acc = ZERO;
    for (x, y) in a.iter().zip(b.iter()) {
        acc += x.conj() * y;
    }
    acc
}

pub fn frob_norm(a: &ArrayView2<C64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &ArrayView2<C64>, b: &ArrayView2<C64>) -> CMat {
    ndarray::linalg::kron(a, b)
}

/// `‖U†U − I‖_∞ ≤ tol`?
pub fn is_unitary(u: &ArrayView2<C64>, tol: f64) -> bool {
    let (r, c) = u.dim();
    if r != c {
        return false;
    }
    let g = dagger(u).dot(u);
    let mut dev: f64 = 0.0;
    for i in 0..r {
        for j in 0..r {
            let target = if i == j { ONE } else { ZERO };
            dev = dev.max((g[[i, j]] - target).norm());
        }
    }
    dev <= tol
}

/// `(a + a†)/2`.
pub fn hermitian_part(a: &ArrayView2<C64>) -> CMat {
    let ad = dagger(a);
    (a.to_owned() + ad).mapv(|z| 0.5 * z)
}

pub fn hermiticity_residual(a: &ArrayView2<C64>) -> f64 {
    let ad = dagger(a);
    frob_norm(&(a.to_owned() - ad).view())
}

/// Eigendecomposition of a Hermitian matrix; eigenvalues ascending,
/// eigenvectors as columns (`a = V diag(λ) V†`).
///
/// `ndarray_linalg` 0.16 forces Fortran layout with a plain axis swap, so
/// for complex row-major input LAPACK factorizes `conj(a)`; conjugating
/// the returned vectors restores the eigenvectors of `a` itself.
pub fn eigh(a: &ArrayView2<C64>) -> Result<(Array1<f64>, CMat)> {
    let (vals, vecs) = a
        .eigh(UPLO::Lower)
        .map_err(|e| TomocsError::Linalg(format!("eigh failed: {e}")))?;
    Ok((vals, vecs.mapv(|z| z.conj())))
}

pub fn min_eigenvalue(a: &ArrayView2<C64>) -> Result<f64> {
    let (vals, _) = eigh(a)?;
    Ok(vals[0])
}

/// Rebuild `V diag(f(λ)) V†` from an eigendecomposition.
pub fn from_eigh(vals: &ArrayView1<f64>, vecs: &ArrayView2<C64>) -> CMat {
    let n = vecs.nrows();
    let mut scaled = vecs.to_owned();
    for (k, mut col) in scaled.columns_mut().into_iter().enumerate() {
        let lam = C64::new(vals[k], 0.0);
        col.map_inplace(|z| *z *= lam);
    }
    let vd = dagger(vecs);
    let mut out = Array2::zeros((n, n));
    ndarray::linalg::general_mat_mul(ONE, &scaled, &vd, ZERO, &mut out);
    out
}

/// Projection of a Hermitian matrix onto the PSD cone (negative
/// eigenvalues clipped to zero).
pub fn psd_clip(a: &ArrayView2<C64>) -> Result<CMat> {
    let (vals, vecs) = eigh(a)?;
    let clipped = vals.mapv(|v| v.max(0.0));
    Ok(from_eigh(&clipped.view(), &vecs.view()))
}

/// Principal square root of a PSD Hermitian matrix, with eigenvalues below
/// zero clipped before the square root.
pub fn sqrtm_psd(a: &ArrayView2<C64>) -> Result<CMat> {
    let (vals, vecs) = eigh(a)?;
    let roots = vals.mapv(|v| v.max(0.0).sqrt());
    Ok(from_eigh(&roots.view(), &vecs.view()))
}

/// Column-stacking vectorization: entry `(i, j)` at index `i + j·d`.
pub fn vec_col(a: &ArrayView2<C64>) -> CVec {
    let (d, _) = a.dim();
    let mut v = Array1::zeros(d * d);
    for j in 0..d {
        for i in 0..d {
            v[i + j * d] = a[[i, j]];
        }
    }
    v
}

/// Inverse of [`vec_col`].
pub fn unvec_col(v: &ArrayView1<C64>, d: usize) -> CMat {
    let mut a = Array2::zeros((d, d));
    for j in 0..d {
        for i in 0..d {
            a[[i, j]] = v[i + j * d];
        }
    }
    a
}

/// Number of real coordinates for an `n×n` Hermitian matrix.
pub fn coord_len(n: usize) -> usize {
    n * n
}

/// Flat offset of the `√2·Re` coordinate of the upper-triangle pair
/// `(i, j)`, `i < j`; the `√2·Im` coordinate follows at `+1`.
pub fn pair_offset(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    let rank = i * (2 * n - i - 1) / 2 + (j - i - 1);
    n + 2 * rank
}

/// Isometric real coordinates of a Hermitian matrix: diagonal entries,
/// then `(√2·Re, √2·Im)` of the upper triangle in row-major order.
pub fn herm_to_coords(h: &ArrayView2<C64>) -> Array1<f64> {
    let n = h.nrows();
    let s = std::f64::consts::SQRT_2;
    let mut c = Array1::zeros(coord_len(n));
    for i in 0..n {
        c[i] = h[[i, i]].re;
    }
    let mut k = n;
    for i in 0..n {
        for j in (i + 1)..n {
            c[k] = s * h[[i, j]].re;
            c[k + 1] = s * h[[i, j]].im;
            k += 2;
        }
    }
    c
}

/// Inverse of [`herm_to_coords`].
pub fn coords_to_herm(c: &ArrayView1<f64>, n: usize) -> CMat {
    let inv_s = std::f64::consts::FRAC_1_SQRT_2;
    let mut h = Array2::zeros((n, n));
    for i in 0..n {
        h[[i, i]] = C64::new(c[i], 0.0);
    }
    let mut k = n;
    for i in 0..n {
        for j in (i + 1)..n {
            let z = C64::new(c[k] * inv_s, c[k + 1] * inv_s);
            h[[i, j]] = z;
            h[[j, i]] = z.conj();
            k += 2;
        }
    }
    h
}
