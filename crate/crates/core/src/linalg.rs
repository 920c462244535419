//! Dense complex matrix helpers.
//!
//! Storage is `nalgebra::DMatrix<Complex64>` (column-major). Large products go
//! through `matrixmultiply::zgemm`, which is several times faster than the
//! generic complex kernel in nalgebra.

use matrixmultiply::CGemmOption;
use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Operand orientation for [`matmul`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    /// As stored.
    N,
    /// Conjugate transpose.
    H,
}

/// `op(a) * op(b)`.
pub fn matmul(a: &CMat, op_a: Op, b: &CMat, op_b: Op) -> CMat {
    // zgemm has no conjugation flag; `H` operands are conjugated into a
    // scratch copy and read with transposed strides.
    let a_conj;
    let a_src = match op_a {
        Op::N => a,
        Op::H => {
            a_conj = a.map(|z| z.conj());
            &a_conj
        }
    };
    let b_conj;
    let b_src = match op_b {
        Op::N => b,
        Op::H => {
            b_conj = b.map(|z| z.conj());
            &b_conj
        }
    };
    let (m, k, rsa, csa) = view(a, op_a);
    let (kb, n, rsb, csb) = view(b, op_b);
    assert_eq!(k, kb, "inner dimensions differ: {k} vs {kb}");
    let mut c = CMat::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return c;
    }
    // SAFETY: Complex64 is #[repr(C)] { re, im }, layout-identical to [f64; 2].
    // Strides describe the column-major buffers of `a_src`, `b_src` and `c`,
    // whose extents were checked above.
    unsafe {
        matrixmultiply::zgemm(
            CGemmOption::Standard,
            CGemmOption::Standard,
            m,
            k,
            n,
            [1.0, 0.0],
            a_src.as_ptr() as *const [f64; 2],
            rsa,
            csa,
            b_src.as_ptr() as *const [f64; 2],
            rsb,
            csb,
            [0.0, 0.0],
            c.as_mut_ptr() as *mut [f64; 2],
            1,
            m as isize,
        );
    }
    c
}

fn view(a: &CMat, op: Op) -> (usize, usize, isize, isize) {
    let (r, c) = a.shape();
    match op {
        Op::N => (r, c, 1, r as isize),
        Op::H => (c, r, r as isize, 1),
    }
}

/// Cholesky factor of a Hermitian positive-definite matrix.
///
/// nalgebra takes complex square roots of the pivots, so an indefinite
/// input still factors; the pivots are checked to be real and positive.
pub fn hpd_cholesky(a: CMat, context: &str) -> Result<nalgebra::Cholesky<Complex64, nalgebra::Dyn>> {
    let fail = || Error::NotPositiveDefinite(context.to_string());
    let chol = nalgebra::Cholesky::new(a).ok_or_else(fail)?;
    let l = chol.l_dirty();
    for i in 0..l.nrows() {
        let d = l[(i, i)];
        if !(d.re > 0.0 && d.re.is_finite()) || d.im.abs() > 1e-8 * d.re {
            return Err(fail());
        }
    }
    Ok(chol)
}

/// Inverse of a Hermitian positive-definite matrix via Cholesky.
pub fn hpd_inverse(a: CMat, context: &str) -> Result<CMat> {
    Ok(hpd_cholesky(a, context)?.inverse())
}

/// Solve `a x = b` for Hermitian positive-definite `a`.
pub fn hpd_solve(a: CMat, b: &CMat, context: &str) -> Result<CMat> {
    Ok(hpd_cholesky(a, context)?.solve(b))
}

/// Largest entry-wise deviation from Hermitian symmetry.
pub fn hermitian_defect(a: &CMat) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn frobenius_sq(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// Squared 2-norm of every row.
pub fn row_energies(a: &CMat) -> Vec<f64> {
    let mut e = vec![0.0; a.nrows()];
    for j in 0..a.ncols() {
        for (i, acc) in e.iter_mut().enumerate() {
            *acc += a[(i, j)].norm_sqr();
        }
    }
    e
}

/// Trace of `a * b` without forming the product.
pub fn trace_of_product(a: &CMat, b: &CMat) -> Complex64 {
    assert_eq!(a.ncols(), b.nrows());
    assert_eq!(a.nrows(), b.ncols());
    let mut acc = ZERO;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(rows: usize, cols: usize, seed: f64) -> CMat {
        CMat::from_fn(rows, cols, |i, j| {
            let x = (i as f64 * 1.3 + j as f64 * 0.7 + seed).sin();
            let y = (i as f64 * 0.4 - j as f64 * 1.9 + seed).cos();
            Complex64::new(x, y)
        })
    }

    #[test]
    fn matmul_matches_nalgebra_for_all_orientations() {
        let a = sample(5, 3, 0.1);
        let b = sample(3, 4, 0.2);
        let c = sample(5, 4, 0.3);
        let d = sample(4, 3, 0.4);
        let cases = [
            (matmul(&a, Op::N, &b, Op::N), &a * &b),
            (matmul(&a, Op::H, &c, Op::N), a.adjoint() * &c),
            (matmul(&a, Op::N, &d, Op::H), &a * d.adjoint()),
            (matmul(&b, Op::H, &a, Op::H), b.adjoint() * a.adjoint()),
        ];
        for (fast, slow) in cases {
            assert!((fast - slow).norm() < 1e-12);
        }
    }

    #[test]
    fn matmul_handles_empty_inner_dimension() {
        let a = CMat::zeros(3, 0);
        let b = CMat::zeros(0, 2);
        let c = matmul(&a, Op::N, &b, Op::N);
        assert_eq!(c.shape(), (3, 2));
        assert!(c.iter().all(|z| *z == ZERO));
    }

    #[test]
    fn hpd_inverse_rejects_indefinite() {
        let mut a = CMat::identity(2, 2);
        a[(1, 1)] = Complex64::new(-1.0, 0.0);
        assert!(hpd_inverse(a, "test").is_err());
    }

    #[test]
    fn trace_of_product_matches_dense() {
        let a = sample(4, 3, 0.5);
        let b = sample(3, 4, 0.6);
        let t = trace_of_product(&a, &b);
        assert!((t - (&a * &b).trace()).norm() < 1e-12);
    }
}
