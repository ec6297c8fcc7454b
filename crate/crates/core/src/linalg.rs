//! Thin dense linear-algebra layer over `faer`.
//!
//! Everything numeric in the crate goes through these few helpers so the
//! backend stays swappable and call sites speak in `Complex64`.

use faer::linalg::solvers::Solve;
use faer::Mat;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = Mat<Complex64>;
pub type RMat = Mat<f64>;

/// Singular values below this fraction of the largest are dropped from
/// least-squares solutions.
pub const RANK_TOL: f64 = 1e-15;

/// Diagonal similarity `D⁻¹ A D` with power-of-two entries that brings
/// row and column norms close; returns the balanced matrix and `diag(D)`.
/// Eigenvalues are unchanged and the rounding error scales with the
/// balanced norm instead of the raw one.
fn balance<T>(a: &Mat<T>, abs: impl Fn(&T) -> f64, scale: impl Fn(&mut T, f64)) -> (Mat<T>, Vec<f64>)
where
    T: Clone,
{
    const RADIX: f64 = 2.0;
    let n = a.nrows();
    let mut b = a.to_owned();
    let mut d = vec![1.0; n];
    for _ in 0..100 {
        let mut converged = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += abs(&b[(j, i)]);
                    r += abs(&b[(i, j)]);
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let total = c + r;
            let mut f = 1.0;
            let mut g = r / RADIX;
            while c < g {
                f *= RADIX;
                c *= RADIX * RADIX;
                g /= RADIX;
            }
            g = r * RADIX;
            while c >= g {
                f /= RADIX;
                c /= RADIX * RADIX;
                g *= RADIX;
            }
            if (c + r) / f < 0.95 * total {
                converged = false;
                d[i] *= f;
                for j in 0..n {
                    scale(&mut b[(i, j)], 1.0 / f);
                    scale(&mut b[(j, i)], f);
                }
            }
        }
        if converged {
            break;
        }
    }
    (b, d)
}

fn balance_complex(a: &CMat) -> (CMat, Vec<f64>) {
    balance(a, |z| z.re.abs() + z.im.abs(), |z, f| *z *= f)
}

/// Eigenvalues and right eigenvectors (columns) of a complex matrix.
pub fn eig(a: &CMat) -> Result<(Vec<Complex64>, CMat)> {
    if a.nrows() == 0 {
        return Ok((Vec::new(), CMat::zeros(0, 0)));
    }
    let (b, d) = balance_complex(a);
    let evd = b.eigen().map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let values = evd.S().column_vector().iter().copied().collect();
    let u = evd.U();
    let vectors = CMat::from_fn(u.nrows(), u.ncols(), |i, j| u[(i, j)] * d[i]);
    Ok((values, vectors))
}

pub fn eigvals(a: &CMat) -> Result<Vec<Complex64>> {
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    balance_complex(a).0.eigenvalues().map_err(|e| Error::Eigen(format!("{e:?}")))
}

pub fn eigvals_real(a: &RMat) -> Result<Vec<Complex64>> {
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    balance(a, |x| x.abs(), |x, f| *x *= f)
        .0
        .eigenvalues()
        .map_err(|e| Error::Eigen(format!("{e:?}")))
}

/// Solves `a x = b` by LU with partial pivoting. Returns `None` when the
/// result is not finite (exactly singular `a`).
pub fn solve(a: &CMat, b: &CMat) -> Option<CMat> {
    let x = a.partial_piv_lu().solve(b);
    let finite = (0..x.ncols()).all(|j| (0..x.nrows()).all(|i| is_finite(x[(i, j)])));
    finite.then_some(x)
}

/// Upper-triangular factor of a thin QR decomposition.
pub fn qr_r(a: &RMat) -> RMat {
    a.qr().thin_R().to_owned()
}

/// Least squares for an overdetermined system; fails when there are
/// fewer equations than unknowns. Rank deficiency is resolved by the
/// minimum-norm solution.
pub fn lstsq(a: &RMat, b: &RMat, context: &str) -> Result<RMat> {
    let (rows, cols) = (a.nrows(), a.ncols());
    if rows < cols {
        return Err(Error::SingularFit {
            context: format!("{context}: {rows} equations for {cols} unknowns"),
        });
    }
    lstsq_min_norm(a, b, context)
}

/// Minimum-norm least-squares solution with singular values below
/// `RANK_TOL·σ_max` discarded. Columns are scaled to unit norm first.
pub fn lstsq_min_norm(a: &RMat, b: &RMat, context: &str) -> Result<RMat> {
    let (rows, cols) = (a.nrows(), a.ncols());
    if cols == 0 {
        return Ok(RMat::zeros(0, b.ncols()));
    }
    let scale: Vec<f64> = (0..cols)
        .map(|j| {
            let n = a.col(j).norm_l2();
            if n > 0.0 {
                n
            } else {
                1.0
            }
        })
        .collect();
    let scaled = RMat::from_fn(rows, cols, |i, j| a[(i, j)] / scale[j]);
    let svd = scaled.thin_svd().map_err(|e| Error::SingularFit {
        context: format!("{context}: svd failed ({e:?})"),
    })?;
    let (u, v) = (svd.U(), svd.V());
    let s = svd.S().column_vector();
    let smax = s.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if !(smax > 0.0) {
        return Err(Error::SingularFit {
            context: format!("{context}: all-zero system"),
        });
    }
    let mut x = RMat::zeros(cols, b.ncols());
    for k in 0..s.nrows() {
        if s[k] < RANK_TOL * smax {
            continue;
        }
        for j in 0..b.ncols() {
            let mut proj = 0.0;
            for i in 0..rows {
                proj += u[(i, k)] * b[(i, j)];
            }
            let coef = proj / s[k];
            for i in 0..cols {
                x[(i, j)] += v[(i, k)] * coef;
            }
        }
    }
    Ok(RMat::from_fn(cols, b.ncols(), |i, j| x[(i, j)] / scale[i]))
}

pub fn is_finite(z: Complex64) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

/// Dense complex matrix product `a * b`.
pub fn matmul(a: &CMat, b: &CMat) -> CMat {
    a * b
}
