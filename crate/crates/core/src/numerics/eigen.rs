//! Symmetric eigendecomposition (cyclic Jacobi) and PCA truncation.

use crate::error::{check_dim, FtlError, Result};
use crate::numerics::matrix::{axpy, dot, Matrix};

/// Symmetry tolerance, relative to `max(1, max |a_ij|)`.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Negative eigenvalues down to `-NEGATIVE_CLAMP_TOL · max(1, Σ|λ|)` are
/// treated as roundoff and clamped to zero by [`pca_truncate`].
pub const NEGATIVE_CLAMP_TOL: f64 = 1e-10;

const MAX_SWEEPS: usize = 100;

/// Eigenpairs of a symmetric matrix, sorted by descending eigenvalue.
///
/// Column `j` of `eigenvectors` belongs to `eigenvalues[j]`. Each column has
/// its largest-magnitude component made nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenResult {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
}

impl EigenResult {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvector(&self, j: usize) -> Vec<f64> {
        self.eigenvectors.column(j)
    }

    /// `V Λ Vᵀ`
    pub fn reconstruct(&self) -> Matrix {
        let n = self.dim();
        let mut out = Matrix::zeros(n, n);
        for (j, &lambda) in self.eigenvalues.iter().enumerate() {
            let v = self.eigenvector(j);
            out.add_outer(lambda, &v, &v).expect("square by construction");
        }
        out
    }
}

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
pub fn sym_eigen(a: &Matrix) -> Result<EigenResult> {
    if !a.is_finite() {
        return Err(FtlError::NonFinite("sym_eigen input"));
    }
    check_dim(a.rows(), a.cols())?;
    let n = a.rows();
    let scale = a.as_slice().iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let asym = a.max_asymmetry().unwrap_or(0.0);
    if asym > SYMMETRY_TOL * scale {
        return Err(FtlError::NonSymmetric {
            max_asymmetry: asym,
        });
    }

    let mut w = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            w[(i, j)] = 0.5 * (a[(i, j)] + a[(j, i)]);
        }
    }
    let mut v = Matrix::identity(n);
    jacobi(&mut w, &mut v);

    let mut order: Vec<usize> = (0..n).collect();
    // stable: equal eigenvalues keep their Jacobi order
    order.sort_by(|&i, &j| w[(j, j)].total_cmp(&w[(i, i)]));

    let eigenvalues: Vec<f64> = order.iter().map(|&i| w[(i, i)]).collect();
    let mut eigenvectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = v.column(src);
        let lead = col
            .iter()
            .enumerate()
            .fold((0usize, 0.0f64), |(bi, bv), (i, &x)| {
                if x.abs() > bv {
                    (i, x.abs())
                } else {
                    (bi, bv)
                }
            })
            .0;
        if col[lead] < 0.0 {
            col.iter_mut().for_each(|x| *x = -*x);
        }
        for (i, x) in col.into_iter().enumerate() {
            eigenvectors[(i, dst)] = x;
        }
    }
    Ok(EigenResult {
        eigenvalues,
        eigenvectors,
    })
}

fn off_diagonal_sq(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            s += a[(i, j)] * a[(i, j)];
        }
    }
    s
}

fn jacobi(a: &mut Matrix, v: &mut Matrix) {
    let n = a.rows();
    let total = a.frobenius_norm();
    if total == 0.0 {
        return;
    }
    let target = (f64::EPSILON * total).powi(2);
    for sweep in 0..MAX_SWEEPS {
        if off_diagonal_sq(a) <= target {
            return;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                // negligible against both diagonal entries after a few sweeps
                if sweep > 3
                    && (app.abs() + 1e2 * apq.abs()) == app.abs()
                    && (aqq.abs() + 1e2 * apq.abs()) == aqq.abs()
                {
                    a[(p, q)] = 0.0;
                    a[(q, p)] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    let new_kp = c * akp - s * akq;
                    let new_kq = s * akp + c * akq;
                    a[(k, p)] = new_kp;
                    a[(p, k)] = new_kp;
                    a[(k, q)] = new_kq;
                    a[(q, k)] = new_kq;
                }
                a[(p, p)] = app - t * apq;
                a[(q, q)] = aqq + t * apq;
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    log::warn!("jacobi: no convergence after {MAX_SWEEPS} sweeps (n={n})");
}

/// Smallest `k` whose leading eigenvalues carry at least `energy` of the total
/// mass, together with the fraction actually achieved.
pub fn energy_rank(eigenvalues: &[f64], energy: f64) -> Result<(usize, f64)> {
    if !(energy > 0.0 && energy <= 1.0) {
        return Err(FtlError::ConfigInvalid(format!(
            "energy fraction must lie in (0, 1], got {energy}"
        )));
    }
    let clamped = clamp_spectrum(eigenvalues)?;
    let total: f64 = clamped.iter().sum();
    if total <= 0.0 {
        return Err(FtlError::DegenerateSpectrum(
            "total eigenvalue mass is zero".into(),
        ));
    }
    let threshold = energy * total * (1.0 - 1e-12);
    let mut cum = 0.0;
    for (i, &l) in clamped.iter().enumerate() {
        cum += l;
        if cum >= threshold {
            return Ok((i + 1, (cum / total).min(1.0)));
        }
    }
    Ok((clamped.len(), 1.0))
}

fn clamp_spectrum(eigenvalues: &[f64]) -> Result<Vec<f64>> {
    let mass: f64 = eigenvalues.iter().map(|l| l.abs()).sum();
    let floor = -NEGATIVE_CLAMP_TOL * mass.max(1.0);
    eigenvalues
        .iter()
        .map(|&l| {
            if !l.is_finite() {
                Err(FtlError::NonFinite("eigenvalue"))
            } else if l >= 0.0 {
                Ok(l)
            } else if l >= floor {
                Ok(0.0)
            } else {
                Err(FtlError::DegenerateSpectrum(format!(
                    "negative eigenvalue {l:e} below clamp floor {floor:e}"
                )))
            }
        })
        .collect()
}

/// Leading eigenvectors carrying `energy` of the spectrum, as columns.
pub fn pca_truncate(eig: &EigenResult, energy: f64) -> Result<Matrix> {
    let (k, _) = energy_rank(&eig.eigenvalues, energy)?;
    eig.eigenvectors.leading_columns(k)
}

/// Orthogonal projection `Q Qᵀ v` onto the column span of `q`.
pub fn project(q: &Matrix, v: &[f64]) -> Result<Vec<f64>> {
    check_dim(q.rows(), v.len())?;
    let coeffs = q.matvec_t(v)?;
    Ok((0..q.rows()).map(|i| dot(q.row(i), &coeffs)).collect())
}

/// `v − Q Qᵀ v`
pub fn project_complement(q: &Matrix, v: &[f64]) -> Result<Vec<f64>> {
    let mut p = project(q, v)?;
    p.iter_mut().for_each(|x| *x = -*x);
    axpy(1.0, v, &mut p);
    Ok(p)
}
