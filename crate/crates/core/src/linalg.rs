//! Dense symmetric-matrix kernels.
//!
//! Everything here works on small dense matrices (the asset count, so
//! `d` in the tens at most). Eigendecompositions use cyclic Jacobi
//! rotations; square roots and Moore–Penrose inverses are built from the
//! resulting spectrum.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative asymmetry accepted by [`sym_eig`].
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Relative tolerance below which negative eigenvalues are clamped to zero in [`sym_sqrt`].
pub const PSD_CLAMP_TOL: f64 = 1e-10;
/// Default relative rank tolerance of [`pseudo_inverse`].
pub const DEFAULT_RANK_TOL: f64 = 1e-12;

const JACOBI_TOL: f64 = 1e-14;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Spectral decomposition `M = P diag(λ) Pᵀ` of a symmetric matrix.
///
/// Eigenvalues are sorted ascending and each eigenvector is signed so that
/// its first non-negligible component is positive, which makes the
/// decomposition reproducible for identical inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct SymSpectrum {
    pub eigenvalues: DVector<f64>,
    /// Orthonormal eigenvectors stored as columns.
    pub eigenvectors: DMatrix<f64>,
}

impl SymSpectrum {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Largest eigenvalue magnitude (spectral norm of the matrix).
    pub fn max_abs(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0_f64, |m, l| m.max(l.abs()))
    }

    /// Smallest strictly positive eigenvalue, if any exceeds `tol`.
    pub fn min_positive(&self, tol: f64) -> Option<f64> {
        self.eigenvalues
            .iter()
            .copied()
            .filter(|&l| l > tol)
            .fold(None, |m: Option<f64>, l| Some(m.map_or(l, |m| m.min(l))))
    }

    /// `P diag(f(λ)) Pᵀ`.
    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> DMatrix<f64> {
        let p = &self.eigenvectors;
        let d = self.dim();
        let mut out = DMatrix::zeros(d, d);
        for k in 0..d {
            let w = f(self.eigenvalues[k]);
            if w == 0.0 {
                continue;
            }
            for j in 0..d {
                let pj = p[(j, k)] * w;
                for i in 0..d {
                    out[(i, j)] += p[(i, k)] * pj;
                }
            }
        }
        out
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.map(|l| l)
    }
}

/// Frobenius norm.
pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn check_square(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Numerical(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Relative asymmetry `max|Mᵢⱼ − Mⱼᵢ| / max|Mᵢⱼ|` (0 for the zero matrix).
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.iter().fold(0.0_f64, |s, x| s.max(x.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst / scale
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
pub fn sym_eig(m: &DMatrix<f64>) -> Result<SymSpectrum> {
    check_square(m)?;
    let asym = asymmetry(m);
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    let d = m.nrows();
    let mut a = (m + m.transpose()) * 0.5;
    let mut v = DMatrix::<f64>::identity(d, d);
    let norm = frobenius(&a);

    if norm > 0.0 {
        let mut converged = false;
        for _ in 0..JACOBI_MAX_SWEEPS {
            let off = off_diagonal_norm(&a);
            if off < JACOBI_TOL * norm {
                converged = true;
                break;
            }
            for p in 0..d {
                for q in (p + 1)..d {
                    rotate(&mut a, &mut v, p, q);
                }
            }
        }
        if !converged && off_diagonal_norm(&a) >= JACOBI_TOL * norm {
            return Err(Error::Numerical(format!(
                "Jacobi eigensolver did not converge in {JACOBI_MAX_SWEEPS} sweeps"
            )));
        }
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let eigenvalues = DVector::from_iterator(d, order.iter().map(|&i| a[(i, i)]));
    let mut eigenvectors = DMatrix::zeros(d, d);
    for (col, &k) in order.iter().enumerate() {
        let mut vec = v.column(k).clone_owned();
        let pivot = vec.iter().copied().find(|x| x.abs() > 1e-8).unwrap_or(1.0);
        if pivot < 0.0 {
            vec.neg_mut();
        }
        eigenvectors.set_column(col, &vec);
    }
    Ok(SymSpectrum {
        eigenvalues,
        eigenvectors,
    })
}

fn off_diagonal_norm(a: &DMatrix<f64>) -> f64 {
    let mut s = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

// One Jacobi rotation annihilating a[p][q].
fn rotate(a: &mut DMatrix<f64>, v: &mut DMatrix<f64>, p: usize, q: usize) {
    let apq = a[(p, q)];
    if apq == 0.0 {
        return;
    }
    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let d = a.nrows();
    for k in 0..d {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
    for k in 0..d {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
    for k in 0..d {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// Spectrum of the PSD square root of `m`: same eigenvectors, `√λ` eigenvalues.
///
/// Eigenvalues in `[-1e-10·‖M‖, 0)` are clamped to zero; anything more
/// negative is reported as [`Error::NotPsd`].
pub fn sym_sqrt_spectrum(m: &DMatrix<f64>) -> Result<SymSpectrum> {
    let spec = sym_eig(m)?;
    let tol = PSD_CLAMP_TOL * spec.max_abs();
    if let Some(&worst) = spec.eigenvalues.iter().find(|&&l| l < -tol) {
        return Err(Error::NotPsd(worst));
    }
    Ok(SymSpectrum {
        eigenvalues: spec.eigenvalues.map(|l| l.max(0.0).sqrt()),
        eigenvectors: spec.eigenvectors,
    })
}

/// Symmetric PSD square root.
pub fn sym_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(sym_sqrt_spectrum(m)?.reconstruct())
}

/// Moore–Penrose pseudo-inverse of the matrix represented by `s`.
///
/// Eigenvalues with `|λ| ≤ rank_tol` are treated as exact zeros. When
/// `rank_tol` is `None` it defaults to `1e-12 · max|λ|`.
pub fn pseudo_inverse(s: &SymSpectrum, rank_tol: Option<f64>) -> DMatrix<f64> {
    let tol = rank_tol.unwrap_or(DEFAULT_RANK_TOL * s.max_abs());
    s.map(|l| if l.abs() <= tol || l == 0.0 { 0.0 } else { 1.0 / l })
}

/// Orthogonal projector onto the range of the matrix represented by `s`
/// (equal to `M M⁺`).
pub fn range_projector(s: &SymSpectrum, rank_tol: Option<f64>) -> DMatrix<f64> {
    let tol = rank_tol.unwrap_or(DEFAULT_RANK_TOL * s.max_abs());
    s.map(|l| if l.abs() <= tol || l == 0.0 { 0.0 } else { 1.0 })
}

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = M`.
pub fn cholesky(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_square(m)?;
    let asym = asymmetry(m);
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    let d = m.nrows();
    let mut l = DMatrix::<f64>::zeros(d, d);
    for j in 0..d {
        let mut diag = m[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if diag <= 0.0 || !diag.is_finite() {
            return Err(Error::NotPositiveDefinite(diag));
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..d {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}
