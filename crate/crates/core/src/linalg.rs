//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Lower-triangular `L` with `L Lᵀ = m` for symmetric positive semi-definite
/// `m`. Zero pivots zero their column instead of failing, so a diagonal
/// matrix yields exactly the element-wise square root and block-diagonal
/// structure is preserved.
pub fn psd_sqrt(m: &Mat) -> Option<Mat> {
    let n = m.nrows();
    if m.ncols() != n {
        return None;
    }
    let scale = m.diagonal().iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -1e-9 * scale.max(1.0) {
            return None;
        }
        if d <= tol {
            continue;
        }
        let piv = d.sqrt();
        l[(j, j)] = piv;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / piv;
        }
    }
    Some(l)
}

/// Minimum eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &Mat) -> f64 {
    let sym = symmetrize(m);
    sym.symmetric_eigenvalues().iter().fold(f64::INFINITY, |a, &b| a.min(b))
}

/// Symmetrize, then clamp tiny negative eigenvalues to zero.
pub fn clamp_psd(m: &Mat) -> Mat {
    let sym = symmetrize(m);
    if min_eigenvalue(&sym) >= 0.0 {
        return sym;
    }
    let eig = sym.symmetric_eigen();
    let vals = eig.eigenvalues.map(|v| v.max(0.0));
    &eig.eigenvectors * Mat::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

pub fn is_symmetric(m: &Mat, tol: f64) -> bool {
    m.nrows() == m.ncols() && (m - m.transpose()).amax() <= tol * m.amax().max(1.0)
}

pub fn spectral_radius(m: &Mat) -> f64 {
    m.complex_eigenvalues().iter().fold(0.0f64, |a, c| a.max(c.norm()))
}
