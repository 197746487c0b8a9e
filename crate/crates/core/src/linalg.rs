//! Small dense linear-algebra helpers shared by the analysis modules.

use nalgebra::{ComplexField, DMatrix, DVector, SymmetricEigen};

use crate::error::{LabError, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn frobenius(m: &Mat) -> f64 {
    m.norm()
}

/// Largest singular value.
pub fn spectral_norm(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0_f64, |a, &s| a.max(s))
}

/// `sigma_max / sigma_min`; infinite for singular input.
pub fn condition_number(m: &Mat) -> f64 {
    let s = m.clone().svd(false, false).singular_values;
    let max = s.iter().fold(0.0_f64, |a, &v| a.max(v));
    let min = s.iter().fold(f64::INFINITY, |a, &v| a.min(v));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Symmetric eigendecomposition with eigenvalues sorted in descending order.
pub fn sym_eigen(m: &Mat) -> (Vector, Mat) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = Vector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = Mat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Symmetric non-negative square root; eigenvalues in `[-psd_tol * lambda_max, 0)`
/// are clamped to zero, anything more negative is an error.
pub fn psd_sqrt(q: &Mat, psd_tol: f64) -> Result<Mat> {
    let (values, vectors) = sym_eigen(q);
    let scale = values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let mut d = Vector::zeros(values.len());
    for (i, &v) in values.iter().enumerate() {
        if v < -psd_tol * scale {
            return Err(LabError::InvalidOperator(format!(
                "matrix is indefinite: eigenvalue {v:e} below -{psd_tol:e} * {scale:e}"
            )));
        }
        d[i] = v.max(0.0).sqrt();
    }
    Ok(&vectors * Mat::from_diagonal(&d) * vectors.transpose())
}

/// Singular values (descending) and matching right singular vectors as columns.
pub fn svd_sorted<T>(m: &DMatrix<T>) -> (Vec<f64>, DMatrix<T>)
where
    T: ComplexField<RealField = f64>,
{
    let n = m.ncols();
    // Pad wide matrices so every right singular vector is available.
    let padded = if m.nrows() < n {
        let mut p = DMatrix::<T>::zeros(n, n);
        p.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested v_t");
    let s = svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    let values: Vec<f64> = order.iter().map(|&i| s[i]).collect();
    let mut v = DMatrix::<T>::zeros(n, order.len());
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..n {
            v[(r, dst)] = vt[(src, r)].clone().conjugate();
        }
    }
    (values, v)
}

/// Numerical rank: singular values above `N * eps * sigma_max * slack`.
pub fn numerical_rank(m: &Mat, slack: f64) -> (usize, Vec<f64>) {
    let s = m.clone().svd(false, false).singular_values;
    let mut s: Vec<f64> = s.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    let n = m.nrows().max(m.ncols()) as f64;
    let smax = s.first().copied().unwrap_or(0.0);
    let thresh = n * f64::EPSILON * smax * slack;
    let rank = s.iter().filter(|&&v| v > thresh && v > 0.0).count();
    (rank, s)
}

/// Inverse with a condition-number guard.
pub fn checked_inverse(p: &Mat, cond_max: f64) -> Result<Mat> {
    if !p.is_square() {
        return Err(LabError::InvalidArgument("matrix must be square".into()));
    }
    let cond = condition_number(p);
    if !cond.is_finite() || cond > cond_max {
        return Err(LabError::InvalidArgument(format!(
            "matrix is singular or ill-conditioned (cond = {cond:e} > {cond_max:e})"
        )));
    }
    p.clone()
        .try_inverse()
        .ok_or_else(|| LabError::NumericalFailure("LU inverse failed".into()))
}

/// Columns of `m` orthonormalized; columns with negligible residual are dropped.
pub fn orthonormal_basis<T>(m: &DMatrix<T>, rel_tol: f64) -> DMatrix<T>
where
    T: ComplexField<RealField = f64>,
{
    let mut cols: Vec<DVector<T>> = Vec::new();
    let scale = m.column_iter().map(|c| c.norm()).fold(0.0_f64, f64::max);
    for c in m.column_iter() {
        let mut v: DVector<T> = c.into_owned();
        // Two passes of Gram-Schmidt.
        for _ in 0..2 {
            for q in &cols {
                let proj = q.dotc(&v);
                v -= q * proj;
            }
        }
        let nrm = v.norm();
        if nrm > rel_tol * scale.max(f64::MIN_POSITIVE) {
            cols.push(v.unscale(nrm));
        }
    }
    if cols.is_empty() {
        DMatrix::<T>::zeros(m.nrows(), 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Kahan-Babuska-Neumaier compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}
