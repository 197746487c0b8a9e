//! Complex Schur form with cluster reordering and block diagonalization.

use nalgebra::{Complex, DMatrix, Schur};

use crate::error::{LabError, Result};
use crate::linalg::Mat;

pub(crate) type C64 = Complex<f64>;
pub(crate) type CMat = DMatrix<C64>;

/// `A = U T U^H` with `T` upper triangular.
pub(crate) fn complex_schur(a: &Mat) -> Result<(CMat, CMat)> {
    let n = a.nrows();
    let ac: CMat = a.map(|v| C64::new(v, 0.0));
    let (u, mut t) = Schur::try_new(ac, f64::EPSILON, 10_000)
        .ok_or_else(|| LabError::NumericalFailure(format!("complex Schur iteration did not converge (n = {n})")))?
        .unpack();
    let scale = a.norm().max(f64::MIN_POSITIVE);
    for j in 0..n {
        for i in j + 1..n {
            if t[(i, j)].norm() > 1e-10 * scale {
                return Err(LabError::NumericalFailure(format!(
                    "Schur factor is not triangular: |T[{i}][{j}]| = {:e}",
                    t[(i, j)].norm()
                )));
            }
            t[(i, j)] = C64::new(0.0, 0.0);
        }
    }
    Ok((u, t))
}

/// Swap diagonal entries `k` and `k+1` of `T` by a unitary rotation, updating `U`.
fn swap_adjacent(t: &mut CMat, u: &mut CMat, k: usize) {
    let n = t.nrows();
    let t11 = t[(k, k)];
    let t22 = t[(k + 1, k + 1)];
    let x0 = t[(k, k + 1)];
    let x1 = t22 - t11;
    let r = (x0.norm_sqr() + x1.norm_sqr()).sqrt();
    if r == 0.0 {
        return;
    }
    let c = x0 / r;
    let s = x1 / r;
    // G = [[c, -conj(s)], [s, conj(c)]]; first column is the eigenvector for t22.
    for j in 0..n {
        let a = t[(k, j)];
        let b = t[(k + 1, j)];
        t[(k, j)] = c.conj() * a + s.conj() * b;
        t[(k + 1, j)] = -s * a + c * b;
    }
    for i in 0..n {
        let a = t[(i, k)];
        let b = t[(i, k + 1)];
        t[(i, k)] = a * c + b * s;
        t[(i, k + 1)] = -a * s.conj() + b * c.conj();
    }
    for i in 0..u.nrows() {
        let a = u[(i, k)];
        let b = u[(i, k + 1)];
        u[(i, k)] = a * c + b * s;
        u[(i, k + 1)] = -a * s.conj() + b * c.conj();
    }
    t[(k + 1, k)] = C64::new(0.0, 0.0);
}

/// Reorder the Schur form so that diagonal entries are grouped by ascending label.
pub(crate) fn reorder(t: &mut CMat, u: &mut CMat, labels: &mut [usize]) {
    let n = labels.len();
    loop {
        let mut swapped = false;
        for k in 0..n.saturating_sub(1) {
            if labels[k] > labels[k + 1] {
                swap_adjacent(t, u, k);
                labels.swap(k, k + 1);
                swapped = true;
            }
        }
        if !swapped {
            break;
        }
    }
}

/// Solve `T11 X - X T22 = C` for upper triangular `T11`, `T22` with disjoint spectra.
fn sylvester_triangular(t11: &CMat, t22: &CMat, c: &CMat) -> Option<CMat> {
    let m = t11.nrows();
    let r = t22.nrows();
    let mut x = CMat::zeros(m, r);
    for j in 0..r {
        let mut rhs = c.column(j).into_owned();
        for i in 0..j {
            let coef = t22[(i, j)];
            for row in 0..m {
                rhs[row] += x[(row, i)] * coef;
            }
        }
        let mu = t22[(j, j)];
        for row in (0..m).rev() {
            let mut acc = rhs[row];
            for col in row + 1..m {
                acc -= t11[(row, col)] * x[(col, j)];
            }
            let piv = t11[(row, row)] - mu;
            if piv.norm() == 0.0 {
                return None;
            }
            x[(row, j)] = acc / piv;
        }
    }
    Some(x)
}

/// Bases (in the original coordinates) of the invariant subspaces of consecutive
/// diagonal groups of the reordered Schur form. `sizes` are the group lengths.
pub(crate) fn invariant_bases(t: &CMat, u: &CMat, sizes: &[usize]) -> Result<Vec<CMat>> {
    let n = t.nrows();
    let mut bases = Vec::with_capacity(sizes.len());
    // Basis of the trailing invariant subspace, in Schur coordinates.
    let mut rest = CMat::identity(n, n);
    let mut off = 0;
    for (idx, &m) in sizes.iter().enumerate() {
        if idx + 1 == sizes.len() {
            bases.push(u * &rest);
            break;
        }
        let r = n - off - m;
        let t11 = t.view((off, off), (m, m)).into_owned();
        let t12 = t.view((off, off + m), (m, r)).into_owned();
        let t22 = t.view((off + m, off + m), (r, r)).into_owned();
        let x = sylvester_triangular(&t11, &t22, &(-t12)).ok_or_else(|| {
            LabError::NumericalFailure("eigenvalue clusters are not separated".into())
        })?;
        let lead = rest.columns(0, m).into_owned();
        bases.push(u * &lead);
        rest = &lead * x + rest.columns(m, r);
        off += m;
    }
    Ok(bases)
}
