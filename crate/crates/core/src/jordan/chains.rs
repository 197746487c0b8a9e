//! Jordan chains of a nilpotent matrix by kernel filtration.

use nalgebra::{ComplexField, DMatrix, DVector};

use crate::linalg::{orthonormal_basis, svd_sorted};

/// Singular values within this factor of the rank threshold make a rank ambiguous.
const AMBIGUITY: f64 = 1e3;

/// Kernel dimensions of `M^j` for `j = 1..`, stopping at the nilpotency index.
pub(crate) fn kernel_filtration<T>(
    m: &DMatrix<T>,
    scale: f64,
    rank_tol: f64,
) -> Result<Vec<DMatrix<T>>, String>
where
    T: ComplexField<RealField = f64>,
{
    let n = m.nrows();
    let mut kernels = Vec::new();
    let mut power = DMatrix::<T>::identity(n, n);
    for j in 1..=n {
        power = &power * m;
        let (sv, v) = svd_sorted(&power);
        let thresh = rank_tol * scale.powi(j as i32);
        if let Some(&s) = sv.iter().find(|&&s| s > thresh / AMBIGUITY && s <= thresh * AMBIGUITY) {
            return Err(format!(
                "rank of M^{j} is ambiguous: singular value {s:e} near threshold {thresh:e}"
            ));
        }
        let rank = sv.iter().filter(|&&s| s > thresh).count();
        kernels.push(v.columns(rank, n - rank).into_owned());
        if rank == 0 {
            return Ok(kernels);
        }
    }
    Err("restricted matrix is not nilpotent".into())
}

/// Jordan chains `[v_1, ..., v_l]` with `M v_1 = 0` and `M v_k = v_{k-1}`.
pub(crate) fn nilpotent_chains<T>(
    m: &DMatrix<T>,
    scale: f64,
    rank_tol: f64,
) -> Result<Vec<Vec<DVector<T>>>, String>
where
    T: ComplexField<RealField = f64>,
{
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let kernels = kernel_filtration(m, scale, rank_tol)?;
    let dims: Vec<usize> = kernels.iter().map(|k| k.ncols()).collect();
    let depth = dims.len();
    // at_least[j-1] = number of chains of length >= j
    let mut at_least = Vec::with_capacity(depth);
    let mut prev = 0;
    for &d in &dims {
        if d < prev {
            return Err(format!("kernel dimensions {dims:?} are not increasing"));
        }
        at_least.push(d - prev);
        prev = d;
    }
    if at_least.windows(2).any(|w| w[1] > w[0]) {
        return Err(format!("kernel dimensions {dims:?} violate the Jordan count pattern"));
    }

    let mut tops: Vec<(usize, DVector<T>)> = Vec::new();
    for j in (1..=depth).rev() {
        let longer = if j < depth { at_least[j] } else { 0 };
        let need = at_least[j - 1] - longer;
        if need == 0 {
            continue;
        }
        let kj = &kernels[j - 1];
        let mut span: Vec<DVector<T>> = Vec::new();
        if j >= 2 {
            span.extend(kernels[j - 2].column_iter().map(|c| c.into_owned()));
        }
        for (len, g) in &tops {
            let mut v = g.clone();
            for _ in 0..(len - j) {
                v = m * v;
            }
            span.push(v);
        }
        let w = if span.is_empty() {
            kj.clone()
        } else {
            let s = orthonormal_basis(&DMatrix::from_columns(&span), 1e-10);
            kj - &s * (s.adjoint() * kj)
        };
        // left singular vectors of w
        let (sv, left) = svd_sorted(&w.adjoint());
        let lead = sv.get(need - 1).copied().unwrap_or(0.0);
        let next = sv.get(need).copied().unwrap_or(0.0);
        if lead < 1e-8 || next * AMBIGUITY > lead {
            return Err(format!(
                "cannot select {need} chain tops of length {j}: singular values {sv:?}"
            ));
        }
        for c in 0..need {
            tops.push((j, left.column(c).into_owned()));
        }
    }

    let chains = tops
        .into_iter()
        .map(|(len, g)| {
            let mut chain = vec![g];
            for _ in 1..len {
                let next = m * chain.last().unwrap();
                chain.push(next);
            }
            chain.reverse();
            chain
        })
        .collect();
    Ok(chains)
}
