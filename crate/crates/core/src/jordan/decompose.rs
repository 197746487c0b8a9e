use nalgebra::{ComplexField, DVector};

use super::blocks::block_matrix;
use super::chains::nilpotent_chains;
use super::schur::{complex_schur, invariant_bases, reorder, CMat, C64};
use super::{BlockKind, JordanBlock, JordanDecomposition};
use crate::config::Config;
use crate::error::{LabError, Result};
use crate::linalg::{condition_number, orthonormal_basis, svd_sorted, Mat, Vector};
use crate::operator::{cluster_centers as centers, single_linkage, stability_tolerance};

/// Real Jordan form `A = P J P^-1` with blocks in canonical order.
///
/// Eigenvalues come from a complex Schur form and are clustered by single
/// linkage. The clustering radius starts at `cluster_tol * |A|_F` and grows by
/// factors of ten up to `cluster_tol_max * |A|_F`; the first radius whose
/// clusters are well separated and whose chains reproduce `A` wins.
pub fn jordan_real_form(a: &Mat, cfg: &Config) -> Result<JordanDecomposition> {
    if !a.is_square() || a.nrows() == 0 {
        return Err(LabError::InvalidArgument("Jordan form needs a non-empty square matrix".into()));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(LabError::InvalidArgument("matrix has non-finite entries".into()));
    }
    let n = a.nrows();
    let norm = a.norm();
    if norm == 0.0 {
        return Ok(JordanDecomposition {
            p: Mat::identity(n, n),
            p_inv: Mat::identity(n, n),
            blocks: vec![JordanBlock { kind: BlockKind::ZeroSimple, size: n, offset: 0 }],
            j: Mat::zeros(n, n),
            unstable: false,
            spectral_bound: 0.0,
            cluster_tol: 0.0,
            cluster_gap: f64::INFINITY,
            residual: 0.0,
            condition: 1.0,
        });
    }
    let (u, t) = complex_schur(a)?;
    let eig: Vec<C64> = (0..n).map(|i| t[(i, i)]).collect();

    let mut attempts = Vec::new();
    let mut last: Option<Vec<usize>> = None;
    let mut tol = cfg.cluster_tol * norm;
    while tol <= cfg.cluster_tol_max * norm * (1.0 + 1e-12) {
        let labels = single_linkage(&eig, tol);
        if last.as_ref() != Some(&labels) {
            last = Some(labels.clone());
            let desc = describe(&eig, &labels, tol);
            if single_linkage(&eig, 10.0 * tol) != labels {
                attempts.push(format!("{desc}: clusters closer than 10x the radius"));
            } else {
                match build(a, &u, &t, &eig, &labels, tol, cfg) {
                    Ok(dec) => return Ok(dec),
                    Err(msg) => attempts.push(format!("{desc}: {msg}")),
                }
            }
        }
        tol *= 10.0;
    }
    Err(LabError::AmbiguousStructure {
        message: format!(
            "no clustering radius in [{:e}, {:e}] gave a consistent real Jordan structure",
            cfg.cluster_tol * norm,
            cfg.cluster_tol_max * norm
        ),
        candidates: attempts,
    })
}

fn describe(eig: &[C64], labels: &[usize], tol: f64) -> String {
    let parts: Vec<String> = centers(eig, labels)
        .iter()
        .map(|(c, m)| format!("{:.6}{:+.6}i x{m}", c.re, c.im))
        .collect();
    format!("radius {tol:.3e} [{}]", parts.join(", "))
}

/// Orthonormal real basis of `span(Re W, Im W)`, which must have dimension `dim`.
fn real_span(w: &CMat, dim: usize) -> std::result::Result<Mat, String> {
    let n = w.nrows();
    let m = w.ncols();
    let mut stack = Mat::zeros(n, 2 * m);
    for j in 0..m {
        for i in 0..n {
            stack[(i, j)] = w[(i, j)].re;
            stack[(i, m + j)] = w[(i, j)].im;
        }
    }
    let (sv, vecs) = svd_sorted(&stack.transpose());
    let top = sv.first().copied().unwrap_or(0.0);
    let lead = sv.get(dim - 1).copied().unwrap_or(0.0);
    let next = sv.get(dim).copied().unwrap_or(0.0);
    if lead <= 1e-8 * top || next > 1e-7 * top {
        return Err(format!("real invariant subspace does not have dimension {dim}"));
    }
    Ok(vecs.columns(0, dim).into_owned())
}

/// Index of the first entry whose modulus is within rounding of the largest.
fn pivot<T: ComplexField<RealField = f64>>(x: &DVector<T>) -> usize {
    let max = x.iter().map(|v| v.clone().modulus()).fold(0.0, f64::max);
    x.iter()
        .position(|v| v.clone().modulus() >= (1.0 - 1e-9) * max)
        .unwrap_or(0)
}

fn normalize_chain<T: ComplexField<RealField = f64>>(chain: &mut [DVector<T>]) {
    let p = pivot(&chain[0]);
    let s = chain[0][p].clone();
    for v in chain.iter_mut() {
        *v = v.map(|e| e / s.clone());
    }
}

struct Pending {
    kind: BlockKind,
    cols: Vec<Vector>,
}

fn build(
    a: &Mat,
    u: &CMat,
    t: &CMat,
    eig: &[C64],
    labels: &[usize],
    tol: f64,
    cfg: &Config,
) -> std::result::Result<JordanDecomposition, String> {
    let n = a.nrows();
    let norm = a.norm();
    let stab = stability_tolerance(a, cfg);
    let clusters = centers(eig, labels);

    let mut t = t.clone();
    let mut u = u.clone();
    let mut order = labels.to_vec();
    reorder(&mut t, &mut u, &mut order);
    let sizes: Vec<usize> = clusters.iter().map(|c| c.1).collect();
    let bases = invariant_bases(&t, &u, &sizes).map_err(|e| e.to_string())?;

    let ac: CMat = a.map(|v| C64::new(v, 0.0));
    let mut stable: Vec<(f64, f64, Vec<Vector>)> = Vec::new();
    let mut unstable: Vec<(f64, f64, Vec<Vector>)> = Vec::new();
    let mut zero_simple: Vec<Vector> = Vec::new();
    let mut pending: Vec<Pending> = Vec::new();
    let mut bound = f64::NEG_INFINITY;

    for (idx, (&(center, m), w)) in clusters.iter().zip(&bases).enumerate() {
        let is_real = center.im.abs() <= tol;
        if !is_real && center.im < 0.0 {
            let partner = clusters
                .iter()
                .any(|&(c, k)| k == m && (c - center.conj()).norm() <= tol);
            if !partner {
                return Err(format!("cluster {idx} has no conjugate partner"));
            }
            continue;
        }
        let re = if center.re.abs() <= stab { 0.0 } else { center.re };
        bound = bound.max(re);
        if re != 0.0 {
            let dim = if is_real { m } else { 2 * m };
            let basis = real_span(w, dim)?;
            let cols: Vec<Vector> = basis
                .column_iter()
                .map(|c| {
                    let mut v = vec![c.into_owned()];
                    normalize_chain(&mut v);
                    v.pop().unwrap()
                })
                .collect();
            let im = if is_real { 0.0 } else { center.im };
            if re < 0.0 {
                stable.push((re, im, cols));
            } else {
                unstable.push((re, im, cols));
            }
        } else if is_real {
            let r = real_span(w, m)?;
            let restricted = r.transpose() * a * &r;
            let chains = nilpotent_chains(&restricted, norm, cfg.jordan_rank_tol)?;
            for chain in chains {
                let mut full: Vec<Vector> = chain.iter().map(|v| &r * v).collect();
                normalize_chain(&mut full);
                if full.len() == 1 {
                    zero_simple.push(full.pop().unwrap());
                } else {
                    pending.push(Pending { kind: BlockKind::NilpotentJordan { k: full.len() }, cols: full });
                }
            }
        } else {
            let omega = center.im;
            let q = orthonormal_basis(w, 1e-10);
            if q.ncols() != m {
                return Err(format!("cluster {idx} basis is rank deficient"));
            }
            let shifted = &ac - CMat::identity(n, n) * C64::new(0.0, omega);
            let restricted = q.adjoint() * shifted * &q;
            let chains = nilpotent_chains(&restricted, norm, cfg.jordan_rank_tol)?;
            for chain in chains {
                let mut full: Vec<DVector<C64>> = chain.iter().map(|v| &q * v).collect();
                normalize_chain(&mut full);
                let cols: Vec<Vector> = full
                    .iter()
                    .flat_map(|v| [v.map(|z| z.re), v.map(|z| z.im)])
                    .collect();
                let kind = if full.len() == 1 {
                    BlockKind::PureRotation { h: omega }
                } else {
                    BlockKind::RotationJordan { d: omega, g: full.len() }
                };
                pending.push(Pending { kind, cols });
            }
        }
    }

    let by_real_part = |v: &mut Vec<(f64, f64, Vec<Vector>)>| {
        v.sort_by(|x, y| y.0.total_cmp(&x.0).then(y.1.total_cmp(&x.1)));
        v.drain(..).flat_map(|(_, _, c)| c).collect::<Vec<_>>()
    };
    let stable_cols = by_real_part(&mut stable);
    let unstable_cols = by_real_part(&mut unstable);
    if !stable_cols.is_empty() {
        pending.push(Pending { kind: BlockKind::Stable, cols: stable_cols });
    }
    if !zero_simple.is_empty() {
        pending.push(Pending { kind: BlockKind::ZeroSimple, cols: zero_simple });
    }
    let is_unstable = !unstable_cols.is_empty();
    if is_unstable {
        pending.push(Pending { kind: BlockKind::Unstable, cols: unstable_cols });
    }
    pending.sort_by(|x, y| x.kind.canonical_cmp(&y.kind));

    let cols: Vec<Vector> = pending.iter().flat_map(|p| p.cols.iter().cloned()).collect();
    if cols.len() != n {
        return Err(format!("collected {} basis vectors for dimension {n}", cols.len()));
    }
    let p = Mat::from_columns(&cols);
    let condition = condition_number(&p);
    if !(condition <= cfg.jordan_cond_max) {
        return Err(format!("basis condition number {condition:.3e} exceeds {:.1e}", cfg.jordan_cond_max));
    }
    let p_inv = p.clone().try_inverse().ok_or("basis is singular")?;
    let projected = &p_inv * a * &p;
    let mut j = Mat::zeros(n, n);
    let mut blocks = Vec::with_capacity(pending.len());
    let mut offset = 0;
    for item in &pending {
        let size = item.cols.len();
        let block = match item.kind {
            BlockKind::Stable | BlockKind::Unstable => projected.view((offset, offset), (size, size)).into_owned(),
            kind => block_matrix(kind, size),
        };
        j.view_mut((offset, offset), (size, size)).copy_from(&block);
        blocks.push(JordanBlock { kind: item.kind, size, offset });
        offset += size;
    }
    let residual = (&p * &j * &p_inv - a).norm() / norm;
    if !(residual <= cfg.jordan_tol) {
        return Err(format!("reconstruction residual {residual:.3e} exceeds {:.1e}", cfg.jordan_tol));
    }

    let mut gap = f64::INFINITY;
    for (i, x) in clusters.iter().enumerate() {
        for y in &clusters[i + 1..] {
            gap = gap.min((x.0 - y.0).norm());
        }
    }
    Ok(JordanDecomposition {
        p,
        p_inv,
        blocks,
        j,
        unstable: is_unstable,
        spectral_bound: bound,
        cluster_tol: tol,
        cluster_gap: gap,
        residual,
        condition,
    })
}
