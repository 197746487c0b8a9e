//! Harmonic test functions adapted to an operator.

use super::checks::residual;
use super::{Affine, Constant, ErfLift, HarmonicCandidate, Quadratic};
use crate::config::Config;
use crate::error::Result;
use crate::growth::GrowthCertificate;
use crate::linalg::{spectral_norm, svd_sorted, Mat, Vector};
use crate::operator::{eigenvalue_clusters, spectral_bound, stability_tolerance, OperatorSpec, Stability};
use crate::sampling::probe_points;

/// Orthonormal basis (columns) of the numerical null space of `m`.
pub(crate) fn null_space(m: &Mat, slack: f64) -> Mat {
    let n = m.ncols();
    let (values, v) = svd_sorted(m);
    let smax = values.first().copied().unwrap_or(0.0);
    let thresh = m.nrows().max(n) as f64 * f64::EPSILON * smax * slack;
    let cols: Vec<usize> = (0..n).filter(|&i| values.get(i).copied().unwrap_or(0.0) <= thresh).collect();
    Mat::from_fn(n, cols.len(), |r, c| v[(r, cols[c])])
}

/// Reduced row echelon form of the rows of `basis^T`: a canonical basis of
/// the column span of `basis`, independent of the SVD's rotation.
pub(crate) fn canonical_basis(basis: &Mat) -> Vec<Vector> {
    let mut m = basis.transpose();
    let (rows, cols) = m.shape();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let (piv, val) = (r..rows).map(|i| (i, m[(i, c)].abs())).fold((r, -1.0), |a, b| if b.1 > a.1 { b } else { a });
        if val < 1e-10 {
            continue;
        }
        m.swap_rows(r, piv);
        let p = m[(r, c)];
        for j in 0..cols {
            m[(r, j)] /= p;
        }
        for i in 0..rows {
            if i != r {
                let f = m[(i, c)];
                if f != 0.0 {
                    for j in 0..cols {
                        let v = m[(r, j)];
                        m[(i, j)] -= f * v;
                    }
                }
            }
        }
        r += 1;
    }
    (0..r)
        .map(|i| Vector::from_iterator(cols, m.row(i).iter().map(|&v| if v.abs() < 1e-12 { 0.0 } else { v })))
        .collect()
}

fn affine_label(b: &Vector) -> String {
    let nz: Vec<usize> = (0..b.len()).filter(|&i| b[i] != 0.0).collect();
    if nz.len() == 1 && b[nz[0]] == 1.0 {
        format!("x{}", nz[0] + 1)
    } else {
        let terms: Vec<String> = nz.iter().map(|&i| format!("{}*x{}", b[i], i + 1)).collect();
        terms.join(" + ")
    }
}

/// Exponential certificate for `x^T M x + b.x + c`: `c0 = max(1, |c|, |b|, (2|M|)^{1/3})`
/// gives `c0 e^{c0 r} >= c0 + c0^2 r + c0^3 r^2 / 2 >= |u|`.
pub fn polynomial_certificate(m: f64, b: f64, c: f64) -> Result<GrowthCertificate> {
    GrowthCertificate::exponential(1f64.max(c.abs()).max(b).max((2.0 * m).cbrt()))
}

/// Symmetric `M` with `A^T M + M A = 0` and `tr(QM) = 0`, canonicalized.
fn harmonic_quadratics(spec: &OperatorSpec, cfg: &Config) -> Vec<Mat> {
    let n = spec.dim();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let unknowns = pairs.len();
    let sym_unit = |k: usize| {
        let (i, j) = pairs[k];
        let mut e = Mat::zeros(n, n);
        e[(i, j)] = 1.0;
        e[(j, i)] = 1.0;
        e
    };
    let mut system = Mat::zeros(unknowns + 1, unknowns);
    let a = spec.a();
    for k in 0..unknowns {
        let e = sym_unit(k);
        let image = a.transpose() * &e + &e * a;
        for (row, &(i, j)) in pairs.iter().enumerate() {
            system[(row, k)] = image[(i, j)];
        }
        system[(unknowns, k)] = spec.q().component_mul(&e).sum();
    }
    canonical_basis(&null_space(&system, cfg.rank_slack))
        .into_iter()
        .map(|coef| {
            let mut m = Mat::zeros(n, n);
            for (k, &(i, j)) in pairs.iter().enumerate() {
                m[(i, j)] = coef[k];
                m[(j, i)] = coef[k];
            }
            m
        })
        .collect()
}

/// `phi(l.x)` lifts for real unstable eigenvalues `a` with left eigenvector
/// `l` and `q = l^T Q l > 0`.
fn erf_lifts(spec: &OperatorSpec, cfg: &Config) -> Result<Vec<HarmonicCandidate>> {
    if spectral_bound(spec.a(), cfg)?.classification != Stability::Unstable {
        return Ok(Vec::new());
    }
    let tol = stability_tolerance(spec.a(), cfg);
    let mut reals: Vec<f64> = eigenvalue_clusters(spec.a(), cfg)?
        .iter()
        .filter(|(z, _)| z.re > tol && z.im.abs() <= tol)
        .map(|(z, _)| z.re)
        .collect();
    reals.sort_by(f64::total_cmp);
    reals.dedup_by(|x, y| (*x - *y).abs() <= cfg.cluster_tol * (1.0 + spec.a().norm()));
    let n = spec.dim();
    let mut out = Vec::new();
    for a in reals {
        let shifted = spec.a().transpose() - Mat::identity(n, n) * a;
        for ell in canonical_basis(&null_space(&shifted, cfg.rank_slack)) {
            let ell = ell.normalize();
            let q = ell.dot(&(spec.q() * &ell));
            if q <= cfg.psd_tol * spectral_norm(spec.q()).max(f64::MIN_POSITIVE) {
                continue;
            }
            let lift = ErfLift::new(ell.clone(), a, q)?;
            let growth = GrowthCertificate::bounded(lift.range())?;
            out.push(HarmonicCandidate::new(
                format!("erf-lift(a={a}, l={:?})", ell.as_slice()),
                lift,
                Some(growth),
                true,
            ));
        }
    }
    Ok(out)
}

/// Constants, affine `b.x` with `A^T b = 0`, traceless quadratics with
/// `A^T M + M A = 0`, and erf lifts along unstable real eigenvectors; only
/// candidates passing the residual check on the standard probe grid are kept.
pub fn harmonic_catalog(spec: &OperatorSpec, cfg: &Config) -> Result<Vec<HarmonicCandidate>> {
    let n = spec.dim();
    let mut all = vec![HarmonicCandidate::new("1", Constant { dim: n, c: 1.0 }, Some(GrowthCertificate::bounded(1.0)?), true)];
    for b in canonical_basis(&null_space(&spec.a().transpose(), cfg.rank_slack)) {
        let growth = polynomial_certificate(0.0, b.norm(), 0.0)?;
        all.push(HarmonicCandidate::new(affine_label(&b), Affine { b, c: 0.0 }, Some(growth), false));
    }
    for (k, m) in harmonic_quadratics(spec, cfg).into_iter().enumerate() {
        let growth = polynomial_certificate(spectral_norm(&m), 0.0, 0.0)?;
        all.push(HarmonicCandidate::new(format!("quadratic{}", k + 1), Quadratic::new(m, Vector::zeros(n), 0.0)?, Some(growth), false));
    }
    all.extend(erf_lifts(spec, cfg)?);
    let probes = probe_points(n, 8, 0);
    let mut kept = Vec::with_capacity(all.len());
    for u in all {
        if residual(spec, &u, &probes, cfg)?.passed() {
            kept.push(u);
        }
    }
    Ok(kept)
}
