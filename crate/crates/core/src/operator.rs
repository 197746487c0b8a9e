//! The operator `L = 1/2 tr(Q D^2) + <Ax, D>` and its deterministic matrix analysis.

use nalgebra::{Complex, Schur};
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{LabError, Result};
use crate::expm::matrix_exp;
use crate::linalg::{self, max_abs, Mat};

/// Diffusion `Q` (symmetric, non-negative) and drift `A` of an OU operator.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSpec {
    q: Mat,
    a: Mat,
}

impl OperatorSpec {
    /// Validates symmetry and non-negativity of `Q` with the configured tolerances.
    pub fn new(q: Mat, a: Mat, cfg: &Config) -> Result<Self> {
        let n = q.nrows();
        if n == 0 {
            return Err(LabError::InvalidOperator("dimension must be at least 1".into()));
        }
        if !q.is_square() || a.nrows() != n || a.ncols() != n {
            return Err(LabError::InvalidOperator(format!(
                "Q is {}x{} and A is {}x{}; both must be {n}x{n}",
                q.nrows(),
                q.ncols(),
                a.nrows(),
                a.ncols()
            )));
        }
        if q.iter().chain(a.iter()).any(|v| !v.is_finite()) {
            return Err(LabError::InvalidOperator("non-finite matrix entry".into()));
        }
        let scale = max_abs(&q);
        for i in 0..n {
            for j in 0..i {
                let d = (q[(i, j)] - q[(j, i)]).abs();
                if d > cfg.sym_tol * scale {
                    return Err(LabError::InvalidOperator(format!(
                        "Q is not symmetric: |Q[{i}][{j}] - Q[{j}][{i}]| = {d:e}"
                    )));
                }
            }
        }
        let (values, _) = linalg::sym_eigen(&q);
        let lmax = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let lmin = values[n - 1];
        if lmin < -cfg.psd_tol * lmax {
            return Err(LabError::InvalidOperator(format!(
                "Q is indefinite: smallest eigenvalue {lmin:e} (largest |eigenvalue| {lmax:e})"
            )));
        }
        Ok(Self { q: linalg::symmetrize(&q), a })
    }

    pub fn from_rows(q: &[&[f64]], a: &[&[f64]], cfg: &Config) -> Result<Self> {
        Self::new(rows_to_mat(q)?, rows_to_mat(a)?, cfg)
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn q(&self) -> &Mat {
        &self.q
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    /// Smallest eigenvalue of Q is above `psd_tol * lambda_max`.
    pub fn q_positive_definite(&self, cfg: &Config) -> bool {
        let (values, _) = linalg::sym_eigen(&self.q);
        let lmax = values[0];
        lmax > 0.0 && values[values.len() - 1] > cfg.psd_tol.max(1e3 * f64::EPSILON) * lmax
    }
}

pub(crate) fn rows_to_mat(rows: &[&[f64]]) -> Result<Mat> {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    for (i, r) in rows.iter().enumerate() {
        if r.len() != m {
            return Err(LabError::InvalidOperator(format!(
                "row {i} has {} entries, expected {m}",
                r.len()
            )));
        }
    }
    Ok(Mat::from_fn(n, m, |i, j| rows[i][j]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stability {
    StrictlyStable,
    Critical,
    Unstable,
}

impl std::fmt::Display for Stability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stability::StrictlyStable => "strictly-stable",
            Stability::Critical => "critical",
            Stability::Unstable => "unstable",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReport {
    pub eigenvalues: Vec<Complex<f64>>,
    pub spectral_bound: f64,
    pub classification: Stability,
    /// The absolute tolerance used for the `s(A) = 0` test.
    pub stability_tol: f64,
}

/// Absolute tolerance for `s(A) = 0`.
pub fn stability_tolerance(a: &Mat, cfg: &Config) -> f64 {
    cfg.stability_tol * (1.0 + a.norm())
}

pub fn classify(bound: f64, tol: f64) -> Stability {
    if bound > tol {
        Stability::Unstable
    } else if bound < -tol {
        Stability::StrictlyStable
    } else {
        Stability::Critical
    }
}

/// Eigenvalues of a real square matrix via the real Schur form.
pub fn eigenvalues(a: &Mat) -> Result<Vec<Complex<f64>>> {
    if !a.is_square() {
        return Err(LabError::InvalidArgument("eigenvalues need a square matrix".into()));
    }
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = Schur::try_new(a.clone(), f64::EPSILON, 10_000).ok_or_else(|| {
        LabError::NumericalFailure(format!(
            "real Schur iteration did not converge (n = {}, |A|_F = {:e})",
            a.nrows(),
            a.norm()
        ))
    })?;
    let ev: Vec<Complex<f64>> = schur.complex_eigenvalues().iter().copied().collect();
    if ev.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(LabError::NumericalFailure("eigensolver produced non-finite values".into()));
    }
    Ok(ev)
}

/// Cluster labels by single linkage at radius `tol`, numbered by first appearance.
pub(crate) fn single_linkage(eig: &[Complex<f64>], tol: f64) -> Vec<usize> {
    let n = eig.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if (eig[i] - eig[j]).norm() <= tol {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut ids = vec![usize::MAX; n];
    let mut labels = vec![0; n];
    let mut next = 0;
    for (i, label) in labels.iter_mut().enumerate() {
        let r = find(&mut parent, i);
        if ids[r] == usize::MAX {
            ids[r] = next;
            next += 1;
        }
        *label = ids[r];
    }
    labels
}

/// Mean and multiplicity of each cluster.
pub(crate) fn cluster_centers(eig: &[Complex<f64>], labels: &[usize]) -> Vec<(Complex<f64>, usize)> {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut acc = vec![(Complex::new(0.0, 0.0), 0usize); k];
    for (z, &l) in eig.iter().zip(labels) {
        acc[l].0 += z;
        acc[l].1 += 1;
    }
    acc.into_iter().map(|(s, m)| (s / m as f64, m)).collect()
}

/// Eigenvalue clusters at the first radius of the ladder
/// `cluster_tol * |A|_F, x10, ..., cluster_tol_max * |A|_F` whose partition is
/// unchanged at ten times the radius; singletons when no rung qualifies.
///
/// A defective eigenvalue of index `k` splits by about `eps^{1/k} |A|` in
/// floating point, while the cluster mean (a trace) stays accurate to `O(eps)`.
pub fn eigenvalue_clusters(a: &Mat, cfg: &Config) -> Result<Vec<(Complex<f64>, usize)>> {
    let eig = eigenvalues(a)?;
    let norm = a.norm();
    let mut tol = cfg.cluster_tol * norm;
    while norm > 0.0 && tol <= cfg.cluster_tol_max * norm * (1.0 + 1e-12) {
        let labels = single_linkage(&eig, tol);
        if single_linkage(&eig, 10.0 * tol) == labels {
            return Ok(cluster_centers(&eig, &labels));
        }
        tol *= 10.0;
    }
    Ok(eig.into_iter().map(|z| (z, 1)).collect())
}

/// `s(A) = max Re(lambda)` with a stability classification.
///
/// The bound is taken over the cluster centres of the real Jordan
/// decomposition, whose clustering is validated by the chain construction;
/// when that decomposition is ambiguous, over [`eigenvalue_clusters`].
pub fn spectral_bound(a: &Mat, cfg: &Config) -> Result<SpectralReport> {
    let eigenvalues = eigenvalues(a)?;
    let bound = match crate::jordan::jordan_real_form(a, cfg) {
        Ok(d) => d.spectral_bound,
        Err(_) => eigenvalue_clusters(a, cfg)?.iter().map(|(z, _)| z.re).fold(f64::NEG_INFINITY, f64::max),
    };
    let tol = stability_tolerance(a, cfg);
    Ok(SpectralReport {
        classification: classify(bound, tol),
        spectral_bound: bound,
        eigenvalues,
        stability_tol: tol,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanReport {
    pub rank: usize,
    pub hypoelliptic: bool,
    /// `[sqrt(Q), A sqrt(Q), ..., A^{N-1} sqrt(Q)]`, N x N^2.
    pub controllability: Mat,
    pub singular_values: Vec<f64>,
}

/// Numerical rank of the controllability matrix.
pub fn kalman_rank(spec: &OperatorSpec, cfg: &Config) -> Result<KalmanReport> {
    let n = spec.dim();
    let sqrt_q = linalg::psd_sqrt(spec.q(), cfg.psd_tol)?;
    let mut controllability = Mat::zeros(n, n * n);
    let mut block = sqrt_q;
    for k in 0..n {
        controllability.view_mut((0, k * n), (n, n)).copy_from(&block);
        block = spec.a() * &block;
    }
    let (rank, singular_values) = linalg::numerical_rank(&controllability, cfg.rank_slack);
    Ok(KalmanReport {
        rank,
        hypoelliptic: rank == n,
        controllability,
        singular_values,
    })
}

/// `(P Q P^T, P A P^{-1})`.
pub fn conjugate_operator(spec: &OperatorSpec, p: &Mat, cfg: &Config) -> Result<OperatorSpec> {
    if p.nrows() != spec.dim() || p.ncols() != spec.dim() {
        return Err(LabError::InvalidArgument(format!(
            "change of basis must be {0}x{0}",
            spec.dim()
        )));
    }
    let p_inv = linalg::checked_inverse(p, cfg.cond_max)?;
    let q = p * spec.q() * p.transpose();
    let a = p * spec.a() * p_inv;
    OperatorSpec::new(linalg::symmetrize(&q), a, cfg)
}

/// `(delta Q, A)`.
pub fn scale_diffusion(spec: &OperatorSpec, delta: f64) -> Result<OperatorSpec> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(LabError::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    Ok(OperatorSpec {
        q: spec.q() * delta,
        a: spec.a().clone(),
    })
}

/// Convenience wrapper: `e^{tA}` for the drift of `spec`.
pub fn drift_exp(spec: &OperatorSpec, t: f64) -> Result<Mat> {
    matrix_exp(spec.a(), t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> Config {
        Config::default()
    }

    fn nilpotent3() -> Mat {
        Mat::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0])
    }

    #[test]
    fn kalman_identity_diffusion() {
        let a = Mat::from_row_slice(2, 2, &[3.0, -1.0, 0.5, 2.0]);
        let spec = OperatorSpec::new(Mat::identity(2, 2), a, &cfg()).unwrap();
        let k = kalman_rank(&spec, &cfg()).unwrap();
        assert_eq!(k.rank, 2);
        assert!(k.hypoelliptic);
        assert_eq!(k.controllability.shape(), (2, 4));
    }

    #[test]
    fn kalman_example_three_dimensional() {
        let spec = OperatorSpec::new(Mat::identity(3, 3), nilpotent3(), &cfg()).unwrap();
        assert!(kalman_rank(&spec, &cfg()).unwrap().hypoelliptic);
    }

    #[test]
    fn kalman_degenerate_cases() {
        let q = Mat::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let a = Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let k = kalman_rank(&OperatorSpec::new(q, a, &cfg()).unwrap(), &cfg()).unwrap();
        assert_eq!(k.rank, 2);
        assert!(k.hypoelliptic);

        let q = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let k = kalman_rank(&OperatorSpec::new(q, Mat::zeros(2, 2), &cfg()).unwrap(), &cfg()).unwrap();
        assert_eq!(k.rank, 1);
        assert!(!k.hypoelliptic);
    }

    #[test]
    fn invalid_diffusion_rejected() {
        let q = Mat::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(
            OperatorSpec::new(q, Mat::zeros(2, 2), &cfg()),
            Err(LabError::InvalidOperator(_))
        ));
        let q = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]);
        assert!(OperatorSpec::new(q, Mat::zeros(2, 2), &cfg()).is_err());
        assert!(OperatorSpec::new(Mat::identity(2, 2), Mat::zeros(3, 3), &cfg()).is_err());
        assert!(OperatorSpec::new(Mat::zeros(0, 0), Mat::zeros(0, 0), &cfg()).is_err());
    }

    #[test]
    fn spectral_examples() {
        let r = spectral_bound(&nilpotent3(), &cfg()).unwrap();
        assert_eq!(r.spectral_bound, 0.0);
        assert_eq!(r.classification, Stability::Critical);

        let h = 2.5;
        let rot = Mat::from_row_slice(2, 2, &[0.0, h, -h, 0.0]);
        let r = spectral_bound(&rot, &cfg()).unwrap();
        assert!(r.spectral_bound.abs() < 1e-15);
        assert_eq!(r.classification, Stability::Critical);
        let mut ims: Vec<f64> = r.eigenvalues.iter().map(|z| z.im).collect();
        ims.sort_by(f64::total_cmp);
        assert!((ims[0] + h).abs() < 1e-14 && (ims[1] - h).abs() < 1e-14);

        let d = Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, 2.0]));
        let r = spectral_bound(&d, &cfg()).unwrap();
        assert_eq!(r.spectral_bound, 2.0);
        assert_eq!(r.classification, Stability::Unstable);
    }

    #[test]
    fn conjugation_by_identity_and_scaling() {
        let spec = OperatorSpec::new(Mat::identity(3, 3), nilpotent3(), &cfg()).unwrap();
        let same = conjugate_operator(&spec, &Mat::identity(3, 3), &cfg()).unwrap();
        assert_eq!(same, spec);

        let delta: f64 = 0.25;
        let p = Mat::identity(3, 3) * delta.sqrt();
        let conj = conjugate_operator(&spec, &p, &cfg()).unwrap();
        let scaled = scale_diffusion(&spec, delta).unwrap();
        assert!((conj.q() - scaled.q()).norm() < 1e-15);
        assert!((conj.a() - scaled.a()).norm() < 1e-15);
    }

    #[test]
    fn singular_change_of_basis_rejected() {
        let spec = OperatorSpec::new(Mat::identity(2, 2), Mat::zeros(2, 2), &cfg()).unwrap();
        let p = Mat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(conjugate_operator(&spec, &p, &cfg()).is_err());
    }

    #[test]
    fn scale_diffusion_examples() {
        let spec = OperatorSpec::new(Mat::identity(2, 2), Mat::zeros(2, 2), &cfg()).unwrap();
        assert_eq!(scale_diffusion(&spec, 1.0).unwrap(), spec);
        let half = scale_diffusion(&spec, 0.5).unwrap();
        assert_eq!(half.q(), &(Mat::identity(2, 2) * 0.5));
        assert!(kalman_rank(&half, &cfg()).unwrap().hypoelliptic);
        assert!(scale_diffusion(&spec, 0.0).is_err());
        assert!(scale_diffusion(&spec, -1.0).is_err());
    }

    #[test]
    fn conjugated_jordan_blocks_stay_critical() {
        for k in 2..=4 {
            let j = Mat::from_fn(k, k, |r, c| if c == r + 1 { 1.0 } else { 0.0 });
            let p = Mat::identity(k, k) + Mat::from_fn(k, k, |r, c| 0.3 * ((3 * r + 7 * c) as f64).sin());
            let a = &p * &j * p.clone().try_inverse().unwrap();
            let raw = eigenvalues(&a).unwrap().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
            let s = spectral_bound(&a, &cfg()).unwrap();
            assert_eq!(s.classification, Stability::Critical, "k = {k}, raw {raw:e}, clustered {:e}", s.spectral_bound);
            assert_eq!(s.spectral_bound, 0.0);
        }
    }

    #[test]
    fn distinct_eigenvalues_are_not_merged() {
        let a = Mat::from_diagonal(&crate::linalg::Vector::from_vec(vec![-1.0, 1e-3, -2.0]));
        let s = spectral_bound(&a, &cfg()).unwrap();
        assert_eq!(s.spectral_bound, 1e-3);
        assert_eq!(s.classification, Stability::Unstable);
    }
}
