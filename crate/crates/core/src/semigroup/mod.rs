//! Gaussian measures, the Gramian, and the OU semigroup
//! `P_t f(x) = E f(e^{tA} x + Y)`, `Y ~ N(0, Q_t)`.

mod apply;
mod gramian;
mod moment;
pub mod quadrature;

pub use apply::{kwapien_check, kwapien_constant, semigroup_apply, Engine, SemigroupValue};
pub use gramian::{gramian, GramianMethod, GramianResult};
pub use moment::{exp_moment_bound_check, folded_normal_moment};

use serde::Serialize;

use crate::config::Config;
use crate::error::{LabError, Result};
use crate::linalg::{max_abs, sym_eigen, symmetrize, Mat, Vector};
use crate::operator::{kalman_rank, OperatorSpec};

/// `N(mean, cov)` with a (possibly rank-deficient) factor `F F^T = cov`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMeasure {
    pub mean: Vector,
    pub cov: Mat,
    /// `N x r`, `r` the numerical rank of `cov`.
    pub factor: Mat,
}

impl GaussianMeasure {
    pub fn new(mean: Vector, cov: Mat, cfg: &Config) -> Result<Self> {
        let n = mean.len();
        if cov.nrows() != n || cov.ncols() != n {
            return Err(LabError::InvalidArgument(format!(
                "covariance is {}x{}, mean has length {n}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if cov.iter().chain(mean.iter()).any(|v| !v.is_finite()) {
            return Err(LabError::InvalidArgument("non-finite mean or covariance".into()));
        }
        let scale = max_abs(&cov);
        if max_abs(&(&cov - cov.transpose())) > cfg.sym_tol.max(1e-12) * scale.max(f64::MIN_POSITIVE) {
            return Err(LabError::InvalidArgument("covariance is not symmetric".into()));
        }
        let cov = symmetrize(&cov);
        let factor = psd_factor(&cov, cfg)?;
        Ok(Self { mean, cov, factor })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn rank(&self) -> usize {
        self.factor.ncols()
    }

    /// `mean + factor * z`.
    pub fn transform(&self, z: &[f64]) -> Vector {
        let mut y = self.mean.clone();
        for (k, &zk) in z.iter().enumerate() {
            y.axpy(zk, &self.factor.column(k), 1.0);
        }
        y
    }
}

fn psd_factor(cov: &Mat, cfg: &Config) -> Result<Mat> {
    let n = cov.nrows();
    let (values, vectors) = sym_eigen(cov);
    let lmax = values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if let Some(&low) = values.iter().find(|&&v| v < -cfg.psd_tol * lmax) {
        return Err(LabError::InvalidArgument(format!(
            "covariance is indefinite: eigenvalue {low:e} (largest {lmax:e})"
        )));
    }
    let keep = n as f64 * f64::EPSILON * lmax * cfg.rank_slack;
    let cols: Vec<usize> = (0..n).filter(|&i| values[i] > keep && values[i] > 0.0).collect();
    let mut factor = Mat::zeros(n, cols.len());
    for (dst, &i) in cols.iter().enumerate() {
        factor.set_column(dst, &(vectors.column(i) * values[i].sqrt()));
    }
    Ok(factor)
}

/// Law of `X_t^x`: `N(e^{tA} x, Q_t)`.
pub fn transition(spec: &OperatorSpec, x: &Vector, t: f64, cfg: &Config) -> Result<GaussianMeasure> {
    check_point(spec, x)?;
    if t == 0.0 {
        return GaussianMeasure::new(x.clone(), Mat::zeros(spec.dim(), spec.dim()), cfg);
    }
    let e = crate::expm::matrix_exp(spec.a(), t)?;
    let g = gramian(spec, t, GramianMethod::BlockExp, cfg)?;
    GaussianMeasure::new(&e * x, g.qt, cfg)
}

pub(crate) fn check_point(spec: &OperatorSpec, x: &Vector) -> Result<()> {
    if x.len() != spec.dim() {
        return Err(LabError::InvalidArgument(format!(
            "point has dimension {}, operator has {}",
            x.len(),
            spec.dim()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(LabError::InvalidArgument("point has non-finite coordinates".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayNorm {
    pub t: f64,
    pub value: f64,
    /// Condition number of `Q_t`.
    pub condition: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// `|Q_t^{-1/2} e^{tA}|_2`, with `Q_t^{-1/2}` from the symmetric
/// eigendecomposition. Eigenvalues below `inv_tol * lambda_max` are floored
/// and reported.
pub fn decay_norm(spec: &OperatorSpec, t: f64, cfg: &Config) -> Result<DecayNorm> {
    if !kalman_rank(spec, cfg)?.hypoelliptic {
        return Err(LabError::Precondition(
            "decay norm needs the Kalman rank condition (Q_t is singular)".into(),
        ));
    }
    let g = gramian(spec, t, GramianMethod::BlockExp, cfg)?;
    let e = crate::expm::matrix_exp(spec.a(), t)?;
    let (inv_sqrt, warning) = inverse_sqrt(&g.qt, cfg.inv_tol);
    let value = crate::linalg::spectral_norm(&(inv_sqrt * e));
    Ok(DecayNorm { t, value, condition: g.condition_number, warning })
}

/// `Q^{-1/2}` with eigenvalue floor `floor * lambda_max`.
pub(crate) fn inverse_sqrt(q: &Mat, floor: f64) -> (Mat, Option<String>) {
    let (values, vectors) = sym_eigen(q);
    let lmax = values[0].max(f64::MIN_POSITIVE);
    let min = floor * lmax;
    let mut warning = None;
    let d = Vector::from_iterator(
        values.len(),
        values.iter().map(|&v| {
            if v < min {
                warning = Some(format!(
                    "ill-conditioned Gramian: eigenvalue {v:e} floored at {min:e}"
                ));
                1.0 / min.sqrt()
            } else {
                1.0 / v.sqrt()
            }
        }),
    );
    (&vectors * Mat::from_diagonal(&d) * vectors.transpose(), warning)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> Config {
        Config::default()
    }

    #[test]
    fn factor_reproduces_covariance() {
        let cov = Mat::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.0, 0.2, 0.0, 0.2, 0.7]);
        let m = GaussianMeasure::new(Vector::zeros(3), cov.clone(), &cfg()).unwrap();
        assert_eq!(m.rank(), 3);
        let back = &m.factor * m.factor.transpose();
        assert!((back - &cov).norm() <= 1e-10 * (1.0 + cov.norm()));
    }

    #[test]
    fn degenerate_covariance_has_lower_rank() {
        let cov = Mat::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let m = GaussianMeasure::new(Vector::zeros(2), cov.clone(), &cfg()).unwrap();
        assert_eq!(m.rank(), 1);
        assert!((&m.factor * m.factor.transpose() - cov).norm() < 1e-12);
    }

    #[test]
    fn indefinite_covariance_rejected() {
        let cov = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(GaussianMeasure::new(Vector::zeros(2), cov, &cfg()).is_err());
    }

    #[test]
    fn decay_norm_brownian() {
        let spec = OperatorSpec::new(Mat::identity(2, 2), Mat::zeros(2, 2), &cfg()).unwrap();
        for &t in &[0.1, 1.0, 7.0] {
            let d = decay_norm(&spec, t, &cfg()).unwrap();
            assert!((d.value - t.powf(-0.5)).abs() < 1e-12);
            assert!(d.warning.is_none());
        }
    }

    #[test]
    fn decay_norm_scalar_unstable() {
        let spec = OperatorSpec::new(Mat::identity(1, 1), Mat::identity(1, 1), &cfg()).unwrap();
        for &t in &[0.5_f64, 1.0, 10.0] {
            let e = (2.0 * t).exp();
            let exact = (2.0 * e / (e - 1.0)).sqrt();
            let d = decay_norm(&spec, t, &cfg()).unwrap();
            assert!((d.value - exact).abs() < 1e-10, "t={t}");
        }
    }

    #[test]
    fn decay_norm_needs_kalman() {
        let q = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let spec = OperatorSpec::new(q, Mat::zeros(2, 2), &cfg()).unwrap();
        assert!(matches!(decay_norm(&spec, 1.0, &cfg()), Err(LabError::Precondition(_))));
    }

    #[test]
    fn transition_at_zero_is_a_point_mass() {
        let spec = OperatorSpec::new(Mat::identity(2, 2), Mat::zeros(2, 2), &cfg()).unwrap();
        let x = Vector::from_vec(vec![1.0, 2.0]);
        let m = transition(&spec, &x, 0.0, &cfg()).unwrap();
        assert_eq!(m.rank(), 0);
        assert_eq!(m.transform(&[]), x);
    }
}
