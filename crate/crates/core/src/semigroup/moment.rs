use std::f64::consts::PI;

use super::GaussianMeasure;
use crate::config::Config;
use crate::error::{LabError, Result};
use crate::linalg::{spectral_norm, Mat, Vector};
use crate::mc;
use crate::report::{Comparison, VerificationReport};

/// Degree of the Taylor control variate used for rank-one covariances.
const CV_DEGREE: i32 = 12;

/// `E|Z|^k` for a standard normal `Z`.
pub fn folded_normal_moment(k: u32) -> f64 {
    let k = k as f64;
    2f64.powf(k / 2.0) * libm::tgamma((k + 1.0) / 2.0) / PI.sqrt()
}

/// Monte Carlo estimate of `E e^{r|Y|}`, `Y ~ N(0, R)`, against
/// `2^n e^{(n/2) r^2 |R|}`. Pass iff `estimate - 3 stderr <= bound`.
///
/// For rank-one `R` the estimator subtracts the Taylor polynomial of degree
/// 12 in `s|Z|` and adds back its exact mean.
pub fn exp_moment_bound_check(r_cov: &Mat, r: f64, n: usize, seed: u64, cfg: &Config) -> Result<VerificationReport> {
    if !(r >= 0.0 && r.is_finite()) {
        return Err(LabError::InvalidArgument(format!("r must be >= 0, got {r}")));
    }
    if n < 2 {
        return Err(LabError::InvalidArgument("need at least two samples".into()));
    }
    let dim = r_cov.nrows();
    let measure = GaussianMeasure::new(Vector::zeros(dim), r_cov.clone(), cfg)?;
    let norm = spectral_norm(&measure.cov);
    let bound = 2f64.powi(dim as i32) * (0.5 * dim as f64 * r * r * norm).exp();
    let rank = measure.rank();
    let (estimate, stderr, method) = match rank {
        0 => (1.0, 0.0, "exact"),
        1 => {
            let s = r * measure.factor.column(0).norm();
            let mean_cv: f64 = (0..=CV_DEGREE)
                .map(|k| s.powi(k) * folded_normal_moment(k as u32) / factorial(k))
                .sum();
            let stats = mc::estimate(n, seed, 1, 1, |z, out| {
                let v = s * z[0].abs();
                let mut taylor = 0.0;
                let mut term = 1.0;
                for k in 0..=CV_DEGREE {
                    if k > 0 {
                        term *= v / k as f64;
                    }
                    taylor += term;
                }
                out[0] = v.exp() - taylor;
                Ok(())
            })?;
            (stats[0].mean + mean_cv, stats[0].stderr(), "taylor-control-variate")
        }
        _ => {
            let stats = mc::estimate(n, seed, rank, 1, |z, out| {
                out[0] = (r * measure.transform(z).norm()).exp();
                Ok(())
            })?;
            (stats[0].mean, stats[0].stderr(), "plain")
        }
    };
    Ok(
        VerificationReport::compare("exp-moment-bound", estimate - 3.0 * stderr, Comparison::AtMost, bound)
            .param("estimate", estimate)
            .param("stderr", stderr)
            .param("bound", bound)
            .param("method", method)
            .param("dim", dim)
            .param("r", r)
            .param("n", n)
            .param("seed", seed),
    )
}

fn factorial(k: i32) -> f64 {
    (1..=k).map(|i| i as f64).product()
}
