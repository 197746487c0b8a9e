//! Quasi-constancy with respect to the Jordan blocks of the drift.

use super::{BlockKind, JordanDecomposition};
use crate::config::Config;
use crate::error::{LabError, Result};
use crate::harmonic::HarmonicCandidate;
use crate::report::{Comparison, VerificationReport};
use crate::sampling::ball_points;

/// Canonical coordinates on which a quasi-constant function may not depend:
/// the first `k-1` of every `J(0,k)` and the first `2g-2` of every `J(0,d,g)`.
pub fn forbidden_coordinates(dec: &JordanDecomposition) -> Vec<usize> {
    let mut out = Vec::new();
    for b in &dec.blocks {
        let count = match b.kind {
            BlockKind::NilpotentJordan { k } => k - 1,
            BlockKind::RotationJordan { g, .. } => 2 * g - 2,
            _ => 0,
        };
        out.extend(b.offset..b.offset + count);
    }
    out
}

/// Gradient of `w(y) = u(P y)` at `samples` Halton points of the ball of
/// `radius`: pass iff every forbidden partial is below
/// `grad_tol * (1 + max |Dw|)`.
pub fn quasi_constancy_check(
    u: &HarmonicCandidate,
    dec: &JordanDecomposition,
    samples: usize,
    radius: f64,
    seed: u64,
    cfg: &Config,
) -> Result<VerificationReport> {
    let n = dec.dim();
    if u.dim() != n {
        return Err(LabError::InvalidArgument(format!(
            "candidate has dimension {}, decomposition {n}",
            u.dim()
        )));
    }
    if !dec.has_jordan_blocks() {
        return Ok(VerificationReport::not_applicable(
            "quasi-constancy",
            "no nilpotent or rotation Jordan block",
        )
        .param("label", u.label.clone()));
    }
    if samples == 0 || !(radius > 0.0) {
        return Err(LabError::InvalidArgument("need samples > 0 and radius > 0".into()));
    }
    let forbidden = forbidden_coordinates(dec);
    let mut worst = 0.0_f64;
    let mut worst_at: Option<(Vec<f64>, usize)> = None;
    let mut max_grad = 0.0_f64;
    for y in ball_points(n, samples, radius, seed) {
        let x = &dec.p * &y;
        let g = dec.p.transpose() * u.gradient(&x);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(LabError::Evaluation {
                point: x.iter().copied().collect(),
                message: format!("gradient of {} is not finite", u.label),
            });
        }
        max_grad = max_grad.max(g.norm());
        for &i in &forbidden {
            if g[i].abs() > worst {
                worst = g[i].abs();
                worst_at = Some((y.iter().copied().collect(), i));
            }
        }
    }
    let threshold = cfg.grad_tol * (1.0 + max_grad);
    let mut report = VerificationReport::compare("quasi-constancy", worst, Comparison::AtMost, threshold)
        .param("label", u.label.clone())
        .param("blocks", dec.summary())
        .param("forbidden", forbidden.clone())
        .param("samples", samples)
        .param("radius", radius)
        .param("seed", seed)
        .param("grad_tol", cfg.grad_tol);
    if !report.passed() {
        if let Some((y, i)) = worst_at {
            report = report.witness(&y, worst, Some(format!("canonical partial derivative {i}")));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonic::{Affine, Constant};
    use crate::jordan::jordan_real_form;
    use crate::linalg::{Mat, Vector};

    fn triple() -> JordanDecomposition {
        let a = Mat::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        jordan_real_form(&a, &Config::default()).unwrap()
    }

    fn affine(b: [f64; 3]) -> HarmonicCandidate {
        HarmonicCandidate::new("affine", Affine { b: Vector::from_row_slice(&b), c: 0.0 }, None, false)
    }

    #[test]
    fn forbidden_for_nilpotent_three() {
        assert_eq!(forbidden_coordinates(&triple()), vec![0, 1]);
    }

    #[test]
    fn last_coordinate_passes() {
        let r = quasi_constancy_check(&affine([0.0, 0.0, 1.0]), &triple(), 64, 5.0, 0, &Config::default()).unwrap();
        assert!(r.passed(), "{r}");
    }

    #[test]
    fn first_coordinate_fails_with_witness() {
        let r = quasi_constancy_check(&affine([1.0, 0.0, 0.0]), &triple(), 64, 5.0, 0, &Config::default()).unwrap();
        assert!(!r.passed());
        assert_eq!(r.witnesses.len(), 1);
    }

    #[test]
    fn constant_passes() {
        let c = HarmonicCandidate::new("one", Constant { dim: 3, c: 1.0 }, None, true);
        assert!(quasi_constancy_check(&c, &triple(), 16, 1.0, 0, &Config::default()).unwrap().passed());
    }

    #[test]
    fn not_applicable_without_jordan_blocks() {
        let dec = jordan_real_form(&Mat::from_diagonal(&Vector::from_vec(vec![-1.0, -2.0, 0.0])), &Config::default())
            .unwrap();
        let r = quasi_constancy_check(&affine([0.0, 0.0, 1.0]), &dec, 16, 1.0, 0, &Config::default()).unwrap();
        assert_eq!(r.verdict, crate::report::Verdict::NotApplicable);
    }
}
