//! Which Liouville-type theorem, if any, forces constancy.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use super::HarmonicCandidate;
use crate::config::Config;
use crate::error::{LabError, Result};
use crate::growth::GrowthKind;
use crate::jordan::jordan_real_form;
use crate::operator::{kalman_rank, spectral_bound, OperatorSpec, Stability};
use crate::report::VerificationReport;
use crate::sampling::probe_points;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LiouvilleOutcome {
    /// Every non-negative harmonic function of the candidate's growth class is constant.
    ConstantForced,
    /// `s(A) > 0` and the candidate is a bounded nonconstant harmonic function.
    Counterexample,
    OutsideTheorems,
}

impl fmt::Display for LiouvilleOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LiouvilleOutcome::ConstantForced => "constant-forced",
            LiouvilleOutcome::Counterexample => "counterexample",
            LiouvilleOutcome::OutsideTheorems => "outside-theorems",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LiouvilleVerdict {
    pub verdict: LiouvilleOutcome,
    /// `bounded`, `bounded-group`, `sublinear`, `exponential-growth`, or `none`.
    pub theorem_applied: String,
    pub hypotheses: BTreeMap<String, bool>,
    pub candidate_non_negative: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl fmt::Display for LiouvilleVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "verdict: {} (theorem: {})", self.verdict, self.theorem_applied)
    }
}

/// Assemble a verdict from the structure of `spec`, the growth certificate of
/// `u`, and `evidence`, which must contain a passing residual report.
pub fn liouville_verdict(
    spec: &OperatorSpec,
    u: &HarmonicCandidate,
    evidence: &[VerificationReport],
    cfg: &Config,
) -> Result<LiouvilleVerdict> {
    let residuals: Vec<&VerificationReport> = evidence.iter().filter(|r| r.check == "residual").collect();
    if residuals.is_empty() {
        return Err(LabError::Precondition("a verdict needs a residual report in the evidence".into()));
    }
    if let Some(r) = residuals.iter().find(|r| !r.passed()) {
        return Err(LabError::Precondition(format!(
            "residual check failed for {} ({r}); Lu = 0 is not established",
            u.label
        )));
    }
    let kalman = kalman_rank(spec, cfg)?.hypoelliptic;
    let q_pd = spec.q_positive_definite(cfg);
    let spectral = spectral_bound(spec.a(), cfg)?;
    let stable = spectral.classification != Stability::Unstable;
    let bounded_group = stable && jordan_real_form(spec.a(), cfg).map(|d| d.bounded_group()).unwrap_or(false);
    let kind = u.growth.map(|g| g.kind);
    let mut hypotheses = BTreeMap::new();
    hypotheses.insert("kalman".to_string(), kalman);
    hypotheses.insert("q_positive_definite".to_string(), q_pd);
    hypotheses.insert("spectral_bound_nonpositive".to_string(), stable);
    hypotheses.insert("bounded_group".to_string(), bounded_group);
    hypotheses.insert("growth_certificate".to_string(), kind.is_some());
    let verdict = |v, theorem: &str, note: Option<String>| LiouvilleVerdict {
        verdict: v,
        theorem_applied: theorem.to_string(),
        hypotheses: hypotheses.clone(),
        candidate_non_negative: u.non_negative,
        note,
    };
    let signed_note = |needs_sign: bool| {
        (needs_sign && !u.non_negative).then(|| {
            format!(
                "the theorem concerns non-negative solutions; {} is signed, so the conclusion applies to its growth class",
                u.label
            )
        })
    };

    if !stable {
        if kind == Some(GrowthKind::Bounded) && nonconstant(u, cfg) {
            return Ok(verdict(
                LiouvilleOutcome::Counterexample,
                "bounded",
                Some(format!("s(A) = {:e} > 0 and {} is bounded, harmonic and nonconstant", spectral.spectral_bound, u.label)),
            ));
        }
        return Ok(verdict(LiouvilleOutcome::OutsideTheorems, "none", Some("s(A) > 0".into())));
    }
    let Some(kind) = kind else {
        return Ok(verdict(LiouvilleOutcome::OutsideTheorems, "none", Some("no growth certificate".into())));
    };
    if kind == GrowthKind::Bounded && kalman {
        return Ok(verdict(LiouvilleOutcome::ConstantForced, "bounded", None));
    }
    if q_pd && bounded_group {
        return Ok(verdict(LiouvilleOutcome::ConstantForced, "bounded-group", signed_note(true)));
    }
    if kind == GrowthKind::Sublinear && kalman {
        return Ok(verdict(LiouvilleOutcome::ConstantForced, "sublinear", signed_note(true)));
    }
    if q_pd {
        return Ok(verdict(LiouvilleOutcome::ConstantForced, "exponential-growth", signed_note(true)));
    }
    let note = if kalman && bounded_group {
        "Q is degenerate: the bounded-group case under the Kalman condition alone is open"
    } else {
        "Q is degenerate and the growth class is not covered under the Kalman condition alone"
    };
    Ok(verdict(LiouvilleOutcome::OutsideTheorems, "none", Some(note.into())))
}

fn nonconstant(u: &HarmonicCandidate, cfg: &Config) -> bool {
    let values: Vec<f64> = probe_points(u.dim(), 16, 0).iter().map(|x| u.value(x)).collect();
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    hi - lo > cfg.resid_tol.sqrt() * (1.0 + hi.abs().max(lo.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonic::{counterexample_1d, residual, Affine, Constant};
    use crate::linalg::Vector;
    use crate::report::Comparison;
    use crate::GrowthCertificate;

    fn cfg() -> Config {
        Config::default()
    }

    fn evidence(spec: &OperatorSpec, u: &HarmonicCandidate) -> Vec<VerificationReport> {
        vec![residual(spec, u, &probe_points(spec.dim(), 8, 0), &cfg()).unwrap()]
    }

    fn triple() -> OperatorSpec {
        OperatorSpec::from_rows(
            &[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]],
            &[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0], &[0.0, 0.0, 0.0]],
            &cfg(),
        )
        .unwrap()
    }

    #[test]
    fn exponential_growth_case() {
        let spec = triple();
        let u = HarmonicCandidate::new(
            "x3",
            Affine { b: Vector::from_vec(vec![0.0, 0.0, 1.0]), c: 0.0 },
            Some(GrowthCertificate::exponential(1.0).unwrap()),
            false,
        );
        let v = liouville_verdict(&spec, &u, &evidence(&spec, &u), &cfg()).unwrap();
        assert_eq!(v.verdict, LiouvilleOutcome::ConstantForced);
        assert_eq!(v.theorem_applied, "exponential-growth");
        assert!(!v.candidate_non_negative);
        assert!(v.note.is_some());
    }

    #[test]
    fn bounded_group_case() {
        let spec = OperatorSpec::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]], &[&[0.0, 1.0], &[-1.0, 0.0]], &cfg()).unwrap();
        let u = HarmonicCandidate::new("1", Constant { dim: 2, c: 1.0 }, Some(GrowthCertificate::exponential(1.0).unwrap()), true);
        let v = liouville_verdict(&spec, &u, &evidence(&spec, &u), &cfg()).unwrap();
        assert_eq!(v.theorem_applied, "bounded-group");
        assert!(v.note.is_none());
    }

    #[test]
    fn counterexample_case() {
        let spec = OperatorSpec::from_rows(&[&[1.0]], &[&[1.0]], &cfg()).unwrap();
        let u = counterexample_1d(1.0, 1.0).unwrap();
        let v = liouville_verdict(&spec, &u, &evidence(&spec, &u), &cfg()).unwrap();
        assert_eq!(v.verdict, LiouvilleOutcome::Counterexample);
    }

    #[test]
    fn bounded_degenerate_but_kalman() {
        let spec = OperatorSpec::from_rows(&[&[0.0, 0.0], &[0.0, 1.0]], &[&[0.0, 1.0], &[0.0, 0.0]], &cfg()).unwrap();
        let u = HarmonicCandidate::new("1", Constant { dim: 2, c: 1.0 }, Some(GrowthCertificate::bounded(1.0).unwrap()), true);
        let v = liouville_verdict(&spec, &u, &evidence(&spec, &u), &cfg()).unwrap();
        assert_eq!(v.theorem_applied, "bounded");
        let e = HarmonicCandidate::new("1", Constant { dim: 2, c: 1.0 }, Some(GrowthCertificate::exponential(1.0).unwrap()), true);
        let w = liouville_verdict(&spec, &e, &evidence(&spec, &e), &cfg()).unwrap();
        assert_eq!(w.verdict, LiouvilleOutcome::OutsideTheorems);
    }

    #[test]
    fn missing_or_failed_residual_is_a_precondition_error() {
        let spec = triple();
        let u = HarmonicCandidate::new("x1", Affine { b: Vector::from_vec(vec![1.0, 0.0, 0.0]), c: 0.0 }, None, false);
        assert!(matches!(liouville_verdict(&spec, &u, &[], &cfg()), Err(LabError::Precondition(_))));
        let failed = VerificationReport::compare("residual", 1.0, Comparison::AtMost, 0.0);
        assert!(matches!(liouville_verdict(&spec, &u, &[failed], &cfg()), Err(LabError::Precondition(_))));
    }

    #[test]
    fn no_certificate_is_outside() {
        let spec = triple();
        let u = HarmonicCandidate::new("1", Constant { dim: 3, c: 1.0 }, None, true);
        let v = liouville_verdict(&spec, &u, &evidence(&spec, &u), &cfg()).unwrap();
        assert_eq!(v.verdict, LiouvilleOutcome::OutsideTheorems);
    }
}
