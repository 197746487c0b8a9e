//! Scalar fields with exact derivatives and the candidate wrapper.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::growth::GrowthCertificate;
use crate::linalg::{Mat, Vector};
use crate::report::{Comparison, VerificationReport};

/// A smooth function `R^N -> R` with exact gradient and Hessian.
pub trait ScalarField: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &Vector) -> f64;
    fn gradient(&self, x: &Vector) -> Vector;
    fn hessian(&self, x: &Vector) -> Mat;
}

/// `u = c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constant {
    pub dim: usize,
    pub c: f64,
}

impl ScalarField for Constant {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, _: &Vector) -> f64 {
        self.c
    }
    fn gradient(&self, _: &Vector) -> Vector {
        Vector::zeros(self.dim)
    }
    fn hessian(&self, _: &Vector) -> Mat {
        Mat::zeros(self.dim, self.dim)
    }
}

/// `u = b.x + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub b: Vector,
    pub c: f64,
}

impl ScalarField for Affine {
    fn dim(&self) -> usize {
        self.b.len()
    }
    fn value(&self, x: &Vector) -> f64 {
        self.b.dot(x) + self.c
    }
    fn gradient(&self, _: &Vector) -> Vector {
        self.b.clone()
    }
    fn hessian(&self, _: &Vector) -> Mat {
        Mat::zeros(self.b.len(), self.b.len())
    }
}

/// `u = x^T M x + b.x + c` with `M` symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub m: Mat,
    pub b: Vector,
    pub c: f64,
}

impl Quadratic {
    pub fn new(m: Mat, b: Vector, c: f64) -> Result<Self> {
        let n = b.len();
        if m.nrows() != n || m.ncols() != n {
            return Err(LabError::InvalidArgument(format!(
                "quadratic form is {}x{}, linear part has length {n}",
                m.nrows(),
                m.ncols()
            )));
        }
        let m = crate::linalg::symmetrize(&m);
        Ok(Self { m, b, c })
    }
}

impl ScalarField for Quadratic {
    fn dim(&self) -> usize {
        self.b.len()
    }
    fn value(&self, x: &Vector) -> f64 {
        x.dot(&(&self.m * x)) + self.b.dot(x) + self.c
    }
    fn gradient(&self, x: &Vector) -> Vector {
        &self.m * x * 2.0 + &self.b
    }
    fn hessian(&self, _: &Vector) -> Mat {
        &self.m * 2.0
    }
}

/// `u(x) = phi(l.x)` with `phi(s) = int_0^s e^{-a y^2/q} dy + sqrt(pi q / a) / 2`,
/// which solves `(q/2) phi'' + a s phi' = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErfLift {
    pub ell: Vector,
    pub a: f64,
    pub q: f64,
}

impl ErfLift {
    pub fn new(ell: Vector, a: f64, q: f64) -> Result<Self> {
        if !(a > 0.0 && q > 0.0 && a.is_finite() && q.is_finite()) {
            return Err(LabError::InvalidArgument(format!("need a > 0 and q > 0, got a = {a}, q = {q}")));
        }
        Ok(Self { ell, a, q })
    }

    /// `sup u - inf u`.
    pub fn range(&self) -> f64 {
        (std::f64::consts::PI * self.q / self.a).sqrt()
    }

    fn profile(&self, s: f64) -> (f64, f64, f64) {
        let k = (self.a / self.q).sqrt();
        let half = 0.5 * self.range();
        let d1 = (-self.a * s * s / self.q).exp();
        let phi = half * (libm::erf(s * k) + 1.0);
        let d2 = -2.0 * self.a * s / self.q * d1;
        (phi, d1, d2)
    }
}

impl ScalarField for ErfLift {
    fn dim(&self) -> usize {
        self.ell.len()
    }
    fn value(&self, x: &Vector) -> f64 {
        self.profile(self.ell.dot(x)).0
    }
    fn gradient(&self, x: &Vector) -> Vector {
        &self.ell * self.profile(self.ell.dot(x)).1
    }
    fn hessian(&self, x: &Vector) -> Mat {
        &self.ell * self.ell.transpose() * self.profile(self.ell.dot(x)).2
    }
}

/// `u = e^{|x|^2}`; a super-exponential negative control.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpSquare {
    pub dim: usize,
}

impl ScalarField for ExpSquare {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &Vector) -> f64 {
        x.norm_squared().exp()
    }
    fn gradient(&self, x: &Vector) -> Vector {
        x * (2.0 * self.value(x))
    }
    fn hessian(&self, x: &Vector) -> Mat {
        let e = self.value(x);
        (Mat::identity(self.dim, self.dim) * 2.0 + x * x.transpose() * 4.0) * e
    }
}

type ValueFn = dyn Fn(&Vector) -> f64 + Send + Sync;
type GradFn = dyn Fn(&Vector) -> Vector + Send + Sync;
type HessFn = dyn Fn(&Vector) -> Mat + Send + Sync;

/// A field assembled from closures.
pub struct FnField {
    dim: usize,
    value: Box<ValueFn>,
    gradient: Box<GradFn>,
    hessian: Box<HessFn>,
}

impl FnField {
    pub fn new(
        dim: usize,
        value: impl Fn(&Vector) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
        hessian: impl Fn(&Vector) -> Mat + Send + Sync + 'static,
    ) -> Self {
        Self { dim, value: Box::new(value), gradient: Box::new(gradient), hessian: Box::new(hessian) }
    }
}

impl ScalarField for FnField {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &Vector) -> f64 {
        (self.value)(x)
    }
    fn gradient(&self, x: &Vector) -> Vector {
        (self.gradient)(x)
    }
    fn hessian(&self, x: &Vector) -> Mat {
        (self.hessian)(x)
    }
}

/// `w(y) = u(P y)`.
pub struct Composed {
    inner: Arc<dyn ScalarField>,
    p: Mat,
}

impl ScalarField for Composed {
    fn dim(&self) -> usize {
        self.p.ncols()
    }
    fn value(&self, y: &Vector) -> f64 {
        self.inner.value(&(&self.p * y))
    }
    fn gradient(&self, y: &Vector) -> Vector {
        self.p.transpose() * self.inner.gradient(&(&self.p * y))
    }
    fn hessian(&self, y: &Vector) -> Mat {
        self.p.transpose() * self.inner.hessian(&(&self.p * y)) * &self.p
    }
}

pub fn compose_linear(u: Arc<dyn ScalarField>, p: Mat) -> Result<Composed> {
    if p.nrows() != u.dim() {
        return Err(LabError::InvalidArgument(format!(
            "change of variables has {} rows, field has dimension {}",
            p.nrows(),
            u.dim()
        )));
    }
    Ok(Composed { inner: u, p })
}

/// A harmonic-function candidate.
#[derive(Clone)]
pub struct HarmonicCandidate {
    pub label: String,
    pub field: Arc<dyn ScalarField>,
    pub growth: Option<GrowthCertificate>,
    /// Declared, and only spot-checked.
    pub non_negative: bool,
}

impl fmt::Debug for HarmonicCandidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HarmonicCandidate")
            .field("label", &self.label)
            .field("dim", &self.field.dim())
            .field("growth", &self.growth)
            .field("non_negative", &self.non_negative)
            .finish()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CandidateSummary {
    pub label: String,
    pub growth: Option<GrowthCertificate>,
    pub non_negative: bool,
}

impl HarmonicCandidate {
    pub fn new(
        label: impl Into<String>,
        field: impl ScalarField + 'static,
        growth: Option<GrowthCertificate>,
        non_negative: bool,
    ) -> Self {
        Self { label: label.into(), field: Arc::new(field), growth, non_negative }
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    pub fn value(&self, x: &Vector) -> f64 {
        self.field.value(x)
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        self.field.gradient(x)
    }

    pub fn hessian(&self, x: &Vector) -> Mat {
        self.field.hessian(x)
    }

    pub fn summary(&self) -> CandidateSummary {
        CandidateSummary { label: self.label.clone(), growth: self.growth, non_negative: self.non_negative }
    }
}

/// The bounded, non-negative, nonconstant solution of `(q/2) u'' + a x u' = 0`.
pub fn counterexample_1d(a: f64, q: f64) -> Result<HarmonicCandidate> {
    let lift = ErfLift::new(Vector::from_element(1, 1.0), a, q)?;
    let growth = GrowthCertificate::bounded(lift.range())?;
    Ok(HarmonicCandidate::new(format!("counterexample(a={a}, q={q})"), lift, Some(growth), true))
}

/// Exact derivatives against central differences (`h = 1e-5`): gradient to
/// `1e-6` and Hessian to `1e-4`, relative; Hessian symmetry; declared
/// non-negativity at every point.
pub fn derivative_consistency(u: &HarmonicCandidate, points: &[Vector]) -> Result<VerificationReport> {
    const H: f64 = 1e-5;
    let n = u.dim();
    let mut worst = 0.0_f64;
    let mut witness: Option<(Vector, String)> = None;
    let mut note = |err: f64, x: &Vector, what: String, worst: &mut f64| {
        if err > *worst {
            *worst = err;
            witness = Some((x.clone(), what));
        }
    };
    for x in points {
        if x.len() != n {
            return Err(LabError::InvalidArgument(format!("probe has dimension {}, candidate {n}", x.len())));
        }
        let v = u.value(x);
        let g = u.gradient(x);
        let h = u.hessian(x);
        if !v.is_finite() || g.iter().chain(h.iter()).any(|c| !c.is_finite()) {
            return Err(LabError::Evaluation {
                point: x.iter().copied().collect(),
                message: format!("candidate {} has non-finite value or derivatives", u.label),
            });
        }
        let gscale = 1.0 + g.amax();
        let hscale = 1.0 + h.amax();
        for i in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += H;
            xm[i] -= H;
            let fd = (u.value(&xp) - u.value(&xm)) / (2.0 * H);
            // tolerance 1e-6 normalized to 1
            note((fd - g[i]).abs() / gscale / 1e-6, x, format!("gradient component {i}"), &mut worst);
            let hd = (u.gradient(&xp) - u.gradient(&xm)) / (2.0 * H);
            for j in 0..n {
                note((hd[j] - h[(j, i)]).abs() / hscale / 1e-4, x, format!("hessian entry ({j},{i})"), &mut worst);
                note((h[(i, j)] - h[(j, i)]).abs() / hscale / 1e-12, x, "hessian symmetry".into(), &mut worst);
            }
        }
        if u.non_negative && v < 0.0 {
            note(f64::INFINITY, x, format!("declared non-negative but u = {v:e}"), &mut worst);
        }
    }
    let mut report = VerificationReport::compare("derivative-consistency", worst, Comparison::AtMost, 1.0)
        .param("label", u.label.clone())
        .param("points", points.len())
        .param("step", H)
        .param("gradient_rtol", 1e-6)
        .param("hessian_rtol", 1e-4)
        .param("non_negative", if u.non_negative { "declared, spot-checked" } else { "not declared" });
    if !report.passed() {
        if let Some((x, what)) = witness {
            report = report.witness(x.as_slice(), worst, Some(what));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::probe_points;

    #[test]
    fn counterexample_solves_its_ode() {
        let u = counterexample_1d(1.0, 1.0).unwrap();
        for i in 0..=100 {
            let x = Vector::from_element(1, -5.0 + 0.1 * i as f64);
            let lu = 0.5 * u.hessian(&x)[(0, 0)] + x[0] * u.gradient(&x)[0];
            assert!(lu.abs() < 1e-15);
        }
        let zero = Vector::from_element(1, 0.0);
        assert!((u.value(&zero) - std::f64::consts::PI.sqrt() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn counterexample_range_is_sqrt_pi_over_a_q() {
        let u = counterexample_1d(2.0, 3.0).unwrap();
        let hi = u.value(&Vector::from_element(1, 50.0));
        let lo = u.value(&Vector::from_element(1, -50.0));
        assert!((hi - lo - (std::f64::consts::PI * 1.5).sqrt()).abs() < 1e-14);
        assert!(lo >= 0.0);
        assert!(counterexample_1d(0.0, 1.0).is_err());
    }

    #[test]
    fn exact_derivatives_agree_with_differences() {
        let pts = probe_points(3, 10, 1);
        let q = Quadratic::new(
            Mat::from_row_slice(3, 3, &[1.0, 0.5, 0.0, 0.5, -2.0, 0.1, 0.0, 0.1, 0.3]),
            Vector::from_vec(vec![1.0, 0.0, -1.0]),
            2.0,
        )
        .unwrap();
        let lift = ErfLift::new(Vector::from_vec(vec![0.3, -0.2, 0.1]), 1.0, 2.0).unwrap();
        for u in [
            HarmonicCandidate::new("q", q, None, false),
            HarmonicCandidate::new("lift", lift, None, true),
            HarmonicCandidate::new("affine", Affine { b: Vector::from_vec(vec![1.0, 2.0, 3.0]), c: 0.0 }, None, false),
        ] {
            let r = derivative_consistency(&u, &pts).unwrap();
            assert!(r.passed(), "{}: {r}", u.label);
        }
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let bad = FnField::new(
            1,
            |x| x[0] * x[0],
            |x| Vector::from_element(1, x[0]),
            |_| Mat::from_element(1, 1, 2.0),
        );
        let u = HarmonicCandidate::new("bad", bad, None, false);
        let r = derivative_consistency(&u, &probe_points(1, 5, 0)).unwrap();
        assert!(!r.passed());
        assert_eq!(r.witnesses.len(), 1);
    }

    #[test]
    fn false_non_negativity_is_caught() {
        let u = HarmonicCandidate::new("x", Affine { b: Vector::from_element(1, 1.0), c: 0.0 }, None, true);
        let r = derivative_consistency(&u, &probe_points(1, 5, 0)).unwrap();
        assert!(!r.passed());
    }

    #[test]
    fn composition_chain_rule() {
        let u: Arc<dyn ScalarField> = Arc::new(ExpSquare { dim: 2 });
        let p = Mat::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        let w = compose_linear(u.clone(), p.clone()).unwrap();
        let y = Vector::from_vec(vec![0.1, -0.2]);
        assert!((w.value(&y) - u.value(&(&p * &y))).abs() < 1e-15);
        let c = HarmonicCandidate::new("w", w, None, true);
        assert!(derivative_consistency(&c, &[y]).unwrap().passed());
    }
}
