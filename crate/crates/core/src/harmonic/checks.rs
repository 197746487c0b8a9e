//! Residual, semigroup invariance, convexity and gradient growth checks.

use rayon::prelude::*;
use serde_json::json;

use super::HarmonicCandidate;
use crate::config::Config;
use crate::error::{LabError, Result};
use crate::expm::matrix_exp;
use crate::linalg::{Mat, Vector};
use crate::mc::derive_seed;
use crate::operator::OperatorSpec;
use crate::report::{Comparison, VerificationReport};
use crate::sampling::sphere_points;
use crate::semigroup::{semigroup_apply, Engine};

fn finite_or_err(u: &HarmonicCandidate, x: &Vector, v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(LabError::Evaluation {
            point: x.iter().copied().collect(),
            message: format!("{what} of {} is {v}", u.label),
        })
    }
}

/// `Lu(x) = 1/2 tr(Q D^2 u(x)) + <Ax, Du(x)>`.
pub fn apply_operator(spec: &OperatorSpec, u: &HarmonicCandidate, x: &Vector) -> Result<f64> {
    let h = u.hessian(x);
    let g = u.gradient(x);
    if h.iter().chain(g.iter()).any(|v| !v.is_finite()) {
        return Err(LabError::Evaluation {
            point: x.iter().copied().collect(),
            message: format!("derivatives of {} are not finite", u.label),
        });
    }
    let trace = spec.q().component_mul(&h).sum();
    Ok(0.5 * trace + (spec.a() * x).dot(&g))
}

fn check_dim(spec: &OperatorSpec, u: &HarmonicCandidate) -> Result<()> {
    if u.dim() != spec.dim() {
        return Err(LabError::InvalidArgument(format!(
            "candidate {} has dimension {}, operator {}",
            u.label,
            u.dim(),
            spec.dim()
        )));
    }
    Ok(())
}

/// Pass iff `max |Lu| <= resid_tol * (1 + max |u|)` over `points`.
pub fn residual(spec: &OperatorSpec, u: &HarmonicCandidate, points: &[Vector], cfg: &Config) -> Result<VerificationReport> {
    check_dim(spec, u)?;
    let values: Vec<(f64, f64)> = points
        .par_iter()
        .map(|x| {
            if x.iter().any(|v| !v.is_finite()) {
                return Err(LabError::InvalidArgument("residual probe is not finite".into()));
            }
            let lu = apply_operator(spec, u, x)?;
            let v = finite_or_err(u, x, u.value(x), "value")?;
            Ok((lu, v))
        })
        .collect::<Result<_>>()?;
    let mut worst = 0.0_f64;
    let mut worst_at = None;
    let mut max_u = 0.0_f64;
    for (i, (lu, v)) in values.iter().enumerate() {
        max_u = max_u.max(v.abs());
        if lu.abs() > worst || worst_at.is_none() {
            worst = worst.max(lu.abs());
            worst_at = Some(i);
        }
    }
    let threshold = cfg.resid_tol * (1.0 + max_u);
    let mut report = VerificationReport::compare("residual", worst, Comparison::AtMost, threshold)
        .param("label", u.label.clone())
        .param("points", points.len())
        .param("resid_tol", cfg.resid_tol);
    if !report.passed() {
        if let Some(i) = worst_at {
            report = report.witness(points[i].as_slice(), values[i].0, Some("Lu".into()));
        }
    }
    Ok(report)
}

/// `P_t u(x) = u(x)` on the grid `xs x ts`. Monte Carlo cells pass within
/// `mc_sigmas` standard errors (each cell on its own derived seed),
/// quadrature cells within `quad_tol * (1 + |u(x)|)`, which also floors the
/// Monte Carlo band where every sample agrees. The statistic is the
/// worst ratio of deviation to allowance.
pub fn semigroup_invariance(
    spec: &OperatorSpec,
    u: &HarmonicCandidate,
    xs: &[Vector],
    ts: &[f64],
    engine: &Engine,
    cfg: &Config,
) -> Result<VerificationReport> {
    check_dim(spec, u)?;
    let engine_json = serde_json::to_value(engine).unwrap_or_default();
    let Some(growth) = u.growth else {
        return Ok(VerificationReport::inconclusive(
            "semigroup-invariance",
            "no growth certificate; invariance needs the exponential growth condition",
        )
        .param("label", u.label.clone())
        .param("engine", engine_json));
    };
    let base_seed = match engine {
        Engine::MonteCarlo { seed, .. } => Some(*seed),
        Engine::Quadrature { .. } => None,
    };
    let mut worst = 0.0_f64;
    let mut worst_cell: Option<(usize, f64, f64, f64)> = None;
    let field = u.field.clone();
    for (i, x) in xs.iter().enumerate() {
        let ux = finite_or_err(u, x, u.value(x), "value")?;
        for (j, &t) in ts.iter().enumerate() {
            let cell_engine = match base_seed {
                Some(s) => engine.with_seed(derive_seed(s, (i * ts.len() + j) as u64)),
                None => *engine,
            };
            let p = semigroup_apply(spec, |y: &Vector| field.value(y), x, t, &cell_engine, cfg)?;
            if !p.value.is_finite() || p.stderr.is_some_and(|s| !s.is_finite()) {
                return Ok(VerificationReport::inconclusive(
                    "semigroup-invariance",
                    format!("Monte Carlo average diverged at t = {t} (heavy tails)"),
                )
                .param("label", u.label.clone())
                .param("engine", engine_json)
                .witness(x.as_slice(), p.value, Some(format!("t = {t}"))));
            }
            let diff = (p.value - ux).abs();
            let allowance = match p.stderr {
                Some(se) => (cfg.mc_sigmas * se).max(cfg.quad_tol * (1.0 + ux.abs())),
                None => cfg.quad_tol * (1.0 + ux.abs()),
            };
            let ratio = if diff == 0.0 { 0.0 } else { diff / allowance };
            if ratio > worst || worst_cell.is_none() {
                worst = worst.max(ratio);
                worst_cell = Some((i, t, p.value, p.stderr.unwrap_or(0.0)));
            }
        }
    }
    let mut report = VerificationReport::compare("semigroup-invariance", worst, Comparison::AtMost, 1.0)
        .param("label", u.label.clone())
        .param("engine", engine_json)
        .param("growth", serde_json::to_value(growth).unwrap_or_default())
        .param("points", xs.len())
        .param("times", ts.to_vec())
        .param("mc_sigmas", cfg.mc_sigmas)
        .param("quad_tol", cfg.quad_tol);
    if let Some((i, t, value, se)) = worst_cell {
        report = report.param(
            "worst_cell",
            json!({"x": xs[i].as_slice(), "t": t, "estimate": value, "stderr": se}),
        );
        if !report.passed() {
            report = report.witness(xs[i].as_slice(), value, Some(format!("t = {t}, stderr = {se:e}")));
        }
    }
    Ok(report)
}

pub enum ConvexityMode<'a> {
    /// `1/2 (u(x+a) + u(x-a)) - u(x)` over pairs `(x, a)`.
    Midpoint,
    /// `u(x) - [u(x0) - Du(x0).x0 + Du(x0).e^{tA} x]` over pairs `(x0, x)` and `times`.
    SupportingPlane { spec: &'a OperatorSpec, times: &'a [f64] },
}

/// Pass iff the smallest margin, divided by its scale, is `>= -conv_tol`.
pub fn convexity_check(
    u: &HarmonicCandidate,
    pairs: &[(Vector, Vector)],
    mode: ConvexityMode<'_>,
    cfg: &Config,
) -> Result<VerificationReport> {
    let mut worst = f64::INFINITY;
    let mut worst_at: Option<(Vec<f64>, f64, String)> = None;
    let mut consider = |stat: f64, x: &Vector, margin: f64, note: String| {
        if stat < worst {
            worst = stat;
            worst_at = Some((x.iter().copied().collect(), margin, note));
        }
    };
    let name = match &mode {
        ConvexityMode::Midpoint => {
            for (x, a) in pairs {
                let ux = finite_or_err(u, x, u.value(x), "value")?;
                let up = finite_or_err(u, x, u.value(&(x + a)), "value")?;
                let um = finite_or_err(u, x, u.value(&(x - a)), "value")?;
                let margin = 0.5 * (up + um) - ux;
                consider(margin / (1.0 + ux.abs()), x, margin, format!("a = {:?}", a.as_slice()));
            }
            "midpoint-convexity"
        }
        ConvexityMode::SupportingPlane { spec, times } => {
            check_dim(spec, u)?;
            let exps: Vec<(f64, Mat)> =
                times.iter().map(|&t| Ok((t, matrix_exp(spec.a(), t)?))).collect::<Result<_>>()?;
            for (x0, x) in pairs {
                let u0 = finite_or_err(u, x0, u.value(x0), "value")?;
                let g0 = u.gradient(x0);
                let ux = finite_or_err(u, x, u.value(x), "value")?;
                for (t, e) in &exps {
                    let rhs = u0 - g0.dot(x0) + g0.dot(&(e * x));
                    let margin = ux - rhs;
                    let scale = 1.0 + ux.abs().max(rhs.abs());
                    consider(margin / scale, x, margin, format!("x0 = {:?}, t = {t}", x0.as_slice()));
                }
            }
            "supporting-plane"
        }
    };
    if pairs.is_empty() {
        worst = 0.0;
    }
    let mut report = VerificationReport::compare(name, worst, Comparison::AtLeast, -cfg.conv_tol)
        .param("label", u.label.clone())
        .param("pairs", pairs.len())
        .param("conv_tol", cfg.conv_tol);
    if !report.passed() {
        if let Some((x, margin, note)) = worst_at {
            report = report.witness(&x, margin, Some(note));
        }
    }
    Ok(report)
}

/// Smallest `c >= 0` with `c e^{c r} >= m`.
fn growth_rate(m: f64, r: f64) -> f64 {
    if m <= 0.0 {
        return 0.0;
    }
    if !m.is_finite() {
        return f64::INFINITY;
    }
    let h = |c: f64| c * (c * r).exp();
    let mut hi = 1.0;
    while h(hi) < m {
        hi *= 2.0;
        if hi > 1e6 {
            return f64::INFINITY;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) < m {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Fit `max |Du|` on spheres of the given radii by `c e^{c r}`; pass iff the
/// smallest rate explaining every sphere is at most `c_max`.
pub fn gradient_growth_check(
    u: &HarmonicCandidate,
    radii: &[f64],
    per_sphere: usize,
    seed: u64,
    cfg: &Config,
) -> Result<VerificationReport> {
    let mut c = 0.0_f64;
    let mut worst_at: Option<(Vec<f64>, f64)> = None;
    let mut fits = Vec::new();
    for (k, &r) in radii.iter().enumerate() {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(LabError::InvalidArgument(format!("radius must be >= 0, got {r}")));
        }
        let pts = if r == 0.0 {
            vec![Vector::zeros(u.dim())]
        } else {
            sphere_points(u.dim(), per_sphere, r, derive_seed(seed, k as u64))
        };
        let mut m = 0.0_f64;
        let mut arg = pts[0].clone();
        for p in &pts {
            let g = u.gradient(p).norm();
            let g = if g.is_nan() { f64::INFINITY } else { g };
            if g > m {
                m = g;
                arg = p.clone();
            }
        }
        let cr = growth_rate(m, r);
        fits.push(json!({"radius": r, "max_gradient": m, "rate": cr}));
        if cr > c || worst_at.is_none() {
            c = c.max(cr);
            worst_at = Some((arg.iter().copied().collect(), m));
        }
    }
    let certificate = match u.growth {
        Some(g) => serde_json::to_value(g).unwrap_or_default(),
        None => "none".into(),
    };
    let mut report = VerificationReport::compare("gradient-growth", c, Comparison::AtMost, cfg.c_max)
        .param("label", u.label.clone())
        .param("fits", fits)
        .param("certificate", certificate)
        .param("seed", seed);
    if !report.passed() {
        if let Some((x, m)) = worst_at {
            report = report.witness(&x, m, Some("largest gradient norm".into()));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonic::{counterexample_1d, Affine, Constant, ExpSquare, Quadratic};
    use crate::report::Verdict;
    use crate::sampling::{ball_points, probe_points};
    use crate::GrowthCertificate;

    fn cfg() -> Config {
        Config::default()
    }

    fn triple() -> OperatorSpec {
        OperatorSpec::from_rows(
            &[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]],
            &[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0], &[0.0, 0.0, 0.0]],
            &cfg(),
        )
        .unwrap()
    }

    fn coord(i: usize) -> HarmonicCandidate {
        let mut b = Vector::zeros(3);
        b[i] = 1.0;
        HarmonicCandidate::new(format!("x{}", i + 1), Affine { b, c: 0.0 }, Some(GrowthCertificate::exponential(1.0).unwrap()), false)
    }

    #[test]
    fn residual_of_coordinates() {
        let pts = probe_points(3, 20, 0);
        assert!(residual(&triple(), &coord(2), &pts, &cfg()).unwrap().passed());
        let r = residual(&triple(), &coord(0), &[Vector::from_vec(vec![0.0, 1.0, 0.0])], &cfg()).unwrap();
        assert!(!r.passed());
        assert_eq!(r.witnesses[0].value, 1.0);
        let one = HarmonicCandidate::new("1", Constant { dim: 3, c: 1.0 }, None, true);
        assert_eq!(residual(&triple(), &one, &pts, &cfg()).unwrap().statistic, 0.0);
    }

    #[test]
    fn invariance_of_last_coordinate() {
        let xs = ball_points(3, 4, 2.0, 0);
        let r = semigroup_invariance(&triple(), &coord(2), &xs, &[0.5, 1.0], &Engine::monte_carlo(20_000, 11), &cfg())
            .unwrap();
        assert!(r.passed(), "{r}");
        let q = semigroup_invariance(&triple(), &coord(2), &xs, &[0.5, 1.0], &Engine::quadrature(&cfg()), &cfg()).unwrap();
        assert!(q.passed(), "{q}");
    }

    #[test]
    fn invariance_detects_drift() {
        let xs = vec![Vector::from_vec(vec![0.0, 1.0, 0.0])];
        let r = semigroup_invariance(&triple(), &coord(0), &xs, &[1.0], &Engine::quadrature(&cfg()), &cfg()).unwrap();
        assert!(!r.passed());
    }

    #[test]
    fn invariance_without_certificate_is_inconclusive() {
        let mut u = coord(2);
        u.growth = None;
        let r = semigroup_invariance(&triple(), &u, &[Vector::zeros(3)], &[1.0], &Engine::quadrature(&cfg()), &cfg())
            .unwrap();
        assert_eq!(r.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn counterexample_is_invariant_for_unstable_drift() {
        let spec = OperatorSpec::from_rows(&[&[1.0]], &[&[1.0]], &cfg()).unwrap();
        let u = counterexample_1d(1.0, 1.0).unwrap();
        let xs: Vec<Vector> = [-1.0, 0.0, 0.5].iter().map(|&v| Vector::from_element(1, v)).collect();
        let r = semigroup_invariance(&spec, &u, &xs, &[0.5, 1.0], &Engine::quadrature(&cfg()), &cfg()).unwrap();
        // Gauss-Hermite on erf is not exact, so only the MC band is asserted
        let m = semigroup_invariance(&spec, &u, &xs, &[0.5, 1.0], &Engine::monte_carlo(50_000, 2), &cfg()).unwrap();
        assert!(m.passed(), "{m}");
        assert!(r.statistic.is_finite());
    }

    #[test]
    fn midpoint_convexity() {
        let pairs: Vec<(Vector, Vector)> = ball_points(2, 10, 3.0, 1)
            .into_iter()
            .zip(ball_points(2, 10, 1.0, 2))
            .collect();
        let lin = HarmonicCandidate::new("lin", Affine { b: Vector::from_vec(vec![1.0, -2.0]), c: 3.0 }, None, false);
        assert!(convexity_check(&lin, &pairs, ConvexityMode::Midpoint, &cfg()).unwrap().passed());
        let concave = HarmonicCandidate::new("-|x|^2", Quadratic::new(-Mat::identity(2, 2), Vector::zeros(2), 0.0).unwrap(), None, false);
        let r = convexity_check(&concave, &pairs, ConvexityMode::Midpoint, &cfg()).unwrap();
        assert!(!r.passed());
        assert_eq!(r.witnesses.len(), 1);
    }

    #[test]
    fn supporting_plane_equality_for_invariant_linear() {
        let pairs: Vec<(Vector, Vector)> = ball_points(3, 10, 3.0, 1)
            .into_iter()
            .zip(ball_points(3, 10, 3.0, 2))
            .collect();
        let spec = triple();
        let r = convexity_check(
            &coord(2),
            &pairs,
            ConvexityMode::SupportingPlane { spec: &spec, times: &[0.5, 1.0, 10.0] },
            &cfg(),
        )
        .unwrap();
        assert!(r.passed(), "{r}");
        assert!(r.statistic.abs() < 1e-12);
    }

    #[test]
    fn growth_rate_solves_equation() {
        let c = growth_rate(5.0, 2.0);
        assert!((c * (2.0 * c).exp() - 5.0).abs() < 1e-9);
        assert_eq!(growth_rate(0.0, 1.0), 0.0);
    }

    #[test]
    fn gradient_growth() {
        let radii = [1.0, 5.0, 10.0, 20.0];
        assert!(gradient_growth_check(&coord(0), &radii, 8, 0, &cfg()).unwrap().passed());
        let u = counterexample_1d(1.0, 1.0).unwrap();
        assert!(gradient_growth_check(&u, &radii, 8, 0, &cfg()).unwrap().passed());
        let bad = HarmonicCandidate::new("exp", ExpSquare { dim: 2 }, None, true);
        let r = gradient_growth_check(&bad, &radii, 8, 0, &cfg()).unwrap();
        assert!(!r.passed());
    }
}
