use serde::{Deserialize, Serialize};
use serde_json::json;

use super::quadrature::adaptive_expectation;
use super::{check_point, gramian, inverse_sqrt, transition, GaussianMeasure, GramianMethod};
use crate::config::Config;
use crate::error::{LabError, Result};
use crate::linalg::Vector;
use crate::mc;
use crate::operator::{kalman_rank, OperatorSpec};
use crate::report::{Comparison, VerificationReport};

/// How Gaussian expectations are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "engine", rename_all = "camelCase")]
pub enum Engine {
    /// Tensor Gauss-Hermite with `level` nodes per dimension.
    Quadrature { level: usize },
    /// `n` exact samples from the seeded stream.
    MonteCarlo { n: usize, seed: u64 },
}

impl Engine {
    pub fn quadrature(cfg: &Config) -> Self {
        Engine::Quadrature { level: cfg.gh_level }
    }

    pub fn monte_carlo(n: usize, seed: u64) -> Self {
        Engine::MonteCarlo { n, seed }
    }

    pub fn is_monte_carlo(&self) -> bool {
        matches!(self, Engine::MonteCarlo { .. })
    }

    pub(crate) fn with_seed(self, seed: u64) -> Self {
        match self {
            Engine::MonteCarlo { n, .. } => Engine::MonteCarlo { n, seed },
            q => q,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SemigroupValue {
    pub value: f64,
    /// Monte Carlo standard error; `None` for quadrature.
    pub stderr: Option<f64>,
}

/// `E g(Z)` for `Z` standard normal in `rank` dimensions, per output.
pub(crate) fn expect<G>(
    dim: usize,
    rank: usize,
    engine: &Engine,
    cfg: &Config,
    outputs: usize,
    g: G,
) -> Result<Vec<SemigroupValue>>
where
    G: Fn(&[f64], &mut [f64]) -> Result<()> + Sync,
{
    match *engine {
        Engine::Quadrature { level } => {
            if dim > cfg.quad_dim_max {
                return Err(LabError::UnsupportedEngine(format!(
                    "quadrature is limited to dimension {} (got {dim}); use the Monte Carlo engine",
                    cfg.quad_dim_max
                )));
            }
            if level == 0 {
                return Err(LabError::InvalidArgument("quadrature level must be positive".into()));
            }
            let v = adaptive_expectation(rank, level, cfg.quad_conv_tol, cfg.quad_nodes_max, outputs, &g)?.values;
            Ok(v.into_iter().map(|value| SemigroupValue { value, stderr: None }).collect())
        }
        Engine::MonteCarlo { n, seed } => {
            if n == 0 {
                return Err(LabError::InvalidArgument("Monte Carlo needs at least one sample".into()));
            }
            let stats = mc::estimate(n, seed, rank, outputs, g)?;
            Ok(stats
                .iter()
                .map(|s| SemigroupValue { value: s.mean, stderr: Some(s.stderr()) })
                .collect())
        }
    }
}

pub(crate) fn eval_checked<F: Fn(&Vector) -> f64>(f: &F, y: &Vector) -> Result<f64> {
    let v = f(y);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(LabError::Evaluation { point: y.iter().copied().collect(), message: format!("function returned {v}") })
    }
}

/// `P_t f(x)`. At `t = 0` this is `f(x)` exactly.
pub fn semigroup_apply<F>(
    spec: &OperatorSpec,
    f: F,
    x: &Vector,
    t: f64,
    engine: &Engine,
    cfg: &Config,
) -> Result<SemigroupValue>
where
    F: Fn(&Vector) -> f64 + Sync,
{
    check_point(spec, x)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(LabError::InvalidArgument(format!("semigroup time must be >= 0, got {t}")));
    }
    if t == 0.0 {
        let value = eval_checked(&f, x)?;
        let stderr = engine.is_monte_carlo().then_some(0.0);
        return Ok(SemigroupValue { value, stderr });
    }
    let m = transition(spec, x, t, cfg)?;
    let v = expect(spec.dim(), m.rank(), engine, cfg, 1, |z, out| {
        out[0] = eval_checked(&f, &m.transform(z))?;
        Ok(())
    })?;
    Ok(v[0])
}

/// `C_t(a) = exp(-|Q_t^{-1/2} e^{tA} a|^2 / 2)` and an optional conditioning warning.
pub fn kwapien_constant(spec: &OperatorSpec, a: &Vector, t: f64, cfg: &Config) -> Result<(f64, Option<String>)> {
    check_point(spec, a)?;
    let g = gramian(spec, t, GramianMethod::BlockExp, cfg)?;
    let e = crate::expm::matrix_exp(spec.a(), t)?;
    let (inv_sqrt, warning) = inverse_sqrt(&g.qt, cfg.inv_tol);
    let w = inv_sqrt * (e * a);
    Ok(((-0.5 * w.norm_squared()).exp(), warning))
}

/// `P_t f(x+a) + P_t f(x-a) >= 2 C_t(a) P_t f(x)` for non-negative `f`.
///
/// Monte Carlo evaluates the three expectations on common random numbers
/// and tests the mean of the pathwise difference.
pub fn kwapien_check<F>(
    spec: &OperatorSpec,
    f: F,
    x: &Vector,
    a: &Vector,
    t: f64,
    engine: &Engine,
    cfg: &Config,
) -> Result<VerificationReport>
where
    F: Fn(&Vector) -> f64 + Sync,
{
    check_point(spec, x)?;
    check_point(spec, a)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(LabError::InvalidArgument(format!("Kwapien check needs t > 0, got {t}")));
    }
    if !kalman_rank(spec, cfg)?.hypoelliptic {
        return Err(LabError::Precondition("Kwapien inequality needs the Kalman rank condition".into()));
    }
    let (c, warning) = kwapien_constant(spec, a, t, cfg)?;
    let e = crate::expm::matrix_exp(spec.a(), t)?;
    let g = gramian(spec, t, GramianMethod::BlockExp, cfg)?;
    let noise = GaussianMeasure::new(Vector::zeros(spec.dim()), g.qt, cfg)?;
    let m0 = &e * x;
    let mp = &e * (x + a);
    let mm = &e * (x - a);
    let nonneg = |y: Vector| -> Result<f64> {
        let v = eval_checked(&f, &y)?;
        if v < 0.0 {
            return Err(LabError::Precondition(format!(
                "Kwapien inequality needs f >= 0, but f = {v:e} at {:?}",
                y.as_slice()
            )));
        }
        Ok(v)
    };
    let v = expect(spec.dim(), noise.rank(), engine, cfg, 4, |z, out| {
        let y = noise.transform(z);
        out[0] = nonneg(&mp + &y)?;
        out[1] = nonneg(&mm + &y)?;
        out[2] = nonneg(&m0 + &y)?;
        out[3] = out[0] + out[1] - 2.0 * c * out[2];
        Ok(())
    })?;
    let lhs = v[0].value + v[1].value;
    let rhs = 2.0 * c * v[2].value;
    let scale = 1.0 + rhs.abs();
    let margin = match v[3].stderr {
        Some(se) => v[3].value + cfg.mc_sigmas * se,
        None => lhs - rhs,
    };
    let mut report = VerificationReport::compare("kwapien", margin / scale, Comparison::AtLeast, -cfg.kwapien_tol)
        .param("engine", serde_json::to_value(engine).unwrap_or_default())
        .param("t", t)
        .param("x", x.as_slice())
        .param("a", a.as_slice())
        .param("c_t", c)
        .param("lhs", lhs)
        .param("rhs", rhs)
        .param("kwapien_tol", cfg.kwapien_tol);
    if let Some(se) = v[3].stderr {
        report = report.param("stderr", se).param("mc_sigmas", cfg.mc_sigmas);
    }
    if let Some(w) = warning {
        report = report.param("warning", w);
    }
    if !report.passed() {
        report = report.witness(x.as_slice(), lhs - rhs, Some(json!({"a": a.as_slice(), "t": t}).to_string()));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;

    fn cfg() -> Config {
        Config::default()
    }

    fn brownian(n: usize) -> OperatorSpec {
        OperatorSpec::new(Mat::identity(n, n), Mat::zeros(n, n), &cfg()).unwrap()
    }

    #[test]
    fn constants_are_preserved() {
        let spec = brownian(2);
        let x = Vector::from_vec(vec![0.5, -1.0]);
        for engine in [Engine::quadrature(&cfg()), Engine::monte_carlo(5000, 1)] {
            let v = semigroup_apply(&spec, |_| 1.0, &x, 0.7, &engine, &cfg()).unwrap();
            assert!((v.value - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn second_moment_of_brownian_motion() {
        let spec = brownian(2);
        let x = Vector::from_vec(vec![0.5, -1.0]);
        let t = 1.3;
        let v = semigroup_apply(&spec, |y| y.norm_squared(), &x, t, &Engine::quadrature(&cfg()), &cfg()).unwrap();
        assert!((v.value - (x.norm_squared() + 2.0 * t)).abs() < 1e-12);
        let w = semigroup_apply(&spec, |y| y.norm_squared(), &x, t, &Engine::monte_carlo(100_000, 9), &cfg()).unwrap();
        assert!((w.value - (x.norm_squared() + 2.0 * t)).abs() < 4.0 * w.stderr.unwrap());
    }

    #[test]
    fn time_zero_is_exact() {
        let spec = brownian(1);
        let x = Vector::from_vec(vec![0.3]);
        let v = semigroup_apply(&spec, |y| y[0].sin(), &x, 0.0, &Engine::quadrature(&cfg()), &cfg()).unwrap();
        assert_eq!(v.value, 0.3_f64.sin());
    }

    #[test]
    fn quadrature_refused_in_high_dimension() {
        let spec = brownian(5);
        let x = Vector::zeros(5);
        let r = semigroup_apply(&spec, |_| 1.0, &x, 1.0, &Engine::quadrature(&cfg()), &cfg());
        assert!(matches!(r, Err(LabError::UnsupportedEngine(_))));
    }

    #[test]
    fn non_finite_values_name_the_point() {
        let spec = brownian(1);
        let x = Vector::from_vec(vec![0.0]);
        let r = semigroup_apply(&spec, |_| f64::NAN, &x, 1.0, &Engine::quadrature(&cfg()), &cfg());
        assert!(matches!(r, Err(LabError::Evaluation { .. })));
    }

    #[test]
    fn kwapien_1d_closed_form() {
        // f(y) = exp(-y^2 / (2 s^2)); P_t f(x) = s / sqrt(s^2 + t) exp(-x^2 / (2 (s^2 + t)))
        let spec = brownian(1);
        let s2: f64 = 1.5;
        let f = |y: &Vector| (-y[0] * y[0] / (2.0 * s2)).exp();
        let p = |x: f64, t: f64| (s2 / (s2 + t)).sqrt() * (-x * x / (2.0 * (s2 + t))).exp();
        let (x, a, t) = (0.4, 0.9, 0.8);
        let r = kwapien_check(
            &spec,
            f,
            &Vector::from_vec(vec![x]),
            &Vector::from_vec(vec![a]),
            t,
            &Engine::quadrature(&cfg()),
            &cfg(),
        )
        .unwrap();
        assert!(r.passed(), "{r}");
        let lhs = p(x + a, t) + p(x - a, t);
        let rhs = 2.0 * (-a * a / (2.0 * t)).exp() * p(x, t);
        assert!((r.parameters["lhs"].as_f64().unwrap() - lhs).abs() < 1e-10);
        assert!((r.parameters["rhs"].as_f64().unwrap() - rhs).abs() < 1e-10);
    }

    #[test]
    fn kwapien_zero_shift_is_equality() {
        let spec = brownian(2);
        let f = |y: &Vector| (-y.norm_squared()).exp();
        let r = kwapien_check(
            &spec,
            f,
            &Vector::from_vec(vec![0.2, 0.1]),
            &Vector::zeros(2),
            1.0,
            &Engine::quadrature(&cfg()),
            &cfg(),
        )
        .unwrap();
        assert_eq!(r.parameters["c_t"].as_f64().unwrap(), 1.0);
        assert!(r.statistic.abs() < 1e-14);
    }

    #[test]
    fn kwapien_rejects_negative_functions() {
        let spec = brownian(1);
        let r = kwapien_check(
            &spec,
            |y: &Vector| y[0],
            &Vector::zeros(1),
            &Vector::from_vec(vec![1.0]),
            1.0,
            &Engine::quadrature(&cfg()),
            &cfg(),
        );
        assert!(matches!(r, Err(LabError::Precondition(_))));
    }

    #[test]
    fn kwapien_monte_carlo_with_common_numbers() {
        let spec = brownian(2);
        let f = |y: &Vector| (-0.5 * y.norm_squared()).exp();
        let r = kwapien_check(
            &spec,
            f,
            &Vector::from_vec(vec![0.3, 0.0]),
            &Vector::from_vec(vec![0.5, 0.5]),
            1.0,
            &Engine::monte_carlo(20_000, 3),
            &cfg(),
        )
        .unwrap();
        assert!(r.passed(), "{r}");
        assert!(r.parameters.contains_key("stderr"));
    }
}
