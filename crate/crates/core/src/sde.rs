//! Exact simulation of `dX = AX dt + sqrt(Q) dW`.
//!
//! Transitions are drawn from their Gaussian law, so there is no
//! discretization error at grid points. Exit times and suprema are observed
//! on the grid only.

use std::collections::HashMap;
use std::io::Write;

use serde::Serialize;

use crate::config::Config;
use crate::error::{LabError, Result};
use crate::expm::matrix_exp;
use crate::harmonic::HarmonicCandidate;
use crate::linalg::{Mat, Vector};
use crate::mc;
use crate::operator::OperatorSpec;
use crate::semigroup::{gramian, transition, GaussianMeasure, GramianMethod};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSample {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub seed: u64,
}

/// `n` independent draws of `X_t^x`.
pub fn sample_endpoint(spec: &OperatorSpec, x: &Vector, t: f64, n: usize, seed: u64, cfg: &Config) -> Result<Vec<Vector>> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(LabError::InvalidArgument(format!("endpoint time must be > 0, got {t}")));
    }
    let m = transition(spec, x, t, cfg)?;
    mc::map_samples(n, seed, m.rank(), |z| Ok(m.transform(z)))
}

/// One exact step: `X' = E X + F z`.
struct Step {
    e: Mat,
    factor: Mat,
}

struct Stepper {
    steps: Vec<Step>,
    z_dim: usize,
}

impl Stepper {
    fn new(spec: &OperatorSpec, grid: &[f64], cfg: &Config) -> Result<Self> {
        validate_grid(grid)?;
        let n = spec.dim();
        let mut cache: HashMap<u64, (Mat, Mat)> = HashMap::new();
        let mut steps = Vec::with_capacity(grid.len() - 1);
        let mut z_dim = 0;
        for w in grid.windows(2) {
            let dt = w[1] - w[0];
            let (e, factor) = match cache.get(&dt.to_bits()) {
                Some(v) => v.clone(),
                None => {
                    let e = matrix_exp(spec.a(), dt)?;
                    let g = gramian(spec, dt, GramianMethod::BlockExp, cfg)?;
                    let m = GaussianMeasure::new(Vector::zeros(n), g.qt, cfg)?;
                    cache.insert(dt.to_bits(), (e.clone(), m.factor.clone()));
                    (e, m.factor)
                }
            };
            z_dim += factor.ncols();
            steps.push(Step { e, factor });
        }
        Ok(Self { steps, z_dim })
    }

    /// Visit every state along the path, stopping early when `visit` returns false.
    fn walk(&self, x: &Vector, z: &[f64], mut visit: impl FnMut(usize, &Vector) -> bool) {
        let mut state = x.clone();
        if !visit(0, &state) {
            return;
        }
        let mut used = 0;
        for (k, s) in self.steps.iter().enumerate() {
            let mut next = &s.e * &state;
            for c in 0..s.factor.ncols() {
                next.axpy(z[used + c], &s.factor.column(c), 1.0);
            }
            used += s.factor.ncols();
            state = next;
            if !visit(k + 1, &state) {
                return;
            }
        }
    }
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 || grid[0] != 0.0 {
        return Err(LabError::InvalidArgument("time grid must start at 0 and have at least two points".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
        return Err(LabError::InvalidArgument("time grid must be finite and strictly increasing".into()));
    }
    Ok(())
}

/// `steps + 1` equally spaced times on `[0, t]`.
pub fn uniform_grid(t: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|k| if k == steps { t } else { t * k as f64 / steps as f64 }).collect()
}

/// `n` exact paths on `grid`; path `i` is sample `i` of the seeded stream.
pub fn sample_paths(spec: &OperatorSpec, x: &Vector, grid: &[f64], n: usize, seed: u64, cfg: &Config) -> Result<Vec<PathSample>> {
    crate::semigroup::check_point(spec, x)?;
    let stepper = Stepper::new(spec, grid, cfg)?;
    mc::map_samples(n, seed, stepper.z_dim, |z| {
        let mut states = Vec::with_capacity(grid.len());
        stepper.walk(x, z, |_, s| {
            states.push(s.iter().copied().collect());
            true
        });
        Ok(PathSample { times: grid.to_vec(), states, seed })
    })
}

pub fn sample_path(spec: &OperatorSpec, x: &Vector, grid: &[f64], seed: u64, cfg: &Config) -> Result<PathSample> {
    Ok(sample_paths(spec, x, grid, 1, seed, cfg)?.remove(0))
}

/// CSV with columns `time, x1..xN, path`.
pub fn write_paths_csv<W: Write>(paths: &[PathSample], mut out: W) -> Result<()> {
    let dim = paths.first().and_then(|p| p.states.first()).map_or(0, |s| s.len());
    let header: Vec<String> = std::iter::once("time".to_string())
        .chain((1..=dim).map(|i| format!("x{i}")))
        .chain(std::iter::once("path".to_string()))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for (i, p) in paths.iter().enumerate() {
        for (t, s) in p.times.iter().zip(&p.states) {
            let row: Vec<String> = s.iter().map(|v| format!("{v:e}")).collect();
            writeln!(out, "{t:e},{},{i}", row.join(","))?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupMoment {
    /// Estimate of `E exp(delta max_k |Y_{s_k}|^2)` on the fine grid.
    pub estimate: f64,
    pub stderr: f64,
    /// Same paths observed on every other grid point.
    pub coarse_estimate: f64,
    /// `(estimate - coarse_estimate) / estimate`.
    pub grid_sensitivity: f64,
    /// Share of the sum contributed by the largest tenth of the samples.
    pub top_decile_share: f64,
    /// Samples with `delta * sup > 709` (their terms overflow).
    pub overflow_count: usize,
    /// No overflow, `top_decile_share <= 0.5` and relative stderr `<= 0.05`.
    pub finite: bool,
    pub steps: usize,
    pub n: usize,
    pub seed: u64,
}

/// `E exp(delta sup_{s<=t} |Y_s|^2)` for the noise part `Y_s = X_s^0`, with
/// the supremum taken over `2 * steps` uniform grid intervals.
pub fn exp_sup_moment(spec: &OperatorSpec, t: f64, delta: f64, steps: usize, n: usize, seed: u64, cfg: &Config) -> Result<SupMoment> {
    if !(t > 0.0 && delta > 0.0 && t.is_finite() && delta.is_finite()) {
        return Err(LabError::InvalidArgument(format!("need t > 0 and delta > 0, got t = {t}, delta = {delta}")));
    }
    if steps == 0 || n < 2 {
        return Err(LabError::InvalidArgument("need steps >= 1 and n >= 2".into()));
    }
    let grid = uniform_grid(t, 2 * steps);
    let stepper = Stepper::new(spec, &grid, cfg)?;
    let origin = Vector::zeros(spec.dim());
    let sups: Vec<(f64, f64)> = mc::map_samples(n, seed, stepper.z_dim, |z| {
        let (mut fine, mut coarse) = (0.0_f64, 0.0_f64);
        stepper.walk(&origin, z, |k, s| {
            let r2 = s.norm_squared();
            fine = fine.max(r2);
            if k % 2 == 0 {
                coarse = coarse.max(r2);
            }
            true
        });
        Ok((delta * fine, delta * coarse))
    })?;
    let overflow_count = sups.iter().filter(|(f, _)| *f > 709.0).count();
    let mut fine = mc::RunningStats::default();
    let mut coarse = mc::RunningStats::default();
    let mut terms: Vec<f64> = Vec::with_capacity(n);
    for &(f, c) in &sups {
        let ef = if f > 709.0 { f64::INFINITY } else { f.exp() };
        let ec = if c > 709.0 { f64::INFINITY } else { c.exp() };
        fine.push(ef);
        coarse.push(ec);
        terms.push(ef);
    }
    let (estimate, stderr) = if overflow_count > 0 { (f64::INFINITY, f64::INFINITY) } else { (fine.mean, fine.stderr()) };
    terms.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = terms.iter().sum();
    let top: f64 = terms[..n.div_ceil(10)].iter().sum();
    let top_decile_share = if total.is_finite() && total > 0.0 { top / total } else { 1.0 };
    let coarse_estimate = if overflow_count > 0 { f64::INFINITY } else { coarse.mean };
    let grid_sensitivity = if estimate.is_finite() { (estimate - coarse_estimate) / estimate } else { f64::NAN };
    let finite = overflow_count == 0 && top_decile_share <= 0.5 && stderr <= 0.05 * estimate;
    Ok(SupMoment {
        estimate,
        stderr,
        coarse_estimate,
        grid_sensitivity,
        top_decile_share,
        overflow_count,
        finite,
        steps,
        n,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoppedEstimate {
    pub estimate: f64,
    pub stderr: f64,
    /// Fraction of paths that left the ball before `t`.
    pub exit_fraction: f64,
    pub steps: usize,
    pub n: usize,
    pub seed: u64,
}

/// `E u(X_{t ^ tau})`, `tau` the first grid time with `|X| > radius`.
#[allow(clippy::too_many_arguments)]
pub fn stopped_expectation(
    spec: &OperatorSpec,
    u: &HarmonicCandidate,
    x: &Vector,
    t: f64,
    radius: f64,
    steps: usize,
    n: usize,
    seed: u64,
    cfg: &Config,
) -> Result<StoppedEstimate> {
    crate::semigroup::check_point(spec, x)?;
    if !(radius > x.norm()) {
        return Err(LabError::InvalidArgument(format!("ball radius {radius} must exceed |x| = {}", x.norm())));
    }
    if !(t > 0.0 && t.is_finite()) || steps == 0 || n < 2 {
        return Err(LabError::InvalidArgument("need t > 0, steps >= 1 and n >= 2".into()));
    }
    let grid = uniform_grid(t, steps);
    let stepper = Stepper::new(spec, &grid, cfg)?;
    let stats = mc::estimate(n, seed, stepper.z_dim, 2, |z, out| {
        let mut stopped = x.clone();
        let mut exited = false;
        stepper.walk(x, z, |_, s| {
            stopped.copy_from(s);
            if s.norm() > radius {
                exited = true;
                return false;
            }
            true
        });
        let v = u.value(&stopped);
        if !v.is_finite() {
            return Err(LabError::Evaluation { point: stopped.iter().copied().collect(), message: format!("{} = {v}", u.label) });
        }
        out[0] = v;
        out[1] = if exited { 1.0 } else { 0.0 };
        Ok(())
    })?;
    Ok(StoppedEstimate { estimate: stats[0].mean, stderr: stats[0].stderr(), exit_fraction: stats[1].mean, steps, n, seed })
}
