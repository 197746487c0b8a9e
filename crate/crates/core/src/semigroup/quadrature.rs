//! Gauss-Legendre and Gauss-Hermite rules and tensor-product expectations.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::linalg::CompensatedSum;

/// Nodes and weights of an `n`-point rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Gauss-Legendre on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 1.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j - 1) as f64 * z * p2 - (j - 1) as f64 * p3) / j as f64;
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() <= 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * pp * pp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    Rule { nodes, weights }
}

/// Above this many nodes the classical initial guesses for the Newton
/// iteration collide; Jacobi-matrix eigenvalues seed it instead.
const HERMITE_GUESS_MAX: usize = 100;

/// Gauss-Hermite for the standard normal density: `E g(Z) ~ sum w_i g(x_i)`,
/// weights summing to one, nodes ascending.
pub fn gauss_hermite(n: usize) -> Rule {
    assert!(n >= 1);
    let nf = n as f64;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let seeds = (n > HERMITE_GUESS_MAX).then(|| jacobi_roots(n));
    let mut z = 0.0;
    for i in 0..n.div_ceil(2) {
        z = match (&seeds, i) {
            (Some(r), _) => r[n - 1 - i],
            (None, 0) => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
            (None, 1) => z - 1.14 * nf.powf(0.426) / z,
            (None, 2) => 1.86 * z - 0.86 * x[0],
            (None, 3) => 1.91 * z - 0.91 * x[1],
            (None, _) => 2.0 * z - x[i - 2],
        };
        let (root, weight) = hermite_newton(z, n);
        z = root;
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = weight;
        w[n - 1 - i] = weight;
    }
    let sqrt_pi = PI.sqrt();
    let mut rule: Vec<(f64, f64)> = x
        .iter()
        .zip(&w)
        .map(|(&xi, &wi)| (xi * std::f64::consts::SQRT_2, wi / sqrt_pi))
        .collect();
    rule.sort_by(|a, b| a.0.total_cmp(&b.0));
    Rule {
        nodes: rule.iter().map(|r| r.0).collect(),
        weights: rule.iter().map(|r| r.1).collect(),
    }
}

/// `E f(Z)` for `Z ~ N(0, I_dims)` under the tensor rule; `f` writes
/// `outputs` values per node. Summation order is fixed.
pub fn tensor_expectation<F>(rule: &Rule, dims: usize, outputs: usize, f: F) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()> + Sync,
{
    let rules = vec![rule; dims];
    product_expectation(&rules, outputs, &f)
}

/// Root of the physicists' Hermite polynomial `H_n` near `z` and its
/// weight for `e^{-x^2}`.
fn hermite_newton(mut z: f64, n: usize) -> (f64, f64) {
    let pim4 = PI.powf(-0.25);
    let nf = n as f64;
    let mut pp = 1.0;
    let mut log_scale = 0.0;
    for _ in 0..100 {
        // orthonormal recurrence, rescaled to stay finite at the outer nodes
        let (mut p1, mut p2) = (pim4, 0.0_f64);
        log_scale = 0.0;
        for j in 0..n {
            let p3 = p2;
            p2 = p1;
            let jf = j as f64;
            p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            if p1.abs() > 1e150 {
                p1 *= 1e-150;
                p2 *= 1e-150;
                log_scale += 150.0 * std::f64::consts::LN_10;
            }
        }
        pp = (2.0 * nf).sqrt() * p2;
        let dz = p1 / pp;
        z -= dz;
        if dz.abs() <= 1e-15 * z.abs().max(1.0) {
            break;
        }
    }
    (z, (std::f64::consts::LN_2 - 2.0 * (pp.abs().ln() + log_scale)).exp())
}

/// Eigenvalues of the Jacobi matrix of `H_n` (zero diagonal, off-diagonal
/// `sqrt(j / 2)`), ascending, by Sturm-sequence bisection to `1e-10`.
fn jacobi_roots(n: usize) -> Vec<f64> {
    let below = |x: f64| {
        let mut count = 0;
        let mut d = -x;
        for j in 1..=n {
            if d < 0.0 {
                count += 1;
            }
            if j == n {
                break;
            }
            let d_safe = if d == 0.0 { f64::MIN_POSITIVE } else { d };
            d = -x - (j as f64 / 2.0) / d_safe;
        }
        count
    };
    let edge = (2.0 * n as f64 + 1.0).sqrt() + 1.0;
    (0..n)
        .map(|k| {
            let (mut lo, mut hi) = (-edge, edge);
            while hi - lo > 1e-10 {
                let mid = 0.5 * (lo + hi);
                if below(mid) > k {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        })
        .collect()
}

/// [`gauss_hermite`] memoised for the life of the process.
pub fn cached_hermite(n: usize) -> Arc<Rule> {
    static CACHE: OnceLock<Mutex<BTreeMap<usize, Arc<Rule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(r) = cache.lock().unwrap_or_else(|e| e.into_inner()).get(&n) {
        return r.clone();
    }
    let rule = Arc::new(gauss_hermite(n));
    cache.lock().unwrap_or_else(|e| e.into_inner()).entry(n).or_insert(rule).clone()
}

/// Tensor product of one rule per dimension.
pub fn product_expectation<F>(rules: &[&Rule], outputs: usize, f: &F) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()> + Sync,
{
    let dims = rules.len();
    if dims == 0 {
        let mut out = vec![0.0; outputs];
        f(&[], &mut out)?;
        return Ok(out);
    }
    let inner: usize = rules[1..].iter().map(|r| r.nodes.len()).product();
    let partial: Vec<Result<Vec<CompensatedSum>>> = (0..rules[0].nodes.len())
        .into_par_iter()
        .map(|first| {
            let mut z = vec![0.0; dims];
            let mut out = vec![0.0; outputs];
            let mut acc = vec![CompensatedSum::default(); outputs];
            for flat in 0..inner {
                z[0] = rules[0].nodes[first];
                let mut w = rules[0].weights[first];
                let mut rest = flat;
                for d in 1..dims {
                    let m = rules[d].nodes.len();
                    let k = rest % m;
                    rest /= m;
                    z[d] = rules[d].nodes[k];
                    w *= rules[d].weights[k];
                }
                f(&z, &mut out)?;
                for (a, &v) in acc.iter_mut().zip(&out) {
                    a.add(w * v);
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total = vec![CompensatedSum::default(); outputs];
    for p in partial {
        for (t, a) in total.iter_mut().zip(p?) {
            t.add(a.value());
        }
    }
    Ok(total.iter().map(|s| s.value()).collect())
}

/// Result of [`adaptive_expectation`].
#[derive(Debug, Clone, PartialEq)]
pub struct Adaptive {
    pub values: Vec<f64>,
    /// Final Gauss-Hermite level per dimension.
    pub levels: Vec<usize>,
}

/// Dimension-adaptive tensor Gauss-Hermite. Every dimension starts at
/// `level`; a dimension is doubled while doubling it alone moves some output
/// by more than `tol * (1 + |value|)`. Fails once the grid would exceed
/// `nodes_max` nodes.
///
/// Coordinates should be ordered and scaled so that each is a principal axis
/// of the integrand's Gaussian, as the eigenvector factor of a covariance is.
pub fn adaptive_expectation<F>(
    dims: usize,
    level: usize,
    tol: f64,
    nodes_max: usize,
    outputs: usize,
    f: &F,
) -> Result<Adaptive>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()> + Sync,
{
    let mut levels = vec![level.max(1); dims];
    let eval = |levels: &[usize]| -> Result<Vec<f64>> {
        let rules: Vec<Arc<Rule>> = levels.iter().map(|&l| cached_hermite(l)).collect();
        let rules: Vec<&Rule> = rules.iter().map(|r| r.as_ref()).collect();
        product_expectation(&rules, outputs, f)
    };
    let nodes = |levels: &[usize]| levels.iter().try_fold(1usize, |acc, &l| acc.checked_mul(l)).unwrap_or(usize::MAX);
    let budget = |levels: &[usize]| -> Result<()> {
        if nodes(levels) > nodes_max {
            return Err(LabError::NumericalFailure(format!(
                "quadrature did not converge within {nodes_max} nodes (levels {levels:?}); use the Monte Carlo engine"
            )));
        }
        Ok(())
    };
    let mut base = eval(&levels)?;
    // Dimensions still being refined; settled ones are re-probed once at the end.
    let mut active: Vec<usize> = (0..dims).collect();
    let mut final_sweep = false;
    loop {
        let mut refine = Vec::new();
        let mut refined = None;
        for &d in &active {
            let mut trial = levels.clone();
            trial[d] *= 2;
            budget(&trial)?;
            let v = eval(&trial)?;
            if v.iter().zip(&base).any(|(a, b)| !((a - b).abs() <= tol * (1.0 + a.abs()))) {
                refine.push(d);
                refined = Some(v);
            }
        }
        if refine.is_empty() {
            if final_sweep || active.len() == dims {
                return Ok(Adaptive { values: base, levels });
            }
            active = (0..dims).collect();
            final_sweep = true;
            continue;
        }
        final_sweep = false;
        for &d in &refine {
            levels[d] *= 2;
        }
        base = match (refine.len(), refined) {
            (1, Some(v)) => v,
            _ => {
                budget(&levels)?;
                eval(&levels)?
            }
        };
        active = refine;
    }
}
