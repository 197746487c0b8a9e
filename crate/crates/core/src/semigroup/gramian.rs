//! `Q_t = int_0^t e^{sA} Q e^{sA^T} ds` by three independent routes.

use serde::{Deserialize, Serialize};

use super::quadrature::gauss_legendre;
use crate::config::Config;
use crate::error::{LabError, Result};
use crate::expm::matrix_exp;
use crate::linalg::{max_abs, sym_eigen, symmetrize, Mat};
use crate::operator::OperatorSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase")]
pub enum GramianMethod {
    /// One exponential of the `2N x 2N` block matrix `[[A, Q], [0, -A^T]]`.
    #[default]
    BlockExp,
    /// Adaptive Dormand-Prince on `Q' = Q + A Q_s + Q_s A^T`.
    LyapunovOde,
    /// Adaptive Gauss-Legendre panels on the defining integral.
    Quadrature,
}

impl GramianMethod {
    pub const ALL: [GramianMethod; 3] = [GramianMethod::BlockExp, GramianMethod::LyapunovOde, GramianMethod::Quadrature];
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramianResult {
    pub t: f64,
    pub qt: Mat,
    pub method: GramianMethod,
    /// `lambda_max / lambda_min`; infinite when singular.
    pub condition_number: f64,
}

pub fn gramian(spec: &OperatorSpec, t: f64, method: GramianMethod, cfg: &Config) -> Result<GramianResult> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(LabError::InvalidArgument(format!("Gramian needs t > 0, got {t}")));
    }
    let qt = match method {
        GramianMethod::BlockExp => block_exp(spec, t)?,
        GramianMethod::LyapunovOde => lyapunov_ode(spec, t, cfg.gramian_rtol)?,
        GramianMethod::Quadrature => quadrature(spec, t, cfg.gramian_rtol)?,
    };
    if qt.iter().any(|v| !v.is_finite()) {
        return Err(LabError::Range(format!("Gramian overflows at t = {t}")));
    }
    let (values, _) = sym_eigen(&qt);
    let lmax = values[0];
    let lmin = values[values.len() - 1];
    let condition_number = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
    Ok(GramianResult { t, qt, method, condition_number })
}

fn block_exp(spec: &OperatorSpec, t: f64) -> Result<Mat> {
    let n = spec.dim();
    let mut m = Mat::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(spec.a());
    m.view_mut((0, n), (n, n)).copy_from(spec.q());
    m.view_mut((n, n), (n, n)).copy_from(&(-spec.a().transpose()));
    let f = matrix_exp(&m, t)?;
    let f11 = f.view((0, 0), (n, n));
    let f12 = f.view((0, n), (n, n));
    Ok(symmetrize(&(f12 * f11.transpose())))
}

// Dormand-Prince 5(4) tableau.
const B: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn lyapunov_ode(spec: &OperatorSpec, t: f64, rtol: f64) -> Result<Mat> {
    let n = spec.dim();
    let a = spec.a();
    let q = spec.q();
    let rhs = |y: &Mat| -> Mat { q + a * y + y * a.transpose() };
    let atol = rtol * max_abs(q).max(f64::MIN_POSITIVE) * t.min(1.0) * 1e-3;
    let mut y = Mat::zeros(n, n);
    let mut s = 0.0;
    let mut h = (0.01 / (1.0 + a.norm())).min(t);
    let mut k: Vec<Mat> = vec![Mat::zeros(n, n); 7];
    k[0] = rhs(&y);
    let mut steps = 0usize;
    while s < t {
        steps += 1;
        if steps > 2_000_000 {
            return Err(LabError::NumericalFailure(format!("Lyapunov ODE did not reach t = {t} (stopped at {s})")));
        }
        h = h.min(t - s);
        for stage in 1..7 {
            let mut ys = y.clone();
            for (j, kj) in k.iter().enumerate().take(stage) {
                let b = B[stage][j];
                if b != 0.0 {
                    ys += kj * (h * b);
                }
            }
            k[stage] = rhs(&ys);
        }
        // stage 7 argument is the 5th order solution (FSAL)
        let mut ynew = y.clone();
        for (j, kj) in k.iter().enumerate().take(6) {
            let b = B[6][j];
            if b != 0.0 {
                ynew += kj * (h * b);
            }
        }
        k[6] = rhs(&ynew);
        let mut err = 0.0_f64;
        for i in 0..n * n {
            let mut e = 0.0;
            for (j, kj) in k.iter().enumerate() {
                e += E[j] * kj[i];
            }
            let sc = atol + rtol * y[i].abs().max(ynew[i].abs());
            err = err.max((h * e).abs() / sc);
        }
        if err <= 1.0 {
            s += h;
            y = ynew;
            k[0] = k[6].clone();
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h < 1e-14 * t {
            return Err(LabError::NumericalFailure(format!("Lyapunov ODE step size underflow at s = {s}")));
        }
    }
    Ok(symmetrize(&y))
}

fn quadrature(spec: &OperatorSpec, t: f64, rtol: f64) -> Result<Mat> {
    let rule = gauss_legendre(16);
    let a = spec.a();
    let q = spec.q();
    let panel = |lo: f64, hi: f64| -> Result<Mat> {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let mut acc = Mat::zeros(q.nrows(), q.ncols());
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            let e = matrix_exp(a, mid + half * x)?;
            acc += (&e * q * e.transpose()) * (w * half);
        }
        Ok(acc)
    };
    let pieces = ((t * crate::linalg::spectral_norm(a)).ceil() as usize).clamp(1, 10_000);
    let width = t / pieces as f64;
    let mut coarse = Vec::with_capacity(pieces);
    let mut scale = 0.0;
    for p in 0..pieces {
        let lo = p as f64 * width;
        let hi = if p + 1 == pieces { t } else { lo + width };
        let v = panel(lo, hi)?;
        scale += v.norm();
        coarse.push((lo, hi, v));
    }
    let tol = rtol * scale.max(f64::MIN_POSITIVE);
    let mut total = Mat::zeros(q.nrows(), q.ncols());
    let mut stack: Vec<(f64, f64, Mat, usize)> = coarse.into_iter().rev().map(|(l, h, v)| (l, h, v, 0)).collect();
    while let Some((lo, hi, whole, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let left = panel(lo, mid)?;
        let right = panel(mid, hi)?;
        let split = &left + &right;
        if (&split - &whole).norm() <= tol * (hi - lo) / t || depth >= 40 {
            if depth >= 40 {
                return Err(LabError::NumericalFailure(format!(
                    "Gramian quadrature did not converge on [{lo}, {hi}]"
                )));
            }
            total += split;
        } else {
            stack.push((mid, hi, right, depth + 1));
            stack.push((lo, mid, left, depth + 1));
        }
    }
    Ok(symmetrize(&total))
}
