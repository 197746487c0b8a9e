//! Matrix exponential by scaling and squaring with diagonal Padé approximants
//! (degrees 3, 5, 7, 9, 13 and the matching 1-norm thresholds).

use crate::error::{LabError, Result};
use crate::linalg::Mat;

const THETA: [(usize, f64); 4] = [
    (3, 1.495_585_217_958_292e-2),
    (5, 2.539_398_330_063_23e-1),
    (7, 9.504_178_996_162_932e-1),
    (9, 2.097_847_961_257_068),
];
const THETA_13: f64 = 5.371_920_351_148_152;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

fn one_norm(m: &Mat) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `e^{tA}`.
pub fn matrix_exp(a: &Mat, t: f64) -> Result<Mat> {
    if !a.is_square() {
        return Err(LabError::InvalidArgument(format!(
            "matrix_exp needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if !t.is_finite() {
        return Err(LabError::InvalidArgument(format!("time must be finite, got {t}")));
    }
    let n = a.nrows();
    if n == 0 || t == 0.0 {
        return Ok(Mat::identity(n, n));
    }
    let ta = a * t;
    if ta.iter().any(|v| !v.is_finite()) {
        return Err(LabError::Range("t*A has non-finite entries".into()));
    }
    let norm = one_norm(&ta);
    let result = if let Some(&(m, _)) = THETA.iter().find(|(_, th)| norm <= *th) {
        pade_low(&ta, m)?
    } else {
        let s = (norm / THETA_13).log2().ceil().max(0.0);
        if s > 1000.0 {
            return Err(LabError::Range(format!("|tA|_1 = {norm:e} is too large")));
        }
        let s = s as i32;
        let scaled = &ta * 2f64.powi(-s);
        let mut r = pade13(&scaled)?;
        for _ in 0..s {
            r = &r * &r;
            if r.iter().any(|v| !v.is_finite()) {
                return Err(LabError::Range(format!("exp(tA) overflows (|tA|_1 = {norm:e})")));
            }
        }
        r
    };
    if result.iter().any(|v| !v.is_finite()) {
        return Err(LabError::Range(format!("exp(tA) overflows (|tA|_1 = {norm:e})")));
    }
    Ok(result)
}

fn solve_pade(u: Mat, v: Mat) -> Result<Mat> {
    let p = &v + &u;
    let q = &v - &u;
    q.lu()
        .solve(&p)
        .ok_or_else(|| LabError::NumericalFailure("Padé denominator is singular".into()))
}

fn pade_low(a: &Mat, m: usize) -> Result<Mat> {
    let n = a.nrows();
    let b: &[f64] = match m {
        3 => &B3,
        5 => &B5,
        7 => &B7,
        _ => &B9,
    };
    let id = Mat::identity(n, n);
    let a2 = a * a;
    // powers A^0, A^2, A^4, ...
    let mut pows = vec![id.clone(), a2.clone()];
    while pows.len() <= m / 2 {
        let next = pows.last().unwrap() * &a2;
        pows.push(next);
    }
    let mut odd = Mat::zeros(n, n);
    let mut even = Mat::zeros(n, n);
    for (k, p) in pows.iter().enumerate() {
        if 2 * k < m {
            odd += p * b[2 * k + 1];
        }
        if 2 * k <= m {
            even += p * b[2 * k];
        }
    }
    let u = a * odd;
    solve_pade(u, even)
}

fn pade13(a: &Mat) -> Result<Mat> {
    let n = a.nrows();
    let b = &B13;
    let id = Mat::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * b[13] + &a4 * b[11] + &a2 * b[9];
    let u = a * (&a6 * &inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1]);
    let inner_v = &a6 * b[12] + &a4 * b[10] + &a2 * b[8];
    let v = &a6 * &inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];
    solve_pade(u, v)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Truncated Taylor series with enough terms for small arguments.
    fn series(a: &Mat, t: f64, terms: usize) -> Mat {
        let n = a.nrows();
        let mut term = Mat::identity(n, n);
        let mut sum = term.clone();
        for k in 1..terms {
            term = &term * a * (t / k as f64);
            sum += &term;
        }
        sum
    }

    #[test]
    fn zero_time_is_identity() {
        let a = Mat::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(matrix_exp(&a, 0.0).unwrap(), Mat::identity(2, 2));
    }

    #[test]
    fn nilpotent_triple_integrator() {
        let a = Mat::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        for &t in &[0.3, 2.0, 7.5] {
            let e = matrix_exp(&a, t).unwrap();
            let expected =
                Mat::from_row_slice(3, 3, &[1.0, t, t * t / 2.0, 0.0, 1.0, t, 0.0, 0.0, 1.0]);
            assert!((e - expected).norm() <= 1e-12 * (1.0 + t * t));
        }
    }

    #[test]
    fn rotation_matches_series() {
        let h = 1.7;
        let a = Mat::from_row_slice(2, 2, &[0.0, h, -h, 0.0]);
        for &t in &[0.01, 0.5, 1.3] {
            let e = matrix_exp(&a, t).unwrap();
            let s = series(&a, t, 60);
            assert!((&e - &s).norm() < 1e-12, "t={t} {}", (&e - &s).norm());
            assert!((e[(0, 0)] - (h * t).cos()).abs() < 1e-13);
            assert!((e[(0, 1)] - (h * t).sin()).abs() < 1e-13);
        }
    }

    #[test]
    fn every_pade_degree_matches_series() {
        let a = Mat::from_row_slice(3, 3, &[0.1, -0.4, 0.2, 0.3, -0.2, 0.5, -0.1, 0.2, 0.05]);
        for &t in &[1e-3, 0.02, 0.3, 1.0, 2.5, 6.0] {
            let e = matrix_exp(&a, t).unwrap();
            let s = series(&a, t, 120);
            assert!((&e - &s).norm() <= 1e-12 * s.norm(), "t={t}");
        }
    }

    #[test]
    fn overflow_is_a_range_error() {
        let a = Mat::from_row_slice(1, 1, &[1.0]);
        assert!(matches!(matrix_exp(&a, 1e6), Err(LabError::Range(_))));
        assert!(matrix_exp(&a, f64::NAN).is_err());
    }
}
