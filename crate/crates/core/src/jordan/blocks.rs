use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{BlockKind, JordanBlock, JordanDecomposition};
use crate::error::{LabError, Result};
use crate::expm::matrix_exp;
use crate::linalg::Mat;

/// Canonical matrix of a block kind. Stable and unstable blocks have no
/// canonical form; they get a zero placeholder of the right size.
pub fn block_matrix(kind: BlockKind, size: usize) -> Mat {
    let mut m = Mat::zeros(size, size);
    match kind {
        BlockKind::NilpotentJordan { .. } => {
            for i in 0..size.saturating_sub(1) {
                m[(i, i + 1)] = 1.0;
            }
        }
        BlockKind::RotationJordan { d, .. } | BlockKind::PureRotation { h: d } => {
            for b in 0..size / 2 {
                let o = 2 * b;
                m[(o, o + 1)] = d;
                m[(o + 1, o)] = -d;
                if o + 2 < size {
                    m[(o, o + 2)] = 1.0;
                    m[(o + 1, o + 3)] = 1.0;
                }
            }
        }
        BlockKind::Stable | BlockKind::ZeroSimple | BlockKind::Unstable => {}
    }
    m
}

fn taylor(t: f64, m: usize) -> f64 {
    (1..=m).fold(1.0, |acc, k| acc * t / k as f64)
}

/// Closed-form `e^{tJ}` for the canonical block kinds.
///
/// Stable and unstable blocks carry no closed form; use
/// [`JordanDecomposition::block_exponential`], which falls back to the
/// Padé exponential of the stored block.
pub fn block_exponential(block: &JordanBlock, t: f64) -> Result<Mat> {
    if !t.is_finite() {
        return Err(LabError::InvalidArgument(format!("time must be finite, got {t}")));
    }
    let n = block.size;
    let out = match block.kind {
        BlockKind::ZeroSimple => Mat::identity(n, n),
        BlockKind::NilpotentJordan { .. } => Mat::from_fn(n, n, |i, j| if j >= i { taylor(t, j - i) } else { 0.0 }),
        BlockKind::RotationJordan { d, .. } | BlockKind::PureRotation { h: d } => {
            let (s, c) = (d * t).sin_cos();
            let mut m = Mat::zeros(n, n);
            let g = n / 2;
            for bi in 0..g {
                for bj in bi..g {
                    let f = taylor(t, bj - bi);
                    let (r, col) = (2 * bi, 2 * bj);
                    m[(r, col)] = f * c;
                    m[(r, col + 1)] = f * s;
                    m[(r + 1, col)] = -f * s;
                    m[(r + 1, col + 1)] = f * c;
                }
            }
            m
        }
        BlockKind::Stable | BlockKind::Unstable => {
            return Err(LabError::InvalidArgument(
                "stable and unstable blocks have no closed form; use JordanDecomposition::block_exponential".into(),
            ))
        }
    };
    if out.iter().any(|v| !v.is_finite()) {
        return Err(LabError::Range(format!("block exponential overflows at t = {t}")));
    }
    Ok(out)
}

impl JordanDecomposition {
    /// `e^{tJ_i}` for block `i`, closed form where one exists.
    pub fn block_exponential(&self, index: usize, t: f64) -> Result<Mat> {
        let block = self
            .blocks
            .get(index)
            .ok_or_else(|| LabError::InvalidArgument(format!("no block {index}")))?;
        match block.kind {
            BlockKind::Stable | BlockKind::Unstable => {
                let sub = self.j.view((block.offset, block.offset), (block.size, block.size)).into_owned();
                matrix_exp(&sub, t)
            }
            _ => block_exponential(block, t),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    /// `d T_n = pi/2 + 2 n pi`.
    Quarter,
    /// `d T_n = 2 n pi`.
    Full,
}

/// Times at which the rotation `R(d t)` is aligned, for `n = 0..=n_max`.
pub fn resonance_times(d: f64, phase: Phase, n_max: usize) -> Result<Vec<f64>> {
    if d == 0.0 || !d.is_finite() {
        return Err(LabError::InvalidArgument(format!("frequency must be nonzero and finite, got {d}")));
    }
    let base = match phase {
        Phase::Quarter => PI / 2.0,
        Phase::Full => 0.0,
    };
    Ok((0..=n_max).map(|n| (base + 2.0 * PI * n as f64) / d).collect())
}
