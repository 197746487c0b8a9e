use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GrowthKind {
    /// `|u| <= c0`.
    Bounded,
    /// `|u(x)| <= c0 (1 + |x|^delta)` with `0 <= delta < 1`.
    Sublinear,
    /// `|u(x)| <= c0 e^{c0 |x|}`.
    Exponential,
}

/// Declared growth class of a harmonic candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthCertificate {
    pub kind: GrowthKind,
    pub c0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

impl GrowthCertificate {
    pub fn bounded(c0: f64) -> Result<Self> {
        Self::new(GrowthKind::Bounded, c0, None)
    }

    pub fn sublinear(c_delta: f64, delta: f64) -> Result<Self> {
        Self::new(GrowthKind::Sublinear, c_delta, Some(delta))
    }

    pub fn exponential(c0: f64) -> Result<Self> {
        Self::new(GrowthKind::Exponential, c0, None)
    }

    pub fn new(kind: GrowthKind, c0: f64, delta: Option<f64>) -> Result<Self> {
        if !(c0.is_finite() && c0 >= 0.0) {
            return Err(LabError::InvalidArgument(format!("growth constant must be >= 0, got {c0}")));
        }
        match kind {
            GrowthKind::Sublinear => match delta {
                Some(d) if (0.0..1.0).contains(&d) => {}
                _ => {
                    return Err(LabError::InvalidArgument(format!(
                        "sublinear certificate needs 0 <= delta < 1, got {delta:?}"
                    )))
                }
            },
            GrowthKind::Exponential if c0 <= 0.0 => {
                return Err(LabError::InvalidArgument("exponential certificate needs c0 > 0".into()))
            }
            _ => {
                if delta.is_some() {
                    return Err(LabError::InvalidArgument("delta is only meaningful for sublinear growth".into()));
                }
            }
        }
        Ok(Self { kind, c0, delta })
    }

    /// The bound the certificate claims at radius `r = |x|`.
    pub fn bound_at(&self, r: f64) -> f64 {
        match self.kind {
            GrowthKind::Bounded => self.c0,
            GrowthKind::Sublinear => self.c0 * (1.0 + r.powf(self.delta.unwrap_or(0.0))),
            GrowthKind::Exponential => self.c0 * (self.c0 * r).exp(),
        }
    }

    /// Every class here implies the exponential growth condition.
    pub fn implies_exponential(&self) -> bool {
        true
    }
}
