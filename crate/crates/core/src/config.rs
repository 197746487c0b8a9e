//! Every numerical threshold used by the laboratory.
//!
//! A single [`Config`] value is threaded explicitly through the API; there is
//! no global state. Each field can be overridden by name (see
//! [`Config::set`]), which is what the CLI's `--tol.<name>` flags use.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Symmetry of Q: `max|Q_ij - Q_ji| <= sym_tol * max|Q|`.
    pub sym_tol: f64,
    /// Smallest admissible eigenvalue of a covariance, relative to the largest.
    pub psd_tol: f64,
    /// Singular values below `N * eps * sigma_max * rank_slack` count as zero.
    pub rank_slack: f64,
    /// `s(A)` is classified as zero when `|s(A)| <= stability_tol * (1 + |A|)`.
    pub stability_tol: f64,
    /// Largest admissible condition number of a change of basis.
    pub cond_max: f64,
    /// Base eigenvalue clustering radius, relative to `|A|_F`.
    pub cluster_tol: f64,
    /// Largest clustering radius tried before giving up, relative to `|A|_F`.
    pub cluster_tol_max: f64,
    /// Admissible `|P J P^-1 - A|_F / |A|_F`.
    pub jordan_tol: f64,
    /// Relative singular value threshold used for ranks inside a cluster.
    pub jordan_rank_tol: f64,
    /// Largest condition number of an accepted Jordan basis; near-defective
    /// clusters that were split too finely produce much worse bases.
    pub jordan_cond_max: f64,
    /// Quasi-constancy: forbidden partials must be below `grad_tol * (1 + max|Du|)`.
    pub grad_tol: f64,
    /// Eigenvalue floor for `Q_t^{-1/2}`, relative to the largest eigenvalue.
    pub inv_tol: f64,
    /// Kwapien inequality margin: `LHS - RHS >= -kwapien_tol * (1 + |RHS|)`.
    pub kwapien_tol: f64,
    /// Residual check: `max|Lu| <= resid_tol * (1 + max|u|)`.
    pub resid_tol: f64,
    /// Convexity checks: margin `>= -conv_tol * scale`.
    pub conv_tol: f64,
    /// Semigroup invariance under quadrature: `|P_t u - u| <= quad_tol * (1 + |u|)`.
    pub quad_tol: f64,
    /// Monte Carlo acceptance band, in standard errors.
    pub mc_sigmas: f64,
    /// Largest exponential rate accepted by the gradient growth fit.
    pub c_max: f64,
    /// Relative tolerance of the adaptive Gramian integrators.
    pub gramian_rtol: f64,
    /// Quadrature is refused above this dimension.
    pub quad_dim_max: usize,
    /// Starting Gauss-Hermite nodes per dimension; each dimension doubles
    /// while doubling it moves the result by more than `quad_conv_tol`.
    pub gh_level: usize,
    /// Quadrature refinement tolerance, relative to `1 + |value|`.
    pub quad_conv_tol: f64,
    /// Largest tensor grid (total nodes) before quadrature gives up.
    pub quad_nodes_max: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            sym_tol: 1e-12,
            psd_tol: 1e-10,
            rank_slack: 1e3,
            stability_tol: 1e-9,
            cond_max: 1e12,
            cluster_tol: 1e-6,
            cluster_tol_max: 1e-2,
            jordan_tol: 1e-8,
            jordan_rank_tol: 1e-7,
            jordan_cond_max: 1e8,
            grad_tol: 1e-9,
            inv_tol: 1e-13,
            kwapien_tol: 1e-8,
            resid_tol: 1e-10,
            conv_tol: 1e-9,
            quad_tol: 1e-8,
            mc_sigmas: 4.0,
            c_max: 10.0,
            gramian_rtol: 1e-12,
            quad_dim_max: 4,
            gh_level: 20,
            quad_conv_tol: 1e-9,
            quad_nodes_max: 1 << 24,
        }
    }
}

impl Config {
    /// Names accepted by [`Config::set`].
    pub const NAMES: &'static [&'static str] = &[
        "sym", "psd", "rank_slack", "stability", "cond_max", "cluster", "cluster_max", "jordan",
        "jordan_rank", "jordan_cond_max", "grad", "inv", "kwapien", "resid", "conv", "quad", "mc_sigmas", "c_max",
        "gramian_rtol", "quad_dim_max", "gh_level", "quad_conv", "quad_nodes_max",
    ];

    /// Override one threshold by its short name (`resid`, `kwapien`, ...).
    pub fn set(&mut self, name: &str, value: &str) -> Result<()> {
        let name = name.trim_end_matches("_tol");
        let float = || -> Result<f64> {
            let v: f64 = value
                .parse()
                .map_err(|_| LabError::InvalidArgument(format!("tolerance {name}: cannot parse {value:?}")))?;
            if !v.is_finite() || v < 0.0 {
                return Err(LabError::InvalidArgument(format!("tolerance {name} must be finite and >= 0")));
            }
            Ok(v)
        };
        let int = || -> Result<usize> {
            value
                .parse()
                .map_err(|_| LabError::InvalidArgument(format!("{name}: expected a non-negative integer, got {value:?}")))
        };
        match name {
            "sym" => self.sym_tol = float()?,
            "psd" => self.psd_tol = float()?,
            "rank_slack" => self.rank_slack = float()?,
            "stability" => self.stability_tol = float()?,
            "cond_max" => self.cond_max = float()?,
            "cluster" => self.cluster_tol = float()?,
            "cluster_max" => self.cluster_tol_max = float()?,
            "jordan" => self.jordan_tol = float()?,
            "jordan_rank" => self.jordan_rank_tol = float()?,
            "jordan_cond_max" => self.jordan_cond_max = float()?,
            "grad" => self.grad_tol = float()?,
            "inv" => self.inv_tol = float()?,
            "kwapien" => self.kwapien_tol = float()?,
            "resid" => self.resid_tol = float()?,
            "conv" => self.conv_tol = float()?,
            "quad" => self.quad_tol = float()?,
            "mc_sigmas" => self.mc_sigmas = float()?,
            "c_max" => self.c_max = float()?,
            "gramian_rtol" => self.gramian_rtol = float()?,
            "quad_dim_max" => self.quad_dim_max = int()?,
            "gh_level" => {
                let n = int()?;
                if n == 0 {
                    return Err(LabError::InvalidArgument("gh_level must be >= 1".into()));
                }
                self.gh_level = n
            }
            "quad_conv" => self.quad_conv_tol = float()?,
            "quad_nodes_max" => self.quad_nodes_max = int()?,
            other => {
                return Err(LabError::InvalidArgument(format!(
                    "unknown tolerance {other:?}; known: {}",
                    Self::NAMES.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Parse a TOML config document; omitted fields keep their defaults.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| LabError::Parse(e.to_string()))
    }
}
