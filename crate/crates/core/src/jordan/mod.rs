//! Real Jordan decomposition of the drift and the block taxonomy
//! `S (+) E0 (+) J(0,k_i) (+) J(0,d_j,g_j) (+) E1`.

mod blocks;
mod chains;
mod decompose;
pub mod quasi;
mod schur;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::linalg::Mat;

pub use blocks::{block_exponential, block_matrix, resonance_times, Phase};
pub use decompose::jordan_real_form;
pub use quasi::{forbidden_coordinates, quasi_constancy_check};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BlockKind {
    /// Eigenvalues with negative real part; the block matrix is kept as computed.
    Stable,
    /// Semisimple zero eigenvalues (the block is zero).
    ZeroSimple,
    NilpotentJordan { k: usize },
    RotationJordan { d: f64, g: usize },
    PureRotation { h: f64 },
    /// Eigenvalues with positive real part; present only for `s(A) > 0`.
    Unstable,
}

impl BlockKind {
    fn rank(&self) -> u8 {
        match self {
            BlockKind::Stable => 0,
            BlockKind::ZeroSimple => 1,
            BlockKind::NilpotentJordan { .. } => 2,
            BlockKind::RotationJordan { .. } => 3,
            BlockKind::PureRotation { .. } => 4,
            BlockKind::Unstable => 5,
        }
    }

    /// Total order matching the left-to-right order of the canonical form.
    pub(crate) fn canonical_cmp(&self, other: &Self) -> std::cmp::Ordering {
        use BlockKind::*;
        match (self, other) {
            (NilpotentJordan { k: a }, NilpotentJordan { k: b }) => a.cmp(b),
            (RotationJordan { d: d1, g: g1 }, RotationJordan { d: d2, g: g2 }) => {
                g1.cmp(g2).then(d1.total_cmp(d2))
            }
            (PureRotation { h: a }, PureRotation { h: b }) => a.total_cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }

    pub fn is_jordan(&self) -> bool {
        matches!(self, BlockKind::NilpotentJordan { .. } | BlockKind::RotationJordan { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JordanBlock {
    #[serde(flatten)]
    pub kind: BlockKind,
    pub size: usize,
    pub offset: usize,
}

impl fmt::Display for JordanBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            BlockKind::Stable => write!(f, "S({})", self.size)?,
            BlockKind::ZeroSimple => write!(f, "E0({})", self.size)?,
            BlockKind::NilpotentJordan { k } => write!(f, "J(0,{k})")?,
            BlockKind::RotationJordan { d, g } => write!(f, "J(0, d={d:?}, g={g})")?,
            BlockKind::PureRotation { h } => write!(f, "E1(h={h:?})")?,
            BlockKind::Unstable => write!(f, "U({})", self.size)?,
        }
        write!(f, "@offset {}", self.offset)
    }
}

/// `A = P J P^-1` with `J` block diagonal in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct JordanDecomposition {
    pub p: Mat,
    pub p_inv: Mat,
    pub blocks: Vec<JordanBlock>,
    pub j: Mat,
    /// Set when some eigenvalue has positive real part; the taxonomy then
    /// only describes the centre and stable parts.
    pub unstable: bool,
    pub spectral_bound: f64,
    /// Absolute clustering radius that produced this decomposition.
    pub cluster_tol: f64,
    /// Smallest distance between distinct cluster centres (infinite for one cluster).
    pub cluster_gap: f64,
    /// `|P J P^-1 - A|_F / |A|_F`.
    pub residual: f64,
    pub condition: f64,
}

impl JordanDecomposition {
    pub fn dim(&self) -> usize {
        self.p.nrows()
    }

    /// Only `ZeroSimple` and `PureRotation` blocks: `sup_t |e^{tA}|` is finite.
    pub fn bounded_group(&self) -> bool {
        self.blocks
            .iter()
            .all(|b| matches!(b.kind, BlockKind::ZeroSimple | BlockKind::PureRotation { .. }))
    }

    pub fn has_jordan_blocks(&self) -> bool {
        self.blocks.iter().any(|b| b.kind.is_jordan())
    }

    /// One-line summary such as `J(0,3)@offset 0, E1(h=2.0)@offset 3`.
    pub fn summary(&self) -> String {
        self.blocks
            .iter()
            .map(|b| b.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_format() {
        let b = JordanBlock { kind: BlockKind::NilpotentJordan { k: 3 }, size: 3, offset: 0 };
        assert_eq!(b.to_string(), "J(0,3)@offset 0");
        let b = JordanBlock { kind: BlockKind::RotationJordan { d: 2.0, g: 2 }, size: 4, offset: 3 };
        assert_eq!(b.to_string(), "J(0, d=2.0, g=2)@offset 3");
    }

    #[test]
    fn canonical_order() {
        use BlockKind::*;
        let mut v = [
            PureRotation { h: 1.0 },
            RotationJordan { d: 3.0, g: 2 },
            RotationJordan { d: 1.0, g: 3 },
            RotationJordan { d: 1.0, g: 2 },
            NilpotentJordan { k: 4 },
            NilpotentJordan { k: 2 },
            ZeroSimple,
            Unstable,
            Stable,
        ];
        v.sort_by(|a, b| a.canonical_cmp(b));
        assert_eq!(
            v,
            [
                Stable,
                ZeroSimple,
                NilpotentJordan { k: 2 },
                NilpotentJordan { k: 4 },
                RotationJordan { d: 1.0, g: 2 },
                RotationJordan { d: 3.0, g: 2 },
                RotationJordan { d: 1.0, g: 3 },
                PureRotation { h: 1.0 },
                Unstable,
            ]
        );
    }
}
