#![allow(dead_code)]

use ou_lab::jordan::{block_matrix, jordan_real_form};
use ou_lab::operator::kalman_rank;
use ou_lab::{BlockKind, Config, Mat, OperatorSpec, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn cfg() -> Config {
    Config::default()
}

/// Triple integrator drift with `Q = I`.
pub fn triple() -> OperatorSpec {
    OperatorSpec::from_rows(
        &[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]],
        &[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0], &[0.0, 0.0, 0.0]],
        &cfg(),
    )
    .unwrap()
}

/// Rotation drift in the plane with `Q = I`.
pub fn skew2() -> OperatorSpec {
    OperatorSpec::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]], &[&[0.0, 1.0], &[-1.0, 0.0]], &cfg()).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, n: usize, m: usize) -> Mat {
    Mat::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0))
}

/// `I + 0.4 G` rescaled: condition number stays modest.
pub fn well_conditioned(rng: &mut impl Rng, n: usize) -> Mat {
    loop {
        let p = Mat::identity(n, n) + random_matrix(rng, n, n) * 0.4;
        if ou_lab::linalg::condition_number(&p) < 20.0 {
            return p;
        }
    }
}

/// Random operator with `|A|_2 <= 2` satisfying the Kalman condition; every
/// other draw has a rank-one `Q`.
pub fn random_hypoelliptic(rng: &mut impl Rng, n: usize) -> OperatorSpec {
    let mut k = 0u32;
    loop {
        k += 1;
        let a = random_matrix(rng, n, n);
        let a = &a * (rng.random_range(0.2..2.0) / ou_lab::linalg::spectral_norm(&a));
        let q = if k.is_multiple_of(2) {
            let v = random_matrix(rng, n, 1);
            &v * v.transpose()
        } else {
            let g = random_matrix(rng, n, n);
            &g * g.transpose() + Mat::identity(n, n) * 0.1
        };
        let spec = OperatorSpec::new(q, a, &cfg()).unwrap();
        if kalman_rank(&spec, &cfg()).unwrap().hypoelliptic {
            return spec;
        }
    }
}

/// Blocks of a synthetic real Jordan form, as `(kind, size)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub a: Mat,
    pub expected: Vec<(BlockKind, usize)>,
}

/// Random block multiset (total size `<= 8`) conjugated by a well-conditioned
/// basis. Distinct rotation frequencies keep the expected multiset unique.
pub fn synthetic_jordan(seed: u64) -> Synthetic {
    let mut r = rng(seed);
    let mut blocks: Vec<(BlockKind, usize, Mat)> = Vec::new();
    let mut size = 0;
    let target = r.random_range(2..=8);
    let mut freqs: Vec<f64> = Vec::new();
    let mut fresh = |r: &mut ChaCha8Rng| loop {
        let f: f64 = (r.random_range(0.5_f64..3.0) * 4.0).round() / 4.0;
        if !freqs.contains(&f) {
            freqs.push(f);
            return f;
        }
    };
    let (mut stable, mut zeros) = (0, 0);
    while size < target {
        let room = target - size;
        match r.random_range(0..5) {
            0 => {
                stable += 1;
                size += 1;
            }
            1 => {
                zeros += 1;
                size += 1;
            }
            2 if room >= 2 => {
                let k = r.random_range(2..=room.min(4));
                let kind = BlockKind::NilpotentJordan { k };
                blocks.push((kind, k, block_matrix(kind, k)));
                size += k;
            }
            3 if room >= 4 => {
                let kind = BlockKind::RotationJordan { d: fresh(&mut r), g: 2 };
                blocks.push((kind, 4, block_matrix(kind, 4)));
                size += 4;
            }
            4 if room >= 2 => {
                let kind = BlockKind::PureRotation { h: fresh(&mut r) };
                blocks.push((kind, 2, block_matrix(kind, 2)));
                size += 2;
            }
            _ => {}
        }
    }
    let mut expected = Vec::new();
    let mut parts: Vec<Mat> = Vec::new();
    if stable > 0 {
        let diag: Vec<f64> = (0..stable).map(|i| -0.5 - 0.75 * i as f64).collect();
        parts.push(Mat::from_diagonal(&Vector::from_vec(diag)));
        expected.push((BlockKind::Stable, stable));
    }
    if zeros > 0 {
        parts.push(Mat::zeros(zeros, zeros));
        expected.push((BlockKind::ZeroSimple, zeros));
    }
    blocks.sort_by(|a, b| sort_key(&a.0).partial_cmp(&sort_key(&b.0)).unwrap());
    for (kind, s, m) in blocks {
        parts.push(m);
        expected.push((kind, s));
    }
    let n: usize = parts.iter().map(|m| m.nrows()).sum();
    let mut j = Mat::zeros(n, n);
    let mut o = 0;
    for m in &parts {
        j.view_mut((o, o), m.shape()).copy_from(m);
        o += m.nrows();
    }
    let p = well_conditioned(&mut r, n);
    let a = &p * &j * p.clone().try_inverse().unwrap();
    Synthetic { a, expected }
}

fn sort_key(k: &BlockKind) -> (u8, f64, f64) {
    match *k {
        BlockKind::Stable => (0, 0.0, 0.0),
        BlockKind::ZeroSimple => (1, 0.0, 0.0),
        BlockKind::NilpotentJordan { k } => (2, k as f64, 0.0),
        BlockKind::RotationJordan { d, g } => (3, g as f64, d),
        BlockKind::PureRotation { h } => (4, h, 0.0),
        BlockKind::Unstable => (5, 0.0, 0.0),
    }
}

/// Same kinds and sizes, continuous parameters within `1e-6`.
pub fn same_structure(got: &[(BlockKind, usize)], want: &[(BlockKind, usize)]) -> bool {
    got.len() == want.len()
        && got.iter().zip(want).all(|((g, gs), (w, ws))| {
            gs == ws
                && match (g, w) {
                    (BlockKind::NilpotentJordan { k: a }, BlockKind::NilpotentJordan { k: b }) => a == b,
                    (BlockKind::RotationJordan { d: a, g: x }, BlockKind::RotationJordan { d: b, g: y }) => {
                        x == y && (a - b).abs() < 1e-6
                    }
                    (BlockKind::PureRotation { h: a }, BlockKind::PureRotation { h: b }) => (a - b).abs() < 1e-6,
                    (a, b) => std::mem::discriminant(a) == std::mem::discriminant(b),
                }
        })
}

/// Outcome of one synthetic round trip.
#[derive(Debug, PartialEq, Eq)]
pub enum RoundTrip {
    Recovered,
    Ambiguous,
    /// Structure differs or residual too large: never acceptable.
    Wrong(String),
}

pub fn round_trip(s: &Synthetic) -> RoundTrip {
    match jordan_real_form(&s.a, &cfg()) {
        Ok(d) => {
            let got: Vec<(BlockKind, usize)> = d.blocks.iter().map(|b| (b.kind, b.size)).collect();
            let recon = &d.p * &d.j * &d.p_inv;
            let resid = (&recon - &s.a).norm();
            if resid > 1e-8 * s.a.norm().max(1.0) {
                return RoundTrip::Wrong(format!("residual {resid:e}"));
            }
            if same_structure(&got, &s.expected) {
                RoundTrip::Recovered
            } else {
                RoundTrip::Wrong(format!("got {got:?}, want {:?}", s.expected))
            }
        }
        Err(ou_lab::LabError::AmbiguousStructure { .. }) => RoundTrip::Ambiguous,
        Err(e) => RoundTrip::Wrong(e.to_string()),
    }
}

/// Gaussian bump centred at `c`.
pub fn gaussian_bump(c: Vector, s: f64) -> impl Fn(&Vector) -> f64 + Sync {
    move |x: &Vector| (-(x - &c).norm_squared() / (2.0 * s * s)).exp()
}

/// Product of `sech` profiles: positive, smooth, heavier tails than a Gaussian.
pub fn sech_bump(c: Vector) -> impl Fn(&Vector) -> f64 + Sync {
    move |x: &Vector| x.iter().zip(c.iter()).map(|(xi, ci)| 1.0 / (xi - ci).cosh()).product()
}
