//! Deterministic low-discrepancy probe points.

use crate::linalg::Vector;

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Radical inverse of `index` in `base`.
pub fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

/// `count` Halton points in the closed ball of `radius` in `R^dim`, by
/// rejection from the cube. `seed` shifts the start of the sequence.
pub fn ball_points(dim: usize, count: usize, radius: f64, seed: u64) -> Vec<Vector> {
    assert!(dim >= 1 && dim <= PRIMES.len(), "dimension {dim} not supported for Halton probes");
    let mut out = Vec::with_capacity(count);
    let mut index = 1 + seed.wrapping_mul(7919) % 1_000_003;
    while out.len() < count {
        let p = Vector::from_fn(dim, |i, _| (2.0 * halton(index, PRIMES[i]) - 1.0) * radius);
        index += 1;
        if p.norm() <= radius {
            out.push(p);
        }
    }
    out
}

/// Points on the sphere of `radius`, from normalized ball points.
pub fn sphere_points(dim: usize, count: usize, radius: f64, seed: u64) -> Vec<Vector> {
    if dim == 1 {
        return vec![Vector::from_element(1, radius), Vector::from_element(1, -radius)];
    }
    ball_points(dim, 2 * count, 1.0, seed)
        .into_iter()
        .filter(|p| p.norm() > 0.1)
        .take(count)
        .map(|p| p.normalize() * radius)
        .collect()
}

/// The standard probe grid: `per_radius` points in each ball of radius 1, 5 and 10.
pub fn probe_points(dim: usize, per_radius: usize, seed: u64) -> Vec<Vector> {
    [1.0, 5.0, 10.0]
        .iter()
        .flat_map(|&r| ball_points(dim, per_radius, r, seed))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radical_inverse() {
        assert_eq!(halton(1, 2), 0.5);
        assert_eq!(halton(2, 2), 0.25);
        assert_eq!(halton(3, 2), 0.75);
        assert!((halton(1, 3) - 1.0 / 3.0).abs() < 1e-16);
    }

    #[test]
    fn ball_points_inside_and_deterministic() {
        let a = ball_points(3, 50, 2.0, 9);
        assert_eq!(a.len(), 50);
        assert!(a.iter().all(|p| p.norm() <= 2.0));
        assert_eq!(a, ball_points(3, 50, 2.0, 9));
        assert_ne!(a, ball_points(3, 50, 2.0, 10));
    }

    #[test]
    fn sphere_points_on_sphere() {
        for p in sphere_points(4, 20, 3.0, 0) {
            assert!((p.norm() - 3.0).abs() < 1e-12);
        }
    }
}
