//! Collocation sampling and test sets.
//!
//! Every draw is a pure function of `(seed, draw_index)`: the interior and
//! boundary samplers read separate ChaCha20 streams keyed by the seed, so a
//! batch can be regenerated from its indices alone.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::math;
use crate::problems::{sphere_area, Domain};
use crate::rng::{keyed, Purpose};
use crate::{Error, Result};

/// Default cap on the number of test grid points.
pub const DEFAULT_GRID_CAP: usize = 20_000;

/// Random test points used when the grid would exceed the cap.
pub const RANDOM_TEST_POINTS: usize = 1600;

/// One training set: `n × d` interior points and `m × d` boundary points and
/// outward unit normals, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub interior: Vec<f64>,
    pub boundary: Vec<f64>,
    pub normals: Vec<f64>,
    pub seed: u64,
    pub draw_index: u64,
}

impl SampleBatch {
    pub fn draw(domain: &Domain, n: usize, m: usize, seed: u64, draw_index: u64) -> Result<SampleBatch> {
        let interior = lhs_interior(domain, n, seed, draw_index)?;
        let (boundary, normals) = sample_boundary(domain, m, seed, draw_index)?;
        Ok(SampleBatch {
            interior,
            boundary,
            normals,
            seed,
            draw_index,
        })
    }

    pub fn interior_count(&self, d: usize) -> usize {
        self.interior.len() / d
    }

    pub fn boundary_count(&self, d: usize) -> usize {
        self.boundary.len() / d
    }
}

/// Latin hypercube sample of `n` points strictly inside the box.
///
/// Each axis is cut into `n` equal strata, one jittered coordinate per
/// stratum, and the axes are paired by independent random permutations.
/// Points falling into holes are discarded and a further hypercube is drawn
/// for the shortfall, so with holes the marginal property holds per round
/// rather than for the whole sample.
pub fn lhs_interior(domain: &Domain, n: usize, seed: u64, draw_index: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("interior sample size must be at least 1".into()));
    }
    let d = domain.dim();
    let mut rng = keyed(seed, Purpose::Interior, draw_index);
    let mut out = Vec::with_capacity(n * d);
    let mut rounds = 0;
    while out.len() < n * d {
        let want = n - out.len() / d;
        let cols: Vec<Vec<f64>> = (0..d)
            .map(|axis| {
                let (lo, hi) = (domain.lower()[axis], domain.upper()[axis]);
                let mut col: Vec<f64> = (0..want)
                    .map(|s| loop {
                        let u: f64 = rng.random();
                        let x = lo + (hi - lo) * (s as f64 + u) / want as f64;
                        if x > lo && x < hi {
                            break x;
                        }
                    })
                    .collect();
                col.shuffle(&mut rng);
                col
            })
            .collect();
        for p in 0..want {
            let x: Vec<f64> = cols.iter().map(|c| c[p]).collect();
            if domain.contains(&x) {
                out.extend(x);
            }
        }
        rounds += 1;
        if rounds > 1000 {
            return Err(Error::InvalidArgument("holes leave almost no interior to sample".into()));
        }
    }
    Ok(out)
}

/// Number of boundary points on each piece: the `2d` box faces, then the
/// hole spheres. Proportional to measure by largest remainder, every piece
/// gets at least one point, ties go to the lower index.
pub fn boundary_allocation(domain: &Domain, m: usize) -> Result<Vec<usize>> {
    let d = domain.dim();
    let pieces = 2 * d + domain.holes().len();
    if m < pieces {
        return Err(Error::InvalidArgument(format!(
            "{m} boundary points cannot cover the {pieces} boundary pieces"
        )));
    }
    let mut measure: Vec<f64> = (0..2 * d).map(|f| domain.face_measure(f)).collect();
    measure.extend(domain.holes().iter().map(|h| sphere_area(d, h.radius)));
    let total: f64 = measure.iter().sum();
    let quota: Vec<f64> = measure.iter().map(|w| m as f64 * w / total).collect();
    let mut count: Vec<usize> = quota.iter().map(|q| (math::floor(*q) as usize).max(1)).collect();
    while count.iter().sum::<usize>() > m {
        // take back from the piece furthest above its quota
        let i = (0..pieces)
            .filter(|&i| count[i] > 1)
            .max_by(|&a, &b| {
                (count[a] as f64 - quota[a])
                    .total_cmp(&(count[b] as f64 - quota[b]))
                    .then(a.cmp(&b))
            })
            .expect("m ≥ number of pieces");
        count[i] -= 1;
    }
    while count.iter().sum::<usize>() < m {
        let i = (0..pieces)
            .max_by(|&a, &b| {
                (quota[a] - count[a] as f64)
                    .total_cmp(&(quota[b] - count[b] as f64))
                    .then(b.cmp(&a))
            })
            .expect("at least one piece");
        count[i] += 1;
    }
    Ok(count)
}

/// `m` boundary points with outward unit normals, uniform on each piece.
/// Hole normals point into the hole, out of the domain.
pub fn sample_boundary(domain: &Domain, m: usize, seed: u64, draw_index: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = domain.dim();
    let count = boundary_allocation(domain, m)?;
    let mut rng = keyed(seed, Purpose::Boundary, draw_index);
    let mut points = Vec::with_capacity(m * d);
    let mut normals = Vec::with_capacity(m * d);
    for (face, &c) in count.iter().enumerate().take(2 * d) {
        let axis = face / 2;
        let normal = domain.face_normal(face);
        for _ in 0..c {
            for i in 0..d {
                let x = if i == axis {
                    if face % 2 == 0 {
                        domain.lower()[i]
                    } else {
                        domain.upper()[i]
                    }
                } else {
                    rng.random_range(domain.lower()[i]..domain.upper()[i])
                };
                points.push(x);
            }
            normals.extend_from_slice(&normal);
        }
    }
    for (hole, &c) in domain.holes().iter().zip(&count[2 * d..]) {
        for _ in 0..c {
            let dir = loop {
                let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let norm = math::sqrt(g.iter().map(|v| v * v).sum());
                if norm > 1e-12 {
                    break g.into_iter().map(|v| v / norm).collect::<Vec<f64>>();
                }
            };
            for i in 0..d {
                points.push(hole.center[i] + hole.radius * dir[i]);
                normals.push(-dir[i]);
            }
        }
    }
    Ok((points, normals))
}

/// Tensor-product grid with `resolution` equidistant nodes per axis,
/// endpoints included, minus any points inside holes.
pub fn test_grid(domain: &Domain, resolution: usize, cap: usize) -> Result<Vec<f64>> {
    if resolution < 2 {
        return Err(Error::InvalidArgument("grid resolution must be at least 2".into()));
    }
    let d = domain.dim();
    let requested = (0..d).try_fold(1usize, |acc, _| acc.checked_mul(resolution)).unwrap_or(usize::MAX);
    if requested > cap {
        return Err(Error::GridCapExceeded { requested, cap });
    }
    let node = |axis: usize, k: usize| {
        let (lo, hi) = (domain.lower()[axis], domain.upper()[axis]);
        if k + 1 == resolution {
            hi
        } else {
            lo + (hi - lo) * k as f64 / (resolution - 1) as f64
        }
    };
    let mut out = Vec::with_capacity(requested * d);
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0; d];
    for _ in 0..requested {
        for i in 0..d {
            x[i] = node(i, idx[i]);
        }
        if domain.holes().iter().all(|h| dist2(&x, &h.center) >= h.radius * h.radius) {
            out.extend_from_slice(&x);
        }
        // first axis varies fastest
        for i in 0..d {
            idx[i] += 1;
            if idx[i] < resolution {
                break;
            }
            idx[i] = 0;
        }
    }
    Ok(out)
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `n` independent uniform points strictly inside the domain.
pub fn random_test_points(domain: &Domain, n: usize, seed: u64) -> Vec<f64> {
    let d = domain.dim();
    let mut rng = keyed(seed, Purpose::Test, 0);
    let mut out = Vec::with_capacity(n * d);
    while out.len() < n * d {
        let x: Vec<f64> = (0..d)
            .map(|i| rng.random_range(domain.lower()[i]..domain.upper()[i]))
            .collect();
        if domain.contains(&x) {
            out.extend(x);
        }
    }
    out
}

/// Where the test points came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestSetKind {
    Grid { resolution: usize },
    Random { count: usize },
}

/// Default evaluation points: a 128² grid in 2D, 25³ in 3D, otherwise
/// 1600 random interior points.
pub fn default_test_set(domain: &Domain, seed: u64) -> (TestSetKind, Vec<f64>) {
    let resolution = match domain.dim() {
        1 | 2 => 128,
        3 => 25,
        _ => 0,
    };
    if resolution > 0 {
        if let Ok(points) = test_grid(domain, resolution, DEFAULT_GRID_CAP) {
            return (TestSetKind::Grid { resolution }, points);
        }
    }
    (
        TestSetKind::Random {
            count: RANDOM_TEST_POINTS,
        },
        random_test_points(domain, RANDOM_TEST_POINTS, seed),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn allocation_follows_face_measure() {
        let dom = Domain::new(vec![0.0, 0.0], vec![1.0, core::f64::consts::PI]).unwrap();
        let c = boundary_allocation(&dom, 100).unwrap();
        assert_eq!(c.iter().sum::<usize>(), 100);
        // x₁-faces have length π, x₂-faces length 1
        assert!(c[0] > 3 * c[2] && c[1] > 3 * c[3]);
        let sq = Domain::cube(2, -1.0, 1.0).unwrap();
        assert_eq!(boundary_allocation(&sq, 6).unwrap(), vec![2, 2, 1, 1]);
    }
}
