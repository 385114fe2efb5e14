use std::f64::consts::PI;

use biharm_core::problems::{registry, Domain};
use biharm_core::sampling::{
    boundary_allocation, default_test_set, lhs_interior, random_test_points, sample_boundary, test_grid,
    SampleBatch, TestSetKind, DEFAULT_GRID_CAP,
};
use biharm_core::Error;
use proptest::prelude::*;

fn strata_hit_once(points: &[f64], dom: &Domain, n: usize) -> bool {
    let d = dom.dim();
    (0..d).all(|axis| {
        let (lo, hi) = (dom.lower()[axis], dom.upper()[axis]);
        let mut seen = vec![false; n];
        for p in points.chunks(d) {
            let s = (((p[axis] - lo) / (hi - lo)) * n as f64).floor() as usize;
            let s = s.min(n - 1);
            if seen[s] {
                return false;
            }
            seen[s] = true;
        }
        seen.iter().all(|&b| b)
    })
}

#[test]
fn lhs_four_points_one_per_stratum() {
    let dom = Domain::cube(2, 0.0, 1.0).unwrap();
    let pts = lhs_interior(&dom, 4, 42, 0).unwrap();
    assert_eq!(pts.len(), 8);
    for axis in 0..2 {
        let mut c: Vec<f64> = pts.chunks(2).map(|p| p[axis]).collect();
        c.sort_by(f64::total_cmp);
        for (s, v) in c.iter().enumerate() {
            assert!(*v >= s as f64 / 4.0 && *v < (s + 1) as f64 / 4.0, "{c:?}");
        }
    }
}

#[test]
fn lhs_is_deterministic_and_single_point_is_inside() {
    let dom = Domain::new(vec![-1.0, 0.0, 2.0], vec![1.0, 0.5, 3.0]).unwrap();
    assert_eq!(lhs_interior(&dom, 17, 9, 3).unwrap(), lhs_interior(&dom, 17, 9, 3).unwrap());
    let one = lhs_interior(&dom, 1, 9, 0).unwrap();
    assert_eq!(one.len(), 3);
    assert!(dom.contains(&one));
    assert!(lhs_interior(&dom, 0, 9, 0).is_err());
}

#[test]
fn draws_differ_across_indices() {
    let dom = Domain::cube(2, -1.0, 1.0).unwrap();
    let batches: Vec<SampleBatch> = (0..100).map(|k| SampleBatch::draw(&dom, 16, 8, 5, k).unwrap()).collect();
    for i in 0..batches.len() {
        for j in i + 1..batches.len() {
            assert_ne!(batches[i].interior, batches[j].interior);
            assert_ne!(batches[i].boundary, batches[j].boundary);
        }
    }
    // another seed gives another sequence
    assert_ne!(SampleBatch::draw(&dom, 16, 8, 6, 0).unwrap(), batches[0]);
}

#[test]
fn boundary_normals_and_faces() {
    let dom = Domain::cube(2, -1.0, 1.0).unwrap();
    let (pts, normals) = sample_boundary(&dom, 40, 1, 0).unwrap();
    assert_eq!(pts.len(), 80);
    for (x, n) in pts.chunks(2).zip(normals.chunks(2)) {
        assert!(dom.on_boundary(x));
        assert_eq!(n.iter().map(|v| v * v).sum::<f64>(), 1.0);
        if x[0] == 1.0 {
            assert_eq!(n, &[1.0, 0.0]);
        }
        if x[1] == -1.0 {
            assert_eq!(n, &[0.0, -1.0]);
        }
        // coordinate on the face is set exactly
        let axis = n.iter().position(|v| *v != 0.0).unwrap();
        assert!(x[axis] == dom.lower()[axis] || x[axis] == dom.upper()[axis]);
    }
    assert!(matches!(sample_boundary(&dom, 3, 1, 0), Err(Error::InvalidArgument(_))));
}

#[test]
fn rectangle_allocation_matches_perimeter() {
    let dom = Domain::new(vec![0.0, 0.0], vec![1.0, PI]).unwrap();
    let c = boundary_allocation(&dom, 1000).unwrap();
    let per = 2.0 * (1.0 + PI);
    for (f, w) in [PI, PI, 1.0, 1.0].iter().enumerate() {
        assert!((c[f] as f64 - 1000.0 * w / per).abs() <= 1.0, "{c:?}");
    }
    // equal measures tie toward the lower faces
    let sq = Domain::cube(2, 0.0, 1.0).unwrap();
    assert_eq!(boundary_allocation(&sq, 10).unwrap(), vec![3, 3, 2, 2]);
    let cube = Domain::cube(3, 0.0, 1.0).unwrap();
    assert_eq!(boundary_allocation(&cube, 6).unwrap(), vec![1; 6]);
}

#[test]
fn hole_points_and_normals() {
    let dom = Domain::cube(2, -1.0, 1.0).unwrap().with_hole(vec![0.2, -0.1], 0.3).unwrap();
    let pts = lhs_interior(&dom, 200, 3, 0).unwrap();
    assert!(pts.chunks(2).all(|x| dom.contains(x)));
    let (b, n) = sample_boundary(&dom, 200, 3, 0).unwrap();
    let mut on_hole = 0;
    for (x, nn) in b.chunks(2).zip(n.chunks(2)) {
        assert!(dom.on_boundary(x), "{x:?}");
        assert!((nn[0] * nn[0] + nn[1] * nn[1] - 1.0).abs() < 1e-14);
        let r = [x[0] - 0.2, x[1] + 0.1];
        if (r[0] * r[0] + r[1] * r[1]).sqrt() < 0.31 {
            on_hole += 1;
            // normal points toward the hole centre
            assert!(nn[0] * r[0] + nn[1] * r[1] < 0.0);
        }
    }
    assert!(on_hole > 0);
    let grid = test_grid(&dom, 64, DEFAULT_GRID_CAP).unwrap();
    assert!(grid.len() / 2 < 64 * 64);
}

#[test]
fn grid_sizes() {
    let dom = Domain::cube(2, -1.0, 1.0).unwrap();
    let g = test_grid(&dom, 128, DEFAULT_GRID_CAP).unwrap();
    assert_eq!(g.len() / 2, 16_384);
    assert_eq!(&g[..2], &[-1.0, -1.0]);
    assert_eq!(&g[g.len() - 2..], &[1.0, 1.0]);

    let cube = Domain::cube(4, 0.0, 1.0).unwrap();
    let corners = test_grid(&cube, 2, DEFAULT_GRID_CAP).unwrap();
    assert_eq!(corners.len() / 4, 16);
    assert!(corners.iter().all(|v| *v == 0.0 || *v == 1.0));
    assert!(test_grid(&dom, 1, DEFAULT_GRID_CAP).is_err());
}

#[test]
fn eight_dimensional_problem_uses_random_points() {
    let p = registry("d8-navier-trig").unwrap();
    let dom = &p.domain;
    assert!(matches!(test_grid(dom, 128, DEFAULT_GRID_CAP), Err(Error::GridCapExceeded { .. })));
    let (kind, pts) = default_test_set(dom, 1);
    assert_eq!(kind, TestSetKind::Random { count: 1600 });
    assert_eq!(pts.len(), 1600 * 8);
    assert!(pts.chunks(8).all(|x| dom.contains(x)));
    assert_eq!(pts, random_test_points(dom, 1600, 1));

    let (kind, pts) = default_test_set(&registry("d2-dirichlet-exp").unwrap().domain, 1);
    assert_eq!(kind, TestSetKind::Grid { resolution: 128 });
    assert_eq!(pts.len(), 2 * 16_384);
    let (kind, _) = default_test_set(&registry("d3-dirichlet-exp").unwrap().domain, 1);
    assert_eq!(kind, TestSetKind::Grid { resolution: 25 });
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lhs_marginals_hold(n in 1usize..60, d in 1usize..5, seed in any::<u64>(), draw in 0u64..1000) {
        let dom = Domain::new((0..d).map(|i| -(i as f64)).collect(), (0..d).map(|i| 1.0 + i as f64 * 0.5).collect()).unwrap();
        let pts = lhs_interior(&dom, n, seed, draw).unwrap();
        prop_assert_eq!(pts.len(), n * d);
        prop_assert!(pts.chunks(d).all(|x| dom.contains(x)));
        prop_assert!(strata_hit_once(&pts, &dom, n));
    }

    #[test]
    fn boundary_points_lie_on_faces(m in 8usize..80, seed in any::<u64>()) {
        let dom = Domain::new(vec![-1.0, 0.0, 0.5], vec![2.0, 0.25, 3.0]).unwrap();
        let m = m.max(6);
        let (pts, normals) = sample_boundary(&dom, m, seed, 0).unwrap();
        prop_assert_eq!(pts.len(), 3 * m);
        for (x, n) in pts.chunks(3).zip(normals.chunks(3)) {
            prop_assert!(dom.on_boundary(x));
            let axis = n.iter().position(|v| *v != 0.0).unwrap();
            let target = if n[axis] < 0.0 { dom.lower()[axis] } else { dom.upper()[axis] };
            prop_assert_eq!(x[axis], target);
        }
    }
}
