use std::f64::consts::PI;

use biharm_core::diffengine::{
    biharmonic, eval, eval_jet, fd_check, fd_discrepancies, laplacian, param_gradient, Basis,
    BasisKind, ExprBuilder, FieldExpr, PointAdjoint, PointJets, PointLoss, UnaryFn,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sin_product() -> FieldExpr {
    // sin(πx₁)·sin(πx₂)
    let mut b = ExprBuilder::new(2);
    let x = b.input();
    let a = b.affine(x, 2, 2, vec![PI, 0.0, 0.0, PI], None).unwrap();
    let s = b.map(a, UnaryFn::Sin).unwrap();
    let s1 = b.select(s, vec![0]).unwrap();
    let s2 = b.select(s, vec![1]).unwrap();
    let out = b.mul(s1, s2).unwrap();
    b.finish(out).unwrap()
}

fn exp_3d() -> FieldExpr {
    // 50·exp(−0.25(x₁+x₂+x₃))
    let mut b = ExprBuilder::new(3);
    let x = b.input();
    let a = b.affine(x, 1, 3, vec![-0.25; 3], None).unwrap();
    let e = b.map(a, UnaryFn::Exp).unwrap();
    let out = b.scale(e, 50.0).unwrap();
    b.finish(out).unwrap()
}

fn harmonic() -> FieldExpr {
    // e^{x₁}·sin(x₂)
    let mut b = ExprBuilder::new(2);
    let x1 = b.coordinate(0).unwrap();
    let x2 = b.coordinate(1).unwrap();
    let e = b.map(x1, UnaryFn::Exp).unwrap();
    let s = b.map(x2, UnaryFn::Sin).unwrap();
    let out = b.mul(e, s).unwrap();
    b.finish(out).unwrap()
}

fn constant(d: usize, c: f64) -> FieldExpr {
    let mut b = ExprBuilder::new(d);
    let k = b.scalar(c);
    b.finish(k).unwrap()
}

fn affine_scalar(w: &[f64], c: f64) -> FieldExpr {
    let mut b = ExprBuilder::new(w.len());
    let x = b.input();
    let o = b.affine(x, 1, w.len(), w.to_vec(), Some(vec![c])).unwrap();
    b.finish(o).unwrap()
}

/// Random fully connected network with smooth activations.
fn random_mlp(rng: &mut ChaCha8Rng, d: usize, widths: &[usize], outputs: usize) -> FieldExpr {
    const ACTS: [UnaryFn; 5] = [
        UnaryFn::Sin,
        UnaryFn::Tanh,
        UnaryFn::Sigmoid,
        UnaryFn::Gaussian,
        UnaryFn::Gelu,
    ];
    let mut b = ExprBuilder::new(d);
    let mut cur = b.input();
    let mut n_in = d;
    for &w in widths {
        let weight = (0..w * n_in).map(|_| rng.random_range(-1.0..1.0)).collect();
        let bias = (0..w).map(|_| rng.random_range(-0.5..0.5)).collect();
        let a = b.affine(cur, w, n_in, weight, Some(bias)).unwrap();
        cur = b.map(a, ACTS[rng.random_range(0..ACTS.len())]).unwrap();
        n_in = w;
    }
    let weight = (0..outputs * n_in).map(|_| rng.random_range(-1.0..1.0)).collect();
    let bias = (0..outputs).map(|_| rng.random_range(-0.5..0.5)).collect();
    let out = b.affine(cur, outputs, n_in, weight, Some(bias)).unwrap();
    b.finish(out).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}

#[test]
fn identity_jet() {
    let b = ExprBuilder::new(1);
    let x = b.input();
    let e = b.finish(x).unwrap();
    let j = &eval_jet(&e, &[3.0], 2).unwrap()[0];
    assert_eq!(j.value(), 3.0);
    assert_eq!(j.grad(), &[1.0]);
    assert_eq!(j.hess(0, 0), 0.0);
}

#[test]
fn sine_product_peak() {
    let j = &eval_jet(&sin_product(), &[0.5, 0.5], 2).unwrap()[0];
    assert!(close(j.value(), 1.0, 1e-15));
    assert!(j.grad().iter().all(|g| g.abs() < 1e-15));
    assert!(close(j.hess(0, 0), -PI * PI, 1e-14));
    assert!(close(j.hess(1, 1), -PI * PI, 1e-14));
    assert!(j.hess(0, 1).abs() < 1e-14);
}

#[test]
fn exponential_jet_matches_symbolic_and_fd() {
    // ∂ᵢu = −0.25·50, ∂ᵢᵢu = 0.0625·50 at the origin
    let e = exp_3d();
    let j = &eval_jet(&e, &[0.0; 3], 2).unwrap()[0];
    assert_eq!(j.value(), 50.0);
    for i in 0..3 {
        assert!(close(j.grad()[i], -12.5, 1e-15));
        assert!(close(j.hess(i, i), 3.125, 1e-15));
    }
    assert!(fd_check(&e, &[0.0; 3], 2, 1e-3).unwrap() < 1e-6);
}

#[test]
fn laplacian_examples() {
    for x in [[0.3, 1.1], [-0.7, 2.5], [0.0, 0.0]] {
        assert!(laplacian(&harmonic(), &x).unwrap().abs() < 1e-13);
        assert_eq!(laplacian(&constant(2, 7.0), &x).unwrap(), 0.0);
    }
    assert!(close(laplacian(&sin_product(), &[0.5, 0.5]).unwrap(), -2.0 * PI * PI, 1e-14));
}

#[test]
fn biharmonic_examples() {
    let v = biharmonic(&sin_product(), &[0.5, 0.5]).unwrap();
    assert!(close(v, 4.0 * PI.powi(4), 1e-14));
    let v = biharmonic(&exp_3d(), &[0.0; 3]).unwrap();
    assert!((v - 225.0 / 128.0).abs() < 1e-12);
    let v = biharmonic(&affine_scalar(&[1.5, -2.0, 0.25], 4.0), &[0.3, 0.2, 0.1]).unwrap();
    assert_eq!(v, 0.0);
}

#[test]
fn scalar_operators_reject_vector_outputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let e = random_mlp(&mut rng, 2, &[3], 2);
    assert!(laplacian(&e, &[0.0, 0.0]).is_err());
    assert!(biharmonic(&e.select_outputs(&[1]).unwrap(), &[0.0, 0.0]).is_ok());
    assert!(eval_jet(&e, &[0.0], 1).is_err());
    assert!(eval_jet(&e, &[0.0, 0.0], 5).is_err());
}

#[test]
fn fd_check_examples() {
    // x₁³ + 2x₁x₂² − x₂ + 1
    let mut b = ExprBuilder::new(2);
    let x1 = b.coordinate(0).unwrap();
    let x2 = b.coordinate(1).unwrap();
    let c1 = b.map(x1, UnaryFn::Powi(3)).unwrap();
    let sq = b.map(x2, UnaryFn::Powi(2)).unwrap();
    let m = b.mul(x1, sq).unwrap();
    let one = b.scalar(1.0);
    let p = b.lincomb(vec![(1.0, c1), (2.0, m), (-1.0, x2), (1.0, one)]).unwrap();
    let poly = b.finish(p).unwrap();
    assert!(fd_check(&poly, &[0.4, -0.3], 2, 1e-3).unwrap() <= 1e-6);

    assert!(fd_check(&sin_product(), &[0.3, 0.7], 4, 1e-2).unwrap() <= 1e-4);

    for order in 1..=4 {
        assert!(fd_check(&constant(3, 2.5), &[0.1, 0.2, 0.3], order, 1e-2).unwrap() < 1e-12);
    }
}

#[test]
fn reduced_bases_agree_with_full_jets() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..20 {
        let d = 1 + trial % 3;
        let e = random_mlp(&mut rng, d, &[5, 4], 1);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let full = &eval_jet(&e, &x, 4).unwrap()[0];
        let lap = laplacian(&e, &x).unwrap();
        let bl = biharmonic(&e, &x).unwrap();
        assert!(close(lap, full.laplacian().unwrap(), 1e-12), "{lap} vs {:?}", full.laplacian());
        assert!(close(bl, full.bilaplacian().unwrap(), 1e-11), "{bl} vs {:?}", full.bilaplacian());

        // gradient and Hessian blocks of the bi-Laplacian basis
        let basis = Basis::new(BasisKind::Bilaplacian, d).unwrap();
        let tape = e.forward(&basis, &x).unwrap();
        let jet = tape.output_jet(0, 0);
        for i in 0..d {
            assert!(close(jet[basis.grad_index(i).unwrap()], full.grad()[i], 1e-13));
            for j in 0..d {
                assert!(close(jet[basis.hess_index(i, j).unwrap()], full.hess(i, j), 1e-13));
            }
        }
    }
}

struct ValueSquared;

impl PointLoss for ValueSquared {
    fn point_loss(&self, _: usize, jets: PointJets<'_>, mut adj: PointAdjoint<'_>) -> f64 {
        let u = jets.channel(0)[0];
        adj.channel_mut(0)[0] += 2.0 * u;
        u * u
    }
}

struct Constant;

impl PointLoss for Constant {
    fn point_loss(&self, _: usize, _: PointJets<'_>, _: PointAdjoint<'_>) -> f64 {
        3.0
    }
}

/// (u + 0.3·∇u·n − 0.2·Δu + 0.05·Δ²u − 1)² with n = e₀, in the bi-Laplacian basis.
struct Mixed<'b> {
    basis: &'b Basis,
}

impl PointLoss for Mixed<'_> {
    fn point_loss(&self, _: usize, jets: PointJets<'_>, mut adj: PointAdjoint<'_>) -> f64 {
        let mut form = vec![(0usize, 1.0), (self.basis.grad_index(0).unwrap(), 0.3)];
        form.extend(self.basis.laplacian_form().iter().map(|&(i, w)| (i, -0.2 * w)));
        form.extend(self.basis.bilaplacian_form().iter().map(|&(i, w)| (i, 0.05 * w)));
        let r = jets.apply(0, &form) - 1.0;
        adj.add_form(0, &form, 2.0 * r);
        r * r
    }
}

fn fd_gradient<L: PointLoss>(e: &FieldExpr, basis: &Basis, pts: &[f64], loss: &L, h: f64) -> Vec<f64> {
    let theta = e.params();
    let mut out = Vec::with_capacity(theta.len());
    let mut probe = e.clone();
    for i in 0..theta.len() {
        let mut t = theta.clone();
        t[i] = theta[i] + h;
        probe.set_params(&t).unwrap();
        let (lp, _) = param_gradient(&probe, basis, pts, loss).unwrap();
        t[i] = theta[i] - h;
        probe.set_params(&t).unwrap();
        let (lm, _) = param_gradient(&probe, basis, pts, loss).unwrap();
        out.push((lp - lm) / (2.0 * h));
    }
    out
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

#[test]
fn param_gradient_of_constant_loss_is_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let e = random_mlp(&mut rng, 2, &[4], 1);
    let basis = Basis::new(BasisKind::Full(0), 2).unwrap();
    let (v, g) = param_gradient(&e, &basis, &[0.1, 0.2, 0.3, 0.4], &Constant).unwrap();
    assert_eq!(v, 6.0);
    assert!(g.iter().all(|&x| x == 0.0));
}

#[test]
fn laplacian_loss_of_affine_map_has_zero_gradient() {
    struct LapSquared<'b>(&'b Basis);
    impl PointLoss for LapSquared<'_> {
        fn point_loss(&self, _: usize, jets: PointJets<'_>, mut adj: PointAdjoint<'_>) -> f64 {
            let l = jets.apply(0, self.0.laplacian_form());
            adj.add_form(0, self.0.laplacian_form(), 2.0 * l);
            l * l
        }
    }
    let e = affine_scalar(&[0.7, -1.3], 0.0);
    let basis = Basis::new(BasisKind::Laplacian, 2).unwrap();
    let (v, g) = param_gradient(&e, &basis, &[0.5, -0.5, 1.0, 2.0], &LapSquared(&basis)).unwrap();
    assert_eq!(v, 0.0);
    assert!(g.iter().all(|&x| x == 0.0));
}

#[test]
fn param_gradient_matches_finite_differences_for_sine_network() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut b = ExprBuilder::new(2);
    let x = b.input();
    let w: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
    let bias: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
    let h = b.affine(x, 5, 2, w, Some(bias)).unwrap();
    let a = b.map(h, UnaryFn::Sin).unwrap();
    let w2: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
    let o = b.affine(a, 1, 5, w2, Some(vec![0.1])).unwrap();
    let e = b.finish(o).unwrap();
    let basis = Basis::new(BasisKind::Full(0), 2).unwrap();
    let pts = [0.3, -0.2];
    let (_, g) = param_gradient(&e, &basis, &pts, &ValueSquared).unwrap();
    let fd = fd_gradient(&e, &basis, &pts, &ValueSquared, 1e-4);
    assert!(max_rel(&g, &fd) <= 1e-6, "{}", max_rel(&g, &fd));
}

#[test]
fn param_gradient_through_fourth_order_terms() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for d in 1..=3 {
        let e = random_mlp(&mut rng, d, &[4, 3], 1);
        let basis = Basis::new(BasisKind::Bilaplacian, d).unwrap();
        let pts: Vec<f64> = (0..3 * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let loss = Mixed { basis: &basis };
        let (_, g) = param_gradient(&e, &basis, &pts, &loss).unwrap();
        let fd = fd_gradient(&e, &basis, &pts, &loss, 1e-4);
        assert!(max_rel(&g, &fd) <= 1e-6, "d={d}: {}", max_rel(&g, &fd));
    }
}

#[test]
fn chunked_gradient_equals_single_pass_sum() {
    // more points than one chunk, compared against per-point accumulation
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let e = random_mlp(&mut rng, 2, &[6], 1);
    let basis = Basis::new(BasisKind::Laplacian, 2).unwrap();
    let pts: Vec<f64> = (0..2 * 300).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (v, g) = param_gradient(&e, &basis, &pts, &ValueSquared).unwrap();
    let mut v2 = 0.0;
    let mut g2 = vec![0.0; g.len()];
    for p in pts.chunks(2) {
        let (vp, gp) = param_gradient(&e, &basis, p, &ValueSquared).unwrap();
        v2 += vp;
        for (a, b) in g2.iter_mut().zip(gp) {
            *a += b;
        }
    }
    assert!(close(v, v2, 1e-12));
    assert!(max_rel(&g, &g2) < 1e-12);
}

#[test]
fn non_finite_loss_is_reported() {
    let mut b = ExprBuilder::new(1);
    let x = b.input();
    let r = b.map(x, UnaryFn::Ln).unwrap();
    let e = b.finish(r).unwrap();
    let basis = Basis::new(BasisKind::Full(0), 1).unwrap();
    assert!(param_gradient(&e, &basis, &[-1.0], &ValueSquared).is_err());
}

#[test]
fn division_and_powers() {
    // x₁/x₂ and x₁^2.5 against hand derivatives
    let mut b = ExprBuilder::new(2);
    let x1 = b.coordinate(0).unwrap();
    let x2 = b.coordinate(1).unwrap();
    let q = b.div(x1, x2).unwrap();
    let e = b.finish(q).unwrap();
    let j = &eval_jet(&e, &[3.0, 2.0], 2).unwrap()[0];
    assert!(close(j.value(), 1.5, 1e-15));
    assert!(close(j.grad()[1], -3.0 / 4.0, 1e-15));
    assert!(close(j.hess(1, 1), 2.0 * 3.0 / 8.0, 1e-15));
    assert!(close(j.hess(0, 1), -1.0 / 4.0, 1e-15));
    assert_eq!(eval(&e, &[3.0, 2.0]).unwrap(), vec![1.5]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn jets_are_symmetric(seed in 0u64..10_000, d in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = random_mlp(&mut rng, d, &[4, 3], 1);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let j = &eval_jet(&e, &x, 4).unwrap()[0];
        let h = j.hessian_matrix().unwrap();
        for i in 0..d {
            for k in 0..d {
                prop_assert_eq!(h[i * d + k], h[k * d + i]);
                for l in 0..d {
                    for m in 0..d {
                        let v = j.fourth(i, k, l, m);
                        prop_assert_eq!(v, j.fourth(m, l, k, i));
                        prop_assert_eq!(v, j.fourth(k, i, m, l));
                        prop_assert_eq!(v, j.fourth(l, m, i, k));
                    }
                }
            }
        }
    }

    #[test]
    fn jets_are_linear(seed in 0u64..10_000, a in -3.0f64..3.0, c in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 2;
        let e1 = random_mlp(&mut rng, d, &[4], 1);
        let e2 = random_mlp(&mut rng, d, &[3, 3], 1);
        let combo = e1.linear_combination(a, &e2, c).unwrap();
        let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let j1 = &eval_jet(&e1, &x, 4).unwrap()[0];
        let j2 = &eval_jet(&e2, &x, 4).unwrap()[0];
        let jc = &eval_jet(&combo, &x, 4).unwrap()[0];
        for ((p, q), r) in j1.coefficients().iter().zip(j2.coefficients()).zip(jc.coefficients()) {
            let expect = a * p + c * q;
            prop_assert!((r - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
        }
    }

    #[test]
    fn lower_orders_do_not_depend_on_requested_order(seed in 0u64..10_000, d in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = random_mlp(&mut rng, d, &[5, 5], 2);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lo = eval_jet(&e, &x, 2).unwrap();
        let hi = eval_jet(&e, &x, 4).unwrap();
        for (a, b) in lo.iter().zip(&hi) {
            prop_assert_eq!(a.value(), b.value());
            prop_assert_eq!(a.grad(), b.grad());
            prop_assert_eq!(a.tensor(2).unwrap(), b.tensor(2).unwrap());
        }
    }

    #[test]
    fn random_networks_match_finite_differences(seed in 0u64..10_000, d in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let depth = rng.random_range(1..=3);
        let widths: Vec<usize> = (0..depth).map(|_| rng.random_range(1..=8)).collect();
        let e = random_mlp(&mut rng, d, &widths, 1);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let low = fd_discrepancies(&e, &x, 2, 1e-3).unwrap();
        prop_assert!(low.iter().all(|&v| v <= 1e-5), "{:?}", low);
        let high = fd_discrepancies(&e, &x, 4, 1e-2).unwrap();
        prop_assert!(high[2] <= 1e-3 && high[3] <= 1e-3, "{:?}", high);
    }
}
