use biharm_core::diffengine::{Basis, BasisKind, FieldExpr};
use biharm_core::network::{init_params, to_expr, Activation, NetworkSpec};
use biharm_core::problems::{parse_field, registry, BcKind, Domain, Nonlinearity, ProblemSpec, REGISTRY};
use biharm_core::residuals::{
    boundary_loss_dirichlet, boundary_loss_navier, direct_loss, evaluate, interior_loss_coupled, mim_loss,
    strategy_loss, total_loss, Assembler, BatchJets, InteriorLoss, PreparedBatch, Strategy,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn interior(rng: &mut ChaCha8Rng, dom: &Domain, n: usize) -> Vec<f64> {
    let mut out = Vec::new();
    while out.len() < n * dom.dim() {
        let x: Vec<f64> = (0..dom.dim())
            .map(|i| rng.random_range(dom.lower()[i]..dom.upper()[i]))
            .collect();
        if dom.contains(&x) {
            out.extend(x);
        }
    }
    out
}

fn boundary(rng: &mut ChaCha8Rng, dom: &Domain, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut pts = Vec::new();
    let mut normals = Vec::new();
    for _ in 0..n {
        let face = rng.random_range(0..dom.face_count());
        let mut x: Vec<f64> = (0..dom.dim())
            .map(|i| rng.random_range(dom.lower()[i]..dom.upper()[i]))
            .collect();
        let axis = face / 2;
        x[axis] = if face % 2 == 0 { dom.lower()[axis] } else { dom.upper()[axis] };
        pts.extend(x);
        normals.extend(dom.face_normal(face));
    }
    (pts, normals)
}

fn batch(problem: &ProblemSpec, seed: u64, n: usize, m: usize) -> PreparedBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xi = interior(&mut rng, &problem.domain, n);
    let (xb, nb) = boundary(&mut rng, &problem.domain, m);
    PreparedBatch::new(problem, xi, xb, nb).unwrap()
}

fn oracle_parts(strategy: Strategy, problem: &ProblemSpec, b: &PreparedBatch, scale: f64) -> (BatchJets, BatchJets) {
    let exact = problem.exact.as_ref().unwrap();
    let ch = strategy.output_dim(problem.dim());
    let ji = BatchJets::oracle(exact, ch, strategy.interior_basis(), &b.interior, scale).unwrap();
    let jb = BatchJets::oracle(exact, ch, strategy.boundary_basis(problem.bc_kind), &b.boundary, scale).unwrap();
    (ji, jb)
}

#[test]
fn exact_solution_annihilates_every_strategy() {
    for name in REGISTRY {
        let problem = registry(name).unwrap();
        let b = batch(&problem, 7, 64, 48);
        let fscale = b.ftilde.iter().map(|f| f * f).fold(0.0, f64::max);
        for strategy in Strategy::ALL {
            if strategy.check_dim(problem.dim()).is_err() {
                continue;
            }
            let (ji, jb) = oracle_parts(strategy, &problem, &b, 1.0);
            let parts = strategy_loss(strategy, &problem, &ji, &jb, &b).unwrap();
            let tot = total_loss(parts.interior, parts.boundary, 10.0).total;
            assert!(tot <= 1e-12 * (1.0 + fscale), "{name}/{strategy}: {tot:e}");
        }
    }
}

#[test]
fn direct_rejects_high_dimension() {
    let problem = registry("d8-navier-trig").unwrap();
    assert!(Assembler::new(&problem, Strategy::Direct).is_err());
    let b = Basis::new(BasisKind::Bilaplacian, 8).unwrap();
    assert!(InteriorLoss::new(Strategy::Direct, &b, Nonlinearity::None, &[0.0], 1.0).is_err());
}

#[test]
fn direct_and_mim_wrappers() {
    let problem = registry("d2-dirichlet-sin").unwrap();
    let b = batch(&problem, 3, 40, 30);
    let (ji, jb) = oracle_parts(Strategy::Direct, &problem, &b, 1.0);
    let p = direct_loss(&problem, &ji, &jb, &b).unwrap();
    assert!(p.interior < 1e-8 && p.boundary < 1e-8, "{p:?}");
    let (ji, jb) = oracle_parts(Strategy::Mim, &problem, &b, 1.0);
    let p = mim_loss(&problem, &ji, &jb, &b).unwrap();
    assert!(p.interior < 1e-8 && p.boundary < 1e-8, "{p:?}");
    // perturbing the field is visible
    let (ji, jb) = oracle_parts(Strategy::Mim, &problem, &b, 1.1);
    assert!(mim_loss(&problem, &ji, &jb, &b).unwrap().interior > 1e-3);
}

#[test]
fn affine_field_has_zero_bilaplacian_residual() {
    let u = parse_field("3*x1 - 2*x2 + 0.5", 2).unwrap();
    let pts = [0.1, 0.2, -0.4, 0.7, 0.9, -0.3];
    let jets = BatchJets::from_expr(&u, BasisKind::Bilaplacian, &pts).unwrap();
    let li = InteriorLoss::new(Strategy::Direct, jets.basis(), Nonlinearity::None, &[0.0; 3], 4.0).unwrap();
    assert_eq!(evaluate(&li, &jets).unwrap(), 0.0);
}

#[test]
fn hand_evaluated_losses() {
    // coupled: 4·(3−1)² + 4·(2−2)²
    let lap1 = Basis::new(BasisKind::Laplacian, 1).unwrap();
    let jets = BatchJets::from_raw(lap1.clone(), 2, 1, vec![0.0, 0.0, 2.0, 2.0, 0.0, 3.0]).unwrap();
    assert_eq!(interior_loss_coupled(&jets, Nonlinearity::None, &[1.0], 4.0).unwrap(), 16.0);

    // Dirichlet: u = 2, g = 1, ∇u·n = 0, h = 1
    let full1 = Basis::new(BasisKind::Full(1), 1).unwrap();
    let jets = BatchJets::from_raw(full1, 2, 1, vec![2.0, 0.0, 0.0, 0.0]).unwrap();
    assert_eq!(boundary_loss_dirichlet(Strategy::Coupled, &jets, &[1.0], &[1.0], &[1.0]).unwrap(), 2.0);

    // Navier: u = g, v = k + 0.5
    let full0 = Basis::new(BasisKind::Full(0), 1).unwrap();
    let jets = BatchJets::from_raw(full0, 2, 1, vec![0.3, 1.5]).unwrap();
    assert_eq!(boundary_loss_navier(Strategy::Coupled, &jets, &[0.3], &[1.0]).unwrap(), 0.25);

    // mim: u = x₁ at x = 0.5, p = 0, v = 0, f = 0
    let jets = BatchJets::from_raw(lap1, 3, 1, vec![0.5, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
    let li = InteriorLoss::new(Strategy::Mim, jets.basis(), Nonlinearity::None, &[0.0], 1.0).unwrap();
    assert_eq!(evaluate(&li, &jets).unwrap(), 1.0);
}

#[test]
fn total_loss_examples() {
    let b = total_loss(1.0, 2.0, 10.0);
    assert_eq!((b.interior, b.boundary, b.gamma, b.total), (1.0, 2.0, 10.0, 21.0));
    for g in [1e-3, 1.0, 1e4] {
        assert_eq!(total_loss(0.0, 0.0, g).total, 0.0);
    }
}

#[test]
fn duplicated_boundary_points_keep_the_mean() {
    let problem = registry("d2-dirichlet-exp").unwrap();
    let b = batch(&problem, 11, 8, 20);
    let net = small_net(&problem, Strategy::Coupled, 5);
    let jb = BatchJets::from_expr(&net, BasisKind::Full(1), &b.boundary).unwrap();
    let once = boundary_loss_dirichlet(Strategy::Coupled, &jb, &b.g, &b.aux, &b.normals).unwrap();
    let dup = |v: &[f64]| [v, v].concat();
    let jb2 = BatchJets::from_expr(&net, BasisKind::Full(1), &dup(&b.boundary)).unwrap();
    let twice = boundary_loss_dirichlet(Strategy::Coupled, &jb2, &dup(&b.g), &dup(&b.aux), &dup(&b.normals)).unwrap();
    assert!((once - twice).abs() <= 1e-14 * once, "{once} vs {twice}");
    assert!(once > 0.0);
}

#[test]
fn navier_loss_ignores_gradients() {
    // the direct strategy carries ∇u in its Navier boundary jets
    let lap = Basis::new(BasisKind::Laplacian, 2).unwrap();
    let base = vec![0.7, 0.0, 0.0, -1.2, 0.1, 0.0, 0.0, 0.4];
    let mut moved = base.clone();
    moved[1] = 5.0;
    moved[2] = -3.0;
    let a = BatchJets::from_raw(lap.clone(), 1, 2, base).unwrap();
    let b = BatchJets::from_raw(lap, 1, 2, moved).unwrap();
    let g = [0.5, 0.2];
    let k = [-1.0, 0.3];
    let la = boundary_loss_navier(Strategy::Direct, &a, &g, &k).unwrap();
    assert_eq!(la, boundary_loss_navier(Strategy::Direct, &b, &g, &k).unwrap());
    assert!(la > 0.0);
}

#[test]
fn linear_coupled_loss_ignores_u_value() {
    let lap = Basis::new(BasisKind::Laplacian, 1).unwrap();
    let a = BatchJets::from_raw(lap.clone(), 2, 1, vec![0.0, 0.3, 2.0, 1.0, 0.0, 3.0]).unwrap();
    let b = BatchJets::from_raw(lap, 2, 1, vec![9.0, 0.3, 2.0, 1.0, 0.0, 3.0]).unwrap();
    let la = interior_loss_coupled(&a, Nonlinearity::None, &[1.0], 2.0).unwrap();
    assert_eq!(la, interior_loss_coupled(&b, Nonlinearity::None, &[1.0], 2.0).unwrap());
    assert_ne!(la, interior_loss_coupled(&b, Nonlinearity::LowerOrder, &[1.0], 2.0).unwrap());
}

#[test]
fn mim_with_exact_gradient_channels_matches_coupled() {
    // p = ∇u exactly, v arbitrary: the gradient term vanishes, ∇·p − v = Δu − v
    let u = parse_field("sin(x1)*exp(0.3*x2)", 2).unwrap();
    let w = parse_field("x1*x1 - cos(x2)", 2).unwrap();
    let pts = [0.1, 0.2, -0.4, 0.7, 0.9, -0.3, 0.5, 0.5];
    let ft = [1.0, -2.0, 0.5, 3.0];
    let mim = BatchJets::oracle(&u, 4, BasisKind::Laplacian, &pts, 1.0).unwrap();
    let wj = BatchJets::from_expr(&w, BasisKind::Laplacian, &pts).unwrap();
    let per = mim.basis().len() * 4;
    let mut mdata = mim.data().to_vec();
    mdata[per..2 * per].copy_from_slice(wj.data());
    let mim = BatchJets::from_raw(mim.basis().clone(), 4, 4, mdata).unwrap();
    let cdata = mim.data()[..2 * per].to_vec();
    let coupled = BatchJets::from_raw(mim.basis().clone(), 2, 4, cdata).unwrap();
    for nl in [Nonlinearity::None, Nonlinearity::LowerOrder] {
        let lm = evaluate(&InteriorLoss::new(Strategy::Mim, mim.basis(), nl, &ft, 2.0).unwrap(), &mim).unwrap();
        let lc = interior_loss_coupled(&coupled, nl, &ft, 2.0).unwrap();
        assert!((lm - lc).abs() <= 1e-12 * lc, "{lm} vs {lc}");
    }
}

#[test]
fn scaling_targets_and_fields_scales_loss_quadratically() {
    let c = 3.5;
    for name in ["d2-dirichlet-sin", "d2-navier-sin", "d3-dirichlet-exp"] {
        let problem = registry(name).unwrap();
        let b = batch(&problem, 21, 30, 24);
        let mut bs = b.clone();
        for v in bs.ftilde.iter_mut().chain(bs.g.iter_mut()).chain(bs.aux.iter_mut()) {
            *v *= c;
        }
        for strategy in Strategy::ALL {
            // oracle fields scaled by 1.2 so the losses are not zero
            let (ji, jb) = oracle_parts(strategy, &problem, &b, 1.2);
            let (jis, jbs) = oracle_parts(strategy, &problem, &b, 1.2 * c);
            let l0 = strategy_loss(strategy, &problem, &ji, &jb, &b).unwrap();
            let l1 = strategy_loss(strategy, &problem, &jis, &jbs, &bs).unwrap();
            assert!((l1.interior - c * c * l0.interior).abs() <= 1e-10 * l1.interior, "{name}/{strategy} {l0:?} {l1:?}");
            assert!((l1.boundary - c * c * l0.boundary).abs() <= 1e-10 * l1.boundary, "{name}/{strategy}");
        }
    }
}

fn small_net(problem: &ProblemSpec, strategy: Strategy, seed: u64) -> FieldExpr {
    let d = problem.dim();
    let spec = NetworkSpec::mlp(d, vec![4, 4], Activation::Tanh, strategy.output_dim(d));
    to_expr(&spec, &init_params(&spec, seed).unwrap()).unwrap()
}

#[test]
fn assembled_gradient_matches_finite_differences() {
    for name in ["d2-dirichlet-sin", "d2-navier-sin", "d3-dirichlet-exp"] {
        let problem = registry(name).unwrap();
        let b = batch(&problem, 5, 12, 10);
        for strategy in Strategy::ALL {
            let asm = Assembler::new(&problem, strategy).unwrap();
            let mut net = small_net(&problem, strategy, 17);
            let gamma = 7.0;
            let (lb, grad) = asm.loss_and_gradient(&net, &b, gamma).unwrap();
            assert_eq!(lb.total, lb.interior + gamma * lb.boundary);
            let theta = net.params();
            let h = 1e-5;
            let mut err: f64 = 0.0;
            let mut scale: f64 = 0.0;
            for k in 0..theta.len() {
                let mut t = theta.clone();
                t[k] = theta[k] + h;
                net.set_params(&t).unwrap();
                let up = asm.loss_and_gradient(&net, &b, gamma).unwrap().0.total;
                t[k] = theta[k] - h;
                net.set_params(&t).unwrap();
                let down = asm.loss_and_gradient(&net, &b, gamma).unwrap().0.total;
                let fd = (up - down) / (2.0 * h);
                err = err.max((fd - grad[k]).abs());
                scale = scale.max(fd.abs());
            }
            net.set_params(&theta).unwrap();
            assert!(err <= 1e-6 * scale, "{name}/{strategy}: {err:e} vs {scale:e}");
        }
    }
}

#[test]
fn wrong_output_width_is_rejected() {
    let problem = registry("d2-navier-sin").unwrap();
    let b = batch(&problem, 1, 4, 4);
    let net = small_net(&problem, Strategy::Direct, 1);
    let asm = Assembler::new(&problem, Strategy::Mim).unwrap();
    assert!(asm.loss_and_gradient(&net, &b, 1.0).is_err());
}

#[test]
fn dirichlet_needs_normals() {
    let full1 = Basis::new(BasisKind::Full(1), 2).unwrap();
    let jets = BatchJets::from_raw(full1, 1, 1, vec![0.0; 3]).unwrap();
    assert!(boundary_loss_dirichlet(Strategy::Direct, &jets, &[0.0], &[0.0], &[]).is_err());
    let _ = BcKind::Dirichlet;
}

proptest! {
    #[test]
    fn total_loss_is_monotone(a in 0.0..1e3f64, b in 0.0..1e3f64, g in 1e-3..1e3f64, da in 0.0..10.0f64, db in 0.0..10.0f64) {
        let base = total_loss(a, b, g).total;
        prop_assert!(total_loss(a + da, b, g).total >= base);
        prop_assert!(total_loss(a, b + db, g).total >= base);
        prop_assert!(total_loss(a, b, g + da).total >= base);
    }
}
