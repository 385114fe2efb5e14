use biharm_core::network::{Activation, NetworkSpec, Params};
use biharm_core::problems::{parse_field, registry, BcKind, Domain, Nonlinearity, ProblemSpec};
use biharm_core::residuals::Strategy;
use biharm_core::sampling::test_grid;
use biharm_core::training::{
    adam_step, lr_at, penalty_at, train, AdamState, Optimizer, Penalty, Schedule, SolverConfig, TrainStatus,
    Trainer,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn small_config(problem: &ProblemSpec, strategy: Strategy, fourier: bool) -> SolverConfig {
    let d = problem.dim();
    let net = if fourier {
        NetworkSpec::fourier(d, vec![6, 6], Activation::Sin, strategy.output_dim(d))
    } else {
        NetworkSpec::mlp(d, vec![6, 6], Activation::Tanh, strategy.output_dim(d))
    };
    let mut c = SolverConfig::new(strategy, net);
    c.n_interior = 40;
    c.n_boundary = 24;
    c
}

fn short(max_iters: usize) -> Schedule {
    Schedule {
        max_iters,
        eval_every: 5,
        ..Schedule::default()
    }
}

#[test]
fn penalty_examples() {
    let m = 5000;
    assert_eq!(penalty_at(1300, m, 10.0), 1000.0);
    assert_eq!(penalty_at(0, m, 10.0), 10.0);
    assert_eq!(penalty_at(4000, m, 10.0), 5000.0);
    // every breakpoint belongs to the interval on its right
    let steps = [(0.1, 100.0), (0.2, 500.0), (0.25, 1000.0), (0.5, 2000.0), (0.75, 5000.0)];
    let mut prev = 10.0;
    for (frac, value) in steps {
        let k = (frac * m as f64) as usize;
        assert_eq!(penalty_at(k - 1, m, 10.0), prev);
        assert_eq!(penalty_at(k, m, 10.0), value);
        prev = value;
    }
    assert_eq!(penalty_at(m, m, 10.0), 5000.0);
}

#[test]
fn lr_examples() {
    let s = Schedule::default();
    assert_eq!(lr_at(50, &s), 0.01);
    assert!((lr_at(150, &s) - 0.00975).abs() <= 1e-15 * 0.00975);
    assert!((lr_at(250, &s) - 0.00950625).abs() <= 1e-15 * 0.00950625);
}

#[test]
fn adam_zero_gradient_is_a_no_op() {
    let mut st = AdamState::new(3);
    let mut p = vec![1.0, -2.0, 0.5];
    adam_step(&mut st, &mut p, &[0.0; 3], 0.01).unwrap();
    assert_eq!(p, vec![1.0, -2.0, 0.5]);
    assert_eq!(st.m, vec![0.0; 3]);
    assert_eq!(st.v, vec![0.0; 3]);
}

#[test]
fn adam_first_step_moves_by_lr() {
    let g = [3.0, -1e-2, 250.0, -7.5];
    let mut st = AdamState::new(4);
    let mut p = vec![0.0; 4];
    adam_step(&mut st, &mut p, &g, 0.01).unwrap();
    // first step is −lr·g/(|g| + ε)
    for (pi, gi) in p.iter().zip(&g) {
        let want = -0.01 * gi / (gi.abs() + 1e-8);
        assert!((pi - want).abs() <= 1e-15, "{pi} vs {want}");
    }
    let mut st2 = AdamState::new(4);
    let mut p2 = vec![0.0; 4];
    adam_step(&mut st2, &mut p2, &g, 0.01).unwrap();
    assert_eq!((p, st), (p2, st2));
}

#[test]
fn adam_rejects_non_finite_gradients() {
    let mut st = AdamState::new(2);
    let mut p = vec![1.0, 2.0];
    assert!(adam_step(&mut st, &mut p, &[f64::NAN, 0.0], 0.1).is_err());
    assert_eq!(p, vec![1.0, 2.0]);
    assert_eq!(st, AdamState::new(2));
}

#[test]
fn zero_iterations_give_one_record() {
    let problem = registry("d2-dirichlet-sin").unwrap();
    let out = train(&problem, small_config(&problem, Strategy::Coupled, true), short(0), 3).unwrap();
    assert_eq!(out.status, TrainStatus::Completed);
    assert_eq!(out.state.history.len(), 1);
    let r = out.state.history[0];
    assert_eq!(r.k, 0);
    assert!(r.rel.is_some());
    assert_eq!(out.state.params.flat(), Trainer::new(&problem, small_config(&problem, Strategy::Coupled, true), short(0), 3).unwrap().initial_state().unwrap().params.flat());
}

#[test]
fn history_is_consistent_and_deterministic() {
    for (name, strategy) in [
        ("d2-dirichlet-sin", Strategy::Coupled),
        ("d2-navier-sin", Strategy::Mim),
        ("d2-dirichlet-exp", Strategy::Direct),
    ] {
        let problem = registry(name).unwrap();
        let cfg = small_config(&problem, strategy, strategy == Strategy::Coupled);
        let a = train(&problem, cfg.clone(), short(12), 9).unwrap();
        let b = train(&problem, cfg, short(12), 9).unwrap();
        assert_eq!(a.status, TrainStatus::Completed);
        assert_eq!(a, b);
        let h = &a.state.history;
        assert_eq!(h.len(), 13);
        for (i, r) in h.iter().enumerate() {
            assert_eq!(r.k, i);
            assert_eq!(r.total, r.interior + r.gamma * r.boundary);
            assert_eq!(r.rel.is_some(), i % 5 == 0 || i == 12);
        }
    }
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let problem = registry("d2-navier-harmonic").unwrap();
    let cfg = small_config(&problem, Strategy::Coupled, true);
    let straight = train(&problem, cfg.clone(), short(15), 4).unwrap();
    let mut t = Trainer::new(&problem, cfg, short(15), 4).unwrap();
    let paused = t.run_until(t.initial_state().unwrap(), 7);
    assert_eq!(paused.state.k, 7);
    assert!(!paused.state.finished);
    let resumed = t.run(paused.state);
    assert_eq!(resumed, straight);
}

#[test]
fn direct_strategy_rejected_in_eight_dimensions() {
    let problem = registry("d8-navier-trig").unwrap();
    let net = NetworkSpec::mlp(8, vec![4], Activation::Tanh, 1);
    assert!(Trainer::new(&problem, SolverConfig::new(Strategy::Direct, net), short(1), 0).is_err());
}

#[test]
fn mismatched_network_rejected() {
    let problem = registry("d2-dirichlet-sin").unwrap();
    let net = NetworkSpec::mlp(2, vec![4], Activation::Tanh, 1);
    assert!(Trainer::new(&problem, SolverConfig::new(Strategy::Coupled, net), short(1), 0).is_err());
}

#[test]
fn rel_target_stops_early() {
    let problem = registry("d2-dirichlet-sin").unwrap();
    let mut cfg = small_config(&problem, Strategy::Coupled, false);
    cfg.rel_target = Some(1e6);
    let out = train(&problem, cfg, short(50), 1).unwrap();
    assert_eq!(out.status, TrainStatus::EarlyStopped { k: 0 });
    assert_eq!(out.state.history.len(), 1);
}

#[test]
fn non_finite_data_is_reported_as_divergence() {
    let domain = Domain::cube(2, -1.0, 1.0).unwrap();
    let mut p = ProblemSpec::from_exact("bad", domain, BcKind::Navier, Nonlinearity::None, parse_field("x1*x2", 2).unwrap()).unwrap();
    p.force = biharm_core::problems::ForceTerm::Given(parse_field("ln(x1)", 2).unwrap());
    let out = train(&p, small_config(&p, Strategy::Coupled, false), short(10), 0).unwrap();
    assert!(matches!(out.status, TrainStatus::Diverged { k: 0, .. }), "{:?}", out.status);
    assert!(out.state.history.is_empty());
}

/// Affine network on a Navier problem: the coupled loss is a convex quadratic
/// in the six parameters, so its minimum has a closed form.
fn affine_setup() -> (ProblemSpec, SolverConfig) {
    let p = registry("d2-navier-harmonic").unwrap();
    let mut cfg = SolverConfig::new(Strategy::Coupled, NetworkSpec::mlp(2, vec![], Activation::Tanh, 2));
    cfg.n_interior = 50;
    cfg.n_boundary = 40;
    cfg.frozen_batch = true;
    cfg.optimizer = Optimizer::Sgd;
    (p, cfg)
}

#[test]
fn frozen_affine_least_squares_descends_to_the_minimum() {
    let (problem, cfg) = affine_setup();
    let spec = cfg.network.clone();
    let n = spec.param_count();
    let schedule = |lr: f64, iters: usize| Schedule {
        lr0: lr,
        lr_decay: 0.0,
        penalty: Penalty::Constant(3.0),
        max_iters: iters,
        eval_every: 1000,
        ..Schedule::default()
    };
    let mut t = Trainer::new(&problem, cfg.clone(), schedule(1.0, 1), 0).unwrap();
    let at = |t: &mut Trainer, theta: &[f64]| {
        let p = Params::from_flat(&spec, theta.to_vec()).unwrap();
        let (l, g) = t.loss_and_gradient(&p, 0).unwrap();
        (l.total, g)
    };
    let (l0, g0) = at(&mut t, &vec![0.0; n]);
    let mut h = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let (_, gj) = at(&mut t, &e);
        for i in 0..n {
            h[(i, j)] = gj[i] - g0[i];
        }
    }
    let h = (&h + h.transpose()) * 0.5;
    let theta = h.clone().cholesky().expect("positive definite").solve(&-DVector::from_vec(g0.clone()));
    let (lmin, gmin) = at(&mut t, theta.as_slice());
    assert!(gmin.iter().all(|g| g.abs() < 1e-8 * (1.0 + l0)));
    let lmax = h.symmetric_eigenvalues().max();

    let iters = 4000;
    let mut t = Trainer::new(&problem, cfg, schedule(1.0 / lmax, iters), 0).unwrap();
    let out = t.run(t.initial_state().unwrap());
    assert_eq!(out.status, TrainStatus::Completed);
    let totals: Vec<f64> = out.state.history.iter().map(|r| r.total).collect();
    for w in totals.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-14), "loss went up: {} → {}", w[0], w[1]);
    }
    let gap0 = totals[0] - lmin;
    let gap = totals[iters] - lmin;
    assert!(gap >= -1e-9 * lmin.abs().max(1.0));
    assert!(gap <= 1e-4 * gap0, "remaining gap {gap:e} of {gap0:e}");
}

#[test]
fn sgd_with_huge_step_diverges_with_partial_history() {
    let (problem, cfg) = affine_setup();
    let sched = Schedule {
        lr0: 1e3,
        lr_decay: 0.0,
        penalty: Penalty::Constant(3.0),
        max_iters: 10_000,
        eval_every: 1000,
        ..Schedule::default()
    };
    let out = train(&problem, cfg, sched, 0).unwrap();
    let TrainStatus::Diverged { k, .. } = out.status else {
        panic!("expected divergence, got {:?}", out.status)
    };
    assert!(k > 0);
    assert_eq!(out.state.history.len(), k);
    assert!(out.state.history.iter().all(|r| r.total.is_finite()));
}

#[test]
fn short_run_reduces_the_loss() {
    let problem = registry("d2-dirichlet-sin").unwrap();
    let mut cfg = small_config(&problem, Strategy::Coupled, true);
    cfg.network.hidden = vec![10, 10];
    cfg.network.activations = vec![Activation::CosSinFourier, Activation::Sin];
    let sched = Schedule {
        penalty: Penalty::Constant(10.0),
        ..short(300)
    };
    let out = train(&problem, cfg, sched, 2).unwrap();
    let h = &out.state.history;
    assert!(h.last().unwrap().total < h[0].total / 10.0, "{} vs {}", h.last().unwrap().total, h[0].total);
    assert!(h.last().unwrap().rel.unwrap() < h[0].rel.unwrap());
}

#[test]
fn custom_test_set_is_used() {
    let problem = registry("d2-dirichlet-sin").unwrap();
    let pts = test_grid(&problem.domain, 5, 100).unwrap();
    let mut t = Trainer::with_test_set(&problem, small_config(&problem, Strategy::Mim, false), short(0), 0, pts.clone()).unwrap();
    assert_eq!(t.test_points(), pts.as_slice());
    let st = t.initial_state().unwrap();
    assert!(t.rel(&st.params).unwrap().unwrap() > 0.0);
    assert_eq!(t.predict(&st.params, &pts).unwrap().len(), 25 * 4);
}

proptest! {
    #[test]
    fn penalty_is_monotone(m in 1usize..100_000, a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let (k1, k2) = ((lo * m as f64) as usize, (hi * m as f64) as usize);
        prop_assert!(penalty_at(k1, m, 10.0) <= penalty_at(k2, m, 10.0));
        prop_assert!([10.0, 100.0, 500.0, 1000.0, 2000.0, 5000.0].contains(&penalty_at(k1, m, 10.0)));
    }

    #[test]
    fn lr_is_positive_and_non_increasing(k in 0usize..200_000, dk in 0usize..1000) {
        let s = Schedule::default();
        prop_assert!(lr_at(k, &s) > 0.0);
        prop_assert!(lr_at(k + dk, &s) <= lr_at(k, &s));
    }
}
