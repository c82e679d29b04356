use equirl::autograd::{finite_difference_gradient, max_relative_error};
use equirl::envs::gridworld::{build_gridworld, GridworldConfig, SymmetryBreak};
use equirl::fit::*;
use equirl::mdp::{greedy_policy, value_iteration, FiniteMdp, MdpSymmetry};
use equirl::rng;
use rand::Rng;

fn world(sb: SymmetryBreak) -> (FiniteMdp<f64>, MdpSymmetry) {
    build_gridworld::<f64>(&GridworldConfig { symmetry_break: sb, ..Default::default() }).unwrap()
}

fn reflect() -> SymmetryBreak {
    SymmetryBreak::ReflectAction { region: vec![(2, 0), (2, 1), (3, 0), (3, 1)] }
}

fn tiny_world() -> (FiniteMdp<f64>, MdpSymmetry) {
    let cfg = GridworldConfig { width: 3, n_rows: 1, goals: vec![(0, 0), (0, 2)], ..Default::default() };
    build_gridworld::<f64>(&cfg).unwrap()
}

fn random_inputs(net: &QNet<f64>, batch: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, 0);
    (0..batch * net.input_dim()).map(|_| r.random_range(-1.0..1.0)).collect()
}

#[test]
fn relaxed_with_uniform_weights_equals_exact_with_mean_kernel() {
    let (_, sym) = world(SymmetryBreak::None);
    let mut spec = QNetSpec::new(NetKind::Relaxed, vec![4, 3], 5);
    spec.kernels = 3;
    let relaxed = build_qnet::<f64>(&spec, &sym).unwrap();
    let mut exact = build_qnet::<f64>(&QNetSpec::new(NetKind::Exact, vec![4, 3], 5), &sym).unwrap();
    // exact params per layer: psi, bias; relaxed: psi0..psi2, w, bias
    let rp = relaxed.params();
    let mut flat = Vec::new();
    for layer in 0..3 {
        let psis: Vec<_> = rp.iter().filter(|p| p.name.starts_with(&format!("layer{layer}.psi"))).collect();
        assert_eq!(psis.len(), 3);
        let n = psis[0].values.len();
        flat.extend((0..n).map(|k| psis.iter().map(|p| p.values[k]).sum::<f64>() / 3.0));
        flat.extend(&rp.iter().find(|p| p.name == format!("layer{layer}.bias")).unwrap().values);
    }
    exact.set_flat_params(&flat).unwrap();
    let x = random_inputs(&exact, 7, 1);
    let a = relaxed.predict(&x, 7).unwrap();
    let b = exact.predict(&x, 7).unwrap();
    for (u, v) in a.iter().zip(&b) {
        assert!((u - v).abs() <= 1e-9);
    }
}

#[test]
fn loss_gradient_matches_finite_differences() {
    let (m, sym) = tiny_world();
    let data = QDataset::from_mdp(&m, &sym, 1e-12).unwrap();
    for kind in NetKind::ALL {
        for seed in 0..3 {
            let mut spec = QNetSpec::new(kind, vec![3], seed);
            if kind == NetKind::Relaxed {
                spec.kernels = 2;
            }
            let mut net = build_qnet::<f64>(&spec, &sym).unwrap();
            // move off the uniform relaxed weights and zero biases
            let mut r = rng::stream(seed, 7);
            let p0: Vec<f64> = net.flat_params().iter().map(|v| v + r.random_range(-0.3..0.3)).collect();
            net.set_flat_params(&p0).unwrap();
            let (_, grads) = loss_and_grad(&net, &data).unwrap();
            let analytic: Vec<f64> = grads.concat();
            let mut probe = net.clone();
            let numeric = finite_difference_gradient(
                |p| {
                    probe.set_flat_params(p).unwrap();
                    loss(&probe, &data).unwrap()
                },
                &p0,
                1e-6,
            )
            .unwrap();
            let err = max_relative_error(&analytic, &numeric, 1e-6);
            assert!(err < 1e-4, "{kind:?} seed {seed}: {err}");
        }
    }
}

#[test]
fn symmetric_data_gives_equal_relaxed_weight_gradients() {
    let (m, sym) = world(SymmetryBreak::None);
    let data = QDataset::from_mdp(&m, &sym, 1e-12).unwrap();
    let mut spec = QNetSpec::new(NetKind::Relaxed, vec![4], 2);
    spec.kernels = 2;
    let mut net = build_qnet::<f64>(&spec, &sym).unwrap();
    let n = sym.group().order();
    for step in 0..=10 {
        if matches!(step, 0 | 1 | 10) {
            let (_, grads) = loss_and_grad(&net, &data).unwrap();
            for (p, g) in net.params().iter().zip(&grads) {
                if p.name.ends_with(".w") {
                    for row in g.chunks(n) {
                        let scale = row.iter().fold(1e-12_f64, |a, b| a.max(b.abs()));
                        for x in row {
                            assert!((x - row[0]).abs() <= 1e-10 * scale, "step {step}: {row:?}");
                        }
                    }
                }
            }
        }
        gradient_step(&mut net, &data, 0.1).unwrap();
    }
}

#[test]
fn training_is_reproducible() {
    let (m, sym) = world(reflect());
    let data = QDataset::from_mdp(&m, &sym, 1e-12).unwrap();
    let cfg = TrainConfig { steps: 60, learning_rate: 0.2, log_every: 20 };
    let digest = || {
        let mut net = build_qnet::<f64>(&QNetSpec::new(NetKind::Relaxed, vec![3], 11), &sym).unwrap();
        train_q_regression(&mut net, &data, &cfg).unwrap()
    };
    let (a, b) = (digest(), digest());
    assert_eq!(a.digest().unwrap(), b.digest().unwrap());
    assert_eq!(a.losses.len(), 60);
    assert_eq!(a.spreads.iter().map(|s| s.step).collect::<Vec<_>>(), vec![0, 20, 40, 60]);
    assert!(a.losses.iter().all(|l| l.is_finite()));
    assert!(a.final_loss < a.losses[0]);

    let mut other = build_qnet::<f64>(&QNetSpec::new(NetKind::Relaxed, vec![3], 12), &sym).unwrap();
    let c = train_q_regression(&mut other, &data, &cfg).unwrap();
    assert_ne!(a.digest().unwrap(), c.digest().unwrap());

    let mut csv = Vec::new();
    a.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().count(), 62);
    assert!(text.starts_with("step,loss,spread\n0,"));
    let (losses, spreads) = TrainLog::read_csv(text.as_bytes()).unwrap();
    assert_eq!(&losses[..60], &a.losses[..]);
    assert_eq!(losses[60], a.final_loss);
    assert_eq!(spreads, a.spreads);
}

#[test]
fn divergence_aborts_with_log() {
    let (m, sym) = world(SymmetryBreak::None);
    let data = QDataset::from_mdp(&m, &sym, 1e-12).unwrap();
    let mut net = build_qnet::<f64>(&QNetSpec::new(NetKind::Unconstrained, vec![8], 0), &sym).unwrap();
    let cfg = TrainConfig { steps: 500, learning_rate: 1e6, log_every: 1 };
    let log = train_q_regression(&mut net, &data, &cfg).unwrap();
    let at = log.diverged_at.expect("should diverge");
    assert!(at < 500);
    assert!(log.losses.len() <= at + 1);
    assert!(log.losses.iter().all(|l| l.is_finite()));
    assert!(train_q_regression(&mut net, &data, &TrainConfig { learning_rate: 0.0, ..cfg }).is_err());
}

#[test]
fn greedy_on_optimal_q_matches_policy_value() {
    let (m, _) = world(reflect());
    let sol = value_iteration(&m, 1e-12).unwrap();
    let pi = greedy_policy(&sol.q, m.n_actions());
    let horizon = 60;
    let exact = truncated_policy_return(&m, &pi, horizon).unwrap();
    let est = greedy_policy_return(&QTable(sol.q.clone()), &m, 20_000, horizon, 3).unwrap();
    assert!((est.mean - exact).abs() <= 4.0 * est.std_error, "{est:?} vs {exact}");

    // any other policy does no better in expectation
    let mut r = rng::stream(4, 0);
    for _ in 0..20 {
        let other: Vec<usize> = (0..m.n_states()).map(|_| r.random_range(0..m.n_actions())).collect();
        assert!(truncated_policy_return(&m, &other, horizon).unwrap() <= exact + 1e-12);
    }
    let (_, sym) = world(reflect());
    let net = build_qnet::<f64>(&QNetSpec::new(NetKind::Unconstrained, vec![8], 9), &sym).unwrap();
    let rand_est = greedy_policy_return(&net, &m, 20_000, horizon, 3).unwrap();
    assert!(rand_est.mean <= exact + 4.0 * rand_est.std_error);
}

#[test]
fn experiment_runs_in_parallel_deterministically() {
    let cfg = FitExperimentConfig {
        gridworld: GridworldConfig { symmetry_break: reflect(), ..Default::default() },
        compare_symmetric: true,
        kinds: NetKind::ALL.to_vec(),
        widths: vec![3],
        kernels: 1,
        nonlinearity: Nonlinearity::Tanh,
        seed: 100,
        replicas: 2,
        train: TrainConfig { steps: 40, learning_rate: 0.3, log_every: 10 },
        value_tol: 1e-12,
        eval: EvalConfig { episodes: 50, horizon: 20 },
    };
    let a = run_fit_experiment(&cfg, 1).unwrap();
    let b = run_fit_experiment(&cfg, 4).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.runs.len(), 12);
    assert_eq!(a.stats.len(), 6);
    assert!(a.check("symmetric_spread").unwrap().passed);
    assert_eq!(a.runs[0].seed, 100);
    assert_eq!(a.runs[1].seed, 101);
}
