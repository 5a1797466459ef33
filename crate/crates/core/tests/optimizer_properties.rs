use stirsap_core::cmaes::*;

fn sphere(x: &[f64]) -> Result<f64, String> {
    Ok(x.iter().map(|v| v * v).sum())
}

fn rosenbrock(x: &[f64]) -> Result<f64, String> {
    Ok(x.windows(2).map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2)).sum())
}

fn sphere_config(seed: u64) -> CmaesConfig {
    let mut cfg = CmaesConfig::new(vec![3.0; 4], vec![(-5.0, 5.0); 4], seed);
    cfg.max_evaluations = 5000;
    cfg
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn sphere_converges() {
    let r = optimize(sphere, &sphere_config(1)).unwrap();
    assert!(r.best_cost < 1e-9, "{}", r.best_cost);
    assert!(r.evaluations <= 5000);
}

#[test]
fn rosenbrock_converges() {
    let mut cfg = CmaesConfig::new(vec![0.0; 4], vec![(-5.0, 5.0); 4], 1);
    cfg.max_evaluations = 40_000;
    let r = optimize(rosenbrock, &cfg).unwrap();
    assert!(r.best_cost < 1e-6, "{}", r.best_cost);
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let cfg = sphere_config(7);
    let one = in_pool(1, || optimize(sphere, &cfg).unwrap());
    let four = in_pool(4, || optimize(sphere, &cfg).unwrap());
    assert_eq!(one, four);
    assert_eq!(optimize(sphere, &cfg).unwrap(), one);
}

#[test]
fn best_so_far_is_monotone() {
    for seed in 1..6 {
        let mut cfg = CmaesConfig::new(vec![0.0; 4], vec![(-5.0, 5.0); 4], seed);
        cfg.max_evaluations = 3000;
        let r = optimize(rosenbrock, &cfg).unwrap();
        for w in r.history.windows(2) {
            assert!(w[1].best_cost <= w[0].best_cost);
            assert!(w[1].eval_count > w[0].eval_count);
        }
        assert_eq!(r.history.last().unwrap().best_cost, r.best_cost);
    }
}

#[test]
fn one_generation_moves_the_mean_downhill() {
    let mut wins = 0;
    for seed in 0..50 {
        let mut state = CmaesState::new(&sphere_config(seed)).unwrap();
        let before = sphere(state.mean.as_slice()).unwrap();
        let xs = state.ask().unwrap();
        let costs: Vec<f64> = xs.iter().map(|x| sphere(x).unwrap()).collect();
        state.tell(&xs, &costs).unwrap();
        if sphere(state.mean.as_slice()).unwrap() < before {
            wins += 1;
        }
    }
    assert!(wins >= 45, "{wins}/50");
}

#[test]
fn covariance_stays_symmetric_positive() {
    let mut cfg = CmaesConfig::new(vec![0.0; 4], vec![(-5.0, 5.0); 4], 3);
    cfg.max_evaluations = 2000;
    let mut state = CmaesState::new(&cfg).unwrap();
    for _ in 0..60 {
        let xs = state.ask().unwrap();
        let costs: Vec<f64> = xs.iter().map(|x| rosenbrock(x).unwrap()).collect();
        state.tell(&xs, &costs).unwrap();
        let c = &state.covariance;
        assert!((c - c.transpose()).amax() < 1e-12 * c.amax());
        let eig = c.clone().symmetric_eigen();
        assert!(eig.eigenvalues.min() > 0.0);
    }
}

#[test]
fn translated_cost_samples_the_same_candidates() {
    let cfg = CmaesConfig::new(vec![1.0; 4], vec![(-5.0, 5.0); 4], 11);
    let mut a = CmaesState::new(&cfg).unwrap();
    let mut b = CmaesState::new(&cfg).unwrap();
    for _ in 0..5 {
        let xa = a.ask().unwrap();
        let xb = b.ask().unwrap();
        assert_eq!(xa, xb);
        let ca: Vec<f64> = xa.iter().map(|x| rosenbrock(x).unwrap()).collect();
        let cb: Vec<f64> = ca.iter().map(|c| c + 1234.5).collect();
        a.tell(&xa, &ca).unwrap();
        b.tell(&xb, &cb).unwrap();
    }
    assert_eq!(a.ask().unwrap(), b.ask().unwrap());
}

#[test]
fn seeds_give_different_runs() {
    let a = optimize(sphere, &sphere_config(1)).unwrap();
    let b = optimize(sphere, &sphere_config(2)).unwrap();
    assert_ne!(a.history[1].candidates, b.history[1].candidates);
}
