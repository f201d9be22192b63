use beamsel::heuristic::{self, HeuristicConfig, HeuristicStatus};
use beamsel::oracle;
use beamsel::{generate_instance, TolPreset};
use itertools::Itertools;

#[test]
fn initial_supports_are_uniform() {
    let inst = generate_instance(5, 2, 0.2, 1).unwrap();
    let subsets: Vec<Vec<usize>> = (0..5).combinations(2).collect();
    let mut counts = vec![0usize; subsets.len()];
    let draws = 10_000;
    for i in 0..draws {
        let r = heuristic::run_restart(&inst, 2, heuristic::sub_seed(77, 2, i), 0);
        let support: Vec<usize> = (0..5).filter(|&u| r.x[u].norm() > 0.0).collect();
        counts[subsets.iter().position(|s| *s == support).unwrap()] += 1;
    }
    let expected = draws as f64 / subsets.len() as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // upper 1% point of chi-square with 9 degrees of freedom
    assert!(chi2 < 21.666, "chi2 = {chi2}, counts {counts:?}");
}

#[test]
fn error_never_increases_within_a_restart() {
    for seed in 0..10 {
        let inst = generate_instance(12, 3, 0.2, seed).unwrap();
        for m in [1, 3, 6, 12] {
            let mut trace = Vec::new();
            let r = heuristic::run_restart_traced(&inst, m, seed * 31 + m as u64, 300, Some(&mut trace));
            assert_eq!(trace.len(), 300);
            assert!(trace.windows(2).all(|p| p[1] <= p[0]));
            assert!((r.error - trace[299]).abs() <= 1e-9 * (1.0 + r.error));
            assert_eq!(r.x.iter().filter(|c| c.norm() > 0.0).count(), m);
        }
    }
}

#[test]
fn restarts_are_reproducible_and_parallel_safe() {
    let inst = generate_instance(10, 3, 0.2, 4).unwrap();
    let a = heuristic::run_restart(&inst, 3, 99, 200);
    let b = heuristic::run_restart(&inst, 3, 99, 200);
    assert_eq!(a, b);
    let cfg = HeuristicConfig { max_iter: 64, max_count: 200, seed: 5, ..Default::default() };
    let par = heuristic::solve_heuristic(&inst, &HeuristicConfig { parallel_restarts: true, ..cfg.clone() }).unwrap();
    let ser = heuristic::solve_heuristic(&inst, &HeuristicConfig { parallel_restarts: false, ..cfg }).unwrap();
    assert_eq!(par.x, ser.x);
    assert_eq!(par.cardinality, ser.cardinality);
    assert_eq!(par.error, ser.error);
}

#[test]
fn success_means_exact_unit_modulus_and_bound() {
    for seed in 0..8 {
        let inst = generate_instance(12, 2, 0.2, seed).unwrap();
        let r = heuristic::solve_heuristic(&inst, &HeuristicConfig { seed, ..Default::default() }).unwrap();
        assert_eq!(r.status, HeuristicStatus::Feasible);
        assert_eq!(r.x.l0(), r.cardinality);
        for c in r.x.x.iter().filter(|c| c.norm() > 0.0) {
            assert!((c.norm() - 1.0).abs() < 1e-15);
        }
        assert!(inst.residual(&r.x.x).unwrap() <= inst.tol());
    }
}

#[test]
fn unreachable_bound_reports_failure() {
    let inst = generate_instance(3, 4, 1e-6, 2).unwrap();
    let cfg = HeuristicConfig { max_iter: 20, max_count: 50, ..Default::default() };
    let r = heuristic::solve_heuristic(&inst, &cfg).unwrap();
    assert_eq!(r.status, HeuristicStatus::Infeasible);
    assert_eq!(r.cardinality, 3);
    assert!(r.error > inst.tol());
}

#[test]
fn invalid_config_rejected() {
    let inst = generate_instance(4, 2, 0.2, 0).unwrap();
    for cfg in [
        HeuristicConfig { max_iter: 0, ..Default::default() },
        HeuristicConfig { max_count: 0, ..Default::default() },
        HeuristicConfig { m_guess: 0, ..Default::default() },
        HeuristicConfig { m_guess: 5, ..Default::default() },
    ] {
        assert!(heuristic::solve_heuristic(&inst, &cfg).is_err());
    }
}

#[test]
fn small_instances_usually_hit_the_brute_force_optimum() {
    let mut equal = 0;
    let mut total = 0;
    for preset in TolPreset::ALL {
        for seed in 0..20u64 {
            let (n, k) = if seed % 2 == 0 { (6, 2) } else { (8, 3) };
            let inst = generate_instance(n, k, preset.tol(Default::default()), 1000 + seed).unwrap();
            let best = oracle::brute_force(&inst, n).unwrap().cardinality.unwrap();
            let h = heuristic::solve_heuristic(&inst, &HeuristicConfig { seed, ..Default::default() }).unwrap();
            assert_eq!(h.status, HeuristicStatus::Feasible);
            assert!(h.cardinality >= best, "seed {seed}: heuristic {} below optimum {best}", h.cardinality);
            equal += usize::from(h.cardinality == best);
            total += 1;
        }
    }
    assert!(equal * 100 >= 85 * total, "{equal}/{total}");
}
