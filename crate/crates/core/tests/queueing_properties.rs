use biokm::queueing::{mm1_stats, simulate_mm1, steady_state_table, QueueError};
use proptest::prelude::*;

fn rates() -> impl Strategy<Value = (f64, f64)> {
    (0.01f64..1000.0, 0.001f64..0.99).prop_map(|(mu, rho)| (rho * mu, mu))
}

proptest! {
    #[test]
    fn littles_law_holds_in_closed_form((lambda, mu) in rates()) {
        let s = mm1_stats(lambda, mu).unwrap();
        let tol = 1e-9 * s.l.max(1.0);
        prop_assert!((s.l - lambda * s.w).abs() <= tol);
        prop_assert!((s.lq - lambda * s.wq).abs() <= tol);
        prop_assert!((s.ls - lambda * s.ws).abs() <= tol);
        prop_assert!((s.l - (s.lq + s.ls)).abs() <= tol);
        prop_assert!((s.w - (s.wq + 1.0 / mu)).abs() <= 1e-9 * s.w.max(1.0));
        prop_assert!((s.rho + s.idle - 1.0).abs() <= 1e-15);
        prop_assert!(s.rho > 0.0 && s.rho < 1.0);
    }

    #[test]
    fn steady_state_is_geometric((lambda, mu) in rates()) {
        let rows = steady_state_table(lambda, mu, 1e-12, 5000).unwrap();
        let s = mm1_stats(lambda, mu).unwrap();
        prop_assert_eq!(rows[0].pi, s.idle);
        for w in rows.windows(2) {
            prop_assert!((w[1].pi - w[0].pi * s.rho).abs() <= 1e-12);
            prop_assert_eq!(w[1].j, w[0].j + 1);
            prop_assert_eq!(w[1].in_queue, w[1].j.saturating_sub(1));
        }
        let total: f64 = rows.iter().map(|r| r.pi).sum();
        let tail = s.rho.powi(rows.len() as i32);
        prop_assert!((total + tail - 1.0).abs() < 1e-9, "sum {} tail {}", total, tail);
        let mean: f64 = rows.iter().map(|r| r.j as f64 * r.pi).sum();
        if rows.last().unwrap().pi < 1e-12 {
            prop_assert!((mean - s.l).abs() <= 1e-6 * s.l.max(1.0));
        }
    }

    #[test]
    fn unstable_rates_are_rejected(mu in 0.01f64..100.0, k in 1.0f64..5.0) {
        let unstable = matches!(mm1_stats(mu * k, mu), Err(QueueError::UnstableQueue { .. }));
        prop_assert!(unstable);
    }
}

#[test]
fn simulator_agrees_with_closed_form_across_seeds() {
    let (lambda, mu) = (42.8, 61.4);
    let exact = mm1_stats(lambda, mu).unwrap();
    // 2500 s ≈ 1.07e5 expected arrivals per seed
    for seed in 0..10 {
        let r = simulate_mm1(lambda, mu, 2500.0, seed).unwrap();
        assert!(r.arrivals > 100_000);
        let rel = |a: f64, b: f64| (a - b).abs() / b;
        assert!(rel(r.l, exact.l) < 0.05, "seed {seed}: L {} vs {}", r.l, exact.l);
        assert!(rel(r.w, exact.w) < 0.05, "seed {seed}: W {} vs {}", r.w, exact.w);
        assert!(rel(r.rho, exact.rho) < 0.02, "seed {seed}: rho {}", r.rho);
        assert!(rel(r.l, r.lambda_hat * r.w) < 0.02, "seed {seed}: L {} vs λW {}", r.l, r.lambda_hat * r.w);
    }
}

#[test]
fn light_and_heavy_load_simulations() {
    for (lambda, mu, tol) in [(1.0, 10.0, 0.05), (9.0, 10.0, 0.15)] {
        let exact = mm1_stats(lambda, mu).unwrap();
        let r = simulate_mm1(lambda, mu, 200_000.0, 3).unwrap();
        assert!((r.l - exact.l).abs() / exact.l < tol, "{lambda}/{mu}: {} vs {}", r.l, exact.l);
    }
}
