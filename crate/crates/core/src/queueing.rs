//! Single-server M/M/1 analytics with Little's law, the steady-state
//! occupancy table, and a discrete-event simulator that serves as an
//! independent check on the closed forms.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_distr::{Distribution, Exp};
use rand_pcg::Pcg64;
use thiserror::Error;

pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DEFAULT_JMAX: usize = 1000;

#[derive(Debug, Error, PartialEq)]
pub enum QueueError {
    #[error("unstable queue: arrival rate {lambda} >= service rate {mu}")]
    UnstableQueue { lambda: f64, mu: f64 },
    #[error("service rate must be positive, got {0}")]
    NonPositiveServiceRate(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Steady-state quantities of an M/M/1 queue. Times are in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueStats {
    pub lambda: f64,
    pub mu: f64,
    pub rho: f64,
    pub l: f64,
    pub lq: f64,
    pub ls: f64,
    pub w: f64,
    pub wq: f64,
    pub ws: f64,
    pub idle: f64,
}

fn check_rates(lambda: f64, mu: f64) -> Result<(), QueueError> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(QueueError::NonPositiveServiceRate(mu));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(QueueError::InvalidParameter(format!(
            "arrival rate must be non-negative, got {lambda}"
        )));
    }
    if lambda >= mu {
        return Err(QueueError::UnstableQueue { lambda, mu });
    }
    Ok(())
}

pub fn mm1_stats(lambda: f64, mu: f64) -> Result<QueueStats, QueueError> {
    check_rates(lambda, mu)?;
    let rho = lambda / mu;
    let l = rho / (1.0 - rho);
    let lq = rho * rho / (1.0 - rho);
    let ls = rho;
    // The sojourn times divide by λ; at λ = 0 they are pinned to 0 so that
    // L = λW still holds.
    let per_arrival = |n: f64| if lambda > 0.0 { n / lambda } else { 0.0 };
    Ok(QueueStats {
        lambda,
        mu,
        rho,
        l,
        lq,
        ls,
        w: per_arrival(l),
        wq: per_arrival(lq),
        ws: per_arrival(ls),
        idle: 1.0 - rho,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyStateRow {
    /// Number of packets in the system.
    pub j: usize,
    pub pi: f64,
    /// Packets waiting behind the one in service.
    pub in_queue: usize,
}

/// Rows π_j = ρ^j (1 − ρ) for j = 0, 1, ... until π_j drops below `epsilon`
/// or `j_max` is reached. The row that crosses `epsilon` is included.
pub fn steady_state_table(
    lambda: f64,
    mu: f64,
    epsilon: f64,
    j_max: usize,
) -> Result<Vec<SteadyStateRow>, QueueError> {
    check_rates(lambda, mu)?;
    if !(epsilon > 0.0) {
        return Err(QueueError::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let rho = lambda / mu;
    let pi0 = 1.0 - rho;
    let mut rows = Vec::new();
    let mut j = 0usize;
    loop {
        let pi = if j == 0 { pi0 } else { rho.powi(j as i32) * pi0 };
        rows.push(SteadyStateRow {
            j,
            pi,
            in_queue: j.saturating_sub(1),
        });
        if pi < epsilon || j >= j_max || rho == 0.0 {
            break;
        }
        j += 1;
    }
    Ok(rows)
}

/// Empirical output of [`simulate_mm1`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimResult {
    /// Time-averaged number in system.
    pub l: f64,
    /// Mean sojourn time of departed packets, seconds.
    pub w: f64,
    /// Fraction of the horizon the server was busy.
    pub rho: f64,
    /// Observed arrival rate.
    pub lambda_hat: f64,
    pub arrivals: u64,
    pub departures: u64,
}

/// Event-driven FIFO single-server simulation with exponential interarrival
/// and service times, run over `[0, horizon_s]`.
pub fn simulate_mm1(lambda: f64, mu: f64, horizon_s: f64, seed: u64) -> Result<SimResult, QueueError> {
    if !(mu > 0.0) {
        return Err(QueueError::NonPositiveServiceRate(mu));
    }
    if !(lambda >= 0.0) || !(horizon_s > 0.0) {
        return Err(QueueError::InvalidParameter(format!(
            "need lambda >= 0 and horizon > 0, got {lambda}, {horizon_s}"
        )));
    }
    let mut rng = Pcg64::seed_from_u64(seed);
    let service = Exp::new(mu).map_err(|e| QueueError::InvalidParameter(e.to_string()))?;
    let interarrival = if lambda > 0.0 {
        Some(Exp::new(lambda).map_err(|e| QueueError::InvalidParameter(e.to_string()))?)
    } else {
        None
    };

    let mut now = 0.0_f64;
    let mut next_arrival = match &interarrival {
        Some(d) => d.sample(&mut rng),
        None => f64::INFINITY,
    };
    let mut next_departure = f64::INFINITY;
    // Arrival times of packets in the system; the front one is in service.
    let mut system: VecDeque<f64> = VecDeque::new();
    let mut area = 0.0;
    let mut busy = 0.0;
    let mut sojourn_sum = 0.0;
    let (mut arrivals, mut departures) = (0u64, 0u64);

    loop {
        let t = next_arrival.min(next_departure).min(horizon_s);
        let dt = t - now;
        area += system.len() as f64 * dt;
        if !system.is_empty() {
            busy += dt;
        }
        now = t;
        if now >= horizon_s {
            break;
        }
        if next_arrival <= next_departure {
            arrivals += 1;
            system.push_back(now);
            if system.len() == 1 {
                next_departure = now + service.sample(&mut rng);
            }
            next_arrival = match &interarrival {
                Some(d) => now + d.sample(&mut rng),
                None => f64::INFINITY,
            };
        } else {
            let arrived = system.pop_front().expect("departure from empty system");
            departures += 1;
            sojourn_sum += now - arrived;
            next_departure = if system.is_empty() {
                f64::INFINITY
            } else {
                now + service.sample(&mut rng)
            };
        }
    }

    Ok(SimResult {
        l: area / horizon_s,
        w: if departures > 0 {
            sojourn_sum / departures as f64
        } else {
            0.0
        },
        rho: busy / horizon_s,
        lambda_hat: arrivals as f64 / horizon_s,
        arrivals,
        departures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn published_steady_state_performance() {
        let s = mm1_stats(42.8, 61.4).unwrap();
        let expected = [
            (s.rho, 0.697068404),
            (s.l, 2.301075269),
            (s.lq, 1.604006865),
            (s.ls, 0.697068404),
            (s.w, 0.053763441),
            (s.wq, 0.037476796),
            (s.ws, 0.016286645),
            (s.idle, 0.302931596),
        ];
        for (got, want) in expected {
            assert!(close(got, want, 1e-9), "{got} vs {want}");
        }
    }

    #[test]
    fn ircd_column_utilization() {
        // The published four-decimal cells are truncated, not rounded.
        let s = mm1_stats(57.8, 87.9).unwrap();
        assert_eq!((s.rho * 1e4).floor() / 1e4, 0.6575);
        assert!(close(s.rho, 0.6575, 1e-4));
    }

    #[test]
    fn empty_system() {
        let s = mm1_stats(0.0, 10.0).unwrap();
        assert_eq!((s.rho, s.l, s.idle), (0.0, 0.0, 1.0));
        assert_eq!((s.w, s.wq, s.ws), (0.0, 0.0, 0.0));
    }

    #[test]
    fn rejects_unstable_and_bad_rates() {
        assert!(matches!(
            mm1_stats(5.0, 5.0),
            Err(QueueError::UnstableQueue { .. })
        ));
        assert!(matches!(
            mm1_stats(6.0, 5.0),
            Err(QueueError::UnstableQueue { .. })
        ));
        assert_eq!(
            mm1_stats(1.0, 0.0),
            Err(QueueError::NonPositiveServiceRate(0.0))
        );
        assert!(mm1_stats(-1.0, 2.0).is_err());
        assert!(mm1_stats(f64::NAN, 2.0).is_err());
    }

    #[test]
    fn published_probability_column() {
        let rows = steady_state_table(42.8, 61.4, DEFAULT_EPSILON, DEFAULT_JMAX).unwrap();
        let want = [
            0.302931596,
            0.211164044,
            0.147195783,
            0.10260553,
            0.071523073,
            0.049856474,
            0.034753373,
            0.024225478,
            0.016886815,
            0.011771265,
            0.008205377,
        ];
        for (row, w) in rows.iter().zip(want) {
            assert!(close(row.pi, w, 1e-9), "j={} {} vs {w}", row.j, row.pi);
        }
    }

    #[test]
    fn queue_count_rule() {
        let rows = steady_state_table(1.0, 2.0, 1e-9, 10).unwrap();
        assert_eq!(rows[0].in_queue, 0);
        assert_eq!(rows[1].in_queue, 0);
        assert_eq!(rows[5].in_queue, 4);
    }

    #[test]
    fn table_stops_at_epsilon_or_jmax() {
        let rows = steady_state_table(1.0, 2.0, 0.01, 1000).unwrap();
        let last = rows.last().unwrap();
        assert!(last.pi < 0.01);
        assert!(rows[..rows.len() - 1].iter().all(|r| r.pi >= 0.01));

        let rows = steady_state_table(1.0, 2.0, 1e-12, 3).unwrap();
        assert_eq!(rows.len(), 4);

        let rows = steady_state_table(0.0, 2.0, 1e-6, 100).unwrap();
        assert_eq!(rows, vec![SteadyStateRow { j: 0, pi: 1.0, in_queue: 0 }]);

        assert!(steady_state_table(1.0, 2.0, 0.0, 10).is_err());
        assert!(steady_state_table(3.0, 2.0, 0.1, 10).is_err());
    }

    #[test]
    fn simulator_without_arrivals_is_idle() {
        let r = simulate_mm1(0.0, 5.0, 100.0, 3).unwrap();
        assert_eq!((r.l, r.rho, r.arrivals), (0.0, 0.0, 0));
    }

    #[test]
    fn simulator_is_deterministic_per_seed() {
        let a = simulate_mm1(3.0, 5.0, 200.0, 11).unwrap();
        let b = simulate_mm1(3.0, 5.0, 200.0, 11).unwrap();
        let c = simulate_mm1(3.0, 5.0, 200.0, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn simulator_matches_published_l() {
        let r = simulate_mm1(42.8, 61.4, 3600.0, 1).unwrap();
        assert!((r.l - 2.301075269).abs() / 2.301075269 < 0.05, "{r:?}");
        assert!((r.l / r.lambda_hat - r.w).abs() / r.w < 0.02, "{r:?}");
    }
}
