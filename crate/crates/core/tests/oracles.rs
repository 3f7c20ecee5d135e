//! Independent oracles for the numerical pieces.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::statistics::Statistics;

use stocktrader::baselines::{min_variance_weights, sample_covariance, CovarianceMatrix};
use stocktrader::ddpg::{Agent, DdpgConfig, OuNoise};
use stocktrader::env::{ObservationScaler, Transition};
use stocktrader::marketdata::ReturnMatrix;

/// Solves the 1-3 dimensional system `m x = b` by Cramer's rule.
fn solve_small(m: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let det = |m: &[Vec<f64>]| -> f64 {
        match m.len() {
            1 => m[0][0],
            2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
            3 => {
                m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                    + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
            }
            _ => unreachable!(),
        }
    };
    let d = det(m);
    if d.abs() < 1e-300 {
        return None;
    }
    Some(
        (0..m.len())
            .map(|c| {
                let replaced: Vec<Vec<f64>> = m
                    .iter()
                    .zip(b)
                    .map(|(row, &bi)| {
                        let mut r = row.clone();
                        r[c] = bi;
                        r
                    })
                    .collect();
                det(&replaced) / d
            })
            .collect(),
    )
}

/// Exact long-only minimum over 3 assets: for every support set, the
/// equality-constrained optimum `S^-1 1 / (1' S^-1 1)` restricted to that
/// support, keeping only non-negative candidates.
fn active_set_minimum(sigma: &CovarianceMatrix, ridge: f64) -> f64 {
    let n = sigma.n();
    let mut best = f64::INFINITY;
    for mask in 1u32..(1 << n) {
        let support: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let sub: Vec<Vec<f64>> = support
            .iter()
            .map(|&i| {
                support
                    .iter()
                    .map(|&j| sigma.get(i, j) + if i == j { ridge } else { 0.0 })
                    .collect()
            })
            .collect();
        let Some(x) = solve_small(&sub, &vec![1.0; support.len()]) else {
            continue;
        };
        let total: f64 = x.iter().sum();
        let mut w = vec![0.0; n];
        for (k, &i) in support.iter().enumerate() {
            w[i] = x[k] / total;
        }
        if w.iter().all(|&v| v >= -1e-12) {
            best = best.min(sigma.quadratic_form(&w, ridge));
        }
    }
    best
}

#[test]
fn min_variance_matches_active_set_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for case in 0..200 {
        let a: Vec<[f64; 3]> = (0..3)
            .map(|_| std::array::from_fn(|_| rng.random_range(-0.1..0.1)))
            .collect();
        // A diagonal floor keeps the condition number moderate.
        let floor = rng.random_range(0.002..0.01);
        let rows: Vec<Vec<f64>> = (0..3)
            .map(|i| {
                (0..3)
                    .map(|j| (0..3).map(|k| a[i][k] * a[j][k]).sum::<f64>() + if i == j { floor } else { 0.0 })
                    .collect()
            })
            .collect();
        let sigma = CovarianceMatrix::new(rows).unwrap();
        let w = min_variance_weights(&sigma, 1e-8).unwrap();
        let got = sigma.quadratic_form(w.as_slice(), 1e-8);
        let exact = active_set_minimum(&sigma, 1e-8);
        assert!(got - exact <= 1e-9, "case {case}: {got} vs {exact}");
        assert!(got >= exact - 1e-12, "case {case}: below the true minimum");
    }
}

#[test]
fn sample_covariance_matches_statrs() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let rows: Vec<Vec<f64>> = (0..40)
        .map(|_| (0..4).map(|_| rng.random_range(-0.03..0.03)).collect())
        .collect();
    let returns = ReturnMatrix::from_rows(rows.clone()).unwrap();
    let window = 25;
    let sigma = sample_covariance(&returns, window).unwrap();
    let tail = &rows[rows.len() - window..];
    for i in 0..4 {
        for j in 0..4 {
            let xi: Vec<f64> = tail.iter().map(|r| r[i]).collect();
            let xj: Vec<f64> = tail.iter().map(|r| r[j]).collect();
            let oracle = xi.covariance(xj);
            assert!((sigma.get(i, j) - oracle).abs() < 1e-15, "{i},{j}");
        }
    }
}

#[test]
fn ou_noise_moments_match_the_ar1_solution() {
    // x[k+1] = (1 - theta) x[k] + sigma z, so Var -> sigma^2 / (1 - (1 - theta)^2)
    // and the lag-1 autocorrelation is 1 - theta.
    let (theta, sigma) = (0.15, 0.2);
    let mut noise = OuNoise::new(1, theta, sigma, 99);
    let xs: Vec<f64> = (0..200_000).map(|_| noise.step()[0]).skip(1_000).collect();
    let var = xs.iter().copied().variance();
    let expected = sigma * sigma / (1.0 - (1.0 - theta) * (1.0f64 - theta));
    assert!((var / expected - 1.0).abs() < 0.05, "{var} vs {expected}");
    let lag: Vec<f64> = xs[1..].to_vec();
    let lead: Vec<f64> = xs[..xs.len() - 1].to_vec();
    let rho = lag.iter().copied().covariance(lead.iter().copied()) / var;
    assert!((rho - (1.0 - theta)).abs() < 0.02, "{rho}");
}

#[test]
fn critic_targets_follow_the_bellman_backup() {
    let cfg = DdpgConfig {
        actor_hidden: vec![5],
        critic_hidden: vec![5],
        gamma: 0.9,
        seed: 4,
        ..DdpgConfig::default()
    };
    let agent = Agent::new(cfg, ObservationScaler::identity(2)).unwrap();
    let next_obs = vec![0.3, -0.2, 0.1, 0.0, 0.5];
    let live = Transition {
        obs: vec![0.1; 5],
        action: vec![0.2, -0.4],
        reward: 0.05,
        next_obs: next_obs.clone(),
        terminal: false,
    };
    let done = Transition {
        terminal: true,
        ..live.clone()
    };
    let y = agent.critic_targets(&[&live, &done]).unwrap();
    let mu = agent.target_actor.predict(&next_obs).unwrap();
    let mut input = next_obs;
    input.extend(mu);
    let q = agent.target_critic.predict(&input).unwrap()[0];
    assert!((y[0] - (0.05 + 0.9 * q)).abs() < 1e-15);
    assert_eq!(y[1], 0.05);
}
