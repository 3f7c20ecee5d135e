use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Discrete Ornstein-Uhlenbeck process used as exploration noise:
/// `x <- x + theta * (mu - x) + sigma * N(0, 1)`.
#[derive(Debug, Clone)]
pub struct OuNoise {
    pub theta: f64,
    pub sigma: f64,
    pub mu: f64,
    x: Vec<f64>,
    rng: ChaCha8Rng,
}

impl OuNoise {
    /// Starts at the mean (zero).
    pub fn new(dim: usize, theta: f64, sigma: f64, seed: u64) -> Self {
        Self {
            theta,
            sigma,
            mu: 0.0,
            x: vec![0.0; dim],
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn with_state(mut self, x0: Vec<f64>) -> Self {
        self.x = x0;
        self
    }

    pub fn state(&self) -> &[f64] {
        &self.x
    }

    pub fn step(&mut self) -> Vec<f64> {
        for x in &mut self.x {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            *x += self.theta * (self.mu - *x) + self.sigma * z;
        }
        self.x.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_reversion_without_diffusion() {
        let mut n = OuNoise::new(1, 1.0, 0.0, 3).with_state(vec![1.0]);
        assert_eq!(n.step(), vec![0.0]);
    }

    #[test]
    fn mean_is_a_fixed_point() {
        let mut n = OuNoise::new(3, 0.15, 0.0, 3);
        for _ in 0..100 {
            assert_eq!(n.step(), vec![0.0; 3]);
        }
    }

    #[test]
    fn seeded_path() {
        let mut a = OuNoise::new(2, 0.15, 0.2, 9);
        let mut b = OuNoise::new(2, 0.15, 0.2, 9);
        let mut c = OuNoise::new(2, 0.15, 0.2, 10);
        let pa: Vec<_> = (0..50).map(|_| a.step()).collect();
        let pb: Vec<_> = (0..50).map(|_| b.step()).collect();
        let pc: Vec<_> = (0..50).map(|_| c.step()).collect();
        assert_eq!(pa, pb);
        assert_ne!(pa, pc);
        assert!(pa.iter().flatten().all(|x| x.is_finite()));
    }

    #[test]
    fn stationary_spread_matches_theory() {
        // Var = sigma^2 / (1 - (1 - theta)^2) for the discrete recursion.
        let (theta, sigma) = (0.15, 0.2);
        let mut n = OuNoise::new(1, theta, sigma, 11);
        (0..1000).for_each(|_| {
            n.step();
        });
        let xs: Vec<f64> = (0..200_000).map(|_| n.step()[0]).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        let expected = sigma * sigma / (1.0 - (1.0 - theta) * (1.0 - theta));
        assert!((var / expected - 1.0).abs() < 0.05, "{var} vs {expected}");
    }
}
