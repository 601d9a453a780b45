use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Highest utilization the latency model accepts; keeps `1/(1-u)` finite.
pub const UTILIZATION_CAP: f64 = 0.95;

/// M/M/1-style latency inflation `1 / (1 - u)` with `u` capped at
/// [`UTILIZATION_CAP`]. `u` is a fraction, not a percentage.
pub fn latency_multiplier(utilization: f64) -> f64 {
    let u = utilization.clamp(0.0, UTILIZATION_CAP);
    1.0 / (1.0 - u)
}

/// Port utilization (fraction) after congestion of `magnitude` on a port
/// with `base_pct` percent baseline utilization.
pub fn congested_port_utilization(base_pct: f64, magnitude: f64) -> f64 {
    (base_pct + 100.0 * magnitude).min(100.0) / 100.0
}

/// Pool utilization (fraction) after an external workload adds
/// `magnitude` times the pool's nominal IOPS.
pub fn contended_pool_utilization(base_pct: f64, magnitude: f64) -> f64 {
    base_pct / 100.0 * (1.0 + magnitude)
}

/// Multiplicative gaussian noise, `1 + e` with `e ~ N(0, sigma)` clamped to
/// `±clamp_sigmas * sigma`.
#[derive(Debug, Clone, Copy)]
pub struct NoiseModel {
    pub sigma: f64,
    pub clamp_sigmas: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            sigma: 0.05,
            clamp_sigmas: 3.0,
        }
    }
}

impl NoiseModel {
    pub fn factor<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let normal = Normal::new(0.0, self.sigma).expect("sigma is finite and non-negative");
        let bound = self.clamp_sigmas * self.sigma;
        1.0 + normal.sample(rng).clamp(-bound, bound)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn congestion_example() {
        let u = congested_port_utilization(50.0, 0.3);
        assert!((u - 0.8).abs() < 1e-12);
        assert!((latency_multiplier(u) - 5.0).abs() < 1e-9);
    }

    #[test]
    fn contention_saturates_at_cap() {
        // 0.6 * 1.7 = 1.02, capped at 0.95 -> 1 / 0.05 = 20.
        let u = contended_pool_utilization(60.0, 0.7);
        assert!((u - 1.02).abs() < 1e-12);
        assert!((latency_multiplier(u) - 20.0).abs() < 1e-9);
        // 0.6 * 1.4 = 0.84 -> 1 / 0.16 = 6.25.
        assert!((latency_multiplier(contended_pool_utilization(60.0, 0.4)) - 6.25).abs() < 1e-9);
    }

    #[test]
    fn noise_is_bounded_and_centered() {
        let model = NoiseModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws: Vec<f64> = (0..20_000).map(|_| model.factor(&mut rng)).collect();
        assert!(draws.iter().all(|f| (0.85..=1.15).contains(f)));
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - 1.0).abs() < 0.002);
        let var = draws.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
        assert!((var.sqrt() - 0.05).abs() < 0.002);
    }
}
