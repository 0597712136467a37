//! Collision odds for high-dimensional feature vectors.
//!
//! Two maps collide when they land within epsilon of each other. Under a
//! uniform-in-ball model the collision probability is the volume ratio
//! (epsilon / radius)^d, astronomically small at real feature
//! dimensionalities; the analytic path reports its base-10 log. The Monte
//! Carlo path estimates the same ratio by sampling, so it only works in low
//! dimensions and refuses runs whose expected hit count is too small to
//! estimate anything.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::rng;
use crate::{Error, Result};

#[allow(unused_imports)]
use num_traits::Float;

/// Minimum expected hits for a meaningful Monte Carlo estimate.
const MIN_EXPECTED_HITS: f64 = 10.0;

/// Collision geometry: feature dimension, match distance, feature radius.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CollisionQuery {
    pub dims: usize,
    pub epsilon: f64,
    pub radius: f64,
}

impl CollisionQuery {
    fn validate(&self) -> Result<()> {
        if self.dims == 0 {
            return Err(Error::InvalidQuery("dims must be positive"));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidQuery("epsilon must be positive and finite"));
        }
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(Error::InvalidQuery("radius must be positive and finite"));
        }
        if self.epsilon >= self.radius {
            return Err(Error::InvalidQuery("epsilon must be below the radius"));
        }
        Ok(())
    }
}

/// log10 of the collision probability, exact under the volume-ratio model:
/// d * (log10 eps - log10 R).
pub fn collision_log10_probability(query: &CollisionQuery) -> Result<f64> {
    query.validate()?;
    Ok(query.dims as f64 * (query.epsilon.log10() - query.radius.log10()))
}

/// Monte Carlo estimate of the same probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    pub probability: f64,
    pub log10_probability: f64,
    pub hits: usize,
    pub samples: usize,
}

/// Samples uniform points in the radius-R ball and counts landings within
/// epsilon of a reference placed at distance R - eps from the center (the
/// ball around it lies fully inside, so the hit rate is the volume ratio).
/// Refuses queries whose expected hit count is below 10.
pub fn collision_monte_carlo(
    query: &CollisionQuery,
    samples: usize,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    query.validate()?;
    if samples == 0 {
        return Err(Error::InvalidQuery("samples must be positive"));
    }
    let p_true = (query.epsilon / query.radius).powi(query.dims as i32);
    let expected_hits = p_true * samples as f64;
    if expected_hits < MIN_EXPECTED_HITS {
        return Err(Error::InfeasibleEstimate { expected_hits });
    }

    let d = query.dims;
    let mut stream = rng::stream(rng::derive(seed, "collision", &[d as u64]));
    let mut reference = alloc::vec![0.0f64; d];
    reference[0] = query.radius - query.epsilon;

    let mut hits = 0usize;
    let mut point = alloc::vec![0.0f64; d];
    for _ in 0..samples {
        let mut norm_sq = 0.0;
        for v in point.iter_mut() {
            let g: f64 = stream.sample(StandardNormal);
            *v = g;
            norm_sq += g * g;
        }
        let norm = norm_sq.sqrt().max(f64::MIN_POSITIVE);
        let u: f64 = stream.gen_range(0.0..1.0f64);
        let r = query.radius * u.powf(1.0 / d as f64);
        let mut dist_sq = 0.0;
        for (v, c) in point.iter().zip(reference.iter()) {
            let delta = v * (r / norm) - c;
            dist_sq += delta * delta;
        }
        if dist_sq <= query.epsilon * query.epsilon {
            hits += 1;
        }
    }
    let probability = hits as f64 / samples as f64;
    Ok(MonteCarloEstimate {
        probability,
        log10_probability: probability.log10(),
        hits,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn real_feature_dimensions_give_astronomical_exponent() {
        let q = CollisionQuery { dims: 40_000, epsilon: 0.3, radius: 1.0 };
        let lg = collision_log10_probability(&q).unwrap();
        assert_relative_eq!(lg, -20_915.149811213504, epsilon = 1e-6);
    }

    #[test]
    fn analytic_matches_hand_cases() {
        let q = CollisionQuery { dims: 2, epsilon: 0.1, radius: 1.0 };
        assert_relative_eq!(collision_log10_probability(&q).unwrap(), -2.0, epsilon = 1e-12);
        let q = CollisionQuery { dims: 3, epsilon: 0.5, radius: 1.0 };
        assert_relative_eq!(
            collision_log10_probability(&q).unwrap(),
            3.0 * 0.5f64.log10(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn invalid_queries_are_rejected() {
        let bad = [
            CollisionQuery { dims: 0, epsilon: 0.1, radius: 1.0 },
            CollisionQuery { dims: 2, epsilon: 0.0, radius: 1.0 },
            CollisionQuery { dims: 2, epsilon: 0.1, radius: 0.0 },
            CollisionQuery { dims: 2, epsilon: 1.0, radius: 1.0 },
            CollisionQuery { dims: 2, epsilon: 2.0, radius: 1.0 },
        ];
        for q in bad {
            assert!(matches!(
                collision_log10_probability(&q),
                Err(Error::InvalidQuery(_))
            ));
            assert!(collision_monte_carlo(&q, 1000, 1).is_err());
        }
    }

    #[test]
    fn monte_carlo_requires_feasible_hit_counts() {
        let q = CollisionQuery { dims: 12, epsilon: 0.3, radius: 1.0 };
        // Expected hits: 1000 * 0.3^12 << 10.
        match collision_monte_carlo(&q, 1000, 1) {
            Err(Error::InfeasibleEstimate { expected_hits }) => {
                assert!(expected_hits < 10.0);
            }
            other => panic!("expected infeasible estimate, got {other:?}"),
        }
    }

    #[test]
    fn monte_carlo_agrees_with_analytic_across_low_dims() {
        for d in 1..=6usize {
            let q = CollisionQuery { dims: d, epsilon: 0.5, radius: 1.0 };
            let p_true = 0.5f64.powi(d as i32);
            let samples = 40_000;
            let est = collision_monte_carlo(&q, samples, 15).unwrap();
            let sigma = (p_true * (1.0 - p_true) / samples as f64).sqrt();
            assert!(
                (est.probability - p_true).abs() <= 3.0 * sigma,
                "d={d}: {} vs {p_true} (sigma {sigma})",
                est.probability
            );
            assert_eq!(est.samples, samples);
            assert_eq!(est.hits, (est.probability * samples as f64).round() as usize);
        }
    }

    #[test]
    fn monte_carlo_is_deterministic_per_seed() {
        let q = CollisionQuery { dims: 3, epsilon: 0.5, radius: 1.0 };
        let a = collision_monte_carlo(&q, 5000, 7).unwrap();
        let b = collision_monte_carlo(&q, 5000, 7).unwrap();
        let c = collision_monte_carlo(&q, 5000, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.hits, c.hits);
    }
}
