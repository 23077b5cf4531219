//! Random seeds and local minimization of the main objective.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::ControlField;
use crate::error::{Error, Result};
use crate::models::{Problem, SOLUTION_THRESHOLD};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedSpec {
    pub count: usize,
    pub bounds: (f64, f64),
    pub rng_seed: u64,
}

impl SeedSpec {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Config("seed count must be at least 1".into()));
        }
        let (lo, hi) = self.bounds;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::Config(format!("invalid seed bounds ({lo}, {hi})")));
        }
        Ok(())
    }
}

/// Deterministic RNG stream for item `index` of a batch.
pub fn stream_rng(rng_seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(rng_seed.wrapping_add(index))
}

/// `count` fields with i.i.d. uniform amplitudes; seed `i` draws from its own
/// stream `rng_seed + i`.
pub fn sample_seeds(spec: &SeedSpec, problem: &Problem) -> Result<Vec<ControlField>> {
    spec.validate()?;
    let (lo, hi) = spec.bounds;
    (0..spec.count)
        .map(|i| {
            let mut rng = stream_rng(spec.rng_seed, i as u64);
            let values = (0..problem.n_pulses()).map(|_| rng.gen_range(lo..=hi)).collect();
            ControlField::new(values, problem.duration())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationReport {
    pub field: ControlField,
    pub final_infidelity: f64,
    pub iterations: usize,
    /// `final_infidelity < SOLUTION_THRESHOLD`
    pub converged: bool,
}

const ARMIJO_SLOPE: f64 = 1e-4;
const CONTRACTION: f64 = 0.5;
const GRADIENT_FLOOR: f64 = 1e-10;
const MAX_BACKTRACKS: usize = 60;

/// Gradient descent with Armijo backtracking.
///
/// Stops once infidelity drops below `tol`, the gradient norm falls below
/// 1e-10, or after `max_iter` iterations. The trial step starts from twice
/// the last accepted step.
pub fn minimize(problem: &Problem, seed: &ControlField, tol: f64, max_iter: usize) -> Result<OptimizationReport> {
    problem.check_field(seed)?;
    let mut x = seed.values().to_vec();
    let mut cost = problem.infidelity_values(&x)?;
    let mut step = 1.0;
    let mut iterations = 0;

    let report = |x: Vec<f64>, cost: f64, iterations| -> Result<OptimizationReport> {
        Ok(OptimizationReport {
            field: seed.with_values(x)?,
            final_infidelity: cost,
            iterations,
            converged: cost < SOLUTION_THRESHOLD,
        })
    };

    while iterations < max_iter && cost >= tol {
        let grad = problem.gradient_values(&x)?;
        let g2 = grad.norm_squared();
        if g2.sqrt() < GRADIENT_FLOOR {
            break;
        }
        iterations += 1;

        let mut t = step * 2.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial: Vec<f64> = x.iter().zip(grad.iter()).map(|(xi, gi)| xi - t * gi).collect();
            let c = match problem.infidelity_values(&trial) {
                Ok(c) if c.is_finite() => c,
                _ => {
                    // non-finite trial point: abandon this seed
                    let r = report(x, cost, iterations)?;
                    return Ok(OptimizationReport { converged: false, ..r });
                }
            };
            if c <= cost - ARMIJO_SLOPE * t * g2 {
                accepted = Some((trial, c));
                break;
            }
            t *= CONTRACTION;
        }
        match accepted {
            Some((trial, c)) => {
                x = trial;
                cost = c;
                step = t;
            }
            None => break,
        }
    }
    report(x, cost, iterations)
}

/// Minimizes every seed independently, in parallel; output order follows input.
pub fn minimize_batch(
    problem: &Problem,
    seeds: &[ControlField],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<OptimizationReport>> {
    seeds.par_iter().map(|s| minimize(problem, s, tol, max_iter)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{LzProblem, QhoProblem};

    #[test]
    fn degenerate_bounds_give_constant_field() {
        let p: Problem = QhoProblem::with_defaults(1.8, 4).unwrap().into();
        let spec = SeedSpec { count: 1, bounds: (0.0, 0.0), rng_seed: 3 };
        let seeds = sample_seeds(&spec, &p).unwrap();
        assert_eq!(seeds[0].values(), &[0.0; 4]);
    }

    #[test]
    fn sampling_is_deterministic() {
        let p: Problem = LzProblem::new(1.0, 2.0, 5).unwrap().into();
        let spec = SeedSpec { count: 10, bounds: (-5.0, 5.0), rng_seed: 42 };
        assert_eq!(sample_seeds(&spec, &p).unwrap(), sample_seeds(&spec, &p).unwrap());
        let other = SeedSpec { rng_seed: 43, ..spec };
        assert_ne!(sample_seeds(&spec, &p).unwrap(), sample_seeds(&other, &p).unwrap());
    }

    #[test]
    fn invalid_specs() {
        let p: Problem = LzProblem::new(1.0, 2.0, 5).unwrap().into();
        assert!(sample_seeds(&SeedSpec { count: 0, bounds: (0.0, 1.0), rng_seed: 0 }, &p).is_err());
        assert!(sample_seeds(&SeedSpec { count: 1, bounds: (1.0, 0.0), rng_seed: 0 }, &p).is_err());
    }

    #[test]
    fn solution_seed_is_returned_unchanged() {
        let p: Problem = QhoProblem::with_defaults(1.8, 6).unwrap().into();
        let seed = ControlField::constant(1.0, 6, 1.8).unwrap();
        let r = minimize(&p, &seed, 1e-20, 100).unwrap();
        assert_eq!(r.field, seed);
        assert!(r.iterations <= 1);
        assert!(r.converged);
    }
}
