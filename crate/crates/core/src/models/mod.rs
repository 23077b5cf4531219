//! Main-objective cost functionals with exact gradients and Hessians.
//!
//! Both models evaluate to `I = |b|²` for a complex amplitude `b` built from
//! a product of closed-form 2×2 interval propagators, so derivatives come from
//! a shared chain-rule routine rather than an ODE solver.

mod chain;
pub mod lz;
pub mod qho;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::control::ControlField;
use crate::error::{Error, Result};

pub use lz::{lz_infidelity, lz_propagate, LzProblem, LzPropagation};
pub use qho::{particle_number, qho_infidelity, qho_propagate, BogoliubovPair, QhoProblem};

/// Infidelity below which a field counts as a solution.
pub const SOLUTION_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum Problem {
    Lz(LzProblem),
    Qho(QhoProblem),
}

impl From<LzProblem> for Problem {
    fn from(p: LzProblem) -> Self {
        Problem::Lz(p)
    }
}

impl From<QhoProblem> for Problem {
    fn from(p: QhoProblem) -> Self {
        Problem::Qho(p)
    }
}

impl Problem {
    pub fn name(&self) -> &'static str {
        match self {
            Problem::Lz(_) => "lz",
            Problem::Qho(_) => "qho",
        }
    }

    pub fn n_pulses(&self) -> usize {
        match self {
            Problem::Lz(p) => p.n_pulses(),
            Problem::Qho(p) => p.n_pulses(),
        }
    }

    pub fn duration(&self) -> f64 {
        match self {
            Problem::Lz(p) => p.duration(),
            Problem::Qho(p) => p.duration(),
        }
    }

    /// Same physics with a different number of pulses.
    pub fn with_pulses(&self, n_pulses: usize) -> Result<Problem> {
        Ok(match self {
            Problem::Lz(p) => LzProblem::new(p.gap(), p.duration(), n_pulses)?.into(),
            Problem::Qho(p) => {
                QhoProblem::new(p.omega_start(), p.omega_target(), p.n_initial(), p.duration(), n_pulses)?.into()
            }
        })
    }

    /// Checks that `field` has this problem's pulse count and duration.
    pub fn check_field(&self, field: &ControlField) -> Result<()> {
        if field.len() != self.n_pulses() {
            return Err(Error::DimensionMismatch { expected: self.n_pulses(), got: field.len() });
        }
        check_duration(self.duration(), field)
    }

    pub fn infidelity(&self, field: &ControlField) -> Result<f64> {
        self.check_field(field)?;
        self.infidelity_values(field.values())
    }

    /// Cost of raw amplitudes (length checked, duration taken from the problem).
    pub fn infidelity_values(&self, values: &[f64]) -> Result<f64> {
        match self {
            Problem::Lz(p) => p.infidelity_values(values),
            Problem::Qho(p) => p.infidelity_values(values),
        }
    }

    pub fn exact_gradient(&self, field: &ControlField) -> Result<DVector<f64>> {
        self.check_field(field)?;
        self.gradient_values(field.values())
    }

    pub fn gradient_values(&self, values: &[f64]) -> Result<DVector<f64>> {
        match self {
            Problem::Lz(p) => p.gradient_values(values),
            Problem::Qho(p) => p.gradient_values(values),
        }
    }

    /// Exact Hessian, symmetrized as `(H + Hᵀ)/2`.
    pub fn exact_hessian(&self, field: &ControlField) -> Result<DMatrix<f64>> {
        self.check_field(field)?;
        self.hessian_values(field.values())
    }

    pub fn hessian_values(&self, values: &[f64]) -> Result<DMatrix<f64>> {
        let h = self.hessian_raw_values(values)?;
        Ok((&h + h.transpose()) * 0.5)
    }

    /// Exact Hessian before symmetrization. The upper and lower triangles
    /// come from independent forward and backward propagation passes.
    pub fn hessian_raw_values(&self, values: &[f64]) -> Result<DMatrix<f64>> {
        match self {
            Problem::Lz(p) => p.hessian_raw_values(values),
            Problem::Qho(p) => p.hessian_raw_values(values),
        }
    }
}

fn check_duration(expected: f64, field: &ControlField) -> Result<()> {
    let got = field.total_time();
    if (got - expected).abs() > 1e-12 * expected.abs().max(1.0) {
        return Err(Error::DurationMismatch { expected, got });
    }
    Ok(())
}

/// `exact_gradient` as a free function over any problem.
pub fn exact_gradient(problem: &Problem, field: &ControlField) -> Result<DVector<f64>> {
    problem.exact_gradient(field)
}

/// `exact_hessian` as a free function over any problem.
pub fn exact_hessian(problem: &Problem, field: &ControlField) -> Result<DMatrix<f64>> {
    problem.exact_hessian(field)
}
