//! Fourier-compression secondary objective.
//!
//! `C(ω) = Σ_{k ∉ kept} |X_k|²` is a quadratic form `ωᵀ Q ω` with
//! `Q_nm = Σ_{k ∉ kept} cos(2πk(n - m)/M)`, so both cost and gradient are
//! closed-form.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::control::{dft_values, ControlField, FrequencySpec};
use crate::error::{Error, Result};
use crate::models::Problem;
use crate::navigation::{navigate, DirectionProvider, NavigationConfig, SecondaryObjective, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct FourierObjective {
    spec: FrequencySpec,
    penalty: DMatrix<f64>,
}

impl FourierObjective {
    pub fn new(spec: FrequencySpec) -> Self {
        let m = spec.dim();
        let excluded: Vec<usize> = spec.excluded().collect();
        let penalty = DMatrix::from_fn(m, m, |n, k| {
            let lag = (n + m - k) % m;
            excluded.iter().map(|&f| (2.0 * PI * ((f * lag) % m) as f64 / m as f64).cos()).sum()
        });
        FourierObjective { spec, penalty }
    }

    pub fn spec(&self) -> &FrequencySpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn penalty_matrix(&self) -> &DMatrix<f64> {
        &self.penalty
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: len });
        }
        Ok(())
    }

    /// `ωᵀ Q ω`
    pub fn cost_values(&self, values: &[f64]) -> Result<f64> {
        self.check(values.len())?;
        let w = DVector::from_column_slice(values);
        Ok(w.dot(&(&self.penalty * &w)).max(0.0))
    }

    /// Sum of excluded spectral powers, through the DFT.
    pub fn cost_via_dft(&self, values: &[f64]) -> Result<f64> {
        self.check(values.len())?;
        let x = dft_values(values);
        Ok(self.spec.excluded().map(|k| x.components()[k].norm_sqr()).sum())
    }

    /// `2 Q ω`
    pub fn gradient_values(&self, values: &[f64]) -> Result<DVector<f64>> {
        self.check(values.len())?;
        Ok(&self.penalty * DVector::from_column_slice(values) * 2.0)
    }
}

impl SecondaryObjective for FourierObjective {
    fn cost(&self, values: &[f64]) -> Result<f64> {
        self.cost_values(values)
    }

    fn gradient(&self, values: &[f64]) -> Result<DVector<f64>> {
        self.gradient_values(values)
    }
}

pub fn fourier_cost(field: &ControlField, objective: &FourierObjective) -> Result<f64> {
    objective.cost_values(field.values())
}

pub fn fourier_gradient(field: &ControlField, objective: &FourierObjective) -> Result<DVector<f64>> {
    objective.gradient_values(field.values())
}

/// Descends the Fourier cost along the solution submanifold.
pub fn compress(
    problem: &Problem,
    start: &ControlField,
    objective: &FourierObjective,
    config: &NavigationConfig,
) -> Result<Trajectory> {
    objective.check(start.len())?;
    navigate(problem, start, DirectionProvider::secondary(objective), config)
}
