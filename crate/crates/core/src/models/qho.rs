//! Harmonic trap with time-dependent frequency, reduced to the classical mode
//! function `f'' + ω(t)² f = 0` (m = ħ = 1).
//!
//! The mode starts as the positive-frequency solution of the initial trap,
//! `f(0) = 1/sqrt(2ω₀)`, `f'(0) = -i sqrt(ω₀/2)`. At `T` it is split into
//! positive and negative frequency parts of the final trap, which gives the
//! Bogoliubov coefficients `α` and `β`.

use nalgebra::{DMatrix, DVector, Matrix2};
use serde::{Deserialize, Serialize};

use super::chain::{self, Bra, Ket, Mat2, Segment};
use crate::control::{ControlField, C64};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawQho")]
pub struct QhoProblem {
    #[serde(rename = "omega0")]
    omega_start: f64,
    #[serde(rename = "omegaT")]
    omega_target: f64,
    #[serde(rename = "N0")]
    n_initial: f64,
    #[serde(rename = "T")]
    duration: f64,
    #[serde(rename = "M")]
    n_pulses: usize,
}

#[derive(Deserialize)]
struct RawQho {
    #[serde(default = "one")]
    omega0: f64,
    #[serde(rename = "omegaT", default = "one")]
    omega_t: f64,
    #[serde(rename = "N0", default)]
    n0: f64,
    #[serde(rename = "T")]
    duration: f64,
    #[serde(rename = "M")]
    n_pulses: usize,
}

fn one() -> f64 {
    1.0
}

impl TryFrom<RawQho> for QhoProblem {
    type Error = Error;

    fn try_from(raw: RawQho) -> Result<Self> {
        QhoProblem::new(raw.omega0, raw.omega_t, raw.n0, raw.duration, raw.n_pulses)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BogoliubovPair {
    pub alpha: C64,
    pub beta: C64,
}

impl QhoProblem {
    pub fn new(omega_start: f64, omega_target: f64, n_initial: f64, duration: f64, n_pulses: usize) -> Result<Self> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(omega_start) || !positive(omega_target) {
            return Err(Error::InvalidProblem(format!(
                "trap frequencies must be positive, got {omega_start} and {omega_target}"
            )));
        }
        if !(n_initial.is_finite() && n_initial >= 0.0) {
            return Err(Error::InvalidProblem(format!("N0 must be non-negative, got {n_initial}")));
        }
        if !positive(duration) {
            return Err(Error::InvalidProblem(format!("duration must be positive, got {duration}")));
        }
        if n_pulses == 0 {
            return Err(Error::InvalidProblem("at least one pulse is required".into()));
        }
        Ok(QhoProblem { omega_start, omega_target, n_initial, duration, n_pulses })
    }

    /// Static unit trap, vacuum initial state.
    pub fn with_defaults(duration: f64, n_pulses: usize) -> Result<Self> {
        Self::new(1.0, 1.0, 0.0, duration, n_pulses)
    }

    pub fn omega_start(&self) -> f64 {
        self.omega_start
    }

    pub fn omega_target(&self) -> f64 {
        self.omega_target
    }

    pub fn n_initial(&self) -> f64 {
        self.n_initial
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn n_pulses(&self) -> usize {
        self.n_pulses
    }

    pub fn dt(&self) -> f64 {
        self.duration / self.n_pulses as f64
    }

    /// Transfer matrix alone, for cost evaluation.
    pub(crate) fn propagator(&self, omega: f64) -> Mat2 {
        let dt = self.dt();
        let x = omega * dt;
        let (sn, cs) = x.sin_cos();
        let sinc = if x.abs() < 0.1 { chain::sinc_with_derivatives(x).0 } else { sn / x };
        Matrix2::new(C64::new(cs, 0.0), C64::new(dt * sinc, 0.0), C64::new(-omega * sn, 0.0), C64::new(cs, 0.0))
    }

    /// Transfer matrix acting on `(f, f')` over one interval, and its first
    /// two ω-derivatives. `sin(ω dt)/ω` goes through the sinc series near 0.
    pub(crate) fn segment(&self, omega: f64) -> Segment {
        let dt = self.dt();
        let x = omega * dt;
        let (s0, s1, s2) = chain::sinc_with_derivatives(x);
        let (sn, cs) = x.sin_cos();
        let re = |a: f64| C64::new(a, 0.0);

        let u = Matrix2::new(re(cs), re(dt * s0), re(-omega * sn), re(cs));
        let du = Matrix2::new(re(-dt * sn), re(dt * dt * s1), re(-sn - x * cs), re(-dt * sn));
        let d2u =
            Matrix2::new(re(-dt * dt * cs), re(dt * dt * dt * s2), re(-2.0 * dt * cs + x * dt * sn), re(-dt * dt * cs));
        Segment { u, du, d2u }
    }

    fn initial_mode(&self) -> Ket {
        let w = self.omega_start;
        Ket::new(C64::new(1.0 / (2.0 * w).sqrt(), 0.0), C64::new(0.0, -(0.5 * w).sqrt()))
    }

    /// Projection of `(f, f')` onto the negative-frequency mode of the final trap.
    fn beta_bra(&self) -> Bra {
        let w = self.omega_target;
        let norm = 1.0 / (2.0 * w).sqrt();
        Bra::new(C64::new(w * norm, 0.0), C64::new(0.0, -norm))
    }

    fn alpha_bra(&self) -> Bra {
        let w = self.omega_target;
        let norm = 1.0 / (2.0 * w).sqrt();
        Bra::new(C64::new(w * norm, 0.0), C64::new(0.0, norm))
    }

    pub(crate) fn check_len(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.n_pulses {
            return Err(Error::DimensionMismatch { expected: self.n_pulses, got: values.len() });
        }
        Ok(())
    }

    fn check_field(&self, field: &ControlField) -> Result<()> {
        self.check_len(field.values())?;
        super::check_duration(self.duration, field)
    }

    fn final_mode(&self, values: &[f64]) -> Result<Ket> {
        self.check_len(values)?;
        let mode = chain::propagate(values.iter().map(|&w| self.propagator(w)), self.initial_mode());
        if mode.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("mode-function propagation"));
        }
        Ok(mode)
    }

    pub fn bogoliubov_values(&self, values: &[f64]) -> Result<BogoliubovPair> {
        let mode = self.final_mode(values)?;
        Ok(BogoliubovPair { alpha: (self.alpha_bra() * mode)[(0, 0)], beta: (self.beta_bra() * mode)[(0, 0)] })
    }

    /// `|β|²` of raw amplitudes.
    pub fn infidelity_values(&self, values: &[f64]) -> Result<f64> {
        let mode = self.final_mode(values)?;
        Ok((self.beta_bra() * mode)[(0, 0)].norm_sqr())
    }

    fn derivatives(&self, values: &[f64], second: bool) -> Result<chain::ChainDerivatives> {
        self.check_len(values)?;
        let segments: Vec<Segment> = values.iter().map(|&w| self.segment(w)).collect();
        let d = chain::derivatives(&segments, self.beta_bra(), self.initial_mode(), second);
        if !d.amplitude.re.is_finite() || !d.amplitude.im.is_finite() {
            return Err(Error::NonFinite("mode-function propagation"));
        }
        Ok(d)
    }

    pub fn gradient_values(&self, values: &[f64]) -> Result<DVector<f64>> {
        Ok(chain::squared_modulus_gradient(&self.derivatives(values, false)?))
    }

    pub fn hessian_raw_values(&self, values: &[f64]) -> Result<DMatrix<f64>> {
        Ok(chain::squared_modulus_hessian(&self.derivatives(values, true)?))
    }
}

pub fn qho_propagate(problem: &QhoProblem, field: &ControlField) -> Result<BogoliubovPair> {
    problem.check_field(field)?;
    problem.bogoliubov_values(field.values())
}

/// `|β|²`
pub fn qho_infidelity(problem: &QhoProblem, field: &ControlField) -> Result<f64> {
    problem.check_field(field)?;
    problem.infidelity_values(field.values())
}

/// Final mean particle number `N0 (1 + 2|β|²) + |β|²`.
pub fn particle_number(problem: &QhoProblem, field: &ControlField) -> Result<f64> {
    let beta_sq = qho_infidelity(problem, field)?;
    Ok(problem.n_initial * (1.0 + 2.0 * beta_sq) + beta_sq)
}
