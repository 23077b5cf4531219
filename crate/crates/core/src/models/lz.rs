//! Two-level Landau-Zener model `H = (Δ/2) σx + ω σz`, driven from |0⟩ to |1⟩.

use nalgebra::{DMatrix, DVector, Matrix2};
use serde::{Deserialize, Serialize};

use super::chain::{self, Bra, Ket, Mat2, Segment};
use crate::control::{ControlField, C64};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLz")]
pub struct LzProblem {
    #[serde(rename = "delta")]
    gap: f64,
    #[serde(rename = "T")]
    duration: f64,
    #[serde(rename = "M")]
    n_pulses: usize,
}

#[derive(Deserialize)]
struct RawLz {
    delta: f64,
    #[serde(rename = "T")]
    duration: f64,
    #[serde(rename = "M")]
    n_pulses: usize,
}

impl TryFrom<RawLz> for LzProblem {
    type Error = Error;

    fn try_from(raw: RawLz) -> Result<Self> {
        LzProblem::new(raw.delta, raw.duration, raw.n_pulses)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LzPropagation {
    pub unitary: Mat2,
    /// ⟨1|U_T|0⟩
    pub overlap: C64,
}

impl LzProblem {
    pub fn new(gap: f64, duration: f64, n_pulses: usize) -> Result<Self> {
        if !(gap.is_finite() && gap > 0.0) {
            return Err(Error::InvalidProblem(format!("gap must be positive, got {gap}")));
        }
        if !(duration.is_finite() && duration > 0.0) {
            return Err(Error::InvalidProblem(format!("duration must be positive, got {duration}")));
        }
        if n_pulses == 0 {
            return Err(Error::InvalidProblem("at least one pulse is required".into()));
        }
        Ok(LzProblem { gap, duration, n_pulses })
    }

    pub fn gap(&self) -> f64 {
        self.gap
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

    pub fn hamiltonian(&self, omega: f64) -> Mat2 {
        let half_gap = C64::new(0.5 * self.gap, 0.0);
        Matrix2::new(C64::new(omega, 0.0), half_gap, half_gap, C64::new(-omega, 0.0))
    }

    /// Interval propagator alone, for cost evaluation.
    pub(crate) fn propagator(&self, omega: f64) -> Mat2 {
        let dt = self.dt();
        let r = (0.25 * self.gap * self.gap + omega * omega).sqrt();
        let (sn, cs) = (r * dt).sin_cos();
        let g = sn / r;
        Matrix2::new(
            C64::new(cs, -g * omega),
            C64::new(0.0, -g * 0.5 * self.gap),
            C64::new(0.0, -g * 0.5 * self.gap),
            C64::new(cs, g * omega),
        )
    }

    /// Closed-form `exp(-i H(ω) dt) = cos(r dt) I - i sin(r dt)/r H(ω)`,
    /// with `r = sqrt(Δ²/4 + ω²)`, and its first two ω-derivatives.
    pub(crate) fn segment(&self, omega: f64) -> Segment {
        let dt = self.dt();
        let quarter_gap_sq = 0.25 * self.gap * self.gap;
        let r = (quarter_gap_sq + omega * omega).sqrt();
        let x = r * dt;
        let (s0, s1, s2) = chain::sinc_with_derivatives(x);
        let (sn, cs) = x.sin_cos();

        let r1 = omega / r;
        let r2 = quarter_gap_sq / (r * r * r);

        let c0 = cs;
        let c1 = -dt * sn * r1;
        let c2 = -dt * dt * cs * r1 * r1 - dt * sn * r2;

        // g = sin(r dt) / r
        let g0 = dt * s0;
        let g1 = dt * dt * s1 * r1;
        let g2 = dt * dt * dt * s2 * r1 * r1 + dt * dt * s1 * r2;

        let h = self.hamiltonian(omega);
        let sz = Matrix2::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(-1.0, 0.0));
        let id = Mat2::identity();
        let mi = C64::new(0.0, -1.0);

        Segment {
            u: id * C64::new(c0, 0.0) + (h * C64::new(g0, 0.0)) * mi,
            du: id * C64::new(c1, 0.0) + (h * C64::new(g1, 0.0) + sz * C64::new(g0, 0.0)) * mi,
            d2u: id * C64::new(c2, 0.0) + (h * C64::new(g2, 0.0) + sz * C64::new(2.0 * g1, 0.0)) * mi,
        }
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

    fn unitary(&self, values: &[f64]) -> Mat2 {
        values.iter().fold(Mat2::identity(), |acc, &w| self.propagator(w) * acc)
    }

    /// Infidelity of raw amplitudes, evaluated as `|⟨0|U_T|0⟩|²`, which equals
    /// `1 - |⟨1|U_T|0⟩|²` for unitary `U_T` without cancellation near solutions.
    pub fn infidelity_values(&self, values: &[f64]) -> Result<f64> {
        self.check_len(values)?;
        let state = chain::propagate(values.iter().map(|&w| self.propagator(w)), ground());
        let p = state[0].norm_sqr();
        if !p.is_finite() {
            return Err(Error::NonFinite("Landau-Zener propagation"));
        }
        Ok(p)
    }

    fn derivatives(&self, values: &[f64], second: bool) -> Result<chain::ChainDerivatives> {
        self.check_len(values)?;
        let segments: Vec<Segment> = values.iter().map(|&w| self.segment(w)).collect();
        let bra = Bra::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0));
        let d = chain::derivatives(&segments, bra, ground(), second);
        if !d.amplitude.re.is_finite() || !d.amplitude.im.is_finite() {
            return Err(Error::NonFinite("Landau-Zener propagation"));
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

fn ground() -> Ket {
    Ket::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0))
}

pub fn lz_propagate(problem: &LzProblem, field: &ControlField) -> Result<LzPropagation> {
    problem.check_field(field)?;
    let unitary = problem.unitary(field.values());
    if unitary.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("Landau-Zener propagation"));
    }
    Ok(LzPropagation { unitary, overlap: unitary[(1, 0)] })
}

/// `1 - |⟨1|U_T|0⟩|²`
pub fn lz_infidelity(problem: &LzProblem, field: &ControlField) -> Result<f64> {
    problem.check_field(field)?;
    problem.infidelity_values(field.values())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn pi_pulse_is_sigma_x_rotation() {
        let p = LzProblem::new(1.0, PI, 1).unwrap();
        let f = ControlField::new(vec![0.0], PI).unwrap();
        let prop = lz_propagate(&p, &f).unwrap();
        let expect = Matrix2::new(C64::new(0.0, 0.0), C64::new(0.0, -1.0), C64::new(0.0, -1.0), C64::new(0.0, 0.0));
        assert!((prop.unitary - expect).norm() < 1e-15);
        assert!((prop.overlap.norm() - 1.0).abs() < 1e-15);
        assert!(lz_infidelity(&p, &f).unwrap() <= 1e-12);
    }

    #[test]
    fn half_rabi_rotation() {
        let p = LzProblem::new(1.0, PI / 2.0, 1).unwrap();
        let f = ControlField::new(vec![0.0], PI / 2.0).unwrap();
        let prop = lz_propagate(&p, &f).unwrap();
        assert!((prop.overlap.norm_sqr() - 0.5).abs() < 1e-15);
        assert!((lz_infidelity(&p, &f).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn short_protocol_does_nothing() {
        let p = LzProblem::new(1.0, 1e-9, 3).unwrap();
        let f = ControlField::new(vec![2.0, -1.0, 4.0], 1e-9).unwrap();
        assert!((lz_infidelity(&p, &f).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fast_propagator_matches_segment() {
        let p = LzProblem::new(2.0, 1.8, 6).unwrap();
        for &w in &[-5.0, -0.3, 0.0, 2.5, 40.0] {
            assert!((p.propagator(w) - p.segment(w).u).norm() < 1e-15, "omega = {w}");
        }
    }

    #[test]
    fn segments_are_unitary() {
        let p = LzProblem::new(1.0, 1.8, 6).unwrap();
        for &w in &[-5.0, -0.3, 0.0, 1e-9, 2.5, 40.0] {
            let u = p.segment(w).u;
            assert!((u.adjoint() * u - Mat2::identity()).norm() < 1e-14, "omega = {w}");
        }
    }

    #[test]
    fn mismatched_field_is_rejected() {
        let p = LzProblem::new(1.0, 1.8, 3).unwrap();
        let short = ControlField::new(vec![1.0, 2.0], 1.8).unwrap();
        let wrong_t = ControlField::new(vec![1.0, 2.0, 3.0], 2.0).unwrap();
        assert!(matches!(lz_infidelity(&p, &short), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(lz_infidelity(&p, &wrong_t), Err(Error::DurationMismatch { .. })));
    }

    #[test]
    fn problem_validation() {
        assert!(LzProblem::new(0.0, 1.0, 3).is_err());
        assert!(LzProblem::new(1.0, 0.0, 3).is_err());
        assert!(LzProblem::new(1.0, 1.0, 0).is_err());
    }
}
