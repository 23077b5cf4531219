//! Piecewise-constant control fields and their discrete Fourier transform.
//!
//! A field is `M` amplitudes held for `dt = T / M` each. The time step is
//! always derived from the stored duration, never stored on its own.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawField")]
pub struct ControlField {
    #[serde(rename = "T")]
    total_time: f64,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct RawField {
    #[serde(rename = "T")]
    total_time: f64,
    values: Vec<f64>,
}

impl TryFrom<RawField> for ControlField {
    type Error = Error;

    fn try_from(raw: RawField) -> Result<Self> {
        ControlField::new(raw.values, raw.total_time)
    }
}

impl ControlField {
    pub fn new(values: Vec<f64>, total_time: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidField("at least one amplitude is required".into()));
        }
        if !(total_time.is_finite() && total_time > 0.0) {
            return Err(Error::InvalidField(format!("duration must be positive, got {total_time}")));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidField(format!("amplitude {i} is not finite")));
        }
        Ok(ControlField { total_time, values })
    }

    /// Constant field with `m` pulses of amplitude `value`.
    pub fn constant(value: f64, m: usize, total_time: f64) -> Result<Self> {
        Self::new(vec![value; m], total_time)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total_time(&self) -> f64 {
        self.total_time
    }

    pub fn dt(&self) -> f64 {
        self.total_time / self.values.len() as f64
    }

    /// Same duration, new amplitudes.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(values, self.total_time)
    }

    /// Every pulse split into `factor` equal sub-pulses of the same amplitude.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        let values = self.values.iter().flat_map(|&v| std::iter::repeat_n(v, factor)).collect();
        Self::new(values, self.total_time)
    }
}

/// DFT indices retained by the Fourier-compression cost.
///
/// `requested` is what the user asked for; `kept` is the set actually used.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencySpec {
    dim: usize,
    requested: BTreeSet<usize>,
    kept: BTreeSet<usize>,
}

impl FrequencySpec {
    /// Closes `requested` under `k -> (M - k) mod M` and adds index 0, so the
    /// kept set is attainable by real-valued fields.
    pub fn closed(requested: &[usize], dim: usize) -> Result<Self> {
        let requested = Self::validate(requested, dim)?;
        let mut kept: BTreeSet<usize> = requested.iter().flat_map(|&k| [k, (dim - k) % dim]).collect();
        kept.insert(0);
        Ok(FrequencySpec { dim, requested, kept })
    }

    /// Uses `requested` verbatim, without mirror closure or the zero index.
    pub fn strict(requested: &[usize], dim: usize) -> Result<Self> {
        let requested = Self::validate(requested, dim)?;
        Ok(FrequencySpec { dim, kept: requested.clone(), requested })
    }

    fn validate(requested: &[usize], dim: usize) -> Result<BTreeSet<usize>> {
        if dim == 0 {
            return Err(Error::InvalidField("frequency spec needs M >= 1".into()));
        }
        match requested.iter().find(|&&k| k >= dim) {
            Some(&k) => Err(Error::IndexOutOfRange { index: k, len: dim }),
            None => Ok(requested.iter().copied().collect()),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn requested(&self) -> &BTreeSet<usize> {
        &self.requested
    }

    pub fn kept(&self) -> &BTreeSet<usize> {
        &self.kept
    }

    pub fn contains(&self, k: usize) -> bool {
        self.kept.contains(&k)
    }

    /// Indices penalized by the compression cost.
    pub fn excluded(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.dim).filter(|k| !self.kept.contains(k))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    components: Vec<C64>,
}

impl Spectrum {
    pub fn components(&self) -> &[C64] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// |X_k|^2
    pub fn power(&self, k: usize) -> Result<f64> {
        self.components
            .get(k)
            .map(|x| x.norm_sqr())
            .ok_or(Error::IndexOutOfRange { index: k, len: self.components.len() })
    }
}

pub fn dft(field: &ControlField) -> Spectrum {
    dft_values(field.values())
}

/// Direct O(M^2) transform `X_k = sum_n x_n exp(-2 pi i k n / M)`.
pub fn dft_values(x: &[f64]) -> Spectrum {
    let m = x.len();
    let components = (0..m)
        .map(|k| {
            x.iter().enumerate().fold(C64::new(0.0, 0.0), |acc, (n, &xn)| {
                // reduce kn mod M before scaling to keep the phase argument small
                let phase = -2.0 * PI * ((k * n) % m) as f64 / m as f64;
                acc + C64::from_polar(xn, phase)
            })
        })
        .collect();
    Spectrum { components }
}
