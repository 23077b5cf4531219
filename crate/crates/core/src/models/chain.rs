//! Amplitude `b = bra · U_M ⋯ U_1 · ket` of a product of 2×2 interval
//! propagators, and its first and second derivatives with respect to the
//! per-interval control amplitudes.

use nalgebra::{DMatrix, DVector, Matrix2, RowVector2, Vector2};

use crate::control::C64;

pub(crate) type Mat2 = Matrix2<C64>;
pub(crate) type Ket = Vector2<C64>;
pub(crate) type Bra = RowVector2<C64>;

/// Interval propagator with its first and second derivative in the amplitude.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Segment {
    pub u: Mat2,
    pub du: Mat2,
    pub d2u: Mat2,
}

pub(crate) fn propagate<I>(mats: I, ket: Ket) -> Ket
where
    I: IntoIterator<Item = Mat2>,
{
    mats.into_iter().fold(ket, |state, u| u * state)
}

pub(crate) struct ChainDerivatives {
    pub amplitude: C64,
    pub gradient: Vec<C64>,
    /// Upper triangle from forward propagation, lower triangle from backward
    /// propagation, diagonal from the second derivative of each interval.
    pub hessian: Option<DMatrix<C64>>,
}

pub(crate) fn derivatives(segments: &[Segment], bra: Bra, ket: Ket, second: bool) -> ChainDerivatives {
    let m = segments.len();

    // states[k] = U_{k-1} ⋯ U_0 ket
    let mut states = Vec::with_capacity(m + 1);
    states.push(ket);
    for seg in segments {
        let next = seg.u * states[states.len() - 1];
        states.push(next);
    }

    // costates[k] = bra · U_{m-1} ⋯ U_{k+1}
    let mut costates = vec![bra; m];
    for k in (0..m.saturating_sub(1)).rev() {
        costates[k] = costates[k + 1] * segments[k + 1].u;
    }

    let amplitude = (bra * states[m])[(0, 0)];
    let gradient = (0..m).map(|k| (costates[k] * segments[k].du * states[k])[(0, 0)]).collect();

    let hessian = second.then(|| {
        let mut h = DMatrix::from_element(m, m, C64::new(0.0, 0.0));
        for i in 0..m {
            h[(i, i)] = (costates[i] * segments[i].d2u * states[i])[(0, 0)];

            let mut forward = segments[i].du * states[i];
            for j in i + 1..m {
                h[(i, j)] = (costates[j] * segments[j].du * forward)[(0, 0)];
                forward = segments[j].u * forward;
            }

            let mut backward = costates[i] * segments[i].du;
            for j in (0..i).rev() {
                h[(i, j)] = (backward * segments[j].du * states[j])[(0, 0)];
                backward *= segments[j].u;
            }
        }
        h
    });

    ChainDerivatives { amplitude, gradient, hessian }
}

/// Gradient of `|b|^2`.
pub(crate) fn squared_modulus_gradient(d: &ChainDerivatives) -> DVector<f64> {
    DVector::from_iterator(d.gradient.len(), d.gradient.iter().map(|g| 2.0 * (d.amplitude.conj() * g).re))
}

/// Hessian of `|b|^2`, unsymmetrized.
pub(crate) fn squared_modulus_hessian(d: &ChainDerivatives) -> DMatrix<f64> {
    let h = d.hessian.as_ref().expect("second derivatives were not requested");
    let m = d.gradient.len();
    DMatrix::from_fn(m, m, |i, j| 2.0 * (d.gradient[i].conj() * d.gradient[j] + d.amplitude.conj() * h[(i, j)]).re)
}

/// `sin(x)/x` and its first two derivatives, with a series branch near zero
/// where the closed forms cancel catastrophically.
pub(crate) fn sinc_with_derivatives(x: f64) -> (f64, f64, f64) {
    let x2 = x * x;
    if x.abs() < 0.1 {
        let s0 = 1.0 - x2 / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0 * (1.0 - x2 / 72.0)));
        let s1 = x * (-1.0 / 3.0 + x2 * (1.0 / 30.0 + x2 * (-1.0 / 840.0 + x2 / 45360.0)));
        let s2 = -1.0 / 3.0 + x2 * (1.0 / 10.0 + x2 * (-1.0 / 168.0 + x2 / 6480.0));
        (s0, s1, s2)
    } else {
        let (s, c) = x.sin_cos();
        let s0 = s / x;
        let s1 = (x * c - s) / x2;
        let s2 = (2.0 * s - 2.0 * x * c - x2 * s) / (x2 * x);
        (s0, s1, s2)
    }
}
