#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix, DVector, Matrix2, Vector2};
use qcl::control::ControlField;
use qcl::models::{LzProblem, Problem, QhoProblem};
use qcl::optimizer::{minimize, sample_seeds, SeedSpec};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type C64 = Complex<f64>;

pub const LOOP_T: f64 = 1.4 * PI / 2.0;

pub fn lz(gap: f64, t: f64, m: usize) -> Problem {
    LzProblem::new(gap, t, m).unwrap().into()
}

pub fn qho(t: f64, m: usize) -> Problem {
    QhoProblem::with_defaults(t, m).unwrap().into()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_field(rng: &mut ChaCha8Rng, problem: &Problem) -> ControlField {
    let (lo, hi) = match problem {
        Problem::Lz(_) => (-5.0, 5.0),
        Problem::Qho(_) => (0.1, 3.0),
    };
    let values = (0..problem.n_pulses()).map(|_| rng.gen_range(lo..hi)).collect();
    ControlField::new(values, problem.duration()).unwrap()
}

/// Converged fields from a deterministic seed population, tightly minimized.
pub fn solutions(problem: &Problem, wanted: usize, rng_seed: u64) -> Vec<ControlField> {
    let (lo, hi) = match problem {
        Problem::Lz(_) => (-5.0, 5.0),
        Problem::Qho(_) => (0.1, 3.0),
    };
    let mut found = Vec::new();
    let mut batch = 0;
    while found.len() < wanted {
        assert!(batch < 50, "too few converged seeds");
        let spec = SeedSpec { count: wanted, bounds: (lo, hi), rng_seed: rng_seed + (batch * wanted) as u64 };
        for seed in sample_seeds(&spec, problem).unwrap() {
            let r = minimize(problem, &seed, 1e-20, 200_000).unwrap();
            if r.converged && found.len() < wanted {
                found.push(r.field);
            }
        }
        batch += 1;
    }
    found
}

fn rk4<S, F>(y: S, t_end: f64, steps: usize, f: F) -> S
where
    S: Copy + std::ops::Add<Output = S> + std::ops::Mul<C64, Output = S>,
    F: Fn(S) -> S,
{
    let h = t_end / steps as f64;
    let hc = C64::new(h, 0.0);
    let half = C64::new(0.5, 0.0);
    let sixth = C64::new(1.0 / 6.0, 0.0);
    let two = C64::new(2.0, 0.0);
    let mut y = y;
    for _ in 0..steps {
        let k1 = f(y);
        let k2 = f(y + k1 * (hc * half));
        let k3 = f(y + k2 * (hc * half));
        let k4 = f(y + k3 * hc);
        y = y + (k1 + k2 * two + k3 * two + k4) * (hc * sixth);
    }
    y
}

/// `U_T` by integrating `i dU/dt = H U` with a dense RK4 grid inside each interval.
pub fn lz_unitary_by_ode(gap: f64, field: &ControlField, substeps: usize) -> Matrix2<C64> {
    let i = C64::new(0.0, 1.0);
    let mut u = Matrix2::<C64>::identity();
    for &w in field.values() {
        let h = Matrix2::new(C64::new(w, 0.0), C64::new(gap / 2.0, 0.0), C64::new(gap / 2.0, 0.0), C64::new(-w, 0.0));
        u = rk4(u, field.dt(), substeps, |u| -(h * u) * i);
    }
    u
}

/// `β` by integrating the classical mode equation `f'' = -ω(t)² f`.
pub fn qho_beta_by_ode(omega0: f64, omega_t: f64, field: &ControlField, substeps: usize) -> C64 {
    let i = C64::new(0.0, 1.0);
    let mut y = Vector2::new(C64::new(1.0 / (2.0 * omega0).sqrt(), 0.0), -i * (omega0 / 2.0).sqrt());
    for &w in field.values() {
        y = rk4(y, field.dt(), substeps, |y| Vector2::new(y[1], y[0] * C64::new(-w * w, 0.0)));
    }
    (y[0] * omega_t - i * y[1]) / (2.0 * omega_t).sqrt()
}

pub fn central_gradient(problem: &Problem, x: &[f64], step: f64) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        let mut p = x.to_vec();
        let mut q = x.to_vec();
        p[i] += step;
        q[i] -= step;
        (problem.infidelity_values(&p).unwrap() - problem.infidelity_values(&q).unwrap()) / (2.0 * step)
    })
}

/// Hessian by central differences of the exact gradient.
pub fn gradient_jacobian(problem: &Problem, x: &[f64], step: f64) -> DMatrix<f64> {
    let n = x.len();
    let mut h = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut p = x.to_vec();
        let mut q = x.to_vec();
        p[j] += step;
        q[j] -= step;
        let col = (problem.gradient_values(&p).unwrap() - problem.gradient_values(&q).unwrap()) / (2.0 * step);
        h.set_column(j, &col);
    }
    h
}
