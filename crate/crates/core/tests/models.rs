mod common;

use std::f64::consts::PI;

use common::*;
use qcl::control::ControlField;
use qcl::models::{lz_propagate, particle_number, qho_propagate, LzProblem, Problem, QhoProblem};
use qcl::Error;

#[test]
fn lz_unitary_matches_ode() {
    let mut r = rng(1);
    for m in [1, 3, 7] {
        let problem = LzProblem::new(2.0, 1.8, m).unwrap();
        for _ in 0..5 {
            let field = random_field(&mut r, &problem.into());
            let closed = lz_propagate(&problem, &field).unwrap().unitary;
            let ode = lz_unitary_by_ode(2.0, &field, 10_000);
            assert!((closed - ode).camax() < 1e-8, "M={m}: {}", (closed - ode).camax());
        }
    }
}

#[test]
fn qho_beta_matches_ode() {
    let mut r = rng(2);
    for m in [1, 4, 9] {
        let problem = QhoProblem::with_defaults(1.8, m).unwrap();
        for _ in 0..5 {
            let field = random_field(&mut r, &problem.into());
            let beta = qho_propagate(&problem, &field).unwrap().beta;
            let ode = qho_beta_by_ode(1.0, 1.0, &field, 10_000);
            assert!((beta - ode).norm() < 1e-8);
        }
    }
}

#[test]
fn qho_beta_matches_ode_with_distinct_trap_frequencies() {
    let problem = QhoProblem::new(0.7, 1.6, 0.0, 2.3, 5).unwrap();
    let field = ControlField::new(vec![0.4, 1.9, 2.2, 0.3, 1.1], 2.3).unwrap();
    let beta = qho_propagate(&problem, &field).unwrap().beta;
    let ode = qho_beta_by_ode(0.7, 1.6, &field, 10_000);
    assert!((beta - ode).norm() < 1e-8);
}

#[test]
fn lz_pi_and_half_pi_rotations() {
    // (Δ/2)σx for time π/Δ is a π rotation
    let problem = LzProblem::new(1.0, PI, 1).unwrap();
    let flip = ControlField::new(vec![0.0], PI).unwrap();
    assert!(Problem::from(problem).infidelity(&flip).unwrap() <= 1e-12);
    let half = ControlField::new(vec![0.0], PI).unwrap();
    let p2 = Problem::from(LzProblem::new(0.5, PI, 1).unwrap());
    assert!((p2.infidelity(&half).unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn lz_flip_time_bound() {
    // the polar angle moves at most at rate Δ, so I ≥ cos²(ΔT/2) when ΔT < π
    let mut r = rng(3);
    for (gap, t) in [(1.0, LOOP_T), (1.0, 1.8), (2.0, 1.0)] {
        let problem = lz(gap, t, 6);
        let bound = (gap * t / 2.0).cos().powi(2);
        for _ in 0..200 {
            let f = random_field(&mut r, &problem);
            assert!(problem.infidelity(&f).unwrap() >= bound - 1e-12);
        }
    }
}

#[test]
fn infidelity_is_invariant_under_refinement() {
    let mut r = rng(4);
    for problem in [lz(2.0, 1.8, 5), qho(1.8, 5)] {
        let f = random_field(&mut r, &problem);
        let fine = f.refined(4).unwrap();
        let fine_problem = problem.with_pulses(20).unwrap();
        let a = problem.infidelity(&f).unwrap();
        let b = fine_problem.infidelity(&fine).unwrap();
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn gradients_match_central_differences() {
    let mut r = rng(5);
    for problem in [lz(2.0, 1.8, 6), qho(1.8, 6), lz(1.0, 3.0, 2), qho(2.5, 11)] {
        for _ in 0..20 {
            let f = random_field(&mut r, &problem);
            let g = problem.exact_gradient(&f).unwrap();
            let fd = central_gradient(&problem, f.values(), 1e-5);
            assert!((&g - &fd).norm() <= 1e-6 * g.norm().max(1e-3));
        }
    }
}

#[test]
fn hessians_match_gradient_jacobian() {
    let mut r = rng(6);
    for problem in [lz(2.0, 1.8, 6), qho(1.8, 6)] {
        for _ in 0..20 {
            let f = random_field(&mut r, &problem);
            let h = problem.exact_hessian(&f).unwrap();
            let fd = gradient_jacobian(&problem, f.values(), 1e-5);
            assert!((&h - &fd).amax() <= 1e-6 * h.amax().max(1.0));
        }
    }
}

#[test]
fn raw_hessian_is_symmetric() {
    // upper and lower triangles come from independent propagation directions
    let mut r = rng(7);
    for problem in [lz(2.0, 1.8, 12), qho(1.8, 12)] {
        for _ in 0..20 {
            let f = random_field(&mut r, &problem);
            let raw = problem.hessian_raw_values(f.values()).unwrap();
            assert!((&raw - raw.transpose()).amax() <= 1e-8 * raw.amax().max(1.0));
        }
    }
}

#[test]
fn bogoliubov_normalization_and_particle_number() {
    let mut r = rng(8);
    for m in [1, 2, 17, 48] {
        let problem = QhoProblem::new(1.0, 1.0, 2.0, 1.8, m).unwrap();
        let f = random_field(&mut r, &problem.into());
        let pair = qho_propagate(&problem, &f).unwrap();
        assert!((pair.alpha.norm_sqr() - pair.beta.norm_sqr() - 1.0).abs() < 1e-10);
        let n = particle_number(&problem, &f).unwrap();
        let b2 = pair.beta.norm_sqr();
        assert!((n - (2.0 * (1.0 + 2.0 * b2) + b2)).abs() < 1e-12);
    }
}

#[test]
fn lz_unitarity() {
    let mut r = rng(9);
    let problem = LzProblem::new(2.0, 1.8, 24).unwrap();
    let f = random_field(&mut r, &problem.into());
    let u = lz_propagate(&problem, &f).unwrap().unitary;
    assert!((u.adjoint() * u - nalgebra::Matrix2::identity()).camax() < 1e-12);
}

#[test]
fn field_errors() {
    let problem = lz(2.0, 1.8, 3);
    let short = ControlField::new(vec![0.0; 2], 1.8).unwrap();
    assert!(matches!(problem.infidelity(&short), Err(Error::DimensionMismatch { .. })));
    let wrong_t = ControlField::new(vec![0.0; 3], 2.0).unwrap();
    assert!(matches!(problem.infidelity(&wrong_t), Err(Error::DurationMismatch { .. })));
    assert!(ControlField::new(vec![f64::NAN], 1.0).is_err());
    assert!(ControlField::new(vec![], 1.0).is_err());
    assert!(ControlField::new(vec![1.0], 0.0).is_err());
    assert!(LzProblem::new(2.0, 1.8, 0).is_err());
    assert!(QhoProblem::with_defaults(-1.0, 3).is_err());
}

#[test]
fn problem_json() {
    let p: Problem = serde_json::from_str(r#"{"model":"lz","delta":2.0,"T":1.8,"M":6}"#).unwrap();
    assert_eq!(p, lz(2.0, 1.8, 6));
    let q: Problem = serde_json::from_str(r#"{"model":"qho","T":1.8,"M":48}"#).unwrap();
    assert_eq!(q, qho(1.8, 48));
    let back: Problem = serde_json::from_str(&serde_json::to_string(&q).unwrap()).unwrap();
    assert_eq!(back, q);
    assert!(serde_json::from_str::<Problem>(r#"{"model":"lz","delta":2.0,"T":1.8,"M":0}"#).is_err());
}
