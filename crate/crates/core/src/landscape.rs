//! Hessian spectra of the control landscape: finite-difference Hessians,
//! symmetric eigendecomposition, null-subspace classification, eigenvector
//! error against a reference spectrum, and step-size calibration.

use nalgebra::{DMatrix, DVector, DVectorView};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::ControlField;
use crate::error::{Error, Result};
use crate::models::Problem;
use crate::navigation::{navigate, DirectionProvider, NavigationConfig};

/// Step of the four-point finite-difference stencil.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFd")]
pub struct FdConfig {
    epsilon: f64,
}

#[derive(Deserialize)]
struct RawFd {
    epsilon: f64,
}

impl TryFrom<RawFd> for FdConfig {
    type Error = Error;

    fn try_from(raw: RawFd) -> Result<Self> {
        FdConfig::new(raw.epsilon)
    }
}

impl FdConfig {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::Config(format!("FD step must be positive and finite, got {epsilon}")));
        }
        Ok(FdConfig { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// How the main-objective Hessian is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HessianMode {
    Exact,
    Fd(FdConfig),
}

impl HessianMode {
    pub fn fd(epsilon: f64) -> Result<Self> {
        Ok(HessianMode::Fd(FdConfig::new(epsilon)?))
    }
}

/// Rule separating non-null from null eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NullRule {
    /// Non-null iff `|λ| > tau_rel · |λ_max|`.
    Threshold(f64),
    /// Exactly the `r` largest-magnitude eigenvalues are non-null.
    Rank(usize),
}

impl Default for NullRule {
    fn default() -> Self {
        NullRule::Threshold(1e-6)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HessianSpectrum {
    eigenvalues: Vec<f64>,
    /// Eigenvectors stored as columns, in eigenvalue order.
    eigenvectors: DMatrix<f64>,
    null_mask: Option<Vec<bool>>,
}

impl HessianSpectrum {
    /// Builds a spectrum from given parts; columns of `eigenvectors` must be
    /// orthonormal and aligned with `eigenvalues`.
    pub fn from_parts(eigenvalues: Vec<f64>, eigenvectors: DMatrix<f64>) -> Result<Self> {
        let m = eigenvalues.len();
        if eigenvectors.nrows() != m || eigenvectors.ncols() != m {
            return Err(Error::DimensionMismatch { expected: m, got: eigenvectors.ncols() });
        }
        Ok(HessianSpectrum { eigenvalues, eigenvectors, null_mask: None })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn eigenvector(&self, i: usize) -> DVectorView<'_, f64> {
        self.eigenvectors.column(i)
    }

    pub fn null_mask(&self) -> Option<&[bool]> {
        self.null_mask.as_deref()
    }

    pub fn is_classified(&self) -> bool {
        self.null_mask.is_some()
    }

    pub fn non_null_indices(&self) -> Result<Vec<usize>> {
        let mask = self.null_mask.as_ref().ok_or(Error::Unclassified)?;
        Ok((0..mask.len()).filter(|&i| !mask[i]).collect())
    }

    pub fn null_indices(&self) -> Result<Vec<usize>> {
        let mask = self.null_mask.as_ref().ok_or(Error::Unclassified)?;
        Ok((0..mask.len()).filter(|&i| mask[i]).collect())
    }

    pub fn max_abs_eigenvalue(&self) -> f64 {
        self.eigenvalues.first().map_or(0.0, |l| l.abs())
    }

    /// `V Λ Vᵀ`
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let lambda = DMatrix::from_diagonal(&DVector::from_column_slice(&self.eigenvalues));
        &self.eigenvectors * lambda * self.eigenvectors.transpose()
    }
}

/// Four-point central-difference Hessian of `cost` at `point`.
///
/// Only the upper triangle is evaluated and mirrored; diagonal entries use the
/// three distinct points `ω ± 2ε e_i` and `ω`.
pub fn fd_hessian<F>(cost: F, point: &[f64], config: FdConfig) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let m = point.len();
    let eps = config.epsilon;
    let denom = 4.0 * eps * eps;
    let mut scratch = point.to_vec();
    let eval = |scratch: &mut Vec<f64>, di: usize, si: f64, dj: usize, sj: f64| -> Result<f64> {
        scratch[di] += si * eps;
        scratch[dj] += sj * eps;
        let v = cost(scratch);
        scratch[di] = point[di];
        scratch[dj] = point[dj];
        match v {
            Ok(v) if v.is_finite() => Ok(v),
            Ok(_) => Err(Error::NonFinite("finite-difference stencil")),
            Err(e) => Err(e),
        }
    };

    let centre = {
        let v = cost(point)?;
        if !v.is_finite() {
            return Err(Error::NonFinite("finite-difference stencil"));
        }
        v
    };

    let mut h = DMatrix::zeros(m, m);
    for i in 0..m {
        let plus = eval(&mut scratch, i, 1.0, i, 1.0)?;
        let minus = eval(&mut scratch, i, -1.0, i, -1.0)?;
        h[(i, i)] = (plus - 2.0 * centre + minus) / denom;
        for j in i + 1..m {
            let pp = eval(&mut scratch, i, 1.0, j, 1.0)?;
            let pm = eval(&mut scratch, i, 1.0, j, -1.0)?;
            let mp = eval(&mut scratch, i, -1.0, j, 1.0)?;
            let mm = eval(&mut scratch, i, -1.0, j, -1.0)?;
            let v = (pp - pm - mp + mm) / denom;
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    Ok(h)
}

const MAX_SWEEPS: usize = 100;

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations,
/// sorted by descending `|λ|`.
pub fn eig_sym(matrix: &DMatrix<f64>) -> Result<HessianSpectrum> {
    let m = matrix.nrows();
    if matrix.ncols() != m {
        return Err(Error::DimensionMismatch { expected: m, got: matrix.ncols() });
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("eigensolver input"));
    }
    let scale = matrix.amax().max(1.0);
    let asym = (matrix - matrix.transpose()).amax();
    if asym > 1e-8 * scale {
        return Err(Error::NotSymmetric(asym));
    }

    let mut a = (matrix + matrix.transpose()) * 0.5;
    let mut v = DMatrix::<f64>::identity(m, m);
    let norm = a.norm();
    let tol = 1e-12 * norm;

    let off_norm = |a: &DMatrix<f64>| {
        let mut s = 0.0;
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    s += a[(i, j)] * a[(i, j)];
                }
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    while off_norm(&a) > tol {
        if sweeps == MAX_SWEEPS {
            return Err(Error::NoConvergence(sweeps));
        }
        sweeps += 1;
        for p in 0..m {
            for q in p + 1..m {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut a, &mut v, p, q, c, s);
            }
        }
    }

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| a[(j, j)].abs().total_cmp(&a[(i, i)].abs()));
    let eigenvalues = order.iter().map(|&i| a[(i, i)]).collect();
    let eigenvectors = DMatrix::from_fn(m, m, |r, c| v[(r, order[c])]);
    Ok(HessianSpectrum { eigenvalues, eigenvectors, null_mask: None })
}

/// `A <- Jᵀ A J`, `V <- V J` for the plane rotation in (p, q).
fn rotate(a: &mut DMatrix<f64>, v: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    let m = a.nrows();
    for k in 0..m {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
    for k in 0..m {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
    for k in 0..m {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

pub fn classify_null(mut spectrum: HessianSpectrum, rule: NullRule) -> Result<HessianSpectrum> {
    let m = spectrum.dim();
    let mask = match rule {
        NullRule::Threshold(tau) => {
            let cut = tau * spectrum.max_abs_eigenvalue();
            spectrum.eigenvalues.iter().map(|l| l.abs() <= cut).collect()
        }
        NullRule::Rank(r) => {
            if r > m {
                return Err(Error::RankTooLarge { rank: r, dim: m });
            }
            (0..m).map(|i| i >= r).collect()
        }
    };
    spectrum.null_mask = Some(mask);
    Ok(spectrum)
}

/// `E_i = 1 - |v_i · ṽ_i|`, pairing vectors by eigenvalue order.
pub fn eigvec_error(exact: &HessianSpectrum, approx: &HessianSpectrum, i: usize) -> Result<f64> {
    let m = exact.dim();
    if approx.dim() != m {
        return Err(Error::DimensionMismatch { expected: m, got: approx.dim() });
    }
    if i >= m {
        return Err(Error::IndexOutOfRange { index: i, len: m });
    }
    let mask = exact.null_mask().ok_or(Error::Unclassified)?;
    if mask[i] {
        return Err(Error::NullIndex(i));
    }
    let li = exact.eigenvalues[i];
    let gap_tol = 1e-9 * exact.max_abs_eigenvalue();
    if exact.eigenvalues.iter().enumerate().any(|(j, &lj)| j != i && (lj - li).abs() <= gap_tol) {
        return Err(Error::Degenerate(i));
    }
    Ok((1.0 - exact.eigenvector(i).dot(&approx.eigenvector(i)).abs()).max(0.0))
}

/// Main-objective Hessian at raw amplitudes.
pub fn hessian(problem: &Problem, values: &[f64], mode: HessianMode) -> Result<DMatrix<f64>> {
    match mode {
        HessianMode::Exact => problem.hessian_values(values),
        HessianMode::Fd(cfg) => fd_hessian(|w| problem.infidelity_values(w), values, cfg),
    }
}

/// Hessian, eigendecomposition and null classification in one call.
pub fn spectrum_at(problem: &Problem, values: &[f64], mode: HessianMode, rule: NullRule) -> Result<HessianSpectrum> {
    classify_null(eig_sym(&hessian(problem, values, mode)?)?, rule)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationRow {
    pub epsilon: f64,
    pub final_infidelity: f64,
}

/// Final infidelity after navigating along the projection of a fixed
/// direction, once per FD step in `eps_grid`, each run restarted from
/// `solution`. Failed runs report an infinite infidelity.
pub fn calibrate_epsilon(
    problem: &Problem,
    solution: &ControlField,
    direction: &DVector<f64>,
    eps_grid: &[f64],
    steps: usize,
    h: f64,
) -> Result<Vec<CalibrationRow>> {
    problem.check_field(solution)?;
    if direction.len() != problem.n_pulses() {
        return Err(Error::DimensionMismatch { expected: problem.n_pulses(), got: direction.len() });
    }
    let provider = DirectionProvider::fixed(direction.clone())?;
    let start_infidelity = problem.infidelity(solution)?;
    let entry = NavigationConfig::default().entry_threshold;
    if start_infidelity >= entry {
        return Err(Error::NotASolution { infidelity: start_infidelity, threshold: entry });
    }
    let modes = eps_grid.iter().map(|&eps| HessianMode::fd(eps)).collect::<Result<Vec<_>>>()?;

    Ok(modes
        .into_par_iter()
        .zip(eps_grid.par_iter())
        .map(|(mode, &epsilon)| {
            let config = NavigationConfig {
                h,
                steps,
                hessian_mode: mode,
                abort_ceiling: f64::INFINITY,
                ..NavigationConfig::default()
            };
            let final_infidelity = match navigate(problem, solution, provider.clone(), &config) {
                Ok(traj) if traj.failure().is_none() => traj.last().infidelity,
                _ => f64::INFINITY,
            };
            CalibrationRow { epsilon, final_infidelity }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(d: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(d))
    }

    #[test]
    fn fd_is_exact_on_quadratics() {
        let a = [0.5, -2.0, 3.0];
        let cost = |w: &[f64]| Ok(w.iter().zip(&a).map(|(x, c)| c * x * x).sum::<f64>());
        for &eps in &[1e-3, 0.1, 1.0] {
            let h = fd_hessian(cost, &[0.3, -1.2, 2.0], FdConfig::new(eps).unwrap()).unwrap();
            let expect = diag(&[1.0, -4.0, 6.0]);
            assert!((h - expect).amax() < 1e-8, "eps = {eps}");
        }
    }

    #[test]
    fn fd_bilinear() {
        let cost = |w: &[f64]| Ok(w[0] * w[1]);
        let h = fd_hessian(cost, &[0.0, 0.0], FdConfig::new(0.5).unwrap()).unwrap();
        assert_eq!(h[(0, 1)], 1.0);
        assert_eq!(h[(1, 0)], 1.0);
        assert_eq!(h[(0, 0)], 0.0);
    }

    #[test]
    fn fd_non_finite_cost() {
        let cost = |w: &[f64]| Ok(1.0 / w[0]);
        let err = fd_hessian(cost, &[0.1], FdConfig::new(0.05).unwrap()).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn fd_config_rejects_bad_steps() {
        assert!(FdConfig::new(0.0).is_err());
        assert!(FdConfig::new(-1e-3).is_err());
        assert!(FdConfig::new(f64::NAN).is_err());
    }

    #[test]
    fn eig_identity() {
        let s = eig_sym(&DMatrix::identity(4, 4)).unwrap();
        assert!(s.eigenvalues().iter().all(|&l| l == 1.0));
        let v = s.eigenvectors();
        assert!((v.transpose() * v - DMatrix::identity(4, 4)).amax() < 1e-15);
    }

    #[test]
    fn eig_diagonal_order() {
        let s = eig_sym(&diag(&[0.0, -2.0, 3.0])).unwrap();
        assert_eq!(s.eigenvalues(), &[3.0, -2.0, 0.0]);
        assert_eq!(s.eigenvector(0).abs(), DVector::from_column_slice(&[0.0, 0.0, 1.0]));
        assert_eq!(s.eigenvector(1).abs(), DVector::from_column_slice(&[0.0, 1.0, 0.0]));
        assert_eq!(s.eigenvector(2).abs(), DVector::from_column_slice(&[1.0, 0.0, 0.0]));
    }

    #[test]
    fn eig_rejects_asymmetric() {
        let mut a = DMatrix::identity(3, 3);
        a[(0, 1)] = 1.0;
        assert!(matches!(eig_sym(&a), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn classify_threshold_and_rank() {
        let s = eig_sym(&diag(&[1.0, 0.5, 1e-12])).unwrap();
        let t = classify_null(s.clone(), NullRule::Threshold(1e-6)).unwrap();
        assert_eq!(t.non_null_indices().unwrap(), vec![0, 1]);
        let r = classify_null(s.clone(), NullRule::Rank(2)).unwrap();
        assert_eq!(r.non_null_indices().unwrap(), vec![0, 1]);
        assert!(matches!(classify_null(s, NullRule::Rank(4)), Err(Error::RankTooLarge { .. })));

        let z = classify_null(eig_sym(&DMatrix::zeros(3, 3)).unwrap(), NullRule::default()).unwrap();
        assert!(z.non_null_indices().unwrap().is_empty());
    }

    #[test]
    fn eigvec_error_sign_invariant() {
        let exact = classify_null(eig_sym(&diag(&[2.0, 1.0, 0.0])).unwrap(), NullRule::Rank(2)).unwrap();
        assert_eq!(eigvec_error(&exact, &exact, 0).unwrap(), 0.0);
        let flipped = HessianSpectrum::from_parts(exact.eigenvalues().to_vec(), -exact.eigenvectors().clone()).unwrap();
        assert_eq!(eigvec_error(&exact, &flipped, 0).unwrap(), 0.0);
        assert_eq!(eigvec_error(&exact, &flipped, 1).unwrap(), 0.0);
        assert!(matches!(eigvec_error(&exact, &exact, 2), Err(Error::NullIndex(2))));
        let unclassified = eig_sym(&diag(&[2.0, 1.0, 0.0])).unwrap();
        assert!(matches!(eigvec_error(&unclassified, &exact, 0), Err(Error::Unclassified)));
    }

    #[test]
    fn eigvec_error_degenerate_guard() {
        let exact = classify_null(eig_sym(&diag(&[1.0, 1.0, 0.0])).unwrap(), NullRule::Rank(2)).unwrap();
        assert!(matches!(eigvec_error(&exact, &exact, 0), Err(Error::Degenerate(0))));
    }

    #[test]
    fn hessian_mode_json() {
        let m: HessianMode = serde_json::from_str(r#"{"fd":{"epsilon":0.01}}"#).unwrap();
        assert_eq!(m, HessianMode::fd(0.01).unwrap());
        let e: HessianMode = serde_json::from_str(r#""exact""#).unwrap();
        assert_eq!(e, HessianMode::Exact);
        assert!(serde_json::from_str::<HessianMode>(r#"{"fd":{"epsilon":-1}}"#).is_err());
    }
}
