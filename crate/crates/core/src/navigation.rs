//! Fidelity-preserving motion on the solution submanifold.
//!
//! A direction is projected onto the null subspace of the main-objective
//! Hessian and the resulting flow `dω/dζ = P a` is integrated with classical
//! RK4. The spectrum is recomputed at every stage point.

use std::io::Write;

use nalgebra::DVector;
use serde::Serialize;

use crate::control::ControlField;
use crate::error::{Error, Result};
use crate::landscape::{spectrum_at, HessianMode, HessianSpectrum, NullRule};
use crate::models::{Problem, SOLUTION_THRESHOLD};

/// A cost whose gradient drives secondary-objective navigation.
pub trait SecondaryObjective: Sync {
    fn cost(&self, values: &[f64]) -> Result<f64>;
    fn gradient(&self, values: &[f64]) -> Result<DVector<f64>>;
}

#[derive(Clone)]
pub enum DirectionProvider<'a> {
    /// Follow the single null eigenvector, keeping its sign continuous.
    NullFollow { previous: Option<DVector<f64>> },
    /// Project a constant vector.
    FixedVector { a: DVector<f64> },
    /// Descend the secondary objective: project `-∇C`.
    SecondaryGradient { objective: &'a dyn SecondaryObjective },
}

impl std::fmt::Debug for DirectionProvider<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DirectionProvider::NullFollow { previous } => {
                f.debug_struct("NullFollow").field("previous", previous).finish()
            }
            DirectionProvider::FixedVector { a } => f.debug_struct("FixedVector").field("a", a).finish(),
            DirectionProvider::SecondaryGradient { .. } => f.write_str("SecondaryGradient"),
        }
    }
}

impl<'a> DirectionProvider<'a> {
    pub fn null_follow() -> Self {
        DirectionProvider::NullFollow { previous: None }
    }

    pub fn fixed(a: DVector<f64>) -> Result<Self> {
        if a.norm() == 0.0 || a.iter().any(|v| !v.is_finite()) {
            return Err(Error::ZeroDirection);
        }
        Ok(DirectionProvider::FixedVector { a })
    }

    pub fn secondary(objective: &'a dyn SecondaryObjective) -> Self {
        DirectionProvider::SecondaryGradient { objective }
    }

    fn objective(&self) -> Option<&'a dyn SecondaryObjective> {
        match self {
            DirectionProvider::SecondaryGradient { objective } => Some(*objective),
            _ => None,
        }
    }

    /// Unprojected direction at `values`; `reference` fixes the sign of null
    /// eigenvectors.
    fn raw_direction(
        &self,
        values: &[f64],
        spectrum: &HessianSpectrum,
        reference: Option<&DVector<f64>>,
    ) -> Result<DVector<f64>> {
        match self {
            DirectionProvider::NullFollow { previous } => null_direction(spectrum, reference.or(previous.as_ref())),
            DirectionProvider::FixedVector { a } => Ok(a.clone()),
            DirectionProvider::SecondaryGradient { objective } => Ok(-objective.gradient(values)?),
        }
    }
}

/// `Pa = a - Σ_{non-null i} v_i (a · v_i)`
pub fn project(a: &DVector<f64>, spectrum: &HessianSpectrum) -> Result<DVector<f64>> {
    if a.len() != spectrum.dim() {
        return Err(Error::DimensionMismatch { expected: spectrum.dim(), got: a.len() });
    }
    let mut out = a.clone();
    for i in spectrum.non_null_indices()? {
        let v = spectrum.eigenvector(i);
        let c = v.dot(a);
        out.axpy(-c, &v, 1.0);
    }
    Ok(out)
}

/// Unit null eigenvector with sign chosen so that its dot product with
/// `previous` is non-negative.
pub fn null_direction(spectrum: &HessianSpectrum, previous: Option<&DVector<f64>>) -> Result<DVector<f64>> {
    let null = spectrum.null_indices()?;
    if null.len() != 1 {
        return Err(Error::NullDimension(null.len()));
    }
    let v: DVector<f64> = spectrum.eigenvector(null[0]).normalize();
    match previous {
        Some(p) if p.dot(&v) < 0.0 => Ok(-v),
        _ => Ok(v),
    }
}

/// One classical Runge-Kutta step of `dy/dζ = f(y)`.
pub fn rk4_step<F>(f: &mut F, y: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    let k1 = f(y)?;
    let k2 = f(&(y + &k1 * (0.5 * h)))?;
    let k3 = f(&(y + &k2 * (0.5 * h)))?;
    let k4 = f(&(y + &k3 * h))?;
    Ok(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavigationConfig {
    pub h: f64,
    pub steps: usize,
    pub hessian_mode: HessianMode,
    pub null_rule: NullRule,
    /// The start must have infidelity below this.
    pub entry_threshold: f64,
    /// Runs stop with a failure flag once infidelity exceeds this.
    pub abort_ceiling: f64,
}

impl Default for NavigationConfig {
    fn default() -> Self {
        NavigationConfig {
            h: 0.01,
            steps: 1000,
            hessian_mode: HessianMode::Exact,
            null_rule: NullRule::Rank(2),
            entry_threshold: SOLUTION_THRESHOLD,
            abort_ceiling: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub zeta: f64,
    pub field: ControlField,
    pub infidelity: f64,
    pub secondary_cost: Option<f64>,
}

#[derive(Serialize)]
struct SampleRecord<'a> {
    zeta: f64,
    values: &'a [f64],
    infidelity: f64,
    secondary: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    samples: Vec<Sample>,
    hessian_mode: HessianMode,
    failure: Option<String>,
    max_step_increase: f64,
}

impl Trajectory {
    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn hessian_mode(&self) -> HessianMode {
        self.hessian_mode
    }

    /// Why the run stopped early, if it did.
    pub fn failure(&self) -> Option<&str> {
        self.failure.as_deref()
    }

    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory always holds the start sample")
    }

    /// Largest single-step increase in infidelity.
    pub fn max_step_increase(&self) -> f64 {
        self.max_step_increase
    }

    pub fn max_infidelity(&self) -> f64 {
        self.samples.iter().map(|s| s.infidelity).fold(0.0, f64::max)
    }

    /// One JSON object per sample: `{"zeta", "values", "infidelity", "secondary"}`.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for s in &self.samples {
            let rec = SampleRecord {
                zeta: s.zeta,
                values: s.field.values(),
                infidelity: s.infidelity,
                secondary: s.secondary_cost,
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Integrates the projected flow from `start` for `config.steps` RK4 steps.
///
/// Precondition failures are errors. Breakdowns during the run (non-finite
/// state, infidelity above the abort ceiling, ill-defined null direction)
/// end the run early and are reported through [`Trajectory::failure`].
pub fn navigate(
    problem: &Problem,
    start: &ControlField,
    provider: DirectionProvider<'_>,
    config: &NavigationConfig,
) -> Result<Trajectory> {
    problem.check_field(start)?;
    if !(config.h.is_finite() && config.h > 0.0) {
        return Err(Error::Config(format!("step size must be positive, got {}", config.h)));
    }
    let start_infidelity = problem.infidelity(start)?;
    if start_infidelity.is_nan() || start_infidelity >= config.entry_threshold {
        return Err(Error::NotASolution { infidelity: start_infidelity, threshold: config.entry_threshold });
    }

    let objective = provider.objective();
    let secondary = |values: &[f64]| objective.map(|o| o.cost(values)).transpose();

    let mut samples = Vec::with_capacity(config.steps + 1);
    samples.push(Sample {
        zeta: 0.0,
        field: start.clone(),
        infidelity: start_infidelity,
        secondary_cost: secondary(start.values())?,
    });

    let mut previous = match &provider {
        DirectionProvider::NullFollow { previous } => previous.clone(),
        _ => None,
    };
    let mut y = DVector::from_column_slice(start.values());
    let mut last_infidelity = start_infidelity;
    let mut max_step_increase = 0.0_f64;
    let mut failure = None;

    for step in 1..=config.steps {
        // The first stage's direction becomes the sign reference for the rest
        // of this step and for the next step.
        let mut stage_reference: Option<DVector<f64>> = previous.clone();
        let mut first_stage = true;
        let mut flow = |w: &DVector<f64>| -> Result<DVector<f64>> {
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("navigation state"));
            }
            let spectrum = spectrum_at(problem, w.as_slice(), config.hessian_mode, config.null_rule)?;
            let a = provider.raw_direction(w.as_slice(), &spectrum, stage_reference.as_ref())?;
            let d = project(&a, &spectrum)?;
            if first_stage {
                if matches!(provider, DirectionProvider::NullFollow { .. }) {
                    stage_reference = Some(d.clone());
                }
                first_stage = false;
            }
            Ok(d)
        };

        let next = match rk4_step(&mut flow, &y, config.h) {
            Ok(next) => next,
            Err(e) => {
                failure = Some(format!("step {step}: {e}"));
                break;
            }
        };
        if matches!(provider, DirectionProvider::NullFollow { .. }) {
            previous = stage_reference;
        }

        let field = match start.with_values(next.as_slice().to_vec()) {
            Ok(f) => f,
            Err(e) => {
                failure = Some(format!("step {step}: {e}"));
                break;
            }
        };
        let infidelity = match problem.infidelity(&field) {
            Ok(v) => v,
            Err(e) => {
                failure = Some(format!("step {step}: {e}"));
                break;
            }
        };
        max_step_increase = max_step_increase.max(infidelity - last_infidelity);
        last_infidelity = infidelity;
        samples.push(Sample {
            zeta: step as f64 * config.h,
            secondary_cost: secondary(field.values())?,
            field,
            infidelity,
        });
        y = next;

        if infidelity > config.abort_ceiling {
            failure = Some(format!(
                "step {step}: infidelity {infidelity:e} exceeds abort ceiling {:e}",
                config.abort_ceiling
            ));
            break;
        }
    }

    Ok(Trajectory { samples, hessian_mode: config.hessian_mode, failure, max_step_increase })
}
