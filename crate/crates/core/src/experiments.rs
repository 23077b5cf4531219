//! Experiment harness behind the `qcl` binary.
//!
//! Each experiment reads one JSON config, fills unset knobs with per-experiment
//! defaults and writes CSV tables or JSON-lines records into an output
//! directory. Apart from the wall-clock timings of `benchmark`, outputs are a
//! pure function of the config.

use std::f64::consts::PI;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{ControlField, FrequencySpec};
use crate::error::{Error, Result};
use crate::landscape::{
    calibrate_epsilon, classify_null, eig_sym, eigvec_error, hessian, spectrum_at, CalibrationRow, HessianMode,
    NullRule,
};
use crate::models::{LzProblem, Problem, QhoProblem, SOLUTION_THRESHOLD};
use crate::navigation::{navigate, DirectionProvider, NavigationConfig, Trajectory};
use crate::objectives::{compress, FourierObjective};
use crate::optimizer::{minimize_batch, sample_seeds, stream_rng, OptimizationReport, SeedSpec};

/// Gap used by the Landau-Zener presets. With `H = (Δ/2)σx + ωσz` the
/// shortest flip takes `π/Δ`, so `Δ = 2` puts `T = 1.4π/2` at 1.4 times it.
pub const LZ_PRESET_GAP: f64 = 2.0;
pub const LZ_LOOP_DURATION: f64 = 1.4 * PI / 2.0;
pub const DEFAULT_DURATION: f64 = 1.8;
pub const DEFAULT_RNG_SEED: u64 = 2020;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Optimize,
    Spectrum,
    FdError,
    Drive,
    Calibrate,
    Compress,
    Benchmark,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Optimize,
        Experiment::Spectrum,
        Experiment::FdError,
        Experiment::Drive,
        Experiment::Calibrate,
        Experiment::Compress,
        Experiment::Benchmark,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Optimize => "optimize",
            Experiment::Spectrum => "spectrum",
            Experiment::FdError => "fd-error",
            Experiment::Drive => "drive",
            Experiment::Calibrate => "calibrate",
            Experiment::Compress => "compress",
            Experiment::Benchmark => "benchmark",
        }
    }

    /// Problem used when the config does not name one.
    pub fn default_problem(self) -> Problem {
        let lz = |t, m| Problem::Lz(LzProblem::new(LZ_PRESET_GAP, t, m).expect("valid preset"));
        let qho = |m| Problem::Qho(QhoProblem::with_defaults(DEFAULT_DURATION, m).expect("valid preset"));
        match self {
            Experiment::Optimize | Experiment::Spectrum | Experiment::Drive => lz(LZ_LOOP_DURATION, 3),
            Experiment::FdError => lz(DEFAULT_DURATION, 6),
            Experiment::Calibrate => qho(6),
            Experiment::Compress => qho(48),
            Experiment::Benchmark => lz(DEFAULT_DURATION, 3),
        }
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment `{s}`")))
    }
}

/// One JSON document per run. Every knob is optional; unset knobs take the
/// defaults of the experiment being run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_rng_seed")]
    pub rng_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<Problem>,
    /// Benchmark and compress: run each of these models instead of `problem`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problems: Option<Vec<Problem>>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,

    /// Inline start field; takes precedence over `solutions`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<ControlField>,
    /// JSON-lines archive written by `optimize`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solutions: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_solutions: Option<usize>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hessian_mode: Option<HessianMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub null_rule: Option<NullRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directions: Option<usize>,

    /// Compression presets, one kept-frequency list each.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kept: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strict_frequencies: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare_exact: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_every: Option<usize>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_grid: Option<Vec<usize>>,
    /// Random fields timed per M.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_fields: Option<usize>,
}

fn default_rng_seed() -> u64 {
    DEFAULT_RNG_SEED
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config is valid")
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn problem_for(&self, experiment: Experiment) -> Problem {
        self.problem.unwrap_or_else(|| experiment.default_problem())
    }

    fn bounds_for(&self, problem: &Problem) -> (f64, f64) {
        self.bounds.unwrap_or(match problem {
            Problem::Lz(_) => (-5.0, 5.0),
            Problem::Qho(_) => (0.1, 3.0),
        })
    }

    fn tol(&self) -> f64 {
        self.tol.unwrap_or(1e-20)
    }

    fn max_iter(&self) -> usize {
        self.max_iter.unwrap_or(200_000)
    }
}

/// Summary echoed to stdout and stored as `manifest.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub experiment: &'static str,
    pub rng_seed: u64,
    pub config: ExperimentConfig,
    pub outputs: Vec<String>,
    pub summary: serde_json::Value,
}

pub fn run(experiment: Experiment, config: &ExperimentConfig, out_dir: &Path) -> Result<RunManifest> {
    fs::create_dir_all(out_dir)?;
    let mut outputs = Vec::new();
    let summary = match experiment {
        Experiment::Optimize => cmd_optimize(config, out_dir, &mut outputs)?,
        Experiment::Spectrum => cmd_spectrum(config, out_dir, &mut outputs)?,
        Experiment::FdError => cmd_fd_error(config, out_dir, &mut outputs)?,
        Experiment::Drive => cmd_drive(config, out_dir, &mut outputs)?,
        Experiment::Calibrate => cmd_calibrate(config, out_dir, &mut outputs)?,
        Experiment::Compress => cmd_compress(config, out_dir, &mut outputs)?,
        Experiment::Benchmark => cmd_benchmark(config, out_dir, &mut outputs)?,
    };
    let manifest = RunManifest {
        experiment: experiment.name(),
        rng_seed: config.rng_seed,
        config: config.clone(),
        outputs,
        summary,
    };
    let file = File::create(out_dir.join("manifest.json"))?;
    serde_json::to_writer_pretty(BufWriter::new(file), &manifest)?;
    Ok(manifest)
}

fn csv_writer(out_dir: &Path, name: &str, outputs: &mut Vec<String>) -> Result<csv::Writer<File>> {
    outputs.push(name.to_string());
    let path = out_dir.join(name);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    csv::Writer::from_path(path).map_err(csv_error)
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("csv: {other:?}")),
    }
}

fn jsonl_file(out_dir: &Path, name: &str, outputs: &mut Vec<String>) -> Result<BufWriter<File>> {
    outputs.push(name.to_string());
    Ok(BufWriter::new(File::create(out_dir.join(name))?))
}

// ---------------------------------------------------------------- optimize

#[derive(Serialize)]
struct ScatterRow {
    w1: f64,
    w2: f64,
    w3: f64,
    infidelity: f64,
}

/// Samples seeds and minimizes each one.
pub fn optimize_population(
    config: &ExperimentConfig,
    problem: &Problem,
    count: usize,
) -> Result<Vec<OptimizationReport>> {
    let spec = SeedSpec { count, bounds: config.bounds_for(problem), rng_seed: config.rng_seed };
    let seeds = sample_seeds(&spec, problem)?;
    minimize_batch(problem, &seeds, config.tol(), config.max_iter())
}

pub fn write_archive<W: Write>(reports: &[OptimizationReport], mut out: W) -> Result<()> {
    for r in reports {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_archive(path: &Path) -> Result<Vec<OptimizationReport>> {
    let reader = BufReader::new(File::open(path)?);
    let mut reports = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            reports.push(serde_json::from_str(&line)?);
        }
    }
    Ok(reports)
}

fn cmd_optimize(config: &ExperimentConfig, out: &Path, outputs: &mut Vec<String>) -> Result<serde_json::Value> {
    let problem = config.problem_for(Experiment::Optimize);
    let count = config.count.unwrap_or(4000);
    let reports = optimize_population(config, &problem, count)?;
    write_archive(&reports, jsonl_file(out, "reports.jsonl", outputs)?)?;

    if problem.n_pulses() == 3 {
        let mut w = csv_writer(out, "scatter.csv", outputs)?;
        for r in reports.iter().filter(|r| r.converged) {
            let v = r.field.values();
            w.serialize(ScatterRow { w1: v[0], w2: v[1], w3: v[2], infidelity: r.final_infidelity })
                .map_err(csv_error)?;
        }
        w.flush()?;
    }
    let converged = reports.iter().filter(|r| r.converged).count();
    Ok(serde_json::json!({ "seeds": count, "converged": converged }))
}

/// Start points for navigation-style experiments: the inline `start`, the
/// converged fields of the `solutions` archive, or freshly optimized seeds.
pub fn gather_solutions(config: &ExperimentConfig, problem: &Problem, wanted: usize) -> Result<Vec<ControlField>> {
    if let Some(start) = &config.start {
        problem.check_field(start)?;
        return Ok(vec![start.clone()]);
    }
    let converged = |reports: Vec<OptimizationReport>| -> Vec<ControlField> {
        reports.into_iter().filter(|r| r.converged && problem.check_field(&r.field).is_ok()).map(|r| r.field).collect()
    };
    let found = match &config.solutions {
        Some(path) => converged(read_archive(path)?),
        None => {
            let mut count = wanted.max(1) * 4;
            loop {
                let found = converged(optimize_population(config, problem, count)?);
                if found.len() >= wanted || count >= 64 * wanted.max(1) {
                    break found;
                }
                count *= 2;
            }
        }
    };
    if found.is_empty() {
        return Err(Error::Config("no converged solutions available".into()));
    }
    Ok(found.into_iter().take(wanted).collect())
}

fn require_solution(problem: &Problem, field: &ControlField) -> Result<f64> {
    let infidelity = problem.infidelity(field)?;
    if infidelity >= SOLUTION_THRESHOLD {
        return Err(Error::NotASolution { infidelity, threshold: SOLUTION_THRESHOLD });
    }
    Ok(infidelity)
}

// ---------------------------------------------------------------- spectrum

#[derive(Serialize)]
struct SpectrumRow {
    index: usize,
    eigenvalue: f64,
    non_null: bool,
}

fn cmd_spectrum(config: &ExperimentConfig, out: &Path, outputs: &mut Vec<String>) -> Result<serde_json::Value> {
    let problem = config.problem_for(Experiment::Spectrum);
    let field = gather_solutions(config, &problem, 1)?.remove(0);
    require_solution(&problem, &field)?;
    let rule = config.null_rule.unwrap_or_default();
    let modes = match config.hessian_mode {
        Some(mode) => vec![mode],
        None => vec![HessianMode::Exact, HessianMode::fd(config.epsilon.unwrap_or(1e-3))?],
    };

    let mut summary = serde_json::Map::new();
    for mode in modes {
        let tag = match mode {
            HessianMode::Exact => "exact",
            HessianMode::Fd(_) => "fd",
        };
        let spectrum = spectrum_at(&problem, field.values(), mode, rule)?;
        let non_null = spectrum.non_null_indices()?;
        let mut w = csv_writer(out, &format!("spectrum_{tag}.csv"), outputs)?;
        for (index, &eigenvalue) in spectrum.eigenvalues().iter().enumerate() {
            w.serialize(SpectrumRow { index, eigenvalue, non_null: non_null.contains(&index) }).map_err(csv_error)?;
        }
        w.flush()?;
        summary.insert(format!("non_null_{tag}"), non_null.len().into());
    }
    Ok(summary.into())
}

// ---------------------------------------------------------------- fd-error

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FdErrorRow {
    pub epsilon: f64,
    #[serde(rename = "E_1")]
    pub e1: f64,
    #[serde(rename = "E_2")]
    pub e2: f64,
}

pub fn default_error_grid() -> Vec<f64> {
    (0..=16).map(|i| 10f64.powf(-8.0 + 0.5 * i as f64)).collect()
}

/// `E_1(ε)`, `E_2(ε)` for the two leading non-null eigenvectors. Rows where
/// the exact spectrum is degenerate carry NaN errors.
pub fn fd_error_sweep(
    problem: &Problem,
    field: &ControlField,
    grid: &[f64],
    rule: NullRule,
) -> Result<Vec<FdErrorRow>> {
    let exact = spectrum_at(problem, field.values(), HessianMode::Exact, rule)?;
    let indices = exact.non_null_indices()?;
    grid.iter()
        .map(|&epsilon| {
            let approx = eig_sym(&hessian(problem, field.values(), HessianMode::fd(epsilon)?)?)?;
            let err = |k: usize| -> Result<f64> {
                match indices.get(k) {
                    Some(&i) => match eigvec_error(&exact, &approx, i) {
                        Ok(e) => Ok(e),
                        Err(Error::Degenerate(_)) => Ok(f64::NAN),
                        Err(e) => Err(e),
                    },
                    None => Ok(f64::NAN),
                }
            };
            Ok(FdErrorRow { epsilon, e1: err(0)?, e2: err(1)? })
        })
        .collect()
}

#[derive(Serialize)]
struct FdErrorSummaryRow {
    solution: usize,
    best_epsilon: f64,
    best_max_error: f64,
}

fn cmd_fd_error(config: &ExperimentConfig, out: &Path, outputs: &mut Vec<String>) -> Result<serde_json::Value> {
    let problem = config.problem_for(Experiment::FdError);
    let solutions = gather_solutions(config, &problem, config.n_solutions.unwrap_or(100))?;
    let grid = config.eps_grid.clone().unwrap_or_else(default_error_grid);
    let rule = config.null_rule.unwrap_or(NullRule::Rank(2));

    let sweeps = solutions.par_iter().map(|s| fd_error_sweep(&problem, s, &grid, rule)).collect::<Result<Vec<_>>>()?;

    let mut summary = csv_writer(out, "fd_error_summary.csv", outputs)?;
    let mut below = 0;
    for (k, rows) in sweeps.iter().enumerate() {
        let mut w = csv_writer(out, &format!("fd_error/solution_{k:03}.csv"), outputs)?;
        for row in rows {
            w.serialize(row).map_err(csv_error)?;
        }
        w.flush()?;
        let best = rows
            .iter()
            .filter(|r| !r.e1.is_nan() && !r.e2.is_nan())
            .map(|r| (r.epsilon, r.e1.max(r.e2)))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((best_epsilon, best_max_error)) = best {
            if best_max_error < 1e-8 {
                below += 1;
            }
            summary.serialize(FdErrorSummaryRow { solution: k, best_epsilon, best_max_error }).map_err(csv_error)?;
        }
    }
    summary.flush()?;
    Ok(serde_json::json!({ "solutions": sweeps.len(), "below_1e-8": below }))
}

// ---------------------------------------------------------------- drive

/// Distance of the closest return to the start after the trajectory has
/// first moved `departure` away from it, and the ζ at which it happens.
pub fn loop_closure(trajectory: &Trajectory, departure: f64) -> Option<(f64, f64)> {
    let start = DVector::from_column_slice(trajectory.samples()[0].field.values());
    let mut departed = false;
    let mut best: Option<(f64, f64)> = None;
    for s in &trajectory.samples()[1..] {
        let d = (DVector::from_column_slice(s.field.values()) - &start).norm();
        departed |= d > departure;
        if departed && best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, s.zeta));
        }
    }
    best
}

pub fn drive_config(config: &ExperimentConfig) -> Result<NavigationConfig> {
    Ok(NavigationConfig {
        h: config.h.unwrap_or(0.01),
        steps: config.steps.unwrap_or(10_000),
        hessian_mode: match config.hessian_mode {
            Some(m) => m,
            None => HessianMode::fd(config.epsilon.unwrap_or(1e-2))?,
        },
        null_rule: config.null_rule.unwrap_or(NullRule::Rank(2)),
        ..NavigationConfig::default()
    })
}

fn cmd_drive(config: &ExperimentConfig, out: &Path, outputs: &mut Vec<String>) -> Result<serde_json::Value> {
    let problem = config.problem_for(Experiment::Drive);
    // closed loops sit near the origin; take the innermost of a few solutions
    let mut starts = gather_solutions(config, &problem, config.n_solutions.unwrap_or(8))?;
    starts.sort_by(|a, b| norm(a).total_cmp(&norm(b)));
    let start = &starts[0];
    let trajectory = navigate(&problem, start, DirectionProvider::null_follow(), &drive_config(config)?)?;
    trajectory.write_jsonl(jsonl_file(out, "trajectory.jsonl", outputs)?)?;
    let closure = loop_closure(&trajectory, 0.5);
    Ok(serde_json::json!({
        "samples": trajectory.samples().len(),
        "max_infidelity": trajectory.max_infidelity(),
        "failure": trajectory.failure(),
        "closest_return": closure.map(|c| c.0),
        "closest_return_zeta": closure.map(|c| c.1),
    }))
}

fn norm(f: &ControlField) -> f64 {
    f.values().iter().map(|v| v * v).sum::<f64>().sqrt()
}

// ---------------------------------------------------------------- calibrate

pub fn default_calibration_grid() -> Vec<f64> {
    (-12..=1).map(|e| 10f64.powi(e)).collect()
}

/// Unit direction `k` drawn uniformly from the cube, from its own RNG stream.
pub fn random_direction(rng_seed: u64, k: u64, dim: usize) -> DVector<f64> {
    let mut rng = stream_rng(rng_seed ^ 0x5eed_d1ec, k);
    DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0)).normalize()
}

fn cmd_calibrate(config: &ExperimentConfig, out: &Path, outputs: &mut Vec<String>) -> Result<serde_json::Value> {
    let problem = config.problem_for(Experiment::Calibrate);
    let solution = gather_solutions(config, &problem, 1)?.remove(0);
    let grid = config.eps_grid.clone().unwrap_or_else(default_calibration_grid);
    let steps = config.steps.unwrap_or(1000);
    let h = config.h.unwrap_or(0.1);

    let mut best = Vec::new();
    for k in 0..config.directions.unwrap_or(2) {
        let direction = random_direction(config.rng_seed, k as u64, problem.n_pulses());
        let rows = calibrate_epsilon(&problem, &solution, &direction, &grid, steps, h)?;
        let mut w = csv_writer(out, &format!("calibration_dir{k}.csv"), outputs)?;
        for row in &rows {
            w.serialize(row).map_err(csv_error)?;
        }
        w.flush()?;
        let min = rows.iter().copied().min_by(|a, b| a.final_infidelity.total_cmp(&b.final_infidelity));
        best.push(min.map(
            |r: CalibrationRow| serde_json::json!({ "epsilon": r.epsilon, "final_infidelity": r.final_infidelity }),
        ));
    }
    Ok(serde_json::json!({ "best": best }))
}

// ---------------------------------------------------------------- compress

#[derive(Serialize)]
struct ProtocolRow {
    zeta: f64,
    interval: usize,
    value: f64,
}

#[derive(Serialize)]
struct ComparisonRow {
    zeta: f64,
    cost_exact: f64,
    cost_fd: f64,
    infidelity_exact: f64,
    infidelity_fd: f64,
}

pub fn compress_config(config: &ExperimentConfig, mode: HessianMode) -> NavigationConfig {
    NavigationConfig {
        h: config.h.unwrap_or(0.002),
        steps: config.steps.unwrap_or(500),
        hessian_mode: mode,
        null_rule: config.null_rule.unwrap_or(NullRule::Rank(2)),
        ..NavigationConfig::default()
    }
}

fn preset_tag(kept: &[usize]) -> String {
    let parts: Vec<String> = kept.iter().map(|k| k.to_string()).collect();
    format!("p{}", parts.join("_"))
}

fn cmd_compress(config: &ExperimentConfig, out: &Path, outputs: &mut Vec<String>) -> Result<serde_json::Value> {
    let presets = config.kept.clone().unwrap_or_else(|| vec![vec![1], vec![1, 2]]);
    let fd_mode = match config.hessian_mode {
        Some(mode @ HessianMode::Fd(_)) => mode,
        _ => HessianMode::fd(config.epsilon.unwrap_or(1e-3))?,
    };
    let compare = config.compare_exact.unwrap_or(true);
    let every = config.sample_every.unwrap_or(10).max(1);

    let mut jobs = Vec::new();
    for problem in compress_problems(config) {
        let m = problem.n_pulses();
        let starts = gather_solutions(config, &problem, config.n_solutions.unwrap_or(1))?;
        for (s, start) in starts.into_iter().enumerate() {
            for kept in &presets {
                let spec = if config.strict_frequencies.unwrap_or(false) {
                    FrequencySpec::strict(kept, m)?
                } else {
                    FrequencySpec::closed(kept, m)?
                };
                let stem = format!("compress_{}_m{m}_{}_s{s:03}", problem.name(), preset_tag(kept));
                jobs.push((problem, stem, start.clone(), FourierObjective::new(spec)));
            }
        }
    }

    let results = jobs
        .par_iter()
        .map(|(problem, _, start, objective)| {
            let fd = compress(problem, start, objective, &compress_config(config, fd_mode))?;
            let exact = if compare {
                Some(compress(problem, start, objective, &compress_config(config, HessianMode::Exact))?)
            } else {
                None
            };
            Ok((fd, exact))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut summary = Vec::new();
    for ((problem, stem, _, objective), (fd, exact)) in jobs.iter().zip(&results) {
        fd.write_jsonl(jsonl_file(out, &format!("{stem}_fd.jsonl"), outputs)?)?;

        let mut w = csv_writer(out, &format!("{stem}_protocol.csv"), outputs)?;
        for sample in fd.samples().iter().step_by(every) {
            for (interval, &value) in sample.field.values().iter().enumerate() {
                w.serialize(ProtocolRow { zeta: sample.zeta, interval, value }).map_err(csv_error)?;
            }
        }
        w.flush()?;

        if let Some(exact) = exact {
            exact.write_jsonl(jsonl_file(out, &format!("{stem}_exact.jsonl"), outputs)?)?;
            let mut w = csv_writer(out, &format!("{stem}_comparison.csv"), outputs)?;
            for (a, e) in fd.samples().iter().zip(exact.samples()) {
                w.serialize(ComparisonRow {
                    zeta: a.zeta,
                    cost_exact: e.secondary_cost.unwrap_or(f64::NAN),
                    cost_fd: a.secondary_cost.unwrap_or(f64::NAN),
                    infidelity_exact: e.infidelity,
                    infidelity_fd: a.infidelity,
                })
                .map_err(csv_error)?;
            }
            w.flush()?;
        }

        summary.push(serde_json::json!({
            "run": stem,
            "model": problem.name(),
            "requested": objective.spec().requested(),
            "kept": objective.spec().kept(),
            "initial_cost": fd.samples()[0].secondary_cost,
            "final_cost": fd.last().secondary_cost,
            "max_infidelity": fd.max_infidelity(),
            "failure": fd.failure(),
        }));
    }
    Ok(serde_json::json!({ "runs": summary }))
}

// ---------------------------------------------------------------- benchmark

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchmarkRecord {
    pub model: &'static str,
    #[serde(rename = "M")]
    pub m: usize,
    pub tau_app: f64,
    pub tau_ext: f64,
    pub eta: f64,
}

/// Shortest measured batch; shorter tasks are repeated until they fill it.
const MIN_BATCH_SECONDS: f64 = 2e-4;

fn time_batch<F: FnMut() -> Result<()>>(mut task: F, reps: usize) -> Result<f64> {
    let t = Instant::now();
    for _ in 0..reps {
        task()?;
    }
    Ok(t.elapsed().as_secs_f64())
}

/// Mean seconds per Hessian eigendecomposition, finite-difference (`tau_app`)
/// against exact (`tau_ext`), over `fields`.
pub fn benchmark_eigenvectors(problem: &Problem, fields: &[ControlField], epsilon: f64) -> Result<BenchmarkRecord> {
    benchmark_modes(problem, fields, HessianMode::fd(epsilon)?, HessianMode::Exact)
}

/// Timing of `approx` against `reference`; runs alternate between the two.
pub fn benchmark_modes(
    problem: &Problem,
    fields: &[ControlField],
    approx: HessianMode,
    reference: HessianMode,
) -> Result<BenchmarkRecord> {
    if fields.is_empty() {
        return Err(Error::Config("benchmark needs at least one field".into()));
    }
    let task = |f: &ControlField, mode| eig_sym(&hessian(problem, f.values(), mode)?).map(|_| ());

    let mut reps = 1;
    while reps < 1 << 20 && time_batch(|| task(&fields[0], reference), reps)? < MIN_BATCH_SECONDS {
        reps *= 2;
    }

    let (mut tau_app, mut tau_ext) = (0.0, 0.0);
    for f in fields {
        tau_ext += time_batch(|| task(f, reference), reps)? / reps as f64;
        tau_app += time_batch(|| task(f, approx), reps)? / reps as f64;
    }
    let n = fields.len() as f64;
    let (tau_app, tau_ext) = (tau_app / n, tau_ext / n);
    Ok(BenchmarkRecord { model: problem.name(), m: problem.n_pulses(), tau_app, tau_ext, eta: tau_app / tau_ext })
}

/// `problems`, else `problem`, else `defaults`.
fn problems_or(config: &ExperimentConfig, defaults: Vec<Problem>) -> Vec<Problem> {
    match (&config.problems, &config.problem) {
        (Some(list), _) => list.clone(),
        (None, Some(p)) => vec![*p],
        (None, None) => defaults,
    }
}

pub fn benchmark_problems(config: &ExperimentConfig) -> Vec<Problem> {
    problems_or(
        config,
        vec![
            Experiment::Benchmark.default_problem(),
            Problem::Qho(QhoProblem::with_defaults(DEFAULT_DURATION, 3).expect("valid preset")),
        ],
    )
}

pub fn compress_problems(config: &ExperimentConfig) -> Vec<Problem> {
    problems_or(
        config,
        vec![
            Experiment::Compress.default_problem(),
            Problem::Lz(LzProblem::new(LZ_PRESET_GAP, DEFAULT_DURATION, 48).expect("valid preset")),
        ],
    )
}

pub fn run_benchmark(config: &ExperimentConfig) -> Result<Vec<BenchmarkRecord>> {
    let grid = config.m_grid.clone().unwrap_or_else(|| vec![3, 6, 12, 24, 48]);
    let count = config.n_fields.unwrap_or(100);
    let epsilon = config.epsilon.unwrap_or(1e-3);
    let mut records = Vec::new();
    for base in benchmark_problems(config) {
        for &m in &grid {
            let problem = base.with_pulses(m)?;
            let spec = SeedSpec { count, bounds: config.bounds_for(&problem), rng_seed: config.rng_seed };
            let fields = sample_seeds(&spec, &problem)?;
            records.push(benchmark_eigenvectors(&problem, &fields, epsilon)?);
        }
    }
    Ok(records)
}

fn cmd_benchmark(config: &ExperimentConfig, out: &Path, outputs: &mut Vec<String>) -> Result<serde_json::Value> {
    let records = run_benchmark(config)?;
    let mut w = csv_writer(out, "benchmark.csv", outputs)?;
    for r in &records {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    let eta: Vec<f64> = records.iter().map(|r| r.eta).collect();
    Ok(serde_json::json!({ "eta": eta }))
}

/// Exact spectrum classification helper used by reports and tests.
pub fn non_null_count(problem: &Problem, field: &ControlField, rule: NullRule) -> Result<usize> {
    let s = classify_null(eig_sym(&problem.exact_hessian(field)?)?, rule)?;
    Ok(s.non_null_indices()?.len())
}
