//! Experiment harness: seeded case generation, sweeps over `(n, m, α, σ)`,
//! and CSV/JSON emission.
//!
//! Every random stream is `derive_seed(master, [stage, ...])`, so results do not
//! depend on execution order or thread count. Rows are sorted before output
//! and wall-clock timings go to a separate file, which keeps `results.csv`
//! byte-identical across runs with the same seed.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::bias::{apply_noise, bpbdw_reconstruct, NoiseModel};
use crate::config::{Experiment, ExperimentConfig, NoiseChoice, SensorChoice};
use crate::error::{Error, Result};
use crate::io::{fmt_real, read_offset_table};
use crate::manifold::{
    power_law_profile, sample_multiscale, sample_powerlaw, sample_sinusoids, ManifoldLabel, ParameterRecord,
    SnapshotSet,
};
use crate::multiscale::{spbdw_reconstruct, SlowDictionary};
use crate::obs::{build_observation_space, ObservationSpace, SensorArray};
use crate::rng::derive_seed;
use crate::rom::{approximation_error_curve, pod, ReducedBasis};
use crate::solver::{compute_box, PbdwSolver};
use crate::space::{GridFunction, Subspace};

pub const SCHEMA_VERSION: u32 = 1;

const STAGE_TRAIN: u64 = 1;
const STAGE_VALIDATION: u64 = 2;
const STAGE_NOISE: u64 = 3;
const STAGE_EXPECTATION: u64 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Pbdw,
    Bpbdw,
    Spbdw,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pbdw => "pbdw",
            Self::Bpbdw => "bpbdw",
            Self::Spbdw => "spbdw",
        }
    }
}

/// One sweep cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Cell {
    pub n: usize,
    pub m: usize,
    pub alpha: f64,
    pub sigma: f64,
}

impl Cell {
    fn seed(&self, master: u64, stage: u64, case: usize) -> u64 {
        derive_seed(
            master,
            &[stage, case as u64, self.n as u64, self.m as u64, self.alpha.to_bits(), self.sigma.to_bits()],
        )
    }

    fn cmp_key(&self, other: &Self) -> std::cmp::Ordering {
        self.m
            .cmp(&other.m)
            .then(self.n.cmp(&other.n))
            .then(self.alpha.total_cmp(&other.alpha))
            .then(self.sigma.total_cmp(&other.sigma))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    pub case_id: usize,
    pub method: Method,
    pub cell: Cell,
    /// Relative ℓ² error `‖u* − u‖ / ‖u‖`.
    pub error: f64,
    pub beta: f64,
    /// Seed of the noise realization.
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Timing {
    pub case_id: usize,
    pub method: Method,
    pub cell: Cell,
    pub runtime_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Aggregate {
    pub method: Method,
    pub cell: Cell,
    pub count: usize,
    pub mean: f64,
    pub max: f64,
    pub min: f64,
    pub stddev: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PodDecayRow {
    pub manifold: ManifoldLabel,
    pub n: usize,
    /// `max_u ‖u − Π_{V_n} u‖` over the validation set.
    pub max_error: f64,
}

/// Example 2 per-case diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JumpDiagnostic {
    pub case_id: usize,
    pub cell: Cell,
    pub true_location: f64,
    /// Location of the largest-amplitude smoother, NaN when none was found.
    pub estimated_location: f64,
    pub num_smoothers: usize,
    pub tv_truth: f64,
    pub tv_pbdw: f64,
    pub tv_spbdw: f64,
}

/// Example 3 per-case diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoefficientDiagnostic {
    pub case_id: usize,
    pub method: Method,
    pub cell: Cell,
    /// `⟨u*, v_1⟩² / ‖u*‖²`.
    pub leading_mode_fraction: f64,
}

/// Error statistics in percent, one row per method and cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TableRow {
    pub method: Method,
    pub cell: Cell,
    pub mean_pct: f64,
    pub max_pct: f64,
    pub min_pct: f64,
    pub stddev_pct: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Diagnostics {
    pub jumps: Vec<JumpDiagnostic>,
    pub coefficients: Vec<CoefficientDiagnostic>,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub config: ExperimentConfig,
    pub rows: Vec<ResultRow>,
    pub timings: Vec<Timing>,
    pub aggregates: Vec<Aggregate>,
    pub pod_decay: Vec<PodDecayRow>,
    pub diagnostics: Diagnostics,
    pub table: Vec<TableRow>,
    /// Cells skipped because the reduced problem is ill-posed, with the reason.
    pub skipped: Vec<(Cell, String)>,
}

impl RunOutput {
    pub fn rows_for(&self, method: Method, pred: impl Fn(&Cell) -> bool) -> impl Iterator<Item = &ResultRow> {
        self.rows.iter().filter(move |r| r.method == method && pred(&r.cell))
    }

    pub fn aggregate(&self, method: Method, pred: impl Fn(&Cell) -> bool) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.method == method && pred(&a.cell))
    }
}

fn relative_error(estimate: &GridFunction, truth: &GridFunction) -> Result<f64> {
    let norm = truth.norm();
    let diff = estimate.sub(truth)?.norm();
    Ok(if norm > 0.0 { diff / norm } else { diff })
}

#[cfg(not(target_arch = "wasm32"))]
fn clock() -> impl Fn() -> f64 {
    let t0 = std::time::Instant::now();
    move || t0.elapsed().as_secs_f64() * 1e3
}

#[cfg(target_arch = "wasm32")]
fn clock() -> impl Fn() -> f64 {
    || 0.0
}

fn map_cases<T: Send>(count: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..count).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..count).map(f).collect()
    }
}

fn sensors(cfg: &ExperimentConfig, m: usize) -> Result<ObservationSpace> {
    let array = SensorArray::equidistant(&cfg.grid, m, cfg.sensor_kind == SensorChoice::Pointwise)?;
    build_observation_space(&array, &cfg.grid)
}

fn noise_models(cfg: &ExperimentConfig) -> Result<Vec<(f64, f64, Option<NoiseModel>)>> {
    let table = match (&cfg.noise_kind, &cfg.noise_table) {
        (NoiseChoice::Empirical, Some(path)) => Some(read_offset_table(path)?),
        _ => None,
    };
    let mut out = Vec::new();
    for &alpha in &cfg.alpha {
        for &sigma in &cfg.sigma {
            let model = match cfg.noise_kind {
                NoiseChoice::None => None,
                NoiseChoice::Linear => Some(NoiseModel::linear(alpha, sigma)?),
                NoiseChoice::Empirical => Some(NoiseModel::empirical(
                    table.clone().expect("table loaded for the empirical model"),
                    sigma,
                    cfg.mc_samples,
                )?),
            };
            out.push((alpha, sigma, model));
        }
    }
    Ok(out)
}

fn measure(truth: &GridFunction, space: &ObservationSpace, model: Option<&NoiseModel>, seed: u64) -> Result<crate::obs::Measurement> {
    match model {
        Some(model) => apply_noise(truth, space, model, seed),
        None => space.project(truth),
    }
}

fn pod_rows(label: ManifoldLabel, validation: &SnapshotSet, basis: &ReducedBasis) -> Result<Vec<PodDecayRow>> {
    let curve = approximation_error_curve(validation, basis.subspace(), basis.dim())?;
    Ok(curve
        .into_iter()
        .enumerate()
        .map(|(n, max_error)| PodDecayRow { manifold: label, n, max_error })
        .collect())
}

/// Collects per-case results, then sorts rows and computes aggregates.
struct Collector {
    rows: Vec<ResultRow>,
    timings: Vec<Timing>,
    skipped: Vec<(Cell, String)>,
}

impl Collector {
    fn new() -> Self {
        Self {
            rows: Vec::new(),
            timings: Vec::new(),
            skipped: Vec::new(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn push(&mut self, case_id: usize, method: Method, cell: Cell, error: f64, beta: f64, seed: u64, ms: f64) {
        self.rows.push(ResultRow {
            case_id,
            method,
            cell,
            error,
            beta,
            seed,
        });
        self.timings.push(Timing {
            case_id,
            method,
            cell,
            runtime_ms: ms,
        });
    }

    fn skip(&mut self, cell: Cell, err: &Error) {
        log::warn!("skipping n={} m={}: {err}", cell.n, cell.m);
        self.skipped.push((cell, err.to_string()));
    }

    fn finish(mut self, config: ExperimentConfig, pod_decay: Vec<PodDecayRow>, diagnostics: Diagnostics, with_table: bool) -> RunOutput {
        let order = |a: (usize, Method, &Cell), b: (usize, Method, &Cell)| {
            a.0.cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp_key(b.2))
        };
        self.rows.sort_by(|a, b| order((a.case_id, a.method, &a.cell), (b.case_id, b.method, &b.cell)));
        self.timings.sort_by(|a, b| order((a.case_id, a.method, &a.cell), (b.case_id, b.method, &b.cell)));
        let aggregates = aggregate(&self.rows);
        let table = if with_table {
            aggregates
                .iter()
                .map(|a| TableRow {
                    method: a.method,
                    cell: a.cell,
                    mean_pct: 100.0 * a.mean,
                    max_pct: 100.0 * a.max,
                    min_pct: 100.0 * a.min,
                    stddev_pct: 100.0 * a.stddev,
                })
                .collect()
        } else {
            Vec::new()
        };
        RunOutput {
            config,
            rows: self.rows,
            timings: self.timings,
            aggregates,
            pod_decay,
            diagnostics,
            table,
            skipped: self.skipped,
        }
    }
}

/// Mean, max, min and population standard deviation per `(method, cell)`.
///
/// Sums run over `rows` in order, so feeding rows sorted by case id reproduces
/// the emitted values exactly.
pub fn aggregate(rows: &[ResultRow]) -> Vec<Aggregate> {
    let mut groups: Vec<(Method, Cell, Vec<f64>)> = Vec::new();
    for r in rows {
        match groups.iter_mut().find(|(m, c, _)| *m == r.method && c.cmp_key(&r.cell).is_eq()) {
            Some(g) => g.2.push(r.error),
            None => groups.push((r.method, r.cell, vec![r.error])),
        }
    }
    groups.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp_key(&b.1)));
    groups
        .into_iter()
        .map(|(method, cell, errs)| {
            let count = errs.len();
            let mut sum = 0.0;
            let mut max = f64::NEG_INFINITY;
            let mut min = f64::INFINITY;
            for &e in &errs {
                sum += e;
                max = max.max(e);
                min = min.min(e);
            }
            let mean = sum / count as f64;
            let mut sq = 0.0;
            for &e in &errs {
                sq += (e - mean) * (e - mean);
            }
            Aggregate {
                method,
                cell,
                count,
                mean,
                max,
                min,
                stddev: (sq / count as f64).sqrt(),
            }
        })
        .collect()
}

fn max_n(cfg: &ExperimentConfig) -> usize {
    cfg.n.iter().copied().max().expect("validated nonempty")
}

fn check_experiment(cfg: &ExperimentConfig, expected: Experiment) -> Result<()> {
    if cfg.experiment != expected {
        return Err(Error::InvalidArgument(format!(
            "configuration is for {}, not {expected}",
            cfg.experiment
        )));
    }
    Ok(())
}

/// POD decay curves on independent validation draws.
pub fn pod_decay(cfg: &ExperimentConfig) -> Result<Vec<PodDecayRow>> {
    let train_seed = derive_seed(cfg.seed, &[STAGE_TRAIN]);
    let val_seed = derive_seed(cfg.seed, &[STAGE_VALIDATION]);
    let n = max_n(cfg).min(cfg.snapshots);
    match cfg.experiment {
        Experiment::Example1 => {
            let train = sample_sinusoids(&cfg.sinusoid, cfg.grid, cfg.snapshots, train_seed)?;
            let val = sample_sinusoids(&cfg.sinusoid, cfg.grid, cfg.validation, val_seed)?;
            pod_rows(ManifoldLabel::Full, &val, &pod(&train, n)?)
        }
        Experiment::Example2 => {
            let train = sample_multiscale(&cfg.multiscale, cfg.grid, cfg.snapshots, train_seed)?;
            let val = sample_multiscale(&cfg.multiscale, cfg.grid, cfg.validation, val_seed)?;
            let mut rows = pod_rows(ManifoldLabel::Fast, &val.fast, &pod(&train.fast, n)?)?;
            rows.extend(pod_rows(ManifoldLabel::Slow, &val.slow, &pod(&train.slow, n)?)?);
            rows.extend(pod_rows(ManifoldLabel::Full, &val.full, &pod(&train.full, n)?)?);
            Ok(rows)
        }
        Experiment::Example3Analog => {
            let train = sample_powerlaw(&cfg.powerlaw, cfg.grid, cfg.snapshots, train_seed)?;
            let val = sample_powerlaw(&cfg.powerlaw, cfg.grid, cfg.validation, val_seed)?;
            pod_rows(ManifoldLabel::Full, &val, &pod(&train, n)?)
        }
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    match cfg.experiment {
        Experiment::Example1 => run_example1(cfg),
        Experiment::Example2 => run_example2(cfg),
        Experiment::Example3Analog => run_example3_analog(cfg),
    }
}

/// Sinusoid manifold: PBDW and bPBDW on held-out truths.
pub fn run_example1(cfg: &ExperimentConfig) -> Result<RunOutput> {
    check_experiment(cfg, Experiment::Example1)?;
    let train = sample_sinusoids(&cfg.sinusoid, cfg.grid, cfg.snapshots, derive_seed(cfg.seed, &[STAGE_TRAIN]))?;
    let val = sample_sinusoids(&cfg.sinusoid, cfg.grid, cfg.validation, derive_seed(cfg.seed, &[STAGE_VALIDATION]))?;
    let basis = pod(&train, max_n(cfg))?;
    let decay = pod_rows(ManifoldLabel::Full, &val, &basis)?;
    let models = noise_models(cfg)?;
    let mut out = Collector::new();

    for &m in &cfg.m {
        let space = sensors(cfg, m)?;
        for &n in &cfg.n {
            let vn = basis.subspace().truncated(n);
            for (alpha, sigma, model) in &models {
                let cell = Cell { n, m, alpha: *alpha, sigma: *sigma };
                let solver = match PbdwSolver::new(&vn, &space) {
                    Ok(s) => s,
                    Err(e) => {
                        out.skip(cell, &e);
                        continue;
                    }
                };
                let results = map_cases(val.len(), |k| {
                    let truth = &val.snapshots()[k];
                    let noise_seed = cell.seed(cfg.seed, STAGE_NOISE, k);
                    let omega = measure(truth, &space, model.as_ref(), noise_seed)?;
                    let t = clock();
                    let plain = solver.solve(&omega)?;
                    let t_plain = t();
                    let corrected = match model {
                        Some(model) => {
                            bpbdw_reconstruct(&omega, &solver, model, cell.seed(cfg.seed, STAGE_EXPECTATION, k), None)?.corrected
                        }
                        None => plain.clone(),
                    };
                    let t_corr = t() - t_plain;
                    Ok([
                        (Method::Pbdw, relative_error(&plain.state, truth)?, t_plain, noise_seed),
                        (Method::Bpbdw, relative_error(&corrected.state, truth)?, t_corr, noise_seed),
                    ])
                })?;
                for (k, rows) in results.into_iter().enumerate() {
                    for (method, err, ms, seed) in rows {
                        out.push(k, method, cell, err, solver.beta(), seed, ms);
                    }
                }
            }
        }
    }
    Ok(out.finish(cfg.clone(), decay, Diagnostics::default(), false))
}

/// Multiscale manifold: PBDW and bPBDW on the full-manifold basis against
/// sPBDW on the fast basis plus a step dictionary.
pub fn run_example2(cfg: &ExperimentConfig) -> Result<RunOutput> {
    check_experiment(cfg, Experiment::Example2)?;
    let train = sample_multiscale(&cfg.multiscale, cfg.grid, cfg.snapshots, derive_seed(cfg.seed, &[STAGE_TRAIN]))?;
    let val = sample_multiscale(&cfg.multiscale, cfg.grid, cfg.validation, derive_seed(cfg.seed, &[STAGE_VALIDATION]))?;
    let nmax = max_n(cfg);
    let full_basis = pod(&train.full, nmax)?;
    let fast_basis = pod(&train.fast, nmax)?;
    let mut decay = pod_rows(ManifoldLabel::Fast, &val.fast, &fast_basis)?;
    decay.extend(pod_rows(ManifoldLabel::Slow, &val.slow, &pod(&train.slow, nmax)?)?);
    decay.extend(pod_rows(ManifoldLabel::Full, &val.full, &full_basis)?);
    let jumps: Vec<f64> = val
        .full
        .parameters()
        .iter()
        .map(|p| match p {
            ParameterRecord::Multiscale { jump_location, .. } => *jump_location,
            _ => f64::NAN,
        })
        .collect();
    let models = noise_models(cfg)?;
    let mut out = Collector::new();
    let mut diag = Diagnostics::default();

    for &m in &cfg.m {
        let space = sensors(cfg, m)?;
        let dict = SlowDictionary::heaviside(cfg.grid, &space, cfg.multiscale.jump_location, cfg.spbdw.dict_stride)?;
        for &n in &cfg.n {
            let v_full = full_basis.subspace().truncated(n);
            let v_fast = fast_basis.subspace().truncated(n);
            for (alpha, sigma, model) in &models {
                let cell = Cell { n, m, alpha: *alpha, sigma: *sigma };
                let (full_solver, fast_solver) = match (PbdwSolver::new(&v_full, &space), PbdwSolver::new(&v_fast, &space)) {
                    (Ok(a), Ok(b)) => (a, b),
                    (Err(e), _) | (_, Err(e)) => {
                        out.skip(cell, &e);
                        continue;
                    }
                };
                let search_dict = if cfg.spbdw.smoother.deflate {
                    dict.deflated(fast_solver.cross_gramian())
                } else {
                    dict.clone()
                };
                let spbdw_model = if cfg.spbdw.bias_correct { model.as_ref() } else { None };
                let results = map_cases(val.full.len(), |k| {
                    let truth = &val.full.snapshots()[k];
                    let noise_seed = cell.seed(cfg.seed, STAGE_NOISE, k);
                    let exp_seed = cell.seed(cfg.seed, STAGE_EXPECTATION, k);
                    let omega = measure(truth, &space, model.as_ref(), noise_seed)?;
                    let t = clock();
                    let plain = full_solver.solve(&omega)?;
                    let t_plain = t();
                    let corrected = match model {
                        Some(model) => bpbdw_reconstruct(&omega, &full_solver, model, exp_seed, None)?.corrected,
                        None => plain.clone(),
                    };
                    let t_corr = t() - t_plain;
                    let dec = spbdw_reconstruct(&omega, &fast_solver, &search_dict, spbdw_model, exp_seed, &cfg.spbdw.smoother)?;
                    let t_multi = t() - t_plain - t_corr;
                    let estimated = dec
                        .smoothers
                        .iter()
                        .zip(&dec.corrected_amplitudes)
                        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                        .map_or(f64::NAN, |(s, _)| s.location);
                    let jump = JumpDiagnostic {
                        case_id: k,
                        cell,
                        true_location: jumps[k],
                        estimated_location: estimated,
                        num_smoothers: dec.smoothers.len(),
                        tv_truth: truth.total_variation(),
                        tv_pbdw: plain.state.total_variation(),
                        tv_spbdw: dec.u_star.total_variation(),
                    };
                    Ok((
                        [
                            (Method::Pbdw, relative_error(&plain.state, truth)?, t_plain, full_solver.beta()),
                            (Method::Bpbdw, relative_error(&corrected.state, truth)?, t_corr, full_solver.beta()),
                            (Method::Spbdw, relative_error(&dec.u_star, truth)?, t_multi, fast_solver.beta()),
                        ],
                        noise_seed,
                        jump,
                    ))
                })?;
                for (k, (rows, seed, jump)) in results.into_iter().enumerate() {
                    for (method, err, ms, beta) in rows {
                        out.push(k, method, cell, err, beta, seed, ms);
                    }
                    diag.jumps.push(jump);
                }
            }
        }
    }
    diag.jumps.sort_by(|a, b| a.case_id.cmp(&b.case_id).then(a.cell.cmp_key(&b.cell)));
    Ok(out.finish(cfg.clone(), decay, diag, false))
}

/// Power-law profiles: boxed PBDW and boxed bPBDW on repeated noisy
/// measurements of one synthetic truth.
pub fn run_example3_analog(cfg: &ExperimentConfig) -> Result<RunOutput> {
    check_experiment(cfg, Experiment::Example3Analog)?;
    let train = sample_powerlaw(&cfg.powerlaw, cfg.grid, cfg.snapshots, derive_seed(cfg.seed, &[STAGE_TRAIN]))?;
    let val = sample_powerlaw(&cfg.powerlaw, cfg.grid, cfg.validation, derive_seed(cfg.seed, &[STAGE_VALIDATION]))?;
    let basis = pod(&train, max_n(cfg))?;
    let decay = pod_rows(ManifoldLabel::Full, &val, &basis)?;
    let truth = power_law_profile(cfg.grid, cfg.truth_peak_velocity, cfg.truth_flow_index, cfg.powerlaw.radius);
    let models = noise_models(cfg)?;
    let mut out = Collector::new();
    let mut diag = Diagnostics::default();

    for &m in &cfg.m {
        let space = sensors(cfg, m)?;
        for &n in &cfg.n {
            let vn = basis.subspace().truncated(n);
            let bounds = compute_box(&train, &vn, cfg.box_margin)?;
            for (alpha, sigma, model) in &models {
                let cell = Cell { n, m, alpha: *alpha, sigma: *sigma };
                let solver = match PbdwSolver::new(&vn, &space) {
                    Ok(s) => s,
                    Err(e) => {
                        out.skip(cell, &e);
                        continue;
                    }
                };
                let results = map_cases(cfg.validation, |k| {
                    let noise_seed = cell.seed(cfg.seed, STAGE_NOISE, k);
                    let omega = measure(&truth, &space, model.as_ref(), noise_seed)?;
                    let t = clock();
                    let plain = solver.solve_boxed(&omega, &bounds)?;
                    let t_plain = t();
                    let corrected = match model {
                        Some(model) => {
                            bpbdw_reconstruct(&omega, &solver, model, cell.seed(cfg.seed, STAGE_EXPECTATION, k), Some(&bounds))?
                                .corrected
                        }
                        None => plain.clone(),
                    };
                    let t_corr = t() - t_plain;
                    Ok([
                        (Method::Pbdw, relative_error(&plain.state, &truth)?, t_plain, noise_seed, leading_fraction(&plain.state, &vn)?),
                        (
                            Method::Bpbdw,
                            relative_error(&corrected.state, &truth)?,
                            t_corr,
                            noise_seed,
                            leading_fraction(&corrected.state, &vn)?,
                        ),
                    ])
                })?;
                for (k, rows) in results.into_iter().enumerate() {
                    for (method, err, ms, seed, frac) in rows {
                        out.push(k, method, cell, err, solver.beta(), seed, ms);
                        diag.coefficients.push(CoefficientDiagnostic {
                            case_id: k,
                            method,
                            cell,
                            leading_mode_fraction: frac,
                        });
                    }
                }
            }
        }
    }
    diag.coefficients.sort_by(|a, b| {
        a.case_id.cmp(&b.case_id).then(a.method.cmp(&b.method)).then(a.cell.cmp_key(&b.cell))
    });
    Ok(out.finish(cfg.clone(), decay, diag, true))
}

fn leading_fraction(u: &GridFunction, vn: &Subspace) -> Result<f64> {
    let total = u.norm().powi(2);
    if total == 0.0 || vn.dim() == 0 {
        return Ok(0.0);
    }
    Ok(vn.basis()[0].inner(u)?.powi(2) / total)
}

fn header() -> String {
    format!("# schema_version={SCHEMA_VERSION}\n")
}

fn cell_fields(c: &Cell) -> String {
    format!("{},{},{},{}", c.n, c.m, fmt_real(c.alpha), fmt_real(c.sigma))
}

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut s = header();
    s.push_str("case_id,method,n,m,alpha,sigma,error,beta,seed\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.case_id,
            r.method.as_str(),
            cell_fields(&r.cell),
            fmt_real(r.error),
            fmt_real(r.beta),
            r.seed
        );
    }
    s
}

pub fn timings_csv(rows: &[Timing]) -> String {
    let mut s = header();
    s.push_str("case_id,method,n,m,alpha,sigma,runtime_ms\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{:.6}", r.case_id, r.method.as_str(), cell_fields(&r.cell), r.runtime_ms);
    }
    s
}

pub fn aggregates_csv(rows: &[Aggregate]) -> String {
    let mut s = header();
    s.push_str("method,n,m,alpha,sigma,count,mean,max,min,stddev\n");
    for a in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            a.method.as_str(),
            cell_fields(&a.cell),
            a.count,
            fmt_real(a.mean),
            fmt_real(a.max),
            fmt_real(a.min),
            fmt_real(a.stddev)
        );
    }
    s
}

fn label_str(l: ManifoldLabel) -> &'static str {
    match l {
        ManifoldLabel::Fast => "fast",
        ManifoldLabel::Slow => "slow",
        ManifoldLabel::Full => "full",
    }
}

pub fn pod_decay_csv(rows: &[PodDecayRow]) -> String {
    let mut s = header();
    s.push_str("manifold,n,max_error\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{}", label_str(r.manifold), r.n, fmt_real(r.max_error));
    }
    s
}

pub fn table_csv(rows: &[TableRow]) -> String {
    let mut s = header();
    s.push_str("method,n,m,alpha,sigma,average_pct,max_pct,min_pct,stddev_pct\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{:.2},{:.2},{:.2},{:.2}",
            r.method.as_str(),
            cell_fields(&r.cell),
            r.mean_pct,
            r.max_pct,
            r.min_pct,
            r.stddev_pct
        );
    }
    s
}

pub fn diagnostics_csv(d: &Diagnostics) -> Option<String> {
    let mut s = header();
    if !d.jumps.is_empty() {
        s.push_str("case_id,n,m,alpha,sigma,true_location,estimated_location,num_smoothers,tv_truth,tv_pbdw,tv_spbdw\n");
        for j in &d.jumps {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                j.case_id,
                cell_fields(&j.cell),
                fmt_real(j.true_location),
                fmt_real(j.estimated_location),
                j.num_smoothers,
                fmt_real(j.tv_truth),
                fmt_real(j.tv_pbdw),
                fmt_real(j.tv_spbdw)
            );
        }
        Some(s)
    } else if !d.coefficients.is_empty() {
        s.push_str("case_id,method,n,m,alpha,sigma,leading_mode_fraction\n");
        for c in &d.coefficients {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                c.case_id,
                c.method.as_str(),
                cell_fields(&c.cell),
                fmt_real(c.leading_mode_fraction)
            );
        }
        Some(s)
    } else {
        None
    }
}

#[derive(Serialize)]
struct RunManifest<'a> {
    schema_version: u32,
    package: &'static str,
    version: &'static str,
    experiment: Experiment,
    seed: u64,
    config: serde_json::Map<String, serde_json::Value>,
    rows: usize,
    skipped: Vec<serde_json::Value>,
    files: &'a [&'a str],
}

pub fn run_json(out: &RunOutput, files: &[&str]) -> Result<String> {
    let config = out
        .config
        .to_entries()
        .into_iter()
        .map(|(k, v)| (k, serde_json::Value::String(v)))
        .collect();
    let skipped = out
        .skipped
        .iter()
        .map(|(c, reason)| serde_json::json!({ "n": c.n, "m": c.m, "alpha": c.alpha, "sigma": c.sigma, "reason": reason }))
        .collect();
    let manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        package: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        experiment: out.config.experiment,
        seed: out.config.seed,
        config,
        rows: out.rows.len(),
        skipped,
        files,
    };
    Ok(serde_json::to_string_pretty(&manifest)?)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(name))?);
    f.write_all(contents.as_bytes())?;
    f.flush()?;
    Ok(())
}

/// Writes every output file of a run into `dir`; returns the file names.
pub fn write_outputs(out: &RunOutput, dir: &Path) -> Result<Vec<&'static str>> {
    std::fs::create_dir_all(dir)?;
    let mut files = vec!["results.csv", "timings.csv", "aggregates.csv", "pod_decay.csv"];
    write_file(dir, "results.csv", &results_csv(&out.rows))?;
    write_file(dir, "timings.csv", &timings_csv(&out.timings))?;
    write_file(dir, "aggregates.csv", &aggregates_csv(&out.aggregates))?;
    write_file(dir, "pod_decay.csv", &pod_decay_csv(&out.pod_decay))?;
    if let Some(d) = diagnostics_csv(&out.diagnostics) {
        write_file(dir, "diagnostics.csv", &d)?;
        files.push("diagnostics.csv");
    }
    if !out.table.is_empty() {
        write_file(dir, "table.csv", &table_csv(&out.table))?;
        files.push("table.csv");
    }
    files.push("run.json");
    write_file(dir, "run.json", &run_json(out, &files)?)?;
    Ok(files)
}
