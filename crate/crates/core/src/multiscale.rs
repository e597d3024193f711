//! Multiscale PBDW (sPBDW) for backgrounds with a discontinuous component.
//!
//! The slow (discontinuous) part of the state is located by an orthogonal
//! search over a dictionary of unit-norm step candidates; the remaining
//! smoothed measurements are assimilated on the fast reduced basis, and the
//! fitted smoothers are added back at the end.
//!
//! When the search runs on a dictionary deflated against the observed fast
//! space, the pipeline reproduces PBDW on `V_n ⊕ span(smoothers)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bias::{bpbdw_reconstruct, discrepancy_xi, NoiseModel};
use crate::error::{Error, Result};
use crate::manifold::{heaviside, ParameterRecord, Range, SnapshotSet};
use crate::obs::{inf_sup_beta, Measurement, ObservationSpace};
use crate::solver::{PbdwSolver, Reconstruction};
use crate::space::{orthonormalize, Grid, GridFunction, Subspace, DEFAULT_DROP_TOL};

pub const DEFAULT_DICT_STRIDE: usize = 4;
pub const DEFAULT_REL_TOL: f64 = 0.05;
pub const DEFAULT_MAX_ITERS: usize = 5;

const INVISIBLE_TOL: f64 = 1e-12;
const ORTHOGONALITY_TOL: f64 = 1e-8;

/// Orthogonal projector onto the complement of a column space, in `W_m` coordinates.
#[derive(Clone, Debug)]
struct Deflation {
    q: DMatrix<f64>,
}

impl Deflation {
    fn against(cross: &DMatrix<f64>) -> Self {
        let (m, n) = cross.shape();
        if n == 0 {
            return Self { q: DMatrix::zeros(m, 0) };
        }
        let svd = cross.clone().svd(true, false);
        let u = svd.u.expect("left singular vectors requested");
        let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&k| svd.singular_values[k] > 1e-12 * smax.max(1e-300))
            .collect();
        let q = DMatrix::from_fn(m, keep.len(), |i, j| u[(i, keep[j])]);
        Self { q }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(x);
        let out = &v - &self.q * (self.q.transpose() * &v);
        out.iter().copied().collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Sampled slow-manifold members, normalized to unit norm, with their observations.
#[derive(Clone, Debug)]
pub struct SlowDictionary {
    candidates: Vec<GridFunction>,
    locations: Vec<f64>,
    observed: Vec<Vec<f64>>,
    search: Vec<Vec<f64>>,
    search_norms: Vec<f64>,
    deflation: Option<Deflation>,
}

impl SlowDictionary {
    /// Normalizes `candidates` and drops any that `W_m` cannot see.
    pub fn new(candidates: Vec<GridFunction>, locations: Vec<f64>, space: &ObservationSpace) -> Result<Self> {
        if candidates.len() != locations.len() {
            return Err(Error::InvalidArgument("one location per dictionary candidate".into()));
        }
        let mut dict = Self {
            candidates: Vec::new(),
            locations: Vec::new(),
            observed: Vec::new(),
            search: Vec::new(),
            search_norms: Vec::new(),
            deflation: None,
        };
        let mut dropped = 0usize;
        for (c, loc) in candidates.into_iter().zip(locations) {
            let n = c.norm();
            if n == 0.0 {
                dropped += 1;
                continue;
            }
            let unit = c.scaled(1.0 / n);
            let obs = space.project(&unit)?.coeffs;
            let on = norm(&obs);
            if on <= INVISIBLE_TOL {
                dropped += 1;
                continue;
            }
            dict.candidates.push(unit);
            dict.locations.push(loc);
            dict.search.push(obs.clone());
            dict.search_norms.push(on);
            dict.observed.push(obs);
        }
        if dropped > 0 {
            log::warn!("dropped {dropped} dictionary candidates invisible to the observation space");
        }
        Ok(dict)
    }

    /// Unit steps `HS(x_k)` at every `stride`-th grid node inside `range`.
    pub fn heaviside(grid: Grid, space: &ObservationSpace, range: Range, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::InvalidArgument("dictionary stride must be at least 1".into()));
        }
        let locations: Vec<f64> = (0..grid.len())
            .map(|k| grid.node(k))
            .filter(|&x| range.contains(x) && x > grid.a())
            .step_by(stride)
            .collect();
        let candidates = locations.iter().map(|&x| heaviside(grid, x)).collect();
        Self::new(candidates, locations, space)
    }

    /// Dictionary from a sampled slow manifold, using jump locations when recorded.
    pub fn from_snapshots(set: &SnapshotSet, space: &ObservationSpace) -> Result<Self> {
        let locations = set
            .parameters()
            .iter()
            .map(|p| match p {
                ParameterRecord::Multiscale { jump_location, .. } => *jump_location,
                _ => f64::NAN,
            })
            .collect();
        Self::new(set.snapshots().to_vec(), locations, space)
    }

    /// Copy whose search runs in the complement of the columns of `cross`
    /// (the observed fast space). Candidates that vanish there are dropped.
    pub fn deflated(&self, cross: &DMatrix<f64>) -> Self {
        let deflation = Deflation::against(cross);
        let mut out = Self {
            candidates: Vec::new(),
            locations: Vec::new(),
            observed: Vec::new(),
            search: Vec::new(),
            search_norms: Vec::new(),
            deflation: None,
        };
        let mut dropped = 0usize;
        for k in 0..self.len() {
            let s = deflation.apply(&self.observed[k]);
            let sn = norm(&s);
            if sn <= 1e-10 * self.search_norms[k].max(INVISIBLE_TOL) {
                dropped += 1;
                continue;
            }
            out.candidates.push(self.candidates[k].clone());
            out.locations.push(self.locations[k]);
            out.observed.push(self.observed[k].clone());
            out.search.push(s);
            out.search_norms.push(sn);
        }
        if dropped > 0 {
            log::warn!("dropped {dropped} dictionary candidates lying in the observed fast space");
        }
        out.deflation = Some(deflation);
        out
    }

    pub fn is_deflated(&self) -> bool {
        self.deflation.is_some()
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn candidate(&self, k: usize) -> &GridFunction {
        &self.candidates[k]
    }

    pub fn location(&self, k: usize) -> f64 {
        self.locations[k]
    }

    /// Coordinates of `Π_{W_m}` applied to candidate `k`.
    pub fn observed(&self, k: usize) -> &[f64] {
        &self.observed[k]
    }

    fn to_search_metric(&self, omega: &[f64]) -> Vec<f64> {
        match &self.deflation {
            Some(d) => d.apply(omega),
            None => omega.to_vec(),
        }
    }

    fn best_match(&self, residual: &[f64]) -> Result<SearchHit> {
        if self.is_empty() {
            return Err(Error::Empty("slow dictionary"));
        }
        let mut best = SearchHit {
            index: 0,
            score: 0.0,
            amplitude: 0.0,
        };
        for (k, (a, an)) in self.search.iter().zip(&self.search_norms).enumerate() {
            let ip = dot(residual, a);
            let score = ip / an;
            if score.abs() > best.score.abs() {
                best = SearchHit {
                    index: k,
                    score,
                    amplitude: ip / (an * an),
                };
            }
        }
        Ok(best)
    }

    /// Search with every candidate deflated against the orthonormal columns of
    /// `chosen`; `residual` must already be orthogonal to them. Candidates lying
    /// in the chosen span are skipped.
    fn best_match_deflated(&self, residual: &[f64], chosen: &DMatrix<f64>) -> Option<SearchHit> {
        let r = DVector::from_column_slice(residual);
        let mut best: Option<SearchHit> = None;
        for (k, (a, an)) in self.search.iter().zip(&self.search_norms).enumerate() {
            let av = DVector::from_column_slice(a);
            let perp = &av - chosen * (chosen.transpose() * &av);
            let pn = perp.norm();
            if pn <= 1e-10 * an {
                continue;
            }
            let ip = r.dot(&perp);
            let score = ip / pn;
            if best.is_none_or(|b| score.abs() > b.score.abs()) {
                best = Some(SearchHit {
                    index: k,
                    score,
                    amplitude: ip / (pn * pn),
                });
            }
        }
        best
    }

    /// Least-squares amplitudes of `target` (search metric) on the selected candidates.
    fn fit(&self, target: &[f64], selected: &[usize]) -> Vec<f64> {
        if selected.is_empty() {
            return Vec::new();
        }
        let m = target.len();
        let a = DMatrix::from_fn(m, selected.len(), |i, j| self.search[selected[j]][i]);
        let b = DVector::from_column_slice(target);
        let sol = a
            .svd(true, true)
            .solve(&b, 1e-14)
            .expect("singular vectors requested");
        sol.iter().copied().collect()
    }

    fn search_residual(&self, target: &[f64], selected: &[usize], amplitudes: &[f64]) -> Vec<f64> {
        let mut r = target.to_vec();
        for (&k, &a) in selected.iter().zip(amplitudes) {
            for (ri, si) in r.iter_mut().zip(&self.search[k]) {
                *ri -= a * si;
            }
        }
        r
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchHit {
    /// Dictionary index of `u_OS`.
    pub index: usize,
    /// `⟨ω, Π u_OS⟩ / ‖Π u_OS‖`.
    pub score: f64,
    /// `argmin_α ‖ω − α Π u_OS‖`.
    pub amplitude: f64,
}

/// `u_OS = argmax_v |⟨ω, Π v / ‖Π v‖⟩|` over the dictionary (ties go to the lowest
/// index), together with the best-fitting amplitude. Maximizing the magnitude
/// picks the candidate with the smallest one-term residual, so steps of either
/// sign are found with a unit-height dictionary.
pub fn orthogonal_search(omega: &Measurement, dict: &SlowDictionary) -> Result<SearchHit> {
    dict.best_match(&dict.to_search_metric(&omega.coeffs))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmootherOptions {
    /// Stop once one iteration reduces the residual norm by less than this fraction.
    pub rel_tol: f64,
    pub max_iters: usize,
    /// Stop once the residual falls below this fraction of `‖ω‖`.
    pub residual_floor: f64,
    /// Search in the complement of the observed fast space (sPBDW only).
    pub deflate: bool,
}

impl Default for SmootherOptions {
    fn default() -> Self {
        Self {
            rel_tol: DEFAULT_REL_TOL,
            max_iters: DEFAULT_MAX_ITERS,
            residual_floor: 1e-10,
            deflate: true,
        }
    }
}

impl SmootherOptions {
    fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol <= 1.0) {
            return Err(Error::InvalidArgument(format!("rel_tol must be in (0, 1], got {}", self.rel_tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
        }
        if !(self.residual_floor >= 0.0) {
            return Err(Error::InvalidArgument("residual_floor must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Smoother {
    /// Dictionary index of the selected candidate.
    pub index: usize,
    pub location: f64,
    pub amplitude: f64,
}

#[derive(Clone, Debug)]
pub struct SmootherExtraction {
    pub smoothers: Vec<Smoother>,
    /// `f* = Σ α_k u_OS,k`.
    pub f_star: GridFunction,
    /// `ω_f = ω − Π_{W_m} f*`.
    pub omega_f: Measurement,
    /// Residual norms in the search metric, starting with the untouched data.
    pub residual_history: Vec<f64>,
}

/// Greedy extraction of smoothers.
///
/// Each iteration runs the orthogonal search on the current residual, with the
/// candidates deflated against the observations already selected, and refits
/// all selected amplitudes by least squares. A step whose
/// relative residual reduction is below `rel_tol` is discarded and ends the loop.
pub fn extract_smoothers(omega: &Measurement, dict: &SlowDictionary, opts: &SmootherOptions) -> Result<SmootherExtraction> {
    opts.validate()?;
    if dict.is_empty() {
        return Err(Error::Empty("slow dictionary"));
    }
    let target = dict.to_search_metric(&omega.coeffs);
    let floor = opts.residual_floor * omega.norm();
    let mut selected: Vec<usize> = Vec::new();
    let mut amplitudes: Vec<f64> = Vec::new();
    let mut residual = target.clone();
    let mut history = vec![norm(&residual)];
    let mut chosen = DMatrix::<f64>::zeros(target.len(), 0);

    for _ in 0..opts.max_iters {
        let current = *history.last().expect("history starts non-empty");
        if current == 0.0 || current <= floor {
            break;
        }
        let Some(hit) = dict.best_match_deflated(&residual, &chosen) else {
            break;
        };
        let mut trial = selected.clone();
        trial.push(hit.index);
        let trial_amps = dict.fit(&target, &trial);
        let trial_residual = dict.search_residual(&target, &trial, &trial_amps);
        let next = norm(&trial_residual).min(current);
        if (current - next) / current < opts.rel_tol {
            break;
        }
        let a = DVector::from_column_slice(&dict.search[hit.index]);
        let perp = &a - &chosen * (chosen.transpose() * &a);
        let q = perp.normalize();
        let cols = chosen.ncols();
        chosen = chosen.insert_column(cols, 0.0);
        chosen.set_column(cols, &q);
        selected = trial;
        amplitudes = trial_amps;
        residual = trial_residual;
        history.push(next);
    }

    let grid = *dict.candidate(0).grid();
    let mut f_star = GridFunction::zeros(grid);
    let mut omega_f = omega.clone();
    for (&k, &a) in selected.iter().zip(&amplitudes) {
        f_star.axpy(a, dict.candidate(k))?;
        for (o, v) in omega_f.coeffs.iter_mut().zip(dict.observed(k)) {
            *o -= a * v;
        }
    }
    let smoothers = selected
        .iter()
        .zip(&amplitudes)
        .map(|(&index, &amplitude)| Smoother {
            index,
            location: dict.location(index),
            amplitude,
        })
        .collect();
    Ok(SmootherExtraction {
        smoothers,
        f_star,
        omega_f,
        residual_history: history,
    })
}

#[derive(Clone, Debug)]
pub struct MultiscaleDecomposition {
    /// Step-1 smoothers with their fitted amplitudes.
    pub smoothers: Vec<Smoother>,
    /// Bias-corrected amplitudes used in `f_u`, one per smoother.
    pub corrected_amplitudes: Vec<f64>,
    pub f_star: GridFunction,
    pub omega_f: Measurement,
    /// `ũ_f`: PBDW (or bPBDW) on the smoothed measurements.
    pub u_f: Reconstruction,
    /// `η(ω*)`; equals `ω*` without a noise model.
    pub eta: Measurement,
    pub f_u: GridFunction,
    /// `u* = ũ_f + f_u`.
    pub u_star: GridFunction,
    pub residual_history: Vec<f64>,
}

/// The three-step sPBDW reconstruction.
///
/// 1. Extract smoothers `f*` and the smoothed data `ω_f = ω* − Π f*`.
/// 2. Reconstruct `ũ_f` from `ω_f` on the fast basis: classical PBDW, or bPBDW
///    when `model` is given.
/// 3. Refit the smoother amplitudes against `η(ω*)` to get `f_u`, and return
///    `u* = ũ_f + f_u`.
pub fn spbdw_reconstruct(
    omega_star: &Measurement,
    solver: &PbdwSolver<'_>,
    dict: &SlowDictionary,
    model: Option<&NoiseModel>,
    seed: u64,
    opts: &SmootherOptions,
) -> Result<MultiscaleDecomposition> {
    let deflated;
    let dict = if opts.deflate && !dict.is_deflated() {
        deflated = dict.deflated(solver.cross_gramian());
        &deflated
    } else {
        dict
    };
    let space = solver.space();
    let extraction = extract_smoothers(omega_star, dict, opts)?;

    let (u_f, eta) = match model {
        None => (solver.solve(&extraction.omega_f)?, omega_star.clone()),
        Some(model) => {
            let stages = bpbdw_reconstruct(&extraction.omega_f, solver, model, seed, None)?;
            let first_guess = stages.initial.state.add(&extraction.f_star)?;
            let eta = space.project(&first_guess)?.add(&discrepancy_xi(&first_guess, space, model, seed)?);
            (stages.corrected, eta)
        }
    };

    let selected: Vec<usize> = extraction.smoothers.iter().map(|s| s.index).collect();
    let corrected_amplitudes = dict.fit(&dict.to_search_metric(&eta.coeffs), &selected);
    let mut f_u = GridFunction::zeros(*space.grid());
    for (&k, &a) in selected.iter().zip(&corrected_amplitudes) {
        f_u.axpy(a, dict.candidate(k))?;
    }
    let u_star = u_f.state.add(&f_u)?;

    Ok(MultiscaleDecomposition {
        smoothers: extraction.smoothers,
        corrected_amplitudes,
        f_star: extraction.f_star,
        omega_f: extraction.omega_f,
        u_f,
        eta,
        f_u,
        u_star,
        residual_history: extraction.residual_history,
    })
}

/// Orthonormal basis of `span(slow)` orthogonalized against `background`.
pub fn slow_space(slow: &[GridFunction], background: &Subspace) -> Result<Subspace> {
    let grid = *background.grid();
    let mut all: Vec<GridFunction> = background.basis().to_vec();
    all.extend(slow.iter().cloned());
    let joint = orthonormalize(grid, &all, DEFAULT_DROP_TOL)?;
    Subspace::from_orthonormal(grid, joint.basis()[background.dim()..].to_vec())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiscaleBeta {
    /// `β(V^slow ⊕ V_n, W_m)`.
    pub combined: f64,
    /// `β(V_n, W_m)`.
    pub fast: f64,
    /// `β(V^slow, W_m)`; 1 for an empty slow space.
    pub slow: f64,
}

impl MultiscaleBeta {
    pub fn lower_bound(&self) -> f64 {
        self.fast.min(self.slow)
    }

    /// `combined ≥ min(fast, slow)` up to 1e-8. Guaranteed when `Π_W V^slow`
    /// and `Π_W V_n` are orthogonal; orthogonality of the spaces alone is not enough.
    pub fn bound_holds(&self) -> bool {
        self.combined >= self.lower_bound() - 1e-8
    }
}

/// Inf-sup constants of the fast space, the slow space and their orthogonal sum.
///
/// A combined constant below `min(fast, slow)` is logged, not rejected.
pub fn multiscale_beta_bound(slow: &Subspace, background: &Subspace, space: &ObservationSpace) -> Result<MultiscaleBeta> {
    slow.grid().check_same(background.grid())?;
    let mut max_inner: f64 = 0.0;
    for s in slow.basis() {
        for v in background.basis() {
            max_inner = max_inner.max(s.inner(v)?.abs());
        }
    }
    if max_inner > ORTHOGONALITY_TOL {
        return Err(Error::NotOrthogonal { max_inner });
    }
    let fast = inf_sup_beta(background, space)?;
    let slow_beta = inf_sup_beta(slow, space)?;
    let mut all = background.basis().to_vec();
    all.extend(slow.basis().iter().cloned());
    let joint = orthonormalize(*background.grid(), &all, DEFAULT_DROP_TOL)?;
    if joint.dim() != all.len() {
        return Err(Error::InvalidArgument("slow and fast spaces are linearly dependent".into()));
    }
    let combined = inf_sup_beta(&joint, space)?;
    let out = MultiscaleBeta {
        combined,
        fast,
        slow: slow_beta,
    };
    if !out.bound_holds() {
        log::warn!(
            "combined inf-sup constant {combined:.3e} is below min(fast, slow) = {:.3e}; \
             the observed fast and slow spaces are not orthogonal",
            out.lower_bound()
        );
    }
    Ok(out)
}
