//! Noise models, the measurement discrepancy `ξ`, and the two-step
//! bias-corrected reconstruction (bPBDW).
//!
//! The corrector fed to the second solve is
//! `η(ω*) = Π_{W_m} u₀* + ξ(u₀*)` with `ξ(u) = Π_{W_m} u − E[R(u)]`,
//! where `u₀*` is the classical PBDW reconstruction.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::obs::{Measurement, ObservationSpace};
use crate::rng::{derive_seed, stream};
use crate::solver::{BoxBounds, PbdwSolver, Reconstruction};
use crate::space::GridFunction;

pub const DEFAULT_MC_SAMPLES: usize = 1000;

/// Piecewise-constant reading offset as a function of the noiseless reading.
///
/// Bins are contiguous: `edges[i]..edges[i + 1]` maps to `offsets[i]`.
/// Readings outside the table use the nearest edge bin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffsetTable {
    edges: Vec<f64>,
    offsets: Vec<f64>,
}

impl OffsetTable {
    pub fn new(edges: Vec<f64>, offsets: Vec<f64>) -> Result<Self> {
        if offsets.is_empty() || edges.len() != offsets.len() + 1 {
            return Err(Error::InvalidArgument(format!(
                "offset table needs n + 1 edges for n bins, got {} edges and {} bins",
                edges.len(),
                offsets.len()
            )));
        }
        if edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument("offset table edges must be strictly increasing".into()));
        }
        Ok(Self { edges, offsets })
    }

    pub fn offset(&self, reading: f64) -> f64 {
        let bin = self.edges[1..self.edges.len() - 1]
            .iter()
            .take_while(|&&e| reading >= e)
            .count();
        self.offsets[bin]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    /// Readings scaled by `1 + alpha`.
    LinearBiasGaussian { alpha: f64 },
    /// Readings shifted by a tabulated, magnitude-dependent offset.
    EmpiricalTable(OffsetTable),
}

/// The randomized measurement map `R`: a state-dependent bias plus
/// independent Gaussian noise of spread `sigma` on every sensor reading.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub sigma: f64,
    pub mc_samples: usize,
}

impl NoiseModel {
    pub fn linear(alpha: f64, sigma: f64) -> Result<Self> {
        let m = Self {
            kind: NoiseKind::LinearBiasGaussian { alpha },
            sigma,
            mc_samples: DEFAULT_MC_SAMPLES,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn empirical(table: OffsetTable, sigma: f64, mc_samples: usize) -> Result<Self> {
        let m = Self {
            kind: NoiseKind::EmpiricalTable(table),
            sigma,
            mc_samples,
        };
        m.validate()?;
        Ok(m)
    }

    /// The noiseless, unbiased model.
    pub fn exact() -> Self {
        Self {
            kind: NoiseKind::LinearBiasGaussian { alpha: 0.0 },
            sigma: 0.0,
            mc_samples: DEFAULT_MC_SAMPLES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidArgument(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if self.mc_samples == 0 {
            return Err(Error::InvalidArgument("mc_samples must be at least 1".into()));
        }
        if let NoiseKind::LinearBiasGaussian { alpha } = self.kind {
            if !alpha.is_finite() {
                return Err(Error::InvalidArgument("alpha must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn alpha(&self) -> Option<f64> {
        match self.kind {
            NoiseKind::LinearBiasGaussian { alpha } => Some(alpha),
            NoiseKind::EmpiricalTable(_) => None,
        }
    }

    fn biased_reading(&self, reading: f64) -> f64 {
        match &self.kind {
            NoiseKind::LinearBiasGaussian { alpha } => (1.0 + alpha) * reading,
            NoiseKind::EmpiricalTable(table) => reading + table.offset(reading),
        }
    }
}

/// One draw of `R(u)`: biased sensor readings plus Gaussian noise, mapped to
/// orthonormal coordinates of `W_m`.
pub fn apply_noise(u: &GridFunction, space: &ObservationSpace, model: &NoiseModel, seed: u64) -> Result<Measurement> {
    let readings = space.readings(u)?;
    Ok(noisy_measurement(&readings, space, model, seed))
}

fn noisy_measurement(readings: &[f64], space: &ObservationSpace, model: &NoiseModel, seed: u64) -> Measurement {
    let mut noisy: Vec<f64> = readings.iter().map(|&r| model.biased_reading(r)).collect();
    if model.sigma > 0.0 {
        let mut rng = stream(seed);
        for z in noisy.iter_mut() {
            let e: f64 = StandardNormal.sample(&mut rng);
            *z += model.sigma * e;
        }
    }
    space.measurement_from_readings(&noisy)
}

/// `E[R(u)]`: closed form for the linear model, Monte Carlo otherwise.
pub fn noise_expectation(u: &GridFunction, space: &ObservationSpace, model: &NoiseModel, seed: u64) -> Result<Measurement> {
    match model.kind {
        NoiseKind::LinearBiasGaussian { alpha } => Ok(space.project(u)?.scaled(1.0 + alpha)),
        NoiseKind::EmpiricalTable(_) => noise_expectation_monte_carlo(u, space, model, model.mc_samples, seed),
    }
}

/// Sample mean of `samples` independent draws of `R(u)`.
///
/// Draw `i` uses the stream `derive_seed(seed, [i])`, and the mean is summed in
/// draw order, so the result does not depend on scheduling.
pub fn noise_expectation_monte_carlo(
    u: &GridFunction,
    space: &ObservationSpace,
    model: &NoiseModel,
    samples: usize,
    seed: u64,
) -> Result<Measurement> {
    if samples == 0 {
        return Err(Error::InvalidArgument("need at least one Monte Carlo sample".into()));
    }
    let readings = space.readings(u)?;
    let draw = |i: usize| noisy_measurement(&readings, space, model, derive_seed(seed, &[i as u64]));

    #[cfg(feature = "parallel")]
    let draws: Vec<Measurement> = {
        use rayon::prelude::*;
        (0..samples).into_par_iter().map(draw).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let draws: Vec<Measurement> = (0..samples).map(draw).collect();

    let mut sum = Measurement::zeros(space.m());
    for d in &draws {
        sum = sum.add(d);
    }
    Ok(sum.scaled(1.0 / samples as f64))
}

/// `ξ(u) = Π_{W_m} u − E[R(u)]`.
pub fn discrepancy_xi(u: &GridFunction, space: &ObservationSpace, model: &NoiseModel, seed: u64) -> Result<Measurement> {
    let projected = space.project(u)?;
    let expected = noise_expectation(u, space, model, seed)?;
    Ok(projected.sub(&expected))
}

/// Both stages of a bias-corrected reconstruction.
#[derive(Clone, Debug)]
pub struct BiasCorrected {
    /// Classical PBDW on the raw measurement.
    pub initial: Reconstruction,
    /// `η(ω*)`.
    pub corrector: Measurement,
    /// PBDW on the corrector.
    pub corrected: Reconstruction,
}

/// Two-step bPBDW: solve on `ω*`, build `η(ω*)` from the first state, solve again.
pub fn bpbdw_reconstruct(
    omega_star: &Measurement,
    solver: &PbdwSolver<'_>,
    model: &NoiseModel,
    seed: u64,
    bounds: Option<&BoxBounds>,
) -> Result<BiasCorrected> {
    let solve = |target: &Measurement| match bounds {
        Some(b) => solver.solve_boxed(target, b),
        None => solver.solve(target),
    };
    let initial = solve(omega_star)?;
    let space = solver.space();
    let xi = discrepancy_xi(&initial.state, space, model, seed)?;
    let corrector = space.project(&initial.state)?.add(&xi);
    let corrected = solve(&corrector)?;
    Ok(BiasCorrected {
        initial,
        corrector,
        corrected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::obs::{build_observation_space, observe, SensorArray, SensorKind};
    use crate::space::{Grid, Subspace};
    use std::f64::consts::PI;

    fn periodic_space(m: usize) -> (Grid, ObservationSpace) {
        let g = Grid::default_periodic();
        let w = build_observation_space(&SensorArray::equidistant(&g, m, false).unwrap(), &g).unwrap();
        (g, w)
    }

    fn full_domain_sensor() -> (Grid, ObservationSpace) {
        let g = Grid::new(0.0, 2.0 * PI, 129).unwrap();
        let s = SensorArray::new(vec![PI], SensorKind::BoxAverage { width: 2.0 * PI }).unwrap();
        (g, build_observation_space(&s, &g).unwrap())
    }

    #[test]
    fn degenerate_model_equals_noiseless_observation() {
        let (g, w) = periodic_space(25);
        let u = GridFunction::from_fn(g, |x| 30.0 * x.sin() + 2.0);
        let a = apply_noise(&u, &w, &NoiseModel::exact(), 5).unwrap();
        let b = observe(&u, &w).unwrap();
        assert!(a.sub(&b).norm() < 1e-12 * b.norm());
    }

    #[test]
    fn same_seed_same_draw() {
        let (g, w) = periodic_space(10);
        let u = GridFunction::from_fn(g, |x| x.cos());
        let model = NoiseModel::linear(0.2, 0.5).unwrap();
        assert_eq!(apply_noise(&u, &w, &model, 9).unwrap(), apply_noise(&u, &w, &model, 9).unwrap());
        assert_ne!(apply_noise(&u, &w, &model, 9).unwrap(), apply_noise(&u, &w, &model, 10).unwrap());
    }

    #[test]
    fn noise_statistics_match_mapped_covariance() {
        let (g, w) = periodic_space(50);
        let zero = GridFunction::zeros(g);
        let model = NoiseModel::linear(0.0, 1.0).unwrap();
        let draws = 2000;
        let samples: Vec<Measurement> = (0..draws).map(|s| apply_noise(&zero, &w, &model, s as u64).unwrap()).collect();

        // Oracle covariance: coords = M^{-1} ζ with ζ ~ N(0, I), so Cov = M^{-1} M^{-T}.
        let m = nalgebra::DMatrix::from_fn(50, 50, |i, k| w.raw_representers()[i].inner(&w.onb().basis()[k]).unwrap());
        let minv = m.try_inverse().unwrap();
        let cov = &minv * minv.transpose();
        for k in 0..50 {
            let xs: Vec<f64> = samples.iter().map(|s| s.coeffs[k]).collect();
            let mean = xs.iter().sum::<f64>() / draws as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
            let sd = cov[(k, k)].sqrt();
            assert!(mean.abs() < 3.0 * sd / (draws as f64).sqrt(), "coord {k}: mean {mean}");
            assert!((var - cov[(k, k)]).abs() < 0.1 * cov[(k, k)], "coord {k}: var {var} vs {}", cov[(k, k)]);
        }
    }

    #[test]
    fn analytic_expectation_of_biased_constant() {
        let (g, w) = full_domain_sensor();
        let one = GridFunction::from_fn(g, |_| 1.0);
        let model = NoiseModel::linear(0.2, 0.0).unwrap();
        let e = noise_expectation(&one, &w, &model, 0).unwrap();
        assert!((w.readings_of(&e)[0] - 1.2).abs() < 1e-12);
        let noisy = apply_noise(&one, &w, &model, 0).unwrap();
        assert!((w.readings_of(&noisy)[0] - 1.2).abs() < 1e-12);
    }

    #[test]
    fn unbiased_expectation_is_projection() {
        let (g, w) = periodic_space(12);
        let u = GridFunction::from_fn(g, |x| (2.0 * x).sin() + 0.5);
        let model = NoiseModel::linear(0.0, 3.0).unwrap();
        assert_eq!(noise_expectation(&u, &w, &model, 1).unwrap(), observe(&u, &w).unwrap());
    }

    #[test]
    fn monte_carlo_agrees_with_closed_form() {
        let (g, w) = periodic_space(8);
        let u = GridFunction::from_fn(g, |x| 2.0 * x.sin() + 1.0);
        let model = NoiseModel::linear(0.1, 0.05).unwrap();
        let analytic = noise_expectation(&u, &w, &model, 0).unwrap();
        let samples = 10_000;
        let mc = noise_expectation_monte_carlo(&u, &w, &model, samples, 77).unwrap();
        // Per-coordinate spread of the mapped noise is sigma * sqrt(Cov_kk).
        let m = nalgebra::DMatrix::from_fn(8, 8, |i, k| w.raw_representers()[i].inner(&w.onb().basis()[k]).unwrap());
        let minv = m.try_inverse().unwrap();
        let cov = &minv * minv.transpose();
        for k in 0..8 {
            let sd = model.sigma * cov[(k, k)].sqrt();
            assert!((mc.coeffs[k] - analytic.coeffs[k]).abs() < 4.0 * sd / (samples as f64).sqrt());
        }
    }

    #[test]
    fn discrepancy_closed_forms() {
        let (g, w) = full_domain_sensor();
        let one = GridFunction::from_fn(g, |_| 1.0);
        let xi = discrepancy_xi(&one, &w, &NoiseModel::linear(0.1, 0.0).unwrap(), 0).unwrap();
        assert!((w.readings_of(&xi)[0] + 0.1).abs() < 1e-12);
        let xi0 = discrepancy_xi(&one, &w, &NoiseModel::linear(0.0, 1.0).unwrap(), 0).unwrap();
        assert!(xi0.norm() < 1e-12);

        let (g, w) = periodic_space(20);
        let u = GridFunction::from_fn(g, |x| (1.3 * x).cos() * x);
        let xi = discrepancy_xi(&u, &w, &NoiseModel::linear(0.3, 2.0).unwrap(), 0).unwrap();
        let obs = observe(&u, &w).unwrap();
        for (a, b) in xi.coeffs.iter().zip(&obs.coeffs) {
            assert!((a + 0.3 * b).abs() < 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn empirical_table_lookup_and_expectation() {
        let table = OffsetTable::new(vec![-10.0, 0.0, 10.0], vec![-1.0, 2.0]).unwrap();
        assert_eq!(table.offset(-50.0), -1.0);
        assert_eq!(table.offset(-0.5), -1.0);
        assert_eq!(table.offset(0.0), 2.0);
        assert_eq!(table.offset(99.0), 2.0);
        assert!(OffsetTable::new(vec![0.0, 0.0], vec![1.0]).is_err());
        assert!(OffsetTable::new(vec![0.0], vec![1.0]).is_err());

        let (g, w) = full_domain_sensor();
        let u = GridFunction::from_fn(g, |_| 4.0);
        let model = NoiseModel::empirical(table, 0.5, 4000).unwrap();
        let e = noise_expectation(&u, &w, &model, 3).unwrap();
        assert!((w.readings_of(&e)[0] - 6.0).abs() < 4.0 * 0.5 / (4000f64).sqrt());
        assert_eq!(e, noise_expectation(&u, &w, &model, 3).unwrap());
    }

    #[test]
    fn invalid_models() {
        assert!(NoiseModel::linear(0.1, -1.0).is_err());
        assert!(NoiseModel::linear(f64::NAN, 1.0).is_err());
        let t = OffsetTable::new(vec![0.0, 1.0], vec![0.0]).unwrap();
        assert!(NoiseModel::empirical(t, 0.1, 0).is_err());
    }

    #[test]
    fn identity_corrector_reproduces_pbdw() {
        let (g, w) = periodic_space(25);
        let raw: Vec<GridFunction> = (1..=4).map(|j| GridFunction::from_fn(g, move |x| (j as f64 * 0.7 * x).sin())).collect();
        let vn = crate::space::orthonormalize(g, &raw, 1e-10).unwrap();
        let solver = PbdwSolver::new(&vn, &w).unwrap();
        let u = GridFunction::from_fn(g, |x| 3.0 * (0.7 * x).sin() + (2.1 * x).sin());
        let omega = observe(&u, &w).unwrap();
        let out = bpbdw_reconstruct(&omega, &solver, &NoiseModel::exact(), 0, None).unwrap();
        assert!(out.corrector.sub(&omega).norm() < 1e-9 * omega.norm());
        assert!(out.corrected.state.sub(&out.initial.state).unwrap().norm() < 1e-9 * u.norm());
    }

    #[test]
    fn scalar_chain_debiases_to_second_order() {
        // Single full-domain sensor, V_n spanned by the truth itself.
        let (g, w) = full_domain_sensor();
        let truth = GridFunction::from_fn(g, |x| 2.0 + 0.5 * x.sin());
        let vn = Subspace::from_orthonormal(g, vec![truth.scaled(1.0 / truth.norm())]).unwrap();
        let solver = PbdwSolver::new(&vn, &w).unwrap();
        for alpha in [0.05, 0.1, 0.2] {
            let model = NoiseModel::linear(alpha, 0.0).unwrap();
            let omega = apply_noise(&truth, &w, &model, 0).unwrap();
            let out = bpbdw_reconstruct(&omega, &solver, &model, 0, None).unwrap();
            let pbdw_err = out.initial.state.sub(&truth).unwrap().norm() / truth.norm();
            let bpbdw_err = out.corrected.state.sub(&truth).unwrap().norm() / truth.norm();
            assert!((pbdw_err - alpha).abs() < 1e-10);
            assert!((bpbdw_err - alpha * alpha).abs() < 1e-10);
        }
    }
}
