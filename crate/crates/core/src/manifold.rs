//! Parametrized background families and their seeded samplers.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, uniform};
use crate::space::{Grid, GridFunction};

/// A closed parameter interval `[min, max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn point(v: f64) -> Self {
        Self { min: v, max: v }
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.min + self.max)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.min <= x && x <= self.max
    }

    fn check(&self, what: &str) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite()) || self.min > self.max {
            return Err(Error::InvalidArgument(format!(
                "{what} range [{}, {}] is not well ordered",
                self.min, self.max
            )));
        }
        Ok(())
    }
}

/// `A sin(2πx / T)` with `(A, T)` uniform on the given ranges.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SinusoidSpec {
    pub amplitude: Range,
    pub period: Range,
}

impl SinusoidSpec {
    pub fn validate(&self) -> Result<()> {
        self.amplitude.check("amplitude")?;
        self.period.check("period")?;
        if self.period.min <= 0.0 {
            return Err(Error::InvalidArgument("periods must be positive".into()));
        }
        Ok(())
    }
}

impl Default for SinusoidSpec {
    /// Ranges chosen so that `A = 32.5`, `T = 2π` is an interior point.
    fn default() -> Self {
        Self {
            amplitude: Range::new(25.0, 40.0),
            period: Range::new(PI, 2.0 * PI),
        }
    }
}

/// Smooth multi-frequency signal plus a single Heaviside jump.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiscaleSpec {
    pub num_frequencies: usize,
    pub amplitude: Range,
    pub period: Range,
    pub phase: Range,
    pub jump_location: Range,
    pub jump_height: Range,
}

impl MultiscaleSpec {
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if self.num_frequencies == 0 {
            return Err(Error::InvalidArgument("need at least one frequency".into()));
        }
        self.amplitude.check("amplitude")?;
        self.period.check("period")?;
        self.phase.check("phase")?;
        self.jump_location.check("jump location")?;
        self.jump_height.check("jump height")?;
        if self.period.min <= 0.0 {
            return Err(Error::InvalidArgument("periods must be positive".into()));
        }
        if self.jump_location.min <= grid.a() || self.jump_location.max >= grid.b() {
            return Err(Error::InvalidArgument(format!(
                "jump locations [{}, {}] must lie strictly inside the domain",
                self.jump_location.min, self.jump_location.max
            )));
        }
        Ok(())
    }
}

impl Default for MultiscaleSpec {
    fn default() -> Self {
        Self {
            num_frequencies: 3,
            amplitude: Range::new(0.5, 1.5),
            period: Range::new(PI, 2.0 * PI),
            phase: Range::new(0.0, 2.0 * PI),
            jump_location: Range::new(0.5 * PI, 1.5 * PI),
            jump_height: Range::new(0.5, 2.0),
        }
    }
}

/// Power-law pipe-flow profile `v0 (1 - (|r|/R)^(1 + 1/ñ))` on `[-R, R]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawSpec {
    pub peak_velocity: Range,
    pub flow_index: Range,
    pub radius: f64,
}

impl PowerLawSpec {
    pub fn validate(&self) -> Result<()> {
        self.peak_velocity.check("peak velocity")?;
        self.flow_index.check("flow index")?;
        if self.peak_velocity.min < 0.0 {
            return Err(Error::InvalidArgument("peak velocities must be non-negative".into()));
        }
        if self.flow_index.min <= 0.0 {
            return Err(Error::InvalidArgument("flow indices must be positive".into()));
        }
        if !(self.radius > 0.0) {
            return Err(Error::InvalidArgument("radius must be positive".into()));
        }
        Ok(())
    }
}

impl Default for PowerLawSpec {
    fn default() -> Self {
        Self {
            peak_velocity: Range::new(40.0, 60.0),
            flow_index: Range::new(0.8, 1.2),
            radius: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifoldLabel {
    Fast,
    Slow,
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ParameterRecord {
    Sinusoid {
        amplitude: f64,
        period: f64,
    },
    Multiscale {
        amplitudes: Vec<f64>,
        periods: Vec<f64>,
        phases: Vec<f64>,
        jump_location: f64,
        jump_height: f64,
    },
    PowerLaw {
        peak_velocity: f64,
        flow_index: f64,
    },
}

/// Sampled members of a manifold with the parameters that generated them.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotSet {
    grid: Grid,
    snapshots: Vec<GridFunction>,
    parameters: Vec<ParameterRecord>,
    label: ManifoldLabel,
}

impl SnapshotSet {
    pub fn new(
        grid: Grid,
        snapshots: Vec<GridFunction>,
        parameters: Vec<ParameterRecord>,
        label: ManifoldLabel,
    ) -> Result<Self> {
        if snapshots.len() != parameters.len() {
            return Err(Error::InvalidArgument(format!(
                "{} snapshots but {} parameter records",
                snapshots.len(),
                parameters.len()
            )));
        }
        for s in &snapshots {
            grid.check_same(s.grid())?;
        }
        Ok(Self {
            grid,
            snapshots,
            parameters,
            label,
        })
    }

    /// Snapshot set without parameter records (e.g. hand-built test sets).
    pub fn from_functions(grid: Grid, snapshots: Vec<GridFunction>, label: ManifoldLabel) -> Result<Self> {
        let parameters = snapshots
            .iter()
            .map(|_| ParameterRecord::Sinusoid {
                amplitude: f64::NAN,
                period: f64::NAN,
            })
            .collect();
        Self::new(grid, snapshots, parameters, label)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn snapshots(&self) -> &[GridFunction] {
        &self.snapshots
    }

    pub fn parameters(&self) -> &[ParameterRecord] {
        &self.parameters
    }

    pub fn label(&self) -> ManifoldLabel {
        self.label
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }
}

/// `HS(x')`: 1 for `x >= x'`, 0 otherwise.
pub fn heaviside(grid: Grid, jump_location: f64) -> GridFunction {
    GridFunction::from_fn(grid, |x| if x >= jump_location { 1.0 } else { 0.0 })
}

pub fn sinusoid(grid: Grid, amplitude: f64, period: f64) -> GridFunction {
    GridFunction::from_fn(grid, |x| amplitude * (2.0 * PI * x / period).sin())
}

pub fn power_law_profile(grid: Grid, peak_velocity: f64, flow_index: f64, radius: f64) -> GridFunction {
    let exponent = 1.0 + 1.0 / flow_index;
    GridFunction::from_fn(grid, |r| {
        let t = (r.abs() / radius).min(1.0);
        peak_velocity * (1.0 - t.powf(exponent))
    })
}

fn check_count(count: usize) -> Result<()> {
    if count == 0 {
        Err(Error::InvalidArgument("snapshot count must be at least 1".into()))
    } else {
        Ok(())
    }
}

pub fn sample_sinusoids(spec: &SinusoidSpec, grid: Grid, count: usize, seed: u64) -> Result<SnapshotSet> {
    spec.validate()?;
    check_count(count)?;
    let mut rng = stream(seed);
    let mut snapshots = Vec::with_capacity(count);
    let mut parameters = Vec::with_capacity(count);
    for _ in 0..count {
        let amplitude = uniform(&mut rng, spec.amplitude.min, spec.amplitude.max);
        let period = uniform(&mut rng, spec.period.min, spec.period.max);
        snapshots.push(sinusoid(grid, amplitude, period));
        parameters.push(ParameterRecord::Sinusoid { amplitude, period });
    }
    SnapshotSet::new(grid, snapshots, parameters, ManifoldLabel::Full)
}

/// Fast, slow and full members of the multiscale family, sharing draws so that
/// `full[k] = fast[k] + slow[k]` exactly.
#[derive(Clone, Debug)]
pub struct MultiscaleSample {
    pub fast: SnapshotSet,
    pub slow: SnapshotSet,
    pub full: SnapshotSet,
}

pub fn multiscale_fast(grid: Grid, amplitudes: &[f64], periods: &[f64], phases: &[f64]) -> GridFunction {
    let nf = amplitudes.len() as f64;
    GridFunction::from_fn(grid, |x| {
        amplitudes
            .iter()
            .zip(periods)
            .zip(phases)
            .map(|((a, t), d)| a * (2.0 * PI * x / t + d).sin())
            .sum::<f64>()
            / nf
    })
}

pub fn sample_multiscale(spec: &MultiscaleSpec, grid: Grid, count: usize, seed: u64) -> Result<MultiscaleSample> {
    spec.validate(&grid)?;
    check_count(count)?;
    let mut rng = stream(seed);
    let (mut fast, mut slow, mut full) = (Vec::new(), Vec::new(), Vec::new());
    let mut parameters = Vec::with_capacity(count);
    let nf = spec.num_frequencies;
    for _ in 0..count {
        let amplitudes: Vec<f64> = (0..nf)
            .map(|_| uniform(&mut rng, spec.amplitude.min, spec.amplitude.max))
            .collect();
        let periods: Vec<f64> = (0..nf).map(|_| uniform(&mut rng, spec.period.min, spec.period.max)).collect();
        let phases: Vec<f64> = (0..nf).map(|_| uniform(&mut rng, spec.phase.min, spec.phase.max)).collect();
        let jump_location = uniform(&mut rng, spec.jump_location.min, spec.jump_location.max);
        let jump_height = uniform(&mut rng, spec.jump_height.min, spec.jump_height.max);

        let f = multiscale_fast(grid, &amplitudes, &periods, &phases);
        let s = heaviside(grid, jump_location).scaled(jump_height);
        let u = f.add(&s)?;
        fast.push(f);
        slow.push(s);
        full.push(u);
        parameters.push(ParameterRecord::Multiscale {
            amplitudes,
            periods,
            phases,
            jump_location,
            jump_height,
        });
    }
    Ok(MultiscaleSample {
        fast: SnapshotSet::new(grid, fast, parameters.clone(), ManifoldLabel::Fast)?,
        slow: SnapshotSet::new(grid, slow, parameters.clone(), ManifoldLabel::Slow)?,
        full: SnapshotSet::new(grid, full, parameters, ManifoldLabel::Full)?,
    })
}

pub fn sample_powerlaw(spec: &PowerLawSpec, grid: Grid, count: usize, seed: u64) -> Result<SnapshotSet> {
    spec.validate()?;
    check_count(count)?;
    let tol = 1e-12 * spec.radius.max(1.0);
    if (grid.a() + spec.radius).abs() > tol || (grid.b() - spec.radius).abs() > tol {
        return Err(Error::InvalidArgument(format!(
            "grid {grid} does not span [-R, R] for R = {}",
            spec.radius
        )));
    }
    let mut rng = stream(seed);
    let mut snapshots = Vec::with_capacity(count);
    let mut parameters = Vec::with_capacity(count);
    for _ in 0..count {
        let peak_velocity = uniform(&mut rng, spec.peak_velocity.min, spec.peak_velocity.max);
        let flow_index = uniform(&mut rng, spec.flow_index.min, spec.flow_index.max);
        snapshots.push(power_law_profile(grid, peak_velocity, flow_index, spec.radius));
        parameters.push(ParameterRecord::PowerLaw {
            peak_velocity,
            flow_index,
        });
    }
    SnapshotSet::new(grid, snapshots, parameters, ManifoldLabel::Full)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::default_periodic()
    }

    #[test]
    fn point_parameter_space_gives_sine() {
        let spec = SinusoidSpec {
            amplitude: Range::point(1.0),
            period: Range::point(2.0 * PI),
        };
        let set = sample_sinusoids(&spec, grid(), 4, 11).unwrap();
        let g = grid();
        for s in set.snapshots() {
            for (k, v) in s.values().iter().enumerate() {
                assert!((v - g.node(k).sin()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let spec = SinusoidSpec::default();
        let a = sample_sinusoids(&spec, grid(), 5, 42).unwrap();
        let b = sample_sinusoids(&spec, grid(), 5, 42).unwrap();
        for (x, y) in a.snapshots().iter().zip(b.snapshots()) {
            assert!(x.values().iter().zip(y.values()).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
        assert_eq!(a.parameters(), b.parameters());
    }

    #[test]
    fn amplitude_mean_within_three_standard_errors() {
        let spec = SinusoidSpec::default();
        let set = sample_sinusoids(&spec, Grid::new(0.0, 2.0 * PI, 16).unwrap(), 1000, 5).unwrap();
        let amps: Vec<f64> = set
            .parameters()
            .iter()
            .map(|p| match p {
                ParameterRecord::Sinusoid { amplitude, .. } => *amplitude,
                _ => unreachable!(),
            })
            .collect();
        let n = amps.len() as f64;
        let mean = amps.iter().sum::<f64>() / n;
        let var = amps.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        assert!((mean - spec.amplitude.mid()).abs() < 3.0 * se);
        for s in set.snapshots() {
            assert!(s.max_abs() <= spec.amplitude.max + 1e-12);
        }
    }

    #[test]
    fn zero_jump_height_means_full_equals_fast() {
        let spec = MultiscaleSpec {
            jump_height: Range::point(0.0),
            ..Default::default()
        };
        let s = sample_multiscale(&spec, grid(), 6, 3).unwrap();
        for ((f, sl), u) in s.fast.snapshots().iter().zip(s.slow.snapshots()).zip(s.full.snapshots()) {
            assert_eq!(sl.max_abs(), 0.0);
            assert_eq!(f, u);
        }
    }

    #[test]
    fn closed_form_multiscale_member() {
        let spec = MultiscaleSpec {
            num_frequencies: 1,
            amplitude: Range::point(1.0),
            period: Range::point(2.0 * PI),
            phase: Range::point(0.0),
            jump_location: Range::point(PI),
            jump_height: Range::point(1.0),
        };
        let g = grid();
        let s = sample_multiscale(&spec, g, 1, 0).unwrap();
        for (k, v) in s.full.snapshots()[0].values().iter().enumerate() {
            let x = g.node(k);
            let expected = x.sin() + if x >= PI { 1.0 } else { 0.0 };
            assert!((v - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn full_is_exact_sum() {
        let s = sample_multiscale(&MultiscaleSpec::default(), grid(), 20, 9).unwrap();
        for ((f, sl), u) in s.fast.snapshots().iter().zip(s.slow.snapshots()).zip(s.full.snapshots()) {
            let worst = u
                .values()
                .iter()
                .zip(f.values().iter().zip(sl.values()))
                .map(|(u, (f, s))| (u - (f + s)).abs())
                .fold(0.0, f64::max);
            assert_eq!(worst, 0.0);
        }
    }

    #[test]
    fn jump_range_must_be_interior() {
        let spec = MultiscaleSpec {
            jump_location: Range::new(0.0, 1.0),
            ..Default::default()
        };
        assert!(sample_multiscale(&spec, grid(), 1, 0).is_err());
    }

    fn tube_grid() -> Grid {
        Grid::new(-0.5, 0.5, 101).unwrap()
    }

    #[test]
    fn parabolic_profile() {
        let spec = PowerLawSpec {
            peak_velocity: Range::point(50.0),
            flow_index: Range::point(1.0),
            radius: 0.5,
        };
        let g = tube_grid();
        let set = sample_powerlaw(&spec, g, 1, 0).unwrap();
        let u = &set.snapshots()[0];
        assert!((u.values()[50] - 50.0).abs() < 1e-12);
        assert!(u.values()[0].abs() < 1e-12);
        assert!(u.values()[100].abs() < 1e-12);
        for (k, v) in u.values().iter().enumerate() {
            let r = g.node(k);
            assert!((v - 50.0 * (1.0 - (r / 0.5).powi(2))).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_peak_gives_zero_profiles() {
        let spec = PowerLawSpec {
            peak_velocity: Range::point(0.0),
            ..Default::default()
        };
        let set = sample_powerlaw(&spec, tube_grid(), 3, 1).unwrap();
        assert!(set.snapshots().iter().all(|s| s.max_abs() == 0.0));
    }

    #[test]
    fn large_flow_index_approaches_plug_flow() {
        let g = tube_grid();
        let u = power_law_profile(g, 50.0, 100.0, 0.5);
        // Direct evaluation: 1 - 0.5^(1.01)
        let oracle = 50.0 * (1.0 - 0.5f64.powf(1.0 + 1.0 / 100.0));
        let k = g.nearest_node(0.25);
        assert!((u.values()[k] - oracle).abs() < 1e-10);
        assert!(u.values()[k] >= 0.95 * 50.0 * 0.5);
    }

    #[test]
    fn power_law_bounds_and_symmetry() {
        let spec = PowerLawSpec::default();
        let g = tube_grid();
        let set = sample_powerlaw(&spec, g, 30, 4).unwrap();
        for (s, p) in set.snapshots().iter().zip(set.parameters()) {
            let ParameterRecord::PowerLaw { peak_velocity, .. } = p else { unreachable!() };
            let v = s.values();
            for k in 0..v.len() {
                assert!(v[k] >= 0.0 && v[k] <= peak_velocity + 1e-12);
                assert!((v[k] - v[v.len() - 1 - k]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn power_law_grid_must_match_radius() {
        assert!(sample_powerlaw(&PowerLawSpec::default(), grid(), 2, 0).is_err());
    }
}
