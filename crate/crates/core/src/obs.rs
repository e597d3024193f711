//! Sensors, their Riesz representers and the observation space `W_m`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{orthonormalize_tracked, Grid, GridFunction, Subspace, DEFAULT_DROP_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SensorKind {
    Pointwise,
    BoxAverage { width: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorArray {
    centers: Vec<f64>,
    kind: SensorKind,
}

impl SensorArray {
    pub fn new(centers: Vec<f64>, kind: SensorKind) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::Empty("sensor array"));
        }
        if centers.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument("sensor centers must be strictly increasing".into()));
        }
        if let SensorKind::BoxAverage { width } = kind {
            if !(width > 0.0) {
                return Err(Error::InvalidArgument(format!("box width must be positive, got {width}")));
            }
        }
        Ok(Self { centers, kind })
    }

    /// `m` sensors at the midpoints of `m` equal cells of `[a, b]`.
    ///
    /// Box sensors get the cell width, so the windows tile the domain.
    pub fn equidistant(grid: &Grid, m: usize, pointwise: bool) -> Result<Self> {
        if m == 0 {
            return Err(Error::Empty("sensor array"));
        }
        let cell = (grid.b() - grid.a()) / m as f64;
        let centers = (0..m).map(|i| grid.a() + (i as f64 + 0.5) * cell).collect();
        let kind = if pointwise {
            SensorKind::Pointwise
        } else {
            SensorKind::BoxAverage { width: cell }
        };
        Self::new(centers, kind)
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn kind(&self) -> SensorKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    fn check_on(&self, grid: &Grid) -> Result<()> {
        for &c in &self.centers {
            if !(c > grid.a() && c < grid.b()) {
                return Err(Error::InvalidArgument(format!(
                    "sensor center {c} is not strictly inside {grid}"
                )));
            }
        }
        Ok(())
    }

    /// Riesz representer of sensor `i` on `grid`.
    fn representer(&self, i: usize, grid: &Grid) -> Result<GridFunction> {
        let c = self.centers[i];
        let mut values = vec![0.0; grid.len()];
        match self.kind {
            SensorKind::Pointwise => {
                let k = grid.nearest_node(c);
                values[k] = 1.0 / grid.weight(k);
            }
            SensorKind::BoxAverage { width } => {
                let (lo, hi) = (c - 0.5 * width, c + 0.5 * width);
                let inside: Vec<usize> = (0..grid.len())
                    .filter(|&k| {
                        let x = grid.node(k);
                        x >= lo && x <= hi
                    })
                    .collect();
                let measure: f64 = inside.iter().map(|&k| grid.weight(k)).sum();
                if inside.is_empty() || measure <= 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "box sensor {i} at {c} (width {width}) covers no grid node"
                    )));
                }
                for k in inside {
                    values[k] = 1.0 / measure;
                }
            }
        }
        GridFunction::new(*grid, values)
    }
}

/// `W_m`: raw representers, an orthonormal basis, and the map between
/// sensor readings and orthonormal coordinates.
#[derive(Clone, Debug)]
pub struct ObservationSpace {
    sensors: SensorArray,
    raw: Vec<GridFunction>,
    onb: Subspace,
    // raw_in_onb[(i, k)] = ⟨ω_i, e_k⟩, so readings = raw_in_onb · coords.
    raw_in_onb: DMatrix<f64>,
    readings_to_coords: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

/// Coordinates of an element of `W_m` in the orthonormal basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub coeffs: Vec<f64>,
}

impl Measurement {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn zeros(m: usize) -> Self {
        Self { coeffs: vec![0.0; m] }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, s: f64) -> Measurement {
        Measurement::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    pub fn add(&self, other: &Measurement) -> Measurement {
        Measurement::new(self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Measurement) -> Measurement {
        Measurement::new(self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect())
    }

    pub fn dot(&self, other: &Measurement) -> f64 {
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b).sum()
    }
}

pub fn build_observation_space(sensors: &SensorArray, grid: &Grid) -> Result<ObservationSpace> {
    sensors.check_on(grid)?;
    let raw = (0..sensors.len())
        .map(|i| sensors.representer(i, grid))
        .collect::<Result<Vec<_>>>()?;
    let (onb, dropped) = orthonormalize_tracked(*grid, &raw, DEFAULT_DROP_TOL)?;
    if !dropped.is_empty() {
        return Err(Error::DependentSensors { dependent: dropped });
    }
    let m = raw.len();
    let raw_in_onb = DMatrix::from_fn(m, m, |i, k| raw[i].inner(&onb.basis()[k]).expect("shared grid"));
    let readings_to_coords = raw_in_onb.clone().lu();
    Ok(ObservationSpace {
        sensors: sensors.clone(),
        raw,
        onb,
        raw_in_onb,
        readings_to_coords,
    })
}

impl ObservationSpace {
    pub fn grid(&self) -> &Grid {
        self.onb.grid()
    }

    pub fn m(&self) -> usize {
        self.raw.len()
    }

    pub fn sensors(&self) -> &SensorArray {
        &self.sensors
    }

    pub fn raw_representers(&self) -> &[GridFunction] {
        &self.raw
    }

    pub fn onb(&self) -> &Subspace {
        &self.onb
    }

    /// Sensor readings `ℓ_i(u) = ⟨ω_i, u⟩`.
    pub fn readings(&self, u: &GridFunction) -> Result<Vec<f64>> {
        self.raw.iter().map(|w| w.inner(u)).collect()
    }

    /// Readings of the `W_m` element with the given coordinates.
    pub fn readings_of(&self, m: &Measurement) -> Vec<f64> {
        let v = &self.raw_in_onb * DVector::from_column_slice(&m.coeffs);
        v.iter().copied().collect()
    }

    /// The `W_m` element whose readings equal `readings`.
    pub fn measurement_from_readings(&self, readings: &[f64]) -> Measurement {
        assert_eq!(readings.len(), self.m(), "one reading per sensor");
        let coords = self
            .readings_to_coords
            .solve(&DVector::from_column_slice(readings))
            .expect("independent sensors give an invertible reading map");
        Measurement::new(coords.iter().copied().collect())
    }

    /// Coordinates of `Π_{W_m} u`.
    pub fn project(&self, u: &GridFunction) -> Result<Measurement> {
        Ok(Measurement::new(self.onb.coefficients(u)?))
    }

    /// The grid function represented by `m`.
    pub fn lift(&self, m: &Measurement) -> GridFunction {
        self.onb.combine(&m.coeffs)
    }

    /// `m × n` matrix `G_ij = ⟨e_i, v_j⟩`.
    pub fn cross_gramian(&self, background: &Subspace) -> Result<DMatrix<f64>> {
        self.grid().check_same(background.grid())?;
        let n = background.dim();
        let mut g = DMatrix::zeros(self.m(), n);
        for (j, v) in background.basis().iter().enumerate() {
            for (i, e) in self.onb.basis().iter().enumerate() {
                g[(i, j)] = e.inner(v)?;
            }
        }
        Ok(g)
    }
}

/// Noiseless observation: coordinates of `Π_{W_m} u`.
///
/// Noisy measurements go through [`crate::bias::apply_noise`].
pub fn observe(u: &GridFunction, space: &ObservationSpace) -> Result<Measurement> {
    space.project(u)
}

/// Smallest singular value of a cross-Gramian; zero when it has more columns than rows.
pub(crate) fn min_singular_value(g: &DMatrix<f64>) -> f64 {
    let (m, n) = g.shape();
    if n == 0 {
        return 1.0;
    }
    if n > m {
        return 0.0;
    }
    g.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// `β(V_n, W_m) = inf_{v ∈ V_n} ‖Π_{W_m} v‖ / ‖v‖`.
///
/// An empty background is vacuously stable and reports 1.
pub fn inf_sup_beta(background: &Subspace, space: &ObservationSpace) -> Result<f64> {
    Ok(min_singular_value(&space.cross_gramian(background)?))
}
