//! The PBDW constrained minimization and its box-constrained variant.
//!
//! With `d` the target coordinates in the orthonormal basis of `W_m` and `G`
//! the cross-Gramian, the background coefficients solve `min_c ‖G c - d‖` and
//! the state is `u* = V c + W (d - G c)`. The observation constraint
//! `Π_{W_m} u* = d` then holds by construction.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::SnapshotSet;
use crate::obs::{min_singular_value, Measurement, ObservationSpace};
use crate::space::{GridFunction, Subspace};

/// Below this inf-sup constant a solve is refused.
pub const BETA_THRESHOLD: f64 = 1e-12;

/// Default inflation of [`compute_box`] bounds about their centre.
pub const DEFAULT_BOX_MARGIN: f64 = 1.1;

const BOX_GRADIENT_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub state: GridFunction,
    pub rom_coeffs: Vec<f64>,
    pub correction_coeffs: Vec<f64>,
    pub beta: f64,
    pub constraint_residual: f64,
}

/// JSON-friendly view of a [`Reconstruction`] without the state vector.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReconstructionDiagnostics {
    pub beta: f64,
    pub constraint_residual: f64,
    pub rom_coeffs: Vec<f64>,
    pub correction_coeffs: Vec<f64>,
}

impl Reconstruction {
    pub fn diagnostics(&self) -> ReconstructionDiagnostics {
        ReconstructionDiagnostics {
            beta: self.beta,
            constraint_residual: self.constraint_residual,
            rom_coeffs: self.rom_coeffs.clone(),
            correction_coeffs: self.correction_coeffs.clone(),
        }
    }
}

/// Per-coefficient bounds `lo_j <= c_j <= hi_j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxBounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxBounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let b = Self { lo, hi };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lo.len() != self.hi.len() {
            return Err(Error::InvalidArgument("box bound lengths differ".into()));
        }
        for (index, (&lo, &hi)) in self.lo.iter().zip(&self.hi).enumerate() {
            if !(lo <= hi) {
                return Err(Error::InfeasibleBox { index, lo, hi });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_empty()
    }

    fn clamp(&self, j: usize, v: f64) -> f64 {
        v.clamp(self.lo[j], self.hi[j])
    }
}

/// Precomputed factorization for repeated solves over one `(V_n, W_m)` pair.
#[derive(Clone, Debug)]
pub struct PbdwSolver<'a> {
    background: &'a Subspace,
    space: &'a ObservationSpace,
    cross: DMatrix<f64>,
    pinv: DMatrix<f64>,
    beta: f64,
}

impl<'a> PbdwSolver<'a> {
    pub fn new(background: &'a Subspace, space: &'a ObservationSpace) -> Result<Self> {
        let (n, m) = (background.dim(), space.m());
        if n > m {
            return Err(Error::TooManyModes { n, m });
        }
        let cross = space.cross_gramian(background)?;
        let beta = min_singular_value(&cross);
        if n > 0 && !(beta > BETA_THRESHOLD) {
            return Err(Error::IllPosed {
                beta,
                threshold: BETA_THRESHOLD,
            });
        }
        let pinv = if n == 0 {
            DMatrix::zeros(0, m)
        } else {
            cross
                .clone()
                .svd(true, true)
                .pseudo_inverse(0.0)
                .map_err(|e| Error::InvalidArgument(e.to_string()))?
        };
        Ok(Self {
            background,
            space,
            cross,
            pinv,
            beta,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn background(&self) -> &'a Subspace {
        self.background
    }

    pub fn space(&self) -> &'a ObservationSpace {
        self.space
    }

    /// The `m × n` cross-Gramian.
    pub fn cross_gramian(&self) -> &DMatrix<f64> {
        &self.cross
    }

    fn check_target(&self, target: &Measurement) -> Result<()> {
        if target.len() != self.space.m() {
            return Err(Error::InvalidArgument(format!(
                "target has {} coordinates, observation space has {}",
                target.len(),
                self.space.m()
            )));
        }
        Ok(())
    }

    pub fn solve(&self, target: &Measurement) -> Result<Reconstruction> {
        self.check_target(target)?;
        let d = DVector::from_column_slice(&target.coeffs);
        let c = &self.pinv * &d;
        self.assemble(target, c.iter().copied().collect())
    }

    pub fn solve_boxed(&self, target: &Measurement, bounds: &BoxBounds) -> Result<Reconstruction> {
        self.check_target(target)?;
        bounds.validate()?;
        if bounds.len() != self.background.dim() {
            return Err(Error::InvalidArgument(format!(
                "box has {} bounds, background has dimension {}",
                bounds.len(),
                self.background.dim()
            )));
        }
        let d = DVector::from_column_slice(&target.coeffs);
        let hessian = self.cross.transpose() * &self.cross;
        let rhs = self.cross.transpose() * &d;
        let c = box_qp(&hessian, &rhs, bounds);
        self.assemble(target, c)
    }

    fn assemble(&self, target: &Measurement, rom_coeffs: Vec<f64>) -> Result<Reconstruction> {
        let d = DVector::from_column_slice(&target.coeffs);
        let c = DVector::from_column_slice(&rom_coeffs);
        let correction = &d - &self.cross * &c;
        let correction_coeffs: Vec<f64> = correction.iter().copied().collect();
        let mut state = self.background.combine(&rom_coeffs);
        state.axpy(1.0, &self.space.onb().combine(&correction_coeffs))?;
        let observed = self.space.project(&state)?;
        let constraint_residual = observed.sub(target).norm();
        Ok(Reconstruction {
            state,
            rom_coeffs,
            correction_coeffs,
            beta: self.beta,
            constraint_residual,
        })
    }
}

/// Classical PBDW: `argmin ‖u - Π_{V_n} u‖` subject to `Π_{W_m} u = target`.
pub fn pbdw_solve(target: &Measurement, background: &Subspace, space: &ObservationSpace) -> Result<Reconstruction> {
    PbdwSolver::new(background, space)?.solve(target)
}

/// PBDW with the background coefficients restricted to `bounds`.
pub fn pbdw_solve_boxed(
    target: &Measurement,
    background: &Subspace,
    space: &ObservationSpace,
    bounds: &BoxBounds,
) -> Result<Reconstruction> {
    PbdwSolver::new(background, space)?.solve_boxed(target, bounds)
}

/// Bounds from the range of snapshot coefficients `⟨u_k, v_j⟩`, inflated by
/// `margin` about each interval's centre.
pub fn compute_box(snapshots: &SnapshotSet, background: &Subspace, margin: f64) -> Result<BoxBounds> {
    if snapshots.is_empty() {
        return Err(Error::Empty("snapshot set"));
    }
    if !(margin >= 0.0) {
        return Err(Error::InvalidArgument(format!("box margin must be non-negative, got {margin}")));
    }
    let n = background.dim();
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for u in snapshots.snapshots() {
        for (j, c) in background.coefficients(u)?.into_iter().enumerate() {
            lo[j] = lo[j].min(c);
            hi[j] = hi[j].max(c);
        }
    }
    for j in 0..n {
        let centre = 0.5 * (lo[j] + hi[j]);
        let half = 0.5 * (hi[j] - lo[j]) * margin;
        lo[j] = centre - half;
        hi[j] = centre + half;
    }
    BoxBounds::new(lo, hi)
}

/// Primal active-set method for `min ½ cᵀHc - rᵀc` subject to box bounds,
/// with `H` symmetric positive definite.
fn box_qp(hessian: &DMatrix<f64>, rhs: &DVector<f64>, bounds: &BoxBounds) -> Vec<f64> {
    let n = rhs.len();
    if n == 0 {
        return Vec::new();
    }
    let scale = hessian.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let unconstrained = hessian
        .clone()
        .cholesky()
        .map(|ch| ch.solve(rhs))
        .unwrap_or_else(|| hessian.clone().lu().solve(rhs).expect("positive definite Hessian"));
    let mut c: Vec<f64> = (0..n).map(|j| bounds.clamp(j, unconstrained[j])).collect();
    // Variables sitting on a bound are held fixed; the rest are solved for.
    let mut fixed: Vec<bool> = (0..n)
        .map(|j| c[j] == bounds.lo[j] || c[j] == bounds.hi[j])
        .collect();

    for _ in 0..(50 * (n + 1)) {
        let free: Vec<usize> = (0..n).filter(|&j| !fixed[j]).collect();
        let mut target = c.clone();
        if !free.is_empty() {
            let hff = DMatrix::from_fn(free.len(), free.len(), |a, b| hessian[(free[a], free[b])]);
            let rf = DVector::from_fn(free.len(), |a, _| {
                let j = free[a];
                rhs[j] - (0..n).filter(|&k| fixed[k]).map(|k| hessian[(j, k)] * c[k]).sum::<f64>()
            });
            let sol = hff
                .clone()
                .cholesky()
                .map(|ch| ch.solve(&rf))
                .unwrap_or_else(|| hff.lu().solve(&rf).expect("principal submatrix is invertible"));
            for (a, &j) in free.iter().enumerate() {
                target[j] = sol[a];
            }
        }

        // Walk towards the subproblem minimizer, stopping at the first bound hit.
        let mut step = 1.0f64;
        let mut blocking = None;
        for &j in &free {
            let delta = target[j] - c[j];
            if delta > 0.0 && target[j] > bounds.hi[j] {
                let t = (bounds.hi[j] - c[j]) / delta;
                if t < step {
                    step = t;
                    blocking = Some((j, bounds.hi[j]));
                }
            } else if delta < 0.0 && target[j] < bounds.lo[j] {
                let t = (bounds.lo[j] - c[j]) / delta;
                if t < step {
                    step = t;
                    blocking = Some((j, bounds.lo[j]));
                }
            }
        }
        for &j in &free {
            c[j] += step * (target[j] - c[j]);
            c[j] = bounds.clamp(j, c[j]);
        }
        if let Some((j, v)) = blocking {
            c[j] = v;
            fixed[j] = true;
            continue;
        }

        // Release the fixed variable whose multiplier has the wrong sign.
        let grad: Vec<f64> = (0..n)
            .map(|j| (0..n).map(|k| hessian[(j, k)] * c[k]).sum::<f64>() - rhs[j])
            .collect();
        let mut release = None;
        let mut worst = BOX_GRADIENT_TOL * scale;
        for j in (0..n).filter(|&j| fixed[j]) {
            let pull = if c[j] == bounds.lo[j] && c[j] == bounds.hi[j] {
                0.0
            } else if c[j] == bounds.lo[j] {
                -grad[j]
            } else {
                grad[j]
            };
            if pull > worst {
                worst = pull;
                release = Some(j);
            }
        }
        match release {
            Some(j) => fixed[j] = false,
            None => break,
        }
    }
    c
}

/// Norm of the projected gradient of `½‖Gc - d‖²` at `c`; zero at the boxed optimum.
pub fn projected_gradient_norm(cross: &DMatrix<f64>, target: &Measurement, c: &[f64], bounds: &BoxBounds) -> f64 {
    let d = DVector::from_column_slice(&target.coeffs);
    let cv = DVector::from_column_slice(c);
    let grad = cross.transpose() * (cross * &cv - d);
    (0..c.len())
        .map(|j| {
            let moved = bounds.clamp(j, c[j] - grad[j]);
            (c[j] - moved).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}
