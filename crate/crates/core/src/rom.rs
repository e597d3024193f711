//! Proper orthogonal decomposition and approximation-error measurement.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::manifold::{ManifoldLabel, SnapshotSet};
use crate::space::{orthonormalize, GridFunction, Subspace, DEFAULT_DROP_TOL};

/// A POD basis together with the full singular spectrum of the snapshot set.
#[derive(Clone, Debug)]
pub struct ReducedBasis {
    subspace: Subspace,
    singular_values: Vec<f64>,
    source: ManifoldLabel,
}

impl ReducedBasis {
    pub fn subspace(&self) -> &Subspace {
        &self.subspace
    }

    pub fn dim(&self) -> usize {
        self.subspace.dim()
    }

    /// Nonincreasing; one entry per mode the snapshot matrix admits.
    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn source(&self) -> ManifoldLabel {
        self.source
    }

    /// Leading `n` modes, keeping the full spectrum.
    pub fn truncated(&self, n: usize) -> ReducedBasis {
        Self {
            subspace: self.subspace.truncated(n),
            singular_values: self.singular_values.clone(),
            source: self.source,
        }
    }

    /// Rows of `(mode, singular value, cumulative energy fraction)`.
    pub fn spectrum(&self) -> Vec<(usize, f64, f64)> {
        let total: f64 = self.singular_values.iter().map(|s| s * s).sum();
        let mut acc = 0.0;
        self.singular_values
            .iter()
            .enumerate()
            .map(|(k, s)| {
                acc += s * s;
                let frac = if total > 0.0 { acc / total } else { 1.0 };
                (k + 1, *s, frac)
            })
            .collect()
    }
}

/// Leading `n` POD modes of `snapshots`, orthonormal in the weighted inner product.
///
/// Snapshots are scaled by `sqrt(w_k)` nodewise, factorized with a thin SVD and
/// unscaled afterwards. Each mode is signed so that its largest-magnitude entry
/// is positive. No mean is subtracted.
pub fn pod(snapshots: &SnapshotSet, n: usize) -> Result<ReducedBasis> {
    let count = snapshots.len();
    if n == 0 || n > count {
        return Err(Error::InvalidArgument(format!(
            "POD dimension {n} must be in 1..={count}"
        )));
    }
    let grid = *snapshots.grid();
    let sqrt_w: Vec<f64> = grid.weights().iter().map(|w| w.sqrt()).collect();
    let rows = grid.len();
    let matrix = DMatrix::from_fn(rows, count, |i, j| sqrt_w[i] * snapshots.snapshots()[j].values()[i]);

    let svd = matrix.svd(true, false);
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let singular_values: Vec<f64> = order.iter().map(|&k| svd.singular_values[k]).collect();

    if n > order.len() {
        return Err(Error::InvalidArgument(format!(
            "POD dimension {n} exceeds the {} available modes",
            order.len()
        )));
    }

    let mut modes = Vec::with_capacity(n);
    for &k in order.iter().take(n) {
        let col = u.column(k);
        let mut values: Vec<f64> = (0..rows).map(|i| col[i] / sqrt_w[i]).collect();
        let pivot = values
            .iter()
            .copied()
            .fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
        if pivot < 0.0 {
            values.iter_mut().for_each(|v| *v = -*v);
        }
        modes.push(GridFunction::new(grid, values)?);
    }
    // One cleanup pass removes the O(eps) loss of orthogonality from unscaling.
    let cleaned = orthonormalize(grid, &modes, DEFAULT_DROP_TOL)?;
    let subspace = if cleaned.dim() == modes.len() {
        cleaned
    } else {
        Subspace::from_orthonormal(grid, modes)?
    };
    Ok(ReducedBasis {
        subspace,
        singular_values,
        source: snapshots.label(),
    })
}

/// Worst-case and per-snapshot projection residuals of a validation set.
#[derive(Clone, Debug, PartialEq)]
pub struct ApproximationError {
    pub max: f64,
    pub residuals: Vec<f64>,
}

/// `max_u ‖u - Π_{V_n} u‖` over the validation set.
pub fn approximation_error(validation: &SnapshotSet, basis: &Subspace) -> Result<ApproximationError> {
    if validation.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    let residuals = validation
        .snapshots()
        .iter()
        .map(|u| {
            let coeffs = basis.coefficients(u)?;
            Ok(u.sub(&basis.combine(&coeffs))?.norm())
        })
        .collect::<Result<Vec<f64>>>()?;
    let max = residuals.iter().copied().fold(0.0, f64::max);
    Ok(ApproximationError { max, residuals })
}

/// `ε_n` for `n = 0..=max_n`, computed by peeling off one mode at a time.
pub fn approximation_error_curve(validation: &SnapshotSet, basis: &Subspace, max_n: usize) -> Result<Vec<f64>> {
    if validation.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    let max_n = max_n.min(basis.dim());
    let mut worst = vec![0.0f64; max_n + 1];
    for u in validation.snapshots() {
        let mut r = u.clone();
        worst[0] = worst[0].max(r.norm());
        for (n, mode) in basis.basis().iter().take(max_n).enumerate() {
            let c = r.inner(mode)?;
            r.axpy(-c, mode)?;
            worst[n + 1] = worst[n + 1].max(r.norm());
        }
    }
    Ok(worst)
}
