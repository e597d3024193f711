//! Discrete ambient space: functions sampled on a uniform 1-D grid with the
//! trapezoid-weighted ℓ² inner product.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `|G - I|` entries for a basis to count as orthonormal.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// Default relative drop tolerance for [`orthonormalize`].
pub const DEFAULT_DROP_TOL: f64 = 1e-10;

/// A uniform grid on `[a, b]` with trapezoid quadrature weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    a: f64,
    b: f64,
    num_points: usize,
}

impl Grid {
    pub fn new(a: f64, b: f64, num_points: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || b <= a {
            return Err(Error::InvalidGrid(format!("need finite a < b, got [{a}, {b}]")));
        }
        if num_points < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 nodes, got {num_points}"
            )));
        }
        Ok(Self { a, b, num_points })
    }

    /// `[0, 2π]` with 512 nodes.
    pub fn default_periodic() -> Self {
        Self::new(0.0, 2.0 * std::f64::consts::PI, 512).expect("valid default grid")
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn len(&self) -> usize {
        self.num_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        (self.b - self.a) / (self.num_points - 1) as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        if k + 1 == self.num_points {
            self.b
        } else {
            self.a + k as f64 * self.spacing()
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.num_points).map(move |k| self.node(k))
    }

    pub fn weight(&self, k: usize) -> f64 {
        let h = self.spacing();
        if k == 0 || k + 1 == self.num_points {
            0.5 * h
        } else {
            h
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.num_points).map(|k| self.weight(k)).collect()
    }

    /// Index of the node closest to `x` (ties resolve to the lower index).
    pub fn nearest_node(&self, x: f64) -> usize {
        let t = ((x - self.a) / self.spacing()).round();
        t.clamp(0.0, (self.num_points - 1) as f64) as usize
    }

    /// Index of the first node with `x_k >= x`, or `len()` if none.
    pub fn first_node_at_or_after(&self, x: f64) -> usize {
        (0..self.num_points)
            .find(|&k| self.node(k) >= x)
            .unwrap_or(self.num_points)
    }

    pub fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(*self, *other))
        }
    }

    fn weighted_dot(&self, u: &[f64], v: &[f64]) -> f64 {
        let n = self.num_points;
        let interior: f64 = u.iter().zip(v).map(|(x, y)| x * y).sum();
        let ends = u[0] * v[0] + u[n - 1] * v[n - 1];
        self.spacing() * (interior - 0.5 * ends)
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}] x {}", self.a, self.b, self.num_points)
    }
}

/// Real values on the nodes of a [`Grid`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite value at node {k}")));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid,
            values: grid.nodes().map(f).collect(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn inner(&self, other: &GridFunction) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        Ok(self.grid.weighted_dot(&self.values, &other.values))
    }

    pub fn norm(&self) -> f64 {
        self.grid.weighted_dot(&self.values, &self.values).sqrt()
    }

    pub fn scaled(&self, s: f64) -> GridFunction {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &GridFunction) -> Result<()> {
        self.grid.check_same(&other.grid)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += s * b;
        }
        Ok(())
    }

    pub fn add(&self, other: &GridFunction) -> Result<GridFunction> {
        let mut out = self.clone();
        out.axpy(1.0, other)?;
        Ok(out)
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    /// Sum of absolute increments between neighbouring nodes.
    pub fn total_variation(&self) -> f64 {
        self.values.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `⟨u, v⟩ = Σ_k w_k u_k v_k` with trapezoid weights.
pub fn inner_product(u: &GridFunction, v: &GridFunction) -> Result<f64> {
    u.inner(v)
}

/// An orthonormal family of grid functions.
#[derive(Clone, Debug, PartialEq)]
pub struct Subspace {
    grid: Grid,
    basis: Vec<GridFunction>,
}

impl Subspace {
    pub fn empty(grid: Grid) -> Self {
        Self {
            grid,
            basis: Vec::new(),
        }
    }

    /// Wraps `basis` after checking that its Gram matrix is the identity.
    pub fn from_orthonormal(grid: Grid, basis: Vec<GridFunction>) -> Result<Self> {
        for f in &basis {
            grid.check_same(f.grid())?;
        }
        let deviation = gram_deviation(&basis);
        if deviation > ORTHONORMAL_TOL {
            return Err(Error::NotOrthonormal { deviation });
        }
        Ok(Self { grid, basis })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[GridFunction] {
        &self.basis
    }

    /// The first `n` basis functions (all of them if `n >= dim`).
    pub fn truncated(&self, n: usize) -> Subspace {
        Self {
            grid: self.grid,
            basis: self.basis.iter().take(n).cloned().collect(),
        }
    }

    /// Coordinates `⟨u, x_i⟩`.
    pub fn coefficients(&self, u: &GridFunction) -> Result<Vec<f64>> {
        self.grid.check_same(u.grid())?;
        Ok(self
            .basis
            .iter()
            .map(|x| self.grid.weighted_dot(x.values(), u.values()))
            .collect())
    }

    /// `Σ_i c_i x_i`.
    pub fn combine(&self, coeffs: &[f64]) -> GridFunction {
        assert_eq!(coeffs.len(), self.dim(), "coefficient count must match dimension");
        let mut out = GridFunction::zeros(self.grid);
        for (c, x) in coeffs.iter().zip(&self.basis) {
            for (o, v) in out.values.iter_mut().zip(x.values()) {
                *o += c * v;
            }
        }
        out
    }

    /// Concatenates two subspaces, checking that the result is still orthonormal.
    pub fn concat(&self, other: &Subspace) -> Result<Subspace> {
        let mut basis = self.basis.clone();
        basis.extend(other.basis.iter().cloned());
        Subspace::from_orthonormal(self.grid, basis)
    }
}

/// Largest entry of `|G - I|` for the Gram matrix of `fns`.
pub fn gram_deviation(fns: &[GridFunction]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, u) in fns.iter().enumerate() {
        for (j, v) in fns.iter().enumerate().skip(i) {
            let g = u.grid.weighted_dot(u.values(), v.values());
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g - target).abs());
        }
    }
    worst
}

/// `Π_X u = Σ_i ⟨u, x_i⟩ x_i`.
pub fn project_onto(u: &GridFunction, subspace: &Subspace) -> Result<GridFunction> {
    let coeffs = subspace.coefficients(u)?;
    Ok(subspace.combine(&coeffs))
}

/// Modified Gram–Schmidt with one re-orthogonalization pass.
///
/// A candidate whose residual norm falls below `tol_drop` times its original
/// norm is dropped. Zero functions are always dropped.
pub fn orthonormalize(grid: Grid, fns: &[GridFunction], tol_drop: f64) -> Result<Subspace> {
    Ok(orthonormalize_tracked(grid, fns, tol_drop)?.0)
}

/// Like [`orthonormalize`], also returning the indices of dropped inputs.
pub(crate) fn orthonormalize_tracked(
    grid: Grid,
    fns: &[GridFunction],
    tol_drop: f64,
) -> Result<(Subspace, Vec<usize>)> {
    if !(tol_drop > 0.0) {
        return Err(Error::InvalidArgument(format!("tol_drop must be positive, got {tol_drop}")));
    }
    let mut basis: Vec<GridFunction> = Vec::with_capacity(fns.len());
    let mut dropped = Vec::new();
    for (idx, f) in fns.iter().enumerate() {
        grid.check_same(f.grid())?;
        let original = f.norm();
        let mut r = f.clone();
        for _pass in 0..2 {
            for q in &basis {
                let c = grid.weighted_dot(q.values(), r.values());
                for (rv, qv) in r.values.iter_mut().zip(q.values()) {
                    *rv -= c * qv;
                }
            }
        }
        let norm = r.norm();
        if original == 0.0 || norm < tol_drop * original {
            dropped.push(idx);
            continue;
        }
        basis.push(r.scaled(1.0 / norm));
    }
    Ok((Subspace { grid, basis }, dropped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize) -> Grid {
        Grid::new(0.0, 2.0 * PI, n).unwrap()
    }

    #[test]
    fn weights_sum_to_length() {
        for n in [2, 3, 17, 512] {
            let g = grid(n);
            let total: f64 = g.weights().iter().sum();
            assert!((total - 2.0 * PI).abs() < 1e-12);
            assert!(g.weights().iter().all(|&w| w > 0.0));
        }
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::new(1.0, 1.0, 5).is_err());
        assert!(Grid::new(0.0, 1.0, 1).is_err());
        assert!(Grid::new(0.0, f64::NAN, 4).is_err());
    }

    #[test]
    fn constant_inner_product_is_domain_length() {
        for n in [2, 5, 100, 2049] {
            let g = grid(n);
            let one = GridFunction::from_fn(g, |_| 1.0);
            assert!((inner_product(&one, &one).unwrap() - 2.0 * PI).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_element() {
        let g = grid(33);
        let u = GridFunction::from_fn(g, |x| x.exp());
        assert_eq!(inner_product(&u, &GridFunction::zeros(g)).unwrap(), 0.0);
    }

    #[test]
    fn sine_squared_matches_fine_quadrature() {
        // Oracle: plain trapezoid sum over 10^6 nodes.
        let nodes = 1_000_000usize;
        let h = 2.0 * PI / (nodes - 1) as f64;
        let mut oracle = 0.0;
        for k in 0..nodes {
            let x = k as f64 * h;
            let w = if k == 0 || k == nodes - 1 { 0.5 * h } else { h };
            oracle += w * x.sin() * x.sin();
        }
        let g = grid(2049);
        let s = GridFunction::from_fn(g, f64::sin);
        let ip = inner_product(&s, &s).unwrap();
        assert!((ip - oracle).abs() < 1e-6);
        assert!((ip - PI).abs() < 1e-6);
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let u = GridFunction::zeros(grid(10));
        let v = GridFunction::zeros(grid(11));
        assert!(matches!(inner_product(&u, &v), Err(Error::GridMismatch(..))));
    }

    #[test]
    fn non_finite_values_rejected() {
        assert!(GridFunction::new(grid(3), vec![0.0, f64::INFINITY, 1.0]).is_err());
        assert!(GridFunction::new(grid(3), vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn projection_onto_own_span() {
        let g = grid(64);
        let u = GridFunction::from_fn(g, |x| 1.0 + x.cos() * x);
        let x = Subspace::from_orthonormal(g, vec![u.scaled(1.0 / u.norm())]).unwrap();
        let p = project_onto(&u, &x).unwrap();
        assert!(p.sub(&u).unwrap().norm() <= 1e-12 * u.norm());
    }

    #[test]
    fn projection_onto_empty_subspace_is_zero() {
        let g = grid(8);
        let u = GridFunction::from_fn(g, |x| x);
        let p = project_onto(&u, &Subspace::empty(g)).unwrap();
        assert_eq!(p, GridFunction::zeros(g));
    }

    #[test]
    fn projection_matches_dense_least_squares() {
        // Oracle: min_c |sqrt(W)(c x - u)|^2 solved via 1x1 normal equations
        // with an explicitly assembled 3x3 weight matrix.
        let g = Grid::new(0.0, 1.0, 3).unwrap();
        let raw = GridFunction::new(g, vec![0.3, -1.2, 2.0]).unwrap();
        let x = orthonormalize(g, std::slice::from_ref(&raw), DEFAULT_DROP_TOL).unwrap();
        let u = GridFunction::new(g, vec![1.5, 0.25, -0.75]).unwrap();
        let w = [[0.25, 0.0, 0.0], [0.0, 0.5, 0.0], [0.0, 0.0, 0.25]];
        let a = raw.values();
        let mut ata = 0.0;
        let mut atb = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                ata += a[i] * w[i][j] * a[j];
                atb += a[i] * w[i][j] * u.values()[j];
            }
        }
        let c = atb / ata;
        let p = project_onto(&u, &x).unwrap();
        for (k, ak) in a.iter().enumerate() {
            assert!((p.values()[k] - c * ak).abs() < 1e-12);
        }
        let r = u.sub(&p).unwrap();
        assert!(r.inner(&x.basis()[0]).unwrap().abs() < 1e-10);
    }

    #[test]
    fn non_orthonormal_basis_rejected() {
        let g = grid(8);
        let u = GridFunction::from_fn(g, |_| 1.0);
        assert!(matches!(
            Subspace::from_orthonormal(g, vec![u]),
            Err(Error::NotOrthonormal { .. })
        ));
    }

    #[test]
    fn dependent_inputs_collapse() {
        let g = grid(16);
        let u = GridFunction::from_fn(g, |x| x.sin() + 0.2);
        let s = orthonormalize(g, &[u.clone(), u], DEFAULT_DROP_TOL).unwrap();
        assert_eq!(s.dim(), 1);
    }

    #[test]
    fn orthonormal_pair_is_a_fixed_point() {
        let g = grid(16);
        let raw = [
            GridFunction::from_fn(g, |x| x.sin()),
            GridFunction::from_fn(g, |x| x.cos() + 0.3),
        ];
        let s = orthonormalize(g, &raw, DEFAULT_DROP_TOL).unwrap();
        let again = orthonormalize(g, s.basis(), DEFAULT_DROP_TOL).unwrap();
        for (a, b) in s.basis().iter().zip(again.basis()) {
            assert!(a.sub(b).unwrap().max_abs() < 1e-12);
        }
    }

    #[test]
    fn random_triple_gram_and_span() {
        let g = grid(8);
        let raw: Vec<GridFunction> = (0..3)
            .map(|j| GridFunction::from_fn(g, |x| ((j + 1) as f64 * x + 0.7 * j as f64).sin() + 0.1 * x))
            .collect();
        let s = orthonormalize(g, &raw, DEFAULT_DROP_TOL).unwrap();
        assert_eq!(s.dim(), 3);
        assert!(gram_deviation(s.basis()) < 1e-10);
        for f in &raw {
            let r = f.sub(&project_onto(f, &s).unwrap()).unwrap();
            assert!(r.norm() < 1e-10 * f.norm().max(1.0));
        }
    }

    #[test]
    fn empty_input_gives_empty_subspace() {
        let g = grid(8);
        assert_eq!(orthonormalize(g, &[], DEFAULT_DROP_TOL).unwrap().dim(), 0);
    }
}
