//! Independent oracles shared by the integration and acceptance tests.

#![allow(dead_code)]

use assim_core::multiscale::{orthogonal_search, SlowDictionary};
use assim_core::obs::{build_observation_space, Measurement, ObservationSpace, SensorArray, SensorKind};
use assim_core::rng::{stream, uniform};
use assim_core::space::{orthonormalize, Grid, GridFunction, Subspace, DEFAULT_DROP_TOL};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub struct Instance {
    pub grid: Grid,
    pub background: Subspace,
    pub space: ObservationSpace,
    pub target: Measurement,
}

pub fn gaussian_function(grid: Grid, rng: &mut ChaCha8Rng) -> GridFunction {
    let v = (0..grid.len()).map(|_| StandardNormal.sample(&mut *rng)).collect();
    GridFunction::new(grid, v).unwrap()
}

/// Random small PBDW problem: grid of at most 16 nodes, m ≤ 6, n ≤ min(3, m).
/// Retries until the sensors are independent and β is not tiny.
pub fn random_instance(seed: u64) -> Instance {
    let mut rng = stream(seed);
    loop {
        let nodes = rng.random_range(6..=16usize);
        let grid = Grid::new(uniform(&mut rng, -1.0, 0.0), uniform(&mut rng, 0.5, 2.0), nodes).unwrap();
        let m = rng.random_range(1..=6usize.min(nodes - 1));
        let n = rng.random_range(1..=3usize.min(m));
        let mut picks: Vec<usize> = (0..nodes).collect();
        for i in 0..m {
            let j = rng.random_range(i..nodes);
            picks.swap(i, j);
        }
        let mut centers: Vec<f64> = picks[..m].iter().map(|&k| grid.node(k)).collect();
        centers.sort_by(f64::total_cmp);
        let kind = if rng.random_bool(0.5) {
            SensorKind::Pointwise
        } else {
            SensorKind::BoxAverage { width: grid.spacing() * uniform(&mut rng, 1.0, 3.0) }
        };
        let Ok(space) = SensorArray::new(centers, kind).and_then(|s| build_observation_space(&s, &grid)) else {
            continue;
        };
        let raw: Vec<GridFunction> = (0..n).map(|_| gaussian_function(grid, &mut rng)).collect();
        let background = orthonormalize(grid, &raw, DEFAULT_DROP_TOL).unwrap();
        if background.dim() != n || assim_core::obs::inf_sup_beta(&background, &space).unwrap() < 1e-3 {
            continue;
        }
        let target = Measurement::new((0..space.m()).map(|_| StandardNormal.sample(&mut rng)).collect());
        return Instance { grid, background, space, target };
    }
}

/// Dense KKT solve of `min ‖(I − Π_V) u‖²` subject to `⟨w_i, u⟩ = target_i`,
/// with `u` ranging over the whole grid space.
pub fn kkt_oracle(inst: &Instance) -> DVector<f64> {
    let grid = inst.grid;
    let nn = grid.len();
    let w = DMatrix::from_diagonal(&DVector::from_vec(grid.weights()));
    let basis = DMatrix::from_fn(nn, inst.background.dim(), |i, j| inst.background.basis()[j].values()[i]);
    // Π_V u = V Vᵀ W u in nodal coordinates.
    let proj = &basis * basis.transpose() * &w;
    let resid = DMatrix::identity(nn, nn) - proj;
    let a = resid.transpose() * &w * &resid;
    let m = inst.space.m();
    let b = DMatrix::from_fn(m, nn, |i, k| inst.space.onb().basis()[i].values()[k] * grid.weight(k));
    let mut kkt = DMatrix::zeros(nn + m, nn + m);
    kkt.view_mut((0, 0), (nn, nn)).copy_from(&(a * 2.0));
    kkt.view_mut((0, nn), (nn, m)).copy_from(&b.transpose());
    kkt.view_mut((nn, 0), (m, nn)).copy_from(&b);
    let mut rhs = DVector::zeros(nn + m);
    rhs.rows_mut(nn, m).copy_from(&DVector::from_column_slice(&inst.target.coeffs));
    let sol = kkt.lu().solve(&rhs).expect("KKT system is nonsingular when β > 0");
    sol.rows(0, nn).into_owned()
}

pub struct RandomDictionary {
    pub space: ObservationSpace,
    pub dict: SlowDictionary,
    pub omega: Measurement,
}

/// 20 random candidates on a 32-node grid observed by 8 sensors.
pub fn random_dictionary(seed: u64) -> RandomDictionary {
    let mut rng = stream(seed);
    let grid = Grid::new(0.0, 1.0, 32).unwrap();
    let space = build_observation_space(&SensorArray::equidistant(&grid, 8, rng.random_bool(0.5)).unwrap(), &grid).unwrap();
    let candidates: Vec<GridFunction> = (0..20).map(|_| gaussian_function(grid, &mut rng)).collect();
    let dict = SlowDictionary::new(candidates, (0..20).map(|k| k as f64).collect(), &space).unwrap();
    let omega = Measurement::new((0..8).map(|_| StandardNormal.sample(&mut rng)).collect());
    RandomDictionary { space, dict, omega }
}

/// Exhaustive scan: every `⟨ω, Π v⟩ / ‖Π v‖` recomputed from the raw candidate.
pub fn brute_force_search(case: &RandomDictionary) -> (usize, f64) {
    let mut best = (0usize, 0.0f64, 0.0f64);
    for k in 0..case.dict.len() {
        let obs = case.space.project(case.dict.candidate(k)).unwrap();
        let ip: f64 = case.omega.coeffs.iter().zip(&obs.coeffs).map(|(a, b)| a * b).sum();
        let nrm = obs.coeffs.iter().map(|x| x * x).sum::<f64>().sqrt();
        let score = ip / nrm;
        if score.abs() > best.2.abs() {
            best = (k, ip / (nrm * nrm), score);
        }
    }
    (best.0, best.1)
}

pub fn search_matches_brute_force(case: &RandomDictionary) -> bool {
    let hit = orthogonal_search(&case.omega, &case.dict).unwrap();
    let (k, amp) = brute_force_search(case);
    hit.index == k && (hit.amplitude - amp).abs() <= 1e-12 * amp.abs().max(1.0)
}
