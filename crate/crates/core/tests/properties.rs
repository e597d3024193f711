mod common;

use assim_core::bias::{apply_noise, NoiseModel};
use assim_core::obs::{build_observation_space, inf_sup_beta, SensorArray};
use assim_core::rng::stream;
use assim_core::space::{orthonormalize, project_onto, Grid, DEFAULT_DROP_TOL};
use common::{gaussian_function, random_instance};
use proptest::prelude::*;

fn grid() -> Grid {
    Grid::new(0.0, 1.0, 48).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cauchy_schwarz(seed in any::<u64>()) {
        let mut rng = stream(seed);
        let u = gaussian_function(grid(), &mut rng);
        let v = gaussian_function(grid(), &mut rng);
        prop_assert!(u.inner(&v).unwrap().abs() <= u.norm() * v.norm() * (1.0 + 1e-12));
    }

    #[test]
    fn projection_is_idempotent_and_pythagorean(seed in any::<u64>(), n in 1usize..8) {
        let mut rng = stream(seed);
        let raw: Vec<_> = (0..n).map(|_| gaussian_function(grid(), &mut rng)).collect();
        let sub = orthonormalize(grid(), &raw, DEFAULT_DROP_TOL).unwrap();
        let u = gaussian_function(grid(), &mut rng);
        let p = project_onto(&u, &sub).unwrap();
        let pp = project_onto(&p, &sub).unwrap();
        prop_assert!(pp.sub(&p).unwrap().norm() <= 1e-10 * u.norm());
        let r = u.sub(&p).unwrap();
        let lhs = u.norm().powi(2);
        let rhs = p.norm().powi(2) + r.norm().powi(2);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs);
    }

    #[test]
    fn beta_decreases_with_n(seed in any::<u64>(), m in 4usize..16) {
        let g = grid();
        let space = build_observation_space(&SensorArray::equidistant(&g, m, false).unwrap(), &g).unwrap();
        let mut rng = stream(seed);
        let raw: Vec<_> = (0..m + 2).map(|_| gaussian_function(g, &mut rng)).collect();
        let full = orthonormalize(g, &raw, DEFAULT_DROP_TOL).unwrap();
        let betas: Vec<f64> = (0..=full.dim())
            .map(|n| inf_sup_beta(&full.truncated(n), &space).unwrap())
            .collect();
        for w in betas.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12, "{betas:?}");
        }
    }

    #[test]
    fn beta_increases_with_nested_sensors(seed in any::<u64>(), n in 1usize..4) {
        let g = grid();
        let mut rng = stream(seed);
        let raw: Vec<_> = (0..n).map(|_| gaussian_function(g, &mut rng)).collect();
        let v = orthonormalize(g, &raw, DEFAULT_DROP_TOL).unwrap();
        // Sensors at every k-th node for k = 8, 4, 2, 1 (interior nodes) form a nested family.
        let mut last = 0.0;
        for k in [8usize, 4, 2, 1] {
            let centers: Vec<f64> = (1..g.len() - 1).step_by(k).map(|i| g.node(i)).collect();
            let sensors = SensorArray::new(centers, assim_core::obs::SensorKind::Pointwise).unwrap();
            let space = build_observation_space(&sensors, &g).unwrap();
            let beta = inf_sup_beta(&v, &space).unwrap();
            prop_assert!(beta >= last - 1e-12);
            last = beta;
        }
    }

    #[test]
    fn pbdw_interpolates_and_recombines(seed in any::<u64>()) {
        let inst = random_instance(seed);
        let rec = assim_core::solver::pbdw_solve(&inst.target, &inst.background, &inst.space).unwrap();
        prop_assert!(rec.constraint_residual <= 1e-10 * inst.target.norm().max(1.0));
        let z = inst.background.combine(&rec.rom_coeffs);
        let eta = inst.space.onb().combine(&rec.correction_coeffs);
        let gap = rec.state.sub(&z.add(&eta).unwrap()).unwrap().norm();
        prop_assert!(gap <= 1e-12 * rec.state.norm().max(1.0));
    }

    #[test]
    fn noise_is_reproducible(seed in any::<u64>()) {
        let g = grid();
        let space = build_observation_space(&SensorArray::equidistant(&g, 10, false).unwrap(), &g).unwrap();
        let u = gaussian_function(g, &mut stream(seed ^ 1));
        let model = NoiseModel::linear(0.1, 0.3).unwrap();
        let a = apply_noise(&u, &space, &model, seed).unwrap();
        let b = apply_noise(&u, &space, &model, seed).unwrap();
        prop_assert_eq!(a.coeffs, b.coeffs);
    }
}
