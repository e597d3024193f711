mod common;

use assim_core::multiscale::{extract_smoothers, SmootherOptions};
use assim_core::rng::{derive_seed, stream, uniform};
use assim_core::solver::{BoxBounds, PbdwSolver};
use common::{kkt_oracle, random_dictionary, random_instance, search_matches_brute_force};
use nalgebra::{DMatrix, DVector};

#[test]
fn pbdw_matches_dense_kkt_on_random_instances() {
    for trial in 0..100 {
        let inst = random_instance(derive_seed(11, &[trial]));
        let solver = PbdwSolver::new(&inst.background, &inst.space).unwrap();
        let rec = solver.solve(&inst.target).unwrap();
        let oracle = kkt_oracle(&inst);
        let scale = oracle.amax().max(1.0);
        let gap = rec
            .state
            .values()
            .iter()
            .zip(oracle.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(gap <= 1e-10 * scale, "trial {trial}: gap {gap:e}");
        assert!(rec.constraint_residual <= 1e-10 * inst.target.norm().max(1.0));
    }
}

/// Enumerates every free/lower/upper pattern and keeps the best feasible stationary point.
fn box_brute_force(h: &DMatrix<f64>, r: &DVector<f64>, bounds: &BoxBounds) -> Vec<f64> {
    let n = r.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for code in 0..3usize.pow(n as u32) {
        let pattern: Vec<usize> = (0..n).map(|j| code / 3usize.pow(j as u32) % 3).collect();
        let mut c = vec![0.0; n];
        for j in 0..n {
            c[j] = match pattern[j] {
                1 => bounds.lo[j],
                2 => bounds.hi[j],
                _ => 0.0,
            };
        }
        let free: Vec<usize> = (0..n).filter(|&j| pattern[j] == 0).collect();
        if !free.is_empty() {
            let hf = DMatrix::from_fn(free.len(), free.len(), |a, b| h[(free[a], free[b])]);
            let rf = DVector::from_fn(free.len(), |a, _| {
                r[free[a]] - (0..n).filter(|j| pattern[*j] != 0).map(|j| h[(free[a], j)] * c[j]).sum::<f64>()
            });
            let sol = hf.lu().solve(&rf).unwrap();
            for (a, &j) in free.iter().enumerate() {
                c[j] = sol[a];
            }
        }
        if (0..n).any(|j| c[j] < bounds.lo[j] - 1e-12 || c[j] > bounds.hi[j] + 1e-12) {
            continue;
        }
        let cv = DVector::from_column_slice(&c);
        let obj = 0.5 * cv.dot(&(h * &cv)) - r.dot(&cv);
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, c));
        }
    }
    best.unwrap().1
}

#[test]
fn boxed_solve_matches_active_set_enumeration() {
    for trial in 0..100 {
        let inst = random_instance(derive_seed(12, &[trial]));
        let solver = PbdwSolver::new(&inst.background, &inst.space).unwrap();
        let n = inst.background.dim();
        let mut rng = stream(derive_seed(13, &[trial]));
        let lo: Vec<f64> = (0..n).map(|_| uniform(&mut rng, -1.0, 0.2)).collect();
        let hi: Vec<f64> = lo.iter().map(|l| l + uniform(&mut rng, 0.05, 1.0)).collect();
        let bounds = BoxBounds::new(lo, hi).unwrap();
        let rec = solver.solve_boxed(&inst.target, &bounds).unwrap();
        let g = solver.cross_gramian();
        let h = g.transpose() * g;
        let r = g.transpose() * DVector::from_column_slice(&inst.target.coeffs);
        let oracle = box_brute_force(&h, &r, &bounds);
        for (a, b) in rec.rom_coeffs.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0), "trial {trial}: {a} vs {b}");
        }
    }
}

#[test]
fn orthogonal_search_matches_exhaustive_scan() {
    for trial in 0..100 {
        let case = random_dictionary(derive_seed(14, &[trial]));
        assert!(search_matches_brute_force(&case), "trial {trial}");
    }
}

#[test]
fn greedy_residuals_never_increase() {
    let opts = SmootherOptions { rel_tol: 1e-6, max_iters: 8, ..SmootherOptions::default() };
    for trial in 0..50 {
        let case = random_dictionary(derive_seed(15, &[trial]));
        let ex = extract_smoothers(&case.omega, &case.dict, &opts).unwrap();
        for w in ex.residual_history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "trial {trial}: {:?}", ex.residual_history);
        }
        let observed = case.space.project(&ex.f_star).unwrap();
        let recomb = case.omega.sub(&observed).sub(&ex.omega_f).norm();
        assert!(recomb <= 1e-12 * case.omega.norm().max(1.0));
    }
}
