//! Resolver, finite-difference and first-order-bound invariants on the
//! builtin problems.

use crep::crep::{evaluate_blocks, kappas_from_blocks, PipelineOptions};
use crep::numla::{self, RealVector};
use crep::oracle::{
    constrained_nearest_solution, empirical_condition, perturb_input, random_unit, sample_rng,
    SolverOptions,
};
use crep::verify::builtin_points;
use crep::CrepPoint;

#[test]
fn residual_derivative_is_second_order() {
    for (name, problem, point) in builtin_points(3) {
        let jac = problem.jacobian(&point);
        let d = problem.ambient_dims();
        let mut rng = sample_rng(11, 0);
        let dir = random_unit(d.x + d.y + d.z, &mut rng);
        let (dx, rest) = dir.as_slice().split_at(d.x);
        let (dy, dz) = rest.split_at(d.y);
        let (dx, dy, dz) = (
            RealVector::from_column_slice(dx),
            RealVector::from_column_slice(dy),
            RealVector::from_column_slice(dz),
        );
        let exact = &jac.x * &dx + &jac.y * &dy + &jac.z * &dz;
        let at = |t: f64| {
            problem.residual(&CrepPoint::new(
                &point.x + &dx * t,
                &point.y + &dy * t,
                &point.z + &dz * t,
            ))
        };
        let errs: Vec<f64> = [1e-2, 1e-3]
            .iter()
            .map(|&t| ((at(t) - at(-t)) / (2.0 * t) - &exact).norm())
            .collect();
        let floor = 1e-9 * exact.norm().max(1.0);
        assert!(
            errs[1] <= floor || errs[0] >= 10.0 * errs[1],
            "{name}: errors {errs:?}"
        );
    }
}

#[test]
fn first_order_bound_at_three_radii() {
    let solver = SolverOptions::default();
    for (name, problem, point) in builtin_points(5) {
        let problem = problem.as_ref();
        let kappa = kappas_from_blocks(
            &evaluate_blocks(problem, &point).unwrap(),
            &PipelineOptions::default(),
        )
        .unwrap()
        .kappa_y;
        for (i, r) in [1e-3, 1e-4, 1e-5].into_iter().enumerate() {
            let est =
                empirical_condition(problem, &point, r * point.scale(), 32, 17, &solver).unwrap();
            assert!(
                est.max_ratio <= kappa * 1.05,
                "{name} at {r:e}: {} > {kappa}",
                est.max_ratio
            );
            if i == 2 {
                assert!(
                    est.max_ratio >= kappa * 0.95,
                    "{name} at {r:e}: {} < {kappa}",
                    est.max_ratio
                );
            }
        }
    }
}

#[test]
fn resolver_output_is_first_order_optimal() {
    let solver = SolverOptions::default();
    for (name, problem, point) in builtin_points(7) {
        let problem = problem.as_ref();
        let charts = problem.charts(&point).unwrap();
        let mut rng = sample_rng(23, 0);
        let dir = random_unit(charts.x.intrinsic_dim(), &mut rng);
        let xp = perturb_input(problem, &point, &dir, 1e-3 * point.scale()).unwrap();
        let res = constrained_nearest_solution(problem, &point, &xp, &solver).unwrap();
        assert!(res.converged, "{name}");
        let found = CrepPoint::new(xp, res.y.clone(), res.z.clone());
        let blocks = evaluate_blocks(problem, &found).unwrap();
        let jyz = blocks.jyz();
        let kernel =
            numla::kernel_basis(&jyz, numla::default_rtol(jyz.nrows(), jyz.ncols())).unwrap();
        let k_y = kernel.rows(0, blocks.dim_y()).into_owned();
        // Displacement in the output chart at the found point.
        let dy = problem.charts(&found).unwrap().y.basis().transpose() * (&res.y - &point.y);
        let violation = (k_y.transpose() * dy).norm();
        assert!(
            violation <= 10.0 * res.tolerance,
            "{name}: {violation:e} vs {:e}",
            res.tolerance
        );
    }
}
