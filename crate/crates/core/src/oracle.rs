//! Empirical validation of the linearized analysis: a nonlinear resolver
//! that realizes the canonical solution map, central-difference checks of
//! its derivative and perturb-and-resolve estimates of the condition number.

use crate::crep::{self, CrepError, CrepPoint, CrepProblem, Result, Role};
use crate::numla::{self, RealMatrix, RealVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Damped Gauss-Newton settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Absolute residual tolerance; `None` means `1e-12 * max(1, ||x||)` at
    /// the perturbed input.
    pub tol: Option<f64>,
    pub max_iter: usize,
    /// Largest allowed `||z - z0||`; `None` means `1 + ||z0||`.
    pub trust_radius: Option<f64>,
    /// Relative rank tolerance for kernel computations.
    pub rtol: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: None,
            max_iter: 100,
            trust_radius: None,
            rtol: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolveResult {
    pub y: RealVector,
    pub z: RealVector,
    pub residual_norm: f64,
    /// Norm of the output displacement projected onto the output part of
    /// `ker [J_y J_z]`; zero at a constrained minimizer of `||y - y0||`.
    pub optimality: f64,
    pub iterations: usize,
    pub converged: bool,
    pub tolerance: f64,
}

const MAX_HALVINGS: usize = 40;

/// Finds `(y, z)` with `F(x_pert, y, z) = c` that locally minimizes
/// `||y - y0||`, starting from `(y0, z0)`.
///
/// Each iteration linearizes at the current iterate and takes the step
/// `d = d_p + K w`, where `d_p` is the minimum-norm Gauss-Newton correction
/// and `K` spans `ker [J_y J_z]`; `w` minimizes the linearized output
/// displacement. Feasibility restoration and descent along the solution set
/// therefore happen together, with backtracking on the residual.
/// Termination requires both the residual and the first-order optimality
/// measure to be small.
pub fn constrained_nearest_solution(
    problem: &dyn CrepProblem,
    point: &CrepPoint,
    x_pert: &RealVector,
    opts: &SolverOptions,
) -> Result<ResolveResult> {
    let mut cur = point.with_input(x_pert.clone());
    let tol = opts.tol.unwrap_or(1e-12 * x_pert.norm().max(1.0));
    let opt_tol = 10.0 * tol;
    let trust = opts.trust_radius.unwrap_or(1.0 + point.z.norm());
    let rtol_for = |m: &RealMatrix| {
        opts.rtol
            .unwrap_or_else(|| numla::default_rtol(m.nrows(), m.ncols()))
    };

    let mut iterations = 0;
    loop {
        let r = problem.residual(&cur);
        let rn = r.norm();
        let charts = problem.charts(&cur)?;
        let blocks = crep::blocks_from(problem, &cur, &charts)?;
        let dim_y = blocks.dim_y();
        let jyz = blocks.jyz();
        let by = charts.y.basis();
        let bz = charts.z.basis();

        let g = by.transpose() * (&cur.y - &point.y);
        let kernel = numla::kernel_basis(&jyz, rtol_for(&jyz))?;
        let k_y = kernel.rows(0, dim_y).into_owned();
        let cut = rtol_for(&kernel);
        let w_basis = numla::orthonormalize_absolute(&k_y, cut)?;
        let optimality = (w_basis.transpose() * &g).norm();

        let done = rn <= tol && optimality <= opt_tol;
        if done || iterations >= opts.max_iter {
            return Ok(ResolveResult {
                y: cur.y,
                z: cur.z,
                residual_norm: rn,
                optimality,
                iterations,
                converged: done,
                tolerance: tol,
            });
        }
        iterations += 1;

        let rhs = RealMatrix::from_column_slice(r.len(), 1, (-&r).as_slice());
        let dp = numla::least_squares_min_norm(&jyz, &rhs, rtol_for(&jyz))?
            .column(0)
            .into_owned();
        let target = -(&g + dp.rows(0, dim_y));
        let w = numla::pseudo_inverse_absolute(&k_y, cut)? * target;
        let step = dp + &kernel * w;
        let (sy, sz) = (
            step.rows(0, dim_y).into_owned(),
            step.rows(dim_y, step.len() - dim_y).into_owned(),
        );
        let dy = by * sy;
        let dz = bz * sz;

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let cand = CrepPoint {
                x: cur.x.clone(),
                y: problem.retract(Role::Output, &cur.y, &(&dy * alpha))?,
                z: problem.retract(Role::Latent, &cur.z, &(&dz * alpha))?,
            };
            if problem.in_domain(&cand) {
                let rn_new = problem.residual(&cand).norm();
                let growth = alpha * alpha * (dy.norm_squared() + dz.norm_squared());
                if rn_new.is_finite() && rn_new < rn + growth {
                    accepted = Some(cand);
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some(next) = accepted else {
            return Ok(ResolveResult {
                y: cur.y,
                z: cur.z,
                residual_norm: rn,
                optimality,
                iterations,
                converged: false,
                tolerance: tol,
            });
        };
        if (&next.z - &point.z).norm() > trust {
            return Err(CrepError::Resolve(format!(
                "latent variable left the trust region of radius {trust:.3e} around z0"
            )));
        }
        cur = next;
    }
}

/// Input point reached from `point.x` along the chart direction `dir`
/// scaled by `step`, retracted onto the input manifold.
pub fn perturb_input(
    problem: &dyn CrepProblem,
    point: &CrepPoint,
    dir: &RealVector,
    step: f64,
) -> Result<RealVector> {
    let charts = problem.charts(point)?;
    if dir.len() != charts.x.intrinsic_dim() {
        return Err(CrepError::DimensionMismatch(format!(
            "direction of length {} for an input chart of dimension {}",
            dir.len(),
            charts.x.intrinsic_dim()
        )));
    }
    problem.retract(Role::Input, &point.x, &(charts.x.basis() * dir * step))
}

/// Central-difference check of `DH` along a unit chart direction of the
/// input. Returns one relative error per step: `||fd - B_y DH dir||`
/// divided by `max(||B_y DH dir||, ||DH||)`.
pub fn finite_difference_check(
    problem: &dyn CrepProblem,
    point: &CrepPoint,
    direction: &RealVector,
    steps: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<f64>> {
    let charts = problem.charts(point)?;
    let blocks = crep::blocks_from(problem, point, &charts)?;
    let dh = crep::solution_map_derivative(&blocks, opts.rtol)?;
    let exact = charts.y.basis() * (&dh * direction);
    let denom = exact.norm().max(numla::spectral_norm(&dh));
    let denom = if denom > 0.0 { denom } else { 1.0 };
    steps
        .iter()
        .map(|&t| {
            let resolve = |s: f64| -> Result<RealVector> {
                let xp = perturb_input(problem, point, direction, s)?;
                let res = constrained_nearest_solution(problem, point, &xp, opts)?;
                if !res.converged {
                    return Err(CrepError::Resolve(format!(
                        "no convergence at step {s:e} (residual {:.3e}, optimality {:.3e})",
                        res.residual_norm, res.optimality
                    )));
                }
                Ok(res.y)
            };
            let fd = (resolve(t)? - resolve(-t)?) / (2.0 * t);
            Ok((fd - &exact).norm() / denom)
        })
        .collect()
}

/// Perturb-and-resolve estimate of the condition number at a finite radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalEstimate {
    pub radius: f64,
    pub n_samples: usize,
    pub max_ratio: f64,
    pub seed: u64,
    /// Ratio along the top right singular vector of `DH`, when `DH` is not
    /// empty.
    pub top_direction_ratio: Option<f64>,
    pub failures: usize,
}

/// Independent random stream for sample `index` of a seeded experiment.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Uniformly distributed unit vector.
pub fn random_unit(dim: usize, rng: &mut ChaCha8Rng) -> RealVector {
    loop {
        let v = RealVector::from_fn(dim, |_, _| StandardNormal.sample(&mut *rng));
        let n = v.norm();
        if n > 1e-8 || dim == 0 {
            return if dim == 0 { v } else { v / n };
        }
    }
}

/// Samples `n_samples` inputs uniformly on the radius-`radius` sphere of the
/// input chart, plus the top singular direction of `DH`, resolves each and
/// reports the largest `||y - y0|| / ||x - x0||`.
pub fn empirical_condition(
    problem: &dyn CrepProblem,
    point: &CrepPoint,
    radius: f64,
    n_samples: usize,
    seed: u64,
    opts: &SolverOptions,
) -> Result<EmpiricalEstimate> {
    let charts = problem.charts(point)?;
    let blocks = crep::blocks_from(problem, point, &charts)?;
    let dh = crep::solution_map_derivative(&blocks, opts.rtol)?;
    let dim_x = charts.x.intrinsic_dim();

    let ratio_along = |dir: &RealVector| -> Result<f64> {
        let xp = perturb_input(problem, point, dir, radius)?;
        let res = constrained_nearest_solution(problem, point, &xp, opts)?;
        if !res.converged {
            return Err(CrepError::Resolve("no convergence".into()));
        }
        let dx = (&xp - &point.x).norm();
        Ok((&res.y - &point.y).norm() / dx)
    };

    let sampled: Vec<Result<f64>> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, i as u64);
            ratio_along(&random_unit(dim_x, &mut rng))
        })
        .collect();

    let top_direction_ratio = if dh.nrows() > 0 && dh.ncols() > 0 {
        let (_, _, v) = numla::sorted_svd(&dh);
        Some(ratio_along(&v.column(0).into_owned())?)
    } else {
        None
    };

    let failures = sampled.iter().filter(|r| r.is_err()).count();
    if failures == n_samples && top_direction_ratio.is_none() {
        return Err(CrepError::Resolve(format!(
            "all {n_samples} samples failed to resolve"
        )));
    }
    let max_ratio = sampled
        .iter()
        .filter_map(|r| r.as_ref().ok().copied())
        .chain(top_direction_ratio)
        .fold(0.0, f64::max);
    Ok(EmpiricalEstimate {
        radius,
        n_samples,
        max_ratio,
        seed,
        top_direction_ratio,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{LinearProblem, PolarProblem};
    use nalgebra::dvector;

    #[test]
    fn unperturbed_input_returns_the_point() {
        let p = PolarProblem;
        let pt = PolarProblem::reference_point(0.0);
        let res = constrained_nearest_solution(&p, &pt, &pt.x, &SolverOptions::default()).unwrap();
        assert!(res.converged);
        assert!(res.iterations <= 1);
        assert!((&res.y - &pt.y).norm() < 1e-14);
        assert!((&res.z - &pt.z).norm() < 1e-14);
    }

    #[test]
    fn polar_resolve_matches_analytic_map() {
        let p = PolarProblem;
        let pt = PolarProblem::reference_point(0.0);
        let res = constrained_nearest_solution(&p, &pt, &dvector![0.01], &SolverOptions::default())
            .unwrap();
        assert!(res.converged);
        assert!((res.y[0] - 1.0 / 0.99).abs() < 1e-12);
        assert!((res.z[0] - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
    }

    #[test]
    fn polar_finite_differences_converge() {
        let p = PolarProblem;
        let pt = PolarProblem::reference_point(0.0);
        let errs = finite_difference_check(
            &p,
            &pt,
            &dvector![1.0],
            &[1e-2, 1e-3, 1e-4],
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
        assert!(errs[2] <= 1e-4);
    }

    #[test]
    fn linear_problem_differences_are_exact() {
        // F = x - y.
        let p = LinearProblem::new(
            RealMatrix::identity(2, 2),
            -RealMatrix::identity(2, 2),
            RealMatrix::zeros(2, 0),
        )
        .unwrap();
        let errs = finite_difference_check(
            &p,
            &p.origin(),
            &dvector![0.6, 0.8],
            &[1e-1, 1e-3, 1e-5],
            &SolverOptions::default(),
        )
        .unwrap();
        for e in errs {
            assert!(e < 1e-9, "{e}");
        }
    }

    #[test]
    fn polar_empirical_ratio_approaches_kappa() {
        let p = PolarProblem;
        let pt = PolarProblem::reference_point(0.0);
        let mut last = f64::INFINITY;
        for r in [1e-2, 1e-3, 1e-4] {
            let est = empirical_condition(&p, &pt, r, 8, 3, &SolverOptions::default()).unwrap();
            let dev = (est.max_ratio - 1.0).abs();
            assert!(dev < last);
            last = dev;
        }
        assert!(last < 1e-3);
    }

    #[test]
    fn flat_solution_map_gives_vanishing_ratio() {
        // Polar problem with the angle as output: DH = 0.
        let p = PolarProblem;
        let pt = PolarProblem::reference_point(0.0);
        let swapped = crate::problems::Swapped::new(&p);
        let spt = crate::problems::Swapped::<PolarProblem>::swap_point(&pt);
        let est =
            empirical_condition(&swapped, &spt, 1e-4, 4, 1, &SolverOptions::default()).unwrap();
        assert!(est.max_ratio < 1e-3, "{}", est.max_ratio);
    }

    #[test]
    fn sample_streams_are_reproducible() {
        let a = random_unit(5, &mut sample_rng(7, 3));
        let b = random_unit(5, &mut sample_rng(7, 3));
        let c = random_unit(5, &mut sample_rng(7, 4));
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!((a.norm() - 1.0).abs() < 1e-15);
    }
}
