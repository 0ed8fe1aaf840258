use super::{CrepError, JacobianBlocks, Result};
use crate::numla::{self, NumlaError, RankDecision, RealMatrix};

fn tol_for(rtol: Option<f64>, m: &RealMatrix) -> f64 {
    rtol.unwrap_or_else(|| numla::default_rtol(m.nrows(), m.ncols()))
}

fn consistency(err: NumlaError) -> CrepError {
    match err {
        e @ NumlaError::Inconsistent { .. } => CrepError::InconsistentLinearization(e),
        e => CrepError::Numla(e),
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PipelineOptions {
    /// Relative rank tolerance; `None` uses [`numla::default_rtol`] per matrix.
    pub rtol: Option<f64>,
    /// Fault injection for the verification suites: negates the right-hand
    /// side of the stacked system.
    #[doc(hidden)]
    pub flip_rhs_sign: bool,
}

impl PipelineOptions {
    pub fn with_rtol(rtol: Option<f64>) -> Self {
        PipelineOptions {
            rtol,
            flip_rhs_sign: false,
        }
    }
}

/// Derivative of the solution map together with the intermediate bases of
/// the stacked system `[Q^T J_y; U_y^T] DH = [-Q^T J_x; 0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionMap {
    /// `dim y x dim x`.
    pub dh: RealMatrix,
    /// Orthonormal basis of `(span J_z)^perp`.
    pub q: RealMatrix,
    /// Output rows of an orthonormal basis of `ker [J_y J_z]`.
    pub u_y: RealMatrix,
    /// Rank decision on the stacked matrix `A`.
    pub stacked_rank: RankDecision,
}

/// Solves the stacked linear system for the solution-map derivative.
///
/// `A = [Q^T J_y; U_y^T]` has full column rank at every constant-rank point;
/// a rank-deficient `A` aborts with [`CrepError::RankDeficientSystem`].
pub fn solution_map_pipeline(
    blocks: &JacobianBlocks,
    opts: &PipelineOptions,
) -> Result<SolutionMap> {
    let (dim_x, dim_y) = (blocks.dim_x(), blocks.dim_y());
    let jz_tol = tol_for(opts.rtol, &blocks.jz);
    let q = numla::complement_basis(&blocks.jz, jz_tol)?;
    let jyz = blocks.jyz();
    let jyz_tol = tol_for(opts.rtol, &jyz);
    let kernel = numla::kernel_basis(&jyz, jyz_tol)?;
    let u_y = kernel.rows(0, dim_y).into_owned();

    let qt = q.transpose();
    let a = numla::vstack(&(&qt * &blocks.jy), &u_y.transpose());
    let mut rhs = numla::vstack(
        &(-(&qt * &blocks.jx)),
        &RealMatrix::zeros(u_y.ncols(), dim_x),
    );
    if opts.flip_rhs_sign {
        rhs = -rhs;
    }
    let a_tol = tol_for(opts.rtol, &a);
    let stacked_rank = numla::numerical_rank(&a, a_tol)?;
    if stacked_rank.rank < dim_y {
        return Err(CrepError::RankDeficientSystem {
            rank: stacked_rank.rank,
            cols: dim_y,
        });
    }
    let dh = numla::least_squares_min_norm(&a, &rhs, a_tol)?;
    // Q and U_y carry rounding amplified by the conditioning of what they
    // were split from.
    let amplification = numla::numerical_rank(&blocks.jz, jz_tol)?
        .kept_condition()
        .max(numla::numerical_rank(&jyz, jyz_tol)?.kept_condition());
    numla::check_consistent(&a, &rhs, &dh, a_tol * amplification, blocks.jx.norm())
        .map_err(consistency)?;
    Ok(SolutionMap {
        dh,
        q,
        u_y,
        stacked_rank,
    })
}

/// Derivative `DH` (`dim y x dim x`) of the canonical solution map.
pub fn solution_map_derivative(blocks: &JacobianBlocks, rtol: Option<f64>) -> Result<RealMatrix> {
    Ok(solution_map_pipeline(blocks, &PipelineOptions::with_rtol(rtol))?.dh)
}

/// `DH` computed column by column as the least-norm output change: for each
/// input direction, the smallest `||dy||` over all `(dy, dz)` solving
/// `J_y dy + J_z dz = -J_x dx`.
///
/// The solution set is affine and parallel to `ker [J_y J_z]`, so the minimum
/// is the output part of any particular solution with its projection onto
/// the output rows of the kernel removed.
pub fn solution_map_derivative_minnorm(
    blocks: &JacobianBlocks,
    rtol: Option<f64>,
) -> Result<RealMatrix> {
    let dim_y = blocks.dim_y();
    let jyz = blocks.jyz();
    let tol = tol_for(rtol, &jyz);
    let rhs = -&blocks.jx;
    let particular = numla::least_squares_min_norm(&jyz, &rhs, tol)?;
    let amplification = numla::numerical_rank(&jyz, tol)?.kept_condition();
    numla::check_consistent(&jyz, &rhs, &particular, tol * amplification, 0.0)
        .map_err(consistency)?;
    let kernel = numla::kernel_basis(&jyz, tol)?;
    let k_y = kernel.rows(0, dim_y).into_owned();
    // The kernel basis has unit scale and carries rounding of order
    // eps * cond, so an absolute cutoff at that level separates genuine
    // output directions from noise.
    let w = numla::orthonormalize_absolute(&k_y, tol_for(rtol, &kernel) * amplification)?;
    let p_y = particular.rows(0, dim_y).into_owned();
    Ok(&p_y - &w * (w.transpose() * &p_y))
}

/// Solution-map derivative of a problem without latent variables:
/// `-(J_y)^+ J_x`. Requires `rank [J_x J_y] = rank J_y`.
pub fn fcre_solution_derivative(
    jx: &RealMatrix,
    jy: &RealMatrix,
    rtol: Option<f64>,
) -> Result<RealMatrix> {
    if jx.nrows() != jy.nrows() {
        return Err(CrepError::DimensionMismatch(format!(
            "J_x has {} rows, J_y has {}",
            jx.nrows(),
            jy.nrows()
        )));
    }
    let full = numla::hstack(jx, jy);
    let rank_full = numla::numerical_rank(&full, tol_for(rtol, &full))?.rank;
    let jy_tol = tol_for(rtol, jy);
    let rank_jy = numla::numerical_rank(jy, jy_tol)?.rank;
    if rank_full != rank_jy {
        return Err(CrepError::FcreViolated { rank_full, rank_jy });
    }
    Ok(-(numla::pseudo_inverse(jy, jy_tol)? * jx))
}

/// The three condition numbers at one point together with `DH` for the
/// output variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Kappas {
    pub kappa_y: f64,
    pub kappa_z: f64,
    pub kappa_yz: f64,
    pub dh: RealMatrix,
}

/// `kappa_y = ||DH||`, `kappa_z` with output and latent roles exchanged, and
/// `kappa_yz` for the joint output with a trivial latent space.
pub fn kappas_from_blocks(blocks: &JacobianBlocks, opts: &PipelineOptions) -> Result<Kappas> {
    let dh = solution_map_pipeline(blocks, opts)?.dh;
    let dh_z = solution_map_pipeline(&blocks.swapped(), opts)?.dh;
    let dh_yz = fcre_solution_derivative(&blocks.jx, &blocks.jyz(), opts.rtol)?;
    Ok(Kappas {
        kappa_y: numla::spectral_norm(&dh),
        kappa_z: numla::spectral_norm(&dh_z),
        kappa_yz: numla::spectral_norm(&dh_yz),
        dh,
    })
}

/// Relative residuals of the two defining conditions of `DH`:
/// `||Q^T (J_x + J_y DH)||` and `||U_y^T DH||`, each divided by
/// `||J_x|| + ||J_y|| ||DH||`.
pub fn defining_equation_residuals(blocks: &JacobianBlocks, map: &SolutionMap) -> (f64, f64) {
    let scale = numla::spectral_norm(&blocks.jx)
        + numla::spectral_norm(&blocks.jy) * numla::spectral_norm(&map.dh);
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let span = (map.q.transpose() * (&blocks.jx + &blocks.jy * &map.dh)).norm();
    let orth = (map.u_y.transpose() * &map.dh).norm();
    (span / scale, orth / scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn polar_blocks() -> JacobianBlocks {
        let s2 = 2f64.sqrt();
        JacobianBlocks::new(dmatrix![-2.0; 0.0], dmatrix![2.0; 0.0], dmatrix![0.0; -s2]).unwrap()
    }

    #[test]
    fn polar_derivative_is_one() {
        // y(x) = 1 / (1 - x) has derivative 1 at x = 0.
        let b = polar_blocks();
        let dh = solution_map_derivative(&b, None).unwrap();
        assert_eq!(dh.shape(), (1, 1));
        assert!((dh[(0, 0)] - 1.0).abs() < 1e-14);
        let dh2 = solution_map_derivative_minnorm(&b, None).unwrap();
        assert!((dh2[(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn two_equation_hand_solve() {
        // x + z = 0, y + z = 0 linearized: dy = dx, dz = -dx.
        let b = JacobianBlocks::new(dmatrix![1.0; 0.0], dmatrix![0.0; 1.0], dmatrix![1.0; 1.0])
            .unwrap();
        let map = solution_map_pipeline(&b, &PipelineOptions::default()).unwrap();
        assert_eq!(map.u_y.ncols(), 0);
        let expected_q = dmatrix![1.0; -1.0] / 2f64.sqrt();
        assert!(numla::projector_distance(&map.q, &expected_q) < 1e-14);
        assert!((map.dh[(0, 0)] - 1.0).abs() < 1e-14);
        let dh2 = solution_map_derivative_minnorm(&b, None).unwrap();
        assert!((dh2[(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn identity_output_without_latent() {
        let jx = dmatrix![1.0, 2.0, 0.5; -1.0, 0.0, 3.0];
        let b = JacobianBlocks::new(
            jx.clone(),
            RealMatrix::identity(2, 2),
            RealMatrix::zeros(2, 0),
        )
        .unwrap();
        let dh = solution_map_derivative(&b, None).unwrap();
        assert!((dh + &jx).norm() < 1e-14);
    }

    #[test]
    fn invertible_latent_absorbs_everything() {
        let b = JacobianBlocks::new(
            dmatrix![1.0; 2.0],
            dmatrix![3.0, -1.0; 0.5, 2.0],
            dmatrix![2.0, 1.0; 1.0, 3.0],
        )
        .unwrap();
        let dh = solution_map_derivative_minnorm(&b, None).unwrap();
        assert!(dh.norm() < 1e-14);
        let dh_pipe = solution_map_derivative(&b, None).unwrap();
        assert!(dh_pipe.norm() < 1e-14);
    }

    #[test]
    fn fcre_examples() {
        let m = dmatrix![1.0, -2.0; 0.5, 4.0];
        let d = fcre_solution_derivative(&m, &RealMatrix::identity(2, 2), None).unwrap();
        assert!((d + &m).norm() < 1e-14);

        let s2 = 2f64.sqrt();
        let d = fcre_solution_derivative(&dmatrix![-2.0; 0.0], &dmatrix![2.0, 0.0; 0.0, -s2], None)
            .unwrap();
        assert!((d - dmatrix![1.0; 0.0]).norm() < 1e-14);

        let d = fcre_solution_derivative(&dmatrix![1.0; 1.0], &dmatrix![1.0; 1.0], None).unwrap();
        assert!((d[(0, 0)] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn fcre_rank_condition_violation() {
        let err =
            fcre_solution_derivative(&dmatrix![1.0; 0.0], &dmatrix![1.0; 1.0], None).unwrap_err();
        assert!(matches!(
            err,
            CrepError::FcreViolated {
                rank_full: 2,
                rank_jy: 1
            }
        ));
    }

    #[test]
    fn polar_kappas() {
        let k = kappas_from_blocks(&polar_blocks(), &PipelineOptions::default()).unwrap();
        assert!((k.kappa_y - 1.0).abs() < 1e-14);
        assert!(k.kappa_z.abs() < 1e-14);
        assert!((k.kappa_yz - 1.0).abs() < 1e-14);
    }

    #[test]
    fn inconsistent_linearization_is_a_crep_violation() {
        // J_x escapes span [J_y J_z].
        let b = JacobianBlocks::new(
            dmatrix![1.0; 1.0],
            dmatrix![1.0; 0.0],
            RealMatrix::zeros(2, 0),
        )
        .unwrap();
        assert!(matches!(
            solution_map_derivative(&b, None),
            Err(CrepError::InconsistentLinearization(_))
        ));
        assert!(matches!(
            solution_map_derivative_minnorm(&b, None),
            Err(CrepError::InconsistentLinearization(_))
        ));
    }

    #[test]
    fn flipped_rhs_breaks_defining_equations() {
        let b = polar_blocks();
        let good = solution_map_pipeline(&b, &PipelineOptions::default()).unwrap();
        let (s, o) = defining_equation_residuals(&b, &good);
        assert!(s < 1e-14 && o < 1e-14);
        let bad = solution_map_pipeline(
            &b,
            &PipelineOptions {
                rtol: None,
                flip_rhs_sign: true,
            },
        )
        .unwrap();
        let (s, _) = defining_equation_residuals(&b, &bad);
        assert!(s > 0.1);
    }
}
