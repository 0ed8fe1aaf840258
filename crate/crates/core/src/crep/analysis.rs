use super::pipeline::{kappas_from_blocks, Kappas, PipelineOptions};
use super::{
    certify_crep, evaluate_blocks, CertifyOptions, CrepError, CrepPoint, CrepProblem,
    RankCertificate, Result,
};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnalysisOptions {
    pub pipeline: PipelineOptions,
    pub certify: CertifyOptions,
    /// Largest accepted `||F(x0, y0, z0) - c||`; `None` means
    /// `1e-9 * (1 + ||x0||)`.
    pub feas_tol: Option<f64>,
}

/// Condition numbers at a certified point. `kappas` is `None` when the
/// certificate failed: the condition number is undefined there.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub certificate: RankCertificate,
    pub kappas: Option<Kappas>,
    pub residual_norm: f64,
    pub feas_tol: f64,
}

impl ConditionReport {
    pub fn certified(&self) -> bool {
        self.certificate.passed && self.kappas.is_some()
    }
}

/// Checks feasibility, certifies the rank hypotheses and computes
/// `kappa_y`, `kappa_z` and `kappa_yz`.
pub fn condition_numbers(
    problem: &dyn CrepProblem,
    point: &CrepPoint,
    opts: &AnalysisOptions,
) -> Result<ConditionReport> {
    let residual_norm = problem.residual(point).norm();
    let feas_tol = opts.feas_tol.unwrap_or(1e-9 * (1.0 + point.x.norm()));
    if !(residual_norm <= feas_tol) {
        return Err(CrepError::Infeasible {
            residual: residual_norm,
            tolerance: feas_tol,
        });
    }
    let certificate = certify_crep(problem, point, &opts.certify)?;
    let kappas = if certificate.passed {
        Some(kappas_from_blocks(
            &evaluate_blocks(problem, point)?,
            &opts.pipeline,
        )?)
    } else {
        None
    };
    Ok(ConditionReport {
        certificate,
        kappas,
        residual_norm,
        feas_tol,
    })
}
