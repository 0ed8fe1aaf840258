//! Constant-rank elimination problems: systems `F(x, y, z) = c` solved for
//! the output `y` given the input `x`, with a latent variable `z` that must
//! exist but is not reported.
//!
//! A problem supplies its residual `F - c`, ambient Jacobians and orthonormal
//! tangent charts for the input, output and latent manifolds. Everything in
//! this module is local to a particular solution point: the chart-coordinate
//! Jacobian blocks determine the derivative of the canonical solution map and
//! its operator norm, the condition number.

mod analysis;
mod certify;
mod pipeline;

pub use analysis::{condition_numbers, AnalysisOptions, ConditionReport};
pub use certify::{certify_crep, check_ranks_at, CertifyOptions, PointRanks, RankCertificate};
pub use pipeline::{
    defining_equation_residuals, fcre_solution_derivative, kappas_from_blocks,
    solution_map_derivative, solution_map_derivative_minnorm, solution_map_pipeline, Kappas,
    PipelineOptions, SolutionMap,
};

use crate::numla::{self, NumlaError, RealMatrix, RealVector};
use crate::tensor::TensorError;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CrepError {
    #[error(transparent)]
    Numla(#[from] NumlaError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("{role} chart basis is not orthonormal (defect {defect:.3e})")]
    ChartNotOrthonormal { role: Role, defect: f64 },
    #[error("point is not a solution: residual {residual:.3e} exceeds {tolerance:.3e}")]
    Infeasible { residual: f64, tolerance: f64 },
    #[error(
        "stacked system has rank {rank} < {cols}; the constant-rank hypotheses are violated at this point"
    )]
    RankDeficientSystem { rank: usize, cols: usize },
    #[error("linearized system is inconsistent ({0}); the constant-rank hypotheses are violated")]
    InconsistentLinearization(NumlaError),
    #[error("rank [J_x J_y] = {rank_full} differs from rank J_y = {rank_jy}; not a feasible constant-rank equation")]
    FcreViolated { rank_full: usize, rank_jy: usize },
    #[error("resolve failed: {0}")]
    Resolve(String),
    #[error("{0}")]
    Domain(String),
}

pub type Result<T> = std::result::Result<T, CrepError>;

/// The three variable groups of a problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Input,
    Output,
    Latent,
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Role::Input => "input",
            Role::Output => "output",
            Role::Latent => "latent",
        })
    }
}

const CHART_ORTHONORMALITY_TOL: f64 = 1e-10;

/// Basis of a tangent space, as columns of ambient coordinate vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentChart {
    basis: RealMatrix,
}

impl TangentChart {
    /// Chart with orthonormal columns in the ambient Euclidean inner product.
    pub fn orthonormal(role: Role, basis: RealMatrix) -> Result<Self> {
        let defect = numla::orthonormality_defect(&basis);
        if !(defect <= CHART_ORTHONORMALITY_TOL) {
            return Err(CrepError::ChartNotOrthonormal { role, defect });
        }
        Ok(TangentChart { basis })
    }

    /// Chart with an arbitrary basis. Only meaningful for the latent space,
    /// whose metric never enters the condition number.
    pub fn arbitrary(basis: RealMatrix) -> Self {
        TangentChart { basis }
    }

    /// The whole ambient space with its standard basis.
    pub fn identity(dim: usize) -> Self {
        TangentChart {
            basis: RealMatrix::identity(dim, dim),
        }
    }

    pub fn basis(&self) -> &RealMatrix {
        &self.basis
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.basis.ncols()
    }
}

/// A particular solution `(x0, y0, z0)` in ambient coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CrepPoint {
    pub x: RealVector,
    pub y: RealVector,
    pub z: RealVector,
}

impl CrepPoint {
    pub fn new(x: RealVector, y: RealVector, z: RealVector) -> Self {
        CrepPoint { x, y, z }
    }

    /// Input scale used for relative radii and tolerances: `||x||`, or 1
    /// when `x = 0`.
    pub fn scale(&self) -> f64 {
        let s = self.x.norm();
        if s > 0.0 {
            s
        } else {
            1.0
        }
    }

    pub fn with_input(&self, x: RealVector) -> Self {
        CrepPoint {
            x,
            y: self.y.clone(),
            z: self.z.clone(),
        }
    }
}

/// Ambient sizes: `(dim x, dim y, dim z, number of equations)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmbientDims {
    pub x: usize,
    pub y: usize,
    pub z: usize,
    pub equations: usize,
}

/// Partial derivatives of `F` in ambient coordinates, each `N x ambient dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbientJacobian {
    pub x: RealMatrix,
    pub y: RealMatrix,
    pub z: RealMatrix,
}

/// Tangent charts of the input, output and latent manifolds at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Charts {
    pub x: TangentChart,
    pub y: TangentChart,
    pub z: TangentChart,
}

/// An equation system `F(x, y, z) = c`.
///
/// Implementations must be safe to evaluate concurrently.
pub trait CrepProblem: Sync {
    fn name(&self) -> &str;

    fn ambient_dims(&self) -> AmbientDims;

    /// `F(x, y, z) - c`.
    fn residual(&self, p: &CrepPoint) -> RealVector;

    fn jacobian(&self, p: &CrepPoint) -> AmbientJacobian;

    fn charts(&self, p: &CrepPoint) -> Result<Charts>;

    /// Maps `base + step` (with `step` tangent at `base`) back onto the
    /// manifold of the given role. Flat spaces use plain addition.
    fn retract(&self, _role: Role, base: &RealVector, step: &RealVector) -> Result<RealVector> {
        Ok(base + step)
    }

    /// Domain guard; points outside are never accepted by the resolver.
    fn in_domain(&self, _p: &CrepPoint) -> bool {
        true
    }
}

/// `J_x`, `J_y`, `J_z` in chart coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianBlocks {
    pub jx: RealMatrix,
    pub jy: RealMatrix,
    pub jz: RealMatrix,
}

impl JacobianBlocks {
    pub fn new(jx: RealMatrix, jy: RealMatrix, jz: RealMatrix) -> Result<Self> {
        if jx.nrows() != jy.nrows() || jy.nrows() != jz.nrows() {
            return Err(CrepError::DimensionMismatch(format!(
                "blocks have {}, {} and {} rows",
                jx.nrows(),
                jy.nrows(),
                jz.nrows()
            )));
        }
        Ok(JacobianBlocks { jx, jy, jz })
    }

    pub fn equations(&self) -> usize {
        self.jx.nrows()
    }

    pub fn dim_x(&self) -> usize {
        self.jx.ncols()
    }

    pub fn dim_y(&self) -> usize {
        self.jy.ncols()
    }

    pub fn dim_z(&self) -> usize {
        self.jz.ncols()
    }

    /// `[J_y J_z]`.
    pub fn jyz(&self) -> RealMatrix {
        numla::hstack(&self.jy, &self.jz)
    }

    /// `[J_x J_y J_z]`.
    pub fn full(&self) -> RealMatrix {
        numla::hstack(&self.jx, &self.jyz())
    }

    /// Output and latent roles exchanged.
    pub fn swapped(&self) -> Self {
        JacobianBlocks {
            jx: self.jx.clone(),
            jy: self.jz.clone(),
            jz: self.jy.clone(),
        }
    }

    /// The problem solved for `(y, z)` jointly with a trivial latent space.
    pub fn merged_output(&self) -> Self {
        JacobianBlocks {
            jx: self.jx.clone(),
            jy: self.jyz(),
            jz: RealMatrix::zeros(self.equations(), 0),
        }
    }
}

/// Projects the ambient Jacobians of `problem` at `point` onto its tangent
/// charts: `J_x = (dF/dx) B_x` and likewise for `y` and `z`.
pub fn evaluate_blocks(problem: &dyn CrepProblem, point: &CrepPoint) -> Result<JacobianBlocks> {
    let charts = problem.charts(point)?;
    blocks_from(problem, point, &charts)
}

pub(crate) fn blocks_from(
    problem: &dyn CrepProblem,
    point: &CrepPoint,
    charts: &Charts,
) -> Result<JacobianBlocks> {
    let jac = problem.jacobian(point);
    let project = |name: &str, j: &RealMatrix, chart: &TangentChart| -> Result<RealMatrix> {
        if j.ncols() != chart.ambient_dim() {
            return Err(CrepError::DimensionMismatch(format!(
                "{name}: Jacobian has {} columns but the chart lives in dimension {}",
                j.ncols(),
                chart.ambient_dim()
            )));
        }
        Ok(j * chart.basis())
    };
    JacobianBlocks::new(
        project("x", &jac.x, &charts.x)?,
        project("y", &jac.y, &charts.y)?,
        project("z", &jac.z, &charts.z)?,
    )
}
