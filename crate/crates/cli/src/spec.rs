//! Problem specification files.

use crate::CliError;
use crep::crep::CrepProblem;
use crep::numla::RealMatrix;
use crep::problems::{LinearProblem, MatrixFactorizationProblem, PolarProblem};
use crep::tensor::{hosvd, multilinear_rank, DenseTensor};
use crep::tucker::{build_tucker_crep, TuckerCrepConfig, TuckerVariable};
use crep::{CrepPoint, TuckerPoint};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Relative tolerance for the multilinear rank of a tensor read from disk.
pub const TENSOR_RANK_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Polar {
        x0: f64,
    },
    MatrixFactorization {
        m: usize,
        n: usize,
        k_rank: usize,
        #[serde(default)]
        seed: u64,
    },
    Tucker {
        /// Inline tensor; exclusive with `tensor_path`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tensor: Option<DenseTensor>,
        /// Tensor file, relative to the spec file.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tensor_path: Option<PathBuf>,
        ranks: Vec<usize>,
        #[serde(alias = "output")]
        output_variable: TuckerVariable,
    },
    CustomLinearized {
        jx: Vec<Vec<f64>>,
        jy: Vec<Vec<f64>>,
        /// Omitted means no latent variables.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        jz: Option<Vec<Vec<f64>>>,
    },
}

impl ProblemSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ProblemSpec::Polar { .. } => "polar",
            ProblemSpec::MatrixFactorization { .. } => "matrix_factorization",
            ProblemSpec::Tucker { .. } => "tucker",
            ProblemSpec::CustomLinearized { .. } => "custom_linearized",
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = read(path)?;
        serde_json::from_str(&text).map_err(|e| CliError::Spec(format!("{}: {e}", path.display())))
    }

    /// Builds the problem and its base point. Relative tensor paths are
    /// resolved against `base_dir`.
    pub fn build(&self, base_dir: &Path) -> Result<(Box<dyn CrepProblem>, CrepPoint), CliError> {
        match self {
            ProblemSpec::Polar { x0 } => {
                if !(x0.is_finite() && *x0 < 1.0) {
                    return Err(CliError::Spec(format!(
                        "x0: must be finite and below 1, got {x0}"
                    )));
                }
                Ok((Box::new(PolarProblem), PolarProblem::reference_point(*x0)))
            }
            ProblemSpec::MatrixFactorization { m, n, k_rank, seed } => {
                let (p, point) = MatrixFactorizationProblem::seeded(*m, *n, *k_rank, *seed)
                    .map_err(|e| CliError::Spec(format!("m, n, k_rank: {e}")))?;
                Ok((Box::new(p), point))
            }
            ProblemSpec::Tucker {
                tensor,
                tensor_path,
                ranks,
                output_variable,
            } => {
                let t = match (tensor, tensor_path) {
                    (Some(t), None) => t.clone(),
                    (None, Some(p)) => load_tensor(&base_dir.join(p))?,
                    _ => {
                        return Err(CliError::Spec(
                            "tensor, tensor_path: exactly one must be given".into(),
                        ))
                    }
                };
                let point = tucker_point(&t, ranks, None)?;
                if let TuckerVariable::Factor(d) = output_variable {
                    if *d >= point.order() {
                        return Err(CliError::Spec(format!(
                            "output_variable: {output_variable} but the tensor has order {}",
                            point.order()
                        )));
                    }
                }
                let (p, base) = build_tucker_crep(&TuckerCrepConfig {
                    point,
                    output: *output_variable,
                    rtol: None,
                })?;
                Ok((Box::new(p), base))
            }
            ProblemSpec::CustomLinearized { jx, jy, jz } => {
                let jx = matrix("jx", jx)?;
                let jy = matrix("jy", jy)?;
                let jz = match jz {
                    Some(rows) => matrix("jz", rows)?,
                    None => RealMatrix::zeros(jy.nrows(), 0),
                };
                if jx.nrows() != jy.nrows() || jz.nrows() != jy.nrows() {
                    return Err(CliError::Spec(format!(
                        "jx, jy, jz: row counts {}, {} and {} differ",
                        jx.nrows(),
                        jy.nrows(),
                        jz.nrows()
                    )));
                }
                let p = LinearProblem::new(jx, jy, jz)?;
                let origin = p.origin();
                Ok((Box::new(p), origin))
            }
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_tensor(path: &Path) -> Result<DenseTensor, CliError> {
    let text = read(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Spec(format!("{}: {e}", path.display())))
}

/// HOSVD of `t` at exactly the requested multilinear rank.
pub fn tucker_point(
    t: &DenseTensor,
    ranks: &[usize],
    rtol: Option<f64>,
) -> Result<TuckerPoint, CliError> {
    let rtol = rtol.unwrap_or(TENSOR_RANK_RTOL);
    if ranks.len() != t.order() {
        return Err(CliError::Spec(format!(
            "ranks: {} entries for an order-{} tensor",
            ranks.len(),
            t.order()
        )));
    }
    let actual = multilinear_rank(t, rtol).map_err(crep::CrepError::from)?;
    if actual != ranks {
        return Err(CliError::RankMismatch {
            requested: ranks.to_vec(),
            actual,
        });
    }
    Ok(hosvd(t, ranks, rtol).map_err(crep::CrepError::from)?)
}

fn matrix(field: &str, rows: &[Vec<f64>]) -> Result<RealMatrix, CliError> {
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(i) = rows.iter().position(|r| r.len() != ncols) {
        return Err(CliError::Spec(format!(
            "{field}: row {i} has {} entries, expected {ncols}",
            rows[i].len()
        )));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(CliError::Spec(format!("{field}: entries must be finite")));
    }
    Ok(RealMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}
