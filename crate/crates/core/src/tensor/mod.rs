//! Dense multilinear algebra: flattenings, multilinear multiplication,
//! truncated HOSVD and tangent-space bases for Tucker decompositions.
//!
//! Tensors are stored row-major (last index fastest). The mode-`d`
//! flattening has `n_d` rows; its columns enumerate the remaining modes with
//! earlier modes most significant, so that
//!
//! ```text
//! flatten((U_1, ..., U_D) . T, d) = U_d flatten(T, d) (U_1 ⊗ .. ⊗ U_{d-1} ⊗ U_{d+1} ⊗ .. ⊗ U_D)^T
//! ```
//!
//! holds with left-to-right Kronecker products. Modes are 0-based.
//!
//! Matrices that live on manifolds (Tucker factors) are vectorized row-major
//! whenever they appear as ambient coordinate vectors.

mod tangent;
mod tucker_point;

pub use tangent::{
    horizontal_tangent_basis, mlrank_tangent_basis, mlrank_tangent_blocks, stiefel_tangent_basis,
};
pub use tucker_point::{hosvd, TuckerPoint};

use crate::numla::{self, NumlaError, RealMatrix, RealVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape {shape:?} needs {expected} entries, got {actual}")]
    DataLength {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("tensor shape entries must be positive, got {0:?}")]
    EmptyMode(Vec<usize>),
    #[error("mode {mode} out of range for an order-{order} tensor")]
    ModeOutOfRange { mode: usize, order: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("requested rank {requested} in mode {mode} exceeds numerical rank {numerical}")]
    RankExceeds {
        mode: usize,
        requested: usize,
        numerical: usize,
    },
    #[error("factor {mode} is not orthonormal (||U^T U - I|| = {defect:.3e})")]
    NotOrthonormal { mode: usize, defect: f64 },
    #[error("core flattening {mode} is rank deficient ({rank} < {expected}); decomposition is not minimal")]
    NonMinimalCore {
        mode: usize,
        rank: usize,
        expected: usize,
    },
    #[error(transparent)]
    Numla(#[from] NumlaError),
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Real D-way array, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TensorFile", into = "TensorFile")]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// On-disk form: `{"shape": [n_1, .., n_D], "data": [row-major entries]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorFile {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl TryFrom<TensorFile> for DenseTensor {
    type Error = TensorError;
    fn try_from(f: TensorFile) -> Result<Self> {
        DenseTensor::new(f.shape, f.data)
    }
}

impl From<DenseTensor> for TensorFile {
    fn from(t: DenseTensor) -> Self {
        TensorFile {
            shape: t.shape,
            data: t.data,
        }
    }
}

fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * shape[k + 1];
    }
    strides
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(TensorError::EmptyMode(shape));
        }
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(TensorError::DataLength {
                shape,
                expected,
                actual: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(NumlaError::NonFinite.into());
        }
        Ok(DenseTensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let len = shape.iter().product();
        Self::new(shape, vec![0.0; len])
    }

    /// Order-2 tensor with the same entries as `m`.
    pub fn from_matrix(m: &RealMatrix) -> Result<Self> {
        Self::new(vec![m.nrows(), m.ncols()], numla::to_row_major(m))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        let strides = row_major_strides(&self.shape);
        let lin: usize = index.iter().zip(&strides).map(|(i, s)| i * s).sum();
        self.data[lin]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_vector(&self) -> RealVector {
        RealVector::from_column_slice(&self.data)
    }

    /// Reinterprets a vector of row-major entries with the given shape.
    pub fn from_vector(shape: Vec<usize>, v: &RealVector) -> Result<Self> {
        Self::new(shape, v.as_slice().to_vec())
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        DenseTensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| alpha * v).collect(),
        }
    }

    /// `self - other` for tensors of equal shape.
    pub fn sub(&self, other: &DenseTensor) -> Result<Self> {
        if self.shape != other.shape {
            return Err(TensorError::ShapeMismatch(format!(
                "{:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(DenseTensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode < self.order() {
            Ok(())
        } else {
            Err(TensorError::ModeOutOfRange {
                mode,
                order: self.order(),
            })
        }
    }
}

/// Maps each linear row-major index of `shape` to its (row, col) position in
/// the mode-`mode` flattening.
fn flatten_positions(shape: &[usize], mode: usize) -> Vec<(usize, usize)> {
    let order = shape.len();
    // Strides of the remaining modes inside the column index, earlier modes
    // most significant.
    let mut col_strides = vec![0usize; order];
    let mut s = 1;
    for k in (0..order).rev() {
        if k != mode {
            col_strides[k] = s;
            s *= shape[k];
        }
    }
    let total: usize = shape.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; order];
    for _ in 0..total {
        let col: usize = (0..order).map(|k| idx[k] * col_strides[k]).sum();
        out.push((idx[mode], col));
        for k in (0..order).rev() {
            idx[k] += 1;
            if idx[k] < shape[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    out
}

/// Mode-`mode` flattening: `n_mode x prod_{j != mode} n_j`.
pub fn flatten(t: &DenseTensor, mode: usize) -> Result<RealMatrix> {
    t.check_mode(mode)?;
    let rows = t.shape[mode];
    let cols = t.len() / rows;
    let mut m = RealMatrix::zeros(rows, cols);
    for (lin, (r, c)) in flatten_positions(&t.shape, mode).into_iter().enumerate() {
        m[(r, c)] = t.data[lin];
    }
    Ok(m)
}

/// Inverse of [`flatten`] for a target `shape`.
pub fn unflatten(m: &RealMatrix, mode: usize, shape: &[usize]) -> Result<DenseTensor> {
    if mode >= shape.len() {
        return Err(TensorError::ModeOutOfRange {
            mode,
            order: shape.len(),
        });
    }
    let total: usize = shape.iter().product();
    if m.nrows() != shape[mode] || m.nrows() * m.ncols() != total {
        return Err(TensorError::ShapeMismatch(format!(
            "{}x{} matrix cannot unflatten to {:?} along mode {mode}",
            m.nrows(),
            m.ncols(),
            shape
        )));
    }
    let data = flatten_positions(shape, mode)
        .into_iter()
        .map(|(r, c)| m[(r, c)])
        .collect();
    DenseTensor::new(shape.to_vec(), data)
}

/// Kronecker product; block `(i, j)` is `a_ij * b`.
pub fn kronecker(a: &RealMatrix, b: &RealMatrix) -> RealMatrix {
    a.kronecker(b)
}

/// Kronecker product of a list of matrices, left to right. The empty list
/// gives the 1x1 identity.
pub fn kronecker_chain<'a>(mats: impl IntoIterator<Item = &'a RealMatrix>) -> RealMatrix {
    mats.into_iter()
        .fold(RealMatrix::identity(1, 1), |acc, m| acc.kronecker(m))
}

/// Multiplies mode `mode` of `t` by `m`.
pub fn mode_product(t: &DenseTensor, m: &RealMatrix, mode: usize) -> Result<DenseTensor> {
    t.check_mode(mode)?;
    if m.ncols() != t.shape[mode] {
        return Err(TensorError::ShapeMismatch(format!(
            "matrix with {} columns applied to mode {mode} of size {}",
            m.ncols(),
            t.shape[mode]
        )));
    }
    let mut shape = t.shape.clone();
    shape[mode] = m.nrows();
    unflatten(&(m * flatten(t, mode)?), mode, &shape)
}

/// Multilinear multiplication `(M_1, ..., M_D) . T`.
pub fn multilinear_multiply(matrices: &[RealMatrix], t: &DenseTensor) -> Result<DenseTensor> {
    if matrices.len() != t.order() {
        return Err(TensorError::ShapeMismatch(format!(
            "{} matrices for an order-{} tensor",
            matrices.len(),
            t.order()
        )));
    }
    let mut out = t.clone();
    for (mode, m) in matrices.iter().enumerate() {
        out = mode_product(&out, m, mode)?;
    }
    Ok(out)
}

/// Numerical rank of every flattening. The zero tensor has rank zero in
/// every mode.
pub fn multilinear_rank(t: &DenseTensor, rtol: f64) -> Result<Vec<usize>> {
    (0..t.order())
        .map(|d| Ok(numla::numerical_rank(&flatten(t, d)?, rtol)?.rank))
        .collect()
}

/// Row-major vectorization of a matrix.
pub fn vec_row_major(m: &RealMatrix) -> RealVector {
    RealVector::from_vec(numla::to_row_major(m))
}

/// Inverse of [`vec_row_major`].
pub fn unvec_row_major(v: &[f64], rows: usize, cols: usize) -> RealMatrix {
    assert_eq!(v.len(), rows * cols, "unvec length mismatch");
    RealMatrix::from_row_slice(rows, cols, v)
}
