//! Dense linear-algebra kernels: rank decisions, orthonormal subspace bases,
//! minimum-norm solves and spectral norms.
//!
//! Every subspace computation goes through a singular value decomposition.
//! Rank decisions are relative: a singular value counts when it is strictly
//! larger than `rtol * sigma_max`. Matrices with zero rows or zero columns are
//! ordinary values here and flow through every routine.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense real matrix. Storage is nalgebra's column-major layout; entries are
/// read and written row-major at the serialization boundary.
pub type RealMatrix = DMatrix<f64>;
/// Dense real column vector.
pub type RealVector = DVector<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumlaError {
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("relative tolerance must be positive and finite, got {0}")]
    InvalidTolerance(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(
        "inconsistent system: column {column} has residual {residual:.3e} above bound {bound:.3e}"
    )]
    Inconsistent {
        column: usize,
        residual: f64,
        bound: f64,
    },
}

pub type Result<T> = std::result::Result<T, NumlaError>;

/// Default relative rank tolerance for a `rows x cols` matrix:
/// `max(rows, cols) * eps * 64`.
pub fn default_rtol(rows: usize, cols: usize) -> f64 {
    rows.max(cols).max(1) as f64 * f64::EPSILON * 64.0
}

/// Outcome of a numerical rank decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankDecision {
    pub rank: usize,
    /// Nonincreasing.
    pub singular_values: Vec<f64>,
    /// Absolute cut: `rtol * sigma_max`.
    pub tolerance_used: f64,
}

impl RankDecision {
    pub(crate) fn from_singular_values(singular_values: Vec<f64>, rtol: f64) -> Self {
        let smax = singular_values.first().copied().unwrap_or(0.0);
        let tolerance_used = rtol * smax;
        let rank = singular_values
            .iter()
            .take_while(|&&s| s > tolerance_used)
            .count();
        RankDecision {
            rank,
            singular_values,
            tolerance_used,
        }
    }

    /// Smallest retained singular value, or `+inf` when the rank is zero.
    pub fn smallest_kept(&self) -> f64 {
        match self.rank {
            0 => f64::INFINITY,
            r => self.singular_values[r - 1],
        }
    }

    /// `sigma_max / smallest_kept`, or 1 when the rank is zero.
    pub fn kept_condition(&self) -> f64 {
        match self.rank {
            0 => 1.0,
            r => self.singular_values[0] / self.singular_values[r - 1],
        }
    }

    /// Largest discarded singular value (0 when nothing is discarded).
    pub fn largest_discarded(&self) -> f64 {
        self.singular_values.get(self.rank).copied().unwrap_or(0.0)
    }

    /// True when the cut sits within a factor 10 of a singular value on
    /// either side, i.e. a slightly different tolerance could flip the rank.
    pub fn is_fragile(&self) -> bool {
        if self.tolerance_used == 0.0 {
            return false;
        }
        self.smallest_kept() < 10.0 * self.tolerance_used
            || self.largest_discarded() * 10.0 > self.tolerance_used
    }
}

fn check_rtol(rtol: f64) -> Result<()> {
    if rtol > 0.0 && rtol.is_finite() {
        Ok(())
    } else {
        Err(NumlaError::InvalidTolerance(rtol))
    }
}

fn check_finite(m: &RealMatrix) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(NumlaError::NonFinite)
    }
}

type Svd = (RealMatrix, Vec<f64>, RealMatrix);

fn faer_thin_svd(m: &RealMatrix) -> Option<Svd> {
    let (rows, cols) = m.shape();
    let fm = faer::Mat::<f64>::from_fn(rows, cols, |i, j| m[(i, j)]);
    let svd = fm.thin_svd().ok()?;
    let (u, v, s) = (svd.U(), svd.V(), svd.S().column_vector());
    let p = rows.min(cols);
    Some((
        RealMatrix::from_fn(rows, p, |i, j| u[(i, j)]),
        (0..p).map(|i| s[i]).collect(),
        RealMatrix::from_fn(cols, p, |i, j| v[(i, j)]),
    ))
}

/// SVD of a tall matrix through `A = QR` and the SVD of `R`.
fn qr_preconditioned_svd(m: &RealMatrix) -> Option<Svd> {
    if m.nrows() < m.ncols() {
        let (u, s, v) = qr_preconditioned_svd(&m.transpose())?;
        return Some((v, s, u));
    }
    let qr = m.clone().qr();
    let (ur, s, v) = faer_thin_svd(&qr.r())?;
    Some((qr.q() * ur, s, v))
}

/// Thin SVD `(U, sigma, V)` computed by faer.
///
/// nalgebra's own SVD returns non-orthogonal singular vectors on some
/// nearly diagonal inputs, so the factorization is delegated. faer in turn
/// occasionally fails to converge on clustered spectra; those inputs are
/// retried after QR preconditioning and then after rescaling.
fn checked_svd(m: &RealMatrix) -> Svd {
    if let Some(svd) = faer_thin_svd(m).or_else(|| qr_preconditioned_svd(m)) {
        return svd;
    }
    let alpha = 0.75;
    let (u, s, v) = faer_thin_svd(&(m * alpha))
        .or_else(|| qr_preconditioned_svd(&(m * alpha)))
        .expect("SVD of a finite matrix converges");
    (u, s.into_iter().map(|x| x / alpha).collect(), v)
}

/// Thin SVD sorted by nonincreasing singular value: `(U, sigma, V)` with
/// `U` of size `rows x p`, `V` of size `cols x p`, `p = min(rows, cols)`.
pub(crate) fn sorted_svd(m: &RealMatrix) -> Svd {
    let (rows, cols) = m.shape();
    let p = rows.min(cols);
    if p == 0 {
        return (
            RealMatrix::zeros(rows, 0),
            Vec::new(),
            RealMatrix::zeros(cols, 0),
        );
    }
    let (u, s, v) = checked_svd(m);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let sigma = order.iter().map(|&i| s[i]).collect();
    let u_sorted = RealMatrix::from_fn(rows, p, |r, c| u[(r, order[c])]);
    let v_sorted = RealMatrix::from_fn(cols, p, |r, c| v[(r, order[c])]);
    (u_sorted, sigma, v_sorted)
}

/// Full left singular basis (`rows x rows`) together with the sorted
/// singular values. Wide inputs already give a square `U`; tall inputs are
/// padded with zero columns, which adds only zero singular values.
fn full_left_svd(m: &RealMatrix) -> (RealMatrix, Vec<f64>) {
    let (rows, cols) = m.shape();
    if cols >= rows {
        let (u, s, _) = sorted_svd(m);
        return (u, s);
    }
    let mut padded = RealMatrix::zeros(rows, rows);
    padded.view_mut((0, 0), (rows, cols)).copy_from(m);
    let (u, mut s, _) = sorted_svd(&padded);
    s.truncate(cols);
    (u, s)
}

/// Singular values in nonincreasing order.
pub fn singular_values(m: &RealMatrix) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    sorted_svd(m).1
}

pub fn numerical_rank(m: &RealMatrix, rtol: f64) -> Result<RankDecision> {
    check_rtol(rtol)?;
    check_finite(m)?;
    Ok(RankDecision::from_singular_values(singular_values(m), rtol))
}

/// Orthonormal basis of the orthogonal complement of the numerical column
/// span of `m`: the left singular vectors belonging to singular values at or
/// below the cut. Returns `rows x (rows - rank)`.
pub fn complement_basis(m: &RealMatrix, rtol: f64) -> Result<RealMatrix> {
    check_rtol(rtol)?;
    check_finite(m)?;
    let rows = m.nrows();
    if m.ncols() == 0 || rows == 0 {
        return Ok(RealMatrix::identity(rows, rows));
    }
    let (u, s) = full_left_svd(m);
    let rank = RankDecision::from_singular_values(s, rtol).rank;
    Ok(u.columns(rank, rows - rank).into_owned())
}

/// Orthonormal basis of the numerical kernel of `m`: right singular vectors
/// of the small singular values. Returns `cols x (cols - rank)`.
pub fn kernel_basis(m: &RealMatrix, rtol: f64) -> Result<RealMatrix> {
    complement_basis(&m.transpose(), rtol)
}

/// Orthonormal basis of the numerical column space of `m`.
pub fn orthonormalize(m: &RealMatrix, rtol: f64) -> Result<RealMatrix> {
    check_rtol(rtol)?;
    check_finite(m)?;
    let (u, s, _) = sorted_svd(m);
    let rank = RankDecision::from_singular_values(s, rtol).rank;
    Ok(u.columns(0, rank).into_owned())
}

/// Orthonormal basis of the span of the left singular vectors whose
/// singular values exceed the absolute cutoff `abs_cut`.
pub fn orthonormalize_absolute(m: &RealMatrix, abs_cut: f64) -> Result<RealMatrix> {
    check_finite(m)?;
    let (u, s, _) = sorted_svd(m);
    let rank = s.iter().take_while(|&&v| v > abs_cut).count();
    Ok(u.columns(0, rank).into_owned())
}

/// Largest singular value; 0 for empty matrices.
pub fn spectral_norm(m: &RealMatrix) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Truncated Moore-Penrose inverse.
pub fn pseudo_inverse(a: &RealMatrix, rtol: f64) -> Result<RealMatrix> {
    check_rtol(rtol)?;
    check_finite(a)?;
    let (u, s, v) = sorted_svd(a);
    let rank = RankDecision::from_singular_values(s.clone(), rtol).rank;
    let mut vs = v.columns(0, rank).into_owned();
    for (j, mut col) in vs.column_iter_mut().enumerate() {
        col /= s[j];
    }
    Ok(vs * u.columns(0, rank).transpose())
}

/// Moore-Penrose inverse truncated at an absolute singular-value cutoff.
pub fn pseudo_inverse_absolute(a: &RealMatrix, abs_cut: f64) -> Result<RealMatrix> {
    check_finite(a)?;
    let (u, s, v) = sorted_svd(a);
    let rank = s.iter().take_while(|&&v| v > abs_cut).count();
    let mut vs = v.columns(0, rank).into_owned();
    for (j, mut col) in vs.column_iter_mut().enumerate() {
        col /= s[j];
    }
    Ok(vs * u.columns(0, rank).transpose())
}

/// Minimum-norm least-squares solution of `A X = B` without a consistency
/// check.
pub fn least_squares_min_norm(a: &RealMatrix, b: &RealMatrix, rtol: f64) -> Result<RealMatrix> {
    if a.nrows() != b.nrows() {
        return Err(NumlaError::DimensionMismatch(format!(
            "A has {} rows but B has {}",
            a.nrows(),
            b.nrows()
        )));
    }
    check_finite(b)?;
    Ok(pseudo_inverse(a, rtol)? * b)
}

/// Minimum-Frobenius-norm solution of the consistent system `A X = B`.
///
/// Fails with [`NumlaError::Inconsistent`] when some column's residual
/// exceeds `rtol * (||A||_2 ||X||_F + ||B||_F)`.
pub fn min_norm_solve(a: &RealMatrix, b: &RealMatrix, rtol: f64) -> Result<RealMatrix> {
    let x = least_squares_min_norm(a, b, rtol)?;
    check_consistent(a, b, &x, rtol, 0.0)?;
    Ok(x)
}

/// Fails with [`NumlaError::Inconsistent`] when some column of `A X - B`
/// exceeds `rtol * (||A||_2 ||X||_F + max(||B||_F, rhs_scale))`.
/// `rhs_scale` covers right-hand sides computed from larger data.
pub fn check_consistent(
    a: &RealMatrix,
    b: &RealMatrix,
    x: &RealMatrix,
    rtol: f64,
    rhs_scale: f64,
) -> Result<()> {
    let bound = rtol * (spectral_norm(a) * x.norm() + b.norm().max(rhs_scale));
    let resid = a * x - b;
    for (column, col) in resid.column_iter().enumerate() {
        let residual = col.norm();
        if residual > bound {
            return Err(NumlaError::Inconsistent {
                column,
                residual,
                bound,
            });
        }
    }
    Ok(())
}

/// `|| Q1 Q1^T - Q2 Q2^T ||_F` for orthonormal bases of equal ambient size.
/// Zero exactly when the spans coincide; sign and rotation blind.
pub fn projector_distance(q1: &RealMatrix, q2: &RealMatrix) -> f64 {
    (q1 * q1.transpose() - q2 * q2.transpose()).norm()
}

/// `|| Q^T Q - I ||_F`.
pub fn orthonormality_defect(q: &RealMatrix) -> f64 {
    (q.transpose() * q - RealMatrix::identity(q.ncols(), q.ncols())).norm()
}

/// Vertical concatenation `[top; bottom]`.
pub fn vstack(top: &RealMatrix, bottom: &RealMatrix) -> RealMatrix {
    assert_eq!(top.ncols(), bottom.ncols(), "vstack column mismatch");
    let mut out = RealMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.view_mut((0, 0), top.shape()).copy_from(top);
    out.view_mut((top.nrows(), 0), bottom.shape())
        .copy_from(bottom);
    out
}

/// Horizontal concatenation `[left right]`.
pub fn hstack(left: &RealMatrix, right: &RealMatrix) -> RealMatrix {
    assert_eq!(left.nrows(), right.nrows(), "hstack row mismatch");
    let mut out = RealMatrix::zeros(left.nrows(), left.ncols() + right.ncols());
    out.view_mut((0, 0), left.shape()).copy_from(left);
    out.view_mut((0, left.ncols()), right.shape())
        .copy_from(right);
    out
}

/// Block-diagonal matrix from a list of blocks.
pub fn block_diagonal(blocks: &[&RealMatrix]) -> RealMatrix {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = RealMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Builds a matrix from row-major entries.
pub fn from_row_major(rows: usize, cols: usize, entries: &[f64]) -> Result<RealMatrix> {
    if entries.len() != rows * cols {
        return Err(NumlaError::DimensionMismatch(format!(
            "{} entries for a {rows}x{cols} matrix",
            entries.len()
        )));
    }
    let m = RealMatrix::from_row_slice(rows, cols, entries);
    check_finite(&m)?;
    Ok(m)
}

/// Row-major entries of a matrix.
pub fn to_row_major(m: &RealMatrix) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}
