use super::{
    kronecker_chain, mode_product, multilinear_multiply, vec_row_major, Result, TensorError,
    TuckerPoint,
};
use crate::numla::{self, RealMatrix};

const ORTHONORMAL_PRE_TOL: f64 = 1e-10;

fn check_orthonormal(u: &RealMatrix) -> Result<()> {
    let defect = numla::orthonormality_defect(u);
    if defect <= ORTHONORMAL_PRE_TOL {
        Ok(())
    } else {
        Err(TensorError::NotOrthonormal { mode: 0, defect })
    }
}

fn complement(u: &RealMatrix) -> Result<RealMatrix> {
    Ok(numla::complement_basis(
        u,
        numla::default_rtol(u.nrows(), u.ncols()),
    )?)
}

/// Orthonormal basis of `{V : U^T V = 0}` for `U` in `St(n, m)`, as columns
/// of row-major vectorized `n x m` matrices. Dimension `(n - m) m`.
pub fn horizontal_tangent_basis(u: &RealMatrix) -> Result<RealMatrix> {
    check_orthonormal(u)?;
    let (n, m) = u.shape();
    let perp = complement(u)?;
    let mut basis = RealMatrix::zeros(n * m, (n - m) * m);
    let mut col = 0;
    for a in 0..perp.ncols() {
        for j in 0..m {
            let mut v = RealMatrix::zeros(n, m);
            v.column_mut(j).copy_from(&perp.column(a));
            basis.column_mut(col).copy_from(&vec_row_major(&v));
            col += 1;
        }
    }
    Ok(basis)
}

/// Orthonormal basis of the Stiefel tangent space
/// `T_U St(n, m) = {V : U^T V + V^T U = 0}` under the Frobenius inner
/// product. Dimension `n m - m (m + 1) / 2`: the skew directions
/// `U (e_i e_j^T - e_j e_i^T) / sqrt 2` followed by the horizontal ones.
pub fn stiefel_tangent_basis(u: &RealMatrix) -> Result<RealMatrix> {
    let horizontal = horizontal_tangent_basis(u)?;
    let (n, m) = u.shape();
    let skew_dim = m * m.saturating_sub(1) / 2;
    let mut basis = RealMatrix::zeros(n * m, skew_dim + horizontal.ncols());
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut col = 0;
    for i in 0..m {
        for j in (i + 1)..m {
            let mut v = RealMatrix::zeros(n, m);
            v.column_mut(j).copy_from(&(u.column(i) * h));
            v.column_mut(i).copy_from(&(u.column(j) * -h));
            basis.column_mut(col).copy_from(&vec_row_major(&v));
            col += 1;
        }
    }
    basis
        .columns_mut(skew_dim, horizontal.ncols())
        .copy_from(&horizontal);
    Ok(basis)
}

/// Images of the tangent-space summands of the fixed-multilinear-rank
/// manifold at `p.product()`, each orthonormalized:
/// block 0 is `(U_1 ⊗ .. ⊗ U_D) C'` for arbitrary `C'`, block `d + 1` is
/// `(U_1 ⊗ .. V_d .. ⊗ U_D) C` for horizontal `V_d`.
///
/// The blocks are mutually orthogonal because `U_d^T V_d = 0`.
pub fn mlrank_tangent_blocks(p: &TuckerPoint) -> Result<Vec<RealMatrix>> {
    let factors = p.factors();
    let core = p.core();
    let mut blocks = Vec::with_capacity(factors.len() + 1);
    blocks.push(kronecker_chain(factors));
    for d in 0..factors.len() {
        let (n, m) = factors[d].shape();
        let horizontal = horizontal_tangent_basis(&factors[d])?;
        // Core multiplied by all factors except mode d.
        let mut partial = factors.to_vec();
        partial[d] = RealMatrix::identity(m, m);
        let w = multilinear_multiply(&partial, core)?;
        let mut images = RealMatrix::zeros(p.product().len(), horizontal.ncols());
        for (col, v) in horizontal.column_iter().enumerate() {
            let vd = super::unvec_row_major(v.as_slice(), n, m);
            images
                .column_mut(col)
                .copy_from(&mode_product(&w, &vd, d)?.to_vector());
        }
        let expected = images.ncols();
        let q =
            numla::orthonormalize(&images, numla::default_rtol(images.nrows(), images.ncols()))?;
        if q.ncols() < expected {
            return Err(TensorError::NonMinimalCore {
                mode: d,
                rank: q.ncols() / (n - m).max(1),
                expected: m,
            });
        }
        blocks.push(q);
    }
    Ok(blocks)
}

/// Orthonormal basis (columns of vectorized tensors) of the tangent space of
/// the fixed-multilinear-rank manifold at `p.product()`. Dimension
/// `prod m_d + sum_d (n_d - m_d) m_d`.
pub fn mlrank_tangent_basis(p: &TuckerPoint) -> Result<RealMatrix> {
    let blocks = mlrank_tangent_blocks(p)?;
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut basis = RealMatrix::zeros(p.product().len(), cols);
    let mut c = 0;
    for b in &blocks {
        basis.columns_mut(c, b.ncols()).copy_from(b);
        c += b.ncols();
    }
    Ok(basis)
}
