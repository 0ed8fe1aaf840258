use super::{flatten, multilinear_multiply, DenseTensor, Result, TensorError};
use crate::numla::{self, RealMatrix};

/// Orthonormal-factor tolerance accepted at construction.
const FACTOR_ORTHONORMALITY_TOL: f64 = 1e-10;

/// A tensor together with a Tucker decomposition `X = (U_1, .., U_D) . C`
/// whose core has minimal size, i.e. every core flattening has full row rank.
#[derive(Debug, Clone, PartialEq)]
pub struct TuckerPoint {
    core: DenseTensor,
    factors: Vec<RealMatrix>,
    product: DenseTensor,
}

impl TuckerPoint {
    /// Validates factors and minimality of the core and computes the product.
    pub fn new(core: DenseTensor, factors: Vec<RealMatrix>) -> Result<Self> {
        if factors.len() != core.order() {
            return Err(TensorError::ShapeMismatch(format!(
                "{} factors for an order-{} core",
                factors.len(),
                core.order()
            )));
        }
        for (mode, u) in factors.iter().enumerate() {
            if u.ncols() != core.shape()[mode] {
                return Err(TensorError::ShapeMismatch(format!(
                    "factor {mode} has {} columns, core mode has size {}",
                    u.ncols(),
                    core.shape()[mode]
                )));
            }
            let defect = numla::orthonormality_defect(u);
            if !(defect <= FACTOR_ORTHONORMALITY_TOL) {
                return Err(TensorError::NotOrthonormal { mode, defect });
            }
        }
        for mode in 0..core.order() {
            let f = flatten(&core, mode)?;
            let rank = numla::numerical_rank(&f, numla::default_rtol(f.nrows(), f.ncols()))?.rank;
            if rank < f.nrows() {
                return Err(TensorError::NonMinimalCore {
                    mode,
                    rank,
                    expected: f.nrows(),
                });
            }
        }
        let product = multilinear_multiply(&factors, &core)?;
        Ok(TuckerPoint {
            core,
            factors,
            product,
        })
    }

    pub fn core(&self) -> &DenseTensor {
        &self.core
    }

    pub fn factors(&self) -> &[RealMatrix] {
        &self.factors
    }

    pub fn product(&self) -> &DenseTensor {
        &self.product
    }

    pub fn order(&self) -> usize {
        self.core.order()
    }

    /// `(n_1, .., n_D)`.
    pub fn shape(&self) -> &[usize] {
        self.product.shape()
    }

    /// `(m_1, .., m_D)`.
    pub fn ranks(&self) -> &[usize] {
        self.core.shape()
    }

    /// Re-gauges the decomposition: factors `U_d Q_d`, core `(Q_1^T, .., Q_D^T) . C`.
    /// The product is unchanged for orthogonal `Q_d`.
    pub fn regauged(&self, rotations: &[RealMatrix]) -> Result<Self> {
        let qt: Vec<RealMatrix> = rotations.iter().map(|q| q.transpose()).collect();
        let core = multilinear_multiply(&qt, &self.core)?;
        let factors = self
            .factors
            .iter()
            .zip(rotations)
            .map(|(u, q)| u * q)
            .collect();
        TuckerPoint::new(core, factors)
    }

    /// Scales the core (and hence the product) by `alpha`.
    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        TuckerPoint::new(self.core.scaled(alpha), self.factors.clone())
    }
}

/// Truncated higher-order SVD: factor `d` holds the leading `ranks[d]` left
/// singular vectors of the mode-`d` flattening and the core is
/// `(U_1^T, .., U_D^T) . T`. Reconstruction is exact when `ranks` equals the
/// multilinear rank of `t`.
pub fn hosvd(t: &DenseTensor, ranks: &[usize], rtol: f64) -> Result<TuckerPoint> {
    if ranks.len() != t.order() {
        return Err(TensorError::ShapeMismatch(format!(
            "{} ranks for an order-{} tensor",
            ranks.len(),
            t.order()
        )));
    }
    let mut factors = Vec::with_capacity(ranks.len());
    for (mode, &requested) in ranks.iter().enumerate() {
        let f = flatten(t, mode)?;
        let (u, s, _) = numla::sorted_svd(&f);
        let numerical = numla::RankDecision::from_singular_values(s, rtol).rank;
        if requested == 0 || requested > numerical {
            return Err(TensorError::RankExceeds {
                mode,
                requested,
                numerical,
            });
        }
        factors.push(u.columns(0, requested).into_owned());
    }
    let transposed: Vec<RealMatrix> = factors.iter().map(|u| u.transpose()).collect();
    let core = multilinear_multiply(&transposed, t)?;
    TuckerPoint::new(core, factors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::multilinear_rank;
    use nalgebra::dmatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn randn(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> RealMatrix {
        RealMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
    }

    fn rand_orthonormal(n: usize, m: usize, rng: &mut ChaCha8Rng) -> RealMatrix {
        randn(n, m, rng).qr().q()
    }

    fn rand_core(shape: &[usize], rng: &mut ChaCha8Rng) -> DenseTensor {
        let n = shape.iter().product();
        let data = (0..n).map(|_| StandardNormal.sample(&mut *rng)).collect();
        DenseTensor::new(shape.to_vec(), data).unwrap()
    }

    #[test]
    fn rejects_non_orthonormal_and_non_minimal() {
        let core = DenseTensor::from_matrix(&dmatrix![1.0, 0.0; 0.0, 1.0]).unwrap();
        let bad = dmatrix![1.0, 0.0; 0.0, 2.0; 0.0, 0.0];
        let ok = RealMatrix::identity(3, 2);
        assert!(matches!(
            TuckerPoint::new(core.clone(), vec![bad, ok.clone()]),
            Err(TensorError::NotOrthonormal { mode: 0, .. })
        ));
        let singular = DenseTensor::from_matrix(&dmatrix![1.0, 0.0; 0.0, 0.0]).unwrap();
        assert!(matches!(
            TuckerPoint::new(singular, vec![ok.clone(), ok]),
            Err(TensorError::NonMinimalCore { .. })
        ));
    }

    #[test]
    fn hosvd_exact_for_exact_multilinear_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let core = rand_core(&[3, 2, 2], &mut rng);
        let factors = vec![
            rand_orthonormal(5, 3, &mut rng),
            rand_orthonormal(4, 2, &mut rng),
            rand_orthonormal(3, 2, &mut rng),
        ];
        let gen = TuckerPoint::new(core, factors).unwrap();
        let x = gen.product().clone();
        assert_eq!(multilinear_rank(&x, 1e-10).unwrap(), vec![3, 2, 2]);
        let p = hosvd(&x, &[3, 2, 2], 1e-10).unwrap();
        let err = p.product().sub(&x).unwrap().frobenius_norm();
        assert!(err <= 1e-10 * x.frobenius_norm());
        // Core flattening singular values are invariant under the orthogonal gauge.
        for d in 0..3 {
            let s_gen = numla::singular_values(&flatten(gen.core(), d).unwrap());
            let s_rec = numla::singular_values(&flatten(p.core(), d).unwrap());
            for (a, b) in s_gen.iter().zip(&s_rec) {
                assert!((a - b).abs() <= 1e-10 * s_gen[0]);
            }
        }
        // Second pass reproduces the product.
        let again = hosvd(p.product(), &[3, 2, 2], 1e-10).unwrap();
        let err2 = again.product().sub(p.product()).unwrap().frobenius_norm();
        assert!(err2 <= 1e-12 * x.frobenius_norm());
    }

    #[test]
    fn hosvd_matrix_case() {
        let a = dmatrix![3.0, 0.0, 0.0; 0.0, 1.0, 0.0; 0.0, 0.0, 0.0];
        let p = hosvd(&DenseTensor::from_matrix(&a).unwrap(), &[2, 2], 1e-12).unwrap();
        let s = numla::singular_values(&flatten(p.core(), 0).unwrap());
        assert!((s[0] - 3.0).abs() < 1e-14 && (s[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn hosvd_rejects_excess_rank() {
        let a = dmatrix![3.0, 0.0; 0.0, 0.0];
        let err = hosvd(&DenseTensor::from_matrix(&a).unwrap(), &[2, 2], 1e-12).unwrap_err();
        assert!(matches!(
            err,
            TensorError::RankExceeds {
                mode: 0,
                requested: 2,
                numerical: 1
            }
        ));
    }

    #[test]
    fn gauge_orbit_preserves_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let p = TuckerPoint::new(
            rand_core(&[2, 3, 2], &mut rng),
            vec![
                rand_orthonormal(4, 2, &mut rng),
                rand_orthonormal(3, 3, &mut rng),
                rand_orthonormal(5, 2, &mut rng),
            ],
        )
        .unwrap();
        let qs: Vec<_> = p
            .ranks()
            .iter()
            .map(|&m| rand_orthonormal(m, m, &mut rng))
            .collect();
        let q = p.regauged(&qs).unwrap();
        let diff = q.product().sub(p.product()).unwrap().frobenius_norm();
        assert!(diff <= 1e-12 * p.product().frobenius_norm());
    }
}
