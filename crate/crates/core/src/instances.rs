//! Seeded random instances for tests, benchmarks and verification suites.

use crate::crep::JacobianBlocks;
use crate::numla::{self, RealMatrix};
use crate::tensor::{flatten, DenseTensor, Result, TuckerPoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> RealMatrix {
    RealMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut *rng))
}

/// `n x m` matrix with orthonormal columns, Haar-distributed up to signs.
pub fn orthonormal_with(n: usize, m: usize, rng: &mut ChaCha8Rng) -> RealMatrix {
    let q = gaussian(n, n, rng).qr().q();
    q.columns(0, m).into_owned()
}

pub fn random_orthogonal(m: usize, seed: u64) -> RealMatrix {
    orthonormal_with(m, m, &mut rng(seed))
}

/// Smallest singular value over all flattenings of `core`.
pub fn min_flattening_sv(core: &DenseTensor) -> f64 {
    (0..core.order())
        .map(|d| {
            let f = flatten(core, d).expect("mode in range");
            let s = numla::singular_values(&f);
            if s.len() < f.nrows() {
                0.0
            } else {
                s[f.nrows() - 1]
            }
        })
        .fold(f64::INFINITY, f64::min)
}

/// Gaussian core of shape `ranks` whose flattenings all have smallest
/// singular value at least `sigma_floor`, by rejection.
///
/// Panics if some `ranks[d]` exceeds the product of the others, where no
/// minimal core exists.
pub fn random_core(ranks: &[usize], sigma_floor: f64, seed: u64) -> DenseTensor {
    let total: usize = ranks.iter().product();
    for &m in ranks {
        assert!(
            m * m <= total,
            "rank {m} exceeds the product of the other ranks"
        );
    }
    let mut rng = rng(seed);
    loop {
        let data = (0..total)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let core = DenseTensor::new(ranks.to_vec(), data).expect("positive ranks");
        if min_flattening_sv(&core) >= sigma_floor {
            return core;
        }
    }
}

/// Decomposition with random orthonormal factors of the given shape.
pub fn tucker_point_from_core(
    shape: &[usize],
    core: DenseTensor,
    seed: u64,
) -> Result<TuckerPoint> {
    let mut rng = rng(seed ^ 0x9e37_79b9_7f4a_7c15);
    let factors = shape
        .iter()
        .zip(core.shape())
        .map(|(&n, &m)| orthonormal_with(n, m, &mut rng))
        .collect();
    TuckerPoint::new(core, factors)
}

/// Order-2 decomposition `U_0 C U_1^T` with the given core matrix.
pub fn tucker_matrix_point(shape: &[usize], core: &RealMatrix, seed: u64) -> Result<TuckerPoint> {
    tucker_point_from_core(shape, DenseTensor::from_matrix(core)?, seed)
}

/// Random order 2 or 3 decomposition with `n_d <= 6`, `m_d <= 3` and core
/// flattenings bounded below by `sigma_floor`. With `square` every factor is
/// square.
pub fn random_tucker(seed: u64, sigma_floor: f64, square: bool) -> TuckerPoint {
    let mut r = rng(seed);
    let order = r.random_range(2..=3);
    let ranks: Vec<usize> = loop {
        let ranks: Vec<usize> = (0..order).map(|_| r.random_range(1..=3)).collect();
        let total: usize = ranks.iter().product();
        if ranks.iter().all(|&m| m * m <= total) {
            break ranks;
        }
    };
    let shape: Vec<usize> = ranks
        .iter()
        .map(|&m| if square { m } else { r.random_range(m..=6) })
        .collect();
    let core = random_core(&ranks, sigma_floor, r.random());
    tucker_point_from_core(&shape, core, r.random()).expect("valid random decomposition")
}

/// Order-2 instance of shape `(5, 4)` whose core has singular values
/// `1 + gap` and `1`.
pub fn gap_instance(gap: f64, seed: u64) -> TuckerPoint {
    let core = RealMatrix::from_diagonal(&nalgebra::dvector![1.0 + gap, 1.0]);
    tucker_matrix_point(&[5, 4], &core, seed).expect("valid gap instance")
}

/// Random `rows x cols` matrix of rank `rank` as a product of Gaussians.
pub fn low_rank(rows: usize, cols: usize, rank: usize, rng: &mut ChaCha8Rng) -> RealMatrix {
    gaussian(rows, rank, rng) * gaussian(rank, cols, rng)
}

/// Random consistent blocks with all dimensions at most `max_dim`: `J_y` and
/// `J_z` have random (possibly deficient) ranks and the columns of `J_x` lie
/// in the span of `[J_y J_z]`.
pub fn random_linearized(seed: u64, max_dim: usize) -> JacobianBlocks {
    let mut r = rng(seed);
    let n = r.random_range(1..=max_dim);
    let dx = r.random_range(1..=max_dim);
    let dy = r.random_range(1..=max_dim);
    let dz = r.random_range(0..=max_dim);
    let ry = r.random_range(1..=n.min(dy));
    let rz = if dz == 0 {
        0
    } else {
        r.random_range(0..=n.min(dz))
    };
    let jy = low_rank(n, dy, ry, &mut r);
    let jz = low_rank(n, dz, rz, &mut r);
    let coeffs = gaussian(dy + dz, dx, &mut r);
    let jx = numla::hstack(&jy, &jz) * coeffs;
    JacobianBlocks::new(jx, jy, jz).expect("consistent rows")
}

/// Random blocks without latent variables satisfying
/// `rank [J_x J_y] = rank J_y`.
pub fn random_fcre(seed: u64, max_dim: usize) -> JacobianBlocks {
    let mut r = rng(seed);
    let n = r.random_range(1..=max_dim);
    let dx = r.random_range(1..=max_dim);
    let dy = r.random_range(1..=max_dim);
    let ry = r.random_range(1..=n.min(dy));
    let jy = low_rank(n, dy, ry, &mut r);
    let jx = &jy * gaussian(dy, dx, &mut r);
    JacobianBlocks::new(jx, jy, RealMatrix::zeros(n, 0)).expect("consistent rows")
}

/// Invertible `n x n` matrix with condition number at most `max_cond`:
/// orthogonal factors around log-uniform singular values in `[1, max_cond]`.
pub fn well_conditioned(n: usize, max_cond: f64, rng: &mut ChaCha8Rng) -> RealMatrix {
    let left = orthonormal_with(n, n, rng);
    let right = orthonormal_with(n, n, rng);
    let log_max = max_cond.ln();
    let sigma = nalgebra::DVector::from_fn(n, |_, _| (rng.random::<f64>() * log_max).exp());
    left * RealMatrix::from_diagonal(&sigma) * right.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_tucker_respects_bounds() {
        for seed in 0..20 {
            let p = random_tucker(seed, 0.1, false);
            assert!(p.order() == 2 || p.order() == 3);
            for (&n, &m) in p.shape().iter().zip(p.ranks()) {
                assert!(n <= 6 && m <= 3 && m <= n);
            }
            assert!(min_flattening_sv(p.core()) >= 0.1);
        }
    }

    #[test]
    fn linearized_blocks_are_consistent() {
        for seed in 0..20 {
            let b = random_linearized(seed, 12);
            let jyz = b.jyz();
            let tol = numla::default_rtol(jyz.nrows(), jyz.ncols());
            assert!(numla::min_norm_solve(&jyz, &b.jx, tol * 1e3).is_ok());
        }
    }

    #[test]
    fn well_conditioned_bound() {
        let mut r = rng(1);
        for n in 1..6 {
            let s = numla::singular_values(&well_conditioned(n, 1e3, &mut r));
            assert!(s[0] / s[n - 1] <= 1e3 * (1.0 + 1e-12));
        }
    }
}
