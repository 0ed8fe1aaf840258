//! Builtin problems: the polar system, low-rank matrix factorization, a
//! linear system given by explicit Jacobian blocks, and a point where the
//! constant-rank hypotheses fail.

use crate::crep::{
    AmbientDims, AmbientJacobian, Charts, CrepError, CrepPoint, CrepProblem, Result, Role,
    TangentChart,
};
use crate::numla::{self, RealMatrix, RealVector};
use crate::tensor::{unvec_row_major, vec_row_major};
use nalgebra::{dmatrix, dvector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::FRAC_PI_4;

fn scalar_charts() -> Charts {
    Charts {
        x: TangentChart::identity(1),
        y: TangentChart::identity(1),
        z: TangentChart::identity(1),
    }
}

/// `F(x, y, z) = (y^2 - (x - 1)^-2, y cos z - y sin z)`: the point
/// `(y cos z, y sin z)` on the circle of radius `1 / (1 - x)` and on the
/// diagonal. Output `y` is the radius, latent `z` the angle.
#[derive(Debug, Clone, Copy, Default)]
pub struct PolarProblem;

impl PolarProblem {
    /// The solution `(x0, 1 / (1 - x0), pi / 4)`.
    pub fn reference_point(x0: f64) -> CrepPoint {
        CrepPoint::new(
            dvector![x0],
            dvector![1.0 / (1.0 - x0)],
            dvector![FRAC_PI_4],
        )
    }
}

impl CrepProblem for PolarProblem {
    fn name(&self) -> &str {
        "polar"
    }

    fn ambient_dims(&self) -> AmbientDims {
        AmbientDims {
            x: 1,
            y: 1,
            z: 1,
            equations: 2,
        }
    }

    fn residual(&self, p: &CrepPoint) -> RealVector {
        let (x, y, z) = (p.x[0], p.y[0], p.z[0]);
        dvector![y * y - (x - 1.0).powi(-2), y * z.cos() - y * z.sin()]
    }

    fn jacobian(&self, p: &CrepPoint) -> AmbientJacobian {
        let (x, y, z) = (p.x[0], p.y[0], p.z[0]);
        AmbientJacobian {
            x: dmatrix![2.0 * (x - 1.0).powi(-3); 0.0],
            y: dmatrix![2.0 * y; z.cos() - z.sin()],
            z: dmatrix![0.0; -y * (z.sin() + z.cos())],
        }
    }

    fn charts(&self, _p: &CrepPoint) -> Result<Charts> {
        Ok(scalar_charts())
    }

    fn in_domain(&self, p: &CrepPoint) -> bool {
        p.x[0] < 1.0 && p.y[0] > 0.0 && p.z[0] > 0.0 && p.z[0] < std::f64::consts::FRAC_PI_2
    }
}

/// `F(X, Y, Z) = X - Y Z` with `X` on the manifold of `m x n` matrices of
/// rank `k`, `Y` in `R^{m x k}` and `Z` in `R^{k x n}`. Matrices are
/// vectorized row-major. Output `Y`, latent `Z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatrixFactorizationProblem {
    pub m: usize,
    pub n: usize,
    pub k: usize,
}

impl MatrixFactorizationProblem {
    pub fn new(m: usize, n: usize, k: usize) -> Result<Self> {
        if k == 0 || k > m.min(n) {
            return Err(CrepError::Domain(format!(
                "rank {k} is not in 1..={} for a {m} x {n} matrix",
                m.min(n)
            )));
        }
        Ok(MatrixFactorizationProblem { m, n, k })
    }

    /// Problem with `Y0`, `Z0` standard normal and `X0 = Y0 Z0`.
    pub fn seeded(m: usize, n: usize, k: usize, seed: u64) -> Result<(Self, CrepPoint)> {
        let p = Self::new(m, n, k)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = RealMatrix::from_fn(m, k, |_, _| StandardNormal.sample(&mut rng));
        let z = RealMatrix::from_fn(k, n, |_, _| StandardNormal.sample(&mut rng));
        let x = &y * &z;
        let point = CrepPoint::new(vec_row_major(&x), vec_row_major(&y), vec_row_major(&z));
        Ok((p, point))
    }

    fn unpack(&self, p: &CrepPoint) -> (RealMatrix, RealMatrix, RealMatrix) {
        (
            unvec_row_major(p.x.as_slice(), self.m, self.n),
            unvec_row_major(p.y.as_slice(), self.m, self.k),
            unvec_row_major(p.z.as_slice(), self.k, self.n),
        )
    }

    /// `d(YZ)/dY` and `d(YZ)/dZ` as `mn x mk` and `mn x kn` matrices.
    fn product_derivatives(&self, y: &RealMatrix, z: &RealMatrix) -> (RealMatrix, RealMatrix) {
        let (m, n, k) = (self.m, self.n, self.k);
        let mut dy = RealMatrix::zeros(m * n, m * k);
        for a in 0..m {
            for b in 0..k {
                let mut e = RealMatrix::zeros(m, k);
                e[(a, b)] = 1.0;
                dy.column_mut(a * k + b).copy_from(&vec_row_major(&(e * z)));
            }
        }
        let mut dz = RealMatrix::zeros(m * n, k * n);
        for a in 0..k {
            for b in 0..n {
                let mut e = RealMatrix::zeros(k, n);
                e[(a, b)] = 1.0;
                dz.column_mut(a * n + b).copy_from(&vec_row_major(&(y * e)));
            }
        }
        (dy, dz)
    }
}

impl CrepProblem for MatrixFactorizationProblem {
    fn name(&self) -> &str {
        "matrix_factorization"
    }

    fn ambient_dims(&self) -> AmbientDims {
        AmbientDims {
            x: self.m * self.n,
            y: self.m * self.k,
            z: self.k * self.n,
            equations: self.m * self.n,
        }
    }

    fn residual(&self, p: &CrepPoint) -> RealVector {
        let (x, y, z) = self.unpack(p);
        vec_row_major(&(x - y * z))
    }

    fn jacobian(&self, p: &CrepPoint) -> AmbientJacobian {
        let (_, y, z) = self.unpack(p);
        let (dy, dz) = self.product_derivatives(&y, &z);
        AmbientJacobian {
            x: RealMatrix::identity(self.m * self.n, self.m * self.n),
            y: -dy,
            z: -dz,
        }
    }

    /// The input chart spans the image of `(Y', Z') -> Y' Z + Y Z'`.
    fn charts(&self, p: &CrepPoint) -> Result<Charts> {
        let (_, y, z) = self.unpack(p);
        let (dy, dz) = self.product_derivatives(&y, &z);
        let image = numla::hstack(&dy, &dz);
        let basis =
            numla::orthonormalize(&image, numla::default_rtol(image.nrows(), image.ncols()))?;
        let expected = self.k * (self.m + self.n - self.k);
        if basis.ncols() != expected {
            return Err(CrepError::Domain(format!(
                "factorization is rank deficient: tangent dimension {} instead of {expected}",
                basis.ncols()
            )));
        }
        Ok(Charts {
            x: TangentChart::orthonormal(Role::Input, basis)?,
            y: TangentChart::identity(self.m * self.k),
            z: TangentChart::identity(self.k * self.n),
        })
    }

    /// Inputs are retracted by rank-`k` truncated SVD.
    fn retract(&self, role: Role, base: &RealVector, step: &RealVector) -> Result<RealVector> {
        let moved = base + step;
        if role != Role::Input {
            return Ok(moved);
        }
        let (u, s, v) = numla::sorted_svd(&unvec_row_major(moved.as_slice(), self.m, self.n));
        let mut x = RealMatrix::zeros(self.m, self.n);
        for (i, sigma) in s.iter().enumerate().take(self.k) {
            x += u.column(i) * v.column(i).transpose() * *sigma;
        }
        Ok(vec_row_major(&x))
    }
}

/// `F(x, y, z) = J_x x + J_y y + J_z z` with identity charts.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProblem {
    jx: RealMatrix,
    jy: RealMatrix,
    jz: RealMatrix,
}

impl LinearProblem {
    pub fn new(jx: RealMatrix, jy: RealMatrix, jz: RealMatrix) -> Result<Self> {
        if jx.nrows() != jy.nrows() || jy.nrows() != jz.nrows() {
            return Err(CrepError::DimensionMismatch(format!(
                "J_x, J_y, J_z have {}, {} and {} rows",
                jx.nrows(),
                jy.nrows(),
                jz.nrows()
            )));
        }
        if jx
            .iter()
            .chain(jy.iter())
            .chain(jz.iter())
            .any(|v| !v.is_finite())
        {
            return Err(CrepError::Numla(numla::NumlaError::NonFinite));
        }
        Ok(LinearProblem { jx, jy, jz })
    }

    /// The solution at the origin.
    pub fn origin(&self) -> CrepPoint {
        CrepPoint::new(
            RealVector::zeros(self.jx.ncols()),
            RealVector::zeros(self.jy.ncols()),
            RealVector::zeros(self.jz.ncols()),
        )
    }
}

impl CrepProblem for LinearProblem {
    fn name(&self) -> &str {
        "custom_linearized"
    }

    fn ambient_dims(&self) -> AmbientDims {
        AmbientDims {
            x: self.jx.ncols(),
            y: self.jy.ncols(),
            z: self.jz.ncols(),
            equations: self.jx.nrows(),
        }
    }

    fn residual(&self, p: &CrepPoint) -> RealVector {
        &self.jx * &p.x + &self.jy * &p.y + &self.jz * &p.z
    }

    fn jacobian(&self, _p: &CrepPoint) -> AmbientJacobian {
        AmbientJacobian {
            x: self.jx.clone(),
            y: self.jy.clone(),
            z: self.jz.clone(),
        }
    }

    fn charts(&self, _p: &CrepPoint) -> Result<Charts> {
        Ok(Charts {
            x: TangentChart::identity(self.jx.ncols()),
            y: TangentChart::identity(self.jy.ncols()),
            z: TangentChart::identity(self.jz.ncols()),
        })
    }
}

/// `F(x, y, z) = x - y z` at the origin, where `rank dF/dz` drops.
#[derive(Debug, Clone, Copy, Default)]
pub struct NonCrepExample;

impl NonCrepExample {
    pub fn origin() -> CrepPoint {
        CrepPoint::new(dvector![0.0], dvector![0.0], dvector![0.0])
    }
}

impl CrepProblem for NonCrepExample {
    fn name(&self) -> &str {
        "non_crep"
    }

    fn ambient_dims(&self) -> AmbientDims {
        AmbientDims {
            x: 1,
            y: 1,
            z: 1,
            equations: 1,
        }
    }

    fn residual(&self, p: &CrepPoint) -> RealVector {
        dvector![p.x[0] - p.y[0] * p.z[0]]
    }

    fn jacobian(&self, p: &CrepPoint) -> AmbientJacobian {
        AmbientJacobian {
            x: dmatrix![1.0],
            y: dmatrix![-p.z[0]],
            z: dmatrix![-p.y[0]],
        }
    }

    fn charts(&self, _p: &CrepPoint) -> Result<Charts> {
        Ok(scalar_charts())
    }
}

/// The same equations with output and latent variables exchanged.
pub struct Swapped<'a, P: CrepProblem + ?Sized> {
    inner: &'a P,
    name: String,
}

impl<'a, P: CrepProblem + ?Sized> Swapped<'a, P> {
    pub fn new(inner: &'a P) -> Self {
        Swapped {
            name: format!("{} (swapped)", inner.name()),
            inner,
        }
    }

    pub fn swap_point(p: &CrepPoint) -> CrepPoint {
        CrepPoint::new(p.x.clone(), p.z.clone(), p.y.clone())
    }
}

fn swap_role(role: Role) -> Role {
    match role {
        Role::Input => Role::Input,
        Role::Output => Role::Latent,
        Role::Latent => Role::Output,
    }
}

impl<P: CrepProblem + ?Sized> CrepProblem for Swapped<'_, P> {
    fn name(&self) -> &str {
        &self.name
    }

    fn ambient_dims(&self) -> AmbientDims {
        let d = self.inner.ambient_dims();
        AmbientDims {
            y: d.z,
            z: d.y,
            ..d
        }
    }

    fn residual(&self, p: &CrepPoint) -> RealVector {
        self.inner.residual(&Self::swap_point(p))
    }

    fn jacobian(&self, p: &CrepPoint) -> AmbientJacobian {
        let j = self.inner.jacobian(&Self::swap_point(p));
        AmbientJacobian {
            x: j.x,
            y: j.z,
            z: j.y,
        }
    }

    fn charts(&self, p: &CrepPoint) -> Result<Charts> {
        let c = self.inner.charts(&Self::swap_point(p))?;
        Ok(Charts {
            x: c.x,
            y: c.z,
            z: c.y,
        })
    }

    fn retract(&self, role: Role, base: &RealVector, step: &RealVector) -> Result<RealVector> {
        self.inner.retract(swap_role(role), base, step)
    }

    fn in_domain(&self, p: &CrepPoint) -> bool {
        self.inner.in_domain(&Self::swap_point(p))
    }
}
