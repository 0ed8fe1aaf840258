//! Tucker decomposition as a constant-rank elimination problem
//! `F(X, C, U_0, .., U_{D-1}) = X - (U_0, .., U_{D-1}) . C`, its closed-form
//! condition numbers and their cross-validation against the general
//! pipeline.
//!
//! The input `X` ranges over tensors of fixed multilinear rank, factors over
//! Stiefel manifolds and the core over all tensors of the core shape. Modes
//! are numbered from 0.

use crate::crep::{
    self, AmbientDims, AmbientJacobian, AnalysisOptions, Charts, CrepError, CrepPoint, CrepProblem,
    Result, Role, TangentChart,
};
use crate::numla::{self, RealMatrix, RealVector};
use crate::tensor::{
    self, flatten, hosvd, kronecker_chain, mlrank_tangent_basis, mode_product,
    multilinear_multiply, stiefel_tangent_basis, unvec_row_major, DenseTensor, TuckerPoint,
};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// One of the decomposition variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TuckerVariable {
    Core,
    Factor(usize),
}

impl fmt::Display for TuckerVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TuckerVariable::Core => f.write_str("core"),
            TuckerVariable::Factor(d) => write!(f, "U{d}"),
        }
    }
}

impl FromStr for TuckerVariable {
    type Err = String;

    /// `"core"` or `"U<d>"`.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("core") || s == "C" {
            return Ok(TuckerVariable::Core);
        }
        s.strip_prefix('U')
            .and_then(|d| d.parse().ok())
            .map(TuckerVariable::Factor)
            .ok_or_else(|| {
                format!("unknown Tucker variable {s:?}; expected \"core\" or \"U<mode>\"")
            })
    }
}

impl Serialize for TuckerVariable {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TuckerVariable {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuckerCrepConfig {
    pub point: TuckerPoint,
    pub output: TuckerVariable,
    /// Relative rank tolerance of the HOSVD input retraction; `None` means
    /// `1e-14`.
    pub rtol: Option<f64>,
}

/// Variables in ambient order: the core, then factors `0..D`.
fn all_variables(order: usize) -> Vec<TuckerVariable> {
    std::iter::once(TuckerVariable::Core)
        .chain((0..order).map(TuckerVariable::Factor))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuckerProblem {
    shape: Vec<usize>,
    ranks: Vec<usize>,
    output: TuckerVariable,
    latent: Vec<TuckerVariable>,
    rtol: Option<f64>,
}

impl TuckerProblem {
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn output(&self) -> TuckerVariable {
        self.output
    }

    fn var_len(&self, v: TuckerVariable) -> usize {
        match v {
            TuckerVariable::Core => self.ranks.iter().product(),
            TuckerVariable::Factor(d) => self.shape[d] * self.ranks[d],
        }
    }

    fn pack(
        &self,
        vars: &[TuckerVariable],
        core: &DenseTensor,
        factors: &[RealMatrix],
    ) -> RealVector {
        let mut out = Vec::new();
        for &v in vars {
            match v {
                TuckerVariable::Core => out.extend_from_slice(core.data()),
                TuckerVariable::Factor(d) => out.extend(numla::to_row_major(&factors[d])),
            }
        }
        RealVector::from_vec(out)
    }

    /// Core and factors encoded in the output and latent coordinates.
    fn unpack(&self, p: &CrepPoint) -> (DenseTensor, Vec<RealMatrix>) {
        let mut core = None;
        let mut factors = vec![RealMatrix::zeros(0, 0); self.shape.len()];
        let mut place = |v: TuckerVariable, data: &[f64]| match v {
            TuckerVariable::Core => {
                core =
                    Some(DenseTensor::new(self.ranks.clone(), data.to_vec()).expect("core length"))
            }
            TuckerVariable::Factor(d) => {
                factors[d] = unvec_row_major(data, self.shape[d], self.ranks[d])
            }
        };
        place(self.output, p.y.as_slice());
        let mut offset = 0;
        for &v in &self.latent {
            let len = self.var_len(v);
            place(v, &p.z.as_slice()[offset..offset + len]);
            offset += len;
        }
        (core.expect("core present"), factors)
    }

    fn tucker_point(&self, p: &CrepPoint) -> Result<TuckerPoint> {
        let (core, factors) = self.unpack(p);
        Ok(TuckerPoint::new(core, factors)?)
    }

    /// `dG/dv` as an `N x len(v)` matrix.
    fn variable_derivative(
        &self,
        v: TuckerVariable,
        core: &DenseTensor,
        factors: &[RealMatrix],
    ) -> Result<RealMatrix> {
        match v {
            TuckerVariable::Core => Ok(kronecker_chain(factors)),
            TuckerVariable::Factor(d) => {
                let (n, m) = (self.shape[d], self.ranks[d]);
                let mut partial = factors.to_vec();
                partial[d] = RealMatrix::identity(m, m);
                let w = multilinear_multiply(&partial, core)?;
                let total: usize = self.shape.iter().product();
                let mut out = RealMatrix::zeros(total, n * m);
                for a in 0..n {
                    for b in 0..m {
                        let mut e = RealMatrix::zeros(n, m);
                        e[(a, b)] = 1.0;
                        out.column_mut(a * m + b)
                            .copy_from(&mode_product(&w, &e, d)?.to_vector());
                    }
                }
                Ok(out)
            }
        }
    }

    fn variable_chart(&self, v: TuckerVariable, factors: &[RealMatrix]) -> Result<RealMatrix> {
        match v {
            TuckerVariable::Core => {
                let len = self.var_len(v);
                Ok(RealMatrix::identity(len, len))
            }
            TuckerVariable::Factor(d) => Ok(stiefel_tangent_basis(&factors[d])?),
        }
    }

    fn retract_variable(&self, v: TuckerVariable, base: &[f64], step: &[f64]) -> Vec<f64> {
        let moved: Vec<f64> = base.iter().zip(step).map(|(a, b)| a + b).collect();
        match v {
            TuckerVariable::Core => moved,
            TuckerVariable::Factor(d) => {
                let m = unvec_row_major(&moved, self.shape[d], self.ranks[d]);
                numla::to_row_major(&polar_factor(&m))
            }
        }
    }
}

/// Orthonormal polar factor `W V^T` of `M = W S V^T`.
fn polar_factor(m: &RealMatrix) -> RealMatrix {
    let (w, _, v) = numla::sorted_svd(m);
    w * v.transpose()
}

impl CrepProblem for TuckerProblem {
    fn name(&self) -> &str {
        "tucker"
    }

    fn ambient_dims(&self) -> AmbientDims {
        let n: usize = self.shape.iter().product();
        AmbientDims {
            x: n,
            y: self.var_len(self.output),
            z: self.latent.iter().map(|&v| self.var_len(v)).sum(),
            equations: n,
        }
    }

    fn residual(&self, p: &CrepPoint) -> RealVector {
        let (core, factors) = self.unpack(p);
        let g = multilinear_multiply(&factors, &core).expect("consistent shapes");
        &p.x - g.to_vector()
    }

    fn jacobian(&self, p: &CrepPoint) -> AmbientJacobian {
        let (core, factors) = self.unpack(p);
        let n = p.x.len();
        let y = -self
            .variable_derivative(self.output, &core, &factors)
            .expect("consistent shapes");
        let z_blocks: Vec<RealMatrix> = self
            .latent
            .iter()
            .map(|&v| {
                -self
                    .variable_derivative(v, &core, &factors)
                    .expect("consistent shapes")
            })
            .collect();
        let z = z_blocks
            .iter()
            .fold(RealMatrix::zeros(n, 0), |acc, b| numla::hstack(&acc, b));
        AmbientJacobian {
            x: RealMatrix::identity(n, n),
            y,
            z,
        }
    }

    fn charts(&self, p: &CrepPoint) -> Result<Charts> {
        let tp = self.tucker_point(p)?;
        let x = TangentChart::orthonormal(Role::Input, mlrank_tangent_basis(&tp)?)?;
        let y = TangentChart::orthonormal(
            Role::Output,
            self.variable_chart(self.output, tp.factors())?,
        )?;
        let z_blocks = self
            .latent
            .iter()
            .map(|&v| self.variable_chart(v, tp.factors()))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&RealMatrix> = z_blocks.iter().collect();
        let z = TangentChart::orthonormal(Role::Latent, numla::block_diagonal(&refs))?;
        Ok(Charts { x, y, z })
    }

    /// Inputs are retracted by HOSVD truncation at the fixed ranks, factors
    /// by the polar decomposition; the core is flat.
    fn retract(&self, role: Role, base: &RealVector, step: &RealVector) -> Result<RealVector> {
        match role {
            Role::Input => {
                let moved = DenseTensor::from_vector(self.shape.clone(), &(base + step))?;
                let rtol = self.rtol.unwrap_or(1e-14);
                Ok(hosvd(&moved, &self.ranks, rtol)?.product().to_vector())
            }
            Role::Output => Ok(RealVector::from_vec(self.retract_variable(
                self.output,
                base.as_slice(),
                step.as_slice(),
            ))),
            Role::Latent => {
                let mut out = Vec::with_capacity(base.len());
                let mut offset = 0;
                for &v in &self.latent {
                    let len = self.var_len(v);
                    out.extend(self.retract_variable(
                        v,
                        &base.as_slice()[offset..offset + len],
                        &step.as_slice()[offset..offset + len],
                    ));
                    offset += len;
                }
                Ok(RealVector::from_vec(out))
            }
        }
    }
}

/// The Tucker problem for `config` and its base point.
pub fn build_tucker_crep(config: &TuckerCrepConfig) -> Result<(TuckerProblem, CrepPoint)> {
    let p = &config.point;
    if let TuckerVariable::Factor(d) = config.output {
        if d >= p.order() {
            return Err(CrepError::Domain(format!(
                "factor U{d} requested for an order-{} tensor",
                p.order()
            )));
        }
    }
    let problem = TuckerProblem {
        shape: p.shape().to_vec(),
        ranks: p.ranks().to_vec(),
        output: config.output,
        latent: all_variables(p.order())
            .into_iter()
            .filter(|&v| v != config.output)
            .collect(),
        rtol: config.rtol,
    };
    let point = CrepPoint::new(
        p.product().to_vector(),
        problem.pack(&[config.output], p.core(), p.factors()),
        problem.pack(&problem.latent, p.core(), p.factors()),
    );
    Ok((problem, point))
}

fn smallest_flattening_sv(core: &DenseTensor, d: usize) -> Result<f64> {
    let f = flatten(core, d)?;
    let s = numla::singular_values(&f);
    let smax = s.first().copied().unwrap_or(0.0);
    let smin = if s.len() < f.nrows() {
        0.0
    } else {
        s[f.nrows() - 1]
    };
    let floor = numla::default_rtol(f.nrows(), f.ncols()) * smax;
    if !(smin > floor) {
        return Err(CrepError::Tensor(tensor::TensorError::NonMinimalCore {
            mode: d,
            rank: s.iter().filter(|&&v| v > floor).count(),
            expected: f.nrows(),
        }));
    }
    Ok(smin)
}

/// Condition number of factor `d`: 0 when it is square, otherwise
/// `1 / sigma_min` of the mode-`d` flattening of the core.
pub fn closed_form_kappa_factor(core: &DenseTensor, d: usize, n_d: usize) -> Result<f64> {
    let m = *core.shape().get(d).ok_or_else(|| {
        CrepError::Domain(format!(
            "mode {d} out of range for an order-{} core",
            core.order()
        ))
    })?;
    let smin = smallest_flattening_sv(core, d)?;
    Ok(if m == n_d { 0.0 } else { 1.0 / smin })
}

/// Condition number of the core, which is always 1.
pub fn closed_form_kappa_core() -> f64 {
    1.0
}

/// Condition number of the whole decomposition: the largest of 1 and the
/// factor condition numbers.
pub fn closed_form_kappa_all(point: &TuckerPoint) -> Result<f64> {
    let mut k = closed_form_kappa_core();
    for d in 0..point.order() {
        k = k.max(closed_form_kappa_factor(point.core(), d, point.shape()[d])?);
    }
    Ok(k)
}

/// `|general - closed| / closed`, or `|general|` when `closed = 0`.
pub fn relative_difference(general: f64, closed: f64) -> f64 {
    let diff = (general - closed).abs();
    if closed == 0.0 {
        diff
    } else {
        diff / closed.abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuckerRow {
    pub variable: TuckerVariable,
    pub closed_form: f64,
    pub general: f64,
    pub relative_difference: f64,
    /// `max(kappa_y, kappa_z) <= kappa_yz` within relative slack 1e-8.
    pub monotone: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuckerCrossValidation {
    pub rows: Vec<TuckerRow>,
    pub kappa_all_closed: f64,
    pub kappa_all_general: f64,
    pub kappa_all_relative_difference: f64,
    pub max_relative_difference: f64,
}

/// Monotonicity with relative slack `1e-8 (1 + kappa_yz)`.
pub fn monotone(k: &crep::Kappas) -> bool {
    let slack = 1e-8 * (1.0 + k.kappa_yz);
    k.kappa_y <= k.kappa_yz + slack && k.kappa_z <= k.kappa_yz + slack
}

/// Condition numbers of one variable via the general pipeline.
pub fn general_kappas(
    point: &TuckerPoint,
    output: TuckerVariable,
    opts: &AnalysisOptions,
) -> Result<crep::Kappas> {
    let config = TuckerCrepConfig {
        point: point.clone(),
        output,
        rtol: None,
    };
    let (problem, base) = build_tucker_crep(&config)?;
    let report = crep::condition_numbers(&problem, &base, opts)?;
    match report.kappas {
        Some(k) => Ok(k),
        None => Err(CrepError::Domain(format!(
            "rank certificate failed for {output}: {}",
            report.certificate.failures.join("; ")
        ))),
    }
}

/// Compares the closed forms with the general pipeline for every variable
/// and for the whole decomposition.
pub fn cross_validate(
    point: &TuckerPoint,
    opts: &AnalysisOptions,
) -> Result<TuckerCrossValidation> {
    let mut rows = Vec::new();
    let mut kappa_all_general = 0.0;
    for v in all_variables(point.order()) {
        let closed_form = match v {
            TuckerVariable::Core => closed_form_kappa_core(),
            TuckerVariable::Factor(d) => {
                closed_form_kappa_factor(point.core(), d, point.shape()[d])?
            }
        };
        let k = general_kappas(point, v, opts)?;
        kappa_all_general = k.kappa_yz;
        rows.push(TuckerRow {
            variable: v,
            closed_form,
            general: k.kappa_y,
            relative_difference: relative_difference(k.kappa_y, closed_form),
            monotone: monotone(&k),
        });
    }
    let kappa_all_closed = closed_form_kappa_all(point)?;
    let kappa_all_relative_difference = relative_difference(kappa_all_general, kappa_all_closed);
    let max_relative_difference = rows
        .iter()
        .map(|r| r.relative_difference)
        .fold(kappa_all_relative_difference, f64::max);
    Ok(TuckerCrossValidation {
        rows,
        kappa_all_closed,
        kappa_all_general,
        kappa_all_relative_difference,
        max_relative_difference,
    })
}
