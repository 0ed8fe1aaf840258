use super::{blocks_from, CrepError, CrepPoint, CrepProblem, Result};
use crate::numla::{self, RankDecision};
use crate::oracle::{self, SolverOptions};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifyOptions {
    /// Perturbed points checked besides the base point.
    pub n_samples: usize,
    /// Input perturbation radius; `None` means `1e-3 * scale`.
    pub radius: Option<f64>,
    pub seed: u64,
    /// Relative rank tolerance shared by every rank decision; `None` means
    /// [`numla::default_rtol`] for the size of `DF`.
    pub rtol: Option<f64>,
    pub solver: SolverOptions,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            n_samples: 5,
            radius: None,
            seed: 0,
            rtol: None,
            solver: SolverOptions::default(),
        }
    }
}

/// Rank decisions at a single point, all at the same relative tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct PointRanks {
    pub df: RankDecision,
    pub yz: RankDecision,
    pub z: RankDecision,
    pub dim_x: usize,
    pub dim_yz: usize,
}

impl PointRanks {
    pub fn nullity_df(&self) -> usize {
        self.dim_x + self.dim_yz - self.df.rank
    }

    pub fn nullity_yz(&self) -> usize {
        self.dim_yz - self.yz.rank
    }

    /// `rank DF = rank [J_y J_z]`, equivalently
    /// `nullity DF = dim X + nullity [J_y J_z]`.
    pub fn constant_rank_holds(&self) -> bool {
        self.df.rank == self.yz.rank && self.nullity_df() == self.dim_x + self.nullity_yz()
    }

    pub fn is_fragile(&self) -> bool {
        self.df.is_fragile() || self.yz.is_fragile() || self.z.is_fragile()
    }
}

/// Rank decisions for `DF`, `[J_y J_z]` and `J_z` at `point`.
pub fn check_ranks_at(
    problem: &dyn CrepProblem,
    point: &CrepPoint,
    rtol: f64,
) -> Result<PointRanks> {
    let charts = problem.charts(point)?;
    let blocks = blocks_from(problem, point, &charts)?;
    let jyz = blocks.jyz();
    Ok(PointRanks {
        df: numla::numerical_rank(&blocks.full(), rtol)?,
        yz: numla::numerical_rank(&jyz, rtol)?,
        z: numla::numerical_rank(&blocks.jz, rtol)?,
        dim_x: blocks.dim_x(),
        dim_yz: jyz.ncols(),
    })
}

/// Runtime evidence that a point satisfies the constant-rank hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankCertificate {
    /// `rank [J_y J_z]` at the base point.
    pub r: usize,
    /// `rank J_z` at the base point.
    pub k: usize,
    pub rank_df: usize,
    pub nullity_yz: usize,
    /// Perturbed points whose ranks were checked.
    pub samples_checked: usize,
    /// Perturbed points skipped because the resolver failed.
    pub samples_skipped: usize,
    /// Relative rank tolerance used for every decision.
    pub tolerance: f64,
    pub passed: bool,
    /// Some decision had a singular value within a factor 10 of the cut.
    pub fragile: bool,
    pub failures: Vec<String>,
    pub seed: u64,
    pub radius: f64,
}

/// Checks the rank conditions at `point` and at `opts.n_samples` nearby
/// solutions obtained by resolving randomly perturbed inputs.
pub fn certify_crep(
    problem: &dyn CrepProblem,
    point: &CrepPoint,
    opts: &CertifyOptions,
) -> Result<RankCertificate> {
    let dims = problem.ambient_dims();
    let charts = problem.charts(point)?;
    let total = charts.x.intrinsic_dim() + charts.y.intrinsic_dim() + charts.z.intrinsic_dim();
    let rtol = opts
        .rtol
        .unwrap_or_else(|| numla::default_rtol(dims.equations, total));
    let radius = opts.radius.unwrap_or(1e-3 * point.scale());

    let base = check_ranks_at(problem, point, rtol)?;
    let mut failures = Vec::new();
    let mut fragile = base.is_fragile();
    if !base.constant_rank_holds() {
        failures.push(format!(
            "base point: rank DF = {} but rank [J_y J_z] = {}",
            base.df.rank, base.yz.rank
        ));
    }

    let mut samples_checked = 0;
    let mut samples_skipped = 0;
    let dim_x = charts.x.intrinsic_dim();
    for i in 0..opts.n_samples {
        let mut rng = oracle::sample_rng(opts.seed, i as u64);
        let dir = oracle::random_unit(dim_x, &mut rng);
        let resolved = oracle::perturb_input(problem, point, &dir, radius).and_then(|xp| {
            let res = oracle::constrained_nearest_solution(problem, point, &xp, &opts.solver)?;
            if res.converged {
                Ok(CrepPoint::new(xp, res.y, res.z))
            } else {
                Err(CrepError::Resolve(format!(
                    "no convergence (residual {:.3e})",
                    res.residual_norm
                )))
            }
        });
        let Ok(sample) = resolved else {
            samples_skipped += 1;
            continue;
        };
        let ranks = check_ranks_at(problem, &sample, rtol)?;
        samples_checked += 1;
        fragile |= ranks.is_fragile();
        if !ranks.constant_rank_holds() {
            failures.push(format!(
                "sample {i}: rank DF = {} but rank [J_y J_z] = {}",
                ranks.df.rank, ranks.yz.rank
            ));
        }
        if ranks.yz.rank != base.yz.rank || ranks.z.rank != base.z.rank {
            failures.push(format!(
                "sample {i}: ranks (r, k) = ({}, {}) differ from base ({}, {})",
                ranks.yz.rank, ranks.z.rank, base.yz.rank, base.z.rank
            ));
        }
    }
    if opts.n_samples > 0 && samples_checked == 0 {
        failures.push(format!(
            "all {samples_skipped} perturbed samples failed to resolve"
        ));
    }

    Ok(RankCertificate {
        r: base.yz.rank,
        k: base.z.rank,
        rank_df: base.df.rank,
        nullity_yz: base.nullity_yz(),
        samples_checked,
        samples_skipped,
        tolerance: rtol,
        passed: failures.is_empty(),
        fragile,
        failures,
        seed: opts.seed,
        radius,
    })
}
