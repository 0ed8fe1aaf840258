//! The acceptance checks as library functions. Each check returns a
//! [`CheckResult`] carrying the worst measured value and the tolerance it
//! was held to; [`run_suite`] runs them in a fixed order.

use crate::crep::{
    self, defining_equation_residuals, evaluate_blocks, fcre_solution_derivative,
    kappas_from_blocks, solution_map_derivative_minnorm, solution_map_pipeline, AnalysisOptions,
    CrepPoint, CrepProblem, JacobianBlocks, Kappas, PipelineOptions,
};
use crate::instances;
use crate::numla::RealMatrix;
use crate::oracle::{self, SolverOptions};
use crate::problems::{MatrixFactorizationProblem, PolarProblem};
use crate::tucker::{self, TuckerCrepConfig, TuckerVariable};
use crate::TuckerPoint;
use serde::{Deserialize, Serialize};
use std::str::FromStr;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Quick,
    Full,
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "quick" => Ok(Suite::Quick),
            "full" => Ok(Suite::Full),
            _ => Err(format!("unknown suite {s:?}; expected quick or full")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub suite: Suite,
    pub seed: u64,
    /// Negates the right-hand side of the stacked system inside the
    /// pipeline. The suite must then fail.
    pub inject_fault: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            suite: Suite::Full,
            seed: 42,
            inject_fault: false,
        }
    }
}

impl VerifyOptions {
    fn analysis(&self) -> AnalysisOptions {
        AnalysisOptions {
            pipeline: self.pipeline(),
            ..AnalysisOptions::default()
        }
    }

    fn pipeline(&self) -> PipelineOptions {
        PipelineOptions {
            rtol: None,
            flip_rhs_sign: self.inject_fault,
        }
    }

    fn count(&self, quick: usize, full: usize) -> usize {
        match self.suite {
            Suite::Quick => quick,
            Suite::Full => full,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    /// Worst observed value of the checked quantity.
    pub measured: f64,
    pub tolerance: f64,
    pub instances: usize,
    pub seconds: f64,
    pub detail: String,
}

impl CheckResult {
    pub fn summary_line(&self) -> String {
        format!(
            "[{}] {:>2} {:<28} worst {:.3e} (tol {:.1e}, {} instances, {:.2}s){}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.measured,
            self.tolerance,
            self.instances,
            self.seconds,
            if self.detail.is_empty() {
                String::new()
            } else {
                format!(" {}", self.detail)
            }
        )
    }
}

/// Running maximum of a checked quantity with the first failure remembered.
struct Tally {
    worst: f64,
    instances: usize,
    failure: Option<String>,
    start: Instant,
}

impl Tally {
    fn new() -> Self {
        Tally {
            worst: 0.0,
            instances: 0,
            failure: None,
            start: Instant::now(),
        }
    }

    fn record(&mut self, label: impl FnOnce() -> String, value: f64, tol: f64) {
        self.instances += 1;
        if value.is_nan() || value > self.worst {
            self.worst = if value.is_nan() { f64::INFINITY } else { value };
        }
        if !(value <= tol) && self.failure.is_none() {
            self.failure = Some(format!("{}: {value:.3e}", label()));
        }
    }

    fn error(&mut self, label: impl FnOnce() -> String, err: impl std::fmt::Display) {
        self.instances += 1;
        self.worst = f64::INFINITY;
        if self.failure.is_none() {
            self.failure = Some(format!("{}: {err}", label()));
        }
    }

    fn finish(self, id: u32, name: &str, tolerance: f64) -> CheckResult {
        CheckResult {
            id,
            name: name.to_string(),
            passed: self.failure.is_none() && self.instances > 0,
            measured: self.worst,
            tolerance,
            instances: self.instances,
            seconds: self.start.elapsed().as_secs_f64(),
            detail: self.failure.unwrap_or_default(),
        }
    }
}

/// `||a - b||_F / max(||b||_F, 1)`.
pub fn relative_frobenius(a: &RealMatrix, b: &RealMatrix) -> f64 {
    if a.shape() != b.shape() {
        return f64::INFINITY;
    }
    (a - b).norm() / b.norm().max(1.0)
}

/// Condition numbers gathered by the other checks, for monotonicity.
#[derive(Default)]
pub struct KappaLog {
    entries: Vec<(String, f64, f64, f64)>,
}

impl KappaLog {
    pub fn push(&mut self, label: String, k: &Kappas) {
        self.entries.push((label, k.kappa_y, k.kappa_z, k.kappa_yz));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

const TUCKER_SIGMA_FLOOR: f64 = 0.1;

fn tucker_variables(p: &TuckerPoint) -> Vec<TuckerVariable> {
    std::iter::once(TuckerVariable::Core)
        .chain((0..p.order()).map(TuckerVariable::Factor))
        .collect()
}

/// Closed-form Tucker condition numbers against the general pipeline on
/// random instances. Square factors are held to 1e-8 absolute, everything
/// else to 1e-6 relative.
pub fn check_tucker_closed_form(opts: &VerifyOptions, log: &mut KappaLog) -> CheckResult {
    let mut t = Tally::new();
    let analysis = opts.analysis();
    for i in 0..opts.count(10, 50) {
        let seed = opts.seed.wrapping_add(1000 + i as u64);
        let point = instances::random_tucker(seed, TUCKER_SIGMA_FLOOR, false);
        let mut kappa_all = None;
        for v in tucker_variables(&point) {
            let label = || format!("instance {i} {v}");
            let kappas = match tucker::general_kappas(&point, v, &analysis) {
                Ok(k) => k,
                Err(e) => {
                    t.error(label, e);
                    continue;
                }
            };
            let (closed, tol) = match v {
                TuckerVariable::Core => (tucker::closed_form_kappa_core(), 1e-6),
                TuckerVariable::Factor(d) => {
                    let square = point.shape()[d] == point.ranks()[d];
                    let c = tucker::closed_form_kappa_factor(point.core(), d, point.shape()[d])
                        .unwrap_or(f64::NAN);
                    (c, if square { 1e-8 } else { 1e-6 })
                }
            };
            // Normalized to the 1e-6 scale so one worst value summarizes both.
            t.record(
                label,
                tucker::relative_difference(kappas.kappa_y, closed) * 1e-6 / tol,
                1e-6,
            );
            kappa_all = Some(kappas.kappa_yz);
            log.push(format!("tucker {i} {v}"), &kappas);
        }
        if let (Some(general), Ok(closed)) = (kappa_all, tucker::closed_form_kappa_all(&point)) {
            t.record(
                || format!("instance {i} all"),
                tucker::relative_difference(general, closed),
                1e-6,
            );
        }
    }
    t.finish(1, "tucker closed form", 1e-6)
}

/// All factors square: every factor condition number is 0 and the whole
/// decomposition has condition number 1.
pub fn check_square_branch(opts: &VerifyOptions, log: &mut KappaLog) -> CheckResult {
    let mut t = Tally::new();
    let analysis = opts.analysis();
    for i in 0..opts.count(4, 10) {
        let seed = opts.seed.wrapping_add(2000 + i as u64);
        let point = instances::random_tucker(seed, TUCKER_SIGMA_FLOOR, true);
        for v in tucker_variables(&point) {
            let label = || format!("instance {i} {v}");
            match tucker::general_kappas(&point, v, &analysis) {
                Ok(k) => {
                    let expected = if v == TuckerVariable::Core { 1.0 } else { 0.0 };
                    t.record(label, (k.kappa_y - expected).abs(), 1e-8);
                    t.record(
                        || format!("instance {i} all via {v}"),
                        (k.kappa_yz - 1.0).abs(),
                        1e-8,
                    );
                    log.push(format!("square {i} {v}"), &k);
                }
                Err(e) => t.error(label, e),
            }
        }
    }
    t.finish(2, "square branch", 1e-8)
}

/// Order-2 instances whose core singular values are separated by tiny gaps
/// still have `kappa(U_0) = 1 / sigma_min`.
pub fn check_gap_independence(opts: &VerifyOptions, log: &mut KappaLog) -> CheckResult {
    let mut t = Tally::new();
    let analysis = opts.analysis();
    for (i, gap) in [1e-1, 1e-3, 1e-6].into_iter().enumerate() {
        let point = instances::gap_instance(gap, opts.seed.wrapping_add(3000 + i as u64));
        let label = || format!("gap {gap:e}");
        match tucker::general_kappas(&point, TuckerVariable::Factor(0), &analysis) {
            Ok(k) => {
                t.record(label, (k.kappa_y - 1.0).abs(), 1e-6);
                log.push(format!("gap {gap:e}"), &k);
            }
            Err(e) => t.error(label, e),
        }
    }
    t.finish(3, "gap independence", 1e-6)
}

/// Builtin problems at their reference points, by name.
pub fn builtin_points(seed: u64) -> Vec<(String, Box<dyn CrepProblem>, CrepPoint)> {
    let mut out: Vec<(String, Box<dyn CrepProblem>, CrepPoint)> = Vec::new();
    out.push((
        "polar".into(),
        Box::new(PolarProblem),
        PolarProblem::reference_point(0.0),
    ));
    let (mf, mf_point) = MatrixFactorizationProblem::seeded(4, 3, 2, seed).expect("valid sizes");
    out.push(("matrix_factorization".into(), Box::new(mf), mf_point));
    let point = fd_tucker_point(seed);
    for v in [TuckerVariable::Factor(0), TuckerVariable::Core] {
        let (p, pt) = tucker::build_tucker_crep(&TuckerCrepConfig {
            point: point.clone(),
            output: v,
            rtol: None,
        })
        .expect("valid config");
        out.push((format!("tucker {v}"), Box::new(p), pt));
    }
    out
}

fn equivalence_error(blocks: &JacobianBlocks, pipeline: &PipelineOptions) -> crep::Result<f64> {
    let map = solution_map_pipeline(blocks, pipeline)?;
    let oracle = solution_map_derivative_minnorm(blocks, None)?;
    let (span, orth) = defining_equation_residuals(blocks, &map);
    Ok(relative_frobenius(&map.dh, &oracle).max(span).max(orth))
}

/// The stacked-system pipeline and the minimum-norm oracle agree, and the
/// pipeline satisfies its defining equations, on builtins and random
/// linearized instances.
pub fn check_pipeline_oracle(opts: &VerifyOptions, log: &mut KappaLog) -> CheckResult {
    let mut t = Tally::new();
    let pipeline = opts.pipeline();
    for (name, problem, point) in builtin_points(opts.seed) {
        match evaluate_blocks(problem.as_ref(), &point).and_then(|b| {
            let e = equivalence_error(&b, &pipeline)?;
            log.push(name.clone(), &kappas_from_blocks(&b, &pipeline)?);
            Ok(e)
        }) {
            Ok(e) => t.record(|| name.clone(), e, 1e-10),
            Err(err) => t.error(|| name.clone(), err),
        }
    }
    for i in 0..opts.count(20, 100) {
        let blocks = instances::random_linearized(opts.seed.wrapping_add(4000 + i as u64), 12);
        let label = || format!("random instance {i}");
        match equivalence_error(&blocks, &pipeline) {
            Ok(e) => t.record(label, e, 1e-10),
            Err(err) => t.error(label, err),
        }
        if let Ok(k) = kappas_from_blocks(&blocks, &pipeline) {
            log.push(format!("random {i}"), &k);
        }
    }
    t.finish(4, "pipeline-oracle equivalence", 1e-10)
}

/// `kappa_y <= kappa_yz` and `kappa_z <= kappa_yz` with relative slack
/// 1e-8 on everything logged by the other checks.
pub fn check_monotonicity(log: &KappaLog) -> CheckResult {
    let mut t = Tally::new();
    for (label, ky, kz, kyz) in &log.entries {
        let excess = (ky.max(*kz) - kyz) / (1.0 + kyz);
        t.record(|| label.clone(), excess.max(0.0), 1e-8);
    }
    t.finish(5, "monotonicity", 1e-8)
}

/// Polar system at `x0 = 0`: `(kappa_y, kappa_z, kappa_yz) = (1, 0, 1)`.
pub fn check_polar_values(opts: &VerifyOptions, log: &mut KappaLog) -> CheckResult {
    let mut t = Tally::new();
    match crep::condition_numbers(
        &PolarProblem,
        &PolarProblem::reference_point(0.0),
        &opts.analysis(),
    ) {
        Ok(rep) => match rep.kappas {
            Some(k) => {
                t.record(|| "kappa_y".into(), (k.kappa_y - 1.0).abs(), 1e-10);
                t.record(|| "kappa_z".into(), k.kappa_z.abs(), 1e-10);
                t.record(|| "kappa_yz".into(), (k.kappa_yz - 1.0).abs(), 1e-10);
                log.push("polar".into(), &k);
            }
            None => t.error(|| "polar".into(), "rank certificate failed"),
        },
        Err(e) => t.error(|| "polar".into(), e),
    }
    t.finish(6, "polar exact values", 1e-10)
}

/// Non-square order-2 instance `(4, 3)` with ranks `(2, 2)`.
pub fn fd_tucker_point(seed: u64) -> TuckerPoint {
    let core = instances::random_core(&[2, 2], 0.5, seed.wrapping_add(7));
    instances::tucker_point_from_core(&[4, 3], core, seed.wrapping_add(7)).expect("valid instance")
}

/// Central differences of the resolver against `DH` along a random input
/// direction, at step 1e-4 (plus a coarser sweep in the full suite).
pub fn check_finite_differences(opts: &VerifyOptions) -> CheckResult {
    let mut t = Tally::new();
    let steps: Vec<f64> = match opts.suite {
        Suite::Quick => vec![1e-4],
        Suite::Full => vec![1e-2, 1e-3, 1e-4],
    };
    let solver = SolverOptions::default();
    let mut targets = builtin_points(opts.seed);
    targets.truncate(3);
    for (i, (name, problem, point)) in targets.into_iter().enumerate() {
        let problem = problem.as_ref();
        let result = problem
            .charts(&point)
            .map_err(|e| e.to_string())
            .and_then(|c| {
                let mut rng = oracle::sample_rng(opts.seed.wrapping_add(7000), i as u64);
                let dir = oracle::random_unit(c.x.intrinsic_dim(), &mut rng);
                oracle::finite_difference_check(problem, &point, &dir, &steps, &solver)
                    .map_err(|e| e.to_string())
            });
        match result {
            Ok(errs) => t.record(|| name.clone(), *errs.last().expect("nonempty steps"), 1e-4),
            Err(e) => t.error(|| name.clone(), e),
        }
    }
    t.finish(7, "finite differences", 1e-4)
}

/// Perturb-and-resolve estimate at radius `1e-4 * scale` with 64 samples
/// lies within 5% of `kappa_y` on the polar and a Tucker instance.
pub fn check_empirical_bound(opts: &VerifyOptions) -> CheckResult {
    let mut t = Tally::new();
    let solver = SolverOptions::default();
    let tucker_point = fd_tucker_point(opts.seed);
    let (tp, tpt) = tucker::build_tucker_crep(&TuckerCrepConfig {
        point: tucker_point,
        output: TuckerVariable::Factor(0),
        rtol: None,
    })
    .expect("valid config");
    let targets: Vec<(&str, &dyn CrepProblem, CrepPoint)> = vec![
        ("polar", &PolarProblem, PolarProblem::reference_point(0.0)),
        ("tucker U0", &tp, tpt),
    ];
    for (name, problem, point) in targets {
        let result = evaluate_blocks(problem, &point)
            .and_then(|b| kappas_from_blocks(&b, &opts.pipeline()))
            .and_then(|k| {
                let est = oracle::empirical_condition(
                    problem,
                    &point,
                    1e-4 * point.scale(),
                    64,
                    opts.seed,
                    &solver,
                )?;
                Ok((k.kappa_y, est.max_ratio))
            });
        match result {
            Ok((kappa, ratio)) => t.record(|| name.to_string(), (ratio / kappa - 1.0).abs(), 0.05),
            Err(e) => t.error(|| name.to_string(), e),
        }
    }
    t.finish(8, "empirical first-order bound", 0.05)
}

/// `DH` is unchanged when `J_z` is replaced by `J_z S` for invertible `S`
/// with condition number at most 1e3.
pub fn check_z_chart_invariance(opts: &VerifyOptions) -> CheckResult {
    let mut t = Tally::new();
    let pipeline = opts.pipeline();
    let mut rng = instances::rng(opts.seed.wrapping_add(9000));
    for i in 0..opts.count(20, 100) {
        let blocks = instances::random_linearized(opts.seed.wrapping_add(9000 + i as u64), 12);
        let s = instances::well_conditioned(blocks.dim_z(), 1e3, &mut rng);
        let changed = JacobianBlocks::new(blocks.jx.clone(), blocks.jy.clone(), &blocks.jz * s)
            .expect("same rows");
        let label = || format!("trial {i}");
        match (
            solution_map_pipeline(&blocks, &pipeline),
            solution_map_pipeline(&changed, &pipeline),
        ) {
            (Ok(a), Ok(b)) => t.record(label, relative_frobenius(&b.dh, &a.dh), 1e-9),
            (Err(e), _) | (_, Err(e)) => t.error(label, e),
        }
    }
    t.finish(9, "latent chart invariance", 1e-9)
}

/// Without latent variables the pipeline equals `-J_y^+ J_x`.
pub fn check_fcre_reduction(opts: &VerifyOptions) -> CheckResult {
    let mut t = Tally::new();
    let pipeline = opts.pipeline();
    for i in 0..opts.count(20, 100) {
        let blocks = instances::random_fcre(opts.seed.wrapping_add(10_000 + i as u64), 12);
        let label = || format!("instance {i}");
        match (
            solution_map_pipeline(&blocks, &pipeline),
            fcre_solution_derivative(&blocks.jx, &blocks.jy, None),
        ) {
            (Ok(a), Ok(b)) => t.record(label, relative_frobenius(&a.dh, &b), 1e-12),
            (Err(e), _) | (_, Err(e)) => t.error(label, e),
        }
    }
    t.finish(10, "fcre reduction", 1e-12)
}

/// Runs all checks in order.
pub fn run_suite(opts: &VerifyOptions) -> Vec<CheckResult> {
    let mut log = KappaLog::default();
    let mut out = vec![
        check_tucker_closed_form(opts, &mut log),
        check_square_branch(opts, &mut log),
        check_gap_independence(opts, &mut log),
        check_pipeline_oracle(opts, &mut log),
    ];
    out.push(check_monotonicity(&log));
    out.push(check_polar_values(opts, &mut log));
    out.push(check_finite_differences(opts));
    out.push(check_empirical_bound(opts));
    out.push(check_z_chart_invariance(opts));
    out.push(check_fcre_reduction(opts));
    out
}
