//! Reports of the `analyze` and `tucker` subcommands.

use crate::spec::{self, ProblemSpec};
use crate::CliError;
use crep::crep::{CertifyOptions, PipelineOptions};
use crep::oracle::{empirical_condition, EmpiricalEstimate, SolverOptions};
use crep::tensor::DenseTensor;
use crep::tucker::{self, TuckerVariable};
use crep::{condition_numbers, AnalysisOptions, RankCertificate};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Largest relative difference between closed form and general pipeline
/// accepted by `crep tucker --cross-validate`.
pub const TUCKER_AGREEMENT_TOL: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalRequest {
    pub n_samples: usize,
    pub radius: f64,
}

/// Parses `n:radius`, e.g. `64:1e-4`.
pub fn parse_empirical(s: &str) -> Result<EmpiricalRequest, String> {
    let (n, r) = s
        .split_once(':')
        .ok_or_else(|| format!("expected n:radius, got {s:?}"))?;
    let n_samples: usize = n
        .trim()
        .parse()
        .map_err(|e| format!("sample count {n:?}: {e}"))?;
    let radius: f64 = r.trim().parse().map_err(|e| format!("radius {r:?}: {e}"))?;
    if n_samples == 0 || !(radius > 0.0 && radius.is_finite()) {
        return Err(format!(
            "need n > 0 and a positive finite radius, got {s:?}"
        ));
    }
    Ok(EmpiricalRequest { n_samples, radius })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnalyzeOptions {
    pub rtol: Option<f64>,
    pub seed: u64,
    pub empirical: Option<EmpiricalRequest>,
}

impl AnalyzeOptions {
    fn analysis(&self) -> AnalysisOptions {
        analysis_options(self.rtol, self.seed)
    }
}

fn analysis_options(rtol: Option<f64>, seed: u64) -> AnalysisOptions {
    AnalysisOptions {
        pipeline: PipelineOptions::with_rtol(rtol),
        certify: CertifyOptions {
            seed,
            rtol,
            ..CertifyOptions::default()
        },
        feas_tol: None,
    }
}

/// Condition numbers are absent when the certificate failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub certified: bool,
    pub kappa_y: Option<f64>,
    pub kappa_z: Option<f64>,
    pub kappa_yz: Option<f64>,
    pub residual_norm: f64,
    pub feas_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool_version: String,
    pub seed: u64,
    pub rtol: Option<f64>,
    pub problem: ProblemSpec,
    pub certificate: RankCertificate,
    pub condition: ConditionSummary,
    pub empirical: Option<EmpiricalEstimate>,
    pub timing_seconds: f64,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.condition.certified
    }

    pub fn summary(&self) -> String {
        let mut out = format!("problem: {}\n", self.problem.kind());
        let c = &self.certificate;
        out.push_str(&format!(
            "certificate: {} (rank [J_y J_z] = {}, rank J_z = {}, rank DF = {}, {} of {} samples checked, rtol {:.1e}{})\n",
            if c.passed { "passed" } else { "FAILED" },
            c.r,
            c.k,
            c.rank_df,
            c.samples_checked,
            c.samples_checked + c.samples_skipped,
            c.tolerance,
            if c.fragile { ", fragile" } else { "" }
        ));
        for f in &c.failures {
            out.push_str(&format!("  {f}\n"));
        }
        let fmt = |v: Option<f64>| v.map_or("undefined".to_string(), |v| format!("{v:.12e}"));
        out.push_str(&format!("kappa_y:  {}\n", fmt(self.condition.kappa_y)));
        out.push_str(&format!("kappa_z:  {}\n", fmt(self.condition.kappa_z)));
        out.push_str(&format!("kappa_yz: {}\n", fmt(self.condition.kappa_yz)));
        if let Some(e) = &self.empirical {
            out.push_str(&format!(
                "empirical: max ratio {:.6e} over {} samples at radius {:.1e} ({} failed)\n",
                e.max_ratio, e.n_samples, e.radius, e.failures
            ));
        }
        out
    }
}

/// Builds the problem, certifies it and computes the condition numbers.
pub fn analyze(
    spec: &ProblemSpec,
    base_dir: &Path,
    opts: &AnalyzeOptions,
) -> Result<Report, CliError> {
    let start = Instant::now();
    let (problem, point) = spec.build(base_dir)?;
    let problem = problem.as_ref();
    let rep = condition_numbers(problem, &point, &opts.analysis())?;
    let certified = rep.certified();
    let empirical = match (&opts.empirical, certified) {
        (Some(req), true) => {
            let solver = SolverOptions {
                rtol: opts.rtol,
                ..SolverOptions::default()
            };
            Some(empirical_condition(
                problem,
                &point,
                req.radius,
                req.n_samples,
                opts.seed,
                &solver,
            )?)
        }
        _ => None,
    };
    let k = rep.kappas.as_ref();
    Ok(Report {
        schema_version: REPORT_SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: opts.seed,
        rtol: opts.rtol,
        problem: spec.clone(),
        certificate: rep.certificate.clone(),
        condition: ConditionSummary {
            certified,
            kappa_y: k.map(|k| k.kappa_y),
            kappa_z: k.map(|k| k.kappa_z),
            kappa_yz: k.map(|k| k.kappa_yz),
            residual_norm: rep.residual_norm,
            feas_tol: rep.feas_tol,
        },
        empirical,
        timing_seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TuckerOptions {
    pub rtol: Option<f64>,
    pub all_variables: bool,
    pub cross_validate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuckerTableRow {
    /// `core`, `U0`, .., or `all` for the whole decomposition.
    pub variable: String,
    pub closed_form: f64,
    pub general: Option<f64>,
    pub relative_difference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuckerReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub shape: Vec<usize>,
    pub ranks: Vec<usize>,
    pub rtol: Option<f64>,
    pub rows: Vec<TuckerTableRow>,
    pub max_relative_difference: Option<f64>,
    pub tolerance: f64,
    pub passed: bool,
    pub timing_seconds: f64,
}

impl TuckerReport {
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<8} {:>20} {:>20} {:>12}\n",
            "variable", "closed form", "general", "rel diff"
        );
        for r in &self.rows {
            let opt = |v: Option<f64>, w: usize| match v {
                Some(v) => format!("{v:>w$.12e}"),
                None => format!("{:>w$}", "-"),
            };
            out.push_str(&format!(
                "{:<8} {:>20.12e} {} {}\n",
                r.variable,
                r.closed_form,
                opt(r.general, 20),
                match r.relative_difference {
                    Some(v) => format!("{v:>12.3e}"),
                    None => format!("{:>12}", "-"),
                }
            ));
        }
        out
    }
}

/// Closed-form condition numbers of the HOSVD of `t` at multilinear rank
/// `ranks`, optionally checked against the general pipeline.
pub fn tucker_table(
    t: &DenseTensor,
    ranks: &[usize],
    opts: &TuckerOptions,
) -> Result<TuckerReport, CliError> {
    let start = Instant::now();
    let point = spec::tucker_point(t, ranks, opts.rtol)?;
    let order = point.order();
    let include = |v: &TuckerVariable| opts.all_variables || matches!(v, TuckerVariable::Factor(_));
    let mut rows = Vec::new();
    if opts.cross_validate {
        let cv = tucker::cross_validate(&point, &analysis_options(opts.rtol, 0))?;
        for r in cv.rows.iter().filter(|r| include(&r.variable)) {
            rows.push(TuckerTableRow {
                variable: r.variable.to_string(),
                closed_form: r.closed_form,
                general: Some(r.general),
                relative_difference: Some(r.relative_difference),
            });
        }
        if opts.all_variables {
            rows.push(TuckerTableRow {
                variable: "all".into(),
                closed_form: cv.kappa_all_closed,
                general: Some(cv.kappa_all_general),
                relative_difference: Some(cv.kappa_all_relative_difference),
            });
        }
    } else {
        let mut vars: Vec<TuckerVariable> = (0..order).map(TuckerVariable::Factor).collect();
        if opts.all_variables {
            vars.insert(0, TuckerVariable::Core);
        }
        for v in vars {
            let closed_form = match v {
                TuckerVariable::Core => tucker::closed_form_kappa_core(),
                TuckerVariable::Factor(d) => {
                    tucker::closed_form_kappa_factor(point.core(), d, point.shape()[d])?
                }
            };
            rows.push(TuckerTableRow {
                variable: v.to_string(),
                closed_form,
                general: None,
                relative_difference: None,
            });
        }
        if opts.all_variables {
            rows.push(TuckerTableRow {
                variable: "all".into(),
                closed_form: tucker::closed_form_kappa_all(&point)?,
                general: None,
                relative_difference: None,
            });
        }
    }
    let max_relative_difference = rows
        .iter()
        .filter_map(|r| r.relative_difference)
        .reduce(f64::max);
    let passed = match max_relative_difference {
        Some(d) => d <= TUCKER_AGREEMENT_TOL,
        None => true,
    };
    Ok(TuckerReport {
        schema_version: REPORT_SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        shape: point.shape().to_vec(),
        ranks: ranks.to_vec(),
        rtol: opts.rtol,
        rows,
        max_relative_difference,
        tolerance: TUCKER_AGREEMENT_TOL,
        passed,
        timing_seconds: start.elapsed().as_secs_f64(),
    })
}
