//! The five subcommands. Each writes its artifacts into the output
//! directory and returns an error carrying the exit status on failure.

use std::collections::BTreeMap;

use langevin_core::certificates::{certify, lambda_from_curvature, Certificate, CertifyOutcome, CheckReport};
use langevin_core::divergence::{
    empirical_chi2, histogram_density, normalize, quadrature_divergence, reference_on_histogram, w2_1d,
    DivergenceReport, Method, Metric,
};
use langevin_core::lsi::{lyapunov_poincare, LsiBound};
use langevin_core::oracle::{chi2_isotropic, kl_gaussian, lmc_variance, renyi_isotropic, w2_squared_gaussian};
use langevin_core::planner::{plan, plan_with_overrides, translate_metric, LmcPlan, PlanMetric, PlannerInputs};
use langevin_core::sampler::{map_chains, run_chain_with, run_interpolation_at, ChainConfig, Init, StandardNoise};
use serde::Serialize;

use crate::config::{ExperimentConfig, MetricChoice, PotentialKind};
use crate::error::{LabError, Result};
use crate::output::{num, Outputs};
use crate::suite::{run_suite, SuiteOptions, SuiteRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Certify,
    Lsi,
    Plan,
    Sample,
    Verify,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Certify => "certify",
            Command::Lsi => "lsi",
            Command::Plan => "plan",
            Command::Sample => "sample",
            Command::Verify => "verify",
        }
    }
}

pub fn run(cmd: Command, cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    match cmd {
        Command::Certify => cmd_certify(cfg, out).map(|_| ()),
        Command::Lsi => cmd_lsi(cfg, out),
        Command::Plan => cmd_plan(cfg, out).map(|_| ()),
        Command::Sample => cmd_sample(cfg, out),
        Command::Verify => cmd_verify(cfg, out),
    }
}

/// Certificate plus its sampled consistency checks.
pub fn cmd_certify(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<CertifyOutcome<f64>> {
    out.time("certify", |out| {
        let outcome = certify(&cfg.potential, &cfg.certify)?;
        out.write_json("certificate.json", &outcome.certificate)?;
        let checks: BTreeMap<&str, &CheckReport> = outcome.checks.iter().map(|(k, v)| (k.as_str(), v)).collect();
        out.write_json("checks.json", &checks)?;
        Ok(outcome)
    })
}

fn initial_variance(cfg: &ExperimentConfig, cert: &Certificate<f64>) -> Result<f64> {
    let l = cert.lipschitz.value;
    let s = cfg.sigma2(l);
    if !(s < 1.0 / (1.0 + l)) {
        return Err(LabError::Invalid(format!("sigma2 must be < 1/(1+L) (sigma2 = {s}, L = {l})")));
    }
    Ok(s)
}

#[derive(Serialize)]
struct LsiDoc<'a> {
    certified_lambda: f64,
    bounds: &'a [LsiBound<f64>],
}

pub fn cmd_lsi(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let outcome = cmd_certify(cfg, out)?;
    out.time("lsi", |out| {
        let cert = &outcome.certificate;
        let mut bounds = Vec::new();
        if let Some(info) = cfg.potential.known().curvature.as_ref() {
            bounds.push(lambda_from_curvature(info)?);
        }
        bounds.push(lyapunov_poincare(
            &cfg.potential,
            cert.m.value,
            cert.b.value,
            cert.minimizer()?,
            cfg.certify.lyapunov_c,
            cfg.certify.osc_samples,
            cfg.seed,
        )?);
        out.write_json(
            "lsi.json",
            &LsiDoc {
                certified_lambda: cert.lambda.value,
                bounds: &bounds,
            },
        )
    })
}

#[derive(Serialize)]
struct PlanDoc<'a> {
    #[serde(flatten)]
    plan: &'a LmcPlan<f64>,
    requested_metric: &'static str,
    requested_epsilon: f64,
}

fn make_plan(cfg: &ExperimentConfig, cert: &Certificate<f64>, sigma2: f64) -> Result<LmcPlan<f64>> {
    let lambda = cert.lambda.value;
    let (metric, epsilon) = match cfg.planner.metric {
        MetricChoice::Chi2 => (PlanMetric::Chi2, cfg.planner.epsilon),
        MetricChoice::Renyi(a) => (PlanMetric::Renyi(a), cfg.planner.epsilon),
        MetricChoice::Translated(t) => (PlanMetric::Chi2, translate_metric(t, cfg.planner.epsilon, lambda)),
    };
    let inputs = PlannerInputs::from_certificate(
        &cfg.potential,
        cert.clone(),
        sigma2,
        epsilon,
        match metric {
            PlanMetric::Renyi(a) => Some(a),
            PlanMetric::Chi2 => None,
        },
        cfg.planner.constants,
    )?;
    Ok(if cfg.sampler.overridden() {
        plan_with_overrides(&inputs, metric, cfg.sampler.eta, cfg.sampler.n_steps)?
    } else {
        plan(&inputs, metric)?
    })
}

pub fn cmd_plan(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<(Certificate<f64>, f64, LmcPlan<f64>)> {
    let outcome = cmd_certify(cfg, out)?;
    let cert = outcome.certificate;
    let sigma2 = initial_variance(cfg, &cert)?;
    let plan = out.time("plan", |out| {
        let plan = make_plan(cfg, &cert, sigma2)?;
        if !plan.feasible {
            let failed: Vec<&str> = plan.conditions.iter().filter(|c| !c.ok).map(|c| c.name).collect();
            eprintln!("warning: plan is infeasible; failing conditions: {}", failed.join(", "));
        }
        out.write_json(
            "plan.json",
            &PlanDoc {
                plan: &plan,
                requested_metric: cfg.planner.metric.name(),
                requested_epsilon: cfg.planner.epsilon,
            },
        )?;
        Ok(plan)
    })?;
    Ok((cert, sigma2, plan))
}

fn coord_header(first: &str, d: usize) -> Vec<String> {
    std::iter::once(first.to_string())
        .chain((1..=d).map(|j| format!("coord_{j}")))
        .collect()
}

fn report_row(r: &DivergenceReport<f64>) -> Vec<String> {
    vec![
        r.metric.as_str().to_string(),
        r.alpha.map(num).unwrap_or_default(),
        num(r.value),
        r.method.as_str().to_string(),
        num(r.error_estimate),
    ]
}

/// Histogram-based reports against `e^{-f}` for 1-d and 2-d targets.
fn empirical_reports(cfg: &ExperimentConfig, finals: &[Vec<f64>]) -> Result<Vec<DivergenceReport<f64>>> {
    let p = &cfg.potential;
    let d = p.dim();
    let ranges: Vec<(f64, f64)> = (0..d)
        .map(|j| {
            let (lo, hi) = finals
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x[j]), hi.max(x[j])));
            let pad = 0.05 * (hi - lo).max(1e-6);
            (lo - pad, hi + pad)
        })
        .collect();
    let bins = if d == 1 { cfg.sampler.bins } else { (cfg.sampler.bins / 2).max(16) };
    let hist = histogram_density(finals, &ranges, bins)?;
    let f_ref = p.value_at(&vec![0.0; d]);
    let target = |x: &[f64]| (f_ref - p.value_at(x)).exp();
    let nu = reference_on_histogram(&hist, target)?;
    let rho = normalize(&hist.density)?;
    let chi = empirical_chi2(&hist, target, 50, cfg.seed)?;
    let mut reports = vec![DivergenceReport::new(Metric::Chi2, None, chi.value, Method::Empirical, chi.bootstrap_se)];
    for metric in [Metric::Kl, Metric::Tv] {
        let r = quadrature_divergence(&rho, &nu, metric, None)?;
        reports.push(DivergenceReport::new(metric, None, r.value, Method::Empirical, r.error_estimate));
    }
    if let MetricChoice::Renyi(a) = cfg.planner.metric {
        let r = quadrature_divergence(&rho, &nu, Metric::Renyi, Some(a))?;
        reports.push(DivergenceReport::new(Metric::Renyi, Some(a), r.value, Method::Empirical, r.error_estimate));
    }
    if d == 1 {
        let r = w2_1d(&rho, &nu, 4096)?;
        reports.push(DivergenceReport::new(Metric::W2, None, r.value, Method::Empirical, r.error_estimate));
    }
    Ok(reports)
}

/// Closed-form laws of LMC on the unit Gaussian target.
fn oracle_reports(cfg: &ExperimentConfig, sigma2: f64, eta: f64, steps: u64) -> Result<Vec<DivergenceReport<f64>>> {
    let d = cfg.potential.dim();
    let s = lmc_variance(sigma2, eta, steps)?;
    let closed = |metric, alpha, value| DivergenceReport::new(metric, alpha, value, Method::ClosedForm, 0.0);
    let mut reports = vec![
        closed(Metric::Chi2, None, chi2_isotropic(s, d, 0.0)?),
        closed(Metric::Kl, None, kl_gaussian(s, d, 0.0)?),
        closed(Metric::W2, None, w2_squared_gaussian(s, 1.0, d, 0.0)?.sqrt()),
    ];
    if let MetricChoice::Renyi(a) = cfg.planner.metric {
        reports.push(closed(Metric::Renyi, Some(a), renyi_isotropic(a, s, d, 0.0)?));
    }
    Ok(reports)
}

pub fn cmd_sample(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let (_, sigma2, plan) = cmd_plan(cfg, out)?;
    let steps = usize::try_from(plan.total_iterations).map_err(|_| LabError::Invalid("iteration count overflows".into()))?;
    let chain = ChainConfig {
        potential: cfg.potential.clone(),
        eta: plan.eta,
        n_steps: steps,
        seed: cfg.seed,
        init: Init::Gaussian { sigma2 },
    };
    let d = cfg.potential.dim();
    let finals = out.time("sample", |out| {
        let substeps = cfg.sampler.substeps;
        let finals = map_chains(cfg.sampler.n_chains, cfg.sampler.workers, |i| {
            let traj = if substeps == 1 {
                run_chain_with(&chain, i, &StandardNoise, false)?
            } else {
                run_interpolation_at(&chain, substeps, i, false)?
            };
            Ok(traj.final_state().to_vec())
        })?;
        out.write_csv(
            "samples.csv",
            &coord_header("chain_id", d),
            finals
                .iter()
                .enumerate()
                .map(|(i, x)| std::iter::once(i.to_string()).chain(x.iter().map(|&v| num(v))).collect()),
        )?;
        let traj = run_chain_with(&chain, 0, &StandardNoise, true)?;
        let stride = steps.div_ceil(10_000).max(1);
        out.write_csv(
            "trajectory.csv",
            &coord_header("step", d),
            traj.states
                .iter()
                .enumerate()
                .filter(|(k, _)| k % stride == 0 || *k == steps)
                .map(|(k, x)| std::iter::once(k.to_string()).chain(x.iter().map(|&v| num(v))).collect()),
        )?;
        Ok(finals)
    })?;
    out.time("divergence", |out| {
        let mut reports = Vec::new();
        if d <= 2 {
            reports.extend(empirical_reports(cfg, &finals)?);
        }
        if cfg.kind == PotentialKind::Gaussian && plan.eta < 1.0 {
            reports.extend(oracle_reports(cfg, sigma2, plan.eta, plan.total_iterations)?);
        }
        let header = ["metric", "alpha", "value", "method", "error_estimate"].map(String::from);
        out.write_csv("divergence.csv", &header, reports.iter().map(report_row))
    })
}

pub fn suite_options(cfg: &ExperimentConfig) -> SuiteOptions {
    SuiteOptions {
        seed: cfg.seed,
        workers: cfg.sampler.workers,
        delta: cfg.sampler.delta,
        jump_form: cfg.sampler.jump_form,
        substeps: if cfg.sampler.substeps > 1 { cfg.sampler.substeps } else { 8 },
        ..SuiteOptions::default()
    }
}

pub fn suite_csv_rows(rows: &[SuiteRow]) -> (Vec<String>, Vec<Vec<String>>) {
    let header = ["check", "target", "passed", "observed", "bound", "samples", "detail"].map(String::from).to_vec();
    let body = rows
        .iter()
        .map(|r| {
            vec![
                r.check.clone(),
                r.target.clone(),
                r.passed.to_string(),
                num(r.observed),
                num(r.bound),
                r.samples.to_string(),
                r.detail.clone(),
            ]
        })
        .collect();
    (header, body)
}

pub fn cmd_verify(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let outcome = cmd_certify(cfg, out)?;
    let cert = outcome.certificate;
    let sigma2 = initial_variance(cfg, &cert)?;
    out.time("verify", |out| {
        let rows: Vec<SuiteRow> = run_suite(&cfg.potential, &cert, sigma2, &suite_options(cfg))
            .into_iter()
            .map(|(name, r)| {
                r.unwrap_or_else(|e| SuiteRow {
                    check: name,
                    target: cfg.potential.label().to_string(),
                    passed: false,
                    observed: f64::NAN,
                    bound: f64::NAN,
                    samples: 0,
                    detail: format!("error: {e}"),
                })
            })
            .collect();
        let (header, body) = suite_csv_rows(&rows);
        out.write_csv("verify.csv", &header, body)?;
        for r in &rows {
            println!("{:<18} {:<6} observed={} bound={}", r.check, if r.passed { "PASS" } else { "FAIL" }, r.observed, r.bound);
        }
        let failed = rows.iter().filter(|r| !r.passed).count();
        if failed > 0 {
            return Err(LabError::SuiteFailed {
                failed,
                total: rows.len(),
            });
        }
        Ok(())
    })
}
