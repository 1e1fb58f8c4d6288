//! Verification rows: sampled checks of the coupling, jump, tail and
//! recursion lemmas plus oracle checks of contraction, the metric chain and
//! the single-step envelope. Every row runs; none stops the others.

use langevin_core::certificates::Certificate;
use langevin_core::divergence::{check_metric_chain, normalize, DensityGrid};
use langevin_core::oracle::{chi2_isotropic, kl_gaussian, lmc_variance, ou_law, renyi_isotropic, GaussianLaw};
use langevin_core::planner::iterate_affine_recursion;
use langevin_core::rng::{mix64, Stream};
use langevin_core::sampler::{
    couple_diffusions, empirical_tail_checks, map_chains, monitor_jumps, run_interpolation_at,
    semi_contraction_bound, ChainConfig, Init, JumpCheckConfig, JumpForm, TailCheckOptions, TailKind,
};
use langevin_core::PotentialSpec64;
use serde::Serialize;

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteRow {
    pub check: String,
    pub target: String,
    pub passed: bool,
    /// Worst observed value of the checked quantity.
    pub observed: f64,
    /// What `observed` is compared against.
    pub bound: f64,
    pub samples: usize,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct SuiteOptions {
    pub coupled_paths: usize,
    pub eta_fine: f64,
    pub t_end: f64,
    pub start_radius: f64,
    pub jump_paths: usize,
    pub jump_eta: f64,
    pub jump_steps: usize,
    pub substeps: usize,
    pub delta: f64,
    pub jump_form: JumpForm<f64>,
    pub tail_draws: usize,
    pub rec_tuples: usize,
    pub trend_eta: f64,
    pub trend_n: u64,
    pub trend_sigma0: f64,
    pub seed: u64,
    pub workers: Option<usize>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            coupled_paths: 1_000,
            eta_fine: 1e-3,
            t_end: 2.0,
            start_radius: 3.0,
            jump_paths: 10_000,
            jump_eta: 0.01,
            jump_steps: 99,
            substeps: 8,
            delta: 0.01,
            jump_form: JumpForm::Explicit,
            tail_draws: 100_000,
            rec_tuples: 1_000,
            trend_eta: 0.01,
            trend_n: 1_000,
            trend_sigma0: 0.9,
            seed: 0,
            workers: None,
        }
    }
}

fn row(check: &str, target: &str, passed: bool, observed: f64, bound: f64, samples: usize, detail: String) -> SuiteRow {
    SuiteRow {
        check: check.into(),
        target: target.into(),
        passed,
        observed,
        bound,
        samples,
        detail,
    }
}

/// Largest excess of the synchronously coupled distance over the
/// contraction envelope, over paths started from uniform pairs in a box.
pub fn semi_contraction_row(p: &PotentialSpec64, m: f64, b: f64, opts: &SuiteOptions) -> Result<SuiteRow> {
    let d = p.dim();
    let starts = Stream::new(opts.seed, 0x5e31);
    let excess = map_chains(opts.coupled_paths, opts.workers, |i| {
        let point = |slot: u64| -> Vec<f64> {
            (0..d as u64)
                .map(|j| opts.start_radius * (2.0 * starts.uniform(i, slot * d as u64 + j) - 1.0))
                .collect()
        };
        let (x0, y0) = (point(0), point(1));
        let path = couple_diffusions(p, &x0, &y0, opts.eta_fine, opts.t_end, mix64(opts.seed ^ i))?;
        let r0 = path[0].1;
        Ok(path
            .iter()
            .map(|&(t, dist)| dist - semi_contraction_bound(m, b, r0, t))
            .fold(f64::NEG_INFINITY, f64::max))
    })?;
    let worst = excess.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let slack = 5.0 * opts.eta_fine;
    Ok(row(
        "semi_contraction",
        p.label(),
        worst <= slack,
        worst,
        slack,
        opts.coupled_paths,
        format!("m={m} b={b} eta_fine={} t_end={}", opts.eta_fine, opts.t_end),
    ))
}

/// Fraction of interpolation paths whose intra-interval displacement exceeds
/// the jump radius, against `delta`.
pub fn jump_row(p: &PotentialSpec64, cert: &Certificate<f64>, sigma2: f64, opts: &SuiteOptions) -> Result<SuiteRow> {
    let cfg = ChainConfig {
        potential: p.clone(),
        eta: opts.jump_eta,
        n_steps: opts.jump_steps,
        seed: opts.seed,
        init: Init::Gaussian { sigma2 },
    };
    let jc = JumpCheckConfig {
        delta: opts.delta,
        kappa: cert.kappa(),
        b: cert.b.value,
        d: p.dim(),
        n_steps: opts.jump_steps,
        eta: opts.jump_eta,
        form: opts.jump_form,
    };
    let reports = map_chains(opts.jump_paths, opts.workers, |i| {
        let traj = run_interpolation_at(&cfg, opts.substeps, i, false)?;
        monitor_jumps(&traj, &jc)
    })?;
    let violated = reports.iter().filter(|r| r.violated).count();
    let frac = violated as f64 / reports.len() as f64;
    let widest = reports.iter().map(|r| r.max_observed).fold(0.0, f64::max);
    Ok(row(
        "jump_bound",
        p.label(),
        frac <= opts.delta,
        frac,
        opts.delta,
        opts.jump_paths,
        format!("threshold={:.6} widest={widest:.6} J={}", jc.threshold()?, opts.substeps),
    ))
}

/// One row per tail family; `observed` is the largest `empirical - bound - 3 SE`.
pub fn tail_rows(d: usize, opts: &SuiteOptions) -> Result<Vec<SuiteRow>> {
    let rows = empirical_tail_checks(&TailCheckOptions::new(opts.tail_draws, d, opts.seed))?;
    let mut out = Vec::new();
    for (kind, name) in [(TailKind::Normal, "normal_tail"), (TailKind::SupBrownian, "sup_brownian")] {
        let sel: Vec<_> = rows.iter().filter(|r| r.kind == kind).collect();
        let worst = sel
            .iter()
            .map(|r| r.empirical - r.bound - 3.0 * r.standard_error)
            .fold(f64::NEG_INFINITY, f64::max);
        let detail = sel
            .iter()
            .map(|r| format!("x={}: {:.5}<={:.5}", r.x, r.empirical, r.bound))
            .collect::<Vec<_>>()
            .join("; ");
        let samples = if kind == TailKind::Normal {
            opts.tail_draws
        } else {
            opts.tail_draws / 5
        };
        out.push(row(name, &format!("d={d}"), sel.iter().all(|r| r.passed), worst, 0.0, samples, detail));
    }
    Ok(out)
}

/// Exact affine recursion against its closed-form bound on random tuples.
pub fn rec_bound_row(opts: &SuiteOptions) -> Result<SuiteRow> {
    let s = Stream::new(opts.seed, 0x4ec);
    let mut worst = f64::NEG_INFINITY;
    for i in 0..opts.rec_tuples as u64 {
        let theta0 = 100.0 * s.uniform(i, 0);
        let a = 1e-3 + 0.998 * s.uniform(i, 1);
        let h = 10.0 * s.uniform(i, 2);
        let k = s.below(i, 3, 1_000);
        let mut theta = theta0;
        for _ in 0..k {
            theta = (1.0 - a) * theta + h;
        }
        let bound = iterate_affine_recursion(theta0, a, h, k)?;
        worst = worst.max((theta - bound) / bound.max(1.0));
    }
    Ok(row(
        "rec_bound",
        "affine",
        worst <= 1e-12,
        worst,
        1e-12,
        opts.rec_tuples,
        "relative excess of the exact recursion over the bound".into(),
    ))
}

/// Initial laws `(|mu|^2 per coordinate, variance)` for the contraction check,
/// all inside the finite range of `R_3`.
const CONTRACTION_STARTS: [(f64, f64); 5] = [(0.0, 0.5), (0.0, 1.4), (1.0, 1.0), (4.0, 0.8), (0.25, 1.2)];

/// Along the OU flow towards `N(0, I)`: KL and chi^2 decay like `e^{-2t}`,
/// `R_alpha` like `e^{-2t/alpha}`, checked on `t = 0.1, ..., 3`.
pub fn contraction_row(d: usize) -> Result<SuiteRow> {
    let slack = 1e-10;
    let mut worst = f64::NEG_INFINITY;
    let mut count = 0;
    for &(mu2, s) in &CONTRACTION_STARTS {
        let law0 = GaussianLaw::new(vec![mu2.sqrt(); d], s)?;
        let kl0 = kl_gaussian(s, d, law0.shift2())?;
        let chi0 = chi2_isotropic(s, d, law0.shift2())?;
        let r0: Vec<f64> = [2.0, 3.0]
            .iter()
            .map(|&a| renyi_isotropic(a, s, d, law0.shift2()))
            .collect::<std::result::Result<_, _>>()?;
        for i in 1..=30 {
            let t = i as f64 / 10.0;
            let law = ou_law(&law0, t)?;
            let (st, m2) = (law.sigma2, law.shift2());
            let decay = (-2.0 * t).exp();
            let mut excess = vec![
                kl_gaussian(st, d, m2)? - decay * kl0,
                chi2_isotropic(st, d, m2)? - decay * chi0,
            ];
            for (&a, &ra0) in [2.0, 3.0].iter().zip(&r0) {
                excess.push(renyi_isotropic(a, st, d, m2)? - (-2.0 * t / a).exp() * ra0);
            }
            count += excess.len();
            worst = excess.into_iter().fold(worst, f64::max);
        }
    }
    Ok(row(
        "contraction",
        "ou_gaussian",
        worst <= slack,
        worst,
        slack,
        count,
        format!("d={d}; KL, chi2, R_2, R_3 on t=0.1..3"),
    ))
}

fn gaussian_grid(mean: f64, var: f64) -> Result<DensityGrid<f64>> {
    Ok(DensityGrid::from_fn_1d(-14.0, 14.0, 4097, |x: f64| {
        (-(x - mean).powi(2) / (2.0 * var)).exp()
    })?)
}

/// TV/KL/chi^2/W2 chain by quadrature on Gaussian pairs against `N(0, 1)`
/// (`lambda = 1`), plus `N(0, sigma2)` against the configured 1-d target.
pub fn metric_chain_row(target: Option<(&PotentialSpec64, f64, f64)>) -> Result<SuiteRow> {
    let nu = normalize(&gaussian_grid(0.0, 1.0)?)?;
    let mut failures = Vec::new();
    let mut worst = f64::NEG_INFINITY;
    let mut count = 0;
    let mut record = |label: String, c: langevin_core::divergence::MetricChain<f64>| {
        let gaps = [
            c.tv - (0.5 * c.kl).sqrt(),
            (0.5 * c.kl).sqrt() - (0.5 * c.chi2).sqrt(),
            c.w2 * c.w2 / (2.0 * c.lambda) - c.chi2,
        ];
        worst = gaps.into_iter().fold(worst, f64::max);
        count += 1;
        if !c.all_hold() {
            failures.push(label);
        }
    };
    for &(mean, var) in &[(0.0, 0.9), (0.5, 1.0), (1.0, 0.6), (-2.0, 1.3), (0.0, 0.25)] {
        let rho = normalize(&gaussian_grid(mean, var)?)?;
        record(format!("N({mean},{var})"), check_metric_chain(&rho, &nu, 1.0)?);
    }
    if let Some((p, sigma2, lambda)) = target {
        if p.dim() == 1 {
            let half = 12.0 * lambda.sqrt().max(1.0);
            let f0 = p.value_at(&[0.0]);
            let nu_p = normalize(&DensityGrid::from_fn_1d(-half, half, 8193, |x: f64| (f0 - p.value_at(&[x])).exp())?)?;
            let rho = normalize(&DensityGrid::from_fn_1d(-half, half, 8193, |x: f64| {
                (-x * x / (2.0 * sigma2)).exp()
            })?)?;
            record(format!("init vs {}", p.label()), check_metric_chain(&rho, &nu_p, lambda)?);
        }
    }
    Ok(row(
        "metric_chain",
        "quadrature",
        failures.is_empty(),
        worst,
        1e-9,
        count,
        if failures.is_empty() {
            "all pairs satisfy the chain".into()
        } else {
            format!("violated: {}", failures.join(", "))
        },
    ))
}

/// `C_hat = max_k (chi2_{k+1} - (1 - 3 eta/4) chi2_k) / eta^2` over `k = N..2N`
/// from the exact Gaussian recursion.
pub fn single_step_constant(d: usize, eta: f64, n: u64, sigma0: f64) -> Result<f64> {
    let contraction = 1.0 - 0.75 * eta;
    let chi = |k: u64| -> Result<f64> { Ok(chi2_isotropic(lmc_variance(sigma0, eta, k)?, d, 0.0)?) };
    let mut best = f64::NEG_INFINITY;
    let mut prev = chi(n)?;
    for k in n..2 * n {
        let next = chi(k + 1)?;
        best = best.max((next - contraction * prev) / (eta * eta));
        prev = next;
    }
    Ok(best)
}

/// `C_hat(d) / d` stays within a factor 4 across `d = 1, 2, 4, 8`.
pub fn single_step_trend_row(opts: &SuiteOptions) -> Result<SuiteRow> {
    let dims = [1usize, 2, 4, 8];
    let per_d: Vec<f64> = dims
        .iter()
        .map(|&d| Ok(single_step_constant(d, opts.trend_eta, opts.trend_n, opts.trend_sigma0)? / d as f64))
        .collect::<Result<_>>()?;
    let (lo, hi) = per_d
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let ratio = hi / lo;
    let finite = per_d.iter().all(|v| v.is_finite() && *v > 0.0);
    Ok(row(
        "single_step_trend",
        "lmc_gaussian",
        finite && ratio <= 4.0,
        ratio,
        4.0,
        dims.len(),
        format!(
            "C_hat/d = {}",
            per_d.iter().map(|v| format!("{v:.6e}")).collect::<Vec<_>>().join(", ")
        ),
    ))
}

/// The full suite for one potential with its certificate.
pub fn run_suite(p: &PotentialSpec64, cert: &Certificate<f64>, sigma2: f64, opts: &SuiteOptions) -> Vec<(String, Result<SuiteRow>)> {
    let mut rows: Vec<(String, Result<SuiteRow>)> = vec![
        (
            "semi_contraction".into(),
            semi_contraction_row(p, cert.m.value, cert.b.value, opts),
        ),
        ("jump_bound".into(), jump_row(p, cert, sigma2, opts)),
    ];
    match tail_rows(p.dim(), opts) {
        Ok(t) => rows.extend(t.into_iter().map(|r| (r.check.clone(), Ok(r)))),
        Err(e) => rows.push(("tails".into(), Err(e))),
    }
    rows.push(("rec_bound".into(), rec_bound_row(opts)));
    rows.push(("contraction".into(), contraction_row(p.dim())));
    rows.push((
        "metric_chain".into(),
        metric_chain_row(Some((p, sigma2, cert.lambda.value))),
    ));
    rows.push(("single_step_trend".into(), single_step_trend_row(opts)));
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stationary_start_sits_at_the_floor() {
        let eta = 0.01;
        let fixed = 1.0 / (1.0 - eta / 2.0);
        let c = single_step_constant(1, eta, 100, fixed).unwrap();
        let floor = chi2_isotropic(fixed, 1, 0.0).unwrap();
        // chi2 is constant, so the fitted constant is exactly the contraction gap.
        assert!((c - 0.75 * eta * floor / (eta * eta)).abs() < 1e-9 * c.abs().max(1.0));
    }

    #[test]
    fn single_step_envelope_from_a_cold_start() {
        let c = single_step_constant(1, 0.01, 1_000, 0.9).unwrap();
        assert!(c.is_finite());
        let r = single_step_trend_row(&SuiteOptions::default()).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn oracle_rows_pass() {
        assert!(contraction_row(1).unwrap().passed);
        assert!(contraction_row(3).unwrap().passed);
        assert!(metric_chain_row(None).unwrap().passed);
        assert!(rec_bound_row(&SuiteOptions::default()).unwrap().passed);
    }
}
